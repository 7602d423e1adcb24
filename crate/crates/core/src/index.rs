//! Healthy Diet Basket targets, adequacy ratios and the index itself.
//!
//! The index is one minus the mean proportional shortfall below target over
//! the six basket groups. A group at or above its target has zero shortfall,
//! so excesses never offset deficits elsewhere. Ratios are reported uncapped;
//! clamping happens only inside [`hdbi`].

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::country::CountryId;
use crate::mapping::FoodGroup;

/// Per-group kcal/capita/day for the seven reporting groups, indexed by
/// [`FoodGroup::slot`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupKcal(pub [f64; 7]);

impl GroupKcal {
    pub fn get(&self, group: FoodGroup) -> f64 {
        group.slot().map_or(0.0, |s| self.0[s])
    }

    pub fn set(&mut self, group: FoodGroup, kcal: f64) {
        if let Some(s) = group.slot() {
            self.0[s] = kcal;
        }
    }

    /// Total dietary energy: the six basket groups plus sugars.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn from_groups<I: IntoIterator<Item = (FoodGroup, f64)>>(values: I) -> Self {
        let mut out = GroupKcal::default();
        for (g, v) in values {
            out.set(g, v);
        }
        out
    }
}

impl Index<FoodGroup> for GroupKcal {
    type Output = f64;

    fn index(&self, group: FoodGroup) -> &f64 {
        &self.0[group.slot().expect("Excluded has no kcal slot")]
    }
}

impl IndexMut<FoodGroup> for GroupKcal {
    fn index_mut(&mut self, group: FoodGroup) -> &mut f64 {
        &mut self.0[group.slot().expect("Excluded has no kcal slot")]
    }
}

/// Daily targets for the six basket groups plus the sugar reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdbTargets {
    pub starchy_staples: f64,
    pub fruits: f64,
    pub vegetables: f64,
    pub animal_source_foods: f64,
    pub legumes_nuts_seeds: f64,
    pub oils_fats: f64,
    /// WHO free-sugar limit, 10% of the basket's energy.
    pub sugar_reference: f64,
}

impl Default for HdbTargets {
    fn default() -> Self {
        HdbTargets {
            starchy_staples: 1160.0,
            fruits: 160.0,
            vegetables: 110.0,
            animal_source_foods: 300.0,
            legumes_nuts_seeds: 300.0,
            oils_fats: 300.0,
            sugar_reference: 233.0,
        }
    }
}

impl HdbTargets {
    /// Target for `group`; the sugar reference for `Sugars`.
    ///
    /// Panics on `Excluded`, which has no target.
    pub fn target(&self, group: FoodGroup) -> f64 {
        match group {
            FoodGroup::StarchyStaples => self.starchy_staples,
            FoodGroup::Fruits => self.fruits,
            FoodGroup::Vegetables => self.vegetables,
            FoodGroup::AnimalSourceFoods => self.animal_source_foods,
            FoodGroup::LegumesNutsSeeds => self.legumes_nuts_seeds,
            FoodGroup::OilsFats => self.oils_fats,
            FoodGroup::Sugars => self.sugar_reference,
            FoodGroup::Excluded => panic!("Excluded items have no target"),
        }
    }

    /// Sum of the six basket targets.
    pub fn basket_total(&self) -> f64 {
        FoodGroup::HDB.iter().map(|g| self.target(*g)).sum()
    }
}

/// Adequacy ratios for the seven reporting groups, same layout as [`GroupKcal`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupRatios(pub [f64; 7]);

impl GroupRatios {
    pub fn get(&self, group: FoodGroup) -> f64 {
        group.slot().map_or(0.0, |s| self.0[s])
    }

    /// The six basket ratios in [`FoodGroup::HDB`] order.
    pub fn hdb(&self) -> [f64; 6] {
        FoodGroup::HDB.map(|g| self.get(g))
    }

    pub fn from_groups<I: IntoIterator<Item = (FoodGroup, f64)>>(values: I) -> Self {
        let mut out = [0.0; 7];
        for (g, v) in values {
            if let Some(s) = g.slot() {
                out[s] = v;
            }
        }
        GroupRatios(out)
    }

    pub fn hdbi(&self) -> f64 {
        hdbi(self.hdb())
    }
}

/// Food-group kcal for one country-year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoodGroupSupply {
    pub country_id: CountryId,
    pub year: i32,
    pub kcal: GroupKcal,
}

impl FoodGroupSupply {
    pub fn total_kcal(&self) -> f64 {
        total_energy(&self.kcal)
    }
}

/// Ratios and index for one population-year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdbiScore {
    pub country_id: CountryId,
    pub year: i32,
    pub ratios: GroupRatios,
    pub hdbi: f64,
}

/// Available kcal over target kcal; for `Sugars`, over the sugar reference.
pub fn adequacy_ratio(kcal: &GroupKcal, group: FoodGroup, targets: &HdbTargets) -> f64 {
    kcal.get(group) / targets.target(group)
}

pub fn ratios(kcal: &GroupKcal, targets: &HdbTargets) -> GroupRatios {
    GroupRatios(FoodGroup::REPORTING.map(|g| adequacy_ratio(kcal, g, targets)))
}

/// The Healthy Diet Basket Index from the six basket ratios.
///
/// `1 - mean(max(0, 1 - r))`. Each ratio's shortfall is clamped at zero, so
/// the result lies in `[0, 1]` for non-negative input and equals 1 exactly
/// when every ratio is at least 1. Order of the ratios does not matter.
pub fn hdbi(ratios: [f64; 6]) -> f64 {
    let shortfall: f64 = ratios.iter().map(|r| (1.0 - r).max(0.0)).sum();
    1.0 - shortfall / 6.0
}

/// Sum of the six basket groups and sugars; excluded items are never held
/// in a [`GroupKcal`] so they cannot leak in.
pub fn total_energy(kcal: &GroupKcal) -> f64 {
    kcal.total()
}

pub fn score(supply: &FoodGroupSupply, targets: &HdbTargets) -> HdbiScore {
    let r = ratios(&supply.kcal, targets);
    HdbiScore {
        country_id: supply.country_id,
        year: supply.year,
        ratios: r,
        hdbi: r.hdbi(),
    }
}

pub fn score_all(supplies: &[FoodGroupSupply], targets: &HdbTargets) -> Vec<HdbiScore> {
    supplies.iter().map(|s| score(s, targets)).collect()
}
