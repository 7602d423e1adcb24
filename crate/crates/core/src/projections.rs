//! Scenario projections from the 2010 base year.
//!
//! Deltas are multipliers relative to 2010, keyed by scenario, modelling
//! unit, food group and year. A unit's multiplier applies to each member
//! country's own 2010 supply, and members are then aggregated to regions
//! with their 2010 populations. Because the weights are fixed this equals
//! projecting the unit's population-weighted mean, and it lets a unit whose
//! members sit in different regions contribute to each of them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{regional_supply, AggregationError, Area, PopulationSeries, RegionScheme};
use crate::country::CountryId;
use crate::format::fixed3;
use crate::index::{ratios, FoodGroupSupply, GroupKcal, GroupRatios, HdbTargets};
use crate::ingest::SupplyObservation;
use crate::mapping::{CommodityMap, FoodGroup};

pub const BASE_YEAR: i32 = 2010;
pub const HORIZON: i32 = 2050;
pub const DECADE_GRID: [i32; 5] = [2010, 2020, 2030, 2040, 2050];
pub const DEFAULT_IMPACT_UNITS: &str = include_str!("../data/impact_units.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    Reference,
    CompInvest,
    RD,
    Infrastructure,
    Irrigation,
    Soils,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Reference,
        Scenario::CompInvest,
        Scenario::RD,
        Scenario::Infrastructure,
        Scenario::Irrigation,
        Scenario::Soils,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::Reference => "Reference",
            Scenario::CompInvest => "CompInvest",
            Scenario::RD => "RD",
            Scenario::Infrastructure => "Infrastructure",
            Scenario::Irrigation => "Irrigation",
            Scenario::Soils => "Soils",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = ProjectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let sc = match key.as_str() {
            "reference" | "referencescenario" | "ref" => Scenario::Reference,
            "compinvest" | "compinvestments" | "comprehensiveinvestments" => Scenario::CompInvest,
            "rd" => Scenario::RD,
            "infrastructure" | "infrastructuremarketing" => Scenario::Infrastructure,
            "irrigation" => Scenario::Irrigation,
            "soils" | "soilswaterholding" => Scenario::Soils,
            _ => return Err(ProjectionError::UnknownScenario(s.to_string())),
        };
        Ok(sc)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("unknown or non-projectable food group {0:?}")]
    UnknownGroup(String),
    #[error("country {country} belongs to both {first:?} and {second:?}")]
    DuplicateMember {
        country: CountryId,
        first: String,
        second: String,
    },
    #[error("unit {0:?} has inconsistent excluded flags")]
    InconsistentFlag(String),
    #[error("multiplier for {scenario}/{unit}/{group}/{year} must be positive, got {value}")]
    NonPositiveMultiplier {
        scenario: Scenario,
        unit: String,
        group: String,
        year: i32,
        value: f64,
    },
    #[error("multiplier for {scenario}/{unit}/{group} in the base year must be 1, got {value}")]
    BaseYearNotOne {
        scenario: Scenario,
        unit: String,
        group: String,
        value: f64,
    },
    #[error("duplicate delta for {scenario}/{unit}/{group}/{year}")]
    DuplicateDelta {
        scenario: Scenario,
        unit: String,
        group: String,
        year: i32,
    },
    #[error("no delta for {scenario}/{unit}/{group}/{year}")]
    MissingDelta {
        scenario: Scenario,
        unit: String,
        group: FoodGroup,
        year: i32,
    },
    #[error("projection year {0} outside {BASE_YEAR}..={HORIZON}")]
    YearOutOfRange(i32),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error("{0}")]
    Malformed(String),
}

fn malformed(e: impl fmt::Display) -> ProjectionError {
    ProjectionError::Malformed(e.to_string())
}

/// A modelling unit: one country or a named group of countries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpactUnit {
    pub unit_id: String,
    pub members: Vec<CountryId>,
    pub excluded_from_figures: bool,
}

impl ImpactUnit {
    /// True when every member has base-year supply in `available`.
    pub fn disaggregable(&self, available: &BTreeSet<CountryId>) -> bool {
        self.members.iter().all(|c| available.contains(c))
    }
}

#[derive(Debug, Deserialize)]
struct UnitRow {
    unit_id: String,
    member_country_id: u32,
    #[serde(default)]
    excluded_flag: u8,
}

/// Reads `unit_id,member_country_id,excluded_flag`. Units come back sorted
/// by id with members sorted by country code.
pub fn load_units<R: Read>(reader: R) -> Result<Vec<ImpactUnit>, ProjectionError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut units: BTreeMap<String, ImpactUnit> = BTreeMap::new();
    let mut owner: BTreeMap<CountryId, String> = BTreeMap::new();
    for row in rdr.deserialize::<UnitRow>() {
        let row = row.map_err(malformed)?;
        let country = CountryId(row.member_country_id);
        let excluded = row.excluded_flag != 0;
        if let Some(first) = owner.get(&country) {
            return Err(ProjectionError::DuplicateMember {
                country,
                first: first.clone(),
                second: row.unit_id,
            });
        }
        owner.insert(country, row.unit_id.clone());
        let unit = units
            .entry(row.unit_id.clone())
            .or_insert_with(|| ImpactUnit {
                unit_id: row.unit_id.clone(),
                members: Vec::new(),
                excluded_from_figures: excluded,
            });
        if unit.excluded_from_figures != excluded {
            return Err(ProjectionError::InconsistentFlag(row.unit_id));
        }
        unit.members.push(country);
    }
    Ok(units
        .into_values()
        .map(|mut u| {
            u.members.sort();
            u
        })
        .collect())
}

pub fn default_units() -> Vec<ImpactUnit> {
    load_units(DEFAULT_IMPACT_UNITS.as_bytes()).expect("shipped unit file is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "reason")]
pub enum DropReason {
    ExcludedFromFigures,
    MissingMember { country: CountryId },
    MissingPopulation { country: CountryId },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct UnitDrop {
    pub unit_id: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemberBase {
    pub country_id: CountryId,
    pub kcal: GroupKcal,
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitBase {
    pub unit_id: String,
    pub members: Vec<MemberBase>,
    /// Population-weighted per-capita supply over the members.
    pub kcal: GroupKcal,
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImpactBase {
    pub base_year: i32,
    pub units: Vec<UnitBase>,
    pub dropped: Vec<UnitDrop>,
}

impl ImpactBase {
    pub fn unit(&self, unit_id: &str) -> Option<&UnitBase> {
        self.units.iter().find(|u| u.unit_id == unit_id)
    }

    /// Frozen base-year populations of every kept member.
    pub fn populations(&self) -> PopulationSeries {
        let mut p = PopulationSeries::default();
        for m in self.units.iter().flat_map(|u| &u.members) {
            p.insert(m.country_id, self.base_year, m.population);
        }
        p
    }

    /// Base-year supplies of every kept member, sorted by country.
    pub fn member_supplies(&self) -> Vec<FoodGroupSupply> {
        let mut out: Vec<FoodGroupSupply> = self
            .units
            .iter()
            .flat_map(|u| &u.members)
            .map(|m| FoodGroupSupply {
                country_id: m.country_id,
                year: self.base_year,
                kcal: m.kcal,
            })
            .collect();
        out.sort_by_key(|s| s.country_id);
        out
    }
}

/// Base-year per-capita supply for each unit.
///
/// A unit is dropped, with a report entry, when it is flagged as excluded
/// from figures or when any member lacks base-year supply or population.
/// Dropped units are never filled with zeros.
pub fn build_impact_base(
    supplies: &[FoodGroupSupply],
    pop: &PopulationSeries,
    units: &[ImpactUnit],
    base_year: i32,
) -> ImpactBase {
    let by_country: BTreeMap<CountryId, &GroupKcal> = supplies
        .iter()
        .filter(|s| s.year == base_year)
        .map(|s| (s.country_id, &s.kcal))
        .collect();
    let mut base = ImpactBase {
        base_year,
        ..Default::default()
    };
    'units: for unit in units {
        if unit.excluded_from_figures {
            base.dropped.push(UnitDrop {
                unit_id: unit.unit_id.clone(),
                reason: DropReason::ExcludedFromFigures,
            });
            continue;
        }
        let mut members = Vec::with_capacity(unit.members.len());
        for &c in &unit.members {
            let Some(kcal) = by_country.get(&c) else {
                base.dropped.push(UnitDrop {
                    unit_id: unit.unit_id.clone(),
                    reason: DropReason::MissingMember { country: c },
                });
                continue 'units;
            };
            let Ok(p) = pop.weight(c, base_year) else {
                base.dropped.push(UnitDrop {
                    unit_id: unit.unit_id.clone(),
                    reason: DropReason::MissingPopulation { country: c },
                });
                continue 'units;
            };
            members.push(MemberBase {
                country_id: c,
                kcal: **kcal,
                population: p,
            });
        }
        if members.is_empty() {
            continue;
        }
        let population: f64 = members.iter().map(|m| m.population).sum();
        let mut acc = [0.0; 7];
        for m in &members {
            for (a, v) in acc.iter_mut().zip(m.kcal.0) {
                *a += m.population * v;
            }
        }
        base.units.push(UnitBase {
            unit_id: unit.unit_id.clone(),
            members,
            kcal: GroupKcal(acc.map(|v| v / population)),
            population,
        });
    }
    base
}

/// Group-level multipliers relative to the base year.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeltaTable {
    values: BTreeMap<(Scenario, String, FoodGroup, i32), f64>,
}

#[derive(Debug, Deserialize)]
struct DeltaRow {
    scenario: String,
    unit: String,
    group: String,
    year: i32,
    multiplier: f64,
}

fn check_multiplier(
    scenario: Scenario,
    unit: &str,
    group: &str,
    year: i32,
    value: f64,
) -> Result<(), ProjectionError> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(ProjectionError::NonPositiveMultiplier {
            scenario,
            unit: unit.to_string(),
            group: group.to_string(),
            year,
            value,
        });
    }
    if year == BASE_YEAR && value != 1.0 {
        return Err(ProjectionError::BaseYearNotOne {
            scenario,
            unit: unit.to_string(),
            group: group.to_string(),
            value,
        });
    }
    Ok(())
}

impl DeltaTable {
    /// Reads `scenario,unit,group,year,multiplier`.
    pub fn load<R: Read>(reader: R) -> Result<Self, ProjectionError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut table = DeltaTable::default();
        for row in rdr.deserialize::<DeltaRow>() {
            let row = row.map_err(malformed)?;
            let scenario: Scenario = row.scenario.parse()?;
            let group: FoodGroup = row
                .group
                .parse()
                .map_err(|_| ProjectionError::UnknownGroup(row.group.clone()))?;
            table.insert(scenario, &row.unit, group, row.year, row.multiplier)?;
        }
        Ok(table)
    }

    pub fn insert(
        &mut self,
        scenario: Scenario,
        unit: &str,
        group: FoodGroup,
        year: i32,
        multiplier: f64,
    ) -> Result<(), ProjectionError> {
        if group.slot().is_none() {
            return Err(ProjectionError::UnknownGroup(group.label().to_string()));
        }
        check_multiplier(scenario, unit, group.column(), year, multiplier)?;
        let key = (scenario, unit.to_string(), group, year);
        if self.values.insert(key, multiplier).is_some() {
            return Err(ProjectionError::DuplicateDelta {
                scenario,
                unit: unit.to_string(),
                group: group.column().to_string(),
                year,
            });
        }
        Ok(())
    }

    /// The multiplier, with the base year implicitly 1.
    pub fn multiplier(
        &self,
        scenario: Scenario,
        unit: &str,
        group: FoodGroup,
        year: i32,
    ) -> Option<f64> {
        if year == BASE_YEAR {
            return Some(1.0);
        }
        self.values
            .get(&(scenario, unit.to_string(), group, year))
            .copied()
    }

    pub fn retain_scenarios(&mut self, keep: &[Scenario]) {
        self.values.retain(|k, _| keep.contains(&k.0));
    }

    pub fn scenarios(&self) -> BTreeSet<Scenario> {
        self.values.keys().map(|k| k.0).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows in `scenario,unit,group,year,multiplier` order.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), ProjectionError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["scenario", "unit", "group", "year", "multiplier"])
            .map_err(malformed)?;
        for ((s, u, g, y), m) in &self.values {
            w.write_record([s.id(), u, g.column(), &y.to_string(), &format!("{m}")])
                .map_err(malformed)?;
        }
        w.flush().map_err(malformed)
    }
}

/// Projected supply: `base * multiplier(scenario, unit, group, year)`.
///
/// Every group with non-zero base kcal needs a multiplier; groups at zero
/// stay at zero.
pub fn apply_deltas(
    base: &GroupKcal,
    deltas: &DeltaTable,
    scenario: Scenario,
    unit: &str,
    year: i32,
) -> Result<GroupKcal, ProjectionError> {
    let mut out = *base;
    for g in FoodGroup::REPORTING {
        let v = base[g];
        if v == 0.0 {
            continue;
        }
        let m = deltas.multiplier(scenario, unit, g, year).ok_or_else(|| {
            ProjectionError::MissingDelta {
                scenario,
                unit: unit.to_string(),
                group: g,
                year,
            }
        })?;
        out[g] = v * m;
    }
    Ok(out)
}

/// Per-commodity multiplier, as delivered by the upstream model.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CommodityDelta {
    pub scenario: String,
    pub unit: String,
    pub item_code: u32,
    pub year: i32,
    pub multiplier: f64,
}

pub fn load_commodity_deltas<R: Read>(reader: R) -> Result<Vec<CommodityDelta>, ProjectionError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(malformed)).collect()
}

/// Base-year kcal per unit and item, population-weighted over members.
pub fn unit_item_composition(
    observations: &[SupplyObservation],
    pop: &PopulationSeries,
    units: &[ImpactUnit],
    base_year: i32,
) -> BTreeMap<(String, u32), f64> {
    let owner: BTreeMap<CountryId, &str> = units
        .iter()
        .flat_map(|u| u.members.iter().map(move |c| (*c, u.unit_id.as_str())))
        .collect();
    let mut unit_pop: BTreeMap<&str, f64> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut sums: BTreeMap<(String, u32), f64> = BTreeMap::new();
    for o in observations.iter().filter(|o| o.year == base_year) {
        let (Some(unit), Ok(p)) = (
            owner.get(&o.country_id),
            pop.weight(o.country_id, base_year),
        ) else {
            continue;
        };
        if seen.insert(o.country_id) {
            *unit_pop.entry(unit).or_default() += p;
        }
        *sums.entry((unit.to_string(), o.item_code)).or_default() += p * o.kcal_per_capita_day;
    }
    for ((unit, _), v) in sums.iter_mut() {
        *v /= unit_pop[unit.as_str()];
    }
    sums
}

/// Collapses per-commodity multipliers to group multipliers, weighting each
/// commodity by its base-year kcal within the unit:
/// `m_g = sum(k_i * m_i) / sum(k_i)` over the group's commodities.
///
/// Commodities with zero base kcal carry no weight. A commodity with positive
/// base kcal but no multiplier for a scenario-year that has any multiplier
/// for that unit is reported as a missing delta.
pub fn commodity_to_group_deltas(
    commodity: &[CommodityDelta],
    composition: &BTreeMap<(String, u32), f64>,
    map: &CommodityMap,
) -> Result<DeltaTable, ProjectionError> {
    let mut by_key: BTreeMap<(Scenario, String, i32), BTreeMap<u32, f64>> = BTreeMap::new();
    for d in commodity {
        let s: Scenario = d.scenario.parse()?;
        check_multiplier(s, &d.unit, &d.item_code.to_string(), d.year, d.multiplier)?;
        by_key
            .entry((s, d.unit.clone(), d.year))
            .or_default()
            .insert(d.item_code, d.multiplier);
    }
    let mut table = DeltaTable::default();
    for ((scenario, unit, year), mults) in by_key {
        let mut num = [0.0; 7];
        let mut den = [0.0; 7];
        let items = composition
            .range((unit.clone(), 0)..=(unit.clone(), u32::MAX))
            .filter(|(_, k)| **k > 0.0);
        for ((_, item), k) in items {
            let Some(slot) = map.classify(*item).ok().and_then(|g| g.slot()) else {
                continue;
            };
            let group = FoodGroup::REPORTING[slot];
            let m = *mults
                .get(item)
                .ok_or_else(|| ProjectionError::MissingDelta {
                    scenario,
                    unit: unit.clone(),
                    group,
                    year,
                })?;
            num[slot] += k * m;
            den[slot] += k;
        }
        for (slot, g) in FoodGroup::REPORTING.into_iter().enumerate() {
            if den[slot] > 0.0 && year != BASE_YEAR {
                table.insert(scenario, &unit, g, year, num[slot] / den[slot])?;
            }
        }
    }
    Ok(table)
}

/// Projected ratios and index for one scenario, area and year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub scenario: Scenario,
    pub area: Area,
    pub year: i32,
    pub kcal: GroupKcal,
    pub ratios: GroupRatios,
    pub hdbi: f64,
}

/// Projects every kept unit to each year and aggregates members to regions
/// and `World` with base-year populations held fixed.
///
/// Sorted by area, then year. At the base year the output is exactly the
/// aggregation of the base supplies.
pub fn trajectory(
    scenario: Scenario,
    base: &ImpactBase,
    deltas: &DeltaTable,
    scheme: &RegionScheme,
    targets: &HdbTargets,
    years: &[i32],
) -> Result<Vec<Trajectory>, ProjectionError> {
    let pop = base.populations();
    let mut out = Vec::new();
    for &year in years {
        if !(BASE_YEAR..=HORIZON).contains(&year) {
            return Err(ProjectionError::YearOutOfRange(year));
        }
        let mut projected = Vec::new();
        for unit in &base.units {
            for m in &unit.members {
                projected.push(FoodGroupSupply {
                    country_id: m.country_id,
                    year: base.base_year,
                    kcal: apply_deltas(&m.kcal, deltas, scenario, &unit.unit_id, year)?,
                });
            }
        }
        projected.sort_by_key(|s| s.country_id);
        for a in regional_supply(&projected, &pop, scheme)? {
            let r = ratios(&a.kcal, targets);
            out.push(Trajectory {
                scenario,
                area: a.area,
                year,
                kcal: a.kcal,
                ratios: r,
                hdbi: r.hdbi(),
            });
        }
    }
    out.sort_by_key(|t| (t.area, t.year));
    Ok(out)
}

/// All scenarios present in `deltas`, in scenario order. Scenarios are
/// independent, so each runs on its own thread.
pub fn all_trajectories(
    base: &ImpactBase,
    deltas: &DeltaTable,
    scheme: &RegionScheme,
    targets: &HdbTargets,
    years: &[i32],
) -> Result<Vec<Trajectory>, ProjectionError> {
    let scenarios: Vec<Scenario> = deltas.scenarios().into_iter().collect();
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|sc| s.spawn(move || trajectory(*sc, base, deltas, scheme, targets, years)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("projection thread panicked"))
            .collect()
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_ratio_csv<W: std::io::Write>(rows: &[Trajectory], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["scenario", "region", "year", "group", "ratio"])?;
    for t in rows {
        for g in FoodGroup::REPORTING {
            w.write_record([
                t.scenario.id(),
                t.area.label(),
                &t.year.to_string(),
                g.column(),
                &fixed3(t.ratios.get(g)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_hdbi_csv<W: std::io::Write>(rows: &[Trajectory], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["scenario", "region", "year", "hdbi"])?;
    for t in rows {
        w.write_record([
            t.scenario.id(),
            t.area.label(),
            &t.year.to_string(),
            &fixed3(t.hdbi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::Region;
    use crate::ingest::Methodology;
    use approx::assert_abs_diff_eq;

    fn kcal(pairs: &[(FoodGroup, f64)]) -> GroupKcal {
        GroupKcal::from_groups(pairs.iter().copied())
    }

    fn unit(id: &str, members: &[u32], excluded: bool) -> ImpactUnit {
        ImpactUnit {
            unit_id: id.into(),
            members: members.iter().map(|c| CountryId(*c)).collect(),
            excluded_from_figures: excluded,
        }
    }

    #[test]
    fn default_unit_file() {
        let units = default_units();
        assert_eq!(units.len(), 158);
        let baltic = units.iter().find(|u| u.unit_id == "Baltic States").unwrap();
        assert_eq!(
            baltic.members,
            vec![CountryId(63), CountryId(119), CountryId(126)]
        );
        assert!(
            units
                .iter()
                .find(|u| u.unit_id == "Other Caribbean")
                .unwrap()
                .excluded_from_figures
        );
    }

    #[test]
    fn duplicate_member_rejected() {
        let csv = "unit_id,member_country_id,excluded_flag\nA,1,0\nB,1,0\n";
        assert!(matches!(
            load_units(csv.as_bytes()),
            Err(ProjectionError::DuplicateMember { .. })
        ));
    }

    #[test]
    fn scenario_labels() {
        assert_eq!(
            "Comp. Investments".parse::<Scenario>().unwrap(),
            Scenario::CompInvest
        );
        assert_eq!(
            "Reference Scenario".parse::<Scenario>().unwrap(),
            Scenario::Reference
        );
        assert_eq!("R&D".parse::<Scenario>().unwrap(), Scenario::RD);
        assert!("SSP5".parse::<Scenario>().is_err());
    }

    #[test]
    fn single_country_unit_is_identity() {
        let mut pop = PopulationSeries::default();
        pop.insert(CountryId(1), 2010, 3.0e6);
        let k = kcal(&[(FoodGroup::Fruits, 77.0), (FoodGroup::Sugars, 12.0)]);
        let s = [FoodGroupSupply {
            country_id: CountryId(1),
            year: 2010,
            kcal: k,
        }];
        let base = build_impact_base(&s, &pop, &[unit("Solo", &[1], false)], 2010);
        assert_eq!(base.units[0].kcal, k);
        assert!(base.dropped.is_empty());
    }

    #[test]
    fn baltic_weighted_mean() {
        // Estonia 1.3M at 300 ASF, Latvia 2.1M at 270, Lithuania 3.1M at 330:
        // (1.3*300 + 2.1*270 + 3.1*330) / 6.5 = (390 + 567 + 1023) / 6.5
        let mut pop = PopulationSeries::default();
        let mut s = Vec::new();
        for (c, p, v) in [(63, 1.3e6, 300.0), (119, 2.1e6, 270.0), (126, 3.1e6, 330.0)] {
            pop.insert(CountryId(c), 2010, p);
            s.push(FoodGroupSupply {
                country_id: CountryId(c),
                year: 2010,
                kcal: kcal(&[(FoodGroup::AnimalSourceFoods, v)]),
            });
        }
        let base = build_impact_base(
            &s,
            &pop,
            &[unit("Baltic States", &[63, 119, 126], false)],
            2010,
        );
        assert_abs_diff_eq!(
            base.units[0].kcal[FoodGroup::AnimalSourceFoods],
            1980.0 / 6.5,
            epsilon = 1e-9
        );
        assert_eq!(base.units[0].population, 6.5e6);
    }

    #[test]
    fn incomplete_and_flagged_units_dropped() {
        let mut pop = PopulationSeries::default();
        pop.insert(CountryId(8), 2010, 1.0e5);
        let s = [FoodGroupSupply {
            country_id: CountryId(8),
            year: 2010,
            kcal: GroupKcal::default(),
        }];
        let units = [
            unit("Other Caribbean", &[8, 177], true),
            unit("Partial", &[8, 999], false),
        ];
        let base = build_impact_base(&s, &pop, &units, 2010);
        assert!(base.units.is_empty());
        assert_eq!(base.dropped[0].reason, DropReason::ExcludedFromFigures);
        assert_eq!(
            base.dropped[1].reason,
            DropReason::MissingMember {
                country: CountryId(999)
            }
        );
    }

    #[test]
    fn delta_validation() {
        let bad = "scenario,unit,group,year,multiplier\nReference,A,fruits,2050,0\n";
        assert!(matches!(
            DeltaTable::load(bad.as_bytes()),
            Err(ProjectionError::NonPositiveMultiplier { .. })
        ));
        let bad = "scenario,unit,group,year,multiplier\nReference,A,fruits,2050,-1.5\n";
        assert!(matches!(
            DeltaTable::load(bad.as_bytes()),
            Err(ProjectionError::NonPositiveMultiplier { .. })
        ));
        let bad = "scenario,unit,group,year,multiplier\nReference,A,fruits,2010,1.1\n";
        assert!(matches!(
            DeltaTable::load(bad.as_bytes()),
            Err(ProjectionError::BaseYearNotOne { .. })
        ));
        let bad = "scenario,unit,group,year,multiplier\nReference,A,excluded,2050,1.1\n";
        assert!(matches!(
            DeltaTable::load(bad.as_bytes()),
            Err(ProjectionError::UnknownGroup(_))
        ));
    }

    #[test]
    fn unit_multipliers_are_identity() {
        let base = kcal(&[(FoodGroup::Fruits, 10.0), (FoodGroup::Vegetables, 20.0)]);
        let out = apply_deltas(
            &base,
            &DeltaTable::default(),
            Scenario::Reference,
            "A",
            2010,
        )
        .unwrap();
        assert_eq!(out, base);
    }

    #[test]
    fn lns_projection_example() {
        // 0.42 * 300 = 126 kcal; 126 * 1.2524 / 300 = 0.526
        let mut d = DeltaTable::default();
        d.insert(
            Scenario::Reference,
            "South Asia",
            FoodGroup::LegumesNutsSeeds,
            2050,
            1.2524,
        )
        .unwrap();
        let base = kcal(&[(FoodGroup::LegumesNutsSeeds, 126.0)]);
        let out = apply_deltas(&base, &d, Scenario::Reference, "South Asia", 2050).unwrap();
        let r = out[FoodGroup::LegumesNutsSeeds] / HdbTargets::default().legumes_nuts_seeds;
        assert_eq!(fixed3(r), "0.526");
    }

    #[test]
    fn missing_delta_reported() {
        let base = kcal(&[(FoodGroup::Fruits, 10.0)]);
        let err =
            apply_deltas(&base, &DeltaTable::default(), Scenario::Soils, "A", 2030).unwrap_err();
        assert_eq!(
            err,
            ProjectionError::MissingDelta {
                scenario: Scenario::Soils,
                unit: "A".into(),
                group: FoodGroup::Fruits,
                year: 2030
            }
        );
    }

    #[test]
    fn commodity_conversion_weights_by_base_kcal() {
        // Wheat 2511 (300 kcal, x1.1) and rice 2807 (100 kcal, x1.5):
        // (330 + 150) / 400 = 1.2
        let map = CommodityMap::default_map();
        let comp: BTreeMap<(String, u32), f64> = [
            (("U".to_string(), 2511), 300.0),
            (("U".to_string(), 2807), 100.0),
        ]
        .into();
        let deltas = [
            CommodityDelta {
                scenario: "Reference".into(),
                unit: "U".into(),
                item_code: 2511,
                year: 2030,
                multiplier: 1.1,
            },
            CommodityDelta {
                scenario: "Reference".into(),
                unit: "U".into(),
                item_code: 2807,
                year: 2030,
                multiplier: 1.5,
            },
        ];
        let t = commodity_to_group_deltas(&deltas, &comp, &map).unwrap();
        let m = t
            .multiplier(Scenario::Reference, "U", FoodGroup::StarchyStaples, 2030)
            .unwrap();
        assert_abs_diff_eq!(m, 1.2, epsilon = 1e-12);
    }

    #[test]
    fn composition_is_population_weighted() {
        let mut pop = PopulationSeries::default();
        pop.insert(CountryId(1), 2010, 1.0);
        pop.insert(CountryId(2), 2010, 3.0);
        let obs: Vec<SupplyObservation> = [(1, 100.0), (2, 200.0)]
            .into_iter()
            .map(|(c, k)| SupplyObservation {
                country_id: CountryId(c),
                item_code: 2511,
                year: 2010,
                kcal_per_capita_day: k,
                source: Methodology::New,
            })
            .collect();
        let comp = unit_item_composition(&obs, &pop, &[unit("U", &[1, 2], false)], 2010);
        assert_abs_diff_eq!(comp[&("U".to_string(), 2511)], 175.0, epsilon = 1e-12);
    }

    #[test]
    fn trajectory_base_year_fixpoint_and_sugar_neutrality() {
        let scheme = RegionScheme::from_pairs([
            (CountryId(1), Region::SouthAsia),
            (CountryId(2), Region::SubSaharanAfrica),
        ]);
        let mut pop = PopulationSeries::default();
        pop.insert(CountryId(1), 2010, 5.0e6);
        pop.insert(CountryId(2), 2010, 2.0e6);
        let s = [
            FoodGroupSupply {
                country_id: CountryId(1),
                year: 2010,
                kcal: kcal(&[(FoodGroup::Fruits, 100.0), (FoodGroup::Sugars, 50.0)]),
            },
            FoodGroupSupply {
                country_id: CountryId(2),
                year: 2010,
                kcal: kcal(&[(FoodGroup::Fruits, 40.0), (FoodGroup::Sugars, 80.0)]),
            },
        ];
        let base = build_impact_base(&s, &pop, &[unit("Spanning", &[1, 2], false)], 2010);
        let mut d = DeltaTable::default();
        d.insert(
            Scenario::Reference,
            "Spanning",
            FoodGroup::Fruits,
            2050,
            1.5,
        )
        .unwrap();
        d.insert(
            Scenario::Reference,
            "Spanning",
            FoodGroup::Sugars,
            2050,
            1.0,
        )
        .unwrap();
        let t = HdbTargets::default();
        let traj = trajectory(Scenario::Reference, &base, &d, &scheme, &t, &[2010, 2050]).unwrap();
        let observed = regional_supply(&s, &pop, &scheme).unwrap();
        for o in &observed {
            let row = traj
                .iter()
                .find(|r| r.area == o.area && r.year == 2010)
                .unwrap();
            assert_eq!(row.kcal, o.kcal);
        }
        let sa = traj
            .iter()
            .find(|r| r.area == Area::Region(Region::SouthAsia) && r.year == 2050)
            .unwrap();
        assert_abs_diff_eq!(sa.kcal[FoodGroup::Fruits], 150.0, epsilon = 1e-12);

        let mut d2 = d.clone();
        d2.values.insert(
            (
                Scenario::Reference,
                "Spanning".into(),
                FoodGroup::Sugars,
                2050,
            ),
            3.0,
        );
        let traj2 = trajectory(Scenario::Reference, &base, &d2, &scheme, &t, &[2050]).unwrap();
        let a = traj
            .iter()
            .find(|r| r.area == Area::World && r.year == 2050)
            .unwrap();
        let b = traj2.iter().find(|r| r.area == Area::World).unwrap();
        assert_eq!(a.hdbi, b.hdbi);
        assert!(b.ratios.get(FoodGroup::Sugars) > a.ratios.get(FoodGroup::Sugars));
    }

    #[test]
    fn year_window_enforced() {
        let err = trajectory(
            Scenario::Reference,
            &ImpactBase::default(),
            &DeltaTable::default(),
            &RegionScheme::default(),
            &HdbTargets::default(),
            &[2060],
        )
        .unwrap_err();
        assert_eq!(err, ProjectionError::YearOutOfRange(2060));
    }
}
