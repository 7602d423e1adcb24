//! Commodity to food-group classification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::country::CountryId;
use crate::index::{FoodGroupSupply, GroupKcal};
use crate::ingest::SupplyObservation;

/// The commodity map shipped with the crate.
pub const DEFAULT_COMMODITY_MAP: &str = include_str!("../data/commodity_map.csv");

/// Food groups an FAO item can be classified into.
///
/// Only the first six (everything except `Sugars` and `Excluded`) enter the
/// index. `Sugars` is reported against the WHO reference and `Excluded`
/// (alcohol, stimulants, spices, infant food, ...) is dropped entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FoodGroup {
    AnimalSourceFoods,
    Fruits,
    LegumesNutsSeeds,
    OilsFats,
    StarchyStaples,
    Sugars,
    Vegetables,
    Excluded,
}

impl FoodGroup {
    /// The six basket groups, in output column order.
    pub const HDB: [FoodGroup; 6] = [
        FoodGroup::AnimalSourceFoods,
        FoodGroup::Fruits,
        FoodGroup::LegumesNutsSeeds,
        FoodGroup::OilsFats,
        FoodGroup::StarchyStaples,
        FoodGroup::Vegetables,
    ];

    /// Every group that is reported: the basket groups plus sugars.
    pub const REPORTING: [FoodGroup; 7] = [
        FoodGroup::AnimalSourceFoods,
        FoodGroup::Fruits,
        FoodGroup::LegumesNutsSeeds,
        FoodGroup::OilsFats,
        FoodGroup::StarchyStaples,
        FoodGroup::Sugars,
        FoodGroup::Vegetables,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FoodGroup::AnimalSourceFoods => "AnimalSourceFoods",
            FoodGroup::Fruits => "Fruits",
            FoodGroup::LegumesNutsSeeds => "LegumesNutsSeeds",
            FoodGroup::OilsFats => "OilsFats",
            FoodGroup::StarchyStaples => "StarchyStaples",
            FoodGroup::Sugars => "Sugars",
            FoodGroup::Vegetables => "Vegetables",
            FoodGroup::Excluded => "Excluded",
        }
    }

    /// Short snake-case key used as a column name in wide tables.
    pub fn column(self) -> &'static str {
        match self {
            FoodGroup::AnimalSourceFoods => "asf",
            FoodGroup::Fruits => "fruits",
            FoodGroup::LegumesNutsSeeds => "lns",
            FoodGroup::OilsFats => "oils_fats",
            FoodGroup::StarchyStaples => "starchy_staples",
            FoodGroup::Sugars => "sugars",
            FoodGroup::Vegetables => "vegetables",
            FoodGroup::Excluded => "excluded",
        }
    }

    pub fn is_hdb(self) -> bool {
        !matches!(self, FoodGroup::Sugars | FoodGroup::Excluded)
    }

    /// Position in [`FoodGroup::REPORTING`], `None` for `Excluded`.
    pub fn slot(self) -> Option<usize> {
        FoodGroup::REPORTING.iter().position(|g| *g == self)
    }
}

impl fmt::Display for FoodGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FoodGroup {
    type Err = MappingError;

    /// Accepts the variant name or the snake-case column key, any case.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let group = match key.as_str() {
            "animalsourcefoods" | "asf" => FoodGroup::AnimalSourceFoods,
            "fruits" => FoodGroup::Fruits,
            "legumesnutsseeds" | "lns" => FoodGroup::LegumesNutsSeeds,
            "oilsfats" => FoodGroup::OilsFats,
            "starchystaples" => FoodGroup::StarchyStaples,
            "sugars" => FoodGroup::Sugars,
            "vegetables" => FoodGroup::Vegetables,
            "excluded" => FoodGroup::Excluded,
            _ => return Err(MappingError::UnknownGroup(s.trim().to_string())),
        };
        Ok(group)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MappingError {
    #[error("item code {0} is mapped more than once")]
    DuplicateMapping(u32),
    #[error("unknown food group label {0:?}")]
    UnknownGroup(String),
    #[error("item code {0} has no food-group mapping")]
    Unmapped(u32),
    #[error("commodity map row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("commodity map: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapEntry {
    pub group: FoodGroup,
    pub note: String,
}

/// Item code to food group, loaded from an editable table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommodityMap {
    entries: BTreeMap<u32, MapEntry>,
}

#[derive(Debug, Deserialize)]
struct MapRow {
    item_code: String,
    group: String,
    #[serde(default)]
    note: Option<String>,
}

impl CommodityMap {
    /// Reads an `item_code,group[,note]` table.
    pub fn load<R: Read>(reader: R) -> Result<Self, MappingError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut entries = BTreeMap::new();
        for (i, row) in rdr.deserialize::<MapRow>().enumerate() {
            let row = row.map_err(|e| MappingError::Csv(e.to_string()))?;
            let item_code: u32 = row.item_code.parse().map_err(|_| MappingError::Malformed {
                row: i + 1,
                message: format!("bad item code {:?}", row.item_code),
            })?;
            let group: FoodGroup = row.group.parse()?;
            let entry = MapEntry {
                group,
                note: row.note.unwrap_or_default(),
            };
            if entries.insert(item_code, entry).is_some() {
                return Err(MappingError::DuplicateMapping(item_code));
            }
        }
        Ok(CommodityMap { entries })
    }

    pub fn default_map() -> Self {
        Self::load(DEFAULT_COMMODITY_MAP.as_bytes()).expect("shipped commodity map is valid")
    }

    pub fn from_pairs<I: IntoIterator<Item = (u32, FoodGroup)>>(
        pairs: I,
    ) -> Result<Self, MappingError> {
        let mut entries = BTreeMap::new();
        for (code, group) in pairs {
            let entry = MapEntry {
                group,
                note: String::new(),
            };
            if entries.insert(code, entry).is_some() {
                return Err(MappingError::DuplicateMapping(code));
            }
        }
        Ok(CommodityMap { entries })
    }

    pub fn classify(&self, item_code: u32) -> Result<FoodGroup, MappingError> {
        self.entries
            .get(&item_code)
            .map(|e| e.group)
            .ok_or(MappingError::Unmapped(item_code))
    }

    pub fn entry(&self, item_code: u32) -> Option<&MapEntry> {
        self.entries.get(&item_code)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &MapEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// Item codes among `codes` that the map does not cover, ascending.
    pub fn unmapped<I: IntoIterator<Item = u32>>(&self, codes: I) -> Vec<u32> {
        codes
            .into_iter()
            .filter(|c| !self.entries.contains_key(c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// Sums observation kcal per food group for every (country, year).
///
/// Groups with no items present are zero. Output is sorted by country, then
/// year. The first unmapped item code aborts the whole computation.
pub fn group_supply(
    observations: &[SupplyObservation],
    map: &CommodityMap,
) -> Result<Vec<FoodGroupSupply>, MappingError> {
    let mut acc: BTreeMap<(CountryId, i32), GroupKcal> = BTreeMap::new();
    for obs in observations {
        let group = map.classify(obs.item_code)?;
        let kcal = acc.entry((obs.country_id, obs.year)).or_default();
        if let Some(slot) = group.slot() {
            kcal.0[slot] += obs.kcal_per_capita_day;
        }
    }
    Ok(acc
        .into_iter()
        .map(|((country_id, year), kcal)| FoodGroupSupply {
            country_id,
            year,
            kcal,
        })
        .collect())
}
