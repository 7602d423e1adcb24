//! Regional and world aggregation, and decade summaries.
//!
//! Two kinds of average are produced and kept apart by name:
//!
//! * supply aggregates (`regional_supply`, `decade_mean_energy`) weight each
//!   country's per-capita kcal by its population;
//! * index summaries (`decade_mean_hdbi`) are plain means over country-year
//!   index values, with a normal-approximation 95% interval.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::country::CountryId;
use crate::index::{FoodGroupSupply, GroupKcal, HdbiScore};
use crate::ingest::PopulationObservation;

pub const DEFAULT_REGION_SCHEME: &str = include_str!("../data/region_scheme.csv");

/// z value of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    EastAsiaPacific,
    EuropeCentralAsia,
    LatinAmericaCaribbean,
    NorthAmerica,
    SouthAsia,
    SubSaharanAfrica,
    WesternAsiaNorthAfrica,
}

impl Region {
    pub const ALL: [Region; 7] = [
        Region::EastAsiaPacific,
        Region::EuropeCentralAsia,
        Region::LatinAmericaCaribbean,
        Region::NorthAmerica,
        Region::SouthAsia,
        Region::SubSaharanAfrica,
        Region::WesternAsiaNorthAfrica,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Region::EastAsiaPacific => "East Asia & Pacific",
            Region::EuropeCentralAsia => "Europe & Central Asia",
            Region::LatinAmericaCaribbean => "Latin America & Caribbean",
            Region::NorthAmerica => "North America",
            Region::SouthAsia => "South Asia",
            Region::SubSaharanAfrica => "Sub-Saharan Africa",
            Region::WesternAsiaNorthAfrica => "Western Asia & North Africa",
        }
    }

    /// Region for a UN geoscheme subregion.
    pub fn from_subregion(subregion: &str) -> Option<Region> {
        let r = match subregion.trim().to_ascii_lowercase().as_str() {
            "eastern asia"
            | "south-eastern asia"
            | "australia and new zealand"
            | "melanesia"
            | "micronesia"
            | "polynesia" => Region::EastAsiaPacific,
            "central asia" | "eastern europe" | "northern europe" | "southern europe"
            | "western europe" => Region::EuropeCentralAsia,
            "caribbean" | "central america" | "south america" => Region::LatinAmericaCaribbean,
            "northern america" => Region::NorthAmerica,
            "southern asia" => Region::SouthAsia,
            "eastern africa" | "middle africa" | "southern africa" | "western africa" => {
                Region::SubSaharanAfrica
            }
            "northern africa" | "western asia" => Region::WesternAsiaNorthAfrica,
            _ => return None,
        };
        Some(r)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Region {
    type Err = AggregationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Region::ALL
            .into_iter()
            .find(|r| r.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| AggregationError::UnknownRegion(s.to_string()))
    }
}

/// A region or the whole world. Sorts regions first, then `World`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Area {
    Region(Region),
    World,
}

impl Area {
    pub fn all() -> impl Iterator<Item = Area> {
        Region::ALL
            .into_iter()
            .map(Area::Region)
            .chain([Area::World])
    }

    pub fn label(self) -> &'static str {
        match self {
            Area::Region(r) => r.label(),
            Area::World => "World",
        }
    }
}

impl fmt::Display for Area {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Area {
    type Err = AggregationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("world") {
            Ok(Area::World)
        } else {
            s.parse().map(Area::Region)
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("country {0} is not assigned to any region")]
    UnassignedCountry(CountryId),
    #[error("country {0} appears twice in the region scheme")]
    DuplicateCountry(CountryId),
    #[error("unknown region or subregion {0:?}")]
    UnknownRegion(String),
    #[error("no population for country {country} in {year}")]
    MissingPopulation { country: CountryId, year: i32 },
    #[error("no observations for {area} in the {decade}")]
    EmptyBin { area: Area, decade: Decade },
    #[error("{0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeEntry {
    pub name: String,
    pub subregion: String,
    pub region: Region,
}

/// Country to region assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionScheme {
    entries: BTreeMap<CountryId, SchemeEntry>,
}

#[derive(Debug, Deserialize)]
struct SchemeRow {
    country_id: u32,
    #[serde(default)]
    country: String,
    #[serde(default)]
    subregion: String,
    #[serde(default)]
    region: String,
}

impl RegionScheme {
    /// Reads `country_id,country,subregion`; a `region` column, when
    /// present and non-empty, overrides the subregion rollup.
    pub fn load<R: Read>(reader: R) -> Result<Self, AggregationError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut entries = BTreeMap::new();
        for row in rdr.deserialize::<SchemeRow>() {
            let row = row.map_err(|e| AggregationError::Malformed(e.to_string()))?;
            let region = if !row.region.is_empty() {
                row.region.parse()?
            } else {
                Region::from_subregion(&row.subregion)
                    .ok_or_else(|| AggregationError::UnknownRegion(row.subregion.clone()))?
            };
            let id = CountryId(row.country_id);
            let entry = SchemeEntry {
                name: row.country,
                subregion: row.subregion,
                region,
            };
            if entries.insert(id, entry).is_some() {
                return Err(AggregationError::DuplicateCountry(id));
            }
        }
        Ok(RegionScheme { entries })
    }

    pub fn default_scheme() -> Self {
        Self::load(DEFAULT_REGION_SCHEME.as_bytes()).expect("shipped region scheme is valid")
    }

    pub fn from_pairs<I: IntoIterator<Item = (CountryId, Region)>>(pairs: I) -> Self {
        let entries = pairs
            .into_iter()
            .map(|(id, region)| {
                let entry = SchemeEntry {
                    name: String::new(),
                    subregion: String::new(),
                    region,
                };
                (id, entry)
            })
            .collect();
        RegionScheme { entries }
    }

    pub fn assign_region(&self, country: CountryId) -> Result<Region, AggregationError> {
        self.entries
            .get(&country)
            .map(|e| e.region)
            .ok_or(AggregationError::UnassignedCountry(country))
    }

    pub fn entry(&self, country: CountryId) -> Option<&SchemeEntry> {
        self.entries.get(&country)
    }

    pub fn id_by_name(&self, name: &str) -> Option<CountryId> {
        self.entries
            .iter()
            .find(|(_, e)| e.name.eq_ignore_ascii_case(name))
            .map(|(id, _)| *id)
    }

    pub fn countries(&self) -> impl Iterator<Item = CountryId> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Resident population by country-year, in persons.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationSeries {
    values: BTreeMap<(CountryId, i32), f64>,
}

#[derive(Debug, Deserialize)]
struct PopulationRow {
    country_id: u32,
    year: i32,
    population: f64,
}

impl PopulationSeries {
    pub fn from_observations(obs: &[PopulationObservation]) -> Self {
        let values = obs
            .iter()
            .map(|o| ((o.country_id, o.year), o.persons))
            .collect();
        PopulationSeries { values }
    }

    /// Reads an override file `country_id,year,population` (persons).
    pub fn load<R: Read>(reader: R) -> Result<Self, AggregationError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut values = BTreeMap::new();
        for row in rdr.deserialize::<PopulationRow>() {
            let row = row.map_err(|e| AggregationError::Malformed(e.to_string()))?;
            values.insert((CountryId(row.country_id), row.year), row.population);
        }
        Ok(PopulationSeries { values })
    }

    pub fn insert(&mut self, country: CountryId, year: i32, persons: f64) {
        self.values.insert((country, year), persons);
    }

    pub fn get(&self, country: CountryId, year: i32) -> Option<f64> {
        self.values.get(&(country, year)).copied()
    }

    /// Population usable as a weight: present and strictly positive.
    pub fn weight(&self, country: CountryId, year: i32) -> Result<f64, AggregationError> {
        match self.get(country, year) {
            Some(p) if p > 0.0 && p.is_finite() => Ok(p),
            _ => Err(AggregationError::MissingPopulation { country, year }),
        }
    }

    /// Entries of `other` replace entries of `self`.
    pub fn overlay(mut self, other: &PopulationSeries) -> Self {
        self.values
            .extend(other.values.iter().map(|(k, v)| (*k, *v)));
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Population-weighted per-capita supply for one area-year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaSupply {
    pub area: Area,
    pub year: i32,
    pub kcal: GroupKcal,
    /// Total population of the members present that year.
    pub population: f64,
    pub members: usize,
}

#[derive(Default)]
struct WeightedSum {
    kcal: [f64; 7],
    population: f64,
    members: usize,
}

impl WeightedSum {
    fn add(&mut self, kcal: &GroupKcal, pop: f64) {
        for (acc, v) in self.kcal.iter_mut().zip(kcal.0.iter()) {
            *acc += pop * v;
        }
        self.population += pop;
        self.members += 1;
    }

    fn finish(self, area: Area, year: i32) -> AreaSupply {
        let p = self.population;
        AreaSupply {
            area,
            year,
            kcal: GroupKcal(self.kcal.map(|v| v / p)),
            population: p,
            members: self.members,
        }
    }
}

/// Population-weighted mean supply per region-year plus `World`.
///
/// Each area's per-capita kcal is `sum(pop_c * kcal_c) / sum(pop_c)` over the
/// member countries present that year. Sorted by area (regions, then World),
/// then year.
pub fn regional_supply(
    supplies: &[FoodGroupSupply],
    pop: &PopulationSeries,
    scheme: &RegionScheme,
) -> Result<Vec<AreaSupply>, AggregationError> {
    let mut acc: BTreeMap<(Area, i32), WeightedSum> = BTreeMap::new();
    for s in supplies {
        let region = scheme.assign_region(s.country_id)?;
        let w = pop.weight(s.country_id, s.year)?;
        acc.entry((Area::Region(region), s.year))
            .or_default()
            .add(&s.kcal, w);
        acc.entry((Area::World, s.year))
            .or_default()
            .add(&s.kcal, w);
    }
    Ok(acc
        .into_iter()
        .map(|((area, year), sum)| sum.finish(area, year))
        .collect())
}

/// A ten-year bin labelled by its first calendar year (1960 for the 1960s).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Decade(pub i32);

impl Decade {
    pub fn label(self) -> String {
        format!("{}s", self.0)
    }
}

impl fmt::Display for Decade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

impl FromStr for Decade {
    type Err = AggregationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_end_matches('s');
        match t.parse::<i32>() {
            Ok(y) if y % 10 == 0 => Ok(Decade(y)),
            _ => Err(AggregationError::Malformed(format!("bad decade {s:?}"))),
        }
    }
}

/// Maps years to decade bins, clipped to the data window.
///
/// With the defaults the first bin is 1961-1969 and the last (2010s) runs
/// 2010-2020 because the data end in 2020.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecadeBins {
    pub data_start: i32,
    pub data_end: i32,
    /// Fold a final year that starts a new decade into the previous bin.
    pub fold_final_year: bool,
}

impl Default for DecadeBins {
    fn default() -> Self {
        DecadeBins {
            data_start: 1961,
            data_end: 2020,
            fold_final_year: true,
        }
    }
}

impl DecadeBins {
    pub fn decade_of(&self, year: i32) -> Option<Decade> {
        if year < self.data_start || year > self.data_end {
            return None;
        }
        let d = year.div_euclid(10) * 10;
        if self.fold_final_year && year == self.data_end && year % 10 == 0 && year > self.data_start
        {
            Some(Decade(d - 10))
        } else {
            Some(Decade(d))
        }
    }

    pub fn contains(&self, decade: Decade, year: i32) -> bool {
        self.decade_of(year) == Some(decade)
    }

    pub fn decades(&self) -> Vec<Decade> {
        (self.data_start..=self.data_end)
            .filter_map(|y| self.decade_of(y))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// Sampling unit for the decade confidence interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CiUnit {
    /// Every country-year score is one observation.
    #[default]
    CountryYear,
    /// Each country's mean over the decade is one observation.
    CountryDecadeMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecadeSummary {
    pub area: Area,
    pub decade: Decade,
    pub mean_hdbi: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Country-year scores in the bin, whatever the CI unit.
    pub n_country_years: usize,
    /// Observations behind the interval (equals `n_country_years` for
    /// [`CiUnit::CountryYear`]).
    pub n_ci: usize,
    /// Set when fewer than two observations make the interval width zero.
    pub degenerate: bool,
}

/// Mean and half-width `1.96 s / sqrt(n)` of a normal 95% interval, with
/// the sample (n - 1) standard deviation. The half-width is zero for a
/// single value. `None` for an empty slice.
pub fn mean_ci95(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, Z_95 * var.sqrt() / (n as f64).sqrt()))
}

/// Unweighted decade mean of country HDBI for one area.
pub fn area_decade_hdbi(
    scores: &[HdbiScore],
    scheme: &RegionScheme,
    area: Area,
    decade: Decade,
    bins: &DecadeBins,
    unit: CiUnit,
) -> Result<DecadeSummary, AggregationError> {
    let mut by_country: BTreeMap<CountryId, Vec<f64>> = BTreeMap::new();
    for s in scores.iter().filter(|s| bins.contains(decade, s.year)) {
        let region = scheme.assign_region(s.country_id)?;
        if area == Area::World || area == Area::Region(region) {
            by_country.entry(s.country_id).or_default().push(s.hdbi);
        }
    }
    let all: Vec<f64> = by_country.values().flatten().copied().collect();
    let (mean, half) = mean_ci95(&all).ok_or(AggregationError::EmptyBin { area, decade })?;
    let ci_sample: Vec<f64> = match unit {
        CiUnit::CountryYear => all.clone(),
        CiUnit::CountryDecadeMean => by_country
            .values()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect(),
    };
    // The interval is centred on the country-year mean whatever the unit.
    let half = match unit {
        CiUnit::CountryYear => half,
        CiUnit::CountryDecadeMean => mean_ci95(&ci_sample).expect("non-empty").1,
    };
    Ok(DecadeSummary {
        area,
        decade,
        mean_hdbi: mean,
        ci_low: mean - half,
        ci_high: mean + half,
        n_country_years: all.len(),
        n_ci: ci_sample.len(),
        degenerate: ci_sample.len() < 2,
    })
}

/// Decade summaries for every area with at least one score in the bin.
pub fn decade_mean_hdbi(
    scores: &[HdbiScore],
    scheme: &RegionScheme,
    decade: Decade,
    bins: &DecadeBins,
    unit: CiUnit,
) -> Result<Vec<DecadeSummary>, AggregationError> {
    let mut present = BTreeSet::new();
    for s in scores.iter().filter(|s| bins.contains(decade, s.year)) {
        present.insert(Area::Region(scheme.assign_region(s.country_id)?));
        present.insert(Area::World);
    }
    if present.is_empty() {
        return Err(AggregationError::EmptyBin {
            area: Area::World,
            decade,
        });
    }
    present
        .into_iter()
        .map(|area| area_decade_hdbi(scores, scheme, area, decade, bins, unit))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecadeEnergy {
    pub area: Area,
    pub decade: Decade,
    /// Mean over the bin's years of the population-weighted total energy.
    pub kcal: f64,
    pub years: usize,
}

/// Decade mean of population-weighted total energy, from precomputed
/// area supplies.
pub fn decade_energy_from_regional(
    regional: &[AreaSupply],
    decade: Decade,
    bins: &DecadeBins,
) -> Vec<DecadeEnergy> {
    let mut acc: BTreeMap<Area, (f64, usize)> = BTreeMap::new();
    for s in regional.iter().filter(|s| bins.contains(decade, s.year)) {
        let e = acc.entry(s.area).or_default();
        e.0 += s.kcal.total();
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(area, (sum, years))| DecadeEnergy {
            area,
            decade,
            kcal: sum / years as f64,
            years,
        })
        .collect()
}

pub fn decade_mean_energy(
    supplies: &[FoodGroupSupply],
    pop: &PopulationSeries,
    scheme: &RegionScheme,
    decade: Decade,
    bins: &DecadeBins,
) -> Result<Vec<DecadeEnergy>, AggregationError> {
    let in_bin: Vec<FoodGroupSupply> = supplies
        .iter()
        .filter(|s| bins.contains(decade, s.year))
        .copied()
        .collect();
    if in_bin.is_empty() {
        return Err(AggregationError::EmptyBin {
            area: Area::World,
            decade,
        });
    }
    let regional = regional_supply(&in_bin, pop, scheme)?;
    Ok(decade_energy_from_regional(&regional, decade, bins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::GroupRatios;
    use crate::mapping::FoodGroup;
    use approx::assert_abs_diff_eq;

    fn supply(country: u32, year: i32, kcal: f64) -> FoodGroupSupply {
        FoodGroupSupply {
            country_id: CountryId(country),
            year,
            kcal: GroupKcal::from_groups([(FoodGroup::Fruits, kcal)]),
        }
    }

    fn score(country: u32, year: i32, hdbi: f64) -> HdbiScore {
        HdbiScore {
            country_id: CountryId(country),
            year,
            ratios: GroupRatios::default(),
            hdbi,
        }
    }

    #[test]
    fn default_scheme_assignments() {
        let scheme = RegionScheme::default_scheme();
        let china = scheme.id_by_name("China").unwrap();
        assert_eq!(scheme.assign_region(china), Ok(Region::EastAsiaPacific));
        let india = scheme.id_by_name("India").unwrap();
        assert_eq!(scheme.assign_region(india), Ok(Region::SouthAsia));
        // Greenland (85) has no FBS series and is not in the scheme.
        assert_eq!(
            scheme.assign_region(CountryId(85)),
            Err(AggregationError::UnassignedCountry(CountryId(85)))
        );
        let regions: BTreeSet<Region> = scheme
            .countries()
            .map(|c| scheme.assign_region(c).unwrap())
            .collect();
        assert_eq!(regions.len(), 7);
    }

    #[test]
    fn scheme_rejects_unknown_subregion() {
        let err = RegionScheme::load("country_id,country,subregion\n1,X,Atlantis\n".as_bytes())
            .unwrap_err();
        assert_eq!(err, AggregationError::UnknownRegion("Atlantis".into()));
    }

    #[test]
    fn one_country_region_is_identity() {
        let scheme = RegionScheme::from_pairs([(CountryId(1), Region::SouthAsia)]);
        let mut pop = PopulationSeries::default();
        pop.insert(CountryId(1), 2000, 5.0e6);
        let out = regional_supply(&[supply(1, 2000, 123.0)], &pop, &scheme).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].area, Area::Region(Region::SouthAsia));
        assert_eq!(out[0].kcal.get(FoodGroup::Fruits), 123.0);
        assert_eq!(out[1].area, Area::World);
    }

    #[test]
    fn equal_weights_symmetric_mean() {
        let scheme = RegionScheme::from_pairs([
            (CountryId(1), Region::SouthAsia),
            (CountryId(2), Region::SouthAsia),
        ]);
        let mut pop = PopulationSeries::default();
        pop.insert(CountryId(1), 2000, 1.0e6);
        pop.insert(CountryId(2), 2000, 1.0e6);
        let out = regional_supply(
            &[supply(1, 2000, 100.0), supply(2, 2000, 300.0)],
            &pop,
            &scheme,
        )
        .unwrap();
        assert_eq!(out[0].kcal.get(FoodGroup::Fruits), 200.0);
    }

    #[test]
    fn three_country_weighted_mean() {
        // (1M*100 + 2M*200 + 7M*400) / 10M = 330
        let scheme =
            RegionScheme::from_pairs((1..=3).map(|c| (CountryId(c), Region::NorthAmerica)));
        let mut pop = PopulationSeries::default();
        for (c, p) in [(1, 1.0e6), (2, 2.0e6), (3, 7.0e6)] {
            pop.insert(CountryId(c), 1990, p);
        }
        let out = regional_supply(
            &[
                supply(1, 1990, 100.0),
                supply(2, 1990, 200.0),
                supply(3, 1990, 400.0),
            ],
            &pop,
            &scheme,
        )
        .unwrap();
        assert_abs_diff_eq!(out[0].kcal.get(FoodGroup::Fruits), 330.0, epsilon = 1e-12);
        assert_eq!(out[0].population, 1.0e7);
    }

    #[test]
    fn missing_population_is_an_error() {
        let scheme = RegionScheme::from_pairs([(CountryId(1), Region::SouthAsia)]);
        let err = regional_supply(
            &[supply(1, 2000, 1.0)],
            &PopulationSeries::default(),
            &scheme,
        )
        .unwrap_err();
        assert_eq!(
            err,
            AggregationError::MissingPopulation {
                country: CountryId(1),
                year: 2000
            }
        );
    }

    #[test]
    fn decade_bins() {
        let b = DecadeBins::default();
        assert_eq!(b.decade_of(1960), None);
        assert_eq!(b.decade_of(1961), Some(Decade(1960)));
        assert_eq!(b.decade_of(1969), Some(Decade(1960)));
        assert_eq!(b.decade_of(1970), Some(Decade(1970)));
        assert_eq!(b.decade_of(2020), Some(Decade(2010)));
        assert_eq!(b.decade_of(2021), None);
        assert_eq!(b.decades().len(), 6);
        assert_eq!("2010s".parse::<Decade>().unwrap(), Decade(2010));
    }

    #[test]
    fn single_score_bin_is_degenerate() {
        let scheme = RegionScheme::from_pairs([(CountryId(1), Region::SouthAsia)]);
        let s = area_decade_hdbi(
            &[score(1, 1975, 0.42)],
            &scheme,
            Area::Region(Region::SouthAsia),
            Decade(1970),
            &DecadeBins::default(),
            CiUnit::CountryYear,
        )
        .unwrap();
        assert_eq!((s.mean_hdbi, s.ci_low, s.ci_high), (0.42, 0.42, 0.42));
        assert!(s.degenerate);
        assert_eq!(s.n_country_years, 1);
    }

    #[test]
    fn two_score_closed_form_interval() {
        // s = sqrt(0.02) = 0.141421..., half-width = 1.96 * s / sqrt(2) = 0.196
        let scheme = RegionScheme::from_pairs([
            (CountryId(1), Region::SouthAsia),
            (CountryId(2), Region::SouthAsia),
        ]);
        let s = area_decade_hdbi(
            &[score(1, 1975, 0.4), score(2, 1976, 0.6)],
            &scheme,
            Area::Region(Region::SouthAsia),
            Decade(1970),
            &DecadeBins::default(),
            CiUnit::CountryYear,
        )
        .unwrap();
        assert_abs_diff_eq!(s.mean_hdbi, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.ci_high - s.mean_hdbi, 0.196, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mean_hdbi - s.ci_low, 0.196, epsilon = 1e-12);
        assert!(!s.degenerate);
    }

    #[test]
    fn empty_bin_error() {
        let scheme = RegionScheme::from_pairs([(CountryId(1), Region::SouthAsia)]);
        let err = area_decade_hdbi(
            &[score(1, 1975, 0.4)],
            &scheme,
            Area::Region(Region::NorthAmerica),
            Decade(1970),
            &DecadeBins::default(),
            CiUnit::CountryYear,
        )
        .unwrap_err();
        assert!(matches!(err, AggregationError::EmptyBin { .. }));
        assert!(decade_mean_hdbi(
            &[],
            &scheme,
            Decade(1970),
            &DecadeBins::default(),
            CiUnit::CountryYear
        )
        .is_err());
    }

    #[test]
    fn country_decade_mean_unit() {
        // Country 1: 0.2, 0.4 (mean 0.3); country 2: 0.9 (mean 0.9).
        let scheme = RegionScheme::from_pairs([
            (CountryId(1), Region::SouthAsia),
            (CountryId(2), Region::SouthAsia),
        ]);
        let scores = [
            score(1, 1971, 0.2),
            score(1, 1972, 0.4),
            score(2, 1971, 0.9),
        ];
        let s = area_decade_hdbi(
            &scores,
            &scheme,
            Area::World,
            Decade(1970),
            &DecadeBins::default(),
            CiUnit::CountryDecadeMean,
        )
        .unwrap();
        assert_abs_diff_eq!(s.mean_hdbi, 0.5, epsilon = 1e-12);
        assert_eq!((s.n_country_years, s.n_ci), (3, 2));
        let sd = (0.18f64).sqrt(); // sample sd of {0.3, 0.9}
        assert_abs_diff_eq!(
            s.ci_high - s.mean_hdbi,
            1.96 * sd / 2f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn decade_energy_constant_and_two_year() {
        let scheme = RegionScheme::from_pairs([(CountryId(1), Region::SouthAsia)]);
        let mut pop = PopulationSeries::default();
        for y in 2010..=2020 {
            pop.insert(CountryId(1), y, 1.0e6);
        }
        let supplies: Vec<_> = (2010..=2020).map(|y| supply(1, y, 2838.0)).collect();
        let out = decade_mean_energy(
            &supplies,
            &pop,
            &scheme,
            Decade(2010),
            &DecadeBins::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 2);
        assert!(out
            .iter()
            .all(|e| (e.kcal - 2838.0).abs() < 1e-9 && e.years == 11));

        let supplies = [supply(1, 2001, 2000.0), supply(1, 2002, 2200.0)];
        let out = decade_mean_energy(
            &supplies,
            &pop.overlay(&{
                let mut p = PopulationSeries::default();
                p.insert(CountryId(1), 2001, 1.0);
                p.insert(CountryId(1), 2002, 1.0);
                p
            }),
            &scheme,
            Decade(2000),
            &DecadeBins::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(out[0].kcal, 2100.0, epsilon = 1e-12);
    }
}
