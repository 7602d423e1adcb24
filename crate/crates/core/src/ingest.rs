//! FAOSTAT Food Balance Sheet ingestion.
//!
//! Both bulk layouts are accepted for either methodology: the normalized
//! (long) export with `Year` and `Value` columns, and the wide export with one
//! `Y1961`, `Y1962`, ... column per year, which is melted to long form here.
//! Bad cells are collected in a [`ParseReport`]; only structural problems
//! (a missing required column, unreadable CSV) fail the parse.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::country::CountryId;
use crate::format::fixed3;

/// Element code of "Food supply (kcal/capita/day)" in both releases.
pub const ENERGY_ELEMENT_CODE: u32 = 664;
/// Element code of "Total Population - Both sexes" (unit: 1000 persons).
pub const POPULATION_ELEMENT_CODE: u32 = 511;
/// Item code carrying the population element.
pub const POPULATION_ITEM_CODE: u32 = 2501;

pub const FIRST_YEAR: i32 = 1961;
pub const LAST_YEAR: i32 = 2100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemaVariant {
    /// Old methodology, 1961-2013.
    Fbsh,
    /// New methodology, 2010 onward.
    Fbs,
}

impl SchemaVariant {
    pub fn methodology(self) -> Methodology {
        match self {
            SchemaVariant::Fbsh => Methodology::Old,
            SchemaVariant::Fbs => Methodology::New,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Methodology {
    #[serde(rename = "OldMethodology")]
    Old,
    #[serde(rename = "NewMethodology")]
    New,
}

impl fmt::Display for Methodology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Methodology::Old => "OldMethodology",
            Methodology::New => "NewMethodology",
        })
    }
}

impl FromStr for Methodology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "OldMethodology" => Ok(Methodology::Old),
            "NewMethodology" => Ok(Methodology::New),
            other => Err(format!("unknown methodology {other:?}")),
        }
    }
}

/// One cell of a balance-sheet export.
#[derive(Debug, Clone, PartialEq)]
pub struct FbsRecord {
    pub area_code: u32,
    pub area_name: String,
    pub item_code: u32,
    pub item_name: String,
    pub element_code: u32,
    pub element_name: String,
    pub year: i32,
    pub unit: String,
    pub value: f64,
}

impl FbsRecord {
    pub fn is_energy_supply(&self) -> bool {
        if self.element_code == ENERGY_ELEMENT_CODE {
            return true;
        }
        let element = self.element_name.to_ascii_lowercase();
        element.starts_with("food supply") && element.contains("kcal")
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("required column {0:?} is missing from the header")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A cell that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum ParseIssue {
    /// Non-numeric text where a number was required. `row` is the 1-based
    /// line number in the file (the header is line 1).
    BadNumeric {
        row: u64,
        column: String,
        text: String,
    },
    YearOutOfRange {
        row: u64,
        year: i32,
    },
    /// Negative or non-finite energy value.
    InvalidEnergy {
        row: u64,
        value: f64,
    },
    /// Second occurrence of an (area, item, element, year) key.
    DuplicateKey {
        row: u64,
        area_code: u32,
        item_code: u32,
        element_code: u32,
        year: i32,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParseReport {
    pub data_rows: u64,
    pub records: u64,
    pub issues: Vec<ParseIssue>,
}

impl ParseReport {
    pub fn bad_numeric(&self) -> usize {
        self.issues
            .iter()
            .filter(|i| matches!(i, ParseIssue::BadNumeric { .. }))
            .count()
    }

    pub fn dropped_cells(&self) -> usize {
        self.issues.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFile {
    pub variant: SchemaVariant,
    pub records: Vec<FbsRecord>,
    pub report: ParseReport,
}

enum Layout {
    Long { year: usize, value: usize },
    Wide(Vec<(usize, i32)>),
}

struct Columns {
    area_code: usize,
    area_name: Option<usize>,
    item_code: usize,
    item_name: Option<usize>,
    element_code: usize,
    element_name: Option<usize>,
    unit: usize,
    layout: Layout,
}

fn normalize_header(h: &str) -> String {
    h.trim_start_matches('\u{feff}').trim().to_ascii_lowercase()
}

fn wide_year(h: &str) -> Option<i32> {
    let h = h.trim_start_matches('\u{feff}').trim();
    let digits = h.strip_prefix('Y').or_else(|| h.strip_prefix('y'))?;
    if digits.len() == 4 && digits.bytes().all(|b| b.is_ascii_digit()) {
        digits.parse().ok()
    } else {
        None
    }
}

impl Columns {
    fn resolve(headers: &csv::StringRecord) -> Result<Self, IngestError> {
        let names: Vec<String> = headers.iter().map(normalize_header).collect();
        let find = |name: &str| names.iter().position(|h| h == name);
        let need = |name: &str, label: &str| {
            find(name).ok_or_else(|| IngestError::MissingColumn(label.to_string()))
        };
        let area_code = need("area code", "Area Code")?;
        let item_code = need("item code", "Item Code")?;
        let element_code = need("element code", "Element Code")?;
        let unit = need("unit", "Unit")?;
        let layout = match (find("year"), find("value")) {
            (Some(year), Some(value)) => Layout::Long { year, value },
            (Some(_), None) => return Err(IngestError::MissingColumn("Value".into())),
            (None, _) => {
                let years: Vec<(usize, i32)> = headers
                    .iter()
                    .enumerate()
                    .filter_map(|(i, h)| wide_year(h).map(|y| (i, y)))
                    .collect();
                if years.is_empty() {
                    return Err(IngestError::MissingColumn("Year".into()));
                }
                Layout::Wide(years)
            }
        };
        Ok(Columns {
            area_code,
            area_name: find("area"),
            item_code,
            item_name: find("item"),
            element_code,
            element_name: find("element"),
            unit,
            layout,
        })
    }
}

struct RowCtx<'a> {
    row: &'a csv::StringRecord,
    line: u64,
    headers: &'a csv::StringRecord,
}

impl RowCtx<'_> {
    fn text(&self, idx: usize) -> &str {
        self.row.get(idx).unwrap_or("").trim()
    }

    fn opt_text(&self, idx: Option<usize>) -> String {
        idx.map(|i| self.text(i).to_string()).unwrap_or_default()
    }

    fn bad(&self, idx: usize) -> ParseIssue {
        ParseIssue::BadNumeric {
            row: self.line,
            column: self.headers.get(idx).unwrap_or("").trim().to_string(),
            text: self.text(idx).to_string(),
        }
    }

    fn code(&self, idx: usize) -> Result<u32, ParseIssue> {
        // FAOSTAT sometimes quotes codes with a leading apostrophe.
        self.text(idx)
            .trim_start_matches('\'')
            .parse()
            .map_err(|_| self.bad(idx))
    }

    /// `Ok(None)` for an empty cell, which is legal and silently skipped.
    fn value(&self, idx: usize) -> Result<Option<f64>, ParseIssue> {
        let t = self.text(idx);
        if t.is_empty() {
            return Ok(None);
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(self.bad(idx)),
        }
    }
}

/// Parses one bulk export. Record order follows the file; wide rows emit
/// their year cells left to right.
pub fn parse_fbs_csv<R: Read>(
    reader: R,
    variant: SchemaVariant,
) -> Result<ParsedFile, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns::resolve(&headers)?;

    let mut report = ParseReport::default();
    let mut records = Vec::new();
    let mut seen: HashSet<(u32, u32, u32, i32)> = HashSet::new();
    let mut row = csv::StringRecord::new();

    while rdr.read_record(&mut row)? {
        report.data_rows += 1;
        let ctx = RowCtx {
            row: &row,
            line: row.position().map_or(0, |p| p.line()),
            headers: &headers,
        };
        let keys = (
            ctx.code(cols.area_code),
            ctx.code(cols.item_code),
            ctx.code(cols.element_code),
        );
        let (area_code, item_code, element_code) = match keys {
            (Ok(a), Ok(i), Ok(e)) => (a, i, e),
            (a, i, e) => {
                report
                    .issues
                    .extend([a.err(), i.err(), e.err()].into_iter().flatten());
                continue;
            }
        };
        let base = FbsRecord {
            area_code,
            area_name: ctx.opt_text(cols.area_name),
            item_code,
            item_name: ctx.opt_text(cols.item_name),
            element_code,
            element_name: ctx.opt_text(cols.element_name),
            year: 0,
            unit: ctx.text(cols.unit).to_string(),
            value: 0.0,
        };

        let cells: Vec<(Result<i32, ParseIssue>, usize)> = match &cols.layout {
            Layout::Long { year, value } => {
                let y = ctx.text(*year).parse::<i32>().map_err(|_| ctx.bad(*year));
                vec![(y, *value)]
            }
            Layout::Wide(years) => years.iter().map(|(i, y)| (Ok(*y), *i)).collect(),
        };

        for (year, value_idx) in cells {
            let value = match ctx.value(value_idx) {
                Ok(Some(v)) => v,
                Ok(None) => continue,
                Err(issue) => {
                    report.issues.push(issue);
                    continue;
                }
            };
            let year = match year {
                Ok(y) => y,
                Err(issue) => {
                    report.issues.push(issue);
                    continue;
                }
            };
            if !(FIRST_YEAR..=LAST_YEAR).contains(&year) {
                report.issues.push(ParseIssue::YearOutOfRange {
                    row: ctx.line,
                    year,
                });
                continue;
            }
            let rec = FbsRecord {
                year,
                value,
                ..base.clone()
            };
            if rec.is_energy_supply() && value < 0.0 {
                report.issues.push(ParseIssue::InvalidEnergy {
                    row: ctx.line,
                    value,
                });
                continue;
            }
            if !seen.insert((area_code, item_code, element_code, year)) {
                report.issues.push(ParseIssue::DuplicateKey {
                    row: ctx.line,
                    area_code,
                    item_code,
                    element_code,
                    year,
                });
                continue;
            }
            records.push(rec);
        }
    }
    report.records = records.len() as u64;
    Ok(ParsedFile {
        variant,
        records,
        report,
    })
}

/// Keeps only the food-supply energy element; production, feed, seed and
/// loss elements are already netted into it by FAOSTAT.
pub fn filter_energy_supply(records: Vec<FbsRecord>) -> Vec<FbsRecord> {
    records
        .into_iter()
        .filter(FbsRecord::is_energy_supply)
        .collect()
}

/// Which FAOSTAT areas and items are kept as country commodities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestPolicy {
    /// Area codes at or above this are FAOSTAT regional rollups ("World",
    /// "Africa", ...) and are recomputed internally instead.
    pub aggregate_area_min: u32,
    /// Individual areas dropped because a rollup area already covers them.
    /// Defaults to the China sub-areas, keeping the "China" rollup (351).
    pub dropped_areas: Vec<u32>,
    /// FAOSTAT item-group totals ("Grand Total", "Cereals - Excluding Beer", ...).
    pub aggregate_items: (u32, u32),
}

impl Default for IngestPolicy {
    fn default() -> Self {
        IngestPolicy {
            aggregate_area_min: 5000,
            dropped_areas: vec![41, 96, 128, 214],
            aggregate_items: (2900, 2999),
        }
    }
}

impl IngestPolicy {
    pub fn keeps_area(&self, area_code: u32) -> bool {
        area_code < self.aggregate_area_min && !self.dropped_areas.contains(&area_code)
    }

    pub fn keeps_item(&self, item_code: u32) -> bool {
        let (lo, hi) = self.aggregate_items;
        item_code != POPULATION_ITEM_CODE && !(lo..=hi).contains(&item_code)
    }
}

/// One country-year-commodity energy availability value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupplyObservation {
    pub country_id: CountryId,
    pub item_code: u32,
    pub year: i32,
    pub kcal_per_capita_day: f64,
    pub source: Methodology,
}

/// Converts energy records to observations, dropping rollup areas and
/// item-group totals. Non-energy records are ignored.
pub fn to_observations(
    records: &[FbsRecord],
    source: Methodology,
    policy: &IngestPolicy,
) -> Vec<SupplyObservation> {
    records
        .iter()
        .filter(|r| r.is_energy_supply())
        .filter(|r| policy.keeps_area(r.area_code) && policy.keeps_item(r.item_code))
        .map(|r| SupplyObservation {
            country_id: CountryId(r.area_code),
            item_code: r.item_code,
            year: r.year,
            kcal_per_capita_day: r.value,
            source,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationObservation {
    pub country_id: CountryId,
    pub year: i32,
    pub persons: f64,
    pub source: Methodology,
}

/// Population (persons) from the population element bundled in the exports.
pub fn extract_population(
    records: &[FbsRecord],
    source: Methodology,
    policy: &IngestPolicy,
) -> Vec<PopulationObservation> {
    records
        .iter()
        .filter(|r| {
            r.element_code == POPULATION_ELEMENT_CODE && r.item_code == POPULATION_ITEM_CODE
        })
        .filter(|r| policy.keeps_area(r.area_code))
        .map(|r| PopulationObservation {
            country_id: CountryId(r.area_code),
            year: r.year,
            persons: r.value * unit_multiplier(&r.unit),
            source,
        })
        .collect()
}

fn unit_multiplier(unit: &str) -> f64 {
    let u = unit.to_ascii_lowercase();
    if u.starts_with("1000") {
        1000.0
    } else if u.starts_with("million") {
        1.0e6
    } else {
        1.0
    }
}

/// Country names by code, first name seen wins.
pub fn area_names(records: &[FbsRecord]) -> BTreeMap<CountryId, String> {
    let mut out = BTreeMap::new();
    for r in records {
        if !r.area_name.is_empty() {
            out.entry(CountryId(r.area_code))
                .or_insert_with(|| r.area_name.clone());
        }
    }
    out
}

/// A dissolved state and the states that replaced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Succession {
    pub predecessor: CountryId,
    pub successors: Vec<CountryId>,
    /// First year of the successor series.
    pub transition_year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpliceConfig {
    /// First year taken from the new methodology.
    pub splice_year: i32,
    pub country_succession: Vec<Succession>,
}

impl Default for SpliceConfig {
    fn default() -> Self {
        let s = |pred: u32, succ: &[u32], year: i32| Succession {
            predecessor: CountryId(pred),
            successors: succ.iter().copied().map(CountryId).collect(),
            transition_year: year,
        };
        SpliceConfig {
            splice_year: 2010,
            country_succession: vec![
                // USSR
                s(
                    228,
                    &[
                        1, 52, 57, 63, 73, 108, 113, 119, 126, 146, 185, 208, 213, 230, 235,
                    ],
                    1992,
                ),
                // Yugoslav SFR
                s(248, &[80, 98, 154, 186, 198], 1992),
                // Czechoslovakia
                s(51, &[167, 199], 1993),
                // Ethiopia PDR
                s(62, &[178, 238], 1993),
                // Belgium-Luxembourg
                s(15, &[255, 256], 2000),
                // Serbia and Montenegro
                s(186, &[272, 273], 2006),
                // Sudan (former)
                s(206, &[276, 277], 2012),
            ],
        }
    }
}

pub const SPLICE_WINDOW: (i32, i32) = (2010, 2013);

#[derive(Debug, Error, PartialEq)]
pub enum SpliceError {
    #[error("splice year {0} is outside the {}..={} overlap window", SPLICE_WINDOW.0, SPLICE_WINDOW.1)]
    SpliceYearOutOfWindow(i32),
    #[error("succession graph has a cycle through country {0}")]
    SuccessionCycle(CountryId),
    #[error("country {country}, item {item}, year {year} appears twice after splicing")]
    OverlapConflict {
        country: CountryId,
        item: u32,
        year: i32,
    },
    #[error("successor {successor} has data in {year}, before {predecessor}'s transition year {transition_year}")]
    SuccessorPrecedesTransition {
        predecessor: CountryId,
        successor: CountryId,
        year: i32,
        transition_year: i32,
    },
    #[error("predecessor {predecessor} has data in {year}, at or after its transition year {transition_year}")]
    PredecessorOutlivesTransition {
        predecessor: CountryId,
        year: i32,
        transition_year: i32,
    },
}

impl SpliceConfig {
    pub fn validate(&self) -> Result<(), SpliceError> {
        if !(SPLICE_WINDOW.0..=SPLICE_WINDOW.1).contains(&self.splice_year) {
            return Err(SpliceError::SpliceYearOutOfWindow(self.splice_year));
        }
        let mut edges: BTreeMap<CountryId, Vec<CountryId>> = BTreeMap::new();
        for s in &self.country_succession {
            edges
                .entry(s.predecessor)
                .or_default()
                .extend(s.successors.iter().copied());
        }
        // Depth-first search with an explicit on-stack set.
        fn visit(
            n: CountryId,
            edges: &BTreeMap<CountryId, Vec<CountryId>>,
            on_stack: &mut BTreeSet<CountryId>,
            done: &mut BTreeSet<CountryId>,
        ) -> Result<(), SpliceError> {
            if done.contains(&n) {
                return Ok(());
            }
            if !on_stack.insert(n) {
                return Err(SpliceError::SuccessionCycle(n));
            }
            for m in edges.get(&n).into_iter().flatten() {
                visit(*m, edges, on_stack, done)?;
            }
            on_stack.remove(&n);
            done.insert(n);
            Ok(())
        }
        let mut done = BTreeSet::new();
        for n in edges.keys() {
            visit(*n, &edges, &mut BTreeSet::new(), &mut done)?;
        }
        Ok(())
    }

    /// Whether the methodology governs `year`.
    pub fn governs(&self, source: Methodology, year: i32) -> bool {
        (source == Methodology::New) == (year >= self.splice_year)
    }
}

/// Observations that carry a splice key.
pub trait Spliceable: Copy {
    fn country(&self) -> CountryId;
    fn year(&self) -> i32;
    fn item(&self) -> u32;
    fn source(&self) -> Methodology;
}

impl Spliceable for SupplyObservation {
    fn country(&self) -> CountryId {
        self.country_id
    }
    fn year(&self) -> i32 {
        self.year
    }
    fn item(&self) -> u32 {
        self.item_code
    }
    fn source(&self) -> Methodology {
        self.source
    }
}

impl Spliceable for PopulationObservation {
    fn country(&self) -> CountryId {
        self.country_id
    }
    fn year(&self) -> i32 {
        self.year
    }
    fn item(&self) -> u32 {
        POPULATION_ITEM_CODE
    }
    fn source(&self) -> Methodology {
        self.source
    }
}

/// Splices old- and new-methodology series into one panel.
///
/// An observation survives when its methodology governs its year: old before
/// `splice_year`, new from `splice_year` on. Surviving observations from both
/// inputs are merged and sorted by (country, item, year); a key appearing
/// twice is an [`SpliceError::OverlapConflict`]. Values are never altered or
/// interpolated. Predecessor and successor states stay separate series; the
/// configured successions are checked for year overlap.
pub fn splice_series<T: Spliceable>(
    old: &[T],
    new: &[T],
    cfg: &SpliceConfig,
) -> Result<Vec<T>, SpliceError> {
    cfg.validate()?;
    let mut out: Vec<T> = old
        .iter()
        .chain(new.iter())
        .filter(|o| cfg.governs(o.source(), o.year()))
        .copied()
        .collect();
    out.sort_by_key(|o| (o.country(), o.item(), o.year()));
    if let Some(w) = out.windows(2).find(|w| {
        (w[0].country(), w[0].item(), w[0].year()) == (w[1].country(), w[1].item(), w[1].year())
    }) {
        return Err(SpliceError::OverlapConflict {
            country: w[0].country(),
            item: w[0].item(),
            year: w[0].year(),
        });
    }
    check_successions(&out, cfg)?;
    Ok(out)
}

fn check_successions<T: Spliceable>(obs: &[T], cfg: &SpliceConfig) -> Result<(), SpliceError> {
    let mut span: BTreeMap<CountryId, (i32, i32)> = BTreeMap::new();
    for o in obs {
        let e = span.entry(o.country()).or_insert((o.year(), o.year()));
        e.0 = e.0.min(o.year());
        e.1 = e.1.max(o.year());
    }
    for s in &cfg.country_succession {
        if let Some((_, last)) = span.get(&s.predecessor) {
            if *last >= s.transition_year {
                return Err(SpliceError::PredecessorOutlivesTransition {
                    predecessor: s.predecessor,
                    year: *last,
                    transition_year: s.transition_year,
                });
            }
        }
        for succ in &s.successors {
            if let Some((first, _)) = span.get(succ) {
                if *first < s.transition_year {
                    return Err(SpliceError::SuccessorPrecedesTransition {
                        predecessor: s.predecessor,
                        successor: *succ,
                        year: *first,
                        transition_year: s.transition_year,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Writes the normalized panel `country_id,item_code,year,kcal,source`.
pub fn write_panel_csv<W: Write>(obs: &[SupplyObservation], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["country_id", "item_code", "year", "kcal", "source"])?;
    for o in obs {
        w.write_record([
            o.country_id.to_string(),
            o.item_code.to_string(),
            o.year.to_string(),
            fixed3(o.kcal_per_capita_day),
            o.source.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PanelRow {
    country_id: u32,
    item_code: u32,
    year: i32,
    kcal: f64,
    source: String,
}

/// Reads a panel written by [`write_panel_csv`].
pub fn read_panel_csv<R: Read>(input: R) -> Result<Vec<SupplyObservation>, IngestError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize::<PanelRow>() {
        let row = row?;
        let source = row
            .source
            .parse()
            .map_err(|_| IngestError::MissingColumn(format!("source={}", row.source)))?;
        out.push(SupplyObservation {
            country_id: CountryId(row.country_id),
            item_code: row.item_code,
            year: row.year,
            kcal_per_capita_day: row.kcal,
            source,
        });
    }
    Ok(out)
}
