//! End-to-end pipeline driven by a TOML configuration.
//!
//! Every artifact is built in memory first and written only once all
//! requested stages succeed. A failed write removes whatever this run had
//! already written, so an output directory never holds a mix of runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregation::{
    decade_energy_from_regional, decade_mean_hdbi, regional_supply, AggregationError, AreaSupply,
    CiUnit, DecadeBins, PopulationSeries, RegionScheme,
};
use crate::country::CountryId;
use crate::format::fixed3;
use crate::index::{ratios, score_all, FoodGroupSupply, HdbTargets, HdbiScore};
use crate::ingest::{
    area_names, extract_population, parse_fbs_csv, splice_series, to_observations, write_panel_csv,
    IngestPolicy, ParseReport, ParsedFile, SchemaVariant, SpliceConfig, SupplyObservation,
};
use crate::mapping::{group_supply, CommodityMap, FoodGroup};
use crate::projections::{
    all_trajectories, build_impact_base, load_units, write_hdbi_csv, write_ratio_csv, DeltaTable,
    ImpactUnit, Scenario, UnitDrop, BASE_YEAR, DECADE_GRID,
};

/// Path value that selects the table shipped with the library.
pub const BUILTIN: &str = "builtin";

pub const SUPPLY_PANEL: &str = "supply_panel.csv";
pub const COUNTRY_SCORES: &str = "country_scores.csv";
pub const REGION_SUPPLY: &str = "region_supply.csv";
pub const REGION_SCORES: &str = "region_scores.csv";
pub const DECADE_HDBI: &str = "decade_hdbi.csv";
pub const DECADE_ENERGY: &str = "decade_energy.csv";
pub const PLOT_REGION_RATIOS: &str = "plot_region_ratios.csv";
pub const PROJECTION_RATIOS: &str = "projection_ratios.csv";
pub const PROJECTION_HDBI: &str = "projection_hdbi.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub fbsh: Option<PathBuf>,
    pub fbs: Option<PathBuf>,
    pub commodity_map: Option<PathBuf>,
    /// Defaults to the shipped scheme.
    pub region_scheme: Option<PathBuf>,
    /// `country_id,year,population` rows that replace bundled population.
    pub population: Option<PathBuf>,
    /// Defaults to the shipped unit table.
    pub impact_units: Option<PathBuf>,
    pub scenario_deltas: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageFlags {
    pub projections: bool,
}

impl Default for StageFlags {
    fn default() -> Self {
        StageFlags { projections: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    pub ci_unit: CiUnit,
    pub bins: DecadeBins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub years: Vec<i32>,
    /// Restrict to these scenarios; empty means every scenario in the deltas.
    pub scenarios: Vec<Scenario>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            years: DECADE_GRID.to_vec(),
            scenarios: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub inputs: InputPaths,
    #[serde(default)]
    pub splice: SpliceConfig,
    #[serde(default)]
    pub ingest: IngestPolicy,
    #[serde(default)]
    pub targets: Option<HdbTargets>,
    #[serde(default)]
    pub aggregation: AggregationConfig,
    #[serde(default)]
    pub projections: ProjectionConfig,
    #[serde(default)]
    pub stages: StageFlags,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line replacements for config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub splice_year: Option<i32>,
    pub map: Option<PathBuf>,
    pub scenario: Option<Scenario>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let dir = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::from_toml(&text, &dir)
    }

    /// Override paths are taken as given, relative to the working directory.
    pub fn apply(&mut self, o: &Overrides) {
        let cwd = std::env::current_dir().unwrap_or_default();
        let absolute = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                cwd.join(p)
            }
        };
        if let Some(out) = &o.out {
            self.output.dir = Some(absolute(out));
        }
        if let Some(y) = o.splice_year {
            self.splice.splice_year = y;
        }
        if let Some(m) = &o.map {
            self.inputs.commodity_map = Some(if m.as_os_str() == BUILTIN {
                m.clone()
            } else {
                absolute(m)
            });
        }
        if let Some(s) = o.scenario {
            self.projections.scenarios = vec![s];
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn targets(&self) -> HdbTargets {
        self.targets.unwrap_or_default()
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.output.dir.as_deref().map(|p| self.resolve(p))
    }
}

/// One problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind")]
pub enum Violation {
    MissingField {
        field: String,
    },
    Unreadable {
        field: String,
        path: String,
        message: String,
    },
    Invalid {
        field: String,
        message: String,
    },
    Unmapped {
        item_code: u32,
    },
    UnassignedCountry {
        country_id: CountryId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingField { field } => write!(f, "missing required field `{field}`"),
            Violation::Unreadable {
                field,
                path,
                message,
            } => write!(f, "`{field}`: cannot read {path}: {message}"),
            Violation::Invalid { field, message } => write!(f, "`{field}`: {message}"),
            Violation::Unmapped { item_code } => {
                write!(f, "item code {item_code} has no commodity mapping")
            }
            Violation::UnassignedCountry { country_id } => {
                write!(f, "country {country_id} is not assigned to a region")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Score,
    Aggregate,
    Project,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Score => "score",
            Stage::Aggregate => "aggregate",
            Stage::Project => "project",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("validation failed:\n{0}")]
    Validation(ValidationReport),
    #[error("{stage} stage: {message}")]
    Data { stage: Stage, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl PipelineError {
    /// Process exit status: 1 validation, 2 data, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Validation(_) => 1,
            PipelineError::Data { .. } => 2,
            PipelineError::Io { .. } => 3,
        }
    }

    fn data(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Data {
            stage,
            message: e.to_string(),
        }
    }
}

/// A loaded input file with its digest.
struct InputFile {
    field: &'static str,
    shown: String,
    bytes: Vec<u8>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything read and parsed from the config's inputs.
struct Loaded {
    files: Vec<InputFile>,
    fbsh: ParsedFile,
    fbs: ParsedFile,
    map: CommodityMap,
    scheme: RegionScheme,
    population: Option<PopulationSeries>,
    units: Vec<ImpactUnit>,
    deltas: Option<DeltaTable>,
}

fn read_field(
    cfg: &PipelineConfig,
    field: &'static str,
    path: Option<&PathBuf>,
    required: bool,
    report: &mut ValidationReport,
) -> Option<InputFile> {
    let Some(p) = path else {
        if required {
            report.violations.push(Violation::MissingField {
                field: field.to_string(),
            });
        }
        return None;
    };
    if p.as_os_str() == BUILTIN {
        return None;
    }
    let full = cfg.resolve(p);
    match fs::read(&full) {
        Ok(bytes) => Some(InputFile {
            field,
            shown: p.display().to_string(),
            bytes,
        }),
        Err(e) => {
            report.violations.push(Violation::Unreadable {
                field: field.to_string(),
                path: full.display().to_string(),
                message: e.to_string(),
            });
            None
        }
    }
}

fn invalid(report: &mut ValidationReport, field: &str, e: impl fmt::Display) {
    report.violations.push(Violation::Invalid {
        field: field.to_string(),
        message: e.to_string(),
    });
}

fn load_inputs(cfg: &PipelineConfig) -> (ValidationReport, Option<Loaded>) {
    let mut report = ValidationReport::default();
    let inp = &cfg.inputs;
    if cfg.output.dir.is_none() {
        report.violations.push(Violation::MissingField {
            field: "output.dir".into(),
        });
    } else if let Some(dir) = cfg.output_dir() {
        if dir.exists() && !dir.is_dir() {
            invalid(
                &mut report,
                "output.dir",
                format!("{} is not a directory", dir.display()),
            );
        }
    }
    let fbsh_file = read_field(cfg, "inputs.fbsh", inp.fbsh.as_ref(), true, &mut report);
    let fbs_file = read_field(cfg, "inputs.fbs", inp.fbs.as_ref(), true, &mut report);
    let map_file = read_field(
        cfg,
        "inputs.commodity_map",
        inp.commodity_map.as_ref(),
        true,
        &mut report,
    );
    let scheme_file = read_field(
        cfg,
        "inputs.region_scheme",
        inp.region_scheme.as_ref(),
        false,
        &mut report,
    );
    let pop_file = read_field(
        cfg,
        "inputs.population",
        inp.population.as_ref(),
        false,
        &mut report,
    );
    let units_file = read_field(
        cfg,
        "inputs.impact_units",
        inp.impact_units.as_ref(),
        false,
        &mut report,
    );
    let deltas_file = read_field(
        cfg,
        "inputs.scenario_deltas",
        inp.scenario_deltas.as_ref(),
        cfg.stages.projections,
        &mut report,
    );

    if let Err(e) = cfg.splice.validate() {
        invalid(&mut report, "splice", e);
    }

    let map = match (&map_file, inp.commodity_map.as_deref()) {
        (Some(f), _) => CommodityMap::load(f.bytes.as_slice())
            .map_err(|e| invalid(&mut report, f.field, e))
            .ok(),
        (None, Some(p)) if p.as_os_str() == BUILTIN => Some(CommodityMap::default_map()),
        _ => None,
    };
    let scheme = match &scheme_file {
        Some(f) => RegionScheme::load(f.bytes.as_slice())
            .map_err(|e| invalid(&mut report, f.field, e))
            .ok(),
        None if inp
            .region_scheme
            .as_ref()
            .is_none_or(|p| p.as_os_str() == BUILTIN) =>
        {
            Some(RegionScheme::default_scheme())
        }
        None => None,
    };
    let population = match &pop_file {
        Some(f) => PopulationSeries::load(f.bytes.as_slice())
            .map_err(|e| invalid(&mut report, f.field, e))
            .ok()
            .map(Some),
        None => Some(None),
    };
    let units = match &units_file {
        Some(f) => load_units(f.bytes.as_slice())
            .map_err(|e| invalid(&mut report, f.field, e))
            .ok(),
        None if inp
            .impact_units
            .as_ref()
            .is_none_or(|p| p.as_os_str() == BUILTIN) =>
        {
            Some(crate::projections::default_units())
        }
        None => None,
    };
    let deltas = match &deltas_file {
        Some(f) if cfg.stages.projections => DeltaTable::load(f.bytes.as_slice())
            .map_err(|e| invalid(&mut report, f.field, e))
            .ok()
            .map(Some),
        _ => Some(None),
    };

    // The two balance sheets are independent, so parse them side by side.
    let (fbsh_parsed, fbs_parsed) = std::thread::scope(|s| {
        let old = s.spawn(|| {
            fbsh_file
                .as_ref()
                .map(|f| parse_fbs_csv(f.bytes.as_slice(), SchemaVariant::Fbsh))
        });
        let new = fbs_file
            .as_ref()
            .map(|f| parse_fbs_csv(f.bytes.as_slice(), SchemaVariant::Fbs));
        (old.join().expect("parser thread panicked"), new)
    });
    let fbsh_parsed = match fbsh_parsed {
        Some(Ok(p)) => Some(p),
        Some(Err(e)) => {
            invalid(&mut report, "inputs.fbsh", e);
            None
        }
        None => None,
    };
    let fbs_parsed = match fbs_parsed {
        Some(Ok(p)) => Some(p),
        Some(Err(e)) => {
            invalid(&mut report, "inputs.fbs", e);
            None
        }
        None => None,
    };

    if let (Some(old), Some(new)) = (&fbsh_parsed, &fbs_parsed) {
        let eligible: Vec<SupplyObservation> = panel_candidates(cfg, old, new);
        if let Some(map) = &map {
            let codes: BTreeSet<u32> = eligible.iter().map(|o| o.item_code).collect();
            for code in map.unmapped(codes) {
                report
                    .violations
                    .push(Violation::Unmapped { item_code: code });
            }
        }
        if let Some(scheme) = &scheme {
            let countries: BTreeSet<CountryId> = eligible.iter().map(|o| o.country_id).collect();
            for c in countries {
                if scheme.assign_region(c).is_err() {
                    report
                        .violations
                        .push(Violation::UnassignedCountry { country_id: c });
                }
            }
        }
    }
    report.violations.sort();
    report.violations.dedup();

    let loaded = match (
        fbsh_parsed,
        fbs_parsed,
        map,
        scheme,
        population,
        units,
        deltas,
    ) {
        (
            Some(fbsh),
            Some(fbs),
            Some(map),
            Some(scheme),
            Some(population),
            Some(units),
            Some(deltas),
        ) if report.is_ok() => {
            let files = [
                fbsh_file,
                fbs_file,
                map_file,
                scheme_file,
                pop_file,
                units_file,
                deltas_file,
            ]
            .into_iter()
            .flatten()
            .collect();
            Some(Loaded {
                files,
                fbsh,
                fbs,
                map,
                scheme,
                population,
                units,
                deltas,
            })
        }
        _ => None,
    };
    (report, loaded)
}

/// Energy observations that would survive the splice, without the overlap
/// and succession checks.
fn panel_candidates(
    cfg: &PipelineConfig,
    old: &ParsedFile,
    new: &ParsedFile,
) -> Vec<SupplyObservation> {
    [old, new]
        .into_iter()
        .flat_map(|p| to_observations(&p.records, p.variant.methodology(), &cfg.ingest))
        .filter(|o| cfg.splice.governs(o.source, o.year))
        .collect()
}

/// Checks that every input is present, readable and consistent.
pub fn validate(cfg: &PipelineConfig) -> ValidationReport {
    load_inputs(cfg).0
}

/// In-memory results of a pipeline run.
#[derive(Debug, Clone, Default)]
pub struct PipelineResult {
    pub panel: Vec<SupplyObservation>,
    pub population: PopulationSeries,
    pub supplies: Vec<FoodGroupSupply>,
    pub scores: Vec<HdbiScore>,
    pub regional: Vec<AreaSupply>,
    pub trajectories: Vec<crate::projections::Trajectory>,
    pub dropped_units: Vec<UnitDrop>,
    pub parse_reports: BTreeMap<String, ParseReport>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    /// File name to contents, for every artifact this run produced.
    pub files: BTreeMap<String, Vec<u8>>,
    pub result: PipelineResult,
}

fn csv_bytes<F>(stage: Stage, f: F) -> Result<Vec<u8>, PipelineError>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| PipelineError::data(stage, e))?;
    Ok(buf)
}

fn new_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf)
}

fn ratio_header(first: &[&str]) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain(FoodGroup::REPORTING.iter().map(|g| g.column().to_string()))
        .chain(["hdbi".to_string()])
        .collect()
}

fn country_scores_csv(
    scores: &[HdbiScore],
    names: &BTreeMap<CountryId, String>,
) -> Result<Vec<u8>, PipelineError> {
    csv_bytes(Stage::Score, |buf| {
        let mut w = new_writer(buf);
        w.write_record(ratio_header(&["country_id", "country", "year"]))?;
        for s in scores {
            let mut row = vec![
                s.country_id.to_string(),
                names.get(&s.country_id).cloned().unwrap_or_default(),
                s.year.to_string(),
            ];
            row.extend(
                FoodGroup::REPORTING
                    .iter()
                    .map(|g| fixed3(s.ratios.get(*g))),
            );
            row.push(fixed3(s.hdbi));
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn aggregate_files(
    cfg: &PipelineConfig,
    regional: &[AreaSupply],
    scores: &[HdbiScore],
    scheme: &RegionScheme,
) -> Result<BTreeMap<String, Vec<u8>>, PipelineError> {
    let targets = cfg.targets();
    let bins = &cfg.aggregation.bins;
    let mut files = BTreeMap::new();

    files.insert(
        REGION_SUPPLY.to_string(),
        csv_bytes(Stage::Aggregate, |buf| {
            let mut w = new_writer(buf);
            w.write_record(["region", "year", "group", "kcal"])?;
            for a in regional {
                for g in FoodGroup::REPORTING {
                    w.write_record([
                        a.area.label(),
                        &a.year.to_string(),
                        g.column(),
                        &fixed3(a.kcal[g]),
                    ])?;
                }
            }
            w.flush()?;
            Ok(())
        })?,
    );

    files.insert(
        REGION_SCORES.to_string(),
        csv_bytes(Stage::Aggregate, |buf| {
            let mut w = new_writer(buf);
            let mut header = ratio_header(&["region", "year"]);
            header.push("energy".into());
            w.write_record(header)?;
            for a in regional {
                let r = ratios(&a.kcal, &targets);
                let mut row = vec![a.area.label().to_string(), a.year.to_string()];
                row.extend(FoodGroup::REPORTING.iter().map(|g| fixed3(r.get(*g))));
                row.push(fixed3(r.hdbi()));
                row.push(fixed3(a.kcal.total()));
                w.write_record(row)?;
            }
            w.flush()?;
            Ok(())
        })?,
    );

    files.insert(
        PLOT_REGION_RATIOS.to_string(),
        csv_bytes(Stage::Aggregate, |buf| {
            let mut w = new_writer(buf);
            w.write_record(["region", "year", "group", "ratio"])?;
            for a in regional {
                let r = ratios(&a.kcal, &targets);
                for g in FoodGroup::REPORTING {
                    w.write_record([
                        a.area.label(),
                        &a.year.to_string(),
                        g.column(),
                        &fixed3(r.get(g)),
                    ])?;
                }
            }
            w.flush()?;
            Ok(())
        })?,
    );

    let mut summaries = Vec::new();
    let mut energy = Vec::new();
    for d in bins.decades() {
        match decade_mean_hdbi(scores, scheme, d, bins, cfg.aggregation.ci_unit) {
            Ok(v) => summaries.extend(v),
            Err(AggregationError::EmptyBin { .. }) => {}
            Err(e) => return Err(PipelineError::data(Stage::Aggregate, e)),
        }
        energy.extend(decade_energy_from_regional(regional, d, bins));
    }
    summaries.sort_by_key(|s| (s.area, s.decade));
    energy.sort_by_key(|e| (e.area, e.decade));

    files.insert(
        DECADE_HDBI.to_string(),
        csv_bytes(Stage::Aggregate, |buf| {
            let mut w = new_writer(buf);
            w.write_record([
                "region",
                "decade",
                "mean_hdbi",
                "ci_low",
                "ci_high",
                "n",
                "degenerate",
            ])?;
            for s in &summaries {
                w.write_record([
                    s.area.label(),
                    &s.decade.label(),
                    &fixed3(s.mean_hdbi),
                    &fixed3(s.ci_low),
                    &fixed3(s.ci_high),
                    &s.n_country_years.to_string(),
                    if s.degenerate { "1" } else { "0" },
                ])?;
            }
            w.flush()?;
            Ok(())
        })?,
    );

    files.insert(
        DECADE_ENERGY.to_string(),
        csv_bytes(Stage::Aggregate, |buf| {
            let mut w = new_writer(buf);
            w.write_record(["region", "decade", "kcal", "years"])?;
            for e in &energy {
                w.write_record([
                    e.area.label(),
                    &e.decade.label(),
                    &fixed3(e.kcal),
                    &e.years.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })?,
    );
    Ok(files)
}

fn compute(cfg: &PipelineConfig, loaded: &Loaded, upto: Stage) -> Result<RunOutput, PipelineError> {
    let mut out = RunOutput::default();
    let res = &mut out.result;
    let policy = &cfg.ingest;
    res.parse_reports
        .insert("fbsh".into(), loaded.fbsh.report.clone());
    res.parse_reports
        .insert("fbs".into(), loaded.fbs.report.clone());

    // Ingest
    let old = to_observations(
        &loaded.fbsh.records,
        loaded.fbsh.variant.methodology(),
        policy,
    );
    let new = to_observations(
        &loaded.fbs.records,
        loaded.fbs.variant.methodology(),
        policy,
    );
    let mut panel = splice_series(&old, &new, &cfg.splice)
        .map_err(|e| PipelineError::data(Stage::Ingest, e))?;
    panel.sort_by_key(|o| (o.country_id, o.year, o.item_code));
    let old_pop = extract_population(
        &loaded.fbsh.records,
        loaded.fbsh.variant.methodology(),
        policy,
    );
    let new_pop = extract_population(
        &loaded.fbs.records,
        loaded.fbs.variant.methodology(),
        policy,
    );
    let pop = splice_series(&old_pop, &new_pop, &cfg.splice)
        .map_err(|e| PipelineError::data(Stage::Ingest, e))?;
    res.population = PopulationSeries::from_observations(&pop);
    if let Some(over) = &loaded.population {
        res.population = std::mem::take(&mut res.population).overlay(over);
    }
    out.files.insert(
        SUPPLY_PANEL.into(),
        csv_bytes(Stage::Ingest, |buf| write_panel_csv(&panel, buf))?,
    );
    res.panel = panel;
    if upto == Stage::Ingest {
        return Ok(out);
    }

    // Score
    let mut names = area_names(&loaded.fbs.records);
    for (id, name) in area_names(&loaded.fbsh.records) {
        names.entry(id).or_insert(name);
    }
    for id in loaded.scheme.countries() {
        if let Some(e) = loaded.scheme.entry(id) {
            if !e.name.is_empty() {
                names.entry(id).or_insert_with(|| e.name.clone());
            }
        }
    }
    res.supplies =
        group_supply(&res.panel, &loaded.map).map_err(|e| PipelineError::data(Stage::Score, e))?;
    res.scores = score_all(&res.supplies, &cfg.targets());
    out.files.insert(
        COUNTRY_SCORES.into(),
        country_scores_csv(&res.scores, &names)?,
    );
    if upto == Stage::Score {
        return Ok(out);
    }

    // Aggregate
    res.regional = regional_supply(&res.supplies, &res.population, &loaded.scheme)
        .map_err(|e| PipelineError::data(Stage::Aggregate, e))?;
    out.files.extend(aggregate_files(
        cfg,
        &res.regional,
        &res.scores,
        &loaded.scheme,
    )?);
    if upto == Stage::Aggregate || !cfg.stages.projections {
        return Ok(out);
    }

    // Project
    let mut deltas = loaded.deltas.clone().unwrap_or_default();
    if !cfg.projections.scenarios.is_empty() {
        let have = deltas.scenarios();
        if let Some(missing) = cfg.projections.scenarios.iter().find(|s| !have.contains(s)) {
            return Err(PipelineError::data(
                Stage::Project,
                format!("no deltas for scenario {missing}"),
            ));
        }
        deltas.retain_scenarios(&cfg.projections.scenarios);
    }
    let base = build_impact_base(&res.supplies, &res.population, &loaded.units, BASE_YEAR);
    res.trajectories = all_trajectories(
        &base,
        &deltas,
        &loaded.scheme,
        &cfg.targets(),
        &cfg.projections.years,
    )
    .map_err(|e| PipelineError::data(Stage::Project, e))?;
    res.dropped_units = base.dropped;
    out.files.insert(
        PROJECTION_RATIOS.into(),
        csv_bytes(Stage::Project, |buf| {
            write_ratio_csv(&res.trajectories, buf)
        })?,
    );
    out.files.insert(
        PROJECTION_HDBI.into(),
        csv_bytes(Stage::Project, |buf| write_hdbi_csv(&res.trajectories, buf))?,
    );
    Ok(out)
}

fn builtin_text(field: &str) -> Option<&'static str> {
    match field {
        "inputs.commodity_map" => Some(crate::mapping::DEFAULT_COMMODITY_MAP),
        "inputs.region_scheme" => Some(crate::aggregation::DEFAULT_REGION_SCHEME),
        "inputs.impact_units" => Some(crate::projections::DEFAULT_IMPACT_UNITS),
        _ => None,
    }
}

fn manifest(
    cfg: &PipelineConfig,
    loaded: &Loaded,
    out: &RunOutput,
) -> Result<Vec<u8>, PipelineError> {
    use serde_json::{json, Map, Value};

    let mut inputs = Map::new();
    for f in &loaded.files {
        inputs.insert(
            f.field.into(),
            json!({ "path": f.shown, "sha256": sha256_hex(&f.bytes) }),
        );
    }
    for field in [
        "inputs.commodity_map",
        "inputs.region_scheme",
        "inputs.impact_units",
    ] {
        if !inputs.contains_key(field) {
            let text = builtin_text(field).expect("builtin table");
            inputs.insert(
                field.into(),
                json!({ "path": BUILTIN, "sha256": sha256_hex(text.as_bytes()) }),
            );
        }
    }
    let outputs: Map<String, Value> = out
        .files
        .iter()
        .map(|(name, bytes)| (name.clone(), Value::String(sha256_hex(bytes))))
        .collect();

    // The output location is not part of the run's identity.
    let mut echo = cfg.clone();
    echo.output.dir = None;

    let mut doc = json!({
        "config": echo,
        "inputs": inputs,
        "outputs": outputs,
        "parse_reports": out.result.parse_reports,
        "counts": {
            "panel_rows": out.result.panel.len(),
            "country_years": out.result.scores.len(),
            "area_years": out.result.regional.len(),
            "trajectory_rows": out.result.trajectories.len(),
        },
        "formatting": { "decimals": crate::format::DECIMALS, "rounding": "half-even on exact binary value" },
    });
    if out.files.contains_key(PROJECTION_HDBI) {
        doc["projections"] = json!({
            "base_year": BASE_YEAR,
            "population_frozen_at": BASE_YEAR,
            "population_note": "regional projection weights use base-year populations held fixed",
            "dropped_units": out.result.dropped_units,
        });
    }
    let mut bytes =
        serde_json::to_vec_pretty(&doc).map_err(|e| PipelineError::Config(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Validates, then builds every artifact up to `upto` in memory, including
/// the manifest. Nothing is written.
pub fn execute(cfg: &PipelineConfig, upto: Stage) -> Result<RunOutput, PipelineError> {
    let (report, loaded) = load_inputs(cfg);
    let loaded = match loaded {
        Some(l) if report.is_ok() => l,
        _ => return Err(PipelineError::Validation(report)),
    };
    let mut out = compute(cfg, &loaded, upto)?;
    let m = manifest(cfg, &loaded, &out)?;
    out.files.insert(MANIFEST.into(), m);
    Ok(out)
}

/// Writes `files` into `dir`. On the first failure every file already
/// written by this call is removed.
pub fn write_outputs(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> Result<(), PipelineError> {
    let io_err = |path: &Path, source: io::Error| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(io_err(&path, e));
        }
        written.push(path);
    }
    Ok(())
}

/// Runs the stages up to `upto` and writes their artifacts.
pub fn run_stage(cfg: &PipelineConfig, upto: Stage) -> Result<RunOutput, PipelineError> {
    let out = execute(cfg, upto)?;
    let dir = cfg.output_dir().ok_or_else(|| {
        PipelineError::Validation(ValidationReport {
            violations: vec![Violation::MissingField {
                field: "output.dir".into(),
            }],
        })
    })?;
    write_outputs(&dir, &out.files)?;
    Ok(out)
}

/// The full pipeline; projections run when enabled in `[stages]`.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    run_stage(cfg, Stage::Project)
}
