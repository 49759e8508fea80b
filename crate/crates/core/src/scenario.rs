//! Scenario files: parsing, overrides, validation and the train/evaluate pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::Money;
use crate::economy::{validate_hpi, EvalShock, HpiPath, ShockDirection, ShockProcess};
use crate::engine::{run_evaluation, run_training, EngineConfig, LearnerPool, Reserve, RunLabel};
use crate::error::{Error, Result};
use crate::finance::EquityBasis;
use crate::metrics::{write_csv, MetricsBundle};
use crate::policy::{LearnerParams, LearnerSnapshot};
use crate::population::{validate_config, DistributionConfig};
use crate::products::ProductMode;
use crate::report;
use crate::servicing::ServicerConfig;

/// Environment variable naming the parent of default output directories.
pub const OUTPUT_DIR_ENV: &str = "MORTSIM_OUTPUT_DIR";

/// Name of the run-level manifest at the root of an output directory.
pub const RUN_MANIFEST: &str = "run.json";

pub const RUN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub population: PopulationBlock,
    #[serde(default)]
    pub economy: EconomyBlock,
    #[serde(default)]
    pub evaluation: EvaluationBlock,
    #[serde(default)]
    pub servicer: ServicerConfig,
    #[serde(default)]
    pub products: ProductMode,
    #[serde(default)]
    pub learner: LearnerParams,
    #[serde(default)]
    pub utility: UtilityBlock,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationBlock {
    /// Distribution file, relative to the scenario file.
    pub path: Option<PathBuf>,
    /// Distribution given in place; ignored when `path` is set.
    pub inline: Option<DistributionConfig>,
    pub n: usize,
    pub individual_learners: bool,
}

impl Default for PopulationBlock {
    fn default() -> Self {
        PopulationBlock {
            path: None,
            inline: None,
            n: 1000,
            individual_learners: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconomyBlock {
    pub hpi: HpiPath,
    pub shocks: ShockProcess,
}

impl Default for EconomyBlock {
    fn default() -> Self {
        EconomyBlock {
            hpi: HpiPath::Constant,
            shocks: ShockProcess::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationBlock {
    pub shock_month: u32,
    pub direction: ShockDirection,
    /// Fraction of borrowers hit by the evaluation shock.
    pub coverage: f64,
}

impl Default for EvaluationBlock {
    fn default() -> Self {
        EvaluationBlock {
            shock_month: 0,
            direction: ShockDirection::Reduce,
            coverage: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityBlock {
    pub equity_basis: EquityBasis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub seeds: Vec<u64>,
    pub train_months: u32,
    pub train_episodes: u32,
    pub eval_months: u32,
    pub shock_grid: Vec<f64>,
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock {
            seeds: vec![1, 2, 3, 4, 5],
            train_months: 120,
            train_episodes: 40,
            eval_months: 24,
            shock_grid: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: None,
            formats: vec![OutputFormat::Csv],
        }
    }
}

/// A parsed scenario together with its resolved population and hash.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// Directory relative paths in the config resolve against.
    pub base_dir: PathBuf,
    /// Stem of the scenario file, used to name the default output directory.
    pub name: String,
    pub population: DistributionConfig,
    pub hash: String,
}

/// Applies one `path=value` override to a parsed TOML document.
///
/// The value is read as a TOML value when it parses as one and as a bare
/// string otherwise, so `run.seeds=[1]` and `output.dir=out` both work.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> std::result::Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` must have the form path=value"))?;
    let path = path.trim();
    let keys: Vec<&str> = path.split('.').collect();
    if path.is_empty() || keys.iter().any(|k| k.is_empty()) {
        return Err(format!("override `{assignment}` has an empty key"));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut table = doc;
    for key in parents {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(format!("override `{path}`: `{key}` is not a section")),
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl Scenario {
    /// Reads a scenario file, applies overrides and validates the result.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(vec![format!("cannot read {}: {e}", path.display())]))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        Self::parse(&text, overrides, base_dir, name)
    }

    pub fn parse(
        text: &str,
        overrides: &[String],
        base_dir: PathBuf,
        name: String,
    ) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text)
            .map_err(|e| Error::Validation(vec![format!("scenario file: {e}")]))?;
        let mut problems = Vec::new();
        for o in overrides {
            if let Err(e) = apply_override(&mut doc, o) {
                problems.push(e);
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let config: ScenarioConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Validation(vec![e.to_string()]))?;
        Self::from_config(config, base_dir, name)
    }

    pub fn from_config(config: ScenarioConfig, base_dir: PathBuf, name: String) -> Result<Self> {
        let mut problems = validate(&config);
        let population = match (&config.population.path, &config.population.inline) {
            (Some(p), _) => {
                let full = base_dir.join(p);
                match DistributionConfig::load(&full) {
                    Ok(d) => Some(d),
                    Err(Error::Io { path, source }) => {
                        problems.push(format!(
                            "population.path: cannot read {}: {source}",
                            path.display()
                        ));
                        None
                    }
                    Err(e) => {
                        problems.push(format!("population.path: {e}"));
                        None
                    }
                }
            }
            (None, Some(d)) => Some(d.clone()),
            (None, None) => Some(DistributionConfig::default()),
        };
        if let Some(d) = &population {
            problems.extend(
                validate_config(d)
                    .into_iter()
                    .map(|v| format!("population: {v}")),
            );
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let population = population.expect("checked above");
        let hash = config_hash(&config, &population);
        Ok(Scenario {
            config,
            base_dir,
            name,
            population,
            hash,
        })
    }

    pub fn engine_config(&self) -> EngineConfig {
        let c = &self.config;
        EngineConfig {
            n_borrowers: c.population.n,
            population: self.population.clone(),
            hpi: c.economy.hpi,
            shocks: c.economy.shocks.clone(),
            servicer: c.servicer.clone(),
            learner: c.learner,
            equity_basis: c.utility.equity_basis,
            individual_learners: c.population.individual_learners,
            train_months: c.run.train_months,
            train_episodes: c.run.train_episodes,
            eval_months: c.run.eval_months,
        }
    }

    /// Output directory: the config's own, else one named after the scenario
    /// under `$MORTSIM_OUTPUT_DIR`, else under `runs/`.
    pub fn default_output_dir(&self) -> PathBuf {
        if let Some(dir) = &self.config.output.dir {
            return self.base_dir.join(dir);
        }
        let parent = std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        parent.join(&self.name)
    }

    pub fn eval_shock(&self, size: f64) -> EvalShock {
        let e = &self.config.evaluation;
        EvalShock {
            month: e.shock_month,
            relative_size: size,
            direction: e.direction,
            coverage: e.coverage,
        }
    }

    pub fn variants(&self) -> Vec<Variant> {
        match &self.config.products {
            ProductMode::Off => vec![Variant {
                name: "off".into(),
                reserve: Reserve::None,
                training: Training::Plain,
            }],
            ProductMode::Upfront { amounts } => amounts
                .iter()
                .map(|&m| Variant {
                    name: format!("upfront-{}", money_label(m)),
                    reserve: Reserve::Upfront(m),
                    training: Training::Plain,
                })
                .collect(),
            ProductMode::Matched { menu } => vec![Variant {
                name: "matched".into(),
                reserve: Reserve::Matched(menu.clone()),
                training: Training::Matched,
            }],
        }
    }
}

fn money_label(m: Money) -> String {
    if m.cents() % 100 == 0 {
        (m.cents() / 100).to_string()
    } else {
        format!("{}.{:02}", m.cents() / 100, m.cents() % 100)
    }
}

/// Every field-level problem with `config`, apart from the population file.
pub fn validate(config: &ScenarioConfig) -> Vec<String> {
    let mut out = Vec::new();
    if config.population.n == 0 {
        out.push("population.n must be at least 1".into());
    }
    validate_hpi(&config.economy.hpi, &mut out);
    config.economy.shocks.validate(&mut out);
    config.servicer.validate(&mut out);
    config.products.validate(&mut out);
    config.learner.validate(&mut out);
    let run = &config.run;
    if run.seeds.is_empty() {
        out.push("run.seeds must list at least one seed".into());
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &run.seeds {
        if !seen.insert(s) {
            out.push(format!("run.seeds: seed {s} is listed twice"));
        }
    }
    if run.eval_months == 0 {
        out.push("run.eval_months must be at least 1".into());
    }
    if run.shock_grid.is_empty() {
        out.push("run.shock_grid must list at least one shock size".into());
    }
    let mut sizes = std::collections::BTreeSet::new();
    for &size in &run.shock_grid {
        let shock = EvalShock {
            month: config.evaluation.shock_month,
            relative_size: size,
            direction: config.evaluation.direction,
            coverage: config.evaluation.coverage,
        };
        let before = out.len();
        shock.validate(&mut out);
        for msg in &mut out[before..] {
            *msg = format!("run.shock_grid: {msg}");
        }
        if !sizes.insert(size.to_bits()) {
            out.push(format!("run.shock_grid: size {size} is listed twice"));
        }
    }
    if config.evaluation.shock_month >= run.eval_months.max(1) {
        out.push(format!(
            "evaluation.shock_month {} must fall inside the {}-month evaluation",
            config.evaluation.shock_month, run.eval_months
        ));
    }
    if config.output.formats.is_empty() {
        out.push("output.formats must list at least one format".into());
    }
    out
}

/// Hash over the canonical form of everything that affects results.
pub fn config_hash(config: &ScenarioConfig, population: &DistributionConfig) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        config: &'a ScenarioConfig,
        population: &'a DistributionConfig,
    }
    let mut config = config.clone();
    config.output.dir = None;
    config.population.path = None;
    config.population.inline = None;
    let json = serde_json::to_string(&Canonical {
        config: &config,
        population,
    })
    .expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Training {
    /// Learners never see a reserve-account offer.
    Plain,
    /// Learners train with the matched menu on offer.
    Matched,
}

impl Training {
    fn label(self) -> &'static str {
        match self {
            Training::Plain => "plain",
            Training::Matched => "matched",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub reserve: Reserve,
    pub training: Training,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario's output directory.
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    /// Snapshot directory from an earlier run; skips training.
    pub snapshots: Option<PathBuf>,
}

/// Where one evaluation cell lives in a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub seed: u64,
    pub variant: String,
    pub shock_size: f64,
    pub dir: String,
    pub population_hash: String,
}

/// Fields two runs must share to be compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparability {
    pub n_borrowers: usize,
    pub seeds: Vec<u64>,
    pub eval_months: u32,
    pub shock_month: u32,
    /// Evaluation population hash per seed.
    pub population_hashes: BTreeMap<u64, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub comparability: Comparability,
    pub shock_grid: Vec<f64>,
    pub variants: Vec<String>,
    /// Every cell of a seed was evaluated on the same population.
    pub paired: bool,
    pub trained: bool,
    pub cells: Vec<CellEntry>,
}

impl RunManifest {
    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(RUN_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path,
            message: e.to_string(),
        })
    }
}

pub fn cell_dir(seed: u64, variant: &str, shock: f64) -> String {
    format!("seed-{seed}/{variant}/shock-{shock}")
}

fn snapshot_dir(root: &Path, seed: u64, training: Training) -> PathBuf {
    root.join(format!("seed-{seed}")).join(training.label())
}

fn write_snapshots(dir: &Path, snaps: &[LearnerSnapshot]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, s) in snaps.iter().enumerate() {
        s.write_to(&dir.join(format!("learner-{i:05}.bin")))?;
    }
    Ok(())
}

fn read_snapshots(dir: &Path) -> Result<Vec<LearnerSnapshot>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Snapshot(format!(
            "no learner snapshots in {}",
            dir.display()
        )));
    }
    files
        .iter()
        .map(|p| LearnerSnapshot::read_from(p))
        .collect()
}

/// Results of a completed run, in cell order.
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub bundles: Vec<MetricsBundle>,
}

/// Trains learners and evaluates every (seed, variant, shock) cell.
///
/// Results are computed in memory and written in a fixed order; nothing is
/// left behind on failure.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunOutcome> {
    let out_dir = options
        .out_dir
        .clone()
        .unwrap_or_else(|| scenario.default_output_dir());
    let computed = execute(scenario, options)?;
    write_run(&out_dir, &computed)?;
    Ok(RunOutcome {
        out_dir,
        manifest: computed.manifest,
        bundles: computed.bundles,
    })
}

/// Learner snapshots per (seed, training kind).
pub type Trained = BTreeMap<(u64, Training), Vec<LearnerSnapshot>>;

/// Everything a run produces, before anything is written.
pub struct Computed {
    pub manifest: RunManifest,
    /// One per manifest cell, in the same order.
    pub bundles: Vec<MetricsBundle>,
    pub snapshots: Trained,
}

/// Runs the pipeline in memory on a pool of `options.jobs` workers.
pub fn execute(scenario: &Scenario, options: &RunOptions) -> Result<Computed> {
    let work = || compute(scenario, options);
    match options.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    }
}

fn compute(scenario: &Scenario, options: &RunOptions) -> Result<Computed> {
    let engine = scenario.engine_config();
    let run = &scenario.config.run;
    let variants = scenario.variants();
    let mut trainings: Vec<Training> = variants.iter().map(|v| v.training).collect();
    trainings.sort();
    trainings.dedup();
    let jobs: Vec<(u64, Training)> = run
        .seeds
        .iter()
        .flat_map(|&s| trainings.iter().map(move |&t| (s, t)))
        .collect();

    let trained: Vec<Vec<LearnerSnapshot>> = jobs
        .par_iter()
        .map(|&(seed, training)| {
            if let Some(root) = &options.snapshots {
                return read_snapshots(&snapshot_dir(root, seed, training));
            }
            let mut pool = LearnerPool::new(
                engine.learner,
                engine.individual_learners,
                engine.n_borrowers,
            )?;
            let reserve = match training {
                Training::Plain => Reserve::None,
                Training::Matched => variants
                    .iter()
                    .find(|v| v.training == Training::Matched)
                    .map(|v| v.reserve.clone())
                    .unwrap_or(Reserve::None),
            };
            run_training(&engine, seed, &reserve, &mut pool)?;
            Ok(pool.snapshots())
        })
        .collect::<Result<_>>()?;
    let trained: Trained = jobs.into_iter().zip(trained).collect();

    let cells: Vec<(u64, &Variant, f64)> = run
        .seeds
        .iter()
        .flat_map(|&s| {
            variants
                .iter()
                .flat_map(move |v| run.shock_grid.iter().map(move |&x| (s, v, x)))
        })
        .collect();
    let bundles: Vec<MetricsBundle> = cells
        .par_iter()
        .map(|&(seed, variant, size)| {
            let snaps = &trained[&(seed, variant.training)];
            if engine.individual_learners && snaps.len() != engine.n_borrowers {
                return Err(Error::Snapshot(format!(
                    "expected {} borrower learners for seed {seed}, got {}",
                    engine.n_borrowers,
                    snaps.len()
                )));
            }
            let mut pool =
                LearnerPool::from_snapshots(engine.learner, engine.individual_learners, snaps)?;
            let label = RunLabel {
                config_hash: scenario.hash.clone(),
                variant: variant.name.clone(),
            };
            let eval = run_evaluation(
                &engine,
                seed,
                &mut pool,
                &variant.reserve,
                &scenario.eval_shock(size),
                &label,
                false,
            )?;
            Ok(eval.bundle)
        })
        .collect::<Result<_>>()?;

    let mut population_hashes = BTreeMap::new();
    let mut paired = true;
    let entries: Vec<CellEntry> = cells
        .iter()
        .zip(&bundles)
        .map(|(&(seed, variant, size), b)| {
            let hash = b.meta.population_hash.clone();
            let first = population_hashes
                .entry(seed)
                .or_insert_with(|| hash.clone());
            paired &= *first == hash;
            CellEntry {
                seed,
                variant: variant.name.clone(),
                shock_size: size,
                dir: cell_dir(seed, &variant.name, size),
                population_hash: hash,
            }
        })
        .collect();
    let manifest = RunManifest {
        format_version: RUN_FORMAT_VERSION,
        config_hash: scenario.hash.clone(),
        comparability: Comparability {
            n_borrowers: engine.n_borrowers,
            seeds: run.seeds.clone(),
            eval_months: engine.eval_months,
            shock_month: scenario.config.evaluation.shock_month,
            population_hashes,
        },
        shock_grid: run.shock_grid.clone(),
        variants: variants.iter().map(|v| v.name.clone()).collect(),
        paired,
        trained: options.snapshots.is_none(),
        cells: entries,
    };
    Ok(Computed {
        manifest,
        bundles,
        snapshots: trained,
    })
}

fn write_run(out_dir: &Path, computed: &Computed) -> Result<()> {
    if out_dir.exists() {
        let is_run = out_dir.join(RUN_MANIFEST).is_file();
        let is_empty = std::fs::read_dir(out_dir)
            .map_err(|e| Error::io(out_dir, e))?
            .next()
            .is_none();
        if !is_run && !is_empty {
            return Err(Error::Config(format!(
                "{} exists and is not a run directory; refusing to overwrite it",
                out_dir.display()
            )));
        }
    }
    let staging = staging_dir(out_dir);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    let result = write_contents(&staging, computed);
    if let Err(e) = result {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(e);
    }
    if out_dir.exists() {
        std::fs::remove_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    }
    std::fs::rename(&staging, out_dir).map_err(|e| {
        let _ = std::fs::remove_dir_all(&staging);
        Error::io(out_dir, e)
    })
}

fn staging_dir(out_dir: &Path) -> PathBuf {
    let mut name = out_dir
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_else(|| "run".into());
    name.push(".partial");
    out_dir.with_file_name(name)
}

fn write_contents(root: &Path, computed: &Computed) -> Result<()> {
    let Computed {
        manifest,
        bundles,
        snapshots,
    } = computed;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for (cell, bundle) in manifest.cells.iter().zip(bundles) {
        write_csv(bundle, &root.join(&cell.dir))?;
    }
    let summary = root.join("summary");
    std::fs::create_dir_all(&summary).map_err(|e| Error::io(&summary, e))?;
    for (name, body) in report::render_summary(manifest, bundles) {
        let path = summary.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    if manifest.trained {
        for (&(seed, training), snaps) in snapshots {
            write_snapshots(
                &snapshot_dir(&root.join("snapshots"), seed, training),
                snaps,
            )?;
        }
    }
    let path = root.join(RUN_MANIFEST);
    let text =
        serde_json::to_string_pretty(manifest).map_err(|e| Error::Snapshot(e.to_string()))? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
