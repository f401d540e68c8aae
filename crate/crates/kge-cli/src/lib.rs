//! Experiment driver: config handling, the model × sampler × n_s grid,
//! checkpointing, and CSV report emission on top of the `kge` library.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kge::eval::{evaluate, EvalConfig, HitsComparator, MetricsReport};
use kge::graph::{load_split, DatasetStats, Split, SplitSet, TripleStore, TypeCatalog, Vocab};
use kge::models::{MarginLossConfig, ModelFamily, ModelParams};
use kge::optim::{fine_tune, train, AdamState, TrainConfig, TrainOutcome};
use kge::samplers::{
    CorruptSampler, FrozenSamplerModel, NearMissSampler, NearestNeighborSampler, RandomSampler,
    RelationalSampler, TypedSampler, DEFAULT_LEAF_SIZE,
};

const DEFAULT_NS_GRID: [usize; 7] = [1, 2, 5, 10, 20, 50, 100];
const DEFAULT_LR: f64 = 0.01;

// ------------------------------------------------------------------ samplers

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Random,
    Corrupt,
    Typed,
    Relational,
    Nn,
    Nmiss,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 6] = [
        SamplerKind::Random,
        SamplerKind::Corrupt,
        SamplerKind::Typed,
        SamplerKind::Relational,
        SamplerKind::Nn,
        SamplerKind::Nmiss,
    ];

    pub fn token(self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::Corrupt => "corrupt",
            SamplerKind::Typed => "typed",
            SamplerKind::Relational => "relational",
            SamplerKind::Nn => "nn",
            SamplerKind::Nmiss => "nmiss",
        }
    }

    pub fn is_embedding_based(self) -> bool {
        matches!(self, SamplerKind::Nn | SamplerKind::Nmiss)
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SamplerKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| {
                anyhow::anyhow!(
                    "unknown sampler '{s}' (expected random|corrupt|typed|relational|nn|nmiss)"
                )
            })
    }
}

// -------------------------------------------------------------------- config

/// One experiment: a model × sampler pair swept over the n_s grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    /// Preset key for the hyperparameter table; inferred from the data
    /// directory name when unset.
    pub dataset: Option<String>,
    /// Entity-type file for the typed sampler; defaults to
    /// `<data_dir>/types.txt` when present.
    pub type_file: Option<PathBuf>,
    pub model: ModelFamily,
    pub sampler: SamplerKind,
    pub ns_grid: Vec<usize>,
    pub dim: usize,
    /// Unset values fall back to the per-dataset preset, then to 0.01.
    pub lr: Option<f64>,
    /// Unset values fall back to the per-dataset preset, then to 0.0.
    pub l2: Option<f64>,
    pub margin: f64,
    pub seed: u64,
    /// Pretrained checkpoint for nn/nmiss: it is both the frozen neighbor
    /// model and the starting point of fine-tuning.
    pub frozen: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub eval_every: usize,
    pub fine_tune_epochs: usize,
    /// Dev triples scored per training evaluation; 0 means the full split.
    pub dev_sample: usize,
    pub hits: Vec<usize>,
    pub comparator: HitsComparator,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data_dir: PathBuf::new(),
            dataset: None,
            type_file: None,
            model: ModelFamily::TransE,
            sampler: SamplerKind::Random,
            ns_grid: DEFAULT_NS_GRID.to_vec(),
            dim: 100,
            lr: None,
            l2: None,
            margin: 1.0,
            seed: 0,
            frozen: None,
            out_dir: PathBuf::new(),
            epochs: 100,
            batch_size: 512,
            patience: 3,
            eval_every: 1,
            fine_tune_epochs: 5,
            dev_sample: 1000,
            hits: vec![1, 10],
            comparator: HitsComparator::Inclusive,
        }
    }
}

fn join_usizes(v: &[usize]) -> String {
    v.iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_usizes(s: &str, key: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .with_context(|| format!("bad {key} entry '{p}'"))
        })
        .collect()
}

impl ExperimentConfig {
    /// Flat key=value form; `parse_key_values` inverts it exactly.
    pub fn to_key_values(&self) -> String {
        let opt_path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let opt_f64 = |v: &Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut s = String::new();
        s.push_str(&format!("data_dir={}\n", self.data_dir.display()));
        s.push_str(&format!(
            "dataset={}\n",
            self.dataset.clone().unwrap_or_default()
        ));
        s.push_str(&format!("type_file={}\n", opt_path(&self.type_file)));
        s.push_str(&format!("model={}\n", self.model.token()));
        s.push_str(&format!("sampler={}\n", self.sampler.token()));
        s.push_str(&format!("ns_grid={}\n", join_usizes(&self.ns_grid)));
        s.push_str(&format!("dim={}\n", self.dim));
        s.push_str(&format!("lr={}\n", opt_f64(&self.lr)));
        s.push_str(&format!("l2={}\n", opt_f64(&self.l2)));
        s.push_str(&format!("margin={}\n", self.margin));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!("frozen={}\n", opt_path(&self.frozen)));
        s.push_str(&format!("out_dir={}\n", self.out_dir.display()));
        s.push_str(&format!("epochs={}\n", self.epochs));
        s.push_str(&format!("batch_size={}\n", self.batch_size));
        s.push_str(&format!("patience={}\n", self.patience));
        s.push_str(&format!("eval_every={}\n", self.eval_every));
        s.push_str(&format!("fine_tune_epochs={}\n", self.fine_tune_epochs));
        s.push_str(&format!("dev_sample={}\n", self.dev_sample));
        s.push_str(&format!("hits={}\n", join_usizes(&self.hits)));
        s.push_str(&format!("comparator={}\n", self.comparator));
        s
    }

    pub fn parse_key_values(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("config line {}: expected key=value", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let set = value != "";
            match key {
                "data_dir" => cfg.data_dir = PathBuf::from(value),
                "dataset" => cfg.dataset = set.then(|| value.to_string()),
                "type_file" => cfg.type_file = set.then(|| PathBuf::from(value)),
                "model" => {
                    cfg.model = value
                        .parse()
                        .map_err(|e: kge::KgeError| anyhow::anyhow!(e.to_string()))?
                }
                "sampler" => cfg.sampler = value.parse()?,
                "ns_grid" => cfg.ns_grid = parse_usizes(value, "ns_grid")?,
                "dim" => cfg.dim = value.parse().context("bad dim")?,
                "lr" => cfg.lr = if set { Some(value.parse().context("bad lr")?) } else { None },
                "l2" => cfg.l2 = if set { Some(value.parse().context("bad l2")?) } else { None },
                "margin" => cfg.margin = value.parse().context("bad margin")?,
                "seed" => cfg.seed = value.parse().context("bad seed")?,
                "frozen" => cfg.frozen = set.then(|| PathBuf::from(value)),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "epochs" => cfg.epochs = value.parse().context("bad epochs")?,
                "batch_size" => cfg.batch_size = value.parse().context("bad batch_size")?,
                "patience" => cfg.patience = value.parse().context("bad patience")?,
                "eval_every" => cfg.eval_every = value.parse().context("bad eval_every")?,
                "fine_tune_epochs" => {
                    cfg.fine_tune_epochs = value.parse().context("bad fine_tune_epochs")?
                }
                "dev_sample" => cfg.dev_sample = value.parse().context("bad dev_sample")?,
                "hits" => cfg.hits = parse_usizes(value, "hits")?,
                "comparator" => {
                    cfg.comparator = value
                        .parse()
                        .map_err(|e: kge::KgeError| anyhow::anyhow!(e.to_string()))?
                }
                other => bail!("config line {}: unknown key '{other}'", lineno + 1),
            }
        }
        Ok(cfg)
    }

    /// Collects every violated constraint; the error message lists them all.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.data_dir.as_os_str().is_empty() {
            violations.push("data_dir must be set".to_string());
        }
        if self.out_dir.as_os_str().is_empty() {
            violations.push("out_dir must be set".to_string());
        }
        if self.ns_grid.is_empty() {
            violations.push("ns_grid must contain at least one value".to_string());
        }
        if self.ns_grid.iter().any(|&n| n == 0) {
            violations.push("ns_grid values must be >= 1".to_string());
        }
        if self.dim == 0 {
            violations.push("dim must be >= 1".to_string());
        }
        if let Some(lr) = self.lr {
            if !(lr.is_finite() && lr > 0.0) {
                violations.push("lr must be a positive finite number".to_string());
            }
        }
        if let Some(l2) = self.l2 {
            if !(l2.is_finite() && l2 >= 0.0) {
                violations.push("l2 must be a non-negative finite number".to_string());
            }
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            violations.push("margin must be a positive finite number".to_string());
        }
        if self.batch_size == 0 {
            violations.push("batch_size must be >= 1".to_string());
        }
        if self.eval_every == 0 {
            violations.push("eval_every must be >= 1".to_string());
        }
        if self.hits.is_empty() {
            violations.push("hits must contain at least one cutoff".to_string());
        }
        if self.hits.iter().any(|&k| k == 0) {
            violations.push("hits cutoffs must be >= 1".to_string());
        }
        if self.sampler.is_embedding_based() && self.frozen.is_none() {
            violations.push(format!(
                "sampler '{}' requires a frozen pretrained checkpoint (--frozen)",
                self.sampler
            ));
        }
        if self.sampler == SamplerKind::Typed && self.resolved_type_file().is_none() {
            violations.push(
                "sampler 'typed' requires a type file (--types or <data_dir>/types.txt)"
                    .to_string(),
            );
        }
        if violations.is_empty() {
            Ok(())
        } else {
            bail!("invalid config: {}", violations.join("; "))
        }
    }

    fn resolved_type_file(&self) -> Option<PathBuf> {
        if let Some(ref p) = self.type_file {
            return Some(p.clone());
        }
        let fallback = self.data_dir.join("types.txt");
        fallback.exists().then_some(fallback)
    }

    fn resolved_dataset(&self) -> String {
        match &self.dataset {
            Some(d) => d.clone(),
            None => self
                .data_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        }
    }

    /// Learning rate and L2 coefficient for one grid point: explicit values
    /// win, then the per-dataset preset, then the global defaults.
    pub fn resolve_hyperparams(&self, n_s: usize) -> (f64, f64) {
        let preset = table_preset(&self.resolved_dataset(), self.model, n_s);
        let lr = self
            .lr
            .unwrap_or_else(|| preset.map(|(lr, _)| lr).unwrap_or(DEFAULT_LR));
        let l2 = self
            .l2
            .unwrap_or_else(|| preset.map(|(_, l2)| l2).unwrap_or(0.0));
        (lr, l2)
    }

    /// 16-hex-digit digest of the full serialized config.
    pub fn fingerprint(&self) -> String {
        let mut h = DefaultHasher::new();
        self.to_key_values().hash(&mut h);
        format!("{:016x}", h.finish())
    }
}

/// Published per-dataset (lr, λ) table. The Freebase rows apply uniformly
/// over n_s; the Wordnet rows switch learning rate at n_s >= 10.
pub fn table_preset(dataset: &str, model: ModelFamily, n_s: usize) -> Option<(f64, f64)> {
    let d = dataset.to_ascii_lowercase();
    let freebase = d.contains("freebase") || d.contains("fb15k");
    let wordnet = d.contains("wordnet") || d.contains("wn18");
    if freebase {
        Some(match model {
            ModelFamily::ComplEx => (0.001, 1.31e-6),
            ModelFamily::DistMult => (0.001, 4.93e-6),
            ModelFamily::Rescal => (0.001, 2.084e-4),
            ModelFamily::TransE => (0.001, 2.4036e-4),
        })
    } else if wordnet {
        let lr = if n_s < 10 { 0.005 } else { 0.01 };
        let l2 = match model {
            ModelFamily::ComplEx => 2.82e-5,
            ModelFamily::DistMult => 3.12e-6,
            ModelFamily::Rescal => 7.48e-5,
            ModelFamily::TransE => 1.863777692e-4,
        };
        Some((lr, l2))
    } else {
        None
    }
}

// ------------------------------------------------------------------- dataset

/// Loads train/dev/test from a directory; the dev split may be `valid.txt`
/// or `dev.txt`.
pub fn load_dataset(dir: &Path) -> Result<TripleStore> {
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let train = load_split(&dir.join("train.txt"), &mut entities, &mut relations, true)?;
    let dev_path = ["valid.txt", "dev.txt"]
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.exists())
        .with_context(|| format!("no valid.txt or dev.txt under {}", dir.display()))?;
    let dev = load_split(&dev_path, &mut entities, &mut relations, true)?;
    let test = load_split(&dir.join("test.txt"), &mut entities, &mut relations, true)?;
    Ok(TripleStore::build(entities, relations, train, dev, test)?)
}

// -------------------------------------------------------------------- report

/// One metric value with full provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub sampler: String,
    pub n_s: usize,
    pub split: String,
    pub metric: String,
    pub slice: String,
    pub value: f64,
    pub seed: u64,
    pub fingerprint: String,
}

impl ReportRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}\n",
            self.model,
            self.sampler,
            self.n_s,
            self.split,
            self.metric,
            self.slice,
            self.value,
            self.seed,
            self.fingerprint
        )
    }
}

const REPORT_HEADER: &str = "model,sampler,n_s,split,metric,slice,value,seed,fingerprint\n";

/// Flattens one evaluation into provenance-carrying rows: aggregate metrics
/// under slice `all`, then the same metrics per relation-frequency group.
pub fn report_rows(
    cfg: &ExperimentConfig,
    n_s: usize,
    split: &str,
    report: &MetricsReport,
) -> Vec<ReportRow> {
    let fingerprint = cfg.fingerprint();
    let row = |metric: String, slice: String, value: f64| ReportRow {
        model: cfg.model.token().to_string(),
        sampler: cfg.sampler.token().to_string(),
        n_s,
        split: split.to_string(),
        metric,
        slice,
        value,
        seed: cfg.seed,
        fingerprint: fingerprint.clone(),
    };
    let mut rows = Vec::new();
    rows.push(row("mrr".to_string(), "all".to_string(), report.mrr));
    for (&k, &v) in &report.hits {
        rows.push(row(
            format!("hits@{k}_{}", report.comparator),
            "all".to_string(),
            v,
        ));
    }
    for (&group, slice) in &report.per_slice {
        rows.push(row("mrr".to_string(), format!("oom{group}"), slice.mrr));
        for (&k, &v) in &slice.hits {
            rows.push(row(
                format!("hits@{k}_{}", report.comparator),
                format!("oom{group}"),
                v,
            ));
        }
    }
    rows
}

/// Writes metrics.csv (aggregate), slices.csv (per-group), and plot_mrr.csv
/// (the (n_s, MRR) series per model × sampler, annotated for a log-scale x
/// axis). Rewritten wholesale on every call so reruns are byte-identical and
/// partial grids are already on disk if a later point fails.
pub fn emit_report(rows: &[ReportRow], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut metrics = String::from(REPORT_HEADER);
    let mut slices = String::from(REPORT_HEADER);
    for row in rows {
        if row.slice == "all" {
            metrics.push_str(&row.csv_line());
        } else {
            slices.push_str(&row.csv_line());
        }
    }
    let mut plot = String::from("# x axis: n_s (log scale)\nmodel,sampler,n_s,mrr\n");
    for row in rows {
        if row.slice == "all" && row.metric == "mrr" {
            plot.push_str(&format!(
                "{},{},{},{}\n",
                row.model, row.sampler, row.n_s, row.value
            ));
        }
    }
    for (name, body) in [
        ("metrics.csv", metrics),
        ("slices.csv", slices),
        ("plot_mrr.csv", plot),
    ] {
        let path = out_dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- experiment

fn train_one(
    cfg: &ExperimentConfig,
    store: &TripleStore,
    catalog: Option<&TypeCatalog>,
    frozen: Option<&FrozenSamplerModel>,
    n_s: usize,
) -> Result<TrainOutcome> {
    let (lr, l2) = cfg.resolve_hyperparams(n_s);
    let loss_cfg = MarginLossConfig {
        margin: cfg.margin,
        l2_lambda: l2,
    };
    let train_cfg = TrainConfig {
        n_s,
        batch_size: cfg.batch_size,
        max_epochs: cfg.epochs,
        patience: cfg.patience,
        eval_every: cfg.eval_every,
        seed: cfg.seed,
        fine_tune_epochs: cfg.fine_tune_epochs,
        dev_sample: (cfg.dev_sample > 0).then_some(cfg.dev_sample),
    };
    let adam = AdamState::new(lr);
    let outcome = match cfg.sampler {
        SamplerKind::Random => {
            let params = init_params(cfg, store);
            train(store, params, &RandomSampler, &loss_cfg, &train_cfg, adam)?
        }
        SamplerKind::Corrupt => {
            let params = init_params(cfg, store);
            train(
                store,
                params,
                &CorruptSampler::default(),
                &loss_cfg,
                &train_cfg,
                adam,
            )?
        }
        SamplerKind::Typed => {
            let params = init_params(cfg, store);
            let sampler = TypedSampler::new(catalog.expect("validated: typed has a catalog"));
            train(store, params, &sampler, &loss_cfg, &train_cfg, adam)?
        }
        SamplerKind::Relational => {
            let params = init_params(cfg, store);
            train(
                store,
                params,
                &RelationalSampler::default(),
                &loss_cfg,
                &train_cfg,
                adam,
            )?
        }
        SamplerKind::Nn => {
            let frozen = frozen.expect("validated: nn has a frozen model");
            let sampler = NearestNeighborSampler::new(frozen, DEFAULT_LEAF_SIZE, SplitSet::TRAIN_DEV)?;
            fine_tune(
                store,
                frozen.params().clone(),
                &sampler,
                &loss_cfg,
                &train_cfg,
                adam,
            )?
        }
        SamplerKind::Nmiss => {
            let frozen = frozen.expect("validated: nmiss has a frozen model");
            let sampler = NearMissSampler::new(frozen, DEFAULT_LEAF_SIZE, SplitSet::TRAIN_DEV)?;
            fine_tune(
                store,
                frozen.params().clone(),
                &sampler,
                &loss_cfg,
                &train_cfg,
                adam,
            )?
        }
    };
    Ok(outcome)
}

fn init_params(cfg: &ExperimentConfig, store: &TripleStore) -> ModelParams {
    ModelParams::init(
        cfg.model,
        cfg.dim,
        store.n_entities(),
        store.n_relations(),
        cfg.seed,
    )
}

/// Runs the full n_s grid: per point, train (or fine-tune for nn/nmiss),
/// checkpoint, log, evaluate on test, and re-emit the report files so that a
/// failure later in the grid leaves every finished point on disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let store = load_dataset(&cfg.data_dir)?;
    let stats = DatasetStats::compute(&store);
    let catalog = match cfg.sampler {
        SamplerKind::Typed => {
            let path = cfg
                .resolved_type_file()
                .expect("validated: typed has a type file");
            Some(TypeCatalog::load(&path, &store)?)
        }
        _ => None,
    };
    let frozen = match &cfg.frozen {
        Some(path) if cfg.sampler.is_embedding_based() => {
            let params = ModelParams::load(path)?;
            if params.n_entities() != store.n_entities()
                || params.n_relations() != store.n_relations()
            {
                bail!(
                    "frozen checkpoint {} was trained on {} entities / {} relations, dataset has {} / {}",
                    path.display(),
                    params.n_entities(),
                    params.n_relations(),
                    store.n_entities(),
                    store.n_relations()
                );
            }
            Some(FrozenSamplerModel::freeze(params))
        }
        _ => None,
    };
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;

    let eval_cfg = EvalConfig {
        ks: cfg.hits.clone(),
        comparator: cfg.comparator,
        filter: SplitSet::ALL,
        mode: kge::eval::RankMode::Filtered,
    };
    let mut rows = Vec::new();
    for &n_s in &cfg.ns_grid {
        let outcome = train_one(cfg, &store, catalog.as_ref(), frozen.as_ref(), n_s)
            .with_context(|| format!("training grid point n_s={n_s}"))?;
        let stem = format!("{}_{}_ns{}", cfg.model.token(), cfg.sampler.token(), n_s);
        outcome.params.save(&cfg.out_dir.join(format!("{stem}.ckpt")))?;
        outcome
            .log
            .save(&cfg.out_dir.join(format!("{stem}_train.csv")))?;
        let mut report = evaluate(&outcome.params, &store, Split::Test, &stats, &eval_cfg)?;
        report.config_fingerprint = cfg.fingerprint();
        rows.extend(report_rows(cfg, n_s, "test", &report));
        emit_report(&rows, &cfg.out_dir)?;
    }
    Ok(rows)
}

// ----------------------------------------------------------------------- cli

#[derive(Debug, Parser)]
#[command(name = "kge", version, about = "Knowledge-graph embedding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model × sampler over an n_s grid and report test metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
    /// Generate the built-in synthetic typed dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat key=value config file; command-line flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (train.txt, valid.txt|dev.txt, test.txt).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// rescal | transe | distmult | complex
    #[arg(long)]
    pub model: Option<ModelFamily>,
    /// random | corrupt | typed | relational | nn | nmiss
    #[arg(long)]
    pub sampler: Option<SamplerKind>,
    /// Single n_s value; replaces the grid.
    #[arg(long = "num-negatives")]
    pub num_negatives: Option<usize>,
    /// Comma-separated n_s grid (default 1,2,5,10,20,50,100).
    #[arg(long, value_delimiter = ',')]
    pub ns_grid: Option<Vec<usize>>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pretrained checkpoint backing the nn/nmiss samplers.
    #[arg(long)]
    pub frozen: Option<PathBuf>,
    /// Output directory for checkpoints, logs, and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Entity-type file for the typed sampler.
    #[arg(long)]
    pub types: Option<PathBuf>,
    /// Preset key (freebase/wordnet) when it cannot be inferred from --data.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub fine_tune_epochs: Option<usize>,
    /// Dev triples per training evaluation (0 = full dev split).
    #[arg(long)]
    pub dev_sample: Option<usize>,
    /// Comma-separated hits@K cutoffs.
    #[arg(long, value_delimiter = ',')]
    pub hits: Option<Vec<usize>>,
    /// strict | inclusive
    #[arg(long)]
    pub comparator: Option<HitsComparator>,
}

impl TrainArgs {
    /// defaults < config file < flags.
    pub fn into_config(self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                ExperimentConfig::parse_key_values(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.data {
            cfg.data_dir = v;
        }
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.sampler {
            cfg.sampler = v;
        }
        if let Some(v) = self.ns_grid {
            cfg.ns_grid = v;
        }
        if let Some(n) = self.num_negatives {
            cfg.ns_grid = vec![n];
        }
        if let Some(v) = self.dim {
            cfg.dim = v;
        }
        if self.lr.is_some() {
            cfg.lr = self.lr;
        }
        if self.l2.is_some() {
            cfg.l2 = self.l2;
        }
        if let Some(v) = self.margin {
            cfg.margin = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if self.frozen.is_some() {
            cfg.frozen = self.frozen;
        }
        if let Some(v) = self.out {
            cfg.out_dir = v;
        }
        if self.types.is_some() {
            cfg.type_file = self.types;
        }
        if self.dataset.is_some() {
            cfg.dataset = self.dataset;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.patience {
            cfg.patience = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if let Some(v) = self.fine_tune_epochs {
            cfg.fine_tune_epochs = v;
        }
        if let Some(v) = self.dev_sample {
            cfg.dev_sample = v;
        }
        if let Some(v) = self.hits {
            cfg.hits = v;
        }
        if let Some(v) = self.comparator {
            cfg.comparator = v;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated hits@K cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "1,10")]
    pub hits: Vec<usize>,
    /// strict | inclusive
    #[arg(long, default_value = "inclusive")]
    pub comparator: HitsComparator,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn run_eval(args: &EvalArgs) -> Result<()> {
    let store = load_dataset(&args.data)?;
    let params = ModelParams::load(&args.ckpt)?;
    if params.n_entities() != store.n_entities() || params.n_relations() != store.n_relations() {
        bail!(
            "checkpoint {} was trained on {} entities / {} relations, dataset has {} / {}",
            args.ckpt.display(),
            params.n_entities(),
            params.n_relations(),
            store.n_entities(),
            store.n_relations()
        );
    }
    let stats = DatasetStats::compute(&store);
    let cfg = EvalConfig {
        ks: args.hits.clone(),
        comparator: args.comparator,
        ..EvalConfig::default()
    };
    let report = evaluate(&params, &store, Split::Test, &stats, &cfg)?;
    println!("model {}", params.family().token());
    println!("triples_evaluated {}", report.n_evaluated);
    println!("mrr {}", report.mrr);
    for (&k, &v) in &report.hits {
        println!("hits@{k}_{} {}", report.comparator, v);
    }
    for (&group, slice) in &report.per_slice {
        println!("slice oom{group} mrr {} n_ranks {}", slice.mrr, slice.n_ranks);
    }
    Ok(())
}

pub fn run_stats(args: &StatsArgs) -> Result<()> {
    let store = load_dataset(&args.data)?;
    let stats = DatasetStats::compute(&store);
    let n_train = store.split(Split::Train).len();
    println!("entities {}", store.n_entities());
    println!("relations {}", store.n_relations());
    println!("train {}", n_train);
    println!("dev {}", store.split(Split::Dev).len());
    println!("test {}", store.split(Split::Test).len());
    println!(
        "avg_train_degree {:.4}",
        n_train as f64 / store.n_entities() as f64
    );
    for (group, members) in stats.oom_groups() {
        println!("oom_group {group} relations {}", members.len());
    }
    for r in 0..store.n_relations() as u32 {
        println!(
            "relation {} freq {} oom {}",
            store.relations().name(r),
            stats.freq(r),
            stats.oom_of(r)
        );
    }
    Ok(())
}

pub fn run_synth(args: &SynthArgs) -> Result<()> {
    let kg = kge::synth::synthetic_typed_kg(args.seed);
    kg.write_dataset(&args.out)?;
    println!(
        "wrote synthetic dataset (seed {}) to {}",
        args.seed,
        args.out.display()
    );
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.into_config()?;
            let rows = run_experiment(&cfg)?;
            println!(
                "completed {} grid points; reports under {}",
                rows.iter().map(|r| r.n_s).collect::<std::collections::BTreeSet<_>>().len(),
                cfg.out_dir.display()
            );
            Ok(())
        }
        Command::Eval(args) => run_eval(&args),
        Command::Stats(args) => run_stats(&args),
        Command::Synth(args) => run_synth(&args),
    }
}
