//! Experiment harness: config files, run records, sweeps, and CSV artifacts.
//!
//! Everything the `lae` binary does is implemented here as library calls, so
//! tests can drive the exact code paths the command line exposes. All
//! artifacts are reproducible byte-for-byte from `(config, seed)`; measured
//! wall times are zeroed in files unless timing is explicitly requested.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::{
    load_dataset, make_synthetic, spectrum_of, DataMatrix, DatasetFormat, Spectrum, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::landscape::{
    closed_form_quotients, global_optimum, loss_surface_slice, nd_cond_lower_bound,
    nonuniform_cond_lower_bound, rayleigh_fd, rotation_tangent, scaling_direction, CurvatureProbe,
    SurfaceRow,
};
use crate::objective::{geometric_prior, gradcheck, RegularizerSpec, WeightPair};
use crate::optim::{
    epochs_to_threshold, train, MetricKind, MetricTrace, OptimizerKind, StopRule, TrainConfig,
    TrainOutcome,
};

/// Environment variable overriding the artifact directory.
pub const OUT_DIR_ENV: &str = "LAE_OUT_DIR";

// ---------------------------------------------------------------------------
// Config file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SingularValuesConfig {
    /// Equally spaced from `hi` down to `lo`.
    Linspace { hi: f64, lo: f64 },
    /// Descending integers `r, r-1, …, 1` for `r = min(m, n)`.
    #[default]
    OneToM,
    /// Explicit descending list.
    List { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic {
        m: usize,
        n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        singular_values: SingularValuesConfig,
    },
    Csv {
        path: String,
    },
    Idx {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub k: usize,
    pub scheme: String,
    #[serde(default)]
    pub optimizer: Option<String>,
    pub alpha: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub epochs: usize,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Penalty for `scheme = "uniform"`.
    #[serde(default)]
    pub uniform_lambda: Option<f64>,
    /// Explicit penalties for `scheme = "nonuniform"`.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    /// √λ endpoints interpolated when `lambdas` is absent.
    #[serde(default = "default_sqrt_lo")]
    pub sqrt_lambda_lo: f64,
    #[serde(default = "default_sqrt_hi")]
    pub sqrt_lambda_hi: f64,
    /// Geometric truncation parameter for the nested-dropout priors.
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

fn default_momentum() -> f64 {
    0.9
}
fn default_init_std() -> f64 {
    1e-2
}
fn default_eval_every() -> usize {
    1
}
fn default_sqrt_lo() -> f64 {
    0.1
}
fn default_sqrt_hi() -> f64 {
    0.9
}
fn default_rho() -> f64 {
    0.9
}
fn default_thresholds() -> Vec<f64> {
    vec![0.3, 0.05]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub schemes: Vec<String>,
    #[serde(default = "default_sweep_optimizers")]
    pub optimizers: Vec<String>,
    pub alphas: Vec<f64>,
    pub ks: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub epochs: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_sqrt_lo")]
    pub sqrt_lambda_lo: f64,
    #[serde(default = "default_sqrt_hi")]
    pub sqrt_lambda_hi: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub uniform_lambda: Option<f64>,
}

fn default_sweep_optimizers() -> Vec<String> {
    vec!["nesterov".into()]
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_threshold() -> f64 {
    0.3
}
fn default_metric() -> String {
    "d_align".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSection {
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default = "default_sqrt_lo")]
    pub sqrt_lambda_lo: f64,
    #[serde(default = "default_sqrt_hi")]
    pub sqrt_lambda_hi: f64,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
    #[serde(default = "default_grid")]
    pub alpha_count: usize,
    #[serde(default = "default_grid")]
    pub theta_count: usize,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        SurfaceSection {
            lambdas: None,
            sqrt_lambda_lo: default_sqrt_lo(),
            sqrt_lambda_hi: default_sqrt_hi(),
            alpha_max: default_alpha_max(),
            alpha_count: default_grid(),
            theta_count: default_grid(),
        }
    }
}

fn default_alpha_max() -> f64 {
    1.5
}
fn default_grid() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSection {
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    pub k_max: usize,
    /// Latent size at which the finite-difference probe cross-checks run.
    #[serde(default)]
    pub probe_k: Option<usize>,
    #[serde(default = "default_sqrt_lo")]
    pub sqrt_lambda_lo: f64,
    #[serde(default = "default_sqrt_hi")]
    pub sqrt_lambda_hi: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_k_min() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
        }
    }
}

fn default_out_dir() -> String {
    "out".into()
}

/// Top-level experiment description, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub run: Option<RunSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub surface: Option<SurfaceSection>,
    #[serde(default)]
    pub bounds: Option<BoundsSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Scheme and dataset resolution
// ---------------------------------------------------------------------------

/// √λ interpolation: endpoints `lo` and `hi` with the interior equally
/// spaced, squared into strictly increasing penalties.
pub fn interpolated_lambdas(lo: f64, hi: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::config("k", "must be positive"));
    }
    if lo <= 0.0 || (k > 1 && hi <= lo) {
        return Err(Error::config(
            "sqrt_lambda",
            format!("need 0 < lo < hi (got lo = {lo}, hi = {hi})"),
        ));
    }
    if k == 1 {
        return Ok(vec![lo * lo]);
    }
    Ok((0..k)
        .map(|i| {
            let s = lo + (hi - lo) * i as f64 / (k - 1) as f64;
            s * s
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct SchemeParams<'a> {
    uniform_lambda: Option<f64>,
    lambdas: Option<&'a [f64]>,
    sqrt_lo: f64,
    sqrt_hi: f64,
    rho: f64,
}

fn resolve_scheme(name: &str, k: usize, p: SchemeParams<'_>) -> Result<RegularizerSpec> {
    let scheme = match name {
        "none" => RegularizerSpec::None,
        "rag" => RegularizerSpec::Rag,
        "uniform" => RegularizerSpec::Uniform {
            lambda: p.uniform_lambda.unwrap_or(0.1),
        },
        "nonuniform" => {
            let lambda = match p.lambdas {
                Some(l) => l.to_vec(),
                None => interpolated_lambdas(p.sqrt_lo, p.sqrt_hi, k)?,
            };
            RegularizerSpec::NonUniform { lambda }
        }
        "nested_dropout_stochastic" => RegularizerSpec::NestedDropoutStochastic {
            prior: geometric_prior(p.rho, k)?,
        },
        "nested_dropout_deterministic" => RegularizerSpec::NestedDropoutDeterministic {
            prior: geometric_prior(p.rho, k)?,
        },
        other => {
            return Err(Error::config(
                "scheme",
                format!("unknown scheme `{other}`"),
            ))
        }
    };
    scheme.validate(k)?;
    Ok(scheme)
}

fn resolve_optimizer(name: &str) -> Result<OptimizerKind> {
    match name {
        "nesterov" => Ok(OptimizerKind::Nesterov),
        "adam" => Ok(OptimizerKind::Adam),
        "rag_plain" => Ok(OptimizerKind::RagPlain),
        other => Err(Error::config(
            "optimizer",
            format!("unknown optimizer `{other}`"),
        )),
    }
}

/// Build (or load) the dataset and an oracle spectrum with at least
/// `k_needed` components.
pub fn build_dataset(cfg: &DatasetConfig, k_needed: usize) -> Result<(DataMatrix, Spectrum)> {
    match cfg {
        DatasetConfig::Synthetic {
            m,
            n,
            seed,
            singular_values,
        } => {
            let r = (*m).min(*n);
            let sv = match singular_values {
                SingularValuesConfig::Linspace { hi, lo } => (0..r)
                    .map(|i| hi - (hi - lo) * i as f64 / (r.max(2) - 1) as f64)
                    .collect(),
                SingularValuesConfig::OneToM => (0..r).map(|i| (r - i) as f64).collect(),
                SingularValuesConfig::List { values } => values.clone(),
            };
            if k_needed > r {
                return Err(Error::config(
                    "k",
                    format!("k = {k_needed} exceeds min(m, n) = {r}"),
                ));
            }
            let spec = SyntheticSpec {
                m: *m,
                n: *n,
                k: r,
                singular_values: sv,
                seed: *seed,
            };
            let (x, spectrum) = make_synthetic(&spec)?;
            Ok((x, spectrum))
        }
        DatasetConfig::Csv { path } => {
            let x = load_dataset(path, DatasetFormat::CsvColumns)
                .map_err(|e| Error::config("dataset.path", e.to_string()))?
                .center();
            let s = spectrum_of(&x, k_needed)?;
            Ok((x, s))
        }
        DatasetConfig::Idx { path } => {
            let x = load_dataset(path, DatasetFormat::IdxImages)
                .map_err(|e| Error::config("dataset.path", e.to_string()))?
                .center();
            let s = spectrum_of(&x, k_needed)?;
            Ok((x, s))
        }
    }
}

// ---------------------------------------------------------------------------
// Fingerprints and CSV plumbing
// ---------------------------------------------------------------------------

/// FNV-1a over the canonical JSON serialization; collides only for
/// identical canonical configs.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_string(value).expect("config serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in canonical.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Shortest round-trip decimal form (bit-exact on re-parse).
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Fixed trace schema shared by every run artifact.
pub const TRACE_COLUMNS: &str =
    "epoch,recon_loss,total_loss,d_align,d_sub,nd,balance_residual,wall_time_s";

pub fn trace_to_csv(trace: &MetricTrace, include_timing: bool) -> String {
    let mut out = String::from(TRACE_COLUMNS);
    out.push('\n');
    for r in trace.rows() {
        let wall = if include_timing { r.wall_time_s } else { 0.0 };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            fmt_f64(r.recon_loss),
            fmt_f64(r.total_loss),
            fmt_f64(r.d_align),
            fmt_f64(r.d_sub),
            fmt_f64(r.nd),
            fmt_f64(r.balance_residual),
            fmt_f64(wall)
        );
    }
    out
}

pub fn surface_to_csv(rows: &[SurfaceRow]) -> String {
    let mut out = String::from("alpha,theta,x,y,loss\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.alpha),
            fmt_f64(r.theta),
            fmt_f64(r.x),
            fmt_f64(r.y),
            fmt_f64(r.loss)
        );
    }
    out
}

/// Parse a surface CSV back; used to verify artifacts round-trip bit-exactly.
pub fn surface_from_csv(text: &str) -> Result<Vec<SurfaceRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: "<surface csv>".into(),
                line: i + 1,
                msg: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                path: "<surface csv>".into(),
                line: i + 1,
                msg: format!("bad float `{s}`"),
            })
        };
        rows.push(SurfaceRow {
            alpha: parse(fields[0])?,
            theta: parse(fields[1])?,
            x: parse(fields[2])?,
            y: parse(fields[3])?,
            loss: parse(fields[4])?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Summary of one training run, serialized next to its trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub fingerprint: String,
    pub scheme: String,
    pub optimizer: String,
    pub alpha: f64,
    pub seed: u64,
    pub k: usize,
    pub diverged_at: Option<usize>,
    pub final_metrics: Vec<(String, f64)>,
    pub epochs_to_threshold: Vec<(String, Option<usize>)>,
    pub trace_path: String,
}

#[derive(Debug)]
pub struct TrainArtifacts {
    pub record: RunRecord,
    pub outcome: TrainOutcome,
    pub trace_path: PathBuf,
    pub record_path: PathBuf,
}

/// Resolve the output directory: explicit flag, then the environment
/// override, then the config value.
pub fn resolve_out_dir(flag: Option<&str>, cfg: &OutputSection) -> PathBuf {
    if let Some(dir) = flag {
        return PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(&cfg.dir)
}

fn train_config_from_run(run: &RunSection, k: usize) -> Result<(TrainConfig, RegularizerSpec)> {
    let scheme = resolve_scheme(
        &run.scheme,
        k,
        SchemeParams {
            uniform_lambda: run.uniform_lambda,
            lambdas: run.lambdas.as_deref(),
            sqrt_lo: run.sqrt_lambda_lo,
            sqrt_hi: run.sqrt_lambda_hi,
            rho: run.rho,
        },
    )?;
    let optimizer = match &run.optimizer {
        Some(name) => resolve_optimizer(name)?,
        None => match scheme {
            RegularizerSpec::Rag => OptimizerKind::RagPlain,
            _ => OptimizerKind::Nesterov,
        },
    };
    let config = TrainConfig {
        scheme: scheme.clone(),
        optimizer,
        alpha: run.alpha,
        momentum: run.momentum,
        adam_beta1: 0.9,
        adam_beta2: 0.999,
        adam_eps: 1e-8,
        epochs: run.epochs,
        batch_size: run.batch_size,
        init_std: run.init_std,
        seed: run.seed,
        eval_every: run.eval_every,
        stop_when: None,
    };
    Ok((config, scheme))
}

/// Resolve a `[run]` section into a [`TrainConfig`]; the entry point for
/// embedders that drive [`crate::optim::train`] directly.
pub fn resolve_run_config(run: &RunSection) -> Result<TrainConfig> {
    train_config_from_run(run, run.k).map(|(c, _)| c)
}

/// Run `[run]` from a config: trains, writes `train_<fp>.trace.csv` and
/// `train_<fp>.json`, and returns the artifacts. With `plot` set, also
/// renders `train_<fp>.svg` with the alignment and subspace curves.
pub fn run_train_with_plot(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    include_timing: bool,
    plot: bool,
) -> Result<TrainArtifacts> {
    let artifacts = run_train(cfg, out_dir, include_timing)?;
    if plot {
        let rows = artifacts.outcome.trace.rows();
        let series = [
            crate::plot::Series {
                label: "d_align",
                points: rows.iter().map(|r| (r.epoch as f64, r.d_align)).collect(),
            },
            crate::plot::Series {
                label: "d_sub",
                points: rows.iter().map(|r| (r.epoch as f64, r.d_sub)).collect(),
            },
        ];
        let title = format!(
            "{} / {} (alpha {})",
            artifacts.record.scheme, artifacts.record.optimizer, artifacts.record.alpha
        );
        let svg = crate::plot::line_plot_svg(&title, &series, true);
        write_file(
            &out_dir.join(format!("train_{}.svg", artifacts.record.fingerprint)),
            &svg,
        )?;
    }
    Ok(artifacts)
}

/// Run `[run]` from a config: trains, writes `train_<fp>.trace.csv` and
/// `train_<fp>.json`, and returns the artifacts.
pub fn run_train(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    include_timing: bool,
) -> Result<TrainArtifacts> {
    let run = cfg
        .run
        .as_ref()
        .ok_or_else(|| Error::config("run", "missing [run] section"))?;
    if run.k == 0 {
        return Err(Error::config("run.k", "must be positive"));
    }
    let (x, spectrum_full) = build_dataset(&cfg.dataset, run.k)?;
    let spectrum = spectrum_full.truncate(run.k)?;
    let (config, scheme) = train_config_from_run(run, run.k)?;

    let fp = fingerprint(&(&cfg.dataset, &config, run.k));
    let outcome = train(&x, &spectrum, &config)?;

    let trace_path = out_dir.join(format!("train_{fp}.trace.csv"));
    write_file(&trace_path, &trace_to_csv(&outcome.trace, include_timing))?;

    let final_metrics = outcome
        .trace
        .last()
        .map(|r| {
            vec![
                ("recon_loss".to_string(), r.recon_loss),
                ("total_loss".to_string(), r.total_loss),
                ("d_align".to_string(), r.d_align),
                ("d_sub".to_string(), r.d_sub),
                ("nd".to_string(), r.nd),
                ("balance_residual".to_string(), r.balance_residual),
            ]
        })
        .unwrap_or_default();
    let thresholds = run
        .thresholds
        .iter()
        .map(|t| {
            (
                fmt_f64(*t),
                epochs_to_threshold(&outcome.trace, MetricKind::DAlign, *t),
            )
        })
        .collect();

    let record = RunRecord {
        fingerprint: fp.clone(),
        scheme: scheme.name().to_string(),
        optimizer: config.optimizer.name().to_string(),
        alpha: config.alpha,
        seed: config.seed,
        k: run.k,
        diverged_at: outcome.diverged_at,
        final_metrics,
        epochs_to_threshold: thresholds,
        trace_path: trace_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let record_path = out_dir.join(format!("train_{fp}.json"));
    write_file(
        &record_path,
        &serde_json::to_string_pretty(&record).expect("record serializes"),
    )?;

    Ok(TrainArtifacts {
        record,
        outcome,
        trace_path,
        record_path,
    })
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub scheme: String,
    pub optimizer: String,
    pub k: usize,
    pub best_alpha: Option<f64>,
    /// `None` when no grid point reached the threshold.
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone)]
struct SweepJob {
    scheme: String,
    optimizer: String,
    k: usize,
    alpha: f64,
    seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
struct SweepJobResult {
    scheme: String,
    optimizer: String,
    k: usize,
    alpha: f64,
    /// Worst epochs-to-threshold across seeds; `None` when any seed missed.
    epochs: Option<usize>,
}

/// Cross product of schemes × optimizers × α grid × latent sizes: run every
/// cell, pick the best α (fewest epochs to threshold, ties to the smaller
/// α). Jobs fan out over `jobs` worker threads; the merged output is sorted,
/// so thread count never changes the artifact.
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: &Path, jobs: usize) -> Result<Vec<SweepCell>> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "missing [sweep] section"))?;
    if sweep.schemes.is_empty() || sweep.seeds.is_empty() {
        return Err(Error::config(
            "sweep",
            "schemes and seeds must be non-empty",
        ));
    }
    if sweep.alphas.iter().any(|&a| a <= 0.0) {
        return Err(Error::config("sweep.alphas", "grid must be positive"));
    }
    let metric = MetricKind::parse(&sweep.metric)?;
    let k_max = *sweep
        .ks
        .iter()
        .max()
        .ok_or_else(|| Error::config("sweep.ks", "must be non-empty"))?;

    let (x, spectrum_full) = build_dataset(&cfg.dataset, k_max)?;

    // Expand the job list.
    let mut jobs_list = Vec::new();
    for scheme_name in &sweep.schemes {
        for opt_name in &sweep.optimizers {
            // The rotation-augmented scheme carries its own update rule.
            let optimizer = if scheme_name == "rag" {
                "rag_plain".to_string()
            } else {
                opt_name.clone()
            };
            for &k in &sweep.ks {
                for &alpha in &sweep.alphas {
                    jobs_list.push(SweepJob {
                        scheme: scheme_name.clone(),
                        optimizer: optimizer.clone(),
                        k,
                        alpha,
                        seeds: sweep.seeds.clone(),
                    });
                }
            }
        }
    }
    // Deduplicate rag jobs when several optimizers were requested.
    jobs_list.sort_by(|a, b| {
        (&a.scheme, &a.optimizer, a.k, a.alpha)
            .partial_cmp(&(&b.scheme, &b.optimizer, b.k, b.alpha))
            .unwrap()
    });
    jobs_list.dedup_by(|a, b| {
        a.scheme == b.scheme && a.optimizer == b.optimizer && a.k == b.k && a.alpha == b.alpha
    });

    let results: Mutex<Vec<SweepJobResult>> = Mutex::new(Vec::new());
    let next: AtomicUsize = AtomicUsize::new(0);
    let workers = jobs.max(1).min(jobs_list.len().max(1));

    let run_job = |job: &SweepJob| -> Result<SweepJobResult> {
        let spectrum = spectrum_full.truncate(job.k)?;
        let scheme = resolve_scheme(
            &job.scheme,
            job.k,
            SchemeParams {
                uniform_lambda: sweep.uniform_lambda,
                lambdas: None,
                sqrt_lo: sweep.sqrt_lambda_lo,
                sqrt_hi: sweep.sqrt_lambda_hi,
                rho: sweep.rho,
            },
        )?;
        let optimizer = resolve_optimizer(&job.optimizer)?;
        let mut worst: Option<usize> = Some(0);
        for &seed in &job.seeds {
            let config = TrainConfig {
                scheme: scheme.clone(),
                optimizer,
                alpha: job.alpha,
                momentum: sweep.momentum,
                adam_beta1: 0.9,
                adam_beta2: 0.999,
                adam_eps: 1e-8,
                epochs: sweep.epochs,
                batch_size: sweep.batch_size,
                init_std: sweep.init_std,
                seed,
                eval_every: sweep.eval_every,
                stop_when: Some(StopRule {
                    metric,
                    threshold: sweep.threshold,
                }),
            };
            let outcome = train(&x, &spectrum, &config)?;
            let reached = if outcome.diverged_at.is_some() {
                None
            } else {
                epochs_to_threshold(&outcome.trace, metric, sweep.threshold)
            };
            worst = match (worst, reached) {
                (Some(w), Some(e)) => Some(w.max(e)),
                _ => None,
            };
        }
        Ok(SweepJobResult {
            scheme: job.scheme.clone(),
            optimizer: job.optimizer.clone(),
            k: job.k,
            alpha: job.alpha,
            epochs: worst,
        })
    };

    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for _ in 0..workers {
            handles.push(scope.spawn(|| -> Result<()> {
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= jobs_list.len() {
                        return Ok(());
                    }
                    let r = run_job(&jobs_list[i])?;
                    results.lock().expect("collector lock").push(r);
                }
            }));
        }
        for h in handles {
            h.join().expect("sweep worker panicked")?;
        }
        Ok(())
    })?;

    let mut all = results.into_inner().expect("collector lock");
    all.sort_by(|a, b| {
        (&a.scheme, &a.optimizer, a.k, a.alpha)
            .partial_cmp(&(&b.scheme, &b.optimizer, b.k, b.alpha))
            .unwrap()
    });

    // Best α per (scheme, optimizer, k): fewest epochs, ties to smaller α.
    let mut cells: Vec<SweepCell> = Vec::new();
    for r in &all {
        let key_matches = |c: &SweepCell| {
            c.scheme == r.scheme && c.optimizer == r.optimizer && c.k == r.k
        };
        match cells.iter_mut().find(|c| key_matches(c)) {
            None => cells.push(SweepCell {
                scheme: r.scheme.clone(),
                optimizer: r.optimizer.clone(),
                k: r.k,
                best_alpha: r.epochs.map(|_| r.alpha),
                epochs: r.epochs,
            }),
            Some(cell) => {
                let better = match (cell.epochs, r.epochs) {
                    (None, Some(_)) => true,
                    (Some(c), Some(n)) => n < c,
                    _ => false,
                };
                if better {
                    cell.best_alpha = Some(r.alpha);
                    cell.epochs = r.epochs;
                }
            }
        }
    }

    let mut csv = String::from("scheme,optimizer,k,best_alpha,epochs_to_threshold\n");
    for c in &cells {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            c.scheme,
            c.optimizer,
            c.k,
            c.best_alpha.map(fmt_f64).unwrap_or_else(|| "none".into()),
            c.epochs
                .map(|e| e.to_string())
                .unwrap_or_else(|| "none".into()),
        );
    }
    write_file(&out_dir.join("sweep.csv"), &csv)?;
    Ok(cells)
}

// ---------------------------------------------------------------------------
// surface
// ---------------------------------------------------------------------------

/// Evaluate the 2-D loss slice and write `surface.csv`.
pub fn run_surface(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<SurfaceRow>> {
    let section = cfg.surface.clone().unwrap_or_default();
    let (x, spectrum_full) = build_dataset(&cfg.dataset, 2)?;
    let spectrum = spectrum_full.truncate(2)?;
    let lambdas = match &section.lambdas {
        Some(l) => l.clone(),
        None => interpolated_lambdas(section.sqrt_lambda_lo, section.sqrt_lambda_hi, 2)?,
    };
    if lambdas.len() != 2 {
        return Err(Error::config("surface.lambdas", "need exactly 2 penalties"));
    }
    let alphas: Vec<f64> = (0..section.alpha_count)
        .map(|i| section.alpha_max * i as f64 / (section.alpha_count.max(2) - 1) as f64)
        .collect();
    let thetas: Vec<f64> = (0..section.theta_count)
        .map(|i| {
            -std::f64::consts::PI
                + std::f64::consts::TAU * i as f64 / (section.theta_count.max(2) - 1) as f64
        })
        .collect();
    let rows = loss_surface_slice(&x, &spectrum, &lambdas, &alphas, &thetas)?;
    write_file(&out_dir.join("surface.csv"), &surface_to_csv(&rows))?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BoundsRow {
    pub k: usize,
    pub nonuniform_lower_bound: f64,
    pub nd_lower_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeRow {
    pub objective: String,
    pub direction: String,
    pub pair: String,
    pub closed_form: f64,
    pub fd: Option<f64>,
    pub gate: &'static str,
}

#[derive(Debug)]
pub struct BoundsReport {
    pub rows: Vec<BoundsRow>,
    pub probes: Vec<ProbeRow>,
}

impl BoundsReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>4}  {:>24}  {:>24}", "k", "nonuniform_bound", "nd_bound");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>4}  {:>24}  {:>24}",
                r.k,
                fmt_f64(r.nonuniform_lower_bound),
                fmt_f64(r.nd_lower_bound)
            );
        }
        if self.rows.iter().any(|r| r.k == 2) {
            let _ = writeln!(
                out,
                "note: the k = 2 non-uniform bound is degenerate (its interior sum is empty)"
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12} {:<9} {:<7} {:>22} {:>22} {:>11}",
            "objective", "direction", "pair", "closed_form", "fd_probe", "gate"
        );
        for p in &self.probes {
            let _ = writeln!(
                out,
                "{:<12} {:<9} {:<7} {:>22} {:>22} {:>11}",
                p.objective,
                p.direction,
                p.pair,
                fmt_f64(p.closed_form),
                p.fd.map(fmt_f64).unwrap_or_else(|| "-".into()),
                p.gate
            );
        }
        out
    }
}

/// Evaluate both condition-number lower bounds over a k sweep and cross-check
/// the closed-form Rayleigh quotients with finite differences at the
/// constructed optima. Writes `bounds.csv` and `probes.csv`.
pub fn run_bounds(cfg: &ExperimentConfig, out_dir: &Path) -> Result<BoundsReport> {
    let section = cfg
        .bounds
        .as_ref()
        .ok_or_else(|| Error::config("bounds", "missing [bounds] section"))?;
    if section.k_min < 2 || section.k_max < section.k_min {
        return Err(Error::config("bounds.k_min", "need 2 <= k_min <= k_max"));
    }
    let (x, spectrum_full) = build_dataset(&cfg.dataset, section.k_max)?;

    let mut rows = Vec::new();
    for k in section.k_min..=section.k_max {
        rows.push(BoundsRow {
            k,
            nonuniform_lower_bound: nonuniform_cond_lower_bound(&spectrum_full, k)?,
            nd_lower_bound: nd_cond_lower_bound(&spectrum_full, k)?,
        });
    }

    let probe_k = section.probe_k.unwrap_or(section.k_max.min(4)).max(2);
    let spectrum = spectrum_full.truncate(probe_k)?;
    let sk2 = spectrum.sigma2()[probe_k - 1];
    let mut sqrt_hi = section.sqrt_lambda_hi;
    if sqrt_hi * sqrt_hi >= sk2 {
        sqrt_hi = (0.81 * sk2).sqrt();
    }
    let lambda = interpolated_lambdas(section.sqrt_lambda_lo, sqrt_hi, probe_k)?;
    let prior = geometric_prior(section.rho, probe_k)?;

    let mut probes = Vec::new();
    // Non-uniform probes at the constructed optimum.
    match global_optimum(&spectrum, &lambda, &vec![1.0; probe_k])
        .and_then(|w| CurvatureProbe::nonuniform(&x, &lambda, w.clone()).map(|p| (w, p)))
    {
        Ok((w, probe)) => {
            let (scaling_cf, _) = closed_form_quotients(&spectrum, &lambda, 1, 0)?;
            probes.push(ProbeRow {
                objective: "nonuniform".into(),
                direction: "scaling".into(),
                pair: "0".into(),
                closed_form: scaling_cf,
                fd: Some(rayleigh_fd(&probe, &scaling_direction(&w))?),
                gate: "ok",
            });
            for i in 1..probe_k {
                let j = i - 1;
                let (_, rot_cf) = closed_form_quotients(&spectrum, &lambda, i, j)?;
                let dir = rotation_tangent(&w, i, j)?;
                probes.push(ProbeRow {
                    objective: "nonuniform".into(),
                    direction: "rotation".into(),
                    pair: format!("{i}-{j}"),
                    closed_form: rot_cf,
                    fd: Some(rayleigh_fd(&probe, &dir)?),
                    gate: "ok",
                });
            }
        }
        Err(Error::NotStationary { .. }) => {
            let (scaling_cf, _) = closed_form_quotients(&spectrum, &lambda, 1, 0)?;
            probes.push(ProbeRow {
                objective: "nonuniform".into(),
                direction: "scaling".into(),
                pair: "0".into(),
                closed_form: scaling_cf,
                fd: None,
                gate: "gate_failed",
            });
        }
        Err(e) => return Err(e),
    }
    // Nested-dropout probes at unit scale.
    match crate::landscape::nd_global_optimum(&spectrum, &vec![1.0; probe_k])
        .and_then(|w| CurvatureProbe::det_nd(&x, &prior, w.clone()).map(|p| (w, p)))
    {
        Ok((w, probe)) => {
            let (scaling_cf, rot_cf) =
                crate::landscape::nd_closed_form_quotients(&spectrum, &prior, 0, 1)?;
            probes.push(ProbeRow {
                objective: "nested".into(),
                direction: "scaling".into(),
                pair: "0".into(),
                closed_form: scaling_cf,
                fd: Some(rayleigh_fd(&probe, &scaling_direction(&w))?),
                gate: "ok",
            });
            probes.push(ProbeRow {
                objective: "nested".into(),
                direction: "rotation".into(),
                pair: "0-1".into(),
                closed_form: rot_cf,
                fd: Some(rayleigh_fd(&probe, &rotation_tangent(&w, 0, 1)?)?),
                gate: "ok",
            });
        }
        Err(Error::NotStationary { .. }) => {
            let (scaling_cf, _) =
                crate::landscape::nd_closed_form_quotients(&spectrum, &prior, 0, 1)?;
            probes.push(ProbeRow {
                objective: "nested".into(),
                direction: "scaling".into(),
                pair: "0".into(),
                closed_form: scaling_cf,
                fd: None,
                gate: "gate_failed",
            });
        }
        Err(e) => return Err(e),
    }

    let mut bounds_csv = String::from("k,nonuniform_lower_bound,nd_lower_bound\n");
    for r in &rows {
        let _ = writeln!(
            bounds_csv,
            "{},{},{}",
            r.k,
            fmt_f64(r.nonuniform_lower_bound),
            fmt_f64(r.nd_lower_bound)
        );
    }
    write_file(&out_dir.join("bounds.csv"), &bounds_csv)?;

    let mut probes_csv = String::from("objective,direction,pair,closed_form,fd,gate\n");
    for p in &probes {
        let _ = writeln!(
            probes_csv,
            "{},{},{},{},{},{}",
            p.objective,
            p.direction,
            p.pair,
            fmt_f64(p.closed_form),
            p.fd.map(fmt_f64).unwrap_or_else(|| "-".into()),
            p.gate
        );
    }
    write_file(&out_dir.join("probes.csv"), &probes_csv)?;

    Ok(BoundsReport { rows, probes })
}

// ---------------------------------------------------------------------------
// checkgrad
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CheckgradReport {
    pub per_scheme: Vec<(String, f64)>,
    pub tolerance: f64,
}

impl CheckgradReport {
    pub fn passed(&self) -> bool {
        self.per_scheme.iter().all(|(_, err)| *err < self.tolerance)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (scheme, err) in &self.per_scheme {
            let verdict = if *err < self.tolerance { "ok" } else { "FAIL" };
            let _ = writeln!(out, "{scheme:<32} max_rel_err {err:.3e}  {verdict}");
        }
        out
    }
}

/// Finite-difference sweep over all five objectives on seeded random
/// instances (dims ≤ 8×32, latent ≤ 4). Returns the max relative error per
/// scheme.
pub fn run_checkgrad(instances: usize, eps: f64, seed: u64) -> Result<CheckgradReport> {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let mut worst: Vec<(String, f64)> = [
        "recon",
        "uniform",
        "nonuniform",
        "nested_dropout_deterministic",
        "nested_dropout_stochastic",
    ]
    .iter()
    .map(|s| (s.to_string(), 0.0))
    .collect();

    for inst in 0..instances {
        let m = rng.random_range(2..=8usize);
        let k = rng.random_range(1..=4usize.min(m));
        let n = rng.random_range(4..=32usize);
        let raw = crate::Mat::from_fn(m, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let x = crate::data::center(raw)?;
        let w = WeightPair::random_normal(m, k, 0.6, seed ^ (inst as u64) << 1);

        let lambda: Vec<f64> = (0..k).map(|i| 0.05 + 0.11 * i as f64).collect();
        let prior = geometric_prior(0.8, k)?;
        let schemes = [
            RegularizerSpec::None,
            RegularizerSpec::Uniform { lambda: 0.17 },
            RegularizerSpec::NonUniform { lambda },
            RegularizerSpec::NestedDropoutDeterministic {
                prior: prior.clone(),
            },
            RegularizerSpec::NestedDropoutStochastic { prior },
        ];
        for (slot, scheme) in schemes.iter().enumerate() {
            let err = gradcheck::check_scheme(scheme, &w, &x, eps, seed ^ 0xabcd ^ inst as u64)?;
            if err > worst[slot].1 {
                worst[slot].1 = err;
            }
        }
    }
    Ok(CheckgradReport {
        per_scheme: worst,
        tolerance: 1e-5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_cfg() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
            [dataset]
            source = "synthetic"
            m = 6
            n = 48
            seed = 1
            singular_values = { kind = "linspace", hi = 3.0, lo = 0.5 }

            [run]
            k = 2
            scheme = "nonuniform"
            alpha = 0.01
            epochs = 30
            eval_every = 10
            seed = 4

            [output]
            dir = "unused"
            "#,
        )
        .unwrap()
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = synthetic_cfg();
        assert!(matches!(cfg.dataset, DatasetConfig::Synthetic { m: 6, .. }));
        let run = cfg.run.as_ref().unwrap();
        assert_eq!(run.scheme, "nonuniform");
        assert_eq!(run.thresholds, vec![0.3, 0.05]);
    }

    #[test]
    fn lambda_interpolation_is_strictly_increasing() {
        let l = interpolated_lambdas(0.1, 0.9, 5).unwrap();
        assert_eq!(l.len(), 5);
        assert!((l[0] - 0.01).abs() < 1e-15);
        assert!((l[4] - 0.81).abs() < 1e-15);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
        let single = interpolated_lambdas(0.1, 0.9, 1).unwrap();
        assert!((single[0] - 0.01).abs() < 1e-15);
        assert!(interpolated_lambdas(0.0, 0.9, 3).is_err());
        assert!(interpolated_lambdas(0.5, 0.2, 3).is_err());
    }

    #[test]
    fn fingerprints_are_stable_and_distinguish_configs() {
        let cfg = synthetic_cfg();
        let a = fingerprint(&cfg);
        let b = fingerprint(&cfg);
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.run.as_mut().unwrap().seed = 5;
        assert_ne!(a, fingerprint(&other));
    }

    #[test]
    fn run_train_writes_reproducible_artifacts() {
        let cfg = synthetic_cfg();
        let dir = std::env::temp_dir().join("lae_harness_train");
        let _ = std::fs::remove_dir_all(&dir);
        let a = run_train(&cfg, &dir, false).unwrap();
        let first = std::fs::read_to_string(&a.trace_path).unwrap();
        let b = run_train(&cfg, &dir, false).unwrap();
        let second = std::fs::read_to_string(&b.trace_path).unwrap();
        assert_eq!(first, second);
        assert_eq!(a.record.fingerprint, b.record.fingerprint);
        assert!(a.outcome.diverged_at.is_none());
        // 0, 10, 20, 30.
        assert_eq!(a.outcome.trace.rows().len(), 4);
    }

    #[test]
    fn missing_run_section_names_the_field() {
        let mut cfg = synthetic_cfg();
        cfg.run = None;
        let err = run_train(&cfg, &std::env::temp_dir(), false).unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "run"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn surface_csv_round_trips_bit_exactly() {
        let rows = vec![
            SurfaceRow {
                alpha: 0.1,
                theta: -3.04,
                x: 0.0993,
                y: -0.01,
                loss: 1.234567890123456789,
            },
            SurfaceRow {
                alpha: 1.0 / 3.0,
                theta: std::f64::consts::PI,
                x: f64::MIN_POSITIVE,
                y: -0.0,
                loss: 17.25,
            },
        ];
        let csv = surface_to_csv(&rows);
        let back = surface_from_csv(&csv).unwrap();
        assert_eq!(rows.len(), back.len());
        for (a, b) in rows.iter().zip(back.iter()) {
            assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
            assert_eq!(a.theta.to_bits(), b.theta.to_bits());
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        }
    }

    #[test]
    fn checkgrad_passes_and_detects_injected_bugs() {
        let report = run_checkgrad(4, 1e-5, 99).unwrap();
        assert!(report.passed(), "{}", report.render());

        // Mutation check: a sign bug in an analytic gradient must be caught
        // by the same comparison machinery.
        let (x, _) = make_synthetic(&SyntheticSpec {
            m: 4,
            n: 12,
            k: 2,
            singular_values: vec![2.0, 1.0, 0.5, 0.25],
            seed: 9,
        })
        .unwrap();
        let w = WeightPair::random_normal(4, 2, 0.5, 3);
        let good = crate::objective::eval_recon(&w, &x).unwrap();
        let (f1, f2) = gradcheck::fd_gradients(
            |p| crate::objective::eval_recon(p, &x).unwrap().loss,
            &w,
            1e-5,
        );
        let sane = gradcheck::relative_error((&good.grad_w1, &good.grad_w2), (&f1, &f2));
        assert!(sane < 1e-6);
        let buggy = -&good.grad_w1;
        let detected = gradcheck::relative_error((&buggy, &good.grad_w2), (&f1, &f2));
        assert!(detected > 1e-2, "sign bug slipped through: {detected}");
    }

    #[test]
    fn uniform_sweep_cell_reports_none() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            [dataset]
            source = "synthetic"
            m = 6
            n = 48
            seed = 1
            singular_values = { kind = "linspace", hi = 3.0, lo = 0.5 }

            [sweep]
            schemes = ["uniform"]
            alphas = [0.02]
            ks = [4]
            seeds = [0]
            epochs = 800
            eval_every = 25
            threshold = 0.3
            uniform_lambda = 0.1
            "#,
        )
        .unwrap();
        let dir = std::env::temp_dir().join("lae_harness_uniform_none");
        let _ = std::fs::remove_dir_all(&dir);
        let cells = run_sweep(&cfg, &dir, 1).unwrap();
        assert_eq!(cells.len(), 1);
        assert!(cells[0].epochs.is_none());
        assert!(cells[0].best_alpha.is_none());
        let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
        assert!(csv.contains("uniform,nesterov,4,none,none"), "{csv}");
    }

    #[test]
    fn sweep_output_is_independent_of_worker_count() {
        let toml = r#"
            [dataset]
            source = "synthetic"
            m = 6
            n = 48
            seed = 1
            singular_values = { kind = "linspace", hi = 3.0, lo = 0.5 }

            [sweep]
            schemes = ["rag", "nested_dropout_deterministic"]
            alphas = [0.02, 0.05]
            ks = [2, 3]
            seeds = [0]
            epochs = 400
            eval_every = 25
            threshold = 0.3
            "#;
        let cfg = ExperimentConfig::from_toml(toml).unwrap();
        let dir1 = std::env::temp_dir().join("lae_harness_jobs1");
        let dir4 = std::env::temp_dir().join("lae_harness_jobs4");
        let _ = std::fs::remove_dir_all(&dir1);
        let _ = std::fs::remove_dir_all(&dir4);
        run_sweep(&cfg, &dir1, 1).unwrap();
        run_sweep(&cfg, &dir4, 4).unwrap();
        let a = std::fs::read(dir1.join("sweep.csv")).unwrap();
        let b = std::fs::read(dir4.join("sweep.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_surface_grid_has_expected_shape() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            [dataset]
            source = "synthetic"
            m = 6
            n = 48
            seed = 1
            singular_values = { kind = "linspace", hi = 2.0, lo = 0.4 }

            [surface]
            "#,
        )
        .unwrap();
        let dir = std::env::temp_dir().join("lae_harness_surface");
        let _ = std::fs::remove_dir_all(&dir);
        let rows = run_surface(&cfg, &dir).unwrap();
        assert_eq!(rows.len(), 101 * 101);
        // Radius-zero column is constant in theta.
        let origin: Vec<_> = rows.iter().filter(|r| r.alpha == 0.0).collect();
        assert!(origin.len() == 101);
        let l0 = origin[0].loss;
        assert!(origin.iter().all(|r| (r.loss - l0).abs() <= 1e-12 * l0.max(1.0)));
        // Minimum sits at alpha ~ 1, theta ~ 0 mod pi.
        let min = rows
            .iter()
            .min_by(|a, b| a.loss.partial_cmp(&b.loss).unwrap())
            .unwrap();
        assert!((min.alpha - 1.0).abs() <= 0.016, "alpha* {}", min.alpha);
        let fold = min
            .theta
            .abs()
            .min((std::f64::consts::PI - min.theta.abs()).abs());
        assert!(fold <= 0.07, "theta* {}", min.theta);
    }

    #[test]
    fn train_plot_artifact_is_emitted() {
        let cfg = synthetic_cfg();
        let dir = std::env::temp_dir().join("lae_harness_plot");
        let _ = std::fs::remove_dir_all(&dir);
        let artifacts = run_train_with_plot(&cfg, &dir, false, true).unwrap();
        let svg_path = dir.join(format!("train_{}.svg", artifacts.record.fingerprint));
        let svg = std::fs::read_to_string(svg_path).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("d_align"));
    }

    #[test]
    fn sweep_ties_resolve_to_the_smaller_alpha() {
        // One coarse evaluation point: every converging alpha crosses the
        // threshold at the same recorded epoch, so the tie rule decides.
        let cfg = ExperimentConfig::from_toml(
            r#"
            [dataset]
            source = "synthetic"
            m = 6
            n = 48
            seed = 1
            singular_values = { kind = "linspace", hi = 3.0, lo = 0.5 }

            [sweep]
            schemes = ["rag"]
            alphas = [0.06, 0.03]
            ks = [2]
            seeds = [0]
            epochs = 200
            eval_every = 200
            threshold = 0.3
            "#,
        )
        .unwrap();
        let dir = std::env::temp_dir().join("lae_harness_tie");
        let _ = std::fs::remove_dir_all(&dir);
        let cells = run_sweep(&cfg, &dir, 1).unwrap();
        assert_eq!(cells[0].epochs, Some(200));
        assert_eq!(cells[0].best_alpha, Some(0.03));
    }

    #[test]
    fn idx_file_dataset_flows_through_training() {
        use rand::prelude::*;
        let dir = std::env::temp_dir().join("lae_harness_idx");
        std::fs::create_dir_all(&dir).unwrap();
        let idx_path = dir.join("digits.idx");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&40u32.to_be_bytes()); // images
        bytes.extend_from_slice(&3u32.to_be_bytes()); // rows
        bytes.extend_from_slice(&3u32.to_be_bytes()); // cols
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        bytes.extend((0..40 * 9).map(|_| rng.random_range(0..=255u32) as u8));
        std::fs::write(&idx_path, bytes).unwrap();

        let cfg = ExperimentConfig::from_toml(&format!(
            r#"
            [dataset]
            source = "idx"
            path = "{}"

            [run]
            k = 2
            scheme = "rag"
            alpha = 0.000002
            epochs = 40
            eval_every = 20
            seed = 2
            "#,
            idx_path.display()
        ))
        .unwrap();
        let out = run_train(&cfg, &dir, false).unwrap();
        assert!(out.outcome.diverged_at.is_none());
        assert_eq!(out.outcome.trace.rows().len(), 3);
        assert_eq!(out.record.k, 2);
    }

    #[test]
    fn sweep_single_cell_matches_direct_train() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            [dataset]
            source = "synthetic"
            m = 6
            n = 48
            seed = 1
            singular_values = { kind = "linspace", hi = 3.0, lo = 0.5 }

            [sweep]
            schemes = ["rag"]
            alphas = [0.05]
            ks = [2]
            seeds = [4]
            epochs = 200
            eval_every = 10
            threshold = 0.3
            "#,
        )
        .unwrap();
        let dir = std::env::temp_dir().join("lae_harness_sweep");
        let _ = std::fs::remove_dir_all(&dir);
        let cells = run_sweep(&cfg, &dir, 1).unwrap();
        assert_eq!(cells.len(), 1);
        let cell = &cells[0];
        assert_eq!(cell.scheme, "rag");
        assert_eq!(cell.optimizer, "rag_plain");

        // The same cell trained directly.
        let (x, s) = build_dataset(&cfg.dataset, 2).unwrap();
        let config = TrainConfig {
            scheme: RegularizerSpec::Rag,
            optimizer: OptimizerKind::RagPlain,
            alpha: 0.05,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 200,
            batch_size: None,
            init_std: 1e-2,
            seed: 4,
            eval_every: 10,
            stop_when: Some(StopRule {
                metric: MetricKind::DAlign,
                threshold: 0.3,
            }),
        };
        let outcome = train(&x, &s.truncate(2).unwrap(), &config).unwrap();
        let want = epochs_to_threshold(&outcome.trace, MetricKind::DAlign, 0.3);
        assert_eq!(cell.epochs, want);
    }
}
