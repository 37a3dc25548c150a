//! Nesterov-momentum and Adam steps, plus the full- and mini-batch training
//! loops that drive any objective or the rotation-augmented update.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Provenance, Spectrum};
use crate::error::{Error, Result};
use crate::metrics::{axis_alignment_distance, balance_residual, non_diagonality, subspace_distance};
use crate::objective::{eval_det_nd, eval_recon, evaluate, RegularizerSpec, WeightPair};
use crate::rag::rag_step;
use crate::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Nesterov,
    Adam,
    /// Rotation-augmented gradient applied directly, without momentum or
    /// adaptive scaling; only pairs with the `rag` scheme.
    RagPlain,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Nesterov => "nesterov",
            OptimizerKind::Adam => "adam",
            OptimizerKind::RagPlain => "rag_plain",
        }
    }
}

/// Early-stop rule: end the run at the first evaluation where the metric
/// drops to the threshold (the crossing row is still recorded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub metric: MetricKind,
    pub threshold: f64,
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scheme: RegularizerSpec,
    pub optimizer: OptimizerKind,
    pub alpha: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    pub epochs: usize,
    /// `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub stop_when: Option<StopRule>,
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_init_std() -> f64 {
    1e-2
}
fn default_eval_every() -> usize {
    1
}

impl TrainConfig {
    /// A full-batch configuration with the stock hyperparameters (momentum
    /// 0.9, Adam (0.9, 0.999, 1e-8), init std 1e-2, evaluation every epoch).
    pub fn new(
        scheme: RegularizerSpec,
        optimizer: OptimizerKind,
        alpha: f64,
        epochs: usize,
        seed: u64,
    ) -> Self {
        TrainConfig {
            scheme,
            optimizer,
            alpha,
            momentum: default_momentum(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            epochs,
            batch_size: None,
            init_std: default_init_std(),
            seed,
            eval_every: default_eval_every(),
            stop_when: None,
        }
    }

    pub fn validate(&self, k: usize, n: usize) -> Result<()> {
        if self.alpha <= 0.0 || !self.alpha.is_finite() {
            return Err(Error::config("alpha", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        if self.init_std <= 0.0 {
            return Err(Error::config("init_std", "must be positive"));
        }
        if let Some(b) = self.batch_size {
            if b == 0 || b > n {
                return Err(Error::config(
                    "batch_size",
                    format!("must lie in 1..={n}"),
                ));
            }
        }
        let is_rag_scheme = matches!(self.scheme, RegularizerSpec::Rag);
        let is_rag_opt = matches!(self.optimizer, OptimizerKind::RagPlain);
        if is_rag_scheme != is_rag_opt {
            return Err(Error::config(
                "optimizer",
                "rag_plain pairs only with scheme = rag (and vice versa)",
            ));
        }
        self.scheme.validate(k)?;
        Ok(())
    }
}

/// Columns a trace row carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    ReconLoss,
    TotalLoss,
    DAlign,
    DSub,
    Nd,
    BalanceResidual,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::ReconLoss => "recon_loss",
            MetricKind::TotalLoss => "total_loss",
            MetricKind::DAlign => "d_align",
            MetricKind::DSub => "d_sub",
            MetricKind::Nd => "nd",
            MetricKind::BalanceResidual => "balance_residual",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "recon_loss" => MetricKind::ReconLoss,
            "total_loss" => MetricKind::TotalLoss,
            "d_align" => MetricKind::DAlign,
            "d_sub" => MetricKind::DSub,
            "nd" => MetricKind::Nd,
            "balance_residual" => MetricKind::BalanceResidual,
            other => return Err(Error::invalid(format!("unknown metric `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub recon_loss: f64,
    pub total_loss: f64,
    pub d_align: f64,
    pub d_sub: f64,
    pub nd: f64,
    pub balance_residual: f64,
    /// Measured wall time; excluded from determinism comparisons and zeroed
    /// in artifacts unless timing is explicitly requested.
    pub wall_time_s: f64,
}

impl TraceRow {
    pub fn metric(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::ReconLoss => self.recon_loss,
            MetricKind::TotalLoss => self.total_loss,
            MetricKind::DAlign => self.d_align,
            MetricKind::DSub => self.d_sub,
            MetricKind::Nd => self.nd,
            MetricKind::BalanceResidual => self.balance_residual,
        }
    }
}

/// Per-epoch evaluation records for one run. Epochs are strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTrace {
    rows: Vec<TraceRow>,
}

impl MetricTrace {
    pub fn push(&mut self, row: TraceRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.epoch <= last.epoch {
                return Err(Error::invalid("trace epochs must strictly increase"));
            }
        }
        let vals = [
            row.recon_loss,
            row.total_loss,
            row.d_align,
            row.d_sub,
            row.nd,
            row.balance_residual,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trace values must be finite"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The same trace with wall times dropped; this is the projection any
    /// determinism comparison uses.
    pub fn without_wall_time(&self) -> MetricTrace {
        let rows = self
            .rows
            .iter()
            .map(|r| TraceRow {
                wall_time_s: 0.0,
                ..*r
            })
            .collect();
        MetricTrace { rows }
    }
}

/// First recorded epoch at which `metric ≤ threshold`, if any.
pub fn epochs_to_threshold(
    trace: &MetricTrace,
    metric: MetricKind,
    threshold: f64,
) -> Option<usize> {
    trace
        .rows
        .iter()
        .find(|r| r.metric(metric) <= threshold)
        .map(|r| r.epoch)
}

/// Velocity state for Nesterov momentum, lookahead-gradient form:
/// `v ← μ v - α ∇f(w + μ v)`, then `w ← w + v`.
#[derive(Debug, Clone)]
pub struct NesterovState {
    v1: Mat,
    v2: Mat,
}

impl NesterovState {
    pub fn zeros(w: &WeightPair) -> Self {
        NesterovState {
            v1: Mat::zeros(w.k(), w.m()),
            v2: Mat::zeros(w.m(), w.k()),
        }
    }

    /// The point `w + μ v` whose gradient feeds [`nesterov_step`].
    pub fn lookahead(&self, w: &WeightPair, momentum: f64) -> WeightPair {
        WeightPair::new(
            w.w1() + momentum * &self.v1,
            w.w2() + momentum * &self.v2,
        )
        .expect("lookahead preserves shapes")
    }

    pub fn velocity_norm(&self) -> f64 {
        (self.v1.norm_squared() + self.v2.norm_squared()).sqrt()
    }
}

/// Apply one Nesterov update given gradients evaluated at the lookahead
/// point. With `momentum = 0` this is exactly plain gradient descent.
pub fn nesterov_step(
    w: &WeightPair,
    state: &mut NesterovState,
    grads: (&Mat, &Mat),
    alpha: f64,
    momentum: f64,
) -> WeightPair {
    state.v1 = momentum * &state.v1 - alpha * grads.0;
    state.v2 = momentum * &state.v2 - alpha * grads.1;
    WeightPair::new(w.w1() + &state.v1, w.w2() + &state.v2).expect("step preserves shapes")
}

/// First/second-moment state for Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    m1: Mat,
    v1: Mat,
    m2: Mat,
    v2: Mat,
    t: u32,
}

impl AdamState {
    pub fn zeros(w: &WeightPair) -> Self {
        AdamState {
            m1: Mat::zeros(w.k(), w.m()),
            v1: Mat::zeros(w.k(), w.m()),
            m2: Mat::zeros(w.m(), w.k()),
            v2: Mat::zeros(w.m(), w.k()),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u32 {
        self.t
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    w: &WeightPair,
    state: &mut AdamState,
    grads: (&Mat, &Mat),
    alpha: f64,
    betas: (f64, f64),
    eps: f64,
) -> WeightPair {
    state.t += 1;
    let (b1, b2) = betas;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);

    let update = |m: &mut Mat, v: &mut Mat, g: &Mat, out: &Mat| -> Mat {
        let mut new = out.clone();
        for j in 0..g.ncols() {
            for i in 0..g.nrows() {
                let gij = g[(i, j)];
                m[(i, j)] = b1 * m[(i, j)] + (1.0 - b1) * gij;
                v[(i, j)] = b2 * v[(i, j)] + (1.0 - b2) * gij * gij;
                let mhat = m[(i, j)] / bc1;
                let vhat = v[(i, j)] / bc2;
                new[(i, j)] -= alpha * mhat / (vhat.sqrt() + eps);
            }
        }
        new
    };
    let w1 = update(&mut state.m1, &mut state.v1, grads.0, w.w1());
    let w2 = update(&mut state.m2, &mut state.v2, grads.1, w.w2());
    WeightPair::new(w1, w2).expect("step preserves shapes")
}

/// Shuffled index batches for one epoch: every sample exactly once.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size).map(|c| c.to_vec()).collect()
}

fn column_subset(x: &DataMatrix, cols: &[usize]) -> DataMatrix {
    let mut sub = Mat::zeros(x.m(), cols.len());
    for (j, &c) in cols.iter().enumerate() {
        sub.set_column(j, &x.values().column(c));
    }
    DataMatrix::new(sub, Provenance::InMemory).expect("finite subset")
}

/// Result of a training run. `diverged_at` is set when a non-finite loss or
/// an exploding weight norm aborted the run; the trace then ends at the last
/// finite evaluation.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: WeightPair,
    pub trace: MetricTrace,
    pub diverged_at: Option<usize>,
}

const DIVERGENCE_NORM: f64 = 1e8;

/// Train an autoencoder on `x` for `config.epochs` epochs, recording metrics
/// against the oracle `spectrum` every `eval_every` epochs (plus epoch 0 and
/// the final epoch). The latent dimension is `spectrum.k()`. Runs are
/// bit-reproducible for a fixed `(config, seed)`.
pub fn train(x: &DataMatrix, spectrum: &Spectrum, config: &TrainConfig) -> Result<TrainOutcome> {
    let k = spectrum.k();
    config.validate(k, x.n())?;
    if spectrum.m() != x.m() {
        return Err(Error::ShapeMismatch {
            context: "spectrum vs data",
            expected: format!("{} features", x.m()),
            got: format!("{}", spectrum.m()),
        });
    }

    let mut w = WeightPair::random_normal(x.m(), k, config.init_std, config.seed);
    // Separate stream for mask draws and batch shuffles.
    let mut run_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);

    let started = Instant::now();
    let mut trace = MetricTrace::default();
    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6a09_e667_f3bc_c909);
    record_row(
        &mut trace,
        0,
        &w,
        x,
        spectrum,
        &config.scheme,
        &mut eval_rng,
        &started,
    )?;

    let mut nesterov = NesterovState::zeros(&w);
    let mut adam = AdamState::zeros(&w);
    let mut diverged_at = None;

    'epochs: for epoch in 1..=config.epochs {
        let batches: Vec<Option<Vec<usize>>> = match config.batch_size {
            None => vec![None],
            Some(b) if b >= x.n() => vec![None],
            Some(b) => epoch_batches(x.n(), b, &mut run_rng)
                .into_iter()
                .map(Some)
                .collect(),
        };

        for batch in batches {
            let owned;
            let data: &DataMatrix = match &batch {
                None => x,
                Some(cols) => {
                    owned = column_subset(x, cols);
                    &owned
                }
            };
            let stepped = match config.optimizer {
                OptimizerKind::RagPlain => rag_step(&w, data, config.alpha),
                OptimizerKind::Nesterov => {
                    let look = nesterov.lookahead(&w, config.momentum);
                    evaluate(&config.scheme, &look, data, &mut run_rng).map(|v| {
                        nesterov_step(
                            &w,
                            &mut nesterov,
                            (&v.grad_w1, &v.grad_w2),
                            config.alpha,
                            config.momentum,
                        )
                    })
                }
                OptimizerKind::Adam => {
                    evaluate(&config.scheme, &w, data, &mut run_rng).map(|v| {
                        adam_step(
                            &w,
                            &mut adam,
                            (&v.grad_w1, &v.grad_w2),
                            config.alpha,
                            (config.adam_beta1, config.adam_beta2),
                            config.adam_eps,
                        )
                    })
                }
            };
            match stepped {
                Ok(next) if next.is_finite() && next.norm() <= DIVERGENCE_NORM => w = next,
                _ => {
                    diverged_at = Some(epoch);
                    break 'epochs;
                }
            }
        }

        if epoch % config.eval_every == 0 || epoch == config.epochs {
            if record_row(
                &mut trace,
                epoch,
                &w,
                x,
                spectrum,
                &config.scheme,
                &mut eval_rng,
                &started,
            )
            .is_err()
            {
                diverged_at = Some(epoch);
                break 'epochs;
            }
            if let Some(rule) = config.stop_when {
                let row = trace.last().expect("row just recorded");
                if row.metric(rule.metric) <= rule.threshold {
                    break 'epochs;
                }
            }
        }
    }

    Ok(TrainOutcome {
        weights: w,
        trace,
        diverged_at,
    })
}

#[allow(clippy::too_many_arguments)]
fn record_row(
    trace: &mut MetricTrace,
    epoch: usize,
    w: &WeightPair,
    x: &DataMatrix,
    spectrum: &Spectrum,
    scheme: &RegularizerSpec,
    eval_rng: &mut ChaCha8Rng,
    started: &Instant,
) -> Result<()> {
    let recon = eval_recon(w, x)?.loss;
    // The stochastic scheme is summarized by its expectation so the column
    // is smooth and reproducible.
    let total = match scheme {
        RegularizerSpec::NestedDropoutStochastic { prior } => eval_det_nd(w, x, prior)?.loss,
        other => evaluate(other, w, x, eval_rng)?.loss,
    };
    let d_align = axis_alignment_distance(w.w2(), spectrum.u())?;
    let d_sub = subspace_distance(w.w2(), spectrum.u())?;
    let cov = w.w1() * x.gram() * w.w1().transpose();
    let row = TraceRow {
        epoch,
        recon_loss: recon,
        total_loss: total,
        d_align,
        d_sub,
        nd: non_diagonality(&cov),
        balance_residual: balance_residual(w),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    trace.push(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticSpec};

    fn dataset(m: usize, n: usize, k: usize, sv: &[f64], seed: u64) -> (DataMatrix, Spectrum) {
        let spec = SyntheticSpec {
            m,
            n,
            k,
            singular_values: sv.to_vec(),
            seed,
        };
        make_synthetic(&spec).unwrap()
    }

    fn scalar_pair(v: f64) -> WeightPair {
        WeightPair::new(Mat::from_element(1, 1, v), Mat::zeros(1, 1)).unwrap()
    }

    #[test]
    fn nesterov_with_zero_momentum_is_plain_gd() {
        let mut w = scalar_pair(1.0);
        let mut state = NesterovState::zeros(&w);
        let alpha = 0.1;
        let mut plain = 1.0f64;
        for _ in 0..20 {
            // f(w) = w²/2, so ∇f(w) = w; with μ=0 the lookahead is w itself.
            let g1 = Mat::from_element(1, 1, w.w1()[(0, 0)]);
            let g2 = Mat::zeros(1, 1);
            w = nesterov_step(&w, &mut state, (&g1, &g2), alpha, 0.0);
            plain -= alpha * plain;
            assert_eq!(w.w1()[(0, 0)], plain);
        }
    }

    #[test]
    fn nesterov_converges_on_scalar_quadratic() {
        let mut w = scalar_pair(1.0);
        let mut state = NesterovState::zeros(&w);
        let (alpha, mu) = (0.1, 0.9);
        for _ in 0..200 {
            let look = state.lookahead(&w, mu);
            let g1 = Mat::from_element(1, 1, look.w1()[(0, 0)]);
            let g2 = Mat::zeros(1, 1);
            w = nesterov_step(&w, &mut state, (&g1, &g2), alpha, mu);
        }
        assert!(w.w1()[(0, 0)].abs() < 1e-3, "w = {}", w.w1()[(0, 0)]);
    }

    #[test]
    fn nesterov_velocity_decays_geometrically_without_gradient() {
        let mut w = scalar_pair(0.3);
        let mut state = NesterovState::zeros(&w);
        let mu = 0.9;
        // Seed a velocity with one gradient step.
        let g = Mat::from_element(1, 1, 1.0);
        w = nesterov_step(&w, &mut state, (&g, &Mat::zeros(1, 1)), 0.5, mu);
        let v0 = state.velocity_norm();
        let zero = Mat::zeros(1, 1);
        for t in 1..=30 {
            w = nesterov_step(&w, &mut state, (&zero, &zero), 0.5, mu);
            let want = mu.powi(t) * v0;
            let got = state.velocity_norm();
            assert!((got - want).abs() < 1e-12 * want.max(1e-12));
        }
        let _ = w;
    }

    #[test]
    fn adam_first_step_moves_by_alpha() {
        let mut w = scalar_pair(0.0);
        let mut state = AdamState::zeros(&w);
        let g = Mat::from_element(1, 1, 0.37);
        w = adam_step(&w, &mut state, (&g, &Mat::zeros(1, 1)), 0.01, (0.9, 0.999), 1e-8);
        let moved = w.w1()[(0, 0)];
        // At t=1 the bias corrections cancel: Δ = -α g / (|g| + ε).
        let want = -0.01 * 0.37 / (0.37 + 1e-8);
        assert!((moved - want).abs() < 1e-15);
        assert!((moved.abs() - 0.01).abs() < 1e-8);
    }

    #[test]
    fn adam_converges_on_scalar_quadratic() {
        let mut w = scalar_pair(1.0);
        let mut state = AdamState::zeros(&w);
        for _ in 0..1000 {
            let g1 = Mat::from_element(1, 1, w.w1()[(0, 0)]);
            let g2 = Mat::zeros(1, 1);
            w = adam_step(&w, &mut state, (&g1, &g2), 0.01, (0.9, 0.999), 1e-8);
        }
        assert!(w.w1()[(0, 0)].abs() < 1e-3, "w = {}", w.w1()[(0, 0)]);
    }

    #[test]
    fn adam_holds_still_under_zero_gradients() {
        let mut w = scalar_pair(0.7);
        let mut state = AdamState::zeros(&w);
        let zero = Mat::zeros(1, 1);
        for _ in 0..50 {
            w = adam_step(&w, &mut state, (&zero, &zero), 0.05, (0.9, 0.999), 1e-8);
        }
        assert_eq!(w.w1()[(0, 0)], 0.7);
    }

    #[test]
    fn epoch_batches_visit_every_sample_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (n, b) in [(10, 3), (12, 4), (7, 7), (9, 2)] {
            let batches = epoch_batches(n, b, &mut rng);
            let mut seen: Vec<usize> = batches.concat();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            for (i, batch) in batches.iter().enumerate() {
                if i + 1 < batches.len() {
                    assert_eq!(batch.len(), b);
                }
            }
        }
    }

    #[test]
    fn zero_epochs_returns_initial_weights_and_one_record() {
        let (x, s) = dataset(5, 30, 2, &[2.0, 1.0, 0.5, 0.25, 0.1], 40);
        let config = TrainConfig {
            scheme: RegularizerSpec::Uniform { lambda: 0.05 },
            optimizer: OptimizerKind::Nesterov,
            alpha: 0.05,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 0,
            batch_size: None,
            init_std: 1e-2,
            seed: 7,
            eval_every: 1,
            stop_when: None,
        };
        let out = train(&x, &s, &config).unwrap();
        assert_eq!(out.trace.rows().len(), 1);
        assert_eq!(out.trace.rows()[0].epoch, 0);
        let init = WeightPair::random_normal(5, 2, 1e-2, 7);
        assert_eq!(out.weights, init);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let (x, s) = dataset(6, 24, 3, &[2.0, 1.4, 1.0, 0.5, 0.25, 0.1], 41);
        let config = TrainConfig {
            scheme: RegularizerSpec::NestedDropoutStochastic {
                prior: crate::objective::geometric_prior(0.8, 3).unwrap(),
            },
            optimizer: OptimizerKind::Adam,
            alpha: 0.01,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 40,
            batch_size: Some(8),
            init_std: 1e-2,
            seed: 3,
            eval_every: 10,
            stop_when: None,
        };
        let a = train(&x, &s, &config).unwrap();
        let b = train(&x, &s, &config).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.trace.without_wall_time(), b.trace.without_wall_time());
    }

    #[test]
    fn divergence_aborts_with_partial_trace() {
        let (x, s) = dataset(5, 20, 2, &[3.0, 2.0, 1.0, 0.5, 0.25], 42);
        let config = TrainConfig {
            scheme: RegularizerSpec::None,
            optimizer: OptimizerKind::Nesterov,
            alpha: 1e6,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 50,
            batch_size: None,
            init_std: 1e-2,
            seed: 11,
            eval_every: 1,
            stop_when: None,
        };
        let out = train(&x, &s, &config).unwrap();
        assert!(out.diverged_at.is_some());
        assert!(!out.trace.is_empty());
        for row in out.trace.rows() {
            assert!(row.total_loss.is_finite());
        }
    }

    #[test]
    fn rag_pairing_is_enforced() {
        let (x, s) = dataset(4, 16, 2, &[2.0, 1.0, 0.5, 0.25], 43);
        let mut config = TrainConfig {
            scheme: RegularizerSpec::Rag,
            optimizer: OptimizerKind::Adam,
            alpha: 0.01,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 1,
            batch_size: None,
            init_std: 1e-2,
            seed: 0,
            eval_every: 1,
            stop_when: None,
        };
        assert!(train(&x, &s, &config).is_err());
        config.scheme = RegularizerSpec::None;
        config.optimizer = OptimizerKind::RagPlain;
        assert!(train(&x, &s, &config).is_err());
        config.scheme = RegularizerSpec::Rag;
        assert!(train(&x, &s, &config).is_ok());
    }

    #[test]
    fn threshold_crossing_examples() {
        let mut trace = MetricTrace::default();
        for (epoch, d) in [(0usize, 0.9), (10, 0.4), (20, 0.25)] {
            trace
                .push(TraceRow {
                    epoch,
                    recon_loss: 1.0,
                    total_loss: 1.0,
                    d_align: d,
                    d_sub: d / 2.0,
                    nd: 0.0,
                    balance_residual: 0.0,
                    wall_time_s: 0.0,
                })
                .unwrap();
        }
        assert_eq!(epochs_to_threshold(&trace, MetricKind::DAlign, 0.3), Some(20));
        assert_eq!(epochs_to_threshold(&trace, MetricKind::DAlign, 0.1), None);
        assert_eq!(epochs_to_threshold(&trace, MetricKind::DAlign, 0.95), Some(0));
    }

    #[test]
    fn trace_rejects_non_increasing_epochs() {
        let mut trace = MetricTrace::default();
        let row = TraceRow {
            epoch: 5,
            recon_loss: 0.0,
            total_loss: 0.0,
            d_align: 0.0,
            d_sub: 0.0,
            nd: 0.0,
            balance_residual: 0.0,
            wall_time_s: 0.0,
        };
        trace.push(row).unwrap();
        assert!(trace.push(row).is_err());
    }
}
