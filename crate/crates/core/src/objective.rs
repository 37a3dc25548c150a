//! Training objectives and their exact gradients.
//!
//! Five schemes share the reconstruction core `(1/n)‖X - W2 W1 X‖_F²`:
//! plain reconstruction, uniform and non-uniform weight decay, and the
//! stochastic / deterministic nested-dropout pair (which carry a `1/(2n)`
//! scale instead). Gradients are hand-derived and evaluated through the
//! cached Gram form, so full-batch cost is independent of the sample count.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Spectrum};
use crate::error::{Error, Result};
use crate::Mat;

/// Encoder (k×m) and decoder (m×k) weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    w1: Mat,
    w2: Mat,
}

impl WeightPair {
    pub fn new(w1: Mat, w2: Mat) -> Result<Self> {
        if w1.nrows() != w2.ncols() || w1.ncols() != w2.nrows() {
            return Err(Error::ShapeMismatch {
                context: "weight pair",
                expected: "encoder k×m with decoder m×k".to_string(),
                got: format!(
                    "{}x{} and {}x{}",
                    w1.nrows(),
                    w1.ncols(),
                    w2.nrows(),
                    w2.ncols()
                ),
            });
        }
        for m in [&w1, &w2] {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    if !m[(i, j)].is_finite() {
                        return Err(Error::NonFinite { row: i, col: j });
                    }
                }
            }
        }
        Ok(WeightPair { w1, w2 })
    }

    /// Independent N(0, std²) entries from a seeded generator.
    pub fn random_normal(m: usize, k: usize, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 {
            loop {
                let u1: f64 = rng.random();
                let u2: f64 = rng.random();
                if u1 > f64::MIN_POSITIVE {
                    return std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                }
            }
        };
        let mut w1 = Mat::zeros(k, m);
        for j in 0..m {
            for i in 0..k {
                w1[(i, j)] = normal();
            }
        }
        let mut w2 = Mat::zeros(m, k);
        for j in 0..k {
            for i in 0..m {
                w2[(i, j)] = normal();
            }
        }
        WeightPair { w1, w2 }
    }

    pub fn k(&self) -> usize {
        self.w1.nrows()
    }

    pub fn m(&self) -> usize {
        self.w1.ncols()
    }

    pub fn w1(&self) -> &Mat {
        &self.w1
    }

    pub fn w2(&self) -> &Mat {
        &self.w2
    }

    pub fn into_parts(self) -> (Mat, Mat) {
        (self.w1, self.w2)
    }

    pub fn norm(&self) -> f64 {
        (self.w1.norm_squared() + self.w2.norm_squared()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().all(|v| v.is_finite()) && self.w2.iter().all(|v| v.is_finite())
    }
}

/// Prior over the nested-dropout truncation index `b ∈ {1..k}`.
///
/// `p_i = 1 - Σ_{j<i} p_B(j)` is the marginal probability that latent unit
/// `i` is kept; `p_1 = 1` always and `p_k > 0` is required so every unit
/// survives with positive probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedDropoutPrior {
    pb: Vec<f64>,
    keep: Vec<f64>,
}

impl NestedDropoutPrior {
    pub fn new(pb: Vec<f64>) -> Result<Self> {
        let k = pb.len();
        if k == 0 {
            return Err(Error::InvalidPrior("empty truncation distribution".into()));
        }
        if pb.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) {
            return Err(Error::InvalidPrior("probabilities outside [0, 1]".into()));
        }
        let sum: f64 = pb.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPrior(format!(
                "truncation probabilities sum to {sum}, expected 1"
            )));
        }
        let mut keep = Vec::with_capacity(k);
        let mut acc = 0.0;
        for b in 0..k {
            keep.push(1.0 - acc);
            acc += pb[b];
        }
        if *keep.last().unwrap() <= 0.0 {
            return Err(Error::InvalidPrior(
                "last unit has zero keep probability (p_k must be positive)".into(),
            ));
        }
        Ok(NestedDropoutPrior { pb, keep })
    }

    pub fn k(&self) -> usize {
        self.pb.len()
    }

    /// `p_B(b)` for `b = 1..k`, indexed from zero.
    pub fn pb(&self) -> &[f64] {
        &self.pb
    }

    /// Marginal keep probabilities `p_1..p_k`, indexed from zero.
    pub fn keep(&self) -> &[f64] {
        &self.keep
    }

    /// Diagonal view `P_D = diag(p)`.
    pub fn p_diag(&self) -> Mat {
        Mat::from_diagonal(&crate::Vec64::from_row_slice(&self.keep))
    }

    /// Dense view `P_L[i][j] = p_{max(i,j)}`.
    pub fn p_lower(&self) -> Mat {
        let k = self.k();
        Mat::from_fn(k, k, |i, j| self.keep[i.max(j)])
    }

    /// Draw a truncation index in `1..=k`.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        for (b, &p) in self.pb.iter().enumerate() {
            acc += p;
            if r < acc {
                return b + 1;
            }
        }
        self.k()
    }
}

/// Truncated-geometric prior `p_B(b) = ρ^b (1-ρ)` for `b < k`, with the
/// remaining mass on `b = k`.
pub fn geometric_prior(rho: f64, k: usize) -> Result<NestedDropoutPrior> {
    if !(0.0..1.0).contains(&rho) || rho <= 0.0 {
        return Err(Error::InvalidPrior(format!(
            "geometric parameter {rho} outside (0, 1)"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidPrior("k must be positive".into()));
    }
    let mut pb = Vec::with_capacity(k);
    let mut acc = 0.0;
    for b in 1..k {
        let p = rho.powi(b as i32) * (1.0 - rho);
        pb.push(p);
        acc += p;
    }
    pb.push(1.0 - acc);
    NestedDropoutPrior::new(pb)
}

/// Which symmetry-breaking scheme trains the autoencoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum RegularizerSpec {
    None,
    Uniform { lambda: f64 },
    NonUniform { lambda: Vec<f64> },
    NestedDropoutStochastic { prior: NestedDropoutPrior },
    NestedDropoutDeterministic { prior: NestedDropoutPrior },
    Rag,
}

impl RegularizerSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            RegularizerSpec::None | RegularizerSpec::Rag => Ok(()),
            RegularizerSpec::Uniform { lambda } => {
                if *lambda < 0.0 {
                    Err(Error::InvalidRegularizer(format!(
                        "uniform penalty {lambda} must be non-negative"
                    )))
                } else {
                    Ok(())
                }
            }
            RegularizerSpec::NonUniform { lambda } => validate_lambda(lambda, k),
            RegularizerSpec::NestedDropoutStochastic { prior }
            | RegularizerSpec::NestedDropoutDeterministic { prior } => {
                if prior.k() != k {
                    Err(Error::InvalidRegularizer(format!(
                        "prior has {} units, expected {k}",
                        prior.k()
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// The non-uniform penalties must sit below the smallest retained
    /// eigenvalue for the closed-form stationary family to exist.
    pub fn validate_against(&self, spectrum: &Spectrum) -> Result<()> {
        self.validate(spectrum.k())?;
        if let RegularizerSpec::NonUniform { lambda } = self {
            let sk2 = spectrum.sigma2()[spectrum.k() - 1];
            let lk = *lambda.last().unwrap();
            if lk >= sk2 {
                return Err(Error::InvalidRegularizer(format!(
                    "lambda_k = {lk} must be below sigma_k^2 = {sk2}"
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegularizerSpec::None => "none",
            RegularizerSpec::Uniform { .. } => "uniform",
            RegularizerSpec::NonUniform { .. } => "nonuniform",
            RegularizerSpec::NestedDropoutStochastic { .. } => "nested_dropout_stochastic",
            RegularizerSpec::NestedDropoutDeterministic { .. } => "nested_dropout_deterministic",
            RegularizerSpec::Rag => "rag",
        }
    }
}

fn validate_lambda(lambda: &[f64], k: usize) -> Result<()> {
    if lambda.len() != k {
        return Err(Error::InvalidRegularizer(format!(
            "expected {k} penalties, got {}",
            lambda.len()
        )));
    }
    if lambda[0] <= 0.0 {
        return Err(Error::InvalidRegularizer(
            "penalties must be strictly positive".into(),
        ));
    }
    for w in lambda.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidRegularizer(
                "penalties must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// Loss plus exact gradients at a point.
#[derive(Debug, Clone)]
pub struct ObjectiveValue {
    pub loss: f64,
    pub grad_w1: Mat,
    pub grad_w2: Mat,
}

fn check_shapes(w: &WeightPair, x: &DataMatrix) -> Result<()> {
    if w.m() != x.m() {
        return Err(Error::ShapeMismatch {
            context: "weights vs data",
            expected: format!("{} features", x.m()),
            got: format!("{}", w.m()),
        });
    }
    Ok(())
}

/// Reconstruction objective `(1/n)‖X - W2 W1 X‖_F²` with gradients
/// `∇W1 = 2 W2ᵀ(W2 W1 - I) G` and `∇W2 = 2 (W2 W1 - I) G W1ᵀ`,
/// where `G = (1/n) X Xᵀ`.
pub fn eval_recon(w: &WeightPair, x: &DataMatrix) -> Result<ObjectiveValue> {
    check_shapes(w, x)?;
    let g = x.gram();
    let b = w.w1() * g; // k×m
    let c = &b * w.w1().transpose(); // k×k, symmetric
    let w2t_w2 = w.w2().transpose() * w.w2(); // k×k
    let w2t_g = w.w2().transpose() * g; // k×m

    let tr_pg = w.w2().dot(&b.transpose());
    let tr_ppg = w2t_w2.dot(&c);
    let loss = x.mean_square_norm() - 2.0 * tr_pg + tr_ppg;

    let grad_w1 = 2.0 * (&w2t_w2 * &b - &w2t_g);
    let grad_w2 = 2.0 * (w.w2() * &c - b.transpose());
    Ok(ObjectiveValue {
        loss,
        grad_w1,
        grad_w2,
    })
}

/// Uniform weight decay added to the reconstruction objective:
/// `λ‖W1‖_F² + λ‖W2‖_F²`.
pub fn eval_uniform_l2(w: &WeightPair, x: &DataMatrix, lambda: f64) -> Result<ObjectiveValue> {
    if lambda < 0.0 {
        return Err(Error::InvalidRegularizer(format!(
            "uniform penalty {lambda} must be non-negative"
        )));
    }
    let mut v = eval_recon(w, x)?;
    v.loss += lambda * (w.w1().norm_squared() + w.w2().norm_squared());
    v.grad_w1 += 2.0 * lambda * w.w1();
    v.grad_w2 += 2.0 * lambda * w.w2();
    Ok(v)
}

/// Non-uniform weight decay `‖Λ^{1/2} W1‖_F² + ‖W2 Λ^{1/2}‖_F²` with
/// strictly increasing positive penalties; encoder rows and decoder columns
/// for latent unit `i` are both charged `λ_i`.
pub fn eval_nonuniform_l2(w: &WeightPair, x: &DataMatrix, lambda: &[f64]) -> Result<ObjectiveValue> {
    validate_lambda(lambda, w.k())?;
    let mut v = eval_recon(w, x)?;
    for i in 0..w.k() {
        v.loss += lambda[i] * (w.w1().row(i).norm_squared() + w.w2().column(i).norm_squared());
    }
    for j in 0..w.m() {
        for i in 0..w.k() {
            v.grad_w1[(i, j)] += 2.0 * lambda[i] * w.w1()[(i, j)];
            v.grad_w2[(j, i)] += 2.0 * lambda[i] * w.w2()[(j, i)];
        }
    }
    Ok(v)
}

/// Expected nested-dropout loss in closed form:
/// `(1/2n)Tr(XᵀX) - (1/n)Tr(Xᵀ W2 P_D W1 X)
///  + (1/2n)Tr(Xᵀ W1ᵀ (W2ᵀW2 ∘ P_L) W1 X)`.
pub fn eval_det_nd(
    w: &WeightPair,
    x: &DataMatrix,
    prior: &NestedDropoutPrior,
) -> Result<ObjectiveValue> {
    check_shapes(w, x)?;
    if prior.k() != w.k() {
        return Err(Error::InvalidPrior(format!(
            "prior has {} units, weights have {}",
            prior.k(),
            w.k()
        )));
    }
    let g = x.gram();
    let k = w.k();
    let p = prior.keep();

    let b = w.w1() * g; // k×m
    let c = &b * w.w1().transpose(); // k×k symmetric
    let w2t_w2 = w.w2().transpose() * w.w2(); // k×k
    let w2t_g = w.w2().transpose() * g; // k×m
    let b_w2 = &b * w.w2(); // k×k

    // Elementwise products against P_L.
    let mut m_mask = w2t_w2.clone();
    let mut c_mask = c.clone();
    for j in 0..k {
        for i in 0..k {
            let pij = p[i.max(j)];
            m_mask[(i, j)] *= pij;
            c_mask[(i, j)] *= pij;
        }
    }

    let mut loss = 0.5 * x.mean_square_norm();
    for i in 0..k {
        loss -= p[i] * b_w2[(i, i)];
    }
    loss += 0.5 * m_mask.dot(&c);

    // ∇W1 = -P_D W2ᵀ G + (W2ᵀW2 ∘ P_L) W1 G
    let mut grad_w1 = &m_mask * &b;
    for j in 0..w.m() {
        for i in 0..k {
            grad_w1[(i, j)] -= p[i] * w2t_g[(i, j)];
        }
    }
    // ∇W2 = -G W1ᵀ P_D + W2 (P_L ∘ W1 G W1ᵀ)
    let mut grad_w2 = w.w2() * &c_mask;
    for j in 0..k {
        for i in 0..w.m() {
            grad_w2[(i, j)] -= b[(j, i)] * p[j];
        }
    }

    Ok(ObjectiveValue {
        loss,
        grad_w1,
        grad_w2,
    })
}

/// One realization of the stochastic nested-dropout loss
/// `(1/2n)‖X - W2 (M ∘ W1 X)‖_F²` for explicit per-sample truncation
/// indices (`0` drops every unit, `k` keeps all), with the gradient taken
/// through the fixed mask.
pub fn eval_masked_nd(w: &WeightPair, x: &DataMatrix, truncations: &[usize]) -> Result<ObjectiveValue> {
    check_shapes(w, x)?;
    if truncations.len() != x.n() {
        return Err(Error::ShapeMismatch {
            context: "truncation indices vs samples",
            expected: format!("{}", x.n()),
            got: format!("{}", truncations.len()),
        });
    }
    let k = w.k();
    if let Some(&bad) = truncations.iter().find(|&&b| b > k) {
        return Err(Error::invalid(format!(
            "truncation index {bad} exceeds latent dimension {k}"
        )));
    }
    let n = x.n();
    let inv_n = 1.0 / n as f64;

    let mut y = w.w1() * x.values(); // k×n, then masked in place
    for (j, &b) in truncations.iter().enumerate() {
        for i in b..k {
            y[(i, j)] = 0.0;
        }
    }
    let recon = w.w2() * &y; // m×n
    let resid = x.values() - &recon;
    let loss = 0.5 * inv_n * resid.norm_squared();

    let grad_w2 = -inv_n * (&resid * y.transpose());
    let mut w2t_resid = w.w2().transpose() * &resid; // k×n
    for (j, &b) in truncations.iter().enumerate() {
        for i in b..k {
            w2t_resid[(i, j)] = 0.0;
        }
    }
    let grad_w1 = -inv_n * (&w2t_resid * x.values().transpose());

    Ok(ObjectiveValue {
        loss,
        grad_w1,
        grad_w2,
    })
}

/// Monte-Carlo draw of the stochastic nested-dropout objective: sample a
/// truncation index per sample column from the prior, then evaluate the
/// masked loss. Unbiased for [`eval_det_nd`].
pub fn sample_stoch_nd(
    w: &WeightPair,
    x: &DataMatrix,
    prior: &NestedDropoutPrior,
    seed: u64,
) -> Result<ObjectiveValue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_stoch_nd_with_rng(w, x, prior, &mut rng)
}

/// [`sample_stoch_nd`] drawing from a caller-owned generator (used by the
/// training loop so a whole run hangs off one seed).
pub fn sample_stoch_nd_with_rng(
    w: &WeightPair,
    x: &DataMatrix,
    prior: &NestedDropoutPrior,
    rng: &mut ChaCha8Rng,
) -> Result<ObjectiveValue> {
    if prior.k() != w.k() {
        return Err(Error::InvalidPrior(format!(
            "prior has {} units, weights have {}",
            prior.k(),
            w.k()
        )));
    }
    let truncations: Vec<usize> = (0..x.n()).map(|_| prior.sample(rng)).collect();
    eval_masked_nd(w, x, &truncations)
}

/// Evaluate the scheme's own objective. `Rag` reports the reconstruction
/// objective (its update is not the gradient of any loss).
pub fn evaluate(
    scheme: &RegularizerSpec,
    w: &WeightPair,
    x: &DataMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<ObjectiveValue> {
    match scheme {
        RegularizerSpec::None | RegularizerSpec::Rag => eval_recon(w, x),
        RegularizerSpec::Uniform { lambda } => eval_uniform_l2(w, x, *lambda),
        RegularizerSpec::NonUniform { lambda } => eval_nonuniform_l2(w, x, lambda),
        RegularizerSpec::NestedDropoutStochastic { prior } => {
            sample_stoch_nd_with_rng(w, x, prior, rng)
        }
        RegularizerSpec::NestedDropoutDeterministic { prior } => eval_det_nd(w, x, prior),
    }
}

pub mod gradcheck {
    //! Central finite-difference validation of the analytic gradients.

    use super::*;

    /// Central-difference gradient of a scalar objective over both weight
    /// matrices.
    pub fn fd_gradients<F>(f: F, w: &WeightPair, eps: f64) -> (Mat, Mat)
    where
        F: Fn(&WeightPair) -> f64,
    {
        let mut g1 = Mat::zeros(w.k(), w.m());
        let mut g2 = Mat::zeros(w.m(), w.k());
        let mut probe = w.clone();
        for j in 0..w.m() {
            for i in 0..w.k() {
                let orig = probe.w1[(i, j)];
                probe.w1[(i, j)] = orig + eps;
                let fp = f(&probe);
                probe.w1[(i, j)] = orig - eps;
                let fm = f(&probe);
                probe.w1[(i, j)] = orig;
                g1[(i, j)] = (fp - fm) / (2.0 * eps);
            }
        }
        for j in 0..w.k() {
            for i in 0..w.m() {
                let orig = probe.w2[(i, j)];
                probe.w2[(i, j)] = orig + eps;
                let fp = f(&probe);
                probe.w2[(i, j)] = orig - eps;
                let fm = f(&probe);
                probe.w2[(i, j)] = orig;
                g2[(i, j)] = (fp - fm) / (2.0 * eps);
            }
        }
        (g1, g2)
    }

    /// Norm-wise relative disagreement over the stacked gradient.
    pub fn relative_error(analytic: (&Mat, &Mat), fd: (&Mat, &Mat)) -> f64 {
        let diff =
            ((analytic.0 - fd.0).norm_squared() + (analytic.1 - fd.1).norm_squared()).sqrt();
        let a = (analytic.0.norm_squared() + analytic.1.norm_squared()).sqrt();
        let b = (fd.0.norm_squared() + fd.1.norm_squared()).sqrt();
        diff / a.max(b).max(1e-12)
    }

    /// FD-vs-analytic relative error for one scheme at one point. The
    /// stochastic scheme is checked against its own sampled loss with the
    /// masks held fixed.
    pub fn check_scheme(
        scheme: &RegularizerSpec,
        w: &WeightPair,
        x: &DataMatrix,
        eps: f64,
        seed: u64,
    ) -> Result<f64> {
        let (value, loss_fn): (ObjectiveValue, Box<dyn Fn(&WeightPair) -> f64>) = match scheme {
            RegularizerSpec::None | RegularizerSpec::Rag => {
                let v = eval_recon(w, x)?;
                let x = x.clone();
                (v, Box::new(move |p| eval_recon(p, &x).unwrap().loss))
            }
            RegularizerSpec::Uniform { lambda } => {
                let v = eval_uniform_l2(w, x, *lambda)?;
                let (x, l) = (x.clone(), *lambda);
                (v, Box::new(move |p| eval_uniform_l2(p, &x, l).unwrap().loss))
            }
            RegularizerSpec::NonUniform { lambda } => {
                let v = eval_nonuniform_l2(w, x, lambda)?;
                let (x, l) = (x.clone(), lambda.clone());
                (
                    v,
                    Box::new(move |p| eval_nonuniform_l2(p, &x, &l).unwrap().loss),
                )
            }
            RegularizerSpec::NestedDropoutDeterministic { prior } => {
                let v = eval_det_nd(w, x, prior)?;
                let (x, pr) = (x.clone(), prior.clone());
                (v, Box::new(move |p| eval_det_nd(p, &x, &pr).unwrap().loss))
            }
            RegularizerSpec::NestedDropoutStochastic { prior } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let truncations: Vec<usize> = (0..x.n()).map(|_| prior.sample(&mut rng)).collect();
                let v = eval_masked_nd(w, x, &truncations)?;
                let x = x.clone();
                (
                    v,
                    Box::new(move |p| eval_masked_nd(p, &x, &truncations).unwrap().loss),
                )
            }
        };
        let (f1, f2) = fd_gradients(&loss_fn, w, eps);
        Ok(relative_error((&value.grad_w1, &value.grad_w2), (&f1, &f2)))
    }
}
