//! Closed-form stationary points and global optima, condition-number lower
//! bounds, Rayleigh-quotient closed forms, and the finite-difference
//! curvature probe that validates them.
//!
//! Curvature convention: quotients for the non-uniform objective are stated
//! for the half-scaled loss `(1/2n)‖X - W2W1X‖² + ½‖Λ^½W1‖² + ½‖W2Λ^½‖²`
//! (the form the curvature analysis is carried out in), while the
//! nested-dropout objective already carries its `1/(2n)` scale. The probe
//! constructors below bake in the matching convention, so finite-difference
//! quotients line up with the closed forms directly.

use crate::data::{DataMatrix, Spectrum};
use crate::error::{Error, Result};
use crate::objective::{
    eval_det_nd, eval_nonuniform_l2, NestedDropoutPrior, ObjectiveValue, WeightPair,
};
use crate::{Mat, Vec64};

/// Relative gradient-norm gate a probe base point must pass before quadratic
/// probing means anything.
pub const STATIONARITY_GATE: f64 = 1e-6;

fn check_lambda_vs_spectrum(lambda: &[f64], spectrum: &Spectrum, k: usize) -> Result<()> {
    if lambda.len() != k {
        return Err(Error::InvalidRegularizer(format!(
            "expected {k} penalties, got {}",
            lambda.len()
        )));
    }
    if lambda[0] <= 0.0 || lambda.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidRegularizer(
            "penalties must be strictly increasing and positive".into(),
        ));
    }
    let sk2 = spectrum.sigma2()[k - 1];
    if lambda[k - 1] >= sk2 {
        return Err(Error::InvalidRegularizer(format!(
            "lambda_k = {} must be below sigma_k^2 = {sk2}",
            lambda[k - 1]
        )));
    }
    Ok(())
}

/// `ν_i = 1 - λ_i σ_i⁻²` for a matched (penalty, eigenvalue) pair.
fn nu(lambda: f64, sigma2: f64) -> f64 {
    1.0 - lambda / sigma2
}

/// Analytic description of a stationary point of the non-uniform objective:
/// latent row `r` either learns component `c` with sign `±1`, or is switched
/// off. Assignments are injective; rank deficiency is expressed by `None`
/// rows.
#[derive(Debug, Clone)]
pub struct StationaryForm {
    spectrum: Spectrum,
    lambda: Vec<f64>,
    assignment: Vec<Option<(usize, f64)>>,
}

impl StationaryForm {
    pub fn new(
        spectrum: Spectrum,
        lambda: Vec<f64>,
        assignment: Vec<Option<(usize, f64)>>,
    ) -> Result<Self> {
        let k = assignment.len();
        if k == 0 || k > spectrum.k() {
            return Err(Error::invalid(format!(
                "latent dimension {k} out of range for spectrum with {} components",
                spectrum.k()
            )));
        }
        check_lambda_vs_spectrum(&lambda, &spectrum, k)?;
        let mut seen = vec![false; spectrum.k()];
        for (r, slot) in assignment.iter().enumerate() {
            if let Some((c, sign)) = slot {
                if *c >= spectrum.k() {
                    return Err(Error::invalid(format!(
                        "row {r} learns component {c} outside the spectrum"
                    )));
                }
                if seen[*c] {
                    return Err(Error::invalid(format!(
                        "component {c} assigned to two latent rows"
                    )));
                }
                seen[*c] = true;
                if sign.abs() != 1.0 {
                    return Err(Error::invalid("signs must be ±1"));
                }
                if nu(lambda[r], spectrum.sigma2()[*c]) <= 0.0 {
                    return Err(Error::InvalidRegularizer(format!(
                        "lambda_{r} = {} is not below sigma²_{c} = {}",
                        lambda[r],
                        spectrum.sigma2()[*c]
                    )));
                }
            }
        }
        Ok(StationaryForm {
            spectrum,
            lambda,
            assignment,
        })
    }

    /// Full-rank ordered form: row `i` learns component `i` with sign `+1`.
    pub fn identity(spectrum: Spectrum, lambda: Vec<f64>) -> Result<Self> {
        let k = lambda.len();
        let assignment = (0..k).map(|i| Some((i, 1.0))).collect();
        StationaryForm::new(spectrum, lambda, assignment)
    }

    pub fn k(&self) -> usize {
        self.assignment.len()
    }

    pub fn rank(&self) -> usize {
        self.assignment.iter().flatten().count()
    }
}

/// Materialize the weights `W1 = P(I - ΛS⁻²)^{1/2}Uᵀ`, `W2 = W1ᵀ` described
/// by a [`StationaryForm`]; the scale of latent row `r` learning component
/// `c` is `√(1 - λ_r σ_c⁻²)`.
pub fn stationary_point(form: &StationaryForm) -> WeightPair {
    let k = form.k();
    let m = form.spectrum.m();
    let mut w1 = Mat::zeros(k, m);
    for (r, slot) in form.assignment.iter().enumerate() {
        if let Some((c, sign)) = slot {
            let scale = sign * nu(form.lambda[r], form.spectrum.sigma2()[*c]).sqrt();
            let col = form.spectrum.u().column(*c);
            for i in 0..m {
                w1[(r, i)] = scale * col[i];
            }
        }
    }
    let w2 = w1.transpose();
    WeightPair::new(w1, w2).expect("constructed shapes are consistent")
}

/// The ordered global optimum `W1 = Ī(I - ΛS⁻²)^{1/2}Uᵀ` for a choice of
/// per-component signs; every sign choice has identical loss.
pub fn global_optimum(spectrum: &Spectrum, lambda: &[f64], signs: &[f64]) -> Result<WeightPair> {
    let k = lambda.len();
    if signs.len() != k {
        return Err(Error::invalid("one sign per component required"));
    }
    let assignment = signs
        .iter()
        .enumerate()
        .map(|(i, s)| Some((i, *s)))
        .collect();
    let form = StationaryForm::new(spectrum.truncate(k)?, lambda.to_vec(), assignment)?;
    Ok(stationary_point(&form))
}

/// Closed-form loss of the non-uniform objective at its global optimum:
/// `(1/n)‖X - U(I-ΛS⁻²)UᵀX‖_F² + 2 Tr(Λ(I-ΛS⁻²))`, evaluated directly from
/// the data (an arithmetic route independent of the gradient machinery).
pub fn global_optimum_loss_closed_form(
    x: &DataMatrix,
    spectrum: &Spectrum,
    lambda: &[f64],
) -> Result<f64> {
    let k = lambda.len();
    check_lambda_vs_spectrum(lambda, spectrum, k)?;
    let u = spectrum.u().columns(0, k);
    let mut shrink = Mat::zeros(k, k);
    for i in 0..k {
        shrink[(i, i)] = nu(lambda[i], spectrum.sigma2()[i]);
    }
    let proj = &u * shrink * u.transpose(); // U (I - ΛS⁻²) Uᵀ
    let recon = x.values() - &proj * x.values();
    let mut loss = recon.norm_squared() / x.n() as f64;
    for i in 0..k {
        loss += 2.0 * lambda[i] * nu(lambda[i], spectrum.sigma2()[i]);
    }
    Ok(loss)
}

/// Global optimum of the deterministic nested-dropout objective for a
/// nonzero diagonal scale: `W1 = Q Uᵀ`, `W2 = U Q⁻¹`.
pub fn nd_global_optimum(spectrum: &Spectrum, q: &[f64]) -> Result<WeightPair> {
    let k = spectrum.k();
    if q.len() != k {
        return Err(Error::invalid(format!("need {k} diagonal entries")));
    }
    if let Some(pos) = q.iter().position(|&v| v == 0.0) {
        return Err(Error::invalid(format!(
            "diagonal entry {pos} is zero; the optimum family requires nonzero scales"
        )));
    }
    let mut w1 = Mat::zeros(k, spectrum.m());
    let mut w2 = Mat::zeros(spectrum.m(), k);
    for r in 0..k {
        let col = spectrum.u().column(r);
        for i in 0..spectrum.m() {
            w1[(r, i)] = q[r] * col[i];
            w2[(i, r)] = col[i] / q[r];
        }
    }
    WeightPair::new(w1, w2)
}

/// Condition-number lower bound for the non-uniform objective:
/// `2(k-1)(σ₁²-σ_k²) Σ_{i=2}^{k-1}(σ_i²-σ_k²) / (σ₁²σ_k²)`.
/// The inner sum is empty for `k = 2`, making the bound degenerate (zero).
pub fn nonuniform_cond_lower_bound(spectrum: &Spectrum, k: usize) -> Result<f64> {
    if k < 2 || k > spectrum.k() {
        return Err(Error::invalid(format!(
            "k = {k} out of range 2..={}",
            spectrum.k()
        )));
    }
    let s2 = spectrum.sigma2();
    let (s1, sk) = (s2[0], s2[k - 1]);
    // The empty interior sum (k = 2) comes out as -0.0; normalize the sign.
    let inner: f64 = (1..k - 1).map(|i| s2[i] - sk).sum::<f64>() + 0.0;
    Ok(2.0 * (k as f64 - 1.0) * (s1 - sk) * inner / (s1 * sk))
}

/// Condition-number lower bound for deterministic nested dropout:
/// `8σ₁²(k-1)² / (σ₁²-σ_k²)`.
pub fn nd_cond_lower_bound(spectrum: &Spectrum, k: usize) -> Result<f64> {
    if k < 2 || k > spectrum.k() {
        return Err(Error::invalid(format!(
            "k = {k} out of range 2..={}",
            spectrum.k()
        )));
    }
    let s2 = spectrum.sigma2();
    let (s1, sk) = (s2[0], s2[k - 1]);
    if s1 <= sk {
        return Err(Error::invalid("needs sigma_1 > sigma_k"));
    }
    Ok(8.0 * s1 * (k as f64 - 1.0).powi(2) / (s1 - sk))
}

/// Closed-form Rayleigh quotients at the non-uniform global optimum for the
/// half-scaled objective. `(i, j)` are zero-based latent indices with
/// `i > j`: scaling quotient `2σ₁²(1-λ₁σ₁⁻²)` (a lower bound on the largest
/// Hessian eigenvalue), rotation quotient `(ν_j-ν_i)(λ_i-λ_j)/(ν_i+ν_j)`
/// (an upper bound on the smallest).
pub fn closed_form_quotients(
    spectrum: &Spectrum,
    lambda: &[f64],
    i: usize,
    j: usize,
) -> Result<(f64, f64)> {
    let k = lambda.len();
    check_lambda_vs_spectrum(lambda, spectrum, k)?;
    if !(j < i && i < k) {
        return Err(Error::invalid(format!(
            "need j < i < k (got i = {i}, j = {j}, k = {k})"
        )));
    }
    let s2 = spectrum.sigma2();
    let scaling = 2.0 * s2[0] * nu(lambda[0], s2[0]);
    let (ni, nj) = (nu(lambda[i], s2[i]), nu(lambda[j], s2[j]));
    let rotation = (nj - ni) * (lambda[i] - lambda[j]) / (ni + nj);
    Ok((scaling, rotation))
}

/// Closed-form curvature bounds at the nested-dropout optimum, zero-based
/// indices with `i < j`: scaling `2p₁σ₁²`, rotation
/// `(σ_i²-σ_j²)(p_i-p_j)/4`. At unit scale (`q = 1`) the finite-difference
/// quotients along the matching paths attain both bounds exactly.
pub fn nd_closed_form_quotients(
    spectrum: &Spectrum,
    prior: &NestedDropoutPrior,
    i: usize,
    j: usize,
) -> Result<(f64, f64)> {
    let k = spectrum.k();
    if prior.k() != k {
        return Err(Error::InvalidPrior(format!(
            "prior has {} units, spectrum has {k}",
            prior.k()
        )));
    }
    if !(i < j && j < k) {
        return Err(Error::invalid(format!(
            "need i < j < k (got i = {i}, j = {j}, k = {k})"
        )));
    }
    let s2 = spectrum.sigma2();
    let p = prior.keep();
    let scaling = 2.0 * p[0] * s2[0];
    let rotation = (s2[i] - s2[j]) * (p[i] - p[j]) / 4.0;
    Ok((scaling, rotation))
}

/// A stationary base point plus the objective whose Hessian is probed.
pub struct CurvatureProbe {
    objective: Box<dyn Fn(&WeightPair) -> Result<ObjectiveValue>>,
    base: WeightPair,
    fd_step: f64,
}

impl CurvatureProbe {
    /// Probe an arbitrary objective. `grad_scale` sets the reference for the
    /// stationarity gate (`‖∇‖ < 1e-6 · grad_scale`); pass the Gram norm for
    /// data objectives.
    pub fn with_objective(
        objective: Box<dyn Fn(&WeightPair) -> Result<ObjectiveValue>>,
        base: WeightPair,
        grad_scale: f64,
    ) -> Result<Self> {
        let v = objective(&base)?;
        let g = (v.grad_w1.norm_squared() + v.grad_w2.norm_squared()).sqrt();
        let rel = g / grad_scale.max(f64::MIN_POSITIVE);
        if rel >= STATIONARITY_GATE {
            return Err(Error::NotStationary {
                grad: rel,
                gate: STATIONARITY_GATE,
            });
        }
        Ok(CurvatureProbe {
            objective,
            base,
            fd_step: 1e-5,
        })
    }

    /// Probe the half-scaled non-uniform objective at `base`.
    pub fn nonuniform(x: &DataMatrix, lambda: &[f64], base: WeightPair) -> Result<Self> {
        let x = x.clone();
        let lambda = lambda.to_vec();
        let scale = x.gram().norm();
        let objective = Box::new(move |w: &WeightPair| -> Result<ObjectiveValue> {
            let mut v = eval_nonuniform_l2(w, &x, &lambda)?;
            v.loss *= 0.5;
            v.grad_w1 *= 0.5;
            v.grad_w2 *= 0.5;
            Ok(v)
        });
        CurvatureProbe::with_objective(objective, base, scale)
    }

    /// Probe the deterministic nested-dropout objective at `base`.
    pub fn det_nd(x: &DataMatrix, prior: &NestedDropoutPrior, base: WeightPair) -> Result<Self> {
        let x = x.clone();
        let prior = prior.clone();
        let scale = x.gram().norm();
        let objective = Box::new(move |w: &WeightPair| eval_det_nd(w, &x, &prior));
        CurvatureProbe::with_objective(objective, base, scale)
    }

    pub fn base(&self) -> &WeightPair {
        &self.base
    }

    /// Override the relative finite-difference step (default `1e-5`).
    pub fn with_fd_step(mut self, fd_step: f64) -> Self {
        self.fd_step = fd_step;
        self
    }
}

fn max_abs_entry(w: &WeightPair) -> f64 {
    let a = w.w1().amax();
    let b = w.w2().amax();
    a.max(b)
}

/// Central-difference Rayleigh quotient `vᵀHv / vᵀv` of the probed Hessian:
/// `Hv ≈ (∇(θ+εv̂) - ∇(θ-εv̂)) / 2ε` with `ε = fd_step·(1 + ‖θ‖∞)`.
pub fn rayleigh_fd(probe: &CurvatureProbe, v: &WeightPair) -> Result<f64> {
    let vnorm = v.norm();
    if vnorm == 0.0 {
        return Err(Error::invalid("probe direction must be nonzero"));
    }
    let scale = max_abs_entry(&probe.base);
    let eps = probe.fd_step * (1.0 + scale);
    if eps <= scale * 1e-14 || eps == 0.0 {
        return Err(Error::FdStepUnderflow { eps, scale });
    }
    let u1 = v.w1() / vnorm;
    let u2 = v.w2() / vnorm;

    let plus = WeightPair::new(
        probe.base.w1() + eps * &u1,
        probe.base.w2() + eps * &u2,
    )?;
    let minus = WeightPair::new(
        probe.base.w1() - eps * &u1,
        probe.base.w2() - eps * &u2,
    )?;
    let gp = (probe.objective)(&plus)?;
    let gm = (probe.objective)(&minus)?;
    let hv1 = (&gp.grad_w1 - &gm.grad_w1) / (2.0 * eps);
    let hv2 = (&gp.grad_w2 - &gm.grad_w2) / (2.0 * eps);
    Ok(u1.dot(&hv1) + u2.dot(&hv2))
}

/// Direction that rescales latent unit 0 at a balanced base point: encoder
/// row 0 and decoder column 0 both move along the decoder's first column.
pub fn scaling_direction(base: &WeightPair) -> WeightPair {
    let k = base.k();
    let m = base.m();
    let col = base.w2().column(0).into_owned();
    let mut v1 = Mat::zeros(k, m);
    let mut v2 = Mat::zeros(m, k);
    for i in 0..m {
        v1[(0, i)] = col[i];
        v2[(i, 0)] = col[i];
    }
    WeightPair::new(v1, v2).expect("direction shapes")
}

/// Tangent of the Givens path `(R(θ)W1, W2R(θ)ᵀ)` at `θ = 0` for the
/// zero-based latent pair `(i, j)`.
pub fn rotation_tangent(base: &WeightPair, i: usize, j: usize) -> Result<WeightPair> {
    let k = base.k();
    if i == j || i >= k || j >= k {
        return Err(Error::invalid(format!(
            "invalid latent pair ({i}, {j}) for k = {k}"
        )));
    }
    let mut gen = Mat::zeros(k, k);
    gen[(i, j)] = -1.0;
    gen[(j, i)] = 1.0;
    let v1 = &gen * base.w1();
    let v2 = -(base.w2() * &gen);
    WeightPair::new(v1, v2)
}

/// One row of the 2-D loss-surface slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub alpha: f64,
    pub theta: f64,
    pub x: f64,
    pub y: f64,
    pub loss: f64,
}

/// Evaluate the non-uniform loss (as written, without the half scale) over
/// the 2-D slice `W1 = α O(θ) (I-ΛS⁻²)^{1/2} Uᵀ`, `W2 = W1ᵀ`, for a k=2
/// spectrum; `(x, y) = (α cos θ, α sin θ)`.
pub fn loss_surface_slice(
    x: &DataMatrix,
    spectrum: &Spectrum,
    lambda: &[f64],
    alphas: &[f64],
    thetas: &[f64],
) -> Result<Vec<SurfaceRow>> {
    if spectrum.k() != 2 {
        return Err(Error::invalid(format!(
            "surface slice is defined for k = 2 (spectrum has {})",
            spectrum.k()
        )));
    }
    check_lambda_vs_spectrum(lambda, spectrum, 2)?;
    let shrink = Mat::from_diagonal(&Vec64::from_vec(vec![
        nu(lambda[0], spectrum.sigma2()[0]).sqrt(),
        nu(lambda[1], spectrum.sigma2()[1]).sqrt(),
    ]));
    let base = &shrink * spectrum.u().transpose(); // 2×m

    let mut rows = Vec::with_capacity(alphas.len() * thetas.len());
    for &alpha in alphas {
        for &theta in thetas {
            let (s, c) = theta.sin_cos();
            let o = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
            let w1 = alpha * (&o * &base);
            let w = WeightPair::new(w1.clone(), w1.transpose())?;
            let loss = eval_nonuniform_l2(&w, x, lambda)?.loss;
            rows.push(SurfaceRow {
                alpha,
                theta,
                x: alpha * c,
                y: alpha * s,
                loss,
            });
        }
    }
    Ok(rows)
}

/// Half-scaled non-uniform loss along the rotation path at `α = 1`, i.e. the
/// profile whose cosine coefficients the curvature analysis predicts.
pub fn theta_profile_half_loss(
    x: &DataMatrix,
    base: &WeightPair,
    lambda: &[f64],
    i: usize,
    j: usize,
    theta: f64,
) -> Result<f64> {
    let k = base.k();
    if i == j || i >= k || j >= k {
        return Err(Error::invalid("invalid latent pair"));
    }
    let (s, c) = theta.sin_cos();
    let mut r = Mat::identity(k, k);
    r[(i, i)] = c;
    r[(i, j)] = -s;
    r[(j, i)] = s;
    r[(j, j)] = c;
    let w = WeightPair::new(&r * base.w1(), base.w2() * r.transpose())?;
    Ok(0.5 * eval_nonuniform_l2(&w, x, lambda)?.loss)
}

/// Least-squares fit of `A·cos(2θ + B) + C` through sampled values.
#[derive(Debug, Clone, Copy)]
pub struct CosineFit {
    /// `A cos B` (coefficient of `cos 2θ`).
    pub a_cos_b: f64,
    /// `A sin B` (negated coefficient of `sin 2θ`).
    pub a_sin_b: f64,
    pub offset: f64,
    pub max_residual: f64,
}

impl CosineFit {
    pub fn amplitude(&self) -> f64 {
        self.a_cos_b.hypot(self.a_sin_b)
    }
}

/// Fit `v(θ) ≈ A cos(2θ + B) + C` by linear least squares on the basis
/// `(cos 2θ, sin 2θ, 1)`.
pub fn fit_cosine_2theta(thetas: &[f64], values: &[f64]) -> Result<CosineFit> {
    if thetas.len() != values.len() || thetas.len() < 3 {
        return Err(Error::invalid(
            "need at least three matched samples for the cosine fit",
        ));
    }
    let n = thetas.len();
    let mut design = Mat::zeros(n, 3);
    for (r, &t) in thetas.iter().enumerate() {
        design[(r, 0)] = (2.0 * t).cos();
        design[(r, 1)] = (2.0 * t).sin();
        design[(r, 2)] = 1.0;
    }
    let rhs = Vec64::from_row_slice(values);
    let normal = design.transpose() * &design;
    let proj = design.transpose() * &rhs;
    let sol = normal
        .lu()
        .solve(&proj)
        .ok_or_else(|| Error::invalid("degenerate theta sample grid"))?;
    let (p, q, c) = (sol[0], sol[1], sol[2]);
    let mut max_residual = 0.0f64;
    for (r, &t) in thetas.iter().enumerate() {
        let fit = p * (2.0 * t).cos() + q * (2.0 * t).sin() + c;
        max_residual = max_residual.max((fit - values[r]).abs());
    }
    Ok(CosineFit {
        a_cos_b: p,
        a_sin_b: -q,
        offset: c,
        max_residual,
    })
}
