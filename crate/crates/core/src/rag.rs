//! Rotation-augmented gradient update, the Hebbian comparison update, and
//! the Lyapunov diagnostic for the rotation flow.
//!
//! The update augments plain reconstruction gradients with a skew-symmetric
//! term built from the latent covariance. Its matrix exponential would be an
//! exact latent rotation; the update applies the first-order Taylor term, so
//! one step changes the end-to-end map `W2 W1` only at O(α²) while steadily
//! rotating the representation toward the axis-aligned one.

use crate::data::{DataMatrix, Spectrum};
use crate::error::{Error, Result};
use crate::objective::{eval_recon, WeightPair};
use crate::Mat;

/// Skew-symmetric rotation generator. `A[i][j] = +½ M[i][j]` above the
/// diagonal, `-½ M[j][i]` below, zero on it; skew-symmetry is exact by
/// construction (both triangles are written from the same entry).
#[derive(Debug, Clone, PartialEq)]
pub struct SkewTerm {
    a: Mat,
}

impl SkewTerm {
    /// Build from an arbitrary square matrix (normally a latent covariance).
    pub fn from_cov(m: &Mat) -> SkewTerm {
        assert_eq!(m.nrows(), m.ncols(), "skew term needs a square matrix");
        let k = m.nrows();
        let mut a = Mat::zeros(k, k);
        for i in 0..k {
            for j in (i + 1)..k {
                let v = 0.5 * m[(i, j)];
                a[(i, j)] = v;
                a[(j, i)] = -v;
            }
        }
        SkewTerm { a }
    }

    pub fn matrix(&self) -> &Mat {
        &self.a
    }

    pub fn into_matrix(self) -> Mat {
        self.a
    }
}

/// `A = ½(ut(Y Yᵀ) - lt(Y Yᵀ))` from the latent representation `Y = W1 X`.
pub fn skew_term(y: &Mat) -> SkewTerm {
    let c = y * y.transpose();
    SkewTerm::from_cov(&c)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(Error::invalid(format!(
            "learning rate {alpha} must be positive"
        )));
    }
    Ok(())
}

fn ensure_finite(w1: Mat, w2: Mat, what: &str) -> Result<WeightPair> {
    if w1.iter().all(|v| v.is_finite()) && w2.iter().all(|v| v.is_finite()) {
        WeightPair::new(w1, w2)
    } else {
        Err(Error::Diverged {
            epoch: 0,
            reason: format!("non-finite weights after {what} (learning rate too large)"),
        })
    }
}

/// One rotation-augmented gradient step:
/// `W1 ← (I + (α/n) A) W1 - α ∇W1`, `W2 ← W2 (I - (α/n) A) - α ∇W2`,
/// with the plain reconstruction gradients and `A` from `Y = W1 X`.
///
/// Evaluated through the Gram form: `(α/n) A = α · skew((1/n) Y Yᵀ)`.
pub fn rag_step(w: &WeightPair, x: &DataMatrix, alpha: f64) -> Result<WeightPair> {
    check_alpha(alpha)?;
    let grads = eval_recon(w, x)?;
    let cov = w.w1() * x.gram() * w.w1().transpose();
    let a = SkewTerm::from_cov(&cov);

    let rot1 = w.w1() + alpha * (a.matrix() * w.w1());
    let rot2 = w.w2() - alpha * (w.w2() * a.matrix());
    let w1 = rot1 - alpha * &grads.grad_w1;
    let w2 = rot2 - alpha * &grads.grad_w2;
    ensure_finite(w1, w2, "rotation-augmented step")
}

/// The rotation term alone (reconstruction gradients suppressed). The
/// end-to-end map `W2 W1` changes only at O(α²) under this step.
pub fn rag_rotation_only_step(w: &WeightPair, x: &DataMatrix, alpha: f64) -> Result<WeightPair> {
    check_alpha(alpha)?;
    let cov = w.w1() * x.gram() * w.w1().transpose();
    let a = SkewTerm::from_cov(&cov);
    let w1 = w.w1() + alpha * (a.matrix() * w.w1());
    let w2 = w.w2() - alpha * (w.w2() * a.matrix());
    ensure_finite(w1, w2, "rotation-only step")
}

/// Single-matrix rotation flow `W ← (I + α·skew(W G Wᵀ)) W` against a
/// precomputed Gram matrix. Rows of the iterate stay inside the row span of
/// the start, so flows started on the principal subspace remain there.
pub fn rotation_flow_step(w: &Mat, gram: &Mat, alpha: f64) -> Mat {
    let cov = w * gram * w.transpose();
    let a = SkewTerm::from_cov(&cov);
    w + alpha * (a.matrix() * w)
}

/// Sanger-rule update `W ← W + (α/n)(Y Xᵀ - LT(Y Yᵀ) W)`, with `LT` keeping
/// the diagonal. In Gram form: `W ← W + α (W G - LT(W G Wᵀ) W)`.
pub fn gha_step(w: &Mat, x: &DataMatrix, alpha: f64) -> Result<Mat> {
    check_alpha(alpha)?;
    if w.ncols() != x.m() {
        return Err(Error::ShapeMismatch {
            context: "gha weights vs data",
            expected: format!("{} columns", x.m()),
            got: format!("{}", w.ncols()),
        });
    }
    let g = x.gram();
    let wg = w * g;
    let cov = &wg * w.transpose();
    let k = w.nrows();
    let mut lt = cov.clone();
    for i in 0..k {
        for j in (i + 1)..k {
            lt[(i, j)] = 0.0;
        }
    }
    let out = w + alpha * (&wg - &lt * w);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Diverged {
            epoch: 0,
            reason: "non-finite weights after Hebbian step (learning rate too large)".into(),
        })
    }
}

/// Strictly descending positive weights `k, k-1, …, 1` for [`lyapunov`].
pub fn default_lyapunov_weights(k: usize) -> Vec<f64> {
    (0..k).map(|i| (k - i) as f64).collect()
}

/// Lyapunov diagnostic `V(W) = Tr((S² - W Σ Wᵀ) D)` for the rotation flow,
/// evaluated through the spectrum (`W Σ Wᵀ = (W U) S² (W U)ᵀ` for weights on
/// the principal row span). Requires `W` with orthonormal rows (within 1e-6)
/// and strictly descending positive `d`. Zero exactly at the ordered
/// axis-aligned solutions; decreasing along the rotation flow.
pub fn lyapunov(w: &Mat, spectrum: &Spectrum, d: &[f64]) -> Result<f64> {
    let k = w.nrows();
    if w.ncols() != spectrum.m() || k != spectrum.k() || d.len() != k {
        return Err(Error::ShapeMismatch {
            context: "lyapunov arguments",
            expected: format!("W {k}×{} with {k} weights", spectrum.m()),
            got: format!("W {}×{}, {} weights", w.nrows(), w.ncols(), d.len()),
        });
    }
    if d[k - 1] <= 0.0 || d.windows(2).any(|p| p[1] >= p[0]) {
        return Err(Error::invalid(
            "lyapunov weights must be strictly descending and positive",
        ));
    }
    let wwt = w * w.transpose();
    for i in 0..k {
        for j in 0..k {
            let want = if i == j { 1.0 } else { 0.0 };
            if (wwt[(i, j)] - want).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "rows are not orthonormal: (WWᵀ)[{i}][{j}] = {}; the rotation-flow \
                     analysis only applies on the orthogonal subspace",
                    wwt[(i, j)]
                )));
            }
        }
    }
    let o = w * spectrum.u(); // k×k
    let mut v = 0.0;
    for i in 0..k {
        v += d[i] * spectrum.sigma2()[i];
        for j in 0..k {
            v -= d[i] * spectrum.sigma2()[j] * o[(i, j)] * o[(i, j)];
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticSpec};
    use crate::metrics::{axis_alignment_distance, balance_residual};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

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

    /// Orthogonal k×k matrix as a product of Givens rotations.
    fn rotation(k: usize, angle: f64) -> Mat {
        let mut o = Mat::identity(k, k);
        for i in 0..k - 1 {
            let mut g = Mat::identity(k, k);
            let th = angle * (1.0 + i as f64 * 0.3);
            g[(i, i)] = th.cos();
            g[(i, i + 1)] = -th.sin();
            g[(i + 1, i)] = th.sin();
            g[(i + 1, i + 1)] = th.cos();
            o = o * g;
        }
        o
    }

    #[test]
    fn skew_of_diagonal_is_zero() {
        let y = Mat::from_row_slice(2, 4, &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        // Rows orthogonal, so Y Yᵀ is diagonal.
        let a = skew_term(&y);
        assert_eq!(a.matrix(), &Mat::zeros(2, 2));
    }

    #[test]
    fn skew_matches_direct_formula() {
        let c = Mat::from_row_slice(2, 2, &[3.0, 1.4, 1.4, 0.5]);
        let a = SkewTerm::from_cov(&c);
        assert_eq!(a.matrix()[(0, 1)], 0.7);
        assert_eq!(a.matrix()[(1, 0)], -0.7);
        assert_eq!(a.matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn skew_is_exactly_skew_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..8 {
            let y = Mat::from_fn(4, 9, |_, _| rng.random::<f64>() - 0.5);
            let a = skew_term(&y).into_matrix();
            assert_eq!(a.transpose(), -&a, "Aᵀ + A must vanish exactly");
            for i in 0..4 {
                assert_eq!(a[(i, i)], 0.0);
            }
        }
    }

    #[test]
    fn rag_fixed_point_at_ordered_optimum() {
        let (x, s) = dataset(5, 40, 3, &[3.0, 2.0, 1.0, 0.4, 0.2], 21);
        let w = WeightPair::new(s.u().transpose(), s.u().clone()).unwrap();
        let out = rag_step(&w, &x, 0.5).unwrap();
        let drift = (out.w1() - w.w1()).norm() + (out.w2() - w.w2()).norm();
        assert!(drift < 1e-12, "drift {drift}");
    }

    #[test]
    fn rag_keeps_balance_on_orthogonal_subspace() {
        let (x, s) = dataset(6, 48, 3, &[2.0, 1.4, 1.0, 0.3, 0.2, 0.1], 22);
        let o = rotation(3, 0.4);
        let w1 = &o * s.u().transpose();
        let mut w = WeightPair::new(w1.clone(), w1.transpose()).unwrap();
        for _ in 0..100 {
            w = rag_step(&w, &x, 1e-6).unwrap();
        }
        let res = balance_residual(&w);
        assert!(res < 1e-12, "balance residual {res}");
    }

    #[test]
    fn rotation_only_step_perturbs_product_at_second_order() {
        // Generic balanced point, far from the subspace: the end-to-end map
        // must move with exact α² scaling under the rotation-only step.
        let (x, _) = dataset(5, 30, 3, &[2.0, 1.5, 1.0, 0.5, 0.25], 23);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w1 = Mat::from_fn(3, 5, |_, _| rng.random::<f64>() - 0.5);
        let w = WeightPair::new(w1.clone(), w1.transpose()).unwrap();
        let product = w.w2() * w.w1();

        let delta = |alpha: f64| -> f64 {
            let out = rag_rotation_only_step(&w, &x, alpha).unwrap();
            (out.w2() * out.w1() - &product).norm()
        };
        let (d1, d2, d4) = (delta(0.02), delta(0.01), delta(0.005));
        let r1 = d1 / d2;
        let r2 = d2 / d4;
        assert!((r1 - 4.0).abs() < 0.1, "first halving ratio {r1}");
        assert!((r2 - 4.0).abs() < 0.1, "second halving ratio {r2}");
    }

    #[test]
    fn diverging_step_reports_training_fault() {
        let (x, _) = dataset(4, 20, 2, &[3.0, 2.0, 1.0, 0.5], 24);
        let w1 = Mat::from_element(2, 4, 1e200);
        let w = WeightPair::new(w1.clone(), w1.transpose()).unwrap();
        assert!(matches!(
            rag_step(&w, &x, 10.0),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn gha_fixed_point_at_eigenvector_rows() {
        let (x, s) = dataset(5, 40, 3, &[3.0, 2.0, 1.0, 0.4, 0.2], 25);
        let w = s.u().transpose();
        let out = gha_step(&w, &x, 0.3).unwrap();
        let drift = (out - &w).norm();
        assert!(drift < 1e-10, "drift {drift}");
    }

    #[test]
    fn gha_with_one_unit_is_ojas_rule() {
        let (x, _) = dataset(4, 24, 1, &[2.0, 1.0, 0.5, 0.25], 26);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = Mat::from_fn(1, 4, |_, _| rng.random::<f64>() - 0.5);
        let alpha = 0.07;
        let got = gha_step(&w, &x, alpha).unwrap();

        let g = x.gram();
        let wg = &w * g;
        let scale = (&wg * w.transpose())[(0, 0)];
        let oja = &w + alpha * (&wg - scale * &w);
        assert!((got - oja).norm() < 1e-14);
    }

    #[test]
    fn gha_converges_to_leading_components() {
        let (x, s) = dataset(5, 60, 2, &[2.0, 1.2, 0.5, 0.3, 0.1], 27);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut w = Mat::from_fn(2, 5, |_, _| 0.1 * (rng.random::<f64>() - 0.5));
        for _ in 0..60_000 {
            w = gha_step(&w, &x, 0.05).unwrap();
        }
        let d = axis_alignment_distance(&w.transpose(), s.u()).unwrap();
        assert!(d < 1e-3, "d_align {d}");
    }

    #[test]
    fn lyapunov_zero_at_ordered_solution_positive_at_permutations() {
        let (_, s) = dataset(5, 40, 3, &[3.0, 2.0, 1.0, 0.4, 0.2], 28);
        let d = default_lyapunov_weights(3);
        let v0 = lyapunov(&s.u().transpose(), &s, &d).unwrap();
        assert!(v0.abs() < 1e-10, "V at optimum {v0}");

        let mut perm = Mat::zeros(3, 3);
        perm[(0, 1)] = 1.0;
        perm[(1, 0)] = -1.0;
        perm[(2, 2)] = 1.0;
        let v1 = lyapunov(&(&perm * s.u().transpose()), &s, &d).unwrap();
        assert!(v1 > 1e-3, "V at permutation {v1}");
    }

    #[test]
    fn lyapunov_two_routes_agree_for_rotations() {
        let (_, s) = dataset(6, 40, 3, &[3.0, 2.0, 1.0, 0.5, 0.3, 0.2], 29);
        let d = default_lyapunov_weights(3);
        let o = rotation(3, 0.6);
        let w = &o * s.u().transpose();
        let got = lyapunov(&w, &s, &d).unwrap();

        let mut want = 0.0;
        for i in 0..3 {
            want += d[i] * s.sigma2()[i];
            for j in 0..3 {
                want -= d[i] * s.sigma2()[j] * o[(i, j)] * o[(i, j)];
            }
        }
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn lyapunov_rejects_non_orthonormal_rows() {
        let (_, s) = dataset(5, 40, 2, &[3.0, 2.0, 1.0, 0.4, 0.2], 30);
        let w = 2.0 * s.u().transpose();
        assert!(lyapunov(&w, &s, &default_lyapunov_weights(2)).is_err());
    }

    #[test]
    fn rotation_flow_descends_lyapunov_and_preserves_orthogonality() {
        let (x, s) = dataset(6, 36, 3, &[1.4, 1.0, 0.7, 0.2, 0.1, 0.05], 31);
        let d = default_lyapunov_weights(3);
        let o = rotation(3, 0.3);
        let mut w = &o * s.u().transpose();
        let alpha = 1e-5;
        let mut prev = lyapunov(&w, &s, &d).unwrap();
        for _ in 0..20_000 {
            w = rotation_flow_step(&w, x.gram(), alpha);
            let v = lyapunov(&w, &s, &d).unwrap();
            assert!(v <= prev + 1e-10 * alpha, "V increased: {prev} -> {v}");
            prev = v;
        }
        let wwt = &w * w.transpose();
        let drift = (wwt - Mat::identity(3, 3)).amax();
        assert!(drift < 1e-6, "orthogonality drift {drift}");
    }
}
