//! Convergence metrics: how close a decoder is to the ordered, axis-aligned
//! principal directions.

use crate::error::{Error, Result};
use crate::objective::WeightPair;
use crate::Mat;

/// Distance to the axis-aligned solution:
/// `1 - (1/k) Σ_i max_j cos²(U_i, (W2)_j)`.
///
/// Zero iff every eigenvector column of `u` is matched, up to sign and
/// scale, by some decoder column. Invariant under column permutation, sign
/// flips, and positive rescaling of `w2`'s columns.
pub fn axis_alignment_distance(w2: &Mat, u: &Mat) -> Result<f64> {
    if w2.nrows() != u.nrows() {
        return Err(Error::ShapeMismatch {
            context: "axis_alignment_distance",
            expected: format!("{} rows", u.nrows()),
            got: format!("{}", w2.nrows()),
        });
    }
    let k = u.ncols();
    let cols = w2.ncols();
    let mut col_norm2 = vec![0.0f64; cols];
    for (j, norm) in col_norm2.iter_mut().enumerate() {
        *norm = w2.column(j).norm_squared();
        if *norm == 0.0 {
            return Err(Error::ZeroColumn(j));
        }
    }
    let mut acc = 0.0;
    for i in 0..k {
        let ui = u.column(i);
        let ui_norm2 = ui.norm_squared();
        let mut best = 0.0f64;
        for j in 0..cols {
            let dot = ui.dot(&w2.column(j));
            let cos2 = dot * dot / (ui_norm2 * col_norm2[j]);
            if cos2 > best {
                best = cos2;
            }
        }
        acc += best;
    }
    Ok(1.0 - acc / k as f64)
}

/// Distance to the optimal subspace:
/// `1 - (1/k) Tr(U Uᵀ U_w U_wᵀ)`, with `U_w` the left singular vectors of
/// `w2`. Zero iff the column spaces coincide, one iff they are orthogonal.
/// Errors when `w2` is numerically rank-deficient.
pub fn subspace_distance(w2: &Mat, u: &Mat) -> Result<f64> {
    if w2.nrows() != u.nrows() {
        return Err(Error::ShapeMismatch {
            context: "subspace_distance",
            expected: format!("{} rows", u.nrows()),
            got: format!("{}", w2.nrows()),
        });
    }
    let k = w2.ncols();
    let svd = w2.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > smax * 1e-12)
        .count();
    if rank < k {
        return Err(Error::RankDeficient { need: k, got: rank });
    }
    let u_w = svd.u.expect("left singular vectors requested");
    // Tr(UUᵀ U_w U_wᵀ) = ‖Uᵀ U_w‖_F².
    let cross = u.transpose() * u_w.columns(0, k);
    Ok(1.0 - cross.norm_squared() / u.ncols() as f64)
}

/// Sum of absolute off-diagonal entries.
pub fn non_diagonality(m: &Mat) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "non_diagonality expects a square matrix");
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                acc += m[(i, j)].abs();
            }
        }
    }
    acc
}

/// Transpose-balance residual `‖W1 - W2ᵀ‖_F / max(‖W1‖_F, 1e-300)`.
/// Stationary points of the regularized objectives are exactly balanced.
pub fn balance_residual(w: &WeightPair) -> f64 {
    let diff = (w.w1() - w.w2().transpose()).norm();
    diff / w.w1().norm().max(1e-300)
}
