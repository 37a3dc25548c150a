//! Datasets, centering, and the exact PCA oracle.
//!
//! Everything downstream measures convergence against the eigenstructure of
//! the sample covariance `(1/n) X Xᵀ`, so this module owns the ground truth:
//! synthetic datasets built from seeded orthonormal factors with prescribed
//! singular values, file loaders, and the eigendecomposition that recovers
//! the spectrum back.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::SymmetricEigen;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Mat;

/// Relative eigenvalue gap below which the top-k spectrum is treated as
/// degenerate (identifiability of individual components is lost).
pub const SPECTRAL_GAP_TOL: f64 = 1e-10;

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic(SyntheticSpec),
    File { path: String, format: DatasetFormat },
    InMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Plain CSV, one sample per column, optional header row.
    CsvColumns,
    /// IDX image file (big-endian magic 0x00000803), images flattened
    /// row-major to columns.
    IdxImages,
}

/// Centered (or to-be-centered) data matrix, features by samples.
///
/// The Gram form `(1/n) X Xᵀ` is computed once on first use and cached;
/// all full-batch objective evaluations consume it, which makes the cost of
/// a training step independent of `n`.
#[derive(Debug)]
pub struct DataMatrix {
    values: Mat,
    centered: bool,
    provenance: Provenance,
    gram: OnceLock<Mat>,
}

impl Clone for DataMatrix {
    fn clone(&self) -> Self {
        DataMatrix {
            values: self.values.clone(),
            centered: self.centered,
            provenance: self.provenance.clone(),
            gram: OnceLock::new(),
        }
    }
}

impl DataMatrix {
    pub fn new(values: Mat, provenance: Provenance) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyMatrix("data matrix"));
        }
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if !values[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(DataMatrix {
            values,
            centered: false,
            provenance,
            gram: OnceLock::new(),
        })
    }

    fn new_centered(values: Mat, provenance: Provenance) -> Result<Self> {
        let mut d = DataMatrix::new(values, provenance)?;
        d.centered = true;
        Ok(d)
    }

    /// Features (rows).
    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    /// Samples (columns).
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// `(1/n) X Xᵀ`, computed once and cached.
    pub fn gram(&self) -> &Mat {
        self.gram.get_or_init(|| {
            let n = self.n() as f64;
            let mut g = &self.values * self.values.transpose();
            g /= n;
            g
        })
    }

    /// `(1/n) ‖X‖_F²` = trace of the Gram matrix.
    pub fn mean_square_norm(&self) -> f64 {
        self.gram().diagonal().sum()
    }

    /// Remove row means. Idempotent; marks the result as centered.
    pub fn center(&self) -> DataMatrix {
        let means = self.values.column_mean();
        let mut out = self.values.clone();
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] -= means[i];
            }
        }
        DataMatrix {
            values: out,
            centered: true,
            provenance: self.provenance.clone(),
            gram: OnceLock::new(),
        }
    }
}

/// Center a raw matrix (a convenience front end for [`DataMatrix::center`]).
pub fn center(raw: Mat) -> Result<DataMatrix> {
    Ok(DataMatrix::new(raw, Provenance::InMemory)?.center())
}

/// Top-k eigenstructure of `(1/n) X Xᵀ`: strictly descending eigenvalues
/// `sigma2` and the matrix `U` of corresponding orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    sigma2: Vec<f64>,
    u: Mat,
    k: usize,
}

impl Spectrum {
    /// Validates strict descent, positivity, and column orthonormality.
    pub fn new(sigma2: Vec<f64>, u: Mat) -> Result<Self> {
        let k = sigma2.len();
        if k == 0 {
            return Err(Error::EmptyMatrix("spectrum"));
        }
        if u.ncols() != k {
            return Err(Error::ShapeMismatch {
                context: "spectrum eigenvector count",
                expected: format!("{k} columns"),
                got: format!("{}", u.ncols()),
            });
        }
        if *sigma2.last().unwrap() <= 0.0 {
            return Err(Error::invalid(format!(
                "eigenvalue {k} is not positive: {}",
                sigma2[k - 1]
            )));
        }
        for i in 0..k - 1 {
            let gap = (sigma2[i] - sigma2[i + 1]) / sigma2[i].max(f64::MIN_POSITIVE);
            if gap < SPECTRAL_GAP_TOL {
                return Err(Error::DegenerateSpectrum {
                    i: i + 1,
                    j: i + 2,
                    gap,
                });
            }
        }
        let gram = u.transpose() * &u;
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - want).abs() > 1e-10 {
                    return Err(Error::invalid(format!(
                        "eigenvectors not orthonormal: (UᵀU)[{i}][{j}] = {}",
                        gram[(i, j)]
                    )));
                }
            }
        }
        Ok(Spectrum { sigma2, u, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Eigenvalues of `(1/n) X Xᵀ`, strictly descending.
    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    /// Orthonormal eigenvector matrix, m×k.
    pub fn u(&self) -> &Mat {
        &self.u
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    /// Keep the leading `k` components.
    pub fn truncate(&self, k: usize) -> Result<Spectrum> {
        if k == 0 || k > self.k {
            return Err(Error::invalid(format!(
                "cannot truncate spectrum of {} components to {k}",
                self.k
            )));
        }
        Ok(Spectrum {
            sigma2: self.sigma2[..k].to_vec(),
            u: self.u.columns(0, k).into_owned(),
            k,
        })
    }

    /// Smallest pairwise gap among the top-k eigenvalues.
    pub fn min_gap(&self) -> f64 {
        let mut g = f64::INFINITY;
        for i in 0..self.k - 1 {
            g = g.min(self.sigma2[i] - self.sigma2[i + 1]);
        }
        g
    }
}

/// Recipe for a synthetic dataset with a prescribed spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    /// Number of leading components reported in the returned [`Spectrum`].
    pub k: usize,
    /// Requested values of `sigma_i` (so `(1/n) X Xᵀ` has eigenvalues
    /// `sigma_i²`), descending, length `min(m, n)`.
    pub singular_values: Vec<f64>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::invalid("m, n, k must be positive"));
        }
        let r = self.m.min(self.n);
        if self.k > r {
            return Err(Error::invalid(format!(
                "k = {} exceeds min(m, n) = {r}",
                self.k
            )));
        }
        if self.singular_values.len() != r {
            return Err(Error::ShapeMismatch {
                context: "singular value count",
                expected: format!("{r}"),
                got: format!("{}", self.singular_values.len()),
            });
        }
        for (i, w) in self.singular_values.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(Error::invalid(format!(
                    "singular values must be descending (entries {i} and {})",
                    i + 1
                )));
            }
        }
        if self.singular_values.iter().any(|&s| s < 0.0) {
            return Err(Error::invalid("singular values must be non-negative"));
        }
        for i in 0..self.k.saturating_sub(1) {
            let a = self.singular_values[i];
            let b = self.singular_values[i + 1];
            if (a - b) / a.max(f64::MIN_POSITIVE) < SPECTRAL_GAP_TOL {
                return Err(Error::DuplicateSingularValues {
                    k: self.k,
                    i: i + 1,
                    j: i + 2,
                });
            }
        }
        if self.singular_values[self.k - 1] <= 0.0 {
            return Err(Error::invalid("top-k singular values must be positive"));
        }
        Ok(())
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on two uniforms; fixed call order keeps generation
    // bit-reproducible across platforms.
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = standard_normal(rng);
        }
    }
    m
}

/// Thin Q factor of a seeded standard-normal matrix: a reproducible
/// Haar-like orthonormal basis.
fn random_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let qr = random_matrix(rng, rows, cols).qr();
    qr.q().columns(0, cols).into_owned()
}

/// Like [`random_orthonormal`] but with every column orthogonal to the
/// all-ones vector, so data built from it has exactly zero row means.
fn random_orthonormal_centered(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    let mut g = random_matrix(rng, rows, cols);
    for j in 0..cols {
        let mean = g.column(j).sum() / rows as f64;
        for i in 0..rows {
            g[(i, j)] -= mean;
        }
    }
    let qr = g.qr();
    qr.q().columns(0, cols).into_owned()
}

/// Flip eigenvector columns so the largest-magnitude entry of each is
/// positive (first index wins ties). Solutions are only sign-identifiable,
/// so metrics must not care; this pins a convention so repeated
/// decompositions agree exactly.
fn canonicalize_signs(u: &mut Mat) {
    for j in 0..u.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..u.nrows() {
            let a = u[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
}

/// Build `X = Ũ diag(√n σ) Ṽᵀ` from seeded orthonormal factors and return it
/// together with its ground-truth top-k spectrum. The data comes out exactly
/// centered because `Ṽ`'s columns are constructed orthogonal to the all-ones
/// direction.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(DataMatrix, Spectrum)> {
    spec.validate()?;
    let r_full = spec.m.min(spec.n);
    let rank = spec
        .singular_values
        .iter()
        .take_while(|&&s| s > 0.0)
        .count();
    if rank > spec.n - 1 {
        return Err(Error::invalid(format!(
            "rank {rank} impossible for centered data with n = {} samples",
            spec.n
        )));
    }
    let _ = r_full;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut u_factor = random_orthonormal(&mut rng, spec.m, rank);
    canonicalize_signs(&mut u_factor);
    let v_factor = random_orthonormal_centered(&mut rng, spec.n, rank);

    let sqrt_n = (spec.n as f64).sqrt();
    let mut scaled = u_factor.clone();
    for j in 0..rank {
        let s = spec.singular_values[j] * sqrt_n;
        for i in 0..spec.m {
            scaled[(i, j)] *= s;
        }
    }
    let x = &scaled * v_factor.transpose();

    let sigma2: Vec<f64> = spec.singular_values[..spec.k]
        .iter()
        .map(|s| s * s)
        .collect();
    let u_top = u_factor.columns(0, spec.k).into_owned();
    let spectrum = Spectrum::new(sigma2, u_top)?;
    let data = DataMatrix::new_centered(x, Provenance::Synthetic(spec.clone()))?;
    Ok((data, spectrum))
}

/// Exact PCA oracle: top-k eigenpairs of `(1/n) X Xᵀ` by symmetric
/// eigendecomposition, sorted descending, signs canonicalized. Errors when
/// the top-k spectrum is degenerate (relative gap below
/// [`SPECTRAL_GAP_TOL`]) since individual components are then unidentifiable.
pub fn spectrum_of(x: &DataMatrix, k: usize) -> Result<Spectrum> {
    if !x.is_centered() {
        return Err(Error::invalid("spectrum_of requires a centered dataset"));
    }
    if k == 0 || k > x.m().min(x.n()) {
        return Err(Error::invalid(format!(
            "k = {k} out of range for {}x{} data",
            x.m(),
            x.n()
        )));
    }
    let eig = SymmetricEigen::new(x.gram().clone());
    let mut order: Vec<usize> = (0..x.m()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });

    let sigma2: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut u = Mat::zeros(x.m(), k);
    for (j, &src) in order[..k].iter().enumerate() {
        u.set_column(j, &eig.eigenvectors.column(src));
    }
    canonicalize_signs(&mut u);
    Spectrum::new(sigma2, u)
}

/// Load a dataset from disk. The result is *not* centered; callers decide.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<DataMatrix> {
    let path = path.as_ref();
    let provenance = Provenance::File {
        path: path.display().to_string(),
        format,
    };
    let values = match format {
        DatasetFormat::CsvColumns => parse_csv(path)?,
        DatasetFormat::IdxImages => parse_idx_images(path)?,
    };
    DataMatrix::new(values, provenance)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_csv(path: &Path) -> Result<Mat> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                if let Some(w) = width {
                    if vals.len() != w {
                        return Err(Error::Parse {
                            path: path.display().to_string(),
                            line: lineno + 1,
                            msg: format!("expected {w} fields, got {}", vals.len()),
                        });
                    }
                } else {
                    width = Some(vals.len());
                }
                rows.push(vals);
            }
            Err(e) => {
                // A non-numeric first line is an optional header.
                if rows.is_empty() && width.is_none() {
                    continue;
                }
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: e.to_string(),
                });
            }
        }
    }
    let m = rows.len();
    let n = width.unwrap_or(0);
    if m == 0 || n == 0 {
        return Err(Error::EmptyMatrix("csv dataset"));
    }
    Ok(Mat::from_fn(m, n, |i, j| rows[i][j]))
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

fn parse_idx_images(path: &Path) -> Result<Mat> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let path_s = path.display().to_string();
    let need = |offset: usize, len: usize| -> Result<()> {
        if bytes.len() < offset + len {
            Err(Error::IdxTruncated {
                path: path_s.clone(),
                offset: bytes.len(),
                needed: offset + len - bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    let read_u32 = |offset: usize| -> u32 {
        u32::from_be_bytes([
            bytes[offset],
            bytes[offset + 1],
            bytes[offset + 2],
            bytes[offset + 3],
        ])
    };

    need(0, 16)?;
    let magic = read_u32(0);
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::IdxBadMagic {
            path: path_s,
            magic,
        });
    }
    let count = read_u32(4) as usize;
    let rows = read_u32(8) as usize;
    let cols = read_u32(12) as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix("idx dataset"));
    }
    let pixels = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::invalid("idx image dimensions overflow"))?;
    let payload = count
        .checked_mul(pixels)
        .ok_or_else(|| Error::invalid("idx payload size overflows"))?;
    need(16, payload)?;

    let m = pixels;
    let mut out = Mat::zeros(m, count);
    for img in 0..count {
        let base = 16 + img * pixels;
        for p in 0..pixels {
            out[(p, img)] = bytes[base + p] as f64;
        }
    }
    Ok(out)
}
