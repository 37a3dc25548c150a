//! Linear autoencoders that learn ordered, axis-aligned principal components.
//!
//! A two-matrix linear model `W2 * W1` trained on reconstruction alone only
//! recovers the top-k principal subspace: any invertible map can be slipped
//! between encoder and decoder without changing the loss. This crate collects
//! the machinery for breaking that symmetry so the individual components come
//! out ordered and axis-aligned:
//!
//! * [`data`]: dataset construction, centering, and the exact PCA oracle
//!   every metric is measured against.
//! * [`objective`]: reconstruction, uniform/non-uniform weight decay, and
//!   stochastic/deterministic nested-dropout losses with hand-derived
//!   gradients.
//! * [`rag`]: the rotation-augmented gradient update, its Hebbian cousin,
//!   and a Lyapunov diagnostic for the rotation flow.
//! * [`optim`]: Nesterov / Adam steps and the full- and mini-batch training
//!   loops.
//! * [`metrics`]: axis-alignment distance, subspace distance,
//!   non-diagonality, and the transpose-balance residual.
//! * [`landscape`]: closed-form stationary points, condition-number lower
//!   bounds, and a finite-difference curvature probe that validates them.
//! * [`harness`]: config files, run records, sweeps, and CSV artifacts
//!   behind the `lae` command-line tool.
//! * [`plot`]: a deterministic SVG line-plot writer for the trace curves.
//!
//! ```
//! use lae_core::data::{make_synthetic, SyntheticSpec};
//! use lae_core::objective::RegularizerSpec;
//! use lae_core::optim::{epochs_to_threshold, train, MetricKind, OptimizerKind, TrainConfig};
//!
//! let spec = SyntheticSpec {
//!     m: 8,
//!     n: 64,
//!     k: 2,
//!     singular_values: vec![2.0, 1.0, 0.5, 0.4, 0.3, 0.25, 0.2, 0.15],
//!     seed: 7,
//! };
//! let (data, spectrum) = make_synthetic(&spec).unwrap();
//! let config = TrainConfig::new(RegularizerSpec::Rag, OptimizerKind::RagPlain, 0.05, 400, 0);
//! let out = train(&data, &spectrum, &config).unwrap();
//! assert!(epochs_to_threshold(&out.trace, MetricKind::DAlign, 0.3).is_some());
//! ```

pub mod data;
pub mod error;
pub mod harness;
pub mod landscape;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod plot;
pub mod rag;

pub use error::{Error, Result};

/// Dense matrix alias used across the crate.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense vector alias used across the crate.
pub type Vec64 = nalgebra::DVector<f64>;
