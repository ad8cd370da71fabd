//! Neural-operator numerics on uniform periodic grids.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: periodic grids, fields, mean-normalised DFTs, quadrature,
//!   Gaussian random field sampling and spectral resampling.
//! - [`sobolev`]: Bessel-form `H^s` norms, the derivative-sum oracle,
//!   `L∞` norms and the embedding-constant estimator.
//! - [`operator`]: the lift / kernel-layer / projection architecture,
//!   Lipschitz certificates, contraction rescaling, fixed-point iteration
//!   and the `NOLABCK1` checkpoint format.
//! - [`training`]: target operators, datasets (`NOLABDS1`), the squared
//!   `L²` loss with hand-written reverse-mode gradients, and SGD/Adam.
//! - [`verification`]: one experiment per property, each returning a
//!   [`verification::VerifyReport`].
//!
//! Embarrassingly parallel loops (Monte-Carlo trials, dataset generation,
//! per-sample gradients) go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iterators
//! otherwise. Reductions always happen in index order, so results do not
//! depend on the thread count.

pub mod binio;
pub mod grid;
pub mod operator;
pub mod par;
pub mod rng;
pub mod sobolev;
pub mod stats;
pub mod training;
pub mod verification;

pub use grid::{Field, GridSpec, GrfSampler, Spectrum};
pub use operator::{
    Activation, KernelKind, KernelSpec, LipschitzCert, NeuralOperator, OperatorConfig,
};
pub use training::{Dataset, TargetOperator, TrainConfig};
pub use verification::VerifyReport;
