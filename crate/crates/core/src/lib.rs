//! Core algorithms for semi-supervised node classification on the contextual
//! stochastic block model (CSBM).
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. It covers:
//!
//! * [`csbm`]: seeded sampling of `(A, X)` and of the label mask,
//! * [`graph_ops`]: the averaging convolution `D⁻¹(A + I)X` and inter-class
//!   edge-noise injection,
//! * [`optim`]: binary cross-entropy, its gradient, and a projected-gradient
//!   solver for the norm-ball constrained problem,
//! * [`separability`]: an exact LP certificate of strict linear separability
//!   plus a brute-force oracle for tiny instances,
//! * [`theory`]: closed-form rates, thresholds and the ansatz classifier.
//!
//! All floating point math goes through `libm` so results are identical on
//! every platform.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod csbm;
pub mod error;
pub mod graph;
pub mod graph_ops;
pub mod lp;
pub mod math;
pub mod matrix;
pub mod optim;
pub mod rng;
pub mod separability;
pub mod theory;

pub use crate::csbm::{
    concentration_report, sample_csbm, sample_mask, ConcentrationReport, CsbmParams, Sample,
};
pub use crate::error::{Error, Result};
pub use crate::graph::Adjacency;
pub use crate::graph_ops::{
    conditional_means, convolve, inject_inter_class_noise, ConditionalMeans, ConvolvedFeatures,
    NoiseInjection,
};
pub use crate::matrix::Matrix;
pub use crate::optim::{
    bce_gradient, bce_loss, project_to_ball, solve_opt, Classifier, LossReport, Solution,
    StepMode, TraceEntry, TrainConfig,
};
pub use crate::separability::{
    brute_force_separability, certify_separability, certify_subset, LpStatus,
    SeparabilityCertificate,
};
pub use crate::theory::{
    ansatz_classifier, ansatz_loss_rate, gamma_snr, ood_loss_rate, raw_loss_lower_bound,
    thresholds, TheoryContext, Thresholds,
};
