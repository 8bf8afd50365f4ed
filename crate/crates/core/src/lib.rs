//! Simulation of integrated sensing and communication (ISAC) in a centralized
//! cell-free massive MIMO network.
//!
//! The crate covers the whole downlink pipeline:
//!
//! - [`scenario`]: configuration, AP/UE/target placement, array responses and
//!   large-scale gains.
//! - [`channel`]: local-scattering spatial correlation, correlated Rayleigh
//!   channels, Kronecker-model target-free (clutter) channels and Swerling-I RCS.
//! - [`estimation`]: pilot assignment and MMSE channel estimation.
//! - [`precoding`]: centralized RZF precoders and the nullspace sensing precoder.
//! - [`comm_metrics`]: hardening-bound downlink SINR/SE and its SOC coefficients.
//! - [`sensing_chain`]: transmitted ISAC signals and multi-static received vectors.
//! - [`detector`]: the MAPRT test statistic, its clutter-unaware variant,
//!   threshold calibration and detection probability.
//! - [`power_allocation`]: sensing-SINR quadratics, the concave-convex power
//!   allocation and the minimum-power baseline.
//! - [`experiments`]: batch sweeps writing CSV tables.
//!
//! The numerical core is generic over the real scalar type (any [`Real`]);
//! the aliases below fix it to `f64`, which is what the experiment harness uses.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod comm_metrics;
pub mod detector;
pub mod estimation;
pub mod experiments;
pub mod linalg;
pub mod power_allocation;
pub mod precoding;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod sensing_chain;
pub mod socp;

pub use scalar::Real;

/// Complex sample type used throughout the `f64` pipeline.
pub type Complex64 = nalgebra::Complex<f64>;
/// Dense complex matrix over `f64`.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex vector over `f64`.
pub type CVector = nalgebra::DVector<Complex64>;
/// Dense real matrix over `f64`.
pub type RMatrix = nalgebra::DMatrix<f64>;
/// Dense real vector over `f64`.
pub type RVector = nalgebra::DVector<f64>;

pub type SpatialCorrelation = channel::Covariance<f64>;
pub type TargetFreeLink = channel::TargetFreeLink<f64>;
pub type PrecoderSet = precoding::PrecoderSet<f64>;
pub type SinrCoefficients = comm_metrics::SinrCoefficients<f64>;
pub type SensingGeometry = sensing_chain::SensingGeometry<f64>;
pub type SensingSnapshot = sensing_chain::SensingSnapshot<f64>;
pub type MaprtDetector = detector::MaprtDetector<f64>;
pub type SimpleDetector = detector::SimpleDetector<f64>;
pub type SensingQuadratics = power_allocation::SensingQuadratics<f64>;
pub type PowerSolution = power_allocation::PowerSolution<f64>;
