//! Downlink hardening-bound SINR / SE and the SOC coefficients derived from it.

use nalgebra::{Complex, DMatrix, DVector};

use crate::estimation::ChannelEstimate;
use crate::precoding::PrecoderSet;
use crate::scalar::{pairwise_sum, Real};

/// Inner products needed from one (channel, precoder) realization.
#[derive(Debug, Clone, PartialEq)]
pub struct CommSample<T: Real> {
    /// `h_i^H w_i`, per UE.
    pub desired: Vec<Complex<T>>,
    /// `|h_i^H w_j|²` with column 0 holding `|h̃_i^H w_0|²`; `n_ue × (n_ue+1)`.
    pub power: DMatrix<T>,
}

impl<T: Real> CommSample<T> {
    /// Precoders stream `j ≥ 1` belongs to UE `j-1`; stream 0 is the sensing beam.
    pub fn new(estimate: &ChannelEstimate<T>, precoders: &PrecoderSet<T>) -> Self {
        let n_ue = estimate.h.len();
        let mut desired = Vec::with_capacity(n_ue);
        let mut power = DMatrix::zeros(n_ue, n_ue + 1);
        for i in 0..n_ue {
            let h = &estimate.h[i];
            power[(i, 0)] = estimate.error(i).dotc(precoders.w(0)).norm_sqr();
            for j in 1..=n_ue {
                let v = h.dotc(precoders.w(j));
                power[(i, j)] = v.norm_sqr();
                if j == i + 1 {
                    desired.push(v);
                }
            }
        }
        Self { desired, power }
    }
}

/// Coefficients of the hardening-bound SINR.
///
/// Stream indexing follows the precoders: column 0 is the sensing stream,
/// column `j ≥ 1` is UE `j-1`. `a[(i, i+1)]` is the beamforming-uncertainty
/// term `√(E|h_i^H w_i|² − b_i²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrCoefficients<T: Real> {
    pub b: DVector<T>,
    pub a: DMatrix<T>,
    pub sigma_n: T,
}

/// Sample-mean coefficient estimates over an ensemble. Each sample's sensing
/// beam should point at an independently drawn hotspot location.
pub fn estimate_coefficients<T: Real>(samples: &[CommSample<T>], sigma_n: T) -> SinrCoefficients<T> {
    assert!(!samples.is_empty(), "empty ensemble");
    let n_ue = samples[0].desired.len();
    let n = T::from_count(samples.len());
    let mean = |f: &dyn Fn(&CommSample<T>) -> T| -> T {
        let vals: Vec<T> = samples.iter().map(f).collect();
        pairwise_sum(&vals) / n
    };
    let mut b = DVector::zeros(n_ue);
    let mut a = DMatrix::zeros(n_ue, n_ue + 1);
    for i in 0..n_ue {
        let re = mean(&|s| s.desired[i].re);
        let im = mean(&|s| s.desired[i].im);
        let b2 = re * re + im * im;
        b[i] = b2.sqrt();
        for j in 0..=n_ue {
            let e = mean(&|s| s.power[(i, j)]);
            let v = if j == i + 1 { e - b2 } else { e };
            a[(i, j)] = v.max(T::zero()).sqrt();
        }
    }
    SinrCoefficients { b, a, sigma_n }
}

impl<T: Real> SinrCoefficients<T> {
    pub fn n_ue(&self) -> usize {
        self.b.len()
    }

    /// Single-UE coefficients for closed-form checks.
    pub fn from_parts(b: DVector<T>, a: DMatrix<T>, sigma_n: T) -> Self {
        assert_eq!(a.nrows(), b.len());
        assert_eq!(a.ncols(), b.len() + 1);
        Self { b, a, sigma_n }
    }
}

/// Per-UE SINR for powers `rho = [ρ_0, ρ_1, …, ρ_{N_ue}]` (linear).
pub fn downlink_sinr<T: Real>(rho: &DVector<T>, coeffs: &SinrCoefficients<T>) -> DVector<T> {
    let n_ue = coeffs.n_ue();
    assert_eq!(rho.len(), n_ue + 1, "rho includes the sensing stream");
    DVector::from_fn(n_ue, |i, _| {
        let mut interference = coeffs.sigma_n * coeffs.sigma_n;
        for j in 0..=n_ue {
            interference += rho[j] * coeffs.a[(i, j)] * coeffs.a[(i, j)];
        }
        rho[i + 1] * coeffs.b[i] * coeffs.b[i] / interference
    })
}

/// SOC form of `SINR_i ≥ γ`:
/// `‖[a_{i,0}ρ̃_0, …, a_{i,N}ρ̃_N, σ_n]‖ ≤ b_i ρ̃_i / √γ`.
pub fn sinr_soc_satisfied<T: Real>(rho_sqrt: &DVector<T>, coeffs: &SinrCoefficients<T>, gamma: T, tol: T) -> Vec<bool> {
    (0..coeffs.n_ue())
        .map(|i| {
            let mut sq = coeffs.sigma_n * coeffs.sigma_n;
            for j in 0..rho_sqrt.len() {
                let v = coeffs.a[(i, j)] * rho_sqrt[j];
                sq += v * v;
            }
            sq.sqrt() <= coeffs.b[i] * rho_sqrt[i + 1] / gamma.sqrt() + tol
        })
        .collect()
}

/// `(τ_c − τ_p)/τ_c · log2(1 + sinr)`.
pub fn spectral_efficiency(sinr: f64, tau_c: usize, tau_p: usize) -> f64 {
    (tau_c - tau_p) as f64 / tau_c as f64 * (1.0 + sinr).log2()
}
