//! Pilot assignment and MMSE channel estimation.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::channel::{sample_correlated_rayleigh, Covariance};
use crate::linalg::{hermitian_part, hpd_inverse, LinalgError};
use crate::rng::complex_normal_vector;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("tau_p must be at least 1")]
    NoPilots,
    #[error("correlation table is not rectangular")]
    Shape,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Round-robin pilot indices; distinct whenever `tau_p >= n_ue`.
pub fn assign_pilots(n_ue: usize, tau_p: usize) -> Result<Vec<usize>, EstimationError> {
    if tau_p == 0 {
        return Err(EstimationError::NoPilots);
    }
    Ok((0..n_ue).map(|i| i % tau_p).collect())
}

/// UEs sharing UE `i`'s pilot (always contains `i`).
pub fn pilot_sharing_set(pilots: &[usize], i: usize) -> Vec<usize> {
    (0..pilots.len()).filter(|&j| pilots[j] == pilots[i]).collect()
}

/// `Ψ = Σ_{j∈𝒫} η_j τ_p R_j + σ² I`.
pub fn pilot_covariance<T: Real>(sharing: &[&Covariance<T>], etas: &[T], tau_p: usize, noise_var: T) -> DMatrix<Complex<T>> {
    let m = sharing.first().map(|r| r.dim()).unwrap_or(0);
    let mut psi = DMatrix::from_diagonal_element(m, m, Complex::new(noise_var, T::zero()));
    for (r, &eta) in sharing.iter().zip(etas) {
        psi += r.matrix().scale(eta * T::from_count(tau_p));
    }
    psi
}

/// `ĥ = √(η τ_p) R Ψ⁻¹ y`.
pub fn mmse_estimate<T: Real>(
    y: &DVector<Complex<T>>,
    r: &Covariance<T>,
    psi: &DMatrix<Complex<T>>,
    eta: T,
    tau_p: usize,
) -> Result<DVector<Complex<T>>, EstimationError> {
    let psi_inv = hpd_inverse(psi, "pilot covariance")?;
    Ok((r.matrix() * psi_inv * y).scale((eta * T::from_count(tau_p)).sqrt()))
}

/// `C = R − η τ_p R Ψ⁻¹ R`.
pub fn error_covariance<T: Real>(
    r: &Covariance<T>,
    psi: &DMatrix<Complex<T>>,
    eta: T,
    tau_p: usize,
) -> Result<DMatrix<Complex<T>>, EstimationError> {
    let psi_inv = hpd_inverse(psi, "pilot covariance")?;
    let explained = (r.matrix() * psi_inv * r.matrix()).scale(eta * T::from_count(tau_p));
    Ok(hermitian_part(&(r.matrix() - explained)))
}

/// True channels and their MMSE estimates for one coherence block. Vectors are
/// stacked AP-major: entries `k·M .. (k+1)·M` belong to AP `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate<T: Real> {
    pub h: Vec<DVector<Complex<T>>>,
    pub h_hat: Vec<DVector<Complex<T>>>,
}

impl<T: Real> ChannelEstimate<T> {
    pub fn error(&self, i: usize) -> DVector<Complex<T>> {
        &self.h[i] - &self.h_hat[i]
    }
}

/// Precomputed MMSE filters `√(η τ_p) R_{i,k} Ψ⁻¹_{t_i,k}` and error
/// covariances for every (UE, AP) pair.
#[derive(Debug, Clone)]
pub struct MmseEstimator<T: Real> {
    pub pilots: Vec<usize>,
    pub tau_p: usize,
    pub pilot_power: T,
    pub noise_var: T,
    m: usize,
    n_ap: usize,
    /// `[ue][ap]`.
    correlations: Vec<Vec<Covariance<T>>>,
    filters: Vec<Vec<DMatrix<Complex<T>>>>,
    errors: Vec<Vec<DMatrix<Complex<T>>>>,
}

impl<T: Real> MmseEstimator<T> {
    /// `correlations[i][k]` is `R_{i,k}`; all UEs use pilot power `pilot_power`.
    pub fn new(
        correlations: Vec<Vec<Covariance<T>>>,
        tau_p: usize,
        pilot_power: T,
        noise_var: T,
    ) -> Result<Self, EstimationError> {
        let n_ue = correlations.len();
        let pilots = assign_pilots(n_ue, tau_p)?;
        let n_ap = correlations.first().map(|r| r.len()).unwrap_or(0);
        if correlations.iter().any(|r| r.len() != n_ap) {
            return Err(EstimationError::Shape);
        }
        let m = correlations.first().and_then(|r| r.first()).map(|c| c.dim()).unwrap_or(0);
        let gain = (pilot_power * T::from_count(tau_p)).sqrt();
        let mut filters = vec![Vec::with_capacity(n_ap); n_ue];
        let mut errors = vec![Vec::with_capacity(n_ap); n_ue];
        for k in 0..n_ap {
            for i in 0..n_ue {
                let sharing: Vec<&Covariance<T>> =
                    pilot_sharing_set(&pilots, i).into_iter().map(|j| &correlations[j][k]).collect();
                let etas = vec![pilot_power; sharing.len()];
                let psi = pilot_covariance(&sharing, &etas, tau_p, noise_var);
                let psi_inv = hpd_inverse(&psi, "pilot covariance")?;
                let r = correlations[i][k].matrix();
                let filt = (r * &psi_inv).scale(gain);
                let c = hermitian_part(&(r - &filt * r.scale(gain)));
                filters[i].push(filt);
                errors[i].push(c);
            }
        }
        Ok(Self {
            pilots,
            tau_p,
            pilot_power,
            noise_var,
            m,
            n_ap,
            correlations,
            filters,
            errors,
        })
    }

    pub fn n_ue(&self) -> usize {
        self.correlations.len()
    }

    pub fn n_ap(&self) -> usize {
        self.n_ap
    }

    pub fn antennas(&self) -> usize {
        self.m
    }

    pub fn correlation(&self, i: usize, k: usize) -> &Covariance<T> {
        &self.correlations[i][k]
    }

    /// Error covariance `C_{i,k}`.
    pub fn error_covariance(&self, i: usize, k: usize) -> &DMatrix<Complex<T>> {
        &self.errors[i][k]
    }

    /// Estimates from given channels and pilot noise (`noise[t][k]`, unit
    /// variance before scaling by σ).
    pub fn estimate_from(
        &self,
        h: Vec<DVector<Complex<T>>>,
        noise: &[Vec<DVector<Complex<T>>>],
    ) -> ChannelEstimate<T> {
        let m = self.m;
        let gain = (self.pilot_power * T::from_count(self.tau_p)).sqrt();
        let sigma = self.noise_var.sqrt();
        let mut h_hat = vec![DVector::zeros(self.n_ap * m); self.n_ue()];
        for k in 0..self.n_ap {
            // received (despread) pilot signal per pilot index
            let mut y: Vec<DVector<Complex<T>>> = noise.iter().map(|n| n[k].scale(sigma)).collect();
            for (i, hi) in h.iter().enumerate() {
                y[self.pilots[i]] += hi.rows(k * m, m).scale(gain);
            }
            for (i, est) in h_hat.iter_mut().enumerate() {
                let v = &self.filters[i][k] * &y[self.pilots[i]];
                est.rows_mut(k * m, m).copy_from(&v);
            }
        }
        ChannelEstimate { h, h_hat }
    }

    /// Draws true channels and pilot noise, then estimates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelEstimate<T> {
        let m = self.m;
        let h: Vec<DVector<Complex<T>>> = self
            .correlations
            .iter()
            .map(|row| {
                let mut v = DVector::zeros(self.n_ap * m);
                for (k, r) in row.iter().enumerate() {
                    v.rows_mut(k * m, m).copy_from(&sample_correlated_rayleigh(r, rng));
                }
                v
            })
            .collect();
        let noise: Vec<Vec<DVector<Complex<T>>>> = (0..self.tau_p.min(self.n_ue().max(1)))
            .map(|_| (0..self.n_ap).map(|_| complex_normal_vector(m, rng)).collect())
            .collect();
        self.estimate_from(h, &noise)
    }
}
