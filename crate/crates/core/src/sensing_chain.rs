//! Transmitted ISAC signals and multi-static received vectors.
//!
//! Ordering conventions: the RCS vector `α` and the stacked clutter vector are
//! receiver-major (`r · N_tx + k`); received samples are kept per receiver as
//! `M × τ` matrices whose column `m` is `y_r[m]`.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;

use crate::channel::ClutterRealization;
use crate::precoding::PrecoderSet;
use crate::rng::complex_normal_matrix;
use crate::scalar::{cre, Real};
use crate::scenario::{array_response, bistatic_gain, DomainError, NetworkGeometry};

/// Array responses and bistatic gains toward the candidate target location.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingGeometry<T: Real> {
    pub m: usize,
    /// `a(φ_k, ϑ_k)` per transmitter.
    pub a_tx: Vec<DVector<Complex<T>>>,
    /// `a(φ_r, θ_r)` per receiver.
    pub a_rx: Vec<DVector<Complex<T>>>,
    /// `β_{r,k}`, `n_rx × n_tx`.
    pub beta: DMatrix<T>,
}

impl<T: Real> SensingGeometry<T> {
    pub fn new(geometry: &NetworkGeometry, m: usize, carrier_freq: f64) -> Result<Self, DomainError> {
        let resp = |ang: &crate::scenario::Angles| array_response(T::lit(ang.azimuth), T::lit(ang.elevation), m);
        let mut beta = DMatrix::zeros(geometry.n_rx(), geometry.n_tx());
        for r in 0..geometry.n_rx() {
            for k in 0..geometry.n_tx() {
                beta[(r, k)] = bistatic_gain(T::lit(geometry.d_tx[k]), T::lit(geometry.d_rx[r]), T::lit(carrier_freq))?;
            }
        }
        Ok(Self {
            m,
            a_tx: geometry.tx_angles.iter().map(resp).collect(),
            a_rx: geometry.rx_angles.iter().map(resp).collect(),
            beta,
        })
    }

    pub fn n_tx(&self) -> usize {
        self.a_tx.len()
    }

    pub fn n_rx(&self) -> usize {
        self.a_rx.len()
    }
}

/// i.i.d. `CN(0, 1)` symbols, `n_streams × τ`; row 0 is the sensing stream.
pub fn draw_symbols<T: Real, R: Rng + ?Sized>(n_streams: usize, tau: usize, rng: &mut R) -> DMatrix<Complex<T>> {
    complex_normal_matrix(n_streams, tau, rng)
}

/// `x_k[m] = W_k diag(ρ̃) s[m]` for every AP; each entry is `M × τ`.
pub fn transmit_signal<T: Real>(
    precoders: &PrecoderSet<T>,
    rho_sqrt: &DVector<T>,
    symbols: &DMatrix<Complex<T>>,
) -> Vec<DMatrix<Complex<T>>> {
    assert_eq!(rho_sqrt.len(), precoders.n_streams());
    assert_eq!(symbols.nrows(), precoders.n_streams());
    let weighted = DMatrix::from_fn(symbols.nrows(), symbols.ncols(), |i, m| symbols[(i, m)] * rho_sqrt[i]);
    (0..precoders.n_ap()).map(|k| precoders.ap_matrix(k) * &weighted).collect()
}

/// `g_{r,k}[m] = √β_{r,k} a_r (a_k^T x_k[m])`.
pub fn known_reflection<T: Real>(geometry: &SensingGeometry<T>, r: usize, k: usize, x_k: &DVector<Complex<T>>) -> DVector<Complex<T>> {
    let u = geometry.a_tx[k].transpose() * x_k;
    geometry.a_rx[r].scale(geometry.beta[(r, k)].sqrt()) * u[(0, 0)]
}

/// Everything the receivers know about one sensing block: symbols, transmitted
/// signals and the target-path coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingSnapshot<T: Real> {
    pub geometry: SensingGeometry<T>,
    pub symbols: DMatrix<Complex<T>>,
    /// `x_k`, `M × τ` per transmitter.
    pub x: Vec<DMatrix<Complex<T>>>,
    /// `c_{r,k}[m] = √β_{r,k} a_k^T x_k[m]`: per receiver an `n_tx × τ` matrix,
    /// so `G_r[m] = a_r c_r[m]^T`.
    coeff: Vec<DMatrix<Complex<T>>>,
}

impl<T: Real> SensingSnapshot<T> {
    pub fn new(
        geometry: SensingGeometry<T>,
        precoders: &PrecoderSet<T>,
        rho_sqrt: &DVector<T>,
        symbols: DMatrix<Complex<T>>,
    ) -> Self {
        let x = transmit_signal(precoders, rho_sqrt, &symbols);
        Self::from_signals(geometry, symbols, x)
    }

    pub fn from_signals(geometry: SensingGeometry<T>, symbols: DMatrix<Complex<T>>, x: Vec<DMatrix<Complex<T>>>) -> Self {
        let tau = symbols.ncols();
        let coeff = (0..geometry.n_rx())
            .map(|r| {
                DMatrix::from_fn(geometry.n_tx(), tau, |k, m| {
                    let u = (geometry.a_tx[k].transpose() * x[k].column(m))[(0, 0)];
                    u * geometry.beta[(r, k)].sqrt()
                })
            })
            .collect();
        Self { geometry, symbols, x, coeff }
    }

    pub fn tau(&self) -> usize {
        self.symbols.ncols()
    }

    pub fn m(&self) -> usize {
        self.geometry.m
    }

    pub fn n_tx(&self) -> usize {
        self.geometry.n_tx()
    }

    pub fn n_rx(&self) -> usize {
        self.geometry.n_rx()
    }

    /// `x[m]`: all APs' signals stacked, length `N_tx · M`.
    pub fn x_stacked(&self, m: usize) -> DVector<Complex<T>> {
        let mm = self.m();
        let mut v = DVector::zeros(self.n_tx() * mm);
        for (k, xk) in self.x.iter().enumerate() {
            v.rows_mut(k * mm, mm).copy_from(&xk.column(m));
        }
        v
    }

    /// `c_r` (`n_tx × τ`).
    pub fn target_coefficients(&self, r: usize) -> &DMatrix<Complex<T>> {
        &self.coeff[r]
    }

    /// `G_r[m]`, `M × N_tx`.
    pub fn g_matrix(&self, r: usize, m: usize) -> DMatrix<Complex<T>> {
        &self.geometry.a_rx[r] * self.coeff[r].column(m).transpose()
    }

    /// Dense `G[m] = blockdiag_r G_r[m]` (oracle use).
    pub fn g_dense(&self, m: usize) -> DMatrix<Complex<T>> {
        let (mm, nt, nr) = (self.m(), self.n_tx(), self.n_rx());
        let mut g = DMatrix::zeros(nr * mm, nr * nt);
        for r in 0..nr {
            g.view_mut((r * mm, r * nt), (mm, nt)).copy_from(&self.g_matrix(r, m));
        }
        g
    }

    /// Dense `X[m] = I_{N_rx} ⊗ (x[m]^T ⊗ I_M)` (oracle use).
    pub fn x_dense(&self, m: usize) -> DMatrix<Complex<T>> {
        let (mm, nr) = (self.m(), self.n_rx());
        let xt = self.x_stacked(m).transpose();
        let block = xt.kronecker(&DMatrix::<Complex<T>>::identity(mm, mm));
        DMatrix::<Complex<T>>::identity(nr, nr).kronecker(&block)
    }

    /// `G_r α_r` for all `m`, `M × τ`.
    pub fn target_echo(&self, r: usize, alpha: &DVector<Complex<T>>) -> DMatrix<Complex<T>> {
        let nt = self.n_tx();
        let ar = alpha.rows(r * nt, nt);
        let scalars = ar.transpose() * &self.coeff[r];
        &self.geometry.a_rx[r] * scalars
    }

    /// `Σ_k H_{r,k} x_k`, `M × τ`.
    pub fn clutter_echo(&self, r: usize, clutter: &ClutterRealization<T>) -> DMatrix<Complex<T>> {
        let mut acc = DMatrix::zeros(self.m(), self.tau());
        for (k, xk) in self.x.iter().enumerate() {
            acc += clutter.link(r, k) * xk;
        }
        acc
    }

    /// Received samples per receiver:
    /// `y_r = G_r α_r · 1{H1} + Σ_k H_{r,k} x_k + σ n_r`, with unit-variance
    /// `noise[r]` supplied by the caller.
    pub fn received_with_noise(
        &self,
        alpha: Option<&DVector<Complex<T>>>,
        clutter: Option<&ClutterRealization<T>>,
        sigma_n: T,
        noise: &[DMatrix<Complex<T>>],
    ) -> Vec<DMatrix<Complex<T>>> {
        (0..self.n_rx())
            .map(|r| {
                let mut y = noise[r].scale(sigma_n);
                if let Some(a) = alpha {
                    y += self.target_echo(r, a);
                }
                if let Some(c) = clutter {
                    y += self.clutter_echo(r, c);
                }
                y
            })
            .collect()
    }

    /// As [`Self::received_with_noise`], drawing the noise from `rng`.
    pub fn synthesize_received<R: Rng + ?Sized>(
        &self,
        alpha: Option<&DVector<Complex<T>>>,
        clutter: Option<&ClutterRealization<T>>,
        sigma_n: T,
        rng: &mut R,
    ) -> Vec<DMatrix<Complex<T>>> {
        let noise: Vec<DMatrix<Complex<T>>> =
            (0..self.n_rx()).map(|_| complex_normal_matrix(self.m(), self.tau(), rng)).collect();
        self.received_with_noise(alpha, clutter, sigma_n, &noise)
    }
}

/// Stacks per-receiver samples into `y[m]` (length `N_rx · M`).
pub fn stack_received<T: Real>(y: &[DMatrix<Complex<T>>], m: usize) -> DVector<Complex<T>> {
    let mm = y[0].nrows();
    let mut v = DVector::from_element(y.len() * mm, cre(T::zero()));
    for (r, yr) in y.iter().enumerate() {
        v.rows_mut(r * mm, mm).copy_from(&yr.column(m));
    }
    v
}
