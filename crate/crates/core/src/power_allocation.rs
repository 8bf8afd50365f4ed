//! Sensing-SINR quadratic forms, concave-convex (CCP) power allocation and the
//! communication-centric minimum-power baseline.
//!
//! Power variables are amplitudes `ρ̃ = [√ρ_0, …, √ρ_{N_ue}]`; index 0 is the
//! sensing stream. Internally everything is normalized by `P_tx` (powers) and
//! by the sensing noise floor so the cone programs stay well scaled.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use thiserror::Error;

use crate::channel::{ClutterField, Covariance};
use crate::comm_metrics::{downlink_sinr, SinrCoefficients};
use crate::precoding::{NormStats, PrecoderSet};
use crate::scalar::Real;
use crate::sensing_chain::SensingGeometry;
use crate::socp::{solve, ConeBuilder, SocpError, SolverOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("communication constraints infeasible for UEs {violated:?}")]
    Infeasible { violated: Vec<usize> },
    #[error(transparent)]
    Solver(#[from] SocpError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Real parts of the sensing-SINR quadratic forms plus the noise floor
/// `τ M N_rx σ²`. The complex forms are kept for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingQuadratics<T: Real> {
    pub a_complex: DMatrix<Complex<T>>,
    pub b_complex: DMatrix<Complex<T>>,
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub noise_floor: T,
}

fn real_symmetric<T: Real>(m: &DMatrix<Complex<T>>) -> DMatrix<T> {
    let re = m.map(|z| z.re);
    (&re + re.transpose()).scale(T::lit(0.5))
}

/// `P_pq = Σ_m conj(s_p[m]) s_q[m]` over the first `tau` symbols.
fn symbol_gram<T: Real>(symbols: &DMatrix<Complex<T>>, tau: usize) -> DMatrix<Complex<T>> {
    let s = symbols.columns(0, tau);
    s.conjugate() * s.transpose()
}

/// Builds `A` (target echo energy) and `B` (clutter energy) so that, for real
/// `ρ̃`, `Σ_m E‖G[m]α‖² = ρ̃ᵀ A_r ρ̃` and `Σ_m E‖X[m]𝔥‖² = ρ̃ᵀ B_r ρ̃`.
pub fn build_quadratics<T: Real>(
    geometry: &SensingGeometry<T>,
    precoders: &PrecoderSet<T>,
    symbols: &DMatrix<Complex<T>>,
    tau: usize,
    clutter: Option<&ClutterField<T>>,
    r_rcs: &Covariance<T>,
    noise_var: T,
) -> Result<SensingQuadratics<T>, PowerError> {
    let (nt, nr) = (geometry.n_tx(), geometry.n_rx());
    let ns = precoders.n_streams();
    if symbols.nrows() != ns || symbols.ncols() < tau {
        return Err(PowerError::Dimension(format!("symbols {}x{}, need {ns}x{tau}", symbols.nrows(), symbols.ncols())));
    }
    if r_rcs.dim() != nt * nr || precoders.n_ap() != nt {
        return Err(PowerError::Dimension("RCS covariance or precoder size".into()));
    }
    let gram = symbol_gram(symbols, tau);
    // u_k^T = a_k^T W_k
    let u: Vec<nalgebra::RowDVector<Complex<T>>> = (0..nt).map(|k| geometry.a_tx[k].transpose() * precoders.ap_matrix(k)).collect();
    let mut q = DMatrix::<Complex<T>>::zeros(ns, ns);
    for r in 0..nr {
        let ar2 = geometry.a_rx[r].norm_squared();
        for k in 0..nt {
            for j in 0..nt {
                let cov = r_rcs.matrix()[(r * nt + k, r * nt + j)];
                let w = (geometry.beta[(r, k)] * geometry.beta[(r, j)]).sqrt() * ar2;
                let coef = cov * w;
                if coef.norm_sqr() == T::zero() {
                    continue;
                }
                // Q_pq += coef · u_kp · conj(u_jq)
                q += (u[k].transpose() * u[j].conjugate()) * coef;
            }
        }
    }
    let a_complex = q.component_mul(&gram.conjugate());
    let mut bq = DMatrix::<Complex<T>>::zeros(ns, ns);
    if let Some(field) = clutter {
        for r in 0..nr {
            for k in 0..nt {
                let wk = precoders.ap_matrix(k);
                bq += wk.adjoint() * field.link(r, k).interference_gram() * wk;
            }
        }
    }
    let b_complex = bq.component_mul(&gram);
    Ok(SensingQuadratics {
        a: real_symmetric(&a_complex),
        b: real_symmetric(&b_complex),
        a_complex,
        b_complex,
        noise_floor: T::from_count(tau * geometry.m * nr) * noise_var,
    })
}

impl<T: Real> SensingQuadratics<T> {
    /// Same target term, clutter ignored (`B = 0`).
    pub fn without_clutter(&self) -> Self {
        let n = self.a.nrows();
        Self {
            a_complex: self.a_complex.clone(),
            b_complex: DMatrix::zeros(n, n),
            a: self.a.clone(),
            b: DMatrix::zeros(n, n),
            noise_floor: self.noise_floor,
        }
    }

    pub fn n_streams(&self) -> usize {
        self.a.nrows()
    }
}

/// `ρ̃ᵀA_rρ̃ / (τ M N_rx σ² + ρ̃ᵀB_rρ̃)`.
pub fn sensing_sinr<T: Real>(rho_sqrt: &DVector<T>, q: &SensingQuadratics<T>) -> T {
    let num = rho_sqrt.dot(&(&q.a * rho_sqrt));
    let den = q.noise_floor + rho_sqrt.dot(&(&q.b * rho_sqrt));
    num / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolution<T: Real> {
    /// `ρ̃`, in √W.
    pub rho_sqrt: DVector<T>,
    /// Slack `t` (W): the sensing interference-plus-noise bound.
    pub t: T,
    pub sensing_sinr: T,
    pub comm_sinr: DVector<T>,
    /// Average transmit power per AP (W).
    pub ap_power: DVector<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Sensing SINR after each accepted iterate (first entry: start point).
    pub history: Vec<T>,
}

impl<T: Real> PowerSolution<T> {
    pub fn rho(&self) -> DVector<T> {
        self.rho_sqrt.map(|v| v * v)
    }

    pub fn total_power(&self) -> T {
        self.rho_sqrt.norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpOptions {
    /// Relative tolerance on the surrogate improvement.
    pub epsilon: f64,
    pub max_iters: usize,
    pub solver: SolverOptions,
}

impl Default for CcpOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iters: 50,
            solver: SolverOptions::default(),
        }
    }
}

/// Which streams may carry power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensingBeam {
    /// `ρ_0 = 0`.
    Off,
    /// `ρ_0` optimized.
    On,
}

/// Communication and power constraints in normalized variables
/// `r = ρ̃ / √P_tx`.
struct Constraints<'a, T: Real> {
    coeffs: &'a SinrCoefficients<T>,
    stats: &'a NormStats<T>,
    gamma: T,
    /// `√P_tx / σ_n`.
    snr_amp: T,
    beam: SensingBeam,
}

impl<'a, T: Real> Constraints<'a, T> {
    fn new(coeffs: &'a SinrCoefficients<T>, stats: &'a NormStats<T>, gamma: T, p_tx: T, beam: SensingBeam) -> Result<Self, PowerError> {
        let ns = coeffs.n_ue() + 1;
        if stats.mean_sq.nrows() != ns {
            return Err(PowerError::Dimension("norm statistics vs SINR coefficients".into()));
        }
        Ok(Self {
            coeffs,
            stats,
            gamma,
            snr_amp: p_tx.sqrt() / coeffs.sigma_n,
            beam,
        })
    }

    fn ns(&self) -> usize {
        self.coeffs.n_ue() + 1
    }

    /// Adds power, nonnegativity and SINR constraints. Variables are
    /// `[r (ns); extra...]`; `margin` optionally gives, per UE, a variable
    /// index and the coefficient it enters each SINR cone's right-hand side with.
    fn add(&self, cb: &mut ConeBuilder<T>, n: usize, margin: Option<(&dyn Fn(usize) -> usize, T)>) {
        let ns = self.ns();
        // with the beam off `r_0 = 0` is an equality; a redundant `r_0 ≥ 0`
        // row would leave the dual set unbounded
        let first = if self.beam == SensingBeam::Off { 1 } else { 0 };
        for i in first..ns {
            let mut g = DVector::zeros(n);
            g[i] = -T::one();
            cb.linear(g, T::zero());
        }
        for k in 0..self.stats.n_ap() {
            let f = self.stats.f_diag(k);
            let mut fm = DMatrix::zeros(ns, n);
            for i in 0..ns {
                fm[(i, i)] = f[i];
            }
            cb.soc(DVector::zeros(n), T::one(), fm, DVector::zeros(ns));
        }
        let inv_sqrt_gamma = T::one() / self.gamma.sqrt();
        for ue in 0..self.coeffs.n_ue() {
            let mut d = DVector::zeros(n);
            d[ue + 1] = self.snr_amp * self.coeffs.b[ue] * inv_sqrt_gamma;
            if let Some((idx, coef)) = margin {
                d[idx(ue)] = coef;
            }
            let mut fm = DMatrix::zeros(ns + 1, n);
            for j in 0..ns {
                fm[(j, j)] = self.snr_amp * self.coeffs.a[(ue, j)];
            }
            let mut f = DVector::zeros(ns + 1);
            f[ns] = T::one();
            cb.soc(d, T::zero(), fm, f);
        }
    }

    fn equality(&self, n: usize) -> (DMatrix<T>, DVector<T>) {
        match self.beam {
            SensingBeam::Off => {
                let mut a = DMatrix::zeros(1, n);
                a[(0, 0)] = T::one();
                (a, DVector::zeros(1))
            }
            SensingBeam::On => (DMatrix::zeros(0, n), DVector::zeros(0)),
        }
    }

    /// Clears solver round-off: negatives to zero, `r_0 = 0` exactly when off.
    fn project(&self, mut r: DVector<T>) -> DVector<T> {
        r.apply(|v| *v = v.max(T::zero()));
        if self.beam == SensingBeam::Off {
            r[0] = T::zero();
        }
        r
    }

    fn power_ok(&self, r: &DVector<T>) -> bool {
        let rho = r.map(|v| v * v);
        (0..self.stats.n_ap()).all(|k| self.stats.ap_power(&rho, k) <= T::one() + T::lit(1e-9))
    }

    fn sinr_ok(&self, r: &DVector<T>, p_tx: T) -> bool {
        let rho = r.map(|v| v * v * p_tx);
        downlink_sinr(&rho, self.coeffs)
            .iter()
            .all(|&s| s >= self.gamma * (T::one() - T::lit(1e-9)))
    }

    /// Phase 1: minimize the total SINR-cone slack; phase 2: maximize the
    /// common margin for a strictly feasible start.
    fn feasible_start(&self, opts: &SolverOptions) -> Result<DVector<T>, PowerError> {
        let ns = self.ns();
        let n_ue = self.coeffs.n_ue();
        if n_ue > 0 {
            let n = ns + n_ue;
            let mut cb = ConeBuilder::new(n);
            self.add(&mut cb, n, Some((&|ue| ns + ue, T::one())));
            for ue in 0..n_ue {
                let mut g = DVector::zeros(n);
                g[ns + ue] = -T::one();
                cb.linear(g, T::zero());
            }
            let mut c = DVector::zeros(n);
            for ue in 0..n_ue {
                c[ns + ue] = T::one();
            }
            let (a, b) = self.equality(n);
            let sol = solve(&cb.build(c, a, b), opts)?;
            let violated: Vec<usize> = (0..n_ue).filter(|&ue| sol.x[ns + ue] > T::lit(1e-6)).collect();
            if !violated.is_empty() {
                return Err(PowerError::Infeasible { violated });
            }
        }
        // maximize δ ≤ 1 with ‖…‖ ≤ rhs − δ
        let n = ns + 1;
        let mut cb = ConeBuilder::new(n);
        self.add(&mut cb, n, Some((&|_| ns, -T::one())));
        let mut g = DVector::zeros(n);
        g[ns] = T::one();
        cb.linear(g, T::one());
        let mut c = DVector::zeros(n);
        c[ns] = -T::one();
        let (a, b) = self.equality(n);
        let sol = solve(&cb.build(c, a, b), opts)?;
        Ok(self.project(sol.x.rows(0, ns).into_owned()))
    }
}

/// Concave-convex procedure maximizing the sensing SINR subject to the
/// communication SINR and per-AP power constraints.
#[allow(clippy::too_many_arguments)]
pub fn ccp_solve<T: Real>(
    quadratics: &SensingQuadratics<T>,
    coeffs: &SinrCoefficients<T>,
    stats: &NormStats<T>,
    gamma: T,
    p_tx: T,
    beam: SensingBeam,
    opts: &CcpOptions,
    rho_init: Option<&DVector<T>>,
) -> Result<PowerSolution<T>, PowerError> {
    let cons = Constraints::new(coeffs, stats, gamma, p_tx, beam)?;
    let ns = cons.ns();
    if quadratics.n_streams() != ns {
        return Err(PowerError::Dimension("quadratics vs streams".into()));
    }
    let scale = p_tx / quadratics.noise_floor;
    let a_n = quadratics.a.scale(scale);
    let b_n = quadratics.b.scale(scale);
    // B_n = LᵀL
    let eig = SymmetricEigen::new(b_n.clone());
    let l_mat = DMatrix::from_fn(ns, ns, |i, j| eig.eigenvalues[i].max(T::zero()).sqrt() * eig.eigenvectors[(j, i)]);

    let start = match rho_init {
        Some(r0) => r0.map(|v| v.max(T::zero()).sqrt() / p_tx.sqrt()),
        None => default_start(&cons, p_tx, &opts.solver)?,
    };
    let mut r = start;
    if beam == SensingBeam::Off {
        r[0] = T::zero();
    }
    if !cons.sinr_ok(&r, p_tx) || !cons.power_ok(&r) {
        r = cons.feasible_start(&opts.solver)?;
    }

    let objective = |r: &DVector<T>, t: T| r.dot(&(&a_n * r)) / t;
    let mut t = T::one() + r.dot(&(&b_n * &r));
    let mut f = objective(&r, t);
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let n = ns + 1;
    for _ in 0..opts.max_iters {
        iterations += 1;
        let c_r = (&a_n * &r).scale(T::lit(2.0) / t);
        let c_t = -r.dot(&(&a_n * &r)) / (t * t);
        // Slack rescaled as t = t_k·u so both u and the objective are O(1):
        // u − c₀ ≥ ‖L′r‖² with c₀ = 1/t_k, L′ = L/√t_k, written as
        // ‖(2L′r, u − c₀ − 1)‖ ≤ u − c₀ + 1.
        let c0 = T::one() / t;
        let mut cb = ConeBuilder::new(n);
        cons.add(&mut cb, n, None);
        let mut fm = DMatrix::zeros(ns + 1, n);
        fm.view_mut((0, 0), (ns, ns)).copy_from(&l_mat.scale(T::lit(2.0) / t.sqrt()));
        fm[(ns, ns)] = T::one();
        let mut f_off = DVector::zeros(ns + 1);
        f_off[ns] = -c0 - T::one();
        let mut d = DVector::zeros(n);
        d[ns] = T::one();
        cb.soc(d, T::one() - c0, fm, f_off);
        let fs = if f > T::zero() { f } else { T::one() };
        let mut c = DVector::zeros(n);
        c.rows_mut(0, ns).copy_from(&(-&c_r).unscale(fs));
        c[ns] = -c_t * t / fs;
        let (a, b) = cons.equality(n);
        let sol = match solve(&cb.build(c, a, b), &opts.solver) {
            Ok(sol) => sol,
            // numerical breakdown: keep the last accepted (feasible) iterate
            Err(_) => break,
        };
        let r_new = cons.project(sol.x.rows(0, ns).into_owned());
        let t_new = T::one() + r_new.dot(&(&b_n * &r_new));
        let surrogate_gain = c_r.dot(&r_new) + c_t * t_new - f;
        let f_new = objective(&r_new, t_new);
        if f_new < f * (T::one() - T::lit(1e-9)) {
            // inexact subproblem solution; keep the last accepted iterate
            converged = true;
            break;
        }
        r = r_new;
        t = t_new;
        f = f_new;
        history.push(f);
        if surrogate_gain <= T::lit(opts.epsilon) * f.abs().max(T::lit(1e-12)) {
            converged = true;
            break;
        }
    }
    Ok(finish(r, quadratics, coeffs, stats, p_tx, iterations, converged, history))
}

/// Uniform `ρ_i = P_tx / (2 N_s max_k E‖w_{i,k}‖²)`, halved until it meets the
/// power constraints; falls back to the feasibility phase if the SINR targets
/// fail.
fn default_start<T: Real>(cons: &Constraints<'_, T>, p_tx: T, opts: &SolverOptions) -> Result<DVector<T>, PowerError> {
    let ns = cons.ns();
    let mut r = DVector::from_fn(ns, |i, _| {
        let worst = (0..cons.stats.n_ap()).map(|k| cons.stats.mean_sq[(i, k)]).fold(T::zero(), |a, b| a.max(b));
        (T::one() / (T::lit(2.0) * T::from_count(ns) * worst.max(T::lit(1e-300)))).sqrt()
    });
    if cons.beam == SensingBeam::Off {
        r[0] = T::zero();
    }
    for _ in 0..60 {
        if cons.power_ok(&r) {
            break;
        }
        r.scale_mut(T::lit(std::f64::consts::FRAC_1_SQRT_2));
    }
    if cons.sinr_ok(&r, p_tx) {
        return Ok(r);
    }
    let mut start = cons.feasible_start(opts)?;
    if cons.beam == SensingBeam::On && start[0] <= T::zero() {
        // give the sensing beam a positive start if the constraints allow it
        let mut r0 = r[0];
        for _ in 0..40 {
            let mut trial = start.clone();
            trial[0] = r0;
            if cons.power_ok(&trial) && cons.sinr_ok(&trial, p_tx) {
                start = trial;
                break;
            }
            r0 *= T::lit(0.5);
        }
    }
    Ok(start)
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    r: DVector<T>,
    quadratics: &SensingQuadratics<T>,
    coeffs: &SinrCoefficients<T>,
    stats: &NormStats<T>,
    p_tx: T,
    iterations: usize,
    converged: bool,
    history_normalized: Vec<T>,
) -> PowerSolution<T> {
    let rho_sqrt = r.scale(p_tx.sqrt());
    let rho = rho_sqrt.map(|v| v * v);
    let sinr = sensing_sinr(&rho_sqrt, quadratics);
    PowerSolution {
        t: quadratics.noise_floor + rho_sqrt.dot(&(&quadratics.b * &rho_sqrt)),
        sensing_sinr: sinr,
        comm_sinr: downlink_sinr(&rho, coeffs),
        ap_power: DVector::from_fn(stats.n_ap(), |k, _| stats.ap_power(&rho, k)),
        iterations,
        converged,
        history: history_normalized,
        rho_sqrt,
    }
}

/// Minimum total power meeting the communication SINR and per-AP power
/// constraints, with no sensing beam.
pub fn comm_centric_solve<T: Real>(
    coeffs: &SinrCoefficients<T>,
    stats: &NormStats<T>,
    gamma: T,
    p_tx: T,
    quadratics: Option<&SensingQuadratics<T>>,
    solver: &SolverOptions,
) -> Result<PowerSolution<T>, PowerError> {
    let cons = Constraints::new(coeffs, stats, gamma, p_tx, SensingBeam::Off)?;
    let ns = cons.ns();
    // report infeasibility with the violated set
    cons.feasible_start(solver)?;
    let n = ns + 1;
    let mut cb = ConeBuilder::new(n);
    cons.add(&mut cb, n, None);
    let mut d = DVector::zeros(n);
    d[ns] = T::one();
    let mut fm = DMatrix::zeros(ns, n);
    for i in 0..ns {
        fm[(i, i)] = T::one();
    }
    cb.soc(d, T::zero(), fm, DVector::zeros(ns));
    let mut c = DVector::zeros(n);
    c[ns] = T::one();
    let (a, b) = cons.equality(n);
    let sol = solve(&cb.build(c, a, b), solver)?;
    let r = cons.project(sol.x.rows(0, ns).into_owned());
    let q = match quadratics {
        Some(q) => q.clone(),
        None => SensingQuadratics {
            a_complex: DMatrix::zeros(ns, ns),
            b_complex: DMatrix::zeros(ns, ns),
            a: DMatrix::zeros(ns, ns),
            b: DMatrix::zeros(ns, ns),
            noise_floor: T::one(),
        },
    };
    let mut out = finish(r, &q, coeffs, stats, p_tx, 1, true, Vec::new());
    if quadratics.is_none() {
        out.sensing_sinr = T::zero();
    }
    Ok(out)
}

/// `2(ρ̄ − (t̄/t)ρ)ᵀ A_r (ρ̄ − (t̄/t)ρ) / t` at a point `(ρ, t)` along
/// direction `(ρ̄, t̄)`: the curvature of `ρᵀA_rρ / t`.
pub fn hessian_form<T: Real>(a: &DMatrix<T>, rho: &DVector<T>, t: T, dir_rho: &DVector<T>, dir_t: T) -> T {
    let v = dir_rho - rho.scale(dir_t / t);
    T::lit(2.0) * v.dot(&(a * &v)) / t
}

/// Smallest Hessian quadratic form over `samples` random points and
/// directions (amplitudes in `[0, 1)`, `t ∈ (0.1, 10)`), normalized by `tr(A_r)`.
pub fn hessian_psd_check<T: Real, R: Rng + ?Sized>(a: &DMatrix<T>, samples: usize, rng: &mut R) -> T {
    let n = a.nrows();
    let scale = a.trace().abs().max(T::lit(1e-300));
    let mut worst = T::lit(f64::INFINITY);
    for _ in 0..samples {
        let rho = DVector::from_fn(n, |_, _| T::lit(rng.random::<f64>()));
        let dir = DVector::from_fn(n, |_, _| T::lit(rng.random::<f64>() * 2.0 - 1.0));
        let t = T::lit(rng.random_range(0.1..10.0));
        let dt = T::lit(rng.random_range(-10.0..10.0));
        let v = hessian_form(a, &rho, t, &dir, dt) / scale;
        worst = worst.min(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{local_scattering_correlation, sample_rcs, TargetFreeLink};
    use crate::rng::{complex_normal_vector, substream};
    use crate::sensing_chain::{draw_symbols, SensingSnapshot};

    type C = Complex<f64>;

    fn geometry(nt: usize, nr: usize, m: usize) -> SensingGeometry<f64> {
        SensingGeometry {
            m,
            a_tx: (0..nt).map(|k| crate::scenario::array_response(0.3 * k as f64 - 0.4, -0.1, m)).collect(),
            a_rx: (0..nr).map(|r| crate::scenario::array_response(0.6 - 0.5 * r as f64, 0.05, m)).collect(),
            beta: DMatrix::from_fn(nr, nt, |r, k| 0.4 + 0.2 * (r * nt + k) as f64),
        }
    }

    fn precoders(nt: usize, m: usize, ns: usize, seed: u64) -> PrecoderSet<f64> {
        let mut rng = substream(seed, &[0]);
        let ws: Vec<DVector<C>> = (0..ns)
            .map(|_| {
                let v = complex_normal_vector::<f64, _>(nt * m, &mut rng);
                let n = v.norm();
                v.unscale(n)
            })
            .collect();
        PrecoderSet::new(ws[0].clone(), ws[1..].to_vec(), m).unwrap()
    }

    fn field(nr: usize, nt: usize, m: usize) -> ClutterField<f64> {
        ClutterField::new(
            nr,
            nt,
            (0..nr * nt)
                .map(|i| {
                    TargetFreeLink::new(
                        local_scattering_correlation(0.2 * i as f64, 0.0, 0.3, m, 1.0).unwrap(),
                        local_scattering_correlation(-0.4 * i as f64, 0.1, 0.3, m, 0.7).unwrap(),
                        0.4,
                    )
                    .unwrap()
                })
                .collect(),
        )
    }

    fn rcs_cov(n: usize) -> Covariance<f64> {
        let l = DMatrix::from_fn(n, n, |i, j| if i >= j { C::new(0.2 + 0.05 * (i + 2 * j) as f64, 0.03 * i as f64) } else { C::new(0.0, 0.0) });
        let mut m = &l * l.adjoint();
        for i in 0..n {
            m[(i, i)] += C::new(0.8, 0.0);
        }
        Covariance::new(m).unwrap()
    }

    #[test]
    fn quadratics_match_monte_carlo() {
        let (nt, nr, m, tau) = (2, 2, 2, 4);
        let g = geometry(nt, nr, m);
        let set = precoders(nt, m, 3, 1);
        let syms = draw_symbols(3, tau + 2, &mut substream(1, &[1]));
        let fld = field(nr, nt, m);
        let rcs = rcs_cov(nt * nr);
        let q = build_quadratics(&g, &set, &syms, tau, Some(&fld), &rcs, 0.1).unwrap();
        assert!(q.noise_floor == (tau * m * nr) as f64 * 0.1);
        let mut rng = substream(1, &[2]);
        for _ in 0..5 {
            let rho_sqrt = DVector::from_fn(3, |_, _| rng.random_range(0.1..1.5));
            let snap = SensingSnapshot::new(g.clone(), &set, &rho_sqrt, syms.columns(0, tau).into_owned());
            let n = 10_000;
            let (mut sa, mut sa2, mut sb, mut sb2) = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..n {
                let alpha = sample_rcs(&rcs, &mut rng).alpha;
                let h = fld.sample(&mut rng);
                let ea: f64 = (0..nr).map(|r| snap.target_echo(r, &alpha).norm_squared()).sum();
                let eb: f64 = (0..nr).map(|r| snap.clutter_echo(r, &h).norm_squared()).sum();
                sa += ea;
                sa2 += ea * ea;
                sb += eb;
                sb2 += eb * eb;
            }
            let nf = n as f64;
            let (ma, mb) = (sa / nf, sb / nf);
            let se_a = ((sa2 / nf - ma * ma) / nf).sqrt();
            let se_b = ((sb2 / nf - mb * mb) / nf).sqrt();
            let qa = rho_sqrt.dot(&(&q.a * &rho_sqrt));
            let qb = rho_sqrt.dot(&(&q.b * &rho_sqrt));
            assert!((qa - ma).abs() < 3.0 * se_a, "A: {qa} vs {ma} ± {se_a}");
            assert!((qb - mb).abs() < 3.0 * se_b, "B: {qb} vs {mb} ± {se_b}");
            // complex and real forms agree for real amplitudes
            let rc = rho_sqrt.map(|v| C::new(v, 0.0));
            let full = rc.dotc(&(&q.a_complex * &rc));
            assert!(full.im.abs() < 1e-12 * full.re.abs());
            assert!((full.re - qa).abs() < 1e-12 * qa);
        }
    }

    #[test]
    fn zero_rcs_gives_zero_a() {
        let g = geometry(2, 1, 2);
        let set = precoders(2, 2, 3, 2);
        let syms = draw_symbols(3, 5, &mut substream(2, &[1]));
        let q = build_quadratics(&g, &set, &syms, 5, None, &Covariance::zeros(2), 0.1).unwrap();
        assert!(q.a.norm() == 0.0);
        assert!(q.b.norm() == 0.0);
    }

    #[test]
    fn sensing_sinr_examples() {
        let g = geometry(2, 2, 2);
        let set = precoders(2, 2, 3, 3);
        let syms = draw_symbols(3, 5, &mut substream(3, &[1]));
        let q = build_quadratics(&g, &set, &syms, 5, Some(&field(2, 2, 2)), &rcs_cov(4), 0.1).unwrap();
        assert_eq!(sensing_sinr(&DVector::zeros(3), &q), 0.0);
        let r = DVector::from_vec(vec![0.3, 0.5, 0.2]);
        let mut last = 0.0;
        for c in [0.5, 1.0, 2.0, 4.0] {
            let s = sensing_sinr(&r.scale(c), &q);
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn a_and_b_are_psd() {
        let g = geometry(3, 2, 2);
        let set = precoders(3, 2, 4, 4);
        let syms = draw_symbols(4, 6, &mut substream(4, &[1]));
        let q = build_quadratics(&g, &set, &syms, 6, Some(&field(2, 3, 2)), &rcs_cov(6), 0.1).unwrap();
        for m in [&q.a, &q.b] {
            let ev = SymmetricEigen::new(m.clone()).eigenvalues;
            assert!(ev.min() >= -1e-9 * m.trace());
        }
    }

    fn toy_coeffs(n_ue: usize, seed: u64) -> (SinrCoefficients<f64>, NormStats<f64>) {
        let mut rng = substream(seed, &[7]);
        let b = DVector::from_fn(n_ue, |_, _| rng.random_range(0.5..1.0));
        let a = DMatrix::from_fn(n_ue, n_ue + 1, |_, _| rng.random_range(0.01..0.08));
        let n_ap = 3;
        let raw = DMatrix::from_fn(n_ue + 1, n_ap, |_, _| rng.random_range(0.1..1.0));
        let mean_sq = DMatrix::from_fn(n_ue + 1, n_ap, |i, k| raw[(i, k)] / raw.row(i).sum());
        (SinrCoefficients::from_parts(b, a, 0.1), NormStats { mean_sq })
    }

    fn toy_quadratics(ns: usize, seed: u64) -> SensingQuadratics<f64> {
        let mut rng = substream(seed, &[8]);
        let la = DMatrix::from_fn(ns, ns, |_, _| rng.random_range(-1.0..1.0));
        let lb = DMatrix::from_fn(ns, ns, |_, _| rng.random_range(-0.3..0.3));
        let mut a = &la * la.transpose();
        a[(0, 0)] += 2.0;
        let b = &lb * lb.transpose();
        SensingQuadratics {
            a_complex: a.map(|v| C::new(v, 0.0)),
            b_complex: b.map(|v| C::new(v, 0.0)),
            a,
            b,
            noise_floor: 0.5,
        }
    }

    #[test]
    fn sensing_only_closed_form() {
        let stats = NormStats { mean_sq: DMatrix::from_row_slice(1, 3, &[0.5, 0.3, 0.2]) };
        let coeffs = SinrCoefficients::from_parts(DVector::zeros(0), DMatrix::zeros(0, 1), 0.1);
        let q = SensingQuadratics {
            a_complex: DMatrix::from_element(1, 1, C::new(2.0, 0.0)),
            b_complex: DMatrix::from_element(1, 1, C::new(0.5, 0.0)),
            a: DMatrix::from_element(1, 1, 2.0),
            b: DMatrix::from_element(1, 1, 0.5),
            noise_floor: 1.0,
        };
        let sol = ccp_solve(&q, &coeffs, &stats, 2.0, 1.5, SensingBeam::On, &CcpOptions::default(), None).unwrap();
        // ρ_0 = P_tx / max_k E‖w_{0,k}‖²
        let expect = 1.5 / 0.5;
        assert!((sol.rho()[0] - expect).abs() < 1e-5 * expect, "{}", sol.rho()[0]);
    }

    #[test]
    fn ccp_contract_on_random_instances() {
        let opts = CcpOptions::default();
        for seed in 0..10 {
            let (coeffs, stats) = toy_coeffs(3, seed);
            let q = toy_quadratics(4, seed);
            let gamma = 2.0;
            let p_tx = 1.0;
            for beam in [SensingBeam::Off, SensingBeam::On] {
                let sol = ccp_solve(&q, &coeffs, &stats, gamma, p_tx, beam, &opts, None).unwrap();
                assert!(sol.iterations <= 50);
                for w in sol.history.windows(2) {
                    assert!(w[1] >= w[0] * (1.0 - 1e-9), "history {:?}", sol.history);
                }
                assert!(sol.comm_sinr.iter().all(|&s| s >= gamma - 1e-6), "{}", sol.comm_sinr);
                assert!(sol.ap_power.iter().all(|&p| p <= p_tx + 1e-6));
                if beam == SensingBeam::Off {
                    assert_eq!(sol.rho_sqrt[0], 0.0);
                }
                let cc = comm_centric_solve(&coeffs, &stats, gamma, p_tx, Some(&q), &opts.solver).unwrap();
                assert!(cc.total_power() <= sol.total_power() * (1.0 + 1e-6) + 1e-9);
            }
        }
    }

    #[test]
    fn isac_s_not_worse_than_isac() {
        let opts = CcpOptions::default();
        for seed in 20..25 {
            let (coeffs, stats) = toy_coeffs(3, seed);
            let q = toy_quadratics(4, seed);
            let off = ccp_solve(&q, &coeffs, &stats, 2.0, 1.0, SensingBeam::Off, &opts, None).unwrap();
            let on = ccp_solve(&q, &coeffs, &stats, 2.0, 1.0, SensingBeam::On, &opts, Some(&off.rho())).unwrap();
            assert!(on.sensing_sinr >= off.sensing_sinr * (1.0 - 1e-6));
        }
    }

    #[test]
    fn comm_centric_single_ue_closed_form() {
        let coeffs = SinrCoefficients::from_parts(DVector::from_vec(vec![0.8]), DMatrix::from_row_slice(1, 2, &[0.0, 0.0]), 0.1);
        let stats = NormStats { mean_sq: DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.6, 0.4]) };
        let sol = comm_centric_solve(&coeffs, &stats, 2.0, 1.0, None, &SolverOptions::default()).unwrap();
        let expect: f64 = 2.0 * 0.01 / 0.64;
        assert!((sol.rho()[1] - expect).abs() < 1e-6 * expect.max(1.0), "{}", sol.rho()[1]);
    }

    #[test]
    fn comm_centric_constraints_active() {
        for seed in 30..36 {
            let (coeffs, stats) = toy_coeffs(4, seed);
            let sol = comm_centric_solve(&coeffs, &stats, 1.5, 1.0, None, &SolverOptions::default()).unwrap();
            for &s in sol.comm_sinr.iter() {
                assert!((s - 1.5).abs() < 1e-6, "{}", sol.comm_sinr);
            }
        }
    }

    #[test]
    fn infeasible_targets_reported() {
        let (coeffs, stats) = toy_coeffs(3, 40);
        let err = ccp_solve(&toy_quadratics(4, 40), &coeffs, &stats, 1e4, 1.0, SensingBeam::On, &CcpOptions::default(), None).unwrap_err();
        match err {
            PowerError::Infeasible { violated } => assert!(!violated.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
        assert!(comm_centric_solve(&coeffs, &stats, 1e4, 1.0, None, &SolverOptions::default()).is_err());
    }

    #[test]
    fn soc_form_agrees_with_sinr() {
        let (coeffs, stats) = toy_coeffs(3, 50);
        let cons = Constraints::new(&coeffs, &stats, 2.0, 1.0, SensingBeam::On).unwrap();
        let mut rng = substream(50, &[1]);
        for _ in 0..200 {
            let r = DVector::from_fn(4, |_, _| rng.random_range(0.0..1.0));
            let direct = cons.sinr_ok(&r, 1.0);
            let soc = crate::comm_metrics::sinr_soc_satisfied(&r, &coeffs, 2.0, 0.0).iter().all(|&b| b);
            let sinr = downlink_sinr(&r.map(|v| v * v), &coeffs);
            if sinr.iter().all(|s| (s - 2.0).abs() > 1e-8) {
                assert_eq!(direct, soc);
            }
            // power SOC ‖F_k ρ̃‖ ≤ √P ⇔ P_k ≤ P
            for k in 0..3 {
                let fk = stats.f_diag(k);
                let lhs = fk.component_mul(&r).norm();
                let p_k = stats.ap_power(&r.map(|v| v * v), k);
                assert!((lhs * lhs - p_k).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hessian_examples() {
        let a = toy_quadratics(4, 60).a;
        let rho = DVector::from_vec(vec![0.2, 0.4, 0.1, 0.9]);
        let t = 2.0;
        assert!(hessian_form(&a, &rho, t, &rho.scale(1.5), 3.0).abs() < 1e-12);
        let worst = hessian_psd_check(&a, 10_000, &mut substream(60, &[0]));
        assert!(worst >= -1e-9);
        assert_eq!(hessian_psd_check(&DMatrix::<f64>::zeros(3, 3), 100, &mut substream(61, &[0])), 0.0);
    }
}
