//! MAPRT target detection with clutter (advanced processing), the
//! clutter-unaware variant (simple processing), threshold calibration and
//! detection-probability estimation.
//!
//! For a fixed sensing block (symbols, precoders and powers) every matrix of
//! the test except the data-dependent vectors `a` and `b` is fixed, so the
//! detectors factor them once and evaluate each window in `O(N_rx N_tx M² τ)`.

use nalgebra::{Cholesky, Complex, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::channel::Covariance;
use crate::linalg::{cholesky_condition, cholesky_hermitian, hermitian_part, hpd_log_det, psd_function, BlockDiagonal, LinalgError};
use crate::scalar::{cre, Real};
use crate::sensing_chain::SensingSnapshot;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("need at least {needed} trials for p_fa = {p_fa}, got {got}")]
    TooFewTrials { needed: usize, got: usize, p_fa: f64 },
    #[error("p_fa must lie in (0, 1), got {0}")]
    FalseAlarm(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A test statistic evaluated on one window of received samples
/// (`y[r]` is `M × τ`).
pub trait TestStatistic<T: Real>: Sync {
    fn statistic(&self, y: &[DMatrix<Complex<T>>]) -> T;
}

/// Inverse of a Hermitian PSD matrix with eigenvalues floored at
/// `1e-10 · λ_max`; keeps nearly rank-deficient clutter priors usable.
fn floored_inverse<T: Real>(m: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let lmax = crate::linalg::hermitian_eigenvalues(m).last().copied().unwrap_or_else(T::zero);
    let floor = (T::lit(1e-10) * lmax).max(T::lit(1e-300));
    psd_function(m, |l| T::one() / l.max(floor))
}

/// Clutter prior used by the detector.
#[derive(Debug, Clone)]
pub enum ClutterPrior<T: Real> {
    /// Block-diagonal `R`, one `M² × M²` block per (r, k), receiver-major.
    Correlated(BlockDiagonal<Complex<T>>),
    /// `R = εI` (idealistic scenario, clutter fully suppressed).
    Scaled(T),
}

impl<T: Real> ClutterPrior<T> {
    /// `ε = 1e-8 · σ² / P_tx`.
    pub fn idealistic(noise_var: T, p_tx: T) -> Self {
        ClutterPrior::Scaled(T::lit(1e-8) * noise_var / p_tx)
    }
}

struct ReceiverFactors<T: Real> {
    d_chol: Cholesky<Complex<T>, Dyn>,
    e: DMatrix<Complex<T>>,
    /// `K_r = E_r D_r^{-1}`.
    k: DMatrix<Complex<T>>,
}

fn ln_c3<T: Real>(r_rcs: &Covariance<T>) -> Result<T, LinalgError> {
    let n = T::from_count(r_rcs.dim());
    Ok(-n * T::pi().ln() - hpd_log_det(r_rcs.matrix(), "RCS covariance")?)
}

/// `C = blockdiag_r(Σ_m G_r^H G_r) + σ² R_rcs^{-1}`.
fn c_matrix<T: Real>(snapshot: &SensingSnapshot<T>, r_rcs_inv: &DMatrix<Complex<T>>, noise_var: T) -> DMatrix<Complex<T>> {
    let nt = snapshot.n_tx();
    let mut c = r_rcs_inv.scale(noise_var);
    for r in 0..snapshot.n_rx() {
        let cr = snapshot.target_coefficients(r);
        let a_norm = snapshot.geometry.a_rx[r].norm_squared();
        let block = (cr.conjugate() * cr.transpose()).scale(a_norm);
        let mut view = c.view_mut((r * nt, r * nt), (nt, nt));
        view += block;
    }
    hermitian_part(&c)
}

/// `a_r = Σ_m G_r[m]^H y_r[m]`.
fn a_vector<T: Real>(snapshot: &SensingSnapshot<T>, y: &[DMatrix<Complex<T>>]) -> DVector<Complex<T>> {
    let nt = snapshot.n_tx();
    let mut a = DVector::zeros(nt * snapshot.n_rx());
    for (r, yr) in y.iter().enumerate() {
        let v = yr.transpose() * snapshot.geometry.a_rx[r].conjugate();
        let ar = snapshot.target_coefficients(r).conjugate() * v;
        a.rows_mut(r * nt, nt).copy_from(&ar);
    }
    a
}

/// `x[m]` for all `m` as columns (`N_tx M × τ`).
fn stacked_signal<T: Real>(snapshot: &SensingSnapshot<T>) -> DMatrix<Complex<T>> {
    let mm = snapshot.m();
    let mut xs = DMatrix::zeros(snapshot.n_tx() * mm, snapshot.tau());
    for (k, xk) in snapshot.x.iter().enumerate() {
        xs.view_mut((k * mm, 0), (mm, snapshot.tau())).copy_from(xk);
    }
    xs
}

/// Clutter-aware MAPRT statistic in Schur-complement form.
pub struct MaprtDetector<T: Real> {
    snapshot: SensingSnapshot<T>,
    xs: DMatrix<Complex<T>>,
    noise_var: T,
    ln_c3: T,
    receivers: Vec<ReceiverFactors<T>>,
    s_chol: Cholesky<Complex<T>, Dyn>,
    conditioning: T,
}

impl<T: Real> MaprtDetector<T> {
    pub fn new(
        snapshot: &SensingSnapshot<T>,
        r_rcs: &Covariance<T>,
        clutter: &ClutterPrior<T>,
        noise_var: T,
    ) -> Result<Self, DetectorError> {
        let (nt, nr, mm) = (snapshot.n_tx(), snapshot.n_rx(), snapshot.m());
        if r_rcs.dim() != nt * nr {
            return Err(DetectorError::Dimension(format!("R_rcs is {0}x{0}, expected {1}", r_rcs.dim(), nt * nr)));
        }
        if let ClutterPrior::Correlated(bd) = clutter {
            if bd.blocks().len() != nt * nr || bd.blocks().iter().any(|b| b.nrows() != mm * mm) {
                return Err(DetectorError::Dimension("clutter prior blocks".into()));
            }
        }
        let r_rcs_inv = crate::linalg::hpd_inverse(r_rcs.matrix(), "RCS covariance")?;
        let xs = stacked_signal(snapshot);
        // Σ_m conj(x[m]) x[m]^T ⊗ I_M
        let p = xs.conjugate() * xs.transpose();
        let p_kron = p.kronecker(&DMatrix::<Complex<T>>::identity(mm, mm));
        let dim = nt * mm * mm;
        let mut c = c_matrix(snapshot, &r_rcs_inv, noise_var);
        let mut receivers = Vec::with_capacity(nr);
        for r in 0..nr {
            let mut d = p_kron.clone();
            match clutter {
                ClutterPrior::Correlated(bd) => {
                    for k in 0..nt {
                        let inv = floored_inverse(&bd.blocks()[r * nt + k]).scale(noise_var);
                        let mut view = d.view_mut((k * mm * mm, k * mm * mm), (mm * mm, mm * mm));
                        view += inv;
                    }
                }
                ClutterPrior::Scaled(eps) => {
                    for i in 0..dim {
                        d[(i, i)] += cre(noise_var / *eps);
                    }
                }
            }
            let d_chol = cholesky_hermitian(&d, "clutter information matrix D")?;
            // E_r = (conj(c_r) X^T) ⊗ a_r^H
            let q = snapshot.target_coefficients(r).conjugate() * xs.transpose();
            let e = q.kronecker(&snapshot.geometry.a_rx[r].adjoint());
            let k = d_chol.solve(&e.adjoint()).adjoint();
            let correction = &k * e.adjoint();
            let mut view = c.view_mut((r * nt, r * nt), (nt, nt));
            view -= correction;
            receivers.push(ReceiverFactors { d_chol, e, k });
        }
        let s_chol = cholesky_hermitian(&c, "Schur complement S")?;
        let conditioning = cholesky_condition(&s_chol);
        Ok(Self {
            snapshot: snapshot.clone(),
            xs,
            noise_var,
            ln_c3: ln_c3(r_rcs)?,
            receivers,
            s_chol,
            conditioning,
        })
    }

    pub fn ln_c3(&self) -> T {
        self.ln_c3
    }

    /// Pivot-ratio conditioning indicator of the Schur complement.
    pub fn conditioning(&self) -> T {
        self.conditioning
    }

    /// `b_r = Σ_m conj(x[m]) ⊗ y_r[m]`.
    fn b_vector(&self, yr: &DMatrix<Complex<T>>) -> DVector<Complex<T>> {
        let bm = yr * self.xs.adjoint();
        DVector::from_column_slice(bm.as_slice())
    }

    /// `a − K b`.
    fn reduced(&self, y: &[DMatrix<Complex<T>>]) -> DVector<Complex<T>> {
        let nt = self.snapshot.n_tx();
        let mut u = a_vector(&self.snapshot, y);
        for (r, yr) in y.iter().enumerate() {
            let kb = &self.receivers[r].k * self.b_vector(yr);
            let mut seg = u.rows_mut(r * nt, nt);
            seg -= kb;
        }
        u
    }

    /// Maximizers `(α̂, 𝔥̂)` of the H1 posterior; `𝔥̂` stacked receiver-major.
    pub fn estimates(&self, y: &[DMatrix<Complex<T>>]) -> (DVector<Complex<T>>, DVector<Complex<T>>) {
        let nt = self.snapshot.n_tx();
        let alpha = self.s_chol.solve(&self.reduced(y));
        let per = self.receivers.first().map(|f| f.e.ncols()).unwrap_or(0);
        let mut h = DVector::zeros(per * y.len());
        for (r, yr) in y.iter().enumerate() {
            let f = &self.receivers[r];
            let rhs = self.b_vector(yr) - f.e.adjoint() * alpha.rows(r * nt, nt);
            h.rows_mut(r * per, per).copy_from(&f.d_chol.solve(&rhs));
        }
        (alpha, h)
    }
}

impl<T: Real> TestStatistic<T> for MaprtDetector<T> {
    fn statistic(&self, y: &[DMatrix<Complex<T>>]) -> T {
        let u = self.reduced(y);
        let q = u.dotc(&self.s_chol.solve(&u)).re;
        self.ln_c3 + q / self.noise_var
    }
}

/// MAPRT derived for a clutter-free model: `ln C3 + a^H C^{-1} a / σ²`.
pub struct SimpleDetector<T: Real> {
    snapshot: SensingSnapshot<T>,
    noise_var: T,
    ln_c3: T,
    c_chol: Cholesky<Complex<T>, Dyn>,
}

impl<T: Real> SimpleDetector<T> {
    pub fn new(snapshot: &SensingSnapshot<T>, r_rcs: &Covariance<T>, noise_var: T) -> Result<Self, DetectorError> {
        if r_rcs.dim() != snapshot.n_tx() * snapshot.n_rx() {
            return Err(DetectorError::Dimension("R_rcs".into()));
        }
        let r_rcs_inv = crate::linalg::hpd_inverse(r_rcs.matrix(), "RCS covariance")?;
        let c = c_matrix(snapshot, &r_rcs_inv, noise_var);
        Ok(Self {
            snapshot: snapshot.clone(),
            noise_var,
            ln_c3: ln_c3(r_rcs)?,
            c_chol: cholesky_hermitian(&c, "target information matrix C")?,
        })
    }

    pub fn ln_c3(&self) -> T {
        self.ln_c3
    }
}

impl<T: Real> TestStatistic<T> for SimpleDetector<T> {
    fn statistic(&self, y: &[DMatrix<Complex<T>>]) -> T {
        let a = a_vector(&self.snapshot, y);
        self.ln_c3 + a.dotc(&self.c_chol.solve(&a)).re / self.noise_var
    }
}

/// Dense reference of the MAPRT statistic from explicit `G[m]`, `X[m]`, `y[m]`
/// and full `R`, inverting the whole block matrix. Intended for small instances.
pub fn maprt_statistic<T: Real>(
    y: &[DVector<Complex<T>>],
    g: &[DMatrix<Complex<T>>],
    x: &[DMatrix<Complex<T>>],
    r: &DMatrix<Complex<T>>,
    r_rcs: &Covariance<T>,
    noise_var: T,
) -> Result<T, DetectorError> {
    let na = g[0].ncols();
    let nh = x[0].ncols();
    let mut theta = DMatrix::zeros(na + nh, na + nh);
    let mut z = DVector::zeros(na + nh);
    for ((ym, gm), xm) in y.iter().zip(g).zip(x) {
        let mut stacked = DMatrix::zeros(gm.nrows(), na + nh);
        stacked.view_mut((0, 0), (gm.nrows(), na)).copy_from(gm);
        stacked.view_mut((0, na), (gm.nrows(), nh)).copy_from(xm);
        theta += stacked.adjoint() * &stacked;
        z += stacked.adjoint() * ym;
    }
    let rcs_inv = crate::linalg::hpd_inverse(r_rcs.matrix(), "RCS covariance")?;
    let r_inv = crate::linalg::hpd_inverse(r, "clutter covariance")?;
    let mut v = theta.view_mut((0, 0), (na, na));
    v += rcs_inv.scale(noise_var);
    let mut v = theta.view_mut((na, na), (nh, nh));
    v += r_inv.scale(noise_var);
    let d = theta.view((na, na), (nh, nh)).into_owned();
    let full = cholesky_hermitian(&theta, "MAPRT block matrix")?.solve(&z);
    let b = z.rows(na, nh).into_owned();
    let tail = cholesky_hermitian(&d, "D")?.solve(&b);
    let quad = z.dotc(&full).re - b.dotc(&tail).re;
    Ok(ln_c3(r_rcs)? + quad / noise_var)
}

/// Dense reference of the clutter-unaware statistic.
pub fn sp_statistic<T: Real>(
    y: &[DVector<Complex<T>>],
    g: &[DMatrix<Complex<T>>],
    r_rcs: &Covariance<T>,
    noise_var: T,
) -> Result<T, DetectorError> {
    let na = g[0].ncols();
    let mut c = crate::linalg::hpd_inverse(r_rcs.matrix(), "RCS covariance")?.scale(noise_var);
    let mut a = DVector::zeros(na);
    for (ym, gm) in y.iter().zip(g) {
        c += gm.adjoint() * gm;
        a += gm.adjoint() * ym;
    }
    let sol = cholesky_hermitian(&c, "C")?.solve(&a);
    Ok(ln_c3(r_rcs)? + a.dotc(&sol).re / noise_var)
}

/// Minimum H0 sample size for a false-alarm target.
pub fn required_trials(p_fa: f64) -> usize {
    (10.0 / p_fa - 1e-9).ceil() as usize
}

/// Empirical `(1 − p_fa)` quantile (linear interpolation between order
/// statistics) of H0 statistics: the threshold `ln λ_d`.
pub fn calibrate_threshold(h0: &[f64], p_fa: f64) -> Result<f64, DetectorError> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(DetectorError::FalseAlarm(p_fa));
    }
    let needed = required_trials(p_fa);
    if h0.len() < needed {
        return Err(DetectorError::TooFewTrials { needed, got: h0.len(), p_fa });
    }
    let mut sorted = h0.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * (1.0 - p_fa);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Detection rate with a normal-approximation 95% halfwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEstimate {
    pub p_d: f64,
    pub halfwidth: f64,
    pub trials: usize,
}

impl DetectionEstimate {
    pub fn from_counts(hits: usize, trials: usize) -> Self {
        let p = hits as f64 / trials as f64;
        Self {
            p_d: p,
            halfwidth: 1.96 * (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }
}

/// Fraction of H1 statistics at or above the threshold.
pub fn detection_probability(h1: &[f64], threshold: f64) -> DetectionEstimate {
    let hits = h1.iter().filter(|&&t| t >= threshold).count();
    DetectionEstimate::from_counts(hits, h1.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{local_scattering_correlation, ClutterField, TargetFreeLink};
    use crate::precoding::PrecoderSet;
    use crate::rng::{complex_normal_vector, substream};
    use crate::scenario::{place_network, ScenarioConfig};
    use crate::sensing_chain::{draw_symbols, stack_received, SensingGeometry};

    type C = Complex<f64>;

    struct Instance {
        snap: SensingSnapshot<f64>,
        field: ClutterField<f64>,
        r_rcs: Covariance<f64>,
        noise_var: f64,
    }

    /// Unit-scaled synthetic instance (no physical path loss) so that
    /// signal, clutter and noise are comparable.
    fn instance(n_tx: usize, n_rx: usize, m: usize, tau: usize, seed: u64) -> Instance {
        let mut rng = substream(seed, &[0]);
        let a_tx = (0..n_tx).map(|k| crate::scenario::array_response(0.3 * k as f64 - 0.5, -0.1, m)).collect();
        let a_rx = (0..n_rx).map(|r| crate::scenario::array_response(0.7 - 0.4 * r as f64, 0.05, m)).collect();
        let geometry = SensingGeometry {
            m,
            a_tx,
            a_rx,
            beta: DMatrix::from_fn(n_rx, n_tx, |r, k| 0.5 + 0.1 * (r + k) as f64),
        };
        let n = n_tx * m;
        let ws: Vec<DVector<C>> = (0..3)
            .map(|_| {
                let v = complex_normal_vector::<f64, _>(n, &mut rng);
                let nn = v.norm();
                v.unscale(nn)
            })
            .collect();
        let set = PrecoderSet::new(ws[0].clone(), ws[1..].to_vec(), m).unwrap();
        let symbols = draw_symbols(3, tau, &mut rng);
        let snap = SensingSnapshot::new(geometry, &set, &DVector::from_vec(vec![1.0, 0.8, 0.6]), symbols);
        let links = (0..n_rx * n_tx)
            .map(|i| {
                let rt = local_scattering_correlation(0.2 * i as f64, 0.0, 0.4, m, 1.0).unwrap();
                let rr = local_scattering_correlation(-0.3 * i as f64 + 0.1, 0.0, 0.4, m, 0.3).unwrap();
                TargetFreeLink::new(rt, rr, 0.5).unwrap()
            })
            .collect();
        let field = ClutterField::new(n_rx, n_tx, links);
        // non-diagonal RCS covariance exercises the general path
        let nrcs = n_tx * n_rx;
        let l = DMatrix::from_fn(nrcs, nrcs, |i, j| if i >= j { C::new(0.3 + 0.1 * (i + j) as f64, 0.05 * (i as f64 - j as f64)) } else { C::new(0.0, 0.0) });
        let mut rc = &l * l.adjoint();
        for i in 0..nrcs {
            rc[(i, i)] += C::new(0.5, 0.0);
        }
        Instance {
            snap,
            field,
            r_rcs: Covariance::new(rc).unwrap(),
            noise_var: 0.2,
        }
    }

    fn dense_inputs(inst: &Instance, y: &[DMatrix<C>]) -> (Vec<DVector<C>>, Vec<DMatrix<C>>, Vec<DMatrix<C>>) {
        let tau = inst.snap.tau();
        (
            (0..tau).map(|m| stack_received(y, m)).collect(),
            (0..tau).map(|m| inst.snap.g_dense(m)).collect(),
            (0..tau).map(|m| inst.snap.x_dense(m)).collect(),
        )
    }

    fn draw_window(inst: &Instance, h1: bool, seed: u64) -> Vec<DMatrix<C>> {
        let mut rng = substream(seed, &[1]);
        let alpha = crate::channel::sample_rcs(&inst.r_rcs, &mut rng).alpha;
        let clutter = inst.field.sample(&mut rng);
        inst.snap.synthesize_received(h1.then_some(&alpha), Some(&clutter), inst.noise_var.sqrt(), &mut rng)
    }

    #[test]
    fn schur_form_matches_dense_reference() {
        for (nt, nr, m, tau, seed) in [(2, 1, 2, 3, 1), (2, 2, 2, 4, 2), (3, 2, 2, 5, 3), (1, 1, 1, 2, 4)] {
            let inst = instance(nt, nr, m, tau, seed);
            let prior = inst.field.prior().unwrap();
            let det = MaprtDetector::new(&inst.snap, &inst.r_rcs, &ClutterPrior::Correlated(prior.clone()), inst.noise_var).unwrap();
            for h1 in [false, true] {
                let y = draw_window(&inst, h1, seed * 10 + h1 as u64);
                let (ys, gs, xs) = dense_inputs(&inst, &y);
                let dense = maprt_statistic(&ys, &gs, &xs, &prior.to_dense(), &inst.r_rcs, inst.noise_var).unwrap();
                let fast = det.statistic(&y);
                assert!((dense - fast).abs() < 1e-9 * dense.abs().max(1.0), "{dense} vs {fast}");
            }
        }
    }

    #[test]
    fn zero_signal_gives_ln_c3() {
        let inst = instance(2, 2, 2, 3, 5);
        let det = MaprtDetector::new(&inst.snap, &inst.r_rcs, &ClutterPrior::Correlated(inst.field.prior().unwrap()), 0.2).unwrap();
        let y = vec![DMatrix::<C>::zeros(2, 3); 2];
        assert_eq!(det.statistic(&y), det.ln_c3());
        let sp = SimpleDetector::new(&inst.snap, &inst.r_rcs, 0.2).unwrap();
        assert_eq!(sp.statistic(&y), sp.ln_c3());
        let expect = -4.0 * std::f64::consts::PI.ln() - crate::linalg::hpd_log_det(inst.r_rcs.matrix(), "").unwrap();
        assert!((det.ln_c3() - expect).abs() < 1e-12);
    }

    #[test]
    fn simple_statistic_matches_dense() {
        let inst = instance(2, 2, 2, 4, 6);
        let sp = SimpleDetector::new(&inst.snap, &inst.r_rcs, inst.noise_var).unwrap();
        let y = draw_window(&inst, true, 60);
        let (ys, gs, _) = dense_inputs(&inst, &y);
        let dense = sp_statistic(&ys, &gs, &inst.r_rcs, inst.noise_var).unwrap();
        assert!((dense - sp.statistic(&y)).abs() < 1e-10 * dense.abs().max(1.0));
    }

    #[test]
    fn estimates_satisfy_first_order_conditions() {
        let inst = instance(2, 2, 2, 4, 7);
        let prior = inst.field.prior().unwrap();
        let det = MaprtDetector::new(&inst.snap, &inst.r_rcs, &ClutterPrior::Correlated(prior.clone()), inst.noise_var).unwrap();
        let y = draw_window(&inst, true, 70);
        let (alpha, h) = det.estimates(&y);
        let (ys, gs, xs) = dense_inputs(&inst, &y);
        let rcs_inv = inst.r_rcs.matrix().clone().try_inverse().unwrap();
        let r_inv = prior.to_dense().try_inverse().unwrap();
        // ∂/∂conj: −(1/σ²) Σ G^H e + R_rcs^{-1} α, −(1/σ²) Σ X^H e + R^{-1} 𝔥
        let mut ga = &rcs_inv * &alpha;
        let mut gh = &r_inv * &h;
        let mut scale = ga.norm() + gh.norm();
        for ((ym, gm), xm) in ys.iter().zip(&gs).zip(&xs) {
            let e = ym - gm * &alpha - xm * &h;
            let ta = gm.adjoint() * &e / C::new(inst.noise_var, 0.0);
            let th = xm.adjoint() * &e / C::new(inst.noise_var, 0.0);
            scale += ta.norm() + th.norm();
            ga -= ta;
            gh -= th;
        }
        let rel = (ga.norm_squared() + gh.norm_squared()).sqrt() / scale;
        assert!(rel < 1e-8, "relative gradient {rel}");
    }

    #[test]
    fn statistic_invariant_to_symbol_reordering() {
        let inst = instance(2, 2, 2, 5, 8);
        let y = draw_window(&inst, true, 80);
        let prior = ClutterPrior::Correlated(inst.field.prior().unwrap());
        let det = MaprtDetector::new(&inst.snap, &inst.r_rcs, &prior, inst.noise_var).unwrap();
        let perm = [3usize, 0, 4, 2, 1];
        let permute = |m: &DMatrix<C>| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, perm[j])]);
        let snap2 = SensingSnapshot::from_signals(
            inst.snap.geometry.clone(),
            permute(&inst.snap.symbols),
            inst.snap.x.iter().map(permute).collect(),
        );
        let det2 = MaprtDetector::new(&snap2, &inst.r_rcs, &prior, inst.noise_var).unwrap();
        let y2: Vec<DMatrix<C>> = y.iter().map(permute).collect();
        let (t1, t2) = (det.statistic(&y), det2.statistic(&y2));
        assert!((t1 - t2).abs() < 1e-10 * t1.abs().max(1.0));
    }

    #[test]
    fn clutter_free_limit_matches_simple_processing_up_to_constant() {
        let inst = instance(2, 2, 2, 4, 9);
        // unit transmit power in this synthetic instance
        let det = MaprtDetector::new(&inst.snap, &inst.r_rcs, &ClutterPrior::idealistic(inst.noise_var, 1.0), inst.noise_var).unwrap();
        let sp = SimpleDetector::new(&inst.snap, &inst.r_rcs, inst.noise_var).unwrap();
        let mut offsets = Vec::new();
        let mut magnitude: f64 = 0.0;
        for s in 0..20 {
            let mut rng = substream(90 + s, &[0]);
            let alpha = crate::channel::sample_rcs(&inst.r_rcs, &mut rng).alpha;
            let y = inst.snap.synthesize_received(Some(&alpha), None, inst.noise_var.sqrt(), &mut rng);
            let t = det.statistic(&y);
            magnitude = magnitude.max(t.abs());
            offsets.push(t - sp.statistic(&y));
        }
        let spread = offsets.iter().cloned().fold(f64::MIN, f64::max) - offsets.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-6 * magnitude, "offset spread {spread} at |T| up to {magnitude}");
    }

    #[test]
    fn matched_signal_raises_target_term() {
        let inst = instance(2, 2, 2, 4, 10);
        let det = MaprtDetector::new(&inst.snap, &inst.r_rcs, &ClutterPrior::Correlated(inst.field.prior().unwrap()), inst.noise_var).unwrap();
        let mut wins = 0;
        let mut diff_sum = 0.0;
        for s in 0..100 {
            let mut rng = substream(1000 + s, &[0]);
            let clutter = inst.field.sample(&mut rng);
            let noise: Vec<DMatrix<C>> = (0..2).map(|_| crate::rng::complex_normal_matrix(2, 4, &mut rng)).collect();
            let alpha = crate::channel::sample_rcs(&inst.r_rcs, &mut rng).alpha;
            let y0 = inst.snap.received_with_noise(None, Some(&clutter), inst.noise_var.sqrt(), &noise);
            let y1 = inst.snap.received_with_noise(Some(&alpha), Some(&clutter), inst.noise_var.sqrt(), &noise);
            let d = det.statistic(&y1) - det.statistic(&y0);
            diff_sum += d;
            wins += (d > 0.0) as usize;
        }
        assert!(diff_sum > 0.0 && wins > 50, "wins {wins}");
    }

    #[test]
    fn sp_ignores_clutter_prior() {
        // SimpleDetector has no clutter input at all; check it equals the dense form
        // regardless of the clutter actually present.
        let inst = instance(2, 1, 2, 3, 11);
        let sp = SimpleDetector::new(&inst.snap, &inst.r_rcs, inst.noise_var).unwrap();
        let y = draw_window(&inst, false, 110);
        let (ys, gs, _) = dense_inputs(&inst, &y);
        assert!((sp.statistic(&y) - sp_statistic(&ys, &gs, &inst.r_rcs, inst.noise_var).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn threshold_quantiles() {
        let h0: Vec<f64> = (0..101).map(|i| i as f64).collect();
        assert_eq!(calibrate_threshold(&h0, 0.5).unwrap(), 50.0);
        assert!((calibrate_threshold(&h0, 0.1).unwrap() - 90.0).abs() < 1e-12);
        assert!(matches!(calibrate_threshold(&h0[..50], 0.1), Err(DetectorError::TooFewTrials { .. })));
        assert!(calibrate_threshold(&h0, 0.0).is_err());
        let mut rng = substream(3, &[3]);
        let h0: Vec<f64> = (0..20_000).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let t1 = calibrate_threshold(&h0, 0.1).unwrap();
        let t2 = calibrate_threshold(&h0, 0.01).unwrap();
        assert!(t2 >= t1);
        assert_eq!(required_trials(0.1), 100);
        assert_eq!(required_trials(0.01), 1000);
    }

    #[test]
    fn detection_estimate_halfwidth() {
        let est = detection_probability(&[1.0, 2.0, 3.0, 4.0], 2.5);
        assert_eq!(est.p_d, 0.5);
        assert!((est.halfwidth - 1.96 * (0.25f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn physical_instance_factors() {
        let cfg = ScenarioConfig {
            n_tx: 4,
            n_ue: 2,
            ..ScenarioConfig::default()
        };
        let g = place_network(&cfg, 3).unwrap();
        let sg = SensingGeometry::new(&g, 4, cfg.carrier_freq).unwrap();
        let model = crate::channel::LargeScaleModel::<f64>::build(&g, &cfg, &mut substream(3, &[1])).unwrap();
        let mut rng = substream(3, &[2]);
        let ws: Vec<DVector<C>> = (0..3)
            .map(|_| {
                let v = complex_normal_vector::<f64, _>(16, &mut rng);
                let n = v.norm();
                v.unscale(n)
            })
            .collect();
        let set = PrecoderSet::new(ws[0].clone(), ws[1..].to_vec(), 4).unwrap();
        let snap = SensingSnapshot::new(sg, &set, &DVector::from_element(3, 0.3), draw_symbols(3, 10, &mut rng));
        let r_rcs = Covariance::scaled_identity(8, cfg.rcs_variance_linear());
        let noise = cfg.noise_variance();
        let prior = ClutterPrior::Correlated(model.clutter.prior().unwrap());
        let det = MaprtDetector::new(&snap, &r_rcs, &prior, noise).unwrap();
        let y = snap.synthesize_received(None, Some(&model.clutter.sample(&mut rng)), noise.sqrt(), &mut rng);
        assert!(det.statistic(&y).is_finite());
        let ideal = MaprtDetector::new(&snap, &r_rcs, &ClutterPrior::idealistic(noise, cfg.p_tx_max), noise).unwrap();
        assert!(ideal.statistic(&y).is_finite());
    }
}
