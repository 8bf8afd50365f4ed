//! Spatial correlation, correlated Rayleigh channels, Kronecker-model
//! target-free (clutter) channels and Swerling-I RCS draws.

use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use thiserror::Error;

use crate::linalg::{hermitian_part, is_hermitian, max_abs, min_eigenvalue, psd_sqrt, BlockDiagonal, LinalgError};
use crate::rng::{complex_normal_matrix, complex_normal_vector};
use crate::scalar::{cis, cre, Real};
use crate::scenario::{shadowed_gain, Angles, NetworkGeometry, ScenarioConfig, LOCAL_SCATTERING_ASD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("matrix is not Hermitian")]
    NotHermitian,
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("angular spread must be positive, got {0}")]
    NonPositiveSpread(f64),
    #[error("clutter scale {0} outside (0, 1]")]
    ClutterScale(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Hermitian PSD covariance with a cached square root.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance<T: Real> {
    matrix: DMatrix<Complex<T>>,
    sqrt: DMatrix<Complex<T>>,
}

impl<T: Real> Covariance<T> {
    /// Accepts matrices that are Hermitian to 1e-10 (relative) with eigenvalues
    /// no lower than -1e-10·trace. The Hermitian part is stored.
    pub fn new(matrix: DMatrix<Complex<T>>) -> Result<Self, ChannelError> {
        if !is_hermitian(&matrix, T::lit(1e-10)) {
            return Err(ChannelError::NotHermitian);
        }
        let matrix = hermitian_part(&matrix);
        let trace = matrix.trace().re.abs().max(max_abs(&matrix));
        let min_eig = min_eigenvalue(&matrix);
        if min_eig < -T::lit(1e-10) * trace {
            return Err(ChannelError::NotPsd { min_eig: min_eig.as_f64() });
        }
        let sqrt = psd_sqrt(&matrix);
        Ok(Self { matrix, sqrt })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(m, m),
            sqrt: DMatrix::zeros(m, m),
        }
    }

    pub fn scaled_identity(m: usize, variance: T) -> Self {
        let v = variance.max(T::zero());
        Self {
            matrix: DMatrix::from_diagonal_element(m, m, cre(v)),
            sqrt: DMatrix::from_diagonal_element(m, m, cre(v.sqrt())),
        }
    }

    pub fn identity(m: usize) -> Self {
        Self::scaled_identity(m, T::one())
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.matrix
    }

    /// Hermitian square root.
    pub fn sqrt(&self) -> &DMatrix<Complex<T>> {
        &self.sqrt
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> T {
        self.matrix.trace().re
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            matrix: self.matrix.scale(s),
            sqrt: self.sqrt.scale(s.max(T::zero()).sqrt()),
        }
    }
}

const HERMITE_NODES: usize = 64;

/// Gauss–Hermite rule (weight `exp(-x²)`) via Golub–Welsch.
fn gauss_hermite() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = HERMITE_NODES;
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                ((i.max(j)) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(jacobi);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut rule: Vec<(f64, f64)> = (0..n)
            .map(|k| (eig.eigenvalues[k], sqrt_pi * eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        rule.sort_by(|a, b| a.0.total_cmp(&b.0));
        rule
    })
}

/// Local scattering model with Gaussian azimuth and elevation deviations
/// (both with standard deviation `asd`) around the nominal direction.
///
/// Entry `(l, n)` is `gain · E{exp(jπ(l−n) sin(az+δ₁) cos(el+δ₂))}`; the
/// expectation is evaluated by a 64×64 Gauss–Hermite product rule, which keeps
/// the result exactly PSD (positive weights on rank-one terms).
pub fn local_scattering_correlation<T: Real>(
    nominal_azimuth: T,
    nominal_elevation: T,
    asd: T,
    m: usize,
    gain: T,
) -> Result<Covariance<T>, ChannelError> {
    if !(asd > T::zero()) {
        return Err(ChannelError::NonPositiveSpread(asd.as_f64()));
    }
    let rule = gauss_hermite();
    let inv_pi = T::one() / T::pi();
    let scale = T::lit(std::f64::consts::SQRT_2) * asd;
    // spatial frequency sin(az)cos(el) at each 2-D node, with its weight
    let mut nodes: Vec<(T, T)> = Vec::with_capacity(rule.len() * rule.len());
    for &(xa, wa) in rule {
        let s_az = (nominal_azimuth + scale * T::lit(xa)).sin();
        for &(xe, we) in rule {
            let c_el = (nominal_elevation + scale * T::lit(xe)).cos();
            nodes.push((s_az * c_el, T::lit(wa * we) * inv_pi));
        }
    }
    let mut lag = vec![Complex::new(T::zero(), T::zero()); m];
    lag[0] = cre(T::one());
    for (d, slot) in lag.iter_mut().enumerate().skip(1) {
        let dd = T::pi() * T::from_count(d);
        let mut acc = Complex::new(T::zero(), T::zero());
        for &(u, w) in &nodes {
            acc += cis(dd * u) * w;
        }
        *slot = acc;
    }
    let matrix = DMatrix::from_fn(m, m, |l, n| {
        if l >= n {
            lag[l - n] * gain
        } else {
            lag[n - l].conj() * gain
        }
    });
    Covariance::new(matrix)
}

/// `corr^{1/2} w` with `w ~ CN(0, I)`.
pub fn sample_correlated_rayleigh<T: Real, R: Rng + ?Sized>(corr: &Covariance<T>, rng: &mut R) -> DVector<Complex<T>> {
    let w = complex_normal_vector(corr.dim(), rng);
    corr.sqrt() * w
}

/// `H = √s · R_rx^{1/2} W (R_tx^{1/2})^T`; `vec(H) ~ CN(0, s·(R_tx ⊗ R_rx))`.
pub fn sample_target_free<T: Real, R: Rng + ?Sized>(
    r_tx: &Covariance<T>,
    r_rx: &Covariance<T>,
    clutter_scale: T,
    rng: &mut R,
) -> DMatrix<Complex<T>> {
    let w = complex_normal_matrix(r_rx.dim(), r_tx.dim(), rng);
    target_free_from_white(r_tx, r_rx, clutter_scale, &w)
}

fn target_free_from_white<T: Real>(
    r_tx: &Covariance<T>,
    r_rx: &Covariance<T>,
    clutter_scale: T,
    w: &DMatrix<Complex<T>>,
) -> DMatrix<Complex<T>> {
    (r_rx.sqrt() * w * r_tx.sqrt().transpose()).scale(clutter_scale.sqrt())
}

/// Statistics of one target-free channel `H_{r,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFreeLink<T: Real> {
    pub r_tx: Covariance<T>,
    pub r_rx: Covariance<T>,
    pub scale: T,
}

impl<T: Real> TargetFreeLink<T> {
    pub fn new(r_tx: Covariance<T>, r_rx: Covariance<T>, scale: T) -> Result<Self, ChannelError> {
        if !(scale > T::zero() && scale <= T::one()) {
            return Err(ChannelError::ClutterScale(scale.as_f64()));
        }
        Ok(Self { r_tx, r_rx, scale })
    }

    pub fn with_scale(&self, scale: T) -> Result<Self, ChannelError> {
        Self::new(self.r_tx.clone(), self.r_rx.clone(), scale)
    }

    /// Covariance of `vec(H)`: `s·(R_tx ⊗ R_rx)`.
    pub fn correlation(&self) -> DMatrix<Complex<T>> {
        self.r_tx.matrix().kronecker(self.r_rx.matrix()).scale(self.scale)
    }

    /// `E{H^H H} = s·tr(R_rx)·R_tx^T`.
    pub fn interference_gram(&self) -> DMatrix<Complex<T>> {
        self.r_tx.matrix().transpose().scale(self.scale * self.r_rx.trace())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<Complex<T>> {
        sample_target_free(&self.r_tx, &self.r_rx, self.scale, rng)
    }
}

/// Block-diagonal covariance `R` of the stacked clutter vector; blocks are
/// ordered receiver-major, transmitter-minor.
pub fn assemble_clutter_correlation<T: Real>(
    blocks: Vec<DMatrix<Complex<T>>>,
    m: usize,
) -> Result<BlockDiagonal<Complex<T>>, ChannelError> {
    Ok(BlockDiagonal::uniform(blocks, m * m)?)
}

/// All target-free links between `n_rx` receivers and `n_tx` transmitters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClutterField<T: Real> {
    pub n_rx: usize,
    pub n_tx: usize,
    /// Index `r * n_tx + k`.
    pub links: Vec<TargetFreeLink<T>>,
}

/// One realization of every `H_{r,k}`, receiver-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClutterRealization<T: Real> {
    pub n_rx: usize,
    pub n_tx: usize,
    pub h: Vec<DMatrix<Complex<T>>>,
}

impl<T: Real> ClutterRealization<T> {
    pub fn link(&self, r: usize, k: usize) -> &DMatrix<Complex<T>> {
        &self.h[r * self.n_tx + k]
    }

    /// Stacked `vec(H_{r,k})`, receiver-major.
    pub fn vectorized(&self) -> DVector<Complex<T>> {
        let parts: Vec<Complex<T>> = self.h.iter().flat_map(|h| h.iter().copied()).collect();
        DVector::from_vec(parts)
    }
}

impl<T: Real> ClutterField<T> {
    pub fn new(n_rx: usize, n_tx: usize, links: Vec<TargetFreeLink<T>>) -> Self {
        assert_eq!(links.len(), n_rx * n_tx, "one link per (r, k)");
        Self { n_rx, n_tx, links }
    }

    pub fn link(&self, r: usize, k: usize) -> &TargetFreeLink<T> {
        &self.links[r * self.n_tx + k]
    }

    pub fn with_scale(&self, scale: T) -> Result<Self, ChannelError> {
        Ok(Self {
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            links: self.links.iter().map(|l| l.with_scale(scale)).collect::<Result<_, _>>()?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ClutterRealization<T> {
        ClutterRealization {
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            h: self.links.iter().map(|l| l.sample(rng)).collect(),
        }
    }

    /// Prior covariance `R` of the stacked clutter vector.
    pub fn prior(&self) -> Result<BlockDiagonal<Complex<T>>, ChannelError> {
        let m = self.links.first().map(|l| l.r_tx.dim()).unwrap_or(0);
        assemble_clutter_correlation(self.links.iter().map(|l| l.correlation()).collect(), m)
    }
}

/// Swerling-I RCS vector: one draw of `α ~ CN(0, R_rcs)` per detection window.
#[derive(Debug, Clone, PartialEq)]
pub struct RcsRealization<T: Real> {
    pub alpha: DVector<Complex<T>>,
}

pub fn sample_rcs<T: Real, R: Rng + ?Sized>(r_rcs: &Covariance<T>, rng: &mut R) -> RcsRealization<T> {
    RcsRealization {
        alpha: sample_correlated_rayleigh(r_rcs, rng),
    }
}

/// Large-scale statistics of one UE drop: communication correlation matrices
/// `R_{i,k}` and the target-free channel statistics.
#[derive(Debug, Clone)]
pub struct LargeScaleModel<T: Real> {
    /// `[ue][tx AP]`.
    pub comm: Vec<Vec<Covariance<T>>>,
    pub clutter: ClutterField<T>,
}

impl<T: Real> LargeScaleModel<T> {
    /// UMi gains with independent log-normal shadowing per link; clutter gains
    /// additionally multiplied by `config.clutter_scale`.
    pub fn build<R: Rng + ?Sized>(
        geometry: &NetworkGeometry,
        config: &ScenarioConfig,
        shadow_rng: &mut R,
    ) -> Result<Self, ChannelError> {
        let m = config.m_antennas;
        let fc = config.carrier_freq;
        let asd = T::lit(LOCAL_SCATTERING_ASD);
        let mut comm = Vec::with_capacity(geometry.n_ue());
        for ue in &geometry.ue_positions {
            let mut row = Vec::with_capacity(geometry.n_tx());
            for ap in &geometry.tx_positions {
                let gain = shadowed_gain(ap.distance(ue), fc, shadow_rng);
                let dir = Angles::between(ap, ue);
                row.push(local_scattering_correlation(
                    T::lit(dir.azimuth),
                    T::lit(dir.elevation),
                    asd,
                    m,
                    T::lit(gain),
                )?);
            }
            comm.push(row);
        }
        let mut links = Vec::with_capacity(geometry.n_rx() * geometry.n_tx());
        for rx in &geometry.rx_positions {
            for tx in &geometry.tx_positions {
                let gain = shadowed_gain(rx.distance(tx), fc, shadow_rng);
                let at_tx = Angles::between(tx, rx);
                let at_rx = Angles::between(rx, tx);
                let r_tx = local_scattering_correlation(
                    T::lit(at_tx.azimuth),
                    T::lit(at_tx.elevation),
                    asd,
                    m,
                    T::one(),
                )?;
                let r_rx = local_scattering_correlation(
                    T::lit(at_rx.azimuth),
                    T::lit(at_rx.elevation),
                    asd,
                    m,
                    T::lit(gain),
                )?;
                links.push(TargetFreeLink::new(r_tx, r_rx, T::lit(config.clutter_scale))?);
            }
        }
        Ok(Self {
            comm,
            clutter: ClutterField::new(geometry.n_rx(), geometry.n_tx(), links),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::scenario::array_response;

    type C = Complex<f64>;

    fn sample_cov(samples: &[DVector<C>]) -> DMatrix<C> {
        let n = samples[0].len();
        let mut acc = DMatrix::<C>::zeros(n, n);
        for s in samples {
            acc += s * s.adjoint();
        }
        acc.unscale(samples.len() as f64)
    }

    #[test]
    fn gauss_hermite_integrates_moments() {
        let rule = gauss_hermite();
        let w: f64 = rule.iter().map(|r| r.1).sum();
        assert!((w - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        // E{x²} under N(0, 1/2) weighting is 1/2
        let m2: f64 = rule.iter().map(|r| r.1 * r.0 * r.0).sum::<f64>() / std::f64::consts::PI.sqrt();
        assert!((m2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn local_scattering_is_hermitian_psd_with_trace() {
        for (az, el, m, gain) in [(0.3, -0.1, 4, 2.5e-9), (-2.0, 0.0, 8, 1.0), (1.2, 0.4, 1, 3.0)] {
            let r = local_scattering_correlation(az, el, 0.26, m, gain).unwrap();
            assert!(is_hermitian(r.matrix(), 1e-12));
            assert!(min_eigenvalue(r.matrix()) >= -1e-12 * gain);
            assert!((r.trace() - m as f64 * gain).abs() < 1e-12 * m as f64 * gain);
        }
    }

    #[test]
    fn local_scattering_single_path_limit() {
        let (az, el) = (0.7, -0.2);
        let r = local_scattering_correlation(az, el, 1e-7, 4, 2.0).unwrap();
        let a = array_response(az, el, 4);
        let rank1 = (&a * a.adjoint()) * C::new(2.0, 0.0);
        assert!((r.matrix() - rank1).norm() < 1e-5);
    }

    #[test]
    fn local_scattering_matches_brute_force_quadrature() {
        // Independent oracle: composite Simpson over ±8σ in both angles.
        let (az, el, asd, m) = (0.4, -0.15, 15f64.to_radians(), 4);
        let r = local_scattering_correlation(az, el, asd, m, 1.0).unwrap();
        let n = 800;
        let lim = 8.0 * asd;
        let h = 2.0 * lim / n as f64;
        let simpson = |i: usize| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let pdf = |x: f64| (-(x * x) / (2.0 * asd * asd)).exp() / (asd * (2.0 * std::f64::consts::PI).sqrt());
        for d in 1..m {
            let mut acc = C::new(0.0, 0.0);
            for i in 0..=n {
                let da = -lim + i as f64 * h;
                let wa = simpson(i) * pdf(da);
                for j in 0..=n {
                    let de = -lim + j as f64 * h;
                    let w = wa * simpson(j) * pdf(de);
                    let phase = std::f64::consts::PI * d as f64 * (az + da).sin() * (el + de).cos();
                    acc += C::from_polar(w, phase);
                }
            }
            acc *= h * h / 9.0;
            assert!((r.matrix()[(d, 0)] - acc).norm() < 1e-6, "lag {d}: {} vs {}", r.matrix()[(d, 0)], acc);
        }
    }

    #[test]
    fn negative_spread_rejected() {
        assert!(local_scattering_correlation(0.0, 0.0, 0.0, 4, 1.0).is_err());
    }

    #[test]
    fn covariance_rejects_indefinite() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![C::new(1.0, 0.0), C::new(-0.5, 0.0)]));
        assert!(matches!(Covariance::new(m), Err(ChannelError::NotPsd { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[C::new(1.0, 0.0), C::new(0.5, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0)]);
        assert_eq!(Covariance::new(m), Err(ChannelError::NotHermitian));
    }

    #[test]
    fn rayleigh_zero_and_identity() {
        let mut rng = substream(1, &[1]);
        let z = sample_correlated_rayleigh(&Covariance::<f64>::zeros(3), &mut rng);
        assert!(z.iter().all(|v| v.norm() == 0.0));
        let n = 10_000;
        let ident = Covariance::<f64>::identity(2);
        let samples: Vec<_> = (0..n).map(|_| sample_correlated_rayleigh(&ident, &mut rng)).collect();
        for e in 0..2 {
            let var: f64 = samples.iter().map(|s| s[e].norm_sqr()).sum::<f64>() / n as f64;
            assert!((var - 1.0).abs() < 0.05, "variance {var}");
        }
    }

    #[test]
    fn rayleigh_sample_covariance_converges() {
        let r = local_scattering_correlation(0.5, -0.1, 0.26, 4, 3.0).unwrap();
        let mut rng = substream(2, &[2]);
        let samples: Vec<_> = (0..100_000).map(|_| sample_correlated_rayleigh(&r, &mut rng)).collect();
        let emp = sample_cov(&samples);
        let rel = (emp - r.matrix()).norm() / r.matrix().norm();
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn target_free_covariance_is_kronecker() {
        let r_tx = local_scattering_correlation(0.2, 0.0, 0.26, 3, 1.0).unwrap();
        let r_rx = local_scattering_correlation(-1.1, 0.0, 0.26, 3, 2.0).unwrap();
        let link = TargetFreeLink::new(r_tx, r_rx, 0.5).unwrap();
        let mut rng = substream(3, &[3]);
        let samples: Vec<DVector<C>> = (0..100_000)
            .map(|_| {
                let h = link.sample(&mut rng);
                DVector::from_iterator(9, h.iter().copied())
            })
            .collect();
        let emp = sample_cov(&samples);
        let truth = link.correlation();
        let rel = (emp - &truth).norm() / truth.norm();
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn target_free_energy_linear_in_scale() {
        let r_tx = local_scattering_correlation(0.2, 0.0, 0.26, 2, 1.0).unwrap();
        let r_rx = local_scattering_correlation(-1.1, 0.0, 0.26, 2, 1.0).unwrap();
        let w = complex_normal_matrix::<f64, _>(2, 2, &mut substream(4, &[0]));
        let e1 = target_free_from_white(&r_tx, &r_rx, 1.0, &w).norm_squared();
        let e3 = target_free_from_white(&r_tx, &r_rx, 0.3, &w).norm_squared();
        assert!((e3 / e1 - 0.3).abs() < 1e-12);
        let link = TargetFreeLink::new(r_tx, r_rx, 0.3).unwrap();
        // E{‖H‖_F²} = s·tr(R_tx)·tr(R_rx)
        assert!((link.correlation().trace().re - 0.3 * 4.0).abs() < 1e-12);
        assert!(TargetFreeLink::new(Covariance::<f64>::identity(2), Covariance::identity(2), 1.5).is_err());
    }

    #[test]
    fn target_free_identity_entries_unit_variance() {
        let mut rng = substream(5, &[0]);
        let n = 20_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let h = sample_target_free(&Covariance::identity(2), &Covariance::identity(2), 1.0, &mut rng);
            acc += h.map(|z| z.norm_sqr());
        }
        acc /= n as f64;
        assert!(acc.iter().all(|v| (v - 1.0).abs() < 0.05));
    }

    #[test]
    fn clutter_correlation_assembly() {
        let mk = |az: f64, g: f64| local_scattering_correlation(az, 0.0, 0.26, 2, g).unwrap();
        let links = vec![
            TargetFreeLink::new(mk(0.1, 1.0), mk(0.4, 2.0), 0.3).unwrap(),
            TargetFreeLink::new(mk(-0.5, 1.0), mk(1.4, 0.5), 0.3).unwrap(),
        ];
        let field = ClutterField::new(1, 2, links.clone());
        let r = field.prior().unwrap();
        let dense = r.to_dense();
        assert_eq!(dense.nrows(), 8);
        assert!(dense.view((0, 4), (4, 4)).iter().all(|z| z.norm() == 0.0));
        let expected: f64 = links.iter().map(|l| l.scale * l.r_tx.trace() * l.r_rx.trace()).sum();
        assert!((r.trace().re - expected).abs() < 1e-12);

        let single = assemble_clutter_correlation(vec![links[0].correlation()], 2).unwrap();
        assert_eq!(single.to_dense(), links[0].correlation());
        assert!(assemble_clutter_correlation(vec![DMatrix::<C>::zeros(3, 3)], 2).is_err());
    }

    #[test]
    fn clutter_links_uncorrelated() {
        let mk = |az: f64| local_scattering_correlation(az, 0.0, 0.26, 2, 1.0).unwrap();
        let field = ClutterField::new(1, 2, vec![
            TargetFreeLink::new(mk(0.1), mk(0.2), 1.0).unwrap(),
            TargetFreeLink::new(mk(0.3), mk(0.4), 1.0).unwrap(),
        ]);
        let mut rng = substream(6, &[0]);
        let n = 20_000;
        let mut cross = DMatrix::<C>::zeros(4, 4);
        for _ in 0..n {
            let c = field.sample(&mut rng);
            let a = DVector::from_iterator(4, c.link(0, 0).iter().copied());
            let b = DVector::from_iterator(4, c.link(0, 1).iter().copied());
            cross += a * b.adjoint();
        }
        cross.unscale_mut(n as f64);
        assert!(cross.norm() < 0.05, "cross-covariance {}", cross.norm());
    }

    #[test]
    fn rcs_examples() {
        let mut rng = substream(7, &[0]);
        let var = 10f64.powf(0.5);
        assert!((crate::scalar::db_to_linear(5.0) - var).abs() < 1e-12);
        let cov = Covariance::scaled_identity(3, var);
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += sample_rcs(&cov, &mut rng).alpha.norm_squared();
        }
        let per_entry = acc / (3 * n) as f64;
        assert!((per_entry / var - 1.0).abs() < 0.05);
        let zero = sample_rcs(&Covariance::<f64>::zeros(3), &mut rng);
        assert!(zero.alpha.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn large_scale_model_dimensions() {
        let cfg = ScenarioConfig {
            n_tx: 4,
            n_ue: 3,
            ..ScenarioConfig::default()
        };
        let g = crate::scenario::place_network(&cfg, 1).unwrap();
        let model = LargeScaleModel::<f64>::build(&g, &cfg, &mut substream(1, &[9])).unwrap();
        assert_eq!(model.comm.len(), 3);
        assert_eq!(model.comm[0].len(), 4);
        assert_eq!(model.clutter.links.len(), 2 * 4);
        assert!(model.comm.iter().flatten().all(|r| r.trace() > 0.0 && r.trace() < 1e-3));
    }
}
