//! Centralized RZF communication precoders, the nullspace sensing precoder and
//! per-AP norm statistics.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{cholesky_hermitian, LinalgError};
use crate::scalar::{cre, Real};
use crate::scenario::{array_response, NetworkGeometry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrecodingError {
    #[error("regularization must be positive, got {0}")]
    Regularization(f64),
    #[error("sensing direction lies in the span of the estimated channels (projected norm {0:e})")]
    DegenerateGeometry(f64),
    #[error("no spatial degrees of freedom left for the sensing beam")]
    NoNullspace,
    #[error("inconsistent vector lengths")]
    Dimension,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn columns<T: Real>(vs: &[DVector<Complex<T>>], n: usize) -> DMatrix<Complex<T>> {
    let mut h = DMatrix::zeros(n, vs.len());
    for (j, v) in vs.iter().enumerate() {
        h.set_column(j, v);
    }
    h
}

fn normalized<T: Real>(v: DVector<Complex<T>>) -> DVector<Complex<T>> {
    let n = v.norm();
    if n > T::zero() {
        v.unscale(n)
    } else {
        v
    }
}

/// Unit-norm RZF precoders `(Σ_j ĥ_j ĥ_j^H + λI)^{-1} ĥ_i / ‖·‖`.
///
/// Uses the push-through identity `(ĤĤ^H + λI)^{-1}Ĥ = Ĥ(Ĥ^HĤ + λI)^{-1}`,
/// so only an `N_ue × N_ue` system is factored.
pub fn rzf_precoders<T: Real>(
    estimates: &[DVector<Complex<T>>],
    lambda: T,
) -> Result<Vec<DVector<Complex<T>>>, PrecodingError> {
    if !(lambda > T::zero()) {
        return Err(PrecodingError::Regularization(lambda.as_f64()));
    }
    if estimates.is_empty() {
        return Ok(Vec::new());
    }
    let n = estimates[0].len();
    if estimates.iter().any(|v| v.len() != n) {
        return Err(PrecodingError::Dimension);
    }
    let h = columns(estimates, n);
    let mut gram = h.adjoint() * &h;
    for i in 0..gram.nrows() {
        gram[(i, i)] += cre(lambda);
    }
    let chol = cholesky_hermitian(&gram, "regularized Gram matrix")?;
    let w = &h * chol.inverse();
    Ok(w.column_iter().map(|c| normalized(c.into_owned())).collect())
}

/// Orthonormal basis of the column span by modified Gram–Schmidt with
/// column-norm pivoting and one reorthogonalization pass. Columns whose residual
/// falls below `1e-10 · (largest column norm)` are treated as dependent.
pub fn orthonormal_basis<T: Real>(vectors: &[DVector<Complex<T>>]) -> DMatrix<Complex<T>> {
    if vectors.is_empty() {
        return DMatrix::zeros(0, 0);
    }
    let n = vectors[0].len();
    let mut rest: Vec<DVector<Complex<T>>> = vectors.to_vec();
    let largest = rest.iter().map(|v| v.norm()).fold(T::zero(), |a, b| a.max(b));
    let tol = T::lit(1e-10) * largest;
    let mut basis: Vec<DVector<Complex<T>>> = Vec::new();
    while !rest.is_empty() && basis.len() < n {
        let (pivot, norm) = rest
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(norm > tol) {
            break;
        }
        let mut q = rest.swap_remove(pivot);
        for b in &basis {
            let c = b.dotc(&q);
            q -= b * c;
        }
        let qn = q.norm();
        if !(qn > tol) {
            continue;
        }
        q.unscale_mut(qn);
        for v in rest.iter_mut() {
            let c = q.dotc(v);
            *v -= &q * c;
        }
        basis.push(q);
    }
    columns(&basis, n)
}

/// `w_0 = (I − UU^H) h_0 / ‖·‖`, `U` an orthonormal basis of the estimates.
pub fn sensing_precoder<T: Real>(
    estimates: &[DVector<Complex<T>>],
    target_steering: &DVector<Complex<T>>,
) -> Result<DVector<Complex<T>>, PrecodingError> {
    let n = target_steering.len();
    if estimates.iter().any(|v| v.len() != n) {
        return Err(PrecodingError::Dimension);
    }
    let mut p = target_steering.clone();
    if !estimates.is_empty() {
        let u = orthonormal_basis(estimates);
        if u.ncols() >= n {
            return Err(PrecodingError::NoNullspace);
        }
        // two passes keep the residual orthogonal to machine precision
        for _ in 0..2 {
            let coeff = u.adjoint() * &p;
            p -= &u * coeff;
        }
    }
    let norm = p.norm();
    if norm < T::lit(1e-12) * target_steering.norm().max(T::one()) {
        return Err(PrecodingError::DegenerateGeometry(norm.as_f64()));
    }
    Ok(p.unscale(norm))
}

/// Steering vector `h_0` toward the target: per AP the conjugate array
/// response, so `a_k^T w_{0,k}` adds coherently.
pub fn target_steering<T: Real>(geometry: &NetworkGeometry, m: usize) -> DVector<Complex<T>> {
    let mut h0 = DVector::zeros(geometry.n_tx() * m);
    for (k, ang) in geometry.tx_angles.iter().enumerate() {
        let a = array_response(T::lit(ang.azimuth), T::lit(ang.elevation), m);
        h0.rows_mut(k * m, m).copy_from(&a.conjugate());
    }
    h0
}

/// Precoders `w_0 … w_{N_ue}` (index 0 is the sensing beam), each of length
/// `N_tx · M`, stacked AP-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet<T: Real> {
    vectors: Vec<DVector<Complex<T>>>,
    m: usize,
}

impl<T: Real> PrecoderSet<T> {
    pub fn new(sensing: DVector<Complex<T>>, comm: Vec<DVector<Complex<T>>>, m: usize) -> Result<Self, PrecodingError> {
        let n = sensing.len();
        if m == 0 || !n.is_multiple_of(m) || comm.iter().any(|w| w.len() != n) {
            return Err(PrecodingError::Dimension);
        }
        let mut vectors = Vec::with_capacity(comm.len() + 1);
        vectors.push(sensing);
        vectors.extend(comm);
        Ok(Self { vectors, m })
    }

    /// RZF for the UEs plus the nullspace sensing beam.
    pub fn build(
        estimates: &[DVector<Complex<T>>],
        target_steering: &DVector<Complex<T>>,
        lambda: T,
        m: usize,
    ) -> Result<Self, PrecodingError> {
        let comm = rzf_precoders(estimates, lambda)?;
        let sensing = sensing_precoder(estimates, target_steering)?;
        Self::new(sensing, comm, m)
    }

    /// Number of streams including the sensing stream.
    pub fn n_streams(&self) -> usize {
        self.vectors.len()
    }

    pub fn n_ap(&self) -> usize {
        self.vectors[0].len() / self.m
    }

    pub fn antennas(&self) -> usize {
        self.m
    }

    pub fn w(&self, i: usize) -> &DVector<Complex<T>> {
        &self.vectors[i]
    }

    pub fn vectors(&self) -> &[DVector<Complex<T>>] {
        &self.vectors
    }

    /// `w_{i,k}`, the slice of stream `i` at AP `k`.
    pub fn slice(&self, i: usize, k: usize) -> DVector<Complex<T>> {
        self.vectors[i].rows(k * self.m, self.m).into_owned()
    }

    /// `W_k = [w_{0,k} … w_{N_ue,k}]`, `M × (N_ue+1)`.
    pub fn ap_matrix(&self, k: usize) -> DMatrix<Complex<T>> {
        DMatrix::from_fn(self.m, self.n_streams(), |row, i| self.vectors[i][k * self.m + row])
    }

    pub fn slice_norm_sq(&self, i: usize, k: usize) -> T {
        self.vectors[i].rows(k * self.m, self.m).norm_squared()
    }
}

/// Ensemble means `E{‖w_{i,k}‖²}`, stream-major (`n_streams × n_ap`).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats<T: Real> {
    pub mean_sq: DMatrix<T>,
}

impl<T: Real> NormStats<T> {
    pub fn from_ensemble<'a>(sets: impl IntoIterator<Item = &'a PrecoderSet<T>>) -> Self {
        let mut acc: Option<DMatrix<T>> = None;
        let mut count = 0usize;
        for set in sets {
            let m = DMatrix::from_fn(set.n_streams(), set.n_ap(), |i, k| set.slice_norm_sq(i, k));
            acc = Some(match acc {
                Some(a) => a + m,
                None => m,
            });
            count += 1;
        }
        let acc = acc.expect("at least one realization");
        Self {
            mean_sq: acc.unscale(T::from_count(count)),
        }
    }

    /// Diagonal of `F_k`: `√E{‖w_{i,k}‖²}` for every stream.
    pub fn f_diag(&self, k: usize) -> DVector<T> {
        self.mean_sq.column(k).map(|v| v.max(T::zero()).sqrt())
    }

    pub fn n_ap(&self) -> usize {
        self.mean_sq.ncols()
    }

    /// Average transmit power of AP `k` for powers `rho`.
    pub fn ap_power(&self, rho: &DVector<T>, k: usize) -> T {
        self.mean_sq.column(k).dot(rho)
    }
}
