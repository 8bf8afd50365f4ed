//! Small dense second-order cone programs:
//!
//! ```text
//! minimize    cᵀx
//! subject to  Gx + s = h,  Ax = b,  s ∈ R₊^l × Q^{q₁} × … × Q^{q_N}
//! ```
//!
//! solved by an infeasible primal-dual path-following method with
//! Nesterov–Todd scaling and Mehrotra predictor-corrector steps. Each Newton
//! system is the full KKT matrix, factored by dense LU.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SocpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular KKT system at iteration {0}")]
    Singular(usize),
    #[error("no convergence after {iterations} iterations (gap {gap:e}, primal residual {pres:e}, dual residual {dres:e})")]
    MaxIterations { iterations: usize, gap: f64, pres: f64, dres: f64 },
}

/// Cone shape: `l` nonnegative-orthant entries followed by second-order cones
/// of the given sizes (each counts its leading "t" entry).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConeDims {
    pub l: usize,
    pub q: Vec<usize>,
}

impl ConeDims {
    pub fn dim(&self) -> usize {
        self.l + self.q.iter().sum::<usize>()
    }

    fn degree(&self) -> usize {
        self.l + self.q.len()
    }
}

#[derive(Debug, Clone)]
pub struct SocpProblem<T: Real> {
    pub c: DVector<T>,
    pub g: DMatrix<T>,
    pub h: DVector<T>,
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub dims: ConeDims,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SocpSolution<T: Real> {
    pub x: DVector<T>,
    pub s: DVector<T>,
    pub y: DVector<T>,
    pub z: DVector<T>,
    pub primal_objective: T,
    pub dual_objective: T,
    pub gap: T,
    pub iterations: usize,
}

/// Incremental builder for `G`, `h` rows grouped into cones.
#[derive(Debug, Clone)]
pub struct ConeBuilder<T: Real> {
    n: usize,
    linear: Vec<(DVector<T>, T)>,
    soc: Vec<(DMatrix<T>, DVector<T>)>,
}

impl<T: Real> ConeBuilder<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            linear: Vec::new(),
            soc: Vec::new(),
        }
    }

    /// `gᵀx ≤ h`.
    pub fn linear(&mut self, g: DVector<T>, h: T) -> &mut Self {
        assert_eq!(g.len(), self.n);
        self.linear.push((g, h));
        self
    }

    /// `‖F x + f‖ ≤ dᵀx + e`, expressed as `h − Gx ∈ Q` with
    /// `G = −[dᵀ; F]`, `h = [e; f]`.
    pub fn soc(&mut self, d: DVector<T>, e: T, f_mat: DMatrix<T>, f: DVector<T>) -> &mut Self {
        assert_eq!(d.len(), self.n);
        assert_eq!(f_mat.ncols(), self.n);
        assert_eq!(f_mat.nrows(), f.len());
        let k = f.len() + 1;
        let mut g = DMatrix::zeros(k, self.n);
        g.row_mut(0).copy_from(&(-d.transpose()));
        g.view_mut((1, 0), (k - 1, self.n)).copy_from(&(-f_mat));
        let mut h = DVector::zeros(k);
        h[0] = e;
        h.rows_mut(1, k - 1).copy_from(&f);
        self.soc.push((g, h));
        self
    }

    /// Finishes with objective `c` and equality constraints `Ax = b`.
    pub fn build(self, c: DVector<T>, a: DMatrix<T>, b: DVector<T>) -> SocpProblem<T> {
        let dims = ConeDims {
            l: self.linear.len(),
            q: self.soc.iter().map(|(g, _)| g.nrows()).collect(),
        };
        let m = dims.dim();
        let mut g = DMatrix::zeros(m, self.n);
        let mut h = DVector::zeros(m);
        for (i, (row, hi)) in self.linear.iter().enumerate() {
            g.row_mut(i).copy_from(&row.transpose());
            h[i] = *hi;
        }
        let mut off = dims.l;
        for (gq, hq) in &self.soc {
            let k = gq.nrows();
            g.view_mut((off, 0), (k, self.n)).copy_from(gq);
            h.rows_mut(off, k).copy_from(hq);
            off += k;
        }
        SocpProblem { c, g, h, a, b, dims }
    }
}

// --- cone algebra -----------------------------------------------------------

fn cone_ranges(dims: &ConeDims) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dims.q.len());
    let mut off = dims.l;
    for &k in &dims.q {
        out.push((off, k));
        off += k;
    }
    out
}

fn identity_element<T: Real>(dims: &ConeDims) -> DVector<T> {
    let mut e = DVector::zeros(dims.dim());
    for i in 0..dims.l {
        e[i] = T::one();
    }
    for (off, _) in cone_ranges(dims) {
        e[off] = T::one();
    }
    e
}

/// Jordan product `u ∘ v`.
fn jordan<T: Real>(dims: &ConeDims, u: &DVector<T>, v: &DVector<T>) -> DVector<T> {
    let mut out = DVector::zeros(u.len());
    for i in 0..dims.l {
        out[i] = u[i] * v[i];
    }
    for (off, k) in cone_ranges(dims) {
        let (u0, v0) = (u[off], v[off]);
        out[off] = u.rows(off, k).dot(&v.rows(off, k));
        for j in 1..k {
            out[off + j] = u0 * v[off + j] + v0 * u[off + j];
        }
    }
    out
}

/// Solves `λ ∘ x = d` for `x`.
fn jordan_divide<T: Real>(dims: &ConeDims, lambda: &DVector<T>, d: &DVector<T>) -> DVector<T> {
    let mut out = DVector::zeros(d.len());
    for i in 0..dims.l {
        out[i] = d[i] / lambda[i];
    }
    for (off, k) in cone_ranges(dims) {
        let l0 = lambda[off];
        let l1 = lambda.rows(off + 1, k - 1);
        let d1 = d.rows(off + 1, k - 1);
        let det = l0 * l0 - l1.norm_squared();
        let x0 = (l0 * d[off] - l1.dot(&d1)) / det;
        out[off] = x0;
        for j in 1..k {
            out[off + j] = (d[off + j] - x0 * lambda[off + j]) / l0;
        }
    }
    out
}

/// Largest `α ≥ 0` with `u + α d` in the closed cone (`None` = unbounded).
fn max_step<T: Real>(dims: &ConeDims, u: &DVector<T>, d: &DVector<T>) -> Option<T> {
    let mut best: Option<T> = None;
    let mut take = |a: T| {
        best = Some(match best {
            Some(b) if b <= a => b,
            _ => a,
        });
    };
    for i in 0..dims.l {
        if d[i] < T::zero() {
            take(-u[i] / d[i]);
        }
    }
    for (off, k) in cone_ranges(dims) {
        let (u0, d0) = (u[off], d[off]);
        let u1 = u.rows(off + 1, k - 1);
        let d1 = d.rows(off + 1, k - 1);
        // (u0 + α d0)² − ‖u1 + α d1‖² = qa α² + 2 qb α + qc
        let qa = d0 * d0 - d1.norm_squared();
        let qb = u0 * d0 - u1.dot(&d1);
        let qc = u0 * u0 - u1.norm_squared();
        let mut roots: Vec<T> = Vec::with_capacity(2);
        if qa.abs() <= T::lit(1e-300) {
            if qb < T::zero() {
                roots.push(-qc / (T::lit(2.0) * qb));
            }
        } else {
            let disc = qb * qb - qa * qc;
            if disc >= T::zero() {
                let sq = disc.sqrt();
                // numerically stable pair
                let q = if qb >= T::zero() { -(qb + sq) } else { -(qb - sq) };
                if q != T::zero() {
                    roots.push(qc / q);
                }
                roots.push(q / qa);
            }
        }
        let mut cone_best: Option<T> = None;
        for r in roots.into_iter().filter(|r| *r > T::zero()) {
            cone_best = Some(match cone_best {
                Some(b) if b <= r => b,
                _ => r,
            });
        }
        // leaving through the apex (or along the axis) is caught by u0 + α d0 ≥ 0
        if d0 < T::zero() {
            let r = -u0 / d0;
            cone_best = Some(match cone_best {
                Some(b) if b <= r => b,
                _ => r,
            });
        }
        if let Some(b) = cone_best {
            take(b);
        }
    }
    best
}

/// `inf{α : u + α e ∈ cone}`.
fn min_shift<T: Real>(dims: &ConeDims, u: &DVector<T>) -> T {
    let mut worst = T::lit(-1e300);
    for i in 0..dims.l {
        worst = worst.max(-u[i]);
    }
    for (off, k) in cone_ranges(dims) {
        worst = worst.max(u.rows(off + 1, k - 1).norm() - u[off]);
    }
    worst
}

/// Nesterov–Todd scaling. Linear part: `w = √(s/z)`. Each SOC: `W = β(2vvᵀ − J)`.
struct Scaling<T: Real> {
    lin: DVector<T>,
    soc: Vec<(T, DVector<T>)>,
}

fn j_norm<T: Real>(u: &nalgebra::DVectorView<'_, T>) -> T {
    (u[0] * u[0] - u.rows(1, u.len() - 1).norm_squared()).max(T::zero()).sqrt()
}

impl<T: Real> Scaling<T> {
    fn new(dims: &ConeDims, s: &DVector<T>, z: &DVector<T>) -> Self {
        let lin = DVector::from_fn(dims.l, |i, _| (s[i] / z[i]).sqrt());
        let mut soc = Vec::with_capacity(dims.q.len());
        for (off, k) in cone_ranges(dims) {
            let sv = s.rows(off, k);
            let zv = z.rows(off, k);
            let sn = j_norm(&sv);
            let zn = j_norm(&zv);
            let sb = sv.unscale(sn);
            let zb = zv.unscale(zn);
            let gamma = ((T::one() + sb.dot(&zb)) / T::lit(2.0)).sqrt();
            let mut wb = sb.clone();
            wb[0] += zb[0];
            for j in 1..k {
                wb[j] -= zb[j];
            }
            wb.unscale_mut(T::lit(2.0) * gamma);
            let mut v = wb.clone();
            v[0] += T::one();
            let vn = (T::lit(2.0) * (wb[0] + T::one())).sqrt();
            v.unscale_mut(vn);
            let beta = (sn / zn).sqrt();
            soc.push((beta, v));
        }
        Self { lin, soc }
    }

    /// `W u` (W is symmetric).
    fn apply(&self, dims: &ConeDims, u: &DVector<T>, inverse: bool) -> DVector<T> {
        let mut out = DVector::zeros(u.len());
        for i in 0..dims.l {
            out[i] = if inverse { u[i] / self.lin[i] } else { u[i] * self.lin[i] };
        }
        for ((off, k), (beta, v)) in cone_ranges(dims).into_iter().zip(&self.soc) {
            let uv = u.rows(off, k);
            // J u
            let mut ju = uv.into_owned();
            for j in 1..k {
                ju[j] = -ju[j];
            }
            let res = if inverse {
                // W⁻¹ = (2 J v vᵀ J − J) / β
                let mut jv = v.clone();
                for j in 1..k {
                    jv[j] = -jv[j];
                }
                let c = jv.dot(&uv);
                (jv * (T::lit(2.0) * c) - ju).unscale(*beta)
            } else {
                let c = v.dot(&uv);
                (v * (T::lit(2.0) * c) - ju).scale(*beta)
            };
            out.rows_mut(off, k).copy_from(&res);
        }
        out
    }

}

fn check_dims<T: Real>(p: &SocpProblem<T>) -> Result<(), SocpError> {
    let n = p.c.len();
    let m = p.dims.dim();
    if p.g.nrows() != m || p.g.ncols() != n || p.h.len() != m {
        return Err(SocpError::Dimension(format!("G is {}x{}, h {}, cones {m}, n {n}", p.g.nrows(), p.g.ncols(), p.h.len())));
    }
    if p.a.ncols() != n && p.a.nrows() != 0 {
        return Err(SocpError::Dimension("A columns".into()));
    }
    if p.a.nrows() != p.b.len() {
        return Err(SocpError::Dimension("A rows vs b".into()));
    }
    if p.dims.q.contains(&0) {
        return Err(SocpError::Dimension("empty second-order cone".into()));
    }
    Ok(())
}

/// `(Δx, Δy, Δz)`.
type Direction<T> = (DVector<T>, DVector<T>, DVector<T>);
/// `(Δx, Δy, Δz, Δs)`.
type Step<T> = (DVector<T>, DVector<T>, DVector<T>, DVector<T>);

/// Factored KKT system `[0 Aᵀ Gᵀ; A 0 0; G 0 −WᵀW]`, reduced by eliminating
/// `z` to `[GᵀW⁻²G Aᵀ; A 0]`.
struct Kkt<'a, T: Real> {
    p: &'a SocpProblem<T>,
    scaling: Option<&'a Scaling<T>>,
    /// `W⁻¹G`.
    wg: DMatrix<T>,
    lu: nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
    iteration: usize,
}

impl<'a, T: Real> Kkt<'a, T> {
    /// `scaling = None` means `W = I`.
    fn factor(p: &'a SocpProblem<T>, scaling: Option<&'a Scaling<T>>, iteration: usize) -> Result<Self, SocpError> {
        let n = p.c.len();
        let np = p.b.len();
        let mut wg = p.g.clone();
        if let Some(w) = scaling {
            for j in 0..n {
                let col = w.apply(&p.dims, &p.g.column(j).into_owned(), true);
                wg.set_column(j, &col);
            }
        }
        let mut k = DMatrix::zeros(n + np, n + np);
        k.view_mut((0, 0), (n, n)).copy_from(&wg.tr_mul(&wg));
        if np > 0 {
            k.view_mut((0, n), (n, np)).copy_from(&p.a.transpose());
            k.view_mut((n, 0), (np, n)).copy_from(&p.a);
        }
        Ok(Self {
            p,
            scaling,
            wg,
            lu: k.lu(),
            iteration,
        })
    }

    fn winv(&self, u: &DVector<T>) -> DVector<T> {
        match self.scaling {
            Some(w) => w.apply(&self.p.dims, u, true),
            None => u.clone(),
        }
    }

    fn solve_once(&self, bx: &DVector<T>, by: &DVector<T>, bz: &DVector<T>) -> Result<Direction<T>, SocpError> {
        let n = self.p.c.len();
        let np = self.p.b.len();
        let wbz = self.winv(bz);
        let mut r = DVector::zeros(n + np);
        r.rows_mut(0, n).copy_from(&(bx + self.wg.tr_mul(&wbz)));
        r.rows_mut(n, np).copy_from(by);
        let sol = self.lu.solve(&r).ok_or(SocpError::Singular(self.iteration))?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(SocpError::Singular(self.iteration));
        }
        let dx = sol.rows(0, n).into_owned();
        let dz = self.winv(&(&self.wg * &dx - wbz));
        Ok((dx, sol.rows(n, np).into_owned(), dz))
    }

    /// `W²u`.
    fn w_sq(&self, u: &DVector<T>) -> DVector<T> {
        match self.scaling {
            Some(w) => w.apply(&self.p.dims, &w.apply(&self.p.dims, u, false), false),
            None => u.clone(),
        }
    }

    /// Solve with two steps of iterative refinement against the full system.
    fn solve(&self, bx: &DVector<T>, by: &DVector<T>, bz: &DVector<T>) -> Result<Direction<T>, SocpError> {
        let p = self.p;
        let (mut dx, mut dy, mut dz) = self.solve_once(bx, by, bz)?;
        for _ in 0..2 {
            let rx = bx - p.a.tr_mul(&dy) - p.g.tr_mul(&dz);
            let ry = by - &p.a * &dx;
            let rz = bz - (&p.g * &dx - self.w_sq(&dz));
            let (cx, cy, cz) = self.solve_once(&rx, &ry, &rz)?;
            dx += cx;
            dy += cy;
            dz += cz;
        }
        Ok((dx, dy, dz))
    }
}

pub fn solve<T: Real>(p: &SocpProblem<T>, opts: &SolverOptions) -> Result<SocpSolution<T>, SocpError> {
    check_dims(p)?;
    let dims = &p.dims;
    let n = p.c.len();
    let np = p.b.len();
    let m = dims.dim();
    let e = identity_element::<T>(dims);
    let degree = T::from_count(dims.degree().max(1));

    // starting point
    let kkt0 = Kkt::factor(p, None, 0)?;
    let (mut x, _, z0) = kkt0.solve(&DVector::zeros(n), &p.b, &p.h)?;
    let mut s = -z0;
    let (_, mut y, mut z) = kkt0.solve(&(-&p.c), &DVector::zeros(np), &DVector::zeros(m))?;
    let shift = |u: &mut DVector<T>| {
        let a = min_shift(dims, u);
        if a >= -T::lit(1e-8) * u.norm().max(T::one()) {
            *u += &e * (T::one() + a);
        }
    };
    shift(&mut s);
    shift(&mut z);

    let res_scale_p = T::one().max(p.b.norm()).max(p.h.norm());
    let res_scale_d = T::one().max(p.c.norm());
    let tol_gap = T::lit(opts.gap_tol);
    let tol_feas = T::lit(opts.feas_tol);
    let mut last = (T::zero(), T::zero(), T::zero());

    for it in 0..=opts.max_iters {
        let rx = p.a.tr_mul(&y) + p.g.tr_mul(&z) + &p.c;
        let ry = &p.a * &x - &p.b;
        let rz = &p.g * &x + &s - &p.h;
        let gap = s.dot(&z);
        let pcost = p.c.dot(&x);
        let dcost = pcost + rx.dot(&x) - gap;
        let pres = ry.norm().max(rz.norm()) / res_scale_p;
        let dres = rx.norm() / res_scale_d;
        last = (gap, pres, dres);
        if pres <= tol_feas && dres <= tol_feas && gap <= tol_gap * T::one().max(pcost.abs()) {
            return Ok(SocpSolution {
                x,
                s,
                y,
                z,
                primal_objective: pcost,
                dual_objective: dcost,
                gap,
                iterations: it,
            });
        }
        if it == opts.max_iters {
            break;
        }
        let mu = gap / degree;
        let scaling = Scaling::new(dims, &s, &z);
        let lambda = scaling.apply(dims, &z, false);
        let lambda_sq = jordan(dims, &lambda, &lambda);
        let kkt = Kkt::factor(p, Some(&scaling), it)?;
        // Close to the optimum the scaled system can lose rank; an iterate that
        // already meets the relaxed tolerances is then returned as is.
        let near_optimal = pres <= tol_feas.sqrt() && dres <= tol_feas.sqrt() && gap <= tol_gap.sqrt() * T::one().max(pcost.abs());
        let done = |x: &DVector<T>, s: &DVector<T>, y: &DVector<T>, z: &DVector<T>| SocpSolution {
            x: x.clone(),
            s: s.clone(),
            y: y.clone(),
            z: z.clone(),
            primal_objective: pcost,
            dual_objective: dcost,
            gap,
            iterations: it,
        };

        // Newton step for complementarity target d (scaled space)
        let newton = |d: &DVector<T>| -> Result<Step<T>, SocpError> {
            let ld = jordan_divide(dims, &lambda, d);
            let wt_ld = scaling.apply(dims, &ld, false);
            let (dx, dy, dz) = kkt.solve(&(-&rx), &(-&ry), &(-&rz - &wt_ld))?;
            let ds = &wt_ld - scaling.apply(dims, &scaling.apply(dims, &dz, false), false);
            Ok((dx, dy, dz, ds))
        };

        let (_, _, dz_a, ds_a) = match newton(&(-&lambda_sq)) {
            Ok(v) => v,
            Err(_) if near_optimal => return Ok(done(&x, &s, &y, &z)),
            Err(e) => return Err(e),
        };
        let alpha_aff = [max_step(dims, &s, &ds_a), max_step(dims, &z, &dz_a)]
            .into_iter()
            .flatten()
            .fold(T::one(), |a, b| a.min(b));
        let sigma = (T::one() - alpha_aff).max(T::zero()).powi(3);

        let ws = scaling.apply(dims, &ds_a, true);
        let wz = scaling.apply(dims, &dz_a, false);
        let d = -&lambda_sq - jordan(dims, &ws, &wz) + &e * (sigma * mu);
        let (dx, dy, dz, ds) = match newton(&d) {
            Ok(v) => v,
            Err(_) if near_optimal => return Ok(done(&x, &s, &y, &z)),
            Err(e) => return Err(e),
        };
        let step = [max_step(dims, &s, &ds), max_step(dims, &z, &dz)]
            .into_iter()
            .flatten()
            .fold(T::lit(1e300), |a, b| a.min(b));
        let alpha = (step * T::lit(0.99)).min(T::one());
        x += dx * alpha;
        y += dy * alpha;
        z += dz * alpha;
        s += ds * alpha;
    }
    Err(SocpError::MaxIterations {
        iterations: opts.max_iters,
        gap: last.0.as_f64(),
        pres: last.1.as_f64(),
        dres: last.2.as_f64(),
    })
}
