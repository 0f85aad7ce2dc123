//! Monotonicity constraints in coefficient space and a small dense convex QP
//! solver (ADMM operator splitting with an active-set polish).
//!
//! Problems have the form `min ½cᵀPc + qᵀc + const  s.t.  Gc ≤ h`.

use serde::{Deserialize, Serialize};

use crate::basis::EigenBasis;
use crate::error::{GrdError, Result};
use crate::grid::{AxisSpec, SampleSet, QUALITY_MAX};
use crate::linalg::{Cholesky, Lu, Matrix};
use crate::scalar::{dot, norm_inf, Real};

/// One forward difference `f[plus] − f[minus]` over flattened cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffRow {
    pub plus: usize,
    pub minus: usize,
}

/// Forward differences along bitrate (every resolution) and along resolution
/// (top bitrate only). Each row is stored as its `+1`/`−1` column pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceOperators {
    pub d_x: Vec<DiffRow>,
    pub d_y: Vec<DiffRow>,
    pub k: usize,
}

impl DifferenceOperators {
    /// Rows of `[D_x; D_y]`.
    pub fn rows(&self) -> impl Iterator<Item = &DiffRow> {
        self.d_x.iter().chain(&self.d_y)
    }

    pub fn n_rows(&self) -> usize {
        self.d_x.len() + self.d_y.len()
    }

    /// `[D_x; D_y] f`.
    pub fn apply<T: Real>(&self, f: &[T]) -> Result<Vec<T>> {
        if f.len() != self.k {
            return Err(GrdError::DimensionMismatch { expected: self.k, got: f.len() });
        }
        Ok(self.rows().map(|r| f[r.plus] - f[r.minus]).collect())
    }

    /// Dense `[D_x; D_y]`.
    pub fn to_dense<T: Real>(&self) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n_rows(), self.k);
        for (i, r) in self.rows().enumerate() {
            m[(i, r.plus)] = T::one();
            m[(i, r.minus)] = -T::one();
        }
        m
    }
}

/// Builds the difference operators for the bitrate-major flatten order.
///
/// A single-resolution axis yields an empty `d_y` (RD curves).
pub fn build_difference_operators<T: Real>(axes: &AxisSpec<T>) -> Result<DifferenceOperators> {
    axes.validate()?;
    let (nb, nr) = (axes.n_bitrates(), axes.n_resolutions());
    if nb < 2 {
        return Err(GrdError::InvalidAxes("need at least 2 bitrates".into()));
    }
    let mut d_x = Vec::with_capacity((nb - 1) * nr);
    for i in 1..nb {
        for j in 0..nr {
            d_x.push(DiffRow { plus: axes.flat_index(i, j), minus: axes.flat_index(i - 1, j) });
        }
    }
    let d_y = (1..nr)
        .map(|j| DiffRow { plus: axes.flat_index(nb - 1, j), minus: axes.flat_index(nb - 1, j - 1) })
        .collect();
    Ok(DifferenceOperators { d_x, d_y, k: axes.len() })
}

/// `min ½cᵀ·hessian·c + linearᵀc + constant  s.t.  ineq_matrix·c ≤ ineq_bound`.
///
/// From [`assemble_qp`], `constant = ½‖r‖²`, so the objective is exactly
/// `½‖Ac − r‖²` and equals `½Σr_i²` at `c = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem<T> {
    pub hessian: Matrix<T>,
    pub linear: Vec<T>,
    pub ineq_matrix: Matrix<T>,
    pub ineq_bound: Vec<T>,
    pub constant: T,
}

impl<T: Real> QpProblem<T> {
    pub fn new(hessian: Matrix<T>, linear: Vec<T>, ineq_matrix: Matrix<T>, ineq_bound: Vec<T>) -> Result<Self> {
        let p = Self { hessian, linear, ineq_matrix, ineq_bound, constant: T::zero() };
        p.check()?;
        Ok(p)
    }

    pub fn n_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.ineq_bound.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.linear.len();
        if self.hessian.nrows() != n || self.hessian.ncols() != n {
            return Err(GrdError::DimensionMismatch { expected: n, got: self.hessian.nrows() });
        }
        if self.ineq_matrix.nrows() != self.ineq_bound.len() {
            return Err(GrdError::DimensionMismatch {
                expected: self.ineq_bound.len(),
                got: self.ineq_matrix.nrows(),
            });
        }
        if self.ineq_matrix.nrows() > 0 && self.ineq_matrix.ncols() != n {
            return Err(GrdError::DimensionMismatch { expected: n, got: self.ineq_matrix.ncols() });
        }
        let scale = self.hessian.as_slice().iter().fold(T::one(), |a, &b| a.max(b.abs()));
        if self.hessian.max_asymmetry() > T::lit(1e-10) * scale {
            return Err(GrdError::InvalidArgument("hessian is not symmetric".into()));
        }
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        if !finite(self.hessian.as_slice())
            || !finite(&self.linear)
            || !finite(self.ineq_matrix.as_slice())
            || !finite(&self.ineq_bound)
        {
            return Err(GrdError::Numerical("non-finite QP data".into()));
        }
        Ok(())
    }

    pub fn objective(&self, c: &[T]) -> T {
        let pc = self.hessian.matvec(c);
        T::lit(0.5) * dot(c, &pc) + dot(&self.linear, c) + self.constant
    }

    /// `max_i (G c − h)_i`, or 0 without constraints.
    pub fn max_violation(&self, c: &[T]) -> T {
        if self.n_constraints() == 0 {
            return T::zero();
        }
        self.ineq_matrix
            .matvec(c)
            .iter()
            .zip(&self.ineq_bound)
            .fold(T::neg_infinity(), |m, (&g, &h)| m.max(g - h))
    }

    /// Appends rows `G_extra c ≤ h_extra`.
    pub fn push_constraints(&mut self, rows: &[Vec<T>], bounds: &[T]) -> Result<()> {
        if rows.len() != bounds.len() {
            return Err(GrdError::DimensionMismatch { expected: rows.len(), got: bounds.len() });
        }
        if rows.is_empty() {
            return Ok(());
        }
        let extra = Matrix::from_rows(rows)?;
        self.ineq_matrix = if self.n_constraints() == 0 {
            extra
        } else {
            self.ineq_matrix.vstack(&extra)?
        };
        self.ineq_bound.extend_from_slice(bounds);
        self.check()
    }
}

/// A linear observation `Σ w_k f[k] ≈ value` of the flattened surface.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T> {
    pub weights: Vec<(usize, T)>,
    pub value: T,
}

/// Builds the QP for fitting samples with the first `n` basis vectors while
/// keeping the synthesized surface monotone:
/// `P = AᵀA`, `q = −Aᵀr`, `G = −[D_x; D_y]H_n`, `h = [D_x; D_y]f₀`.
///
/// When there are fewer samples than unknowns, `1e−10·I` is added to `P`.
pub fn assemble_qp<T: Real>(
    basis: &EigenBasis<T>,
    samples: &SampleSet<T>,
    n: usize,
    ops: &DifferenceOperators,
) -> Result<QpProblem<T>> {
    basis.axes.ensure_same(samples.axes())?;
    if samples.is_empty() {
        return Err(GrdError::InvalidSamples("no samples".into()));
    }
    let obs: Vec<Observation<T>> = samples
        .entries()
        .iter()
        .zip(samples.flat_indices())
        .map(|(s, k)| Observation { weights: vec![(k, T::one())], value: s.quality })
        .collect();
    assemble_qp_observations(basis, &obs, n, ops)
}

/// [`assemble_qp`] for general linear observations, e.g. a sample taken
/// between two grid bitrates and expressed as an interpolation of both.
pub fn assemble_qp_observations<T: Real>(
    basis: &EigenBasis<T>,
    observations: &[Observation<T>],
    n: usize,
    ops: &DifferenceOperators,
) -> Result<QpProblem<T>> {
    if n > basis.n_max() {
        return Err(GrdError::InvalidArgument(format!(
            "n = {n} exceeds the {} available components",
            basis.n_max()
        )));
    }
    if ops.k != basis.k() {
        return Err(GrdError::DimensionMismatch { expected: basis.k(), got: ops.k });
    }
    if observations.is_empty() {
        return Err(GrdError::InvalidSamples("no samples".into()));
    }
    let (design, residual) = design_rows(basis, observations, n)?;
    let a = Matrix::from_vec(observations.len(), n, design.concat())?;
    let mut hessian = a.gram();
    if observations.len() < n {
        hessian.add_diagonal(T::lit(1e-10));
    }
    let linear = a.tr_matvec(&residual).into_iter().map(|v| -v).collect();
    let constant = T::lit(0.5) * dot(&residual, &residual);

    let m = ops.n_rows();
    let mut g = Matrix::zeros(m, n);
    for (i, r) in ops.rows().enumerate() {
        for c in 0..n {
            let h = basis.component(c);
            g[(i, c)] = h[r.minus] - h[r.plus];
        }
    }
    let bound = ops.apply(&basis.mean)?;
    let mut p = QpProblem::new(hessian, linear, g, bound)?;
    p.constant = constant;
    Ok(p)
}

/// Rows of the sampled basis (`A`) and the mean-removed targets (`r`).
pub(crate) fn design_rows<T: Real>(
    basis: &EigenBasis<T>,
    observations: &[Observation<T>],
    n: usize,
) -> Result<(Vec<Vec<T>>, Vec<T>)> {
    let k = basis.k();
    let mut rows = Vec::with_capacity(observations.len());
    let mut r = Vec::with_capacity(observations.len());
    for o in observations {
        if o.weights.is_empty() || o.weights.iter().any(|&(c, _)| c >= k) {
            return Err(GrdError::InvalidSamples("observation references no valid cell".into()));
        }
        let row = (0..n)
            .map(|c| {
                let h = basis.component(c);
                o.weights.iter().map(|&(cell, w)| w * h[cell]).sum()
            })
            .collect();
        let f0: T = o.weights.iter().map(|&(cell, w)| w * basis.mean[cell]).sum();
        rows.push(row);
        r.push(o.value - f0);
    }
    Ok((rows, r))
}

/// Rows keeping the synthesized surface inside `[0, 100]`: the lowest-bitrate
/// cell of every resolution stays ≥ 0 and the top corner stays ≤ 100. Under
/// the monotonicity rows these bound every cell.
pub fn range_constraints<T: Real>(basis: &EigenBasis<T>, n: usize) -> Result<(Vec<Vec<T>>, Vec<T>)> {
    if n > basis.n_max() {
        return Err(GrdError::InvalidArgument(format!("n = {n} exceeds N_max")));
    }
    let axes = &basis.axes;
    let mut rows = Vec::with_capacity(axes.n_resolutions() + 1);
    let mut bounds = Vec::with_capacity(axes.n_resolutions() + 1);
    for j in 0..axes.n_resolutions() {
        let cell = axes.flat_index(0, j);
        rows.push((0..n).map(|c| -basis.component(c)[cell]).collect());
        bounds.push(basis.mean[cell]);
    }
    let top = axes.len() - 1;
    rows.push((0..n).map(|c| basis.component(c)[top]).collect());
    bounds.push(T::lit(QUALITY_MAX) - basis.mean[top]);
    Ok((rows, bounds))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub adaptive_rho: bool,
    /// Run the active-set polish after ADMM.
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: false,
            polish: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    MaxIterations,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct QpSolution<T> {
    pub coefficients: Vec<T>,
    /// Constraint multipliers (≥ 0 at a KKT point).
    pub multipliers: Vec<T>,
    pub objective: T,
    pub primal_residual: T,
    pub dual_residual: T,
    pub iterations: usize,
    pub polished: bool,
    pub status: QpStatus,
}

struct Residuals<T> {
    prim: T,
    dual: T,
    eps_prim: T,
    eps_dual: T,
}

fn residuals<T: Real>(p: &QpProblem<T>, x: &[T], z: &[T], y: &[T], s: &QpSettings) -> Residuals<T> {
    let ax = if p.n_constraints() > 0 { p.ineq_matrix.matvec(x) } else { Vec::new() };
    let px = p.hessian.matvec(x);
    let aty = if p.n_constraints() > 0 { p.ineq_matrix.tr_matvec(y) } else { vec![T::zero(); x.len()] };
    let prim = ax.iter().zip(z).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
    let dual = px
        .iter()
        .zip(&p.linear)
        .zip(&aty)
        .fold(T::zero(), |m, ((&a, &b), &c)| m.max((a + b + c).abs()));
    let (abs, rel) = (T::lit(s.abs_tol), T::lit(s.rel_tol));
    Residuals {
        prim,
        dual,
        eps_prim: abs + rel * norm_inf(&ax).max(norm_inf(z)),
        eps_dual: abs + rel * norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(&p.linear)),
    }
}

/// Residuals of a candidate `(x, y)`; `z` is taken as the projection of `Gx`.
fn kkt_residuals<T: Real>(p: &QpProblem<T>, x: &[T], y: &[T], s: &QpSettings) -> Residuals<T> {
    let z: Vec<T> = if p.n_constraints() > 0 {
        p.ineq_matrix.matvec(x).iter().zip(&p.ineq_bound).map(|(&a, &h)| a.min(h)).collect()
    } else {
        Vec::new()
    };
    residuals(p, x, &z, y, s)
}

fn factor_kkt<T: Real>(p: &QpProblem<T>, sigma: T, rho: T) -> Result<Cholesky<T>> {
    let mut k = if p.n_constraints() > 0 {
        let mut g = p.ineq_matrix.gram();
        g.scale(rho);
        g
    } else {
        Matrix::zeros(p.n_vars(), p.n_vars())
    };
    for i in 0..p.n_vars() {
        for j in 0..p.n_vars() {
            k[(i, j)] += p.hessian[(i, j)];
        }
    }
    k.add_diagonal(sigma);
    Cholesky::new(&k)
}

/// Solves a convex QP. Deterministic for identical inputs.
///
/// ADMM runs until the primal/dual residuals meet the tolerances, then an
/// active-set polish solves the equality-constrained problem on the
/// identified active set and keeps it if it is a KKT point. Infeasibility is
/// reported when the dual iterates diverge along a certificate direction.
pub fn solve_qp<T: Real>(problem: &QpProblem<T>, settings: &QpSettings) -> Result<QpSolution<T>> {
    problem.check()?;
    let (n, m) = (problem.n_vars(), problem.n_constraints());
    if n == 0 {
        return Ok(QpSolution {
            coefficients: Vec::new(),
            multipliers: vec![T::zero(); m],
            objective: problem.constant,
            primal_residual: T::zero(),
            dual_residual: T::zero(),
            iterations: 0,
            polished: false,
            status: if problem.ineq_bound.iter().all(|&h| h >= T::zero()) {
                QpStatus::Solved
            } else {
                QpStatus::Infeasible
            },
        });
    }
    if !(settings.rho > 0.0 && settings.sigma > 0.0 && settings.alpha > 0.0 && settings.alpha < 2.0) {
        return Err(GrdError::InvalidArgument("need rho > 0, sigma > 0, alpha in (0, 2)".into()));
    }

    let sigma = T::lit(settings.sigma);
    let alpha = T::lit(settings.alpha);
    let mut rho = T::lit(settings.rho);
    let mut kkt = factor_kkt(problem, sigma, rho)?;
    let g = &problem.ineq_matrix;
    let h = &problem.ineq_bound;

    let mut x = vec![T::zero(); n];
    let mut z = vec![T::zero(); m];
    let mut y = vec![T::zero(); m];
    let mut status = QpStatus::MaxIterations;
    let mut iterations = settings.max_iter;
    let eps_inf = T::lit(1e-9);
    const CHECK_EVERY: usize = 5;

    for it in 1..=settings.max_iter {
        // x̃ from the regularized KKT system, then relaxed z/y updates
        let mut rhs: Vec<T> = x.iter().zip(&problem.linear).map(|(&xi, &qi)| sigma * xi - qi).collect();
        if m > 0 {
            let w: Vec<T> = z.iter().zip(&y).map(|(&zi, &yi)| rho * zi - yi).collect();
            for (r, v) in rhs.iter_mut().zip(g.tr_matvec(&w)) {
                *r += v;
            }
        }
        let x_tilde = kkt.solve(&rhs);
        let z_tilde = if m > 0 { g.matvec(&x_tilde) } else { Vec::new() };
        for (xi, &xt) in x.iter_mut().zip(&x_tilde) {
            *xi = alpha * xt + (T::one() - alpha) * *xi;
        }
        let mut dy = vec![T::zero(); m];
        for i in 0..m {
            let relaxed = alpha * z_tilde[i] + (T::one() - alpha) * z[i];
            let z_new = (relaxed + y[i] / rho).min(h[i]);
            let y_new = y[i] + rho * (relaxed - z_new);
            dy[i] = y_new - y[i];
            z[i] = z_new;
            y[i] = y_new;
        }

        if it % CHECK_EVERY != 0 && it != settings.max_iter {
            continue;
        }
        let res = residuals(problem, &x, &z, &y, settings);
        if res.prim <= res.eps_prim && res.dual <= res.eps_dual {
            status = QpStatus::Solved;
            iterations = it;
            break;
        }
        // primal infeasibility certificate: Gᵀδy ≈ 0, δy ≥ 0, hᵀδy < 0
        let dy_norm = norm_inf(&dy);
        if m > 0 && dy_norm > T::zero() {
            let gdy = norm_inf(&g.tr_matvec(&dy));
            let neg = dy.iter().fold(T::zero(), |a, &v| a.max(-v));
            if gdy <= eps_inf * dy_norm && neg <= eps_inf * dy_norm && dot(h, &dy) < -eps_inf * dy_norm {
                status = QpStatus::Infeasible;
                iterations = it;
                break;
            }
        }
        if settings.adaptive_rho && it % 50 == 0 {
            let ratio = ((res.prim / res.eps_prim.max(T::min_positive_value()))
                / (res.dual / res.eps_dual.max(T::min_positive_value())).max(T::min_positive_value()))
            .sqrt();
            if ratio > T::lit(5.0) || ratio < T::lit(0.2) {
                rho = (rho * ratio).max(T::lit(1e-6)).min(T::lit(1e6));
                kkt = factor_kkt(problem, sigma, rho)?;
            }
        }
    }

    let mut polished = false;
    if settings.polish && status != QpStatus::Infeasible {
        if let Some((xp, yp)) = polish(problem, &z, &y) {
            let before = kkt_residuals(problem, &x, &y, settings);
            let after = kkt_residuals(problem, &xp, &yp, settings);
            let feasible = problem.max_violation(&xp) <= T::lit(settings.abs_tol).max(T::lit(1e-9));
            let better = after.prim <= before.prim.max(after.eps_prim)
                && after.dual <= before.dual.max(after.eps_dual);
            if feasible && (better || status != QpStatus::Solved) && after.dual <= after.eps_dual {
                x = xp;
                y = yp;
                polished = true;
                status = QpStatus::Solved;
            }
        }
    }

    let res = kkt_residuals(problem, &x, &y, settings);
    Ok(QpSolution {
        objective: problem.objective(&x),
        coefficients: x,
        multipliers: y,
        primal_residual: res.prim,
        dual_residual: res.dual,
        iterations,
        polished,
        status,
    })
}

/// Equality-constrained re-solve on a guessed active set, with a few
/// add/drop corrections. Returns `(x, y)` if a KKT point is found.
fn polish<T: Real>(p: &QpProblem<T>, z: &[T], y: &[T]) -> Option<(Vec<T>, Vec<T>)> {
    let m = p.n_constraints();
    let scale = norm_inf(&p.ineq_bound).max(T::one());
    let act_tol = T::lit(1e-7) * scale;
    let y_tol = T::lit(1e-9) * norm_inf(y).max(T::one());
    let mut active: Vec<bool> = (0..m)
        .map(|i| y[i] > y_tol || (m > 0 && p.ineq_bound[i] - z[i] <= act_tol))
        .collect();
    let feas_tol = T::lit(1e-10) * scale;
    let mult_tol = T::lit(-1e-10) * norm_inf(&p.linear).max(T::one());
    for _ in 0..(2 * m + 4) {
        let idx: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
        let (xs, ys) = solve_equality(p, &idx)?;
        let mut full_y = vec![T::zero(); m];
        for (&i, &v) in idx.iter().zip(&ys) {
            full_y[i] = v;
        }
        // most negative multiplier leaves, else most violated row enters
        let worst_mult = idx
            .iter()
            .zip(&ys)
            .filter(|(_, &v)| v < mult_tol)
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite"));
        if let Some((&i, _)) = worst_mult {
            active[i] = false;
            continue;
        }
        let gx = if m > 0 { p.ineq_matrix.matvec(&xs) } else { Vec::new() };
        let worst_row = (0..m)
            .filter(|&i| !active[i] && gx[i] - p.ineq_bound[i] > feas_tol)
            .max_by(|&a, &b| {
                (gx[a] - p.ineq_bound[a]).partial_cmp(&(gx[b] - p.ineq_bound[b])).expect("finite")
            });
        if let Some(i) = worst_row {
            active[i] = true;
            continue;
        }
        full_y.iter_mut().for_each(|v| *v = v.max(T::zero()));
        return Some((xs, full_y));
    }
    None
}

/// Solves `[P Gₐᵀ; Gₐ 0][x; y] = [−q; hₐ]` through a slightly regularized
/// quasi-definite system followed by iterative refinement on the exact one.
fn solve_equality<T: Real>(p: &QpProblem<T>, active: &[usize]) -> Option<(Vec<T>, Vec<T>)> {
    let (n, a) = (p.n_vars(), active.len());
    let dim = n + a;
    let pscale = p.hessian.as_slice().iter().fold(T::one(), |acc, &v| acc.max(v.abs()));
    let delta = T::lit(1e-11) * pscale;
    let mut exact = Matrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            exact[(i, j)] = p.hessian[(i, j)];
        }
    }
    for (r, &row) in active.iter().enumerate() {
        for j in 0..n {
            let v = p.ineq_matrix[(row, j)];
            exact[(n + r, j)] = v;
            exact[(j, n + r)] = v;
        }
    }
    let mut reg = exact.clone();
    for i in 0..dim {
        reg[(i, i)] += if i < n { delta } else { -delta };
    }
    let lu = Lu::new(&reg).ok()?;
    let mut rhs: Vec<T> = p.linear.iter().map(|&v| -v).collect();
    rhs.extend(active.iter().map(|&i| p.ineq_bound[i]));
    let mut sol = lu.solve(&rhs);
    for _ in 0..5 {
        let ks = exact.matvec(&sol);
        let r: Vec<T> = rhs.iter().zip(&ks).map(|(&b, &v)| b - v).collect();
        let d = lu.solve(&r);
        sol.iter_mut().zip(&d).for_each(|(s, &v)| *s += v);
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let ys = sol.split_off(n);
    Some((sol, ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GrdGrid, Sample};

    fn axes(nb: usize, nr: usize) -> AxisSpec<f64> {
        AxisSpec::new((1..=nb).map(|i| 100.0 * i as f64).collect(), (1..=nr).map(|j| j as f64).collect())
            .unwrap()
    }

    #[test]
    fn operator_row_counts() {
        let ops = build_difference_operators(&axes(2, 2)).unwrap();
        assert_eq!((ops.d_x.len(), ops.d_y.len()), (2, 1));
        let ops = build_difference_operators(&axes(9, 6)).unwrap();
        assert_eq!((ops.d_x.len(), ops.d_y.len()), (48, 5));
        let one_d = build_difference_operators(&axes(5, 1)).unwrap();
        assert_eq!((one_d.d_x.len(), one_d.d_y.len()), (4, 0));
        let dense = ops.to_dense::<f64>();
        for i in 0..dense.nrows() {
            let row = dense.row(i);
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == -1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), 52);
        }
    }

    #[test]
    fn operators_follow_flatten_order() {
        let ax = axes(3, 2);
        let ops = build_difference_operators(&ax).unwrap();
        // flat = i·2 + j
        assert_eq!(ops.d_x[0], DiffRow { plus: 2, minus: 0 });
        assert_eq!(ops.d_x[1], DiffRow { plus: 3, minus: 1 });
        assert_eq!(ops.d_y[0], DiffRow { plus: 5, minus: 4 });
        let g = GrdGrid::from_fn(ax, |i, j| (10 * i + j) as f64).unwrap();
        assert!(ops.apply(g.values()).unwrap().iter().all(|&d| d >= 0.0));
    }

    fn one_component_basis() -> EigenBasis<f64> {
        // 2×2 grid, mean [1, 2, 3, 4], h = [0.5, 0.5, -0.5, 0.5]
        EigenBasis {
            kind: crate::basis::BasisKind::Eigen,
            axes: axes(2, 2),
            mean: vec![1.0, 2.0, 3.0, 4.0],
            components: vec![vec![0.5, 0.5, -0.5, 0.5]],
            eigenvalues: vec![1.0],
            total_variance: 1.0,
            training_count: 2,
            truncated: false,
        }
    }

    #[test]
    fn assembled_matrices_by_hand() {
        let b = one_component_basis();
        let ops = build_difference_operators(&b.axes).unwrap();
        let s = SampleSet::new(
            b.axes.clone(),
            vec![
                Sample { bitrate_index: 0, resolution_index: 0, quality: 2.0 },
                Sample { bitrate_index: 1, resolution_index: 1, quality: 3.0 },
            ],
        )
        .unwrap();
        let p = assemble_qp(&b, &s, 1, &ops).unwrap();
        // A = [0.5; 0.5], r = [1, -1]
        assert_eq!(p.hessian.as_slice(), &[0.5]);
        assert_eq!(p.linear, vec![0.0]);
        // rows: (2)-(0), (3)-(1), (3)-(2); G = -(h[plus]-h[minus])
        assert_eq!(p.ineq_matrix.as_slice(), &[1.0, 0.0, -1.0]);
        assert_eq!(p.ineq_bound, vec![2.0, 2.0, 1.0]);
        assert_eq!(p.objective(&[0.0]), 1.0);
    }

    #[test]
    fn sample_at_mean_gives_zero_linear_term() {
        let b = one_component_basis();
        let ops = build_difference_operators(&b.axes).unwrap();
        let s = SampleSet::new(b.axes.clone(), vec![Sample { bitrate_index: 1, resolution_index: 0, quality: 3.0 }])
            .unwrap();
        let p = assemble_qp(&b, &s, 1, &ops).unwrap();
        assert_eq!(p.linear, vec![0.0]);
        assert!(assemble_qp(&b, &s, 2, &ops).is_err());
    }

    #[test]
    fn unconstrained_minimizer() {
        let p = QpProblem::<f64>::new(Matrix::identity(3), vec![-1.0, 2.0, -3.0], Matrix::zeros(0, 3), vec![]).unwrap();
        let s = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Solved);
        for (c, a) in s.coefficients.iter().zip([1.0, -2.0, 3.0]) {
            assert!((c - a).abs() < 1e-9);
        }
    }

    #[test]
    fn one_variable_kkt() {
        // (c − 2)² = c² − 4c + 4 → P = 2, q = −4; c ≤ 1
        let mut p = QpProblem::<f64>::new(
            Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
            vec![-4.0],
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            vec![1.0],
        )
        .unwrap();
        p.constant = 4.0;
        let s = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Solved);
        assert!((s.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!((s.multipliers[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        // c ≤ −1 and −c ≤ −1
        let p = QpProblem::<f64>::new(
            Matrix::identity(1),
            vec![0.0],
            Matrix::from_vec(2, 1, vec![1.0, -1.0]).unwrap(),
            vec![-1.0, -1.0],
        )
        .unwrap();
        let s = solve_qp(&p, &QpSettings::default()).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn rejects_asymmetric_hessian() {
        let h = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(QpProblem::new(h, vec![0.0; 2], Matrix::zeros(0, 2), vec![]).is_err());
    }

    #[test]
    fn range_rows_bound_corners() {
        let b = one_component_basis();
        let (rows, bounds) = range_constraints(&b, 1).unwrap();
        assert_eq!(rows, vec![vec![-0.5], vec![-0.5], vec![0.5]]);
        assert_eq!(bounds, vec![1.0, 2.0, 96.0]);
    }
}
