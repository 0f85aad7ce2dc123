//! Full-surface estimation from sparse samples in a basis, with or without
//! the monotonicity constraints, and the error-table protocol built on it.

use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, CoefficientVector, EigenBasis};
use crate::error::{GrdError, Result};
use crate::grid::{linf_error, rmse, validate_membership, GrdGrid, SampleSet, DEFAULT_MEMBERSHIP_TOLERANCE};
use crate::linalg::{lstsq_min_norm, Matrix};
use crate::qp::{
    assemble_qp_observations, build_difference_operators, range_constraints, solve_qp, Observation, QpSettings,
    QpStatus,
};
use crate::qp::design_rows;
use crate::scalar::Real;

/// Number of basis vectors used for a reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentCount {
    Fixed(usize),
    /// `N = min(S, N_max)`.
    MatchSamples,
}

impl ComponentCount {
    pub fn resolve(self, samples: usize, n_max: usize) -> Result<usize> {
        match self {
            ComponentCount::Fixed(0) => Err(GrdError::InvalidArgument("n_components must be ≥ 1".into())),
            ComponentCount::Fixed(n) if n > n_max => Err(GrdError::InvalidArgument(format!(
                "n_components = {n} exceeds the {n_max} available"
            ))),
            ComponentCount::Fixed(n) => Ok(n),
            ComponentCount::MatchSamples => Ok(samples.min(n_max)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub basis_kind: BasisKind,
    pub n_components: ComponentCount,
    pub constrained: bool,
    pub solver: QpSettings,
}

impl ReconstructionConfig {
    pub fn new(basis_kind: BasisKind, n_components: ComponentCount) -> Self {
        Self { basis_kind, n_components, constrained: true, solver: QpSettings::default() }
    }

    pub fn unconstrained(mut self) -> Self {
        self.constrained = false;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Diagnostics<T> {
    pub n_components: usize,
    pub n_samples: usize,
    pub constrained: bool,
    /// Solver status; `None` for the unconstrained path.
    pub status: Option<QpStatus>,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    /// RMS of `f̂ − z` over the sampled cells.
    pub sample_rmse: T,
    pub sample_max_abs: T,
    /// Set when the solver result was shrunk toward the mean surface to
    /// restore feasibility; holds the applied factor.
    pub feasibility_scale: Option<T>,
    pub membership_passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Reconstruction<T> {
    pub grid: GrdGrid<T>,
    pub coefficients: CoefficientVector<T>,
    pub diagnostics: Diagnostics<T>,
}

/// Estimates the full surface from `samples`.
///
/// Constrained: least squares over the first `N` basis vectors subject to
/// monotonicity and `[0, 100]` range rows; the output always passes
/// [`validate_membership`] at `1e−6`. Unconstrained: minimum-norm least
/// squares on the same design; output is neither clipped nor validated.
pub fn estimate<T: Real>(
    basis: &EigenBasis<T>,
    samples: &SampleSet<T>,
    config: &ReconstructionConfig,
) -> Result<Reconstruction<T>> {
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
    estimate_observations(basis, &obs, config)
}

/// [`estimate`] for general linear observations of the surface.
pub fn estimate_observations<T: Real>(
    basis: &EigenBasis<T>,
    observations: &[Observation<T>],
    config: &ReconstructionConfig,
) -> Result<Reconstruction<T>> {
    if config.basis_kind != basis.kind {
        return Err(GrdError::InvalidArgument(format!(
            "config expects a {} basis, got {}",
            config.basis_kind, basis.kind
        )));
    }
    if observations.is_empty() {
        return Err(GrdError::InvalidSamples("no samples".into()));
    }
    let n = config.n_components.resolve(observations.len(), basis.n_max())?;
    let (rows, targets) = design_rows(basis, observations, n)?;

    let mut diag = Diagnostics {
        n_components: n,
        n_samples: observations.len(),
        constrained: config.constrained,
        status: None,
        iterations: 0,
        primal_residual: T::zero(),
        dual_residual: T::zero(),
        sample_rmse: T::zero(),
        sample_max_abs: T::zero(),
        feasibility_scale: None,
        membership_passed: false,
    };

    let coefficients = if n == 0 {
        Vec::new()
    } else if config.constrained {
        let ops = build_difference_operators(&basis.axes)?;
        let mut qp = assemble_qp_observations(basis, observations, n, &ops)?;
        let (extra, bounds) = range_constraints(basis, n)?;
        qp.push_constraints(&extra, &bounds)?;
        if qp.ineq_bound.iter().any(|&h| h < -T::lit(DEFAULT_MEMBERSHIP_TOLERANCE)) {
            return Err(GrdError::Numerical("basis mean surface violates the membership rules".into()));
        }
        let sol = solve_qp(&qp, &config.solver)?;
        diag.status = Some(sol.status);
        diag.iterations = sol.iterations;
        diag.primal_residual = sol.primal_residual;
        diag.dual_residual = sol.dual_residual;
        if sol.status == QpStatus::Infeasible {
            return Err(GrdError::Numerical("constraint system reported infeasible".into()));
        }
        let mut c = sol.coefficients;
        // c = 0 is feasible, so shrinking toward it restores feasibility
        let gc = qp.ineq_matrix.matvec(&c);
        let mut t = T::one();
        for (&g, &h) in gc.iter().zip(&qp.ineq_bound) {
            if g > h && g > T::zero() {
                t = t.min(h.max(T::zero()) / g);
            }
        }
        if t < T::one() {
            c.iter_mut().for_each(|v| *v *= t);
            diag.feasibility_scale = Some(t);
        }
        c
    } else {
        let a = Matrix::from_vec(observations.len(), n, rows.concat())?;
        lstsq_min_norm(&a, &targets, T::lit(1e-12))?
    };

    let grid = basis.synthesize(&coefficients)?;
    let fitted: Vec<T> = observations
        .iter()
        .map(|o| o.weights.iter().map(|&(k, w)| w * grid.values()[k]).sum())
        .collect();
    let errs: Vec<T> = fitted.iter().zip(observations).map(|(&f, o)| f - o.value).collect();
    diag.sample_rmse = (errs.iter().map(|&e| e * e).sum::<T>() / T::from_usize_lossy(errs.len())).sqrt();
    diag.sample_max_abs = errs.iter().fold(T::zero(), |m, &e| m.max(e.abs()));
    diag.membership_passed = validate_membership(&grid, T::lit(DEFAULT_MEMBERSHIP_TOLERANCE))?.passed;
    if config.constrained && !diag.membership_passed {
        return Err(GrdError::Numerical("constrained estimate failed membership validation".into()));
    }
    Ok(Reconstruction {
        grid,
        coefficients: CoefficientVector { coefficients, basis_id: basis.id() },
        diagnostics: diag,
    })
}

/// Aggregates over the test set for one sample count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub samples: usize,
    pub n_components: usize,
    pub mean_rmse: f64,
    pub worst_rmse: f64,
    pub median_rmse: f64,
    pub mean_linf: f64,
    pub worst_linf: f64,
    pub median_linf: f64,
    /// Test grids whose estimate fails membership at `1e−6`.
    pub membership_failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub basis_kind: BasisKind,
    pub constrained: bool,
    pub test_count: usize,
    pub rows: Vec<ErrorRow>,
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Reconstruction errors over `test_set` when each grid is sampled at the
/// first `S` cells of `order`, for each `S` in `s_values`. Errors are taken
/// over the full grid. Aggregation runs in test-set order.
pub fn evaluate_method<T: Real>(
    basis: &EigenBasis<T>,
    test_set: &[GrdGrid<T>],
    order: &[usize],
    s_values: &[usize],
    config: &ReconstructionConfig,
) -> Result<ErrorTable> {
    if test_set.is_empty() {
        return Err(GrdError::InvalidArgument("empty test set".into()));
    }
    let mut rows = Vec::with_capacity(s_values.len());
    for &s in s_values {
        if s == 0 || s > order.len() {
            return Err(GrdError::InvalidArgument(format!(
                "S = {s} must be in 1..={} (sampling order length)",
                order.len()
            )));
        }
        let mut r = Vec::with_capacity(test_set.len());
        let mut l = Vec::with_capacity(test_set.len());
        let mut failures = 0;
        let mut n_used = 0;
        for g in test_set {
            basis.axes.ensure_same(g.axes())?;
            let samples = SampleSet::from_grid(g, &order[..s])?;
            let est = estimate(basis, &samples, config)?;
            n_used = est.diagnostics.n_components;
            if !est.diagnostics.membership_passed {
                failures += 1;
            }
            r.push(rmse(&est.grid, g)?.to_f64_lossy());
            l.push(linf_error(&est.grid, g)?.to_f64_lossy());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let worst = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        rows.push(ErrorRow {
            samples: s,
            n_components: n_used,
            mean_rmse: mean(&r),
            worst_rmse: worst(&r),
            median_rmse: median(&r),
            mean_linf: mean(&l),
            worst_linf: worst(&l),
            median_linf: median(&l),
            membership_failures: failures,
        });
    }
    Ok(ErrorTable {
        basis_kind: basis.kind,
        constrained: config.constrained,
        test_count: test_set.len(),
        rows,
    })
}
