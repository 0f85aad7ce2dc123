//! Query orders over grid cells: greedy conditional-uncertainty reduction
//! under a Gaussian model, and the log-uniform bitrate baseline.

use serde::{Deserialize, Serialize};

use crate::error::{GrdError, Result};
use crate::grid::{AxisSpec, GrdGrid};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SamplingOrder<T> {
    pub axes: AxisSpec<T>,
    /// Flattened cell indices, in query order.
    pub indices: Vec<usize>,
    /// Per-step criterion value (see the producing function).
    pub scores: Vec<T>,
}

impl<T: Real> SamplingOrder<T> {
    /// `(bitrate, resolution)` labels of the ordered cells.
    pub fn labels(&self) -> Vec<(T, T)> {
        self.indices
            .iter()
            .map(|&k| {
                let (i, j) = self.axes.cell(k);
                (self.axes.bitrates[i], self.axes.resolutions[j])
            })
            .collect()
    }

    pub fn prefix(&self, s: usize) -> Result<&[usize]> {
        self.indices.get(..s).ok_or_else(|| {
            GrdError::InvalidArgument(format!("S = {s} exceeds order length {}", self.indices.len()))
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingCriterion {
    /// Minimize the trace of the conditional covariance (entropy upper bound).
    #[default]
    Trace,
    /// Minimize the conditional log-determinant exactly.
    LogDet,
}

/// Relative gap under which two criterion values count as tied.
const TIE_RTOL: f64 = 1e-12;

/// Greedy query order over the cells of `axes`.
///
/// Each step picks the unobserved cell whose observation minimizes the
/// criterion on the remaining cells, then conditions `Σ` on it (Schur
/// complement). Ties go to the smallest flattened index. Values are never
/// consulted, so one order serves every surface.
///
/// Cells with `σ_ii ≤ 1e−12·tr(Σ)` get no Schur update (their conditional
/// variance is numerically zero); they stay selectable but any cell with
/// real variance beats them.
///
/// Scores: the conditional trace after the pick for [`SamplingCriterion::Trace`];
/// `ln σ_ii` (the log-det decrease) for [`SamplingCriterion::LogDet`].
pub fn uncertainty_order<T: Real>(
    covariance: &Matrix<T>,
    axes: &AxisSpec<T>,
    count: usize,
    criterion: SamplingCriterion,
) -> Result<SamplingOrder<T>> {
    let k = axes.len();
    if covariance.nrows() != k || covariance.ncols() != k {
        return Err(GrdError::DimensionMismatch { expected: k, got: covariance.nrows() });
    }
    if count > k {
        return Err(GrdError::InvalidArgument(format!("count {count} exceeds K = {k}")));
    }
    check_psd(covariance)?;

    let mut sigma = covariance.clone();
    let guard = T::lit(1e-12) * covariance.trace().max(T::zero());
    let mut remaining = vec![true; k];
    let mut indices = Vec::with_capacity(count);
    let mut scores = Vec::with_capacity(count);
    let mut trace = covariance.trace();

    for _ in 0..count {
        let mut best: Option<(usize, T, bool)> = None;
        for i in (0..k).filter(|&i| remaining[i]) {
            let sii = sigma[(i, i)];
            let usable = sii > guard;
            // objective to minimize
            let value = match criterion {
                SamplingCriterion::Trace if usable => {
                    let col: T = (0..k).filter(|&r| remaining[r]).map(|r| sigma[(r, i)] * sigma[(r, i)]).sum();
                    trace - col / sii
                }
                SamplingCriterion::Trace => trace - sii.max(T::zero()),
                SamplingCriterion::LogDet if usable => -sii.ln(),
                SamplingCriterion::LogDet => T::infinity(),
            };
            let better = match best {
                None => true,
                Some((_, bv, _)) => value < bv - T::lit(TIE_RTOL) * bv.abs().max(trace.abs()),
            };
            if better {
                best = Some((i, value, usable));
            }
        }
        let (i, value, usable) = best.expect("count ≤ K leaves a candidate");
        remaining[i] = false;
        indices.push(i);
        if usable {
            schur_update(&mut sigma, i);
        } else {
            for r in 0..k {
                sigma[(r, i)] = T::zero();
                sigma[(i, r)] = T::zero();
            }
        }
        trace = (0..k).filter(|&r| remaining[r]).map(|r| sigma[(r, r)]).sum();
        scores.push(match criterion {
            SamplingCriterion::Trace => value,
            SamplingCriterion::LogDet => -value,
        });
    }
    Ok(SamplingOrder { axes: axes.clone(), indices, scores })
}

/// `Σ ← Σ − σ_i σ_iᵀ / σ_ii`, kept exactly symmetric.
pub fn schur_update<T: Real>(sigma: &mut Matrix<T>, i: usize) {
    let k = sigma.nrows();
    let col = sigma.column(i);
    let sii = col[i];
    for r in 0..k {
        let f = col[r] / sii;
        for c in r..k {
            let v = sigma[(r, c)] - f * col[c];
            sigma[(r, c)] = v;
            sigma[(c, r)] = v;
        }
    }
    for r in 0..k {
        sigma[(r, i)] = T::zero();
        sigma[(i, r)] = T::zero();
    }
}

/// Symmetric within `1e−8` and no eigenvalue below `−1e−8` (both scaled by
/// the largest diagonal entry when it exceeds 1).
fn check_psd<T: Real>(sigma: &Matrix<T>) -> Result<()> {
    let k = sigma.nrows();
    let scale = (0..k).map(|i| sigma[(i, i)].abs()).fold(T::one(), T::max);
    let tol = T::lit(1e-8) * scale;
    if sigma.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(GrdError::InvalidArgument("covariance has non-finite entries".into()));
    }
    if sigma.max_asymmetry() > tol {
        return Err(GrdError::InvalidArgument("covariance is not symmetric".into()));
    }
    // λ_min(Σ) > −tol  ⇔  Σ + tol·I is positive definite
    let mut shifted = sigma.clone();
    shifted.add_diagonal(tol);
    Cholesky::new(&shifted)
        .map(|_| ())
        .map_err(|_| GrdError::InvalidArgument("covariance is not positive semidefinite".into()))
}

/// `(1/M) Σ (f_m − f̄)(f_m − f̄)ᵀ` over flattened grids.
pub fn empirical_covariance<T: Real>(dataset: &[GrdGrid<T>]) -> Result<Matrix<T>> {
    if dataset.len() < 2 {
        return Err(GrdError::InvalidArgument("covariance needs at least 2 grids".into()));
    }
    let mean = crate::basis::mean_surface(dataset)?;
    let mut x = Matrix::zeros(dataset.len(), mean.len());
    for (m, g) in dataset.iter().enumerate() {
        for (dst, (&v, &mu)) in x.row_mut(m).iter_mut().zip(g.values().iter().zip(&mean)) {
            *dst = v - mu;
        }
    }
    let mut cov = x.gram();
    cov.scale(T::one() / T::from_usize_lossy(dataset.len()));
    Ok(cov)
}

/// Bitrates at one resolution nearest (in kbps) to `count` geometrically
/// spaced targets from the lowest to the highest bitrate. A target whose
/// nearest point is taken moves to the nearest unused one (lower wins ties).
/// Indices are returned ascending; scores hold the targets.
pub fn uniform_log_bitrate_order<T: Real>(
    axes: &AxisSpec<T>,
    resolution_index: usize,
    count: usize,
) -> Result<SamplingOrder<T>> {
    let nb = axes.n_bitrates();
    if count > nb {
        return Err(GrdError::InvalidArgument(format!("count {count} exceeds {nb} bitrates")));
    }
    if resolution_index >= axes.n_resolutions() {
        return Err(GrdError::InvalidArgument(format!("resolution index {resolution_index} out of range")));
    }
    let (lo, hi) = (axes.bitrates[0], axes.bitrates[nb - 1]);
    let targets: Vec<T> = (0..count)
        .map(|k| {
            if count == 1 {
                lo
            } else {
                lo * (hi / lo).powf(T::from_usize_lossy(k) / T::from_usize_lossy(count - 1))
            }
        })
        .collect();
    let mut used = vec![false; nb];
    let mut picked: Vec<(usize, T)> = Vec::with_capacity(count);
    for &t in &targets {
        let i = (0..nb)
            .filter(|&i| !used[i])
            .min_by(|&a, &b| {
                let da = (axes.bitrates[a] - t).abs();
                let db = (axes.bitrates[b] - t).abs();
                da.partial_cmp(&db).expect("finite").then(a.cmp(&b))
            })
            .expect("count ≤ bitrates");
        used[i] = true;
        picked.push((i, t));
    }
    picked.sort_by_key(|&(i, _)| i);
    Ok(SamplingOrder {
        axes: axes.clone(),
        indices: picked.iter().map(|&(i, _)| axes.flat_index(i, resolution_index)).collect(),
        scores: picked.iter().map(|&(_, t)| t).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes(nb: usize, nr: usize) -> AxisSpec<f64> {
        AxisSpec::new((1..=nb).map(|i| i as f64).collect(), (1..=nr).map(|j| j as f64).collect()).unwrap()
    }

    #[test]
    fn diagonal_picks_largest_variance() {
        let mut s = Matrix::<f64>::zeros(4, 4);
        for (i, v) in [1.0, 5.0, 3.0, 2.0].into_iter().enumerate() {
            s[(i, i)] = v;
        }
        let o = uncertainty_order(&s, &axes(2, 2), 4, SamplingCriterion::Trace).unwrap();
        assert_eq!(o.indices, vec![1, 2, 3, 0]);
        assert!((o.scores[0] - 6.0).abs() < 1e-12);
        let o = uncertainty_order(&s, &axes(2, 2), 2, SamplingCriterion::LogDet).unwrap();
        assert_eq!(o.indices, vec![1, 2]);
    }

    #[test]
    fn rank_one_is_explained_by_one_pick() {
        let v = [0.5, -2.0, 1.0, 0.25];
        let mut s = Matrix::<f64>::zeros(4, 4);
        for r in 0..4 {
            for c in 0..4 {
                s[(r, c)] = v[r] * v[c];
            }
        }
        // every non-zero cell explains the whole trace, so the tie rule picks 0;
        // the log-det criterion picks the largest variance
        let o = uncertainty_order(&s, &axes(2, 2), 1, SamplingCriterion::Trace).unwrap();
        assert_eq!(o.indices, vec![0]);
        assert!(o.scores[0].abs() < 1e-12);
        let o = uncertainty_order(&s, &axes(2, 2), 1, SamplingCriterion::LogDet).unwrap();
        assert_eq!(o.indices, vec![1]);
        let mut cond = s.clone();
        schur_update(&mut cond, 1);
        assert!(cond.as_slice().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn ties_go_to_smallest_index() {
        let s = Matrix::<f64>::identity(4);
        let o = uncertainty_order(&s, &axes(2, 2), 4, SamplingCriterion::Trace).unwrap();
        assert_eq!(o.indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn zero_covariance_still_orders() {
        let s = Matrix::<f64>::zeros(4, 4);
        let o = uncertainty_order(&s, &axes(2, 2), 4, SamplingCriterion::Trace).unwrap();
        assert_eq!(o.indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_bad_covariance() {
        let ax = axes(2, 1);
        let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(uncertainty_order(&asym, &ax, 1, SamplingCriterion::Trace).is_err());
        let indefinite = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(uncertainty_order(&indefinite, &ax, 1, SamplingCriterion::Trace).is_err());
        assert!(uncertainty_order(&Matrix::<f64>::identity(2), &ax, 3, SamplingCriterion::Trace).is_err());
    }

    #[test]
    fn covariance_of_two_point_set() {
        let ax = axes(3, 1);
        let f0 = [1.0, 2.0, 3.0];
        let v = [0.5, 1.0, -1.0];
        let plus = GrdGrid::unflatten(f0.iter().zip(&v).map(|(a, b)| a + b).collect(), ax.clone()).unwrap();
        let minus = GrdGrid::unflatten(f0.iter().zip(&v).map(|(a, b)| a - b).collect(), ax.clone()).unwrap();
        let c = empirical_covariance(&[plus.clone(), minus]).unwrap();
        for r in 0..3 {
            for col in 0..3 {
                assert!((c[(r, col)] - v[r] * v[col]).abs() < 1e-14);
            }
        }
        let z = empirical_covariance(&[plus.clone(), plus]).unwrap();
        assert!(z.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn log_bitrate_baseline() {
        let ax = AxisSpec::<f64>::full_scale();
        let top = ax.n_resolutions() - 1;
        let o = uniform_log_bitrate_order(&ax, top, 2).unwrap();
        assert_eq!(o.labels().iter().map(|l| l.0).collect::<Vec<_>>(), vec![100.0, 9000.0]);
        // targets 100·90^{k/3} = 100, 448.1, 2008.0, 9000
        let o = uniform_log_bitrate_order(&ax, top, 4).unwrap();
        assert_eq!(o.labels().iter().map(|l| l.0).collect::<Vec<_>>(), vec![100.0, 400.0, 2000.0, 9000.0]);
        let all = uniform_log_bitrate_order(&ax, 0, 90).unwrap();
        assert_eq!(all.indices, (0..90).map(|i| ax.flat_index(i, 0)).collect::<Vec<_>>());
        assert!(uniform_log_bitrate_order(&ax, 0, 91).is_err());
    }
}
