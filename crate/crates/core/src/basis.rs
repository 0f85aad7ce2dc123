//! Orthonormal bases for GRD surfaces: the learned eigen basis (PCA over a
//! training corpus) and the fixed polynomial and half-sine families, plus
//! projection onto and synthesis from coefficient space.

use serde::{Deserialize, Serialize};

use crate::error::{GrdError, Result};
use crate::grid::{AxisSpec, GrdGrid};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::scalar::{dot, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Eigen,
    Polynomial,
    Trigonometric,
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BasisKind::Eigen => "eigen",
            BasisKind::Polynomial => "polynomial",
            BasisKind::Trigonometric => "trigonometric",
        })
    }
}

/// Mean surface plus orthonormal component vectors over a fixed grid.
///
/// For `kind = Eigen`, `eigenvalues` are covariance eigenvalues (1/M
/// convention), non-increasing. For the fixed families they hold the training
/// variance captured along each vector, or zeros when built without data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EigenBasis<T> {
    pub kind: BasisKind,
    pub axes: AxisSpec<T>,
    pub mean: Vec<T>,
    /// One flattened vector of length K per component.
    pub components: Vec<Vec<T>>,
    pub eigenvalues: Vec<T>,
    pub total_variance: T,
    pub training_count: usize,
    /// Set when fewer components than requested were returned.
    #[serde(default)]
    pub truncated: bool,
}

/// Coefficients of a surface in some basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CoefficientVector<T> {
    pub coefficients: Vec<T>,
    pub basis_id: String,
}

/// Eigendecomposition route for [`pca_train_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcaRoute {
    /// Snapshot (M×M Gram) when M < K, else K×K covariance.
    Auto,
    Snapshot,
    Covariance,
}

fn check_dataset<T: Real>(dataset: &[GrdGrid<T>]) -> Result<&AxisSpec<T>> {
    let first = dataset
        .first()
        .ok_or_else(|| GrdError::InvalidArgument("empty dataset".into()))?;
    for g in &dataset[1..] {
        first.axes().ensure_same(g.axes())?;
    }
    Ok(first.axes())
}

/// Elementwise mean of flattened grids.
pub fn mean_surface<T: Real>(dataset: &[GrdGrid<T>]) -> Result<Vec<T>> {
    let axes = check_dataset(dataset)?;
    let mut mean = vec![T::zero(); axes.len()];
    for g in dataset {
        for (m, &v) in mean.iter_mut().zip(g.values()) {
            *m += v;
        }
    }
    let inv = T::one() / T::from_usize_lossy(dataset.len());
    mean.iter_mut().for_each(|m| *m *= inv);
    Ok(mean)
}

/// Centered data matrix (M×K) and the mean.
fn centered<T: Real>(dataset: &[GrdGrid<T>]) -> Result<(Matrix<T>, Vec<T>)> {
    let mean = mean_surface(dataset)?;
    let k = mean.len();
    let mut x = Matrix::zeros(dataset.len(), k);
    for (m, g) in dataset.iter().enumerate() {
        for (dst, (&v, &mu)) in x.row_mut(m).iter_mut().zip(g.values().iter().zip(&mean)) {
            *dst = v - mu;
        }
    }
    Ok((x, mean))
}

/// Makes the entry of largest magnitude positive (first one on ties).
fn fix_sign<T: Real>(v: &mut [T]) {
    let mut best = T::zero();
    let mut sign = T::one();
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// PCA over a corpus; see [`pca_train_with`].
pub fn pca_train<T: Real>(dataset: &[GrdGrid<T>], n_components: usize) -> Result<EigenBasis<T>> {
    pca_train_with(dataset, n_components, PcaRoute::Auto)
}

/// Learns the mean surface and the top eigenvectors of the empirical
/// covariance `(1/M) Σ (f_m − f₀)(f_m − f₀)ᵀ`.
///
/// Requests beyond the numerical rank (or `min(M − 1, K)`) return fewer
/// components with `truncated = true`.
pub fn pca_train_with<T: Real>(
    dataset: &[GrdGrid<T>],
    n_components: usize,
    route: PcaRoute,
) -> Result<EigenBasis<T>> {
    if dataset.len() < 2 {
        return Err(GrdError::InvalidArgument("PCA needs at least 2 grids".into()));
    }
    if n_components == 0 {
        return Err(GrdError::InvalidArgument("n_components must be positive".into()));
    }
    let axes = check_dataset(dataset)?.clone();
    let (x, mean) = centered(dataset)?;
    let (m, k) = (x.nrows(), x.ncols());
    let inv_m = T::one() / T::from_usize_lossy(m);
    let total_variance = x.as_slice().iter().map(|&v| v * v).sum::<T>() * inv_m;

    let use_snapshot = match route {
        PcaRoute::Auto => m < k,
        PcaRoute::Snapshot => true,
        PcaRoute::Covariance => false,
    };
    let (values, vectors): (Vec<T>, Vec<Vec<T>>) = if use_snapshot {
        // (1/M) X Xᵀ shares its non-zero spectrum with the covariance.
        let mut gram = x.transpose().gram();
        gram.scale(inv_m);
        let eig = symmetric_eigen(&gram)?;
        let vecs = (0..m)
            .map(|j| {
                let u = eig.vectors.column(j);
                x.tr_matvec(&u)
            })
            .collect();
        (eig.values, vecs)
    } else {
        let mut cov = x.gram();
        cov.scale(inv_m);
        let eig = symmetric_eigen(&cov)?;
        let vecs = (0..k).map(|j| eig.vectors.column(j)).collect();
        (eig.values, vecs)
    };

    let lmax = values.first().copied().unwrap_or(T::zero()).max(T::zero());
    let rank_tol = lmax * T::from_usize_lossy(m.max(k)) * T::epsilon() * T::lit(10.0);
    let cap = n_components.min(m - 1).min(k);
    let mut components = Vec::with_capacity(cap);
    let mut eigenvalues = Vec::with_capacity(cap);
    for (lam, mut v) in values.into_iter().zip(vectors) {
        if components.len() == cap || lam <= rank_tol || lam <= T::zero() {
            break;
        }
        let norm = dot(&v, &v).sqrt();
        if norm == T::zero() {
            break;
        }
        v.iter_mut().for_each(|c| *c /= norm);
        fix_sign(&mut v);
        components.push(v);
        eigenvalues.push(lam);
    }
    let truncated = components.len() < n_components;
    Ok(EigenBasis {
        kind: BasisKind::Eigen,
        axes,
        mean,
        components,
        eigenvalues,
        total_variance,
        training_count: m,
        truncated,
    })
}

/// Normalized coordinate of each label: `(x − x_min)/(x_max − x_min)`, or 0
/// for a single label.
fn normalized<T: Real>(labels: &[T]) -> Vec<T> {
    let lo = labels[0];
    let hi = labels[labels.len() - 1];
    if hi == lo {
        return vec![T::zero(); labels.len()];
    }
    labels.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

/// `(p, q)` exponent/frequency pairs ordered by `p + q`, then `p`.
fn index_pairs(n: usize, start: usize, two_d: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n);
    let mut total = 2 * start;
    while out.len() < n {
        if two_d {
            for p in start..=total.saturating_sub(start) {
                let q = total - p;
                if q < start {
                    continue;
                }
                out.push((p, q));
                if out.len() == n {
                    break;
                }
            }
        } else {
            out.push((total - start, 0));
        }
        total += 1;
    }
    out
}

/// Modified Gram–Schmidt with one re-orthogonalization pass.
fn orthonormalize<T: Real>(raw: Vec<Vec<T>>) -> Result<Vec<Vec<T>>> {
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(raw.len());
    for (index, mut v) in raw.into_iter().enumerate() {
        let orig = dot(&v, &v).sqrt();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for (x, &y) in v.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= T::lit(1e-10) * orig.max(T::one()) || !norm.is_finite() {
            return Err(GrdError::RankDeficient { index });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    Ok(basis)
}

fn fixed_basis<T: Real>(
    axes: &AxisSpec<T>,
    n: usize,
    kind: BasisKind,
    data: Option<&[GrdGrid<T>]>,
) -> Result<EigenBasis<T>> {
    axes.validate()?;
    if n == 0 || n > axes.len() {
        return Err(GrdError::InvalidArgument(format!("n must be in 1..={}", axes.len())));
    }
    let u = normalized(&axes.bitrates);
    let v = normalized(&axes.resolutions);
    let two_d = axes.n_resolutions() > 1;
    let start = if kind == BasisKind::Polynomial { 0 } else { 1 };
    let pi = T::lit(std::f64::consts::PI);
    let raw: Vec<Vec<T>> = index_pairs(n, start, two_d)
        .into_iter()
        .map(|(p, q)| {
            (0..axes.len())
                .map(|cell| {
                    let (i, j) = axes.cell(cell);
                    match kind {
                        BasisKind::Polynomial => u[i].powi(p as i32) * v[j].powi(q as i32),
                        _ if two_d => {
                            (T::from_usize_lossy(p) * pi * u[i]).sin()
                                * (T::from_usize_lossy(q) * pi * v[j]).sin()
                        }
                        _ => (T::from_usize_lossy(p) * pi * u[i]).sin(),
                    }
                })
                .collect()
        })
        .collect();
    let components = orthonormalize(raw)?;
    let (mean, eigenvalues, total_variance, training_count) = match data {
        Some(ds) if !ds.is_empty() => {
            axes.ensure_same(check_dataset(ds)?)?;
            let (x, mean) = centered(ds)?;
            let inv_m = T::one() / T::from_usize_lossy(ds.len());
            let captured = components
                .iter()
                .map(|h| x.matvec(h).iter().map(|&c| c * c).sum::<T>() * inv_m)
                .collect();
            let total = x.as_slice().iter().map(|&v| v * v).sum::<T>() * inv_m;
            (mean, captured, total, ds.len())
        }
        _ => (vec![T::zero(); axes.len()], vec![T::zero(); n], T::zero(), 0),
    };
    Ok(EigenBasis {
        kind,
        axes: axes.clone(),
        mean,
        components,
        eigenvalues,
        total_variance,
        training_count,
        truncated: false,
    })
}

/// First `n` monomials `u^p·v^q` on normalized coordinates, orthonormalized.
/// The mean surface is the dataset mean when data is given, else zero.
pub fn polynomial_basis<T: Real>(
    axes: &AxisSpec<T>,
    n: usize,
    data: Option<&[GrdGrid<T>]>,
) -> Result<EigenBasis<T>> {
    fixed_basis(axes, n, BasisKind::Polynomial, data)
}

/// First `n` half-sine products `sin(pπu)·sin(qπv)` (p, q ≥ 1), orthonormalized.
pub fn trigonometric_basis<T: Real>(
    axes: &AxisSpec<T>,
    n: usize,
    data: Option<&[GrdGrid<T>]>,
) -> Result<EigenBasis<T>> {
    fixed_basis(axes, n, BasisKind::Trigonometric, data)
}

impl<T: Real> EigenBasis<T> {
    /// Number of stored components.
    #[inline]
    pub fn n_max(&self) -> usize {
        self.components.len()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.mean.len()
    }

    pub fn component(&self, n: usize) -> &[T] {
        &self.components[n]
    }

    /// `K × n` matrix of the first `n` components.
    pub fn matrix(&self, n: usize) -> Result<Matrix<T>> {
        self.check_n(n)?;
        Matrix::from_columns(&self.components[..n], self.k())
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n > self.n_max() {
            return Err(GrdError::InvalidArgument(format!(
                "requested {n} components, basis has {}",
                self.n_max()
            )));
        }
        Ok(())
    }

    pub fn mean_grid(&self) -> Result<GrdGrid<T>> {
        GrdGrid::unflatten(self.mean.clone(), self.axes.clone())
    }

    /// Deterministic fingerprint of the basis content.
    pub fn id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(self.k() as f64);
        self.mean.iter().for_each(|v| feed(v.to_f64_lossy()));
        self.components.iter().flatten().for_each(|v| feed(v.to_f64_lossy()));
        format!("{}-{:016x}", self.kind, h)
    }

    /// Fraction of training variance explained by the first `n` eigenvalues.
    pub fn explained_energy(&self, n: usize) -> Result<T> {
        if n == 0 || n > self.n_max() {
            return Err(GrdError::InvalidArgument(format!(
                "n must be in 1..={}, got {n}",
                self.n_max()
            )));
        }
        if self.total_variance <= T::zero() {
            return Ok(T::one());
        }
        let s: T = self.eigenvalues[..n].iter().copied().sum();
        Ok((s / self.total_variance).min(T::one()))
    }

    /// `c_k = ⟨f − f₀, h_k⟩` for `k < n`.
    pub fn project(&self, grid: &GrdGrid<T>, n: usize) -> Result<CoefficientVector<T>> {
        self.axes.ensure_same(grid.axes())?;
        self.check_n(n)?;
        let centered: Vec<T> = grid.values().iter().zip(&self.mean).map(|(&v, &m)| v - m).collect();
        let coefficients = self.components[..n].iter().map(|h| dot(&centered, h)).collect();
        Ok(CoefficientVector { coefficients, basis_id: self.id() })
    }

    /// `f₀ + H c`, unclipped.
    pub fn synthesize(&self, coeffs: &[T]) -> Result<GrdGrid<T>> {
        self.check_n(coeffs.len())?;
        let mut f = self.mean.clone();
        for (h, &c) in self.components.iter().zip(coeffs) {
            for (fi, &hi) in f.iter_mut().zip(h) {
                *fi += c * hi;
            }
        }
        GrdGrid::unflatten(f, self.axes.clone())
    }

    /// Best `n`-term approximation of a grid.
    pub fn approximate(&self, grid: &GrdGrid<T>, n: usize) -> Result<GrdGrid<T>> {
        let c = self.project(grid, n)?;
        self.synthesize(&c.coefficients)
    }

    /// Low-rank covariance `H diag(λ) Hᵀ` implied by the basis.
    pub fn covariance(&self) -> Matrix<T> {
        let k = self.k();
        let mut cov = Matrix::zeros(k, k);
        for (h, &lam) in self.components.iter().zip(&self.eigenvalues) {
            for a in 0..k {
                let s = lam * h[a];
                for b in 0..k {
                    cov[(a, b)] += s * h[b];
                }
            }
        }
        cov
    }

    pub fn validate(&self) -> Result<()> {
        self.axes.validate()?;
        let k = self.axes.len();
        if self.mean.len() != k {
            return Err(GrdError::Schema(format!("mean has {} entries, expected {k}", self.mean.len())));
        }
        if let Some(c) = self.components.iter().position(|c| c.len() != k) {
            return Err(GrdError::Schema(format!("component {c} has wrong length")));
        }
        if self.eigenvalues.len() != self.components.len() {
            return Err(GrdError::Schema("one eigenvalue per component required".into()));
        }
        let all = self.mean.iter().chain(self.components.iter().flatten()).chain(&self.eigenvalues);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(GrdError::Schema("non-finite basis entries".into()));
        }
        Ok(())
    }

    /// Converts the scalar type, e.g. to run an `f64` basis in `f32`.
    pub fn cast<U: Real>(&self) -> EigenBasis<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect::<Vec<U>>();
        EigenBasis {
            kind: self.kind,
            axes: self.axes.cast(),
            mean: c(&self.mean),
            components: self.components.iter().map(c).collect(),
            eigenvalues: c(&self.eigenvalues),
            total_variance: U::lit(self.total_variance.to_f64_lossy()),
            training_count: self.training_count,
            truncated: self.truncated,
        }
    }
}

/// Splits each grid into its per-resolution RD curves, as single-resolution
/// grids sharing the bitrate axis.
pub fn per_resolution_curves<T: Real>(dataset: &[GrdGrid<T>]) -> Result<Vec<GrdGrid<T>>> {
    let axes = check_dataset(dataset)?;
    let one_d = axes.restrict_to_resolution(0)?;
    let one_d = AxisSpec::new(one_d.bitrates, vec![T::one()])?;
    let mut out = Vec::with_capacity(dataset.len() * axes.n_resolutions());
    for g in dataset {
        for j in 0..axes.n_resolutions() {
            let mut c = GrdGrid::unflatten(g.column(j), one_d.clone())?;
            c.metadata = g.metadata.clone();
            c.metadata.insert("resolution_index".into(), j.to_string());
            out.push(c);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes(nb: usize, nr: usize) -> AxisSpec<f64> {
        AxisSpec::new(
            (1..=nb).map(|k| 1000.0 * k as f64).collect(),
            (1..=nr).map(|k| 300.0 * k as f64).collect(),
        )
        .unwrap()
    }

    fn grid(ax: &AxisSpec<f64>, v: Vec<f64>) -> GrdGrid<f64> {
        GrdGrid::unflatten(v, ax.clone()).unwrap()
    }

    fn gram_error(b: &EigenBasis<f64>) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in b.components.iter().enumerate() {
            for (j, c) in b.components.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, c) - target).abs());
            }
        }
        worst
    }

    #[test]
    fn identical_grids_have_no_variance() {
        let ax = axes(3, 2);
        let g = grid(&ax, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = pca_train(&[g.clone(), g.clone(), g.clone()], 2).unwrap();
        assert_eq!(b.mean, g.flatten());
        assert!(b.eigenvalues.iter().all(|&l| l == 0.0));
        assert!(b.truncated);
        assert_eq!(b.total_variance, 0.0);
    }

    #[test]
    fn two_point_pca() {
        let ax = axes(3, 2);
        let f0 = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0];
        let v = [1.0, -2.0, 0.5, 3.0, 0.0, 1.0];
        let plus = grid(&ax, f0.iter().zip(&v).map(|(a, b)| a + b).collect());
        let minus = grid(&ax, f0.iter().zip(&v).map(|(a, b)| a - b).collect());
        let b = pca_train(&[plus, minus], 1).unwrap();
        for (m, e) in b.mean.iter().zip(&f0) {
            assert!((m - e).abs() < 1e-12);
        }
        let vn = v.iter().map(|x| x * x).sum::<f64>();
        assert!((b.eigenvalues[0] - vn).abs() < 1e-10);
        let s = vn.sqrt();
        let h = b.component(0);
        let sign = if (h[0] - v[0] / s).abs() < 1e-9 { 1.0 } else { -1.0 };
        for (hi, vi) in h.iter().zip(&v) {
            assert!((hi - sign * vi / s).abs() < 1e-10);
        }
        // largest-magnitude entry (index 3) is positive
        assert!(h[3] > 0.0);
        assert!((b.explained_energy(1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn project_and_synthesize() {
        let ax = axes(3, 2);
        let ds: Vec<_> = (0..6)
            .map(|m| grid(&ax, (0..6).map(|k| ((m * 7 + k * 3) % 11) as f64 + k as f64).collect()))
            .collect();
        let b = pca_train(&ds, 3).unwrap();
        let mean = b.mean_grid().unwrap();
        assert!(b.project(&mean, 3).unwrap().coefficients.iter().all(|c| c.abs() < 1e-12));
        let target: Vec<f64> = b.mean.iter().zip(b.component(1)).map(|(m, h)| m + 3.0 * h).collect();
        let c = b.project(&grid(&ax, target), 3).unwrap().coefficients;
        assert!((c[0]).abs() < 1e-12 && (c[1] - 3.0).abs() < 1e-12 && c[2].abs() < 1e-12);
        assert_eq!(b.synthesize(&[]).unwrap(), mean);
        assert!(b.synthesize(&[0.0; 9]).is_err());
        assert!(b.project(&grid(&axes(2, 3), vec![0.0; 6]), 1).is_err());
    }

    #[test]
    fn polynomial_basis_properties() {
        let ax = axes(9, 6);
        let b1 = polynomial_basis(&ax, 1, None).unwrap();
        let c = 1.0 / 54f64.sqrt();
        assert!(b1.component(0).iter().all(|&x| (x - c).abs() < 1e-14));
        let b = polynomial_basis(&ax, 15, None).unwrap();
        assert!(gram_error(&b) < 1e-10);
        assert_eq!(b.mean, vec![0.0; 54]);
    }

    #[test]
    fn trigonometric_basis_properties() {
        let ax = axes(9, 6);
        let b = trigonometric_basis(&ax, 10, None).unwrap();
        // the 11th pair (1, 5) vanishes on six equispaced resolutions
        assert!(matches!(trigonometric_basis(&ax, 11, None), Err(GrdError::RankDeficient { index: 10 })));
        assert!(gram_error(&b) < 1e-10);
        // n = 1 is the normalized sin(πu)·sin(πv)
        let u: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let v: Vec<f64> = (0..6).map(|j| j as f64 / 5.0).collect();
        let raw: Vec<f64> = (0..54)
            .map(|k| (std::f64::consts::PI * u[k / 6]).sin() * (std::f64::consts::PI * v[k % 6]).sin())
            .collect();
        let n = dot(&raw, &raw).sqrt();
        for (a, r) in b.component(0).iter().zip(&raw) {
            assert!((a - r / n).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_fixed_basis_names_index() {
        // sin(8πu) vanishes on 9 equispaced points
        let ax = axes(9, 1);
        match trigonometric_basis(&ax, 9, None) {
            Err(GrdError::RankDeficient { index }) => assert_eq!(index, 7),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn index_pair_order() {
        assert_eq!(index_pairs(6, 0, true), vec![(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]);
        assert_eq!(index_pairs(4, 1, true), vec![(1, 1), (1, 2), (2, 1), (1, 3)]);
        assert_eq!(index_pairs(3, 1, false), vec![(1, 0), (2, 0), (3, 0)]);
    }

    #[test]
    fn explained_energy_range() {
        let ax = axes(2, 2);
        let ds: Vec<_> = (0..5).map(|m| grid(&ax, vec![m as f64, (m * m) as f64, 1.0, 2.0 * m as f64])).collect();
        let b = pca_train(&ds, 3).unwrap();
        assert!(b.explained_energy(0).is_err());
        assert!(b.explained_energy(b.n_max() + 1).is_err());
        assert!((b.explained_energy(b.n_max()).unwrap() - 1.0).abs() < 1e-10);
    }
}
