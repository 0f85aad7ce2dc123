//! Discretized GRD surfaces: axes, grids, sparse sample sets, membership
//! validation, error metrics and ingestion of raw per-resolution RD curves.
//!
//! Grids are flattened bitrate-major: the resolution index varies fastest, so
//! cell `(i, j)` lives at `i * |resolutions| + j`. File formats depend on this
//! order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GrdError, Result};
use crate::interp::Curve1D;
use crate::scalar::Real;

/// Default absolute tolerance for membership checks.
pub const DEFAULT_MEMBERSHIP_TOLERANCE: f64 = 1e-6;

/// Quality scale upper bound.
pub const QUALITY_MAX: f64 = 100.0;

/// Encoding sizes used for the default resolution axis, as (width, height).
pub const DEFAULT_SIZES: [(u32, u32); 6] =
    [(320, 240), (384, 288), (512, 384), (720, 480), (1280, 720), (1920, 1080)];

/// Rounded diagonal length of a frame size in pixels.
pub fn diagonal(width: u32, height: u32) -> f64 {
    (f64::from(width).powi(2) + f64::from(height).powi(2)).sqrt().round()
}

/// Bitrate and resolution labels of a rectangular grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AxisSpec<T> {
    /// Bitrates in kbps, strictly increasing.
    pub bitrates: Vec<T>,
    /// Diagonal lengths in pixels, strictly increasing.
    pub resolutions: Vec<T>,
    /// Optional (width, height) per resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<(u32, u32)>>,
}

fn check_increasing<T: Real>(name: &str, v: &[T], min_len: usize) -> Result<()> {
    if v.len() < min_len {
        return Err(GrdError::InvalidAxes(format!(
            "{name} needs at least {min_len} entries, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite() || *x <= T::zero()) {
        return Err(GrdError::InvalidAxes(format!("{name} must be finite and positive")));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GrdError::InvalidAxes(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

impl<T: Real> AxisSpec<T> {
    /// Builds axes; a single resolution is allowed for 1-D (per-resolution) use.
    pub fn new(bitrates: Vec<T>, resolutions: Vec<T>) -> Result<Self> {
        check_increasing("bitrates", &bitrates, 2)?;
        check_increasing("resolutions", &resolutions, 1)?;
        Ok(Self { bitrates, resolutions, sizes: None })
    }

    pub fn with_sizes(mut self, sizes: Vec<(u32, u32)>) -> Result<Self> {
        if sizes.len() != self.resolutions.len() {
            return Err(GrdError::InvalidAxes("one size per resolution required".into()));
        }
        self.sizes = Some(sizes);
        Ok(self)
    }

    /// 100..9000 kbps in 100 kbps steps by the six default sizes (90 × 6).
    pub fn full_scale() -> Self {
        let bitrates = (1..=90).map(|k| T::lit(100.0 * k as f64)).collect();
        Self::with_default_resolutions(bitrates)
    }

    /// 1000..9000 kbps in 1000 kbps steps by the six default sizes (9 × 6).
    pub fn desk() -> Self {
        let bitrates = (1..=9).map(|k| T::lit(1000.0 * k as f64)).collect();
        Self::with_default_resolutions(bitrates)
    }

    fn with_default_resolutions(bitrates: Vec<T>) -> Self {
        let resolutions = DEFAULT_SIZES.iter().map(|&(w, h)| T::lit(diagonal(w, h))).collect();
        Self { bitrates, resolutions, sizes: Some(DEFAULT_SIZES.to_vec()) }
    }

    /// The same bitrates at a single resolution.
    pub fn restrict_to_resolution(&self, j: usize) -> Result<Self> {
        let r = *self.resolutions.get(j).ok_or_else(|| {
            GrdError::InvalidArgument(format!("resolution index {j} out of range"))
        })?;
        Ok(Self {
            bitrates: self.bitrates.clone(),
            resolutions: vec![r],
            sizes: self.sizes.as_ref().map(|s| vec![s[j]]),
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_increasing("bitrates", &self.bitrates, 2)?;
        check_increasing("resolutions", &self.resolutions, 1)?;
        if let Some(s) = &self.sizes {
            if s.len() != self.resolutions.len() {
                return Err(GrdError::InvalidAxes("one size per resolution required".into()));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n_bitrates(&self) -> usize {
        self.bitrates.len()
    }

    #[inline]
    pub fn n_resolutions(&self) -> usize {
        self.resolutions.len()
    }

    /// Number of grid cells `K`.
    #[inline]
    pub fn len(&self) -> usize {
        self.bitrates.len() * self.resolutions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn flat_index(&self, bitrate_index: usize, resolution_index: usize) -> usize {
        bitrate_index * self.resolutions.len() + resolution_index
    }

    #[inline]
    pub fn cell(&self, flat: usize) -> (usize, usize) {
        (flat / self.resolutions.len(), flat % self.resolutions.len())
    }

    /// Index of an exact bitrate label.
    pub fn bitrate_index(&self, kbps: T) -> Option<usize> {
        self.bitrates.iter().position(|&b| b == kbps)
    }

    /// Index of an exact resolution label.
    pub fn resolution_index(&self, diag: T) -> Option<usize> {
        self.resolutions.iter().position(|&r| r == diag)
    }

    pub fn ensure_same(&self, other: &Self) -> Result<()> {
        if self.bitrates != other.bitrates || self.resolutions != other.resolutions {
            return Err(GrdError::AxisMismatch(format!(
                "{}x{} grid vs {}x{} grid with different labels",
                self.n_bitrates(),
                self.n_resolutions(),
                other.n_bitrates(),
                other.n_resolutions()
            )));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> AxisSpec<U> {
        AxisSpec {
            bitrates: self.bitrates.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            resolutions: self.resolutions.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            sizes: self.sizes.clone(),
        }
    }
}

/// A GRD function sampled on a rectangular grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GrdGrid<T> {
    axes: AxisSpec<T>,
    values: Vec<T>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl<T: Real> GrdGrid<T> {
    /// Builds a grid from one row per bitrate.
    pub fn from_rows(axes: AxisSpec<T>, rows: &[Vec<T>]) -> Result<Self> {
        axes.validate().map_err(|e| GrdError::MalformedGrid(e.to_string()))?;
        if rows.len() != axes.n_bitrates() {
            return Err(GrdError::MalformedGrid(format!(
                "expected {} bitrate rows, got {}",
                axes.n_bitrates(),
                rows.len()
            )));
        }
        let mut values = Vec::with_capacity(axes.len());
        for (i, r) in rows.iter().enumerate() {
            if r.len() != axes.n_resolutions() {
                return Err(GrdError::MalformedGrid(format!(
                    "row {i} has {} entries, expected {}",
                    r.len(),
                    axes.n_resolutions()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::unflatten(values, axes)
    }

    /// Inverse of [`GrdGrid::flatten`].
    pub fn unflatten(values: Vec<T>, axes: AxisSpec<T>) -> Result<Self> {
        if values.len() != axes.len() {
            return Err(GrdError::MalformedGrid(format!(
                "expected {} values, got {}",
                axes.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = axes.cell(k);
            return Err(GrdError::MalformedGrid(format!("non-finite value at ({i}, {j})")));
        }
        Ok(Self { axes, values, metadata: BTreeMap::new() })
    }

    /// Fills every cell from a function of `(bitrate_index, resolution_index)`.
    pub fn from_fn(axes: AxisSpec<T>, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let values = (0..axes.len())
            .map(|k| {
                let (i, j) = axes.cell(k);
                f(i, j)
            })
            .collect();
        Self::unflatten(values, axes)
    }

    pub fn with_metadata(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.insert(key.to_owned(), value.into());
        self
    }

    #[inline]
    pub fn axes(&self) -> &AxisSpec<T> {
        &self.axes
    }

    /// Flattened values, bitrate-major.
    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn flatten(&self) -> Vec<T> {
        self.values.clone()
    }

    #[inline]
    pub fn get(&self, bitrate_index: usize, resolution_index: usize) -> T {
        self.values[self.axes.flat_index(bitrate_index, resolution_index)]
    }

    /// One row per bitrate.
    pub fn rows(&self) -> Vec<Vec<T>> {
        self.values.chunks(self.axes.n_resolutions()).map(<[T]>::to_vec).collect()
    }

    /// RD curve (quality along bitrate) at one resolution.
    pub fn column(&self, resolution_index: usize) -> Vec<T> {
        (0..self.axes.n_bitrates()).map(|i| self.get(i, resolution_index)).collect()
    }

    pub fn cast<U: Real>(&self) -> GrdGrid<U> {
        GrdGrid {
            axes: self.axes.cast(),
            values: self.values.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            metadata: self.metadata.clone(),
        }
    }
}

/// A constraint of the discrete space that a grid breaks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// `values[i][j] < values[i-1][j]`; located at `i`.
    BitrateMonotonicity { bitrate_index: usize, resolution_index: usize, drop: f64 },
    /// At the top bitrate, `values[last][j] < values[last][j-1]`; located at `j`.
    ResolutionMonotonicity { resolution_index: usize, drop: f64 },
    OutOfRange { bitrate_index: usize, resolution_index: usize, value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn count_monotonicity(&self) -> usize {
        self.violations.iter().filter(|v| !matches!(v, Violation::OutOfRange { .. })).count()
    }
}

/// Checks a grid against the discrete membership rules: non-decreasing along
/// bitrate at every resolution, non-decreasing along resolution at the top
/// bitrate, and values inside `[-tol, 100 + tol]`.
///
/// Boundary equalities (zero quality at zero rate, 100 at the top corner) are
/// not checked: grids start above zero rate and padded data need not reach 100.
pub fn validate_membership<T: Real>(grid: &GrdGrid<T>, tolerance: T) -> Result<ValidationReport> {
    if tolerance < T::zero() || !tolerance.is_finite() {
        return Err(GrdError::InvalidArgument("tolerance must be finite and non-negative".into()));
    }
    let axes = grid.axes();
    axes.validate().map_err(|e| GrdError::MalformedGrid(e.to_string()))?;
    if grid.values().len() != axes.len() || grid.values().iter().any(|v| !v.is_finite()) {
        return Err(GrdError::MalformedGrid("shape mismatch or non-finite values".into()));
    }
    let (nb, nr) = (axes.n_bitrates(), axes.n_resolutions());
    let mut violations = Vec::new();
    for j in 0..nr {
        for i in 1..nb {
            let drop = grid.get(i - 1, j) - grid.get(i, j);
            if drop > tolerance {
                violations.push(Violation::BitrateMonotonicity {
                    bitrate_index: i,
                    resolution_index: j,
                    drop: drop.to_f64_lossy(),
                });
            }
        }
    }
    for j in 1..nr {
        let drop = grid.get(nb - 1, j - 1) - grid.get(nb - 1, j);
        if drop > tolerance {
            violations
                .push(Violation::ResolutionMonotonicity { resolution_index: j, drop: drop.to_f64_lossy() });
        }
    }
    let hi = T::lit(QUALITY_MAX) + tolerance;
    for (k, &v) in grid.values().iter().enumerate() {
        if v < -tolerance || v > hi {
            let (i, j) = axes.cell(k);
            violations.push(Violation::OutOfRange {
                bitrate_index: i,
                resolution_index: j,
                value: v.to_f64_lossy(),
            });
        }
    }
    Ok(ValidationReport { passed: violations.is_empty(), violations })
}

/// Root-mean-square difference over all cells.
pub fn rmse<T: Real>(a: &GrdGrid<T>, b: &GrdGrid<T>) -> Result<T> {
    a.axes().ensure_same(b.axes())?;
    let ss: T = a.values().iter().zip(b.values()).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok((ss / T::from_usize_lossy(a.values().len())).sqrt())
}

/// Maximum absolute difference over all cells.
pub fn linf_error<T: Real>(a: &GrdGrid<T>, b: &GrdGrid<T>) -> Result<T> {
    a.axes().ensure_same(b.axes())?;
    Ok(a.values().iter().zip(b.values()).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs())))
}

/// Sparse observations of a surface on grid cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SampleSet<T> {
    axes: AxisSpec<T>,
    entries: Vec<Sample<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Sample<T> {
    pub bitrate_index: usize,
    pub resolution_index: usize,
    pub quality: T,
}

impl<T: Real> SampleSet<T> {
    pub fn new(axes: AxisSpec<T>, entries: Vec<Sample<T>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for s in &entries {
            if s.bitrate_index >= axes.n_bitrates() || s.resolution_index >= axes.n_resolutions() {
                return Err(GrdError::InvalidSamples(format!(
                    "cell ({}, {}) outside {}x{} grid",
                    s.bitrate_index,
                    s.resolution_index,
                    axes.n_bitrates(),
                    axes.n_resolutions()
                )));
            }
            if !seen.insert((s.bitrate_index, s.resolution_index)) {
                return Err(GrdError::InvalidSamples(format!(
                    "duplicate cell ({}, {})",
                    s.bitrate_index, s.resolution_index
                )));
            }
            if !s.quality.is_finite() || s.quality < T::zero() || s.quality > T::lit(QUALITY_MAX) {
                return Err(GrdError::InvalidSamples(format!(
                    "quality {} at ({}, {}) outside [0, 100]",
                    s.quality, s.bitrate_index, s.resolution_index
                )));
            }
        }
        Ok(Self { axes, entries })
    }

    /// Reads the values of `grid` at the given flattened cells, in order.
    pub fn from_grid(grid: &GrdGrid<T>, flat_cells: &[usize]) -> Result<Self> {
        let axes = grid.axes().clone();
        let entries = flat_cells
            .iter()
            .map(|&k| {
                if k >= axes.len() {
                    return Err(GrdError::InvalidSamples(format!("flat index {k} out of range")));
                }
                let (i, j) = axes.cell(k);
                Ok(Sample { bitrate_index: i, resolution_index: j, quality: grid.values()[k] })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes, entries)
    }

    #[inline]
    pub fn axes(&self) -> &AxisSpec<T> {
        &self.axes
    }

    #[inline]
    pub fn entries(&self) -> &[Sample<T>] {
        &self.entries
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn flat_indices(&self) -> Vec<usize> {
        self.entries.iter().map(|s| self.axes.flat_index(s.bitrate_index, s.resolution_index)).collect()
    }
}

/// Resamples one raw RD curve per resolution onto the target bitrates.
///
/// Each curve is made non-decreasing by a running maximum, held at its final
/// quality up to the top target bitrate, then resampled by monotone PCHIP.
/// Extrapolation below the first measured bitrate is refused.
pub fn ingest_raw_curves<T: Real>(
    per_resolution_curves: &[Vec<(T, T)>],
    target_axes: &AxisSpec<T>,
) -> Result<GrdGrid<T>> {
    target_axes.validate()?;
    if per_resolution_curves.len() != target_axes.n_resolutions() {
        return Err(GrdError::InvalidArgument(format!(
            "expected {} curves (one per resolution), got {}",
            target_axes.n_resolutions(),
            per_resolution_curves.len()
        )));
    }
    let lo = target_axes.bitrates[0];
    let hi = *target_axes.bitrates.last().expect("validated axes");
    let mut columns = Vec::with_capacity(per_resolution_curves.len());
    for (j, curve) in per_resolution_curves.iter().enumerate() {
        if curve.len() < 2 {
            return Err(GrdError::InvalidArgument(format!("curve {j} has fewer than 2 points")));
        }
        if curve.iter().any(|(x, z)| !x.is_finite() || !z.is_finite()) {
            return Err(GrdError::InvalidArgument(format!("curve {j} has non-finite points")));
        }
        if curve.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(GrdError::InvalidArgument(format!(
                "curve {j} bitrates must be strictly increasing"
            )));
        }
        let (first, last) = (curve[0].0, curve[curve.len() - 1].0);
        if last < lo {
            return Err(GrdError::InvalidArgument(format!(
                "curve {j} ends at {last} kbps, below the lowest target {lo}"
            )));
        }
        if first > lo {
            return Err(GrdError::OutOfDomain {
                x: lo.to_f64_lossy(),
                lo: first.to_f64_lossy(),
                hi: last.to_f64_lossy(),
            });
        }
        let mut xs: Vec<T> = curve.iter().map(|p| p.0).collect();
        let mut ys: Vec<T> = Vec::with_capacity(curve.len() + 1);
        let mut running = T::neg_infinity();
        for &(_, z) in curve {
            running = running.max(z);
            ys.push(running);
        }
        if last < hi {
            xs.push(hi);
            ys.push(running);
        }
        let pchip = Curve1D::pchip(xs, ys)?;
        let mut col = target_axes.bitrates.iter().map(|&b| pchip.eval(b)).collect::<Result<Vec<_>>>()?;
        // remove rounding-level dips so the column is exactly non-decreasing
        for i in 1..col.len() {
            col[i] = col[i].max(col[i - 1]);
        }
        columns.push(col);
    }
    GrdGrid::from_fn(target_axes.clone(), |i, j| columns[j][i])
}
