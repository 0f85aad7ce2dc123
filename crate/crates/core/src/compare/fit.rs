//! RD/DR curve fitters: least-squares cubic (BD), monotone Hermite, logistic,
//! and the basis-constrained piecewise-linear fit.

use serde::{Deserialize, Serialize};

use crate::basis::{pca_train, per_resolution_curves, EigenBasis};
use crate::error::{GrdError, Result};
use crate::grid::GrdGrid;
use crate::interp::{Curve1D, CurveKind};
use crate::linalg::{Cholesky, Matrix};
use crate::qp::{Observation, QpSettings};
use crate::quad::integrate_piecewise;
use crate::reconstruct::{estimate_observations, ComponentCount, ReconstructionConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fitter {
    Bd,
    Pchip,
    Logistic,
    Egrd,
}

impl Fitter {
    pub const ALL: [Fitter; 4] = [Fitter::Bd, Fitter::Pchip, Fitter::Logistic, Fitter::Egrd];

    /// Rate coordinate the fitter works in.
    pub fn rate_scale(self) -> RateScale {
        match self {
            Fitter::Egrd => RateScale::Kbps,
            _ => RateScale::Log10Kbps,
        }
    }

    pub fn min_samples(self) -> usize {
        match self {
            Fitter::Bd | Fitter::Logistic => 4,
            Fitter::Pchip | Fitter::Egrd => 2,
        }
    }
}

impl std::fmt::Display for Fitter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fitter::Bd => "bd",
            Fitter::Pchip => "pchip",
            Fitter::Logistic => "logistic",
            Fitter::Egrd => "egrd",
        })
    }
}

/// How a curve's rate coordinate relates to kbps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateScale {
    /// `x̂ = log10(kbps)`.
    Log10Kbps,
    Kbps,
}

impl RateScale {
    pub fn from_kbps(self, kbps: f64) -> f64 {
        match self {
            RateScale::Log10Kbps => kbps.log10(),
            RateScale::Kbps => kbps,
        }
    }

    pub fn to_kbps(self, x: f64) -> f64 {
        match self {
            RateScale::Log10Kbps => 10f64.powf(x),
            RateScale::Kbps => x,
        }
    }
}

/// `z = a + b / (1 + exp(−c (x̂ − d)))`, normalized to `c > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl LogisticParams {
    pub fn eval(&self, x: f64) -> f64 {
        self.a + self.b * sigmoid(self.c * (x - self.d))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let s = sigmoid(self.c * (x - self.d));
        self.b * self.c * s * (1.0 - s)
    }

    /// `∫ z dx̂`, using `∫ σ(c(x−d)) dx = softplus(c(x−d)) / c`.
    fn antiderivative(&self, x: f64) -> f64 {
        self.a * x + self.b * softplus(self.c * (x - self.d)) / self.c
    }

    /// Analytic inverse; `None` outside the open range `(a, a + b)`.
    pub fn inverse(&self, z: f64) -> Option<f64> {
        let u = (z - self.a) / self.b;
        (u > 0.0 && u < 1.0).then(|| self.d + (u / (1.0 - u)).ln() / self.c)
    }

    /// `∫ x̂(z) dz` for the inverse: with `u = (z − a)/b`,
    /// `d·z + (b/c)·(u ln u + (1 − u) ln(1 − u))`.
    fn inverse_antiderivative(&self, z: f64) -> Option<f64> {
        let u = (z - self.a) / self.b;
        if !(u > 0.0 && u < 1.0) {
            return None;
        }
        Some(self.d * z + self.b / self.c * (u * u.ln() + (1.0 - u) * (1.0 - u).ln()))
    }

    /// Flips `(a, b, c)` so that `c > 0` without changing the function.
    fn normalized(mut self) -> Self {
        if self.c < 0.0 {
            self.a += self.b;
            self.b = -self.b;
            self.c = -self.c;
        }
        self
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Functional form of a fitted curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Model {
    /// `Σ coeffs[k] t^k` with `t = (x − shift)/scale`.
    Cubic { coeffs: [f64; 4], shift: f64, scale: f64 },
    Hermite { curve: Curve1D<f64> },
    Logistic { params: LogisticParams },
    /// The analytic inverse of a logistic RD curve (a DR curve).
    LogisticInverse { params: LogisticParams },
    Linear { curve: Curve1D<f64> },
}

/// A fitted RD (rate → quality) or DR (quality → rate) curve with the
/// interval it was fitted on. The rate side uses `rate_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedCurve {
    pub model: Model,
    pub domain: (f64, f64),
    pub rate_scale: RateScale,
}

impl FittedCurve {
    fn in_domain(&self, x: f64) -> bool {
        let (lo, hi) = self.domain;
        let slack = 1e-12 * (hi - lo).abs().max(lo.abs()).max(hi.abs()).max(1.0);
        x >= lo - slack && x <= hi + slack
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.in_domain(lo) && self.in_domain(hi)
    }

    /// Value inside the fitted domain.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(GrdError::OutOfDomain { x, lo: self.domain.0, hi: self.domain.1 });
        }
        let (lo, hi) = self.domain;
        self.eval_extrapolated(x.clamp(lo, hi))
    }

    /// Value anywhere the functional form is defined.
    pub fn eval_extrapolated(&self, x: f64) -> Result<f64> {
        let v = match &self.model {
            Model::Cubic { coeffs, shift, scale } => {
                let t = (x - shift) / scale;
                ((coeffs[3] * t + coeffs[2]) * t + coeffs[1]) * t + coeffs[0]
            }
            Model::Hermite { curve } | Model::Linear { curve } => curve.eval_extrapolated(x),
            Model::Logistic { params } => params.eval(x),
            Model::LogisticInverse { params } => params.inverse(x).ok_or_else(|| {
                GrdError::OutOfDomain { x, lo: params.a.min(params.a + params.b), hi: params.a.max(params.a + params.b) }
            })?,
        };
        Ok(v)
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        match &self.model {
            Model::Cubic { coeffs, shift, scale } => {
                let t = (x - shift) / scale;
                Ok((3.0 * coeffs[3] * t * t + 2.0 * coeffs[2] * t + coeffs[1]) / scale)
            }
            Model::Hermite { curve } | Model::Linear { curve } => {
                let (lo, hi) = curve.domain();
                curve.derivative(x.clamp(lo, hi))
            }
            Model::Logistic { params } => Ok(params.derivative(x)),
            Model::LogisticInverse { params } => {
                let x_hat = params.inverse(x).ok_or(GrdError::OutOfDomain { x, lo: params.a, hi: params.a + params.b })?;
                Ok(1.0 / params.derivative(x_hat))
            }
        }
    }

    /// Whether the curve is non-decreasing over its fitted domain. Exact for
    /// every form: the cubic's derivative is minimized analytically.
    pub fn is_non_decreasing(&self) -> bool {
        match &self.model {
            Model::Cubic { coeffs, shift, scale } => {
                let t0 = (self.domain.0 - shift) / scale;
                let t1 = (self.domain.1 - shift) / scale;
                let dp = |t: f64| 3.0 * coeffs[3] * t * t + 2.0 * coeffs[2] * t + coeffs[1];
                let mut min = dp(t0).min(dp(t1));
                if coeffs[3] != 0.0 {
                    let v = -coeffs[2] / (3.0 * coeffs[3]);
                    if v > t0 && v < t1 {
                        min = min.min(dp(v));
                    }
                }
                let size = coeffs[1].abs().max(coeffs[2].abs()).max(coeffs[3].abs()).max(1e-300);
                min >= -1e-12 * size
            }
            // monotone knots ⇒ monotone interpolant for both piecewise forms
            Model::Hermite { curve } | Model::Linear { curve } => curve.knots_y().windows(2).all(|w| w[1] >= w[0]),
            Model::Logistic { params } | Model::LogisticInverse { params } => params.b * params.c >= 0.0,
        }
    }

    /// `∫_lo^hi` of the curve in its own coordinates. Closed form inside the
    /// domain; beyond it only when `extrapolate` is set.
    pub fn integral(&self, lo: f64, hi: f64, extrapolate: bool) -> Result<f64> {
        self.check_range(lo, hi, extrapolate)?;
        match &self.model {
            Model::Cubic { coeffs, shift, scale } => {
                let anti = |x: f64| {
                    let t = (x - shift) / scale;
                    scale * t * (coeffs[0] + t * (coeffs[1] / 2.0 + t * (coeffs[2] / 3.0 + t * coeffs[3] / 4.0)))
                };
                Ok(anti(hi) - anti(lo))
            }
            Model::Hermite { curve } | Model::Linear { curve } => {
                let (a, b) = curve.domain();
                if lo >= a && hi <= b {
                    curve.integrate(lo, hi)
                } else {
                    integrate_piecewise(|x| curve.eval_extrapolated(x), lo, hi, curve.knots_x(), 1e-13, 1e-13)
                }
            }
            Model::Logistic { params } => Ok(params.antiderivative(hi) - params.antiderivative(lo)),
            Model::LogisticInverse { params } => {
                let f = |z: f64| {
                    params.inverse_antiderivative(z).ok_or(GrdError::OutOfDomain {
                        x: z,
                        lo: params.a.min(params.a + params.b),
                        hi: params.a.max(params.a + params.b),
                    })
                };
                Ok(f(hi)? - f(lo)?)
            }
        }
    }

    fn check_range(&self, lo: f64, hi: f64, extrapolate: bool) -> Result<()> {
        if !(lo <= hi) {
            return Err(GrdError::InvalidArgument(format!("integration bounds [{lo}, {hi}] reversed")));
        }
        if !extrapolate && !self.covers(lo, hi) {
            let x = if self.in_domain(lo) { hi } else { lo };
            return Err(GrdError::OutOfDomain { x, lo: self.domain.0, hi: self.domain.1 });
        }
        Ok(())
    }

    /// Knot locations where the integrand is not smooth.
    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        match &self.model {
            Model::Hermite { curve } | Model::Linear { curve } => curve.knots_x().to_vec(),
            _ => Vec::new(),
        }
    }

    /// `n` evenly spaced `(x, y)` points over the domain, for plotting.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.domain;
        (0..n.max(2))
            .filter_map(|k| {
                let x = lo + (hi - lo) * k as f64 / (n.max(2) - 1) as f64;
                self.eval(x).ok().map(|y| (x, y))
            })
            .collect()
    }
}

/// Fit quality and shape checks for one codec's curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub fitter: Fitter,
    pub n_samples: usize,
    /// RMS of `RD(x_i) − z_i`.
    pub rd_rmse: f64,
    /// RMS of `DR(z_i) − x_i` in the curve's rate coordinate.
    pub dr_rmse: f64,
    pub rd_monotone: bool,
    pub dr_monotone: bool,
    /// `max |RD(DR(z)) − z|` over 201 qualities spanning the DR domain.
    pub inverse_gap: f64,
    /// False when the iterative logistic fit hit its iteration cap.
    pub converged: bool,
}

/// Both curves of one codec plus diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecFit {
    pub rd: FittedCurve,
    pub dr: FittedCurve,
    pub diagnostics: FitDiagnostics,
}

/// Sorts by rate and checks counts, finiteness and ranges.
pub(crate) fn prepare_samples(samples: &[(f64, f64)], min: usize) -> Result<Vec<(f64, f64)>> {
    if samples.len() < min {
        return Err(GrdError::FitFailed(format!("need at least {min} samples, got {}", samples.len())));
    }
    for &(r, q) in samples {
        if !(r.is_finite() && r > 0.0) {
            return Err(GrdError::InvalidSamples(format!("bitrate {r} must be positive")));
        }
        if !(q.is_finite() && (0.0..=100.0).contains(&q)) {
            return Err(GrdError::InvalidSamples(format!("quality {q} outside [0, 100]")));
        }
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    if s.windows(2).any(|w| w[1].0 == w[0].0) {
        return Err(GrdError::InvalidSamples("duplicate bitrates".into()));
    }
    Ok(s)
}

/// Least-squares cubic through `(x, y)`, on the coordinate mapped to `[−1, 1]`.
pub fn fit_cubic(xs: &[f64], ys: &[f64]) -> Result<Model> {
    if xs.len() < 4 {
        return Err(GrdError::FitFailed("cubic fit needs at least 4 points".into()));
    }
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mut distinct = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 4 || hi <= lo {
        return Err(GrdError::FitFailed("cubic fit needs 4 distinct abscissae".into()));
    }
    let shift = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    let rows: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            let t = (x - shift) / scale;
            vec![1.0, t, t * t, t * t * t]
        })
        .collect();
    let a = Matrix::from_rows(&rows)?;
    let atb = a.tr_matvec(ys);
    let chol = Cholesky::new(&a.gram()).map_err(|_| GrdError::FitFailed("degenerate cubic design".into()))?;
    let mut c = chol.solve(&atb);
    // one refinement step against the normal equations
    let r: Vec<f64> = ys.iter().zip(a.matvec(&c)).map(|(&y, v)| y - v).collect();
    let dc = chol.solve(&a.tr_matvec(&r));
    c.iter_mut().zip(dc).for_each(|(ci, d)| *ci += d);
    Ok(Model::Cubic { coeffs: [c[0], c[1], c[2], c[3]], shift, scale })
}

/// Outcome of one logistic least-squares fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
}

const LM_MAX_ITER: usize = 500;
const LM_GRAD_TOL: f64 = 1e-10;

/// Fits `z = a + b/(1 + exp(−c(x − d)))` by Levenberg–Marquardt from five
/// starts (`d` at the 10/30/50/70/90 % quantiles of `x`) and keeps the
/// converged start with the lowest squared error.
pub fn fit_logistic(xs: &[f64], zs: &[f64]) -> Result<LogisticFit> {
    if xs.len() < 4 || xs.len() != zs.len() {
        return Err(GrdError::FitFailed("logistic fit needs at least 4 points".into()));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (xlo, xhi) = (sorted[0], sorted[sorted.len() - 1]);
    let (zlo, zhi) = zs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &z| (a.min(z), b.max(z)));
    let zr = (zhi - zlo).max(1e-6);
    let xr = (xhi - xlo).max(1e-6);
    let quantile = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let k = (pos.floor() as usize).min(sorted.len() - 2);
        sorted[k] + (pos - k as f64) * (sorted[k + 1] - sorted[k])
    };
    let mut best: Option<LogisticFit> = None;
    for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let start = LogisticParams { a: zlo - 0.1 * zr, b: 1.2 * zr, c: 4.0 / xr, d: quantile(p) };
        let fit = levenberg_marquardt(xs, zs, start);
        let better = match &best {
            None => true,
            Some(b) => (fit.converged && !b.converged) || (fit.converged == b.converged && fit.sse < b.sse),
        };
        if better {
            best = Some(fit);
        }
    }
    let mut fit = best.expect("five starts");
    fit.params = fit.params.normalized();
    if !fit.params.b.is_finite() || fit.params.b == 0.0 || fit.params.c == 0.0 {
        return Err(GrdError::FitFailed("logistic fit degenerated to a constant".into()));
    }
    Ok(fit)
}

fn levenberg_marquardt(xs: &[f64], zs: &[f64], start: LogisticParams) -> LogisticFit {
    let to_vec = |p: &LogisticParams| [p.a, p.b, p.c, p.d];
    let from = |v: [f64; 4]| LogisticParams { a: v[0], b: v[1], c: v[2], d: v[3] };
    let sse_of = |p: &LogisticParams| xs.iter().zip(zs).map(|(&x, &z)| (p.eval(x) - z).powi(2)).sum::<f64>();
    let mut p = to_vec(&start);
    let mut sse = sse_of(&start);
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = LM_MAX_ITER;
    let mut stalls = 0;
    for it in 0..LM_MAX_ITER {
        let cur = from(p);
        let mut jtj = [[0.0; 4]; 4];
        let mut g = [0.0; 4];
        for (&x, &z) in xs.iter().zip(zs) {
            let s = sigmoid(cur.c * (x - cur.d));
            let ds = s * (1.0 - s);
            let j = [1.0, s, cur.b * (x - cur.d) * ds, -cur.b * cur.c * ds];
            let r = cur.eval(x) - z;
            for a in 0..4 {
                g[a] += j[a] * r;
                for b in 0..4 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        if g.iter().all(|v| v.abs() <= LM_GRAD_TOL) || sse == 0.0 {
            converged = true;
            iterations = it;
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut m = Matrix::zeros(4, 4);
            for a in 0..4 {
                for b in 0..4 {
                    m[(a, b)] = jtj[a][b];
                }
                m[(a, a)] += mu * jtj[a][a].max(1e-12);
            }
            let Ok(ch) = Cholesky::new(&m) else {
                mu *= 4.0;
                continue;
            };
            let step = ch.solve(&g.map(|v| -v));
            let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2], p[3] + step[3]];
            let t_sse = sse_of(&from(trial));
            if t_sse.is_finite() && t_sse <= sse {
                let gain = sse - t_sse;
                let tiny = step.iter().zip(&p).all(|(s, v)| s.abs() <= 1e-15 * (v.abs() + 1e-15));
                p = trial;
                sse = t_sse;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                stalls = if gain <= 1e-15 * sse.max(1e-300) || tiny { stalls + 1 } else { 0 };
                break;
            }
            mu *= 4.0;
        }
        // no further decrease possible in floating point: a stationary point
        if !accepted || stalls >= 5 {
            converged = g.iter().all(|v| v.abs() <= 1e-6 * (1.0 + sse.sqrt()));
            iterations = it + 1;
            break;
        }
    }
    LogisticFit { params: from(p), sse, iterations, converged }
}

/// Curve fitter backed by a basis trained on RD curves: samples are matched
/// by a monotone-constrained reconstruction on the basis's bitrate grid, and
/// the result is interpolated linearly in kbps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgrdModel {
    pub basis: EigenBasis<f64>,
    pub n_components: ComponentCount,
    pub solver: QpSettings,
}

impl EgrdModel {
    /// Wraps a single-resolution basis.
    pub fn new(basis: EigenBasis<f64>) -> Result<Self> {
        if basis.axes.n_resolutions() != 1 {
            return Err(GrdError::InvalidArgument(format!(
                "curve basis must have one resolution, got {}",
                basis.axes.n_resolutions()
            )));
        }
        Ok(Self { basis, n_components: ComponentCount::MatchSamples, solver: QpSettings::default() })
    }

    /// Trains the curve basis on every per-resolution RD curve of a corpus.
    pub fn train(dataset: &[GrdGrid<f64>], n_components: usize) -> Result<Self> {
        let curves = per_resolution_curves(dataset)?;
        Self::new(pca_train(&curves, n_components)?)
    }

    /// Bitrate range the model can represent.
    pub fn domain(&self) -> (f64, f64) {
        let b = &self.basis.axes.bitrates;
        (b[0], b[b.len() - 1])
    }

    /// Fitted RD curve (kbps → quality), strictly increasing.
    pub fn fit_curve(&self, samples: &[(f64, f64)]) -> Result<Curve1D<f64>> {
        let b = &self.basis.axes.bitrates;
        let (lo, hi) = self.domain();
        let obs = samples
            .iter()
            .map(|&(x, z)| {
                if !(x >= lo && x <= hi) {
                    return Err(GrdError::OutOfDomain { x, lo, hi });
                }
                let k = b.partition_point(|&v| v <= x).saturating_sub(1).min(b.len() - 2);
                let w = (x - b[k]) / (b[k + 1] - b[k]);
                let mut weights = Vec::with_capacity(2);
                if w < 1.0 {
                    weights.push((k, 1.0 - w));
                }
                if w > 0.0 {
                    weights.push((k + 1, w));
                }
                Ok(Observation { weights, value: z })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut config = ReconstructionConfig::new(self.basis.kind, self.n_components);
        config.solver = self.solver;
        let est = estimate_observations(&self.basis, &obs, &config)?;
        Curve1D::linear(b.clone(), est.grid.values().to_vec())?.tilt_flats()
    }
}

/// Fits both curves of one codec.
pub fn fit_codec(fitter: Fitter, samples: &[(f64, f64)], egrd: Option<&EgrdModel>) -> Result<CodecFit> {
    let s = prepare_samples(samples, fitter.min_samples())?;
    let scale = fitter.rate_scale();
    let xs: Vec<f64> = s.iter().map(|p| scale.from_kbps(p.0)).collect();
    let zs: Vec<f64> = s.iter().map(|p| p.1).collect();
    let x_dom = (xs[0], xs[xs.len() - 1]);
    let z_dom = zs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &z| (a.min(z), b.max(z)));
    let mut converged = true;

    let (rd, dr) = match fitter {
        Fitter::Bd => {
            let rd = FittedCurve { model: fit_cubic(&xs, &zs)?, domain: x_dom, rate_scale: scale };
            let dr = FittedCurve { model: fit_cubic(&zs, &xs)?, domain: z_dom, rate_scale: scale };
            (rd, dr)
        }
        Fitter::Pchip => {
            let rd = FittedCurve { model: Model::Hermite { curve: Curve1D::pchip(xs.clone(), zs.clone())? }, domain: x_dom, rate_scale: scale };
            let mut swapped: Vec<(f64, f64)> = zs.iter().copied().zip(xs.iter().copied()).collect();
            swapped.sort_by(|a, b| a.0.total_cmp(&b.0));
            if swapped.windows(2).any(|w| w[1].0 == w[0].0) {
                return Err(GrdError::FitFailed("Hermite DR fit needs distinct qualities".into()));
            }
            let (zq, xq): (Vec<f64>, Vec<f64>) = swapped.into_iter().unzip();
            let dr = FittedCurve { model: Model::Hermite { curve: Curve1D::pchip(zq, xq)? }, domain: z_dom, rate_scale: scale };
            (rd, dr)
        }
        Fitter::Logistic => {
            let fit = fit_logistic(&xs, &zs)?;
            converged = fit.converged;
            let p = fit.params;
            let rd = FittedCurve { model: Model::Logistic { params: p }, domain: x_dom, rate_scale: scale };
            // the DR domain is the sample quality range, trimmed to the open
            // range of the inverse
            let (plo, phi) = (p.a.min(p.a + p.b), p.a.max(p.a + p.b));
            let inner = 1e-9 * p.b.abs();
            let dom = (z_dom.0.max(plo + inner), z_dom.1.min(phi - inner));
            if !(dom.0 < dom.1) {
                return Err(GrdError::FitFailed("logistic range does not cover the samples".into()));
            }
            let dr = FittedCurve { model: Model::LogisticInverse { params: p }, domain: dom, rate_scale: scale };
            (rd, dr)
        }
        Fitter::Egrd => {
            let model = egrd.ok_or_else(|| GrdError::InvalidArgument("the egrd fitter needs a curve basis".into()))?;
            let curve = model.fit_curve(&s)?;
            let inv = curve.inverse()?;
            let rd = FittedCurve { model: Model::Linear { curve: curve.clone() }, domain: curve.domain(), rate_scale: scale };
            let dr = FittedCurve { model: Model::Linear { curve: inv.clone() }, domain: inv.domain(), rate_scale: scale };
            (rd, dr)
        }
    };

    let rms = |v: Vec<f64>| (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt();
    let rd_rmse = rms(xs.iter().zip(&zs).map(|(&x, &z)| rd.eval(x).map_or(f64::NAN, |v| v - z)).collect());
    let dr_rmse = rms(
        zs.iter().zip(&xs).map(|(&z, &x)| dr.eval_extrapolated(z).map_or(f64::NAN, |v| v - x)).collect(),
    );
    let inverse_gap = (0..=200)
        .map(|k| {
            let z = dr.domain.0 + (dr.domain.1 - dr.domain.0) * k as f64 / 200.0;
            dr.eval(z)
                .and_then(|x| rd.eval_extrapolated(x))
                .map_or(f64::INFINITY, |back| (back - z).abs())
        })
        .fold(0.0, f64::max);
    let diagnostics = FitDiagnostics {
        fitter,
        n_samples: s.len(),
        rd_rmse,
        dr_rmse,
        rd_monotone: rd.is_non_decreasing(),
        dr_monotone: dr.is_non_decreasing(),
        inverse_gap,
        converged,
    };
    Ok(CodecFit { rd, dr, diagnostics })
}

/// RD curve alone; see [`fit_codec`].
pub fn fit_rd(fitter: Fitter, samples: &[(f64, f64)], egrd: Option<&EgrdModel>) -> Result<FittedCurve> {
    fit_codec(fitter, samples, egrd).map(|f| f.rd)
}

/// DR curve alone; see [`fit_codec`]. BD and Hermite fit it independently on
/// swapped data; logistic and eGRD invert the RD curve.
pub fn fit_dr(fitter: Fitter, samples: &[(f64, f64)], egrd: Option<&EgrdModel>) -> Result<FittedCurve> {
    fit_codec(fitter, samples, egrd).map(|f| f.dr)
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Cubic { .. } => "cubic",
            Model::Hermite { curve } | Model::Linear { curve } => match curve.kind() {
                CurveKind::Pchip => "pchip",
                CurveKind::Linear => "linear",
            },
            Model::Logistic { .. } => "logistic",
            Model::LogisticInverse { .. } => "logistic_inverse",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_interpolates_four_points() {
        let f = |x: f64| 2.0 - x + 0.5 * x * x - 0.25 * x * x * x;
        let xs = [2.0, 2.5, 3.1, 3.9];
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let m = fit_cubic(&xs, &ys).unwrap();
        let c = FittedCurve { model: m, domain: (2.0, 3.9), rate_scale: RateScale::Log10Kbps };
        for &x in &xs {
            assert!((c.eval(x).unwrap() - f(x)).abs() < 1e-9);
        }
        // exact antiderivative: F(x) = 2x − x²/2 + x³/6 − x⁴/16
        let anti = |x: f64| 2.0 * x - x * x / 2.0 + x.powi(3) / 6.0 - x.powi(4) / 16.0;
        assert!((c.integral(2.0, 3.9, false).unwrap() - (anti(3.9) - anti(2.0))).abs() < 1e-10);
        assert!(fit_cubic(&[1.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn logistic_inverse_and_integrals() {
        let p = LogisticParams { a: 10.0, b: 80.0, c: 3.0, d: 3.2 };
        for x in [2.0, 3.0, 3.2, 3.9] {
            assert!((p.inverse(p.eval(x)).unwrap() - x).abs() < 1e-10);
        }
        assert!(p.inverse(9.0).is_none() && p.inverse(95.0).is_none());
        let rd = FittedCurve { model: Model::Logistic { params: p }, domain: (2.0, 4.0), rate_scale: RateScale::Log10Kbps };
        let num = crate::quad::integrate(|x| p.eval(x), 2.0, 4.0, 1e-13, 1e-13).unwrap();
        assert!((rd.integral(2.0, 4.0, false).unwrap() - num).abs() < 1e-10);
        let dr = FittedCurve { model: Model::LogisticInverse { params: p }, domain: (20.0, 80.0), rate_scale: RateScale::Log10Kbps };
        let num = crate::quad::integrate(|z| p.inverse(z).unwrap(), 20.0, 80.0, 1e-13, 1e-13).unwrap();
        assert!((dr.integral(20.0, 80.0, false).unwrap() - num).abs() < 1e-9);
        let flipped = LogisticParams { a: 90.0, b: -80.0, c: -3.0, d: 3.2 }.normalized();
        assert!((flipped.eval(2.7) - p.eval(2.7)).abs() < 1e-12);
    }

    #[test]
    fn logistic_recovers_parameters() {
        let truth = LogisticParams { a: 15.0, b: 80.0, c: 2.5, d: 3.1 };
        let xs: Vec<f64> = (0..10).map(|k| 2.0 + 0.2 * k as f64).collect();
        let zs: Vec<f64> = xs.iter().map(|&x| truth.eval(x)).collect();
        let fit = fit_logistic(&xs, &zs).unwrap();
        assert!(fit.converged);
        let p = fit.params;
        for (got, want) in [(p.a, truth.a), (p.b, truth.b), (p.c, truth.c), (p.d, truth.d)] {
            assert!(((got - want) / want).abs() < 1e-4, "{p:?}");
        }
    }

    #[test]
    fn cubic_monotonicity_is_analytic() {
        // t³ − t has negative slope on (−1/√3, 1/√3)
        let c = FittedCurve {
            model: Model::Cubic { coeffs: [0.0, -1.0, 0.0, 1.0], shift: 0.0, scale: 1.0 },
            domain: (-1.0, 1.0),
            rate_scale: RateScale::Log10Kbps,
        };
        assert!(!c.is_non_decreasing());
        let c = FittedCurve { domain: (0.6, 1.0), ..c };
        assert!(c.is_non_decreasing());
    }

    #[test]
    fn sample_preparation() {
        assert!(prepare_samples(&[(100.0, 10.0)], 2).is_err());
        assert!(prepare_samples(&[(100.0, 10.0), (100.0, 20.0)], 2).is_err());
        assert!(prepare_samples(&[(100.0, 10.0), (-1.0, 20.0)], 2).is_err());
        assert!(prepare_samples(&[(100.0, 10.0), (200.0, 120.0)], 2).is_err());
        let s = prepare_samples(&[(300.0, 30.0), (100.0, 10.0)], 2).unwrap();
        assert_eq!(s, vec![(100.0, 10.0), (300.0, 30.0)]);
    }
}
