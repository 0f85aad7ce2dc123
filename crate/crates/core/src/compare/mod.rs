//! Codec comparison from sparse RD samples: average quality gain (ΔQ) over
//! the common log-bitrate range and average bitrate change (ΔR) over the
//! common quality range, with pluggable curve fitters.
//!
//! Rates enter as kbps; `x̂ = log10(kbps)` throughout. ΔR is the relative
//! bitrate of codec B against codec A, so negative values are savings.

mod fit;

pub use fit::{
    fit_codec, fit_cubic, fit_dr, fit_logistic, fit_rd, CodecFit, EgrdModel, FitDiagnostics, FittedCurve, Fitter,
    LogisticFit, LogisticParams, Model, RateScale,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{GrdError, Result};
use crate::quad::integrate_piecewise;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrMode {
    /// `10^{mean(ĝ_B − ĝ_A)} − 1` with `ĝ` in log10 kbps.
    #[default]
    Log,
    /// `mean((g_B − g_A)/g_A)` with `g` in kbps.
    Exact,
}

/// RD samples of two codecs on one content, as `(kbps, quality)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdSamplePair {
    pub content_id: String,
    pub a: Vec<(f64, f64)>,
    pub b: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Flag {
    NoOverlap,
    Extrapolated,
    NonMonotoneRd,
    NonMonotoneDr,
    NotConverged,
    FitFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentComparison {
    pub content_id: String,
    pub flags: Vec<Flag>,
    pub delta_q: Option<f64>,
    pub delta_r: Option<f64>,
    /// `[x̂_L, x̂_H]` in log10 kbps.
    pub rate_range_log10: Option<(f64, f64)>,
    /// `[z_L, z_H]`.
    pub quality_range: Option<(f64, f64)>,
    pub fit_a: Option<FitDiagnostics>,
    pub fit_b: Option<FitDiagnostics>,
    pub error: Option<String>,
    #[serde(skip)]
    pub curves: Option<(CodecFit, CodecFit)>,
}

impl ContentComparison {
    /// Whether the content counts toward the aggregates.
    pub fn is_scored(&self) -> bool {
        self.delta_q.is_some() && self.delta_r.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecComparisonReport {
    pub fitter: Fitter,
    pub dr_mode: DrMode,
    pub rate_axis: String,
    pub global_range_kbps: Option<(f64, f64)>,
    pub contents: Vec<ContentComparison>,
    pub mean_delta_q: f64,
    pub mean_delta_r: f64,
    pub scored: usize,
    /// Contents left out of the means, by reason.
    pub excluded: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareOptions {
    pub fitter: Fitter,
    pub dr_mode: DrMode,
    /// Evaluate over this kbps range instead of the sample overlap.
    pub global_range: Option<(f64, f64)>,
    pub egrd: Option<EgrdModel>,
}

impl CompareOptions {
    pub fn new(fitter: Fitter, dr_mode: DrMode) -> Self {
        Self { fitter, dr_mode, global_range: None, egrd: None }
    }
}

const INT_ABS: f64 = 1e-13;
const INT_REL: f64 = 1e-12;

/// `∫ f(x̂) dx̂` for an RD curve, whatever its rate coordinate.
fn rd_integral_log(rd: &FittedCurve, lo: f64, hi: f64, extrapolate: bool) -> Result<f64> {
    match (rd.rate_scale, &rd.model) {
        (RateScale::Log10Kbps, _) => rd.integral(lo, hi, extrapolate),
        (RateScale::Kbps, Model::Linear { curve }) if rd.covers(10f64.powf(lo), 10f64.powf(hi)) => {
            // f linear in kbps on each segment: ∫(α + βx)dx̂ = αΔx̂ + βΔx/ln10
            let (xlo, xhi) = (10f64.powf(lo), 10f64.powf(hi));
            let (dlo, dhi) = curve.domain();
            let (xlo, xhi) = (xlo.max(dlo), xhi.min(dhi));
            let kx = curve.knots_x();
            let ky = curve.knots_y();
            let mut total = 0.0;
            for k in 0..kx.len() - 1 {
                let (a, b) = (kx[k].max(xlo), kx[k + 1].min(xhi));
                if b <= a {
                    continue;
                }
                let beta = (ky[k + 1] - ky[k]) / (kx[k + 1] - kx[k]);
                let alpha = ky[k] - beta * kx[k];
                let (ua, ub) = (if a == xlo { lo } else { a.log10() }, if b == xhi { hi } else { b.log10() });
                total += alpha * (ub - ua) + beta * (b - a) / std::f64::consts::LN_10;
            }
            Ok(total)
        }
        (RateScale::Kbps, _) => {
            if !extrapolate && !rd.covers(10f64.powf(lo), 10f64.powf(hi)) {
                return Err(GrdError::OutOfDomain { x: 10f64.powf(lo), lo: rd.domain.0, hi: rd.domain.1 });
            }
            let bps: Vec<f64> = rd.breakpoints().iter().map(|x| x.log10()).collect();
            quad_result(|u| rd.eval_extrapolated(10f64.powf(u)), lo, hi, &bps)
        }
    }
}

/// `∫ log10 g(z) dz` for a DR curve.
fn dr_integral_log(dr: &FittedCurve, lo: f64, hi: f64, extrapolate: bool) -> Result<f64> {
    match (dr.rate_scale, &dr.model) {
        (RateScale::Log10Kbps, _) => dr.integral(lo, hi, extrapolate),
        (RateScale::Kbps, Model::Linear { curve }) if dr.covers(lo, hi) => {
            // g linear in z on each segment: ∫ log10 g dz = [g ln g − g]/(g' ln10)
            let kz = curve.knots_x();
            let mut total = 0.0;
            for k in 0..kz.len() - 1 {
                let (a, b) = (kz[k].max(lo), kz[k + 1].min(hi));
                if b <= a {
                    continue;
                }
                let (ga, gb) = (curve.eval(a)?, curve.eval(b)?);
                if ga <= 0.0 || gb <= 0.0 {
                    return Err(GrdError::Numerical("non-positive bitrate in DR curve".into()));
                }
                let slope = (gb - ga) / (b - a);
                total += if slope == 0.0 || (gb - ga).abs() <= 1e-14 * ga {
                    (b - a) * (0.5 * (ga + gb)).log10()
                } else {
                    let anti = |g: f64| g * g.ln() - g;
                    (anti(gb) - anti(ga)) / (slope * std::f64::consts::LN_10)
                };
            }
            Ok(total)
        }
        (RateScale::Kbps, _) => {
            if !extrapolate && !dr.covers(lo, hi) {
                return Err(GrdError::OutOfDomain { x: lo, lo: dr.domain.0, hi: dr.domain.1 });
            }
            let bps = dr.breakpoints();
            quad_result(|z| dr.eval_extrapolated(z).map(f64::log10), lo, hi, &bps)
        }
    }
}

/// Adaptive quadrature of a fallible integrand.
fn quad_result(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, breakpoints: &[f64]) -> Result<f64> {
    let mut err = None;
    let v = integrate_piecewise(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        lo,
        hi,
        breakpoints,
        INT_ABS * (hi - lo).abs().max(1.0),
        INT_REL,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Mean quality difference `f_B − f_A` over `[x̂_L, x̂_H]` (log10 kbps).
pub fn delta_q(rd_a: &FittedCurve, rd_b: &FittedCurve, lo: f64, hi: f64) -> Result<f64> {
    delta_q_with(rd_a, rd_b, lo, hi, false)
}

fn delta_q_with(rd_a: &FittedCurve, rd_b: &FittedCurve, lo: f64, hi: f64, extrapolate: bool) -> Result<f64> {
    if !(lo < hi) {
        return Err(GrdError::NoOverlap(format!("empty rate interval [{lo}, {hi}]")));
    }
    let ia = rd_integral_log(rd_a, lo, hi, extrapolate)?;
    let ib = rd_integral_log(rd_b, lo, hi, extrapolate)?;
    Ok((ib - ia) / (hi - lo))
}

/// Average bitrate change of B against A over `[z_L, z_H]`.
pub fn delta_r(dr_a: &FittedCurve, dr_b: &FittedCurve, lo: f64, hi: f64, mode: DrMode) -> Result<f64> {
    delta_r_with(dr_a, dr_b, lo, hi, mode, false)
}

fn delta_r_with(
    dr_a: &FittedCurve,
    dr_b: &FittedCurve,
    lo: f64,
    hi: f64,
    mode: DrMode,
    extrapolate: bool,
) -> Result<f64> {
    if !(lo < hi) {
        return Err(GrdError::NoOverlap(format!("empty quality interval [{lo}, {hi}]")));
    }
    match mode {
        DrMode::Log => {
            let ia = dr_integral_log(dr_a, lo, hi, extrapolate)?;
            let ib = dr_integral_log(dr_b, lo, hi, extrapolate)?;
            Ok(10f64.powf((ib - ia) / (hi - lo)) - 1.0)
        }
        DrMode::Exact => {
            for dr in [dr_a, dr_b] {
                if !extrapolate && !dr.covers(lo, hi) {
                    return Err(GrdError::OutOfDomain { x: lo, lo: dr.domain.0, hi: dr.domain.1 });
                }
            }
            let kbps = |dr: &FittedCurve, z: f64| dr.eval_extrapolated(z).map(|v| dr.rate_scale.to_kbps(v));
            let mut bps = dr_a.breakpoints();
            bps.extend(dr_b.breakpoints());
            let ratio = |z: f64| {
                let ga = kbps(dr_a, z)?;
                if !(ga > 0.0) {
                    return Err(GrdError::Numerical(format!("codec A bitrate reaches {ga} at quality {z}")));
                }
                Ok((kbps(dr_b, z)? - ga) / ga)
            };
            Ok(quad_result(ratio, lo, hi, &bps)? / (hi - lo))
        }
    }
}

/// Compares one content.
pub fn compare_content(pair: &RdSamplePair, options: &CompareOptions) -> Result<ContentComparison> {
    let mut out = ContentComparison {
        content_id: pair.content_id.clone(),
        flags: Vec::new(),
        delta_q: None,
        delta_r: None,
        rate_range_log10: None,
        quality_range: None,
        fit_a: None,
        fit_b: None,
        error: None,
        curves: None,
    };
    let fits = fit_codec(options.fitter, &pair.a, options.egrd.as_ref())
        .and_then(|a| fit_codec(options.fitter, &pair.b, options.egrd.as_ref()).map(|b| (a, b)));
    let (fa, fb) = match fits {
        Ok(f) => f,
        Err(e @ (GrdError::FitFailed(_) | GrdError::Numerical(_) | GrdError::OutOfDomain { .. })) => {
            out.flags.push(Flag::FitFailed);
            out.error = Some(e.to_string());
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    for f in [&fa, &fb] {
        if !f.diagnostics.rd_monotone {
            out.flags.push(Flag::NonMonotoneRd);
        }
        if !f.diagnostics.dr_monotone {
            out.flags.push(Flag::NonMonotoneDr);
        }
        if !f.diagnostics.converged {
            out.flags.push(Flag::NotConverged);
        }
    }
    out.fit_a = Some(fa.diagnostics.clone());
    out.fit_b = Some(fb.diagnostics.clone());

    let extremes = |s: &[(f64, f64)]| {
        s.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |acc, &(r, q)| {
            (acc.0.min(r), acc.1.max(r), acc.2.min(q), acc.3.max(q))
        })
    };
    let (ra_lo, ra_hi, qa_lo, qa_hi) = extremes(&pair.a);
    let (rb_lo, rb_hi, qb_lo, qb_hi) = extremes(&pair.b);

    let (x_range, mut z_range, extrapolate) = match options.global_range {
        None => (
            (ra_lo.max(rb_lo).log10(), ra_hi.min(rb_hi).log10()),
            (qa_lo.max(qb_lo), qa_hi.min(qb_hi)),
            false,
        ),
        Some((lo, hi)) => {
            if !(lo > 0.0 && lo < hi) {
                return Err(GrdError::InvalidArgument(format!("global range [{lo}, {hi}] is not a kbps interval")));
            }
            if options.fitter == Fitter::Egrd {
                let (dlo, dhi) = fa.rd.domain;
                if lo < dlo || hi > dhi {
                    return Err(GrdError::OutOfDomain { x: if lo < dlo { lo } else { hi }, lo: dlo, hi: dhi });
                }
            }
            let scale = options.fitter.rate_scale();
            let at = |f: &CodecFit, kbps: f64| f.rd.eval_extrapolated(scale.from_kbps(kbps));
            let z = (at(&fa, lo)?.max(at(&fb, lo)?), at(&fa, hi)?.min(at(&fb, hi)?));
            ((lo.log10(), hi.log10()), z, true)
        }
    };
    // fitted curves need not reach the sampled quality extremes
    if options.fitter == Fitter::Egrd {
        z_range = (z_range.0.max(fa.dr.domain.0).max(fb.dr.domain.0), z_range.1.min(fa.dr.domain.1).min(fb.dr.domain.1));
    }
    if !(x_range.0 < x_range.1) || !(z_range.0 < z_range.1) {
        out.flags.push(Flag::NoOverlap);
        out.curves = Some((fa, fb));
        return Ok(out);
    }
    if extrapolate {
        let scale = options.fitter.rate_scale();
        let rates = (scale.from_kbps(10f64.powf(x_range.0)), scale.from_kbps(10f64.powf(x_range.1)));
        let beyond = [&fa, &fb]
            .iter()
            .any(|f| !f.rd.covers(rates.0, rates.1) || !f.dr.covers(z_range.0, z_range.1));
        if beyond {
            out.flags.push(Flag::Extrapolated);
        }
    }
    out.rate_range_log10 = Some(x_range);
    out.quality_range = Some(z_range);
    let scored = delta_q_with(&fa.rd, &fb.rd, x_range.0, x_range.1, extrapolate).and_then(|dq| {
        delta_r_with(&fa.dr, &fb.dr, z_range.0, z_range.1, options.dr_mode, extrapolate).map(|dr| (dq, dr))
    });
    match scored {
        Ok((dq, dr)) => {
            out.delta_q = Some(dq);
            out.delta_r = Some(dr);
        }
        Err(e @ (GrdError::OutOfDomain { .. } | GrdError::Numerical(_))) => {
            out.flags.push(Flag::FitFailed);
            out.error = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    out.flags.sort();
    out.flags.dedup();
    out.curves = Some((fa, fb));
    Ok(out)
}

/// Runs the comparison over all contents. Contents without an overlap or
/// with failed fits are listed but left out of the means; it is an error if
/// none remain.
pub fn compare(contents: &[RdSamplePair], options: &CompareOptions) -> Result<CodecComparisonReport> {
    if contents.is_empty() {
        return Err(GrdError::InvalidArgument("no contents to compare".into()));
    }
    if options.fitter == Fitter::Egrd && options.egrd.is_none() {
        return Err(GrdError::InvalidArgument("the egrd fitter needs a curve basis".into()));
    }
    let results = contents.iter().map(|c| compare_content(c, options)).collect::<Result<Vec<_>>>()?;
    let mut excluded: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let (mut sq, mut sr, mut n) = (0.0, 0.0, 0usize);
    for r in &results {
        match (r.delta_q, r.delta_r) {
            (Some(q), Some(d)) => {
                sq += q;
                sr += d;
                n += 1;
            }
            _ => {
                let reason = if r.flags.contains(&Flag::NoOverlap) { "NO_OVERLAP" } else { "FIT_FAILED" };
                excluded.entry(reason.into()).or_default().push(r.content_id.clone());
            }
        }
    }
    if n == 0 {
        if let Some(e) = results.iter().find_map(|r| r.error.as_ref()).filter(|_| !excluded.contains_key("NO_OVERLAP")) {
            return Err(GrdError::FitFailed(format!("no content could be fitted; first failure: {e}")));
        }
        return Err(GrdError::NoOverlap("no content has overlapping ranges and valid fits".into()));
    }
    Ok(CodecComparisonReport {
        fitter: options.fitter,
        dr_mode: options.dr_mode,
        rate_axis: "log10_kbps".into(),
        global_range_kbps: options.global_range,
        contents: results,
        mean_delta_q: sq / n as f64,
        mean_delta_r: sr / n as f64,
        scored: n,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::Curve1D;

    fn linear_dr(zs: Vec<f64>, kbps: Vec<f64>) -> FittedCurve {
        let c = Curve1D::linear(zs, kbps).unwrap();
        FittedCurve { domain: c.domain(), model: Model::Linear { curve: c }, rate_scale: RateScale::Kbps }
    }

    #[test]
    fn constant_ratio_modes_agree() {
        let a = linear_dr(vec![20.0, 50.0, 90.0], vec![300.0, 1000.0, 5000.0]);
        let b = linear_dr(vec![20.0, 50.0, 90.0], vec![600.0, 2000.0, 10000.0]);
        let exact = delta_r(&a, &b, 20.0, 90.0, DrMode::Exact).unwrap();
        let log = delta_r(&a, &b, 20.0, 90.0, DrMode::Log).unwrap();
        assert!((exact - 1.0).abs() < 1e-9 && (log - 1.0).abs() < 1e-9);
    }

    #[test]
    fn additive_offset_modes_differ() {
        // g_A = 100 + 10z, g_B = g_A + 200
        let a = linear_dr(vec![0.0, 100.0], vec![100.0, 1100.0]);
        let b = linear_dr(vec![0.0, 100.0], vec![300.0, 1300.0]);
        let exact = delta_r(&a, &b, 0.0, 100.0, DrMode::Exact).unwrap();
        // (1/100)∫ 200/(100 + 10z) dz = (200/1000)·ln 11
        assert!((exact - 0.2 * 11f64.ln()).abs() < 1e-12);
        let log = delta_r(&a, &b, 0.0, 100.0, DrMode::Log).unwrap();
        let anti = |g: f64| g * g.ln() - g;
        let mean_log = ((anti(1300.0) - anti(300.0)) - (anti(1100.0) - anti(100.0))) / (10.0 * 10f64.ln()) / 100.0;
        assert!((log - (10f64.powf(mean_log) - 1.0)).abs() < 1e-12);
        assert!((exact - log).abs() > 1e-3);
    }

    #[test]
    fn shifted_quality_gives_constant_gain() {
        let pts = |off: f64| vec![(200.0, 30.0 + off), (800.0, 55.0 + off), (2000.0, 70.0 + off), (6000.0, 85.0 + off)];
        for fitter in [Fitter::Bd, Fitter::Pchip] {
            let pair = RdSamplePair { content_id: "c".into(), a: pts(0.0), b: pts(5.0) };
            let r = compare(&[pair], &CompareOptions::new(fitter, DrMode::Log)).unwrap();
            assert!((r.mean_delta_q - 5.0).abs() < 1e-9, "{fitter}");
        }
    }

    #[test]
    fn disjoint_ranges_flag_no_overlap() {
        let a = vec![(100.0, 20.0), (200.0, 30.0), (300.0, 40.0), (400.0, 45.0)];
        let b = vec![(1000.0, 60.0), (2000.0, 70.0), (3000.0, 80.0), (4000.0, 85.0)];
        let pair = RdSamplePair { content_id: "far".into(), a: a.clone(), b };
        let opts = CompareOptions::new(Fitter::Pchip, DrMode::Log);
        let r = compare_content(&pair, &opts).unwrap();
        assert_eq!(r.flags, vec![Flag::NoOverlap]);
        assert!(compare(std::slice::from_ref(&pair), &opts).is_err());
        let same = RdSamplePair { content_id: "same".into(), a: a.clone(), b: a };
        let rep = compare(&[pair, same], &opts).unwrap();
        assert_eq!(rep.scored, 1);
        assert_eq!(rep.excluded["NO_OVERLAP"], vec!["far".to_string()]);
    }
}
