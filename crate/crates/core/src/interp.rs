//! One-dimensional interpolation: monotone PCHIP (Fritsch–Carlson) and
//! piecewise-linear curves, with exact integration and inversion of
//! monotone piecewise-linear curves.

use serde::{Deserialize, Serialize};

use crate::error::{GrdError, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Pchip,
    Linear,
}

/// Interpolant through `(knots_x[k], knots_y[k])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Curve1D<T> {
    knots_x: Vec<T>,
    knots_y: Vec<T>,
    /// Knot derivatives; empty for linear curves.
    #[serde(default)]
    slopes: Vec<T>,
    kind: CurveKind,
}

fn check_knots<T: Real>(xs: &[T], ys: &[T]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(GrdError::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(GrdError::InvalidArgument("a curve needs at least 2 knots".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(GrdError::InvalidArgument("knots must be finite".into()));
    }
    if let Some(k) = xs.windows(2).position(|w| w[1] <= w[0]) {
        return Err(GrdError::InvalidArgument(format!(
            "knot x values must be strictly increasing (violated at {})",
            k + 1
        )));
    }
    Ok(())
}

/// Three-point endpoint derivative with monotonicity clamping.
fn end_slope<T: Real>(h0: T, h1: T, d0: T, d1: T) -> T {
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let s = ((two * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() || d0 == T::zero() {
        T::zero()
    } else if d0.signum() != d1.signum() && s.abs() > three * d0.abs() {
        three * d0
    } else {
        s
    }
}

impl<T: Real> Curve1D<T> {
    /// Monotone piecewise cubic Hermite interpolant.
    pub fn pchip(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        check_knots(&xs, &ys)?;
        let n = xs.len();
        let h: Vec<T> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<T> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut d = vec![T::zero(); n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            let two = T::lit(2.0);
            for k in 1..n - 1 {
                let (s0, s1) = (delta[k - 1], delta[k]);
                if s0 == T::zero() || s1 == T::zero() || s0.signum() != s1.signum() {
                    continue;
                }
                // weighted harmonic mean
                let w0 = two * h[k] + h[k - 1];
                let w1 = h[k] + two * h[k - 1];
                d[k] = (w0 + w1) / (w0 / s0 + w1 / s1);
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { knots_x: xs, knots_y: ys, slopes: d, kind: CurveKind::Pchip })
    }

    /// Piecewise-linear interpolant.
    pub fn linear(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        check_knots(&xs, &ys)?;
        Ok(Self { knots_x: xs, knots_y: ys, slopes: Vec::new(), kind: CurveKind::Linear })
    }

    #[inline]
    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    #[inline]
    pub fn knots_x(&self) -> &[T] {
        &self.knots_x
    }

    #[inline]
    pub fn knots_y(&self) -> &[T] {
        &self.knots_y
    }

    pub fn domain(&self) -> (T, T) {
        (self.knots_x[0], self.knots_x[self.knots_x.len() - 1])
    }

    fn check_in_domain(&self, x: T) -> Result<()> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(GrdError::OutOfDomain {
                x: x.to_f64_lossy(),
                lo: lo.to_f64_lossy(),
                hi: hi.to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// Segment `k` with `x_k <= x <= x_{k+1}`, clamped to the end segments.
    fn segment(&self, x: T) -> usize {
        let n = self.knots_x.len();
        let k = self.knots_x.partition_point(|&v| v <= x);
        k.saturating_sub(1).min(n - 2)
    }

    /// Value and derivative of segment `k`'s polynomial at `x` (no domain check).
    fn eval_segment(&self, k: usize, x: T) -> (T, T) {
        let (x0, x1) = (self.knots_x[k], self.knots_x[k + 1]);
        let (y0, y1) = (self.knots_y[k], self.knots_y[k + 1]);
        let h = x1 - x0;
        match self.kind {
            CurveKind::Linear => {
                let slope = (y1 - y0) / h;
                if x == x1 {
                    (y1, slope)
                } else {
                    (y0 + slope * (x - x0), slope)
                }
            }
            CurveKind::Pchip => {
                if x == x0 {
                    return (y0, self.slopes[k]);
                }
                if x == x1 {
                    return (y1, self.slopes[k + 1]);
                }
                let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
                if y0 == y1 && d0 == T::zero() && d1 == T::zero() {
                    return (y0, T::zero());
                }
                let t = (x - x0) / h;
                let one = T::one();
                let two = T::lit(2.0);
                let three = T::lit(3.0);
                let t2 = t * t;
                let t3 = t2 * t;
                let h00 = two * t3 - three * t2 + one;
                let h10 = t3 - two * t2 + t;
                let h01 = three * t2 - two * t3;
                let h11 = t3 - t2;
                let v = y0 * h00 + h * d0 * h10 + y1 * h01 + h * d1 * h11;
                let six = T::lit(6.0);
                let dh00 = six * t2 - six * t;
                let dh10 = three * t2 - T::lit(4.0) * t + one;
                let dh01 = six * t - six * t2;
                let dh11 = three * t2 - two * t;
                let dv = (y0 * dh00 + y1 * dh01) / h + d0 * dh10 + d1 * dh11;
                (v, dv)
            }
        }
    }

    /// Interpolated value; exact at knots. Errors outside the knot range.
    pub fn eval(&self, x: T) -> Result<T> {
        self.check_in_domain(x)?;
        Ok(self.eval_segment(self.segment(x), x).0)
    }

    /// First derivative (one-sided at knots, from the right segment).
    pub fn derivative(&self, x: T) -> Result<T> {
        self.check_in_domain(x)?;
        Ok(self.eval_segment(self.segment(x), x).1)
    }

    /// Evaluates anywhere by extending the first/last segment's polynomial.
    pub fn eval_extrapolated(&self, x: T) -> T {
        self.eval_segment(self.segment(x), x).0
    }

    /// Exact integral over `[lo, hi]` inside the domain.
    pub fn integrate(&self, lo: T, hi: T) -> Result<T> {
        if lo > hi {
            return Err(GrdError::InvalidArgument("integration bounds reversed".into()));
        }
        self.check_in_domain(lo)?;
        self.check_in_domain(hi)?;
        if lo == hi {
            return Ok(T::zero());
        }
        let (klo, khi) = (self.segment(lo), self.segment(hi));
        let mut total = T::zero();
        for k in klo..=khi {
            let a = if k == klo { lo } else { self.knots_x[k] };
            let b = if k == khi { hi } else { self.knots_x[k + 1] };
            if b > a {
                total += self.segment_integral(k, a, b);
            }
        }
        Ok(total)
    }

    fn segment_integral(&self, k: usize, a: T, b: T) -> T {
        let (x0, x1) = (self.knots_x[k], self.knots_x[k + 1]);
        let (y0, y1) = (self.knots_y[k], self.knots_y[k + 1]);
        let h = x1 - x0;
        match self.kind {
            CurveKind::Linear => {
                let fa = self.eval_segment(k, a).0;
                let fb = self.eval_segment(k, b).0;
                (fa + fb) * (b - a) * T::lit(0.5)
            }
            CurveKind::Pchip => {
                let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
                let half = T::lit(0.5);
                let quarter = T::lit(0.25);
                let third = T::one() / T::lit(3.0);
                // antiderivatives of the Hermite basis in t
                let anti = |t: T| {
                    let t2 = t * t;
                    let t3 = t2 * t;
                    let t4 = t3 * t;
                    let a00 = half * t4 - t3 + t;
                    let a10 = quarter * t4 - T::lit(2.0) * third * t3 + half * t2;
                    let a01 = -half * t4 + t3;
                    let a11 = quarter * t4 - third * t3;
                    y0 * a00 + h * d0 * a10 + y1 * a01 + h * d1 * a11
                };
                let ta = (a - x0) / h;
                let tb = (b - x0) / h;
                h * (anti(tb) - anti(ta))
            }
        }
    }

    /// Copy with knot values made strictly increasing: a running maximum, then
    /// each flat or falling knot raised to its predecessor plus
    /// `1e-9 · (y range)`. Drops larger than `1e-6 · max(range, 1)` are errors.
    pub fn tilt_flats(&self) -> Result<Self> {
        let ys = &self.knots_y;
        let (mn, mx) = ys.iter().fold((T::infinity(), T::neg_infinity()), |(a, b), &y| (a.min(y), b.max(y)));
        let range = mx - mn;
        let allowed = T::lit(1e-6) * range.max(T::one());
        let eps = if range > T::zero() { T::lit(1e-9) * range } else { T::lit(1e-9) };
        let mut out = Vec::with_capacity(ys.len());
        out.push(ys[0]);
        for k in 1..ys.len() {
            let prev = out[k - 1];
            if ys[k - 1] - ys[k] > allowed {
                return Err(GrdError::InvalidArgument(format!(
                    "curve decreases at knot {k}; cannot invert"
                )));
            }
            out.push(if ys[k] <= prev { prev + eps } else { ys[k] });
        }
        let mut c = self.clone();
        c.knots_y = out;
        if c.kind == CurveKind::Pchip {
            c = Self::pchip(c.knots_x, c.knots_y)?;
        }
        Ok(c)
    }

    /// `x` with `eval(x) = y` for a non-decreasing piecewise-linear curve.
    /// Flat runs are tilted first so the inverse is a function.
    pub fn invert_monotone(&self, y: T) -> Result<T> {
        if self.kind != CurveKind::Linear {
            return Err(GrdError::InvalidArgument("inversion requires a linear curve".into()));
        }
        let strict = if self.knots_y.windows(2).all(|w| w[1] > w[0]) {
            None
        } else {
            Some(self.tilt_flats()?)
        };
        let c = strict.as_ref().unwrap_or(self);
        let ys = &c.knots_y;
        let (lo, hi) = (ys[0], ys[ys.len() - 1]);
        if !(y >= lo && y <= hi) {
            return Err(GrdError::OutOfDomain { x: y.to_f64_lossy(), lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() });
        }
        let k = ys.partition_point(|&v| v <= y).saturating_sub(1).min(ys.len() - 2);
        let (y0, y1) = (ys[k], ys[k + 1]);
        let (x0, x1) = (c.knots_x[k], c.knots_x[k + 1]);
        if y == y1 {
            return Ok(x1);
        }
        Ok(x0 + (y - y0) * (x1 - x0) / (y1 - y0))
    }

    /// The inverse function as a linear curve (knots swapped). Requires a
    /// linear curve; flats are tilted first.
    pub fn inverse(&self) -> Result<Self> {
        if self.kind != CurveKind::Linear {
            return Err(GrdError::InvalidArgument("inversion requires a linear curve".into()));
        }
        let c = self.tilt_flats()?;
        Self::linear(c.knots_y, c.knots_x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_reproduction() {
        let c = Curve1D::<f64>::pchip(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((c.eval(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((c.eval(2.25).unwrap() - 2.25).abs() < 1e-15);
    }

    #[test]
    fn knots_are_exact() {
        let xs = vec![0.0, 0.7, 1.9, 3.0, 4.4];
        let ys = vec![3.0, -1.0, 2.0, 2.0, 9.0];
        for c in [Curve1D::<f64>::pchip(xs.clone(), ys.clone()).unwrap(), Curve1D::<f64>::linear(xs.clone(), ys.clone()).unwrap()] {
            for (x, y) in xs.iter().zip(&ys) {
                assert_eq!(c.eval(*x).unwrap(), *y);
            }
        }
    }

    #[test]
    fn plateau_stays_monotone_and_bounded() {
        let c = Curve1D::<f64>::pchip(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 10.0, 10.0, 11.0]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=1000 {
            let v = c.eval(3.0 * k as f64 / 1000.0).unwrap();
            assert!(v >= prev - 1e-12);
            assert!((0.0..=11.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn rejects_bad_knots_and_extrapolation() {
        assert!(Curve1D::<f64>::pchip(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Curve1D::<f64>::linear(vec![1.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Curve1D::<f64>::linear(vec![1.0], vec![1.0]).is_err());
        let c = Curve1D::<f64>::linear(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(c.eval(1.5), Err(GrdError::OutOfDomain { .. })));
        assert!(c.integrate(-1.0, 0.5).is_err());
        assert!(c.integrate(0.8, 0.2).is_err());
    }

    #[test]
    fn linear_midpoint_and_integrals() {
        let c = Curve1D::<f64>::linear(vec![0.0, 2.0], vec![4.0, 8.0]).unwrap();
        assert_eq!(c.eval(1.0).unwrap(), 6.0);
        let k = Curve1D::<f64>::pchip(vec![0.0, 1.0, 2.0], vec![3.0, 3.0, 3.0]).unwrap();
        assert!((k.integrate(0.0, 2.0).unwrap() - 6.0).abs() < 1e-15);
        let id = Curve1D::<f64>::linear(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!((id.integrate(0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inversion() {
        let id = Curve1D::<f64>::linear(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!((id.invert_monotone(0.3).unwrap() - 0.3).abs() < 1e-15);
        let c = Curve1D::<f64>::linear(vec![1.0, 2.0, 4.0], vec![10.0, 20.0, 25.0]).unwrap();
        assert_eq!(c.invert_monotone(20.0).unwrap(), 2.0);
        assert_eq!(c.invert_monotone(25.0).unwrap(), 4.0);
        assert!(c.invert_monotone(26.0).is_err());
        let flat = Curve1D::<f64>::linear(vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 5.0, 5.0, 5.0]).unwrap();
        let x = flat.invert_monotone(5.0).unwrap();
        assert!((flat.eval(x).unwrap() - 5.0).abs() < 1e-12);
        let falling = Curve1D::<f64>::linear(vec![1.0, 2.0], vec![5.0, 0.0]).unwrap();
        assert!(falling.invert_monotone(1.0).is_err());
    }

    #[test]
    fn derivative_of_linear_pchip() {
        let c = Curve1D::<f64>::pchip(vec![0.0, 1.0, 3.0], vec![1.0, 3.0, 7.0]).unwrap();
        assert!((c.derivative(2.0).unwrap() - 2.0).abs() < 1e-14);
    }
}
