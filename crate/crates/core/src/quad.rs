//! Adaptive Gauss–Kronrod (7/15) quadrature for smooth integrands.

use crate::error::{GrdError, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Real>(f: &mut impl FnMut(T) -> T, a: T, b: T) -> (T, T) {
    let c = (a + b) * T::lit(0.5);
    let h = (b - a) * T::lit(0.5);
    let fc = f(c);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for (k, (&x, &w)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let dx = h * T::lit(x);
        let s = f(c - dx) + f(c + dx);
        kron += s * T::lit(w);
        if k % 2 == 1 {
            gauss += s * T::lit(WG[k / 2]);
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` to within `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<T: Real>(mut f: impl FnMut(T) -> T, a: T, b: T, abs_tol: T, rel_tol: T) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    if a > b {
        return integrate(f, b, a, abs_tol, rel_tol).map(|v| -v);
    }
    let mut stack = vec![(a, b, 0usize)];
    let (whole, _) = gk15(&mut f, a, b);
    let mut total = T::zero();
    const MAX_DEPTH: usize = 40;
    const MAX_EVALS: usize = 200_000;
    let mut pieces = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        pieces += 1;
        let (val, err) = gk15(&mut f, lo, hi);
        let frac = (hi - lo) / (b - a);
        let target = abs_tol.max(rel_tol * whole.abs()) * frac;
        if !val.is_finite() {
            return Err(GrdError::Numerical("non-finite integrand".into()));
        }
        if err <= target || depth >= MAX_DEPTH || err <= T::epsilon() * val.abs() * T::lit(50.0) {
            total += val;
        } else {
            if pieces * 15 > MAX_EVALS {
                return Err(GrdError::Numerical("quadrature evaluation budget exhausted".into()));
            }
            let mid = (lo + hi) * T::lit(0.5);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Ok(total)
}

/// Integrates piecewise, splitting at the given interior breakpoints.
pub fn integrate_piecewise<T: Real>(
    mut f: impl FnMut(T) -> T,
    a: T,
    b: T,
    breakpoints: &[T],
    abs_tol: T,
    rel_tol: T,
) -> Result<T> {
    let mut pts: Vec<T> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    pts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    pts.dedup();
    let mut edges = vec![a];
    edges.extend(pts);
    edges.push(b);
    let n = T::from_usize_lossy(edges.len() - 1);
    let mut total = T::zero();
    for w in edges.windows(2) {
        total += integrate(&mut f, w[0], w[1], abs_tol / n, rel_tol)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x: f64| 3.0 * x * x, 0.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((v - 8.0).abs() < 1e-13);
    }

    #[test]
    fn smooth_transcendental() {
        let v = integrate(|x: f64| x.exp(), 0.0, 1.0, 1e-13, 1e-13).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
        let r = integrate(|x: f64| x.exp(), 1.0, 0.0, 1e-13, 1e-13).unwrap();
        assert!((r + v).abs() < 1e-14);
    }

    #[test]
    fn kink_with_breakpoint() {
        let v = integrate_piecewise(|x: f64| x.abs(), -1.0, 2.0, &[0.0], 1e-14, 0.0).unwrap();
        assert!((v - 2.5).abs() < 1e-13);
    }
}
