//! Independent reference implementations used as test oracles. None of them
//! call into the crate's numerics.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Fritsch–Carlson/Butland slopes with the shape-preserving three-point end
/// conditions.
pub fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|k| x[k + 1] - x[k]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![d[0], d[0]];
    }
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

pub fn hermite_eval(x: &[f64], y: &[f64], m: &[f64], t: f64) -> f64 {
    let k = match x.iter().rposition(|&xk| xk <= t) {
        Some(k) if k == x.len() - 1 => k - 1,
        Some(k) => k,
        None => 0,
    };
    let h = x[k + 1] - x[k];
    let s = (t - x[k]) / h;
    let (h00, h10, h01, h11) = (
        (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
        s * (1.0 - s) * (1.0 - s),
        s * s * (3.0 - 2.0 * s),
        s * s * (s - 1.0),
    );
    h00 * y[k] + h10 * h * m[k] + h01 * y[k + 1] + h11 * h * m[k + 1]
}

/// Strictly increasing abscissae and non-decreasing ordinates with some
/// flat runs.
pub fn random_monotone_knots(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![rng.gen_range(0.0..10.0)];
    let mut y = vec![rng.gen_range(0.0..50.0)];
    for _ in 1..n {
        x.push(x.last().unwrap() + rng.gen_range(0.05..5.0));
        let step = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..20.0) };
        y.push(y.last().unwrap() + step);
    }
    (x, y)
}

/// `A·Aᵀ` with Gaussian-ish entries, shifted to be safely positive definite.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 1e-3
}

/// Trace of the covariance of the cells outside `observed`, conditioned on
/// `observed`, computed from scratch.
pub fn conditional_trace(sigma: &DMatrix<f64>, observed: &[usize]) -> f64 {
    let n = sigma.nrows();
    let rest: Vec<usize> = (0..n).filter(|i| !observed.contains(i)).collect();
    let s_rr = DMatrix::from_fn(rest.len(), rest.len(), |a, b| sigma[(rest[a], rest[b])]);
    if observed.is_empty() {
        return s_rr.trace();
    }
    let s_oo = DMatrix::from_fn(observed.len(), observed.len(), |a, b| sigma[(observed[a], observed[b])]);
    let s_ro = DMatrix::from_fn(rest.len(), observed.len(), |a, b| sigma[(rest[a], observed[b])]);
    let inv = s_oo.try_inverse().expect("observed block invertible");
    (s_rr - &s_ro * inv * s_ro.transpose()).trace()
}

/// Greedy trace-minimizing order by exhaustive per-step search.
pub fn brute_force_trace_order(sigma: &DMatrix<f64>, steps: usize) -> Vec<usize> {
    let mut chosen = Vec::new();
    for _ in 0..steps {
        let best = (0..sigma.nrows())
            .filter(|i| !chosen.contains(i))
            .map(|i| {
                let mut s = chosen.clone();
                s.push(i);
                (i, conditional_trace(sigma, &s))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        chosen.push(best.0);
    }
    chosen
}

/// Random strictly convex QP `½cᵀPc + qᵀc s.t. Ac ≤ b` with a known
/// feasible point.
pub struct SmallQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl SmallQp {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Self {
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let p = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
        let q = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let c0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let b = &a * &c0 + DVector::from_fn(m, |_, _| rng.gen_range(0.0..0.5));
        Self { p, q, a, b }
    }

    pub fn objective(&self, c: &DVector<f64>) -> f64 {
        0.5 * c.dot(&(&self.p * c)) + self.q.dot(c)
    }

    pub fn violation(&self, c: &DVector<f64>) -> f64 {
        (&self.a * c - &self.b).iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// Exact optimum by enumerating active sets: every feasible stationary
    /// point of an equality-constrained subproblem is a candidate, and the
    /// true optimum is one of them.
    pub fn enumerate(&self) -> (DVector<f64>, f64) {
        let (n, m) = (self.p.nrows(), self.a.nrows());
        let mut best: Option<(DVector<f64>, f64)> = None;
        for mask in 0u32..(1 << m) {
            let act: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
            if act.len() > n {
                continue;
            }
            let k = n + act.len();
            let mut kkt = DMatrix::zeros(k, k);
            let mut rhs = DVector::zeros(k);
            kkt.view_mut((0, 0), (n, n)).copy_from(&self.p);
            for i in 0..n {
                rhs[i] = -self.q[i];
            }
            for (r, &i) in act.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = self.a[(i, j)];
                    kkt[(j, n + r)] = self.a[(i, j)];
                }
                rhs[n + r] = self.b[i];
            }
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            let c = sol.rows(0, n).into_owned();
            if self.violation(&c) > 1e-9 {
                continue;
            }
            let f = self.objective(&c);
            if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                best = Some((c, f));
            }
        }
        best.expect("feasible by construction")
    }

    /// Best feasible point of a uniform grid over `[−r, r]ⁿ`.
    pub fn grid_search(&self, r: f64, steps: usize) -> f64 {
        let n = self.p.nrows();
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; n];
        loop {
            let c = DVector::from_fn(n, |i, _| -r + 2.0 * r * idx[i] as f64 / (steps - 1) as f64);
            if self.violation(&c) <= 0.0 {
                best = best.min(self.objective(&c));
            }
            let mut d = 0;
            while d < n {
                idx[d] += 1;
                if idx[d] < steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == n {
                return best;
            }
        }
    }
}
