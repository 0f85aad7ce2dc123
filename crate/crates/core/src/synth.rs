//! Seeded synthetic GRD surfaces that satisfy the membership rules exactly.
//!
//! Each surface is `z(x, y) = q_y · (1 − exp(−λ_y · x / 1000))^γ` with `x` in
//! kbps. Lower resolutions rise faster (larger `λ_y`) but saturate lower, so
//! RD curves of neighbouring resolutions cross, as real ones do.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; surface `m` uses stream
//! `m`, so any surface can be regenerated on its own and the output does not
//! depend on platform or generation order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GrdError, Result};
use crate::grid::{AxisSpec, GrdGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub axes: AxisSpec<f64>,
    pub count: usize,
    /// Saturation quality at the top resolution, uniform.
    pub q_top: (f64, f64),
    /// Per-step multiplier applied going down one resolution, uniform in (0, 1].
    pub q_step: (f64, f64),
    /// Rate of rise at the top resolution (per Mbps), log-uniform.
    pub lambda_top: (f64, f64),
    /// Per-step growth of λ going down one resolution, uniform, ≥ 1.
    pub lambda_step: (f64, f64),
    /// Shape exponent γ; larger values give a sharper knee. Uniform.
    pub gamma: (f64, f64),
}

impl SynthParams {
    pub fn new(seed: u64, axes: AxisSpec<f64>, count: usize) -> Self {
        Self {
            seed,
            axes,
            count,
            q_top: (75.0, 100.0),
            q_step: (0.85, 0.98),
            lambda_top: (0.2, 1.5),
            lambda_step: (1.2, 1.8),
            gamma: (1.0, 2.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.axes.validate()?;
        let range = |name: &str, (lo, hi): (f64, f64), min: f64, max: f64| {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo > min && hi <= max) {
                return Err(GrdError::InvalidArgument(format!(
                    "{name} range [{lo}, {hi}] must lie in ({min}, {max}]"
                )));
            }
            Ok(())
        };
        range("q_top", self.q_top, 0.0, 100.0)?;
        range("q_step", self.q_step, 0.0, 1.0)?;
        range("lambda_top", self.lambda_top, 0.0, f64::MAX)?;
        range("gamma", self.gamma, 0.0, f64::MAX)?;
        range("lambda_step", self.lambda_step, 0.0, f64::MAX)?;
        if self.lambda_step.0 < 1.0 {
            return Err(GrdError::InvalidArgument("lambda_step must be ≥ 1".into()));
        }
        if self.axes.bitrates[0] <= 0.0 {
            return Err(GrdError::InvalidArgument("bitrates must be positive".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Generates `params.count` surfaces; identical params give bit-identical
/// output.
pub fn generate(params: &SynthParams) -> Result<Vec<GrdGrid<f64>>> {
    params.validate()?;
    (0..params.count).map(|m| surface(params, m)).collect()
}

/// Surface `index` of the corpus described by `params`.
pub fn surface(params: &SynthParams, index: usize) -> Result<GrdGrid<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(index as u64);
    let axes = &params.axes;
    let nr = axes.n_resolutions();
    let x_max = axes.bitrates[axes.n_bitrates() - 1];

    let gamma = uniform(&mut rng, params.gamma);
    let (ll, lh) = params.lambda_top;
    let mut lambda = vec![0.0; nr];
    lambda[nr - 1] = uniform(&mut rng, (ll.ln(), lh.ln())).exp();
    for j in (0..nr - 1).rev() {
        lambda[j] = lambda[j + 1] * uniform(&mut rng, params.lambda_step);
    }
    let shape = |j: usize, x: f64| (1.0 - (-lambda[j] * x / 1000.0).exp()).powf(gamma);

    // Going down, q shrinks enough that the top-bitrate value q_j·shape_j
    // never exceeds the one above it, even though shape_j ≥ shape_{j+1}.
    let mut q = vec![0.0; nr];
    q[nr - 1] = uniform(&mut rng, params.q_top);
    for j in (0..nr - 1).rev() {
        let step = uniform(&mut rng, params.q_step);
        let (above, here) = (shape(j + 1, x_max), shape(j, x_max));
        q[j] = if here > 0.0 { step * q[j + 1] * (above / here).min(1.0) } else { step * q[j + 1] };
    }

    let grid = GrdGrid::from_fn(axes.clone(), |i, j| q[j] * shape(j, axes.bitrates[i]))?;
    Ok(grid
        .with_metadata("content_id", format!("synth-{}-{index}", params.seed))
        .with_metadata("generator", "synth"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::validate_membership;

    #[test]
    fn corpus_is_valid_and_deterministic() {
        let p = SynthParams::new(42, AxisSpec::desk(), 30);
        let a = generate(&p).unwrap();
        let b = generate(&p).unwrap();
        assert_eq!(a, b);
        for g in &a {
            assert!(validate_membership(g, 0.0).unwrap().passed);
        }
        assert_ne!(a[0].values(), a[1].values());
        // streams make each surface independent of the corpus size
        assert_eq!(surface(&p, 7).unwrap(), a[7]);
    }

    #[test]
    fn infinite_rate_limit_is_flat() {
        let mut p = SynthParams::new(3, AxisSpec::desk(), 2);
        p.lambda_top = (1e9, 1e9);
        for g in generate(&p).unwrap() {
            for j in 0..g.axes().n_resolutions() {
                let col = g.column(j);
                assert!(col.iter().all(|&v| v == col[0] && v > 0.0));
            }
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        let mut p = SynthParams::new(0, AxisSpec::desk(), 1);
        p.q_step = (0.9, 1.1);
        assert!(generate(&p).is_err());
        let mut p = SynthParams::new(0, AxisSpec::desk(), 1);
        p.lambda_step = (0.5, 1.0);
        assert!(generate(&p).is_err());
    }
}
