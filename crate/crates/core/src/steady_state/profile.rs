use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid_io::GridCase;

/// Multipliers applied to a base case by [`scale_profile`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledProfile {
    pub gen_factors: Vec<f64>,
    /// `(p_load, q_load)` multiplier per bus.
    pub load_factors: Vec<(f64, f64)>,
    pub seed: u64,
}

/// Draws an independent uniform factor in `[lo, hi]` for every generator
/// dispatch and every bus load component. Dispatch is clamped to the
/// generator's `[p_min, p_max]`.
pub fn scale_profile(case: &GridCase, range: (f64, f64), seed: u64) -> (GridCase, ScaledProfile) {
    let (lo, hi) = range;
    assert!(0.0 < lo && lo <= hi, "scale range must satisfy 0 < lo <= hi");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || if lo == hi { lo } else { rng.gen_range(lo..=hi) };

    let gen_factors: Vec<f64> = case.generators.iter().map(|_| draw()).collect();
    let load_factors: Vec<(f64, f64)> = case.buses.iter().map(|_| (draw(), draw())).collect();

    let mut out = case.clone();
    for (g, &f) in out.generators.iter_mut().zip(&gen_factors) {
        g.p_gen = (g.p_gen * f).clamp(g.p_min, g.p_max);
    }
    for (b, &(fp, fq)) in out.buses.iter_mut().zip(&load_factors) {
        b.p_load *= fp;
        b.q_load *= fq;
    }
    (
        out,
        ScaledProfile {
            gen_factors,
            load_factors,
            seed,
        },
    )
}
