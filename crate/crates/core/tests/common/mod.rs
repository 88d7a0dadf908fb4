//! Helpers shared by the integration test targets.

/// Coarse-to-fine grid search over a two-variable cost.
///
/// Each stage scans `pts × pts` samples of `f`, then zooms the window to one
/// coarse cell around the best sample (clamped to the original box). With
/// two stages and 41 points per axis the final resolution is ~1/800 of the
/// box, tight enough to certify solver optimality to well below 1e-4 for
/// smooth costs.
pub fn grid_search_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    bounds: (f64, f64),
    pts: usize,
    stages: usize,
) -> (f64, f64, f64) {
    assert!(pts >= 3 && stages >= 1);
    let (box_lo, box_hi) = bounds;
    let (mut lo1, mut hi1) = (box_lo, box_hi);
    let (mut lo2, mut hi2) = (box_lo, box_hi);
    let mut best = (f64::INFINITY, box_lo, box_lo);

    for _ in 0..stages {
        let step1 = (hi1 - lo1) / (pts - 1) as f64;
        let step2 = (hi2 - lo2) / (pts - 1) as f64;
        for i in 0..pts {
            let u1 = lo1 + step1 * i as f64;
            for j in 0..pts {
                let u2 = lo2 + step2 * j as f64;
                let cost = f(u1, u2);
                if cost < best.0 {
                    best = (cost, u1, u2);
                }
            }
        }
        lo1 = (best.1 - step1).max(box_lo);
        hi1 = (best.1 + step1).min(box_hi);
        lo2 = (best.2 - step2).max(box_lo);
        hi2 = (best.2 + step2).min(box_hi);
    }
    best
}
