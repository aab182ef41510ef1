//! Synthetic expert data for exercising the trainer without a world: evenly
//! spaced waypoints straight toward a random goal over an all-free patch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConditioningContext, Trajectory};
use crate::geom::WorldPoint;

/// `count` samples with goals 2–6 m away at uniform angles. Waypoints march
/// toward the goal at `spacing` meters and hold at the goal once reached.
pub fn straight_line_dataset(
    count: usize,
    patch_len: usize,
    n_waypoints: usize,
    spacing: f64,
    seed: u64,
) -> Vec<(ConditioningContext, Trajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let dist = rng.gen_range(2.0..6.0);
            let (ux, uy) = (angle.cos(), angle.sin());
            let waypoints = (1..=n_waypoints)
                .map(|i| {
                    let d = (i as f64 * spacing).min(dist);
                    [d * ux, d * uy]
                })
                .collect();
            let context = ConditioningContext {
                observation_features: vec![1.0; patch_len],
                goal_offset: [dist * ux, dist * uy],
                localization: WorldPoint::new(0.0, 0.0),
            };
            (context, Trajectory { waypoints })
        })
        .collect()
}
