//! Seed derivation for reproducible sub-streams.
//!
//! Every random draw in the crate flows from a caller-provided master seed
//! through `derive`, so independent stages (world generation, training,
//! per-trial noise) never share or race a stream.

/// SplitMix64 step; a full-period mixer with good avalanche behavior.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` for the stage `tag` and element `index`.
pub fn derive(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(tag)).wrapping_add(index))
}

/// Stage tags. Centralized so no two stages collide.
pub mod stage {
    pub const WORLD_TERRAIN: u64 = 1;
    pub const WORLD_GRAPH: u64 = 2;
    pub const WORLD_OBSTACLES: u64 = 3;
    pub const WORLD_TASK: u64 = 4;
    pub const WORLD_FEATURES: u64 = 5;
    pub const TRIAL_LOCALIZE: u64 = 10;
    pub const TRIAL_DIFFUSION: u64 = 11;
    pub const TRAIN_LP: u64 = 20;
    pub const TRAIN_GP: u64 = 21;
    pub const DATASET_LP: u64 = 22;
    pub const DATASET_GP: u64 = 23;
    pub const BENCH_TRIAL: u64 = 30;
    pub const BENCH_WORLD: u64 = 31;
}
