//! Paired significance testing for benchmark comparisons.
//!
//! The benchmark compares policy variants on identical seeded trials, so the
//! per-trial metric differences form a paired sample with no distributional
//! guarantees. The Wilcoxon signed-rank test fits: it ranks the absolute
//! differences and asks whether the signed ranks could plausibly sum to the
//! observed statistic under random sign flips.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Smallest usable sample: below this even the most extreme assignment of
/// signs is not rare enough to ever reach p < 0.05.
pub const MIN_EFFECTIVE_PAIRS: usize = 5;
/// Up to this many effective pairs the p-value is computed exactly by
/// enumerating every sign assignment; beyond it the normal approximation
/// with tie correction takes over.
pub const EXACT_ENUMERATION_LIMIT: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length: {xs} vs {ys}")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("only {effective} non-zero differences; need at least {MIN_EFFECTIVE_PAIRS}")]
    TooFewPairs { effective: usize },
    #[error("all paired differences are zero; the samples are identical")]
    AllZeroDifferences,
}

/// How the p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Full enumeration of all `2^n` sign assignments.
    Exact,
    /// Large-sample normal approximation with tie correction and a 0.5
    /// continuity correction.
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WilcoxonResult {
    /// Signed-rank statistic: sum over pairs of sign(x−y) times the midrank
    /// of |x−y|. Bounded by ±n(n+1)/2.
    pub w: f64,
    /// Pairs remaining after zero differences are dropped.
    pub n_effective: usize,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: PValueMethod,
    /// Significance level the result was judged against.
    pub alpha: f64,
    /// Whether `p_value < alpha`.
    pub significant: bool,
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped and tied absolute differences share their
/// midrank, the standard conventions. With at most
/// [`EXACT_ENUMERATION_LIMIT`] effective pairs the p-value enumerates all
/// sign assignments exactly; larger samples use the normal approximation
/// whose variance term (the sum of squared midranks) absorbs ties.
pub fn wilcoxon_signed_rank(xs: &[f64], ys: &[f64], alpha: f64) -> Result<WilcoxonResult, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch { xs: xs.len(), ys: ys.len() });
    }
    let diffs: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        if xs.is_empty() {
            return Err(StatsError::TooFewPairs { effective: 0 });
        }
        return Err(StatsError::AllZeroDifferences);
    }
    let n = diffs.len();
    if n < MIN_EFFECTIVE_PAIRS {
        return Err(StatsError::TooFewPairs { effective: n });
    }

    let ranks = midranks(&diffs);
    let w: f64 = diffs
        .iter()
        .zip(&ranks)
        .map(|(d, r)| d.signum() * r)
        .sum();

    let (p_value, method) = if n <= EXACT_ENUMERATION_LIMIT {
        (exact_two_sided_p(&ranks, w), PValueMethod::Exact)
    } else {
        (normal_two_sided_p(&ranks, w), PValueMethod::NormalApprox)
    };
    Ok(WilcoxonResult {
        w,
        n_effective: n,
        p_value,
        method,
        alpha,
        significant: p_value < alpha,
    })
}

/// Ascending ranks of `|diffs|` with tied values sharing the mean of the
/// rank positions they occupy.
fn midranks(diffs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut ranks = vec![0.0; diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // positions i..=j (0-based) hold the same value; ranks are 1-based
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    ranks
}

/// Probability under random independent signs that the signed-rank sum is at
/// least as extreme (in absolute value) as the observed statistic.
fn exact_two_sided_p(ranks: &[f64], observed_w: f64) -> f64 {
    let n = ranks.len();
    debug_assert!(n <= EXACT_ENUMERATION_LIMIT);
    let threshold = observed_w.abs() - 1e-9;
    let mut extreme = 0u64;
    for mask in 0u32..(1u32 << n) {
        let mut w = 0.0;
        for (bit, r) in ranks.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                w += r;
            } else {
                w -= r;
            }
        }
        if w.abs() >= threshold {
            extreme += 1;
        }
    }
    extreme as f64 / (1u64 << n) as f64
}

fn normal_two_sided_p(ranks: &[f64], observed_w: f64) -> f64 {
    // under random signs W has mean 0 and variance equal to the sum of
    // squared midranks, which already reflects any ties
    let variance: f64 = ranks.iter().map(|r| r * r).sum();
    if variance <= 0.0 {
        return 1.0;
    }
    // the usual 0.5 continuity correction applies on the positive-rank-sum
    // scale; W = 2·T⁺ − Σranks doubles it
    let z = (observed_w.abs() - 1.0).max(0.0) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal is valid");
    (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: naive O(n²) midranks and a from-scratch
    /// enumeration over sign patterns of the raw differences.
    fn oracle_two_sided_p(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let diffs: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| x - y)
            .filter(|d| *d != 0.0)
            .collect();
        let n = diffs.len();
        let mut ranks = vec![0.0f64; n];
        for i in 0..n {
            let ai = diffs[i].abs();
            let below = diffs.iter().filter(|d| d.abs() < ai).count();
            let equal = diffs.iter().filter(|d| d.abs() == ai).count();
            // midrank = average of positions below+1 ..= below+equal
            ranks[i] = below as f64 + (equal as f64 + 1.0) / 2.0;
        }
        let w_obs: f64 = diffs
            .iter()
            .zip(&ranks)
            .map(|(d, r)| if *d > 0.0 { *r } else { -r })
            .sum();
        let mut extreme = 0u64;
        for mask in 0u64..(1u64 << n) {
            let mut w = 0.0;
            for (bit, r) in ranks.iter().enumerate() {
                w += if mask & (1 << bit) != 0 { *r } else { -r };
            }
            if w.abs() >= w_obs.abs() - 1e-9 {
                extreme += 1;
            }
        }
        (w_obs, extreme as f64 / (1u64 << n) as f64)
    }

    #[test]
    fn identical_samples_are_rejected() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(
            wilcoxon_signed_rank(&xs, &xs, 0.05),
            Err(StatsError::AllZeroDifferences)
        );
    }

    #[test]
    fn unequal_lengths_are_rejected() {
        assert_eq!(
            wilcoxon_signed_rank(&[1.0, 2.0], &[1.0], 0.05),
            Err(StatsError::LengthMismatch { xs: 2, ys: 1 })
        );
    }

    #[test]
    fn too_few_pairs_after_zero_removal() {
        // five pairs, but one difference is zero
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [0.0, 1.0, 2.0, 3.0, 5.0];
        assert_eq!(
            wilcoxon_signed_rank(&xs, &ys, 0.05),
            Err(StatsError::TooFewPairs { effective: 4 })
        );
        assert_eq!(
            wilcoxon_signed_rank(&[], &[], 0.05),
            Err(StatsError::TooFewPairs { effective: 0 })
        );
    }

    #[test]
    fn five_positive_unit_steps_give_the_textbook_p() {
        // differences 1,2,3,4,5 all positive: W = 15, and only the all-plus
        // and all-minus assignments of 32 reach |W| = 15
        let xs = [2.0, 4.0, 6.0, 8.0, 10.0];
        let ys = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = wilcoxon_signed_rank(&xs, &ys, 0.05).unwrap();
        assert_eq!(r.w, 15.0);
        assert_eq!(r.n_effective, 5);
        assert_eq!(r.method, PValueMethod::Exact);
        assert!((r.p_value - 0.0625).abs() < 1e-12);
        assert!(!r.significant);
    }

    #[test]
    fn swapping_arguments_negates_w_and_keeps_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(5..=14);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let a = wilcoxon_signed_rank(&xs, &ys, 0.05).unwrap();
            let b = wilcoxon_signed_rank(&ys, &xs, 0.05).unwrap();
            assert_eq!(a.w, -b.w);
            assert_eq!(a.p_value, b.p_value);
            assert_eq!(a.n_effective, b.n_effective);
        }
    }

    #[test]
    fn exact_p_matches_enumeration_oracle_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..100 {
            let n = rng.gen_range(5..=12);
            // quantized values force ties and zero differences regularly
            let xs: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-4i32..=4))).collect();
            let ys: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-4i32..=4))).collect();
            let effective = xs.iter().zip(&ys).filter(|(x, y)| x != y).count();
            if effective < MIN_EFFECTIVE_PAIRS {
                continue;
            }
            let r = wilcoxon_signed_rank(&xs, &ys, 0.05).unwrap();
            let (w_oracle, p_oracle) = oracle_two_sided_p(&xs, &ys);
            assert!((r.w - w_oracle).abs() < 1e-9, "case {case}: W mismatch");
            assert!(
                (r.p_value - p_oracle).abs() < 1e-12,
                "case {case}: p {} vs oracle {}",
                r.p_value,
                p_oracle
            );
        }
    }

    #[test]
    fn approximation_tracks_exact_at_the_crossover() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut checked = 0;
        while checked < 40 {
            let xs: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let ys: Vec<f64> = (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let Ok(exact) = wilcoxon_signed_rank(&xs, &ys, 0.05) else {
                continue;
            };
            assert_eq!(exact.method, PValueMethod::Exact);
            let diffs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
            let ranks = midranks(&diffs);
            let approx = normal_two_sided_p(&ranks, exact.w);
            assert!(
                (exact.p_value - approx).abs() <= 0.02,
                "exact {} vs approx {}",
                exact.p_value,
                approx
            );
            checked += 1;
        }
    }

    #[test]
    fn large_samples_use_the_normal_approximation() {
        let xs: Vec<f64> = (0..20).map(|i| f64::from(i) + 1.0).collect();
        let ys: Vec<f64> = (0..20).map(|i| f64::from(i) * 0.5).collect();
        let r = wilcoxon_signed_rank(&xs, &ys, 0.05).unwrap();
        assert_eq!(r.method, PValueMethod::NormalApprox);
        assert!(r.n_effective == 20);
        assert!(r.w <= 210.0 + 1e-9);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
        assert!(r.significant, "a uniform shift this large should be detected");
    }

    #[test]
    fn w_stays_within_the_rank_sum_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.gen_range(5..=25);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let Ok(r) = wilcoxon_signed_rank(&xs, &ys, 0.05) else {
                continue;
            };
            let bound = r.n_effective as f64 * (r.n_effective as f64 + 1.0) / 2.0;
            assert!(r.w.abs() <= bound + 1e-9);
            assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
