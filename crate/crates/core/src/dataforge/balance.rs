use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use numkit::SplitMix64;

use super::types::Conversation;
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    /// Ascending upper edges in seconds; bucket `i` is `(edges[i-1], edges[i]]` with an implicit 0.
    pub edges_s: Vec<f64>,
    /// Allowed max/min ratio of per-bucket counts among non-empty buckets.
    pub ratio: f64,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self { edges_s: vec![120.0, 600.0, 1200.0, 2400.0, 3600.0], ratio: 1.1, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub counts_before: Vec<usize>,
    pub counts_after: Vec<usize>,
    pub empty_buckets: Vec<usize>,
}

pub fn bucket_of(duration_s: f64, edges_s: &[f64]) -> Option<usize> {
    if !(duration_s > 0.0) {
        return None;
    }
    edges_s.iter().position(|&e| duration_s <= e)
}

/// Down-samples each bucket to `floor(min · ratio)` conversations (min over
/// non-empty buckets) with a seeded choice; survivors keep their input order.
pub fn balance(conversations: Vec<Conversation>, cfg: &BalanceConfig) -> Result<(Vec<Conversation>, BalanceReport)> {
    if cfg.edges_s.is_empty() || cfg.edges_s.windows(2).any(|w| w[0] >= w[1]) || !(cfg.edges_s[0] > 0.0) {
        return Err(invalid("bucket edges must be positive and strictly ascending"));
    }
    if !(cfg.ratio >= 1.0) {
        return Err(invalid("ratio must be at least 1"));
    }
    let nb = cfg.edges_s.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for (i, c) in conversations.iter().enumerate() {
        let b = bucket_of(c.duration_s, &cfg.edges_s).ok_or_else(|| {
            invalid(format!("{}: duration {} s outside the bucket range", c.video_id, c.duration_s))
        })?;
        members[b].push(i);
    }
    let counts_before: Vec<usize> = members.iter().map(Vec::len).collect();
    let empty_buckets: Vec<usize> = (0..nb).filter(|&b| counts_before[b] == 0).collect();
    for &b in &empty_buckets {
        log::warn!("length bucket {b} is empty");
    }
    let Some(min) = counts_before.iter().copied().filter(|&c| c > 0).min() else {
        return Ok((Vec::new(), BalanceReport { counts_after: counts_before.clone(), counts_before, empty_buckets }));
    };
    let cap = ((min as f64 * cfg.ratio).floor() as usize).max(min);
    let mut keep = vec![false; conversations.len()];
    let mut rng = SplitMix64::derive(cfg.seed, "balance");
    for m in &members {
        if m.len() <= cap {
            m.iter().for_each(|&i| keep[i] = true);
        } else {
            sample(&mut rng, m.len(), cap).into_iter().for_each(|j| keep[m[j]] = true);
        }
    }
    let counts_after = counts_before.iter().map(|&c| c.min(cap)).collect();
    let kept = conversations.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect();
    Ok((kept, BalanceReport { counts_before, counts_after, empty_buckets }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convs(short: usize, long: usize) -> Vec<Conversation> {
        (0..short)
            .map(|i| (format!("s{i}"), 60.0))
            .chain((0..long).map(|i| (format!("l{i}"), 1800.0)))
            .map(|(video_id, duration_s)| Conversation { video_id, duration_s, qa: vec![] })
            .collect()
    }

    fn cfg(ratio: f64, seed: u64) -> BalanceConfig {
        BalanceConfig { edges_s: vec![120.0, 3600.0], ratio, seed }
    }

    #[test]
    fn down_samples_to_the_smallest_bucket() {
        let (kept, rep) = balance(convs(100, 50), &cfg(1.0, 0)).unwrap();
        assert_eq!(rep.counts_after, vec![50, 50]);
        assert_eq!(kept.len(), 100);
        let (_, rep) = balance(convs(100, 50), &cfg(1.1, 0)).unwrap();
        assert_eq!(rep.counts_after, vec![55, 50]);
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let input = convs(20, 20);
        let (kept, _) = balance(input.clone(), &cfg(1.1, 3)).unwrap();
        assert_eq!(kept, input);
    }

    #[test]
    fn seed_changes_membership_not_counts() {
        let ids = |seed| balance(convs(100, 50), &cfg(1.0, seed)).unwrap().0.into_iter().map(|c| c.video_id).collect::<Vec<_>>();
        assert_eq!(ids(1), ids(1));
        assert_ne!(ids(1), ids(2));
        assert_eq!(ids(1).len(), ids(2).len());
    }

    #[test]
    fn empty_bucket_is_reported_and_out_of_range_fails() {
        let c = BalanceConfig { edges_s: vec![120.0, 600.0, 3600.0], ratio: 1.1, seed: 0 };
        let (_, rep) = balance(convs(3, 4), &c).unwrap();
        assert_eq!(rep.empty_buckets, vec![1]);
        let mut bad = convs(1, 0);
        bad[0].duration_s = 4000.0;
        assert!(balance(bad, &c).is_err());
    }
}
