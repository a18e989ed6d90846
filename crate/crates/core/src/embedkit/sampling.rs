use crate::error::{invalid, Result};

/// `k` points evenly spaced over `[lo, hi]`, each rounded half away from zero.
pub fn linspace_round(lo: f64, hi: f64, k: usize) -> Vec<usize> {
    match k {
        0 => Vec::new(),
        1 => vec![lo.round() as usize],
        _ => (0..k)
            .map(|i| (lo + (hi - lo) * i as f64 / (k - 1) as f64).round() as usize)
            .collect(),
    }
}

/// Uniformly samples up to `max_frames` indices out of `total` source frames.
///
/// Returns every index when `total <= max_frames`; otherwise the rounded linspace over
/// `[0, total - 1]`, which is strictly increasing because the spacing is at least one.
pub fn sample_frames(total: usize, max_frames: usize) -> Result<Vec<usize>> {
    if total == 0 {
        return Err(invalid("cannot sample an empty video"));
    }
    if max_frames == 0 {
        return Err(invalid("max_frames must be at least 1"));
    }
    if total <= max_frames {
        return Ok((0..total).collect());
    }
    Ok(linspace_round(0.0, (total - 1) as f64, max_frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(sample_frames(4, 8).unwrap(), vec![0, 1, 2, 3]);
        // round(linspace(0, 9, 5)) = round([0, 2.25, 4.5, 6.75, 9]), 4.5 -> 5
        assert_eq!(sample_frames(10, 5).unwrap(), vec![0, 2, 5, 7, 9]);
        assert_eq!(sample_frames(300, 300).unwrap(), (0..300).collect::<Vec<_>>());
        assert!(sample_frames(0, 3).is_err());
    }

    proptest! {
        #[test]
        fn length_order_and_endpoints(total in 1usize..2000, n in 1usize..400) {
            let idx = sample_frames(total, n).unwrap();
            prop_assert_eq!(idx.len(), total.min(n));
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(*idx.last().unwrap() < total);
            if total >= 2 && n >= 2 {
                prop_assert_eq!(idx[0], 0);
                prop_assert_eq!(*idx.last().unwrap(), total - 1);
            }
        }
    }
}
