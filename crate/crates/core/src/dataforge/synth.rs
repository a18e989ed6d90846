//! Synthetic narrated videos in the `#C C <verb> <object>` style.

use rand::seq::IndexedRandom;
use rand::Rng;

use numkit::SplitMix64;

use super::types::{Clip, NarratedVideo};

const ACTIONS: [(&str, &[&str]); 8] = [
    ("picks up", &["a knife", "the cup", "a sponge", "the phone", "a towel"]),
    ("opens", &["the fridge", "the drawer", "the door", "a jar"]),
    ("washes", &["a plate", "the pan", "his hands", "a bowl"]),
    ("holds", &["a spoon", "the lid", "a bottle"]),
    ("cuts", &["an onion", "the bread", "a tomato"]),
    ("moves", &["the chair", "a box", "the laptop"]),
    ("closes", &["the tap", "the window", "the cabinet"]),
    ("carries", &["a bag", "the basket", "a tray"]),
];
const PLACED: [&str; 5] = ["the cup", "a plate", "the keys", "a book", "the bowl"];
const PLACES: [&str; 5] = ["on the table", "in the sink", "on the shelf", "into the drawer", "on the counter"];

/// Duration ranges in seconds the generator draws from, one per default length bucket.
pub const SYNTH_DURATIONS: [(f64, f64); 5] =
    [(30.0, 120.0), (121.0, 600.0), (601.0, 1200.0), (1201.0, 2400.0), (2401.0, 3600.0)];

pub fn synth_narration(rng: &mut impl Rng) -> String {
    if rng.random_bool(0.3) {
        let obj = PLACED.choose(rng).expect("non-empty");
        let place = PLACES.choose(rng).expect("non-empty");
        format!("#C C puts {obj} {place}")
    } else {
        let (verb, objs) = ACTIONS.choose(rng).expect("non-empty");
        format!("#C C {verb} {}", objs.choose(rng).expect("non-empty"))
    }
}

/// Generates `count` videos with durations spread over [`SYNTH_DURATIONS`] and
/// chronologically placed clips of 0.5 to 12 seconds.
pub fn synth_narrated_videos(count: usize, seed: u64) -> Vec<NarratedVideo> {
    let mut rng = SplitMix64::derive(seed, "synth-narrations");
    (0..count)
        .map(|v| {
            let (lo, hi) = SYNTH_DURATIONS[rng.random_range(0..SYNTH_DURATIONS.len())];
            let duration_s = rng.random_range(lo..hi).round();
            let mut clips = Vec::new();
            let mut t = rng.random_range(0.0..5.0);
            while clips.len() < 40 {
                let len = if rng.random_bool(0.1) { 0.5 } else { rng.random_range(2.0..12.0) };
                let end = t + len;
                if end > duration_s {
                    break;
                }
                clips.push(Clip {
                    clip_id: format!("c{:03}", clips.len()),
                    start_s: t,
                    end_s: end,
                    narration: synth_narration(&mut rng),
                });
                t = end + rng.random_range(0.0..duration_s / 40.0);
            }
            NarratedVideo { video_id: format!("synth-{seed}-{v:04}"), duration_s, clips }
        })
        .collect()
}
