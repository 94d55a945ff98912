#![allow(dead_code)]

use advfilter::pipeline::{DetectionRecord, Truth};
use advfilter::synth::SceneConfig;

/// A small scene for tests that do not need the full 200-frame clip.
pub fn small_scene(frames: usize) -> SceneConfig {
    SceneConfig {
        width: 48,
        height: 36,
        frames,
        period: 20,
        ..SceneConfig::default()
    }
}

/// Records with the 77 / 13 / 109 / 0 outcome split over 199 frames.
pub fn figure_records() -> Vec<DetectionRecord> {
    let mut out = Vec::new();
    let mut push = |truth: Truth, flagged: bool, n: usize| {
        for _ in 0..n {
            let i = out.len();
            out.push(DetectionRecord {
                frame_index: i,
                score: if flagged { 0.7 } else { 0.45 } + 0.0001 * i as f64,
                threshold: 0.6,
                flagged,
                truth,
                epsilon: if truth == Truth::Attacked {
                    Some(0.05)
                } else {
                    None
                },
            });
        }
    };
    push(Truth::Clean, false, 60);
    push(Truth::Attacked, true, 77);
    push(Truth::Clean, true, 13);
    push(Truth::Clean, false, 49);
    out
}
