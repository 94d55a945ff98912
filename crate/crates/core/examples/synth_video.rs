//! Writes the seeded synthetic road scene as a Y4M file.
//!
//! cargo run --example synth_video -- fixture.y4m [frames] [seed]

use advfilter::synth::{scene_y4m, SceneConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "fixture.y4m".into());
    let mut cfg = SceneConfig::default();
    if let Some(n) = args.next() {
        cfg.frames = n.parse().expect("frames must be an integer");
    }
    if let Some(s) = args.next() {
        cfg.seed = s.parse().expect("seed must be an integer");
    }
    std::fs::write(&path, scene_y4m(&cfg)).expect("write video");
    eprintln!("wrote {} frames ({}x{}) to {path}", cfg.frames, cfg.width, cfg.height);
}
