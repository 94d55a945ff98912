//! Seeded synthetic road-scene videos for tests, demos and the self-test.
//!
//! Frames show a sky-to-road gradient with a few coloured vehicles moving on
//! closed loops, plus uniform sensor noise. Motion is periodic so the
//! statistics of any span of `period` frames cover the whole clip.

use std::f64::consts::TAU;

use crate::frame_io::{encode_y4m, Colorspace, Frame};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps_num: u32,
    pub fps_den: u32,
    /// Frames per motion cycle.
    pub period: usize,
    /// Peak amplitude of the uniform sensor noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    /// 20 seconds at 10 fps, 128x96.
    fn default() -> Self {
        Self {
            width: 128,
            height: 96,
            frames: 200,
            fps_num: 10,
            fps_den: 1,
            period: 40,
            noise: 0.004,
            seed: 7,
        }
    }
}

struct Vehicle {
    color: [f64; 3],
    radius: f64,
    center: (f64, f64),
    orbit: (f64, f64),
    phase: f64,
}

fn vehicles(cfg: &SceneConfig) -> Vec<Vehicle> {
    let mut rng = SplitMix64::new(cfg.seed);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    (0..4)
        .map(|_| Vehicle {
            color: [
                rng.uniform(0.2, 0.85),
                rng.uniform(0.2, 0.85),
                rng.uniform(0.2, 0.85),
            ],
            radius: rng.uniform(0.06, 0.12) * h,
            center: (rng.uniform(0.3, 0.7) * w, rng.uniform(0.55, 0.75) * h),
            orbit: (rng.uniform(0.1, 0.25) * w, rng.uniform(0.03, 0.1) * h),
            phase: rng.uniform(0.0, TAU),
        })
        .collect()
}

/// Renders frame `t` without noise.
fn render(cfg: &SceneConfig, cars: &[Vehicle], t: usize) -> Vec<f64> {
    let (w, h) = (cfg.width, cfg.height);
    let angle = TAU * (t % cfg.period.max(1)) as f64 / cfg.period.max(1) as f64;
    let mut px = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let v = y as f64 / (h - 1).max(1) as f64;
        // Sky above the horizon at 40% height, road below.
        let base = if v < 0.4 {
            [0.55 + 0.2 * v, 0.65 + 0.15 * v, 0.85 - 0.1 * v]
        } else {
            let r = 0.35 + 0.15 * (v - 0.4);
            [r, r, r + 0.02]
        };
        for x in 0..w {
            let mut c = base;
            for car in cars {
                let cx = car.center.0 + car.orbit.0 * (angle + car.phase).cos();
                let cy = car.center.1 + car.orbit.1 * (angle + car.phase).sin();
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                // One-pixel anti-aliased edge.
                let cover = (car.radius + 0.5 - d).clamp(0.0, 1.0);
                for (v, paint) in c.iter_mut().zip(car.color) {
                    *v = *v * (1.0 - cover) + paint * cover;
                }
            }
            px.extend_from_slice(&c);
        }
    }
    px
}

pub fn scene_frames(cfg: &SceneConfig) -> Vec<Frame> {
    let cars = vehicles(cfg);
    let mut noise = SplitMix64::new(cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(1));
    (0..cfg.frames)
        .map(|t| {
            let px = render(cfg, &cars, t)
                .into_iter()
                .map(|v| (v + noise.uniform(-cfg.noise, cfg.noise)).clamp(0.0, 1.0))
                .collect();
            Frame::new(t, cfg.width, cfg.height, px).expect("scene frame is valid")
        })
        .collect()
}

/// The scene as a 4:4:4 Y4M stream.
pub fn scene_y4m(cfg: &SceneConfig) -> Vec<u8> {
    encode_y4m(
        &scene_frames(cfg),
        cfg.fps_num,
        cfg.fps_den,
        Colorspace::C444,
    )
}
