//! FGSM perturbations of frames and datasets.
//!
//! The loss gradient is taken at the 64x64 model resolution with the model's
//! own clean prediction as the label. Its sign is carried back to the frame
//! by nearest-neighbour lookup, so every frame pixel moves by exactly `-eps`,
//! `0` or `+eps` before clipping.

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::frame_io::{
    self, frame_relative_path, load_entry_frame, write_frame_file, DatasetManifest, Frame,
    FrameIoError, ManifestEntry, Role,
};
use crate::parallel;
use crate::rng::SplitMix64;
use crate::tinynet::{self, ModelInput, ModelParams, INPUT_SIZE};

/// Perturbation levels used throughout the evaluation.
pub const DEFAULT_EPSILONS: [f64; 5] = [0.01, 0.02, 0.05, 0.1, 0.2];
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack config: {0}")]
    InvalidConfig(String),
    #[error("epsilon must be finite and nonnegative, got {0}")]
    InvalidEpsilon(f64),
    #[error("manifest entry for frame {index} is not clean")]
    NotClean { index: usize },
    #[error("no adversarial entry for frame {index} at epsilon {epsilon}")]
    MissingAdversarial { index: usize, epsilon: f64 },
    #[error(transparent)]
    Io(#[from] FrameIoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub epsilons: Vec<f64>,
    pub clip_min: f64,
    pub clip_max: f64,
    /// Model seed.
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilons: DEFAULT_EPSILONS.to_vec(),
            clip_min: 0.0,
            clip_max: 1.0,
            seed: DEFAULT_SEED,
        }
    }
}

impl AttackConfig {
    pub fn with_epsilons(epsilons: Vec<f64>, seed: u64) -> Self {
        Self {
            epsilons,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        for (i, &eps) in self.epsilons.iter().enumerate() {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(AttackError::InvalidConfig(format!(
                    "epsilon {eps} outside (0, 1]"
                )));
            }
            if i > 0 && eps <= self.epsilons[i - 1] {
                return Err(AttackError::InvalidConfig(
                    "epsilons must be strictly increasing".into(),
                ));
            }
        }
        if self.clip_min.partial_cmp(&self.clip_max) != Some(std::cmp::Ordering::Less) {
            return Err(AttackError::InvalidConfig(
                "clip_min must be below clip_max".into(),
            ));
        }
        Ok(())
    }
}

/// Per-intensity gradient signs at frame resolution, in `{-1, 0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMap {
    pub width: usize,
    pub height: usize,
    pub signs: Vec<i8>,
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Sign of the input gradient of the loss at the model's own clean label,
/// upsampled to the frame by nearest neighbour.
pub fn gradient_sign(params: &ModelParams, frame: &Frame) -> SignMap {
    let input = ModelInput::from_frame(frame);
    let label = tinynet::forward(params, &input).label;
    let (_, grad) = tinynet::loss_and_input_grad(params, &input, label)
        .expect("argmax label is always in range");
    let (w, h) = (frame.width(), frame.height());
    let mx: Vec<usize> = (0..w).map(|x| x * INPUT_SIZE / w).collect();
    let mut signs = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let my = y * INPUT_SIZE / h;
        for &mxx in &mx {
            for c in 0..3 {
                signs.push(sign(grad[(c * INPUT_SIZE + my) * INPUT_SIZE + mxx]));
            }
        }
    }
    SignMap {
        width: w,
        height: h,
        signs,
    }
}

/// `clamp(x + eps * sign, clip_min, clip_max)` for every intensity.
pub fn apply_sign(frame: &Frame, signs: &SignMap, epsilon: f64, clip: (f64, f64)) -> Frame {
    assert_eq!(
        (frame.width(), frame.height()),
        (signs.width, signs.height),
        "sign map does not match frame"
    );
    frame.map_pixels(|i, v| (v + epsilon * signs.signs[i] as f64).clamp(clip.0, clip.1))
}

pub fn fgsm(params: &ModelParams, frame: &Frame, epsilon: f64) -> Result<Frame, AttackError> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(AttackError::InvalidEpsilon(epsilon));
    }
    if epsilon == 0.0 {
        return Ok(frame.clone());
    }
    let signs = gradient_sign(params, frame);
    Ok(apply_sign(frame, &signs, epsilon, (0.0, 1.0)))
}

/// Attacks every frame at every epsilon. Output `[i][k]` is frame `i` at
/// `epsilons[k]`.
pub fn attack_frames(
    params: &ModelParams,
    frames: &[Frame],
    epsilons: &[f64],
    workers: usize,
) -> Vec<Vec<Frame>> {
    parallel::install(workers, || {
        frames
            .par_iter()
            .map(|f| {
                let signs = gradient_sign(params, f);
                epsilons
                    .iter()
                    .map(|&eps| apply_sign(f, &signs, eps, (0.0, 1.0)))
                    .collect()
            })
            .collect()
    })
}

/// Writes one adversarial PPM per clean frame and epsilon under
/// `out_dir/adversarial/` and returns the combined, sorted manifest.
///
/// Clean frames are read relative to `src_dir`; when `out_dir` differs they
/// are copied across so the returned manifest is self-contained.
pub fn attack_dataset(
    manifest: &DatasetManifest,
    src_dir: &Path,
    out_dir: &Path,
    config: &AttackConfig,
    workers: usize,
) -> Result<DatasetManifest, AttackError> {
    config.validate()?;
    if let Some(e) = manifest.entries.iter().find(|e| e.role != Role::Clean) {
        return Err(AttackError::NotClean { index: e.index });
    }
    let params = ModelParams::init(config.seed);
    let same_dir = same_directory(src_dir, out_dir);
    let clip = (config.clip_min, config.clip_max);
    let mut entries = Vec::with_capacity(manifest.entries.len() * (1 + config.epsilons.len()));
    let chunk = workers.max(1) * 4;

    for batch in manifest.entries.chunks(chunk) {
        let computed: Vec<Result<(Frame, Vec<Frame>), FrameIoError>> =
            parallel::install(workers, || {
                batch
                    .par_iter()
                    .map(|entry| {
                        let frame = load_entry_frame(src_dir, entry)?;
                        let adv = if config.epsilons.is_empty() {
                            Vec::new()
                        } else {
                            let signs = gradient_sign(&params, &frame);
                            config
                                .epsilons
                                .iter()
                                .map(|&eps| apply_sign(&frame, &signs, eps, clip))
                                .collect()
                        };
                        Ok((frame, adv))
                    })
                    .collect()
            });
        // Files are written sequentially in index order.
        for (entry, result) in batch.iter().zip(computed) {
            let (frame, adversarial) = result?;
            if !same_dir {
                write_frame_file(&out_dir.join(&entry.path), &frame)?;
            }
            entries.push(entry.clone());
            for (&eps, adv) in config.epsilons.iter().zip(&adversarial) {
                let rel = frame_relative_path(entry.index, Role::Adversarial, Some(eps));
                write_frame_file(&out_dir.join(&rel), adv)?;
                entries.push(ManifestEntry::adversarial(entry.index, rel, eps));
            }
        }
    }
    entries.sort_by(|a, b| a.sort_key_cmp(b));
    let out = manifest.with_entries(entries);
    frame_io::write_manifest(&out, &out_dir.join(frame_io::MANIFEST_FILE))?;
    Ok(out)
}

fn same_directory(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Builds a single-entry-per-frame stream from an attacked dataset: a seeded
/// `attack_fraction` of the frame indices is replaced by adversarial entries,
/// cycling through `epsilons` in selection order.
pub fn mixed_stream(
    full: &DatasetManifest,
    attack_fraction: f64,
    epsilons: &[f64],
    seed: u64,
) -> Result<DatasetManifest, AttackError> {
    if !(0.0..=1.0).contains(&attack_fraction) {
        return Err(AttackError::InvalidConfig(format!(
            "attack fraction {attack_fraction} outside [0, 1]"
        )));
    }
    let clean: Vec<&ManifestEntry> = full.clean_entries().collect();
    let plan = attack_plan(clean.len(), attack_fraction, epsilons, seed);
    let mut entries = Vec::with_capacity(clean.len());
    for (pos, entry) in clean.iter().enumerate() {
        match plan[pos] {
            None => entries.push((*entry).clone()),
            Some(eps) => {
                let adv = full
                    .entries
                    .iter()
                    .find(|e| {
                        e.index == entry.index
                            && e.role == Role::Adversarial
                            && e.epsilon == Some(eps)
                    })
                    .ok_or(AttackError::MissingAdversarial {
                        index: entry.index,
                        epsilon: eps,
                    })?;
                entries.push(adv.clone());
            }
        }
    }
    Ok(full.with_entries(entries))
}

/// For each of `n` positions, the epsilon it is attacked at (if any).
pub fn attack_plan(
    n: usize,
    attack_fraction: f64,
    epsilons: &[f64],
    seed: u64,
) -> Vec<Option<f64>> {
    let mut plan = vec![None; n];
    if epsilons.is_empty() || n == 0 {
        return plan;
    }
    let k = ((attack_fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(seed);
    for i in 0..k {
        let j = i + rng.below(n - i);
        order.swap(i, j);
        plan[order[i]] = Some(epsilons[i % epsilons.len()]);
    }
    plan
}
