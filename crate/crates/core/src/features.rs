//! Multi-scale frame statistics.
//!
//! A feature vector has 28 entries. The first 27 come from a three-level box
//! pyramid (downsample factors 1, 2, 4). For each scale, and within it each
//! channel R, G, B, three statistics are stored in this order:
//!
//! 1. mean intensity
//! 2. population variance
//! 3. mean absolute difference between horizontally and vertically adjacent
//!    pixels (all pairs pooled)
//!
//! so entry `9 * scale_idx + 3 * channel + stat`. Entry 27 is [`stat_diff`]
//! against the previous frame, or 0 for the first frame of a sequence.

use std::io::Write;

use thiserror::Error;

use crate::frame_io::Frame;

pub const FEATURE_LEN: usize = 28;
pub const SCALES: [usize; 3] = [1, 2, 4];
pub const MIN_FRAME_SIDE: usize = 4;
pub const STAT_DIFF_INDEX: usize = 27;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("frame dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch {
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("frame {width}x{height} is smaller than {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}")]
    FrameTooSmall { width: usize, height: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; FEATURE_LEN] {
        &self.0
    }

    pub fn stat_diff(&self) -> f64 {
        self.0[STAT_DIFF_INDEX]
    }
}

fn sum_sq_dev(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// `Σ(a - mean(a))² - Σ(b - mean(b))²` over every intensity of both frames.
pub fn stat_diff(a: &Frame, b: &Frame) -> Result<f64, FeatureError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(FeatureError::DimensionMismatch {
            a: (a.width(), a.height()),
            b: (b.width(), b.height()),
        });
    }
    Ok(sum_sq_dev(a.pixels()) - sum_sq_dev(b.pixels()))
}

/// One channel plane, row-major.
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_frame(frame: &Frame, channel: usize) -> Self {
        Self {
            width: frame.width(),
            height: frame.height(),
            data: frame
                .pixels()
                .iter()
                .skip(channel)
                .step_by(3)
                .copied()
                .collect(),
        }
    }

    /// Averages `factor x factor` blocks; partial blocks at the right and
    /// bottom edges are dropped.
    fn downsample(&self, factor: usize) -> Plane {
        if factor == 1 {
            return Plane {
                width: self.width,
                height: self.height,
                data: self.data.clone(),
            };
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = 1.0 / (factor * factor) as f64;
        let mut data = Vec::with_capacity(w * h);
        for by in 0..h {
            for bx in 0..w {
                let mut acc = 0.0;
                for y in by * factor..(by + 1) * factor {
                    let row = &self.data
                        [y * self.width + bx * factor..y * self.width + (bx + 1) * factor];
                    acc += row.iter().sum::<f64>();
                }
                data.push(acc * norm);
            }
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }

    fn stats(&self) -> [f64; 3] {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        let var = self
            .data
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n;
        [mean, var, self.neighbor_diff()]
    }

    fn neighbor_diff(&self) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut total = 0.0;
        let mut pairs = 0usize;
        for y in 0..h {
            let row = &self.data[y * w..(y + 1) * w];
            for x in 0..w.saturating_sub(1) {
                total += (row[x + 1] - row[x]).abs();
            }
            pairs += w.saturating_sub(1);
            if y + 1 < h {
                let next = &self.data[(y + 1) * w..(y + 2) * w];
                total += row
                    .iter()
                    .zip(next)
                    .map(|(a, b)| (b - a).abs())
                    .sum::<f64>();
                pairs += w;
            }
        }
        if pairs == 0 {
            0.0
        } else {
            total / pairs as f64
        }
    }
}

pub fn extract_features(
    frame: &Frame,
    prev: Option<&Frame>,
) -> Result<FeatureVector, FeatureError> {
    if frame.width() < MIN_FRAME_SIDE || frame.height() < MIN_FRAME_SIDE {
        return Err(FeatureError::FrameTooSmall {
            width: frame.width(),
            height: frame.height(),
        });
    }
    let mut out = [0.0; FEATURE_LEN];
    for c in 0..3 {
        let plane = Plane::from_frame(frame, c);
        for (s, &factor) in SCALES.iter().enumerate() {
            let stats = plane.downsample(factor).stats();
            out[9 * s + 3 * c..9 * s + 3 * c + 3].copy_from_slice(&stats);
        }
    }
    out[STAT_DIFF_INDEX] = match prev {
        Some(p) => stat_diff(frame, p)?,
        None => 0.0,
    };
    Ok(FeatureVector(out))
}

/// Writes `index,f00,...,f27` rows with full round-trip precision.
pub fn write_features_csv<W: Write>(
    writer: W,
    rows: &[(usize, FeatureVector)],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["index".to_string()];
    header.extend((0..FEATURE_LEN).map(|i| format!("f{i:02}")));
    w.write_record(&header)?;
    for (index, fv) in rows {
        let mut record = vec![index.to_string()];
        record.extend(fv.0.iter().map(|v| format!("{v:?}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
