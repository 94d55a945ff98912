//! Frame containers and the on-disk dataset layout.
//!
//! Videos enter as YUV4MPEG2 streams and are stored frame by frame as binary
//! PPM files next to a `manifest.json` that records every clean and
//! adversarial frame of the dataset.

mod manifest;
mod ppm;
mod y4m;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use manifest::{load_manifest, manifest_from_json, manifest_to_json, write_manifest};
pub use manifest::{DatasetManifest, ManifestEntry, Role};
pub use ppm::{read_ppm, write_ppm};
pub use y4m::{encode_y4m, parse_y4m, Colorspace, Y4mDecoder, Y4mHeader};

/// Name of the manifest file inside a dataset directory.
pub const MANIFEST_FILE: &str = "manifest.json";
/// Subdirectory holding clean frames.
pub const CLEAN_DIR: &str = "frames";
/// Subdirectory holding adversarial frames.
pub const ADVERSARIAL_DIR: &str = "adversarial";

#[derive(Debug, Error)]
pub enum FrameIoError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated frame {frame}: expected {expected} payload bytes, found {found}")]
    TruncatedFrame {
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("unsupported colorspace `{0}`")]
    UnsupportedColorspace(String),
    #[error("unsupported maxval {0} (only 255 is accepted)")]
    BadMaxval(u32),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    TruncatedPixelData { expected: usize, found: usize },
    #[error("schema violation at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FrameIoError {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        FrameIoError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = FrameIoError> = std::result::Result<T, E>;

/// One decoded RGB image.
///
/// Pixels are stored row-major with the three channels interleaved, as
/// intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    index: usize,
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(index: usize, width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(FrameIoError::InvalidFrame(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| FrameIoError::InvalidFrame("dimensions overflow".into()))?;
        if pixels.len() != expected {
            return Err(FrameIoError::InvalidFrame(format!(
                "expected {expected} intensities for {width}x{height}, got {}",
                pixels.len()
            )));
        }
        if let Some(pos) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(FrameIoError::InvalidFrame(format!(
                "intensity {} at offset {pos} outside [0, 1]",
                pixels[pos]
            )));
        }
        Ok(Self {
            index,
            width,
            height,
            pixels,
        })
    }

    /// A frame with every channel of every pixel set to `value` (clamped to `[0, 1]`).
    pub fn filled(index: usize, width: usize, height: usize, value: f64) -> Result<Self> {
        let v = value.clamp(0.0, 1.0);
        Self::new(index, width, height, vec![v; width * height * 3])
    }

    /// Builds a frame from `f(x, y, channel)`; results are clamped to `[0, 1]`.
    pub fn from_fn(
        index: usize,
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    pixels.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(index, width, height, pixels)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.pixels[(y * self.width + x) * 3 + channel]
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    /// Applies `f` to every intensity, clamping the result back into `[0, 1]`.
    pub(crate) fn map_pixels(&self, mut f: impl FnMut(usize, f64) -> f64) -> Frame {
        let pixels = self
            .pixels
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i, v).clamp(0.0, 1.0))
            .collect();
        Frame {
            index: self.index,
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

/// `0.05` → `"0p05"`.
pub fn epsilon_tag(epsilon: f64) -> String {
    format!("{epsilon}").replace('.', "p")
}

pub fn clean_frame_name(index: usize) -> String {
    format!("frame_{index:06}.ppm")
}

pub fn adversarial_frame_name(index: usize, epsilon: f64) -> String {
    format!("frame_{index:06}_eps{}.ppm", epsilon_tag(epsilon))
}

/// Relative path of a manifest entry's frame file for `role`.
pub fn frame_relative_path(index: usize, role: Role, epsilon: Option<f64>) -> String {
    match (role, epsilon) {
        (Role::Adversarial, Some(eps)) => {
            format!("{ADVERSARIAL_DIR}/{}", adversarial_frame_name(index, eps))
        }
        _ => format!("{CLEAN_DIR}/{}", clean_frame_name(index)),
    }
}

pub fn read_frame_file(path: &Path, index: usize) -> Result<Frame> {
    let bytes = std::fs::read(path).map_err(|e| FrameIoError::io(path, e))?;
    Ok(read_ppm(&bytes)?.with_index(index))
}

pub fn write_frame_file(path: &Path, frame: &Frame) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| FrameIoError::io(parent, e))?;
    }
    std::fs::write(path, write_ppm(frame)).map_err(|e| FrameIoError::io(path, e))
}

/// Loads the frame referenced by `entry`, resolving its path against `base_dir`.
pub fn load_entry_frame(base_dir: &Path, entry: &ManifestEntry) -> Result<Frame> {
    read_frame_file(&base_dir.join(&entry.path), entry.index)
}

/// Decodes a Y4M stream and stores it as a clean frame dataset under `out_dir`.
pub fn extract_dataset(y4m_bytes: &[u8], source: &str, out_dir: &Path) -> Result<DatasetManifest> {
    let (header, frames) = parse_y4m(y4m_bytes)?;
    let mut entries = Vec::with_capacity(frames.len());
    for frame in &frames {
        let rel = frame_relative_path(frame.index(), Role::Clean, None);
        write_frame_file(&out_dir.join(&rel), frame)?;
        entries.push(ManifestEntry::clean(frame.index(), rel));
    }
    let manifest = DatasetManifest {
        source: source.to_string(),
        fps_num: header.fps_num,
        fps_den: header.fps_den,
        width: header.width,
        height: header.height,
        entries,
    };
    write_manifest(&manifest, &out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
