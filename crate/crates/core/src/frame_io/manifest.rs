//! `manifest.json`: the index of a frame dataset.
//!
//! ```json
//! {"source": str, "fps_num": int, "fps_den": int, "width": int, "height": int,
//!  "frames": [{"index": int, "path": str, "role": "clean"|"adversarial", "epsilon": float}]}
//! ```
//!
//! `epsilon` is present exactly on adversarial entries. Paths are relative to
//! the directory holding the manifest. Unknown keys are rejected.

use std::cmp::Ordering;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{FrameIoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Clean,
    Adversarial,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Clean => "clean",
            Role::Adversarial => "adversarial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub path: String,
    pub role: Role,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl ManifestEntry {
    pub fn clean(index: usize, path: impl Into<String>) -> Self {
        Self {
            index,
            path: path.into(),
            role: Role::Clean,
            epsilon: None,
        }
    }

    pub fn adversarial(index: usize, path: impl Into<String>, epsilon: f64) -> Self {
        Self {
            index,
            path: path.into(),
            role: Role::Adversarial,
            epsilon: Some(epsilon),
        }
    }

    /// Manifest order: index, then role (clean first), then epsilon.
    pub fn sort_key_cmp(&self, other: &Self) -> Ordering {
        self.index
            .cmp(&other.index)
            .then(self.role.cmp(&other.role))
            .then_with(|| {
                self.epsilon
                    .unwrap_or(0.0)
                    .total_cmp(&other.epsilon.unwrap_or(0.0))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetManifest {
    pub source: String,
    pub fps_num: u32,
    pub fps_den: u32,
    pub width: usize,
    pub height: usize,
    #[serde(rename = "frames")]
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Number of distinct frame indices.
    pub fn frame_count(&self) -> usize {
        let mut count = 0;
        let mut last = None;
        for e in &self.entries {
            if last != Some(e.index) {
                count += 1;
                last = Some(e.index);
            }
        }
        count
    }

    pub fn clean_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.role == Role::Clean)
    }

    /// Same header, different entries.
    pub fn with_entries(&self, entries: Vec<ManifestEntry>) -> Self {
        Self {
            entries,
            ..self.clone()
        }
    }

    /// Checks the ordering and epsilon/role invariants.
    pub fn validate(&self) -> Result<()> {
        if self.fps_num == 0 || self.fps_den == 0 {
            return Err(violation("fps_num", "frame rate must be positive"));
        }
        for (i, e) in self.entries.iter().enumerate() {
            match (e.role, e.epsilon) {
                (Role::Adversarial, None) => {
                    return Err(violation(
                        format!("frames[{i}].epsilon"),
                        "required for adversarial entries",
                    ))
                }
                (Role::Clean, Some(_)) => {
                    return Err(violation(
                        format!("frames[{i}].epsilon"),
                        "not allowed on clean entries",
                    ))
                }
                (_, Some(eps)) if !eps.is_finite() => {
                    return Err(violation(format!("frames[{i}].epsilon"), "must be finite"))
                }
                _ => {}
            }
            if i > 0 && self.entries[i - 1].sort_key_cmp(e) != Ordering::Less {
                return Err(violation(
                    format!("frames[{i}]"),
                    "entries must be strictly sorted by index, role, epsilon",
                ));
            }
        }
        Ok(())
    }
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> FrameIoError {
    FrameIoError::SchemaViolation {
        path: path.into(),
        message: message.into(),
    }
}

fn reject_unknown(obj: &Map<String, Value>, allowed: &[&str], prefix: &str) -> Result<()> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            let path = if prefix.is_empty() {
                key.clone()
            } else {
                format!("{prefix}.{key}")
            };
            return Err(violation(path, "unknown key"));
        }
    }
    Ok(())
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, prefix: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| {
        let path = if prefix.is_empty() {
            key.to_string()
        } else {
            format!("{prefix}.{key}")
        };
        violation(path, "missing key")
    })
}

fn as_uint(v: &Value, path: &str) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| violation(path, "expected a nonnegative integer"))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| violation(path, "expected a string"))
}

pub fn manifest_from_json(text: &str) -> Result<DatasetManifest> {
    let root: Value = serde_json::from_str(text).map_err(|e| violation("$", e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| violation("$", "expected an object"))?;
    reject_unknown(
        obj,
        &["source", "fps_num", "fps_den", "width", "height", "frames"],
        "",
    )?;
    let source = as_str(field(obj, "source", "")?, "source")?.to_string();
    let to_u32 = |key: &str| -> Result<u32> {
        let v = as_uint(field(obj, key, "")?, key)?;
        u32::try_from(v).map_err(|_| violation(key, "out of range"))
    };
    let fps_num = to_u32("fps_num")?;
    let fps_den = to_u32("fps_den")?;
    let width = to_u32("width")? as usize;
    let height = to_u32("height")? as usize;
    let frames = field(obj, "frames", "")?
        .as_array()
        .ok_or_else(|| violation("frames", "expected an array"))?;
    let mut entries = Vec::with_capacity(frames.len());
    for (i, item) in frames.iter().enumerate() {
        let prefix = format!("frames[{i}]");
        let e = item
            .as_object()
            .ok_or_else(|| violation(&prefix, "expected an object"))?;
        reject_unknown(e, &["index", "path", "role", "epsilon"], &prefix)?;
        let index = as_uint(field(e, "index", &prefix)?, &format!("{prefix}.index"))? as usize;
        let path = as_str(field(e, "path", &prefix)?, &format!("{prefix}.path"))?.to_string();
        let role = match as_str(field(e, "role", &prefix)?, &format!("{prefix}.role"))? {
            "clean" => Role::Clean,
            "adversarial" => Role::Adversarial,
            other => {
                return Err(violation(
                    format!("{prefix}.role"),
                    format!("unknown role `{other}`"),
                ))
            }
        };
        let epsilon = match e.get("epsilon") {
            None => None,
            Some(v) => Some(
                v.as_f64()
                    .ok_or_else(|| violation(format!("{prefix}.epsilon"), "expected a number"))?,
            ),
        };
        entries.push(ManifestEntry {
            index,
            path,
            role,
            epsilon,
        });
    }
    let manifest = DatasetManifest {
        source,
        fps_num,
        fps_den,
        width,
        height,
        entries,
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn manifest_to_json(manifest: &DatasetManifest) -> String {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    text
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| FrameIoError::io(parent, e))?;
    }
    std::fs::write(path, manifest_to_json(manifest)).map_err(|e| FrameIoError::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| FrameIoError::io(path, e))?;
    manifest_from_json(&text)
}
