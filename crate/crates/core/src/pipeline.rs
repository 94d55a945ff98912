//! Ingest → features → forest → verdicts.
//!
//! Batch mode fits the forest on every frame of a dataset and thresholds at
//! the contamination quantile of those same scores. Stream mode fits on a
//! warmup span presumed clean, then scores each later frame as it arrives.
//!
//! Frame `i` pairs with frame `i - 1` (in manifest or arrival order) for the
//! temporal feature. Ingest is therefore ordered, while feature extraction and
//! scoring fan out over a fixed worker pool and are reassembled in order.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::features::{extract_features, FeatureError, FeatureVector};
use crate::frame_io::{self, DatasetManifest, Frame, FrameIoError, ManifestEntry, Role};
use crate::isoforest::{self, ForestParams, IsoForest, IsoForestError};
use crate::parallel;
use crate::rng::SplitMix64;

pub const DEFAULT_WARMUP: usize = 50;
pub const DETECTIONS_FILE: &str = "detections.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dataset has no frames")]
    EmptyDataset,
    #[error("warmup of {0} frames is too short (need at least 2)")]
    WarmupTooShort(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("record {position} (frame {record}) does not match manifest entry for frame {entry}")]
    Misaligned {
        position: usize,
        record: usize,
        entry: usize,
    },
    #[error("detections file: {0}")]
    Detections(String),
    #[error(transparent)]
    Io(#[from] FrameIoError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Forest(#[from] IsoForestError),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    Attacked,
    Clean,
    Unknown,
}

impl Truth {
    pub fn from_role(role: Role) -> Self {
        match role {
            Role::Clean => Truth::Clean,
            Role::Adversarial => Truth::Attacked,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Truth::Attacked => "attacked",
            Truth::Clean => "clean",
            Truth::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "attacked" => Some(Truth::Attacked),
            "clean" => Some(Truth::Clean),
            "unknown" => Some(Truth::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame_index: usize,
    pub score: f64,
    pub threshold: f64,
    /// `score > threshold`, except for stream warmup frames which are never flagged.
    pub flagged: bool,
    pub truth: Truth,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Batch,
    Stream,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "batch" => Ok(Mode::Batch),
            "stream" => Ok(Mode::Stream),
            other => Err(format!("unknown mode `{other}` (batch|stream)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub mode: Mode,
    pub warmup: usize,
    pub refit_every: Option<usize>,
    pub workers: usize,
    pub contamination: f64,
    pub seed: u64,
    pub trees: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Batch,
            warmup: DEFAULT_WARMUP,
            refit_every: None,
            workers: 1,
            contamination: isoforest::DEFAULT_CONTAMINATION,
            seed: 42,
            trees: isoforest::DEFAULT_TREES,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(PipelineError::InvalidConfig(
                "workers must be at least 1".into(),
            ));
        }
        if self.mode == Mode::Stream && self.warmup < 2 {
            return Err(PipelineError::WarmupTooShort(self.warmup));
        }
        if self.refit_every == Some(0) {
            return Err(PipelineError::InvalidConfig(
                "refit interval must be positive".into(),
            ));
        }
        self.forest_params(self.seed).validate()?;
        Ok(())
    }

    fn forest_params(&self, seed: u64) -> ForestParams {
        ForestParams {
            trees: self.trees,
            max_samples: isoforest::DEFAULT_MAX_SAMPLES,
            contamination: self.contamination,
            seed,
        }
    }
}

/// Everything a batch run produces.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub records: Vec<DetectionRecord>,
    pub features: Vec<(usize, FeatureVector)>,
    pub forest: IsoForest,
}

/// Features for `frames`, each paired with its predecessor in the slice
/// (the first with `prev`).
fn features_for(frames: &[Frame], prev: Option<&Frame>) -> Result<Vec<FeatureVector>> {
    (0..frames.len())
        .into_par_iter()
        .map(|i| {
            let p = if i == 0 { prev } else { Some(&frames[i - 1]) };
            Ok(extract_features(&frames[i], p)?)
        })
        .collect()
}

/// Feature vectors for an in-memory sequence, computed on `workers` threads.
pub fn extract_sequence(frames: &[Frame], workers: usize) -> Result<Vec<FeatureVector>> {
    parallel::install(workers, || features_for(frames, None))
}

/// Feature vectors for every manifest entry, in manifest order.
pub fn extract_manifest(
    manifest: &DatasetManifest,
    base_dir: &Path,
    workers: usize,
) -> Result<Vec<FeatureVector>> {
    let chunk = workers.max(1) * 8;
    let mut out = Vec::with_capacity(manifest.entries.len());
    let mut prev: Option<Frame> = None;
    for batch in manifest.entries.chunks(chunk) {
        let frames: Vec<Frame> = parallel::install(workers, || {
            batch
                .par_iter()
                .map(|e| frame_io::load_entry_frame(base_dir, e))
                .collect::<std::result::Result<_, _>>()
        })?;
        let feats = parallel::install(workers, || features_for(&frames, prev.as_ref()))?;
        out.extend(feats);
        prev = frames.into_iter().last();
    }
    Ok(out)
}

/// Fits, calibrates and labels a precomputed feature sequence.
pub fn detect_features(
    features: &[FeatureVector],
    labels: &[(usize, Truth, Option<f64>)],
    config: &StreamConfig,
) -> Result<(Vec<DetectionRecord>, IsoForest)> {
    config.validate()?;
    if features.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let rows: Vec<&[f64]> = features.iter().map(|f| &f.0[..]).collect();
    let mut forest =
        isoforest::fit_with_workers(&rows, &config.forest_params(config.seed), config.workers)?;
    let scores = forest.score_all(&rows, config.workers)?;
    let threshold = forest.calibrate_threshold(&scores)?;
    let records = labels
        .iter()
        .zip(&scores)
        .map(|(&(frame_index, truth, epsilon), &score)| DetectionRecord {
            frame_index,
            score,
            threshold,
            flagged: score > threshold,
            truth,
            epsilon,
        })
        .collect();
    Ok((records, forest))
}

/// Scores a feature sequence with an already calibrated forest.
pub fn score_with_forest(
    forest: &IsoForest,
    features: &[FeatureVector],
    labels: &[(usize, Truth, Option<f64>)],
    workers: usize,
) -> Result<Vec<DetectionRecord>> {
    let threshold = forest.threshold.ok_or(IsoForestError::NotFitted)?;
    let rows: Vec<&[f64]> = features.iter().map(|f| &f.0[..]).collect();
    let scores = forest.score_all(&rows, workers)?;
    Ok(labels
        .iter()
        .zip(scores)
        .map(|(&(frame_index, truth, epsilon), score)| DetectionRecord {
            frame_index,
            score,
            threshold,
            flagged: score > threshold,
            truth,
            epsilon,
        })
        .collect())
}

fn manifest_labels(manifest: &DatasetManifest) -> Vec<(usize, Truth, Option<f64>)> {
    manifest
        .entries
        .iter()
        .map(|e| (e.index, Truth::from_role(e.role), e.epsilon))
        .collect()
}

/// Batch detection over every entry of a dataset.
pub fn run_batch(
    manifest: &DatasetManifest,
    base_dir: &Path,
    config: &StreamConfig,
) -> Result<BatchOutput> {
    config.validate()?;
    if manifest.entries.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let features = extract_manifest(manifest, base_dir, config.workers)?;
    let labels = manifest_labels(manifest);
    let (records, forest) = detect_features(&features, &labels, config)?;
    Ok(BatchOutput {
        records,
        features: labels.iter().map(|l| l.0).zip(features).collect(),
        forest,
    })
}

/// Batch detection over frames already in memory.
pub fn run_batch_frames(
    frames: &[Frame],
    labels: &[(Truth, Option<f64>)],
    config: &StreamConfig,
) -> Result<Vec<DetectionRecord>> {
    let features = extract_sequence(frames, config.workers)?;
    let labels: Vec<_> = frames
        .iter()
        .zip(labels)
        .map(|(f, &(t, e))| (f.index(), t, e))
        .collect();
    Ok(detect_features(&features, &labels, config)?.0)
}

struct Pending {
    index: usize,
    truth: Truth,
    epsilon: Option<f64>,
    features: FeatureVector,
}

/// Incremental detector: buffers the warmup span, then emits one record per
/// pushed frame. Only the previous frame is retained between pushes.
pub struct StreamDetector {
    config: StreamConfig,
    prev: Option<Frame>,
    warmup: Vec<Pending>,
    forest: Option<IsoForest>,
    window: VecDeque<FeatureVector>,
    since_refit: usize,
    refits: u64,
}

impl StreamDetector {
    pub fn new(config: StreamConfig) -> Result<Self> {
        let config = StreamConfig {
            mode: Mode::Stream,
            ..config
        };
        config.validate()?;
        Ok(Self {
            config,
            prev: None,
            warmup: Vec::new(),
            forest: None,
            window: VecDeque::new(),
            since_refit: 0,
            refits: 0,
        })
    }

    pub fn forest(&self) -> Option<&IsoForest> {
        self.forest.as_ref()
    }

    /// Fits on `rows` and calibrates on their own scores.
    fn fit_window(&self, rows: &[FeatureVector], seed: u64) -> Result<(IsoForest, Vec<f64>)> {
        let rows: Vec<&[f64]> = rows.iter().map(|f| &f.0[..]).collect();
        let mut forest = isoforest::fit_with_workers(
            &rows,
            &self.config.forest_params(seed),
            self.config.workers,
        )?;
        let scores = forest.score_all(&rows, self.config.workers)?;
        forest.calibrate_threshold(&scores)?;
        Ok((forest, scores))
    }

    fn close_warmup(&mut self) -> Result<Vec<DetectionRecord>> {
        let pending = std::mem::take(&mut self.warmup);
        let feats: Vec<FeatureVector> = pending.iter().map(|p| p.features).collect();
        let (forest, scores) = self.fit_window(&feats, self.config.seed)?;
        let threshold = forest.threshold.expect("calibrated");
        self.forest = Some(forest);
        self.window = feats.into_iter().collect();
        Ok(pending
            .into_iter()
            .zip(scores)
            .map(|(p, score)| DetectionRecord {
                frame_index: p.index,
                score,
                threshold,
                flagged: false,
                truth: p.truth,
                epsilon: p.epsilon,
            })
            .collect())
    }

    /// Feeds the next frame. Returns the records that became available: the
    /// whole warmup span when it completes, then one record per frame.
    pub fn push(
        &mut self,
        frame: Frame,
        truth: Truth,
        epsilon: Option<f64>,
    ) -> Result<Vec<DetectionRecord>> {
        let features = extract_features(&frame, self.prev.as_ref())?;
        let index = frame.index();
        self.prev = Some(frame);

        if self.forest.is_none() {
            self.warmup.push(Pending {
                index,
                truth,
                epsilon,
                features,
            });
            if self.warmup.len() == self.config.warmup {
                return self.close_warmup();
            }
            return Ok(Vec::new());
        }

        let forest = self.forest.as_ref().expect("fitted");
        let score = forest.score(&features.0)?;
        let threshold = forest.threshold.expect("calibrated");
        let record = DetectionRecord {
            frame_index: index,
            score,
            threshold,
            flagged: score > threshold,
            truth,
            epsilon,
        };

        if let Some(every) = self.config.refit_every {
            self.window.push_back(features);
            while self.window.len() > self.config.warmup {
                self.window.pop_front();
            }
            self.since_refit += 1;
            if self.since_refit == every {
                self.since_refit = 0;
                self.refits += 1;
                let seed = SplitMix64::new(self.config.seed.wrapping_add(self.refits)).next_u64();
                let window: Vec<FeatureVector> = self.window.iter().copied().collect();
                self.forest = Some(self.fit_window(&window, seed)?.0);
            }
        }
        Ok(vec![record])
    }

    /// Flushes a stream that ended inside the warmup span by fitting on the
    /// frames seen so far.
    pub fn finish(mut self) -> Result<Vec<DetectionRecord>> {
        if self.forest.is_some() || self.warmup.is_empty() {
            return Ok(Vec::new());
        }
        if self.warmup.len() < 2 {
            return Err(PipelineError::WarmupTooShort(self.warmup.len()));
        }
        self.close_warmup()
    }
}

/// Drives a [`StreamDetector`] over `source`, handing each record to `sink`
/// as soon as it is available.
pub fn run_stream<I>(
    source: I,
    config: &StreamConfig,
    mut sink: impl FnMut(DetectionRecord),
) -> Result<()>
where
    I: IntoIterator<Item = Result<(Frame, Truth, Option<f64>)>>,
{
    let mut detector = StreamDetector::new(config.clone())?;
    for item in source {
        let (frame, truth, eps) = item?;
        for r in detector.push(frame, truth, eps)? {
            sink(r);
        }
    }
    for r in detector.finish()? {
        sink(r);
    }
    Ok(())
}

/// Stream detection over a dataset, frames read one at a time in manifest order.
pub fn run_stream_manifest(
    manifest: &DatasetManifest,
    base_dir: &Path,
    config: &StreamConfig,
) -> Result<Vec<DetectionRecord>> {
    if manifest.entries.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let source = manifest.entries.iter().map(|e| {
        let frame = frame_io::load_entry_frame(base_dir, e)?;
        Ok((frame, Truth::from_role(e.role), e.epsilon))
    });
    let mut out = Vec::with_capacity(manifest.entries.len());
    run_stream(source, config, |r| out.push(r))?;
    Ok(out)
}

fn check_alignment(records: &[DetectionRecord], manifest: &DatasetManifest) -> Result<()> {
    if records.len() != manifest.entries.len() {
        return Err(PipelineError::Detections(format!(
            "{} records for {} manifest entries",
            records.len(),
            manifest.entries.len()
        )));
    }
    for (position, (r, e)) in records.iter().zip(&manifest.entries).enumerate() {
        let eps_match = match (r.epsilon, e.epsilon) {
            (None, None) => true,
            (Some(a), Some(b)) => (a - b).abs() < 1e-9,
            _ => false,
        };
        if r.frame_index != e.index || !eps_match {
            return Err(PipelineError::Misaligned {
                position,
                record: r.frame_index,
                entry: e.index,
            });
        }
    }
    Ok(())
}

/// Copies every unflagged frame to `out_dir` and writes its manifest there.
pub fn filter_frames(
    records: &[DetectionRecord],
    manifest: &DatasetManifest,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    check_alignment(records, manifest)?;
    let mut kept: Vec<ManifestEntry> = Vec::new();
    for (r, e) in records.iter().zip(&manifest.entries) {
        if r.flagged {
            continue;
        }
        let dst = out_dir.join(&e.path);
        if let Some(parent) = dst.parent() {
            std::fs::create_dir_all(parent).map_err(|err| FrameIoError::io(parent, err))?;
        }
        std::fs::copy(base_dir.join(&e.path), &dst).map_err(|err| FrameIoError::io(&dst, err))?;
        kept.push(e.clone());
    }
    let out = manifest.with_entries(kept);
    frame_io::write_manifest(&out, &out_dir.join(frame_io::MANIFEST_FILE))?;
    Ok(out)
}

pub(crate) fn ensure_aligned(
    records: &[DetectionRecord],
    manifest: &DatasetManifest,
) -> Result<()> {
    check_alignment(records, manifest)
}

/// `frame_index,score,threshold,flagged,truth,epsilon` with reals at 9 decimals.
pub fn write_detections_csv<W: Write>(writer: W, records: &[DetectionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| PipelineError::Detections(e.to_string());
    w.write_record([
        "frame_index",
        "score",
        "threshold",
        "flagged",
        "truth",
        "epsilon",
    ])
    .map_err(err)?;
    for r in records {
        w.write_record([
            r.frame_index.to_string(),
            format!("{:.9}", r.score),
            format!("{:.9}", r.threshold),
            r.flagged.to_string(),
            r.truth.as_str().to_string(),
            r.epsilon.map(|e| format!("{e:.9}")).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| PipelineError::Detections(e.to_string()))?;
    Ok(())
}

pub fn detections_to_string(records: &[DetectionRecord]) -> String {
    let mut buf = Vec::new();
    write_detections_csv(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn read_detections_csv<R: Read>(reader: R) -> Result<Vec<DetectionRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let bad = |line: usize, msg: &str| PipelineError::Detections(format!("row {line}: {msg}"));
    let headers = rdr
        .headers()
        .map_err(|e| PipelineError::Detections(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>()
        != [
            "frame_index",
            "score",
            "threshold",
            "flagged",
            "truth",
            "epsilon",
        ]
    {
        return Err(PipelineError::Detections("unexpected header".into()));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| PipelineError::Detections(e.to_string()))?;
        let line = i + 1;
        let frame_index = row[0].parse().map_err(|_| bad(line, "bad frame_index"))?;
        let score: f64 = row[1].parse().map_err(|_| bad(line, "bad score"))?;
        let threshold: f64 = row[2].parse().map_err(|_| bad(line, "bad threshold"))?;
        let flagged = row[3].parse().map_err(|_| bad(line, "bad flagged"))?;
        let truth = Truth::parse(&row[4]).ok_or_else(|| bad(line, "bad truth"))?;
        let epsilon = if row[5].is_empty() {
            None
        } else {
            Some(row[5].parse().map_err(|_| bad(line, "bad epsilon"))?)
        };
        if !score.is_finite() || !threshold.is_finite() {
            return Err(bad(line, "non-finite value"));
        }
        out.push(DetectionRecord {
            frame_index,
            score,
            threshold,
            flagged,
            truth,
            epsilon,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(index: usize, seed: u64) -> Frame {
        let mut rng = SplitMix64::new(seed ^ index as u64);
        Frame::from_fn(index, 12, 10, |x, y, c| {
            0.3 + 0.02 * ((x + y + c) % 3) as f64 + 0.01 * rng.next_f64()
        })
        .unwrap()
    }

    #[test]
    fn identical_frames_score_equally() {
        let frames: Vec<Frame> = (0..20)
            .map(|i| Frame::filled(i, 8, 8, 0.4).unwrap())
            .collect();
        let labels = vec![(Truth::Clean, None); 20];
        let cfg = StreamConfig {
            contamination: 0.2,
            ..StreamConfig::default()
        };
        let records = run_batch_frames(&frames, &labels, &cfg).unwrap();
        let s0 = records[0].score;
        assert!(records.iter().all(|r| r.score == s0 && r.threshold == s0));
        // Quantile of identical values equals them; nothing strictly exceeds it.
        assert!(records.iter().all(|r| !r.flagged));
    }

    #[test]
    fn warmup_of_one_is_rejected() {
        let cfg = StreamConfig {
            mode: Mode::Stream,
            warmup: 1,
            ..StreamConfig::default()
        };
        assert!(matches!(
            StreamDetector::new(cfg),
            Err(PipelineError::WarmupTooShort(1))
        ));
    }

    #[test]
    fn stream_emits_warmup_then_one_per_frame() {
        let cfg = StreamConfig {
            mode: Mode::Stream,
            warmup: 5,
            trees: 20,
            ..StreamConfig::default()
        };
        let mut det = StreamDetector::new(cfg).unwrap();
        for i in 0..4 {
            assert!(det
                .push(noisy(i, 1), Truth::Clean, None)
                .unwrap()
                .is_empty());
        }
        let warm = det.push(noisy(4, 1), Truth::Clean, None).unwrap();
        assert_eq!(warm.len(), 5);
        assert!(warm.iter().all(|r| !r.flagged));
        assert_eq!(det.push(noisy(5, 1), Truth::Clean, None).unwrap().len(), 1);
        assert!(det.finish().unwrap().is_empty());
    }

    #[test]
    fn short_stream_flushes_on_finish() {
        let cfg = StreamConfig {
            mode: Mode::Stream,
            warmup: 10,
            trees: 10,
            ..StreamConfig::default()
        };
        let mut det = StreamDetector::new(cfg).unwrap();
        for i in 0..3 {
            det.push(noisy(i, 2), Truth::Unknown, None).unwrap();
        }
        assert_eq!(det.finish().unwrap().len(), 3);
    }

    #[test]
    fn refit_keeps_emitting() {
        let cfg = StreamConfig {
            mode: Mode::Stream,
            warmup: 6,
            refit_every: Some(3),
            trees: 10,
            ..StreamConfig::default()
        };
        let frames = (0..20).map(|i| Ok((noisy(i, 3), Truth::Clean, None)));
        let mut n = 0;
        run_stream(frames, &cfg, |_| n += 1).unwrap();
        assert_eq!(n, 20);
    }

    #[test]
    fn detections_csv_round_trip() {
        let records = vec![
            DetectionRecord {
                frame_index: 0,
                score: 0.412345678912,
                threshold: 0.5,
                flagged: false,
                truth: Truth::Clean,
                epsilon: None,
            },
            DetectionRecord {
                frame_index: 1,
                score: 0.7,
                threshold: 0.5,
                flagged: true,
                truth: Truth::Attacked,
                epsilon: Some(0.05),
            },
        ];
        let text = detections_to_string(&records);
        assert!(text.starts_with("frame_index,score,threshold,flagged,truth,epsilon\n"));
        assert!(text.contains("0,0.412345679,0.500000000,false,clean,\n"));
        assert!(text.contains("1,0.700000000,0.500000000,true,attacked,0.050000000\n"));
        let back = read_detections_csv(text.as_bytes()).unwrap();
        assert_eq!(back[1], records[1]);
        assert_eq!(back[0].epsilon, None);
        assert!(read_detections_csv(&b"a,b\n1,2\n"[..]).is_err());
    }
}
