mod common;

use std::path::Path;

use advfilter::attack::{self, AttackConfig};
use advfilter::frame_io::{self, DatasetManifest, Frame};
use advfilter::pipeline::{self, DetectionRecord, Mode, PipelineError, StreamConfig, Truth};
use advfilter::synth::{self, SceneConfig};
use advfilter::tinynet::ModelParams;

fn dataset(dir: &Path, frames: usize) -> DatasetManifest {
    let y4m = synth::scene_y4m(&common::small_scene(frames));
    let clean = frame_io::extract_dataset(&y4m, "s.y4m", dir).unwrap();
    let cfg = AttackConfig::with_epsilons(vec![0.05, 0.2], 42);
    let full = attack::attack_dataset(&clean, dir, dir, &cfg, 2).unwrap();
    attack::mixed_stream(&full, 0.3, &cfg.epsilons, 9).unwrap()
}

fn stream_cfg() -> StreamConfig {
    StreamConfig {
        mode: Mode::Stream,
        ..StreamConfig::default()
    }
}

#[test]
fn batch_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 40);
    let run = |workers| {
        let cfg = StreamConfig {
            workers,
            contamination: 0.3,
            ..StreamConfig::default()
        };
        pipeline::run_batch(&m, dir.path(), &cfg).unwrap()
    };
    let a = run(1);
    let b = run(8);
    assert_eq!(a.records, b.records);
    assert_eq!(
        pipeline::detections_to_string(&a.records),
        pipeline::detections_to_string(&b.records)
    );
    assert_eq!(a.forest.to_bytes(), b.forest.to_bytes());
    assert_eq!(a.records.len(), m.entries.len());
    for (r, e) in a.records.iter().zip(&m.entries) {
        assert_eq!(r.frame_index, e.index);
        assert_eq!(r.flagged, r.score > r.threshold);
        assert_eq!(
            r.truth == Truth::Attacked,
            e.role == frame_io::Role::Adversarial
        );
    }
}

#[test]
fn empty_dataset_is_an_error() {
    let m = DatasetManifest {
        source: "x".into(),
        fps_num: 1,
        fps_den: 1,
        width: 8,
        height: 8,
        entries: vec![],
    };
    assert!(matches!(
        pipeline::run_batch(&m, Path::new("."), &StreamConfig::default()),
        Err(PipelineError::EmptyDataset)
    ));
}

fn flag_only(m: &DatasetManifest, flagged: &[usize]) -> Vec<DetectionRecord> {
    m.entries
        .iter()
        .map(|e| DetectionRecord {
            frame_index: e.index,
            score: 0.5,
            threshold: 0.5,
            flagged: flagged.contains(&e.index),
            truth: Truth::from_role(e.role),
            epsilon: e.epsilon,
        })
        .collect()
}

#[test]
fn filter_drops_exactly_the_flagged_frames() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 10);
    let out = dir.path().join("f1");
    let kept = pipeline::filter_frames(&flag_only(&m, &[3, 5]), &m, dir.path(), &out).unwrap();
    assert_eq!(kept.entries.len(), 8);
    assert!(kept.entries.iter().all(|e| e.index != 3 && e.index != 5));
    assert_eq!(
        frame_io::load_manifest(&out.join("manifest.json")).unwrap(),
        kept
    );
    for e in &kept.entries {
        assert_eq!(
            std::fs::read(out.join(&e.path)).unwrap(),
            std::fs::read(dir.path().join(&e.path)).unwrap()
        );
    }

    let none = pipeline::filter_frames(&flag_only(&m, &[]), &m, dir.path(), &dir.path().join("f2"))
        .unwrap();
    assert_eq!(none, m);

    let all: Vec<usize> = (0..10).collect();
    let out3 = dir.path().join("f3");
    let empty = pipeline::filter_frames(&flag_only(&m, &all), &m, dir.path(), &out3).unwrap();
    assert!(empty.entries.is_empty());
    let files: Vec<_> = std::fs::read_dir(&out3)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(files, vec![std::ffi::OsString::from("manifest.json")]);
}

#[test]
fn misaligned_records_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), 4);
    let mut records = flag_only(&m, &[]);
    records.swap(0, 1);
    assert!(pipeline::filter_frames(&records, &m, dir.path(), &dir.path().join("o")).is_err());
}

fn run_stream(frames: &[(Frame, Truth, Option<f64>)], cfg: &StreamConfig) -> Vec<DetectionRecord> {
    let mut out = Vec::new();
    pipeline::run_stream(frames.iter().cloned().map(Ok), cfg, |r| out.push(r)).unwrap();
    out
}

#[test]
fn stream_prefixes_give_record_prefixes() {
    let frames: Vec<_> = synth::scene_frames(&common::small_scene(90))
        .into_iter()
        .map(|f| (f, Truth::Clean, None))
        .collect();
    let cfg = StreamConfig {
        warmup: 30,
        ..stream_cfg()
    };
    let full = run_stream(&frames, &cfg);
    assert_eq!(full.len(), 90);
    for cut in [30, 31, 55, 89] {
        assert_eq!(run_stream(&frames[..cut], &cfg), full[..cut].to_vec());
    }
    let refit = StreamConfig {
        refit_every: Some(10),
        ..cfg.clone()
    };
    let full = run_stream(&frames, &refit);
    assert_eq!(run_stream(&frames[..64], &refit), full[..64].to_vec());
}

#[test]
fn stream_is_independent_of_worker_count() {
    let frames: Vec<_> = synth::scene_frames(&common::small_scene(70))
        .into_iter()
        .map(|f| (f, Truth::Clean, None))
        .collect();
    let a = run_stream(
        &frames,
        &StreamConfig {
            workers: 1,
            ..stream_cfg()
        },
    );
    let b = run_stream(
        &frames,
        &StreamConfig {
            workers: 8,
            ..stream_cfg()
        },
    );
    assert_eq!(a, b);
}

#[test]
fn clean_stream_rarely_flags_and_attacked_span_is_caught() {
    let scene = SceneConfig::default();
    let frames = synth::scene_frames(&scene);
    let cfg = stream_cfg();

    let clean: Vec<_> = frames
        .iter()
        .cloned()
        .map(|f| (f, Truth::Clean, None))
        .collect();
    let records = run_stream(&clean, &cfg);
    let flagged = records.iter().filter(|r| r.flagged).count();
    assert!(records[..cfg.warmup].iter().all(|r| !r.flagged));
    assert!(
        flagged as f64 / 200.0 <= cfg.contamination + 0.05,
        "{flagged} of 200 clean frames flagged"
    );

    let params = ModelParams::init(42);
    let mixed: Vec<_> = frames
        .iter()
        .map(|f| {
            if f.index() >= 100 {
                (
                    attack::fgsm(&params, f, 0.2).unwrap(),
                    Truth::Attacked,
                    Some(0.2),
                )
            } else {
                (f.clone(), Truth::Clean, None)
            }
        })
        .collect();
    let records = run_stream(&mixed, &cfg);
    let caught = records[100..].iter().filter(|r| r.flagged).count();
    assert!(caught >= 90, "{caught} of 100 attacked frames flagged");
}

#[test]
fn detections_file_round_trips() {
    let records = common::figure_records();
    let text = pipeline::detections_to_string(&records);
    let back = pipeline::read_detections_csv(text.as_bytes()).unwrap();
    assert_eq!(pipeline::detections_to_string(&back), text);
    assert_eq!(back.len(), 199);
}
