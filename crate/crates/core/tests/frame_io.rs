use std::path::Path;

use advfilter::frame_io::{
    self, encode_y4m, manifest_from_json, manifest_to_json, parse_y4m, read_ppm, write_ppm,
    Colorspace, DatasetManifest, Frame, FrameIoError, ManifestEntry, Y4mDecoder,
};
use proptest::prelude::*;

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures")
            .join(name),
    )
    .unwrap()
}

#[test]
fn y4m_420_matches_reference_decoder() {
    let (header, frames) = parse_y4m(&fixture("c420_w5h5_2f.y4m")).unwrap();
    assert_eq!(
        (header.width, header.height, header.fps_num, header.fps_den),
        (5, 5, 10, 1)
    );
    assert_eq!(header.colorspace, Colorspace::C420);
    let reference = fixture("c420_w5h5_2f.rgb");
    assert_eq!(reference.len(), 2 * 5 * 5 * 3);
    let decoded: Vec<f64> = frames.iter().flat_map(|f| f.pixels().to_vec()).collect();
    for (i, (&r, &d)) in reference.iter().zip(&decoded).enumerate() {
        assert!(
            (r as f64 / 255.0 - d).abs() <= 1.0 / 255.0,
            "value {i}: {r} vs {d}"
        );
    }
    assert_eq!(frames[1].index(), 1);
}

#[test]
fn y4m_decoder_streams_frames() {
    let bytes = fixture("c420_w5h5_2f.y4m");
    let decoder = Y4mDecoder::new(&bytes[..]).unwrap();
    let frames: Result<Vec<Frame>, _> = decoder.collect();
    assert_eq!(frames.unwrap().len(), 2);
}

#[test]
fn extract_writes_frames_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m =
        frame_io::extract_dataset(&fixture("c420_w5h5_2f.y4m"), "clip.y4m", dir.path()).unwrap();
    assert_eq!(m.entries.len(), 2);
    assert_eq!(m.entries[1].path, "frames/frame_000001.ppm");
    let back = frame_io::load_manifest(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(back, m);
    let f = frame_io::load_entry_frame(dir.path(), &m.entries[0]).unwrap();
    assert_eq!((f.width(), f.height()), (5, 5));
}

#[test]
fn ppm_round_trip_is_byte_identical_on_canonical_input() {
    let mut bytes = b"P6\n3 2\n255\n".to_vec();
    bytes.extend((0..18u8).map(|v| v * 14));
    let frame = read_ppm(&bytes).unwrap();
    assert_eq!(write_ppm(&frame), bytes);
}

#[test]
fn manifest_round_trip_is_byte_identical() {
    let mut entries = Vec::new();
    for i in 0..4 {
        entries.push(ManifestEntry::clean(
            i,
            frame_io::frame_relative_path(i, frame_io::Role::Clean, None),
        ));
        for eps in [0.01, 0.2] {
            let path = frame_io::frame_relative_path(i, frame_io::Role::Adversarial, Some(eps));
            entries.push(ManifestEntry::adversarial(i, path, eps));
        }
    }
    let m = DatasetManifest {
        source: "clip.y4m".into(),
        fps_num: 10,
        fps_den: 1,
        width: 8,
        height: 6,
        entries,
    };
    let text = manifest_to_json(&m);
    let back = manifest_from_json(&text).unwrap();
    assert_eq!(back, m);
    assert_eq!(manifest_to_json(&back), text);
}

#[test]
fn every_y4m_truncation_is_a_typed_error() {
    let bytes = fixture("c420_w5h5_2f.y4m");
    let header_len = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
    let frame_len = 6 + 25 + 2 * 9;
    for cut in 0..bytes.len() {
        let result = parse_y4m(&bytes[..cut]);
        // Cutting exactly between frames leaves a valid shorter stream.
        let boundary = cut == header_len || cut == header_len + frame_len;
        if boundary {
            assert!(result.is_ok(), "cut {cut}");
        } else {
            assert!(result.is_err(), "cut {cut}");
        }
    }
}

#[test]
fn every_ppm_truncation_is_a_typed_error() {
    let bytes = write_ppm(&Frame::filled(0, 4, 3, 0.25).unwrap());
    for cut in 0..bytes.len() {
        match read_ppm(&bytes[..cut]) {
            Err(FrameIoError::MalformedHeader(_))
            | Err(FrameIoError::BadMaxval(_))
            | Err(FrameIoError::TruncatedPixelData { .. }) => {}
            other => panic!("cut {cut}: {other:?}"),
        }
    }
}

#[test]
fn encoder_output_decodes_to_the_same_shape() {
    let frames: Vec<Frame> = (0..3)
        .map(|i| Frame::from_fn(i, 7, 5, |x, y, c| ((x + y + c + i) % 4) as f64 / 4.0).unwrap())
        .collect();
    let (h, back) = parse_y4m(&encode_y4m(&frames, 25, 1, Colorspace::C420)).unwrap();
    assert_eq!((h.width, h.height, back.len()), (7, 5, 3));
}

proptest! {
    #[test]
    fn ppm_round_trip_within_half_step(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
        let mut rng = advfilter::rng::SplitMix64::new(seed);
        let frame = Frame::from_fn(0, w, h, |_, _, _| rng.next_f64()).unwrap();
        let back = read_ppm(&write_ppm(&frame)).unwrap();
        for (a, b) in frame.pixels().iter().zip(back.pixels()) {
            prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = read_ppm(&bytes);
        let _ = parse_y4m(&bytes);
        let mut with_magic = b"YUV4MPEG2 W2 H2 F1:1 C444\nFRAME\n".to_vec();
        with_magic.extend_from_slice(&bytes);
        let _ = parse_y4m(&with_magic);
        let mut ppm = b"P6\n2 2\n255\n".to_vec();
        ppm.extend_from_slice(&bytes);
        let _ = read_ppm(&ppm);
    }
}
