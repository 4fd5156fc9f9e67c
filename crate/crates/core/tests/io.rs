use std::fs;

use fcn_cascade::eval::ScoredBox;
use fcn_cascade::io::pnm::{decode_pnm, encode_pnm};
use fcn_cascade::io::{format_detections, list_images, parse_detections, read_dataset, write_atomic, write_dataset};
use fcn_cascade::trainer::{synth_dataset, SynthParams};
use fcn_cascade::{BBox, Error, Tensor3};
use proptest::prelude::*;

fn quantized(w: usize, h: usize, bytes: &[u8]) -> Tensor3 {
    Tensor3::from_fn(w, h, 3, |x, y, c| bytes[((y * w + x) * 3 + c) % bytes.len()] as f64 / 255.0)
}

proptest! {
    #[test]
    fn ppm_round_trip_is_exact_on_8bit_values(w in 1usize..24, h in 1usize..24, bytes in prop::collection::vec(any::<u8>(), 1..64)) {
        let img = quantized(w, h, &bytes);
        let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
        prop_assert_eq!(back, img);
    }

    #[test]
    fn detection_lines_round_trip(xs in prop::collection::vec((0.0f64..500.0, 0.0f64..500.0, 1.0f64..200.0, 0.0f64..1.0), 0..20)) {
        let dets: Vec<ScoredBox> = xs.iter().map(|&(x, y, s, c)| ScoredBox { bbox: BBox::new(x, y, s, s * 1.1), confidence: c }).collect();
        let parsed = parse_detections(&format_detections("img7", &dets)).unwrap();
        prop_assert_eq!(parsed.get("img7").cloned().unwrap_or_default(), dets);
    }
}

#[test]
fn truncated_and_foreign_images_are_rejected() {
    let img = quantized(5, 4, &[10, 200, 33]);
    let bytes = encode_pnm(&img).unwrap();
    assert!(matches!(decode_pnm(&bytes[..bytes.len() - 1]), Err(Error::ImageFormat(_))));
    assert!(matches!(decode_pnm(b"\x89PNG\r\n"), Err(Error::ImageFormat(_))));
    assert!(matches!(decode_pnm(b"P6\n4 4\n65535\n"), Err(Error::ImageFormat(_))));
}

#[test]
fn dataset_survives_disk_and_rejects_bad_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let (ann, bgs) = synth_dataset(8, 5, &SynthParams::default());
    write_dataset(dir.path(), &ann, &bgs).unwrap();
    let (back, back_bgs) = read_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), ann.len());
    assert_eq!(back_bgs.len(), bgs.len());
    for (a, b) in ann.iter().zip(&back) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.boxes, b.boxes);
    }
    let ids: Vec<String> = list_images(&dir.path().join("images")).unwrap().into_iter().map(|(id, _)| id).collect();
    assert_eq!(ids, ann.iter().map(|a| a.id.clone()).collect::<Vec<_>>());

    let ann_path = dir.path().join("annotations.jsonl");
    let first = ann[0].id.clone();
    fs::write(&ann_path, format!("{{\"image\": \"{first}\", \"boxes\": [[250, 10, 40, 40]]}}\n")).unwrap();
    assert!(matches!(read_dataset(dir.path()), Err(Error::Dataset(_))));
    fs::write(&ann_path, "{\"image\": 3}\n").unwrap();
    match read_dataset(dir.path()) {
        Err(Error::Dataset(msg)) => assert!(msg.contains(":1:"), "{msg}"),
        other => panic!("expected a dataset error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn malformed_detection_lines_are_errors() {
    assert!(parse_detections("a 1 2 3 4\n").is_err());
    assert!(parse_detections("a 1 2 3 four 0.5\n").is_err());
    assert!(parse_detections("\n\n").unwrap().is_empty());
}

#[test]
fn atomic_write_replaces_whole_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.txt");
    write_atomic(&path, b"first version, longer").unwrap();
    write_atomic(&path, b"second").unwrap();
    assert_eq!(fs::read(&path).unwrap(), b"second");
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}
