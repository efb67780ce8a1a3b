use std::alloc::{GlobalAlloc, Layout, System};
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use sstr_core::corpus::{
    generate, generate_each, load_detections, synthetic_lexicon, DetectionWriter, SyntheticSpec,
};
use sstr_core::geometry::Detection;
use sstr_core::phoc::PhocConfig;
use sstr_core::Error;

/// Tracks live and peak heap bytes.
struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            if new_size >= layout.size() {
                let now = LIVE.fetch_add(new_size - layout.size(), Ordering::Relaxed) + new_size - layout.size();
                PEAK.fetch_max(now, Ordering::Relaxed);
            } else {
                LIVE.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

fn payload_bytes(d: &Detection) -> usize {
    std::mem::size_of::<Detection>() + d.phoc.len() * 4 + d.image_id.len()
}

#[test]
fn ten_thousand_image_file_loads_within_twice_its_payload() {
    let config = PhocConfig::default();
    let mut spec = SyntheticSpec::new(10_000, synthetic_lexicon(20_000, 1), 3);
    spec.descriptors_per_image = 10;
    spec.phoc_noise = 0.1;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dets.jsonl");
    let mut writer = DetectionWriter::create(&path, &config).unwrap();
    let mut payload = 0usize;
    let meta = generate_each(&spec, &config, |_, d| {
        payload += payload_bytes(&d);
        writer.write(&d)
    })
    .unwrap();
    writer.finish().unwrap();
    assert_eq!(meta.descriptor_count, 100_000);

    let before = LIVE.load(Ordering::Relaxed);
    PEAK.store(before, Ordering::Relaxed);
    let groups = load_detections(&path, &config).unwrap();
    let peak = PEAK.load(Ordering::Relaxed) - before;
    assert_eq!(groups.len(), 10_000);
    assert_eq!(groups.values().map(Vec::len).sum::<usize>(), 100_000);
    assert!(peak < 2 * payload, "peak {peak} bytes for a {payload}-byte payload");
}

#[test]
fn detection_file_round_trip_is_identical() {
    let config = PhocConfig::default();
    let mut spec = SyntheticSpec::new(40, synthetic_lexicon(2000, 2), 7);
    spec.phoc_noise = 0.2;
    spec.query_count = 5;
    let corpus = generate(&spec, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let mut w = DetectionWriter::create(&path, &config).unwrap();
    for d in corpus.detections.iter().flatten() {
        w.write(d).unwrap();
    }
    w.finish().unwrap();
    let groups = load_detections(&path, &config).unwrap();
    let back: Vec<Vec<Detection>> = groups.into_values().collect();
    assert_eq!(back, corpus.detections);
}

#[test]
fn short_vector_and_foreign_config_are_rejected() {
    let config = PhocConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let mut w = DetectionWriter::create(&path, &config).unwrap();
    let d = &generate(&{
        let mut s = SyntheticSpec::new(12, synthetic_lexicon(500, 1), 1);
        s.query_count = 2;
        s
    }, &config)
    .unwrap()
    .detections[0][0];
    w.write(d).unwrap();
    let mut file = w.finish().unwrap();
    let short = format!("{{\"image_id\":\"x\",\"box\":[0,0,4,2],\"objectness\":0.5,\"phoc\":[{}]}}", vec!["0"; 603].join(","));
    writeln!(file, "{short}").unwrap();
    drop(file);
    assert!(matches!(load_detections(&path, &config), Err(Error::Parse { line: 3, .. })));

    let other = config.with_bigrams(&["th"]).unwrap();
    assert!(matches!(load_detections(&path, &other), Err(Error::ConfigMismatch { .. })));

    std::fs::write(&path, "not json\n").unwrap();
    assert!(matches!(load_detections(&path, &config), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn generated_files_are_byte_identical_per_seed() {
    let config = PhocConfig::default();
    let mut spec = SyntheticSpec::new(50, synthetic_lexicon(2000, 3), 99);
    spec.phoc_noise = 0.1;
    spec.bit_flip_rate = 0.01;
    spec.query_count = 5;
    let render = || {
        let mut w = DetectionWriter::new(Vec::new(), &config).unwrap();
        generate_each(&spec, &config, |_, d| w.write(&d)).unwrap();
        w.finish().unwrap()
    };
    assert_eq!(render(), render());
}

#[test]
fn ground_truth_is_exactly_the_planted_images() {
    let config = PhocConfig::default();
    let mut spec = SyntheticSpec::new(400, synthetic_lexicon(5000, 5), 31);
    spec.distractor_rate = 0.9;
    let corpus = generate(&spec, &config).unwrap();
    for q in &corpus.meta.queries {
        let target = sstr_core::phoc::encode_str(&q.word, &config).unwrap();
        let planted: std::collections::BTreeSet<String> = corpus
            .detections
            .iter()
            .flatten()
            .filter(|d| d.phoc.as_slice() == target.as_slice())
            .map(|d| d.image_id.clone())
            .collect();
        let relevant = corpus.ground_truth().relevant(&q.word).unwrap();
        assert_eq!(&planted, relevant);
        assert!((10..=50).contains(&relevant.len()));
    }
}

#[test]
fn full_scale_corpus_has_six_hundred_thousand_descriptors() {
    let config = PhocConfig::default();
    let spec = SyntheticSpec::new(10_000, synthetic_lexicon(20_000, 1), 0);
    let mut count = 0usize;
    let meta = generate_each(&spec, &config, |_, _| {
        count += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(count, 600_000);
    assert_eq!(meta.descriptor_count, 600_000);
    assert_eq!(meta.image_ids.len(), 10_000);
}
