mod common;

use proptest::prelude::*;
use sstr_core::corpus::{generate, synthetic_lexicon, SyntheticSpec};
use sstr_core::index::{AnnParams, Backend, DescriptorStore, SearchIndex};
use sstr_core::phoc::{encode_str, PhocConfig};
use sstr_core::retrieval::{query, RetrievalParams};

/// `(image id, vector)` for every descriptor.
type Flat = Vec<(String, Vec<f32>)>;

fn corpus_index(spec: &SyntheticSpec, config: &PhocConfig) -> (SearchIndex, Flat, Vec<String>) {
    let corpus = generate(spec, config).unwrap();
    let mut store = DescriptorStore::new(config.clone());
    let mut flat = Vec::new();
    for dets in &corpus.detections {
        for d in dets {
            store.add(d).unwrap();
            flat.push((d.image_id.clone(), d.phoc.as_slice().to_vec()));
        }
    }
    store.seal(Backend::Exact, AnnParams::default()).unwrap();
    (store.into_index().unwrap(), flat, corpus.query_words())
}

#[test]
fn exact_pipeline_matches_straight_line_ranking_on_binary_corpus() {
    let config = PhocConfig::default();
    let mut spec = SyntheticSpec::new(1000, synthetic_lexicon(6000, 4), 12);
    spec.bit_flip_rate = 0.02;
    let (index, flat, queries) = corpus_index(&spec, &config);
    let params = RetrievalParams::default();
    for q in &queries {
        let target = encode_str(q, &config).unwrap();
        let want = common::straight_line_ranking(&flat, target.as_slice());
        let got = query(q, &index, &config, &params).unwrap();
        let got_ids: Vec<&str> = got.image_ids().collect();
        let want_ids: Vec<&str> = want.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(got_ids, want_ids, "query {q}");
        for (item, (_, d)) in got.items.iter().zip(&want) {
            assert!((item.score as f64 - d).abs() <= 1e-6 * d.max(1.0));
        }
    }
}

#[test]
fn noisy_ranking_agrees_up_to_near_ties() {
    let config = PhocConfig::default();
    let mut spec = SyntheticSpec::new(200, synthetic_lexicon(3000, 9), 13);
    spec.phoc_noise = 0.1;
    spec.query_count = 20;
    let (index, flat, queries) = corpus_index(&spec, &config);
    for q in &queries {
        let target = encode_str(q, &config).unwrap();
        let want = common::straight_line_ranking(&flat, target.as_slice());
        let got = query(q, &index, &config, &RetrievalParams::default()).unwrap();
        assert_eq!(got.items.len(), want.len());
        let by_id: std::collections::HashMap<&str, f64> = want.iter().map(|(id, d)| (id.as_str(), *d)).collect();
        for (item, (want_id, d)) in got.items.iter().zip(&want) {
            let tol = 1e-5 * d.max(1.0);
            assert!((item.score as f64 - d).abs() <= tol);
            if &item.image_id != want_id {
                assert!((by_id[item.image_id.as_str()] - d).abs() <= tol);
            }
        }
    }
}

#[test]
fn clean_planted_images_rank_first() {
    let config = PhocConfig::default();
    let spec = SyntheticSpec::new(300, synthetic_lexicon(5000, 1), 6);
    let corpus = generate(&spec, &config).unwrap();
    let mut store = DescriptorStore::new(config.clone());
    for d in corpus.detections.iter().flatten() {
        store.add(d).unwrap();
    }
    let index = store.seal(Backend::Exact, AnnParams::default()).unwrap();
    for q in &corpus.meta.queries {
        let relevant = corpus.ground_truth().relevant(&q.word).unwrap();
        let list = query(&q.word, index, &config, &RetrievalParams::default()).unwrap();
        let top: std::collections::BTreeSet<String> =
            list.items[..relevant.len()].iter().map(|i| i.image_id.clone()).collect();
        assert_eq!(&top, relevant);
        assert!(list.items[..relevant.len()].iter().all(|i| i.score == 0.0));
        assert!(list.items[relevant.len()].score > 0.0);
    }
}

#[test]
fn graph_top10_agrees_with_exact() {
    let config = PhocConfig::default();
    let mut spec = SyntheticSpec::new(300, synthetic_lexicon(5000, 3), 21);
    spec.phoc_noise = 0.1;
    let (exact, _, queries) = corpus_index(&spec, &config);
    let graph = exact.with_backend(Backend::Graph, AnnParams::default()).unwrap();
    let params = RetrievalParams::default();
    for q in &queries {
        let a: Vec<String> = query(q, &exact, &config, &params).unwrap().image_ids().take(10).map(String::from).collect();
        let b: Vec<String> = query(q, &graph, &config, &params).unwrap().image_ids().take(10).map(String::from).collect();
        let common = a.iter().filter(|id| b.contains(id)).count();
        assert!(common >= 9, "query {q}: {a:?} vs {b:?}");
    }
}

fn tiny() -> PhocConfig {
    PhocConfig::new("abc", vec![1, 2], vec![], &[] as &[&str], 0.5).unwrap()
}

proptest! {
    #[test]
    fn adding_a_descriptor_never_worsens_a_score(
        base in prop::collection::vec((0usize..4, prop::collection::vec(0.0..=1.0f32, 9)), 1..30),
        extra_image in 0usize..4,
        extra in prop::collection::vec(0.0..=1.0f32, 9),
        word in "[abc]{1,6}",
    ) {
        let config = tiny();
        let build = |with_extra: bool| {
            let mut store = DescriptorStore::new(config.clone());
            for (img, v) in &base {
                store.add_vector(&format!("i{img}"), v, 0.5).unwrap();
            }
            if with_extra {
                store.add_vector(&format!("i{extra_image}"), &extra, 0.5).unwrap();
            }
            store.seal(Backend::Exact, AnnParams::default()).unwrap();
            store.into_index().unwrap()
        };
        let params = RetrievalParams::default();
        let before = query(&word, &build(false), &config, &params).unwrap();
        let after = query(&word, &build(true), &config, &params).unwrap();
        let id = format!("i{extra_image}");
        let after_score = after.items.iter().find(|i| i.image_id == id).unwrap().score;
        if let Some(b) = before.items.iter().find(|i| i.image_id == id) {
            prop_assert!(after_score <= b.score);
        }
    }
}
