mod common;

use std::collections::BTreeMap;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokweight::data::Sample;
use tokweight::eval::{constrained_beam_search, evaluate, EvalConfig, EvalReport};
use tokweight::model::Model;
use tokweight::quant::{build_trie, SemanticIdTable};

fn random_x(ids: &SemanticIdTable, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let vocab = ids.vocab();
    (0..rng.random_range(1..4))
        .flat_map(|_| vocab.encode_id(ids.codes(rng.random_range(0..ids.len()))))
        .collect()
}

#[test]
fn beam_at_full_width_equals_exhaustive_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 5, 17, 64] {
        let ids = random_table(n, &mut rng);
        let model = Model::<f64>::init(&small_config(n % 2 == 0)).unwrap();
        let x = random_x(&ids, &mut rng);
        assert!(beam_matches_oracle(&model, &x, &ids), "n = {n}");
    }
}

#[test]
fn single_item_is_ranked_first_at_any_width() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ids = random_table(1, &mut rng);
    let trie = build_trie(&ids);
    let model = Model::<f32>::init(&small_config(true)).unwrap();
    for w in [1, 3, 10] {
        let r = constrained_beam_search(&model, &random_x(&ids, &mut rng), &trie, &ids, w).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.entries[0].item, 0);
    }
    assert!(constrained_beam_search(&model, &[0], &trie, &ids, 0).is_err());
}

#[test]
fn wider_beams_never_score_worse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ids = random_table(40, &mut rng);
    let trie = build_trie(&ids);
    let model = Model::<f64>::init(&small_config(false)).unwrap();
    for _ in 0..5 {
        let x = random_x(&ids, &mut rng);
        let lists: Vec<_> = [1, 2, 4, 8, 40]
            .iter()
            .map(|&w| constrained_beam_search(&model, &x, &trie, &ids, w).unwrap())
            .collect();
        for pair in lists.windows(2) {
            let (narrow, wide) = (&pair[0], &pair[1]);
            for (a, b) in narrow.entries.iter().zip(&wide.entries) {
                assert!(b.logprob >= a.logprob);
            }
        }
        for l in &lists {
            assert!(l.entries.windows(2).all(|w| w[0].logprob >= w[1].logprob));
            assert!(l.entries.iter().all(|e| ids.item_of(&e.codes) == Some(e.item)));
        }
    }
}

fn random_cases(ids: &SemanticIdTable, n: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    (0..n)
        .map(|u| Sample {
            user: format!("u{u}"),
            history: (0..rng.random_range(1..4))
                .map(|_| ids.item(rng.random_range(0..ids.len())).to_string())
                .collect(),
            target: ids.item(rng.random_range(0..ids.len())).to_string(),
        })
        .collect()
}

#[test]
fn untrained_model_hits_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 64;
    let ids = random_table(n, &mut rng);
    let trie = build_trie(&ids);
    let cases = random_cases(&ids, 1200, &mut rng);
    let model = Model::<f32>::init(&small_config(true)).unwrap();
    let report = evaluate(&model, &cases, &ids, &trie, &BTreeMap::new(), 20, &EvalConfig::default()).unwrap();
    for k in [5usize, 10] {
        let p = k as f64 / n as f64;
        let sigma = (p * (1.0 - p) / cases.len() as f64).sqrt();
        let hit = report.hit[&k.to_string()];
        assert!((hit - p).abs() <= 3.0 * sigma, "hit@{k} = {hit}, chance {p}");
    }
}

#[test]
fn report_invariants_and_json_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ids = random_table(30, &mut rng);
    let trie = build_trie(&ids);
    let cases = random_cases(&ids, 200, &mut rng);
    let freq: BTreeMap<String, u64> = ids.items().iter().map(|i| (i.clone(), rng.random_range(0..50))).collect();
    let model = Model::<f32>::init(&small_config(true)).unwrap();
    let report = evaluate(&model, &cases, &ids, &trie, &freq, 20, &EvalConfig::default()).unwrap();
    assert_eq!(report.beam_width, 20);
    assert_eq!(report.head.cases + report.tail.cases, cases.len());
    for r in [(&report.hit, &report.ndcg), (&report.head.hit, &report.head.ndcg)] {
        assert!(r.0["10"] >= r.0["5"]);
        for k in ["5", "10"] {
            assert!((0.0..=1.0).contains(&r.0[k]) && r.1[k] <= r.0[k]);
        }
    }
    assert_eq!(report.decile.truth.iter().sum::<u64>(), 200);
    let json = serde_json::to_string(&report).unwrap();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in ["hit", "ndcg", "head", "tail", "decile"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(evaluate(&model, &[], &ids, &trie, &freq, 20, &EvalConfig::default()).is_err());
}
