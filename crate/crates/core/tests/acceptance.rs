//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Optional arguments select criteria by substring, e.g.
//! `cargo test --test acceptance -- lemma`.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tokweight::data::ItemEmbeddingTable;
use tokweight::model::{train_steps, Example, Model, TrainConfig, TrainData, TrainState, MANIFEST_FILE, TENSOR_FILE};
use tokweight::objective::{curriculum_alphas, logsumexp, scaled_softmax_residual, CurriculumState, WeightMode, DEFAULT_DECAY};
use tokweight::pipeline::{self, Inputs, RunConfig, CHECKPOINT_DIR, LOG_FILE};
use tokweight::quant::{assign_ids, fit_traced, Flavor, SemanticIdTable};
use tokweight::weights::{
    dispersion_profile, effective_number, front_greater_weights, layer_filter_ratio, purity, DispersionProfile,
    FilterAveraging, FrequencyWeightMap, TokenCounts, TokenWeightVector,
};
use tokweight::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn repo_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn load_config(rel: &str) -> RunConfig {
    RunConfig::from_json(&std::fs::read_to_string(repo_file(rel)).unwrap(), &[]).unwrap()
}

/// Clustered Gaussian points, `n` rows of dimension `d`.
fn clustered(n: usize, d: usize, rng: &mut ChaCha8Rng) -> ItemEmbeddingTable {
    let clusters = rng.random_range(1..=8);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let centers: Vec<f64> = (0..clusters * d).map(|_| 4.0 * unit.sample(rng)).collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = rng.random_range(0..clusters);
        data.extend((0..d).map(|j| centers[c * d + j] + unit.sample(rng)));
    }
    ItemEmbeddingTable::new((0..n).map(|i| format!("i{i}")).collect(), d, data).unwrap()
}

fn lemma1_dispersion_monotone() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut done, mut redrawn, mut worst) = (0, 0, f64::NEG_INFINITY);
    while done < 200 {
        let flavor = if done % 2 == 0 { Flavor::Rq } else { Flavor::Pq };
        let layers = rng.random_range(1..=4);
        let codes = rng.random_range(2..=16);
        let d = match flavor {
            Flavor::Rq => rng.random_range(1..=16),
            Flavor::Pq => layers * rng.random_range(1..=16 / layers),
        };
        let n = rng.random_range(codes..=512);
        let emb = clustered(n, d, &mut rng);
        let (cb, _) = fit_traced(flavor, &emb, layers, codes, 25, rng.random()).unwrap();
        let ids = match assign_ids(&emb, &cb) {
            Ok(ids) => ids,
            // the instance has no collision-free id table; draw another
            Err(Error::CollisionOverflow { .. }) => {
                redrawn += 1;
                continue;
            }
            Err(e) => return outcome(false, format!("assign_ids: {e}")),
        };
        let p = dispersion_profile(&ids, &emb).unwrap();
        for k in 1..p.mu.len() {
            worst = worst.max(p.mu[k] - p.mu[k - 1]);
        }
        done += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs <= 60.0,
        format!("200 instances ({redrawn} redrawn on collision overflow), max mu_k - mu_(k-1) = {worst:.3e}, {secs:.1} s"),
    )
}

fn lemma2_effective_number() -> Outcome {
    let start = Instant::now();
    let (mut step_err, mut strict, mut resolved, mut worst_ulps): (f64, usize, usize, f64) = (0.0, 0, 0, 0.0);
    for beta in [0.9, 0.99, 0.999] {
        let e: Vec<f64> = (0..=10_000u64).map(|n| effective_number(n, beta)).collect();
        for n in 1..=10_000usize {
            step_err = step_err.max((e[n] - e[n - 1] - beta.powi(n as i32 - 1)).abs());
        }
        for n in 1..10_000usize {
            let second = (e[n + 1] - e[n]) - (e[n] - e[n - 1]);
            let ulp = f64::EPSILON * e[n + 1];
            // the exact second difference is -beta^(n-1) (1 - beta)
            if beta.powi(n as i32 - 1) * (1.0 - beta) > 8.0 * ulp {
                resolved += 1;
                if second >= 0.0 {
                    strict += 1;
                }
            }
            worst_ulps = worst_ulps.max(second / ulp);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        step_err <= 1e-12 && strict == 0 && worst_ulps <= 4.0 && secs <= 1.0,
        format!(
            "max |E_n - E_(n-1) - beta^(n-1)| = {step_err:.3e}; second differences negative at all {resolved} points above rounding \
             ({strict} not), largest {worst_ulps:.1} ulp; {secs:.3} s"
        ),
    )
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut count = 0usize;
    let mut check = |w: &TokenWeightVector| {
        worst = worst.max((w.sum() - w.len() as f64).abs());
        count += 1;
    };
    for len in 1..=8 {
        // random, sparse, all-zero and all-negative reductions
        for case in 0..200 {
            let delta: Vec<f64> = (0..len)
                .map(|_| match case % 4 {
                    0 => rng.random_range(-1.0..10.0),
                    1 => {
                        if rng.random_bool(0.3) {
                            rng.random_range(0.0..1e6)
                        } else {
                            0.0
                        }
                    }
                    2 => 0.0,
                    _ => -rng.random_range(0.0..1.0),
                })
                .collect();
            check(&front_greater_weights(&DispersionProfile { mu: vec![], delta }));
        }
        for beta in [0.9, 0.99, 0.999, 0.9999] {
            let counts: TokenCounts = (0..len)
                .flat_map(|l| (0..8u32).map(move |c| (l, c)))
                .map(|key| (key, rng.random_range(0..100_000u64)))
                .collect();
            let freq = FrequencyWeightMap::new(counts, beta).unwrap();
            for _ in 0..50 {
                let codes: Vec<u32> = (0..len).map(|_| rng.random_range(0..10)).collect();
                check(&freq.weights_for(&codes));
            }
        }
    }
    // everything the pipeline emits for the small bundled config
    let cfg = load_config("configs/small.json");
    let tmp = tempfile::tempdir().unwrap();
    pipeline::cmd_synth(&cfg, tmp.path()).unwrap();
    pipeline::cmd_quantize(&cfg, tmp.path(), &Inputs::default()).unwrap();
    let data = pipeline::load_data(&pipeline::data_dir(&cfg, tmp.path(), &Inputs::default())).unwrap();
    let (_, ids) = pipeline::load_ids(&pipeline::quant_dir(&cfg, tmp.path(), &Inputs::default())).unwrap();
    let train = pipeline::build_train_data(&cfg, &data, &ids).unwrap();
    check(&train.w_fg);
    for ex in &train.examples {
        check(&ex.w_fr);
    }
    outcome(worst <= 1e-9, format!("{count} vectors, max |sum - L| = {worst:.3e}"))
}

fn scaled_logit_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spread = Normal::new(0.0, 3.0).unwrap();
    let (mut worst, mut ends_exact) = (0.0f64, true);
    for _ in 0..1000 {
        let v = rng.random_range(2..=64);
        let row: Vec<f64> = (0..v).map(|_| spread.sample(&mut rng)).collect();
        let y = rng.random_range(0..v);
        let alpha: f64 = rng.random_range(0.0..1.0);
        let w: f64 = rng.random_range(0.0..3.0);
        let scaled: Vec<f64> = row.iter().map(|f| alpha * f).collect();
        let scaled_loss = w * (logsumexp(&scaled) - scaled[y]);
        let plain = w * (logsumexp(&row) - row[y]);
        let r = scaled_softmax_residual(&row, alpha, w);
        worst = worst.max((scaled_loss - (alpha * plain + r)).abs());
        ends_exact &= scaled_softmax_residual(&row, 1.0, w) == 0.0;
        ends_exact &= scaled_softmax_residual(&row, 0.0, w) == w * (v as f64).ln();
    }
    outcome(
        worst <= 1e-10 && ends_exact,
        format!("1000 rows, max |scaled - (alpha*l + residual)| = {worst:.3e}, endpoints exact: {ends_exact}"),
    )
}

fn curriculum() -> Outcome {
    let mut s = CurriculumState::new(DEFAULT_DECAY);
    let start = curriculum_alphas(&s);
    let (mut increasing, mut sum_err, mut prev) = (true, 0.0f64, f64::NEG_INFINITY);
    for i in 0..1000u64 {
        s.t = i * 1_000_000 / 999;
        let a = curriculum_alphas(&s);
        increasing &= a[1] > prev;
        prev = a[1];
        sum_err = sum_err.max((a.iter().sum::<f64>() - 1.0).abs());
    }
    outcome(
        start == [0.5, 0.0, 0.5] && increasing && sum_err <= 1e-12,
        format!("alpha(0) = {start:?}, fr share strictly increasing: {increasing}, max |sum - 1| = {sum_err:.3e}"),
    )
}

fn gradient_check_all_modes() -> Outcome {
    let start = Instant::now();
    let model = Model::<f64>::init(&small_config(true)).unwrap();
    let batch = small_batch(1);
    let w_fg = TokenWeightVector::normalized(vec![2.0, 0.7, 0.3]);
    let state = CurriculumState {
        theta: [0.2, -0.1, 0.05],
        c: 1e-4,
        t: 5000,
    };
    let results = gradient_check(&model, &batch, &w_fg, &state, &WeightMode::ALL, 1e-5);
    let (mode, name, worst) = results
        .iter()
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .cloned()
        .unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-4 && secs <= 300.0,
        format!(
            "{} tensor/mode pairs, worst {worst:.3e} ({mode} {name}), {secs:.1} s",
            results.len()
        ),
    )
}

fn random_history(ids: &SemanticIdTable, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let vocab = ids.vocab();
    (0..rng.random_range(1..=4))
        .flat_map(|_| vocab.encode_id(ids.codes(rng.random_range(0..ids.len()))))
        .collect()
}

fn beam_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = Vec::new();
    for m in 0..20 {
        let n = rng.random_range(1..=64);
        let ids = random_table(n, &mut rng);
        let mut cfg = small_config(m % 4 < 2);
        cfg.seed = m as u64;
        let mut model = Model::<f64>::init(&cfg).unwrap();
        let trained = m % 2 == 1;
        if trained {
            let vocab = ids.vocab();
            let examples = (0..64)
                .map(|_| Example {
                    x: random_history(&ids, &mut rng),
                    y: vocab.encode_id(ids.codes(rng.random_range(0..n))),
                    w_fr: TokenWeightVector::uniform(GC_LAYERS),
                })
                .collect();
            let data = TrainData {
                examples,
                w_fg: TokenWeightVector::uniform(GC_LAYERS),
                bos: vocab.bos(),
            };
            let tc = TrainConfig {
                batch_size: 8,
                steps: 40,
                mode: WeightMode::None,
                seed: m as u64,
                ..TrainConfig::default()
            };
            let mut state = TrainState::new(&model, &tc);
            train_steps(&mut model, &mut state, &data, &tc, tc.steps, |_, _, _| Ok(())).unwrap();
        }
        for q in 0..3 {
            let x = random_history(&ids, &mut rng);
            if !beam_matches_oracle(&model, &x, &ids) {
                failures.push(format!("model {m} (n = {n}, trained {trained}) query {q}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "20 models (10 trained), 3 queries each, N <= 64: rankings identical".to_string()
        } else {
            format!("mismatches: {}", failures.join(", "))
        },
    )
}

fn diagnostics_fixtures() -> Outcome {
    let ids = SemanticIdTable::from_codes(
        vec!["a".into(), "b".into(), "c".into()],
        vec![vec![0, 0], vec![0, 1], vec![1, 0]],
        2,
    )
    .unwrap();
    let ratio = layer_filter_ratio(&ids, FilterAveraging::ItemWeighted);
    let p = purity(&[3, 1]);
    let pass = (ratio[0] - 4.0 / 9.0).abs() <= 1e-12 && (ratio[1] - 1.0 / 3.0).abs() <= 1e-12 && (p - 0.1887).abs() <= 1e-3;
    outcome(pass, format!("filter ratio {ratio:.6?} (want [4/9, 1/3]), purity {{3,1}} = {p:.4}"))
}

fn determinism() -> Outcome {
    let cfg = load_config("configs/small.json");
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let run = || {
        let tmp = tempfile::tempdir().unwrap();
        let dir = pool.install(|| {
            pipeline::cmd_synth(&cfg, tmp.path()).unwrap();
            pipeline::cmd_quantize(&cfg, tmp.path(), &Inputs::default()).unwrap();
            pipeline::cmd_train(&cfg, tmp.path(), &Inputs::default()).unwrap()
        });
        let files: Vec<Vec<u8>> = [
            format!("{CHECKPOINT_DIR}/{TENSOR_FILE}"),
            format!("{CHECKPOINT_DIR}/{MANIFEST_FILE}"),
            LOG_FILE.to_string(),
        ]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect();
        files
    };
    let (a, b) = (run(), run());
    let same = a == b;
    outcome(
        same,
        format!(
            "two single-threaded runs: checkpoint and log byte-identical: {same} ({} tensor bytes)",
            a[0].len()
        ),
    )
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let cfg = load_config("configs/e2e.json");
    let tmp = tempfile::tempdir().unwrap();
    let dir = pipeline::cmd_ablate(&cfg, tmp.path()).unwrap();
    let table = pipeline::read_table(&dir).unwrap();
    let row = |mode: WeightMode, seed: u64| {
        table
            .rows
            .iter()
            .find(|r| r.mode == mode && r.seed == seed)
            .expect("ablate covers every mode and seed")
    };
    let seeds = &cfg.ablate.seeds;
    let mean = |mode| seeds.iter().map(|&s| row(mode, s).hit["10"]).sum::<f64>() / seeds.len() as f64;
    let (plain, full) = (mean(WeightMode::None), mean(WeightMode::MultiCurriculum));
    let tail_wins = seeds
        .iter()
        .filter(|&&s| row(WeightMode::MultiCurriculum, s).tail_hit["10"] > row(WeightMode::None, s).tail_hit["10"])
        .count();
    let l1_wins = seeds
        .iter()
        .filter(|&&s| row(WeightMode::MultiCurriculum, s).decile_l1 < row(WeightMode::None, s).decile_l1)
        .count();
    for &s in seeds {
        let (p, f) = (row(WeightMode::None, s), row(WeightMode::MultiCurriculum, s));
        println!(
            "      seed {s}: hit@10 {:.4} -> {:.4}, tail hit@10 {:.4} -> {:.4}, decile L1 {:.4} -> {:.4}",
            p.hit["10"], f.hit["10"], p.tail_hit["10"], f.tail_hit["10"], p.decile_l1, f.decile_l1
        );
    }
    let elapsed = start.elapsed();
    let a = full >= plain - 0.005;
    let b = tail_wins >= 3;
    let c = l1_wins >= 3;
    let time = elapsed <= Duration::from_secs(30 * 60);
    let threads = rayon::current_num_threads();
    outcome(
        a && b && c && time,
        format!(
            "(a) mean hit@10 {full:.4} vs {plain:.4}: {}; (b) tail wins {tail_wins}/{}: {}; (c) L1 wins {l1_wins}/{}: {}; {:.1} min on {threads} thread(s)",
            verdict(a),
            seeds.len(),
            verdict(b),
            seeds.len(),
            verdict(c),
            elapsed.as_secs_f64() / 60.0
        ),
    )
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "not met"
    }
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("lemma1-dispersion", lemma1_dispersion_monotone),
        ("lemma2-effective-number", lemma2_effective_number),
        ("normalization", normalization),
        ("scaled-logit-algebra", scaled_logit_algebra),
        ("curriculum", curriculum),
        ("gradient-check", gradient_check_all_modes),
        ("beam-oracle", beam_oracle),
        ("diagnostics-fixtures", diagnostics_fixtures),
        ("determinism", determinism),
        ("end-to-end", end_to_end),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let out = f();
        println!("{} {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
