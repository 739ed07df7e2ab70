//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{embeddings, fd_info_nce_grad, gaussian_vec, oracle_eval, rel_err, rng};
use simmer_core::corpus::{parse_recipes, ComponentMask};
use simmer_core::encoder::{encode, AdapterConfig, EncoderConfig, EncoderParams, Tensor};
use simmer_core::eval::EvalReport;
use simmer_core::index::encode_dump;
use simmer_core::linalg::Matrix;
use simmer_core::params_file::encode_params;
use simmer_core::pipeline::{encode_direction, render_direction};
use simmer_core::prompting::{render_image_prompt, render_recipe_prompt, Role};
use simmer_core::synth::{planted_corpus, PlantedSpec};
use simmer_core::trainer::{batch_gradients, Adam, AdamConfig, Schedule};
use simmer_core::{
    augment, build_direction_datasets, evaluate, info_nce, info_nce_grad, train, train_step_cached,
    train_step_full, Direction, EmbeddingDump, EmbeddingVector, EvalConfig, EvalDirection,
    PairedCorpus, TrainConfig, UpdateMode,
};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn within(limit_secs: u64, elapsed: Duration) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn tiny_encoder(seed: u64, dropout: f64) -> EncoderParams {
    let cfg = EncoderConfig {
        dim: 8,
        buckets: 32,
        feature_dim: 6,
        hash_seed: 11,
        adapter: Some(AdapterConfig {
            rank: 2,
            alpha: 4.0,
            dropout,
        }),
    };
    let mut p = EncoderParams::init(cfg, seed).unwrap();
    let mut g = rng(seed ^ 0xabc);
    for a in [p.text_adapter.as_mut(), p.image_adapter.as_mut()]
        .into_iter()
        .flatten()
    {
        let (r, c) = a.up.shape();
        a.up = Matrix::from_vec(r, c, gaussian_vec(&mut g, r * c));
    }
    p
}

fn small_corpus(pairs: usize, seed: u64) -> PairedCorpus {
    planted_corpus(PlantedSpec {
        pairs,
        classes: 2,
        feature_dim: 6,
        seed,
    })
    .unwrap()
}

fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let tau = 0.02;
    let mut g = rng(2024);
    let mut loss_worst = 0.0f64;
    for _ in 0..20 {
        let q: Vec<Vec<f64>> = (0..4).map(|_| gaussian_vec(&mut g, 8)).collect();
        let c: Vec<Vec<f64>> = (0..4).map(|_| gaussian_vec(&mut g, 8)).collect();
        let got = info_nce_grad(&embeddings("q", &q), &embeddings("c", &c), tau).unwrap();
        let (fq, fc) = fd_info_nce_grad(&q, &c, tau, 1e-6);
        for i in 0..4 {
            for k in 0..8 {
                loss_worst = loss_worst.max(rel_err(got.query[i][k], fq[i][k], 1e-4));
                loss_worst = loss_worst.max(rel_err(got.candidate[i][k], fc[i][k], 1e-4));
            }
        }
    }

    let h = 1e-6;
    let mut param_worst = 0.0f64;
    let mut checked = 0usize;
    for (seed, dropout) in [(1u64, 0.0), (2, 0.1)] {
        let corpus = small_corpus(4, seed);
        let (i2r, r2i) = build_direction_datasets(&corpus, false).unwrap();
        let params = tiny_encoder(seed, dropout);
        let cfg = TrainConfig {
            batch_size: 4,
            chunk_size: 4,
            tau,
            update: UpdateMode::Full,
            ..Default::default()
        };
        for batch in [&i2r, &r2i] {
            let loss = |p: &EncoderParams| {
                batch_gradients(p, batch, &corpus, &cfg, seed, Schedule::Full)
                    .unwrap()
                    .loss
            };
            let analytic =
                batch_gradients(&params, batch, &corpus, &cfg, seed, Schedule::Full).unwrap();
            for t in Tensor::ALL {
                let n = params.tensor(t).unwrap().as_slice().len();
                for k in 0..n {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    plus.tensor_mut(t).unwrap().as_mut_slice()[k] += h;
                    minus.tensor_mut(t).unwrap().as_mut_slice()[k] -= h;
                    let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                    let a = analytic.grads.get(t).unwrap().as_slice()[k];
                    param_worst = param_worst.max(rel_err(a, fd, 1e-4));
                    checked += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        loss_worst <= 1e-4 && param_worst <= 1e-3 && within(10, elapsed),
        format!(
            "loss-grad max rel err {loss_worst:.2e} (tol 1e-4), parameter-grad max rel err {param_worst:.2e} over \
             {checked} coords (tol 1e-3), {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn gradcache_equivalence() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for trial in 0..10u64 {
        let corpus = small_corpus(8, 100 + trial);
        let (i2r, r2i) = build_direction_datasets(&corpus, false).unwrap();
        let batch = if trial % 2 == 0 { &i2r } else { &r2i };
        let base = tiny_encoder(trial, 0.1);
        let update = if trial < 5 {
            UpdateMode::Full
        } else {
            UpdateMode::AdapterOnly
        };
        let mk = |chunk| TrainConfig {
            batch_size: 8,
            chunk_size: chunk,
            update,
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut full = base.clone();
        train_step_full(
            &mut full,
            &mut Adam::new(mk(8).adam),
            batch,
            &corpus,
            &mk(8),
            trial,
        )
        .unwrap();
        for chunk in [1, 2, 4, 8] {
            let mut cached = base.clone();
            let cfg = mk(chunk);
            train_step_cached(
                &mut cached,
                &mut Adam::new(cfg.adam),
                batch,
                &corpus,
                &cfg,
                trial,
            )
            .unwrap();
            for t in Tensor::ALL {
                let (a, b) = (full.tensor(t).unwrap(), cached.tensor(t).unwrap());
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    worst = worst.max(rel_err(*x, *y, f64::MIN_POSITIVE));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-9 && within(10, elapsed),
        format!(
            "max rel difference of updated parameters {worst:.2e} (tol 1e-9), {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn closed_forms() -> Verdict {
    let mut g = rng(5);
    let one = info_nce(
        &embeddings("q", &[gaussian_vec(&mut g, 8)]),
        &embeddings("c", &[gaussian_vec(&mut g, 8)]),
        0.02,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for b in [2usize, 4, 8, 128] {
        let q: Vec<Vec<f64>> = (0..b).map(|_| gaussian_vec(&mut g, 8)).collect();
        let shared = gaussian_vec(&mut g, 8);
        let c = vec![shared; b];
        let l = info_nce(&embeddings("q", &q), &embeddings("c", &c), 0.02).unwrap();
        worst = worst.max((l - (b as f64).ln()).abs());
    }
    verdict(
        one == 0.0 && worst <= 1e-12,
        format!("B=1 loss {one:e}, max |loss - ln B| {worst:.2e} for B in {{2,4,8,128}}"),
    )
}

fn metric_oracle() -> Verdict {
    let start = Instant::now();
    let n = 2000;
    let d = 16;
    let mut g = rng(77);
    let queries: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut g, d)).collect();
    let cands: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| {
            let e = gaussian_vec(&mut g, d);
            q.iter().zip(e).map(|(a, b)| a + 1.2 * b).collect()
        })
        .collect();
    let q_ids: Vec<String> = (0..n).map(|i| format!("q{i:04}")).collect();
    let c_ids: Vec<String> = (0..n).map(|i| format!("c{:04}", (i * 1231) % n)).collect();
    let mk = |ids: &[String], rows: &[Vec<f64>]| {
        let e = ids
            .iter()
            .zip(rows)
            .map(|(id, v)| EmbeddingVector::new(id.clone(), v.clone()).unwrap())
            .collect();
        EmbeddingDump::new(d, "acceptance", e).unwrap()
    };
    let pairing = q_ids.iter().cloned().zip(c_ids.iter().cloned()).collect();
    let cfg = EvalConfig {
        pool_size: 1000,
        repeats: 10,
        ks: vec![1, 5, 10],
        seed: 31,
        direction: EvalDirection::I2r,
    };
    let report = evaluate(&mk(&q_ids, &queries), &mk(&c_ids, &cands), &pairing, &cfg).unwrap();
    let got = &report.directions[0];
    let want = oracle_eval(&queries, &cands, &c_ids, 1000, 10, &cfg.ks, 31);
    let mut dev = (got.med_r - want.med_r).abs();
    for (i, k) in cfg.ks.iter().enumerate() {
        dev = dev.max((got.recall[k] - want.recall[i]).abs());
    }
    for (r, (med, rec)) in want.per_repeat.iter().enumerate() {
        dev = dev.max((got.per_repeat[r].med_r - med).abs());
        for (i, k) in cfg.ks.iter().enumerate() {
            dev = dev.max((got.per_repeat[r].recall[k] - rec[i]).abs());
        }
    }
    let monotone = got
        .per_repeat
        .iter()
        .all(|r| r.recall[&1] <= r.recall[&5] && r.recall[&5] <= r.recall[&10]);
    let elapsed = start.elapsed();
    verdict(
        dev <= 1e-12 && monotone && within(30, elapsed),
        format!(
            "max deviation from oracle {dev:.2e} (tol 1e-12), R@1<=R@5<=R@10 in all repeats: {monotone}, \
             medR {:.2} R@1 {:.3}, {:.2}s",
            got.med_r,
            got.recall[&1],
            elapsed.as_secs_f64()
        ),
    )
}

fn augmentation_contract() -> Verdict {
    let corpus = planted_corpus(PlantedSpec {
        pairs: 64,
        classes: 8,
        feature_dim: 4,
        seed: 9,
    })
    .unwrap();
    let expected = ["111", "100", "010", "001"];
    let masks_ok = corpus.recipes().iter().all(|r| {
        let v = augment(r).unwrap();
        v.iter().map(|x| x.present.to_string()).collect::<Vec<_>>() == expected
            && v.iter().all(|x| x.recipe.present() == x.present)
    });
    let (i2r, r2i) = build_direction_datasets(&corpus, true).unwrap();
    let (p2r, p2i) = build_direction_datasets(&corpus, false).unwrap();
    let counts_ok = i2r.len() == 4 * p2r.len() && r2i.len() == 4 * p2i.len() && p2r.len() == 64;
    let title_only = ComponentMask::TITLE.to_string() == "100";
    verdict(
        masks_ok && counts_ok && title_only,
        format!(
            "4 variants with masks {expected:?} per recipe: {masks_ok}; pairs per direction {} (plain {})",
            i2r.len(),
            p2r.len()
        ),
    )
}

fn prompt_golden() -> Verdict {
    let fixture = include_str!("fixtures/golden_recipe.json");
    let golden = include_str!("fixtures/golden_prompts.txt");
    let expected: Vec<&str> = golden.lines().filter(|l| !l.starts_with('#')).collect();
    let recipe = parse_recipes(
        std::io::Cursor::new(fixture),
        simmer_core::Validation::Strict,
    )
    .unwrap()
    .remove(0);
    let variants = augment(&recipe).unwrap();
    let mut rendered = Vec::new();
    for role in [Role::Query, Role::Candidate] {
        rendered.extend(
            render_image_prompt(&recipe.image_ref, role)
                .unwrap()
                .text
                .lines()
                .map(String::from),
        );
    }
    rendered.push(
        render_recipe_prompt(&variants[0], Role::Query)
            .unwrap()
            .text,
    );
    rendered.push(
        render_recipe_prompt(&variants[0], Role::Candidate)
            .unwrap()
            .text,
    );
    rendered.push(
        render_recipe_prompt(&variants[1], Role::Candidate)
            .unwrap()
            .text,
    );
    rendered.push(
        render_recipe_prompt(&variants[2], Role::Candidate)
            .unwrap()
            .text,
    );
    rendered.push(
        render_recipe_prompt(&variants[3], Role::Query)
            .unwrap()
            .text,
    );
    let mismatches = expected
        .iter()
        .zip(&rendered)
        .filter(|(a, b)| a.as_bytes() != b.as_bytes())
        .count();
    let ok = mismatches == 0 && expected.len() == rendered.len();
    verdict(
        ok,
        format!("{} golden lines, {mismatches} mismatches", expected.len()),
    )
}

struct PipelineRun {
    params: Vec<u8>,
    dumps: Vec<Vec<u8>>,
    reports: Vec<u8>,
    i2r: EvalReport,
    r2i: EvalReport,
    final_accuracy: f64,
}

fn run_pipeline() -> PipelineRun {
    let corpus = planted_corpus(PlantedSpec::default()).unwrap();
    let cfg = TrainConfig {
        batch_size: 32,
        chunk_size: 8,
        tau: 0.02,
        steps: 500,
        seed: 7,
        augment: false,
        update: UpdateMode::AdapterOnly,
        adam: AdamConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
    };
    let out = train(&corpus, EncoderConfig::new(corpus.feature_dim()), &cfg).unwrap();
    let tail = &out.log[out.log.len() - 20..];
    let final_accuracy = tail.iter().map(|e| e.accuracy).sum::<f64>() / tail.len() as f64;
    let mut dumps = Vec::new();
    let mut reports = Vec::new();
    let mut eval = |direction: Direction, ed: EvalDirection| {
        let enc =
            encode_direction(&out.params, corpus.recipes(), corpus.features(), direction).unwrap();
        dumps.push(encode_dump(&enc.queries).unwrap());
        dumps.push(encode_dump(&enc.candidates).unwrap());
        let cfg = EvalConfig {
            pool_size: 256,
            repeats: 10,
            ks: vec![1, 5, 10],
            seed: 7,
            direction: ed,
        };
        let report = evaluate(&enc.queries, &enc.candidates, &enc.pairing(), &cfg).unwrap();
        report.write_jsonl(&mut reports).unwrap();
        report
    };
    let i2r = eval(Direction::ImageToRecipe, EvalDirection::I2r);
    let r2i = eval(Direction::RecipeToImage, EvalDirection::R2i);
    PipelineRun {
        params: encode_params(&out.params).unwrap(),
        dumps,
        reports,
        i2r,
        r2i,
        final_accuracy,
    }
}

fn synthetic_end_to_end(run: &PipelineRun, elapsed: Duration) -> Verdict {
    let a = &run.i2r.directions[0];
    let b = &run.r2i.directions[0];
    let ok = a.recall[&1] >= 0.95
        && b.recall[&1] >= 0.95
        && a.med_r == 1.0
        && b.med_r == 1.0
        && within(60, elapsed);
    verdict(
        ok,
        format!(
            "i2r R@1 {:.4} medR {}, r2i R@1 {:.4} medR {}, final in-batch accuracy {:.3}, {:.2}s on one thread",
            a.recall[&1],
            a.med_r,
            b.recall[&1],
            b.med_r,
            run.final_accuracy,
            elapsed.as_secs_f64()
        ),
    )
}

fn lora_identity() -> Verdict {
    let corpus = planted_corpus(PlantedSpec {
        pairs: 64,
        classes: 8,
        feature_dim: 16,
        seed: 3,
    })
    .unwrap();
    let cfg = EncoderConfig {
        dim: 32,
        buckets: 512,
        ..EncoderConfig::new(16)
    };
    let adapted = EncoderParams::init(cfg, 4).unwrap();
    let mut bare = adapted.clone();
    bare.text_adapter = None;
    bare.image_adapter = None;
    let encode_all = |p: &EncoderParams| -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for d in [Direction::ImageToRecipe, Direction::RecipeToImage] {
            let (q, c, _) = render_direction(corpus.recipes(), d).unwrap();
            for s in q.iter().chain(&c) {
                let f = s
                    .image_ref
                    .as_ref()
                    .map(|r| corpus.image_features(r).unwrap());
                out.push(encode(p, s, f, None).unwrap().values);
            }
        }
        out
    };
    let base_out = encode_all(&bare);
    let identical = encode_all(&adapted)
        .iter()
        .zip(&base_out)
        .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));

    let train_cfg = TrainConfig {
        batch_size: 16,
        chunk_size: 16,
        steps: 10,
        seed: 4,
        augment: false,
        update: UpdateMode::AdapterOnly,
        adam: AdamConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
        ..Default::default()
    };
    let trained = simmer_core::trainer::train_from(adapted.clone(), &corpus, &train_cfg)
        .unwrap()
        .params;
    let differs = encode_all(&trained) != base_out;
    let frozen = trained.text == adapted.text && trained.image == adapted.image;
    verdict(
        identical && differs && frozen,
        format!("bitwise identical at init: {identical}; differs after 10 steps: {differs}; base unchanged: {frozen}"),
    )
}

fn determinism(first: &PipelineRun) -> Verdict {
    let second = single_thread(run_pipeline);
    let threaded = run_pipeline();
    let same = |a: &PipelineRun, b: &PipelineRun| {
        a.params == b.params && a.dumps == b.dumps && a.reports == b.reports
    };
    let ok = same(first, &second);
    verdict(
        ok,
        format!(
            "two single-threaded runs byte-identical: {ok} ({} dump bytes, {} report bytes); multi-threaded run \
             identical too: {}",
            first.dumps.iter().map(Vec::len).sum::<usize>(),
            first.reports.len(),
            same(first, &threaded)
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Verdict)> = vec![
        ("gradient fidelity", gradient_fidelity()),
        ("gradcache equivalence", gradcache_equivalence()),
        ("infonce closed forms", closed_forms()),
        ("metric oracle", metric_oracle()),
        ("augmentation contract", augmentation_contract()),
        ("prompt byte-exactness", prompt_golden()),
    ];
    let start = Instant::now();
    let run = single_thread(run_pipeline);
    let elapsed = start.elapsed();
    results.push(("synthetic end-to-end", synthetic_end_to_end(&run, elapsed)));
    results.push(("lora identity-at-init", lora_identity()));
    results.push(("determinism", determinism(&run)));

    let mut failed = 0;
    for (name, v) in &results {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {}", v.detail);
        failed += usize::from(!v.passed);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
