//! Built-in oracle checks, run by `simmer selfcheck`.
//!
//! Each check compares an implementation path with an independent reference:
//! central finite differences for gradients, the full-batch schedule for the
//! chunk-cached one, a sort-based ranker for the evaluation harness, and
//! byte comparison for the file formats.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::encoder::{AdapterConfig, EmbeddingVector, EncoderConfig, EncoderParams, Tensor};
use crate::error::Result;
use crate::eval::{evaluate, EvalConfig, EvalDirection};
use crate::index::{decode_dump, encode_dump, EmbeddingDump};
use crate::linalg::Matrix;
use crate::params_file::{decode_params, encode_params, round_to_file_precision};
use crate::synth::{planted_corpus, PlantedSpec};
use crate::trainer::{
    batch_gradients, build_direction_datasets, info_nce, info_nce_grad, Schedule, TrainConfig,
    UpdateMode,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

/// Relative error, with magnitudes under `floor` compared at `floor` scale.
fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn vectors(prefix: &str, rows: &[Vec<f64>]) -> Result<Vec<EmbeddingVector>> {
    rows.iter()
        .enumerate()
        .map(|(i, v)| EmbeddingVector::new(format!("{prefix}{i}"), v.clone()))
        .collect()
}

pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        CheckOutcome::from_result("infonce-closed-forms", closed_forms()),
        CheckOutcome::from_result("infonce-gradient", infonce_gradient(seed)),
        CheckOutcome::from_result("encoder-gradient", encoder_gradient(seed)),
        CheckOutcome::from_result("gradcache-equivalence", gradcache(seed)),
        CheckOutcome::from_result("metric-oracle", metric_oracle(seed)),
        CheckOutcome::from_result("format-round-trip", formats(seed)),
    ]
}

fn closed_forms() -> Result<(bool, String)> {
    let one = info_nce(
        &vectors("q", &[vec![1.0, 2.0]])?,
        &vectors("c", &[vec![-1.0, 0.5]])?,
        0.02,
    )?;
    let mut worst = 0.0f64;
    for b in [2usize, 4, 8, 128] {
        let q: Vec<Vec<f64>> = (0..b).map(|i| vec![1.0, i as f64]).collect();
        let c = vec![vec![1.0, 1.0]; b];
        // Identical candidates make every row's logits equal.
        let l = info_nce(&vectors("q", &q)?, &vectors("c", &c)?, 0.02)?;
        worst = worst.max((l - (b as f64).ln()).abs());
    }
    Ok((
        one == 0.0 && worst <= 1e-12,
        format!("B=1 loss {one}, max |L - ln B| {worst:.2e}"),
    ))
}

fn infonce_gradient(seed: u64) -> Result<(bool, String)> {
    let tau = 0.02;
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let q: Vec<Vec<f64>> = (0..4).map(|_| gaussian(&mut rng, 8)).collect();
        let c: Vec<Vec<f64>> = (0..4).map(|_| gaussian(&mut rng, 8)).collect();
        let g = info_nce_grad(&vectors("q", &q)?, &vectors("c", &c)?, tau)?;
        for side in 0..2 {
            for i in 0..4 {
                for k in 0..8 {
                    let (mut qp, mut qm, mut cp, mut cm) =
                        (q.clone(), q.clone(), c.clone(), c.clone());
                    let analytic = if side == 0 {
                        qp[i][k] += h;
                        qm[i][k] -= h;
                        g.query[i][k]
                    } else {
                        cp[i][k] += h;
                        cm[i][k] -= h;
                        g.candidate[i][k]
                    };
                    let lp = info_nce(&vectors("q", &qp)?, &vectors("c", &cp)?, tau)?;
                    let lm = info_nce(&vectors("q", &qm)?, &vectors("c", &cm)?, tau)?;
                    worst = worst.max(rel_err(analytic, (lp - lm) / (2.0 * h), 1e-4));
                }
            }
        }
    }
    Ok((
        worst <= 1e-4,
        format!("max relative error {worst:.2e} (tol 1e-4)"),
    ))
}

fn tiny_encoder(seed: u64) -> Result<EncoderParams> {
    let cfg = EncoderConfig {
        dim: 8,
        buckets: 32,
        feature_dim: 6,
        hash_seed: 3,
        adapter: Some(AdapterConfig {
            rank: 2,
            alpha: 4.0,
            dropout: 0.1,
        }),
    };
    let mut p = EncoderParams::init(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x22);
    for a in [p.text_adapter.as_mut(), p.image_adapter.as_mut()]
        .into_iter()
        .flatten()
    {
        a.up = Matrix::from_vec(8, 2, gaussian(&mut rng, 16));
    }
    Ok(p)
}

fn encoder_gradient(seed: u64) -> Result<(bool, String)> {
    let corpus = planted_corpus(PlantedSpec {
        pairs: 4,
        classes: 2,
        feature_dim: 6,
        seed,
    })?;
    let (i2r, _) = build_direction_datasets(&corpus, false)?;
    let params = tiny_encoder(seed)?;
    let cfg = TrainConfig {
        batch_size: 4,
        chunk_size: 4,
        update: UpdateMode::Full,
        ..Default::default()
    };
    let h = 1e-6;
    let loss_at = |p: &EncoderParams| {
        batch_gradients(p, &i2r, &corpus, &cfg, seed, Schedule::Full).map(|g| g.loss)
    };
    let g = batch_gradients(&params, &i2r, &corpus, &cfg, seed, Schedule::Full)?;
    let mut worst = 0.0f64;
    for t in [
        Tensor::TextBase,
        Tensor::ImageBase,
        Tensor::TextDown,
        Tensor::ImageUp,
    ] {
        let n = params.tensor(t).map_or(0, |m| m.as_slice().len());
        for k in (0..n).step_by(3) {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus.tensor_mut(t).unwrap().as_mut_slice()[k] += h;
            minus.tensor_mut(t).unwrap().as_mut_slice()[k] -= h;
            let fd = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
            let analytic = g.grads.get(t).unwrap().as_slice()[k];
            worst = worst.max(rel_err(analytic, fd, 1e-4));
        }
    }
    Ok((
        worst <= 1e-3,
        format!("max relative error {worst:.2e} (tol 1e-3)"),
    ))
}

fn gradcache(seed: u64) -> Result<(bool, String)> {
    let corpus = planted_corpus(PlantedSpec {
        pairs: 8,
        classes: 4,
        feature_dim: 6,
        seed,
    })?;
    let (_, r2i) = build_direction_datasets(&corpus, false)?;
    let params = tiny_encoder(seed)?;
    let cfg = TrainConfig {
        batch_size: 8,
        chunk_size: 8,
        update: UpdateMode::Full,
        ..Default::default()
    };
    let full = batch_gradients(&params, &r2i, &corpus, &cfg, seed, Schedule::Full)?;
    let mut worst = 0.0f64;
    for chunk_size in [1, 2, 4, 8] {
        let cached = batch_gradients(
            &params,
            &r2i,
            &corpus,
            &cfg,
            seed,
            Schedule::Cached { chunk_size },
        )?;
        for (t, m) in full.grads.iter() {
            let other = cached.grads.get(t).expect("same trainable set");
            for (a, b) in m.as_slice().iter().zip(other.as_slice()) {
                worst = worst.max(rel_err(*a, *b, 1e-300));
            }
        }
        worst = worst.max(rel_err(full.loss, cached.loss, 1e-300));
    }
    Ok((
        worst <= 1e-9,
        format!("max relative difference {worst:.2e} (tol 1e-9)"),
    ))
}

fn metric_oracle(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x33);
    let n = 200;
    let dim = 8;
    let qs: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, dim)).collect();
    let cs: Vec<Vec<f64>> = qs
        .iter()
        .map(|q| {
            q.iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + 1.5 * z
                })
                .collect()
        })
        .collect();
    let q_ids: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    let c_ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    let mk = |ids: &[String], rows: &[Vec<f64>]| -> Result<EmbeddingDump> {
        let entries = ids
            .iter()
            .zip(rows)
            .map(|(id, v)| EmbeddingVector::new(id.clone(), v.clone()))
            .collect::<Result<_>>()?;
        EmbeddingDump::new(dim, "selfcheck", entries)
    };
    let pairing: HashMap<String, String> =
        q_ids.iter().cloned().zip(c_ids.iter().cloned()).collect();
    let cfg = EvalConfig {
        pool_size: 100,
        repeats: 3,
        ks: vec![1, 5, 10],
        seed,
        direction: EvalDirection::I2r,
    };
    let report = evaluate(&mk(&q_ids, &qs)?, &mk(&c_ids, &cs)?, &pairing, &cfg)?;
    let got = &report.directions[0];

    let cos = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        d / (a.iter().map(|x| x * x).sum::<f64>().sqrt()
            * b.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let mut worst = 0.0f64;
    for (r, rep) in got.per_repeat.iter().enumerate() {
        let drawn = crate::eval::sample_pool(n, cfg.pool_size, seed, r);
        let mut ranks: Vec<usize> = drawn
            .iter()
            .map(|&p| {
                let mut order: Vec<usize> = drawn.clone();
                order.sort_by(|&a, &b| {
                    cos(&qs[p], &cs[b])
                        .partial_cmp(&cos(&qs[p], &cs[a]))
                        .unwrap()
                        .then_with(|| c_ids[a].cmp(&c_ids[b]))
                });
                order.iter().position(|&c| c == p).unwrap() + 1
            })
            .collect();
        ranks.sort_unstable();
        let m = ranks.len();
        let med = if m % 2 == 1 {
            ranks[m / 2] as f64
        } else {
            (ranks[m / 2 - 1] + ranks[m / 2]) as f64 / 2.0
        };
        worst = worst.max((med - rep.med_r).abs());
        for &k in &cfg.ks {
            let rk = ranks.iter().filter(|&&x| x <= k).count() as f64 / m as f64;
            worst = worst.max((rk - rep.recall[&k]).abs());
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max deviation from sort-based oracle {worst:.2e}"),
    ))
}

fn formats(seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x44);
    let entries = (0..50)
        .map(|i| {
            let v = gaussian(&mut rng, 16)
                .into_iter()
                .map(|x| f64::from(x as f32))
                .collect();
            EmbeddingVector::new(format!("e{i}"), v)
        })
        .collect::<Result<_>>()?;
    let dump = EmbeddingDump::new(16, "selfcheck", entries)?;
    let bytes = encode_dump(&dump)?;
    let back = decode_dump(&bytes)?;
    let dump_ok = back.entries() == dump.entries() && encode_dump(&back)? == bytes;

    let mut params = tiny_encoder(seed)?;
    round_to_file_precision(&mut params);
    let pbytes = encode_params(&params)?;
    let pback = decode_params(&pbytes)?;
    let params_ok = pback == params && encode_params(&pback)? == pbytes;
    Ok((
        dump_ok && params_ok,
        format!(
            "dump {} bytes ok={dump_ok}, params {} bytes ok={params_ok}",
            bytes.len(),
            pbytes.len()
        ),
    ))
}

/// Finiteness and shape validation of a parameter file.
pub fn check_params_file(path: &std::path::Path) -> CheckOutcome {
    match crate::params_file::load_params(path) {
        Ok(_) => CheckOutcome::new(
            "params-finiteness",
            true,
            format!("{} is valid", path.display()),
        ),
        Err(e) => CheckOutcome::new(
            "params-finiteness",
            false,
            format!("{}: {e}", path.display()),
        ),
    }
}
