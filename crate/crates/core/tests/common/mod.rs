//! Reference implementations used as test oracles. Nothing here calls into
//! the crate's numeric code; only plain data types cross the boundary.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use simmer_core::encoder::{EmbeddingVector, EncoderParams};
use simmer_core::linalg::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn embeddings(prefix: &str, rows: &[Vec<f64>]) -> Vec<EmbeddingVector> {
    rows.iter()
        .enumerate()
        .map(|(i, v)| EmbeddingVector::new(format!("{prefix}{i}"), v.clone()).unwrap())
        .collect()
}

fn naive_cos(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..a.len() {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// InfoNCE straight from the definition: no max subtraction, no log-sum-exp.
pub fn naive_info_nce(q: &[Vec<f64>], c: &[Vec<f64>], tau: f64) -> f64 {
    let b = q.len();
    let mut total = 0.0;
    for i in 0..b {
        let num = (naive_cos(&q[i], &c[i]) / tau).exp();
        let mut den = 0.0;
        for j in 0..b {
            den += (naive_cos(&q[i], &c[j]) / tau).exp();
        }
        total += (num / den).ln();
    }
    -total / b as f64
}

/// Central differences of `naive_info_nce` with respect to every entry.
pub fn fd_info_nce_grad(
    q: &[Vec<f64>],
    c: &[Vec<f64>],
    tau: f64,
    h: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut gq = vec![vec![0.0; q[0].len()]; q.len()];
    let mut gc = gq.clone();
    for i in 0..q.len() {
        for k in 0..q[0].len() {
            let mut plus = q.to_vec();
            let mut minus = q.to_vec();
            plus[i][k] += h;
            minus[i][k] -= h;
            gq[i][k] = (naive_info_nce(&plus, c, tau) - naive_info_nce(&minus, c, tau)) / (2.0 * h);
            let mut plus = c.to_vec();
            let mut minus = c.to_vec();
            plus[i][k] += h;
            minus[i][k] -= h;
            gc[i][k] = (naive_info_nce(q, &plus, tau) - naive_info_nce(q, &minus, tau)) / (2.0 * h);
        }
    }
    (gq, gc)
}

/// Relative error with magnitudes below `floor` measured against `floor`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// FNV-1a 64 with the offset basis xor-ed by `seed`.
pub fn fnv(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Dense count vector of whitespace tokens over `buckets`.
pub fn dense_bag(text: &str, buckets: usize, seed: u64) -> Vec<f64> {
    let mut x = vec![0.0; buckets];
    for t in text.split_whitespace() {
        x[(fnv(seed, t.as_bytes()) % buckets as u64) as usize] += 1.0;
    }
    x
}

pub fn triple_loop_matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.rows()];
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out[r] += m.get(r, c) * x[c];
        }
    }
    out
}

/// Evaluation-mode encoder output computed densely.
pub fn dense_encode(params: &EncoderParams, input: &[f64], text: bool) -> Vec<f64> {
    let (base, adapter) = if text {
        (&params.text, params.text_adapter.as_ref())
    } else {
        (&params.image, params.image_adapter.as_ref())
    };
    let mut out = triple_loop_matvec(base, input);
    if let Some(a) = adapter {
        let hidden = triple_loop_matvec(&a.down, input);
        let delta = triple_loop_matvec(&a.up, &hidden);
        let s = a.alpha / a.down.rows() as f64;
        for (o, d) in out.iter_mut().zip(delta) {
            *o += s * d;
        }
    }
    out
}

/// Rank by full sort (score descending, id ascending), 1-based.
pub fn sort_rank(scores: &[f64], ids: &[String], truth: usize) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then_with(|| ids[a].as_bytes().cmp(ids[b].as_bytes()))
    });
    order.iter().position(|&i| i == truth).unwrap() + 1
}

pub struct OracleMetrics {
    pub per_repeat: Vec<(f64, Vec<f64>)>,
    pub med_r: f64,
    pub recall: Vec<f64>,
}

/// Repeated-pool medR / R@k over `(query vec, truth id, truth vec)` triples
/// whose truths are all distinct.
pub fn oracle_eval(
    queries: &[Vec<f64>],
    cands: &[Vec<f64>],
    cand_ids: &[String],
    pool: usize,
    repeats: usize,
    ks: &[usize],
    seed: u64,
) -> OracleMetrics {
    let mut per_repeat = Vec::new();
    for r in 0..repeats {
        let mut g = ChaCha8Rng::seed_from_u64(seed ^ r as u64);
        let drawn = rand::seq::index::sample(&mut g, queries.len(), pool).into_vec();
        let ids: Vec<String> = drawn.iter().map(|&p| cand_ids[p].clone()).collect();
        let mut ranks = Vec::new();
        for (slot, &p) in drawn.iter().enumerate() {
            let scores: Vec<f64> = drawn
                .iter()
                .map(|&c| naive_cos(&queries[p], &cands[c]))
                .collect();
            ranks.push(sort_rank(&scores, &ids, slot));
        }
        ranks.sort();
        let n = ranks.len();
        let med = if n % 2 == 1 {
            ranks[n / 2] as f64
        } else {
            (ranks[n / 2 - 1] + ranks[n / 2]) as f64 / 2.0
        };
        let rec: Vec<f64> = ks
            .iter()
            .map(|&k| ranks.iter().filter(|&&x| x <= k).count() as f64 / n as f64)
            .collect();
        per_repeat.push((med, rec));
    }
    let m = repeats as f64;
    let med_r = per_repeat.iter().map(|p| p.0).sum::<f64>() / m;
    let recall = (0..ks.len())
        .map(|i| per_repeat.iter().map(|p| p.1[i]).sum::<f64>() / m)
        .collect();
    OracleMetrics {
        per_repeat,
        med_r,
        recall,
    }
}
