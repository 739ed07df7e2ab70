//! In-batch InfoNCE over cosine similarities.
//!
//! For a batch of `B` query/candidate embeddings with temperature `tau`:
//!
//! ```text
//! L = -(1/B) Σ_i log( exp(s_ii/tau) / Σ_j exp(s_ij/tau) ),   s_ij = cos(q_i, c_j)
//! ```
//!
//! Rows are evaluated as `logsumexp_j(z_ij) - z_ii` with the row maximum
//! subtracted before exponentiation; at `tau = 0.02` logits reach ±50.

use crate::encoder::EmbeddingVector;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Loss plus gradients with respect to every query and candidate entry.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceGrad {
    pub loss: f64,
    pub query: Vec<Vec<f64>>,
    pub candidate: Vec<Vec<f64>>,
    /// Fraction of rows whose positive strictly beats every negative.
    pub accuracy: f64,
}

struct Batch {
    q_hat: Vec<Vec<f64>>,
    c_hat: Vec<Vec<f64>>,
    q_norm: Vec<f64>,
    c_norm: Vec<f64>,
    /// Row-major `B × B` similarities.
    sim: Vec<f64>,
}

fn unit(v: &EmbeddingVector) -> Result<(Vec<f64>, f64)> {
    let n = norm(&v.values);
    if n == 0.0 {
        return Err(Error::ZeroNorm(v.id.clone()));
    }
    if !n.is_finite() {
        return Err(Error::NonFinite(format!("embedding {:?}", v.id)));
    }
    Ok((v.values.iter().map(|x| x / n).collect(), n))
}

fn prepare(queries: &[EmbeddingVector], candidates: &[EmbeddingVector], tau: f64) -> Result<Batch> {
    if queries.len() != candidates.len() {
        return Err(Error::invalid(format!(
            "{} queries but {} candidates",
            queries.len(),
            candidates.len()
        )));
    }
    if queries.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let dim = queries[0].dim();
    for e in queries.iter().chain(candidates) {
        if e.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: e.dim(),
                context: format!("batch embedding {:?}", e.id),
            });
        }
    }
    let (q_hat, q_norm): (Vec<_>, Vec<_>) = queries
        .iter()
        .map(unit)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let (c_hat, c_norm): (Vec<_>, Vec<_>) = candidates
        .iter()
        .map(unit)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let b = queries.len();
    let mut sim = Vec::with_capacity(b * b);
    for q in &q_hat {
        for c in &c_hat {
            sim.push(dot(q, c));
        }
    }
    Ok(Batch {
        q_hat,
        c_hat,
        q_norm,
        c_norm,
        sim,
    })
}

/// Per-row `(softmax probabilities, row loss)`.
fn rows(sim: &[f64], b: usize, tau: f64) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
    (0..b).map(move |i| {
        let z: Vec<f64> = sim[i * b..(i + 1) * b].iter().map(|s| s / tau).collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let row_loss = max + total.ln() - z[i];
        (exps.into_iter().map(|e| e / total).collect(), row_loss)
    })
}

pub fn info_nce(
    queries: &[EmbeddingVector],
    candidates: &[EmbeddingVector],
    tau: f64,
) -> Result<f64> {
    let batch = prepare(queries, candidates, tau)?;
    let b = queries.len();
    let total: f64 = rows(&batch.sim, b, tau).map(|(_, l)| l).sum();
    Ok(total / b as f64)
}

pub fn info_nce_grad(
    queries: &[EmbeddingVector],
    candidates: &[EmbeddingVector],
    tau: f64,
) -> Result<InfoNceGrad> {
    let batch = prepare(queries, candidates, tau)?;
    let b = queries.len();
    let dim = queries[0].dim();
    let scale = 1.0 / (b as f64 * tau);

    let mut total = 0.0;
    let mut correct = 0usize;
    // dL/ds_ij
    let mut g_sim = vec![0.0; b * b];
    for (i, (p, row_loss)) in rows(&batch.sim, b, tau).enumerate() {
        total += row_loss;
        let s = &batch.sim[i * b..(i + 1) * b];
        if (0..b).all(|j| j == i || s[i] > s[j]) {
            correct += 1;
        }
        for j in 0..b {
            let target = if i == j { 1.0 } else { 0.0 };
            g_sim[i * b + j] = (p[j] - target) * scale;
        }
    }

    let mut gq_hat = vec![vec![0.0; dim]; b];
    let mut gc_hat = vec![vec![0.0; dim]; b];
    for i in 0..b {
        for j in 0..b {
            let g = g_sim[i * b + j];
            for k in 0..dim {
                gq_hat[i][k] += g * batch.c_hat[j][k];
                gc_hat[j][k] += g * batch.q_hat[i][k];
            }
        }
    }
    let query = project_out(gq_hat, &batch.q_hat, &batch.q_norm);
    let candidate = project_out(gc_hat, &batch.c_hat, &batch.c_norm);
    Ok(InfoNceGrad {
        loss: total / b as f64,
        query,
        candidate,
        accuracy: correct as f64 / b as f64,
    })
}

/// Chain through `v ↦ v/|v|`: `(g - (g·v̂) v̂) / |v|`.
fn project_out(grads: Vec<Vec<f64>>, units: &[Vec<f64>], norms: &[f64]) -> Vec<Vec<f64>> {
    grads
        .into_iter()
        .zip(units.iter().zip(norms))
        .map(|(g, (u, &n))| {
            let radial = dot(&g, u);
            g.iter()
                .zip(u)
                .map(|(gk, uk)| (gk - radial * uk) / n)
                .collect()
        })
        .collect()
}
