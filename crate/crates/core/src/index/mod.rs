//! Embedding persistence and exact cosine search.

mod dump;

use std::cmp::Ordering;

use rayon::prelude::*;

pub use dump::{
    decode_dump, encode_dump, load_dump, save_dump, EmbeddingDump, DUMP_HEADER_LEN, DUMP_MAGIC,
    DUMP_VERSION, LOADED_SOURCE_TAG,
};

use crate::encoder::{cosine_with_norms, EmbeddingVector};
use crate::error::{Error, Result};

/// Ranked candidates for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub query_id: String,
    pub hits: Vec<(String, f64)>,
    pub k: usize,
}

/// Ordering of scored candidates: score descending, then id bytes
/// ascending. `Less` means ranked earlier.
#[inline]
pub fn rank_order(score_a: f64, id_a: &str, score_b: f64, id_b: &str) -> Ordering {
    score_b
        .partial_cmp(&score_a)
        .expect("finite scores")
        .then_with(|| id_a.as_bytes().cmp(id_b.as_bytes()))
}

/// Vectors with their norms, checked nonzero.
pub(crate) struct Normed<'a> {
    pub entries: &'a [EmbeddingVector],
    pub norms: Vec<f64>,
}

impl<'a> Normed<'a> {
    pub fn new(entries: &'a [EmbeddingVector]) -> Result<Self> {
        let norms = entries
            .iter()
            .map(|e| {
                let n = e.norm();
                if n > 0.0 {
                    Ok(n)
                } else {
                    Err(Error::ZeroNorm(e.id.clone()))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries, norms })
    }

    #[inline]
    pub fn score(&self, i: usize, other: &Normed<'_>, j: usize) -> f64 {
        cosine_with_norms(
            &self.entries[i].values,
            self.norms[i],
            &other.entries[j].values,
            other.norms[j],
        )
    }
}

fn check_dims(a: &EmbeddingDump, b: &EmbeddingDump) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            actual: a.dim(),
            context: "query dump vs candidate dump".into(),
        });
    }
    Ok(())
}

/// Exact top-`k` by cosine for every query, in query order.
pub fn top_k(
    queries: &EmbeddingDump,
    candidates: &EmbeddingDump,
    k: usize,
) -> Result<Vec<RankedResult>> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    check_dims(queries, candidates)?;
    let q = Normed::new(queries.entries())?;
    let c = Normed::new(candidates.entries())?;
    let take = k.min(c.entries.len());

    Ok((0..q.entries.len())
        .into_par_iter()
        .map(|qi| {
            let scores: Vec<f64> = (0..c.entries.len()).map(|ci| q.score(qi, &c, ci)).collect();
            let cmp = |&a: &usize, &b: &usize| {
                rank_order(scores[a], &c.entries[a].id, scores[b], &c.entries[b].id)
            };
            let mut order: Vec<usize> = (0..c.entries.len()).collect();
            if take < order.len() {
                order.select_nth_unstable_by(take, cmp);
                order.truncate(take);
            }
            order.sort_unstable_by(cmp);
            RankedResult {
                query_id: q.entries[qi].id.clone(),
                hits: order
                    .into_iter()
                    .map(|ci| (c.entries[ci].id.clone(), scores[ci]))
                    .collect(),
                k,
            }
        })
        .collect())
}
