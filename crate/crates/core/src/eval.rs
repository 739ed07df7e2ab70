//! Repeated-sampling retrieval evaluation.
//!
//! Each repeat `r` draws `pool_size` query/truth pairs uniformly without
//! replacement (ChaCha8 seeded with `seed ^ r`), restricts candidates to the
//! truths of the drawn pairs, and ranks every drawn query's truth among
//! them. Per repeat, medR is the median rank (mean of the two central ranks
//! for an even count) and R@k the fraction of ranks `<= k`. Reported values
//! are plain means over repeats.
//!
//! Ranks are 1-based and pessimistic under ties: a candidate with the same
//! score as the truth ranks ahead of it when its id sorts first.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::encoder::EmbeddingVector;
use crate::error::{Error, Result};
use crate::index::{rank_order, EmbeddingDump, Normed};
use crate::prompting::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalDirection {
    I2r,
    R2i,
    Both,
}

impl std::str::FromStr for EvalDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i2r" => Ok(Self::I2r),
            "r2i" => Ok(Self::R2i),
            "both" => Ok(Self::Both),
            other => Err(Error::invalid(format!("unknown direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalConfig {
    pub pool_size: usize,
    pub repeats: usize,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub direction: EvalDirection,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pool_size: 1000,
            repeats: 10,
            ks: vec![1, 5, 10],
            seed: 0,
            direction: EvalDirection::I2r,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 || self.repeats == 0 {
            return Err(Error::invalid("pool size and repeats must be positive"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::invalid(
                "ks must be a nonempty list of positive integers",
            ));
        }
        if !self.ks.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("ks must be strictly ascending"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatMetrics {
    #[serde(rename = "medr")]
    pub med_r: f64,
    pub recall: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    pub direction: Direction,
    #[serde(rename = "medr")]
    pub med_r: f64,
    pub recall: BTreeMap<usize, f64>,
    pub per_repeat: Vec<RepeatMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub directions: Vec<DirectionReport>,
}

impl EvalReport {
    pub fn direction(&self, d: Direction) -> Option<&DirectionReport> {
        self.directions.iter().find(|r| r.direction == d)
    }

    /// One summary line per direction followed by its per-repeat lines.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            record: &'static str,
            direction: Direction,
            medr: f64,
            recall: &'a BTreeMap<usize, f64>,
            pool: usize,
            repeats: usize,
            seed: u64,
        }
        #[derive(Serialize)]
        struct Repeat<'a> {
            record: &'static str,
            direction: Direction,
            repeat: usize,
            medr: f64,
            recall: &'a BTreeMap<usize, f64>,
        }
        for d in &self.directions {
            serde_json::to_writer(
                &mut out,
                &Summary {
                    record: "summary",
                    direction: d.direction,
                    medr: d.med_r,
                    recall: &d.recall,
                    pool: self.config.pool_size,
                    repeats: self.config.repeats,
                    seed: self.config.seed,
                },
            )?;
            out.write_all(b"\n")?;
            for (i, r) in d.per_repeat.iter().enumerate() {
                serde_json::to_writer(
                    &mut out,
                    &Repeat {
                        record: "repeat",
                        direction: d.direction,
                        repeat: i,
                        medr: r.med_r,
                        recall: &r.recall,
                    },
                )?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// 1-based rank of `truth_id` among `candidates` by descending cosine.
pub fn rank_of_truth(
    query: &EmbeddingVector,
    candidates: &EmbeddingDump,
    truth_id: &str,
) -> Result<usize> {
    if query.dim() != candidates.dim() {
        return Err(Error::DimensionMismatch {
            expected: candidates.dim(),
            actual: query.dim(),
            context: format!("query {:?}", query.id),
        });
    }
    let q = Normed::new(std::slice::from_ref(query))?;
    let c = Normed::new(candidates.entries())?;
    let truth = candidates
        .entries()
        .iter()
        .position(|e| e.id == truth_id)
        .ok_or_else(|| Error::UnknownId(truth_id.to_string()))?;
    let scores: Vec<f64> = (0..c.entries.len()).map(|j| q.score(0, &c, j)).collect();
    let ids: Vec<&str> = c.entries.iter().map(|e| e.id.as_str()).collect();
    Ok(rank_among(&scores, &ids, truth))
}

/// Rank of position `truth` given all scores: one plus the number of
/// candidates ordered strictly ahead of it.
fn rank_among(scores: &[f64], ids: &[&str], truth: usize) -> usize {
    let (ts, tid) = (scores[truth], ids[truth]);
    1 + scores
        .iter()
        .zip(ids)
        .enumerate()
        .filter(|&(j, (&s, id))| j != truth && rank_order(s, id, ts, tid).is_lt())
        .count()
}

/// Median with the even-count convention of averaging the central pair.
pub fn median_rank(ranks: &[usize]) -> f64 {
    assert!(!ranks.is_empty(), "median of no ranks");
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

pub fn recall_at(ranks: &[usize], k: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

/// Pool indices for repeat `r`.
pub fn sample_pool(population: usize, pool_size: usize, seed: u64, repeat: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ repeat as u64);
    rand::seq::index::sample(&mut rng, population, pool_size).into_vec()
}

/// Evaluate with cosine scores.
pub fn evaluate(
    queries: &EmbeddingDump,
    candidates: &EmbeddingDump,
    pairing: &HashMap<String, String>,
    config: &EvalConfig,
) -> Result<EvalReport> {
    evaluate_with_transform(queries, candidates, pairing, config, |s| s)
}

/// Evaluate with every cosine passed through `transform` before ranking.
pub fn evaluate_with_transform<F>(
    queries: &EmbeddingDump,
    candidates: &EmbeddingDump,
    pairing: &HashMap<String, String>,
    config: &EvalConfig,
    transform: F,
) -> Result<EvalReport>
where
    F: Fn(f64) -> f64 + Sync,
{
    config.validate()?;
    if queries.dim() != candidates.dim() {
        return Err(Error::DimensionMismatch {
            expected: candidates.dim(),
            actual: queries.dim(),
            context: "query dump vs candidate dump".into(),
        });
    }
    let q = Normed::new(queries.entries())?;
    let c = Normed::new(candidates.entries())?;
    let cand_index: HashMap<&str, usize> = candidates
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect();

    // (query index, truth index) in query-dump order.
    let pairs: Vec<(usize, usize)> = queries
        .entries()
        .iter()
        .enumerate()
        .map(|(qi, e)| {
            let truth = pairing
                .get(&e.id)
                .ok_or_else(|| Error::invalid(format!("no pairing entry for query {:?}", e.id)))?;
            let ci = *cand_index
                .get(truth.as_str())
                .ok_or_else(|| Error::UnknownId(truth.clone()))?;
            Ok((qi, ci))
        })
        .collect::<Result<_>>()?;
    if config.pool_size > pairs.len() {
        return Err(Error::invalid(format!(
            "pool size {} exceeds the {} available pairs",
            config.pool_size,
            pairs.len()
        )));
    }

    let (forward, reverse) = match config.direction {
        EvalDirection::I2r => (Some(Direction::ImageToRecipe), None),
        EvalDirection::R2i => (Some(Direction::RecipeToImage), None),
        EvalDirection::Both => (
            Some(Direction::ImageToRecipe),
            Some(Direction::RecipeToImage),
        ),
    };

    let mut directions = Vec::new();
    if let Some(d) = forward {
        directions.push(run_direction(d, &pairs, &q, &c, config, &transform));
    }
    if let Some(d) = reverse {
        let mut seen = HashMap::new();
        for &(qi, ci) in &pairs {
            if let Some(prev) = seen.insert(ci, qi) {
                return Err(Error::invalid(format!(
                    "candidate {:?} is the truth for both {:?} and {:?}; reverse direction needs a one-to-one pairing",
                    c.entries[ci].id, q.entries[prev].id, q.entries[qi].id
                )));
            }
        }
        let swapped: Vec<(usize, usize)> = pairs.iter().map(|&(qi, ci)| (ci, qi)).collect();
        directions.push(run_direction(d, &swapped, &c, &q, config, &transform));
    }
    Ok(EvalReport {
        config: config.clone(),
        directions,
    })
}

fn run_direction<F>(
    direction: Direction,
    pairs: &[(usize, usize)],
    queries: &Normed<'_>,
    candidates: &Normed<'_>,
    config: &EvalConfig,
    transform: &F,
) -> DirectionReport
where
    F: Fn(f64) -> f64 + Sync,
{
    let per_repeat: Vec<RepeatMetrics> = (0..config.repeats)
        .into_par_iter()
        .map(|r| {
            let drawn = sample_pool(pairs.len(), config.pool_size, config.seed, r);
            // Distinct candidate pool, in draw order.
            let mut pool: Vec<usize> = Vec::with_capacity(drawn.len());
            let mut pos: HashMap<usize, usize> = HashMap::with_capacity(drawn.len());
            for &p in &drawn {
                let ci = pairs[p].1;
                pos.entry(ci).or_insert_with(|| {
                    pool.push(ci);
                    pool.len() - 1
                });
            }
            let ids: Vec<&str> = pool
                .iter()
                .map(|&ci| candidates.entries[ci].id.as_str())
                .collect();
            let ranks: Vec<usize> = drawn
                .par_iter()
                .map(|&p| {
                    let (qi, ci) = pairs[p];
                    let scores: Vec<f64> = pool
                        .iter()
                        .map(|&cj| transform(queries.score(qi, candidates, cj)))
                        .collect();
                    rank_among(&scores, &ids, pos[&ci])
                })
                .collect();
            RepeatMetrics {
                med_r: median_rank(&ranks),
                recall: config
                    .ks
                    .iter()
                    .map(|&k| (k, recall_at(&ranks, k)))
                    .collect(),
            }
        })
        .collect();

    let n = per_repeat.len() as f64;
    let med_r = per_repeat.iter().map(|m| m.med_r).sum::<f64>() / n;
    let recall = config
        .ks
        .iter()
        .map(|&k| (k, per_repeat.iter().map(|m| m.recall[&k]).sum::<f64>() / n))
        .collect();
    DirectionReport {
        direction,
        med_r,
        recall,
        per_repeat,
    }
}
