//! Encoding whole recipe sets into query/candidate dumps for one retrieval
//! direction, and the pairs file that links them.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{Recipe, RecipeVariant};
use crate::encoder::{encode, EmbeddingVector, EncoderParams};
use crate::error::{Error, Result};
use crate::index::EmbeddingDump;
use crate::prompting::{render_image_prompt, render_recipe_prompt, Direction, PromptedSample};

pub const TOY_SOURCE_TAG: &str = "toy-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDirection {
    pub direction: Direction,
    pub queries: EmbeddingDump,
    pub candidates: EmbeddingDump,
    /// `(query id, truth id)` in query order.
    pub pairs: Vec<(String, String)>,
}

impl EncodedDirection {
    pub fn pairing(&self) -> HashMap<String, String> {
        self.pairs.iter().cloned().collect()
    }
}

/// Rendered `(queries, candidates, pairs)` for one direction.
pub type RenderedDirection = (
    Vec<PromptedSample>,
    Vec<PromptedSample>,
    Vec<(String, String)>,
);

/// Image-to-recipe: one image query per recipe (id = image ref) against
/// recipe candidates (id = recipe id). Recipe-to-image: one recipe query
/// per recipe against the distinct images, in first-appearance order.
pub fn render_direction(recipes: &[Recipe], direction: Direction) -> Result<RenderedDirection> {
    let mut queries = Vec::with_capacity(recipes.len());
    let mut candidates = Vec::with_capacity(recipes.len());
    let mut pairs = Vec::with_capacity(recipes.len());
    let q_role = direction.image_role();
    match direction {
        Direction::ImageToRecipe => {
            for r in recipes {
                queries.push(render_image_prompt(&r.image_ref, q_role)?);
                candidates.push(render_recipe_prompt(
                    &RecipeVariant::whole(r),
                    direction.recipe_role(),
                )?);
                pairs.push((r.image_ref.clone(), r.id.clone()));
            }
        }
        Direction::RecipeToImage => {
            let mut seen = HashSet::new();
            for r in recipes {
                queries.push(render_recipe_prompt(
                    &RecipeVariant::whole(r),
                    direction.recipe_role(),
                )?);
                if seen.insert(r.image_ref.as_str()) {
                    candidates.push(render_image_prompt(&r.image_ref, direction.image_role())?);
                }
                pairs.push((r.id.clone(), r.image_ref.clone()));
            }
        }
    }
    Ok((queries, candidates, pairs))
}

fn encode_all(
    params: &EncoderParams,
    samples: &[PromptedSample],
    features: &EmbeddingDump,
) -> Result<EmbeddingDump> {
    let index: HashMap<&str, &EmbeddingVector> = features
        .entries()
        .iter()
        .map(|e| (e.id.as_str(), e))
        .collect();
    let encoded: Vec<EmbeddingVector> = samples
        .par_iter()
        .map(|s| {
            let f = match &s.image_ref {
                Some(r) => Some(
                    *index
                        .get(r.as_str())
                        .ok_or_else(|| Error::MissingImageFeatures(r.clone()))?,
                ),
                None => None,
            };
            encode(params, s, f, None)
        })
        .collect::<Result<_>>()?;
    EmbeddingDump::new(params.config.dim, TOY_SOURCE_TAG, encoded)
}

/// Encode `recipes` (and their images) for `direction` in evaluation mode.
pub fn encode_direction(
    params: &EncoderParams,
    recipes: &[Recipe],
    features: &EmbeddingDump,
    direction: Direction,
) -> Result<EncodedDirection> {
    let (q, c, pairs) = render_direction(recipes, direction)?;
    Ok(EncodedDirection {
        direction,
        queries: encode_all(params, &q, features)?,
        candidates: encode_all(params, &c, features)?,
        pairs,
    })
}

/// Tab-separated `query_id \t truth_id` lines.
pub fn write_pairs<W: Write>(mut out: W, pairs: &[(String, String)]) -> std::io::Result<()> {
    for (q, t) in pairs {
        writeln!(out, "{q}\t{t}")?;
    }
    Ok(())
}

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let mut parts = l.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(q), Some(t), None) if !q.is_empty() && !t.is_empty() => {
                    Ok((q.to_string(), t.to_string()))
                }
                _ => Err(Error::MalformedLine {
                    line: i + 1,
                    reason: "expected query_id<TAB>truth_id".into(),
                }),
            }
        })
        .collect()
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text)
}
