use crate::corpus::{augment, PairedCorpus, RecipeVariant};
use crate::error::{Error, Result};
use crate::prompting::{
    render_image_prompt, render_recipe_prompt, Direction, PromptedSample, Role,
};

/// A positive query/candidate pair; the rest of its batch supplies the
/// negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainPair {
    pub query: PromptedSample,
    pub candidate: PromptedSample,
    pub pair_id: String,
}

impl TrainPair {
    pub fn direction(&self) -> Direction {
        self.query.direction
    }
}

/// Image-to-recipe and recipe-to-image pairs, in corpus order. With
/// `augment` every recipe contributes its four variants to each direction.
pub fn build_direction_datasets(
    corpus: &PairedCorpus,
    augment_variants: bool,
) -> Result<(Vec<TrainPair>, Vec<TrainPair>)> {
    if corpus.is_empty() {
        return Err(Error::invalid(
            "cannot build training pairs from an empty corpus",
        ));
    }
    let per = if augment_variants { 4 } else { 1 };
    let mut i2r = Vec::with_capacity(corpus.len() * per);
    let mut r2i = Vec::with_capacity(corpus.len() * per);
    for recipe in corpus.recipes() {
        let variants = if augment_variants {
            augment(recipe)?
        } else {
            vec![RecipeVariant::whole(recipe)]
        };
        let image_query = render_image_prompt(&recipe.image_ref, Role::Query)?;
        let image_candidate = render_image_prompt(&recipe.image_ref, Role::Candidate)?;
        for v in &variants {
            i2r.push(TrainPair {
                query: image_query.clone(),
                candidate: render_recipe_prompt(v, Role::Candidate)?,
                pair_id: v.id.clone(),
            });
            r2i.push(TrainPair {
                query: render_recipe_prompt(v, Role::Query)?,
                candidate: image_candidate.clone(),
                pair_id: v.id.clone(),
            });
        }
    }
    Ok((i2r, r2i))
}
