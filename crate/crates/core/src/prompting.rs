//! Role- and direction-specific prompt rendering.
//!
//! Images are rendered with the opaque `<|image_1|>` placeholder on its own
//! line; recipes are flattened to a single line of labelled segments.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::RecipeVariant;
use crate::error::{Error, Result};

pub const IMAGE_PLACEHOLDER: &str = "<|image_1|>";

pub const IMAGE_QUERY_INSTRUCTION: &str = "Find a cooking recipe describing the given food image.";
pub const IMAGE_CANDIDATE_INSTRUCTION: &str =
    "Represent the given food image for recipe prediction.";
pub const RECIPE_QUERY_PREFIX: &str =
    "Find me a food image that matches the given cooking recipe: ";
pub const RECIPE_CANDIDATE_PREFIX: &str = "A cooking recipe: ";

pub const TITLE_LABEL: &str = "Title: ";
pub const INGREDIENTS_LABEL: &str = "Ingredients: ";
pub const INSTRUCTIONS_LABEL: &str = "Instructions: ";

const SEGMENT_SEPARATOR: &str = ", ";
const INGREDIENT_SEPARATOR: &str = ", ";
const INSTRUCTION_SEPARATOR: &str = " ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Query,
    Candidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "i2r")]
    ImageToRecipe,
    #[serde(rename = "r2i")]
    RecipeToImage,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::ImageToRecipe => "i2r",
            Direction::RecipeToImage => "r2i",
        }
    }

    /// Role an image plays in this direction.
    pub fn image_role(self) -> Role {
        match self {
            Direction::ImageToRecipe => Role::Query,
            Direction::RecipeToImage => Role::Candidate,
        }
    }

    pub fn recipe_role(self) -> Role {
        match self.image_role() {
            Role::Query => Role::Candidate,
            Role::Candidate => Role::Query,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i2r" => Ok(Direction::ImageToRecipe),
            "r2i" => Ok(Direction::RecipeToImage),
            other => Err(Error::invalid(format!("unknown direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Recipe,
}

/// A rendered prompt ready for encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptedSample {
    pub source_id: String,
    pub role: Role,
    pub direction: Direction,
    pub modality: Modality,
    pub text: String,
    pub image_ref: Option<String>,
}

/// Line-record form consumed by external exporters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub source_id: String,
    pub role: Role,
    pub direction: Direction,
    pub text: String,
    pub image_ref: Option<String>,
}

impl From<&PromptedSample> for PromptRecord {
    fn from(s: &PromptedSample) -> Self {
        PromptRecord {
            source_id: s.source_id.clone(),
            role: s.role,
            direction: s.direction,
            text: s.text.clone(),
            image_ref: s.image_ref.clone(),
        }
    }
}

pub fn render_image_prompt(image_ref: &str, role: Role) -> Result<PromptedSample> {
    if image_ref.is_empty() {
        return Err(Error::invalid("empty image reference"));
    }
    let (instruction, direction) = match role {
        Role::Query => (IMAGE_QUERY_INSTRUCTION, Direction::ImageToRecipe),
        Role::Candidate => (IMAGE_CANDIDATE_INSTRUCTION, Direction::RecipeToImage),
    };
    Ok(PromptedSample {
        source_id: image_ref.to_string(),
        role,
        direction,
        modality: Modality::Image,
        text: format!("{IMAGE_PLACEHOLDER}\n{instruction}"),
        image_ref: Some(image_ref.to_string()),
    })
}

/// Renders the present components of `variant`. Absent components lose
/// both their label and the separator before it.
pub fn render_recipe_prompt(variant: &RecipeVariant, role: Role) -> Result<PromptedSample> {
    let payload = recipe_payload(variant)?;
    let (prefix, direction) = match role {
        Role::Query => (RECIPE_QUERY_PREFIX, Direction::RecipeToImage),
        Role::Candidate => (RECIPE_CANDIDATE_PREFIX, Direction::ImageToRecipe),
    };
    Ok(PromptedSample {
        source_id: variant.id.clone(),
        role,
        direction,
        modality: Modality::Recipe,
        text: format!("{prefix}{payload}"),
        image_ref: None,
    })
}

/// The role-independent part of a recipe prompt.
pub fn recipe_payload(variant: &RecipeVariant) -> Result<String> {
    use crate::corpus::ComponentMask as M;

    let r = &variant.recipe;
    let mut segments = Vec::with_capacity(3);
    if variant.present.contains(M::TITLE) && !r.title.is_empty() {
        segments.push(format!("{TITLE_LABEL}{}", r.title));
    }
    if variant.present.contains(M::INGREDIENTS) && !r.ingredients.is_empty() {
        segments.push(format!(
            "{INGREDIENTS_LABEL}{}",
            r.ingredients.join(INGREDIENT_SEPARATOR)
        ));
    }
    if variant.present.contains(M::INSTRUCTIONS) && !r.instructions.is_empty() {
        segments.push(format!(
            "{INSTRUCTIONS_LABEL}{}",
            r.instructions.join(INSTRUCTION_SEPARATOR)
        ));
    }
    if segments.is_empty() {
        return Err(Error::invalid(format!(
            "recipe {:?} has no components to render",
            variant.id
        )));
    }
    Ok(segments.join(SEGMENT_SEPARATOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{augment, ComponentMask, Recipe};

    fn pasta() -> Recipe {
        Recipe {
            id: "r1".into(),
            title: "Pasta".into(),
            ingredients: vec!["salt".into(), "water".into()],
            instructions: vec!["Boil.".into(), "Serve.".into()],
            image_ref: "img1".into(),
        }
    }

    #[test]
    fn image_prompts() {
        let q = render_image_prompt("img7", Role::Query).unwrap();
        assert_eq!(
            q.text,
            "<|image_1|>\nFind a cooking recipe describing the given food image."
        );
        assert_eq!(q.direction, Direction::ImageToRecipe);
        assert_eq!(q.image_ref.as_deref(), Some("img7"));
        let c = render_image_prompt("img7", Role::Candidate).unwrap();
        assert_eq!(
            c.text,
            "<|image_1|>\nRepresent the given food image for recipe prediction."
        );
        assert_eq!(c.direction, Direction::RecipeToImage);
        assert!(render_image_prompt("", Role::Query).is_err());
    }

    #[test]
    fn recipe_prompts() {
        let v = RecipeVariant::whole(&pasta());
        let c = render_recipe_prompt(&v, Role::Candidate).unwrap();
        assert_eq!(
            c.text,
            "A cooking recipe: Title: Pasta, Ingredients: salt, water, Instructions: Boil. Serve."
        );
        assert_eq!(c.source_id, "r1");
        assert_eq!(c.image_ref, None);
        let q = render_recipe_prompt(&v, Role::Query).unwrap();
        assert_eq!(
            q.text,
            "Find me a food image that matches the given cooking recipe: Title: Pasta, Ingredients: salt, water, Instructions: Boil. Serve."
        );
    }

    #[test]
    fn absent_components_are_omitted() {
        let vs = augment(&pasta()).unwrap();
        let title_only = render_recipe_prompt(&vs[1], Role::Candidate).unwrap();
        assert_eq!(title_only.text, "A cooking recipe: Title: Pasta");
        assert_eq!(title_only.source_id, "r1#100");
        let ing = render_recipe_prompt(&vs[2], Role::Candidate).unwrap();
        assert_eq!(ing.text, "A cooking recipe: Ingredients: salt, water");
        let ins = render_recipe_prompt(&vs[3], Role::Query).unwrap();
        assert_eq!(
            ins.text,
            "Find me a food image that matches the given cooking recipe: Instructions: Boil. Serve."
        );
        let mut no_title = pasta();
        no_title.title.clear();
        let two = render_recipe_prompt(&RecipeVariant::whole(&no_title), Role::Candidate).unwrap();
        assert_eq!(
            two.text,
            "A cooking recipe: Ingredients: salt, water, Instructions: Boil. Serve."
        );
    }

    #[test]
    fn empty_variant_rejected() {
        let v = RecipeVariant::project(&pasta(), ComponentMask::NONE);
        assert!(render_recipe_prompt(&v, Role::Query).is_err());
    }
}
