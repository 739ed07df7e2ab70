//! Structured recipe corpus: loading, validation, canonical serialization and
//! component-aware augmentation.
//!
//! The recipes file holds one JSON object per line:
//!
//! ```text
//! {"id":"r1","title":"Pasta","ingredients":["salt","water"],"instructions":["Boil.","Serve."],"image":"img1"}
//! ```
//!
//! Image content enters as precomputed feature vectors stored in a
//! `SIMMEREM` dump keyed by the `image` field.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingVector;
use crate::error::{Error, Result};
use crate::index::EmbeddingDump;

/// One image–recipe example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub ingredients: Vec<String>,
    #[serde(default)]
    pub instructions: Vec<String>,
    #[serde(rename = "image")]
    pub image_ref: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StrictRecord {
    id: String,
    title: String,
    ingredients: Vec<String>,
    instructions: Vec<String>,
    image: String,
}

impl From<StrictRecord> for Recipe {
    fn from(r: StrictRecord) -> Self {
        Recipe {
            id: r.id,
            title: r.title,
            ingredients: r.ingredients,
            instructions: r.instructions,
            image_ref: r.image,
        }
    }
}

impl Recipe {
    /// Name of the first empty component, if any.
    pub fn missing_component(&self) -> Option<&'static str> {
        if self.title.is_empty() {
            Some("title")
        } else if self.ingredients.is_empty() {
            Some("ingredients")
        } else if self.instructions.is_empty() {
            Some("instructions")
        } else {
            None
        }
    }

    pub fn is_complete(&self) -> bool {
        self.missing_component().is_none()
    }

    /// Mask of the components that are nonempty.
    pub fn present(&self) -> ComponentMask {
        let mut bits = 0;
        if !self.title.is_empty() {
            bits |= ComponentMask::TITLE.0;
        }
        if !self.ingredients.is_empty() {
            bits |= ComponentMask::INGREDIENTS.0;
        }
        if !self.instructions.is_empty() {
            bits |= ComponentMask::INSTRUCTIONS.0;
        }
        ComponentMask(bits)
    }

    fn normalize(&mut self) {
        trim_end_in_place(&mut self.id);
        trim_end_in_place(&mut self.title);
        self.ingredients.iter_mut().for_each(trim_end_in_place);
        self.instructions.iter_mut().for_each(trim_end_in_place);
        trim_end_in_place(&mut self.image_ref);
    }

    fn validate(&self, mode: Validation) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.image_ref.is_empty() {
            return Err("empty image reference".into());
        }
        let fields = std::iter::once(("id", &self.id))
            .chain(std::iter::once(("title", &self.title)))
            .chain(self.ingredients.iter().map(|s| ("ingredients", s)))
            .chain(self.instructions.iter().map(|s| ("instructions", s)))
            .chain(std::iter::once(("image", &self.image_ref)));
        for (name, value) in fields {
            if value.chars().any(char::is_control) {
                return Err(format!("control character in {name}"));
            }
        }
        if self.ingredients.iter().any(String::is_empty) {
            return Err("empty ingredient entry".into());
        }
        if self.instructions.iter().any(String::is_empty) {
            return Err("empty instruction entry".into());
        }
        if mode == Validation::Strict {
            if let Some(missing) = self.missing_component() {
                return Err(format!("{missing} is empty"));
            }
        }
        Ok(())
    }
}

fn trim_end_in_place(s: &mut String) {
    let len = s.trim_end().len();
    s.truncate(len);
}

/// Strict validation is for training input: unknown fields are rejected and
/// every recipe must be complete. Permissive validation accepts partial
/// recipes (evaluation queries) and ignores unknown fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Validation {
    #[default]
    Strict,
    Permissive,
}

/// Subset of {title, ingredients, instructions}, written as three bits in
/// that order (`"100"` is title only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentMask(u8);

impl ComponentMask {
    pub const TITLE: ComponentMask = ComponentMask(0b100);
    pub const INGREDIENTS: ComponentMask = ComponentMask(0b010);
    pub const INSTRUCTIONS: ComponentMask = ComponentMask(0b001);
    pub const ALL: ComponentMask = ComponentMask(0b111);
    pub const NONE: ComponentMask = ComponentMask(0);

    /// The augmentation patterns, in emission order.
    pub const PATTERNS: [ComponentMask; 4] = [
        Self::ALL,
        Self::TITLE,
        Self::INGREDIENTS,
        Self::INSTRUCTIONS,
    ];

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, other: ComponentMask) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for ComponentMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03b}", self.0)
    }
}

/// A recipe with some components removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecipeVariant {
    pub base_id: String,
    /// Base id for an unreduced variant, otherwise `base#mask` (e.g. `r1#100`).
    pub id: String,
    pub present: ComponentMask,
    pub recipe: Recipe,
}

impl RecipeVariant {
    /// Keep only the components in `mask`.
    pub fn project(base: &Recipe, mask: ComponentMask) -> Self {
        let mut recipe = base.clone();
        if !mask.contains(ComponentMask::TITLE) {
            recipe.title.clear();
        }
        if !mask.contains(ComponentMask::INGREDIENTS) {
            recipe.ingredients.clear();
        }
        if !mask.contains(ComponentMask::INSTRUCTIONS) {
            recipe.instructions.clear();
        }
        let id = if mask == base.present() {
            base.id.clone()
        } else {
            format!("{}#{}", base.id, mask)
        };
        RecipeVariant {
            base_id: base.id.clone(),
            id,
            present: mask,
            recipe,
        }
    }

    /// The recipe with whatever components it has.
    pub fn whole(recipe: &Recipe) -> Self {
        Self::project(recipe, recipe.present())
    }
}

/// The complete recipe plus its title-only, ingredients-only and
/// instructions-only projections, in that order.
pub fn augment(recipe: &Recipe) -> Result<Vec<RecipeVariant>> {
    if let Some(missing) = recipe.missing_component() {
        return Err(Error::IncompleteRecipe {
            id: recipe.id.clone(),
            missing,
        });
    }
    Ok(ComponentMask::PATTERNS
        .iter()
        .map(|&mask| RecipeVariant::project(recipe, mask))
        .collect())
}

/// Recipes plus the image features they reference.
#[derive(Debug, Clone)]
pub struct PairedCorpus {
    recipes: Vec<Recipe>,
    features: EmbeddingDump,
    feature_index: HashMap<String, usize>,
}

impl PairedCorpus {
    /// Checks that every image reference resolves and recipe ids are unique.
    pub fn new(recipes: Vec<Recipe>, features: EmbeddingDump) -> Result<Self> {
        let feature_index: HashMap<String, usize> = features
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), i))
            .collect();
        let mut seen = HashSet::new();
        for (line, r) in recipes.iter().enumerate() {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: r.id.clone(),
                    line: line + 1,
                });
            }
            if !feature_index.contains_key(&r.image_ref) {
                return Err(Error::DanglingImage {
                    recipe: r.id.clone(),
                    image_ref: r.image_ref.clone(),
                });
            }
        }
        Ok(Self {
            recipes,
            features,
            feature_index,
        })
    }

    pub fn recipes(&self) -> &[Recipe] {
        &self.recipes
    }

    pub fn len(&self) -> usize {
        self.recipes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipes.is_empty()
    }

    pub fn features(&self) -> &EmbeddingDump {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    pub fn image_features(&self, image_ref: &str) -> Option<&EmbeddingVector> {
        self.feature_index
            .get(image_ref)
            .map(|&i| &self.features.entries()[i])
    }
}

/// Parse a recipes file body. Line numbers in errors are 1-based.
pub fn parse_recipes<R: BufRead>(reader: R, mode: Validation) -> Result<Vec<Recipe>> {
    let mut recipes = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: lineno,
            reason: e.to_string(),
        })?;
        let parsed = match mode {
            Validation::Strict => serde_json::from_str::<StrictRecord>(&line).map(Recipe::from),
            Validation::Permissive => serde_json::from_str::<Recipe>(&line),
        };
        let mut recipe = parsed.map_err(|e| Error::MalformedLine {
            line: lineno,
            reason: e.to_string(),
        })?;
        recipe.normalize();
        recipe
            .validate(mode)
            .map_err(|reason| Error::MalformedLine {
                line: lineno,
                reason: format!("{}: {reason}", recipe.id),
            })?;
        if !seen.insert(recipe.id.clone()) {
            return Err(Error::DuplicateId {
                id: recipe.id,
                line: lineno,
            });
        }
        recipes.push(recipe);
    }
    Ok(recipes)
}

pub fn read_recipes(path: &Path, mode: Validation) -> Result<Vec<Recipe>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_recipes(BufReader::new(file), mode)
}

/// Canonical serialization: one compact JSON object per line, fields in
/// declaration order, `\n` terminated.
pub fn write_recipes<W: Write>(mut out: W, recipes: &[Recipe]) -> std::io::Result<()> {
    for r in recipes {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_recipes(path: &Path, recipes: &[Recipe]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_recipes(&mut w, recipes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_corpus(
    recipes_path: &Path,
    features_path: &Path,
    mode: Validation,
) -> Result<PairedCorpus> {
    let recipes = read_recipes(recipes_path, mode)?;
    let features = crate::index::load_dump(features_path)?;
    PairedCorpus::new(recipes, features)
}

pub fn save_corpus(corpus: &PairedCorpus, recipes_path: &Path, features_path: &Path) -> Result<()> {
    save_recipes(recipes_path, corpus.recipes())?;
    crate::index::save_dump(corpus.features(), features_path)
}
