use std::collections::BTreeSet;
use std::io::Cursor;

use proptest::prelude::*;
use simmer_core::corpus::{parse_recipes, read_recipes, save_recipes, write_recipes};
use simmer_core::synth::{planted_corpus, planted_recipe, PlantedSpec};
use simmer_core::{
    augment, build_direction_datasets, load_corpus, save_corpus, Direction, Error, Recipe,
    Validation,
};

fn recipe_strategy() -> impl Strategy<Value = Recipe> {
    let item = "[a-z][a-z ,.]{0,12}[a-z.]";
    (
        "[a-z0-9]{1,8}",
        "[A-Z][a-z ]{0,15}[a-z]",
        prop::collection::vec(item, 1..5),
        prop::collection::vec(item, 1..4),
    )
        .prop_map(|(id, title, ingredients, instructions)| Recipe {
            image_ref: format!("{id}.jpg"),
            id,
            title,
            ingredients,
            instructions,
        })
}

#[test]
fn recipes_round_trip_through_jsonl() {
    let recipes: Vec<Recipe> = (0..100).map(|i| planted_recipe(i, 7)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    save_recipes(&path, &recipes).unwrap();
    assert_eq!(read_recipes(&path, Validation::Strict).unwrap(), recipes);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 100);
    assert!(text
        .lines()
        .next()
        .unwrap()
        .contains("\"image\":\"img00000\""));
}

#[test]
fn corpus_round_trip_keeps_features() {
    let corpus = planted_corpus(PlantedSpec {
        pairs: 40,
        classes: 5,
        feature_dim: 8,
        seed: 3,
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (r, f) = (dir.path().join("r.jsonl"), dir.path().join("f.bin"));
    save_corpus(&corpus, &r, &f).unwrap();
    let back = load_corpus(&r, &f, Validation::Strict).unwrap();
    assert_eq!(back.recipes(), corpus.recipes());
    assert_eq!(back.features().entries(), corpus.features().entries());
}

#[test]
fn parse_errors_carry_line_numbers() {
    let good = r#"{"id":"a","title":"T","ingredients":["x"],"instructions":["y"],"image":"a.jpg"}"#;
    let dup = format!("{good}\n{good}\n");
    match parse_recipes(Cursor::new(dup), Validation::Strict) {
        Err(Error::DuplicateId { id, line }) => assert_eq!((id.as_str(), line), ("a", 2)),
        other => panic!("{other:?}"),
    }
    let broken = format!("{good}\n{{not json\n");
    match parse_recipes(Cursor::new(broken), Validation::Strict) {
        Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    let extra = r#"{"id":"a","title":"T","ingredients":["x"],"instructions":["y"],"image":"a.jpg","url":"u"}"#;
    assert!(parse_recipes(Cursor::new(extra), Validation::Strict).is_err());
    assert_eq!(
        parse_recipes(Cursor::new(extra), Validation::Permissive)
            .unwrap()
            .len(),
        1
    );
}

#[test]
fn strict_mode_requires_every_component() {
    let partial = r#"{"id":"a","title":"T","ingredients":[],"instructions":["y"],"image":"a.jpg"}"#;
    match parse_recipes(Cursor::new(partial), Validation::Strict) {
        Err(Error::MalformedLine { line, reason }) => {
            assert_eq!(line, 1);
            assert!(reason.contains("ingredients"), "{reason}");
        }
        other => panic!("{other:?}"),
    }
    let r = parse_recipes(Cursor::new(partial), Validation::Permissive).unwrap();
    assert_eq!(r[0].present().to_string(), "101");
    assert!(augment(&r[0]).is_err());
}

#[test]
fn control_characters_are_rejected() {
    let bad = "{\"id\":\"a\",\"title\":\"T\\u0007\",\"ingredients\":[\"x\"],\"instructions\":[\"y\"],\"image\":\"a.jpg\"}";
    assert!(parse_recipes(Cursor::new(bad), Validation::Permissive).is_err());
}

#[test]
fn dangling_image_references_are_rejected() {
    let corpus = planted_corpus(PlantedSpec {
        pairs: 3,
        classes: 1,
        feature_dim: 4,
        seed: 0,
    })
    .unwrap();
    let mut recipes = corpus.recipes().to_vec();
    recipes[1].image_ref = "missing.jpg".into();
    assert!(matches!(
        simmer_core::PairedCorpus::new(recipes, corpus.features().clone()),
        Err(Error::DanglingImage { .. })
    ));
}

#[test]
fn thousand_variants_from_250_recipes() {
    let variants: Vec<_> = (0..250)
        .flat_map(|i| augment(&planted_recipe(i, 9)).unwrap())
        .collect();
    assert_eq!(variants.len(), 1000);
    let ids: BTreeSet<&str> = variants.iter().map(|v| v.id.as_str()).collect();
    assert_eq!(ids.len(), 1000);
}

#[test]
fn datasets_have_four_pairs_per_recipe_with_augmentation() {
    let corpus = planted_corpus(PlantedSpec {
        pairs: 10,
        classes: 2,
        feature_dim: 4,
        seed: 0,
    })
    .unwrap();
    let (i2r, r2i) = build_direction_datasets(&corpus, false).unwrap();
    assert_eq!((i2r.len(), r2i.len()), (10, 10));
    let (i2r, r2i) = build_direction_datasets(&corpus, true).unwrap();
    assert_eq!((i2r.len(), r2i.len()), (40, 40));
    assert!(i2r
        .iter()
        .all(|p| p.direction() == Direction::ImageToRecipe));
    assert!(r2i
        .iter()
        .all(|p| p.direction() == Direction::RecipeToImage));
    assert!(i2r
        .iter()
        .all(|p| p.query.image_ref.is_some() && p.candidate.image_ref.is_none()));
    assert!(r2i
        .iter()
        .all(|p| p.query.image_ref.is_none() && p.candidate.image_ref.is_some()));
}

proptest! {
    #[test]
    fn augmentation_is_deterministic_and_complete(r in recipe_strategy()) {
        let a = augment(&r).unwrap();
        prop_assert_eq!(&a, &augment(&r).unwrap());
        let masks: Vec<String> = a.iter().map(|v| v.present.to_string()).collect();
        prop_assert_eq!(masks, vec!["111", "100", "010", "001"]);
        prop_assert_eq!(&a[0].id, &r.id);
        prop_assert!(a.iter().all(|v| v.base_id == r.id));
        prop_assert!(a[1].recipe.ingredients.is_empty() && a[1].recipe.instructions.is_empty());
    }

    #[test]
    fn jsonl_round_trip(rs in prop::collection::vec(recipe_strategy(), 1..6)) {
        let mut seen = BTreeSet::new();
        let rs: Vec<Recipe> = rs.into_iter().filter(|r| seen.insert(r.id.clone())).collect();
        let mut buf = Vec::new();
        write_recipes(&mut buf, &rs).unwrap();
        prop_assert_eq!(parse_recipes(Cursor::new(buf), Validation::Strict).unwrap(), rs);
    }
}
