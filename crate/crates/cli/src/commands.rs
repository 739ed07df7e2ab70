use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use simmer_core::corpus::read_recipes;
use simmer_core::index::{load_dump, save_dump};
use simmer_core::pipeline::{encode_direction, read_pairs, render_direction, write_pairs};
use simmer_core::prompting::PromptRecord;
use simmer_core::selfcheck;
use simmer_core::synth::{planted_corpus, PlantedSpec};
use simmer_core::trainer::{AdamConfig, TrainConfig, UpdateMode};
use simmer_core::{
    augment, evaluate, load_corpus, load_params, render_recipe_prompt, save_corpus, save_params,
    top_k, train, AdapterConfig, Direction, EmbeddingDump, EncoderConfig, Error, EvalConfig,
    EvalDirection, Validation,
};

use crate::args::*;
use crate::manifest::RunManifest;
use crate::{NumericFailure, Usage};

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn validation(permissive: bool) -> Validation {
    if permissive {
        Validation::Permissive
    } else {
        Validation::Strict
    }
}

#[derive(Serialize)]
struct VariantRecord<'a> {
    id: &'a str,
    base_id: &'a str,
    mask: String,
    title: &'a str,
    ingredients: &'a [String],
    instructions: &'a [String],
    image: &'a str,
}

pub fn augment_cmd(args: &AugmentArgs) -> Result<()> {
    let mut manifest = RunManifest::new("augment", args)?;
    manifest.input(&args.recipes)?;
    let recipes = read_recipes(&args.recipes, Validation::Strict)?;
    let mut out = create(&args.out)?;
    let mut count = 0;
    for r in &recipes {
        for v in augment(r)? {
            let rec = VariantRecord {
                id: &v.id,
                base_id: &v.base_id,
                mask: v.present.to_string(),
                title: &v.recipe.title,
                ingredients: &v.recipe.ingredients,
                instructions: &v.recipe.instructions,
                image: &v.recipe.image_ref,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
            count += 1;
        }
    }
    out.flush()?;
    manifest.write_beside(&args.out)?;
    eprintln!("{} recipes -> {count} variants", recipes.len());
    Ok(())
}

pub fn prompt_cmd(args: &PromptArgs) -> Result<()> {
    let mut manifest = RunManifest::new("prompt", args)?;
    manifest.input(&args.recipes)?;
    let recipes = read_recipes(&args.recipes, validation(args.permissive))?;
    let directions: &[Direction] = match args.direction {
        PromptDirection::I2r => &[Direction::ImageToRecipe],
        PromptDirection::R2i => &[Direction::RecipeToImage],
        PromptDirection::Both => &[Direction::ImageToRecipe, Direction::RecipeToImage],
    };
    let mut out = create(&args.out)?;
    let mut count = 0;
    for &d in directions {
        let (queries, candidates, _) = render_direction(&recipes, d)?;
        let mut samples: Vec<_> = queries.into_iter().chain(candidates).collect();
        if args.augment.is_on() {
            for r in &recipes {
                for v in augment(r)?.iter().skip(1) {
                    samples.push(render_recipe_prompt(v, d.recipe_role())?);
                }
            }
        }
        for s in &samples {
            serde_json::to_writer(&mut out, &PromptRecord::from(s))?;
            out.write_all(b"\n")?;
            count += 1;
        }
    }
    out.flush()?;
    manifest.write_beside(&args.out)?;
    eprintln!("{count} prompt records");
    Ok(())
}

pub fn encode_cmd(args: &EncodeArgs) -> Result<()> {
    let mut manifest = RunManifest::new("encode", args)?;
    for p in [&args.params, &args.recipes, &args.features] {
        manifest.input(p)?;
    }
    let params = load_params(&args.params)?;
    let recipes = read_recipes(&args.recipes, validation(args.permissive))?;
    let features = load_dump(&args.features)?;
    let direction = match args.direction {
        TrainDirection::I2r => Direction::ImageToRecipe,
        TrainDirection::R2i => Direction::RecipeToImage,
    };
    let enc = encode_direction(&params, &recipes, &features, direction)?;
    save_dump(&enc.queries, &args.queries_out)?;
    save_dump(&enc.candidates, &args.candidates_out)?;
    let mut out = create(&args.pairs_out)?;
    write_pairs(&mut out, &enc.pairs)?;
    out.flush()?;
    manifest.write_beside(&args.queries_out)?;
    eprintln!(
        "{direction}: {} queries, {} candidates, dim {}",
        enc.queries.len(),
        enc.candidates.len(),
        enc.queries.dim()
    );
    Ok(())
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::new("train", args)?;
    manifest.input(&args.recipes)?;
    manifest.input(&args.features)?;
    let config = TrainConfig {
        batch_size: args.batch_size,
        tau: args.tau,
        steps: args.steps,
        chunk_size: args.chunk_size.unwrap_or(args.batch_size),
        seed: args.seed,
        adam: AdamConfig {
            learning_rate: args.lr,
            ..Default::default()
        },
        augment: args.augment.is_on(),
        update: match args.update {
            Update::Adapter => UpdateMode::AdapterOnly,
            Update::Full => UpdateMode::Full,
        },
    };
    config.validate().map_err(|e| Usage(e.to_string()))?;
    if args.rank == 0 && config.update == UpdateMode::AdapterOnly {
        return Err(Usage("--rank 0 disables the adapters; use --update full".into()).into());
    }
    let corpus = load_corpus(&args.recipes, &args.features, Validation::Strict)?;
    let encoder = EncoderConfig {
        dim: args.dim,
        buckets: args.buckets,
        feature_dim: corpus.feature_dim(),
        adapter: (args.rank > 0).then_some(AdapterConfig {
            rank: args.rank,
            alpha: args.alpha,
            dropout: args.dropout,
        }),
        ..EncoderConfig::new(corpus.feature_dim())
    };
    encoder.validate().map_err(|e| Usage(e.to_string()))?;
    let outcome = train(&corpus, encoder, &config)?;
    save_params(&outcome.params, &args.out)?;
    if let Some(path) = &args.log {
        let mut out = create(path)?;
        for e in &outcome.log {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    manifest.write_beside(&args.out)?;
    if let Some(last) = outcome.log.last() {
        eprintln!(
            "{} steps, final loss {:.4}, in-batch accuracy {:.3}",
            outcome.log.len(),
            last.loss,
            last.accuracy
        );
    }
    Ok(())
}

pub fn index_cmd(args: &IndexArgs) -> Result<()> {
    let mut manifest = RunManifest::new("index", args)?;
    let mut entries = Vec::new();
    let mut dim = None;
    for path in &args.dumps {
        manifest.input(path)?;
        let d = load_dump(path)?;
        if *dim.get_or_insert(d.dim()) != d.dim() {
            return Err(Error::DimensionMismatch {
                expected: dim.unwrap_or_default(),
                actual: d.dim(),
                context: path.display().to_string(),
            }
            .into());
        }
        entries.extend(d.into_entries());
    }
    if let Some(zero) = entries.iter().find(|e| e.norm() == 0.0) {
        return Err(Error::ZeroNorm(zero.id.clone()).into());
    }
    let merged = EmbeddingDump::new(dim.unwrap_or(0), "index", entries)?;
    save_dump(&merged, &args.out)?;
    manifest.write_beside(&args.out)?;
    eprintln!("{} entries, dim {}", merged.len(), merged.dim());
    Ok(())
}

pub fn search_cmd(args: &SearchArgs) -> Result<()> {
    if args.topk == 0 {
        return Err(Usage("--topk must be positive".into()).into());
    }
    let mut manifest = RunManifest::new("search", args)?;
    manifest.input(&args.index)?;
    manifest.input(&args.query)?;
    let index = load_dump(&args.index)?;
    let queries = load_dump(&args.query)?;
    let results = top_k(&queries, &index, args.topk)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    for r in &results {
        for (rank, (id, score)) in r.hits.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}\t{}", r.query_id, rank + 1, id, score)?;
        }
    }
    out.flush()?;
    if let Some(p) = &args.out {
        manifest.write_beside(p)?;
    }
    Ok(())
}

pub fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let direction: EvalDirection = args
        .direction
        .parse()
        .map_err(|e: Error| Usage(e.to_string()))?;
    let config = EvalConfig {
        pool_size: args.pool,
        repeats: args.repeats,
        ks: args.ks.clone(),
        seed: args.seed,
        direction,
    };
    config.validate().map_err(|e| Usage(e.to_string()))?;
    let mut manifest = RunManifest::new("eval", args)?;
    for p in [&args.queries, &args.candidates, &args.pairs] {
        manifest.input(p)?;
    }
    let queries = load_dump(&args.queries)?;
    let candidates = load_dump(&args.candidates)?;
    let mut pairing = HashMap::new();
    for (q, t) in read_pairs(&args.pairs)? {
        if pairing.insert(q.clone(), t).is_some() {
            bail!(
                "{}: query {q:?} appears more than once",
                args.pairs.display()
            );
        }
    }
    let report = evaluate(&queries, &candidates, &pairing, &config)?;
    let mut out = create(&args.report)?;
    report.write_jsonl(&mut out)?;
    out.flush()?;
    manifest.write_beside(&args.report)?;
    for d in &report.directions {
        let recalls: Vec<String> = d
            .recall
            .iter()
            .map(|(k, v)| format!("R@{k} {v:.4}"))
            .collect();
        eprintln!(
            "{}: medR {:.2}, {}",
            d.direction,
            d.med_r,
            recalls.join(", ")
        );
    }
    Ok(())
}

pub fn selfcheck_cmd(args: &SelfcheckArgs) -> Result<()> {
    let mut checks = selfcheck::run_all(args.seed);
    if let Some(p) = &args.params {
        checks.push(selfcheck::check_params_file(p));
    }
    let mut failed = 0;
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(NumericFailure(format!("{failed} of {} checks failed", checks.len())).into());
    }
    Ok(())
}

pub fn synth_cmd(args: &SynthArgs) -> Result<()> {
    let manifest = RunManifest::new("synth", args)?;
    let corpus = planted_corpus(PlantedSpec {
        pairs: args.pairs,
        classes: args.classes,
        feature_dim: args.feature_dim,
        seed: args.seed,
    })?;
    save_corpus(&corpus, &args.recipes_out, &args.features_out)?;
    manifest.write_beside(&args.recipes_out)?;
    Ok(())
}
