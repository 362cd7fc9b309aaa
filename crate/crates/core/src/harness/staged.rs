//! Experiment stages with on-disk hand-off.
//!
//! Work directory layout:
//!
//! ```text
//! prepared.json                 config, class labels, fold ids, patches
//! folds.csv                     graph,fold
//! fold_<f>/<channel>.emb        fitted embedding per channel
//! experiment.json               config including model and grids
//! fold_<f>/model.ckpt           retrained model
//! fold_<f>/train.json           grid scores and chosen point
//! fold_<f>/loss.csv             per-epoch training loss
//! ```
//!
//! Chaining the three stages gives the same result as a single
//! [`run_experiment`](super::run_experiment) with the same config.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    check_dataset, check_leakage, default_notes, embed_graphs, evaluate_fold, extract_all_patches, fit_embeddings,
    fold_members, select_and_train, stratified_folds, ExperimentConfig, ExperimentResult, GridPoint, GridScore,
    TrainedFold,
};
use crate::embed::PatchEmbedding;
use crate::error::{Error, Result};
use crate::graph::{GraphDataset, LabeledGraph};
use crate::neural::{read_checkpoint, write_checkpoint, write_loss_history, TrainConfig};

pub const PREPARED_FILE: &str = "prepared.json";
pub const EXPERIMENT_FILE: &str = "experiment.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreparedData {
    pub config: ExperimentConfig,
    pub class_labels: Vec<usize>,
    pub num_classes: usize,
    pub assignment: Vec<usize>,
    pub patches: Vec<Vec<LabeledGraph>>,
    pub patch_extraction_secs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FoldTrainRecord {
    chosen: GridPoint,
    grid: Vec<GridScore>,
    loss_history: Vec<f64>,
    selection_secs: f64,
    retrain_secs: f64,
    embedding_secs: f64,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn fold_dir(work: &Path, fold: usize) -> PathBuf {
    work.join(format!("fold_{fold}"))
}

fn embedding_path(work: &Path, fold: usize, channel: usize, config: &ExperimentConfig) -> PathBuf {
    fold_dir(work, fold).join(format!("{channel}_{}.emb", config.channels[channel].short_name()))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn read_embeddings(work: &Path, fold: usize, config: &ExperimentConfig) -> Result<Vec<PatchEmbedding>> {
    (0..config.channels.len())
        .map(|c| PatchEmbedding::read(embedding_path(work, fold, c, config)))
        .collect()
}

/// Extracts patches, assigns folds and fits every fold's embeddings.
pub fn prepare(config: &ExperimentConfig, ds: &GraphDataset, work: &Path) -> Result<()> {
    check_dataset(config, ds)?;
    create_dir(work)?;
    let start = Instant::now();
    let assignment = stratified_folds(&ds.class_labels, config.folds, config.seed)?;
    let patches = extract_all_patches(ds, config.seed);
    let prepared = PreparedData {
        config: config.clone(),
        class_labels: ds.class_labels.clone(),
        num_classes: ds.num_classes,
        assignment,
        patches,
        patch_extraction_secs: start.elapsed().as_secs_f64(),
    };
    (0..config.folds).into_par_iter().try_for_each(|f| -> Result<()> {
        let (train, _) = fold_members(&prepared.assignment, f);
        let embs = fit_embeddings(config, &prepared.patches, &train, f).map_err(|e| e.in_fold(f))?;
        create_dir(&fold_dir(work, f))?;
        for (c, e) in embs.iter().enumerate() {
            e.write(embedding_path(work, f, c, config))?;
        }
        Ok(())
    })?;
    let mut csv = String::from("graph,fold\n");
    for (g, f) in prepared.assignment.iter().enumerate() {
        csv.push_str(&format!("{g},{f}\n"));
    }
    let csv_path = work.join("folds.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    write_json(&prepared, &work.join(PREPARED_FILE))
}

pub fn read_prepared(work: &Path) -> Result<PreparedData> {
    read_json(&work.join(PREPARED_FILE))
}

/// Completes the prepared config with model settings and grids, then
/// selects and trains a model per fold.
///
/// Only model and grid fields of `config` are used; the rest comes from the
/// prepare stage.
pub fn train_stage(config: &ExperimentConfig, work: &Path) -> Result<ExperimentConfig> {
    let prepared = read_prepared(work)?;
    let full = ExperimentConfig {
        model: TrainConfig {
            seed: prepared.config.seed,
            ..config.model.clone()
        },
        epoch_grid: config.epoch_grid.clone(),
        lr_grid: config.lr_grid.clone(),
        ..prepared.config.clone()
    };
    full.validate()?;
    (0..full.folds).into_par_iter().try_for_each(|f| -> Result<()> {
        let run = || -> Result<()> {
            let start = Instant::now();
            let (train, test) = fold_members(&prepared.assignment, f);
            let embs = read_embeddings(work, f, &full)?;
            check_leakage(&embs, &test)?;
            let (graphs, _) = embed_graphs(&train, &prepared.patches, &embs, None)?;
            let embedding_secs = start.elapsed().as_secs_f64();
            let labels: Vec<usize> = train.iter().map(|&g| prepared.class_labels[g]).collect();
            let trained = select_and_train(&full, f, &graphs, &labels, prepared.num_classes)?;
            let dir = fold_dir(work, f);
            write_checkpoint(dir.join("model.ckpt"), &trained.model, &full.model_config(
                trained.chosen.epochs,
                trained.chosen.learning_rate,
                full.model_seed(f),
            ))?;
            write_loss_history(dir.join("loss.csv"), &trained.loss_history)?;
            write_json(
                &FoldTrainRecord {
                    chosen: trained.chosen,
                    grid: trained.grid,
                    loss_history: trained.loss_history,
                    selection_secs: trained.selection_secs,
                    retrain_secs: trained.retrain_secs,
                    embedding_secs,
                },
                &dir.join("train.json"),
            )
        };
        run().map_err(|e| e.in_fold(f))
    })?;
    write_json(&full, &work.join(EXPERIMENT_FILE))?;
    Ok(full)
}

/// Scores every fold's checkpoint on its test graphs.
pub fn evaluate_stage(work: &Path) -> Result<ExperimentResult> {
    let start = Instant::now();
    let prepared = read_prepared(work)?;
    let config: ExperimentConfig = read_json(&work.join(EXPERIMENT_FILE))?;
    let folds = (0..config.folds)
        .into_par_iter()
        .map(|f| {
            let run = || {
                let (train, test) = fold_members(&prepared.assignment, f);
                let embs = read_embeddings(work, f, &config)?;
                let dir = fold_dir(work, f);
                let (model, _) = read_checkpoint(dir.join("model.ckpt"))?;
                let record: FoldTrainRecord = read_json(&dir.join("train.json"))?;
                let trained = TrainedFold {
                    model,
                    chosen: record.chosen,
                    grid: record.grid,
                    loss_history: record.loss_history,
                    selection_secs: record.selection_secs,
                    retrain_secs: record.retrain_secs,
                };
                evaluate_fold(
                    f,
                    &prepared.patches,
                    &prepared.class_labels,
                    &train,
                    &test,
                    &embs,
                    &trained,
                    record.embedding_secs,
                )
            };
            run().map_err(|e| e.in_fold(f))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult::from_folds(
        config,
        folds,
        default_notes(),
        prepared.patch_extraction_secs,
        start.elapsed().as_secs_f64(),
    ))
}
