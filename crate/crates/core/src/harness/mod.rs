//! Cross-validated experiments.
//!
//! Each graph's patches are extracted once (the Louvain seed depends only on
//! the experiment seed and the graph index). Per fold, one Nystrom embedding
//! per channel is fitted on training-fold patches, hyperparameters are
//! chosen on a stratified 90/10 split of the training fold, the chosen point
//! is retrained on the whole training fold and scored on the test fold.

mod report;
pub mod staged;

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::community::extract_patches;
use crate::embed::{embed_dataset, ApproxError, EmbeddedGraph, PatchEmbedding};
use crate::error::{Error, Result};
use crate::graph::{GraphDataset, LabeledGraph};
use crate::kernels::{Featurizer, KernelSpec};
use crate::neural::{accuracy, KcnnModel, TrainConfig, Trainer};
use crate::seed::{self, Stream};

pub use report::{read_report, summary_line, write_fold_csv, write_report, write_timings};

pub const DEFAULT_EPOCH_GRID: [usize; 3] = [50, 100, 200];
pub const DEFAULT_LR_GRID: [f64; 2] = [1e-3, 1e-4];
pub const SELECTION_NOTE: &str =
    "hyperparameters chosen on one stratified 90/10 split of each training fold; ties go to the earlier grid point (epochs-major, then learning rate)";
pub const STD_NOTE: &str = "std is the population standard deviation over fold test accuracies";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub channels: Vec<KernelSpec>,
    pub p: usize,
    /// Architecture and batch settings; `epochs` and `learning_rate` are
    /// replaced by each grid point.
    pub model: TrainConfig,
    pub epoch_grid: Vec<usize>,
    pub lr_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<String>, channels: Vec<KernelSpec>) -> Self {
        Self {
            dataset: dataset.into(),
            channels,
            p: 100,
            model: TrainConfig::default(),
            epoch_grid: DEFAULT_EPOCH_GRID.to_vec(),
            lr_grid: DEFAULT_LR_GRID.to_vec(),
            folds: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.channels.is_empty() {
            return Err(Error::invalid("no kernel channels"));
        }
        if self.epoch_grid.is_empty() || self.lr_grid.is_empty() {
            return Err(Error::invalid("hyperparameter grids must be non-empty"));
        }
        if self.p == 0 {
            return Err(Error::invalid("p must be positive"));
        }
        for &epochs in &self.epoch_grid {
            self.model_config(epochs, self.lr_grid[0], 0).validate()?;
        }
        for &lr in &self.lr_grid {
            self.model_config(self.epoch_grid[0], lr, 0).validate()?;
        }
        Ok(())
    }

    fn model_config(&self, epochs: usize, learning_rate: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate,
            seed,
            ..self.model.clone()
        }
    }

    /// Seed of model initialisation and training in `fold`.
    pub fn model_seed(&self, fold: usize) -> u64 {
        seed::derive(self.seed, Stream::ModelInit, &[fold as u64])
    }
}

/// Patches of every graph, largest first. Graph `i` uses a Louvain seed
/// derived from `(seed, i)`, so patches do not depend on fold membership.
pub fn extract_all_patches(ds: &GraphDataset, seed: u64) -> Vec<Vec<LabeledGraph>> {
    ds.graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| extract_patches(g, seed::derive(seed, Stream::Louvain, &[i as u64])))
        .collect()
}

/// Fold id per graph. Each class is shuffled, the classes are concatenated
/// and graphs are dealt to folds round-robin, so every fold holds within one
/// graph of its share of each class.
pub fn stratified_folds(class_labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    let by_class = members_by_class(class_labels);
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < folds {
            return Err(Error::invalid(format!(
                "class {c} has {} graphs, fewer than {folds} folds",
                members.len()
            )));
        }
    }
    let mut rng = seed::rng(seed, Stream::Folds, &[]);
    let mut assignment = vec![0; class_labels.len()];
    let mut pos = 0;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = pos % folds;
            pos += 1;
        }
    }
    Ok(assignment)
}

fn members_by_class(class_labels: &[usize]) -> Vec<Vec<usize>> {
    let k = class_labels.iter().max().map_or(0, |&c| c + 1);
    let mut by_class = vec![Vec::new(); k];
    for (i, &c) in class_labels.iter().enumerate() {
        by_class[c].push(i);
    }
    by_class
}

/// Splits positions `0..labels.len()` into (fit, validation): per class,
/// `round(n / 10)` (at least one when `n >= 2`) go to validation. Both lists
/// come back sorted.
pub fn validation_split(labels: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(seed, Stream::Split, &[]);
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for mut members in members_by_class(labels) {
        let n = members.len();
        let take = if n >= 2 { ((n as f64 / 10.0).round() as usize).max(1) } else { 0 };
        members.shuffle(&mut rng);
        val.extend_from_slice(&members[..take]);
        fit.extend_from_slice(&members[take..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Training and test graph ids of one fold, ascending.
pub fn fold_members(assignment: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assignment.len()).partition(|&i| assignment[i] != fold)
}

/// Fits one embedding per channel on the patches of `train` only.
pub fn fit_embeddings(config: &ExperimentConfig, patches: &[Vec<LabeledGraph>], train: &[usize], fold: usize) -> Result<Vec<PatchEmbedding>> {
    let mut refs = Vec::new();
    let mut index = Vec::new();
    for &g in train {
        for (j, patch) in patches[g].iter().enumerate() {
            refs.push(patch);
            index.push((g, j));
        }
    }
    config
        .channels
        .iter()
        .enumerate()
        .map(|(c, &spec)| {
            let featurizer = Featurizer::new(spec);
            let maps = featurizer.feature_maps(&refs);
            let landmark_seed = seed::derive(config.seed, Stream::Landmarks, &[fold as u64, c as u64]);
            PatchEmbedding::fit(featurizer, maps, index.clone(), config.p, landmark_seed)
        })
        .collect()
}

/// Fails if any embedding was fitted on patches of a test graph.
pub fn check_leakage(embs: &[PatchEmbedding], test: &[usize]) -> Result<()> {
    let test: HashSet<usize> = test.iter().copied().collect();
    for e in embs {
        if let Some(g) = e.training_graphs().into_iter().find(|g| test.contains(g)) {
            return Err(Error::invalid(format!(
                "{} embedding was fitted on patches of test graph {g}",
                e.spec()
            )));
        }
    }
    Ok(())
}

/// Embeds `ids` through all channels. With `max_patches`, a graph keeps only
/// its first (largest) `max_patches` patches; the second value counts the
/// truncated graphs.
pub fn embed_graphs(
    ids: &[usize],
    patches: &[Vec<LabeledGraph>],
    embs: &[PatchEmbedding],
    max_patches: Option<usize>,
) -> Result<(Vec<EmbeddedGraph>, usize)> {
    let limit = max_patches.unwrap_or(usize::MAX);
    let mut truncated = 0;
    let items: Vec<(usize, &[LabeledGraph])> = ids
        .iter()
        .map(|&g| {
            let all = &patches[g][..];
            if all.len() > limit {
                truncated += 1;
            }
            (g, &all[..all.len().min(limit)])
        })
        .collect();
    Ok((embed_dataset(&items, embs)?.graphs, truncated))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub epochs: usize,
    pub learning_rate: f64,
    pub validation_accuracy: Option<f64>,
    /// Global batch index at which this run's loss became non-finite.
    pub diverged_at_batch: Option<usize>,
}

/// Outcome of model selection plus the retrained model.
#[derive(Clone, Debug)]
pub struct TrainedFold {
    pub model: KcnnModel,
    pub chosen: GridPoint,
    pub grid: Vec<GridScore>,
    pub loss_history: Vec<f64>,
    pub selection_secs: f64,
    pub retrain_secs: f64,
}

/// Grid search on a 90/10 split of the training graphs, then retraining of
/// the winner on all of them.
///
/// One training run per learning rate is scored at every epoch count of the
/// grid; since the run's random stream is consumed epoch by epoch, the
/// checkpoint after `e` epochs is the model a run of `e` epochs would give.
pub fn select_and_train(
    config: &ExperimentConfig,
    fold: usize,
    graphs: &[EmbeddedGraph],
    labels: &[usize],
    num_classes: usize,
) -> Result<TrainedFold> {
    let start = Instant::now();
    let model_seed = config.model_seed(fold);
    let (fit_pos, val_pos) = validation_split(labels, seed::derive(config.seed, Stream::Split, &[fold as u64]));
    let pick = |pos: &[usize]| -> (Vec<EmbeddedGraph>, Vec<usize>) {
        (pos.iter().map(|&i| graphs[i].clone()).collect(), pos.iter().map(|&i| labels[i]).collect())
    };
    let (fit_graphs, fit_labels) = pick(&fit_pos);
    let (val_graphs, val_labels) = pick(&val_pos);

    let mut checkpoints: Vec<usize> = config.epoch_grid.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let max_epochs = *checkpoints.last().expect("non-empty grid");

    // scores[lr index][epochs] = validation accuracy or divergence batch
    let mut per_lr: Vec<Vec<(usize, std::result::Result<f64, usize>)>> = Vec::new();
    for &lr in &config.lr_grid {
        let cfg = config.model_config(max_epochs, lr, model_seed);
        let mut trainer = Trainer::new(&cfg, &fit_graphs, &fit_labels, num_classes)?;
        let mut scores = Vec::new();
        let mut diverged = None;
        for &target in &checkpoints {
            if diverged.is_none() {
                while trainer.epochs_done() < target {
                    match trainer.run_epoch() {
                        Ok(_) => {}
                        Err(Error::TrainingDiverged { batch_index }) => {
                            diverged = Some(batch_index);
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            match diverged {
                Some(b) => scores.push((target, Err(b))),
                None => scores.push((target, Ok(accuracy(trainer.model(), &val_graphs, &val_labels)?))),
            }
        }
        per_lr.push(scores);
    }

    let mut grid = Vec::new();
    let mut best: Option<(GridPoint, f64)> = None;
    for &epochs in &config.epoch_grid {
        for (li, &lr) in config.lr_grid.iter().enumerate() {
            let score = per_lr[li].iter().find(|s| s.0 == epochs).expect("checkpoint").1;
            grid.push(GridScore {
                epochs,
                learning_rate: lr,
                validation_accuracy: score.ok(),
                diverged_at_batch: score.err(),
            });
            if let Ok(acc) = score {
                if best.is_none_or(|(_, b)| acc > b) {
                    best = Some((GridPoint { epochs, learning_rate: lr }, acc));
                }
            }
        }
    }
    let (chosen, _) = best.ok_or(Error::AllGridPointsDiverged)?;
    let selection_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let cfg = config.model_config(chosen.epochs, chosen.learning_rate, model_seed);
    let outcome = crate::neural::train(graphs, labels, num_classes, &cfg)?;
    Ok(TrainedFold {
        model: outcome.model,
        chosen,
        grid,
        loss_history: outcome.loss_history,
        selection_secs,
        retrain_secs: start.elapsed().as_secs_f64(),
    })
}

/// Nystrom fit quality of one channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelApprox {
    pub channel: String,
    pub rank: usize,
    pub relative_frobenius: f64,
    pub max_abs: f64,
    pub sampled_rows: usize,
    pub exact: bool,
}

impl ChannelApprox {
    pub fn of(emb: &PatchEmbedding) -> Self {
        let ApproxError {
            relative_frobenius,
            max_abs,
            sampled_rows,
            exact,
        } = *emb.approx_error();
        Self {
            channel: emb.spec().to_string(),
            rank: emb.rank(),
            relative_frobenius,
            max_abs,
            sampled_rows,
            exact,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldTimings {
    pub fold: usize,
    pub embedding_secs: f64,
    pub selection_secs: f64,
    pub retrain_secs: f64,
    pub evaluation_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub train_graphs: usize,
    pub test_graphs: usize,
    pub training_patches: usize,
    pub max_patches: usize,
    pub truncated_test_graphs: usize,
    pub test_accuracy: f64,
    pub chosen: GridPoint,
    pub grid: Vec<GridScore>,
    pub approximation: Vec<ChannelApprox>,
    pub final_train_loss: f64,
    #[serde(skip)]
    pub timings: FoldTimings,
}

/// Scores a trained fold on its test graphs.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_fold(
    fold: usize,
    patches: &[Vec<LabeledGraph>],
    class_labels: &[usize],
    train: &[usize],
    test: &[usize],
    embs: &[PatchEmbedding],
    trained: &TrainedFold,
    embedding_secs: f64,
) -> Result<FoldOutcome> {
    check_leakage(embs, test)?;
    if trained.model.shape.dim != embs[0].dim() || trained.model.shape.channels != embs.len() {
        return Err(Error::invalid(format!(
            "model expects {} channels of dimension {}, embeddings give {} of {}",
            trained.model.shape.channels,
            trained.model.shape.dim,
            embs.len(),
            embs[0].dim()
        )));
    }
    let start = Instant::now();
    let max_patches = train.iter().map(|&g| patches[g].len()).max().unwrap_or(0);
    let (test_graphs, truncated) = embed_graphs(test, patches, embs, Some(max_patches))?;
    let test_labels: Vec<usize> = test.iter().map(|&g| class_labels[g]).collect();
    let test_accuracy = accuracy(&trained.model, &test_graphs, &test_labels)?;
    Ok(FoldOutcome {
        fold,
        train_graphs: train.len(),
        test_graphs: test.len(),
        training_patches: embs[0].num_patches(),
        max_patches,
        truncated_test_graphs: truncated,
        test_accuracy,
        chosen: trained.chosen,
        grid: trained.grid.clone(),
        approximation: embs.iter().map(ChannelApprox::of).collect(),
        final_train_loss: trained.loss_history.last().copied().unwrap_or(f64::NAN),
        timings: FoldTimings {
            fold,
            embedding_secs,
            selection_secs: trained.selection_secs,
            retrain_secs: trained.retrain_secs,
            evaluation_secs: start.elapsed().as_secs_f64(),
        },
    })
}

/// Full pipeline for one fold given precomputed patches and fold ids.
pub fn run_fold(
    config: &ExperimentConfig,
    ds: &GraphDataset,
    patches: &[Vec<LabeledGraph>],
    assignment: &[usize],
    fold: usize,
) -> Result<FoldOutcome> {
    let (train, test) = fold_members(assignment, fold);
    let start = Instant::now();
    let embs = fit_embeddings(config, patches, &train, fold)?;
    check_leakage(&embs, &test)?;
    let (train_graphs, _) = embed_graphs(&train, patches, &embs, None)?;
    let embedding_secs = start.elapsed().as_secs_f64();
    let train_labels: Vec<usize> = train.iter().map(|&g| ds.class_labels[g]).collect();
    let trained = select_and_train(config, fold, &train_graphs, &train_labels, ds.num_classes)?;
    evaluate_fold(fold, patches, &ds.class_labels, &train, &test, &embs, &trained, embedding_secs)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub patch_extraction_secs: f64,
    pub folds: Vec<FoldTimings>,
    pub total_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub folds: Vec<FoldOutcome>,
    pub notes: Vec<String>,
    /// Wall-clock times; kept out of the report so reports are reproducible.
    #[serde(skip)]
    pub timings: StageTimings,
}

impl ExperimentResult {
    pub fn from_folds(config: ExperimentConfig, folds: Vec<FoldOutcome>, notes: Vec<String>, patch_secs: f64, total_secs: f64) -> Self {
        let fold_accuracies: Vec<f64> = folds.iter().map(|f| f.test_accuracy).collect();
        let (mean, std) = mean_and_population_std(&fold_accuracies);
        let timings = StageTimings {
            patch_extraction_secs: patch_secs,
            folds: folds.iter().map(|f| f.timings.clone()).collect(),
            total_secs,
        };
        Self {
            config,
            fold_accuracies,
            mean,
            std,
            folds,
            notes,
            timings,
        }
    }
}

pub fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn default_notes() -> Vec<String> {
    vec![SELECTION_NOTE.to_string(), STD_NOTE.to_string()]
}

/// Checks that `ds` can be split for `config`.
pub fn check_dataset(config: &ExperimentConfig, ds: &GraphDataset) -> Result<()> {
    config.validate()?;
    if ds.num_classes < 2 {
        return Err(Error::invalid("dataset needs at least two classes"));
    }
    Ok(())
}

/// Runs every fold (concurrently) and aggregates.
pub fn run_experiment(config: &ExperimentConfig, ds: &GraphDataset) -> Result<ExperimentResult> {
    check_dataset(config, ds)?;
    let start = Instant::now();
    let assignment = stratified_folds(&ds.class_labels, config.folds, config.seed)?;
    let patches = extract_all_patches(ds, config.seed);
    let patch_secs = start.elapsed().as_secs_f64();
    let folds = (0..config.folds)
        .into_par_iter()
        .map(|f| run_fold(config, ds, &patches, &assignment, f).map_err(|e| e.in_fold(f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult::from_folds(
        config.clone(),
        folds,
        default_notes(),
        patch_secs,
        start.elapsed().as_secs_f64(),
    ))
}
