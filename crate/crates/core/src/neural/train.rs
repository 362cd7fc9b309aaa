use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{loss_and_gradients, Gradients, GraphBatch, KcnnModel, ModelShape, TrainConfig};
use crate::embed::EmbeddedGraph;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Adam optimiser state for the five parameter groups of a [`KcnnModel`].
#[derive(Clone, Debug)]
pub struct Adam {
    learning_rate: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &KcnnModel, learning_rate: f64) -> Self {
        let sizes: Vec<usize> = model.params().iter().map(|g| g.len()).collect();
        Self {
            learning_rate,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn apply(&mut self, model: &mut KcnnModel, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let lr = self.learning_rate;
        for (((params, grad), m), v) in model
            .params_mut()
            .into_iter()
            .zip(grads.groups())
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..params.len() {
                let g = grad[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPSILON);
            }
        }
    }
}

/// Epoch-at-a-time mini-batch training.
///
/// Each epoch shuffles the training set with the trainer's RNG, which also
/// draws every dropout mask, so a run stopped after `e` epochs is identical to
/// a run configured for `e` epochs.
pub struct Trainer<'a> {
    model: KcnnModel,
    config: TrainConfig,
    adam: Adam,
    rng: ChaCha8Rng,
    graphs: &'a [EmbeddedGraph],
    labels: &'a [usize],
    batches_done: usize,
    loss_history: Vec<f64>,
}

impl<'a> Trainer<'a> {
    /// Fresh model for `graphs` with `num_classes` outputs; initial weights
    /// and the training stream both derive from `config.seed`.
    pub fn new(config: &TrainConfig, graphs: &'a [EmbeddedGraph], labels: &'a [usize], num_classes: usize) -> Result<Self> {
        config.validate()?;
        let first = graphs.first().ok_or_else(|| Error::invalid("no training graphs"))?;
        if labels.len() != graphs.len() {
            return Err(Error::invalid("one label per training graph required"));
        }
        let shape = ModelShape {
            num_filters: config.num_filters,
            channels: first.channels(),
            dim: first.dim(),
            dense_units: config.dense_units,
            num_classes,
        };
        let model = KcnnModel::new(shape, config.dropout, config.seed)?;
        Ok(Self::resume(model, config, graphs, labels))
    }

    /// Continues training an existing model with a fresh optimiser.
    pub fn resume(model: KcnnModel, config: &TrainConfig, graphs: &'a [EmbeddedGraph], labels: &'a [usize]) -> Self {
        Self {
            adam: Adam::new(&model, config.learning_rate),
            model,
            config: config.clone(),
            rng: seed::rng(config.seed, Stream::Training, &[]),
            graphs,
            labels,
            batches_done: 0,
            loss_history: Vec::new(),
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.loss_history.len()
    }

    pub fn model(&self) -> &KcnnModel {
        &self.model
    }

    /// Mean mini-batch loss per completed epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// One pass over the training set; returns the epoch's mean batch loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.graphs.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let refs: Vec<&EmbeddedGraph> = chunk.iter().map(|&i| &self.graphs[i]).collect();
            let labels = chunk.iter().map(|&i| self.labels[i]).collect();
            let batch = GraphBatch::new(&refs, labels, None)?;
            let batch_index = self.batches_done;
            let (loss, grads) = loss_and_gradients(&self.model, &batch, &mut self.rng).map_err(|e| match e {
                Error::TrainingDiverged { .. } => Error::TrainingDiverged { batch_index },
                other => other,
            })?;
            self.adam.apply(&mut self.model, &grads);
            if !self.model.is_finite() {
                return Err(Error::TrainingDiverged { batch_index });
            }
            self.batches_done += 1;
            total += loss;
            count += 1;
        }
        let mean = total / count as f64;
        self.loss_history.push(mean);
        Ok(mean)
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            model: self.model,
            loss_history: self.loss_history,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: KcnnModel,
    pub loss_history: Vec<f64>,
}

/// Trains a fresh model for `config.epochs` epochs.
pub fn train(graphs: &[EmbeddedGraph], labels: &[usize], num_classes: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, graphs, labels, num_classes)?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.into_outcome())
}
