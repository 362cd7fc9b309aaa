//! The KCNN classifier.
//!
//! For every filter `w_f` (one `p`-vector per channel) and every real patch
//! `j` of a graph, the convolution value is `c_j = sum_c <w_{f,c}, z_{j,c}>`
//! (identity activation). Each filter is max-pooled over the graph's real
//! patches only; zero padding never enters the max. The pooled vector feeds
//! a ReLU dense layer with inverted dropout and a softmax output layer.
//!
//! All parameters and activations are `f64`.

mod checkpoint;
mod train;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddedGraph;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

pub use checkpoint::{read_checkpoint, write_checkpoint, write_loss_history};
pub use train::{train, Adam, TrainOutcome, Trainer};

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_filters: usize,
    pub dense_units: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_filters: 256,
            dense_units: 128,
            dropout: 0.5,
            batch_size: 64,
            epochs: 100,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_filters == 0 || self.dense_units == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid(
                "filters, dense units, batch size and epochs must all be positive",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

/// Network dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub num_filters: usize,
    pub channels: usize,
    pub dim: usize,
    pub dense_units: usize,
    pub num_classes: usize,
}

impl ModelShape {
    /// Length of one patch vector across all channels.
    pub fn patch_width(&self) -> usize {
        self.channels * self.dim
    }
}

/// Filter bank, dense layer and output layer.
///
/// `filters` is `F x (C * p)`: row `f` holds filter `f`, channel after
/// channel.
#[derive(Clone, Debug, PartialEq)]
pub struct KcnnModel {
    pub shape: ModelShape,
    pub dropout_rate: f64,
    pub rng_seed: u64,
    pub filters: DMatrix<f64>,
    pub dense_weights: DMatrix<f64>,
    pub dense_bias: DVector<f64>,
    pub output_weights: DMatrix<f64>,
    pub output_bias: DVector<f64>,
}

fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut m = DMatrix::zeros(rows, cols);
    // fill row-major so the draw order is independent of storage layout
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = rng.random_range(-a..a);
        }
    }
    m
}

impl KcnnModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(shape: ModelShape, dropout_rate: f64, seed: u64) -> Result<Self> {
        if shape.num_filters == 0
            || shape.channels == 0
            || shape.dim == 0
            || shape.dense_units == 0
            || shape.num_classes < 2
        {
            return Err(Error::invalid(format!("invalid model shape {shape:?}")));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::invalid(format!("dropout {dropout_rate} outside [0, 1)")));
        }
        let mut rng = seed::rng(seed, Stream::ModelInit, &[]);
        let width = shape.patch_width();
        let filters = glorot(shape.num_filters, width, width, shape.num_filters, &mut rng);
        let dense_weights = glorot(
            shape.dense_units,
            shape.num_filters,
            shape.num_filters,
            shape.dense_units,
            &mut rng,
        );
        let output_weights = glorot(
            shape.num_classes,
            shape.dense_units,
            shape.dense_units,
            shape.num_classes,
            &mut rng,
        );
        Ok(Self {
            shape,
            dropout_rate,
            rng_seed: seed,
            filters,
            dense_weights,
            dense_bias: DVector::zeros(shape.dense_units),
            output_weights,
            output_bias: DVector::zeros(shape.num_classes),
        })
    }

    /// Parameter groups in a fixed order: filters, dense weights, dense
    /// bias, output weights, output bias.
    pub fn params_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.filters.as_mut_slice(),
            self.dense_weights.as_mut_slice(),
            self.dense_bias.as_mut_slice(),
            self.output_weights.as_mut_slice(),
            self.output_bias.as_mut_slice(),
        ]
    }

    pub fn params(&self) -> [&[f64]; 5] {
        [
            self.filters.as_slice(),
            self.dense_weights.as_slice(),
            self.dense_bias.as_slice(),
            self.output_weights.as_slice(),
            self.output_bias.as_slice(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|g| g.iter().all(|x| x.is_finite()))
    }
}

/// Gradients, congruent with [`KcnnModel`]'s parameter groups.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub filters: DMatrix<f64>,
    pub dense_weights: DMatrix<f64>,
    pub dense_bias: DVector<f64>,
    pub output_weights: DMatrix<f64>,
    pub output_bias: DVector<f64>,
}

impl Gradients {
    pub fn groups(&self) -> [&[f64]; 5] {
        [
            self.filters.as_slice(),
            self.dense_weights.as_slice(),
            self.dense_bias.as_slice(),
            self.output_weights.as_slice(),
            self.output_bias.as_slice(),
        ]
    }

    pub fn norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|g| g.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// A zero-padded mini-batch, `B x C x P_max x p`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    batch: usize,
    channels: usize,
    max_patches: usize,
    dim: usize,
    patch_tensors: Vec<f64>,
    patch_counts: Vec<usize>,
    labels: Vec<usize>,
}

impl GraphBatch {
    /// Packs graphs into a batch padded to `max_patches` (or to the largest
    /// graph in the batch when `None`).
    pub fn new(graphs: &[&EmbeddedGraph], labels: Vec<usize>, max_patches: Option<usize>) -> Result<Self> {
        let first = graphs.first().ok_or_else(|| Error::invalid("empty batch"))?;
        if labels.len() != graphs.len() {
            return Err(Error::invalid("one label per graph required"));
        }
        let (channels, dim) = (first.channels(), first.dim());
        let largest = graphs.iter().map(|g| g.num_patches()).max().unwrap_or(0);
        let max_patches = max_patches.unwrap_or(largest);
        if largest > max_patches {
            return Err(Error::invalid(format!(
                "graph with {largest} patches exceeds padding {max_patches}"
            )));
        }
        let batch = graphs.len();
        let mut patch_tensors = vec![0.0; batch * channels * max_patches * dim];
        for (b, g) in graphs.iter().enumerate() {
            if g.channels() != channels || g.dim() != dim {
                return Err(Error::invalid("graphs in a batch differ in channels or dimension"));
            }
            for j in 0..g.num_patches() {
                let patch = g.patch(j);
                for c in 0..channels {
                    let dst = ((b * channels + c) * max_patches + j) * dim;
                    patch_tensors[dst..dst + dim].copy_from_slice(&patch[c * dim..(c + 1) * dim]);
                }
            }
        }
        Ok(Self {
            batch,
            channels,
            max_patches,
            dim,
            patch_tensors,
            patch_counts: graphs.iter().map(|g| g.num_patches()).collect(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.batch
    }

    pub fn is_empty(&self) -> bool {
        self.batch == 0
    }

    pub fn max_patches(&self) -> usize {
        self.max_patches
    }

    pub fn patch_counts(&self) -> &[usize] {
        &self.patch_counts
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn patch_tensors(&self) -> &[f64] {
        &self.patch_tensors
    }

    /// Value at (graph `b`, channel `c`, patch `j`, coordinate `d`).
    pub fn at(&self, b: usize, c: usize, j: usize, d: usize) -> f64 {
        self.patch_tensors[((b * self.channels + c) * self.max_patches + j) * self.dim + d]
    }

    /// Real patches as columns of a `(C * p) x sum(P_i)` matrix, plus the
    /// first column of each graph.
    fn patch_columns(&self) -> (DMatrix<f64>, Vec<usize>) {
        let width = self.channels * self.dim;
        let total: usize = self.patch_counts.iter().sum();
        let mut z = DMatrix::zeros(width, total);
        let mut starts = Vec::with_capacity(self.batch + 1);
        let mut col = 0;
        for b in 0..self.batch {
            starts.push(col);
            for j in 0..self.patch_counts[b] {
                let dst = &mut z.as_mut_slice()[col * width..(col + 1) * width];
                for c in 0..self.channels {
                    let src = ((b * self.channels + c) * self.max_patches + j) * self.dim;
                    dst[c * self.dim..(c + 1) * self.dim]
                        .copy_from_slice(&self.patch_tensors[src..src + self.dim]);
                }
                col += 1;
            }
        }
        starts.push(col);
        (z, starts)
    }
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    patches: DMatrix<f64>,
    /// `argmax[f + b * F]` is the patch column that won filter `f` in graph `b`.
    argmax: Vec<usize>,
    pooled: DMatrix<f64>,
    pre_activation: DMatrix<f64>,
    /// Inverted-dropout multipliers (`0` or `1 / (1 - rate)`), if training.
    mask: Option<DMatrix<f64>>,
    hidden: DMatrix<f64>,
    /// Log class probabilities, `K x B`.
    log_probs: DMatrix<f64>,
    probs: DMatrix<f64>,
}

impl ForwardCache {
    /// Max-pooled filter responses, `F x B`.
    pub fn pooled(&self) -> &DMatrix<f64> {
        &self.pooled
    }

    /// Class probabilities, `B x K`.
    pub fn probabilities(&self) -> DMatrix<f64> {
        self.probs.transpose()
    }
}

/// Runs the network on `batch`. Passing an RNG switches on dropout; the mask
/// is drawn from it in a fixed order.
///
/// Returns the `B x K` probability matrix and the cache.
pub fn forward(model: &KcnnModel, batch: &GraphBatch, dropout_rng: Option<&mut dyn RngCore>) -> Result<(DMatrix<f64>, ForwardCache)> {
    let cache = forward_cache(model, batch, dropout_rng)?;
    Ok((cache.probabilities(), cache))
}

fn forward_cache(model: &KcnnModel, batch: &GraphBatch, dropout_rng: Option<&mut dyn RngCore>) -> Result<ForwardCache> {
    let shape = model.shape;
    if batch.channels != shape.channels || batch.dim != shape.dim {
        return Err(Error::invalid(format!(
            "batch has {} channels of dimension {}, model expects {} of {}",
            batch.channels, batch.dim, shape.channels, shape.dim
        )));
    }
    if let Some(b) = batch.patch_counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("graph {b} in batch has no patches")));
    }
    let f_count = shape.num_filters;
    let (patches, starts) = batch.patch_columns();
    let conv = &model.filters * &patches;

    let mut pooled = DMatrix::zeros(f_count, batch.batch);
    let mut argmax = vec![0usize; f_count * batch.batch];
    let conv_data = conv.as_slice();
    for b in 0..batch.batch {
        let (lo, hi) = (starts[b], starts[b + 1]);
        let best = &mut argmax[b * f_count..(b + 1) * f_count];
        best.fill(lo);
        let mut max = conv_data[lo * f_count..(lo + 1) * f_count].to_vec();
        for t in lo + 1..hi {
            let col = &conv_data[t * f_count..(t + 1) * f_count];
            for f in 0..f_count {
                if col[f] > max[f] {
                    max[f] = col[f];
                    best[f] = t;
                }
            }
        }
        pooled.column_mut(b).copy_from_slice(&max);
    }

    let mut pre_activation = &model.dense_weights * &pooled;
    for mut col in pre_activation.column_iter_mut() {
        col += &model.dense_bias;
    }
    let mut hidden = pre_activation.map(|x| x.max(0.0));
    let mask = match dropout_rng {
        Some(rng) if model.dropout_rate > 0.0 => {
            let keep = 1.0 - model.dropout_rate;
            let mut m = DMatrix::zeros(hidden.nrows(), hidden.ncols());
            for v in m.as_mut_slice() {
                *v = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
            }
            hidden.component_mul_assign(&m);
            Some(m)
        }
        _ => None,
    };

    let mut log_probs = &model.output_weights * &hidden;
    for mut col in log_probs.column_iter_mut() {
        col += &model.output_bias;
        let max = col.max();
        let log_sum = col.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        col.apply(|x| *x = *x - max - log_sum);
    }
    let probs = log_probs.map(f64::exp);
    Ok(ForwardCache {
        patches,
        argmax,
        pooled,
        pre_activation,
        mask,
        hidden,
        log_probs,
        probs,
    })
}

/// Mean cross-entropy and its exact gradient, with dropout active (mask
/// drawn from `rng`).
pub fn loss_and_gradients(model: &KcnnModel, batch: &GraphBatch, rng: &mut dyn RngCore) -> Result<(f64, Gradients)> {
    let cache = forward_cache(model, batch, Some(rng))?;
    let (loss, grads) = backward(model, batch, &cache)?;
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged { batch_index: 0 });
    }
    Ok((loss, grads))
}

/// Loss and gradient for an existing forward pass.
pub fn backward(model: &KcnnModel, batch: &GraphBatch, cache: &ForwardCache) -> Result<(f64, Gradients)> {
    let shape = model.shape;
    let n = batch.batch as f64;
    let k = shape.num_classes;
    let mut loss = 0.0;
    let mut d_logits = cache.probs.clone();
    for (b, &y) in batch.labels.iter().enumerate() {
        if y >= k {
            return Err(Error::invalid(format!("label {y} outside {k} classes")));
        }
        loss -= cache.log_probs[(y, b)];
        d_logits[(y, b)] -= 1.0;
    }
    loss /= n;
    d_logits /= n;

    let output_weights = &d_logits * cache.hidden.transpose();
    let output_bias = DVector::from_iterator(k, d_logits.row_iter().map(|r| r.sum()));

    let mut d_pre = model.output_weights.tr_mul(&d_logits);
    if let Some(mask) = &cache.mask {
        d_pre.component_mul_assign(mask);
    }
    d_pre.zip_apply(&cache.pre_activation, |g, pre| {
        if pre <= 0.0 {
            *g = 0.0;
        }
    });
    let dense_weights = &d_pre * cache.pooled.transpose();
    let dense_bias = DVector::from_iterator(shape.dense_units, d_pre.row_iter().map(|r| r.sum()));
    let d_pooled = model.dense_weights.tr_mul(&d_pre);

    let f_count = shape.num_filters;
    let width = shape.patch_width();
    let mut filters = DMatrix::zeros(f_count, width);
    let z = cache.patches.as_slice();
    let dp = d_pooled.as_slice();
    let out = filters.as_mut_slice();
    for b in 0..batch.batch {
        let winners = &cache.argmax[b * f_count..(b + 1) * f_count];
        let grads = &dp[b * f_count..(b + 1) * f_count];
        for d in 0..width {
            let col = &mut out[d * f_count..(d + 1) * f_count];
            for f in 0..f_count {
                col[f] += grads[f] * z[winners[f] * width + d];
            }
        }
    }

    Ok((
        loss,
        Gradients {
            filters,
            dense_weights,
            dense_bias,
            output_weights,
            output_bias,
        },
    ))
}

/// Index of the largest entry, lowest index on ties.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Class probabilities (`N x K`) for graphs, dropout off.
pub fn predict_proba(model: &KcnnModel, graphs: &[EmbeddedGraph], batch_size: usize) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(graphs.len(), model.shape.num_classes);
    let mut row = 0;
    for chunk in graphs.chunks(batch_size.max(1)) {
        let refs: Vec<&EmbeddedGraph> = chunk.iter().collect();
        let batch = GraphBatch::new(&refs, vec![0; refs.len()], None)?;
        let (probs, _) = forward(model, &batch, None)?;
        out.rows_mut(row, chunk.len()).copy_from(&probs);
        row += chunk.len();
    }
    Ok(out)
}

/// Most probable class per graph; ties go to the lower class id.
pub fn predict(model: &KcnnModel, graphs: &[EmbeddedGraph]) -> Result<Vec<usize>> {
    let probs = predict_proba(model, graphs, 256)?;
    Ok(probs.row_iter().map(|r| argmax(r.iter().copied())).collect())
}

/// Fraction of graphs whose prediction equals the label.
pub fn accuracy(model: &KcnnModel, graphs: &[EmbeddedGraph], labels: &[usize]) -> Result<f64> {
    if graphs.is_empty() {
        return Ok(0.0);
    }
    let predicted = predict(model, graphs)?;
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / graphs.len() as f64)
}
