//! Softmax cross-entropy, plain SGD and the epoch loop.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::field::{check_side, RealGrid};
use crate::grad::{backward, Gradients};
use crate::optics::{classify, forward, infer, Model, Readout, DEFAULT_ACTIVATION_SHIFT, NUM_CLASSES};

/// Lower clamp on the label probability inside the log.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub layers: usize,
    pub activation_shift: f64,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            grid_size: 64,
            layers: 1,
            activation_shift: DEFAULT_ACTIVATION_SHIFT,
            checkpoint_path: PathBuf::from("runs/model.ckpt"),
            metrics_path: PathBuf::from("runs/metrics.csv"),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        check_side(self.grid_size, self.grid_size).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.activation_shift >= 0.0 && self.activation_shift.is_finite()) {
            return Err(Error::Config(format!(
                "activation shift must be >= 0, got {}",
                self.activation_shift
            )));
        }
        Ok(())
    }
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub wall_seconds: f64,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.train_accuracy,
            self.val_loss,
            self.val_accuracy,
            self.wall_seconds
        )
    }
}

/// Max-subtracted exponential normalization.
pub fn softmax(readout: &Readout) -> Readout {
    let max = readout.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Readout = std::array::from_fn(|k| (readout[k] - max).exp());
    let total: f64 = exps.iter().sum();
    std::array::from_fn(|k| exps[k] / total)
}

/// `-log(max(p[label], 1e-12))`.
pub fn cross_entropy(probabilities: &Readout, label: usize) -> f64 {
    -probabilities[label].max(PROBABILITY_FLOOR).ln()
}

/// `∂ loss / ∂ readout` for softmax followed by cross-entropy.
pub fn cross_entropy_readout_gradient(probabilities: &Readout, label: usize) -> Readout {
    std::array::from_fn(|k| probabilities[k] - if k == label { 1.0 } else { 0.0 })
}

/// `p ← p - α g` for every parameter.
pub fn sgd_step(mut model: Model, grads: &Gradients, learning_rate: f64) -> Result<Model> {
    grads.check_matches(&model)?;
    for (layer, g) in model.layers_mut().iter_mut().zip(&grads.layers) {
        for (param, grad) in [
            (&mut layer.weight, &g.weight),
            (&mut layer.bias, &g.bias),
            (&mut layer.phase, &g.phase),
        ] {
            for (p, d) in param.as_mut_slice().iter_mut().zip(grad.iter()) {
                *p -= learning_rate * d;
            }
        }
    }
    Ok(model)
}

fn check_label(label: usize) -> Result<()> {
    if label >= NUM_CLASSES {
        return Err(Error::Data(format!("label {label} is not a digit class")));
    }
    Ok(())
}

/// Cross-entropy loss of one image.
pub fn sample_loss(model: &Model, x: &RealGrid, label: usize) -> Result<f64> {
    check_label(label)?;
    Ok(cross_entropy(&softmax(&infer(model, x)?), label))
}

#[derive(Debug, Clone)]
pub struct SampleGradients {
    pub loss: f64,
    pub readout: Readout,
    pub grads: Gradients,
}

/// Loss, readout and parameter gradients for one image.
pub fn sample_gradients(model: &Model, x: &RealGrid, label: usize) -> Result<SampleGradients> {
    check_label(label)?;
    let (readout, tape) = forward(model, x)?;
    let p = softmax(&readout);
    let grads = backward(model, &tape, &cross_entropy_readout_gradient(&p, label))?;
    Ok(SampleGradients {
        loss: cross_entropy(&p, label),
        readout,
        grads,
    })
}

/// Loss and accuracy of a batch before the update it produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

/// Mean gradient over `samples`, reduced in sample order.
pub fn batch_gradients(model: &Model, samples: &[Sample]) -> Result<(Gradients, BatchStats)> {
    if samples.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let per_sample = samples
        .par_iter()
        .map(|s| sample_gradients(model, &s.image, s.label))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = Gradients::zeros_like(model)?;
    let mut stats = BatchStats {
        loss_sum: 0.0,
        correct: 0,
        count: samples.len(),
    };
    let weight = 1.0 / samples.len() as f64;
    for (s, g) in samples.iter().zip(&per_sample) {
        mean.add_scaled(&g.grads, weight)?;
        stats.loss_sum += g.loss;
        stats.correct += usize::from(classify(&g.readout) == s.label);
    }
    Ok((mean, stats))
}

/// One SGD update on a batch.
pub fn train_step(model: Model, samples: &[Sample], learning_rate: f64) -> Result<(Model, BatchStats)> {
    let (grads, stats) = batch_gradients(&model, samples)?;
    Ok((sgd_step(model, &grads, learning_rate)?, stats))
}

/// Per-epoch visiting order: a seeded shuffle, independent for each epoch.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

/// Trains for one epoch over `train`, then evaluates on `validation`.
pub fn train_epoch(
    model: Model,
    train: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
    epoch: usize,
) -> Result<(Model, MetricsRecord)> {
    // α = 0 is allowed here: the epoch then only measures the model.
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) || config.batch_size == 0 {
        return Err(Error::Config(format!(
            "invalid learning rate {} or batch size {}",
            config.learning_rate, config.batch_size
        )));
    }
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let started = Instant::now();
    let grid = model.grid_size();
    let order = epoch_order(train.len(), config.seed, epoch);
    let mut model = model;
    let (mut loss_sum, mut correct) = (0.0, 0);
    for (batch, indices) in order.chunks(config.batch_size).enumerate() {
        let samples = indices
            .iter()
            .map(|&i| train.sample(i, grid))
            .collect::<Result<Vec<_>>>()?;
        let (grads, stats) = batch_gradients(&model, &samples)?;
        if !stats.loss_sum.is_finite() || !grads.is_finite() {
            return Err(Error::Diverged { epoch, batch });
        }
        model = sgd_step(model, &grads, config.learning_rate)?;
        if !model.is_finite() {
            return Err(Error::Diverged { epoch, batch });
        }
        loss_sum += stats.loss_sum;
        correct += stats.correct;
    }
    let val = evaluate(&model, validation)?;
    let record = MetricsRecord {
        epoch,
        train_loss: loss_sum / train.len() as f64,
        train_accuracy: correct as f64 / train.len() as f64,
        val_loss: val.mean_loss,
        val_accuracy: val.accuracy,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, record))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_loss: f64,
    pub accuracy: f64,
    /// `confusion[true][predicted]` counts.
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub count: usize,
}

/// Mean cross-entropy, accuracy and confusion matrix over a dataset.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let grid = model.grid_size();
    let results = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let s = dataset.sample(i, grid)?;
            let readout = infer(model, &s.image)?;
            Ok((cross_entropy(&softmax(&readout), s.label), classify(&readout), s.label))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluation_from(&results)
}

/// Same as [`evaluate`] for already embedded samples.
pub fn evaluate_samples(model: &Model, samples: &[Sample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let results = samples
        .par_iter()
        .map(|s| {
            check_label(s.label)?;
            let readout = infer(model, &s.image)?;
            Ok((cross_entropy(&softmax(&readout), s.label), classify(&readout), s.label))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluation_from(&results)
}

fn evaluation_from(results: &[(f64, usize, usize)]) -> Result<Evaluation> {
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for &(loss, predicted, label) in results {
        loss_sum += loss;
        correct += usize::from(predicted == label);
        confusion[label][predicted] += 1;
    }
    Ok(Evaluation {
        mean_loss: loss_sum / results.len() as f64,
        accuracy: correct as f64 / results.len() as f64,
        confusion,
        count: results.len(),
    })
}
