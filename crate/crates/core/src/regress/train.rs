use std::io::{Read, Write};
use std::time::{Duration, Instant};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{mse_loss, Reduction};
use super::mlp::MlpModel;
use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Leading (chronological) fraction of rows used for training.
    pub train_fraction: f64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub reduction: Reduction,
    /// Reshuffle training rows every epoch.
    pub shuffle: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 64,
            train_fraction: 0.8,
            patience: 500,
            max_epochs: 10_000,
            seed: 0,
            reduction: Reduction::Sum,
            shuffle: true,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    /// Rows used for training out of `n`; the rest validate.
    pub fn train_rows(&self, n: usize) -> Result<usize> {
        let n_train = (n as f64 * self.train_fraction).round() as usize;
        if n_train == 0 || n_train >= n {
            return Err(contract(format!(
                "split of {n} rows at {} leaves an empty side",
                self.train_fraction
            )));
        }
        Ok(n_train)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean squared error per element, averaged over the epoch's batches.
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stopping_epoch: usize,
    pub best_epoch: Option<usize>,
    pub best_val_mse: Option<f64>,
    pub wall_time: Duration,
}

// Wall time is not a function of the inputs and is left out of comparisons.
impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.epochs == other.epochs
            && self.stopping_epoch == other.stopping_epoch
            && self.best_epoch == other.best_epoch
            && self.best_val_mse.map(f64::to_bits) == other.best_val_mse.map(f64::to_bits)
    }
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["epoch", "train_mse", "val_mse"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), e.train_mse.to_string(), e.val_mse.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_sq(pred: &Array2<f64>, target: ArrayView2<'_, f64>) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter().zip(target.iter()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n
}

/// Mini-batch Adam training with early stopping on a chronological split.
///
/// The first `train_fraction` of rows train, the rest validate. Training
/// stops once validation MSE has not improved for `patience` epochs, and the
/// parameters from the best validation epoch are returned.
pub fn train(
    model: &MlpModel,
    inputs: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    let n = inputs.nrows();
    if n < 2 || targets.nrows() != n {
        return Err(contract(format!("need >= 2 aligned samples (inputs {n}, targets {})", targets.nrows())));
    }
    if inputs.ncols() != model.n_inputs() || targets.ncols() != model.n_outputs() {
        return Err(contract(format!(
            "data is {} -> {}, model is {} -> {}",
            inputs.ncols(),
            targets.ncols(),
            model.n_inputs(),
            model.n_outputs()
        )));
    }
    let n_train = config.train_rows(n)?;
    let (x_train, x_val) = inputs.split_at(Axis(0), n_train);
    let (y_train, y_val) = targets.split_at(Axis(0), n_train);

    let started = Instant::now();
    let mut current = model.clone();
    let mut best = model.clone();
    let mut report = TrainReport::default();
    let mut adam = AdamState::new(config.adam(), &current.param_lengths());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut since_best = 0usize;
    let per_row = targets.ncols() as f64;

    for epoch in 1..=config.max_epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut sse = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = x_train.select(Axis(0), batch);
            let yb = y_train.select(Axis(0), batch);
            let mut batch_sse = 0.0;
            let (grads, _) = current.forward_backward(xb.view(), |out| {
                let (loss, grad) = mse_loss(out.view(), yb.view(), config.reduction)?;
                batch_sse = match config.reduction {
                    Reduction::Sum => loss,
                    Reduction::Mean => loss * out.len() as f64,
                };
                Ok(grad)
            })?;
            sse += batch_sse;
            let grad_slices = grads.slices();
            adam_step(&mut current.param_slices_mut(), &grad_slices, &mut adam)?;
        }
        let train_mse = sse / (n_train as f64 * per_row);
        let val_mse = mean_sq(&current.forward(x_val)?, y_val);
        if !val_mse.is_finite() {
            return Err(Error::NonFinite(format!("validation MSE at epoch {epoch}")));
        }
        report.epochs.push(EpochRecord { epoch, train_mse, val_mse });
        report.stopping_epoch = epoch;
        if report.best_val_mse.is_none_or(|b| val_mse < b) {
            report.best_val_mse = Some(val_mse);
            report.best_epoch = Some(epoch);
            best = current.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    report.wall_time = started.elapsed();
    log::info!(
        "trained {} epochs in {:.1?}, best validation MSE {:?} at epoch {:?}",
        report.stopping_epoch,
        report.wall_time,
        report.best_val_mse,
        report.best_epoch
    );
    Ok((best, report))
}

/// Per-column affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on `x`; columns with zero spread keep unit scale.
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for col in x.columns() {
            let (m, s) = crate::ingest::mean_std(col);
            mean.push(m);
            std.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &Array1::from(self.mean.clone())) / &Array1::from(self.std.clone())
    }

    pub fn invert(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        &z * &Array1::from(self.std.clone()) + &Array1::from(self.mean.clone())
    }
}

/// A trained regressor mapping physical sensor readings to virtual ones,
/// with the normalization fitted on its training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSensorModel {
    pub physical_ids: Vec<String>,
    pub virtual_ids: Vec<String>,
    pub model: MlpModel,
    pub input_scaler: Standardizer,
    pub output_scaler: Standardizer,
    pub config: TrainConfig,
}

impl VirtualSensorModel {
    /// Standardizes with statistics from the training rows only, then trains.
    pub fn fit(
        model: &MlpModel,
        inputs: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
        physical_ids: Vec<String>,
        virtual_ids: Vec<String>,
        config: &TrainConfig,
    ) -> Result<(Self, TrainReport)> {
        config.validate()?;
        if physical_ids.len() != inputs.ncols() || virtual_ids.len() != targets.ncols() {
            return Err(contract("sensor id lists do not match data widths"));
        }
        let n_train = config.train_rows(inputs.nrows())?;
        let input_scaler = Standardizer::fit(inputs.slice(s![..n_train, ..]));
        let output_scaler = Standardizer::fit(targets.slice(s![..n_train, ..]));
        let xs = input_scaler.apply(inputs);
        let ys = output_scaler.apply(targets);
        let (trained, report) = train(model, xs.view(), ys.view(), config)?;
        Ok((
            Self {
                physical_ids,
                virtual_ids,
                model: trained,
                input_scaler,
                output_scaler,
                config: config.clone(),
            },
            report,
        ))
    }

    /// Estimates of the virtual sensors, in their original units.
    pub fn predict_virtual(&self, physical: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if physical.ncols() != self.physical_ids.len() {
            return Err(contract(format!(
                "{} input columns, model was trained on {} physical sensors",
                physical.ncols(),
                self.physical_ids.len()
            )));
        }
        let z = self.model.forward(self.input_scaler.apply(physical).view())?;
        Ok(self.output_scaler.invert(z.view()))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            layer_sizes: self.model.layer_sizes().to_vec(),
            weights: self.model.weights().iter().map(|w| w.iter().copied().collect()).collect(),
            biases: self.model.biases().iter().map(|b| b.to_vec()).collect(),
            input_scaler: self.input_scaler.clone(),
            output_scaler: self.output_scaler.clone(),
            physical_ids: self.physical_ids.clone(),
            virtual_ids: self.virtual_ids.clone(),
            seed: self.config.seed,
            config: self.config.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.format_version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!("unsupported checkpoint version {}", c.format_version)));
        }
        let model = MlpModel::from_parts(&c.layer_sizes, c.weights, c.biases)?;
        if c.physical_ids.len() != model.n_inputs() || c.virtual_ids.len() != model.n_outputs() {
            return Err(Error::Schema("checkpoint sensor lists do not match the model".into()));
        }
        Ok(Self {
            physical_ids: c.physical_ids,
            virtual_ids: c.virtual_ids,
            model,
            input_scaler: c.input_scaler,
            output_scaler: c.output_scaler,
            config: c.config,
        })
    }

    pub fn save<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer(sink, &self.to_checkpoint())?;
        Ok(())
    }

    pub fn load<R: Read>(source: R) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_reader(source)?)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model: row-major weights plus everything needed to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input_scaler: Standardizer,
    pub output_scaler: Standardizer,
    pub physical_ids: Vec<String>,
    pub virtual_ids: Vec<String>,
    pub seed: u64,
    pub config: TrainConfig,
}
