use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Label, Sample};
use crate::error::{Error, Result};
use crate::layers::norm::Mode;
use crate::network::Network;
use crate::real::Real;
use crate::tensor::QTensor;
use crate::train::loss::{batch_loss, LossKind};
use crate::train::sgd::sgd_step;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 10,
            loss: LossKind::CrossEntropyMagnitude,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be a positive finite number"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    /// Fraction of class labels predicted correctly; NaN for regression targets.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train: Evaluation,
    pub val: Option<Evaluation>,
    pub wall_ms: u128,
}

fn split<'a, T: Real>(chunk: &[&'a Sample<T>]) -> (Vec<QTensor<T>>, Vec<&'a Label<T>>) {
    (
        chunk.iter().map(|s| s.tensor.clone()).collect(),
        chunk.iter().map(|s| &s.label).collect(),
    )
}

/// Inference-mode loss and accuracy over a dataset, in batches.
pub fn evaluate<T: Real>(net: &mut Network<T>, data: &Dataset<T>, loss: LossKind, batch_size: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty dataset"));
    }
    let refs: Vec<&Sample<T>> = data.samples.iter().collect();
    let mut total = 0.0;
    let mut correct = 0;
    for chunk in refs.chunks(batch_size.max(1)) {
        let (x, labels) = split(chunk);
        let out = net.forward(&x, Mode::Infer)?;
        let r = batch_loss(loss, &out, &labels)?;
        total += r.loss.as_f64() * chunk.len() as f64;
        correct += r.correct;
    }
    let n = data.len() as f64;
    let classified = data.classes().is_some();
    Ok(Evaluation {
        loss: total / n,
        accuracy: if classified { correct as f64 / n } else { f64::NAN },
    })
}

/// One pass of minibatch SGD in the order given by `order`; returns the mean
/// training-mode batch loss.
pub fn train_epoch<T: Real>(net: &mut Network<T>, data: &Dataset<T>, order: &[usize], cfg: &TrainConfig) -> Result<f64> {
    let lr = T::of(cfg.learning_rate);
    let mut sum = 0.0;
    let mut batches = 0usize;
    for idx in order.chunks(cfg.batch_size) {
        let chunk: Vec<&Sample<T>> = idx.iter().map(|&i| &data.samples[i]).collect();
        let (x, labels) = split(&chunk);
        net.zero_grad();
        let out = net.forward(&x, Mode::Train)?;
        let r = batch_loss(cfg.loss, &out, &labels)?;
        if !r.loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at batch {batches}")));
        }
        net.backward(r.errors)?;
        sgd_step(net, lr)?;
        sum += r.loss.as_f64();
        batches += 1;
    }
    Ok(sum / batches.max(1) as f64)
}

/// Train for `cfg.epochs` epochs, reshuffling every epoch. After each epoch
/// the training set (and the validation set, if any) is re-evaluated in
/// inference mode, so the reported numbers match a separate evaluation run.
pub fn fit<T: Real>(
    net: &mut Network<T>,
    train: &Dataset<T>,
    val: Option<&Dataset<T>>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let batch_mean = train_epoch(net, train, &order, cfg)?;
        log::debug!("epoch {epoch}: mean batch loss {batch_mean:.6}");
        let train_eval = evaluate(net, train, cfg.loss, cfg.batch_size)?;
        let val_eval = val.map(|v| evaluate(net, v, cfg.loss, cfg.batch_size)).transpose()?;
        if !train_eval.loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss after epoch {epoch}")));
        }
        let m = EpochMetrics {
            epoch,
            train: train_eval,
            val: val_eval,
            wall_ms: start.elapsed().as_millis(),
        };
        on_epoch(&m);
        history.push(m);
    }
    Ok(history)
}
