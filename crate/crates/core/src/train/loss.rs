//! Real-valued losses. Every function returns the loss and the error signal
//! `d = −∂L/∂output` that seeds the backward pass.

use crate::data::Label;
use crate::error::{Error, Result};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    MseReal,
    CrossEntropyMagnitude,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::MseReal => "mse_real",
            LossKind::CrossEntropyMagnitude => "crossentropy_magnitude",
        }
    }
}

/// Mean squared difference over all `4·len` real components; the error is
/// `(target − output)·2/count`.
pub fn loss_mse_real<T: Real>(output: &QTensor<T>, target: &QTensor<T>) -> Result<(T, QTensor<T>)> {
    if output.shape() != target.shape() {
        return Err(Error::shape(format!(
            "output {:?} and target {:?} differ in shape",
            output.shape(),
            target.shape()
        )));
    }
    let count = T::of((4 * output.len()) as f64);
    let mut loss = T::zero();
    let d = QTensor::from_fn(output.shape(), |i| {
        let diff = target.get(i) - output.get(i);
        loss += diff.norm_sq();
        diff.scale(T::of(2.0) / count)
    });
    Ok((loss / count, d))
}

/// Softmax cross-entropy over the magnitudes of the output units. A zero
/// quaternion contributes no error.
pub fn loss_crossentropy_magnitude<T: Real>(output: &[Quaternion<T>], label: usize) -> Result<(T, Vec<Quaternion<T>>)> {
    if output.len() < 2 {
        return Err(Error::invalid("cross-entropy needs at least two classes"));
    }
    if label >= output.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            output.len()
        )));
    }
    let scores: Vec<T> = output.iter().map(|q| q.norm()).collect();
    let top = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = scores.iter().map(|&s| (s - top).exp()).sum();
    let loss = top + sum.ln() - scores[label];
    let d = output
        .iter()
        .zip(&scores)
        .enumerate()
        .map(|(k, (&q, &s))| {
            let p = (s - top).exp() / sum;
            let dl_ds = if k == label { p - T::one() } else { p };
            if s > T::zero() {
                q.scale(-dl_ds / s)
            } else {
                Quaternion::zero()
            }
        })
        .collect();
    Ok((loss, d))
}

/// One-hot target in the real parts, for regression onto class labels.
pub fn one_hot<T: Real>(label: usize, classes: usize) -> Result<QTensor<T>> {
    if label >= classes {
        return Err(Error::invalid(format!("label {label} out of range for {classes} classes")));
    }
    Ok(QTensor::from_fn(&[classes], |i| {
        Quaternion::real(if i == label { T::one() } else { T::zero() })
    }))
}

/// Loss and error signal of one sample.
pub fn sample_loss<T: Real>(kind: LossKind, output: &QTensor<T>, label: &Label<T>) -> Result<(T, QTensor<T>)> {
    match (kind, label) {
        (LossKind::MseReal, Label::Target(t)) => loss_mse_real(output, t),
        (LossKind::MseReal, Label::Class(c)) => {
            if output.rank() != 1 {
                return Err(Error::shape("class labels need a rank-1 output of class units"));
            }
            loss_mse_real(output, &one_hot(*c, output.len())?)
        }
        (LossKind::CrossEntropyMagnitude, Label::Class(c)) => {
            if output.rank() != 1 {
                return Err(Error::shape("cross-entropy needs a rank-1 output of class units"));
            }
            let (l, d) = loss_crossentropy_magnitude(&output.to_quaternions(), *c)?;
            Ok((l, QTensor::from_quaternions(output.shape(), &d)?))
        }
        (LossKind::CrossEntropyMagnitude, Label::Target(_)) => {
            Err(Error::invalid("cross-entropy needs class labels"))
        }
    }
}

/// Predicted class: largest magnitude under cross-entropy, largest real part
/// under squared error. Ties go to the lower index.
pub fn predicted_class<T: Real>(kind: LossKind, output: &QTensor<T>) -> usize {
    let score = |q: Quaternion<T>| match kind {
        LossKind::CrossEntropyMagnitude => q.norm(),
        LossKind::MseReal => q.r,
    };
    let mut best = 0;
    for i in 1..output.len() {
        if score(output.get(i)) > score(output.get(best)) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct BatchLoss<T> {
    /// Mean loss over the batch.
    pub loss: T,
    /// Per-sample error signals, already scaled by `1/batch`.
    pub errors: Vec<QTensor<T>>,
    /// Correctly classified samples (0 for regression targets).
    pub correct: usize,
}

pub fn batch_loss<T: Real>(kind: LossKind, outputs: &[QTensor<T>], labels: &[&Label<T>]) -> Result<BatchLoss<T>> {
    if outputs.len() != labels.len() || outputs.is_empty() {
        return Err(Error::shape(format!(
            "{} outputs for {} labels",
            outputs.len(),
            labels.len()
        )));
    }
    let inv = T::one() / T::of(outputs.len() as f64);
    let mut loss = T::zero();
    let mut errors = Vec::with_capacity(outputs.len());
    let mut correct = 0;
    for (o, l) in outputs.iter().zip(labels) {
        let (li, d) = sample_loss(kind, o, l)?;
        loss += li;
        errors.push(d.scale(inv));
        if let Label::Class(c) = l {
            correct += usize::from(predicted_class(kind, o) == *c);
        }
    }
    Ok(BatchLoss {
        loss: loss * inv,
        errors,
        correct,
    })
}
