//! Mapping real data into quaternion tensors, datasets on disk, and a
//! synthetic pattern-classification task.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{ArrayView2, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::init::{sample_axis, AxisSampling};
use crate::quaternion::Quaternion;
use crate::real::Real;
use crate::tensor::QTensor;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub enum Label<T> {
    Class(usize),
    Target(QTensor<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub tensor: QTensor<T>,
    pub label: Label<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset<T> {
    pub samples: Vec<Sample<T>>,
}

/// `q = 0 + R î + G ĵ + B k̂` per pixel, output `[H, W, 1]`.
pub fn map_rgb<T: Real>(image: ArrayView3<'_, T>) -> Result<QTensor<T>> {
    let (h, w, c) = image.dim();
    if c != 3 {
        return Err(Error::shape(format!("RGB mapping needs 3 channels, got {c}")));
    }
    Ok(QTensor::from_fn(&[h, w, 1], |p| {
        let (y, x) = (p / w, p % w);
        Quaternion::pure([image[[y, x, 0]], image[[y, x, 1]], image[[y, x, 2]]])
    }))
}

/// `q = g` per pixel, output `[H, W, 1]`.
pub fn map_grayscale<T: Real>(image: ArrayView2<'_, T>) -> QTensor<T> {
    let (h, w) = image.dim();
    QTensor::from_fn(&[h, w, 1], |p| Quaternion::real(image[[p / w, p % w]]))
}

/// `q = 0 + x î + y ĵ + z k̂` per point, output `[N, 1]`.
pub fn map_pointcloud<T: Real>(points: ArrayView2<'_, T>) -> Result<QTensor<T>> {
    let (n, d) = points.dim();
    if d != 3 {
        return Err(Error::shape(format!("points need 3 coordinates, got {d}")));
    }
    Ok(QTensor::from_fn(&[n, 1], |p| {
        Quaternion::pure([points[[p, 0]], points[[p, 1]], points[[p, 2]]])
    }))
}

/// `q(t, f) = 0 + e î + Δe ĵ + Δ²e k̂` over a `T × F` series, output `[T, F]`.
/// Δ and Δ² are central differences on interior frames; the first and last
/// frames copy the values of their neighbours.
pub fn map_derivative_stack<T: Real>(series: ArrayView2<'_, T>) -> Result<QTensor<T>> {
    let (t, f) = series.dim();
    if t < 3 {
        return Err(Error::shape(format!("derivative stack needs at least 3 frames, got {t}")));
    }
    let half = T::of(0.5);
    let two = T::of(2.0);
    Ok(QTensor::from_fn(&[t, f], |p| {
        let (s, b) = (p / f, p % f);
        let c = s.clamp(1, t - 2);
        let (prev, mid, next) = (series[[c - 1, b]], series[[c, b]], series[[c + 1, b]]);
        Quaternion::pure([series[[s, b]], (next - prev) * half, next - two * mid + prev])
    }))
}

/// Seed of the four class prototypes, shared by every generated split.
pub const PROTOTYPE_SEED: u64 = 0x5EED_9A77;
pub const SYNTH_CLASSES: usize = 4;
pub const SYNTH_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub samples: usize,
    pub noise: f64,
    /// Largest rotation angle of the sandwich perturbation, in radians.
    pub max_rotation: f64,
    pub prototype_seed: u64,
}

impl SynthSpec {
    pub fn new(seed: u64, samples: usize, noise: f64) -> Self {
        Self {
            seed,
            samples,
            noise,
            max_rotation: 0.3,
            prototype_seed: PROTOTYPE_SEED,
        }
    }
}

/// `[8, 8, 1]` prototypes with components in `U(−1, 1)`.
pub fn synth_prototypes<T: Real>(prototype_seed: u64) -> Vec<QTensor<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(prototype_seed);
    (0..SYNTH_CLASSES)
        .map(|_| {
            QTensor::from_fn(&[SYNTH_SIDE, SYNTH_SIDE, 1], |_| {
                Quaternion::from_array(std::array::from_fn(|_| T::of(rng.random_range(-1.0..1.0))))
            })
        })
        .collect()
}

/// Sample `n` is prototype `n mod 4`, sandwich-rotated by a versor of random
/// axis and angle up to `max_rotation`, plus Gaussian noise on every component.
pub fn synth_with<T: Real>(spec: &SynthSpec) -> Result<Dataset<T>> {
    if !(spec.noise >= 0.0) || !(spec.max_rotation >= 0.0) {
        return Err(Error::invalid("noise and rotation must be >= 0"));
    }
    let protos = synth_prototypes::<f64>(spec.prototype_seed);
    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples = (0..spec.samples)
        .map(|n| {
            let class = n % SYNTH_CLASSES;
            let angle = if spec.max_rotation > 0.0 {
                rng.random_range(0.0..=spec.max_rotation)
            } else {
                0.0
            };
            let axis = sample_axis(&mut rng, AxisSampling::Isotropic);
            let w = Quaternion::versor(angle / 2.0, axis);
            let tensor = QTensor::from_fn(protos[class].shape(), |p| {
                let mut q = w * protos[class].get(p) * w.conj();
                if spec.noise > 0.0 {
                    for c in 0..4 {
                        *q.component_mut(c) += normal.sample(&mut rng);
                    }
                }
                Quaternion::from_array(q.to_array().map(T::of))
            });
            Sample {
                tensor,
                label: Label::Class(class),
            }
        })
        .collect();
    Ok(Dataset { samples })
}

pub fn synth_pattern<T: Real>(seed: u64, samples: usize, noise: f64) -> Result<Dataset<T>> {
    synth_with(&SynthSpec::new(seed, samples, noise))
}

impl<T: Real> Dataset<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// One more than the largest class label, or `None` for regression targets.
    pub fn classes(&self) -> Option<usize> {
        self.samples
            .iter()
            .map(|s| match s.label {
                Label::Class(c) => Some(c),
                Label::Target(_) => None,
            })
            .collect::<Option<Vec<_>>>()
            .and_then(|v| v.into_iter().max())
            .map(|m| m + 1)
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            samples: self
                .samples
                .iter()
                .map(|s| Sample {
                    tensor: s.tensor.cast(),
                    label: match &s.label {
                        Label::Class(c) => Label::Class(*c),
                        Label::Target(t) => Label::Target(t.cast()),
                    },
                })
                .collect(),
        }
    }

    /// Check every sample against an input shape and, for class labels, a class count.
    pub fn validate(&self, input: &[usize], classes: Option<usize>) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        for (n, s) in self.samples.iter().enumerate() {
            if s.tensor.shape() != input {
                return Err(Error::shape(format!(
                    "sample {n} has shape {:?}, model expects {input:?}",
                    s.tensor.shape()
                )));
            }
            if let (Label::Class(c), Some(k)) = (&s.label, classes) {
                if *c >= k {
                    return Err(Error::invalid(format!("sample {n} has label {c}, only {k} classes")));
                }
            }
        }
        Ok(())
    }

    /// Write `samples/NNNNNN.qt1`, target tensors under `targets/`, and a
    /// manifest of `path label` lines.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("samples"))?;
        let mut manifest = BufWriter::new(fs::File::create(dir.join(MANIFEST))?);
        for (n, s) in self.samples.iter().enumerate() {
            let rel = format!("samples/{n:06}.qt1");
            s.tensor.write_qt1(BufWriter::new(fs::File::create(dir.join(&rel))?))?;
            let label = match &s.label {
                Label::Class(c) => c.to_string(),
                Label::Target(t) => {
                    fs::create_dir_all(dir.join("targets"))?;
                    let trel = format!("targets/{n:06}.qt1");
                    t.write_qt1(BufWriter::new(fs::File::create(dir.join(&trel))?))?;
                    trel
                }
            };
            writeln!(manifest, "{rel} {label}")?;
        }
        manifest.flush()?;
        Ok(())
    }

    /// Read a directory written by [`Dataset::save`]. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        let read = |rel: &str| -> Result<QTensor<T>> {
            let f = fs::File::open(dir.join(rel))
                .map_err(|e| Error::Format(format!("{}: {e}", dir.join(rel).display())))?;
            QTensor::read_qt1(BufReader::new(f))
        };
        let mut samples = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(path), Some(label), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Format(format!(
                    "{MANIFEST} line {}: expected `path label`",
                    n + 1
                )));
            };
            let label = match label.parse::<usize>() {
                Ok(c) => Label::Class(c),
                Err(_) => Label::Target(read(label)?),
            };
            samples.push(Sample {
                tensor: read(path)?,
                label,
            });
        }
        Ok(Self { samples })
    }
}
