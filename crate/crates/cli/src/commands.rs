//! Subcommand implementations. Each returns the text it printed so tests can
//! compare runs.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use quatnet::data::{synth_pattern, Dataset, Label, Sample};
use quatnet::init::RNG_NAME;
use quatnet::network::Network;
use quatnet::train::{evaluate, fit, gradient_check, GradCheckReport, LossKind};
use quatnet::{QTensor, Quaternion, Real};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::{loss_name, DataSource, Precision, RunConfig};
use crate::error::{CliError, CliResult};

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";
pub const TIMING_FILE: &str = "timing.csv";
pub const TIMING_HEADER: &str = "epoch,wall_ms";
pub const CHECKPOINT_FILE: &str = "checkpoint.qnck";
pub const META_FILE: &str = "run_meta.txt";
pub const GRADCHECK_FILE: &str = "gradcheck.txt";
pub const PARAMS_FILE: &str = "params.csv";
pub const HISTOGRAM_FILE: &str = "histograms.csv";
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

fn dataset_err(e: impl std::fmt::Display) -> CliError {
    CliError::Dataset(e.to_string())
}

fn load_source<T: Real>(src: &DataSource) -> CliResult<Dataset<T>> {
    match src {
        DataSource::Dir(dir) => Dataset::load(dir).map_err(|e| dataset_err(format!("{}: {e}", dir.display()))),
        DataSource::Synth { samples, noise, seed } => synth_pattern(*seed, *samples, *noise).map_err(dataset_err),
    }
}

/// Check inputs against the model and labels against its output and loss.
fn check_dataset<T: Real>(data: &Dataset<T>, net: &Network<T>, loss: LossKind) -> CliResult<()> {
    let input = net.spec().input;
    let out = net.output_shape();
    data.validate(&input, None).map_err(dataset_err)?;
    for (n, s) in data.samples.iter().enumerate() {
        match &s.label {
            Label::Class(c) if out.len() != 1 || *c >= out[0] => {
                return Err(dataset_err(format!("sample {n}: class {c} does not fit output shape {out:?}")))
            }
            Label::Target(_) if loss == LossKind::CrossEntropyMagnitude => {
                return Err(dataset_err(format!("sample {n}: cross-entropy needs class labels")))
            }
            Label::Target(t) if t.shape() != out.as_slice() => {
                return Err(dataset_err(format!(
                    "sample {n}: target shape {:?} differs from output shape {out:?}",
                    t.shape()
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

fn build<T: Real>(cfg: &RunConfig) -> CliResult<Network<T>> {
    Network::new(&cfg.model, cfg.seed).map_err(|e| CliError::Config(e.to_string()))
}

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.6}")
    }
}

fn out_dir(cfg: &RunConfig) -> CliResult<&Path> {
    cfg.out
        .as_deref()
        .ok_or_else(|| CliError::Config("no output directory; pass --out or set out in the config".into()))
}

/// Train, writing the metrics and timing CSVs, run metadata and a final
/// checkpoint into the output directory.
pub fn train(cfg: &RunConfig) -> CliResult<String> {
    match cfg.precision {
        Precision::F32 => train_as::<f32>(cfg),
        Precision::F64 => train_as::<f64>(cfg),
    }
}

fn train_as<T: Real>(cfg: &RunConfig) -> CliResult<String> {
    let dir = out_dir(cfg)?;
    let mut net = build::<T>(cfg)?;
    let train_src = cfg
        .data
        .train
        .as_ref()
        .ok_or_else(|| CliError::Config("data.train or data.synth_train is required".into()))?;
    let train_set = load_source::<T>(train_src)?;
    check_dataset(&train_set, &net, cfg.train.loss)?;
    let val_set = cfg.data.val.as_ref().map(load_source::<T>).transpose()?;
    if let Some(v) = &val_set {
        check_dataset(v, &net, cfg.train.loss)?;
    }

    fs::create_dir_all(dir)?;
    let mut metrics = fs::File::create(dir.join(METRICS_FILE))?;
    let mut timing = fs::File::create(dir.join(TIMING_FILE))?;
    writeln!(metrics, "{METRICS_HEADER}")?;
    writeln!(timing, "{TIMING_HEADER}")?;
    let mut printed = String::new();
    let mut io_err = None;
    let result = fit(&mut net, &train_set, val_set.as_ref(), &cfg.train, |m| {
        let (vl, va) = m.val.map_or((String::new(), String::new()), |v| (fmt_metric(v.loss), fmt_metric(v.accuracy)));
        let row = format!(
            "{},{},{},{vl},{va}",
            m.epoch,
            fmt_metric(m.train.loss),
            fmt_metric(m.train.accuracy)
        );
        log::info!("epoch {} ({} ms): {row}", m.epoch, m.wall_ms);
        let written = writeln!(metrics, "{row}").and_then(|_| writeln!(timing, "{},{}", m.epoch, m.wall_ms));
        if let (Err(e), None) = (written, &io_err) {
            io_err = Some(e);
        }
        let _ = writeln!(printed, "{row}");
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    result.map_err(CliError::from_run)?;

    Checkpoint::from_network(&net).save(&dir.join(CHECKPOINT_FILE))?;
    let meta = format!(
        "seed={}\nprecision={}\nthreads={}\nrng={RNG_NAME}\nloss={}\nlearning_rate={}\nbatch_size={}\nepochs={}\ntrain_samples={}\nval_samples={}\nparameters={}\n",
        cfg.seed,
        cfg.precision.as_str(),
        rayon::current_num_threads(),
        loss_name(cfg.train.loss),
        cfg.train.learning_rate,
        cfg.train.batch_size,
        cfg.train.epochs,
        train_set.len(),
        val_set.as_ref().map_or(0, |v| v.len()),
        net.param_count(),
    );
    fs::write(dir.join(META_FILE), meta)?;
    Ok(format!("{METRICS_HEADER}\n{printed}"))
}

/// Loss and accuracy of a checkpoint on one data split.
pub fn eval(cfg: &RunConfig, checkpoint: &Path, split: Split) -> CliResult<String> {
    let ck = Checkpoint::load(checkpoint)?;
    if ck.model != cfg.model {
        return Err(CliError::Checkpoint(format!(
            "{} was saved for a different model than the config describes",
            checkpoint.display()
        )));
    }
    match cfg.precision {
        Precision::F32 => eval_as::<f32>(cfg, &ck, split),
        Precision::F64 => eval_as::<f64>(cfg, &ck, split),
    }
}

fn eval_as<T: Real>(cfg: &RunConfig, ck: &Checkpoint, split: Split) -> CliResult<String> {
    let mut net: Network<T> = ck.to_network()?;
    let (name, src) = match split {
        Split::Train => ("train", cfg.data.train.as_ref()),
        Split::Val => ("val", cfg.data.val.as_ref()),
    };
    let src = src.ok_or_else(|| CliError::Config(format!("config has no {name} data")))?;
    let data = load_source::<T>(src)?;
    check_dataset(&data, &net, cfg.train.loss)?;
    let e = evaluate(&mut net, &data, cfg.train.loss, cfg.train.batch_size).map_err(CliError::from_run)?;
    Ok(format!(
        "split={name} samples={} loss={} accuracy={}\n",
        data.len(),
        fmt_metric(e.loss),
        fmt_metric(e.accuracy)
    ))
}

fn random_batch(cfg: &RunConfig, net: &Network<f64>) -> CliResult<(Vec<QTensor<f64>>, Vec<Label<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6C0C_4EC7);
    let n = cfg.gradcheck.batch;
    if let Some(src) = &cfg.data.train {
        let data = load_source::<f64>(src)?;
        check_dataset(&data, net, cfg.train.loss)?;
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut rng);
        let picked: Vec<&Sample<f64>> = idx.iter().take(n).map(|&i| &data.samples[i]).collect();
        return Ok((
            picked.iter().map(|s| s.tensor.clone()).collect(),
            picked.iter().map(|s| s.label.clone()).collect(),
        ));
    }
    let normal = rand_distr::StandardNormal;
    let tensor = |shape: &[usize], rng: &mut ChaCha8Rng| {
        QTensor::from_fn(shape, |_| {
            let mut c = || rng.sample::<f64, _>(normal);
            Quaternion::new(c(), c(), c(), c())
        })
    };
    let out = net.output_shape();
    let inputs = (0..n).map(|_| tensor(&cfg.model.input, &mut rng)).collect();
    let labels = (0..n)
        .map(|_| match cfg.train.loss {
            LossKind::CrossEntropyMagnitude => Label::Class(rng.random_range(0..out.iter().product::<usize>().max(1))),
            LossKind::MseReal => Label::Target(tensor(&out, &mut rng)),
        })
        .collect();
    Ok((inputs, labels))
}

/// Finite-difference check of every parameter gradient on one random batch,
/// always in double precision. The report is also written to the output
/// directory when one is configured.
pub fn gradcheck(cfg: &RunConfig) -> CliResult<(String, GradCheckReport)> {
    let mut net = build::<f64>(cfg)?;
    let (batch, labels) = random_batch(cfg, &net)?;
    let report = gradient_check(&mut net, &batch, &labels, cfg.train.loss, &cfg.gradcheck.check)
        .map_err(CliError::from_run)?;
    let text = report.render();
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(GRADCHECK_FILE), &text)?;
    }
    Ok((text, report))
}

/// Per-layer parameter counts and weight-magnitude histograms of a checkpoint.
pub fn inspect(checkpoint: &Path, out: Option<&Path>) -> CliResult<String> {
    let ck = Checkpoint::load(checkpoint).map_err(|e| match e {
        CliError::Checkpoint(m) => CliError::Corrupt(m),
        other => other,
    })?;
    let net: Network<f32> = ck.to_network().map_err(|e| CliError::Corrupt(e.to_string()))?;

    let mut params = String::from("layer,kind,quaternions,reals,free_reals\n");
    let mut hist = String::from("layer,kind,bin,lower,upper,count\n");
    let (mut total_q, mut total_free) = (0usize, 0usize);
    for (i, layer) in net.layers().iter().enumerate() {
        let q: usize = layer.params().iter().map(|p| p.value.len()).sum();
        let free: usize = layer.params().iter().map(|p| p.free_count()).sum();
        total_q += q;
        total_free += free;
        let _ = writeln!(params, "{i},{},{q},{},{free}", layer.kind(), 4 * q);

        let mags: Vec<f64> = layer
            .params()
            .iter()
            .flat_map(|p| p.value.iter().map(|w| w.norm().as_f64()))
            .collect();
        if mags.is_empty() {
            continue;
        }
        let top = mags.iter().copied().fold(0.0f64, f64::max);
        let width = if top > 0.0 { top / HISTOGRAM_BINS as f64 } else { 1.0 };
        let mut counts = [0usize; HISTOGRAM_BINS];
        for m in &mags {
            counts[((m / width) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        }
        for (b, c) in counts.iter().enumerate() {
            let _ = writeln!(
                hist,
                "{i},{},{b},{:.6},{:.6},{c}",
                layer.kind(),
                b as f64 * width,
                (b + 1) as f64 * width
            );
        }
    }
    let summary = format!(
        "checkpoint: {}\nlayers: {}\nquaternion parameters: {total_q}\nreal parameters: {} (4 x {total_q})\nfree real parameters: {total_free}\n",
        checkpoint.display(),
        net.layers().len(),
        4 * total_q,
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(PARAMS_FILE), &params)?;
        fs::write(dir.join(HISTOGRAM_FILE), &hist)?;
    }
    Ok(format!("{summary}\n{params}\n{hist}"))
}

/// Write a synthetic pattern dataset directory.
pub fn synth(dir: &Path, seed: u64, samples: usize, noise: f64) -> CliResult<String> {
    if !(noise >= 0.0) {
        return Err(CliError::Config("noise must be >= 0".into()));
    }
    let data = synth_pattern::<f32>(seed, samples, noise).map_err(dataset_err)?;
    data.save(dir).map_err(CliError::from_run)?;
    Ok(format!("wrote {samples} samples to {}\n", dir.display()))
}

/// Default checkpoint location for a config: the one `train` writes.
pub fn default_checkpoint(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.out.as_ref().map(|d| d.join(CHECKPOINT_FILE))
}

