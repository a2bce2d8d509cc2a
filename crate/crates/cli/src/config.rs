//! Run configuration in TOML.
//!
//! ```toml
//! seed = 7
//! precision = "f64"
//!
//! [model]
//! input = [8, 8, 1]
//!
//! [[layer]]
//! type = "conv"
//! paradigm = "classic"
//! kernel = 3
//! padding = 1
//! filters = 4
//!
//! [[layer]]
//! type = "act"
//! fn = "relu"
//!
//! [train]
//! lr = 0.05
//! batch = 16
//! epochs = 30
//! loss = "crossentropy_magnitude"
//!
//! [data]
//! synth_train = 400
//! synth_val = 200
//! synth_noise = 0.05
//! ```
//!
//! Unknown keys are rejected. Relative dataset paths are resolved against the
//! directory of the config file.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use quatnet::conv::{AxisMode, ChannelScheme, ConvSpec, Orientation, Paradigm};
use quatnet::init::InitMode;
use quatnet::layers::activation::SplitFn;
use quatnet::layers::fc::FcMode;
use quatnet::layers::norm::{BnKind, DEFAULT_EPS, DEFAULT_MOMENTUM};
use quatnet::layers::pool::{Pool2d, PoolKind};
use quatnet::train::{GradCheckConfig, LossKind, TrainConfig};
use quatnet::{ActSpec, LayerSpec, ModelSpec};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(CliError::Config(format!("precision must be f32 or f64, got {s:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Dir(PathBuf),
    Synth { samples: usize, noise: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataConfig {
    pub train: Option<DataSource>,
    pub val: Option<DataSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSettings {
    pub batch: usize,
    pub check: GradCheckConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub precision: Precision,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub gradcheck: GradCheckSettings,
}

fn err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// A table whose keys are marked as they are read, so leftovers can be reported.
struct Section<'a> {
    name: String,
    table: &'a Table,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Section<'a> {
    fn new(name: impl Into<String>, table: &'a Table) -> Self {
        Self {
            name: name.into(),
            table,
            used: RefCell::default(),
        }
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.used.borrow_mut().insert(key.to_string());
        self.table.get(key)
    }

    fn bad(&self, key: &str, want: &str) -> CliError {
        err(format!("{}.{key}: expected {want}", self.name))
    }

    fn str(&self, key: &str) -> CliResult<Option<&'a str>> {
        self.raw(key)
            .map(|v| v.as_str().ok_or_else(|| self.bad(key, "a string")))
            .transpose()
    }

    fn req_str(&self, key: &str) -> CliResult<&'a str> {
        self.str(key)?.ok_or_else(|| err(format!("{}.{key} is required", self.name)))
    }

    fn uint(&self, key: &str) -> CliResult<Option<u64>> {
        self.raw(key)
            .map(|v| {
                v.as_integer()
                    .and_then(|i| u64::try_from(i).ok())
                    .ok_or_else(|| self.bad(key, "a non-negative integer"))
            })
            .transpose()
    }

    fn usize(&self, key: &str) -> CliResult<Option<usize>> {
        Ok(self.uint(key)?.map(|v| v as usize))
    }

    fn req_usize(&self, key: &str) -> CliResult<usize> {
        self.usize(key)?.ok_or_else(|| err(format!("{}.{key} is required", self.name)))
    }

    fn float(&self, key: &str) -> CliResult<Option<f64>> {
        self.raw(key)
            .map(|v| match v {
                Value::Float(f) => Ok(*f),
                Value::Integer(i) => Ok(*i as f64),
                _ => Err(self.bad(key, "a number")),
            })
            .transpose()
    }

    fn bool(&self, key: &str) -> CliResult<Option<bool>> {
        self.raw(key)
            .map(|v| v.as_bool().ok_or_else(|| self.bad(key, "true or false")))
            .transpose()
    }

    /// An integer `n` meaning `[n, n]`, or a two-element array.
    fn pair(&self, key: &str) -> CliResult<Option<[usize; 2]>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let as_usize = |v: &Value| v.as_integer().and_then(|i| usize::try_from(i).ok());
        match v {
            Value::Integer(_) => as_usize(v).map(|n| Some([n, n])).ok_or_else(|| self.bad(key, "a non-negative integer")),
            Value::Array(a) if a.len() == 2 => match (as_usize(&a[0]), as_usize(&a[1])) {
                (Some(x), Some(y)) => Ok(Some([x, y])),
                _ => Err(self.bad(key, "two non-negative integers")),
            },
            _ => Err(self.bad(key, "an integer or a pair of integers")),
        }
    }

    fn finish(self) -> CliResult<()> {
        let used = self.used.borrow();
        match self.table.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(err(format!("unknown key {}.{k}", self.name))),
            None => Ok(()),
        }
    }
}

fn pick<T: Copy>(section: &Section<'_>, key: &str, value: Option<&str>, options: &[(&str, T)], default: T) -> CliResult<T> {
    match value {
        None => Ok(default),
        Some(v) => options.iter().find(|(n, _)| *n == v).map(|(_, t)| *t).ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            err(format!("{}.{key}: {v:?} is not one of {}", section.name, names.join(", ")))
        }),
    }
}

const PARADIGMS: [(&str, Paradigm); 4] = [
    ("classic", Paradigm::Classic),
    ("geometric", Paradigm::Geometric),
    ("geometric_biased", Paradigm::GeometricBiased),
    ("equivariant", Paradigm::Equivariant),
];
const SCHEMES: [(&str, ChannelScheme); 3] = [
    ("autoencoder", ChannelScheme::Autoencoder),
    ("pyramidal", ChannelScheme::Pyramidal),
    ("summed", ChannelScheme::Summed),
];
const ORIENTATIONS: [(&str, Orientation); 3] = [
    ("left", Orientation::Left),
    ("right", Orientation::Right),
    ("two_sided", Orientation::TwoSided),
];
const INITS: [(&str, InitMode); 3] = [
    ("normalized", InitMode::QuaternionNormalized),
    ("relu", InitMode::QuaternionRelu),
    ("geometric", InitMode::GeometricUniform),
];
const FC_MODES: [(&str, FcMode); 2] = [("classic", FcMode::Classic), ("geometric", FcMode::Geometric)];
const POOLS: [(&str, PoolKind); 3] = [
    ("split_max", PoolKind::SplitMax),
    ("split_avg", PoolKind::SplitAvg),
    ("fully_magnitude", PoolKind::FullyMagnitude),
];
const LOSSES: [(&str, LossKind); 2] = [
    ("mse_real", LossKind::MseReal),
    ("crossentropy_magnitude", LossKind::CrossEntropyMagnitude),
];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], v: &T) -> &'static str {
    options.iter().find(|(_, t)| t == v).map(|(n, _)| *n).expect("every variant is named")
}

fn parse_layer(s: &Section<'_>) -> CliResult<LayerSpec> {
    let kind = s.req_str("type")?;
    Ok(match kind {
        "conv" => {
            let paradigm = pick(s, "paradigm", s.str("paradigm")?, &PARADIGMS, Paradigm::Classic)?;
            let mut conv = ConvSpec::with_kernel(s.req_usize("kernel")?);
            conv.paradigm = paradigm;
            if let Some(v) = s.pair("stride")? {
                conv.stride = v;
            }
            if let Some(v) = s.pair("padding")? {
                conv.padding = v;
            }
            conv.scheme = pick(s, "scheme", s.str("scheme")?, &SCHEMES, ChannelScheme::Summed)?;
            conv.orientation = pick(s, "orientation", s.str("orientation")?, &ORIENTATIONS, Orientation::Left)?;
            conv.flip_kernel = s.bool("flip_kernel")?.unwrap_or(false);
            conv.axis_mode = match s.raw("axis") {
                None => AxisMode::default_fixed(),
                Some(Value::String(a)) if a == "learnable" => AxisMode::Learnable,
                Some(Value::String(a)) if a == "fixed" => AxisMode::default_fixed(),
                Some(Value::Array(a)) if a.len() == 3 => {
                    let v: Vec<f64> = a
                        .iter()
                        .map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)))
                        .collect::<Option<_>>()
                        .ok_or_else(|| s.bad("axis", "three numbers"))?;
                    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if !(n > 0.0) {
                        return Err(s.bad("axis", "a nonzero vector"));
                    }
                    AxisMode::Fixed([v[0] / n, v[1] / n, v[2] / n])
                }
                Some(_) => return Err(s.bad("axis", "\"fixed\", \"learnable\" or three numbers")),
            };
            conv.validate().map_err(|e| err(format!("{}: {e}", s.name)))?;
            let default_init = match paradigm {
                Paradigm::Geometric | Paradigm::GeometricBiased => InitMode::GeometricUniform,
                _ => InitMode::QuaternionRelu,
            };
            LayerSpec::Conv {
                conv,
                filters: s.usize("filters")?.unwrap_or(1),
                init: pick(s, "init", s.str("init")?, &INITS, default_init)?,
                spectral: s.usize("spectral")?,
            }
        }
        "fc" => LayerSpec::Fc {
            units: s.req_usize("units")?,
            mode: pick(s, "mode", s.str("mode")?, &FC_MODES, FcMode::Classic)?,
            init: pick(s, "init", s.str("init")?, &INITS, InitMode::QuaternionNormalized)?,
            spectral: s.usize("spectral")?,
        },
        "pool" => {
            let extent = s.pair("size")?.ok_or_else(|| err(format!("{}.size is required", s.name)))?;
            LayerSpec::Pool(Pool2d {
                kind: pick(s, "kind", s.str("kind")?, &POOLS, PoolKind::FullyMagnitude)?,
                extent,
                stride: s.pair("stride")?.unwrap_or(extent),
            })
        }
        "act" => {
            let f = s.req_str("fn")?;
            let alpha = s.float("alpha")?;
            let split = |f| Ok(ActSpec::Split(f));
            let spec: CliResult<ActSpec> = match f {
                "identity" => split(SplitFn::Identity),
                "sigmoid" => split(SplitFn::Sigmoid),
                "tanh" => split(SplitFn::Tanh),
                "hardtanh" => split(SplitFn::HardTanh),
                "relu" => split(SplitFn::Relu),
                "prelu" => split(SplitFn::PRelu(alpha.unwrap_or(0.25))),
                "leaky_relu" => split(SplitFn::LeakyRelu(alpha.unwrap_or(0.01))),
                "rerelu" => Ok(ActSpec::ReRelu),
                other => Err(err(format!("{}.fn: unknown activation {other:?}", s.name))),
            };
            if alpha.is_some() && !matches!(f, "prelu" | "leaky_relu") {
                return Err(err(format!("{}.alpha only applies to prelu and leaky_relu", s.name)));
            }
            LayerSpec::Act(spec?)
        }
        "norm" => {
            let name = s.req_str("kind")?;
            let linear = s.bool("linear_variance")?;
            let kind = match name {
                "wqbn" => BnKind::Wqbn,
                "vqbn" => BnKind::Vqbn {
                    linear_variance: linear.unwrap_or(false),
                },
                "rqbn" => BnKind::Rqbn,
                other => return Err(err(format!("{}.kind: unknown normalization {other:?}", s.name))),
            };
            if linear.is_some() && name != "vqbn" {
                return Err(err(format!("{}.linear_variance only applies to vqbn", s.name)));
            }
            let eps = s.float("eps")?.unwrap_or(DEFAULT_EPS);
            let momentum = s.float("momentum")?.unwrap_or(DEFAULT_MOMENTUM);
            if !(eps >= 0.0) || !(momentum > 0.0 && momentum <= 1.0) {
                return Err(err(format!("{}: eps must be >= 0 and momentum in (0, 1]", s.name)));
            }
            LayerSpec::Norm { kind, eps, momentum }
        }
        other => return Err(err(format!("{}.type: unknown layer type {other:?}", s.name))),
    })
}

fn parse_model(root: &Section<'_>) -> CliResult<ModelSpec> {
    let model = match root.raw("model") {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(err("model must be a table")),
        None => return Err(err("model section is required")),
    };
    let m = Section::new("model", model);
    let input = match m.raw("input") {
        Some(Value::Array(a)) if a.len() == 3 => {
            let v: Option<Vec<usize>> = a.iter().map(|x| x.as_integer().and_then(|i| usize::try_from(i).ok())).collect();
            let v = v.filter(|v| v.iter().all(|&n| n > 0)).ok_or_else(|| m.bad("input", "three positive integers"))?;
            [v[0], v[1], v[2]]
        }
        _ => return Err(m.bad("input", "[rows, cols, channels]")),
    };
    m.finish()?;
    let layers = match root.raw("layer") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(err("layer must be an array of tables ([[layer]])")),
        None => return Err(err("at least one [[layer]] is required")),
    };
    let mut specs = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let t = l.as_table().ok_or_else(|| err(format!("layer {i} must be a table")))?;
        let s = Section::new(format!("layer[{i}]"), t);
        specs.push(parse_layer(&s)?);
        s.finish()?;
    }
    Ok(ModelSpec { input, layers: specs })
}

fn parse_source(s: &Section<'_>, prefix: &str, base: &Path, default_seed: u64) -> CliResult<Option<DataSource>> {
    let dir = s.str(prefix)?;
    let synth = s.usize(&format!("synth_{prefix}"))?;
    match (dir, synth) {
        (Some(_), Some(_)) => Err(err(format!("data.{prefix} and data.synth_{prefix} are exclusive"))),
        (Some(d), None) => Ok(Some(DataSource::Dir(base.join(d)))),
        (None, Some(n)) => Ok(Some(DataSource::Synth {
            samples: n,
            noise: s.float("synth_noise")?.unwrap_or(0.05),
            seed: default_seed,
        })),
        (None, None) => Ok(None),
    }
}

impl RunConfig {
    /// Read a config file. `seed` replaces the file's top-level seed, and with
    /// it every seed derived from it.
    pub fn load(path: &Path, seed: Option<u64>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_with(&text, base, seed)
    }

    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        Self::parse_with(text, base, None)
    }

    pub fn parse_with(text: &str, base: &Path, seed: Option<u64>) -> CliResult<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| err(e.to_string()))?;
        let root = Section::new("config", &table);
        let file_seed = root.uint("seed")?.unwrap_or(0);
        let seed = seed.unwrap_or(file_seed);
        let out = root.str("out")?.map(|o| base.join(o));
        let precision = Precision::parse(root.str("precision")?.unwrap_or("f64"))?;
        let model = parse_model(&root)?;

        let empty = Table::new();
        let sub = |name: &str| -> CliResult<&Table> {
            match root.raw(name) {
                None => Ok(&empty),
                Some(Value::Table(t)) => Ok(t),
                Some(_) => Err(err(format!("{name} must be a table"))),
            }
        };

        let t = Section::new("train", sub("train")?);
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: t.float("lr")?.unwrap_or(defaults.learning_rate),
            batch_size: t.usize("batch")?.unwrap_or(defaults.batch_size),
            epochs: t.usize("epochs")?.unwrap_or(defaults.epochs),
            loss: pick(&t, "loss", t.str("loss")?, &LOSSES, defaults.loss)?,
            seed,
        };
        t.finish()?;
        train.validate().map_err(|e| err(e.to_string()))?;

        let d = Section::new("data", sub("data")?);
        let synth_seed = d.uint("synth_seed")?.unwrap_or(seed);
        let data = DataConfig {
            train: parse_source(&d, "train", base, synth_seed)?,
            val: parse_source(&d, "val", base, synth_seed.wrapping_add(1))?,
        };
        if d.table.contains_key("synth_noise") {
            d.float("synth_noise")?;
        }
        d.finish()?;
        if let Some(DataSource::Synth { noise, .. }) = data.train.as_ref().or(data.val.as_ref()) {
            if !(*noise >= 0.0) {
                return Err(err("data.synth_noise must be >= 0"));
            }
        }

        let g = Section::new("gradcheck", sub("gradcheck")?);
        let gd = GradCheckConfig::default();
        let gradcheck = GradCheckSettings {
            batch: g.usize("batch")?.unwrap_or(2),
            check: GradCheckConfig {
                step: g.float("step")?.unwrap_or(gd.step),
                floor: g.float("floor")?.unwrap_or(gd.floor),
                tolerance: g.float("tolerance")?.unwrap_or(gd.tolerance),
                corrupt: g.bool("corrupt")?.unwrap_or(false),
            },
        };
        g.finish()?;
        if gradcheck.batch == 0 || !(gradcheck.check.step > 0.0) {
            return Err(err("gradcheck.batch and gradcheck.step must be positive"));
        }
        root.finish()?;
        Ok(Self {
            seed,
            out,
            precision,
            model,
            train,
            data,
            gradcheck,
        })
    }
}

/// Canonical TOML of a model: every field explicit, so that parsing it back
/// yields the same [`ModelSpec`].
pub fn model_to_toml(spec: &ModelSpec) -> String {
    let mut root = Table::new();
    let mut model = Table::new();
    model.insert("input".into(), Value::Array(spec.input.iter().map(|&n| Value::Integer(n as i64)).collect()));
    root.insert("model".into(), Value::Table(model));
    let pair = |p: [usize; 2]| Value::Array(vec![Value::Integer(p[0] as i64), Value::Integer(p[1] as i64)]);
    let s = |v: &str| Value::String(v.to_string());
    let layers = spec
        .layers
        .iter()
        .map(|l| {
            let mut t = Table::new();
            match l {
                LayerSpec::Conv {
                    conv,
                    filters,
                    init,
                    spectral,
                } => {
                    t.insert("type".into(), s("conv"));
                    t.insert("paradigm".into(), s(name_of(&PARADIGMS, &conv.paradigm)));
                    t.insert("kernel".into(), Value::Integer(conv.kernel as i64));
                    t.insert("stride".into(), pair(conv.stride));
                    t.insert("padding".into(), pair(conv.padding));
                    t.insert("scheme".into(), s(name_of(&SCHEMES, &conv.scheme)));
                    t.insert("orientation".into(), s(name_of(&ORIENTATIONS, &conv.orientation)));
                    t.insert("flip_kernel".into(), Value::Boolean(conv.flip_kernel));
                    t.insert(
                        "axis".into(),
                        match conv.axis_mode {
                            AxisMode::Learnable => s("learnable"),
                            AxisMode::Fixed(a) => Value::Array(a.iter().map(|&x| Value::Float(x)).collect()),
                        },
                    );
                    t.insert("filters".into(), Value::Integer(*filters as i64));
                    t.insert("init".into(), s(name_of(&INITS, init)));
                    if let Some(n) = spectral {
                        t.insert("spectral".into(), Value::Integer(*n as i64));
                    }
                }
                LayerSpec::Fc {
                    units,
                    mode,
                    init,
                    spectral,
                } => {
                    t.insert("type".into(), s("fc"));
                    t.insert("units".into(), Value::Integer(*units as i64));
                    t.insert("mode".into(), s(name_of(&FC_MODES, mode)));
                    t.insert("init".into(), s(name_of(&INITS, init)));
                    if let Some(n) = spectral {
                        t.insert("spectral".into(), Value::Integer(*n as i64));
                    }
                }
                LayerSpec::Pool(p) => {
                    t.insert("type".into(), s("pool"));
                    t.insert("kind".into(), s(name_of(&POOLS, &p.kind)));
                    t.insert("size".into(), pair(p.extent));
                    t.insert("stride".into(), pair(p.stride));
                }
                LayerSpec::Act(a) => {
                    t.insert("type".into(), s("act"));
                    let (name, alpha) = match a {
                        ActSpec::ReRelu => ("rerelu", None),
                        ActSpec::Split(f) => match f {
                            SplitFn::Identity => ("identity", None),
                            SplitFn::Sigmoid => ("sigmoid", None),
                            SplitFn::Tanh => ("tanh", None),
                            SplitFn::HardTanh => ("hardtanh", None),
                            SplitFn::Relu => ("relu", None),
                            SplitFn::PRelu(a) => ("prelu", Some(*a)),
                            SplitFn::LeakyRelu(a) => ("leaky_relu", Some(*a)),
                        },
                    };
                    t.insert("fn".into(), s(name));
                    if let Some(a) = alpha {
                        t.insert("alpha".into(), Value::Float(a));
                    }
                }
                LayerSpec::Norm { kind, eps, momentum } => {
                    t.insert("type".into(), s("norm"));
                    let name = match kind {
                        BnKind::Wqbn => "wqbn",
                        BnKind::Vqbn { linear_variance } => {
                            t.insert("linear_variance".into(), Value::Boolean(*linear_variance));
                            "vqbn"
                        }
                        BnKind::Rqbn => "rqbn",
                    };
                    t.insert("kind".into(), s(name));
                    t.insert("eps".into(), Value::Float(*eps));
                    t.insert("momentum".into(), Value::Float(*momentum));
                }
            }
            Value::Table(t)
        })
        .collect();
    root.insert("layer".into(), Value::Array(layers));
    toml::to_string(&root).expect("model tables serialize")
}

/// Parse the model part of a config, as written by [`model_to_toml`].
pub fn model_from_toml(text: &str) -> CliResult<ModelSpec> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| err(e.to_string()))?;
    let root = Section::new("config", &table);
    let model = parse_model(&root)?;
    root.finish()?;
    Ok(model)
}

pub fn loss_name(l: LossKind) -> &'static str {
    name_of(&LOSSES, &l)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 11
precision = "f32"

[model]
input = [6, 6, 1]

[[layer]]
type = "conv"
paradigm = "classic"
kernel = 3
padding = 1
filters = 2
orientation = "two_sided"
spectral = 0

[[layer]]
type = "norm"
kind = "vqbn"
linear_variance = true

[[layer]]
type = "act"
fn = "prelu"
alpha = 0.1

[[layer]]
type = "pool"
kind = "split_max"
size = 2

[[layer]]
type = "conv"
paradigm = "geometric"
kernel = 1
axis = "learnable"
filters = 1

[[layer]]
type = "act"
fn = "rerelu"

[[layer]]
type = "fc"
units = 4
mode = "geometric"

[train]
lr = 0.1
batch = 8
epochs = 3
loss = "mse_real"

[data]
train = "train_dir"
synth_val = 20
synth_noise = 0.1

[gradcheck]
batch = 3
corrupt = true
"#;

    #[test]
    fn parses_everything() {
        let c = RunConfig::parse(FULL, Path::new("/base")).unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.precision, Precision::F32);
        assert_eq!(c.model.input, [6, 6, 1]);
        assert_eq!(c.model.layers.len(), 7);
        assert!(matches!(c.model.layers[2], LayerSpec::Act(ActSpec::Split(SplitFn::PRelu(a))) if a == 0.1));
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.train.loss, LossKind::MseReal);
        assert_eq!(c.data.train, Some(DataSource::Dir(PathBuf::from("/base/train_dir"))));
        assert_eq!(
            c.data.val,
            Some(DataSource::Synth {
                samples: 20,
                noise: 0.1,
                seed: 12
            })
        );
        assert_eq!(c.gradcheck.batch, 3);
        assert!(c.gradcheck.check.corrupt);
    }

    #[test]
    fn model_round_trip() {
        let c = RunConfig::parse(FULL, Path::new(".")).unwrap();
        let text = model_to_toml(&c.model);
        let back = model_from_toml(&text).unwrap();
        assert_eq!(back, c.model);
        assert_eq!(model_to_toml(&back), text);
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        let bad = [
            "[model]\ninput = [4, 4, 1]\n[[layer]]\ntype = \"fc\"\nunits = 2\nbogus = 1\n",
            "[model]\ninput = [4, 4]\n[[layer]]\ntype = \"fc\"\nunits = 2\n",
            "[model]\ninput = [4, 4, 1]\n[[layer]]\ntype = \"conv\"\nkernel = 2\n",
            "[model]\ninput = [4, 4, 1]\n[[layer]]\ntype = \"act\"\nfn = \"swish\"\n",
            "[model]\ninput = [4, 4, 1]\n[[layer]]\ntype = \"fc\"\nunits = 2\n[train]\nlr = -1\n",
            "precision = \"f16\"\n[model]\ninput = [4, 4, 1]\n[[layer]]\ntype = \"fc\"\nunits = 2\n",
            "[model]\ninput = [4, 4, 1]\n",
            "not toml at all [",
            "[model]\ninput = [4, 4, 1]\n[[layer]]\ntype = \"fc\"\nunits = 2\n[data]\ntrain = \"x\"\nsynth_train = 3\n",
        ];
        for b in bad {
            assert!(matches!(RunConfig::parse(b, base), Err(CliError::Config(_))), "{b}");
        }
    }
}
