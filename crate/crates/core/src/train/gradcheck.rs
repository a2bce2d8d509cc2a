//! Finite-difference verification of the analytic parameter gradients.
//!
//! Each free parameter component is perturbed by `±h` and the batch loss is
//! re-evaluated with a probe pass, which uses training statistics without
//! touching any layer state. A component is excluded when either perturbation
//! changes a discrete decision of the network (an activation branch, a
//! pooling choice), since the loss is not differentiable there.

use std::fmt::Write as _;

use crate::data::Label;
use crate::error::Result;
use crate::layers::norm::Mode;
use crate::network::Network;
use crate::tensor::QTensor;
use crate::train::loss::{batch_loss, LossKind};

pub const COMPONENT_NAMES: [&str; 4] = ["r", "i", "j", "k"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Lower bound on the relative-error denominator.
    pub floor: f64,
    pub tolerance: f64,
    /// Scale the analytic gradients by `1 + 1e-2`, a negative control.
    pub corrupt: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-4,
            tolerance: 1e-6,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSummary {
    pub layer: usize,
    pub kind: &'static str,
    pub checked: usize,
    pub excluded: usize,
    pub max_rel_error: f64,
    pub worst: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub checked: usize,
    pub excluded: usize,
    pub max_rel_error: f64,
    /// Path of the component with the largest error, e.g. `layer0.conv.kernels[3].j`.
    pub worst: Option<String>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub layers: Vec<LayerSummary>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "status: {}", if self.passed() { "pass" } else { "fail" });
        let _ = writeln!(s, "tolerance: {:e}", self.tolerance);
        let _ = writeln!(s, "max_rel_error: {:e}", self.max_rel_error);
        if let Some(w) = &self.worst {
            let _ = writeln!(
                s,
                "worst: {w} analytic={:e} numeric={:e}",
                self.worst_analytic, self.worst_numeric
            );
        }
        let _ = writeln!(s, "checked: {}", self.checked);
        let _ = writeln!(s, "excluded: {}", self.excluded);
        let _ = writeln!(s, "layer,kind,checked,excluded,max_rel_error,worst");
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{},{},{},{},{:e},{}",
                l.layer,
                l.kind,
                l.checked,
                l.excluded,
                l.max_rel_error,
                l.worst.as_deref().unwrap_or("")
            );
        }
        s
    }
}

fn probe_loss(net: &mut Network<f64>, batch: &[QTensor<f64>], labels: &[&Label<f64>], loss: LossKind) -> Result<(f64, Vec<u32>)> {
    let (out, sig) = net.probe(batch)?;
    Ok((batch_loss(loss, &out, labels)?.loss, sig))
}

pub fn gradient_check(
    net: &mut Network<f64>,
    batch: &[QTensor<f64>],
    labels: &[Label<f64>],
    loss: LossKind,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let labels: Vec<&Label<f64>> = labels.iter().collect();
    net.zero_grad();
    let out = net.forward(batch, Mode::Train)?;
    let seeds = batch_loss(loss, &out, &labels)?;
    net.backward(seeds.errors)?;
    let (_, base_sig) = probe_loss(net, batch, &labels, loss)?;

    let mut report = GradCheckReport {
        tolerance: cfg.tolerance,
        checked: 0,
        excluded: 0,
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        layers: Vec::new(),
    };
    let scale = if cfg.corrupt { 1.01 } else { 1.0 };
    let h = cfg.step;
    for li in 0..net.layers().len() {
        let kind = net.layers()[li].kind();
        let mut summary = LayerSummary {
            layer: li,
            kind,
            checked: 0,
            excluded: 0,
            max_rel_error: 0.0,
            worst: None,
        };
        for pi in 0..net.layers()[li].params().len() {
            let (name, pkind, len) = {
                let p = &net.layers()[li].params()[pi];
                (p.name, p.kind, p.value.len())
            };
            for e in 0..len {
                for c in 0..4 {
                    if !pkind.is_free(e, c) {
                        continue;
                    }
                    let (orig, analytic) = {
                        let p = &net.layers()[li].params()[pi];
                        (p.value.plane(c)[e], -p.grad.plane(c)[e] * scale)
                    };
                    let set = |net: &mut Network<f64>, v: f64| {
                        net.layers_mut()[li].params_mut()[pi].value.plane_mut(c)[e] = v;
                    };
                    set(net, orig + h);
                    let (lp, sp) = probe_loss(net, batch, &labels, loss)?;
                    set(net, orig - h);
                    let (lm, sm) = probe_loss(net, batch, &labels, loss)?;
                    set(net, orig);
                    if sp != base_sig || sm != base_sig {
                        summary.excluded += 1;
                        continue;
                    }
                    let numeric = (lp - lm) / (2.0 * h);
                    let denom = analytic.abs().max(numeric.abs()).max(cfg.floor);
                    let rel = (analytic - numeric).abs() / denom;
                    summary.checked += 1;
                    let path = || format!("layer{li}.{kind}.{name}[{e}].{}", COMPONENT_NAMES[c]);
                    if rel > summary.max_rel_error || summary.worst.is_none() {
                        summary.max_rel_error = summary.max_rel_error.max(rel);
                        if rel >= summary.max_rel_error {
                            summary.worst = Some(path());
                        }
                    }
                    if rel > report.max_rel_error || report.worst.is_none() {
                        report.max_rel_error = report.max_rel_error.max(rel);
                        if rel >= report.max_rel_error {
                            report.worst = Some(path());
                            report.worst_analytic = analytic;
                            report.worst_numeric = numeric;
                        }
                    }
                }
            }
        }
        report.checked += summary.checked;
        report.excluded += summary.excluded;
        report.layers.push(summary);
    }
    log::info!(
        "gradient check: {} components, {} excluded, max relative error {:e}",
        report.checked,
        report.excluded,
        report.max_rel_error
    );
    Ok(report)
}
