use crate::error::{Error, Result};
use crate::network::{project_param, Network, Param};
use crate::real::Real;

/// `w ← w + ε·update` on the free components of one parameter.
pub fn apply_update<T: Real>(p: &mut Param<T>, lr: T) -> Result<()> {
    if p.grad.shape() != p.value.shape() {
        return Err(Error::shape(format!(
            "update for {} has shape {:?}, parameter has {:?}",
            p.name,
            p.grad.shape(),
            p.value.shape()
        )));
    }
    for c in 0..4 {
        for e in 0..p.value.len() {
            if p.kind.is_free(e, c) {
                let u = p.grad.plane(c)[e];
                p.value.plane_mut(c)[e] += lr * u;
            }
        }
    }
    project_param(p);
    Ok(())
}

/// Apply the accumulated updates of every parameter, then renormalize learnable
/// axes and re-symmetrize whitening matrices. Non-finite updates are rejected
/// before anything changes.
pub fn sgd_step<T: Real>(net: &mut Network<T>, lr: T) -> Result<()> {
    for p in net.params() {
        if p.param.grad.iter().any(|q| !q.is_finite()) {
            return Err(Error::NonFinite(format!("update of {}", p.path())));
        }
    }
    for p in net.params_mut() {
        apply_update(p, lr)?;
    }
    Ok(())
}
