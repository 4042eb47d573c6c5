//! Central finite-difference verification of tape gradients.

use super::{AdError, NodeId, Tape};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckSettings {
    /// Central-difference step.
    pub step: f64,
    /// Maximum tolerated relative error.
    pub tol: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings { step: 1e-4, tol: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    /// Largest relative error over the checked entries.
    pub max_rel_err: f64,
    pub checked: usize,
    /// Entries whose perturbed forwards came too close to the arccos
    /// clamp boundary for finite differences to be meaningful.
    pub skipped_near_clamp: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn skipped_near_clamp(&self) -> usize {
        self.params.iter().map(|p| p.skipped_near_clamp).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tol
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Relative error with a unit floor, so small-magnitude gradients are
/// compared absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Checks the analytic gradient of `loss` w.r.t. every listed leaf by
/// replaying the tape with each entry perturbed ±step. The tape is left
/// with its original values.
pub fn grad_check(
    tape: &mut Tape,
    loss: NodeId,
    leaves: &[(String, NodeId)],
    settings: GradCheckSettings,
) -> Result<GradCheckReport, AdError> {
    let grads = tape.backward(loss)?;
    let mut params = Vec::with_capacity(leaves.len());
    for (name, id) in leaves {
        let analytic = grads.get(*id);
        let mut max_rel = 0.0f64;
        let mut checked = 0usize;
        let mut skipped = 0usize;
        for entry in 0..analytic.len() {
            let v0 = tape.leaf_entry(*id, entry);
            tape.set_leaf_entry(*id, entry, v0 + settings.step);
            tape.replay()?;
            let plus = tape.scalar(loss);
            let clamp_plus = tape.near_clamp();
            tape.set_leaf_entry(*id, entry, v0 - settings.step);
            tape.replay()?;
            let minus = tape.scalar(loss);
            let clamp_minus = tape.near_clamp();
            tape.set_leaf_entry(*id, entry, v0);
            if clamp_plus || clamp_minus {
                skipped += 1;
                continue;
            }
            let fd = (plus - minus) / (2.0 * settings.step);
            max_rel = max_rel.max(rel_err(fd, analytic[entry]));
            checked += 1;
        }
        params.push(ParamCheck {
            name: name.clone(),
            max_rel_err: max_rel,
            checked,
            skipped_near_clamp: skipped,
        });
    }
    tape.replay()?;
    Ok(GradCheckReport {
        params,
        tol: settings.tol,
    })
}
