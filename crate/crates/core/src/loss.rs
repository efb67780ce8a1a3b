//! Multi-part detection/PHOC training objective and its PHOC gradient.
//!
//! The loss is evaluated on one matched (target, prediction) pair; batch
//! reduction is left to the caller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_box: f64,
    pub lambda_obj: f64,
    pub lambda_noobj: f64,
    pub lambda_cls: f64,
    /// Predictions are clamped to `[eps, 1 - eps]` before taking logarithms.
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_box: 5.0,
            lambda_obj: 1.0,
            lambda_noobj: 0.5,
            lambda_cls: 0.015,
            eps: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.lambda_box, self.lambda_obj, self.lambda_noobj, self.lambda_cls];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidValue("loss weights must be finite and >= 0".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1e-3) {
            return Err(Error::InvalidValue(format!("eps {} outside (0, 1e-3)", self.eps)));
        }
        Ok(())
    }
}

/// One matched pair of ground truth and prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossInputs {
    pub box_target: [f64; 4],
    pub box_pred: [f64; 4],
    pub object_target: bool,
    pub objectness: f64,
    pub phoc_target: Vec<f64>,
    pub phoc_pred: Vec<f64>,
}

fn check_lengths(target: &[f64], pred: &[f64]) -> Result<()> {
    if target.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            actual: pred.len(),
        });
    }
    if target.is_empty() {
        return Err(Error::InvalidValue("empty PHOC vectors".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy between a binary target and a prediction.
pub fn l_cls(target: &[f64], pred: &[f64], eps: f64) -> Result<f64> {
    check_lengths(target, pred)?;
    let sum: f64 = target
        .iter()
        .zip(pred)
        .map(|(&c, &p)| {
            let p = p.clamp(eps, 1.0 - eps);
            c * p.ln() + (1.0 - c) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / target.len() as f64)
}

/// Analytic gradient of [`l_cls`] with respect to the prediction.
///
/// Exact for predictions strictly inside `(eps, 1 - eps)`; outside that band
/// the clamped loss is flat and the gradient is zero.
pub fn grad_l_cls(target: &[f64], pred: &[f64], eps: f64) -> Result<Vec<f64>> {
    check_lengths(target, pred)?;
    let n = target.len() as f64;
    Ok(target
        .iter()
        .zip(pred)
        .map(|(&c, &p)| {
            if p < eps || p > 1.0 - eps {
                0.0
            } else {
                (p - c) / (n * p * (1.0 - p))
            }
        })
        .collect())
}

/// Sum of squared coordinate errors.
pub fn l_box(target: &[f64], pred: &[f64]) -> Result<f64> {
    if target.len() != 4 || pred.len() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: if target.len() != 4 { target.len() } else { pred.len() },
        });
    }
    Ok(target.iter().zip(pred).map(|(b, p)| (b - p).powi(2)).sum())
}

pub fn l_obj(object_target: bool, objectness: f64, lambda_obj: f64, lambda_noobj: f64) -> f64 {
    let c = if object_target { 1.0 } else { 0.0 };
    let weight = if object_target { lambda_obj } else { lambda_noobj };
    weight * (c - objectness).powi(2)
}

/// Weighted sum `lambda_box * l_box + l_obj + lambda_cls * l_cls`.
pub fn total_loss(inputs: &LossInputs, config: &LossConfig) -> Result<f64> {
    config.validate()?;
    if inputs.phoc_target.iter().any(|&c| c != 0.0 && c != 1.0) {
        return Err(Error::InvalidValue("PHOC target must be binary".into()));
    }
    if !(0.0..=1.0).contains(&inputs.objectness) {
        return Err(Error::InvalidValue(format!(
            "objectness {} outside [0, 1]",
            inputs.objectness
        )));
    }
    let boxes = l_box(&inputs.box_target, &inputs.box_pred)?;
    let obj = l_obj(
        inputs.object_target,
        inputs.objectness,
        config.lambda_obj,
        config.lambda_noobj,
    );
    let cls = l_cls(&inputs.phoc_target, &inputs.phoc_pred, config.eps)?;
    Ok(config.lambda_box * boxes + obj + config.lambda_cls * cls)
}

/// Largest relative error between [`grad_l_cls`] and central differences.
///
/// Relative error is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
pub fn max_gradient_error(target: &[f64], pred: &[f64], eps: f64, step: f64) -> Result<f64> {
    let analytic = grad_l_cls(target, pred, eps)?;
    let mut probe = pred.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..pred.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = l_cls(target, &probe, eps)?;
        probe[i] = orig - step;
        let down = l_cls(target, &probe, eps)?;
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    Ok(worst)
}
