use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{NileError, Result};

/// Plain SGD with an optional global gradient-norm clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.1,
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub grad_norm: f64,
    /// Factor the gradient was multiplied by before the update (1 when the
    /// clip did not bind).
    pub scale: f64,
}

pub fn optimizer_step<P: Params>(params: &mut P, grads: &P, cfg: &SgdConfig) -> Result<StepInfo> {
    let mut sq = 0.0;
    for (name, _, g) in grads.arrays() {
        for x in g {
            if !x.is_finite() {
                return Err(NileError::Numeric(format!("non-finite gradient in {name}")));
            }
            sq += x * x;
        }
    }
    let grad_norm = sq.sqrt();
    let scale = match cfg.clip_norm {
        Some(c) if grad_norm > c => c / grad_norm,
        _ => 1.0,
    };
    let step = cfg.learning_rate * scale;
    let gs = grads.arrays();
    for (p, (_, _, g)) in params.arrays_mut().into_iter().zip(gs) {
        for (x, y) in p.iter_mut().zip(g) {
            *x -= step * y;
        }
    }
    Ok(StepInfo { grad_norm, scale })
}
