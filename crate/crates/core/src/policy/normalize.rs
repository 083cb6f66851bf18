use serde::{Deserialize, Serialize};

use crate::envs::Trajectory;
use crate::error::{Error, Result};

/// Per-dimension affine map from action units to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionNormalizer {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

const MIN_RANGE: f64 = 1e-9;

impl ActionNormalizer {
    pub fn fit(trajectories: &[Trajectory]) -> Result<Self> {
        let mut low = vec![f64::INFINITY; 2];
        let mut high = vec![f64::NEG_INFINITY; 2];
        for a in trajectories.iter().flat_map(|t| &t.actions) {
            for d in 0..2 {
                low[d] = low[d].min(a[d]);
                high[d] = high[d].max(a[d]);
            }
        }
        if low.iter().any(|v| !v.is_finite()) {
            return Err(Error::Empty("no actions to fit normalization statistics".into()));
        }
        Ok(Self { low, high })
    }

    fn scale(&self, d: usize) -> (f64, f64) {
        let range = self.high[d] - self.low[d];
        if range < MIN_RANGE {
            (self.low[d], 1.0)
        } else {
            (0.5 * (self.high[d] + self.low[d]), 0.5 * range)
        }
    }

    pub fn normalize(&self, a: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for d in 0..2 {
            let (mid, half) = self.scale(d);
            out[d] = (a[d] - mid) / half;
        }
        out
    }

    pub fn denormalize(&self, a: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for d in 0..2 {
            let (mid, half) = self.scale(d);
            out[d] = a[d] * half + mid;
        }
        out
    }
}
