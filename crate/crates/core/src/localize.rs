//! High/low-pass instance localization masks.

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ScoreMap};
use crate::scalar::Scalar;

/// Score cutoffs. `t_high`/`t_low` select reliable samples for the separation
/// loss; `cam_score` produces the change prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdConfig {
    t_high: f64,
    t_low: f64,
    cam_score: f64,
}

impl ThresholdConfig {
    pub fn new(t_high: f64, t_low: f64, cam_score: f64) -> Result<Self> {
        for (name, v) in [
            ("t_high", t_high),
            ("t_low", t_low),
            ("cam_score", cam_score),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name}={v} outside [0, 1]")));
            }
        }
        if t_low > t_high {
            return Err(Error::InvalidConfig(format!(
                "t_low={t_low} exceeds t_high={t_high}"
            )));
        }
        Ok(Self {
            t_high,
            t_low,
            cam_score,
        })
    }

    pub fn t_high(&self) -> f64 {
        self.t_high
    }

    pub fn t_low(&self) -> f64 {
        self.t_low
    }

    pub fn cam_score(&self) -> f64 {
        self.cam_score
    }
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            t_high: 0.60,
            t_low: 0.40,
            cam_score: 0.45,
        }
    }
}

/// Reliably changed pixels: `c^i >= t_high`.
pub fn changed_localization<T: Scalar>(c: &ScoreMap<T>, cfg: &ThresholdConfig) -> BinaryMask {
    let t = T::lit(cfg.t_high);
    BinaryMask::from_fn(c.dims(), |i| c.values()[i] >= t)
}

/// Reliably unchanged pixels: `c^i <= t_low`.
pub fn unchanged_localization<T: Scalar>(c: &ScoreMap<T>, cfg: &ThresholdConfig) -> BinaryMask {
    let t = T::lit(cfg.t_low);
    BinaryMask::from_fn(c.dims(), |i| c.values()[i] <= t)
}

/// Fully-supervised variant: the ground truth and its complement.
pub fn masks_from_ground_truth(y: &BinaryMask) -> (BinaryMask, BinaryMask) {
    (y.clone(), y.not())
}
