//! Class activation maps: weighted channel sums of the feature map, rectified,
//! max-normalized to `[0, 1]` and thresholded into change predictions.

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Dim2, FeatureMap, ScoreMap};
use crate::scalar::Scalar;

/// Weights of the final (scene-level) classification layer, one per feature channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierWeights<T>(Vec<T>);

impl<T: Scalar> ClassifierWeights<T> {
    pub fn new(w: Vec<T>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidValue(
                "classifier needs at least one weight".into(),
            ));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite classifier weight".into()));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Rectified, unnormalized activation map. Values are finite and nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCam<T> {
    dims: Dim2,
    values: Vec<T>,
}

impl<T: Scalar> RawCam<T> {
    pub fn new(dims: Dim2, values: Vec<T>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::InvalidValue(format!(
                "raw CAM has {} values for a {dims} grid",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= T::zero())) {
            return Err(Error::InvalidValue(format!(
                "raw CAM value {v} is negative or non-finite"
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> Dim2 {
        self.dims
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Pre-rectification activation `<F^i, W>` per pixel.
pub fn linear_activation<T: Scalar>(f: &FeatureMap<T>, w: &ClassifierWeights<T>) -> Result<Vec<T>> {
    if f.channels() != w.len() {
        return Err(Error::ChannelMismatch {
            expected: f.channels(),
            found: w.len(),
        });
    }
    Ok(f.values()
        .chunks_exact(f.channels())
        .map(|px| {
            px.iter()
                .zip(w.as_slice())
                .fold(T::zero(), |acc, (a, b)| acc + *a * *b)
        })
        .collect())
}

/// `ReLU(sum_j F^{i,j} W^j)` for every pixel.
pub fn raw_cam<T: Scalar>(f: &FeatureMap<T>, w: &ClassifierWeights<T>) -> Result<RawCam<T>> {
    let values = linear_activation(f, w)?
        .into_iter()
        .map(|v| v.max(T::zero()))
        .collect();
    RawCam::new(f.dims(), values)
}

/// Divides by the global maximum. An all-zero map stays all-zero.
pub fn normalize_cam<T: Scalar>(raw: &RawCam<T>) -> ScoreMap<T> {
    let max = raw.values.iter().copied().fold(T::zero(), T::max);
    if max == T::zero() {
        return ScoreMap::zeros(raw.dims);
    }
    let values = raw
        .values
        .iter()
        .map(|v| (*v / max).min(T::one()))
        .collect();
    ScoreMap::new(raw.dims, values).expect("normalized CAM lies in [0, 1]")
}

/// Normalized CAM straight from features and classifier weights.
pub fn score_map<T: Scalar>(f: &FeatureMap<T>, w: &ClassifierWeights<T>) -> Result<ScoreMap<T>> {
    Ok(normalize_cam(&raw_cam(f, w)?))
}

/// Change prediction: pixel is changed iff its score is at least `cam_score`.
pub fn predict_change<T: Scalar>(c: &ScoreMap<T>, cam_score: T) -> Result<BinaryMask> {
    if !(cam_score >= T::zero() && cam_score <= T::one()) {
        return Err(Error::InvalidValue(format!(
            "CAM score {cam_score} outside [0, 1]"
        )));
    }
    Ok(BinaryMask::from_fn(c.dims(), |i| {
        c.values()[i] >= cam_score
    }))
}
