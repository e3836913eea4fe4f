//! Pixel-to-centroid separation loss.
//!
//! Three groups of pixels are each pulled toward their own mean feature:
//!
//! * changed-in-changed: every retrieved instance `k` of a changed image,
//!   `(1/N_k) * sum_{i in k} |F^i - p_k|^2`, summed over instances;
//! * unchanged-in-changed: the reliable background of a changed image;
//! * unchanged-in-unchanged: all pixels of an image labeled unchanged.
//!
//! Gradients are exact. The centroid is differentiated through; the extra
//! term is `-(2/N^2) * sum_i (F^i - p)`, which vanishes analytically.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, FeatureMap, InstanceIdMask};
use crate::retrieve::InstanceTable;
use crate::scalar::Scalar;

/// Which loss branches are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SeparationScope {
    /// changed-in-changed only
    Cc,
    /// plus unchanged-in-changed
    CcCu,
    /// plus unchanged-in-unchanged
    CcCuUu,
}

impl SeparationScope {
    pub const ALL: [SeparationScope; 3] = [Self::Cc, Self::CcCu, Self::CcCuUu];

    pub fn includes_background(self) -> bool {
        matches!(self, Self::CcCu | Self::CcCuUu)
    }

    pub fn includes_unchanged_images(self) -> bool {
        matches!(self, Self::CcCuUu)
    }
}

impl fmt::Display for SeparationScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cc => "CC",
            Self::CcCu => "CC+CU",
            Self::CcCuUu => "CC+CU+UU",
        })
    }
}

impl FromStr for SeparationScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CC" => Ok(Self::Cc),
            "CC+CU" => Ok(Self::CcCu),
            "CC+CU+UU" => Ok(Self::CcCuUu),
            other => Err(Error::InvalidConfig(format!(
                "unknown scope {other:?}; expected CC, CC+CU or CC+CU+UU"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparationConfig {
    alpha: f64,
    scope: SeparationScope,
    warmup_iterations: usize,
}

impl SeparationConfig {
    pub fn new(alpha: f64, scope: SeparationScope, warmup_iterations: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha={alpha} must be finite and >= 0"
            )));
        }
        Ok(Self {
            alpha,
            scope,
            warmup_iterations,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scope(&self) -> SeparationScope {
        self.scope
    }

    pub fn warmup_iterations(&self) -> usize {
        self.warmup_iterations
    }

    /// Whether the separation term contributes to the objective at `iteration`.
    pub fn active_at(&self, iteration: usize) -> bool {
        self.alpha > 0.0 && iteration >= self.warmup_iterations
    }
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            scope: SeparationScope::CcCuUu,
            warmup_iterations: 200,
        }
    }
}

/// Loss value of one branch and its gradient with respect to the feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchLoss<T> {
    pub loss: T,
    pub grad: FeatureMap<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown<T> {
    pub l_pc: T,
    pub l_puc: T,
    pub l_pu: T,
    pub l_sep: T,
    /// d l_sep / d F
    pub grad: FeatureMap<T>,
}

/// Centroids and sizes of every group of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceStats<T> {
    /// `(p_{c_k}, N_{c_k})` for k = 1..=K
    pub changed: Vec<(Vec<T>, usize)>,
    /// `(p_uc, N_uc)`, absent when the background mask is empty
    pub background: Option<(Vec<T>, usize)>,
    /// `p_u`, the mean over all pixels
    pub image: Vec<T>,
}

impl<T: Scalar> InstanceStats<T> {
    pub fn compute(f: &FeatureMap<T>, table: &InstanceTable, m_uc: &BinaryMask) -> Result<Self> {
        f.dims().ensure_same(m_uc.dims())?;
        let changed = table
            .iter()
            .map(|pixels| (centroid(f, pixels.iter().copied()), pixels.len()))
            .collect();
        let bg: Vec<usize> = (0..f.dims().len()).filter(|&i| m_uc.get(i)).collect();
        let background = (!bg.is_empty()).then(|| (centroid(f, bg.iter().copied()), bg.len()));
        let image = centroid(f, 0..f.dims().len());
        Ok(Self {
            changed,
            background,
            image,
        })
    }
}

/// Mean feature vector over `pixels` (which must be nonempty), refined by
/// one residual pass so that a group of identical vectors maps exactly onto
/// that vector.
fn centroid<T: Scalar>(f: &FeatureMap<T>, pixels: impl Iterator<Item = usize> + Clone) -> Vec<T> {
    let mut sum = vec![T::zero(); f.channels()];
    let mut n = 0usize;
    for i in pixels.clone() {
        for (s, v) in sum.iter_mut().zip(f.pixel(i)) {
            *s = *s + *v;
        }
        n += 1;
    }
    let n = T::from_count(n.max(1));
    let mean: Vec<T> = sum.into_iter().map(|s| s / n).collect();
    let mut residual = vec![T::zero(); f.channels()];
    for i in pixels {
        for ((r, v), m) in residual.iter_mut().zip(f.pixel(i)).zip(&mean) {
            *r = *r + (*v - *m);
        }
    }
    mean.into_iter()
        .zip(residual)
        .map(|(m, r)| m + r / n)
        .collect()
}

/// Pixel-to-centroid mean squared distance of one group. Adds the gradient
/// into `grad` and returns the loss; empty groups contribute nothing.
fn group_loss<T: Scalar>(f: &FeatureMap<T>, pixels: &[usize], grad: &mut FeatureMap<T>) -> T {
    if pixels.is_empty() {
        return T::zero();
    }
    let d = f.channels();
    let n = T::from_count(pixels.len());
    let p = centroid(f, pixels.iter().copied());

    let mut loss = T::zero();
    let mut residual_sum = vec![T::zero(); d];
    for &i in pixels {
        for ((r, v), c) in residual_sum.iter_mut().zip(f.pixel(i)).zip(&p) {
            let diff = *v - *c;
            loss = loss + diff * diff;
            *r = *r + diff;
        }
    }

    let two = T::lit(2.0);
    let scale = two / n;
    let through_centroid: Vec<T> = residual_sum.iter().map(|r| scale * *r / n).collect();
    for &i in pixels {
        let px = f.pixel(i).to_vec();
        for (j, g) in grad.pixel_mut(i).iter_mut().enumerate() {
            *g = *g + scale * (px[j] - p[j]) - through_centroid[j];
        }
    }
    loss / n
}

/// Sum over changed instances of their pixel-to-centroid mean squared distance.
pub fn changed_branch<T: Scalar>(
    f: &FeatureMap<T>,
    table: &InstanceTable,
    id_mask: &InstanceIdMask,
) -> Result<BranchLoss<T>> {
    f.dims().ensure_same(id_mask.dims())?;
    table.check_against(id_mask)?;
    let mut grad = FeatureMap::zeros(f.dims(), f.channels());
    let mut loss = T::zero();
    for pixels in table.iter() {
        if pixels.is_empty() {
            return Err(Error::InconsistentTable("empty instance".into()));
        }
        loss = loss + group_loss(f, pixels, &mut grad);
    }
    Ok(BranchLoss { loss, grad })
}

/// Pixel-to-centroid mean squared distance over the reliable background of a
/// changed image. Zero when the mask selects nothing.
pub fn background_branch<T: Scalar>(f: &FeatureMap<T>, m_uc: &BinaryMask) -> Result<BranchLoss<T>> {
    f.dims().ensure_same(m_uc.dims())?;
    let pixels: Vec<usize> = (0..f.dims().len()).filter(|&i| m_uc.get(i)).collect();
    let mut grad = FeatureMap::zeros(f.dims(), f.channels());
    let loss = group_loss(f, &pixels, &mut grad);
    Ok(BranchLoss { loss, grad })
}

/// Pixel-to-centroid mean squared distance over every pixel of an unchanged image.
pub fn unchanged_image_branch<T: Scalar>(f: &FeatureMap<T>) -> BranchLoss<T> {
    let pixels: Vec<usize> = (0..f.dims().len()).collect();
    let mut grad = FeatureMap::zeros(f.dims(), f.channels());
    let loss = group_loss(f, &pixels, &mut grad);
    BranchLoss { loss, grad }
}

/// Inputs of the separation loss for one sample, by scene label.
#[derive(Clone, Copy, Debug)]
pub enum SampleContext<'a, T> {
    Changed {
        features: &'a FeatureMap<T>,
        table: &'a InstanceTable,
        id_mask: &'a InstanceIdMask,
        background: &'a BinaryMask,
    },
    Unchanged {
        features: &'a FeatureMap<T>,
    },
}

/// Sums the branches enabled by `cfg.scope()` that apply to this sample.
pub fn separation_loss<T: Scalar>(
    ctx: SampleContext<'_, T>,
    cfg: &SeparationConfig,
) -> Result<LossBreakdown<T>> {
    let scope = cfg.scope();
    match ctx {
        SampleContext::Changed {
            features,
            table,
            id_mask,
            background,
        } => {
            features.dims().ensure_same(background.dims())?;
            let pc = changed_branch(features, table, id_mask)?;
            let mut grad = pc.grad;
            let l_puc = if scope.includes_background() {
                let puc = background_branch(features, background)?;
                grad.add_scaled(&puc.grad, T::one())?;
                puc.loss
            } else {
                T::zero()
            };
            Ok(LossBreakdown {
                l_pc: pc.loss,
                l_puc,
                l_pu: T::zero(),
                l_sep: pc.loss + l_puc,
                grad,
            })
        }
        SampleContext::Unchanged { features } => {
            let (l_pu, grad) = if scope.includes_unchanged_images() {
                let pu = unchanged_image_branch(features);
                (pu.loss, pu.grad)
            } else {
                (
                    T::zero(),
                    FeatureMap::zeros(features.dims(), features.channels()),
                )
            };
            Ok(LossBreakdown {
                l_pc: T::zero(),
                l_puc: T::zero(),
                l_pu,
                l_sep: l_pu,
                grad,
            })
        }
    }
}

/// `l_cls + alpha * l_sep` once warmup has elapsed, `l_cls` before.
pub fn total_loss<T: Scalar>(
    l_cls: T,
    breakdown: &LossBreakdown<T>,
    cfg: &SeparationConfig,
    iteration: usize,
) -> Result<T> {
    if !(cfg.alpha >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha={} must be >= 0",
            cfg.alpha
        )));
    }
    if iteration >= cfg.warmup_iterations {
        Ok(l_cls + T::lit(cfg.alpha) * breakdown.l_sep)
    } else {
        Ok(l_cls)
    }
}
