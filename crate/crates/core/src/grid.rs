//! Dense 2-D grids shared by every stage of the pipeline.
//!
//! All grids are row-major. Feature maps pack the channels of one pixel
//! contiguously, so the linear pixel index `i = row * width + col` addresses
//! masks, score maps and feature vectors alike.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Height and width of a grid, both at least one pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dim2 {
    height: usize,
    width: usize,
}

impl Dim2 {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidValue(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels.
    #[inline]
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub(crate) fn ensure_same(&self, other: Dim2) -> Result<()> {
        if *self != other {
            return Err(Error::DimensionMismatch {
                expected: *self,
                found: other,
            });
        }
        Ok(())
    }
}

impl fmt::Display for Dim2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// Normalized activation per pixel, every value in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap<T> {
    dims: Dim2,
    values: Vec<T>,
}

impl<T: Scalar> ScoreMap<T> {
    pub fn new(dims: Dim2, values: Vec<T>) -> Result<Self> {
        check_len(dims.len(), values.len())?;
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::InvalidValue(format!(
                "score {v} at pixel {i} is outside [0, 1]"
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Dim2) -> Self {
        Self {
            dims,
            values: vec![T::zero(); dims.len()],
        }
    }

    pub fn dims(&self) -> Dim2 {
        self.dims
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, i: usize) -> Option<T> {
        self.values.get(i).copied()
    }
}

/// `height x width x channels` real-valued features, pixel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    dims: Dim2,
    channels: usize,
    values: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(dims: Dim2, channels: usize, values: Vec<T>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidValue(
                "feature map needs at least one channel".into(),
            ));
        }
        check_len(dims.len() * channels, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite feature at pixel {} channel {}",
                i / channels,
                i % channels
            )));
        }
        Ok(Self {
            dims,
            channels,
            values,
        })
    }

    pub fn zeros(dims: Dim2, channels: usize) -> Self {
        assert!(channels > 0, "feature map needs at least one channel");
        Self {
            dims,
            channels,
            values: vec![T::zero(); dims.len() * channels],
        }
    }

    /// Skips the finiteness scan; callers guarantee the values came from finite arithmetic
    /// or check them afterwards with [`FeatureMap::all_finite`].
    pub(crate) fn from_raw(dims: Dim2, channels: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), dims.len() * channels);
        Self {
            dims,
            channels,
            values,
        }
    }

    pub fn dims(&self) -> Dim2 {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// The D-vector of pixel `i`.
    pub fn pixel_features(&self, i: usize) -> Result<&[T]> {
        if i >= self.dims.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.dims.len(),
            });
        }
        Ok(self.pixel(i))
    }

    #[inline]
    pub(crate) fn pixel(&self, i: usize) -> &[T] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    #[inline]
    pub(crate) fn pixel_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.values[i * self.channels..(i + 1) * self.channels]
    }

    pub fn set_pixel(&mut self, i: usize, v: &[T]) -> Result<()> {
        if i >= self.dims.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.dims.len(),
            });
        }
        if v.len() != self.channels {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidValue("non-finite feature".into()));
        }
        self.pixel_mut(i).copy_from_slice(v);
        Ok(())
    }

    pub(crate) fn ensure_same_shape(&self, other: &FeatureMap<T>) -> Result<()> {
        self.dims.ensure_same(other.dims)?;
        if self.channels != other.channels {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                found: other.channels,
            });
        }
        Ok(())
    }

    /// Elementwise `self += scale * other`.
    pub fn add_scaled(&mut self, other: &FeatureMap<T>, scale: T) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + scale * *b;
        }
        Ok(())
    }
}

/// One bit per pixel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    dims: Dim2,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: Dim2, bits: Vec<bool>) -> Result<Self> {
        check_len(dims.len(), bits.len())?;
        Ok(Self { dims, bits })
    }

    /// Builds a mask from 0/1 bytes, rejecting anything else.
    pub fn from_u8(dims: Dim2, values: &[u8]) -> Result<Self> {
        check_len(dims.len(), values.len())?;
        let bits = values
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidValue(format!(
                    "mask value {other} at pixel {i}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dims, bits })
    }

    pub fn from_fn(dims: Dim2, mut f: impl FnMut(usize) -> bool) -> Self {
        Self {
            dims,
            bits: (0..dims.len()).map(&mut f).collect(),
        }
    }

    pub fn filled(dims: Dim2, value: bool) -> Self {
        Self {
            dims,
            bits: vec![value; dims.len()],
        }
    }

    pub fn dims(&self) -> Dim2 {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| b as u8).collect()
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            dims: self.dims,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.dims.ensure_same(other.dims)?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| *a || *b)
            .collect();
        Ok(BinaryMask {
            dims: self.dims,
            bits,
        })
    }
}

/// Elementwise logical AND of two masks of equal size.
pub fn mask_and(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    a.dims.ensure_same(b.dims)?;
    let bits = a.bits.iter().zip(&b.bits).map(|(x, y)| *x && *y).collect();
    Ok(BinaryMask { dims: a.dims, bits })
}

/// Per-pixel instance identifier, 0 for background.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InstanceIdMask {
    dims: Dim2,
    ids: Vec<u32>,
}

impl InstanceIdMask {
    pub fn new(dims: Dim2, ids: Vec<u32>) -> Result<Self> {
        check_len(dims.len(), ids.len())?;
        Ok(Self { dims, ids })
    }

    pub fn zeros(dims: Dim2) -> Self {
        Self {
            dims,
            ids: vec![0; dims.len()],
        }
    }

    pub fn dims(&self) -> Dim2 {
        self.dims
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    #[inline]
    pub fn get(&self, i: usize) -> u32 {
        self.ids[i]
    }

    pub fn max_id(&self) -> u32 {
        self.ids.iter().copied().max().unwrap_or(0)
    }

    /// Number of distinct nonzero ids.
    pub fn instance_count(&self) -> usize {
        let mut seen: Vec<u32> = self.ids.iter().copied().filter(|&id| id != 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    pub fn foreground(&self) -> BinaryMask {
        BinaryMask {
            dims: self.dims,
            bits: self.ids.iter().map(|&id| id != 0).collect(),
        }
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::InvalidValue(format!(
            "buffer length {found} does not match grid size {expected}"
        )));
    }
    Ok(())
}
