//! Minimal bi-temporal change classifier with exact reverse-mode gradients.
//!
//! ```text
//! x_t1 ─ conv3x3 ─ ReLU ─ conv3x3 ─ ReLU ─┐
//!                                         ├─ |e1 - e2| ─ conv1x1 ─ F ─ GAP ─ <·, w> + b ─ logit
//! x_t2 ─ conv3x3 ─ ReLU ─ conv3x3 ─ ReLU ─┘
//! ```
//!
//! The encoder weights are shared between the two dates. Convolutions are
//! stride 1 with zero padding, so `F` has the input resolution. Because the
//! classifier acts on the global average of `F`, the logit equals the mean of
//! the pre-rectification CAM plus the bias.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cam::ClassifierWeights;
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Dim2, FeatureMap, InstanceIdMask};
use crate::scalar::{MatMut, MatRef, Scalar};

/// Input channels of each image.
pub const IMAGE_CHANNELS: usize = 3;
const K: usize = 3;

/// Encoder width `C` and feature width `D`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelSizes {
    pub channels: usize,
    pub features: usize,
}

impl ModelSizes {
    pub fn new(channels: usize, features: usize) -> Result<Self> {
        if channels == 0 || features == 0 {
            return Err(Error::InvalidConfig("model widths must be positive".into()));
        }
        Ok(Self { channels, features })
    }

    /// `(name, shape)` of every tensor, in storage order.
    pub fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (c, d) = (self.channels, self.features);
        vec![
            ("conv1.weight", vec![K, K, IMAGE_CHANNELS, c]),
            ("conv1.bias", vec![c]),
            ("conv2.weight", vec![K, K, c, c]),
            ("conv2.bias", vec![c]),
            ("head.weight", vec![c, d]),
            ("head.bias", vec![d]),
            ("classifier.weight", vec![d]),
            ("classifier.bias", vec![1]),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

impl Default for ModelSizes {
    fn default() -> Self {
        Self {
            channels: 8,
            features: 8,
        }
    }
}

/// All trainable parameters, stored flat in [`ModelSizes::layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    sizes: ModelSizes,
    data: Vec<T>,
}

/// Gradients share the parameter layout.
pub type ParamGradients<T> = ModelParams<T>;

#[derive(Clone, Copy)]
enum Tensor {
    Conv1W,
    Conv1B,
    Conv2W,
    Conv2B,
    HeadW,
    HeadB,
    ClsW,
    ClsB,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(sizes: ModelSizes) -> Self {
        Self {
            sizes,
            data: vec![T::zero(); sizes.parameter_count()],
        }
    }

    /// He-normal encoder weights, scaled-normal head and classifier, zero biases.
    pub fn init(sizes: ModelSizes, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(sizes);
        let c = sizes.channels as f64;
        let mut fill = |p: &mut Self, t: Tensor, sd: f64| {
            let normal = Normal::new(0.0, sd).expect("positive sd");
            for v in p.slice_mut(t) {
                *v = T::lit(normal.sample(&mut rng));
            }
        };
        fill(
            &mut p,
            Tensor::Conv1W,
            (2.0 / (9.0 * IMAGE_CHANNELS as f64)).sqrt(),
        );
        fill(&mut p, Tensor::Conv2W, (2.0 / (9.0 * c)).sqrt());
        fill(&mut p, Tensor::HeadW, (1.0 / c).sqrt());
        fill(&mut p, Tensor::ClsW, (1.0 / sizes.features as f64).sqrt());
        p
    }

    pub fn from_flat(sizes: ModelSizes, data: Vec<T>) -> Result<Self> {
        if data.len() != sizes.parameter_count() {
            return Err(Error::InvalidValue(format!(
                "expected {} parameters, got {}",
                sizes.parameter_count(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite parameter".into()));
        }
        Ok(Self { sizes, data })
    }

    pub fn sizes(&self) -> ModelSizes {
        self.sizes
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// `(name, shape, values)` for every tensor.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[T])> {
        let mut offset = 0;
        self.sizes
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let slice = &self.data[offset..offset + n];
                offset += n;
                (name, shape, slice)
            })
            .collect()
    }

    pub fn classifier_weights(&self) -> ClassifierWeights<T> {
        ClassifierWeights::new(self.slice(Tensor::ClsW).to_vec())
            .expect("finite classifier weights")
    }

    pub fn classifier_bias(&self) -> T {
        self.slice(Tensor::ClsB)[0]
    }

    /// Adds `dw` and `db` to the classifier weight and bias entries.
    pub fn add_to_classifier(&mut self, dw: &[T], db: T) -> Result<()> {
        let w = self.slice_mut(Tensor::ClsW);
        if w.len() != dw.len() {
            return Err(Error::ChannelMismatch {
                expected: w.len(),
                found: dw.len(),
            });
        }
        for (a, b) in w.iter_mut().zip(dw) {
            *a = *a + *b;
        }
        let b = self.slice_mut(Tensor::ClsB);
        b[0] = b[0] + db;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        assert_eq!(self.sizes, other.sizes, "parameter layouts differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + scale * *b;
        }
    }

    fn range(&self, t: Tensor) -> std::ops::Range<usize> {
        let layout = self.sizes.layout();
        let idx = t as usize;
        let start: usize = layout[..idx]
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        start..start + layout[idx].1.iter().product::<usize>()
    }

    fn slice(&self, t: Tensor) -> &[T] {
        &self.data[self.range(t)]
    }

    fn slice_mut(&mut self, t: Tensor) -> &mut [T] {
        let r = self.range(t);
        &mut self.data[r]
    }
}

/// Bi-temporal sample. Images are `H x W x 3` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSample<T> {
    pub x_t1: FeatureMap<T>,
    pub x_t2: FeatureMap<T>,
    pub y_cls: u8,
    pub gt: Option<BinaryMask>,
    pub gt_instances: Option<InstanceIdMask>,
}

impl<T: Scalar> SceneSample<T> {
    pub fn new(
        x_t1: FeatureMap<T>,
        x_t2: FeatureMap<T>,
        y_cls: u8,
        gt: Option<BinaryMask>,
        gt_instances: Option<InstanceIdMask>,
    ) -> Result<Self> {
        for x in [&x_t1, &x_t2] {
            if x.channels() != IMAGE_CHANNELS {
                return Err(Error::ChannelMismatch {
                    expected: IMAGE_CHANNELS,
                    found: x.channels(),
                });
            }
        }
        x_t1.dims().ensure_same(x_t2.dims())?;
        if let Some(g) = &gt {
            x_t1.dims().ensure_same(g.dims())?;
        }
        if let Some(g) = &gt_instances {
            x_t1.dims().ensure_same(g.dims())?;
        }
        if y_cls > 1 {
            return Err(Error::InvalidValue(format!(
                "scene label {y_cls} not in {{0, 1}}"
            )));
        }
        Ok(Self {
            x_t1,
            x_t2,
            y_cls,
            gt,
            gt_instances,
        })
    }

    pub fn dims(&self) -> Dim2 {
        self.x_t1.dims()
    }

    /// The same scene with the two dates exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            x_t1: self.x_t2.clone(),
            x_t2: self.x_t1.clone(),
            ..self.clone()
        }
    }
}

/// Features and scene logit.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput<T> {
    pub features: FeatureMap<T>,
    pub logit: T,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    dims: Dim2,
    hidden1: [Vec<T>; 2],
    encoded: [Vec<T>; 2],
    diff: Vec<T>,
    pub output: ForwardOutput<T>,
}

pub fn forward<T: Scalar>(params: &ModelParams<T>, s: &SceneSample<T>) -> Result<ForwardOutput<T>> {
    Ok(forward_cached(params, s)?.output)
}

pub fn forward_cached<T: Scalar>(
    params: &ModelParams<T>,
    s: &SceneSample<T>,
) -> Result<ForwardCache<T>> {
    let dims = s.dims();
    if dims.height() < K || dims.width() < K {
        return Err(Error::InvalidValue(format!(
            "input {dims} is smaller than the 3x3 kernel"
        )));
    }
    let ModelSizes {
        channels: c,
        features: d,
    } = params.sizes;
    let encode = |x: &FeatureMap<T>| {
        let mut h1 = conv3x3(
            x.values(),
            dims,
            IMAGE_CHANNELS,
            params.slice(Tensor::Conv1W),
            params.slice(Tensor::Conv1B),
            c,
        );
        relu(&mut h1);
        let mut e = conv3x3(
            &h1,
            dims,
            c,
            params.slice(Tensor::Conv2W),
            params.slice(Tensor::Conv2B),
            c,
        );
        relu(&mut e);
        (h1, e)
    };
    let (h1a, ea) = encode(&s.x_t1);
    let (h1b, eb) = encode(&s.x_t2);
    let diff: Vec<T> = ea.iter().zip(&eb).map(|(a, b)| (*a - *b).abs()).collect();

    let feats = dense(
        &diff,
        dims.len(),
        c,
        params.slice(Tensor::HeadW),
        params.slice(Tensor::HeadB),
        d,
    );

    let n = T::from_count(dims.len());
    let mut gap = vec![T::zero(); d];
    for px in feats.chunks_exact(d) {
        for (g, v) in gap.iter_mut().zip(px) {
            *g = *g + *v;
        }
    }
    let cls_w = params.slice(Tensor::ClsW);
    let logit = gap
        .iter()
        .zip(cls_w)
        .fold(T::zero(), |acc, (g, w)| acc + *g / n * *w)
        + params.classifier_bias();

    let features = FeatureMap::from_raw(dims, d, feats);
    if !features.all_finite() || !logit.is_finite() {
        return Err(Error::NonFinite {
            what: "forward activations".into(),
            iteration: 0,
        });
    }
    Ok(ForwardCache {
        dims,
        hidden1: [h1a, h1b],
        encoded: [ea, eb],
        diff,
        output: ForwardOutput { features, logit },
    })
}

/// Sigmoid binary cross-entropy on a logit, computed without overflow.
/// Returns the loss and its derivative with respect to the logit.
pub fn classification_loss<T: Scalar>(logit: T, y_cls: u8) -> (T, T) {
    let y = if y_cls == 0 { T::zero() } else { T::one() };
    let loss = logit.max(T::zero()) - logit * y + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - y)
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Gradients of `dlogit * logit + <dfeatures, F>` with respect to every parameter.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    s: &SceneSample<T>,
    dlogit: T,
    dfeatures: &FeatureMap<T>,
) -> Result<ParamGradients<T>> {
    let cache = forward_cached(params, s)?;
    backward_cached(params, s, &cache, dlogit, dfeatures)
}

pub fn backward_cached<T: Scalar>(
    params: &ModelParams<T>,
    s: &SceneSample<T>,
    cache: &ForwardCache<T>,
    dlogit: T,
    dfeatures: &FeatureMap<T>,
) -> Result<ParamGradients<T>> {
    let dims = cache.dims;
    let ModelSizes {
        channels: c,
        features: d,
    } = params.sizes;
    if dfeatures.dims() != dims || dfeatures.channels() != d {
        return Err(Error::DimensionMismatch {
            expected: dims,
            found: dfeatures.dims(),
        });
    }
    let mut grads = ModelParams::zeros(params.sizes);
    let n = T::from_count(dims.len());
    let feats = cache.output.features.values();
    let cls_w = params.slice(Tensor::ClsW).to_vec();

    // classifier
    {
        let gw = grads.slice_mut(Tensor::ClsW);
        for px in feats.chunks_exact(d) {
            for (g, v) in gw.iter_mut().zip(px) {
                *g = *g + dlogit * *v / n;
            }
        }
        grads.slice_mut(Tensor::ClsB)[0] = dlogit;
    }

    // head, and gradient reaching |e1 - e2|
    let from_logit: Vec<T> = cls_w.iter().map(|w| dlogit * *w / n).collect();
    let head_w = params.slice(Tensor::HeadW).to_vec();
    let mut d_head_w = vec![T::zero(); c * d];
    let mut d_head_b = vec![T::zero(); d];
    let mut dout = dfeatures.values().to_vec();
    for px in dout.chunks_exact_mut(d) {
        for (o, b) in px.iter_mut().zip(&from_logit) {
            *o = *o + *b;
        }
    }
    let d_diff = dense_backward(
        &cache.diff,
        dims.len(),
        c,
        &head_w,
        d,
        &dout,
        &mut d_head_w,
        &mut d_head_b,
        true,
    )
    .expect("input gradient requested");
    grads.slice_mut(Tensor::HeadW).copy_from_slice(&d_head_w);
    grads.slice_mut(Tensor::HeadB).copy_from_slice(&d_head_b);

    // |e1 - e2|, subgradient 0 where e1 == e2
    let [ea, eb] = &cache.encoded;
    let mut de = [vec![T::zero(); d_diff.len()], vec![T::zero(); d_diff.len()]];
    for (k, g) in d_diff.iter().enumerate() {
        let sign = if ea[k] > eb[k] {
            T::one()
        } else if ea[k] < eb[k] {
            -T::one()
        } else {
            T::zero()
        };
        de[0][k] = *g * sign;
        de[1][k] = -*g * sign;
    }

    let conv1_w = params.slice(Tensor::Conv1W).to_vec();
    let conv2_w = params.slice(Tensor::Conv2W).to_vec();
    let mut d_conv1_w = vec![T::zero(); conv1_w.len()];
    let mut d_conv1_b = vec![T::zero(); c];
    let mut d_conv2_w = vec![T::zero(); conv2_w.len()];
    let mut d_conv2_b = vec![T::zero(); c];
    for (t, x) in [&s.x_t1, &s.x_t2].into_iter().enumerate() {
        let mut dz2 = std::mem::take(&mut de[t]);
        relu_backward(&mut dz2, &cache.encoded[t]);
        let mut dh1 = vec![T::zero(); dims.len() * c];
        conv3x3_backward(
            &cache.hidden1[t],
            dims,
            c,
            &conv2_w,
            c,
            &dz2,
            &mut d_conv2_w,
            &mut d_conv2_b,
            Some(&mut dh1),
        );
        relu_backward(&mut dh1, &cache.hidden1[t]);
        conv3x3_backward(
            x.values(),
            dims,
            IMAGE_CHANNELS,
            &conv1_w,
            c,
            &dh1,
            &mut d_conv1_w,
            &mut d_conv1_b,
            None,
        );
    }
    grads.slice_mut(Tensor::Conv1W).copy_from_slice(&d_conv1_w);
    grads.slice_mut(Tensor::Conv1B).copy_from_slice(&d_conv1_b);
    grads.slice_mut(Tensor::Conv2W).copy_from_slice(&d_conv2_w);
    grads.slice_mut(Tensor::Conv2B).copy_from_slice(&d_conv2_b);
    Ok(grads)
}

/// `params - lr * grads`. Refuses non-finite gradients.
pub fn sgd_step<T: Scalar>(
    params: &ModelParams<T>,
    grads: &ParamGradients<T>,
    lr: T,
) -> Result<ModelParams<T>> {
    if !(lr > T::zero() && lr.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "learning rate {lr} must be positive and finite"
        )));
    }
    if params.sizes != grads.sizes {
        return Err(Error::InvalidValue(
            "gradient layout does not match parameters".into(),
        ));
    }
    if let Some(i) = grads.data.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("gradient component {i}"),
            iteration: 0,
        });
    }
    let data = params
        .data
        .iter()
        .zip(&grads.data)
        .map(|(p, g)| *p - lr * *g)
        .collect();
    Ok(ModelParams {
        sizes: params.sizes,
        data,
    })
}

fn relu<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Zeroes gradient entries whose ReLU output was not positive.
fn relu_backward<T: Scalar>(grad: &mut [T], output: &[T]) {
    for (g, o) in grad.iter_mut().zip(output) {
        if *o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Zero-padded stride-1 3x3 convolution on pixel-major data. Weights are
/// laid out `[ky][kx][in][out]`.
/// Copies a pixel-major image into a buffer with a one-pixel zero border.
fn pad_image<T: Scalar>(input: &[T], dims: Dim2, cin: usize) -> Vec<T> {
    let (h, w) = (dims.height(), dims.width());
    let wp = w + 2;
    let mut out = vec![T::zero(); (h + 2) * wp * cin];
    for y in 0..h {
        let dst = ((y + 1) * wp + 1) * cin;
        out[dst..dst + w * cin].copy_from_slice(&input[y * w * cin..(y + 1) * w * cin]);
    }
    out
}

/// Padded-grid geometry shared by the convolution passes. Output pixel
/// `(y, x)` sits at padded index `(y + 1) * wp + x + 1`; the pass covers the
/// contiguous padded range from the first to the last interior pixel, border
/// columns included, and tap `(ky, kx)` reads the same range shifted by
/// `(ky - 1) * wp + kx - 1`.
struct PaddedGrid {
    h: usize,
    w: usize,
    wp: usize,
    first: usize,
    rows: usize,
}

impl PaddedGrid {
    fn new(dims: Dim2) -> Self {
        let (h, w) = (dims.height(), dims.width());
        let wp = w + 2;
        Self {
            h,
            w,
            wp,
            first: wp + 1,
            rows: (h - 1) * wp + w,
        }
    }

    /// Start of tap `(ky, kx)` in the padded buffer, in pixels.
    fn tap_start(&self, ky: usize, kx: usize) -> usize {
        self.first + ky * self.wp + kx - self.wp - 1
    }

    fn range_index(&self, y: usize, x: usize) -> usize {
        (y + 1) * self.wp + x + 1 - self.first
    }
}

fn conv3x3<T: Scalar>(
    input: &[T],
    dims: Dim2,
    cin: usize,
    weight: &[T],
    bias: &[T],
    cout: usize,
) -> Vec<T> {
    let g = PaddedGrid::new(dims);
    let padded = pad_image(input, dims, cin);
    let mut acc = vec![T::zero(); g.rows * cout];
    for ky in 0..K {
        for kx in 0..K {
            let start = g.tap_start(ky, kx) * cin;
            let tap = (ky * K + kx) * cin * cout;
            T::gemm(
                MatRef {
                    data: &padded[start..],
                    rows: g.rows,
                    cols: cin,
                    rs: cin,
                    cs: 1,
                },
                MatRef::row_major(&weight[tap..tap + cin * cout], cin, cout),
                T::one(),
                MatMut::row_major(&mut acc, g.rows, cout),
            );
        }
    }
    let mut out = Vec::with_capacity(g.h * g.w * cout);
    for y in 0..g.h {
        for x in 0..g.w {
            let q = g.range_index(y, x) * cout;
            out.extend(acc[q..q + cout].iter().zip(bias).map(|(a, b)| *a + *b));
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_backward<T: Scalar>(
    input: &[T],
    dims: Dim2,
    cin: usize,
    weight: &[T],
    cout: usize,
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    dinput: Option<&mut [T]>,
) {
    for g in dout.chunks_exact(cout) {
        for (b, v) in dbias.iter_mut().zip(g) {
            *b = *b + *v;
        }
    }
    let g = PaddedGrid::new(dims);
    let padded = pad_image(input, dims, cin);
    // upstream gradient on the padded range; border columns stay zero
    let mut dacc = vec![T::zero(); g.rows * cout];
    for y in 0..g.h {
        let q = g.range_index(y, 0) * cout;
        dacc[q..q + g.w * cout].copy_from_slice(&dout[y * g.w * cout..(y + 1) * g.w * cout]);
    }
    let mut dpadded = dinput.as_ref().map(|_| vec![T::zero(); padded.len()]);
    for ky in 0..K {
        for kx in 0..K {
            let start = g.tap_start(ky, kx) * cin;
            let tap = (ky * K + kx) * cin * cout;
            T::gemm(
                MatRef {
                    data: &padded[start..],
                    rows: g.rows,
                    cols: cin,
                    rs: cin,
                    cs: 1,
                }
                .t(),
                MatRef::row_major(&dacc, g.rows, cout),
                T::one(),
                MatMut::row_major(&mut dweight[tap..tap + cin * cout], cin, cout),
            );
            if let Some(dp) = dpadded.as_mut() {
                T::gemm(
                    MatRef::row_major(&dacc, g.rows, cout),
                    MatRef::row_major(&weight[tap..tap + cin * cout], cin, cout).t(),
                    T::one(),
                    MatMut {
                        data: &mut dp[start..],
                        rows: g.rows,
                        cols: cin,
                        rs: cin,
                        cs: 1,
                    },
                );
            }
        }
    }
    if let (Some(di), Some(dp)) = (dinput, dpadded) {
        for y in 0..g.h {
            let src = ((y + 1) * g.wp + 1) * cin;
            for (d, v) in di[y * g.w * cin..(y + 1) * g.w * cin]
                .iter_mut()
                .zip(&dp[src..src + g.w * cin])
            {
                *d = *d + *v;
            }
        }
    }
}

/// `out[p] = bias + input[p] * weight` for a pixel-major `p x cin` input.
fn dense<T: Scalar>(
    input: &[T],
    pixels: usize,
    cin: usize,
    weight: &[T],
    bias: &[T],
    cout: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(pixels * cout);
    for _ in 0..pixels {
        out.extend_from_slice(bias);
    }
    T::gemm(
        MatRef::row_major(input, pixels, cin),
        MatRef::row_major(weight, cin, cout),
        T::one(),
        MatMut::row_major(&mut out, pixels, cout),
    );
    out
}

/// Accumulates the weight and bias gradients of [`dense`] and returns the input gradient.
#[allow(clippy::too_many_arguments)]
fn dense_backward<T: Scalar>(
    input: &[T],
    pixels: usize,
    cin: usize,
    weight: &[T],
    cout: usize,
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    want_input: bool,
) -> Option<Vec<T>> {
    for g in dout.chunks_exact(cout) {
        for (b, v) in dbias.iter_mut().zip(g) {
            *b = *b + *v;
        }
    }
    T::gemm(
        MatRef::row_major(input, pixels, cin).t(),
        MatRef::row_major(dout, pixels, cout),
        T::one(),
        MatMut::row_major(dweight, cin, cout),
    );
    want_input.then(|| {
        let mut din = vec![T::zero(); pixels * cin];
        T::gemm(
            MatRef::row_major(dout, pixels, cout),
            MatRef::row_major(weight, cin, cout).t(),
            T::zero(),
            MatMut::row_major(&mut din, pixels, cin),
        );
        din
    })
}
