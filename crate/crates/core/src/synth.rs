//! Seeded bi-temporal scenes with densely packed changed objects.
//!
//! A scene is a flat-colored background plus per-date Gaussian texture noise.
//! Changed scenes add `N` rectangles or ellipses whose brightness is shifted
//! by `±change_shift` in the second date. Shapes keep at least `min_gap`
//! background pixels between each other along rows, columns and diagonals, so
//! every shape is its own 8-connected component of the ground truth.
//!
//! Every sample is a pure function of `(seed, index)`.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Dim2, FeatureMap, InstanceIdMask};
use crate::io;
use crate::model::SceneSample;
use crate::retrieve::canonicalize_ids;

const SHAPE_TRIES: usize = 200;
const SCENE_TRIES: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub dims: Dim2,
    /// Inclusive `[min, max]` number of changed shapes per changed scene.
    pub instance_count_range: (usize, usize),
    /// Inclusive `[min, max]` half-extent of a shape, in pixels.
    pub instance_radius_range: (usize, usize),
    /// Minimum number of background pixels separating two shapes.
    pub min_gap: usize,
    pub texture_noise_sd: f64,
    /// Additive brightness change applied to shapes in the second date.
    pub change_shift: f64,
    pub p_unchanged_scene: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dims: Dim2::new(64, 64).expect("positive"),
            instance_count_range: (4, 10),
            instance_radius_range: (2, 5),
            min_gap: 3,
            texture_noise_sd: 0.05,
            change_shift: 0.3,
            p_unchanged_scene: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (nmin, nmax) = self.instance_count_range;
        let (rmin, rmax) = self.instance_radius_range;
        if nmin > nmax {
            return Err(Error::InvalidConfig(format!(
                "instance count range [{nmin}, {nmax}] is empty"
            )));
        }
        if nmin == 0 {
            return Err(Error::InvalidConfig(
                "changed scenes need at least one instance".into(),
            ));
        }
        if rmin > rmax {
            return Err(Error::InvalidConfig(format!(
                "instance radius range [{rmin}, {rmax}] is empty"
            )));
        }
        if self.min_gap == 0 {
            return Err(Error::InvalidConfig("min_gap must be at least 1".into()));
        }
        let side = 2 * rmax + 1;
        if side > self.dims.height() || side > self.dims.width() {
            return Err(Error::InvalidConfig(format!(
                "shapes up to {side}px do not fit in {}",
                self.dims
            )));
        }
        if !(self.texture_noise_sd.is_finite() && self.texture_noise_sd >= 0.0) {
            return Err(Error::InvalidConfig("texture_noise_sd must be >= 0".into()));
        }
        if !(self.change_shift.is_finite() && self.change_shift > 0.0 && self.change_shift <= 1.0) {
            return Err(Error::InvalidConfig(
                "change_shift must lie in (0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_unchanged_scene) {
            return Err(Error::InvalidConfig(
                "p_unchanged_scene must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Axis-aligned bounding box, inclusive.
#[derive(Clone, Copy, Debug)]
struct Rect {
    top: usize,
    left: usize,
    bottom: usize,
    right: usize,
}

impl Rect {
    /// Background pixels strictly between the two boxes along the worse axis.
    fn gap(&self, other: &Rect) -> usize {
        let axis = |a0: usize, a1: usize, b0: usize, b1: usize| {
            if a1 < b0 {
                b0 - a1 - 1
            } else if b1 < a0 {
                a0 - b1 - 1
            } else {
                0
            }
        };
        axis(self.top, self.bottom, other.top, other.bottom).max(axis(
            self.left,
            self.right,
            other.left,
            other.right,
        ))
    }
}

#[derive(Clone, Copy, Debug)]
struct Shape {
    bbox: Rect,
    ellipse: bool,
    shift: f64,
}

impl Shape {
    fn contains(&self, row: usize, col: usize) -> bool {
        let b = &self.bbox;
        if row < b.top || row > b.bottom || col < b.left || col > b.right {
            return false;
        }
        if !self.ellipse {
            return true;
        }
        let ry = (b.bottom - b.top) as f64 / 2.0;
        let rx = (b.right - b.left) as f64 / 2.0;
        let dy = row as f64 - (b.top as f64 + ry);
        let dx = col as f64 - (b.left as f64 + rx);
        (dy / ry.max(0.5)).powi(2) + (dx / rx.max(0.5)).powi(2) <= 1.0 + 1e-9
    }
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn place_shapes(cfg: &SynthConfig, n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Shape>> {
    let (h, w) = (cfg.dims.height(), cfg.dims.width());
    let (rmin, rmax) = cfg.instance_radius_range;
    let mut shapes: Vec<Shape> = Vec::with_capacity(n);
    for _ in 0..n {
        let placed = (0..SHAPE_TRIES).find_map(|_| {
            let ry = rng.gen_range(rmin..=rmax);
            let rx = rng.gen_range(rmin..=rmax);
            let cy = rng.gen_range(ry..h - ry);
            let cx = rng.gen_range(rx..w - rx);
            let bbox = Rect {
                top: cy - ry,
                bottom: cy + ry,
                left: cx - rx,
                right: cx + rx,
            };
            let ellipse = rng.gen_bool(0.5);
            let shift = if rng.gen_bool(0.5) {
                cfg.change_shift
            } else {
                -cfg.change_shift
            };
            shapes
                .iter()
                .all(|s| s.bbox.gap(&bbox) >= cfg.min_gap)
                .then_some(Shape {
                    bbox,
                    ellipse,
                    shift,
                })
        })?;
        shapes.push(placed);
    }
    Some(shapes)
}

/// Generates sample `index` of the benchmark defined by `cfg`.
pub fn generate_sample(cfg: &SynthConfig, index: u64) -> Result<SceneSample<f64>> {
    cfg.validate()?;
    let dims = cfg.dims;
    let mut rng = sample_rng(cfg.seed, index);
    let unchanged = rng.gen_bool(cfg.p_unchanged_scene);

    // the background must leave room for the shift in either direction
    let margin = cfg.change_shift.min(0.45);
    let base: Vec<f64> = (0..3)
        .map(|_| rng.gen_range(margin..=1.0 - margin))
        .collect();

    let shapes = if unchanged {
        Vec::new()
    } else {
        let (nmin, nmax) = cfg.instance_count_range;
        let n = rng.gen_range(nmin..=nmax);
        (0..SCENE_TRIES)
            .find_map(|_| place_shapes(cfg, n, &mut rng))
            .ok_or_else(|| {
                Error::Placement(format!(
                    "cannot fit {n} shapes of radius up to {} with min_gap={} in {}",
                    cfg.instance_radius_range.1, cfg.min_gap, dims
                ))
            })?
    };

    let mut ids = vec![0u32; dims.len()];
    let mut shift = vec![0.0; dims.len()];
    for (k, s) in shapes.iter().enumerate() {
        for row in s.bbox.top..=s.bbox.bottom {
            for col in s.bbox.left..=s.bbox.right {
                if s.contains(row, col) {
                    let i = dims.index(row, col);
                    ids[i] = k as u32 + 1;
                    shift[i] = s.shift;
                }
            }
        }
    }

    let noise =
        Normal::new(0.0, cfg.texture_noise_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut render = |shifted: bool| {
        let mut v = Vec::with_capacity(dims.len() * 3);
        for i in 0..dims.len() {
            for b in &base {
                let delta = if shifted { shift[i] } else { 0.0 };
                v.push((b + delta + noise.sample(&mut rng)).clamp(0.0, 1.0));
            }
        }
        FeatureMap::new(dims, 3, v)
    };
    let x_t1 = render(false)?;
    let x_t2 = render(true)?;

    let gt = BinaryMask::from_fn(dims, |i| ids[i] != 0);
    let y_cls = u8::from(gt.count_ones() > 0);
    let gt_instances = canonicalize_ids(&InstanceIdMask::new(dims, ids)?);
    SceneSample::new(x_t1, x_t2, y_cls, Some(gt), Some(gt_instances))
}

/// Disjoint, consecutive index ranges for the three splits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Range<u64>,
    pub val: Range<u64>,
    pub test: Range<u64>,
}

impl SplitIndices {
    pub fn new(n_train: usize, n_val: usize, n_test: usize) -> Result<Self> {
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(Error::InvalidConfig(format!(
                "split sizes must be >= 1, got ({n_train}, {n_val}, {n_test})"
            )));
        }
        let (a, b, c) = (n_train as u64, n_val as u64, n_test as u64);
        Ok(Self {
            train: 0..a,
            val: a..a + b,
            test: a + b..a + b + c,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<SceneSample<f64>>,
    pub val: Vec<SceneSample<f64>>,
    pub test: Vec<SceneSample<f64>>,
}

pub fn generate_range(cfg: &SynthConfig, range: Range<u64>) -> Result<Vec<SceneSample<f64>>> {
    range.map(|i| generate_sample(cfg, i)).collect()
}

pub fn generate_split(
    cfg: &SynthConfig,
    n_train: usize,
    n_val: usize,
    n_test: usize,
) -> Result<Split> {
    let idx = SplitIndices::new(n_train, n_val, n_test)?;
    Ok(Split {
        train: generate_range(cfg, idx.train)?,
        val: generate_range(cfg, idx.val)?,
        test: generate_range(cfg, idx.test)?,
    })
}

/// Writes `NNNNN_t1.ppm`, `NNNNN_t2.ppm`, `NNNNN_gt.pgm`, `NNNNN_instances.pgm`
/// for each sample plus `manifest.csv`.
pub fn dump_samples(dir: &Path, first_index: u64, samples: &[SceneSample<f64>]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = std::fs::File::create(dir.join("manifest.csv"))?;
    writeln!(
        manifest,
        "index,y_cls,instances,changed_pixels,t1,t2,gt,instances_mask"
    )?;
    for (k, s) in samples.iter().enumerate() {
        let index = first_index + k as u64;
        let stem = format!("{index:05}");
        let file = |suffix: &str| dir.join(format!("{stem}_{suffix}"));
        io::write_ppm(std::fs::File::create(file("t1.ppm"))?, &s.x_t1)?;
        io::write_ppm(std::fs::File::create(file("t2.ppm"))?, &s.x_t2)?;
        let gt =
            s.gt.clone()
                .unwrap_or_else(|| BinaryMask::filled(s.dims(), false));
        let inst = s
            .gt_instances
            .clone()
            .unwrap_or_else(|| InstanceIdMask::zeros(s.dims()));
        io::write_mask_pgm(std::fs::File::create(file("gt.pgm"))?, &gt)?;
        io::write_instance_pgm(std::fs::File::create(file("instances.pgm"))?, &inst)?;
        writeln!(
            manifest,
            "{index},{},{},{},{stem}_t1.ppm,{stem}_t2.ppm,{stem}_gt.pgm,{stem}_instances.pgm",
            s.y_cls,
            inst.instance_count(),
            gt.count_ones()
        )?;
    }
    Ok(())
}
