//! Instance retrieval: 8-connected labeling of the changed localization mask
//! and per-instance feature extraction.
//!
//! The raster scan visits each foreground pixel once and inspects its
//! already-labeled neighbors (W, NW, N, NE):
//!
//! * no labeled neighbor: the pixel starts a new instance;
//! * one distinct label: the pixel joins that instance;
//! * several labels: the pixel bridges them and the instances are merged.
//!
//! Merges are recorded in a disjoint-set forest and resolved in a second pass,
//! which then renumbers instances `1..=K` by first appearance in raster order.

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, FeatureMap, InstanceIdMask};
use crate::scalar::Scalar;

/// Pixel membership of every retrieved instance. Instance `k` (1-based) is
/// stored at position `k - 1`; pixel lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct InstanceTable {
    instances: Vec<Vec<usize>>,
}

impl InstanceTable {
    pub fn new(instances: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (k, pixels) in instances.iter().enumerate() {
            if pixels.is_empty() {
                return Err(Error::InconsistentTable(format!(
                    "instance {} is empty",
                    k + 1
                )));
            }
            if !pixels.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::InconsistentTable(format!(
                    "instance {} is not sorted",
                    k + 1
                )));
            }
            if let Some(p) = pixels.iter().find(|p| !seen.insert(**p)) {
                return Err(Error::InconsistentTable(format!(
                    "pixel {p} belongs to two instances"
                )));
            }
        }
        Ok(Self { instances })
    }

    /// Number of instances K.
    pub fn count(&self) -> usize {
        self.instances.len()
    }

    /// Pixels of instance `k` (1-based).
    pub fn pixels(&self, k: usize) -> Option<&[usize]> {
        k.checked_sub(1)
            .and_then(|i| self.instances.get(i))
            .map(Vec::as_slice)
    }

    pub fn pixel_count(&self, k: usize) -> Option<usize> {
        self.pixels(k).map(<[usize]>::len)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.instances.iter().map(Vec::as_slice)
    }

    pub fn total_pixels(&self) -> usize {
        self.instances.iter().map(Vec::len).sum()
    }

    /// Checks that `id_mask` assigns exactly these pixels to each instance.
    pub fn check_against(&self, id_mask: &InstanceIdMask) -> Result<()> {
        let labeled = id_mask.ids().iter().filter(|&&id| id != 0).count();
        if labeled != self.total_pixels() {
            return Err(Error::InconsistentTable(format!(
                "table holds {} pixels, id mask labels {labeled}",
                self.total_pixels()
            )));
        }
        for (k, pixels) in self.instances.iter().enumerate() {
            for &p in pixels {
                if p >= id_mask.dims().len() || id_mask.get(p) as usize != k + 1 {
                    return Err(Error::InconsistentTable(format!(
                        "pixel {p} of instance {} is not labeled {} in the id mask",
                        k + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Disjoint-set forest over provisional labels. Unions keep the smaller root.
struct LabelForest {
    parent: Vec<u32>,
}

impl LabelForest {
    fn new() -> Self {
        // slot 0 is the background and never joins anything
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (keep, drop) = if ra <= rb { (ra, rb) } else { (rb, ra) };
        self.parent[drop as usize] = keep;
        keep
    }
}

/// Labels the 8-connected components of `m_c`.
///
/// IDs are canonical: `1..=K` in order of each component's first pixel in
/// raster order, so the output is a pure function of the mask.
pub fn connectivity_search(m_c: &BinaryMask) -> (InstanceIdMask, InstanceTable) {
    let dims = m_c.dims();
    let (h, w) = (dims.height(), dims.width());
    let mut provisional = vec![0u32; dims.len()];
    let mut forest = LabelForest::new();

    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if !m_c.get(i) {
                continue;
            }
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            let mut push = |id: u32| {
                if id != 0 {
                    neighbors[n] = id;
                    n += 1;
                }
            };
            if col > 0 {
                push(provisional[i - 1]);
            }
            if row > 0 {
                let up = i - w;
                if col > 0 {
                    push(provisional[up - 1]);
                }
                push(provisional[up]);
                if col + 1 < w {
                    push(provisional[up + 1]);
                }
            }
            provisional[i] = match &neighbors[..n] {
                // new instance
                [] => forest.make(),
                // extend (possibly several neighbors with the same label) or merge
                [first, rest @ ..] => {
                    let mut root = forest.find(*first);
                    for &other in rest {
                        if forest.find(other) != root {
                            root = forest.union(root, other);
                        }
                    }
                    root
                }
            };
        }
    }

    // second pass: resolve merges and renumber by first appearance
    let mut canonical = vec![0u32; forest.parent.len()];
    let mut instances: Vec<Vec<usize>> = Vec::new();
    let mut ids = vec![0u32; dims.len()];
    for (i, &label) in provisional.iter().enumerate() {
        if label == 0 {
            continue;
        }
        let root = forest.find(label) as usize;
        if canonical[root] == 0 {
            instances.push(Vec::new());
            canonical[root] = instances.len() as u32;
        }
        let id = canonical[root];
        ids[i] = id;
        instances[id as usize - 1].push(i);
    }

    let id_mask = InstanceIdMask::new(dims, ids).expect("ids sized to the mask");
    (id_mask, InstanceTable { instances })
}

/// Renumbers any instance mask so its ids follow first appearance in raster order.
/// Regions keep their pixels; only the id values change.
pub fn canonicalize_ids(mask: &InstanceIdMask) -> InstanceIdMask {
    let mut map = std::collections::HashMap::new();
    let ids = mask
        .ids()
        .iter()
        .map(|&id| {
            if id == 0 {
                0
            } else {
                let next = map.len() as u32 + 1;
                *map.entry(id).or_insert(next)
            }
        })
        .collect();
    InstanceIdMask::new(mask.dims(), ids).expect("same size")
}

/// Features of instance `k`, zero outside the instance.
pub fn extract_instance_features<T: Scalar>(
    f: &FeatureMap<T>,
    id_mask: &InstanceIdMask,
    k: u32,
) -> Result<FeatureMap<T>> {
    f.dims().ensure_same(id_mask.dims())?;
    let max = id_mask.max_id();
    if k == 0 || k > max {
        return Err(Error::IndexOutOfRange {
            index: k as usize,
            len: max as usize,
        });
    }
    Ok(masked(f, |i| id_mask.get(i) == k))
}

/// `F ⊙ M_uc`: features of the unchanged-background pixels, zero elsewhere.
pub fn extract_background_features<T: Scalar>(
    f: &FeatureMap<T>,
    m_uc: &BinaryMask,
) -> Result<FeatureMap<T>> {
    f.dims().ensure_same(m_uc.dims())?;
    Ok(masked(f, |i| m_uc.get(i)))
}

fn masked<T: Scalar>(f: &FeatureMap<T>, keep: impl Fn(usize) -> bool) -> FeatureMap<T> {
    let mut out = FeatureMap::zeros(f.dims(), f.channels());
    for i in 0..f.dims().len() {
        if keep(i) {
            out.pixel_mut(i).copy_from_slice(f.pixel(i));
        }
    }
    out
}
