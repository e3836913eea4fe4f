//! Independent reference implementations used by the test suites.
//!
//! Nothing here calls into the library, so every check made against these
//! helpers compares two separately written computations.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

/// Breadth-first 8-connected labeling of a row-major bit grid.
/// Returns per-pixel labels (0 = background) and the component count.
pub fn flood_fill_labels(height: usize, width: usize, bits: &[bool]) -> (Vec<u32>, usize) {
    let mut labels = vec![0u32; bits.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..bits.len() {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (r, c) = ((p / width) as isize, (p % width) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                        continue;
                    }
                    let q = nr as usize * width + nc as usize;
                    if bits[q] && labels[q] == 0 {
                        labels[q] = next;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// True when two labelings induce the same partition (equal up to a bijection
/// of nonzero labels, with background matching background).
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == 0) != (y == 0) {
            return false;
        }
        if x == 0 {
            continue;
        }
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Central finite differences of a scalar function.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Mean squared Euclidean distance of a point set to its own mean, written out
/// longhand with no shared code.
pub fn mean_sq_to_centroid(points: &[Vec<f64>]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let d = points[0].len();
    let n = points.len() as f64;
    let mut centroid = vec![0.0; d];
    for p in points {
        for j in 0..d {
            centroid[j] += p[j];
        }
    }
    for c in centroid.iter_mut() {
        *c /= n;
    }
    let mut total = 0.0;
    for p in points {
        let mut dist = 0.0;
        for j in 0..d {
            dist += (p[j] - centroid[j]) * (p[j] - centroid[j]);
        }
        total += dist;
    }
    total / n
}

/// Relative error used by the gradient checks: `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
