//! Evaluation metrics and connected-component labelling of safe regions.

use crate::error::{Error, Result};

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Dimension(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

/// True- and false-positive safe area as fractions of the whole pool.
/// `members` are pool indices, `true_safe` is the ground-truth mask.
pub fn tp_fp_area(members: &[usize], true_safe: &[bool]) -> Result<(f64, f64)> {
    if true_safe.is_empty() {
        return Err(Error::Input("empty pool".into()));
    }
    let mut tp = 0usize;
    for &i in members {
        match true_safe.get(i) {
            Some(true) => tp += 1,
            Some(false) => {}
            None => return Err(Error::Dimension(format!("pool index {i} out of range"))),
        }
    }
    let n = true_safe.len() as f64;
    Ok((tp as f64 / n, (members.len() - tp) as f64 / n))
}

pub fn safe_query_ratio(was_safe: &[bool]) -> Result<f64> {
    if was_safe.is_empty() {
        return Err(Error::Input("no queries".into()));
    }
    Ok(was_safe.iter().filter(|s| **s).count() as f64 / was_safe.len() as f64)
}

/// Regular lattice including both end points in every dimension. Cells are
/// ordered row-major with the last dimension fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
}

impl GridGeometry {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != shape.len() || lo.is_empty() {
            return Err(Error::Dimension("grid bounds and shape disagree".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || shape.iter().any(|n| *n < 2) {
            return Err(Error::Input("grid needs lo < hi and at least two points per axis".into()));
        }
        Ok(GridGeometry { lo, hi, shape })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, d: usize) -> f64 {
        (self.hi[d] - self.lo[d]) / (self.shape[d] - 1) as f64
    }

    pub fn axis(&self, d: usize) -> Vec<f64> {
        (0..self.shape[d]).map(|i| self.lo[d] + i as f64 * self.step(d)).collect()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = flat % self.shape[d];
            flat /= self.shape[d];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(d, i)| self.lo[d] + *i as f64 * self.step(d))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(d, v)| {
                let tol = 1e-9 * (self.hi[d] - self.lo[d]);
                *v >= self.lo[d] - tol && *v <= self.hi[d] + tol
            })
    }

    /// Nearest lattice cell. Per-axis rounding goes down at exact midpoints,
    /// which gives the lowest row-major index among equidistant cells.
    pub fn nearest_cell(&self, x: &[f64]) -> Result<usize> {
        if !self.contains(x) {
            return Err(Error::Input(format!("point {x:?} lies outside the grid domain")));
        }
        let idx: Vec<usize> = x
            .iter()
            .enumerate()
            .map(|(d, v)| {
                let u = (v - self.lo[d]) / self.step(d);
                ((u - 0.5).ceil().max(0.0) as usize).min(self.shape[d] - 1)
            })
            .collect();
        Ok(self.flat_index(&idx))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionLabeling {
    pub shape: Vec<usize>,
    /// 0 for unsafe cells, `1..=count` for safe regions.
    pub labels: Vec<usize>,
    pub count: usize,
}

impl RegionLabeling {
    /// Cell count per region; entry `r - 1` belongs to label `r`.
    pub fn region_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.count];
        for &l in &self.labels {
            if l > 0 {
                s[l - 1] += 1;
            }
        }
        s
    }

    /// Label of the largest region, lowest label on ties.
    pub fn largest_region(&self) -> Option<usize> {
        let sizes = self.region_sizes();
        let mut best: Option<(usize, usize)> = None;
        for (i, s) in sizes.iter().enumerate() {
            if best.is_none_or(|(_, b)| *s > b) {
                best = Some((i + 1, *s));
            }
        }
        best.map(|(l, _)| l)
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Labels connected safe cells: a chain in 1D, 4-neighbours in 2D. Labels
/// are assigned in row-major order of first appearance.
pub fn ccl_label(mask: &[bool], shape: &[usize]) -> Result<RegionLabeling> {
    if shape.is_empty() || shape.len() > 2 {
        return Err(Error::Input(format!("region labelling supports 1 or 2 dimensions, got {}", shape.len())));
    }
    let n: usize = shape.iter().product();
    if mask.len() != n {
        return Err(Error::Dimension(format!("mask has {} cells, shape needs {n}", mask.len())));
    }
    let cols = *shape.last().expect("non-empty shape");
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        let mut neighbours = [None, None];
        if i % cols > 0 {
            neighbours[0] = Some(i - 1);
        }
        if shape.len() == 2 && i >= cols {
            neighbours[1] = Some(i - cols);
        }
        for j in neighbours.into_iter().flatten() {
            if mask[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut labels = vec![0; n];
    let mut root_label = vec![0; n];
    let mut count = 0;
    for i in 0..n {
        if mask[i] {
            let r = find(&mut parent, i);
            if root_label[r] == 0 {
                count += 1;
                root_label[r] = count;
            }
            labels[i] = root_label[r];
        }
    }
    Ok(RegionLabeling { shape: shape.to_vec(), labels, count })
}

/// Label of the nearest grid cell of `x` (0 when that cell is unsafe).
pub fn region_of(x: &[f64], labeling: &RegionLabeling, grid: &GridGeometry) -> Result<usize> {
    if grid.shape != labeling.shape {
        return Err(Error::Dimension("labelling and grid shapes differ".into()));
    }
    Ok(labeling.labels[grid.nearest_cell(x)?])
}

/// Number of distinct safe regions hit by at least one query.
pub fn count_explored_regions<'a, I>(queries: I, labeling: &RegionLabeling, grid: &GridGeometry) -> Result<usize>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut seen = vec![false; labeling.count + 1];
    for q in queries {
        seen[region_of(q, labeling, grid)?] = true;
    }
    Ok(seen[1..].iter().filter(|s| **s).count())
}
