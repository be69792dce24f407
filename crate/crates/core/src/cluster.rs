//! Ward agglomerative clustering with Euclidean distance.
//!
//! Uses the nearest-neighbor chain algorithm over a condensed matrix of Ward
//! dissimilarities `D(A,B) = 2·|A||B|/(|A|+|B|)·‖c_A − c_B‖²`, updated with
//! the Lance–Williams recurrence. Reported heights are `√D`, so two singletons
//! merge at their Euclidean distance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Node ids: leaves are `0..N`, merge `i` creates node `N + i`.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaf_ids: Vec<String>,
    pub merges: Vec<Merge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.leaf_ids.len()
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.leaf_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "{} ids for {} leaves",
                ids.len(),
                self.leaf_ids.len()
            )));
        }
        self.leaf_ids = ids;
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Dendrogram = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_leaves();
        if n == 0 || self.merges.len() != n - 1 {
            return Err(Error::Validation(format!(
                "dendrogram with {n} leaves must have {} merges, has {}",
                n.saturating_sub(1),
                self.merges.len()
            )));
        }
        let mut size = vec![1usize; n];
        for (i, m) in self.merges.iter().enumerate() {
            let node = n + i;
            if m.left >= node || m.right >= node || m.left == m.right {
                return Err(Error::Validation(format!("merge {i} references invalid nodes")));
            }
            let s = size[m.left] + size[m.right];
            if s != m.size {
                return Err(Error::Validation(format!("merge {i} has inconsistent size")));
            }
            size.push(s);
        }
        Ok(())
    }

    /// Undo the last `k - 1` merges. Labels are numbered in order of first
    /// appearance along the leaf order.
    pub fn cut(&self, k: usize) -> Result<ClusterAssignment> {
        let n = self.n_leaves();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
        }
        let mut uf = UnionFind::new(2 * n - 1);
        for (i, m) in self.merges.iter().take(n - k).enumerate() {
            uf.union_into(m.left, n + i);
            uf.union_into(m.right, n + i);
        }
        let mut root_label = std::collections::HashMap::new();
        let labels = (0..n)
            .map(|leaf| {
                let r = uf.find(leaf);
                let next = root_label.len();
                *root_label.entry(r).or_insert(next)
            })
            .collect();
        Ok(ClusterAssignment { labels, k })
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Attach the tree of `x` under `root`.
    fn union_into(&mut self, x: usize, root: usize) {
        let rx = self.find(x);
        self.parent[rx] = root;
    }
}

/// Upper-triangle storage of a symmetric matrix without its diagonal.
struct Condensed {
    n: usize,
    data: Vec<f64>,
}

impl Condensed {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 points, got {n}")));
    }
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::InvalidArgument(format!("point {i} has dimension {}", p.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("point {i} has a non-finite coordinate")));
        }
    }
    Ok(n)
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ward linkage of the rows of `points`. Leaf ids default to `"0".."N-1"`.
pub fn ward_linkage(points: &[Vec<f64>]) -> Result<Dendrogram> {
    let n = check_points(points)?;
    let mut d = Condensed {
        n,
        data: Vec::with_capacity(n * (n - 1) / 2),
    };
    for i in 0..n {
        for j in i + 1..n {
            d.data.push(sq_dist(&points[i], &points[j]));
        }
    }

    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    // (slot a, slot b, dissimilarity) in NN-chain discovery order.
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);
    let mut chain: Vec<usize> = Vec::with_capacity(n);

    while raw.len() < n - 1 {
        if chain.is_empty() {
            chain.push(active[0]);
        }
        loop {
            let a = *chain.last().unwrap();
            let prev = (chain.len() >= 2).then(|| chain[chain.len() - 2]);
            // Nearest active neighbor; the previous chain element wins ties,
            // then the smaller slot index.
            let mut best = prev;
            let mut best_d = prev.map_or(f64::INFINITY, |p| d.get(a, p));
            for &c in &active {
                if c == a || Some(c) == prev {
                    continue;
                }
                let dc = d.get(a, c);
                if dc < best_d || (dc == best_d && best.is_none()) {
                    best = Some(c);
                    best_d = dc;
                }
            }
            let b = best.expect("at least two active clusters");
            if Some(b) == prev {
                chain.pop();
                chain.pop();
                let (keep, drop) = (a.min(b), a.max(b));
                let (na, nb) = (size[keep] as f64, size[drop] as f64);
                for &c in &active {
                    if c == keep || c == drop {
                        continue;
                    }
                    let nc = size[c] as f64;
                    let v = ((na + nc) * d.get(c, keep) + (nb + nc) * d.get(c, drop)
                        - nc * best_d)
                        / (na + nb + nc);
                    d.set(c, keep, v.max(0.0));
                }
                size[keep] += size[drop];
                active.retain(|&c| c != drop);
                raw.push((keep, drop, best_d));
                break;
            }
            chain.push(b);
        }
    }

    // Reorder by height and translate slots into node ids.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&x, &y| raw[x].2.total_cmp(&raw[y].2));
    let mut node_of_slot: Vec<usize> = (0..n).collect();
    let mut uf = UnionFind::new(n);
    let mut merges = Vec::<Merge>::with_capacity(n - 1);
    for (step, &ri) in order.iter().enumerate() {
        let (sa, sb, dist) = raw[ri];
        let ra = uf.find(sa);
        let rb = uf.find(sb);
        let (na, nb) = (node_of_slot[ra], node_of_slot[rb]);
        let (left, right) = (na.min(nb), na.max(nb));
        let size_of = |node: usize| if node < n { 1 } else { merges[node - n].size };
        let sz = size_of(left) + size_of(right);
        merges.push(Merge {
            left,
            right,
            height: dist.sqrt(),
            size: sz,
        });
        uf.parent[rb] = ra;
        node_of_slot[ra] = n + step;
    }
    debug_assert!(merges.windows(2).all(|w| w[0].height <= w[1].height));

    Ok(Dendrogram {
        leaf_ids: (0..n).map(|i| i.to_string()).collect(),
        merges,
    })
}

/// Column-wise z-scores (sample sd); constant columns are only centered.
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = points.len() as f64;
    let dim = points[0].len();
    let mut out = points.to_vec();
    for j in 0..dim {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let sd = var.sqrt();
        for p in out.iter_mut() {
            p[j] -= mean;
            if sd > 0.0 {
                p[j] /= sd;
            }
        }
    }
    out
}

pub fn within_cluster_sse(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let dim = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            p.iter()
                .zip(&sums[l])
                .map(|(v, s)| (v - s / counts[l] as f64).powi(2))
                .sum::<f64>()
        })
        .sum()
}
