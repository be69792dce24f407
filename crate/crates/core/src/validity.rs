//! Connectivity validity index, cluster-count selection and agreement
//! metrics between two labelings.

use std::ops::RangeInclusive;
use std::path::Path;

use crate::cluster::{sq_dist, Dendrogram};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_table};
use crate::par;

/// Default neighbor count for the connectivity index.
pub const DEFAULT_NEIGHBORS: usize = 10;

/// `J` nearest other points of every point, nearest first. Equal distances
/// are ordered by point index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborLists {
    pub j: usize,
    pub lists: Vec<Vec<usize>>,
}

impl NeighborLists {
    pub fn compute(points: &[Vec<f64>], j: usize) -> Result<Self> {
        let n = points.len();
        if j == 0 {
            return Err(Error::InvalidArgument("neighbor count J must be >= 1".into()));
        }
        if n <= j {
            return Err(Error::InvalidArgument(format!(
                "connectivity with J = {j} needs more than {j} points, got {n}"
            )));
        }
        let lists = par::map_range(n, |i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&o| o != i)
                .map(|o| (sq_dist(&points[i], &points[o]), o))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(j - 1, cmp);
            cand.truncate(j);
            cand.sort_by(cmp);
            cand.into_iter().map(|(_, o)| o).collect()
        });
        Ok(Self { j, lists })
    }

    /// Connectivity of `labels` over these neighbor lists.
    pub fn connectivity(&self, labels: &[usize]) -> Result<f64> {
        if labels.len() != self.lists.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} points",
                labels.len(),
                self.lists.len()
            )));
        }
        Ok(self
            .lists
            .iter()
            .enumerate()
            .map(|(i, nn)| {
                nn.iter()
                    .enumerate()
                    .filter(|(_, &o)| labels[o] != labels[i])
                    .fold(0.0, |acc, (rank, _)| acc + 1.0 / (rank + 1) as f64)
            })
            .fold(0.0, |acc, c| acc + c))
    }
}

/// Sum over points of `1/j` for each `j`-th nearest neighbor (`j ≤ J`) that
/// falls in a different cluster.
pub fn connectivity(points: &[Vec<f64>], labels: &[usize], j: usize) -> Result<f64> {
    NeighborLists::compute(points, j)?.connectivity(labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityReport {
    /// `(k, connectivity)` in increasing `k`.
    pub values: Vec<(usize, f64)>,
    pub chosen_k: usize,
    pub j: usize,
}

impl ConnectivityReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .values
            .iter()
            .map(|(k, c)| vec![k.to_string(), fmt_f64(*c)])
            .collect();
        write_table(path, &["k", "connectivity"], &rows)
    }
}

/// Cut the dendrogram at every `k` in `k_range` and keep the `k` with the
/// smallest connectivity (smaller `k` on ties).
pub fn select_k(
    points: &[Vec<f64>],
    dendrogram: &Dendrogram,
    k_range: RangeInclusive<usize>,
    j: usize,
) -> Result<ConnectivityReport> {
    let n = points.len();
    if n != dendrogram.n_leaves() {
        return Err(Error::InvalidArgument(format!(
            "{n} points but dendrogram has {} leaves",
            dendrogram.n_leaves()
        )));
    }
    if k_range.is_empty() || *k_range.start() < 2 || *k_range.end() > n.saturating_sub(1) {
        return Err(Error::InvalidArgument(format!(
            "k range {k_range:?} must lie within 2..={}",
            n.saturating_sub(1)
        )));
    }
    let nn = NeighborLists::compute(points, j)?;
    let mut values = Vec::new();
    for k in k_range {
        let labels = dendrogram.cut(k)?.labels;
        values.push((k, nn.connectivity(&labels)?));
    }
    let chosen_k = values
        .iter()
        .fold(None::<(usize, f64)>, |best, &(k, c)| match best {
            Some((_, bc)) if bc <= c => best,
            _ => Some((k, c)),
        })
        .map(|(k, _)| k)
        .expect("nonempty range");
    Ok(ConnectivityReport { values, chosen_k, j })
}

/// Contingency table of two labelings; rows follow `labels_a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn row_totals(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<usize> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols).map(|c| self.counts.iter().map(|r| r[c]).sum()).collect()
    }

    pub fn total(&self) -> usize {
        self.row_totals().iter().sum()
    }

    /// Layout: a `cluster` column naming each row, one column per column
    /// label, then `Total`; the last row holds column totals.
    pub fn write_csv(&self, path: &Path, row_prefix: &str, col_prefix: &str) -> Result<()> {
        let cols = self.counts.first().map_or(0, Vec::len);
        let mut header = vec!["cluster".to_string()];
        header.extend((0..cols).map(|c| format!("{col_prefix}{c}")));
        header.push("Total".into());
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let row_totals = self.row_totals();
        let mut rows: Vec<Vec<String>> = self
            .counts
            .iter()
            .enumerate()
            .map(|(r, counts)| {
                std::iter::once(format!("{row_prefix}{r}"))
                    .chain(counts.iter().map(usize::to_string))
                    .chain(std::iter::once(row_totals[r].to_string()))
                    .collect()
            })
            .collect();
        rows.push(
            std::iter::once("Total".to_string())
                .chain(self.col_totals().iter().map(usize::to_string))
                .chain(std::iter::once(self.total().to_string()))
                .collect(),
        );
        write_table(path, &header_refs, &rows)
    }
}

pub fn confusion_matrix(labels_a: &[usize], labels_b: &[usize]) -> Result<ConfusionMatrix> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::InvalidArgument(format!(
            "labelings differ in length: {} vs {}",
            labels_a.len(),
            labels_b.len()
        )));
    }
    let ra = labels_a.iter().max().map_or(0, |m| m + 1);
    let rb = labels_b.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; rb]; ra];
    for (&a, &b) in labels_a.iter().zip(labels_b) {
        counts[a][b] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// How cluster labels are matched to true classes when scoring agreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMatching {
    /// Compare label values as they are. Cluster labels from
    /// [`Dendrogram::cut`] are numbered by first appearance, so with data
    /// ordered by class this scores cluster `c` against class `c`.
    Direct,
    /// Every cluster is mapped to its majority class; classes may absorb
    /// several clusters.
    ManyToOne,
    /// Best injective pairing of clusters and classes; unpaired points count
    /// as wrong.
    OneToOne,
}

impl LabelMatching {
    pub const ALL: [LabelMatching; 3] = [Self::Direct, Self::ManyToOne, Self::OneToOne];

    pub fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::ManyToOne => "many_to_one",
            Self::OneToOne => "one_to_one",
        }
    }
}

/// Largest number of clusters or classes the one-to-one search enumerates.
pub const MAX_MATCHED_LABELS: usize = 8;

/// Percentage of points whose cluster agrees with their true class under
/// `matching`.
pub fn percent_correct(true_labels: &[usize], cluster_labels: &[usize], matching: LabelMatching) -> Result<f64> {
    let cm = confusion_matrix(cluster_labels, true_labels)?;
    let n = true_labels.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty labeling".into()));
    }
    let matched = match matching {
        LabelMatching::Direct => true_labels
            .iter()
            .zip(cluster_labels)
            .filter(|(t, c)| t == c)
            .count(),
        LabelMatching::ManyToOne => cm
            .counts
            .iter()
            .map(|row| row.iter().copied().max().unwrap_or(0))
            .sum(),
        LabelMatching::OneToOne => {
            let rows = cm.counts.len();
            let cols = cm.counts.first().map_or(0, Vec::len);
            if rows > MAX_MATCHED_LABELS || cols > MAX_MATCHED_LABELS {
                return Err(Error::InvalidArgument(format!(
                    "one-to-one matching supports at most {MAX_MATCHED_LABELS} labels per side"
                )));
            }
            best_injection(&cm.counts, 0, &mut vec![false; cols])
        }
    };
    Ok(100.0 * matched as f64 / n as f64)
}

fn best_injection(counts: &[Vec<usize>], row: usize, used: &mut [bool]) -> usize {
    if row == counts.len() {
        return 0;
    }
    // Leaving this cluster unmatched is always allowed.
    let mut best = best_injection(counts, row + 1, used);
    for c in 0..used.len() {
        if !used[c] && counts[row][c] > 0 {
            used[c] = true;
            best = best.max(counts[row][c] + best_injection(counts, row + 1, used));
            used[c] = false;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_connectivity_is_zero() {
        let pts: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64]).collect();
        assert_eq!(connectivity(&pts, &[0; 15], 10).unwrap(), 0.0);
    }

    #[test]
    fn too_few_points_is_error() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        assert!(connectivity(&pts, &[0; 10], 10).is_err());
    }

    #[test]
    fn confusion_basics() {
        let cm = confusion_matrix(&[0, 1, 1], &[0, 1, 1]).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0], vec![0, 2]]);
        let cm = confusion_matrix(&[0; 4], &[1; 4]).unwrap();
        assert_eq!(cm.counts, vec![vec![0, 4]]);
        assert!(confusion_matrix(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn percent_correct_perfect_and_collapsed() {
        let truth: Vec<usize> = [(0, 1000), (1, 500), (2, 450), (3, 850)]
            .iter()
            .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
            .collect();
        for m in LabelMatching::ALL {
            assert_eq!(percent_correct(&truth, &truth, m).unwrap(), 100.0);
            let p = percent_correct(&truth, &vec![0; truth.len()], m).unwrap();
            assert!((p - 35.714).abs() < 1e-3, "{m:?}: {p}");
        }
    }

    #[test]
    fn select_k_ties_go_to_smaller_k() {
        let pts = vec![vec![1.0, 1.0]; 12];
        let d = crate::cluster::ward_linkage(&pts).unwrap();
        let r = select_k(&pts, &d, 2..=6, 10).unwrap();
        assert_eq!(r.chosen_k, 2);
    }
}
