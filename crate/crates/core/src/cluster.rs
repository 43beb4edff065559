//! Channel grouping: Spearman correlation over the training split,
//! threshold binarization, and deterministic label propagation.

use serde::{Deserialize, Serialize};

use crate::data::SeriesMatrix;
use crate::{Error, Result};

/// Symmetric C×C rank-correlation matrix with unit diagonal.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    values: Vec<f64>,
    n: usize,
}

impl CorrelationMatrix {
    pub fn n_channels(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Undirected channel graph; no self-edges.
#[derive(Debug, Clone)]
pub struct ChannelGraph {
    adj: Vec<bool>,
    n: usize,
}

impl ChannelGraph {
    pub fn new(n: usize) -> ChannelGraph {
        ChannelGraph { adj: vec![false; n * n], n }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i != j {
            self.adj[i * self.n + j] = true;
            self.adj[j * self.n + i] = true;
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.adj[i * self.n + j]
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn edge_count(&self) -> usize {
        let mut count = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Partition of channel indices into prediction groups; group identifiers
/// are the minimum member index of each group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    pub labels: Vec<usize>,
    pub group_count: usize,
}

impl Grouping {
    /// Canonicalizes arbitrary labels to minimum-member-index identifiers.
    pub fn from_labels(labels: Vec<usize>) -> Grouping {
        let n = labels.len();
        let mut canonical = vec![usize::MAX; n];
        for i in 0..n {
            for j in 0..n {
                if labels[j] == labels[i] {
                    canonical[i] = j; // first j with the same label = min member
                    break;
                }
            }
        }
        let mut distinct: Vec<usize> = canonical.clone();
        distinct.sort_unstable();
        distinct.dedup();
        Grouping { labels: canonical, group_count: distinct.len() }
    }

    pub fn n_channels(&self) -> usize {
        self.labels.len()
    }

    /// Groups as sorted member lists, ordered by minimum member.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut ids: Vec<usize> = self.labels.clone();
        ids.sort_unstable();
        ids.dedup();
        ids.iter()
            .map(|&g| (0..self.labels.len()).filter(|&i| self.labels[i] == g).collect())
            .collect()
    }

    /// Index of channel `c`'s group within `groups()` order.
    pub fn group_index(&self, c: usize) -> usize {
        self.group_index_map()[c]
    }

    /// Channel → group-index lookup, one entry per channel.
    pub fn group_index_map(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.labels.clone();
        ids.sort_unstable();
        ids.dedup();
        self.labels
            .iter()
            .map(|l| ids.binary_search(l).unwrap())
            .collect()
    }

    pub fn validate(&self, n_channels: usize) -> Result<()> {
        if self.labels.len() != n_channels {
            return Err(Error::Config(format!(
                "grouping covers {} channels, model has {}",
                self.labels.len(),
                n_channels
            )));
        }
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= n_channels {
                return Err(Error::Config(format!(
                    "grouping label {} for channel {} is out of range",
                    l, i
                )));
            }
            // canonical id must be the min member of its own group
            if self.labels[l] != l || l > i {
                return Err(Error::Config(format!(
                    "grouping label {} for channel {} is not canonical",
                    l, i
                )));
            }
        }
        let mut distinct = self.labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != self.group_count {
            return Err(Error::Config(format!(
                "grouping declares {} groups but labels form {}",
                self.group_count,
                distinct.len()
            )));
        }
        Ok(())
    }
}

/// Average (fractional) ranks; ties share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j hold equal values; 1-based average rank
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of the per-channel rank vectors over the training
/// samples. Constant channels correlate 0 with everything, 1 with themselves.
pub fn spearman_matrix(train: &SeriesMatrix) -> Result<CorrelationMatrix> {
    let c = train.n_channels();
    let t = train.n_steps();
    if t < 2 {
        return Err(Error::Data(format!("spearman needs ≥ 2 samples, got {}", t)));
    }
    let ranks: Vec<Vec<f64>> = (0..c).map(|i| average_ranks(train.channel(i))).collect();
    let stats: Vec<(f64, f64)> = ranks
        .iter()
        .map(|r| {
            let mean = r.iter().sum::<f64>() / t as f64;
            let var = r.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>();
            (mean, var)
        })
        .collect();
    let mut values = vec![0.0; c * c];
    for i in 0..c {
        values[i * c + i] = 1.0;
        for j in i + 1..c {
            let (mi, vi) = stats[i];
            let (mj, vj) = stats[j];
            let r = if vi <= 0.0 || vj <= 0.0 {
                0.0
            } else {
                let cov: f64 = ranks[i]
                    .iter()
                    .zip(&ranks[j])
                    .map(|(&a, &b)| (a - mi) * (b - mj))
                    .sum();
                cov / (vi.sqrt() * vj.sqrt())
            };
            values[i * c + j] = r;
            values[j * c + i] = r;
        }
    }
    Ok(CorrelationMatrix { values, n: c })
}

/// Edge (i, j) present iff corr(i, j) > threshold, strictly.
pub fn threshold_graph(corr: &CorrelationMatrix, threshold: f64) -> Result<ChannelGraph> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {} outside [-1, 1]", threshold)));
    }
    let n = corr.n_channels();
    let mut graph = ChannelGraph::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if corr.get(i, j) > threshold {
                graph.add_edge(i, j);
            }
        }
    }
    Ok(graph)
}

/// Asynchronous label propagation with a fixed ascending sweep order.
///
/// Labels start as the node index. Each sweep replaces a node's label by
/// the most frequent label among its neighbors (ties go to the smallest
/// label; isolated nodes keep theirs), stopping at a fixed point or after
/// `max_iters` sweeps. The result is canonicalized by minimum member index.
pub fn label_propagation(graph: &ChannelGraph, max_iters: usize) -> Grouping {
    let n = graph.n_nodes();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| graph.neighbors(i)).collect();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut counts = vec![0usize; n];
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for i in 0..n {
            if neighbors[i].is_empty() {
                continue;
            }
            for &j in &neighbors[i] {
                counts[labels[j]] += 1;
            }
            let mut best = labels[i];
            let mut best_count = 0;
            for &j in &neighbors[i] {
                let l = labels[j];
                let c = counts[l];
                if c > best_count || (c == best_count && l < best) {
                    best = l;
                    best_count = c;
                }
            }
            for &j in &neighbors[i] {
                counts[labels[j]] = 0;
            }
            if best != labels[i] {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Grouping::from_labels(labels)
}

/// Grouping plus the diagnostics the pipeline reports alongside it.
#[derive(Debug, Clone)]
pub struct GroupingOutcome {
    pub grouping: Grouping,
    pub edge_count: usize,
    pub group_sizes: Vec<usize>,
}

/// spearman_matrix → threshold_graph → label_propagation over the train split.
pub fn build_grouping(train: &SeriesMatrix, threshold: f64) -> Result<GroupingOutcome> {
    let corr = spearman_matrix(train)?;
    let graph = threshold_graph(&corr, threshold)?;
    let grouping = label_propagation(&graph, 100);
    let group_sizes = grouping.groups().iter().map(|g| g.len()).collect();
    Ok(GroupingOutcome { grouping, edge_count: graph.edge_count(), group_sizes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn series(channels: &[Vec<f64>]) -> SeriesMatrix {
        let c = channels.len();
        let t = channels[0].len();
        let mut values = Vec::new();
        for ch in channels {
            values.extend_from_slice(ch);
        }
        let names = (0..c).map(|i| format!("ch{}", i)).collect();
        SeriesMatrix::new(values, c, t, names, "test", "test").unwrap()
    }

    /// Direct rank-difference formula, valid for tie-free data.
    fn spearman_formula(a: &[f64], b: &[f64]) -> f64 {
        let ra = average_ranks(a);
        let rb = average_ranks(b);
        let t = a.len() as f64;
        let d2: f64 = ra.iter().zip(&rb).map(|(&x, &y)| (x - y) * (x - y)).sum();
        1.0 - 6.0 * d2 / (t * (t * t - 1.0))
    }

    #[test]
    fn average_ranks_handles_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        // tied pair shares the mean of ranks 2 and 3
        assert_eq!(average_ranks(&[1.0, 5.0, 5.0, 9.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn monotone_transform_gives_one() {
        let x: Vec<f64> = (0..30).map(|v| (v as f64).exp() / 1e6).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v + 1.0).collect();
        let corr = spearman_matrix(&series(&[x, y])).unwrap();
        assert!((corr.get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_ranks_give_minus_one() {
        let x: Vec<f64> = (0..30).map(|v| v as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| -v).collect();
        let corr = spearman_matrix(&series(&[x, y])).unwrap();
        assert!((corr.get(0, 1) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_rank_difference_formula_on_tie_free_data() {
        let mut rng = Rng::new(31);
        let chans: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..50).map(|_| rng.normal(0.0, 1.0)).collect())
            .collect();
        let s = series(&chans);
        let corr = spearman_matrix(&s).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j {
                    1.0
                } else {
                    spearman_formula(s.channel(i), s.channel(j))
                };
                assert!(
                    (corr.get(i, j) - expected).abs() < 1e-12,
                    "({}, {}): {} vs {}",
                    i,
                    j,
                    corr.get(i, j),
                    expected
                );
            }
        }
    }

    #[test]
    fn constant_channel_correlates_zero() {
        let x: Vec<f64> = (0..20).map(|v| v as f64).collect();
        let k = vec![4.0; 20];
        let corr = spearman_matrix(&series(&[x, k])).unwrap();
        assert_eq!(corr.get(0, 1), 0.0);
        assert_eq!(corr.get(1, 1), 1.0);
    }

    #[test]
    fn symmetric_with_unit_diagonal() {
        let mut rng = Rng::new(32);
        let chans: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..40).map(|_| rng.normal(0.0, 1.0)).collect())
            .collect();
        let corr = spearman_matrix(&series(&chans)).unwrap();
        for i in 0..6 {
            assert_eq!(corr.get(i, i), 1.0);
            for j in 0..6 {
                assert_eq!(corr.get(i, j), corr.get(j, i));
            }
        }
    }

    #[test]
    fn invariant_under_strictly_increasing_transform() {
        let mut rng = Rng::new(33);
        let a: Vec<f64> = (0..60).map(|_| rng.normal(0.0, 1.0)).collect();
        let b: Vec<f64> = (0..60).map(|_| rng.normal(0.0, 1.0)).collect();
        let c1 = spearman_matrix(&series(&[a.clone(), b.clone()])).unwrap();
        let warped: Vec<f64> = a.iter().map(|&v| v.powi(3) + 2.0 * v).collect();
        let c2 = spearman_matrix(&series(&[warped, b])).unwrap();
        assert!((c1.get(0, 1) - c2.get(0, 1)).abs() < 1e-12);
    }

    // ── threshold graph ──────────────────────────────────────────────

    #[test]
    fn threshold_edge_cases() {
        let corr = spearman_matrix(&series(&[
            (0..20).map(|v| v as f64).collect(),
            (0..20).map(|v| v as f64 * 3.0).collect(),
        ]))
        .unwrap();
        // perfectly correlated pair: edge at 0.8, none at 1.0
        let g = threshold_graph(&corr, 0.8).unwrap();
        assert!(g.has_edge(0, 1));
        let g = threshold_graph(&corr, 1.0).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn equality_with_threshold_yields_no_edge() {
        // hand-built matrix with an exact 0.8 entry
        let corr = CorrelationMatrix { values: vec![1.0, 0.8, 0.8, 1.0], n: 2 };
        let g = threshold_graph(&corr, 0.8).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn edges_nested_across_thresholds() {
        let mut rng = Rng::new(34);
        let chans: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..50).map(|_| rng.normal(0.0, 1.0)).collect())
            .collect();
        let corr = spearman_matrix(&series(&chans)).unwrap();
        let lo = threshold_graph(&corr, 0.1).unwrap();
        let hi = threshold_graph(&corr, 0.5).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if hi.has_edge(i, j) {
                    assert!(lo.has_edge(i, j));
                }
            }
        }
    }

    // ── label propagation ────────────────────────────────────────────

    #[test]
    fn single_edge_merges_pair() {
        let mut g = ChannelGraph::new(3);
        g.add_edge(0, 1);
        let grouping = label_propagation(&g, 100);
        assert_eq!(grouping.labels, vec![0, 0, 2]);
        assert_eq!(grouping.group_count, 2);
        assert_eq!(grouping.groups(), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn complete_graph_collapses_to_one_group() {
        let mut g = ChannelGraph::new(4);
        for i in 0..4 {
            for j in i + 1..4 {
                g.add_edge(i, j);
            }
        }
        let grouping = label_propagation(&g, 100);
        assert_eq!(grouping.labels, vec![0, 0, 0, 0]);
        assert_eq!(grouping.group_count, 1);
    }

    #[test]
    fn empty_graph_keeps_singletons() {
        let g = ChannelGraph::new(5);
        let grouping = label_propagation(&g, 100);
        assert_eq!(grouping.labels, vec![0, 1, 2, 3, 4]);
        assert_eq!(grouping.group_count, 5);
    }

    #[test]
    fn deterministic_across_runs() {
        let mut rng = Rng::new(35);
        for _ in 0..20 {
            let n = 8;
            let mut g = ChannelGraph::new(n);
            for i in 0..n {
                for j in i + 1..n {
                    if rng.happens(0.3) {
                        g.add_edge(i, j);
                    }
                }
            }
            let a = label_propagation(&g, 100);
            let b = label_propagation(&g, 100);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn never_merges_disconnected_components() {
        let mut rng = Rng::new(36);
        for _ in 0..50 {
            let n = 10;
            let mut g = ChannelGraph::new(n);
            // edges only within {0..4} and {5..9}
            for i in 0..5 {
                for j in i + 1..5 {
                    if rng.happens(0.5) {
                        g.add_edge(i, j);
                        g.add_edge(i + 5, j + 5);
                    }
                }
            }
            let grouping = label_propagation(&g, 100);
            // labels only travel along edges, so the two halves stay apart
            for i in 0..5 {
                for j in 5..10 {
                    assert_ne!(
                        grouping.labels[i], grouping.labels[j],
                        "channels {} and {} merged across components",
                        i, j
                    );
                }
            }
        }
    }

    #[test]
    fn partition_is_exact() {
        let mut rng = Rng::new(37);
        for _ in 0..30 {
            let n = 12;
            let mut g = ChannelGraph::new(n);
            for i in 0..n {
                for j in i + 1..n {
                    if rng.happens(0.25) {
                        g.add_edge(i, j);
                    }
                }
            }
            let grouping = label_propagation(&g, 100);
            grouping.validate(n).unwrap();
            let total: usize = grouping.groups().iter().map(|g| g.len()).sum();
            assert_eq!(total, n);
        }
    }

    // ── composition ──────────────────────────────────────────────────

    #[test]
    fn identical_channels_plus_noise_forms_two_groups() {
        let mut rng = Rng::new(38);
        let base: Vec<f64> = (0..1000).map(|_| rng.normal(0.0, 1.0)).collect();
        let noise: Vec<f64> = (0..1000).map(|_| rng.normal(0.0, 1.0)).collect();
        let outcome = build_grouping(&series(&[base.clone(), base, noise]), 0.8).unwrap();
        assert_eq!(outcome.grouping.group_count, 2);
        assert_eq!(outcome.grouping.labels[0], outcome.grouping.labels[1]);
        assert_ne!(outcome.grouping.labels[0], outcome.grouping.labels[2]);
    }

    #[test]
    fn threshold_one_gives_all_singletons() {
        let mut rng = Rng::new(39);
        let chans: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..100).map(|_| rng.normal(0.0, 1.0)).collect())
            .collect();
        let outcome = build_grouping(&series(&chans), 1.0).unwrap();
        assert_eq!(outcome.grouping.group_count, 5);
        assert_eq!(outcome.edge_count, 0);
    }

    #[test]
    fn threshold_minus_one_gives_single_group() {
        let mut rng = Rng::new(40);
        let chans: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..100).map(|_| rng.normal(0.0, 1.0)).collect())
            .collect();
        let outcome = build_grouping(&series(&chans), -1.0).unwrap();
        assert_eq!(outcome.grouping.group_count, 1);
        assert_eq!(outcome.edge_count, 10);
    }

    #[test]
    fn canonical_relabeling() {
        let g = Grouping::from_labels(vec![7, 7, 2, 2, 7]);
        assert_eq!(g.labels, vec![0, 0, 2, 2, 0]);
        assert_eq!(g.group_count, 2);
        assert_eq!(g.group_index(0), 0);
        assert_eq!(g.group_index(2), 1);
    }
}
