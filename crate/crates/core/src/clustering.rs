//! Ward clustering of nodes and cluster-wise learning and reconstruction.
//!
//! Each node is the point in `ℝ^P` formed by its time series. Splitting the
//! nodes into clusters and learning one graph per cluster shrinks every
//! optimization problem; the per-cluster Laplacians sit on the diagonal of a
//! block-diagonal Laplacian with no edges between clusters.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::StandardizationParams;
use crate::error::{Error, Result};
use crate::graph::{GraphSignal, LaplacianMatrix, SamplingPattern};
use crate::learning::{learn_graph, GraphLearnResult, SmoothLearnConfig};
use crate::linalg;
use crate::reconstruction::{GraphModel, MethodSpec};

/// A partition of the nodes into `c` nonempty clusters.
///
/// Serialized as `{"c": …, "labels": […]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AssignmentDoc", into = "AssignmentDoc")]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    c: usize,
    member_lists: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentDoc {
    c: usize,
    labels: Vec<usize>,
}

impl TryFrom<AssignmentDoc> for ClusterAssignment {
    type Error = Error;

    fn try_from(doc: AssignmentDoc) -> Result<Self> {
        Self::new(doc.labels, doc.c)
    }
}

impl From<ClusterAssignment> for AssignmentDoc {
    fn from(a: ClusterAssignment) -> Self {
        Self { c: a.c, labels: a.labels }
    }
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, c: usize) -> Result<Self> {
        let n = labels.len();
        if c == 0 || c > n {
            return Err(Error::InvalidClusterCount { c, n });
        }
        let mut member_lists = vec![Vec::new(); c];
        for (node, &label) in labels.iter().enumerate() {
            if label >= c {
                return Err(Error::InvalidConfig(format!("label {label} of node {node} is not below c = {c}")));
            }
            member_lists[label].push(node);
        }
        if let Some(empty) = member_lists.iter().position(Vec::is_empty) {
            return Err(Error::InvalidConfig(format!("cluster {empty} is empty")));
        }
        Ok(Self { labels, c, member_lists })
    }

    /// Every node in one cluster.
    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![0; n], 1)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.member_lists[cluster]
    }

    pub fn member_lists(&self) -> &[Vec<usize>] {
        &self.member_lists
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// One agglomeration step: slot `b` merged into slot `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Merge {
    a: usize,
    b: usize,
}

/// Full Ward merge sequence over the columns of `x`.
///
/// Distances follow the Lance–Williams recurrence on squared Euclidean
/// distances. A cluster lives in the slot of its smallest member, so scanning
/// pairs in index order breaks ties towards the smallest node indices.
fn ward_merges(x: &DMatrix<f64>) -> Vec<Merge> {
    let n = x.ncols();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (x.column(i) - x.column(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if active[j] && d[(i, j)] < best.0 {
                    best = (d[(i, j)], i, j);
                }
            }
        }
        let (dab, a, b) = best;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nk = size[k] as f64;
            let v = ((na + nk) * d[(a, k)] + (nb + nk) * d[(b, k)] - nk * dab) / (na + nb + nk);
            d[(a, k)] = v;
            d[(k, a)] = v;
        }
        active[b] = false;
        size[a] += size[b];
        merges.push(Merge { a, b });
    }
    merges
}

fn cut(n: usize, merges: &[Merge], c: usize) -> Result<ClusterAssignment> {
    let mut slot: Vec<usize> = (0..n).collect();
    for m in &merges[..n - c] {
        for s in slot.iter_mut() {
            if *s == m.b {
                *s = m.a;
            }
        }
    }
    let mut roots: Vec<usize> = slot.clone();
    roots.sort_unstable();
    roots.dedup();
    let labels = slot
        .iter()
        .map(|s| roots.binary_search(s).expect("slot is a root"))
        .collect();
    ClusterAssignment::new(labels, c)
}

fn check_points(x: &DMatrix<f64>) -> Result<()> {
    for column in 0..x.ncols() {
        for row in 0..x.nrows() {
            if !x[(row, column)].is_finite() {
                return Err(Error::MissingData { row, column });
            }
        }
    }
    Ok(())
}

/// Ward clustering of the node columns of `x` into `c` clusters.
///
/// Labels are numbered by each cluster's smallest node index.
pub fn hierarchical_cluster(x: &DMatrix<f64>, c: usize) -> Result<ClusterAssignment> {
    let n = x.ncols();
    if c == 0 || c > n {
        return Err(Error::InvalidClusterCount { c, n });
    }
    check_points(x)?;
    cut(n, &ward_merges(x), c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub c: usize,
    /// Calinski–Harabasz index; `+∞` when the within-cluster dispersion is 0.
    pub calinski_harabasz: f64,
    pub degenerate: bool,
}

/// Calinski–Harabasz index of a partition of the columns of `x`.
pub fn calinski_harabasz(x: &DMatrix<f64>, assignment: &ClusterAssignment) -> (f64, bool) {
    let n = x.ncols();
    let c = assignment.c();
    let overall = x.column_mean();
    let mut between = 0.0;
    let mut within = 0.0;
    for members in assignment.member_lists() {
        let cols = linalg::select(x, &(0..x.nrows()).collect::<Vec<_>>(), members);
        let centroid = cols.column_mean();
        between += members.len() as f64 * (&centroid - &overall).norm_squared();
        for col in cols.column_iter() {
            within += (col - &centroid).norm_squared();
        }
    }
    if within <= 0.0 {
        return (f64::INFINITY, true);
    }
    ((between / (c - 1) as f64) / (within / (n - c) as f64), false)
}

/// Calinski–Harabasz scores of the Ward partitions for each `c` in `c_range`.
pub fn score_cluster_count(x: &DMatrix<f64>, c_range: &[usize]) -> Result<Vec<ClusterScore>> {
    let n = x.ncols();
    if c_range.is_empty() {
        return Err(Error::InvalidConfig("empty cluster-count range".into()));
    }
    if let Some(&c) = c_range.iter().find(|&&c| c < 2 || c + 1 > n) {
        return Err(Error::InvalidClusterCount { c, n });
    }
    check_points(x)?;
    let merges = ward_merges(x);
    c_range
        .iter()
        .map(|&c| {
            let assignment = cut(n, &merges, c)?;
            let (calinski_harabasz, degenerate) = calinski_harabasz(x, &assignment);
            Ok(ClusterScore {
                c,
                calinski_harabasz,
                degenerate,
            })
        })
        .collect()
}

/// `1 − largest cluster / N`.
pub fn problem_size_reduction(assignment: &ClusterAssignment) -> f64 {
    let largest = assignment.member_lists().iter().map(Vec::len).max().unwrap_or(0);
    1.0 - largest as f64 / assignment.n() as f64
}

/// Places per-cluster Laplacians on the diagonal under the original node order.
pub fn assemble_block_diagonal(blocks: &[LaplacianMatrix], assignment: &ClusterAssignment) -> Result<LaplacianMatrix> {
    if blocks.len() != assignment.c() {
        return Err(Error::DimensionMismatch {
            expected: assignment.c(),
            got: blocks.len(),
        });
    }
    let n = assignment.n();
    let mut l = DMatrix::zeros(n, n);
    for (block, members) in blocks.iter().zip(assignment.member_lists()) {
        if block.n() != members.len() {
            return Err(Error::DimensionMismatch {
                expected: members.len(),
                got: block.n(),
            });
        }
        for (a, &i) in members.iter().enumerate() {
            for (b, &j) in members.iter().enumerate() {
                l[(i, j)] = block.matrix()[(a, b)];
            }
        }
    }
    LaplacianMatrix::new(l)
}

#[derive(Debug, Clone)]
pub struct ClusterwiseGraph {
    /// Per-cluster learning result; `None` for singleton clusters.
    pub results: Vec<Option<GraphLearnResult>>,
    /// Per-cluster Laplacians, 1×1 zero for singletons.
    pub blocks: Vec<LaplacianMatrix>,
    /// Block-diagonal Laplacian over all nodes.
    pub laplacian: LaplacianMatrix,
    /// Clusters of a single node; their node cannot be reconstructed.
    pub singletons: Vec<usize>,
}

/// Learns one graph per cluster from the columns of `x` it owns.
///
/// `configs` holds one configuration per cluster.
pub fn clusterwise_learn(
    x: &DMatrix<f64>,
    assignment: &ClusterAssignment,
    configs: &[SmoothLearnConfig],
) -> Result<ClusterwiseGraph> {
    if x.ncols() != assignment.n() {
        return Err(Error::DimensionMismatch {
            expected: assignment.n(),
            got: x.ncols(),
        });
    }
    if configs.len() != assignment.c() {
        return Err(Error::DimensionMismatch {
            expected: assignment.c(),
            got: configs.len(),
        });
    }
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let outcomes: Vec<Result<Option<GraphLearnResult>>> = assignment
        .member_lists()
        .par_iter()
        .zip(configs.par_iter())
        .enumerate()
        .map(|(cluster, (members, cfg))| {
            if members.len() == 1 {
                return Ok(None);
            }
            let sub = linalg::select(x, &rows, members);
            learn_graph(&sub, cfg).map(Some).map_err(|e| Error::ClusterLearning {
                cluster,
                source: Box::new(e),
            })
        })
        .collect();

    let mut results = Vec::with_capacity(outcomes.len());
    let mut blocks = Vec::with_capacity(outcomes.len());
    let mut singletons = Vec::new();
    for (cluster, outcome) in outcomes.into_iter().enumerate() {
        let result = outcome?;
        match &result {
            Some(r) => blocks.push(r.laplacian.clone()),
            None => {
                log::warn!("cluster {cluster} is a singleton; its node cannot be reconstructed");
                singletons.push(cluster);
                blocks.push(LaplacianMatrix::zeros(1));
            }
        }
        results.push(result);
    }
    let laplacian = assemble_block_diagonal(&blocks, assignment)?;
    Ok(ClusterwiseGraph {
        results,
        blocks,
        laplacian,
        singletons,
    })
}

/// Completes a new sample cluster by cluster.
///
/// `models[i]` and `methods[i]` belong to cluster `i` and are indexed in the
/// cluster's own node order. The sample is in original units; when `params`
/// is given it is standardized before reconstruction and the result mapped
/// back. Observed entries are returned unchanged.
pub fn clusterwise_reconstruct(
    models: &[GraphModel],
    assignment: &ClusterAssignment,
    methods: &[MethodSpec],
    signal: &GraphSignal,
    params: Option<&StandardizationParams>,
) -> Result<Vec<f64>> {
    let c = assignment.c();
    if models.len() != c || methods.len() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            got: if models.len() != c { models.len() } else { methods.len() },
        });
    }
    if signal.len() != assignment.n() {
        return Err(Error::DimensionMismatch {
            expected: assignment.n(),
            got: signal.len(),
        });
    }
    let standardized = match params {
        Some(p) => p.standardize_sample(&signal.values)?,
        None => signal.values.clone(),
    };
    let mut filled = standardized.clone();
    let mut touched = vec![false; signal.len()];

    for (cluster, members) in assignment.member_lists().iter().enumerate() {
        let mask: Vec<bool> = members.iter().map(|&i| signal.mask[i]).collect();
        if mask.iter().all(|&m| m) {
            continue;
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::ClusterFullyUnobserved { cluster });
        }
        let model = &models[cluster];
        if model.n() != members.len() {
            return Err(Error::DimensionMismatch {
                expected: members.len(),
                got: model.n(),
            });
        }
        let pattern = SamplingPattern::from_mask(&mask)?;
        let fitted = model.fit(&methods[cluster], &pattern)?;
        let observed: Vec<f64> = pattern.observed().iter().map(|&a| standardized[members[a]]).collect();
        let values = fitted.reconstruct(&observed)?;
        for (&a, v) in pattern.unobserved().iter().zip(values) {
            filled[members[a]] = v;
            touched[members[a]] = true;
        }
    }

    let mut out = match params {
        Some(p) => p.unstandardize_sample(&filled)?,
        None => filled,
    };
    // keep observed readings bit-exact
    for (i, v) in out.iter_mut().enumerate() {
        if !touched[i] {
            *v = signal.values[i];
        }
    }
    Ok(out)
}
