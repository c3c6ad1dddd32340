//! Error metrics, k-fold cross-validation over the joint graph and
//! reconstruction grid, the availability sweep and the drift simulation.
//!
//! Every fold standardizes with training-row statistics, learns its graph on
//! the training rows, reconstructs each node of the test rows from all other
//! nodes, and scores the reconstruction in original units. Per-node scores
//! are averaged over nodes, then over folds.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{problem_size_reduction, ClusterAssignment};
use crate::covariance::{empirical_covariance, graphical_lasso, precision_to_adjacency, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::data::{StandardizationParams, TimeSeriesMatrix};
use crate::error::{Error, Result};
use crate::graph::{edge_set, SamplingPattern, DEFAULT_EDGE_THRESHOLD};
use crate::learning::{learn_graph, SmoothLearnConfig};
use crate::linalg;
use crate::reconstruction::{GraphModel, KernelMatrix, MethodKind, MethodSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when `y_true` is constant.
    pub r2: Option<f64>,
    pub n_points: usize,
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<MetricReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    let n = y_true.len();
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let count = n as f64;
    let mean = y_true.iter().sum::<f64>() / count;
    let mut sse = 0.0;
    let mut sae = 0.0;
    let mut sst = 0.0;
    for (t, p) in y_true.iter().zip(y_pred) {
        sse += (t - p).powi(2);
        sae += (t - p).abs();
        sst += (t - mean).powi(2);
    }
    let constant = y_true.iter().all(|&v| v == y_true[0]);
    Ok(MetricReport {
        rmse: (sse / count).sqrt(),
        mae: sae / count,
        r2: if constant { None } else { Some(1.0 - sse / sst) },
        n_points: n,
    })
}

/// How rows are dealt into folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldScheme {
    /// Seeded shuffle, then contiguous chunks.
    #[default]
    Shuffled,
    /// Contiguous blocks of consecutive rows.
    Temporal,
}

/// `k` disjoint folds covering `0..p`; the first `p mod k` folds hold one
/// extra row. Each fold is sorted.
pub fn kfold_split(p: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    kfold_split_with(p, k, seed, FoldScheme::Shuffled)
}

pub fn kfold_split_with(p: usize, k: usize, seed: u64, scheme: FoldScheme) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > p {
        return Err(Error::InvalidConfig(format!("fold count {k} must lie in [2, {p}]")));
    }
    let mut order: Vec<usize> = (0..p).collect();
    if scheme == FoldScheme::Shuffled {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let (base, extra) = (p / k, p % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// `n` points spaced evenly in log scale between `lo` and `hi`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// Candidate hyperparameters. Only the lists a method reads must be nonempty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub ks: Vec<usize>,
    pub mus: Vec<f64>,
    pub sigma2s: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl HyperGrid {
    pub fn default_for(n: usize) -> Self {
        Self {
            alphas: logspace(1e-2, 1e2, 8),
            betas: logspace(1e-2, 1e2, 8),
            ks: (1..=n.saturating_sub(1).clamp(1, 20)).collect(),
            mus: logspace(1e-4, 1.0, 6),
            sigma2s: logspace(1e-2, 10.0, 6),
            lambdas: logspace(1e-3, 1.0, 10),
        }
    }

    pub fn validate(&self, kind: MethodKind) -> Result<()> {
        fn positive(name: &str, values: &[f64]) -> Result<()> {
            if values.is_empty() {
                return Err(Error::InvalidConfig(format!("grid list {name} is empty")));
            }
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidConfig(format!("grid list {name} holds non-positive value {v}")));
            }
            Ok(())
        }
        if kind.uses_laplacian() {
            positive("alpha", &self.alphas)?;
            positive("beta", &self.betas)?;
        }
        match kind {
            MethodKind::LapInt => {}
            MethodKind::Gsp => {
                if self.ks.is_empty() || self.ks.contains(&0) {
                    return Err(Error::InvalidConfig("grid list k must be nonempty with k >= 1".into()));
                }
            }
            MethodKind::KrrDiff => {
                positive("mu", &self.mus)?;
                positive("sigma2", &self.sigma2s)?;
            }
            MethodKind::KrrCov => {
                positive("mu", &self.mus)?;
                positive("lambda", &self.lambdas)?;
            }
        }
        Ok(())
    }

    fn graph_params(&self, kind: MethodKind) -> Vec<GraphParams> {
        if kind == MethodKind::KrrCov {
            self.lambdas.iter().map(|&lambda| GraphParams::Glasso { lambda }).collect()
        } else {
            self.alphas
                .iter()
                .flat_map(|&alpha| self.betas.iter().map(move |&beta| GraphParams::Smooth { alpha, beta }))
                .collect()
        }
    }

    fn method_specs(&self, kind: MethodKind) -> Vec<MethodSpec> {
        match kind {
            MethodKind::LapInt => vec![MethodSpec::lap_int()],
            MethodKind::Gsp => self.ks.iter().map(|&k| MethodSpec::gsp(k)).collect(),
            MethodKind::KrrDiff => self
                .mus
                .iter()
                .flat_map(|&mu| self.sigma2s.iter().map(move |&s| MethodSpec::krr_diff(mu, s)))
                .collect(),
            MethodKind::KrrCov => self.mus.iter().map(|&mu| MethodSpec::krr_cov(mu)).collect(),
        }
    }
}

/// How a fold's graph is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphParams {
    Smooth { alpha: f64, beta: f64 },
    Glasso { lambda: f64 },
}

/// One grid cell's hyperparameters. Unused entries are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

impl CellParams {
    fn from_parts(graph: GraphParams, spec: &MethodSpec) -> Self {
        let (alpha, beta, lambda) = match graph {
            GraphParams::Smooth { alpha, beta } => (Some(alpha), Some(beta), None),
            GraphParams::Glasso { lambda } => (None, None, Some(lambda)),
        };
        Self {
            alpha,
            beta,
            lambda,
            k: spec.k,
            mu: spec.mu,
            sigma2: spec.sigma2,
        }
    }

    pub fn graph(&self, kind: MethodKind) -> Result<GraphParams> {
        let missing = |name: &str| Error::InvalidConfig(format!("{kind} needs hyperparameter {name}"));
        if kind == MethodKind::KrrCov {
            Ok(GraphParams::Glasso {
                lambda: self.lambda.ok_or_else(|| missing("lambda"))?,
            })
        } else {
            Ok(GraphParams::Smooth {
                alpha: self.alpha.ok_or_else(|| missing("alpha"))?,
                beta: self.beta.ok_or_else(|| missing("beta"))?,
            })
        }
    }

    pub fn method(&self, kind: MethodKind) -> Result<MethodSpec> {
        let spec = MethodSpec {
            kind,
            k: self.k,
            mu: self.mu,
            sigma2: self.sigma2,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn sort_key(&self) -> [f64; 6] {
        let f = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
        [
            f(self.alpha),
            f(self.beta),
            f(self.lambda),
            f(self.k.map(|k| k as f64)),
            f(self.mu),
            f(self.sigma2),
        ]
    }
}

/// Options shared by the CV-based procedures.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub scheme: FoldScheme,
    /// Greedy mode: fix the graph whose edge density is closest to this
    /// target, then search only the reconstruction hyperparameters.
    pub greedy_density: Option<f64>,
    /// Stopping rules for graph learning; `alpha`/`beta` are overridden.
    pub learn: SmoothLearnConfig,
    pub glasso_tol: f64,
    pub glasso_max_iters: usize,
    /// Weights at or below this do not count as edges.
    pub edge_threshold: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            scheme: FoldScheme::Shuffled,
            greedy_density: None,
            learn: SmoothLearnConfig::new(1.0, 1.0).expect("valid defaults"),
            glasso_tol: DEFAULT_TOL,
            glasso_max_iters: DEFAULT_MAX_ITERS,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
        }
    }
}

pub const DEFAULT_GREEDY_DENSITY: f64 = 0.25;

/// Graph learned from one fold's training rows.
#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub params: StandardizationParams,
    pub model: GraphModel,
    pub edges: usize,
    /// Smooth learning: alternation converged. Glasso folds always converge
    /// (non-convergence is an error).
    pub converged: bool,
}

/// Standardizes `x` with the statistics of `train_rows` and learns a graph
/// from those rows only.
pub fn train_fold(x: &DMatrix<f64>, train_rows: &[usize], graph: &GraphParams, opts: &CvOptions) -> Result<TrainedFold> {
    let params = StandardizationParams::fit_rows(x, train_rows)?;
    let all: Vec<usize> = (0..x.ncols()).collect();
    let z = params.standardize(&linalg::select(x, train_rows, &all))?;
    match *graph {
        GraphParams::Smooth { alpha, beta } => {
            let cfg = SmoothLearnConfig {
                alpha,
                beta,
                ..opts.learn.clone()
            };
            let learned = learn_graph(&z, &cfg)?;
            let edges = edge_set(&learned.laplacian.weights(), opts.edge_threshold).len();
            Ok(TrainedFold {
                params,
                model: GraphModel::from_laplacian(learned.laplacian)?,
                edges,
                converged: learned.converged,
            })
        }
        GraphParams::Glasso { lambda } => {
            let s = empirical_covariance(&z)?;
            let est = graphical_lasso(&s, lambda, opts.glasso_tol, opts.glasso_max_iters)?;
            if !est.converged {
                return Err(Error::SolveFailure(format!("graphical lasso did not converge at lambda = {lambda}")));
            }
            let edges = edge_set(&precision_to_adjacency(&est.theta, opts.edge_threshold)?, 0.0).len();
            Ok(TrainedFold {
                params,
                model: GraphModel::from_covariance(est.kernel()?),
                edges,
                converged: true,
            })
        }
    }
}

fn method_kernel(model: &GraphModel, spec: &MethodSpec) -> Result<Option<KernelMatrix>> {
    match spec.kind {
        MethodKind::KrrDiff | MethodKind::KrrCov => model.kernel(spec).map(Some),
        _ => Ok(None),
    }
}

/// Reconstructs the `unobserved` columns of `x` at `rows`, in original units.
fn predict(
    fold: &TrainedFold,
    spec: &MethodSpec,
    kernel: Option<&KernelMatrix>,
    x: &DMatrix<f64>,
    rows: &[usize],
    unobserved: &[usize],
) -> Result<DMatrix<f64>> {
    let n = x.ncols();
    let pattern = SamplingPattern::with_unobserved(n, unobserved)?;
    let fitted = match kernel {
        Some(k) => fold.model.fit_with_kernel(k, spec, &pattern)?,
        None => fold.model.fit(spec, &pattern)?,
    };
    let observed = pattern.observed();
    let x_m = linalg::select(x, rows, observed);
    let z_m = fold.params.select(observed).standardize(&x_m)?;
    let z_u = fitted.reconstruct_rows(&z_m)?;
    fold.params.select(pattern.unobserved()).unstandardize(&z_u)
}

/// Per-node reports for a joint reconstruction of `unobserved`.
fn score_pattern(
    fold: &TrainedFold,
    spec: &MethodSpec,
    kernel: Option<&KernelMatrix>,
    x: &DMatrix<f64>,
    rows: &[usize],
    unobserved: &[usize],
) -> Result<Vec<MetricReport>> {
    let mut sorted = unobserved.to_vec();
    sorted.sort_unstable();
    let pred = predict(fold, spec, kernel, x, rows, &sorted)?;
    sorted
        .iter()
        .enumerate()
        .map(|(c, &node)| {
            let truth: Vec<f64> = rows.iter().map(|&r| x[(r, node)]).collect();
            metrics(&truth, pred.column(c).as_slice())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Averages {
    rmse: f64,
    mae: f64,
    r2: Option<f64>,
}

fn average(reports: &[MetricReport]) -> Averages {
    let count = reports.len() as f64;
    let r2s: Vec<f64> = reports.iter().filter_map(|r| r.r2).collect();
    Averages {
        rmse: reports.iter().map(|r| r.rmse).sum::<f64>() / count,
        mae: reports.iter().map(|r| r.mae).sum::<f64>() / count,
        r2: (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64),
    }
}

/// Leave-one-node-out score of one method on one fold's test rows.
fn leave_one_out(fold: &TrainedFold, spec: &MethodSpec, x: &DMatrix<f64>, rows: &[usize]) -> Result<Averages> {
    let kernel = method_kernel(&fold.model, spec)?;
    let mut reports = Vec::with_capacity(x.ncols());
    for node in 0..x.ncols() {
        reports.extend(score_pattern(fold, spec, kernel.as_ref(), x, rows, &[node])?);
    }
    Ok(average(&reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldDetail {
    pub fold: usize,
    pub rmse: f64,
    pub mae: f64,
    pub r2: Option<f64>,
    pub edges: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub params: CellParams,
    pub mean_rmse: Option<f64>,
    pub mean_mae: Option<f64>,
    pub mean_r2: Option<f64>,
    pub mean_edges: Option<f64>,
    pub folds: Vec<FoldDetail>,
    /// Why the cell has no score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStage {
    pub target_density: f64,
    pub params: CellParams,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub method: MethodKind,
    pub folds: usize,
    pub seed: u64,
    pub scheme: FoldScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greedy: Option<GreedyStage>,
    pub cells: Vec<CvCell>,
    /// Index of the selected cell.
    pub best: usize,
}

impl CvResult {
    pub fn best_cell(&self) -> &CvCell {
        &self.cells[self.best]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "method", "alpha", "beta", "lambda", "k", "mu", "sigma2", "mean_rmse", "mean_mae", "mean_r2", "mean_edges",
            "skipped", "best",
        ])?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for (i, cell) in self.cells.iter().enumerate() {
            let p = &cell.params;
            wtr.write_record([
                self.method.as_str().to_string(),
                opt(p.alpha),
                opt(p.beta),
                opt(p.lambda),
                p.k.map(|k| k.to_string()).unwrap_or_default(),
                opt(p.mu),
                opt(p.sigma2),
                opt(cell.mean_rmse),
                opt(cell.mean_mae),
                opt(cell.mean_r2),
                opt(cell.mean_edges),
                cell.skipped.clone().unwrap_or_default(),
                (i == self.best).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, json_path: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(json_path, self.to_json()?)?;
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(csv_path)?))
    }
}

fn check_complete(x: &DMatrix<f64>) -> Result<()> {
    for column in 0..x.ncols() {
        for row in 0..x.nrows() {
            if !x[(row, column)].is_finite() {
                return Err(Error::MissingData { row, column });
            }
        }
    }
    Ok(())
}

fn complement(p: usize, rows: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; p];
    for &r in rows {
        keep[r] = false;
    }
    (0..p).filter(|&r| keep[r]).collect()
}

/// Greedy first stage: the graph hyperparameters whose graph, learned on all
/// rows, has edge density closest to `target`.
fn greedy_graph(x: &DMatrix<f64>, kind: MethodKind, grid: &HyperGrid, target: f64, opts: &CvOptions) -> Result<(GraphParams, GreedyStage)> {
    let n = x.ncols();
    let pairs = (n * (n - 1) / 2).max(1) as f64;
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let candidates = grid.graph_params(kind);
    let densities: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|g| train_fold(x, &rows, g, opts).ok().map(|t| t.edges as f64 / pairs))
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for (i, d) in densities.iter().enumerate() {
        if let Some(d) = d {
            let gap = (d - target).abs();
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, i));
            }
        }
    }
    let (_, i) = best.ok_or(Error::AllCellsFailed)?;
    let graph = candidates[i];
    let params = CellParams::from_parts(graph, &MethodSpec::lap_int());
    Ok((
        graph,
        GreedyStage {
            target_density: target,
            params: CellParams {
                k: None,
                mu: None,
                sigma2: None,
                ..params
            },
            density: densities[i].unwrap_or(f64::NAN),
        },
    ))
}

/// Cross-validates `kind` over `grid` on the complete matrix `x`.
///
/// A cell whose graph cannot be learned on some fold, or whose method cannot
/// be fitted, is kept with `skipped` set. The selected cell minimizes mean
/// RMSE, then mean edge count, then its hyperparameters lexicographically.
pub fn cross_validate_matrix(x: &DMatrix<f64>, kind: MethodKind, grid: &HyperGrid, opts: &CvOptions) -> Result<CvResult> {
    grid.validate(kind)?;
    check_complete(x)?;
    let (p, n) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let folds = kfold_split_with(p, opts.folds, opts.seed, opts.scheme)?;

    let (graphs, greedy) = match opts.greedy_density {
        Some(target) => {
            let (graph, stage) = greedy_graph(x, kind, grid, target, opts)?;
            (vec![graph], Some(stage))
        }
        None => (grid.graph_params(kind), None),
    };
    let specs = grid.method_specs(kind);

    let tasks: Vec<(usize, usize)> = (0..graphs.len())
        .flat_map(|g| (0..folds.len()).map(move |f| (g, f)))
        .collect();
    type SpecOutcome = std::result::Result<Averages, String>;
    let outcomes: Vec<std::result::Result<(usize, bool, Vec<SpecOutcome>), String>> = tasks
        .par_iter()
        .map(|&(g, f)| {
            let test = &folds[f];
            let train = complement(p, test);
            let fold = train_fold(x, &train, &graphs[g], opts).map_err(|e| e.to_string())?;
            let scores = specs
                .iter()
                .map(|spec| leave_one_out(&fold, spec, x, test).map_err(|e| e.to_string()))
                .collect();
            Ok((fold.edges, fold.converged, scores))
        })
        .collect();

    let mut cells = Vec::with_capacity(graphs.len() * specs.len());
    for (g, graph) in graphs.iter().enumerate() {
        let per_fold = &outcomes[g * folds.len()..(g + 1) * folds.len()];
        for (s, spec) in specs.iter().enumerate() {
            let params = CellParams::from_parts(*graph, spec);
            let mut details = Vec::with_capacity(folds.len());
            let mut skipped = None;
            for (f, outcome) in per_fold.iter().enumerate() {
                match outcome {
                    Err(e) => {
                        skipped = Some(format!("fold {f}: {e}"));
                        break;
                    }
                    Ok((edges, converged, scores)) => match &scores[s] {
                        Err(e) => {
                            skipped = Some(format!("fold {f}: {e}"));
                            break;
                        }
                        Ok(a) => details.push(FoldDetail {
                            fold: f,
                            rmse: a.rmse,
                            mae: a.mae,
                            r2: a.r2,
                            edges: *edges,
                            converged: *converged,
                        }),
                    },
                }
            }
            let cell = if let Some(reason) = skipped {
                CvCell {
                    params,
                    mean_rmse: None,
                    mean_mae: None,
                    mean_r2: None,
                    mean_edges: None,
                    folds: Vec::new(),
                    skipped: Some(reason),
                }
            } else {
                let count = details.len() as f64;
                let r2s: Vec<f64> = details.iter().filter_map(|d| d.r2).collect();
                CvCell {
                    params,
                    mean_rmse: Some(details.iter().map(|d| d.rmse).sum::<f64>() / count),
                    mean_mae: Some(details.iter().map(|d| d.mae).sum::<f64>() / count),
                    mean_r2: (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64),
                    mean_edges: Some(details.iter().map(|d| d.edges as f64).sum::<f64>() / count),
                    folds: details,
                    skipped: None,
                }
            };
            cells.push(cell);
        }
    }

    let best = select_best(&cells).ok_or(Error::AllCellsFailed)?;
    Ok(CvResult {
        method: kind,
        folds: opts.folds,
        seed: opts.seed,
        scheme: opts.scheme,
        greedy,
        cells,
        best,
    })
}

fn select_best(cells: &[CvCell]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, cell) in cells.iter().enumerate() {
        let (Some(rmse), Some(edges)) = (cell.mean_rmse, cell.mean_edges) else {
            continue;
        };
        let better = match best {
            None => true,
            Some(b) => {
                let other = &cells[b];
                let (orm, oed) = (other.mean_rmse.unwrap_or(f64::INFINITY), other.mean_edges.unwrap_or(f64::INFINITY));
                rmse.total_cmp(&orm)
                    .then(edges.total_cmp(&oed))
                    .then_with(|| {
                        let (a, b) = (cell.params.sort_key(), other.params.sort_key());
                        a.iter().zip(&b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .is_lt()
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// [`cross_validate_matrix`] on a complete [`TimeSeriesMatrix`].
pub fn cross_validate(x: &TimeSeriesMatrix, kind: MethodKind, grid: &HyperGrid, opts: &CvOptions) -> Result<CvResult> {
    cross_validate_matrix(x.complete_values()?, kind, grid, opts)
}

/// Cluster-wise cross-validation: each cluster with two or more nodes is
/// cross-validated on its own columns with its own hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterwiseCv {
    pub assignment: ClusterAssignment,
    /// `None` for singleton clusters.
    pub clusters: Vec<Option<CvResult>>,
    /// Node-weighted means of each cluster's selected cell.
    pub mean_rmse: f64,
    pub mean_mae: f64,
    pub mean_r2: Option<f64>,
    pub problem_size_reduction: f64,
}

pub fn clusterwise_cross_validate(
    x: &DMatrix<f64>,
    assignment: &ClusterAssignment,
    kind: MethodKind,
    grid: &HyperGrid,
    opts: &CvOptions,
) -> Result<ClusterwiseCv> {
    if x.ncols() != assignment.n() {
        return Err(Error::DimensionMismatch {
            expected: assignment.n(),
            got: x.ncols(),
        });
    }
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let mut clusters = Vec::with_capacity(assignment.c());
    let (mut rmse, mut mae, mut r2, mut weight, mut r2_weight) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (cluster, members) in assignment.member_lists().iter().enumerate() {
        if members.len() < 2 {
            log::warn!("cluster {cluster} is a singleton and is not evaluated");
            clusters.push(None);
            continue;
        }
        let mut sub_grid = grid.clone();
        sub_grid.ks.retain(|&k| k < members.len());
        if kind == MethodKind::Gsp && sub_grid.ks.is_empty() {
            sub_grid.ks = vec![1];
        }
        let sub = linalg::select(x, &rows, members);
        let result = cross_validate_matrix(&sub, kind, &sub_grid, opts).map_err(|e| Error::ClusterLearning {
            cluster,
            source: Box::new(e),
        })?;
        let best = result.best_cell();
        let w = members.len() as f64;
        rmse += w * best.mean_rmse.unwrap_or(f64::NAN);
        mae += w * best.mean_mae.unwrap_or(f64::NAN);
        if let Some(v) = best.mean_r2 {
            r2 += w * v;
            r2_weight += w;
        }
        weight += w;
        clusters.push(Some(result));
    }
    if weight == 0.0 {
        return Err(Error::AllCellsFailed);
    }
    Ok(ClusterwiseCv {
        assignment: assignment.clone(),
        clusters,
        mean_rmse: rmse / weight,
        mean_mae: mae / weight,
        mean_r2: (r2_weight > 0.0).then(|| r2 / r2_weight),
        problem_size_reduction: problem_size_reduction(assignment),
    })
}

/// GSP cannot use more frequencies than observed nodes.
fn clamp_bandwidth(spec: &MethodSpec, observed: usize) -> MethodSpec {
    match spec.k {
        Some(k) if spec.kind == MethodKind::Gsp && k > observed => MethodSpec::gsp(observed),
        _ => *spec,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub pct_available: f64,
    pub n_observed: usize,
    /// `None` when nothing is hidden.
    pub mean_rmse: Option<f64>,
    /// Half-width of the normal 95% interval; `None` with fewer than two
    /// repetitions or nothing hidden.
    pub ci95: Option<f64>,
    pub rep_rmse: Vec<f64>,
}

/// Writes curve points as CSV.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["pct_available", "n_observed", "mean_rmse", "ci95", "ci_low", "ci_high"])?;
    for pt in points {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let band = pt.mean_rmse.zip(pt.ci95);
        wtr.write_record([
            pt.pct_available.to_string(),
            pt.n_observed.to_string(),
            opt(pt.mean_rmse),
            opt(pt.ci95),
            opt(band.map(|(m, c)| m - c)),
            opt(band.map(|(m, c)| m + c)),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Availability sweep with fixed hyperparameters.
///
/// Each repetition draws a random node order; at availability `pct` the first
/// `N − round(pct·N/100)` nodes of that order are hidden (so hidden sets are
/// nested) and reconstructed jointly on every fold's test rows.
pub fn semi_supervised_eval(
    x: &DMatrix<f64>,
    kind: MethodKind,
    params: &CellParams,
    percentages: &[f64],
    reps: usize,
    seed: u64,
    opts: &CvOptions,
) -> Result<Vec<CurvePoint>> {
    check_complete(x)?;
    if percentages.is_empty() {
        return Err(Error::InvalidConfig("no availability percentages".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be >= 1".into()));
    }
    let (p, n) = x.shape();
    let mut observed_counts = Vec::with_capacity(percentages.len());
    for &pct in percentages {
        if !(pct > 0.0 && pct <= 100.0) {
            return Err(Error::InvalidConfig(format!("availability {pct}% is outside (0, 100]")));
        }
        let m = (pct / 100.0 * n as f64).round() as usize;
        if m == 0 {
            return Err(Error::NoObservedNodes { pct });
        }
        observed_counts.push(m.min(n));
    }
    let graph = params.graph(kind)?;
    let spec = params.method(kind)?;
    let folds = kfold_split_with(p, opts.folds, opts.seed, opts.scheme)?;
    let trained: Vec<TrainedFold> = folds
        .par_iter()
        .map(|test| train_fold(x, &complement(p, test), &graph, opts))
        .collect::<Result<_>>()?;
    let kernels: Vec<Option<KernelMatrix>> = trained
        .iter()
        .map(|t| method_kernel(&t.model, &spec))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders: Vec<Vec<usize>> = (0..reps)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect();

    let mut points = Vec::with_capacity(percentages.len());
    for (&pct, &m) in percentages.iter().zip(&observed_counts) {
        if m == n {
            points.push(CurvePoint {
                pct_available: pct,
                n_observed: m,
                mean_rmse: None,
                ci95: None,
                rep_rmse: Vec::new(),
            });
            continue;
        }
        let spec = clamp_bandwidth(&spec, m);
        let rep_rmse: Vec<f64> = orders
            .par_iter()
            .map(|order| {
                let hidden = &order[..n - m];
                let mut total = 0.0;
                for ((fold, kernel), test) in trained.iter().zip(&kernels).zip(&folds) {
                    let reports = score_pattern(fold, &spec, kernel.as_ref(), x, test, hidden)?;
                    total += average(&reports).rmse;
                }
                Ok(total / folds.len() as f64)
            })
            .collect::<Result<_>>()?;
        let count = reps as f64;
        let mean = rep_rmse.iter().sum::<f64>() / count;
        let ci95 = (reps >= 2).then(|| {
            let var = rep_rmse.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
            1.96 * var.sqrt() / count.sqrt()
        });
        points.push(CurvePoint {
            pct_available: pct,
            n_observed: m,
            mean_rmse: Some(mean),
            ci95,
            rep_rmse,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftOptions {
    pub train_fraction: f64,
    /// Nodes hidden alongside the target, e.g. reference stations.
    pub exclude: Vec<usize>,
    pub noise_seed: u64,
    pub cv: CvOptions,
}

impl Default for DriftOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.66,
            exclude: Vec::new(),
            noise_seed: 0,
            cv: CvOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftStep {
    pub sigma: f64,
    pub start_row: usize,
    pub end_row: usize,
    pub drifted_rmse: f64,
    pub reconstructed_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub target: usize,
    pub excluded: Vec<usize>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub selected: CellParams,
    pub drifted_rmse: f64,
    pub reconstructed_rmse: f64,
    pub steps: Vec<DriftStep>,
}

impl DriftReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["step", "sigma", "start_row", "end_row", "drifted_rmse", "reconstructed_rmse"])?;
        for (i, s) in self.steps.iter().enumerate() {
            wtr.write_record([
                i.to_string(),
                s.sigma.to_string(),
                s.start_row.to_string(),
                s.end_row.to_string(),
                s.drifted_rmse.to_string(),
                s.reconstructed_rmse.to_string(),
            ])?;
        }
        wtr.write_record([
            "all".to_string(),
            String::new(),
            self.train_rows.to_string(),
            (self.train_rows + self.test_rows).to_string(),
            self.drifted_rmse.to_string(),
            self.reconstructed_rmse.to_string(),
        ])?;
        wtr.flush()?;
        Ok(())
    }
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Simulated drift of `target` on the test span and its virtual-sensor
/// replacement.
///
/// The first `train_fraction` of the rows select hyperparameters by CV and
/// train the final graph. On the remaining rows the target's readings get
/// Gaussian noise whose standard deviation steps through `noise_sigmas` over
/// equal consecutive segments. The reconstruction treats the target and
/// `exclude` as unobserved.
pub fn drift_simulation(
    x: &DMatrix<f64>,
    target: usize,
    noise_sigmas: &[f64],
    kind: MethodKind,
    grid: &HyperGrid,
    opts: &DriftOptions,
) -> Result<DriftReport> {
    check_complete(x)?;
    let (p, n) = x.shape();
    if target >= n {
        return Err(Error::InvalidTarget(target));
    }
    if let Some(&bad) = opts.exclude.iter().find(|&&e| e >= n) {
        return Err(Error::InvalidTarget(bad));
    }
    if noise_sigmas.is_empty() {
        return Err(Error::InvalidConfig("no noise levels".into()));
    }
    if noise_sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || noise_sigmas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("noise levels must be nonnegative and nondecreasing".into()));
    }
    if !(opts.train_fraction > 0.0 && opts.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("train fraction {} is outside (0, 1)", opts.train_fraction)));
    }
    let mut hidden = opts.exclude.clone();
    hidden.push(target);
    hidden.sort_unstable();
    hidden.dedup();
    if hidden.len() >= n {
        return Err(Error::AllNodesMissing);
    }

    let p_train = (opts.train_fraction * p as f64).floor() as usize;
    if p_train < 2 || p_train >= p {
        return Err(Error::InsufficientSamples { needed: 3, got: p });
    }
    let train: Vec<usize> = (0..p_train).collect();
    let test: Vec<usize> = (p_train..p).collect();

    let all: Vec<usize> = (0..n).collect();
    let cv = cross_validate_matrix(&linalg::select(x, &train, &all), kind, grid, &opts.cv)?;
    let selected = cv.best_cell().params;
    let fold = train_fold(x, &train, &selected.graph(kind)?, &opts.cv)?;
    let spec = clamp_bandwidth(&selected.method(kind)?, n - hidden.len());
    let kernel = method_kernel(&fold.model, &spec)?;
    let pred = predict(&fold, &spec, kernel.as_ref(), x, &test, &hidden)?;
    let col = hidden.binary_search(&target).expect("target is hidden");

    let clean: Vec<f64> = test.iter().map(|&r| x[(r, target)]).collect();
    let rebuilt: Vec<f64> = pred.column(col).iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.noise_seed);
    let t = test.len();
    let segments = noise_sigmas.len();
    let mut drifted = clean.clone();
    let mut steps = Vec::with_capacity(segments);
    for (s, &sigma) in noise_sigmas.iter().enumerate() {
        let (lo, hi) = (s * t / segments, (s + 1) * t / segments);
        for v in &mut drifted[lo..hi] {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
        if hi > lo {
            steps.push(DriftStep {
                sigma,
                start_row: p_train + lo,
                end_row: p_train + hi,
                drifted_rmse: rmse(&clean[lo..hi], &drifted[lo..hi]),
                reconstructed_rmse: rmse(&clean[lo..hi], &rebuilt[lo..hi]),
            });
        }
    }
    Ok(DriftReport {
        target,
        excluded: opts.exclude.clone(),
        train_rows: p_train,
        test_rows: t,
        selected,
        drifted_rmse: rmse(&clean, &drifted),
        reconstructed_rmse: rmse(&clean, &rebuilt),
        steps,
    })
}
