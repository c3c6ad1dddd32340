use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use graph_recon::clustering::{hierarchical_cluster, problem_size_reduction, score_cluster_count, ClusterAssignment, ClusterScore};
use graph_recon::covariance::precision_to_adjacency;
use graph_recon::data::{complete_rows, load_csv, StandardizationParams, TimeSeriesMatrix};
use graph_recon::evaluation::{
    clusterwise_cross_validate, cross_validate_matrix, drift_simulation, semi_supervised_eval, train_fold,
    write_curve_csv, CellParams, CurvePoint, CvOptions, CvResult, DriftOptions, HyperGrid,
};
use graph_recon::graph::{GraphDocument, GraphSignal, WeightMatrix, DEFAULT_EDGE_THRESHOLD};
use graph_recon::reconstruction::{GraphModel, MethodKind};
use graph_recon::Error;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{Clusters, Command, Extra, Settings};
use crate::model::{covariance_rows, ClusterModel, ModelFile};
use crate::{write_json, CliError};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Learn(args) => learn(&Settings::resolve(args, Extra::default())?),
        Command::Cv(args) => cv(&Settings::resolve(args, Extra::default())?),
        Command::Reconstruct { common, model } => reconstruct(&Settings::resolve(
            common,
            Extra {
                model,
                ..Extra::default()
            },
        )?),
        Command::Cluster(args) => cluster(&Settings::resolve(args, Extra::default())?),
        Command::SemiEval {
            common,
            percentages,
            reps,
        } => semi_eval(&Settings::resolve(
            common,
            Extra {
                percentages,
                reps,
                ..Extra::default()
            },
        )?),
        Command::DriftSim {
            common,
            target,
            sigmas,
            exclude,
            train_fraction,
        } => drift_sim(&Settings::resolve(
            common,
            Extra {
                target,
                sigmas,
                exclude,
                train_fraction,
                ..Extra::default()
            },
        )?),
        Command::Info(args) => info(&Settings::resolve(args, Extra::default())?),
    }
}

fn load(path: &Path) -> Result<TimeSeriesMatrix> {
    load_csv(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Complete rows of `--data`.
fn load_complete(s: &Settings) -> Result<TimeSeriesMatrix> {
    let data = load(s.data()?)?;
    let complete = complete_rows(&data)?;
    if complete.p() < data.p() {
        log::info!("dropped {} incomplete rows", data.p() - complete.p());
    }
    Ok(complete)
}

fn out_dir(s: &Settings) -> Result<&Path> {
    std::fs::create_dir_all(&s.out).map_err(Error::from)?;
    Ok(&s.out)
}

fn write_csv_file(path: PathBuf, write: impl FnOnce(BufWriter<File>) -> graph_recon::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(Error::from)?;
    Ok(write(BufWriter::new(file))?)
}

fn cv_options(s: &Settings) -> CvOptions {
    CvOptions {
        folds: s.folds,
        seed: s.seed,
        scheme: s.scheme,
        greedy_density: s.greedy_density,
        ..CvOptions::default()
    }
}

fn cell_count(grid: &HyperGrid, kind: MethodKind) -> usize {
    let graphs = match kind {
        MethodKind::KrrCov => grid.lambdas.len(),
        _ => grid.alphas.len() * grid.betas.len(),
    };
    let methods = match kind {
        MethodKind::LapInt => 1,
        MethodKind::Gsp => grid.ks.len(),
        MethodKind::KrrDiff => grid.mus.len() * grid.sigma2s.len(),
        MethodKind::KrrCov => grid.mus.len(),
    };
    graphs * methods
}

/// The grid's only cell, or the CV winner when there are several.
fn select_cell(x: &DMatrix<f64>, kind: MethodKind, grid: &HyperGrid, opts: &CvOptions) -> Result<(CellParams, Option<CvResult>)> {
    grid.validate(kind)?;
    if cell_count(grid, kind) == 1 {
        let params = CellParams {
            alpha: (kind != MethodKind::KrrCov).then(|| grid.alphas[0]),
            beta: (kind != MethodKind::KrrCov).then(|| grid.betas[0]),
            lambda: (kind == MethodKind::KrrCov).then(|| grid.lambdas[0]),
            k: (kind == MethodKind::Gsp).then(|| grid.ks[0]),
            mu: matches!(kind, MethodKind::KrrDiff | MethodKind::KrrCov).then(|| grid.mus[0]),
            sigma2: (kind == MethodKind::KrrDiff).then(|| grid.sigma2s[0]),
        };
        return Ok((params, None));
    }
    log::info!("selecting {kind} hyperparameters by cross-validation");
    let result = cross_validate_matrix(x, kind, grid, opts)?;
    Ok((result.best_cell().params, Some(result)))
}

/// GSP bandwidths must stay below the cluster size.
fn cluster_grid(grid: &HyperGrid, size: usize) -> HyperGrid {
    let mut g = grid.clone();
    let cap = size.saturating_sub(1).max(1);
    g.ks.retain(|&k| k <= cap);
    if g.ks.is_empty() {
        g.ks = vec![cap];
    }
    g
}

fn standardized(x: &DMatrix<f64>) -> Result<(StandardizationParams, DMatrix<f64>)> {
    let params = StandardizationParams::fit(x)?;
    let z = params.standardize(x)?;
    Ok((params, z))
}

fn cluster_range(n: usize) -> Vec<usize> {
    (2..=(n - 1).min(10)).collect()
}

/// Ward partition of the standardized columns; `auto` takes the best
/// non-degenerate Calinski-Harabasz score, smallest `c` on ties.
fn choose_clusters(z: &DMatrix<f64>, clusters: Clusters) -> Result<(ClusterAssignment, Vec<ClusterScore>)> {
    let n = z.ncols();
    let scores = if n >= 3 { score_cluster_count(z, &cluster_range(n))? } else { Vec::new() };
    let c = match clusters {
        Clusters::Count(c) => c,
        Clusters::Auto => {
            let mut best: Option<&ClusterScore> = None;
            for s in scores.iter().filter(|s| !s.degenerate) {
                if best.is_none_or(|b| s.calinski_harabasz > b.calinski_harabasz) {
                    best = Some(s);
                }
            }
            best.map(|b| b.c)
                .ok_or_else(|| CliError::Usage(format!("cannot choose a cluster count for {n} nodes")))?
        }
    };
    Ok((hierarchical_cluster(z, c)?, scores))
}

fn write_scores(path: PathBuf, scores: &[ClusterScore]) -> Result<()> {
    write_csv_file(path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["c", "calinski_harabasz", "degenerate"])?;
        for s in scores {
            wtr.write_record([s.c.to_string(), s.calinski_harabasz.to_string(), s.degenerate.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    })
}

fn columns(x: &DMatrix<f64>, members: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), members.len(), |r, c| x[(r, members[c])])
}

#[derive(Serialize)]
struct ClusterReport {
    cluster: usize,
    members: Vec<String>,
    params: CellParams,
    edges: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv_rmse: Option<f64>,
}

#[derive(Serialize)]
struct LearnReport {
    method: MethodKind,
    rows: usize,
    nodes: usize,
    clusters: Vec<ClusterReport>,
    problem_size_reduction: f64,
}

fn learn(s: &Settings) -> Result<()> {
    let data = load_complete(s)?;
    let x = data.values();
    let n = x.ncols();
    let kind = s.method;
    let grid = s.grid(n);
    let opts = cv_options(s);
    let (standardization, z) = standardized(x)?;
    let (assignment, scores) = match s.clusters {
        Some(c) => {
            let (a, scores) = choose_clusters(&z, c)?;
            (a, Some(scores))
        }
        None => (ClusterAssignment::single(n)?, None),
    };
    let out = out_dir(s)?;
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let mut clusters = Vec::with_capacity(assignment.c());
    let mut reports = Vec::with_capacity(assignment.c());
    let mut merged = DMatrix::zeros(n, n);
    for (cluster, members) in assignment.member_lists().iter().enumerate() {
        let ids: Vec<String> = members.iter().map(|&i| data.node_ids()[i].clone()).collect();
        let sub = columns(x, members);
        let cgrid = cluster_grid(&grid, members.len());
        if members.len() == 1 {
            log::warn!("node {} is alone in cluster {cluster} and cannot be reconstructed", ids[0]);
            let (params, _) = select_cell(&sub, kind, &HyperGrid { ks: vec![1], ..first_cell(&cgrid) }, &opts)?;
            let one = WeightMatrix::zeros(1);
            clusters.push(ClusterModel {
                members: members.clone(),
                params,
                spec: params.method(kind)?,
                graph: (kind != MethodKind::KrrCov).then(|| GraphDocument::new(ids.clone(), &one)).transpose()?,
                covariance: (kind == MethodKind::KrrCov).then(|| vec![vec![1.0]]),
            });
            reports.push(ClusterReport {
                cluster,
                members: ids,
                params,
                edges: 0,
                converged: true,
                cv_rmse: None,
            });
            continue;
        }
        let (params, cv) = select_cell(&sub, kind, &cgrid, &opts)?;
        if let Some(cv) = &cv {
            let name = if assignment.c() == 1 { "cv.json".to_string() } else { format!("cv_cluster_{cluster}.json") };
            write_json(&out.join(name), cv)?;
        }
        let fold = train_fold(&sub, &rows, &params.graph(kind)?, &opts).map_err(|e| {
            CliError::Compute(Error::ClusterLearning {
                cluster,
                source: Box::new(e),
            })
        })?;
        let (graph, covariance, weights) = match fold.model.laplacian() {
            Some(l) => {
                let w = l.weights();
                (Some(GraphDocument::new(ids.clone(), &w)?), None, w)
            }
            None => {
                let k = fold.model.covariance().expect("covariance model").matrix().clone();
                let theta = k
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| CliError::Compute(Error::SolveFailure("covariance is singular".into())))?;
                (None, Some(covariance_rows(&k)), precision_to_adjacency(&theta, DEFAULT_EDGE_THRESHOLD)?)
            }
        };
        for (a, &i) in members.iter().enumerate() {
            for (b, &j) in members.iter().enumerate() {
                merged[(i, j)] = weights.get(a, b);
            }
        }
        if assignment.c() > 1 {
            GraphDocument::new(ids.clone(), &weights)?.save(out.join(format!("cluster_{cluster}.json")))?;
        }
        reports.push(ClusterReport {
            cluster,
            members: ids,
            params,
            edges: fold.edges,
            converged: fold.converged,
            cv_rmse: cv.as_ref().and_then(|c| c.best_cell().mean_rmse),
        });
        clusters.push(ClusterModel {
            members: members.clone(),
            params,
            spec: params.method(kind)?,
            graph,
            covariance,
        });
    }

    let merged = WeightMatrix::new(merged)?;
    GraphDocument::new(data.node_ids().to_vec(), &merged)?.save(out.join("graph.json"))?;
    if let Some(scores) = scores {
        assignment.save(out.join("assignment.json"))?;
        write_scores(out.join("cluster_scores.csv"), &scores)?;
    }
    let model = ModelFile {
        method: kind,
        nodes: data.node_ids().to_vec(),
        standardization,
        assignment: assignment.clone(),
        clusters,
    };
    model.save(&out.join("model.json"))?;
    let report = LearnReport {
        method: kind,
        rows: x.nrows(),
        nodes: n,
        clusters: reports,
        problem_size_reduction: problem_size_reduction(&assignment),
    };
    write_json(&out.join("learn_report.json"), &report)?;
    println!("{}", serde_json::to_string(&report).map_err(Error::from)?);
    Ok(())
}

/// A grid holding only the first value of each list.
fn first_cell(grid: &HyperGrid) -> HyperGrid {
    let first = |v: &Vec<f64>| v.first().map(|x| vec![*x]).unwrap_or_default();
    HyperGrid {
        alphas: first(&grid.alphas),
        betas: first(&grid.betas),
        ks: grid.ks.first().map(|k| vec![*k]).unwrap_or_default(),
        mus: first(&grid.mus),
        sigma2s: first(&grid.sigma2s),
        lambdas: first(&grid.lambdas),
    }
}

fn cv(s: &Settings) -> Result<()> {
    let data = load_complete(s)?;
    let x = data.values();
    let grid = s.grid(x.ncols());
    let opts = cv_options(s);
    let out = out_dir(s)?;
    match s.clusters {
        None => {
            let result = cross_validate_matrix(x, s.method, &grid, &opts)?;
            result.save(out.join("cv.json"), out.join("cv.csv"))?;
            let best = result.best_cell();
            println!("{}", serde_json::to_string(best).map_err(Error::from)?);
        }
        Some(c) => {
            let (_, z) = standardized(x)?;
            let (assignment, _) = choose_clusters(&z, c)?;
            let result = clusterwise_cross_validate(x, &assignment, s.method, &grid, &opts)?;
            write_json(&out.join("cv.json"), &result)?;
            for (i, r) in result.clusters.iter().enumerate() {
                if let Some(r) = r {
                    write_csv_file(out.join(format!("cv_cluster_{i}.csv")), |w| r.write_csv(w))?;
                }
            }
            println!(
                "{}",
                serde_json::json!({
                    "clusters": assignment.c(),
                    "mean_rmse": result.mean_rmse,
                    "mean_mae": result.mean_mae,
                    "mean_r2": result.mean_r2,
                    "problem_size_reduction": result.problem_size_reduction,
                })
            );
        }
    }
    Ok(())
}

fn reconstruct(s: &Settings) -> Result<()> {
    let path = s.model.clone().unwrap_or_else(|| s.out.join("model.json"));
    let model = ModelFile::load(&path)?;
    let data = load(s.data()?)?;
    let columns: Vec<usize> = model
        .nodes
        .iter()
        .map(|id| {
            data.node_ids()
                .iter()
                .position(|d| d == id)
                .ok_or_else(|| CliError::Usage(format!("node {id:?} of the model is not in the data")))
        })
        .collect::<Result<_>>()?;
    let graphs: Vec<GraphModel> = model.clusters.iter().map(ClusterModel::graph_model).collect::<Result<_>>()?;
    let methods: Vec<_> = model.clusters.iter().map(|c| c.spec).collect();

    let (p, n) = (data.p(), model.nodes.len());
    let mut filled = DMatrix::zeros(p, n);
    for r in 0..p {
        let values: Vec<f64> = columns.iter().map(|&c| data.values()[(r, c)]).collect();
        let mask: Vec<bool> = columns.iter().map(|&c| data.mask()[(r, c)]).collect();
        let signal = GraphSignal::new(values, mask)?;
        let row = graph_recon::clustering::clusterwise_reconstruct(
            &graphs,
            &model.assignment,
            &methods,
            &signal,
            Some(&model.standardization),
        )
        .map_err(|e| CliError::ComputeAt(format!("line {}", r + 2), e))?;
        for (c, v) in row.into_iter().enumerate() {
            filled[(r, c)] = v;
        }
    }
    let complete = TimeSeriesMatrix::new(
        data.timestamps().to_vec(),
        model.nodes.clone(),
        filled,
        DMatrix::from_element(p, n, true),
    )?;
    let out = out_dir(s)?;
    complete.write_csv(BufWriter::new(File::create(out.join("reconstructed.csv")).map_err(Error::from)?))?;
    let missing = columns
        .iter()
        .map(|&c| data.mask().column(c).iter().filter(|m| !**m).count())
        .sum::<usize>();
    println!("{}", serde_json::json!({ "rows": p, "nodes": n, "filled": missing }));
    Ok(())
}

fn cluster(s: &Settings) -> Result<()> {
    let data = load_complete(s)?;
    let (_, z) = standardized(data.values())?;
    let (assignment, scores) = choose_clusters(&z, s.clusters.unwrap_or(Clusters::Auto))?;
    let out = out_dir(s)?;
    assignment.save(out.join("assignment.json"))?;
    write_scores(out.join("cluster_scores.csv"), &scores)?;
    let members: Vec<Vec<&str>> = assignment
        .member_lists()
        .iter()
        .map(|m| m.iter().map(|&i| data.node_ids()[i].as_str()).collect())
        .collect();
    println!(
        "{}",
        serde_json::json!({
            "c": assignment.c(),
            "members": members,
            "problem_size_reduction": problem_size_reduction(&assignment),
        })
    );
    Ok(())
}

#[derive(Serialize)]
struct CurveFile<'a> {
    method: MethodKind,
    params: CellParams,
    reps: usize,
    seed: u64,
    points: &'a [CurvePoint],
}

fn semi_eval(s: &Settings) -> Result<()> {
    if s.percentages.is_empty() {
        return Err(CliError::Usage("no availability percentages".into()));
    }
    let data = load_complete(s)?;
    let x = data.values();
    let opts = cv_options(s);
    let (params, _) = select_cell(x, s.method, &s.grid(x.ncols()), &opts)?;
    let points = semi_supervised_eval(x, s.method, &params, &s.percentages, s.reps, s.seed, &opts)?;
    let out = out_dir(s)?;
    write_csv_file(out.join("curve.csv"), |w| write_curve_csv(&points, w))?;
    let file = CurveFile {
        method: s.method,
        params,
        reps: s.reps,
        seed: s.seed,
        points: &points,
    };
    write_json(&out.join("curve.json"), &file)?;
    for pt in &points {
        println!(
            "{:>6}% available: mean RMSE {}",
            pt.pct_available,
            pt.mean_rmse.map_or("-".into(), |m| format!("{m:.4} ± {:.4}", pt.ci95.unwrap_or(0.0)))
        );
    }
    Ok(())
}

/// A node given by id, or by column index when no id matches.
fn node_index(ids: &[String], name: &str) -> Result<usize> {
    if let Some(i) = ids.iter().position(|id| id == name) {
        return Ok(i);
    }
    match name.parse::<usize>() {
        Ok(i) if i < ids.len() => Ok(i),
        _ => Err(CliError::Usage(format!("unknown node {name:?}"))),
    }
}

fn drift_sim(s: &Settings) -> Result<()> {
    let target = s.target.as_deref().ok_or_else(|| CliError::Usage("--target is required".into()))?;
    let sigmas = s.sigmas.as_deref().ok_or_else(|| CliError::Usage("--sigmas is required".into()))?;
    let data = load_complete(s)?;
    let ids = data.node_ids();
    let target = node_index(ids, target)?;
    let exclude = s.exclude.iter().map(|e| node_index(ids, e)).collect::<Result<Vec<_>>>()?;
    let opts = DriftOptions {
        train_fraction: s.train_fraction,
        exclude,
        noise_seed: s.seed,
        cv: cv_options(s),
    };
    let x = data.values();
    let report = drift_simulation(x, target, sigmas, s.method, &s.grid(x.ncols()), &opts)?;
    let out = out_dir(s)?;
    write_json(&out.join("drift.json"), &report)?;
    write_csv_file(out.join("drift.csv"), |w| report.write_csv(w))?;
    println!(
        "{}",
        serde_json::json!({
            "target": ids[target],
            "drifted_rmse": report.drifted_rmse,
            "reconstructed_rmse": report.reconstructed_rmse,
        })
    );
    Ok(())
}

fn info(s: &Settings) -> Result<()> {
    let data = load(s.data()?)?;
    let missing: Vec<usize> = (0..data.n()).map(|c| data.mask().column(c).iter().filter(|m| !**m).count()).collect();
    let complete = (0..data.p()).filter(|&r| data.mask().row(r).iter().all(|m| *m)).count();
    let nodes: Vec<_> = data
        .node_ids()
        .iter()
        .zip(&missing)
        .map(|(id, m)| serde_json::json!({ "id": id, "missing": m }))
        .collect();
    let summary = serde_json::json!({
        "rows": data.p(),
        "nodes": data.n(),
        "complete_rows": complete,
        "missing_cells": missing.iter().sum::<usize>(),
        "first": data.timestamps().first().map(|t| t.to_rfc3339()),
        "last": data.timestamps().last().map(|t| t.to_rfc3339()),
        "columns": nodes,
    });
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    Ok(())
}
