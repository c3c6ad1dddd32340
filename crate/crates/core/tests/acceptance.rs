//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any mandatory criterion fails.
//!
//! Criterion 10 needs a prepared O₃ CSV; point `GRAPH_RECON_O3_CSV` at it to
//! run it, otherwise it is reported as SKIPPED.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use graph_recon::clustering::{assemble_block_diagonal, clusterwise_reconstruct, hierarchical_cluster, ClusterAssignment};
use graph_recon::covariance::{graphical_lasso, precision_to_adjacency};
use graph_recon::data::{complete_rows, load_csv};
use graph_recon::evaluation::{
    clusterwise_cross_validate, cross_validate, cross_validate_matrix, drift_simulation, semi_supervised_eval, CvOptions,
    DriftOptions, HyperGrid,
};
use graph_recon::graph::{edge_set, eigendecompose, GraphSignal, LaplacianMatrix, DEFAULT_EDGE_THRESHOLD};
use graph_recon::learning::{learn_graph, SmoothLearnConfig};
use graph_recon::reconstruction::{
    diffusion_kernel, fit_gsp, fit_krr, fit_lap_int, GraphModel, KernelMatrix, MethodKind, MethodSpec,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(id: u32, name: &str, limit: Duration, check: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let (pass, detail) = match outcome {
        Ok(d) if elapsed <= limit => (true, d),
        Ok(d) => (false, format!("{d}; over the time limit")),
        Err(d) => (false, d),
    };
    println!(
        "criterion {id:>2} {name}: {} ({detail}; {:.1}s of {}s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo.log10()..hi.log10()))
}

fn check_laplacian(l: &LaplacianMatrix) -> std::result::Result<(), String> {
    let m = l.matrix();
    let n = m.nrows();
    ensure((m - m.transpose()).amax() <= 1e-10, || "not symmetric".into())?;
    for i in 0..n {
        let row: f64 = m.row(i).sum();
        ensure(row.abs() <= 1e-8, || format!("row {i} sums to {row:e}"))?;
        for j in 0..n {
            ensure(i == j || m[(i, j)] <= 0.0, || format!("positive off-diagonal at ({i},{j})"))?;
        }
    }
    ensure((m.trace() - n as f64).abs() <= 1e-6, || format!("trace {} for N = {n}", m.trace()))?;
    let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
    ensure(min >= -1e-8 * m.amax().max(1.0), || format!("min eigenvalue {min:e}"))
}

fn random_learning_data(seed: u64) -> (DMatrix<f64>, SmoothLearnConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=20);
    let p = rng.random_range(n..=3 * n);
    let l = connected_laplacian(&mut rng, n, 0.3);
    let x = smooth_signals(&mut rng, l.matrix(), p, 1.0, 0.0, 0.3);
    let cfg = SmoothLearnConfig::new(log_uniform(&mut rng, 1e-2, 1e2), log_uniform(&mut rng, 1e-2, 1e2)).unwrap();
    (x, cfg)
}

fn criterion_1() -> Check {
    let failures: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|seed| {
            let (x, cfg) = random_learning_data(seed);
            match learn_graph(&x, &cfg) {
                Ok(r) => check_laplacian(&r.laplacian).err().map(|e| format!("seed {seed}: {e}")),
                Err(e) => Some(format!("seed {seed}: {e}")),
            }
        })
        .collect();
    ensure(failures.is_empty(), || format!("{} failures, first: {}", failures.len(), failures[0]))?;
    Ok("1000 learned Laplacians valid".into())
}

fn criterion_2() -> Check {
    let worst: Vec<std::result::Result<f64, String>> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let (x, cfg) = random_learning_data(10_000 + seed);
            let r = learn_graph(&x, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
            let rise = r.objective_trace.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            Ok(rise)
        })
        .collect();
    let mut max_rise = f64::NEG_INFINITY;
    for w in worst {
        max_rise = max_rise.max(w?);
    }
    ensure(max_rise <= 1e-9, || format!("objective rose by {max_rise:e}"))?;
    Ok(format!("200 traces nonincreasing, largest step {max_rise:.2e}"))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 4];
    for _ in 0..500 {
        let n = rng.random_range(2..=8);
        let l = connected_laplacian(&mut rng, n, 0.4);
        let pattern = random_pattern(&mut rng, n);
        let m = pattern.observed().len();
        let x_m = random_vector(&mut rng, m);

        let lap = fit_lap_int(&l, &pattern).unwrap().reconstruct(&x_m).unwrap();
        worst[0] = worst[0].max(max_diff(&lap, &lap_int_oracle(l.matrix(), &pattern, &x_m)));

        let eig = eigendecompose(&l).unwrap();
        let (_, u) = plain_eigen(l.matrix());
        // a bandwidth whose U_MK is well conditioned
        let mut ks: Vec<usize> = (1..=m).collect();
        ks.shuffle(&mut rng);
        let k = ks.into_iter().find(|&k| {
            let u_mk = DMatrix::from_fn(m, k, |r, c| u[(pattern.observed()[r], c)]);
            u_mk.singular_values().min() > 1e-3
        });
        if let Some(k) = k {
            let gsp = fit_gsp(&eig, &pattern, k).unwrap().reconstruct(&x_m).unwrap();
            worst[1] = worst[1].max(max_diff(&gsp, &gsp_oracle(&u, &pattern, k, &x_m)));
        }

        let mu = log_uniform(&mut rng, 1e-4, 1.0);
        let sigma2 = log_uniform(&mut rng, 1e-2, 10.0);
        let kernel = diffusion_kernel(&eig, sigma2).unwrap();
        let diff = fit_krr(&kernel, &pattern, mu).unwrap().reconstruct(&x_m).unwrap();
        let reference = expm(&(l.matrix() * (-sigma2 / 2.0)));
        worst[2] = worst[2].max(max_diff(&diff, &krr_oracle(&reference, &pattern, mu, &x_m)));

        let cov = random_spd(&mut rng, n);
        let cov_fit = fit_krr(&KernelMatrix::new(cov.clone()).unwrap(), &pattern, mu).unwrap();
        let got = cov_fit.reconstruct(&x_m).unwrap();
        worst[3] = worst[3].max(max_diff(&got, &krr_oracle(&cov, &pattern, mu, &x_m)));
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    ensure(max <= 1e-8, || format!("largest deviation {worst:?}"))?;
    Ok(format!(
        "500 instances; max deviation lapint {:.1e}, gsp {:.1e}, krr-diff {:.1e}, krr-cov {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 200 {
        let n = rng.random_range(3..=12);
        let l = connected_laplacian(&mut rng, n, 0.3);
        let eig = eigendecompose(&l).unwrap();
        let pattern = random_pattern(&mut rng, n);
        let m = pattern.observed().len();
        let k = rng.random_range(1..=m);
        let u_mk = DMatrix::from_fn(m, k, |r, c| eig.eigenvectors[(pattern.observed()[r], c)]);
        let sv = u_mk.singular_values();
        if sv.min() <= 1e-10 * sv.max() {
            continue;
        }
        let coef = nalgebra::DVector::from_vec(random_vector(&mut rng, k));
        let x = eig.eigenvectors.columns(0, k) * coef;
        let x_m = gather(x.as_slice(), pattern.observed());
        let got = fit_gsp(&eig, &pattern, k).unwrap().reconstruct(&x_m).unwrap();
        worst = worst.max(max_diff(&got, &gather(x.as_slice(), pattern.unobserved())));
        checked += 1;
    }
    ensure(worst <= 1e-6, || format!("recovery error {worst:e}"))?;
    Ok(format!("200 bandlimited signals recovered, max error {worst:.1e}"))
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let l = connected_laplacian(&mut rng, n, 0.4);
        let eig = eigendecompose(&l).unwrap();
        let sigma2 = log_uniform(&mut rng, 1e-2, 10.0);
        let k = diffusion_kernel(&eig, sigma2).unwrap();
        let reference = expm(&(l.matrix() * (-sigma2 / 2.0)));
        worst = worst.max((k.matrix() - reference).amax());
        let zero = diffusion_kernel(&eig, 0.0).unwrap();
        ensure(zero.matrix() == &DMatrix::identity(n, n), || "sigma2 = 0 is not exactly I".into())?;
    }
    ensure(worst <= 1e-8, || format!("kernel error {worst:e}"))?;
    Ok(format!("100 kernels, max error {worst:.1e}; sigma2 = 0 gives I"))
}

struct BlockInstance {
    assignment: ClusterAssignment,
    blocks: Vec<LaplacianMatrix>,
    covs: Vec<DMatrix<f64>>,
    signal: GraphSignal,
}

fn block_instance<R: Rng>(rng: &mut R) -> BlockInstance {
    loop {
        let c = rng.random_range(2..=4);
        let sizes: Vec<usize> = (0..c).map(|_| rng.random_range(1..=4)).collect();
        let n: usize = sizes.iter().sum();
        let mut labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(i, &s)| std::iter::repeat_n(i, s)).collect();
        labels.shuffle(rng);
        // relabel by first appearance so labels follow smallest member
        let mut map = vec![usize::MAX; c];
        let mut next = 0;
        for l in labels.iter_mut() {
            if map[*l] == usize::MAX {
                map[*l] = next;
                next += 1;
            }
            *l = map[*l];
        }
        let assignment = ClusterAssignment::new(labels, c).unwrap();
        let blocks: Vec<LaplacianMatrix> = assignment
            .member_lists()
            .iter()
            .map(|m| if m.len() == 1 { LaplacianMatrix::zeros(1) } else { connected_laplacian(rng, m.len(), 0.5) })
            .collect();
        let covs: Vec<DMatrix<f64>> = assignment.member_lists().iter().map(|m| random_spd(rng, m.len())).collect();
        let mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.6).collect();
        let viable = assignment.member_lists().iter().all(|m| m.iter().any(|&i| mask[i]));
        if !viable || mask.iter().all(|&b| b) {
            continue;
        }
        let values: Vec<f64> = (0..n).map(|i| if mask[i] { normal(rng) } else { f64::NAN }).collect();
        return BlockInstance {
            assignment,
            blocks,
            covs,
            signal: GraphSignal::new(values, mask).unwrap(),
        };
    }
}

fn block_diag(mats: &[DMatrix<f64>], a: &ClusterAssignment) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.n(), a.n());
    for (m, members) in mats.iter().zip(a.member_lists()) {
        for (x, &i) in members.iter().enumerate() {
            for (y, &j) in members.iter().enumerate() {
                out[(i, j)] = m[(x, y)];
            }
        }
    }
    out
}

/// Ridge per cluster so that `μ_i·|M_i| = μ·|M|`.
fn matched_mu(mu: f64, inst: &BlockInstance) -> Vec<f64> {
    let total = inst.signal.mask.iter().filter(|&&b| b).count() as f64;
    inst.assignment
        .member_lists()
        .iter()
        .map(|m| {
            let observed = m.iter().filter(|&&i| inst.signal.mask[i]).count() as f64;
            mu * total / observed
        })
        .collect()
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = [0.0f64; 4];
    let mut gsp_checked = 0;
    for _ in 0..100 {
        let inst = block_instance(&mut rng);
        let a = &inst.assignment;
        let c = a.c();
        let l = assemble_block_diagonal(&inst.blocks, a).unwrap();
        let whole = GraphModel::from_laplacian(l).unwrap();
        let parts: Vec<GraphModel> = inst.blocks.iter().map(|b| GraphModel::from_laplacian(b.clone()).unwrap()).collect();
        let mu = log_uniform(&mut rng, 1e-4, 1.0);
        let mus = matched_mu(mu, &inst);
        let mut compare = |slot: usize, whole: &GraphModel, global: MethodSpec, parts: &[GraphModel], local: Vec<MethodSpec>| {
            let expected = whole.reconstruct_signal(&global, &inst.signal).unwrap();
            let got = clusterwise_reconstruct(parts, a, &local, &inst.signal, None).unwrap();
            worst[slot] = worst[slot].max(max_diff(&expected, &got));
        };

        compare(0, &whole, MethodSpec::lap_int(), &parts, vec![MethodSpec::lap_int(); c]);

        let sigma2 = log_uniform(&mut rng, 1e-2, 10.0);
        compare(
            2,
            &whole,
            MethodSpec::krr_diff(mu, sigma2),
            &parts,
            mus.iter().map(|&m| MethodSpec::krr_diff(m, sigma2)).collect(),
        );

        let cov_whole = GraphModel::from_covariance(KernelMatrix::new(block_diag(&inst.covs, a)).unwrap());
        let cov_parts: Vec<GraphModel> =
            inst.covs.iter().map(|m| GraphModel::from_covariance(KernelMatrix::new(m.clone()).unwrap())).collect();
        compare(
            3,
            &cov_whole,
            MethodSpec::krr_cov(mu),
            &cov_parts,
            mus.iter().map(|&m| MethodSpec::krr_cov(m)).collect(),
        );

        // GSP: a global K at a spectral gap, split into per-cluster counts
        let values = &whole.eigen().unwrap().eigenvalues;
        let n = a.n();
        let observed = |m: &[usize]| m.iter().filter(|&&i| inst.signal.mask[i]).count();
        let candidates: Vec<(usize, Vec<usize>)> = (c..n)
            .filter(|&k| values[k] - values[k - 1] > 1e-6)
            .filter_map(|k| {
                let cut = 0.5 * (values[k - 1] + values[k]);
                let per: Vec<usize> = parts
                    .iter()
                    .map(|p| p.eigen().unwrap().eigenvalues.iter().filter(|&&v| v < cut).count())
                    .collect();
                let fits = a.member_lists().iter().zip(&per).all(|(m, &ki)| ki >= 1 && ki <= observed(m));
                let total_observed = observed(&(0..n).collect::<Vec<_>>());
                (fits && k <= total_observed).then_some((k, per))
            })
            .collect();
        if let Some((k, per)) = candidates.choose(&mut rng).cloned() {
            compare(1, &whole, MethodSpec::gsp(k), &parts, per.iter().map(|&ki| MethodSpec::gsp(ki)).collect());
            gsp_checked += 1;
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    ensure(max <= 1e-12, || format!("largest deviation {worst:?}"))?;
    ensure(gsp_checked >= 50, || format!("only {gsp_checked} GSP instances had a usable spectral gap"))?;
    Ok(format!(
        "100 instances ({gsp_checked} with GSP); max deviation lapint {:.1e}, gsp {:.1e}, krr-diff {:.1e}, krr-cov {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let l = geometric_laplacian(&mut rng, 30, 0.35);
    let x = smooth_signals(&mut rng, l.matrix(), 500, 10.0, 50.0, 0.5);
    let grid = HyperGrid {
        alphas: vec![0.1, 1.0, 10.0],
        betas: vec![0.1, 1.0, 10.0],
        ..HyperGrid::default_for(30)
    };
    let opts = CvOptions::default();
    let cv = cross_validate_matrix(&x, MethodKind::LapInt, &grid, &opts).map_err(|e| e.to_string())?;
    let params = cv.best_cell().params.clone();
    let curve =
        semi_supervised_eval(&x, MethodKind::LapInt, &params, &[20.0, 80.0], 10, 77, &opts).map_err(|e| e.to_string())?;
    let (low, high) = (&curve[0].rep_rmse, &curve[1].rep_rmse);
    let wins = low.iter().zip(high).filter(|(a, b)| a > b).count();
    ensure(wins >= 9, || format!("20% worse than 80% in only {wins} of 10 repetitions"))?;
    Ok(format!(
        "RMSE at 20% > at 80% in {wins}/10 repetitions (means {:.3} vs {:.3})",
        curve[0].mean_rmse.unwrap(),
        curve[1].mean_rmse.unwrap()
    ))
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let l = geometric_laplacian(&mut rng, 8, 0.6);
    let x = smooth_signals(&mut rng, l.matrix(), 600, 15.0, 50.0, 1.0);
    let grid = HyperGrid {
        alphas: vec![0.1, 1.0, 10.0],
        betas: vec![0.1, 1.0, 10.0],
        ..HyperGrid::default_for(8)
    };
    let opts = DriftOptions {
        noise_seed: 88,
        ..DriftOptions::default()
    };
    let report = drift_simulation(&x, 3, &[0.0, 10.0, 20.0, 30.0, 40.0, 50.0], MethodKind::LapInt, &grid, &opts)
        .map_err(|e| e.to_string())?;
    ensure(report.drifted_rmse >= 20.0, || format!("drift RMSE only {:.2}", report.drifted_rmse))?;
    ensure(report.reconstructed_rmse <= 0.7 * report.drifted_rmse, || {
        format!("reconstruction {:.2} vs drift {:.2}", report.reconstructed_rmse, report.drifted_rmse)
    })?;
    Ok(format!(
        "drifted RMSE {:.2}, reconstructed {:.2} (ratio {:.3})",
        report.drifted_rmse,
        report.reconstructed_rmse,
        report.reconstructed_rmse / report.drifted_rmse
    ))
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut diag_err = 0.0f64;
    let mut inv_err = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(1..=6);
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.random_range(0.1..3.0)));
        let lambda = rng.random_range(0.0..2.0);
        let est = graphical_lasso(&s, lambda, 1e-6, 500).map_err(|e| e.to_string())?;
        let expected = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / (s[(i, i)] + lambda) } else { 0.0 });
        diag_err = diag_err.max((est.theta - expected).amax());

        let n = rng.random_range(2..=6);
        let s = random_spd(&mut rng, n);
        let est = graphical_lasso(&s, 0.0, 1e-10, 500).map_err(|e| e.to_string())?;
        inv_err = inv_err.max((est.theta - s.clone().try_inverse().unwrap()).amax());
    }
    ensure(diag_err <= 1e-10, || format!("diagonal case error {diag_err:e}"))?;
    ensure(inv_err <= 1e-5, || format!("inverse error {inv_err:e}"))?;

    Ok(format!("diagonal error {diag_err:.1e}, inverse error {inv_err:.1e}"))
}

/// Edge count along a λ grid on fixed covariances. The exact glasso support
/// is not nested in λ in general, so this can fail on a correct solver.
fn criterion_9_path() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = Vec::new();
    for trial in 0..5 {
        let n = 7;
        let data = DMatrix::from_fn(60, n, |_, _| normal(&mut rng));
        let mix = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.6..0.6)) + DMatrix::identity(n, n);
        let s = graph_recon::covariance::empirical_covariance(&(data * mix)).unwrap();
        let mut previous = usize::MAX;
        for step in 0..16 {
            let lambda = 1e-3 * 10f64.powf(step as f64 / 5.0);
            let est = graphical_lasso(&s, lambda, 1e-6, 500).map_err(|e| e.to_string())?;
            let edges = edge_set(&precision_to_adjacency(&est.theta, DEFAULT_EDGE_THRESHOLD).unwrap(), 0.0).len();
            if edges > previous {
                violations.push(format!("trial {trial}: {previous} -> {edges} at lambda {lambda:.4}"));
            }
            previous = edges;
        }
    }
    ensure(violations.is_empty(), || format!("edge count rises: {}", violations.join(", ")))?;
    Ok("edge counts nonincreasing on 5 covariances x 16 lambdas".into())
}

fn criterion_10(path: &str) -> Check {
    let data = complete_rows(&load_csv(path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let grid = HyperGrid::default_for(data.n());
    let opts = CvOptions::default();
    let cv = cross_validate(&data, MethodKind::LapInt, &grid, &opts).map_err(|e| e.to_string())?;
    let best = cv.best_cell();
    let (rmse, r2) = (best.mean_rmse.unwrap_or(f64::NAN), best.mean_r2.unwrap_or(f64::NAN));
    let x = data.complete_values().unwrap();
    let z = graph_recon::data::StandardizationParams::fit(x).and_then(|p| p.standardize(x)).map_err(|e| e.to_string())?;
    let assignment = hierarchical_cluster(&z, 3).map_err(|e| e.to_string())?;
    let clustered = clusterwise_cross_validate(x, &assignment, MethodKind::LapInt, &grid, &opts).map_err(|e| e.to_string())?;
    let cr2 = clustered.mean_r2.unwrap_or(f64::NAN);
    let detail = format!("Lap.Int RMSE {rmse:.2}, R2 {r2:.3}; cluster-wise C=3 R2 {cr2:.3}");
    ensure((r2 - 0.66).abs() <= 0.08 && (rmse - 12.41).abs() <= 1.5 && (cr2 - 0.67).abs() <= 0.08, || detail.clone())?;
    Ok(detail)
}

fn main() {
    let mut ok = true;
    ok &= run(1, "Laplacian validity", Duration::from_secs(120), criterion_1);
    ok &= run(2, "objective monotonicity", Duration::from_secs(60), criterion_2);
    ok &= run(3, "linear-form oracle equivalence", Duration::from_secs(60), criterion_3);
    ok &= run(4, "bandlimited exact recovery", Duration::from_secs(30), criterion_4);
    ok &= run(5, "diffusion kernel", Duration::from_secs(30), criterion_5);
    ok &= run(6, "block-diagonal equivalence", Duration::from_secs(30), criterion_6);
    ok &= run(7, "availability degradation", Duration::from_secs(180), criterion_7);
    ok &= run(8, "drift compensation", Duration::from_secs(60), criterion_8);
    ok &= run(9, "graphical lasso analytic cases", Duration::from_secs(60), criterion_9);
    // reported, not gating: see criterion_9_path
    run(9, "graphical lasso edge count vs lambda", Duration::from_secs(60), criterion_9_path);
    match std::env::var("GRAPH_RECON_O3_CSV") {
        Ok(path) => {
            // optional: reported but never fails the suite
            run(10, "dataset reproduction (optional)", Duration::from_secs(1800), || criterion_10(&path));
        }
        Err(_) => println!("criterion 10 dataset reproduction (optional): SKIPPED (set GRAPH_RECON_O3_CSV)"),
    }
    if !ok {
        std::process::exit(1);
    }
}
