//! Self-check suite behind `verify`: solver optimality against independent
//! minimizers, invertibility, the Lipschitz bound, gradient checks,
//! reparametrization algebra, the Fréchet closed form and pipeline
//! consistency. Needs no dataset; everything runs on synthetic data.

use std::path::Path;
use std::time::Instant;

use crate::al_loop::{self, AlConfig};
use crate::acquisition::{SolverSettings, Strategy};
use crate::display::{self, DisplayProblem};
use crate::gcn::{GcnLayer, GcnModel, ModelSpec};
use crate::metrics::{self, GaussianSummary};
use crate::numkit::{eigvals, norm, sq_dist, svd, Matrix, Rng};
use crate::skeleton_io::{synth_generate, DatasetSplit, SkeletonGraph, SynthSpec};
use crate::training::{loss_and_grad, param_blocks_mut, total_loss, LossConfig, Regularizer};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    /// One line per check plus a summary line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "[{}] {:<22} {:>7.2}s  {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.seconds,
                c.detail
            ));
        }
        let failed = self.failed();
        out.push_str(&format!(
            "{} of {} checks passed in {:.1}s{}\n",
            self.checks.len() - failed.len(),
            self.checks.len(),
            self.seconds,
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ));
        out
    }
}

type CheckFn = fn() -> Result<String, String>;

/// Names and bodies of the built-in checks, in run order.
pub const CHECKS: [(&str, CheckFn); 8] = [
    ("solver_optimality", check_solver_optimality),
    ("solver_feasibility", check_solver_feasibility),
    ("invertibility", check_invertibility),
    ("lipschitz_bound", check_lipschitz_bound),
    ("gradients", check_gradients),
    ("reparametrization", check_reparametrization),
    ("frechet_closed_form", check_frechet),
    ("pipeline_consistency", check_pipeline),
];

fn timed(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    let start = Instant::now();
    let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
        .unwrap_or_else(|_| Err("check panicked".to_string()));
    let seconds = start.elapsed().as_secs_f64();
    match res {
        Ok(detail) => Check { name, passed: true, detail, seconds },
        Err(detail) => Check { name, passed: false, detail, seconds },
    }
}

/// Run every built-in check, plus checkpoint checks when a path is given.
pub fn run_all(checkpoint: Option<&Path>) -> VerifyReport {
    run_selected(&CHECKS.map(|(n, _)| n), checkpoint)
}

/// Run the named built-in checks (unknown names are reported as failures).
pub fn run_selected(names: &[&str], checkpoint: Option<&Path>) -> VerifyReport {
    let start = Instant::now();
    let mut checks = Vec::new();
    for &name in names {
        match CHECKS.iter().find(|(n, _)| *n == name) {
            Some(&(n, f)) => {
                log::info!("verify: {n}");
                checks.push(timed(n, f));
            }
            None => checks.push(Check {
                name: "unknown",
                passed: false,
                detail: format!("no check named `{name}`"),
                seconds: 0.0,
            }),
        }
    }
    if let Some(path) = checkpoint {
        checks.push(timed("checkpoint", || check_checkpoint(path)));
    }
    VerifyReport {
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err_str<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// Exemplar-design solver

pub const SOLVER_INSTANCES: usize = 20;
const SOLVER_MAX_ITER: usize = 2000;
const SOLVER_TOL: f64 = 1e-10;
const RANDOM_DRAWS: usize = 1000;
const RESTARTS: usize = 5;
const ORACLE_ITERS: usize = 3000;

/// Standard Gaussian pool (`n = 50, p = 8, K = 4`) with `hist` history
/// columns; `spread > 0` adds four cluster centers of that scale.
pub fn solver_instance(seed: u64, hist: usize, spread: f64) -> DisplayProblem<f64> {
    let (n, p, k) = (50, 8, 4);
    let mut rng = Rng::new(seed);
    let noise = rng.gaussian_matrix::<f64>(p, n, 1.0);
    let history = rng.gaussian_matrix::<f64>(p, hist, 1.0);
    let centers = rng.gaussian_matrix::<f64>(p, k, spread);
    let data = Matrix::from_fn(p, n, |r, i| centers[(r, i % k)] + noise[(r, i)]);
    DisplayProblem::new(data, history, k).expect("valid instance")
}

/// Objective at fixed `γ`, `σ`, computed directly from the definition.
fn oracle_objective(prob: &DisplayProblem<f64>, mu: &Matrix<f64>, v: &Matrix<f64>, gamma: f64, sigma: f64) -> f64 {
    let (n, k) = (prob.n(), prob.k);
    let mut f = 0.0;
    for c in 0..k {
        let vc = v.col(c);
        for i in 0..n {
            let m = mu[(i, c)];
            f += m * sq_dist(&prob.data.col(i), &vc);
            if m > 0.0 {
                f += gamma * m * m.ln();
            }
        }
        for j in 0..prob.history.cols() {
            f += prob.alpha * (-sq_dist(&vc, &prob.history.col(j)) / sigma).exp();
        }
        f += prob.beta * vc.iter().map(|a| a * a).sum::<f64>();
    }
    f
}

/// Joint first-order minimizer: exponentiated-gradient (entropic mirror)
/// steps on the simplex columns of `μ`, plain gradient steps on `V`, with a
/// shared backtracking step size.
fn oracle_minimize(prob: &DisplayProblem<f64>, gamma: f64, sigma: f64, mut mu: Matrix<f64>, mut v: Matrix<f64>) -> f64 {
    let (n, p, k) = (prob.n(), prob.p(), prob.k);
    let mut f = oracle_objective(prob, &mu, &v, gamma, sigma);
    let mut t = 1e-2;
    for _ in 0..ORACLE_ITERS {
        let mut g_mu = Matrix::<f64>::zeros(n, k);
        let mut g_v = Matrix::<f64>::zeros(p, k);
        for c in 0..k {
            let vc = v.col(c);
            for i in 0..n {
                let xi = prob.data.col(i);
                g_mu[(i, c)] = sq_dist(&xi, &vc) + gamma * (mu[(i, c)].ln() + 1.0);
                for r in 0..p {
                    g_v[(r, c)] += 2.0 * mu[(i, c)] * (vc[r] - xi[r]);
                }
            }
            for j in 0..prob.history.cols() {
                let hj = prob.history.col(j);
                let s = (-sq_dist(&vc, &hj) / sigma).exp();
                for r in 0..p {
                    g_v[(r, c)] -= prob.alpha * s * 2.0 / sigma * (vc[r] - hj[r]);
                }
            }
            for r in 0..p {
                g_v[(r, c)] += 2.0 * prob.beta * vc[r];
            }
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut mu_new = Matrix::<f64>::zeros(n, k);
            for c in 0..k {
                let shift = (0..n).map(|i| -t * g_mu[(i, c)]).fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = (0..n).map(|i| mu[(i, c)] * (-t * g_mu[(i, c)] - shift).exp()).collect();
                let s: f64 = w.iter().sum();
                for i in 0..n {
                    mu_new[(i, c)] = (w[i] / s).max(1e-300);
                }
            }
            let v_new = Matrix::from_fn(p, k, |r, c| v[(r, c)] - t * g_v[(r, c)]);
            let f_new = oracle_objective(prob, &mu_new, &v_new, gamma, sigma);
            if f_new <= f {
                let done = f - f_new <= 1e-15 * f.abs().max(1.0);
                mu = mu_new;
                v = v_new;
                f = f_new;
                t *= 1.5;
                accepted = !done;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    f
}

/// Best objective of the independent minimizer over seeded restarts.
pub fn oracle_best(prob: &DisplayProblem<f64>, gamma: f64, sigma: f64, seed: u64) -> f64 {
    let (n, k) = (prob.n(), prob.k);
    let mut rng = Rng::new(seed).substream("oracle");
    (0..RESTARTS)
        .map(|_| {
            let cols: Vec<Vec<f64>> = rng.sample_without_replacement(n, k).into_iter().map(|i| prob.data.col(i)).collect();
            let v = Matrix::from_columns(&cols);
            let mu = Matrix::from_fn(n, k, |_, _| 1.0 / n as f64);
            oracle_minimize(prob, gamma, sigma, mu, v)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Best objective among uniformly drawn feasible points.
pub fn random_best(prob: &DisplayProblem<f64>, gamma: f64, sigma: f64, seed: u64) -> f64 {
    let (n, p, k) = (prob.n(), prob.p(), prob.k);
    let mut rng = Rng::new(seed).substream("random-draws");
    let scale = prob.data.max_abs();
    (0..RANDOM_DRAWS)
        .map(|_| {
            let mut mu = Matrix::zeros(n, k);
            for c in 0..k {
                mu.set_col(c, &rng.simplex_point(n));
            }
            let v = Matrix::from_fn(p, k, |_, _| (2.0 * rng.uniform() - 1.0) * scale);
            oracle_objective(prob, &mu, &v, gamma, sigma)
        })
        .fold(f64::INFINITY, f64::min)
}

struct SolverRun {
    objective: f64,
    oracle: f64,
    random: f64,
    seconds: f64,
    feasibility: f64,
}

fn solver_runs(spread: f64) -> Result<Vec<SolverRun>, String> {
    (0..SOLVER_INSTANCES as u64)
        .map(|i| {
            let hist = if i % 2 == 0 { 0 } else { 6 };
            let prob = solver_instance(500 + i, hist, spread);
            let start = Instant::now();
            let sol = display::solve(&prob, &Rng::new(900 + i), SOLVER_MAX_ITER, SOLVER_TOL).map_err(err_str)?;
            let seconds = start.elapsed().as_secs_f64();
            let (g, s) = (sol.gamma, sol.sigma);
            Ok(SolverRun {
                objective: oracle_objective(&prob, &sol.mu, &sol.v, g, s),
                oracle: oracle_best(&prob, g, s, 700 + i),
                random: random_best(&prob, g, s, 800 + i),
                seconds,
                feasibility: sol.max_feasibility_error,
            })
        })
        .collect()
}

fn check_solver_optimality() -> Result<String, String> {
    let runs = solver_runs(0.0)?;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut slowest = 0.0_f64;
    for (i, r) in runs.iter().enumerate() {
        ensure(r.objective <= r.random, || {
            format!("instance {i}: objective {} above best random draw {}", r.objective, r.random)
        })?;
        let gap = (r.objective - r.oracle) / r.oracle.abs().max(1e-12);
        worst_gap = worst_gap.max(gap);
        ensure(gap <= 0.01, || {
            format!("instance {i}: objective {} vs independent minimizer {} (rel gap {gap:.2e})", r.objective, r.oracle)
        })?;
        ensure(r.feasibility <= 1e-8, || format!("instance {i}: column sums off by {:.2e}", r.feasibility))?;
        slowest = slowest.max(r.seconds);
        ensure(r.seconds < 1.0, || format!("instance {i}: solve took {:.2}s", r.seconds))?;
    }
    Ok(format!(
        "{} instances, worst rel gap to minimizer {worst_gap:.1e}, slowest solve {slowest:.3}s",
        runs.len()
    ))
}

fn check_solver_feasibility() -> Result<String, String> {
    let mut worst = 0.0_f64;
    let mut count = 0;
    for i in 0..SOLVER_INSTANCES as u64 {
        for (hist, max_iter) in [(0, 1), (6, 10), (6, 200)] {
            let prob = solver_instance(600 + i, hist, 0.0);
            let sol = display::solve(&prob, &Rng::new(i), max_iter, SOLVER_TOL).map_err(err_str)?;
            worst = worst.max(sol.max_feasibility_error);
            count += 1;
        }
    }
    ensure(worst <= 1e-8, || format!("column sums off by {worst:.2e}"))?;
    Ok(format!("{count} solves, worst column-sum error {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Invertible network

fn small_split(seed: u64) -> DatasetSplit<f64> {
    let spec = SynthSpec {
        classes: 3,
        per_class: 10,
        joints: 4,
        frames: 12,
        ..SynthSpec::default()
    };
    synth_generate(&Rng::new(seed).substream("synth"), &spec).expect("synthetic split")
}

fn small_spec() -> ModelSpec {
    ModelSpec {
        filters: 2,
        attention_dim: 2,
        layers: 2,
        ..ModelSpec::default()
    }
}

fn small_loss(regularizer: Regularizer, delta: f64) -> LossConfig {
    LossConfig {
        regularizer,
        delta,
        epochs: 150,
        lr0: 1e-2,
        ..LossConfig::default()
    }
}

/// The trained configurations covered by the invertibility and bound checks.
fn trained_models() -> Result<Vec<(String, GcnModel<f64>)>, String> {
    let split = small_split(41);
    let configs = [
        (Regularizer::None, 0.0),
        (Regularizer::Or, 0.0),
        (Regularizer::Cn, 0.0),
        (Regularizer::None, 10.0),
        (Regularizer::Or, 10.0),
    ];
    configs
        .iter()
        .map(|&(reg, delta)| {
            let t = al_loop::train_baseline(&split, &small_spec(), &small_loss(reg, delta), 41).map_err(err_str)?;
            Ok((format!("{reg:?}/delta={delta}"), t.model))
        })
        .collect()
}

/// Largest `‖f⁻¹(f(x)) − x‖ / (1 + ‖x‖)` over `count` Gaussian vectors.
pub fn round_trip_error(model: &GcnModel<f64>, count: usize, seed: u64) -> Result<f64, String> {
    let mut rng = Rng::new(seed);
    let inv = model.inverter().map_err(err_str)?;
    let mut worst = 0.0_f64;
    for _ in 0..count {
        let x: Vec<f64> = (0..model.ambient_dim).map(|_| rng.normal()).collect();
        let z = model.forward(&x).map_err(err_str)?;
        let back = inv.apply(&z).map_err(err_str)?;
        worst = worst.max(sq_dist(&back, &x).sqrt() / (1.0 + norm(&x)));
    }
    Ok(worst)
}

fn check_invertibility() -> Result<String, String> {
    let models = trained_models()?;
    let mut details = Vec::new();
    for (name, model) in models.iter().filter(|(n, _)| n.starts_with("Or") || n.ends_with("=10")) {
        let err = round_trip_error(model, 100, 3)?;
        ensure(err <= 1e-6, || format!("{name}: round-trip error {err:.2e}"))?;
        details.push(format!("{name} {err:.1e}"));
    }
    Ok(format!("100 vectors each; {}", details.join(", ")))
}

/// Largest product of forward and inverse difference ratios over `pairs`
/// random pairs.
pub fn empirical_km_ratio(model: &GcnModel<f64>, pairs: usize, seed: u64) -> Result<f64, String> {
    let mut rng = Rng::new(seed);
    let inv = model.inverter().map_err(err_str)?;
    let p = model.ambient_dim;
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let x: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        let (fx, fy) = (model.forward(&x).map_err(err_str)?, model.forward(&y).map_err(err_str)?);
        let z: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        let w: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        let (gz, gw) = (inv.apply(&z).map_err(err_str)?, inv.apply(&w).map_err(err_str)?);
        let fwd = sq_dist(&fx, &fy).sqrt() / sq_dist(&x, &y).sqrt();
        let bwd = sq_dist(&gz, &gw).sqrt() / sq_dist(&z, &w).sqrt();
        worst = worst.max(fwd * bwd);
    }
    Ok(worst)
}

fn orthonormal_model(p: usize, seed: u64) -> GcnModel<f64> {
    let mut rng = Rng::new(seed);
    let adj = Matrix::identity(p);
    let spec = ModelSpec {
        filters: 1,
        attention_dim: 0,
        layers: 3,
        slope_pos: 1.0,
        slope_neg: 1.0,
    };
    let mut model = GcnModel::init(&spec, &adj, 2, 2, &mut rng).expect("orthonormal model");
    for layer in &mut model.layers {
        layer.w_hat = svd(&rng.gaussian_matrix::<f64>(p, p, 1.0)).expect("svd").u;
    }
    model
}

fn check_lipschitz_bound() -> Result<String, String> {
    let mut details = Vec::new();
    for (name, model) in trained_models()? {
        let bound = model.km_bound().map_err(err_str)?;
        let ratio = empirical_km_ratio(&model, 100, 5)?;
        ensure(ratio <= bound + 1e-9, || format!("{name}: empirical ratio {ratio} exceeds bound {bound}"))?;
        details.push(format!("{name} {ratio:.2}<={bound:.3e}"));
    }
    let mut identity = orthonormal_model(6, 1);
    identity.layers.iter_mut().for_each(|l| l.w_hat = Matrix::identity(6));
    let exact = identity.km_bound().map_err(err_str)?;
    ensure(exact == 1.0, || format!("identity layers give bound {exact}, expected exactly 1"))?;
    let ortho = orthonormal_model(6, 2).km_bound().map_err(err_str)?;
    ensure((ortho - 1.0).abs() <= 1e-12, || format!("orthonormal layers give bound {ortho}"))?;
    Ok(format!("{}; orthonormal u=l bound {ortho}", details.join(", ")))
}

// ---------------------------------------------------------------------------
// Gradients and reparametrization

fn toy_model(att: usize, seed: u64) -> (GcnModel<f64>, Vec<SkeletonGraph<f64>>) {
    // 3 nodes x 2 filters: p = 6, two invertible layers.
    let adj = Matrix::from_rows(&[
        vec![0.5, 0.5, 0.0],
        vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        vec![0.0, 0.5, 0.5],
    ]);
    let spec = ModelSpec {
        filters: 2,
        attention_dim: att,
        layers: 2,
        ..ModelSpec::default()
    };
    let mut rng = Rng::new(seed);
    let model = GcnModel::init(&spec, &adj, 4, 3, &mut rng).expect("toy model");
    let graphs = (0..5)
        .map(|i| SkeletonGraph {
            descriptors: rng.gaussian_matrix(3, 4, 1.0),
            adjacency: adj.clone(),
            label: i % 3,
        })
        .collect();
    (model, graphs)
}

/// Worst relative disagreement between analytic and central-difference
/// gradients over every parameter.
pub fn gradient_error(model: &GcnModel<f64>, graphs: &[SkeletonGraph<f64>], cfg: &LossConfig) -> Result<f64, String> {
    let batch: Vec<&SkeletonGraph<f64>> = graphs.iter().collect();
    let (_, grads) = loss_and_grad(model, &batch, cfg).map_err(err_str)?;
    let blocks: Vec<Matrix<f64>> = grads.blocks().into_iter().map(|(_, m)| m.clone()).collect();
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for (bi, g) in blocks.iter().enumerate() {
        for (k, &an) in g.as_slice().iter().enumerate() {
            let eval = |sign: f64| -> Result<f64, String> {
                let mut m = model.clone();
                param_blocks_mut(&mut m)[bi].as_mut_slice()[k] += sign * h;
                Ok(total_loss(&m, &batch, cfg).map_err(err_str)?.total)
            };
            let fd = (eval(1.0)? - eval(-1.0)?) / (2.0 * h);
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-3));
        }
    }
    Ok(worst)
}

fn check_gradients() -> Result<String, String> {
    let mut details = Vec::new();
    for (reg, att) in [(Regularizer::None, 2), (Regularizer::Or, 0), (Regularizer::Cn, 2)] {
        let (model, graphs) = toy_model(att, 11);
        let cfg = LossConfig {
            regularizer: reg,
            lambda: Some(0.3),
            ..LossConfig::default()
        };
        let err = gradient_error(&model, &graphs, &cfg)?;
        ensure(err < 1e-4, || format!("{reg:?}: relative error {err:.2e}"))?;
        details.push(format!("{reg:?} {err:.1e}"));
    }
    Ok(format!("worst relative error: {}", details.join(", ")))
}

fn sorted_eigs(m: &Matrix<f64>) -> Result<Vec<(f64, f64)>, String> {
    let mut e: Vec<(f64, f64)> = eigvals(m).map_err(err_str)?.into_iter().map(|c| (c.re, c.im)).collect();
    e.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(e)
}

fn check_reparametrization() -> Result<String, String> {
    let mut rng = Rng::new(17);
    let mut worst = 0.0_f64;
    for delta in [0.5, 10.0, 1e5] {
        for _ in 0..5 {
            let w = rng.gaussian_matrix::<f64>(6, 6, 1.0);
            let base = sorted_eigs(&w)?;
            let shifted = sorted_eigs(&w.shifted(delta))?;
            for (a, b) in base.iter().zip(&shifted) {
                worst = worst.max((a.0 + delta - b.0).abs()).max((a.1 - b.1).abs());
            }
        }
    }
    ensure(worst <= 1e-8, || format!("eigenvalue shift off by {worst:.2e}"))?;
    let (model, graphs) = toy_model(2, 21);
    let shifted = model.with_delta(2.5);
    let folded = GcnModel {
        layers: shifted
            .layers
            .iter()
            .map(|l| GcnLayer {
                w_hat: l.effective_weight(),
                delta: 0.0,
                ..l.clone()
            })
            .collect(),
        ..shifted.clone()
    };
    let batch: Vec<&SkeletonGraph<f64>> = graphs.iter().collect();
    for reg in [Regularizer::None, Regularizer::Or, Regularizer::Cn] {
        let cfg = LossConfig {
            regularizer: reg,
            ..LossConfig::default()
        };
        let (_, a) = loss_and_grad(&shifted, &batch, &cfg).map_err(err_str)?;
        let (_, b) = loss_and_grad(&folded, &batch, &cfg).map_err(err_str)?;
        ensure(a.layers == b.layers, || format!("{reg:?}: shifted and folded layer gradients differ"))?;
    }
    Ok(format!("eigenvalue shift error {worst:.1e}; layer gradients identical"))
}

// ---------------------------------------------------------------------------
// Fréchet distance

fn check_frechet() -> Result<String, String> {
    let (d, n) = (4, 10_000);
    let mut rng = Rng::new(23);
    let shift = [1.0, -0.5, 0.8, 0.3];
    let draw = |rng: &mut Rng, offset: &[f64]| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|j| rng.normal() + offset[j]).collect()).collect()
    };
    let a = draw(&mut rng, &[0.0; 4]);
    let b = draw(&mut rng, &shift);
    let fa = GaussianSummary::fit(&a).map_err(err_str)?;
    let fb = GaussianSummary::fit(&b).map_err(err_str)?;
    let fid = metrics::frechet_distance(&fa, &fb).map_err(err_str)?;
    let expected: f64 = shift.iter().map(|s| s * s).sum();
    let rel = (fid - expected).abs() / expected;
    ensure(rel <= 0.05, || format!("shifted populations: {fid:.4} vs closed form {expected:.4}"))?;
    let same = metrics::frechet_distance(&fa, &fa).map_err(err_str)?;
    ensure(same.abs() <= 1e-3, || format!("identical populations: {same:.2e}"))?;
    Ok(format!("shifted {fid:.4} vs {expected:.4} ({:.1}%), identical {same:.1e}", 100.0 * rel))
}

// ---------------------------------------------------------------------------
// Pipeline

fn check_pipeline() -> Result<String, String> {
    let split = small_split(31);
    let loss = small_loss(Regularizer::Or, 0.0);
    let seed = 31;
    let base = al_loop::train_baseline(&split, &small_spec(), &loss, seed).map_err(err_str)?;
    let base_acc = metrics::accuracy(&base.model, &split.test).map_err(err_str)?;
    let base_cn = base.model.observed_cn().value;
    let cfg = AlConfig {
        strategy: Strategy::Random,
        per_round_k: Some(7),
        checkpoints: vec![1.0],
        total_budget: Some(1.0),
        retrain_from_scratch: true,
        model: small_spec(),
        retrain: loss,
        solver: SolverSettings::default(),
    };
    let rep = al_loop::run(&cfg, &split, seed).map_err(err_str)?;
    let row = rep.rows.last().ok_or("AL run produced no rows")?;
    ensure(row.accuracy.to_bits() == base_acc.to_bits(), || {
        format!("accuracy {} vs baseline {base_acc}", row.accuracy)
    })?;
    ensure(row.observed_cn.to_bits() == base_cn.to_bits(), || {
        format!("observed CN {} vs baseline {base_cn}", row.observed_cn)
    })?;
    ensure(rep.model == base.model, || "final weights differ from baseline".into())?;
    Ok(format!("accuracy {base_acc:.4}, observed CN {base_cn:.4}, bit-identical"))
}

// ---------------------------------------------------------------------------
// Checkpoint

fn check_checkpoint(path: &Path) -> Result<String, String> {
    let model = GcnModel::<f64>::load(path).map_err(|e| format!("load: {e}"))?;
    model.validate().map_err(|e| format!("validate: {e}"))?;
    let cn = model.observed_cn();
    ensure(!cn.singular, || "a layer is numerically singular".into())?;
    let err = round_trip_error(&model, 100, 9)?;
    ensure(err <= 1e-6, || format!("round-trip error {err:.2e}"))?;
    let bound = model.km_bound().map_err(err_str)?;
    let ratio = empirical_km_ratio(&model, 100, 10)?;
    ensure(ratio <= bound + 1e-9, || format!("empirical ratio {ratio} exceeds bound {bound}"))?;
    Ok(format!("observed CN {:.3}, round-trip {err:.1e}, ratio {ratio:.2} <= {bound:.3e}", cn.value))
}
