//! Exemplar design: entropy-regularized soft clustering with a repulsion term
//! against previously displayed exemplars, solved by fixed-point iteration.
//!
//! Objective over memberships `μ ∈ ℝ^{n×K}` (column-stochastic) and
//! exemplars `V ∈ ℝ^{p×K}`:
//!
//! ```text
//! tr(μ D(X,V)ᵀ) + α Σ_{k,k'} exp(−‖V_k − H_k'‖²/σ) + β tr(VᵀV) + γ tr(μᵀ log μ)
//! ```
//!
//! with `D` the squared Euclidean distance. The μ-step is the exact
//! softmin minimizer; the V-step solves the stationarity condition with the
//! similarity weights frozen at the current iterate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{sq_dist, Matrix, NumError, Rng};
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
/// Column sums of μ must equal one within this tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-8;
const UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum DisplayError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("display size K = {k} must satisfy 1 <= K <= n = {n}")]
    DisplaySize { k: usize, n: usize },
    #[error("gamma too small: column {column} underflows")]
    GammaTooSmall { column: usize },
    #[error("membership column {0} sums to zero")]
    ZeroColumn(usize),
    #[error("infeasible membership: {0}")]
    Infeasible(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite exemplars at iteration {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    Dynamic,
    Fixed(f64),
}

/// One instance of the exemplar-design problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplayProblem<T> {
    /// Pool samples as columns (`p × n`).
    pub data: Matrix<T>,
    /// Previously displayed exemplars as columns (`p × N`, `N` may be 0).
    pub history: Matrix<T>,
    pub k: usize,
    pub alpha: T,
    pub beta: T,
    /// Similarity bandwidth; `None` picks the median heuristic at
    /// initialization.
    pub sigma: Option<T>,
    pub gamma_mode: GammaMode,
}

impl<T: Scalar> DisplayProblem<T> {
    /// Problem with the default weights `α = 1/(KN)` (0 without history) and
    /// `β = 1/(Kp)`, dynamic `γ` and median-heuristic `σ`.
    pub fn new(data: Matrix<T>, history: Matrix<T>, k: usize) -> Result<Self, DisplayError> {
        let p = data.rows();
        let hn = history.cols();
        let alpha = if hn == 0 { T::zero() } else { T::one() / T::of((k * hn) as f64) };
        let beta = T::one() / T::of((k * p).max(1) as f64);
        let prob = Self {
            data,
            history,
            k,
            alpha,
            beta,
            sigma: None,
            gamma_mode: GammaMode::Dynamic,
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn n(&self) -> usize {
        self.data.cols()
    }

    pub fn p(&self) -> usize {
        self.data.rows()
    }

    pub fn validate(&self) -> Result<(), DisplayError> {
        let n = self.n();
        if self.k == 0 || self.k > n {
            return Err(DisplayError::DisplaySize { k: self.k, n });
        }
        if self.history.cols() > 0 && self.history.rows() != self.p() {
            return Err(DisplayError::Dimension(format!(
                "history has {} rows, data has {}",
                self.history.rows(),
                self.p()
            )));
        }
        if !self.data.all_finite() || !self.history.all_finite() {
            return Err(DisplayError::Parameter("non-finite data or history".into()));
        }
        if self.alpha < T::zero() || self.beta < T::zero() {
            return Err(DisplayError::Parameter("alpha and beta must be >= 0".into()));
        }
        if let Some(s) = self.sigma {
            if !(s > T::zero()) {
                return Err(DisplayError::Parameter("sigma must be > 0".into()));
            }
        }
        if let GammaMode::Fixed(g) = self.gamma_mode {
            if !(g > 0.0) {
                return Err(DisplayError::Parameter("fixed gamma must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DisplaySolution<T> {
    pub mu: Matrix<T>,
    pub v: Matrix<T>,
    /// Objective after initialization and after every iteration, each at the
    /// `γ` in force for that iteration.
    pub objective_trace: Vec<f64>,
    pub gamma_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub sigma: T,
    /// `γ` of the final iteration.
    pub gamma: T,
    /// Largest deviation of a μ column sum from 1 over all iterations.
    pub max_feasibility_error: f64,
}

/// `D_ik = ‖x_i − V_k‖²` (`n × K`).
pub fn distance_matrix<T: Scalar>(x: &Matrix<T>, v: &Matrix<T>) -> Result<Matrix<T>, DisplayError> {
    if x.rows() != v.rows() {
        return Err(DisplayError::Dimension(format!("X has {} rows, V has {}", x.rows(), v.rows())));
    }
    let xc: Vec<Vec<T>> = (0..x.cols()).map(|i| x.col(i)).collect();
    let vc: Vec<Vec<T>> = (0..v.cols()).map(|k| v.col(k)).collect();
    Ok(Matrix::from_fn(x.cols(), v.cols(), |i, k| sq_dist(&xc[i], &vc[k])))
}

/// `S_{k'k} = exp(−‖V_k − H_k'‖²/σ)` (`N × K`), via the Gram expansion.
pub fn similarity_s<T: Scalar>(v: &Matrix<T>, h: &Matrix<T>, sigma: T) -> Result<Matrix<T>, DisplayError> {
    if !(sigma > T::zero()) {
        return Err(DisplayError::Parameter("sigma must be > 0".into()));
    }
    if v.rows() != h.rows() {
        return Err(DisplayError::Dimension(format!("V has {} rows, H has {}", v.rows(), h.rows())));
    }
    let hv = h.t_matmul(v)?;
    let vv: Vec<T> = (0..v.cols()).map(|k| v.col(k).iter().map(|&a| a * a).sum()).collect();
    let hh: Vec<T> = (0..h.cols()).map(|j| h.col(j).iter().map(|&a| a * a).sum()).collect();
    let two = T::of(2.0);
    Ok(Matrix::from_fn(h.cols(), v.cols(), |j, k| {
        // Clamp the rounding-level negatives of the expansion.
        let d = (vv[k] + hh[j] - two * hv[(j, k)]).max(T::zero());
        (-d / sigma).exp()
    }))
}

/// `exp(−D/γ)` elementwise.
pub fn mu_hat<T: Scalar>(d: &Matrix<T>, gamma: T) -> Result<Matrix<T>, DisplayError> {
    if !(gamma > T::zero()) {
        return Err(DisplayError::Parameter("gamma must be > 0".into()));
    }
    let out = d.map(|x| (-x / gamma).exp());
    for k in 0..out.cols() {
        if (0..out.rows()).all(|i| out[(i, k)].to_f64_lossy() < UNDERFLOW) {
            return Err(DisplayError::GammaTooSmall { column: k });
        }
    }
    Ok(out)
}

/// `μ̂ diag(1ᵀμ̂)⁻¹`.
pub fn normalize_mu<T: Scalar>(mu_hat: &Matrix<T>) -> Result<Matrix<T>, DisplayError> {
    let mut out = mu_hat.clone();
    for k in 0..out.cols() {
        let s: T = (0..out.rows()).map(|i| out[(i, k)]).sum();
        if !(s > T::zero()) {
            return Err(DisplayError::ZeroColumn(k));
        }
        for i in 0..out.rows() {
            out[(i, k)] /= s;
        }
    }
    Ok(out)
}

/// Normalized memberships for distances `D` at bandwidth `γ`, shifting each
/// column by its minimum first so that small `γ` cannot underflow.
fn softmin_columns<T: Scalar>(d: &Matrix<T>, gamma: T) -> Result<Matrix<T>, DisplayError> {
    let mut shifted = d.clone();
    for k in 0..d.cols() {
        let mn = (0..d.rows()).map(|i| d[(i, k)]).fold(T::infinity(), T::min);
        for i in 0..d.rows() {
            shifted[(i, k)] = d[(i, k)] - mn;
        }
    }
    normalize_mu(&mu_hat(&shifted, gamma)?)
}

/// Exemplar update
/// `V̂ = Xμ + (α/σ)(V diag(1ᵀS) − HS)`, `V = V̂ (diag(1ᵀμ) + βI)⁻¹`.
///
/// `diag(1ᵀμ)` is the identity for normalized μ; it is kept as written.
#[allow(clippy::too_many_arguments)]
pub fn v_update<T: Scalar>(
    x: &Matrix<T>,
    mu: &Matrix<T>,
    v: &Matrix<T>,
    h: &Matrix<T>,
    s: Option<&Matrix<T>>,
    alpha: T,
    beta: T,
    sigma: T,
) -> Result<Matrix<T>, DisplayError> {
    let mut vhat = x.matmul(mu)?;
    if let Some(s) = s.filter(|_| h.cols() > 0 && alpha != T::zero()) {
        let c = alpha / sigma;
        let hs = h.matmul(s)?;
        for k in 0..v.cols() {
            let col_sum: T = (0..s.rows()).map(|j| s[(j, k)]).sum();
            for r in 0..v.rows() {
                vhat[(r, k)] += c * (v[(r, k)] * col_sum - hs[(r, k)]);
            }
        }
    }
    for k in 0..vhat.cols() {
        let denom: T = (0..mu.rows()).map(|i| mu[(i, k)]).sum::<T>() + beta;
        if denom == T::zero() {
            return Err(DisplayError::Parameter("singular exemplar normalization".into()));
        }
        for r in 0..vhat.rows() {
            vhat[(r, k)] /= denom;
        }
    }
    Ok(vhat)
}

/// `γ = sqrt(‖D‖₁/(nK))`, the positive root of `γ = ‖D/γ‖₁/(nK)`; 1 for
/// an all-zero `D`.
pub fn dynamic_gamma<T: Scalar>(d: &Matrix<T>) -> T {
    let nk = (d.rows() * d.cols()).max(1);
    let l1: T = d.as_slice().iter().map(|x| x.abs()).sum();
    if l1 == T::zero() {
        return T::one();
    }
    (l1 / T::of(nk as f64)).sqrt()
}

fn check_feasible<T: Scalar>(mu: &Matrix<T>) -> Result<f64, DisplayError> {
    let mut worst = 0.0_f64;
    for k in 0..mu.cols() {
        let mut s = 0.0;
        for i in 0..mu.rows() {
            let m = mu[(i, k)].to_f64_lossy();
            if m < 0.0 || !m.is_finite() {
                return Err(DisplayError::Infeasible(format!("entry ({i}, {k}) = {m}")));
            }
            s += m;
        }
        worst = worst.max((s - 1.0).abs());
    }
    Ok(worst)
}

/// Objective value at `(μ, V)` with entropy weight `γ`.
pub fn eval_objective<T: Scalar>(
    problem: &DisplayProblem<T>,
    mu: &Matrix<T>,
    v: &Matrix<T>,
    gamma: T,
    sigma: T,
) -> Result<T, DisplayError> {
    let err = check_feasible(mu)?;
    if err > FEASIBILITY_TOL {
        return Err(DisplayError::Infeasible(format!("column sum off by {err:e}")));
    }
    let d = distance_matrix(&problem.data, v)?;
    let fit: T = mu.as_slice().iter().zip(d.as_slice()).map(|(&m, &dd)| m * dd).sum();
    let mut rep = T::zero();
    if problem.history.cols() > 0 && problem.alpha != T::zero() {
        rep = problem.alpha * similarity_s(v, &problem.history, sigma)?.as_slice().iter().copied().sum::<T>();
    }
    let shrink = problem.beta * v.as_slice().iter().map(|&a| a * a).sum::<T>();
    let ent: T = mu
        .as_slice()
        .iter()
        .map(|&m| if m > T::zero() { m * m.ln() } else { T::zero() })
        .sum();
    Ok(fit + rep + shrink + gamma * ent)
}

/// `D²`-weighted seeding: the first column uniformly, each further column
/// with probability proportional to the squared distance to the nearest
/// chosen one.
fn seed_exemplars<T: Scalar>(x: &Matrix<T>, k: usize, rng: &mut Rng) -> Matrix<T> {
    let n = x.cols();
    let cols: Vec<Vec<T>> = (0..n).map(|i| x.col(i)).collect();
    let mut chosen = vec![rng.below(n)];
    let mut best: Vec<f64> = cols.iter().map(|c| sq_dist(c, &cols[chosen[0]]).to_f64_lossy()).collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &b) in best.iter().enumerate() {
                if r < b {
                    pick = i;
                    break;
                }
                r -= b;
            }
            pick
        } else {
            rng.below(n)
        };
        chosen.push(next);
        for (b, c) in best.iter_mut().zip(&cols) {
            *b = b.min(sq_dist(c, &cols[next]).to_f64_lossy());
        }
    }
    Matrix::from_columns(&chosen.iter().map(|&i| cols[i].clone()).collect::<Vec<_>>())
}

/// Median of `‖V_k − H_k'‖²` over all pairs; 1 without history or when the
/// median is zero.
pub fn median_sigma<T: Scalar>(v: &Matrix<T>, h: &Matrix<T>) -> T {
    if h.cols() == 0 {
        return T::one();
    }
    let mut d: Vec<f64> = Vec::with_capacity(v.cols() * h.cols());
    for k in 0..v.cols() {
        for j in 0..h.cols() {
            d.push(sq_dist(&v.col(k), &h.col(j)).to_f64_lossy());
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    if med > 0.0 {
        T::of(med)
    } else {
        T::one()
    }
}

/// Fixed-point iteration from a seeded random start.
pub fn solve<T: Scalar>(
    problem: &DisplayProblem<T>,
    rng: &Rng,
    max_iter: usize,
    tol: f64,
) -> Result<DisplaySolution<T>, DisplayError> {
    problem.validate()?;
    let mut init_rng = rng.substream("display-init");
    let (n, k) = (problem.n(), problem.k);
    let x = &problem.data;
    let h = &problem.history;
    let mut v = seed_exemplars(x, k, &mut init_rng);
    let mut mu = Matrix::zeros(n, k);
    for c in 0..k {
        let col: Vec<T> = init_rng.simplex_point(n).into_iter().map(T::of).collect();
        mu.set_col(c, &col);
    }
    let sigma = problem.sigma.unwrap_or_else(|| median_sigma(&v, h));
    let gamma_of = |d: &Matrix<T>| match problem.gamma_mode {
        GammaMode::Dynamic => dynamic_gamma(d),
        GammaMode::Fixed(g) => T::of(g),
    };
    let mut gamma = gamma_of(&distance_matrix(x, &v)?);
    let mut worst = check_feasible(&mu)?;
    let mut objective_trace = vec![eval_objective(problem, &mu, &v, gamma, sigma)?.to_f64_lossy()];
    let mut gamma_trace = vec![gamma.to_f64_lossy()];
    let scale = 1.0 + x.frobenius_norm().to_f64_lossy() / (n as f64).sqrt();
    let threshold = tol * scale;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        let d = distance_matrix(x, &v)?;
        gamma = gamma_of(&d);
        mu = softmin_columns(&d, gamma)?;
        worst = worst.max(check_feasible(&mu)?);
        let s = if h.cols() > 0 { Some(similarity_s(&v, h, sigma)?) } else { None };
        let v_next = v_update(x, &mu, &v, h, s.as_ref(), problem.alpha, problem.beta, sigma)?;
        if !v_next.all_finite() {
            return Err(DisplayError::NonFinite(it));
        }
        let change = (0..k)
            .map(|c| sq_dist(&v_next.col(c), &v.col(c)).to_f64_lossy().sqrt())
            .fold(0.0, f64::max);
        v = v_next;
        iterations = it + 1;
        objective_trace.push(eval_objective(problem, &mu, &v, gamma, sigma)?.to_f64_lossy());
        gamma_trace.push(gamma.to_f64_lossy());
        if change < threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("display solver hit max_iter = {max_iter} without converging");
    }
    Ok(DisplaySolution {
        mu,
        v,
        objective_trace,
        gamma_trace,
        iterations,
        converged,
        sigma,
        gamma,
        max_feasibility_error: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_problem(seed: u64, n: usize, p: usize, k: usize, hist: usize) -> DisplayProblem<f64> {
        let mut rng = Rng::new(seed);
        let x = rng.gaussian_matrix(p, n, 1.0);
        let h = rng.gaussian_matrix(p, hist, 1.0);
        DisplayProblem::new(x, h, k).unwrap()
    }

    #[test]
    fn distance_examples() {
        let x = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        let v = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        assert_eq!(distance_matrix(&x, &v).unwrap()[(0, 0)], 9.0);
        let mut rng = Rng::new(1);
        let x: Matrix<f64> = rng.gaussian_matrix(4, 10, 1.0);
        let v: Matrix<f64> = rng.gaussian_matrix(4, 3, 1.0);
        let d = distance_matrix(&x, &v).unwrap();
        for i in 0..10 {
            for k in 0..3 {
                let mut s = 0.0;
                for r in 0..4 {
                    s += (x[(r, i)] - v[(r, k)]).powi(2);
                }
                assert!((d[(i, k)] - s).abs() < 1e-10);
            }
        }
        let same = distance_matrix(&x, &Matrix::from_columns(&[x.col(2)])).unwrap();
        assert_eq!(same[(2, 0)], 0.0);
    }

    #[test]
    fn similarity_examples() {
        let mut rng = Rng::new(2);
        let v: Matrix<f64> = rng.gaussian_matrix(3, 4, 1.0);
        let h: Matrix<f64> = rng.gaussian_matrix(3, 2, 1.0);
        let s = similarity_s(&v, &h, 0.7).unwrap();
        for j in 0..2 {
            for k in 0..4 {
                let d: f64 = (0..3).map(|r| (v[(r, k)] - h[(r, j)]).powi(2)).sum();
                assert!((s[(j, k)] - (-d / 0.7).exp()).abs() < 1e-12);
                assert!(s[(j, k)] > 0.0 && s[(j, k)] <= 1.0);
            }
        }
        let hv = Matrix::from_columns(&[v.col(1)]);
        assert!((similarity_s(&v, &hv, 1.0).unwrap()[(0, 1)] - 1.0).abs() < 1e-12);
        let wide = similarity_s(&v, &h, 1e12).unwrap();
        assert!(wide.as_slice().iter().all(|&x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn membership_examples() {
        let d = Matrix::<f64>::zeros(3, 2);
        assert!(mu_hat(&d, 1.0).unwrap().as_slice().iter().all(|&x| x == 1.0));
        let d = Matrix::from_fn(4, 2, |i, k| (i + 3 * k) as f64 * 0.7);
        let a = mu_hat(&d, 1.0).unwrap();
        let b = mu_hat(&d, 2.0).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((y - x.sqrt()).abs() < 1e-12);
        }
        for k in 0..2 {
            let col: Vec<f64> = (0..4).map(|i| a[(i, k)]).collect();
            assert!(col.windows(2).all(|w| w[0] > w[1]));
        }
        assert!(matches!(
            mu_hat(&Matrix::from_vec(2, 1, vec![1e6, 2e6]).unwrap(), 1.0),
            Err(DisplayError::GammaTooSmall { column: 0 })
        ));
        let u = normalize_mu(&Matrix::<f64>::from_fn(5, 2, |_, _| 3.0)).unwrap();
        assert!(u.as_slice().iter().all(|&x| (x - 0.2).abs() < 1e-15));
        let st = normalize_mu(&u).unwrap();
        assert!(st.sub(&u).unwrap().max_abs() < 1e-15);
        assert!(matches!(normalize_mu(&Matrix::<f64>::zeros(2, 1)), Err(DisplayError::ZeroColumn(0))));
    }

    #[test]
    fn v_update_examples() {
        let mut rng = Rng::new(3);
        let x: Matrix<f64> = rng.gaussian_matrix(3, 5, 1.0);
        let empty = Matrix::zeros(3, 0);
        let mu = normalize_mu(&Matrix::from_fn(5, 2, |i, k| 1.0 + (i * k) as f64)).unwrap();
        let v0 = Matrix::zeros(3, 2);
        let out = v_update(&x, &mu, &v0, &empty, None, 0.0, 0.25, 1.0).unwrap();
        let xm = x.matmul(&mu).unwrap().scale(1.0 / 1.25);
        assert!(out.sub(&xm).unwrap().max_abs() < 1e-15);
        let id = Matrix::identity(5);
        let out = v_update(&x, &id, &x, &empty, None, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn repulsion_pushes_away_from_history() {
        // 2-D, one exemplar slightly offset from one history point.
        let x = Matrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap();
        let mu = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let h = Matrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap();
        let coincide = v_update(&x, &mu, &h, &h, Some(&similarity_s(&h, &h, 1.0).unwrap()), 0.5, 0.0, 1.0).unwrap();
        assert!(coincide.max_abs() < 1e-15);
        let v = Matrix::from_vec(2, 1, vec![0.1, -0.05]).unwrap();
        let s = similarity_s(&v, &h, 1.0).unwrap();
        let with = v_update(&x, &mu, &v, &h, Some(&s), 0.5, 0.0, 1.0).unwrap();
        let without = v_update(&x, &mu, &v, &h, Some(&s), 0.0, 0.0, 1.0).unwrap();
        let disp = [with[(0, 0)] - without[(0, 0)], with[(1, 0)] - without[(1, 0)]];
        let away = [v[(0, 0)] - h[(0, 0)], v[(1, 0)] - h[(1, 0)]];
        assert!(disp[0] * away[0] + disp[1] * away[1] > 0.0);
    }

    #[test]
    fn v_step_is_stationary_for_objective() {
        // At (μ, V*) with V* = v_update(μ, V*), the V-gradient of the objective
        // vanishes; check with central differences.
        let prob = gaussian_problem(4, 12, 3, 2, 3);
        let sol = solve(&prob, &Rng::new(5), 500, 1e-13).unwrap();
        assert!(sol.converged);
        let f = |v: &Matrix<f64>| eval_objective(&prob, &sol.mu, v, sol.gamma, sol.sigma).unwrap();
        let h = 1e-6;
        for idx in 0..sol.v.as_slice().len() {
            let mut a = sol.v.clone();
            let mut b = sol.v.clone();
            a.as_mut_slice()[idx] += h;
            b.as_mut_slice()[idx] -= h;
            let g = (f(&a) - f(&b)) / (2.0 * h);
            assert!(g.abs() < 1e-6, "objective gradient {g} at entry {idx}");
        }
    }

    #[test]
    fn dynamic_gamma_examples() {
        let ones = Matrix::<f64>::from_fn(6, 3, |_, _| 1.0);
        assert!((dynamic_gamma(&ones) - 1.0).abs() < 1e-15);
        let d = Matrix::from_fn(5, 2, |i, k| (i as f64 + 1.0) * (k as f64 + 0.5));
        let g = dynamic_gamma(&d);
        assert!((dynamic_gamma(&d.scale(9.0)) - 3.0 * g).abs() < 1e-12);
        let lhs = d.as_slice().iter().map(|x| (x / g).abs()).sum::<f64>() / 10.0;
        assert!((lhs - g).abs() < 1e-10);
        assert_eq!(dynamic_gamma(&Matrix::<f64>::zeros(3, 3)), 1.0);
    }

    #[test]
    fn objective_examples() {
        let x = Matrix::<f64>::zeros(2, 4);
        let prob = DisplayProblem::new(x, Matrix::zeros(2, 0), 2).unwrap();
        let mu = Matrix::from_fn(4, 2, |_, _| 0.25);
        let v = Matrix::zeros(2, 2);
        let got = eval_objective(&prob, &mu, &v, 0.7, 1.0).unwrap();
        let mut ent = 0.0;
        for _ in 0..2 {
            for _ in 0..4 {
                ent += 0.25 * 0.25f64.ln();
            }
        }
        assert!((got - 0.7 * ent).abs() < 1e-12);
        assert!((got - 0.7 * 2.0 * (0.25f64).ln()).abs() < 1e-12);
        let bad = Matrix::from_fn(4, 2, |_, _| 0.3);
        assert!(eval_objective(&prob, &bad, &v, 1.0, 1.0).is_err());
    }

    #[test]
    fn fixed_gamma_descent_without_history() {
        for seed in 0..5 {
            let mut prob = gaussian_problem(10 + seed, 30, 4, 3, 0);
            prob.gamma_mode = GammaMode::Fixed(0.8);
            let sol = solve(&prob, &Rng::new(seed), 100, 1e-9).unwrap();
            for w in sol.objective_trace[1..].windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "objective rose {} -> {}", w[0], w[1]);
            }
            assert!(sol.max_feasibility_error < FEASIBILITY_TOL);
        }
    }

    #[test]
    fn separated_clusters_recover_means() {
        let mut rng = Rng::new(20);
        let mut cols = Vec::new();
        for c in [-10.0, 10.0] {
            for _ in 0..15 {
                cols.push(vec![c + 0.01 * rng.normal(), -c + 0.01 * rng.normal()]);
            }
        }
        let x = Matrix::from_columns(&cols);
        let prob = DisplayProblem::new(x, Matrix::zeros(2, 0), 2).unwrap();
        let sol = solve(&prob, &Rng::new(21), 200, 1e-10).unwrap();
        let mean = |lo: usize| -> Vec<f64> {
            (0..2)
                .map(|r| cols[lo..lo + 15].iter().map(|c| c[r]).sum::<f64>() / 15.0 / (1.0 + prob.beta))
                .collect()
        };
        let (m0, m1) = (mean(0), mean(15));
        let mut hits = [false, false];
        for k in 0..2 {
            let vk = sol.v.col(k);
            if sq_dist(&vk, &m0).sqrt() < 1e-3 {
                hits[0] = true;
            }
            if sq_dist(&vk, &m1).sqrt() < 1e-3 {
                hits[1] = true;
            }
        }
        assert!(hits[0] && hits[1], "exemplars {:?}", sol.v);
    }

    #[test]
    fn k_equals_n_recovers_points() {
        let mut rng = Rng::new(30);
        let x: Matrix<f64> = rng.gaussian_matrix(2, 4, 5.0);
        let mut prob = DisplayProblem::new(x.clone(), Matrix::zeros(2, 0), 4).unwrap();
        prob.beta = 1e-9;
        prob.gamma_mode = GammaMode::Fixed(1e-3);
        let sol = solve(&prob, &Rng::new(31), 200, 1e-12).unwrap();
        for i in 0..4 {
            let xi = x.col(i);
            let best = (0..4).map(|k| sq_dist(&sol.v.col(k), &xi)).fold(f64::INFINITY, f64::min);
            assert!(best.sqrt() < 1e-6);
        }
    }

    #[test]
    fn deterministic_and_fixed_point_consistent() {
        let prob = gaussian_problem(40, 25, 3, 3, 4);
        let a = solve(&prob, &Rng::new(7), 100, DEFAULT_TOL).unwrap();
        let b = solve(&prob, &Rng::new(7), 100, DEFAULT_TOL).unwrap();
        assert_eq!(a, b);
        assert!(a.converged);
        let d = distance_matrix(&prob.data, &a.v).unwrap();
        let mu = softmin_columns(&d, dynamic_gamma(&d)).unwrap();
        let s = similarity_s(&a.v, &prob.history, a.sigma).unwrap();
        let again = v_update(&prob.data, &mu, &a.v, &prob.history, Some(&s), prob.alpha, prob.beta, a.sigma).unwrap();
        let scale = 1.0 + prob.data.frobenius_norm() / 5.0;
        assert!(again.sub(&a.v).unwrap().max_abs() < 10.0 * DEFAULT_TOL * scale);
    }

    #[test]
    fn membership_monotone_in_distance() {
        let prob = gaussian_problem(50, 20, 3, 2, 2);
        let sol = solve(&prob, &Rng::new(8), 100, DEFAULT_TOL).unwrap();
        let d = distance_matrix(&prob.data, &sol.v).unwrap();
        let mu = softmin_columns(&d, sol.gamma).unwrap();
        for k in 0..2 {
            for i in 0..20 {
                for j in 0..20 {
                    if d[(i, k)] < d[(j, k)] {
                        assert!(mu[(i, k)] > mu[(j, k)]);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_problems() {
        let x = Matrix::<f64>::zeros(2, 3);
        assert!(DisplayProblem::new(x.clone(), Matrix::zeros(2, 0), 4).is_err());
        assert!(DisplayProblem::new(x.clone(), Matrix::zeros(2, 0), 0).is_err());
        assert!(DisplayProblem::new(x, Matrix::zeros(3, 1), 2).is_err());
    }
}
