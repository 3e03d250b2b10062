//! Acquisition strategies: random, margin uncertainty, greedy k-center
//! coreset, and exemplar design in the ambient or latent space.
//!
//! Feature matrices hold one sample per column. Selections are returned as
//! column positions into the candidate matrix; the caller maps them back to
//! dataset indices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::display::{solve, DisplayError, DisplayProblem, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::gcn::{GcnError, GcnModel};
use crate::numkit::{sq_dist, Matrix, Rng};
use crate::scalar::Scalar;
use crate::training::softmax;

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("cannot select {k} samples from a pool of {pool}")]
    PoolTooSmall { k: usize, pool: usize },
    #[error("strategy {0} needs a classifier")]
    MissingClassifier(Strategy),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("display solver: {0}")]
    Display(#[from] DisplayError),
    #[error("latent display needs an invertible classifier: {0}")]
    Unstable(GcnError),
    #[error(transparent)]
    Model(#[from] GcnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Margin,
    Coreset,
    DisplayAmbient,
    DisplayLatent,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::Margin,
        Strategy::Coreset,
        Strategy::DisplayAmbient,
        Strategy::DisplayLatent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Margin => "margin",
            Strategy::Coreset => "coreset",
            Strategy::DisplayAmbient => "display_ambient",
            Strategy::DisplayLatent => "display_latent",
        }
    }

    pub fn needs_classifier(self) -> bool {
        !matches!(self, Strategy::Random)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy '{s}' (expected one of random, margin, coreset, display_ambient, display_latent)"))
    }
}

/// Display-solver settings used by the display strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

pub struct AcquisitionRequest<'a, T> {
    /// Ambient features of the unlabeled candidates (`p × n`).
    pub pool: &'a Matrix<T>,
    /// Ambient features of previously acquired samples (`p × N`).
    pub history: &'a Matrix<T>,
    pub k: usize,
    pub classifier: Option<&'a GcnModel<T>>,
    pub strategy: Strategy,
    pub rng: Rng,
    pub solver: SolverSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub margins: Option<Vec<f64>>,
    pub cover_radius: Option<f64>,
    pub objective_trace: Option<Vec<f64>>,
    pub solver_iterations: Option<usize>,
    pub solver_converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionResult<T> {
    /// Distinct column positions into the candidate pool.
    pub selected: Vec<usize>,
    pub designed_ambient: Option<Matrix<T>>,
    pub designed_latent: Option<Matrix<T>>,
    pub diagnostics: Diagnostics,
}

impl<T> AcquisitionResult<T> {
    fn plain(selected: Vec<usize>, diagnostics: Diagnostics) -> Self {
        Self {
            selected,
            designed_ambient: None,
            designed_latent: None,
            diagnostics,
        }
    }
}

/// Global standardization: subtract the pool mean, divide by one pooled scale
/// `s = sqrt(mean ‖x − mean‖² / p)`. A single scale keeps Euclidean geometry
/// up to a similarity transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub scale: T,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(x: &Matrix<T>) -> Self {
        let (p, n) = x.shape();
        let nf = T::of(n.max(1) as f64);
        let mean: Vec<T> = (0..p).map(|r| x.row(r).iter().copied().sum::<T>() / nf).collect();
        let mut ss = T::zero();
        for r in 0..p {
            for &v in x.row(r) {
                ss += (v - mean[r]) * (v - mean[r]);
            }
        }
        let var = ss / (nf * T::of(p.max(1) as f64));
        let scale = if var > T::zero() { var.sqrt() } else { T::one() };
        Self { mean, scale }
    }

    pub fn apply(&self, x: &Matrix<T>) -> Matrix<T> {
        Matrix::from_fn(x.rows(), x.cols(), |r, c| (x[(r, c)] - self.mean[r]) / self.scale)
    }

    pub fn invert(&self, x: &Matrix<T>) -> Matrix<T> {
        Matrix::from_fn(x.rows(), x.cols(), |r, c| x[(r, c)] * self.scale + self.mean[r])
    }
}

fn check(req: &AcquisitionRequest<'_, impl Scalar>) -> Result<(), AcquisitionError> {
    let n = req.pool.cols();
    if req.k == 0 || req.k > n {
        return Err(AcquisitionError::PoolTooSmall { k: req.k, pool: n });
    }
    if req.history.cols() > 0 && req.history.rows() != req.pool.rows() {
        return Err(AcquisitionError::Dimension(format!(
            "history has {} rows, pool has {}",
            req.history.rows(),
            req.pool.rows()
        )));
    }
    if req.strategy.needs_classifier()
        && req.strategy != Strategy::Coreset
        && req.strategy != Strategy::DisplayAmbient
        && req.classifier.is_none()
    {
        return Err(AcquisitionError::MissingClassifier(req.strategy));
    }
    Ok(())
}

/// Dispatch on `req.strategy`.
pub fn acquire<T: Scalar>(req: AcquisitionRequest<'_, T>) -> Result<AcquisitionResult<T>, AcquisitionError> {
    check(&req)?;
    match req.strategy {
        Strategy::Random => Ok(random_select(req.pool.cols(), req.k, req.rng)),
        Strategy::Margin => margin_select(req.pool, req.k, req.classifier.expect("checked")),
        Strategy::Coreset => Ok(coreset_select(req.pool, req.history, req.k)),
        Strategy::DisplayAmbient => display_ambient(req.pool, req.history, req.k, &req.rng, req.solver),
        Strategy::DisplayLatent => display_latent(
            req.pool,
            req.history,
            req.k,
            req.classifier.expect("checked"),
            &req.rng,
            req.solver,
        ),
    }
}

/// `k` uniform draws without replacement.
pub fn random_select<T>(n: usize, k: usize, mut rng: Rng) -> AcquisitionResult<T> {
    AcquisitionResult::plain(rng.sample_without_replacement(n, k), Diagnostics::default())
}

/// Top-1 minus top-2 softmax probability of a logit vector.
pub fn margin<T: Scalar>(logits: &[T]) -> f64 {
    let p = softmax(logits);
    let (mut a, mut b) = (T::neg_infinity(), T::neg_infinity());
    for &v in &p {
        if v > a {
            b = a;
            a = v;
        } else if v > b {
            b = v;
        }
    }
    if b == T::neg_infinity() {
        return 1.0;
    }
    (a - b).to_f64_lossy()
}

/// The `k` smallest margins, ties to the lower position.
pub fn margin_select<T: Scalar>(
    pool: &Matrix<T>,
    k: usize,
    model: &GcnModel<T>,
) -> Result<AcquisitionResult<T>, AcquisitionError> {
    let mut margins = Vec::with_capacity(pool.cols());
    for i in 0..pool.cols() {
        margins.push(margin(&model.logits(&pool.col(i))?));
    }
    let mut order: Vec<usize> = (0..pool.cols()).collect();
    order.sort_by(|&i, &j| margins[i].total_cmp(&margins[j]).then(i.cmp(&j)));
    order.truncate(k);
    Ok(AcquisitionResult::plain(
        order,
        Diagnostics {
            margins: Some(margins),
            ..Diagnostics::default()
        },
    ))
}

/// Position minimizing the summed distance to all others, ties to the lower
/// position.
pub fn medoid<T: Scalar>(cols: &[Vec<T>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, a) in cols.iter().enumerate() {
        let s: f64 = cols.iter().map(|b| sq_dist(a, b).to_f64_lossy().sqrt()).sum();
        if s < best.0 {
            best = (s, i);
        }
    }
    best.1
}

/// Greedy k-center. Anchors are the history columns, or the pool medoid when
/// the history is empty; the medoid itself is only an anchor and is not
/// selected. Each step adds the candidate farthest from every anchor and
/// every selected point.
pub fn coreset_select<T: Scalar>(pool: &Matrix<T>, history: &Matrix<T>, k: usize) -> AcquisitionResult<T> {
    let cols: Vec<Vec<T>> = (0..pool.cols()).map(|i| pool.col(i)).collect();
    let anchors: Vec<Vec<T>> = if history.cols() > 0 {
        (0..history.cols()).map(|j| history.col(j)).collect()
    } else {
        vec![cols[medoid(&cols)].clone()]
    };
    let mut nearest: Vec<f64> = cols
        .iter()
        .map(|c| {
            anchors
                .iter()
                .map(|a| sq_dist(c, a).to_f64_lossy())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    // Distance to selected points only; breaks ties of `nearest` so that a
    // point coinciding with the virtual anchor beats a duplicate selection.
    let mut to_selected = vec![f64::INFINITY; cols.len()];
    let mut taken = vec![false; cols.len()];
    let mut selected = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for (i, &d) in nearest.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let better = best.is_none_or(|b| d > nearest[b] || (d == nearest[b] && to_selected[i] > to_selected[b]));
            if better {
                best = Some(i);
            }
        }
        let pick = best.expect("k <= pool");
        taken[pick] = true;
        selected.push(pick);
        for ((d, s), c) in nearest.iter_mut().zip(to_selected.iter_mut()).zip(&cols) {
            let e = sq_dist(c, &cols[pick]).to_f64_lossy();
            *d = d.min(e);
            *s = s.min(e);
        }
    }
    let radius = nearest.iter().copied().fold(0.0, f64::max).sqrt();
    AcquisitionResult::plain(
        selected,
        Diagnostics {
            cover_radius: Some(radius),
            ..Diagnostics::default()
        },
    )
}

/// For each exemplar column in order, the nearest not-yet-matched pool
/// column (ties to the lower position).
pub fn match_to_pool<T: Scalar>(exemplars: &Matrix<T>, pool: &Matrix<T>) -> Result<Vec<usize>, AcquisitionError> {
    if exemplars.cols() > pool.cols() {
        return Err(AcquisitionError::PoolTooSmall {
            k: exemplars.cols(),
            pool: pool.cols(),
        });
    }
    if exemplars.rows() != pool.rows() {
        return Err(AcquisitionError::Dimension(format!(
            "exemplars have {} rows, pool has {}",
            exemplars.rows(),
            pool.rows()
        )));
    }
    let cols: Vec<Vec<T>> = (0..pool.cols()).map(|i| pool.col(i)).collect();
    let mut used = vec![false; cols.len()];
    let mut out = Vec::with_capacity(exemplars.cols());
    for k in 0..exemplars.cols() {
        let v = exemplars.col(k);
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in cols.iter().enumerate() {
            if used[i] {
                continue;
            }
            let d = sq_dist(&v, c).to_f64_lossy();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let (_, i) = best.expect("pool larger than exemplar count");
        used[i] = true;
        out.push(i);
    }
    Ok(out)
}

/// Standardize with pool statistics, solve, and map the exemplars back.
fn design<T: Scalar>(
    space: &Matrix<T>,
    history: &Matrix<T>,
    k: usize,
    rng: &Rng,
    solver: SolverSettings,
) -> Result<(Matrix<T>, Diagnostics), AcquisitionError> {
    let st = Standardizer::fit(space);
    let hist = if history.cols() > 0 {
        st.apply(history)
    } else {
        Matrix::zeros(space.rows(), 0)
    };
    let problem = DisplayProblem::new(st.apply(space), hist, k)?;
    let sol = solve(&problem, &rng.substream("display"), solver.max_iter, solver.tol)?;
    let diag = Diagnostics {
        objective_trace: Some(sol.objective_trace.clone()),
        solver_iterations: Some(sol.iterations),
        solver_converged: Some(sol.converged),
        ..Diagnostics::default()
    };
    Ok((st.invert(&sol.v), diag))
}

pub fn display_ambient<T: Scalar>(
    pool: &Matrix<T>,
    history: &Matrix<T>,
    k: usize,
    rng: &Rng,
    solver: SolverSettings,
) -> Result<AcquisitionResult<T>, AcquisitionError> {
    let (v, diagnostics) = design(pool, history, k, rng, solver)?;
    let selected = match_to_pool(&v, pool)?;
    Ok(AcquisitionResult {
        selected,
        designed_ambient: Some(v),
        designed_latent: None,
        diagnostics,
    })
}

fn map_columns<T: Scalar>(
    x: &Matrix<T>,
    mut f: impl FnMut(&[T]) -> Result<Vec<T>, GcnError>,
) -> Result<Matrix<T>, GcnError> {
    let cols = (0..x.cols()).map(|i| f(&x.col(i))).collect::<Result<Vec<_>, _>>()?;
    if cols.is_empty() {
        return Ok(Matrix::zeros(x.rows(), 0));
    }
    Ok(Matrix::from_columns(&cols))
}

pub fn display_latent<T: Scalar>(
    pool: &Matrix<T>,
    history: &Matrix<T>,
    k: usize,
    model: &GcnModel<T>,
    rng: &Rng,
    solver: SolverSettings,
) -> Result<AcquisitionResult<T>, AcquisitionError> {
    let inverter = model.inverter().map_err(AcquisitionError::Unstable)?;
    let z = map_columns(pool, |x| model.forward(x))?;
    let zh = map_columns(history, |x| model.forward(x))?;
    let (v_latent, diagnostics) = design(&z, &zh, k, rng, solver)?;
    let v_ambient = map_columns(&v_latent, |v| inverter.apply(v)).map_err(AcquisitionError::Unstable)?;
    if !v_ambient.all_finite() {
        return Err(AcquisitionError::Unstable(GcnError::Checkpoint(
            "inverse produced non-finite exemplars".into(),
        )));
    }
    let selected = match_to_pool(&v_ambient, pool)?;
    Ok(AcquisitionResult {
        selected,
        designed_ambient: Some(v_ambient),
        designed_latent: Some(v_latent),
        diagnostics,
    })
}
