use crate::gcn::{leaky_slope, GcnModel};
use crate::numkit::{svd, svd_warm, Matrix, Svd};
use crate::scalar::Scalar;
use crate::skeleton_io::SkeletonGraph;

use super::{LossConfig, Regularizer, TrainError};

/// Smallest singular value admitted by the condition-number penalty.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Softmax probabilities with the max-subtraction trick.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mx = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let e: Vec<T> = logits.iter().map(|&v| (v - mx).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn sample_ce<T: Scalar>(logits: &[T], label: usize) -> T {
    let mx = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let lse = mx + logits.iter().map(|&v| (v - mx).exp()).sum::<T>().ln();
    lse - logits[label]
}

/// Mean softmax cross-entropy over a batch of logit vectors.
pub fn cross_entropy<T: Scalar>(logits: &[Vec<T>], labels: &[usize]) -> Result<T, TrainError> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(TrainError::Batch(format!(
            "{} logit rows for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let mut total = T::zero();
    for (z, &y) in logits.iter().zip(labels) {
        if y >= z.len() {
            return Err(TrainError::Label { label: y, classes: z.len() });
        }
        total += sample_ce(z, y);
    }
    Ok(total / T::of(logits.len() as f64))
}

/// `Σ_ℓ ‖W_ℓᵀW_ℓ − I‖_F`.
pub fn or_penalty<T: Scalar>(weights: &[Matrix<T>]) -> T {
    weights.iter().map(|w| gram_defect(w).frobenius_norm()).sum()
}

fn gram_defect<T: Scalar>(w: &Matrix<T>) -> Matrix<T> {
    w.t_matmul(w).expect("square weight").shifted(-T::one())
}

/// Gradient of `‖WᵀW − I‖_F`: `2W(WᵀW − I)/‖WᵀW − I‖_F`, zero at the optimum.
pub fn or_penalty_grad<T: Scalar>(w: &Matrix<T>) -> Matrix<T> {
    let g = gram_defect(w);
    let n = g.frobenius_norm();
    // Below rounding level the defect direction is noise; treat it as the optimum.
    if n <= T::of(64.0 * w.rows() as f64) * T::epsilon() {
        return Matrix::zeros(w.rows(), w.cols());
    }
    w.matmul(&g).expect("square weight").scale(T::of(2.0) / n)
}

/// Value of the condition-number penalty and whether any layer hit the
/// `σ_min` floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnPenalty<T> {
    pub value: T,
    pub floored: bool,
}

/// `Σ_ℓ σ_max(W_ℓ)/σ_min(W_ℓ)` with `σ_min` floored at [`SIGMA_FLOOR`].
pub fn cn_penalty<T: Scalar>(weights: &[Matrix<T>]) -> Result<CnPenalty<T>, TrainError> {
    let svds = weights.iter().map(svd).collect::<Result<Vec<_>, _>>()?;
    Ok(cn_penalty_from(&svds))
}

fn cn_penalty_from<T: Scalar>(svds: &[Svd<T>]) -> CnPenalty<T> {
    let mut value = T::zero();
    let mut floored = false;
    let floor = T::of(SIGMA_FLOOR);
    for d in svds {
        let smax = d.s[0];
        let smin = *d.s.last().expect("nonempty");
        if smin < floor {
            floored = true;
        }
        value += smax / smin.max(floor);
    }
    CnPenalty { value, floored }
}

/// Subgradient `u₁v₁ᵀ/σ_min − (σ_max/σ_min²) u_n v_nᵀ` of `σ_max/σ_min`.
pub fn cn_penalty_grad<T: Scalar>(w: &Matrix<T>) -> Result<Matrix<T>, TrainError> {
    Ok(cn_grad_from(&svd(w)?))
}

fn cn_grad_from<T: Scalar>(d: &Svd<T>) -> Matrix<T> {
    let n = d.s.len();
    let smax = d.s[0];
    let smin = d.s[n - 1].max(T::of(SIGMA_FLOOR));
    let (u1, v1) = (d.u.col(0), d.v.col(0));
    let (un, vn) = (d.u.col(n - 1), d.v.col(n - 1));
    let a = T::one() / smin;
    let b = smax / (smin * smin);
    Matrix::from_fn(d.u.rows(), d.v.rows(), |i, j| a * u1[i] * v1[j] - b * un[i] * vn[j])
}

/// Right singular vectors of every layer from the previous step, used to
/// warm-start the next decomposition.
#[derive(Debug, Clone, Default)]
pub struct SvdWarmStart<T> {
    v: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> SvdWarmStart<T> {
    fn decompose(&mut self, weights: &[Matrix<T>]) -> Result<Vec<Svd<T>>, TrainError> {
        self.v.resize(weights.len(), None);
        let mut out = Vec::with_capacity(weights.len());
        for (w, slot) in weights.iter().zip(self.v.iter_mut()) {
            let d = match slot.as_ref() {
                Some(v0) => svd_warm(w, v0)?,
                None => svd(w)?,
            };
            *slot = Some(d.v.clone());
            out.push(d);
        }
        Ok(out)
    }
}

/// Loss decomposition of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    pub ce: T,
    /// Unscaled penalty `Σ_ℓ R(W_ℓ)`; zero without a regularizer.
    pub penalty: T,
    pub lambda: T,
    pub total: T,
    pub floored: bool,
}

/// Gradients of the total loss, one block per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub w_emb: Matrix<T>,
    pub w_q: Option<Matrix<T>>,
    pub w_k: Option<Matrix<T>>,
    /// Gradient with respect to the effective weight `W_ℓ`, which is also the
    /// gradient with respect to `Ŵ_ℓ`.
    pub layers: Vec<Matrix<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(model: &GcnModel<T>) -> Self {
        let e = &model.embedding;
        let z = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        Self {
            w_emb: z(&e.w_emb),
            w_q: e.attention.as_ref().map(|a| z(&a.w_q)),
            w_k: e.attention.as_ref().map(|a| z(&a.w_k)),
            layers: model.layers.iter().map(|l| z(&l.w_hat)).collect(),
        }
    }

    /// Named blocks in a fixed order shared with [`param_blocks_mut`].
    pub fn blocks(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = vec![("w_emb".to_string(), &self.w_emb)];
        if let (Some(q), Some(k)) = (&self.w_q, &self.w_k) {
            out.push(("w_q".into(), q));
            out.push(("w_k".into(), k));
        }
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("w_hat[{i}]"), l));
        }
        out
    }
}

/// Mutable trainable tensors in the order of [`Grads::blocks`].
pub fn param_blocks_mut<T: Scalar>(model: &mut GcnModel<T>) -> Vec<&mut Matrix<T>> {
    let e = &mut model.embedding;
    let mut out = vec![&mut e.w_emb];
    if let Some(a) = e.attention.as_mut() {
        out.push(&mut a.w_q);
        out.push(&mut a.w_k);
    }
    for l in &mut model.layers {
        out.push(&mut l.w_hat);
    }
    out
}

/// Resolved penalty weight: the configured `λ` or `1/p`.
pub fn resolved_lambda<T: Scalar>(cfg: &LossConfig, ambient_dim: usize) -> T {
    match cfg.regularizer {
        Regularizer::None => T::zero(),
        _ => T::of(cfg.lambda.unwrap_or(1.0 / ambient_dim as f64)),
    }
}

fn penalty_value<T: Scalar>(weights: &[Matrix<T>], reg: Regularizer) -> Result<(T, bool), TrainError> {
    Ok(match reg {
        Regularizer::None => (T::zero(), false),
        Regularizer::Or => (or_penalty(weights), false),
        Regularizer::Cn => {
            let c = cn_penalty(weights)?;
            (c.value, c.floored)
        }
    })
}

/// `CE + λ·penalty` on a batch.
pub fn total_loss<T: Scalar>(
    model: &GcnModel<T>,
    batch: &[&SkeletonGraph<T>],
    cfg: &LossConfig,
) -> Result<LossParts<T>, TrainError> {
    let mut logits = Vec::with_capacity(batch.len());
    for g in batch {
        logits.push(model.logits(&model.embed(g)?)?);
    }
    let labels: Vec<usize> = batch.iter().map(|g| g.label).collect();
    let ce = cross_entropy(&logits, &labels)?;
    let weights = model.effective_weights();
    let lambda = resolved_lambda(cfg, model.ambient_dim);
    let (penalty, floored) = penalty_value(&weights, cfg.regularizer)?;
    Ok(LossParts {
        ce,
        penalty,
        lambda,
        total: ce + lambda * penalty,
        floored,
    })
}

/// Loss and hand-derived gradients of every trainable tensor on a batch.
pub fn loss_and_grad<T: Scalar>(
    model: &GcnModel<T>,
    batch: &[&SkeletonGraph<T>],
    cfg: &LossConfig,
) -> Result<(LossParts<T>, Grads<T>), TrainError> {
    loss_and_grad_warm(model, batch, cfg, &mut SvdWarmStart::default())
}

/// [`loss_and_grad`] reusing singular vectors across calls.
pub fn loss_and_grad_warm<T: Scalar>(
    model: &GcnModel<T>,
    batch: &[&SkeletonGraph<T>],
    cfg: &LossConfig,
    warm: &mut SvdWarmStart<T>,
) -> Result<(LossParts<T>, Grads<T>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Batch("empty batch".into()));
    }
    let emb = &model.embedding;
    let (u, l) = (emb.slope_pos, emb.slope_neg);
    let weights = model.effective_weights();
    let mut grads = Grads::zeros_like(model);
    let inv_b = T::one() / T::of(batch.len() as f64);
    let mut ce = T::zero();
    let m = emb.nodes();
    let cf = emb.filters();
    let half = T::of(0.5);
    for g in batch {
        let classes = model.class_count;
        if g.label >= classes {
            return Err(TrainError::Label {
                label: g.label,
                classes,
            });
        }
        let (x, cache) = emb.forward_cached(&g.descriptors)?;
        let (pre, acts) = model.forward_trace(&x, &weights);
        let top = acts.last().expect("output layer");
        ce += sample_ce(&top[..classes], g.label);
        let mut probs = softmax(&top[..classes]);
        probs[g.label] -= T::one();
        let mut dphi = vec![T::zero(); model.ambient_dim];
        for (d, pr) in dphi.iter_mut().zip(&probs) {
            *d = *pr * inv_b;
        }
        for li in (0..model.layers.len()).rev() {
            let layer = &model.layers[li];
            let da: Vec<T> = dphi
                .iter()
                .zip(&pre[li])
                .map(|(&d, &a)| d * leaky_slope(a, layer.slope_pos, layer.slope_neg))
                .collect();
            let prev = &acts[li];
            let gw = &mut grads.layers[li];
            for (i, &pi) in prev.iter().enumerate() {
                if pi == T::zero() {
                    continue;
                }
                for (gij, &dj) in gw.row_mut(i).iter_mut().zip(&da) {
                    *gij += pi * dj;
                }
            }
            dphi = weights[li].matvec(&da);
        }
        // Embedding stage: pre_emb = M (Ψ W_emb), x = leaky(pre_emb).
        let dpre = Matrix::from_fn(m, cf, |i, f| {
            let k = i * cf + f;
            dphi[k] * leaky_slope(cache.pre.as_slice()[k], u, l)
        });
        grads
            .w_emb
            .add_assign_scaled(&cache.aggregated.t_matmul(&dpre)?, T::one());
        if let (Some(att), Some(a), Some(q), Some(k)) = (&emb.attention, &cache.attn, &cache.q, &cache.k) {
            let proj = g.descriptors.matmul(&emb.w_emb)?;
            // dM = dpre · projᵀ; the attention half of M carries a factor ½.
            let dm = dpre.matmul(&proj.transpose())?;
            let d_att = att.w_q.cols();
            let inv_sqrt = T::one() / T::of(d_att.max(1) as f64).sqrt();
            let de = Matrix::from_fn(m, m, |i, j| {
                let row_dot: T = (0..m).map(|c| half * dm[(i, c)] * a[(i, c)]).sum();
                a[(i, j)] * (half * dm[(i, j)] - row_dot) * inv_sqrt
            });
            let dq = de.matmul(k)?;
            let dk = de.t_matmul(q)?;
            let psi = &g.descriptors;
            grads
                .w_q
                .as_mut()
                .expect("attention grads")
                .add_assign_scaled(&psi.t_matmul(&dq)?, T::one());
            grads
                .w_k
                .as_mut()
                .expect("attention grads")
                .add_assign_scaled(&psi.t_matmul(&dk)?, T::one());
        }
    }
    ce *= inv_b;
    let lambda = resolved_lambda(cfg, model.ambient_dim);
    let (penalty, floored) = match cfg.regularizer {
        Regularizer::None => (T::zero(), false),
        Regularizer::Or => {
            if lambda != T::zero() {
                for (gw, w) in grads.layers.iter_mut().zip(&weights) {
                    gw.add_assign_scaled(&or_penalty_grad(w), lambda);
                }
            }
            (or_penalty(&weights), false)
        }
        Regularizer::Cn => {
            let svds = warm.decompose(&weights)?;
            if lambda != T::zero() {
                for (gw, d) in grads.layers.iter_mut().zip(&svds) {
                    gw.add_assign_scaled(&cn_grad_from(d), lambda);
                }
            }
            let c = cn_penalty_from(&svds);
            (c.value, c.floored)
        }
    };
    for (name, blk) in grads.blocks() {
        if !blk.all_finite() {
            return Err(TrainError::NonFiniteGradient(name));
        }
    }
    Ok((
        LossParts {
            ce,
            penalty,
            lambda,
            total: ce + lambda * penalty,
            floored,
        },
        grads,
    ))
}
