//! Graph-convolutional classifier with an exactly invertible layer stack.
//!
//! The embedding stage (attention-mixed skeletal aggregation followed by one
//! graph convolution) maps a skeleton graph to an ambient vector `x ∈ ℝ^p`.
//! A stack of square layers `Φ^ℓ = g(W_ℓᵀ Φ^{ℓ-1})` with leaky-ReLU `g` and
//! reparametrized weights `W_ℓ = Ŵ_ℓ + δI` then maps `x` to the latent
//! `Φ^L ∈ ℝ^p`, whose first `C` coordinates are the class logits. Only the
//! stack is inverted; exemplars designed in the latent space return to the
//! ambient space, not to raw skeletons.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{condition_number, inverse, svd, Matrix, NumError, Rng};
use crate::scalar::Scalar;
use crate::skeleton_io::SkeletonGraph;

pub const DEFAULT_SLOPE_POS: f64 = 0.99;
pub const DEFAULT_SLOPE_NEG: f64 = 0.95;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GcnError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invertible layer {layer} is singular (sigma_min = {sigma_min:e})")]
    SingularLayer { layer: usize, sigma_min: f64 },
    #[error("invalid slopes: need 0 < l < u, got u = {u}, l = {l}")]
    Slopes { u: f64, l: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// `u·x` for `x ≥ 0`, `l·x` otherwise.
#[inline]
pub fn leaky_scalar<T: Scalar>(x: T, u: T, l: T) -> T {
    if x >= T::zero() {
        u * x
    } else {
        l * x
    }
}

#[inline]
pub fn leaky_inv_scalar<T: Scalar>(y: T, u: T, l: T) -> T {
    if y >= T::zero() {
        y / u
    } else {
        y / l
    }
}

/// Derivative of the leaky map at a pre-activation value.
#[inline]
pub fn leaky_slope<T: Scalar>(x: T, u: T, l: T) -> T {
    if x >= T::zero() {
        u
    } else {
        l
    }
}

pub fn leaky<T: Scalar>(x: &[T], u: T, l: T) -> Vec<T> {
    x.iter().map(|&v| leaky_scalar(v, u, l)).collect()
}

pub fn leaky_inv<T: Scalar>(y: &[T], u: T, l: T) -> Vec<T> {
    y.iter().map(|&v| leaky_inv_scalar(v, u, l)).collect()
}

/// One square invertible layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GcnLayer<T> {
    pub w_hat: Matrix<T>,
    pub delta: T,
    pub slope_pos: T,
    pub slope_neg: T,
}

impl<T: Scalar> GcnLayer<T> {
    /// `W = Ŵ + δI`.
    pub fn effective_weight(&self) -> Matrix<T> {
        self.w_hat.shifted(self.delta)
    }

    pub fn dim(&self) -> usize {
        self.w_hat.rows()
    }
}

/// Single-head scaled dot-product attention projections (`s × d_att`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Attention<T> {
    pub w_q: Matrix<T>,
    pub w_k: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Embedding<T> {
    /// Fixed row-normalized skeletal adjacency `Â` (`m × m`).
    pub adjacency: Matrix<T>,
    /// Convolution filters (`s × C_f`).
    pub w_emb: Matrix<T>,
    pub attention: Option<Attention<T>>,
    pub slope_pos: T,
    pub slope_neg: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GcnModel<T> {
    pub embedding: Embedding<T>,
    pub layers: Vec<GcnLayer<T>>,
    pub ambient_dim: usize,
    pub class_count: usize,
}

/// Architecture hyperparameters used to initialize a [`GcnModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub filters: usize,
    /// Attention projection width; `0` disables attention.
    pub attention_dim: usize,
    /// Number of invertible layers (`L - 1`).
    pub layers: usize,
    pub slope_pos: f64,
    pub slope_neg: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            filters: 8,
            attention_dim: 4,
            layers: 3,
            slope_pos: DEFAULT_SLOPE_POS,
            slope_neg: DEFAULT_SLOPE_NEG,
        }
    }
}

impl ModelSpec {
    pub fn ambient_dim(&self, nodes: usize) -> usize {
        nodes * self.filters
    }
}

/// Intermediate values of the embedding stage, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct EmbedCache<T> {
    /// Row-softmax attention `Ã` (absent without attention).
    pub attn: Option<Matrix<T>>,
    pub q: Option<Matrix<T>>,
    pub k: Option<Matrix<T>>,
    /// `Â_mix Ψ` (`m × s`).
    pub aggregated: Matrix<T>,
    /// Pre-activation `Â_mix Ψ W_emb` (`m × C_f`).
    pub pre: Matrix<T>,
}

/// Row-softmax of `ΨW_q (ΨW_k)ᵀ / √d`; also returns the projections.
fn attention_parts<T: Scalar>(
    psi: &Matrix<T>,
    att: &Attention<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>), GcnError> {
    let q = psi.matmul(&att.w_q)?;
    let k = psi.matmul(&att.w_k)?;
    let scale = T::one() / T::of(att.w_q.cols().max(1) as f64).sqrt();
    let mut e = q.matmul(&k.transpose())?.scale(scale);
    for i in 0..e.rows() {
        let row = e.row_mut(i);
        let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok((e, q, k))
}

pub fn attention_adjacency<T: Scalar>(psi: &Matrix<T>, w_q: &Matrix<T>, w_k: &Matrix<T>) -> Result<Matrix<T>, GcnError> {
    if psi.is_empty() {
        return Err(GcnError::Dimension {
            context: "attention input",
            expected: 1,
            found: 0,
        });
    }
    let att = Attention {
        w_q: w_q.clone(),
        w_k: w_k.clone(),
    };
    Ok(attention_parts(psi, &att)?.0)
}

impl<T: Scalar> Embedding<T> {
    pub fn nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.w_emb.rows()
    }

    pub fn filters(&self) -> usize {
        self.w_emb.cols()
    }

    pub fn forward_cached(&self, psi: &Matrix<T>) -> Result<(Vec<T>, EmbedCache<T>), GcnError> {
        if psi.rows() != self.nodes() {
            return Err(GcnError::Dimension {
                context: "graph nodes",
                expected: self.nodes(),
                found: psi.rows(),
            });
        }
        if psi.cols() != self.descriptor_dim() {
            return Err(GcnError::Dimension {
                context: "node descriptor width",
                expected: self.descriptor_dim(),
                found: psi.cols(),
            });
        }
        let (mix, attn, q, k) = match &self.attention {
            Some(att) => {
                let (a, q, k) = attention_parts(psi, att)?;
                let half = T::of(0.5);
                let mix = Matrix::from_fn(self.nodes(), self.nodes(), |i, j| half * (self.adjacency[(i, j)] + a[(i, j)]));
                (mix, Some(a), Some(q), Some(k))
            }
            None => (self.adjacency.clone(), None, None, None),
        };
        let aggregated = mix.matmul(psi)?;
        let pre = aggregated.matmul(&self.w_emb)?;
        let x = leaky(pre.as_slice(), self.slope_pos, self.slope_neg);
        Ok((
            x,
            EmbedCache {
                attn,
                q,
                k,
                aggregated,
                pre,
            },
        ))
    }
}

impl<T: Scalar> GcnModel<T> {
    /// Gaussian initialization: filters and projections `N(0, 1/s)`, invertible
    /// layers `N(0, 1/p)`.
    pub fn init(
        spec: &ModelSpec,
        adjacency: &Matrix<T>,
        descriptor_dim: usize,
        class_count: usize,
        rng: &mut Rng,
    ) -> Result<Self, GcnError> {
        if !(spec.slope_neg > 0.0 && spec.slope_neg <= spec.slope_pos) {
            return Err(GcnError::Slopes {
                u: spec.slope_pos,
                l: spec.slope_neg,
            });
        }
        let nodes = adjacency.rows();
        let p = spec.ambient_dim(nodes);
        if class_count > p {
            return Err(GcnError::Dimension {
                context: "class count (must not exceed ambient dim)",
                expected: p,
                found: class_count,
            });
        }
        let s_std = 1.0 / (descriptor_dim.max(1) as f64).sqrt();
        let w_emb = rng.gaussian_matrix(descriptor_dim, spec.filters, s_std);
        let attention = (spec.attention_dim > 0).then(|| Attention {
            w_q: rng.gaussian_matrix(descriptor_dim, spec.attention_dim, s_std),
            w_k: rng.gaussian_matrix(descriptor_dim, spec.attention_dim, s_std),
        });
        let p_std = 1.0 / (p as f64).sqrt();
        let layers = (0..spec.layers)
            .map(|_| GcnLayer {
                w_hat: rng.gaussian_matrix(p, p, p_std),
                delta: T::zero(),
                slope_pos: T::of(spec.slope_pos),
                slope_neg: T::of(spec.slope_neg),
            })
            .collect();
        Ok(Self {
            embedding: Embedding {
                adjacency: adjacency.clone(),
                w_emb,
                attention,
                slope_pos: T::of(spec.slope_pos),
                slope_neg: T::of(spec.slope_neg),
            },
            layers,
            ambient_dim: p,
            class_count,
        })
    }

    /// Set the reparametrization shift `δ` of every invertible layer.
    pub fn with_delta(mut self, delta: T) -> Self {
        self.layers.iter_mut().for_each(|l| l.delta = delta);
        self
    }

    pub fn embed(&self, g: &SkeletonGraph<T>) -> Result<Vec<T>, GcnError> {
        Ok(self.embedding.forward_cached(&g.descriptors)?.0)
    }

    pub fn embed_all(&self, graphs: &[SkeletonGraph<T>]) -> Result<Vec<Vec<T>>, GcnError> {
        graphs.iter().map(|g| self.embed(g)).collect()
    }

    fn check_dim(&self, v: &[T]) -> Result<(), GcnError> {
        if v.len() != self.ambient_dim {
            return Err(GcnError::Dimension {
                context: "ambient/latent vector",
                expected: self.ambient_dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `Φ^L` of an ambient vector.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, GcnError> {
        self.check_dim(x)?;
        let mut phi = x.to_vec();
        for layer in &self.layers {
            let w = layer.effective_weight();
            phi = leaky(&w.t_matvec(&phi), layer.slope_pos, layer.slope_neg);
        }
        Ok(phi)
    }

    /// Pre-activations `W_ℓᵀ Φ^{ℓ-1}` and activations `Φ^ℓ` of every layer;
    /// `acts[0]` is the input.
    pub fn forward_trace(&self, x: &[T], weights: &[Matrix<T>]) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (layer, w) in self.layers.iter().zip(weights) {
            let a = w.t_matvec(acts.last().expect("seeded"));
            acts.push(leaky(&a, layer.slope_pos, layer.slope_neg));
            pre.push(a);
        }
        (pre, acts)
    }

    pub fn effective_weights(&self) -> Vec<Matrix<T>> {
        self.layers.iter().map(GcnLayer::effective_weight).collect()
    }

    /// Precompute `(W_ℓᵀ)⁻¹` for every layer.
    pub fn inverter(&self) -> Result<Inverter<T>, GcnError> {
        let mut inv_t = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let wt = layer.effective_weight().transpose();
            match inverse(&wt) {
                Ok(m) if m.all_finite() => inv_t.push(m),
                _ => {
                    let sigma_min = svd(&wt)
                        .ok()
                        .and_then(|d| d.s.last().copied())
                        .map_or(0.0, Scalar::to_f64_lossy);
                    return Err(GcnError::SingularLayer { layer: idx, sigma_min });
                }
            }
        }
        Ok(Inverter {
            inv_t,
            slopes: self.layers.iter().map(|l| (l.slope_pos, l.slope_neg)).collect(),
            dim: self.ambient_dim,
        })
    }

    /// `f⁻¹(z)`: `Φ^{ℓ-1} = (W_ℓᵀ)⁻¹ g⁻¹(Φ^ℓ)` from the top layer down.
    pub fn inverse(&self, z: &[T]) -> Result<Vec<T>, GcnError> {
        self.inverter()?.apply(z)
    }

    pub fn logits(&self, x: &[T]) -> Result<Vec<T>, GcnError> {
        let mut z = self.forward(x)?;
        z.truncate(self.class_count);
        Ok(z)
    }

    /// Predicted class: argmax of the logits, ties to the lower index.
    pub fn predict(&self, x: &[T]) -> Result<usize, GcnError> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Per-layer condition numbers of the effective weights.
    pub fn layer_condition_numbers(&self) -> Vec<Result<T, NumError>> {
        self.layers.iter().map(|l| condition_number(&l.effective_weight())).collect()
    }

    /// `(κ · u/l)^{L-1}` with `κ` the largest layer condition number.
    pub fn km_bound(&self) -> Result<T, GcnError> {
        let mut kappa = T::one();
        let mut ratio = T::one();
        for (idx, (layer, cn)) in self.layers.iter().zip(self.layer_condition_numbers()).enumerate() {
            let cn = cn.map_err(|e| match e {
                NumError::IllConditioned { sigma_min, .. } => GcnError::SingularLayer { layer: idx, sigma_min },
                other => GcnError::Num(other),
            })?;
            kappa = kappa.max(cn);
            ratio = ratio.max(layer.slope_pos / layer.slope_neg);
        }
        Ok((kappa * ratio).powi(self.layers.len() as i32))
    }

    /// Largest layer condition number; a singular layer yields `+∞` with the
    /// flag set.
    pub fn observed_cn(&self) -> ObservedCn {
        let mut value = 1.0_f64;
        let mut singular = false;
        for cn in self.layer_condition_numbers() {
            match cn {
                Ok(c) => value = value.max(c.to_f64_lossy()),
                Err(_) => {
                    singular = true;
                    value = f64::INFINITY;
                }
            }
        }
        ObservedCn { value, singular }
    }

    /// Structural sanity: shapes agree and every weight is finite.
    pub fn validate(&self) -> Result<(), GcnError> {
        let e = &self.embedding;
        let m = e.nodes();
        if !e.adjacency.is_square() {
            return Err(GcnError::Checkpoint("adjacency is not square".into()));
        }
        if m * e.filters() != self.ambient_dim {
            return Err(GcnError::Dimension {
                context: "nodes x filters vs ambient_dim",
                expected: self.ambient_dim,
                found: m * e.filters(),
            });
        }
        if self.class_count == 0 || self.class_count > self.ambient_dim {
            return Err(GcnError::Dimension {
                context: "class count",
                expected: self.ambient_dim,
                found: self.class_count,
            });
        }
        if let Some(att) = &e.attention {
            if att.w_q.shape() != att.w_k.shape() || att.w_q.rows() != e.descriptor_dim() {
                return Err(GcnError::Checkpoint("attention projection shapes disagree".into()));
            }
        }
        let mut all = vec![&e.adjacency, &e.w_emb];
        if let Some(att) = &e.attention {
            all.push(&att.w_q);
            all.push(&att.w_k);
        }
        for (idx, l) in self.layers.iter().enumerate() {
            if l.w_hat.shape() != (self.ambient_dim, self.ambient_dim) {
                return Err(GcnError::Dimension {
                    context: "invertible layer width",
                    expected: self.ambient_dim,
                    found: l.w_hat.rows(),
                });
            }
            if !(l.slope_neg > T::zero() && l.slope_neg <= l.slope_pos) || !l.delta.is_finite() || l.delta < T::zero() {
                return Err(GcnError::Checkpoint(format!("layer {idx}: invalid slopes or delta")));
            }
            all.push(&l.w_hat);
        }
        if all.iter().any(|m| !m.all_finite()) {
            return Err(GcnError::Checkpoint("non-finite weight".into()));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> GcnModel<U> {
        let c = |x: T| U::of(x.to_f64_lossy());
        GcnModel {
            embedding: Embedding {
                adjacency: self.embedding.adjacency.cast(),
                w_emb: self.embedding.w_emb.cast(),
                attention: self.embedding.attention.as_ref().map(|a| Attention {
                    w_q: a.w_q.cast(),
                    w_k: a.w_k.cast(),
                }),
                slope_pos: c(self.embedding.slope_pos),
                slope_neg: c(self.embedding.slope_neg),
            },
            layers: self
                .layers
                .iter()
                .map(|l| GcnLayer {
                    w_hat: l.w_hat.cast(),
                    delta: c(l.delta),
                    slope_pos: c(l.slope_pos),
                    slope_neg: c(l.slope_neg),
                })
                .collect(),
            ambient_dim: self.ambient_dim,
            class_count: self.class_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedCn {
    pub value: f64,
    pub singular: bool,
}

/// Precomputed inverse of the invertible stack.
#[derive(Debug, Clone)]
pub struct Inverter<T> {
    inv_t: Vec<Matrix<T>>,
    slopes: Vec<(T, T)>,
    dim: usize,
}

impl<T: Scalar> Inverter<T> {
    pub fn apply(&self, z: &[T]) -> Result<Vec<T>, GcnError> {
        if z.len() != self.dim {
            return Err(GcnError::Dimension {
                context: "latent vector",
                expected: self.dim,
                found: z.len(),
            });
        }
        let mut phi = z.to_vec();
        for (inv, &(u, l)) in self.inv_t.iter().zip(&self.slopes).rev() {
            phi = inv.matvec(&leaky_inv(&phi, u, l));
        }
        Ok(phi)
    }
}

pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Checkpoint<T> {
    format_version: u32,
    scalar: String,
    model: GcnModel<T>,
}

impl<T: Scalar> GcnModel<T> {
    pub fn to_checkpoint_json(&self) -> String {
        let ck = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            scalar: std::any::type_name::<T>().to_string(),
            model: self.clone(),
        };
        serde_json::to_string_pretty(&ck).expect("model serializes")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self, GcnError> {
        let ck: Checkpoint<T> = serde_json::from_str(text).map_err(|e| GcnError::Checkpoint(e.to_string()))?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(GcnError::Checkpoint(format!(
                "unsupported format_version {} (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        ck.model.validate()?;
        Ok(ck.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), GcnError> {
        fs::write(path, self.to_checkpoint_json()).map_err(|source| GcnError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GcnError> {
        let text = fs::read_to_string(path).map_err(|source| GcnError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_checkpoint_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::eigvals;

    fn orthonormal(p: usize, rng: &mut Rng) -> Matrix<f64> {
        // Gram-Schmidt on a Gaussian matrix.
        let g: Matrix<f64> = rng.gaussian_matrix(p, p, 1.0);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for j in 0..p {
            let mut v = g.col(j);
            for c in &cols {
                let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            cols.push(v);
        }
        Matrix::from_columns(&cols)
    }

    fn model_with_layers(ws: Vec<Matrix<f64>>, delta: f64, u: f64, l: f64, classes: usize) -> GcnModel<f64> {
        let p = ws[0].rows();
        GcnModel {
            embedding: Embedding {
                adjacency: Matrix::identity(p),
                w_emb: Matrix::identity(1),
                attention: None,
                slope_pos: u,
                slope_neg: l,
            },
            layers: ws
                .into_iter()
                .map(|w| GcnLayer {
                    w_hat: w,
                    delta,
                    slope_pos: u,
                    slope_neg: l,
                })
                .collect(),
            ambient_dim: p,
            class_count: classes,
        }
    }

    #[test]
    fn leaky_values_and_inverse() {
        let (u, l) = (0.99, 0.95);
        assert_eq!(leaky(&[0.0, 1.0, -1.0], u, l), vec![0.0, 0.99, -0.95]);
        let mut rng = Rng::new(1);
        let v: Vec<f64> = (0..200).map(|_| 10.0 * rng.normal()).collect();
        let back = leaky_inv(&leaky(&v, u, l), u, l);
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let mapped = leaky(&sorted, u, l);
        assert!(mapped.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn attention_rows_are_stochastic() {
        let z = Matrix::<f64>::zeros(12, 3);
        let psi: Matrix<f64> = Rng::new(2).gaussian_matrix(5, 12, 1.0);
        let a = attention_adjacency(&psi, &z, &z).unwrap();
        assert!(a.as_slice().iter().all(|&x| (x - 0.2).abs() < 1e-15));
        let same = Matrix::from_fn(4, 12, |_, j| j as f64 * 0.1);
        let wq: Matrix<f64> = Rng::new(3).gaussian_matrix(12, 3, 1.0);
        let wk: Matrix<f64> = Rng::new(4).gaussian_matrix(12, 3, 1.0);
        let a = attention_adjacency(&same, &wq, &wk).unwrap();
        assert!(a.as_slice().iter().all(|&x| (x - 0.25).abs() < 1e-12));
        let a = attention_adjacency(&psi, &wq, &wk).unwrap();
        for i in 0..5 {
            assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_identity_and_averaging() {
        let psi = Matrix::from_fn(3, 3, |i, j| 1.0 + (i * 3 + j) as f64);
        let e = Embedding {
            adjacency: Matrix::identity(3),
            w_emb: Matrix::identity(3),
            attention: None,
            slope_pos: 0.99,
            slope_neg: 0.95,
        };
        let (x, _) = e.forward_cached(&psi).unwrap();
        for (a, b) in x.iter().zip(psi.as_slice()) {
            assert!((a - 0.99 * b).abs() < 1e-15);
        }
        let uni = Embedding {
            adjacency: Matrix::from_fn(3, 3, |_, _| 1.0 / 3.0),
            ..e.clone()
        };
        let (_, cache) = uni.forward_cached(&psi).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mean = (0..3).map(|r| psi[(r, j)]).sum::<f64>() / 3.0;
                assert!((cache.aggregated[(i, j)] - mean).abs() < 1e-12);
            }
        }
        assert!(e.forward_cached(&Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn sbu_configuration_ambient_dim() {
        let spec = ModelSpec {
            filters: 8,
            ..ModelSpec::default()
        };
        assert_eq!(spec.ambient_dim(30), 240);
    }

    #[test]
    fn single_identity_layer() {
        let m = model_with_layers(vec![Matrix::identity(4)], 0.0, 0.99, 0.95, 2);
        let x = vec![1.0, 2.0, 0.5, 3.0];
        let z = m.forward(&x).unwrap();
        assert_eq!(z, x.iter().map(|v| 0.99 * v).collect::<Vec<_>>());
        assert_eq!(m.forward(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        let y = vec![-1.0, 2.0, 0.0, -3.0];
        assert_eq!(m.inverse(&y).unwrap(), leaky_inv(&y, 0.99, 0.95));
    }

    #[test]
    fn orthonormal_and_shifted_round_trips() {
        let mut rng = Rng::new(5);
        let ortho = model_with_layers((0..3).map(|_| orthonormal(6, &mut rng)).collect(), 0.0, 0.99, 0.95, 3);
        let small: Vec<Matrix<f64>> = (0..3).map(|_| rng.gaussian_matrix(6, 6, 0.3)).collect();
        let shifted = model_with_layers(small, 10.0, 0.99, 0.95, 3);
        for m in [&ortho, &shifted] {
            for _ in 0..50 {
                let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
                let back = m.inverse(&m.forward(&x).unwrap()).unwrap();
                let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(err < 1e-8, "round-trip error {err}");
            }
        }
    }

    #[test]
    fn logits_are_leading_latent_coordinates() {
        let mut rng = Rng::new(6);
        let m = model_with_layers(vec![rng.gaussian_matrix(5, 5, 1.0)], 0.0, 0.99, 0.95, 5);
        let x = vec![0.3, -0.2, 1.0, 0.0, 2.0];
        assert_eq!(m.logits(&x).unwrap(), m.forward(&x).unwrap());
        let m2 = GcnModel { class_count: 2, ..m.clone() };
        assert_eq!(m2.logits(&x).unwrap(), m.forward(&x).unwrap()[..2].to_vec());
        // Permuting auxiliary output coordinates (columns 2.. of W) keeps logits.
        let mut perm = m2.clone();
        let w = &m2.layers[0].w_hat;
        perm.layers[0].w_hat = Matrix::from_fn(5, 5, |i, j| match j {
            2 => w[(i, 4)],
            4 => w[(i, 2)],
            _ => w[(i, j)],
        });
        assert_eq!(perm.logits(&x).unwrap(), m2.logits(&x).unwrap());
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn km_bound_cases() {
        let mut rng = Rng::new(7);
        let ortho = model_with_layers((0..2).map(|_| orthonormal(4, &mut rng)).collect(), 0.0, 0.99, 0.99, 2);
        assert!((ortho.km_bound().unwrap() - 1.0).abs() < 1e-10);
        let k2 = model_with_layers(vec![Matrix::from_diag(&[2.0, 1.0]), Matrix::from_diag(&[1.0, 2.0])], 0.0, 0.99, 0.95, 2);
        let expected = (2.0_f64 * 0.99 / 0.95).powi(2);
        assert!((k2.km_bound().unwrap() - expected).abs() < 1e-12);
        assert!((expected - 4.344).abs() < 1e-3);
    }

    #[test]
    fn observed_cn_behaviour() {
        let mut rng = Rng::new(8);
        let ortho = model_with_layers((0..3).map(|_| orthonormal(5, &mut rng)).collect(), 0.0, 0.99, 0.95, 2);
        assert!((ortho.observed_cn().value - 1.0).abs() < 1e-8);
        let adj = Matrix::<f64>::identity(6);
        let spec = ModelSpec::default();
        let untrained = GcnModel::init(&spec, &adj, 12, 4, &mut Rng::new(9)).unwrap();
        assert!(untrained.observed_cn().value > 10.0);
        let mut last = f64::INFINITY;
        for delta in [0.0, 10.0, 1e5] {
            let mut m = untrained.clone();
            m.layers.iter_mut().for_each(|l| l.delta = delta);
            let cn = m.observed_cn().value;
            assert!(cn < last);
            last = cn;
        }
        assert!(last < 1.001);
        let sing = model_with_layers(vec![Matrix::from_diag(&[1.0, 0.0])], 0.0, 0.99, 0.95, 1);
        let o = sing.observed_cn();
        assert!(o.singular && o.value.is_infinite());
        assert!(matches!(sing.inverse(&[1.0, 1.0]), Err(GcnError::SingularLayer { layer: 0, .. })));
    }

    #[test]
    fn eigenvalue_shift_under_reparametrization() {
        let mut rng = Rng::new(10);
        let w: Matrix<f64> = rng.gaussian_matrix(7, 7, 1.0);
        let a = eigvals(&w).unwrap();
        let b = eigvals(&w.shifted(3.5)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.re + 3.5 - y.re).abs() < 1e-8 && (x.im - y.im).abs() < 1e-8);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let adj = Matrix::<f64>::identity(3);
        let m = GcnModel::init(&ModelSpec::default(), &adj, 12, 2, &mut Rng::new(11)).unwrap();
        let text = m.to_checkpoint_json();
        assert_eq!(GcnModel::<f64>::from_checkpoint_json(&text).unwrap(), m);
        let bad_version = text.replacen("\"format_version\": 1", "\"format_version\": 9", 1);
        assert!(GcnModel::<f64>::from_checkpoint_json(&bad_version).is_err());
        assert!(GcnModel::<f64>::from_checkpoint_json(&text[..text.len() / 2]).is_err());
    }

    #[test]
    fn f32_model_round_trips() {
        let adj = Matrix::<f32>::identity(3);
        let m = GcnModel::<f32>::init(&ModelSpec::default(), &adj, 12, 2, &mut Rng::new(12))
            .unwrap()
            .with_delta(10.0);
        let x: Vec<f32> = (0..m.ambient_dim).map(|i| (i as f32 * 0.37).sin()).collect();
        let back = m.inverse(&m.forward(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
