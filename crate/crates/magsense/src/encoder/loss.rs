//! Hierarchical temporal + instance contrastive loss over two augmented
//! views, with analytic gradients.
//!
//! Both views are per-timestep representation sequences `[batch][len][dim]`
//! restricted to the overlap of two random crops. At each pooling level the
//! loss combines
//!
//! * an instance term: at a fixed timestamp, the same instance's two views
//!   are the positive pair and all other instances in the batch (both
//!   views) are negatives; and
//! * a temporal term: within one instance, the same timestamp across views
//!   is the positive pair and all other timestamps (both views) are
//!   negatives.
//!
//! After each level both views are max-pooled along time by 2 and the terms
//! are recomputed, down to a single timestep (instance term only there).
//! The final loss is the mean over levels.

use crate::error::{MagsenseError, Result};
use crate::scalar::{real, Real};

/// A `[batch][len][dim]` representation block, row-major.
#[derive(Debug, Clone)]
pub struct ReprBlock<T: Real> {
    pub data: Vec<T>,
    pub batch: usize,
    pub len: usize,
    pub dim: usize,
}

impl<T: Real> ReprBlock<T> {
    pub fn new(data: Vec<T>, batch: usize, len: usize, dim: usize) -> Self {
        assert_eq!(data.len(), batch * len * dim);
        Self {
            data,
            batch,
            len,
            dim,
        }
    }

    #[inline]
    fn at(&self, b: usize, t: usize) -> &[T] {
        let base = (b * self.len + t) * self.dim;
        &self.data[base..base + self.dim]
    }
}

/// Loss value plus gradients with respect to both views.
pub struct ContrastiveGrad<T: Real> {
    pub loss: T,
    pub d_view_a: Vec<T>,
    pub d_view_b: Vec<T>,
}

/// Softmax cross-entropy over one similarity row, excluding the diagonal.
/// Returns the row loss and adds the row's gradient into `d_sim`.
fn row_softmax_loss<T: Real>(sim: &[T], n: usize, row: usize, pos: usize, d_sim: &mut [T], weight: T) -> T {
    let mut max = T::neg_infinity();
    for j in 0..n {
        if j != row && sim[row * n + j] > max {
            max = sim[row * n + j];
        }
    }
    let mut denom = T::zero();
    for j in 0..n {
        if j != row {
            denom = denom + (sim[row * n + j] - max).exp();
        }
    }
    let log_denom = denom.ln() + max;
    let loss = log_denom - sim[row * n + pos];
    for j in 0..n {
        if j == row {
            continue;
        }
        let p = (sim[row * n + j] - max).exp() / denom;
        let indicator = if j == pos { T::one() } else { T::zero() };
        d_sim[row * n + j] = d_sim[row * n + j] + weight * (p - indicator);
    }
    loss * weight
}

/// Instance-wise contrastive term at one pooling level.
///
/// For every timestamp, the 2B vectors (view A batch then view B batch) form
/// a similarity matrix; positives are `(i, i+B)` and `(i+B, i)`.
fn instance_loss<T: Real>(
    a: &ReprBlock<T>,
    b: &ReprBlock<T>,
    temperature: T,
    da: &mut [T],
    db: &mut [T],
) -> T {
    let bsz = a.batch;
    let n = 2 * bsz;
    let dim = a.dim;
    let inv_tau = T::one() / temperature;
    let weight = T::one() / T::from(a.len * n).unwrap();

    let mut total = T::zero();
    let mut sim = vec![T::zero(); n * n];
    let mut d_sim = vec![T::zero(); n * n];
    for t in 0..a.len {
        let vec_of = |i: usize| -> &[T] {
            if i < bsz {
                a.at(i, t)
            } else {
                b.at(i - bsz, t)
            }
        };
        for i in 0..n {
            for j in 0..n {
                let mut dot = T::zero();
                let (vi, vj) = (vec_of(i), vec_of(j));
                for k in 0..dim {
                    dot = dot + vi[k] * vj[k];
                }
                sim[i * n + j] = dot * inv_tau;
            }
        }
        for v in d_sim.iter_mut() {
            *v = T::zero();
        }
        for i in 0..n {
            let pos = if i < bsz { i + bsz } else { i - bsz };
            total = total + row_softmax_loss(&sim, n, i, pos, &mut d_sim, weight);
        }
        // d(sim_ij)/d(v_i) = v_j / tau and vice versa; view A rows live in
        // `da`, view B rows in `db`.
        for i in 0..n {
            for j in 0..n {
                let g = d_sim[i * n + j];
                if g == T::zero() {
                    continue;
                }
                let gi = g * inv_tau;
                for k in 0..dim {
                    let vj_k = vec_of(j)[k];
                    let vi_k = vec_of(i)[k];
                    if i < bsz {
                        let base = (i * a.len + t) * dim + k;
                        da[base] = da[base] + gi * vj_k;
                    } else {
                        let base = ((i - bsz) * b.len + t) * dim + k;
                        db[base] = db[base] + gi * vj_k;
                    }
                    if j < bsz {
                        let base = (j * a.len + t) * dim + k;
                        da[base] = da[base] + gi * vi_k;
                    } else {
                        let base = ((j - bsz) * b.len + t) * dim + k;
                        db[base] = db[base] + gi * vi_k;
                    }
                }
            }
        }
    }
    total
}

/// Temporal contrastive term: per instance, timestamps of both views are
/// concatenated; positives are the same timestamp across views.
fn temporal_loss<T: Real>(
    a: &ReprBlock<T>,
    b: &ReprBlock<T>,
    temperature: T,
    da: &mut [T],
    db: &mut [T],
) -> T {
    let len = a.len;
    let n = 2 * len;
    let dim = a.dim;
    let inv_tau = T::one() / temperature;
    let weight = T::one() / T::from(a.batch * n).unwrap();

    let mut total = T::zero();
    let mut sim = vec![T::zero(); n * n];
    let mut d_sim = vec![T::zero(); n * n];
    for inst in 0..a.batch {
        let vec_of = |i: usize| -> &[T] {
            if i < len {
                a.at(inst, i)
            } else {
                b.at(inst, i - len)
            }
        };
        for i in 0..n {
            for j in 0..n {
                let mut dot = T::zero();
                let (vi, vj) = (vec_of(i), vec_of(j));
                for k in 0..dim {
                    dot = dot + vi[k] * vj[k];
                }
                sim[i * n + j] = dot * inv_tau;
            }
        }
        for v in d_sim.iter_mut() {
            *v = T::zero();
        }
        for i in 0..n {
            let pos = if i < len { i + len } else { i - len };
            total = total + row_softmax_loss(&sim, n, i, pos, &mut d_sim, weight);
        }
        for i in 0..n {
            for j in 0..n {
                let g = d_sim[i * n + j];
                if g == T::zero() {
                    continue;
                }
                let gi = g * inv_tau;
                for k in 0..dim {
                    let vj_k = vec_of(j)[k];
                    let vi_k = vec_of(i)[k];
                    if i < len {
                        let base = (inst * a.len + i) * dim + k;
                        da[base] = da[base] + gi * vj_k;
                    } else {
                        let base = (inst * b.len + (i - len)) * dim + k;
                        db[base] = db[base] + gi * vj_k;
                    }
                    if j < len {
                        let base = (inst * a.len + j) * dim + k;
                        da[base] = da[base] + gi * vi_k;
                    } else {
                        let base = (inst * b.len + (j - len)) * dim + k;
                        db[base] = db[base] + gi * vi_k;
                    }
                }
            }
        }
    }
    total
}

/// Max-pool along time by 2 (ceil), remembering argmax indices for the
/// backward pass.
fn max_pool2<T: Real>(block: &ReprBlock<T>) -> (ReprBlock<T>, Vec<usize>) {
    let out_len = block.len.div_ceil(2);
    let mut data = vec![T::zero(); block.batch * out_len * block.dim];
    let mut argmax = vec![0usize; block.batch * out_len * block.dim];
    for bi in 0..block.batch {
        for t in 0..out_len {
            let t0 = 2 * t;
            let t1 = (2 * t + 1).min(block.len - 1);
            for k in 0..block.dim {
                let v0 = block.at(bi, t0)[k];
                let v1 = block.at(bi, t1)[k];
                let out_idx = (bi * out_len + t) * block.dim + k;
                if v1 > v0 {
                    data[out_idx] = v1;
                    argmax[out_idx] = (bi * block.len + t1) * block.dim + k;
                } else {
                    data[out_idx] = v0;
                    argmax[out_idx] = (bi * block.len + t0) * block.dim + k;
                }
            }
        }
    }
    (
        ReprBlock::new(data, block.batch, out_len, block.dim),
        argmax,
    )
}

/// Scatters a pooled-level gradient back to the previous level.
fn unpool_grad<T: Real>(grad: &[T], argmax: &[usize], target_len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); target_len];
    for (g, &idx) in grad.iter().zip(argmax.iter()) {
        out[idx] = out[idx] + *g;
    }
    out
}

/// Hierarchical contrastive loss and its gradients with respect to both
/// views. Both blocks must have identical shape and batch >= 2 (the
/// instance term is undefined otherwise).
pub fn hierarchical_contrastive_loss<T: Real>(
    view_a: &ReprBlock<T>,
    view_b: &ReprBlock<T>,
    temperature: T,
) -> Result<ContrastiveGrad<T>> {
    if view_a.batch != view_b.batch || view_a.len != view_b.len || view_a.dim != view_b.dim {
        return Err(MagsenseError::Shape(format!(
            "view shapes differ: {}x{}x{} vs {}x{}x{}",
            view_a.batch, view_a.len, view_a.dim, view_b.batch, view_b.len, view_b.dim
        )));
    }
    if view_a.batch < 2 {
        return Err(MagsenseError::Validation(
            "instance contrastive term needs a batch of at least 2".into(),
        ));
    }
    if view_a.len == 0 {
        return Err(MagsenseError::Shape("empty overlap between crops".into()));
    }
    let half: T = real(0.5);

    // Forward through the pooling pyramid, keeping per-level gradients.
    let mut levels: Vec<(ReprBlock<T>, ReprBlock<T>)> = vec![(view_a.clone(), view_b.clone())];
    let mut argmaxes: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    while levels.last().unwrap().0.len > 1 {
        let (a, b) = levels.last().unwrap();
        let (pa, arg_a) = max_pool2(a);
        let (pb, arg_b) = max_pool2(b);
        argmaxes.push((arg_a, arg_b));
        levels.push((pa, pb));
    }

    let mut total = T::zero();
    let mut n_terms = 0usize;
    let mut level_grads: Vec<(Vec<T>, Vec<T>)> = Vec::with_capacity(levels.len());
    for (depth, (a, b)) in levels.iter().enumerate() {
        let mut da = vec![T::zero(); a.data.len()];
        let mut db = vec![T::zero(); b.data.len()];
        let mut level_loss = half * instance_loss(a, b, temperature, &mut da, &mut db);
        if a.len > 1 {
            level_loss = level_loss + half * temporal_loss(a, b, temperature, &mut da, &mut db);
        }
        // The gradient buffers currently hold d(inst + temp); scale the
        // instance/temporal mix weight in: both terms entered with their own
        // weight applied inside row_softmax_loss, so scale by 1/2 here.
        for g in da.iter_mut().chain(db.iter_mut()) {
            *g = *g * half;
        }
        total = total + level_loss;
        n_terms += 1;
        level_grads.push((da, db));
        let _ = depth;
    }

    let scale = T::one() / T::from(n_terms).unwrap();
    total = total * scale;

    // Collapse per-level gradients down the pooling chain.
    let mut acc_a = level_grads.last().unwrap().0.clone();
    let mut acc_b = level_grads.last().unwrap().1.clone();
    for depth in (0..level_grads.len() - 1).rev() {
        let (arg_a, arg_b) = &argmaxes[depth];
        let target_a = levels[depth].0.data.len();
        let target_b = levels[depth].1.data.len();
        let mut up_a = unpool_grad(&acc_a, arg_a, target_a);
        let mut up_b = unpool_grad(&acc_b, arg_b, target_b);
        for (u, g) in up_a.iter_mut().zip(level_grads[depth].0.iter()) {
            *u = *u + *g;
        }
        for (u, g) in up_b.iter_mut().zip(level_grads[depth].1.iter()) {
            *u = *u + *g;
        }
        acc_a = up_a;
        acc_b = up_b;
    }
    for g in acc_a.iter_mut().chain(acc_b.iter_mut()) {
        *g = *g * scale;
    }

    Ok(ContrastiveGrad {
        loss: total,
        d_view_a: acc_a,
        d_view_b: acc_b,
    })
}
