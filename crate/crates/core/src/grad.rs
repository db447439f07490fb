//! Exact backprop of the hinge loss through the one-layer model, the SGD
//! update, and a central-difference oracle for checking both.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{axpy, dot, Matrix};
use crate::model::{forward_slots, hinge_loss, ForwardCache, GtParams};

/// Gradients with the shapes of the trainable tensors (`a` has none).
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub b: Vec<f64>,
}

impl Grads {
    pub fn zeros_like(p: &GtParams) -> Self {
        Self {
            w_q: Matrix::zeros(p.w_q.rows(), p.w_q.cols()),
            w_k: Matrix::zeros(p.w_k.rows(), p.w_k.cols()),
            w_v: Matrix::zeros(p.w_v.rows(), p.w_v.cols()),
            w_o: Matrix::zeros(p.w_o.rows(), p.w_o.cols()),
            b: vec![0.0; p.b.len()],
        }
    }

    pub fn clear(&mut self) {
        self.w_q.fill(0.0);
        self.w_k.fill(0.0);
        self.w_v.fill(0.0);
        self.w_o.fill(0.0);
        self.b.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn add(&mut self, other: &Grads) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Internal("gradient shape mismatch".into()));
        }
        self.w_q.add_scaled(1.0, &other.w_q);
        self.w_k.add_scaled(1.0, &other.w_k);
        self.w_v.add_scaled(1.0, &other.w_v);
        self.w_o.add_scaled(1.0, &other.w_o);
        axpy(1.0, &other.b, &mut self.b);
        Ok(())
    }

    fn same_shape(&self, other: &Grads) -> bool {
        self.w_q.shape() == other.w_q.shape()
            && self.w_k.shape() == other.w_k.shape()
            && self.w_v.shape() == other.w_v.shape()
            && self.w_o.shape() == other.w_o.shape()
            && self.b.len() == other.b.len()
    }

    fn matches(&self, p: &GtParams) -> bool {
        self.w_q.shape() == p.w_q.shape()
            && self.w_k.shape() == p.w_k.shape()
            && self.w_v.shape() == p.w_v.shape()
            && self.w_o.shape() == p.w_o.shape()
            && self.b.len() == p.b.len()
    }

    /// Tensors as `(name, flat values)`, in a fixed order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("w_q", self.w_q.as_slice()),
            ("w_k", self.w_k.as_slice()),
            ("w_v", self.w_v.as_slice()),
            ("w_o", self.w_o.as_slice()),
            ("b", &self.b),
        ]
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|&v| v == 0.0))
    }
}

/// Gradient of `hinge(F(x_n), y)` for the pass recorded in `cache`.
pub fn backward(cache: &ForwardCache, p: &GtParams, g: &Graph, y: f64) -> Result<Grads> {
    let mut out = Grads::zeros_like(p);
    backward_accumulate(cache, p, g, y, 1.0, &mut out)?;
    Ok(out)
}

/// Adds `scale` times the gradient for `cache` into `acc`. Returns whether
/// the hinge was active.
pub fn backward_accumulate(
    cache: &ForwardCache,
    p: &GtParams,
    g: &Graph,
    y: f64,
    scale: f64,
    acc: &mut Grads,
) -> Result<bool> {
    if !acc.matches(p)
        || cache.pre.len() != p.w_o.rows()
        || cache.v.len() != p.w_v.rows()
        || cache.pooled.len() != p.d()
    {
        return Err(Error::Internal("forward cache does not match parameters".into()));
    }
    if 1.0 - y * cache.output <= 0.0 {
        return Ok(false);
    }
    // dL/dF
    let df = -y * scale;
    let t = p.trainable;

    // h = W_O v, F = a · relu(h)
    let dh: Vec<f64> = p
        .a
        .iter()
        .zip(&cache.mask)
        .map(|(&a, &on)| if on { df * a } else { 0.0 })
        .collect();
    if t.w_o {
        acc.w_o.add_outer(1.0, &dh, &cache.v);
    }
    if !(t.w_v || t.w_q || t.w_k || t.b || t.b_self) {
        return Ok(true);
    }
    let dv = p.w_o.matvec_t(&dh);
    if t.w_v {
        acc.w_v.add_outer(1.0, &dv, &cache.pooled);
    }
    if !(t.w_q || t.w_k || t.b || t.b_self) {
        return Ok(true);
    }

    // pooled = Σ w_s x_s, v = W_V pooled
    let dpooled = p.w_v.matvec_t(&dv);
    let dw: Vec<f64> = cache.sampled.iter().map(|&s| dot(g.feature(s), &dpooled)).collect();
    // softmax Jacobian: dl_s = w_s (dw_s − Σ_r w_r dw_r)
    let mean: f64 = cache.weights.iter().zip(&dw).map(|(w, d)| w * d).sum();
    let dlogit: Vec<f64> = cache.weights.iter().zip(&dw).map(|(w, d)| w * (d - mean)).collect();

    if t.b || t.b_self {
        for (&slot, &dl) in cache.pe_slot.iter().zip(&dlogit) {
            if slot == 0 && !t.b_self || slot != 0 && !t.b {
                continue;
            }
            acc.b[slot] += dl;
        }
    }
    if t.w_q || t.w_k {
        // logit_s = (W_K x_s) · (W_Q x_n)
        let mut probe = vec![0.0; p.d()];
        for (&s, &dl) in cache.sampled.iter().zip(&dlogit) {
            axpy(dl, g.feature(s), &mut probe);
        }
        if t.w_k {
            acc.w_k.add_outer(1.0, &cache.query, &probe);
        }
        if t.w_q {
            let kp = p.w_k.matvec(&probe);
            acc.w_q.add_outer(1.0, &kp, g.feature(cache.node));
        }
    }
    Ok(true)
}

/// `p ← p − η · sum / count` on trainable tensors.
pub fn apply_sum(p: &mut GtParams, sum: &Grads, count: usize, eta: f64) -> Result<()> {
    if count == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    if !sum.matches(p) {
        return Err(Error::Internal("gradient shape mismatch".into()));
    }
    let coef = -eta / count as f64;
    let t = p.trainable;
    if t.w_q {
        p.w_q.add_scaled(coef, &sum.w_q);
    }
    if t.w_k {
        p.w_k.add_scaled(coef, &sum.w_k);
    }
    if t.w_v {
        p.w_v.add_scaled(coef, &sum.w_v);
    }
    if t.w_o {
        p.w_o.add_scaled(coef, &sum.w_o);
    }
    for (i, (bi, gi)) in p.b.iter_mut().zip(&sum.b).enumerate() {
        if (i == 0 && t.b_self) || (i != 0 && t.b) {
            *bi += coef * gi;
        }
    }
    Ok(())
}

/// One SGD step with the batch-mean gradient.
pub fn sgd_step(p: &GtParams, batch: &[Grads], eta: f64) -> Result<GtParams> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Argument("empty batch".into()))?;
    let mut sum = first.clone();
    for gr in &batch[1..] {
        sum.add(gr)?;
    }
    let mut next = p.clone();
    apply_sum(&mut next, &sum, batch.len(), eta)?;
    Ok(next)
}

/// Central difference of a scalar function of one variable.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

fn loss_at(p: &GtParams, g: &Graph, n: usize, sampled: &[usize], slots: &[usize], y: f64) -> Result<(f64, ForwardCache)> {
    let c = forward_slots(p, g, n, sampled, slots.to_vec())?;
    Ok((hinge_loss(c.output, y), c))
}

/// Smallest distance to a hinge or ReLU kink, in units of the quantities
/// that switch: the hinge margin `1 − yF` and each pre-activation.
fn kink_distance(c: &ForwardCache, y: f64) -> f64 {
    let hinge = (1.0 - y * c.output).abs();
    c.pre.iter().fold(hinge, |m, h| m.min(h.abs()))
}

#[derive(Debug, Clone, Copy)]
enum Tensor {
    WQ,
    WK,
    WV,
    WO,
    B,
}

#[derive(Debug, Clone, Copy)]
struct Coord(Tensor, usize, usize);

impl Coord {
    fn get(self, p: &mut GtParams) -> &mut f64 {
        let Coord(t, i, j) = self;
        match t {
            Tensor::WQ => &mut p.w_q[(i, j)],
            Tensor::WK => &mut p.w_k[(i, j)],
            Tensor::WV => &mut p.w_v[(i, j)],
            Tensor::WO => &mut p.w_o[(i, j)],
            Tensor::B => &mut p.b[i],
        }
    }

    fn get_grad(self, g: &mut Grads) -> &mut f64 {
        let Coord(t, i, j) = self;
        match t {
            Tensor::WQ => &mut g.w_q[(i, j)],
            Tensor::WK => &mut g.w_k[(i, j)],
            Tensor::WV => &mut g.w_v[(i, j)],
            Tensor::WO => &mut g.w_o[(i, j)],
            Tensor::B => &mut g.b[i],
        }
    }
}

/// Central finite differences of the hinge loss w.r.t. every trainable
/// scalar. Coordinates whose ±h perturbation moves the pass within `10h` of
/// a kink (or flips a kink) are left at zero and counted as skipped.
pub fn finite_diff(
    p: &GtParams,
    g: &Graph,
    n: usize,
    sampled: &[usize],
    y: f64,
    h: f64,
) -> Result<(Grads, usize)> {
    let (num, mask) = finite_diff_masked(p, g, n, sampled, y, h)?;
    let skipped = mask.tensors().iter().map(|(_, t)| t.iter().filter(|&&v| v != 0.0).count()).sum();
    Ok((num, skipped))
}

/// Like [`finite_diff`], but also returns a mask holding 1 at every skipped
/// coordinate.
pub fn finite_diff_masked(
    p: &GtParams,
    g: &Graph,
    n: usize,
    sampled: &[usize],
    y: f64,
    h: f64,
) -> Result<(Grads, Grads)> {
    let z = p.z();
    let slots: Vec<usize> = {
        let row = g.spd_row(n, z)?;
        sampled
            .iter()
            .map(|&s| crate::model::pe_index(row[s] as usize, z) - 1)
            .collect()
    };
    let mut out = Grads::zeros_like(p);
    let mut mask = Grads::zeros_like(p);
    let mut probe = p.clone();
    let t = p.trainable;

    let eval = |probe: &mut GtParams, coord: Coord| -> Result<Option<f64>> {
        let orig = *coord.get(probe);
        *coord.get(probe) = orig + h;
        let (lp, cp) = loss_at(probe, g, n, sampled, &slots, y)?;
        *coord.get(probe) = orig - h;
        let (lm, cm) = loss_at(probe, g, n, sampled, &slots, y)?;
        *coord.get(probe) = orig;
        let same_side =
            cp.mask == cm.mask && (1.0 - y * cp.output > 0.0) == (1.0 - y * cm.output > 0.0);
        if !same_side || kink_distance(&cp, y) < 10.0 * h || kink_distance(&cm, y) < 10.0 * h {
            return Ok(None);
        }
        Ok(Some((lp - lm) / (2.0 * h)))
    };

    let mut coords = Vec::new();
    for (tensor, on, m) in [
        (Tensor::WQ, t.w_q, &p.w_q),
        (Tensor::WK, t.w_k, &p.w_k),
        (Tensor::WV, t.w_v, &p.w_v),
        (Tensor::WO, t.w_o, &p.w_o),
    ] {
        if on {
            let (r, c) = m.shape();
            coords.extend((0..r).flat_map(|i| (0..c).map(move |j| Coord(tensor, i, j))));
        }
    }
    for i in 0..z {
        if (i == 0 && t.b_self) || (i != 0 && t.b) {
            coords.push(Coord(Tensor::B, i, 0));
        }
    }
    for coord in coords {
        match eval(&mut probe, coord)? {
            Some(v) => *coord.get_grad(&mut out) = v,
            None => *coord.get_grad(&mut mask) = 1.0,
        }
    }
    Ok((out, mask))
}

/// Copy of `g` with the coordinates flagged in `mask` zeroed.
pub fn masked(g: &Grads, mask: &Grads) -> Grads {
    let mut out = g.clone();
    let zero = |t: &mut [f64], m: &[f64]| t.iter_mut().zip(m).filter(|(_, &m)| m != 0.0).for_each(|(v, _)| *v = 0.0);
    zero(out.w_q.as_mut_slice(), mask.w_q.as_slice());
    zero(out.w_k.as_mut_slice(), mask.w_k.as_slice());
    zero(out.w_v.as_mut_slice(), mask.w_v.as_slice());
    zero(out.w_o.as_mut_slice(), mask.w_o.as_slice());
    zero(&mut out.b, &mask.b);
    out
}

/// Max over tensors of `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, floor)`.
pub fn max_relative_error(analytic: &Grads, numeric: &Grads, floor: f64) -> f64 {
    analytic
        .tensors()
        .iter()
        .zip(numeric.tensors().iter())
        .map(|((_, a), (_, n))| {
            let diff: f64 = a.iter().zip(n.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let na = crate::linalg::norm(a);
            let nn = crate::linalg::norm(n);
            diff / na.max(nn).max(floor)
        })
        .fold(0.0, f64::max)
}
