//! One-layer graph transformer: a single attention head whose logits carry a
//! learned bias indexed by shortest-path distance, followed by a two-layer
//! ReLU perceptron with a frozen ±1/√m output layer.
//!
//! ```text
//! g(s, n) = (W_K x_s)·(W_Q x_n) + b[pe(spd(s, n))]
//! F(x_n)  = aᵀ ReLU(W_O W_V Σ_s softmax_n(g(s, n)) x_s)
//! ```

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Spd};
use crate::linalg::{dot, random_orthonormal, Matrix};
use crate::seed::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Full model: attention plus distance bias.
    Gt,
    /// Attention without positional bias (`b` fixed at zero).
    GtNoPe,
    /// `W_Q = W_K = 0`, `b = 0`: uniform mean aggregation.
    Gcn,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Gt => "gt",
            Mode::GtNoPe => "gt_nope",
            Mode::Gcn => "gcn",
        }
    }

    pub fn trains_attention(self) -> bool {
        self != Mode::Gcn
    }

    pub fn trains_pe(self) -> bool {
        self == Mode::Gt
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gt" => Ok(Mode::Gt),
            "gt_nope" | "nope" => Ok(Mode::GtNoPe),
            "gcn" => Ok(Mode::Gcn),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    /// Query/key noise scale.
    pub delta: f64,
    /// Value noise scale.
    pub sigma: f64,
    /// Standard deviation of `W_O` entries.
    pub xi: f64,
    /// Multiple of the identity used for `W_Q` and `W_K`.
    pub attn_init_scale: f64,
    /// Use `δ²I/c0²` and `σ²U/c0²` with no noise instead of the scaled
    /// identity. Saturates the softmax at the default constants.
    pub literal_scale: bool,
    /// Feature noise level the literal scales divide by.
    pub c0: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            delta: 0.2,
            sigma: 0.1,
            xi: 0.01,
            attn_init_scale: 1.0,
            literal_scale: false,
            c0: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub m_a: usize,
    pub m_b: usize,
    /// Hidden width of the perceptron.
    pub m: usize,
    /// Length of the positional bias vector.
    pub z: usize,
    pub mode: Mode,
    pub init: InitConfig,
    /// Keep `b[pe(0)]` (the self entry) at its initial value.
    pub freeze_self_pe: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            m_a: 20,
            m_b: 20,
            m: 400,
            z: 20,
            mode: Mode::Gt,
            init: InitConfig::default(),
            freeze_self_pe: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.m_a == 0 || self.m_b == 0 || self.m == 0 || d == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.z < 2 || self.z > Spd::MAX as usize {
            return Err(Error::Config(format!(
                "PE length z={} outside [2, {}]",
                self.z,
                Spd::MAX
            )));
        }
        if self.init.literal_scale && (self.m_a != d || self.m_b != d) {
            return Err(Error::Config(format!(
                "literal initialization needs m_a = m_b = d, got m_a={}, m_b={}, d={d}",
                self.m_a, self.m_b
            )));
        }
        if self.init.literal_scale && self.init.c0 <= 0.0 {
            return Err(Error::Config("literal initialization needs c0 > 0".into()));
        }
        Ok(())
    }
}

/// Which tensors an update may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub w_q: bool,
    pub w_k: bool,
    pub w_v: bool,
    pub w_o: bool,
    pub b: bool,
    pub b_self: bool,
}

impl Trainable {
    pub fn for_mode(mode: Mode, freeze_self_pe: bool) -> Self {
        Self {
            w_q: mode.trains_attention(),
            w_k: mode.trains_attention(),
            w_v: true,
            w_o: true,
            b: mode.trains_pe(),
            b_self: mode.trains_pe() && !freeze_self_pe,
        }
    }

    pub fn output_only() -> Self {
        Self {
            w_q: false,
            w_k: false,
            w_v: false,
            w_o: true,
            b: false,
            b_self: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    /// Output weights, each ±1/√m; never updated.
    pub a: Vec<f64>,
    /// Positional bias; `b[i]` is the 0-based slot of PE index `i + 1`.
    pub b: Vec<f64>,
    pub mode: Mode,
    pub trainable: Trainable,
}

impl GtParams {
    pub fn d(&self) -> usize {
        self.w_q.cols()
    }

    pub fn z(&self) -> usize {
        self.b.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w_q.is_finite()
            && self.w_k.is_finite()
            && self.w_v.is_finite()
            && self.w_o.is_finite()
            && self.b.iter().all(|v| v.is_finite())
    }

    /// Bias for a given distance.
    pub fn pe_bias(&self, spd: usize) -> f64 {
        self.b[pe_index(spd, self.z()) - 1]
    }

    /// Writes one CSV per tensor plus `manifest.txt` into `dir`.
    pub fn write_snapshot(&self, dir: &Path, extra: &[(String, String)]) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tensors: [(&str, &Matrix); 4] = [
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_o", &self.w_o),
        ];
        for (name, m) in tensors {
            write_csv_rows(&dir.join(format!("{name}.csv")), m.row_iter())?;
        }
        write_csv_rows(&dir.join("a.csv"), self.a.chunks(1))?;
        write_csv_rows(&dir.join("b.csv"), self.b.chunks(1))?;
        let path = dir.join("manifest.txt");
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = vec![
            format!("mode={}", self.mode),
            format!("d={}", self.d()),
            format!("m_a={}", self.w_q.rows()),
            format!("m_b={}", self.w_v.rows()),
            format!("m={}", self.w_o.rows()),
            format!("z={}", self.z()),
        ];
        lines.extend(extra.iter().map(|(k, v)| format!("{k}={v}")));
        for l in lines {
            writeln!(f, "{l}").map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn write_csv_rows<'a>(path: &Path, rows: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Draws initial parameters for feature dimension `d`.
pub fn init_params(cfg: &ModelConfig, d: usize, seed: u64) -> Result<GtParams> {
    cfg.validate(d)?;
    let mut rng = seed::rng_for(seed, &[stream::INIT]);
    let init = &cfg.init;
    let inv_sqrt_m = 1.0 / (cfg.m as f64).sqrt();
    let a: Vec<f64> = (0..cfg.m)
        .map(|_| if rng.random_bool(0.5) { inv_sqrt_m } else { -inv_sqrt_m })
        .collect();
    let w_o = Matrix::gaussian(cfg.m, cfg.m_b, init.xi, &mut rng);
    let u = random_orthonormal(cfg.m_b, d, &mut rng)?;

    let (w_q, w_k, w_v) = if init.literal_scale {
        let c0_sq = init.c0 * init.c0;
        let mut qk = Matrix::eye(cfg.m_a, d);
        qk.scale(init.delta * init.delta / c0_sq);
        let mut v = u;
        v.scale(init.sigma * init.sigma / c0_sq);
        (qk.clone(), qk, v)
    } else {
        let qk_noise = init.delta / (cfg.m_a as f64).sqrt();
        let mut w_q = Matrix::eye(cfg.m_a, d);
        w_q.scale(init.attn_init_scale);
        let mut w_k = w_q.clone();
        w_q.add_scaled(1.0, &Matrix::gaussian(cfg.m_a, d, qk_noise, &mut rng));
        w_k.add_scaled(1.0, &Matrix::gaussian(cfg.m_a, d, qk_noise, &mut rng));
        let mut w_v = u;
        let v_noise = init.sigma / (cfg.m_b as f64).sqrt();
        w_v.add_scaled(1.0, &Matrix::gaussian(cfg.m_b, d, v_noise, &mut rng));
        (w_q, w_k, w_v)
    };

    let (w_q, w_k) = if cfg.mode.trains_attention() {
        (w_q, w_k)
    } else {
        (Matrix::zeros(cfg.m_a, d), Matrix::zeros(cfg.m_a, d))
    };

    Ok(GtParams {
        w_q,
        w_k,
        w_v,
        w_o,
        a,
        b: vec![0.0; cfg.z],
        mode: cfg.mode,
        trainable: Trainable::for_mode(cfg.mode, cfg.freeze_self_pe),
    })
}

/// 1-based PE index of a shortest-path distance: `spd + 1`, capped at `z`.
pub fn pe_index(spd: usize, z: usize) -> usize {
    (spd + 1).min(z)
}

pub fn hinge_loss(f: f64, y: f64) -> f64 {
    (1.0 - y * f).max(0.0)
}

/// Everything from one node's forward pass that backprop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub node: usize,
    pub sampled: Vec<usize>,
    /// 0-based bias slot per sampled node.
    pub pe_slot: Vec<usize>,
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
    /// `W_Q x_n`.
    pub query: Vec<f64>,
    /// `W_Kᵀ W_Q x_n`, so that the content logit of `s` is `x_s · key_probe`.
    pub key_probe: Vec<f64>,
    /// Attention-weighted feature `Σ_s w_s x_s`.
    pub pooled: Vec<f64>,
    /// `V_n = W_V · pooled`.
    pub v: Vec<f64>,
    /// `W_O V_n`.
    pub pre: Vec<f64>,
    /// `1[pre >= 0]`.
    pub mask: Vec<bool>,
    pub output: f64,
}

impl ForwardCache {
    /// Per-node value vectors `W_V x_s`, recomputed on demand.
    pub fn value_vectors(&self, p: &GtParams, g: &Graph) -> Vec<Vec<f64>> {
        self.sampled.iter().map(|&s| p.w_v.matvec(g.feature(s))).collect()
    }
}

/// Forward pass for node `n` aggregating over `sampled`.
///
/// Distances come from the graph's SPD cache when it matches `p.z()`,
/// otherwise from a BFS out of `n`.
pub fn forward(p: &GtParams, g: &Graph, n: usize, sampled: &[usize]) -> Result<(f64, ForwardCache)> {
    if sampled.is_empty() {
        return Err(Error::Argument(format!("empty aggregation set for node {n}")));
    }
    let z = p.z();
    let slots: Vec<usize> = match g.spd_cache() {
        Some(t) => sampled
            .iter()
            .map(|&s| pe_index(t.get(n, s) as usize, z) - 1)
            .collect(),
        None => {
            let row = g.spd_row(n, z)?;
            sampled.iter().map(|&s| pe_index(row[s] as usize, z) - 1).collect()
        }
    };
    let cache = forward_slots(p, g, n, sampled, slots)?;
    Ok((cache.output, cache))
}

/// Forward pass with precomputed bias slots.
pub fn forward_slots(
    p: &GtParams,
    g: &Graph,
    n: usize,
    sampled: &[usize],
    pe_slot: Vec<usize>,
) -> Result<ForwardCache> {
    if sampled.is_empty() {
        return Err(Error::Argument(format!("empty aggregation set for node {n}")));
    }
    if pe_slot.len() != sampled.len() {
        return Err(Error::Internal("slot/sample length mismatch".into()));
    }
    let d = p.d();
    let query = p.w_q.matvec(g.feature(n));
    let key_probe = p.w_k.matvec_t(&query);

    let logits: Vec<f64> = sampled
        .iter()
        .zip(&pe_slot)
        .map(|(&s, &slot)| dot(g.feature(s), &key_probe) + p.b[slot])
        .collect();
    let weights = softmax(&logits);

    let mut pooled = vec![0.0; d];
    for (&s, &w) in sampled.iter().zip(&weights) {
        crate::linalg::axpy(w, g.feature(s), &mut pooled);
    }
    let v = p.w_v.matvec(&pooled);
    let pre = p.w_o.matvec(&v);
    let mask: Vec<bool> = pre.iter().map(|&h| h >= 0.0).collect();
    let output = p
        .a
        .iter()
        .zip(&pre)
        .filter(|(_, &h)| h >= 0.0)
        .map(|(a, h)| a * h)
        .sum();

    Ok(ForwardCache {
        node: n,
        sampled: sampled.to_vec(),
        pe_slot,
        logits,
        weights,
        query,
        key_probe,
        pooled,
        v,
        pre,
        mask,
        output,
    })
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Attention weights of node `n` over `sampled`, keyed by sampled node.
pub fn attention_row(p: &GtParams, g: &Graph, n: usize, sampled: &[usize]) -> Result<Vec<(usize, f64)>> {
    let (_, cache) = forward(p, g, n, sampled)?;
    Ok(cache.sampled.into_iter().zip(cache.weights).collect())
}
