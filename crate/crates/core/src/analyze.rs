//! Diagnostics for graphs whose patterns are unknown: which nodes look
//! discriminative (a cone test in the top-3 eigenspace of their class's
//! scatter matrix), and how the normalized winning margin varies with distance.

use std::fmt::Write as _;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::graphgen::argmax_first;
use crate::linalg::{dot, norm, normalize, Matrix};
use crate::seed;

/// Stop once no eigenvector component moves by more than this in a step.
pub const EIG_TOL: f64 = 1e-10;
pub const EIG_MAX_ITER: usize = 10_000;

/// Whether the scatter matrix subtracts the sample mean first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// Second-moment matrix `(1/k) Σ x xᵀ`. Keeps the cluster direction,
    /// which the cone test needs for tight clusters.
    #[default]
    Uncentered,
    /// Covariance `(1/k) Σ (x − x̄)(x − x̄)ᵀ`.
    Centered,
}

/// Centered sample covariance `(1/k) Σ (x − x̄)(x − x̄)ᵀ` of the rows.
pub fn covariance(rows: &[&[f64]]) -> Result<Matrix> {
    scatter(rows, Centering::Centered)
}

pub fn scatter(rows: &[&[f64]], centering: Centering) -> Result<Matrix> {
    let k = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if k == 0 || d == 0 {
        return Err(Error::InsufficientData("covariance of an empty sample".into()));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        if r.len() != d {
            return Err(Error::Dimension("rows of unequal length".into()));
        }
        if centering == Centering::Centered {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / k as f64;
            }
        }
    }
    let mut c = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in rows {
        for ((c, v), m) in centered.iter_mut().zip(r.iter()).zip(&mean) {
            *c = v - m;
        }
        c.add_outer(1.0 / k as f64, &centered, &centered);
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    /// Unit eigenvectors, leading first.
    pub vectors: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub iterations: Vec<usize>,
    /// False when some vector hit the iteration cap.
    pub converged: bool,
    /// `max ‖Cv − λv‖` over the returned pairs.
    pub residual: f64,
    /// Some consecutive eigenvalues coincide within tolerance, so the
    /// corresponding vectors are not unique.
    pub degenerate: bool,
}

/// Leading `k` eigenpairs of a symmetric positive semidefinite matrix by
/// power iteration with Hotelling deflation.
pub fn power_eigenpairs(c: &Matrix, k: usize) -> Result<Eigenpairs> {
    let d = c.rows();
    if c.cols() != d {
        return Err(Error::Dimension("eigenproblem needs a square matrix".into()));
    }
    if k == 0 || k > d {
        return Err(Error::Dimension(format!("cannot extract {k} eigenvectors in dimension {d}")));
    }
    let mut a = c.clone();
    let mut rng = seed::rng(0xE16E4);
    let (mut vectors, mut values, mut iterations) = (Vec::new(), Vec::new(), Vec::new());
    let mut converged = true;
    for _ in 0..k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        orthogonalize(&mut v, &vectors);
        normalize(&mut v);
        let mut rq = dot(&v, &a.matvec(&v));
        let mut done = false;
        let mut it = 0;
        while it < EIG_MAX_ITER {
            it += 1;
            let mut w = a.matvec(&v);
            orthogonalize(&mut w, &vectors);
            if normalize(&mut w) == 0.0 {
                // v lies in the null space of the deflated matrix
                done = true;
                rq = 0.0;
                break;
            }
            // change of direction, ignoring a sign flip
            let delta = w.iter().zip(&v).map(|(x, y)| (x - y).abs().min((x + y).abs())).fold(0.0, f64::max);
            v = w;
            rq = dot(&v, &a.matvec(&v));
            if delta < EIG_TOL {
                done = true;
                break;
            }
        }
        converged &= done;
        a.add_outer(-rq, &v, &v);
        vectors.push(v);
        values.push(rq);
        iterations.push(it);
    }
    let residual = vectors
        .iter()
        .zip(&values)
        .map(|(v, &l)| {
            let cv = c.matvec(v);
            norm(&cv.iter().zip(v).map(|(a, b)| a - l * b).collect::<Vec<_>>())
        })
        .fold(0.0, f64::max);
    let scale = values.first().map_or(0.0, |v: &f64| v.abs()).max(1e-300);
    let degenerate = values.windows(2).any(|w| (w[0] - w[1]).abs() <= 1e-6 * scale);
    Ok(Eigenpairs {
        vectors,
        values,
        iterations,
        converged,
        residual,
        degenerate,
    })
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

/// Top three eigenvectors of one class's second-moment matrix.
pub fn top_eigvecs(features: &[&[f64]]) -> Result<Eigenpairs> {
    top_eigvecs_with(features, Centering::default())
}

pub fn top_eigvecs_with(features: &[&[f64]], centering: Centering) -> Result<Eigenpairs> {
    if features.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} samples in class, need at least 4",
            features.len()
        )));
    }
    power_eigenpairs(&scatter(features, centering)?, 3)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeTest {
    /// Fraction of features inside the π/4 cone; NaN for a degenerate mean.
    pub fraction: f64,
    pub in_cone: Vec<bool>,
    /// Features whose projection vanished (counted outside the cone).
    pub zero_norm: usize,
    /// The mean projection was (numerically) zero, so no cone exists.
    pub degenerate_mean: bool,
}

/// Projects features onto `eigvecs` and counts those within π/4 of the mean
/// projection.
pub fn discriminative_fraction(features: &[&[f64]], eigvecs: &[Vec<f64>]) -> Result<ConeTest> {
    if eigvecs.len() != 3 {
        return Err(Error::Argument(format!("cone test needs 3 eigenvectors, got {}", eigvecs.len())));
    }
    if features.is_empty() {
        return Err(Error::InsufficientData("no features".into()));
    }
    let proj: Vec<[f64; 3]> = features
        .iter()
        .map(|x| [dot(x, &eigvecs[0]), dot(x, &eigvecs[1]), dot(x, &eigvecs[2])])
        .collect();
    let mut mean = [0.0; 3];
    for p in &proj {
        (0..3).for_each(|i| mean[i] += p[i] / proj.len() as f64);
    }
    let mean_norm = norm(&mean);
    let scale = proj.iter().map(|p| norm(p)).fold(0.0, f64::max);
    if mean_norm <= 1e-12 * scale.max(f64::MIN_POSITIVE) || mean_norm == 0.0 {
        return Ok(ConeTest {
            fraction: f64::NAN,
            in_cone: vec![false; proj.len()],
            zero_norm: proj.iter().filter(|p| norm(*p) == 0.0).count(),
            degenerate_mean: true,
        });
    }
    let cos_limit = std::f64::consts::FRAC_PI_4.cos();
    let mut zero_norm = 0;
    let in_cone: Vec<bool> = proj
        .iter()
        .map(|p| {
            let pn = norm(p);
            if pn <= 1e-12 * scale {
                zero_norm += 1;
                return false;
            }
            dot(p, &mean) / (pn * mean_norm) > cos_limit
        })
        .collect();
    let fraction = in_cone.iter().filter(|&&b| b).count() as f64 / in_cone.len() as f64;
    Ok(ConeTest {
        fraction,
        in_cone,
        zero_norm,
        degenerate_mean: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    /// Mean of `Δ_n(z)/|N_z^n|` for `z = 1..z_cap-1`; index 0 is `z = 1`.
    pub normalized: Vec<f64>,
    /// 1-based argmax of `normalized`, ties toward smaller `z`.
    pub z_m: usize,
    /// Fraction of nodes with `Δ_n(z_m) > 0`.
    pub positive_fraction: f64,
    /// Nodes with an empty distance-`z` neighborhood, per `z`.
    pub empty: Vec<usize>,
}

/// Normalized margins and neighborhood sizes, both indexed `[node][z-1]`.
pub type MarginTable = (Vec<Vec<f64>>, Vec<Vec<i64>>);

/// Per-node `Δ_n(z)/|N_z^n|` as `[node][z-1]`, where same-class
/// discriminative neighbors count +1 and other classes' discriminative
/// neighbors count −1 divided by the number of other classes. Empty
/// neighborhoods contribute 0.
pub fn normalized_margin_table(g: &Graph, z_cap: usize, discriminative: &[bool]) -> Result<MarginTable> {
    if discriminative.len() != g.len() {
        return Err(Error::Dimension("one discriminative flag per node required".into()));
    }
    let mut classes: Vec<i32> = g.labels().to_vec();
    classes.sort_unstable();
    classes.dedup();
    let others = (classes.len().max(1) - 1) as f64;
    let rows: Vec<Result<(Vec<f64>, Vec<i64>)>> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            let row = g.spd_row(n, z_cap)?;
            let mut same = vec![0i64; z_cap - 1];
            let mut other = vec![0i64; z_cap - 1];
            let mut size = vec![0i64; z_cap - 1];
            for (s, &d) in row.iter().enumerate() {
                let d = d as usize;
                if d == 0 || d >= z_cap {
                    continue;
                }
                size[d - 1] += 1;
                if discriminative[s] {
                    if g.label(s) == g.label(n) {
                        same[d - 1] += 1;
                    } else {
                        other[d - 1] += 1;
                    }
                }
            }
            let margins: Vec<f64> = (0..z_cap - 1)
                .map(|z| {
                    let conf = if others > 0.0 { other[z] as f64 / others } else { 0.0 };
                    same[z] as f64 - conf
                })
                .collect();
            let norm: Vec<f64> = margins
                .iter()
                .zip(&size)
                .map(|(m, &k)| if k == 0 { 0.0 } else { m / k as f64 })
                .collect();
            Ok((norm, size))
        })
        .collect();
    let mut table = Vec::with_capacity(g.len());
    let mut sizes = Vec::with_capacity(g.len());
    for r in rows {
        let (t, s) = r?;
        table.push(t);
        sizes.push(s);
    }
    Ok((table, sizes))
}

pub fn normalized_margin_profile(g: &Graph, z_cap: usize, discriminative: &[bool]) -> Result<MarginReport> {
    if g.is_empty() {
        return Err(Error::Argument("empty graph".into()));
    }
    let (table, sizes) = normalized_margin_table(g, z_cap, discriminative)?;
    let n = g.len() as f64;
    let normalized: Vec<f64> = (0..z_cap - 1)
        .map(|z| table.iter().map(|r| r[z]).sum::<f64>() / n)
        .collect();
    let empty: Vec<usize> = (0..z_cap - 1)
        .map(|z| sizes.iter().filter(|s| s[z] == 0).count())
        .collect();
    let best = argmax_first(&normalized);
    let positive = table.iter().filter(|r| r[best] > 0.0).count();
    Ok(MarginReport {
        normalized,
        z_m: best + 1,
        positive_fraction: positive as f64 / n,
        empty,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class: i32,
    pub size: usize,
    /// NaN when the class was skipped.
    pub fraction: f64,
    pub eigenvalues: Vec<f64>,
    pub converged: bool,
    pub degenerate: bool,
    pub zero_norm: usize,
    /// Why the class was skipped, if it was.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub classes: Vec<ClassReport>,
    pub discriminative: Vec<bool>,
    pub margin: MarginReport,
}

impl Analysis {
    pub fn classes_csv(&self) -> String {
        let mut out = String::from("class,size,discriminative_fraction,lambda_1,lambda_2,lambda_3,converged,degenerate,zero_norm,note\n");
        for c in &self.classes {
            let l = |i: usize| c.eigenvalues.get(i).map_or(String::new(), |v| format!("{v:e}"));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                c.class,
                c.size,
                c.fraction,
                l(0),
                l(1),
                l(2),
                c.converged as u8,
                c.degenerate as u8,
                c.zero_norm,
                c.note.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        out
    }

    pub fn margin_csv(&self) -> String {
        let mut out = String::from("z,normalized_margin,empty_neighborhoods\n");
        for (i, (m, e)) in self.margin.normalized.iter().zip(&self.margin.empty).enumerate() {
            let _ = writeln!(out, "{},{m:e},{e}", i + 1);
        }
        let _ = writeln!(out, "# z_m={} positive_fraction={}", self.margin.z_m, self.margin.positive_fraction);
        out
    }
}

/// Cone test on every class, then the normalized margin profile over the
/// nodes it flags as discriminative.
pub fn analyze_graph(g: &Graph, z_cap: usize) -> Result<Analysis> {
    let mut classes: Vec<i32> = g.labels().to_vec();
    classes.sort_unstable();
    classes.dedup();
    let per_class: Vec<(ClassReport, Vec<(usize, bool)>)> = classes
        .par_iter()
        .map(|&class| {
            let members: Vec<usize> = (0..g.len()).filter(|&n| g.label(n) == class).collect();
            let feats: Vec<&[f64]> = members.iter().map(|&n| g.feature(n)).collect();
            let mut report = ClassReport {
                class,
                size: members.len(),
                fraction: f64::NAN,
                eigenvalues: Vec::new(),
                converged: false,
                degenerate: false,
                zero_norm: 0,
                note: None,
            };
            let eig = match top_eigvecs(&feats) {
                Ok(e) => e,
                Err(e) => {
                    report.note = Some(e.to_string());
                    return Ok((report, Vec::new()));
                }
            };
            report.eigenvalues = eig.values.clone();
            report.converged = eig.converged;
            report.degenerate = eig.degenerate;
            let cone = discriminative_fraction(&feats, &eig.vectors)?;
            report.fraction = cone.fraction;
            report.zero_norm = cone.zero_norm;
            if cone.degenerate_mean {
                report.note = Some("mean projection vanishes; class skipped".into());
            }
            let flags = members.into_iter().zip(cone.in_cone).collect();
            Ok((report, flags))
        })
        .collect::<Result<_>>()?;
    let mut discriminative = vec![false; g.len()];
    let mut reports = Vec::new();
    for (r, flags) in per_class {
        for (n, f) in flags {
            discriminative[n] = f;
        }
        reports.push(r);
    }
    let margin = normalized_margin_profile(g, z_cap, &discriminative)?;
    Ok(Analysis {
        classes: reports,
        discriminative,
        margin,
    })
}
