//! Two-component PCA of the latent frame table, for scatter plots.
//!
//! The covariance matrix is formed explicitly (`d x d`, f64). The leading
//! direction comes from power iteration; the second from power iteration on
//! the deflated matrix `C - l1 v1 v1^T`, re-orthogonalised against `v1` every
//! iteration. Iteration stops when successive unit vectors differ by less than
//! [`PcaOptions::tolerance`] in max-norm, or after `max_iterations`.

use std::fmt::Write as _;

use crate::demo::SituationRef;
use crate::error::{Result, SbcError};
use crate::index::LatentIndex;
use crate::rng::SeedRng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcaOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Seed of the standard-normal start vectors.
    pub seed: u64,
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            tolerance: 1e-13,
            seed: 0x5043_41,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub situation: SituationRef,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub points: Vec<ProjectedPoint>,
    pub components: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
    /// Trace of the covariance matrix.
    pub total_variance: f64,
    pub iterations: [usize; 2],
    /// Set when every frame is identical; all coordinates are then zero.
    pub zero_variance: bool,
}

impl Projection {
    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance > 0.0 {
            (self.eigenvalues[0] + self.eigenvalues[1]) / self.total_variance
        } else {
            0.0
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,traj_id,offset,label\n");
        for p in &self.points {
            let label = if p.label.contains([',', '"', '\n']) {
                format!("\"{}\"", p.label.replace('"', "\"\""))
            } else {
                p.label.clone()
            };
            writeln!(out, "{},{},{},{},{}", p.x, p.y, p.situation.traj_id, p.situation.offset, label)
                .expect("write to String");
        }
        out
    }
}

/// Sample covariance (divided by N) of the index rows, and their mean.
pub fn covariance<T: Scalar>(index: &LatentIndex<T>) -> (Vec<f64>, Vec<f64>) {
    let d = index.dim();
    let n = index.len();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(index.embedding(i)) {
            *m += v.widen();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; d * d];
    let mut row = vec![0.0; d];
    for i in 0..n {
        for ((r, v), m) in row.iter_mut().zip(index.embedding(i)).zip(&mean) {
            *r = v.widen() - m;
        }
        for a in 0..d {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            let line = &mut cov[a * d..a * d + d];
            for b in a..d {
                line[b] += ra * row[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / n as f64;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    (cov, mean)
}

fn matvec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (o, line) in out.iter_mut().zip(m.chunks_exact(d)) {
        *o = line.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn remove_component(v: &mut [f64], unit: &[f64]) {
    let p = dot(v, unit);
    v.iter_mut().zip(unit).for_each(|(x, u)| *x -= p * u);
}

/// Largest-magnitude entry made positive, so output is sign-stable.
fn fix_sign(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dominant unit eigenvector of `m` restricted to the complement of `against`.
fn power_iterate(m: &[f64], start: Vec<f64>, against: Option<&[f64]>, opts: &PcaOptions) -> (Vec<f64>, f64, usize) {
    let d = start.len();
    let mut v = start;
    if let Some(u) = against {
        remove_component(&mut v, u);
    }
    if normalize(&mut v) == 0.0 {
        return (v, 0.0, 0);
    }
    let mut next = vec![0.0; d];
    let mut iterations = 0;
    for it in 1..=opts.max_iterations {
        iterations = it;
        matvec(m, &v, &mut next);
        if let Some(u) = against {
            remove_component(&mut next, u);
        }
        if normalize(&mut next) == 0.0 {
            // v lies in the null space: eigenvalue 0
            break;
        }
        let delta = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        std::mem::swap(&mut v, &mut next);
        if delta < opts.tolerance {
            break;
        }
    }
    if let Some(u) = against {
        remove_component(&mut v, u);
        normalize(&mut v);
    }
    matvec(m, &v, &mut next);
    let eigenvalue = dot(&v, &next).max(0.0);
    (v, eigenvalue, iterations)
}

/// Unit vector orthogonal to `u`, from the first usable basis vector.
fn any_orthogonal(u: &[f64]) -> Vec<f64> {
    let d = u.len();
    for k in 0..d {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        remove_component(&mut e, u);
        if normalize(&mut e) > 1e-6 {
            return e;
        }
    }
    vec![0.0; d]
}

/// Projects every indexed frame onto the top two principal directions.
pub fn project_2d<T: Scalar>(index: &LatentIndex<T>, labels: &[String], opts: &PcaOptions) -> Result<Projection> {
    let n = index.len();
    if n < 2 {
        return Err(SbcError::Config(format!("projection needs at least 2 frames, got {n}")));
    }
    if labels.len() != n {
        return Err(SbcError::LengthMismatch {
            observations: n,
            actions: labels.len(),
        });
    }
    let d = index.dim();
    let (cov, mean) = covariance(index);
    let total_variance: f64 = (0..d).map(|k| cov[k * d + k]).sum();
    let mut rng = SeedRng::new(opts.seed);
    let mut start = || (0..d).map(|_| rng.standard_normal()).collect::<Vec<f64>>();

    let zero_variance = total_variance == 0.0;
    let (components, eigenvalues, iterations) = if zero_variance {
        log::warn!("projection: all frames identical, emitting zero coordinates");
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        let e2 = any_orthogonal(&e1);
        ([e1, e2], [0.0, 0.0], [0, 0])
    } else {
        let (mut v1, l1, it1) = power_iterate(&cov, start(), None, opts);
        fix_sign(&mut v1);
        let mut deflated = cov.clone();
        for a in 0..d {
            for b in 0..d {
                deflated[a * d + b] -= l1 * v1[a] * v1[b];
            }
        }
        let (mut v2, mut l2, it2) = if d > 1 {
            power_iterate(&deflated, start(), Some(&v1), opts)
        } else {
            (vec![0.0], 0.0, 0)
        };
        if d > 1 && dot(&v2, &v2) == 0.0 {
            v2 = any_orthogonal(&v1);
            l2 = 0.0;
        }
        fix_sign(&mut v2);
        ([v1, v2], [l1, l2], [it1, it2])
    };

    let mut centred = vec![0.0; d];
    let points = (0..n)
        .map(|i| {
            let (x, y) = if zero_variance {
                (0.0, 0.0)
            } else {
                for ((c, v), m) in centred.iter_mut().zip(index.embedding(i)).zip(&mean) {
                    *c = v.widen() - m;
                }
                (dot(&centred, &components[0]), dot(&centred, &components[1]))
            };
            ProjectedPoint {
                x,
                y,
                situation: index.situation(i),
                label: labels[i].clone(),
            }
        })
        .collect();

    Ok(Projection {
        points,
        components,
        eigenvalues,
        total_variance,
        iterations,
        zero_variance,
    })
}
