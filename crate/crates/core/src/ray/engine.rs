//! Averaging a per-direction quantity over the unit sphere, by Monte Carlo or,
//! in up to four dimensions, by nested adaptive quadrature.

use super::{LogProb, Precision, RayIntegrator};
use crate::error::{Gx2Error, Result};
use crate::quadrature::integrate_split;
use crate::sample::block_rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;

const BLOCK: usize = 4096;
// keeps ray directions independent of sample streams drawn with the same seed
const STREAM_SALT: u64 = 0x5241_5953;

/// Running sums of `e^v` and `e^{2v}` relative to a shared maximum.
#[derive(Debug, Clone, Copy)]
struct LogAcc {
    max: f64,
    s1: f64,
    s2: f64,
}

impl LogAcc {
    const EMPTY: LogAcc = LogAcc {
        max: f64::NEG_INFINITY,
        s1: 0.0,
        s2: 0.0,
    };

    fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            let r = (self.max - v).exp();
            self.s1 *= r;
            self.s2 *= r * r;
            self.max = v;
        }
        let e = (v - self.max).exp();
        self.s1 += e;
        self.s2 += e * e;
    }

    fn merge(&mut self, o: &LogAcc) {
        if o.max == f64::NEG_INFINITY {
            return;
        }
        if o.max > self.max {
            let r = (self.max - o.max).exp();
            self.s1 = self.s1 * r + o.s1;
            self.s2 = self.s2 * r * r + o.s2;
            self.max = o.max;
        } else {
            let r = (o.max - self.max).exp();
            self.s1 += o.s1 * r;
            self.s2 += o.s2 * r * r;
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LinAcc {
    s1: f64,
    s2: f64,
}

#[derive(Debug, Clone)]
enum Acc {
    Lin(Vec<LinAcc>),
    Log(Vec<LogAcc>),
}

/// Uniform random unit vector from standard normals.
fn direction<R: Rng>(rng: &mut R, n: &mut [f64]) {
    loop {
        let mut norm = 0.0;
        for v in n.iter_mut() {
            *v = rng.sample(StandardNormal);
            norm += *v * *v;
        }
        if norm > 1e-300 {
            let s = 1.0 / norm.sqrt();
            n.iter_mut().for_each(|v| *v *= s);
            return;
        }
    }
}

/// Monte Carlo mean of `f` (natural-log valued, `n_out` outputs per direction).
pub(crate) fn monte_carlo<F>(
    integ: &RayIntegrator,
    dim: usize,
    n_out: usize,
    precision: Precision,
    f: F,
) -> Vec<LogProb>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let n_rays = integ.n_rays;
    let n_blocks = n_rays.div_ceil(BLOCK);
    let blocks: Vec<Acc> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(integ.seed ^ STREAM_SALT, b as u64);
            let len = BLOCK.min(n_rays - b * BLOCK);
            let mut n = vec![0.0; dim];
            let mut out = vec![0.0; n_out];
            match precision {
                Precision::Basic => {
                    let mut acc = vec![LinAcc { s1: 0.0, s2: 0.0 }; n_out];
                    for _ in 0..len {
                        direction(&mut rng, &mut n);
                        f(&n, &mut out);
                        for (a, v) in acc.iter_mut().zip(&out) {
                            let e = v.exp();
                            a.s1 += e;
                            a.s2 += e * e;
                        }
                    }
                    Acc::Lin(acc)
                }
                Precision::Log => {
                    let mut acc = vec![LogAcc::EMPTY; n_out];
                    for _ in 0..len {
                        direction(&mut rng, &mut n);
                        f(&n, &mut out);
                        for (a, v) in acc.iter_mut().zip(&out) {
                            a.push(*v);
                        }
                    }
                    Acc::Log(acc)
                }
            }
        })
        .collect();

    let nf = n_rays as f64;
    let mut result = Vec::with_capacity(n_out);
    match precision {
        Precision::Basic => {
            let mut tot = vec![LinAcc { s1: 0.0, s2: 0.0 }; n_out];
            for b in &blocks {
                if let Acc::Lin(a) = b {
                    for (t, x) in tot.iter_mut().zip(a) {
                        t.s1 += x.s1;
                        t.s2 += x.s2;
                    }
                }
            }
            for t in tot {
                let mean = t.s1 / nf;
                let var = (t.s2 / nf - mean * mean).max(0.0);
                let sem = (var / (nf - 1.0)).sqrt();
                result.push(LogProb::from_linear(mean, sem));
            }
        }
        Precision::Log => {
            let mut tot = vec![LogAcc::EMPTY; n_out];
            for b in &blocks {
                if let Acc::Log(a) = b {
                    for (t, x) in tot.iter_mut().zip(a) {
                        t.merge(x);
                    }
                }
            }
            for t in tot {
                if t.max == f64::NEG_INFINITY {
                    result.push(LogProb::zero());
                    continue;
                }
                let m1 = t.s1 / nf;
                let var = (t.s2 / nf - m1 * m1).max(0.0);
                // delta method: sd(log10 mean) = sem / (mean ln 10)
                let rel = (var / (nf - 1.0)).sqrt() / m1;
                let ln_mean = t.max + m1.ln();
                result.push(LogProb::from_ln(
                    ln_mean,
                    Some(rel / std::f64::consts::LN_10),
                ));
            }
        }
    }
    result
}

/// Point on the unit sphere for quadrature coordinates `u` (D−1 of them).
fn sphere_point(dim: usize, u: &[f64], n: &mut [f64]) {
    match dim {
        1 => n[0] = 1.0,
        2 => {
            n[0] = u[0].cos();
            n[1] = u[0].sin();
        }
        3 => {
            // u = (θ, cos φ)
            let s = (1.0 - u[1] * u[1]).max(0.0).sqrt();
            n[0] = s * u[0].cos();
            n[1] = s * u[0].sin();
            n[2] = u[1];
        }
        4 => {
            // u = (s = sin²α, θ1, θ2)
            let c = (1.0 - u[0]).max(0.0).sqrt();
            let s = u[0].max(0.0).sqrt();
            n[0] = c * u[1].cos();
            n[1] = c * u[1].sin();
            n[2] = s * u[2].cos();
            n[3] = s * u[2].sin();
        }
        _ => unreachable!(),
    }
}

/// Integration box (over half the sphere where the integrand is even) and the
/// factor turning the integral into a mean over directions.
fn sphere_box(dim: usize) -> (Vec<(f64, f64, usize)>, f64) {
    match dim {
        1 => (vec![], 1.0),
        2 => (vec![(0.0, PI, 8)], 1.0 / PI),
        3 => (vec![(0.0, PI, 8), (-1.0, 1.0, 4)], 0.5 / PI),
        4 => (
            vec![(0.0, 1.0, 4), (0.0, 2.0 * PI, 8), (0.0, PI, 4)],
            0.5 / (PI * PI),
        ),
        _ => unreachable!(),
    }
}

struct Nested<'a, G: Fn(&[f64]) -> f64> {
    dim: usize,
    bounds: Vec<(f64, f64, usize)>,
    g: &'a G,
    rel_tol: f64,
    abs_tol: f64,
    converged: std::cell::Cell<bool>,
}

impl<G: Fn(&[f64]) -> f64> Nested<'_, G> {
    fn level(&self, depth: usize, u: &mut Vec<f64>) -> (f64, f64) {
        if depth == self.bounds.len() {
            let mut n = vec![0.0; self.dim];
            sphere_point(self.dim, u, &mut n);
            return ((self.g)(&n), 0.0);
        }
        let (a, b, pieces) = self.bounds[depth];
        let est = integrate_split(
            |t| {
                u.push(t);
                let (v, _) = self.level(depth + 1, u);
                u.pop();
                v
            },
            a,
            b,
            pieces,
            self.abs_tol,
            self.rel_tol,
            400,
        );
        if !est.converged {
            self.converged.set(false);
        }
        (est.value, est.error)
    }
}

/// Mean over directions of `g` (natural-log valued) by nested adaptive quadrature.
pub(crate) fn quadrature<G>(
    integ: &RayIntegrator,
    dim: usize,
    precision: Precision,
    g: G,
) -> Result<LogProb>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    if dim > 4 {
        return Err(Gx2Error::InvalidArgument(format!(
            "direction quadrature supports at most 4 dimensions (got {dim})"
        )));
    }
    if dim == 1 {
        let v = g(&[1.0]);
        return Ok(finish(v, 0.0, true, precision));
    }
    // scale by a pilot maximum so that deep tails stay representable
    let ln_ref = pilot_max(dim, &g);
    if ln_ref == f64::NEG_INFINITY {
        return Ok(LogProb::zero());
    }
    let (bounds, factor) = sphere_box(dim);
    let scaled = |n: &[f64]| (g(n) - ln_ref).exp();
    let nested = Nested {
        dim,
        bounds,
        g: &scaled,
        rel_tol: integ.rel_tol.max(MIN_REL_TOL),
        abs_tol: 1e-6 * integ.rel_tol.max(MIN_REL_TOL),
        converged: std::cell::Cell::new(true),
    };
    let (v, e) = nested.level(0, &mut Vec::with_capacity(3));
    let v = v * factor;
    // inner integrals are resolved only to the tolerance, and the outer estimate does not see their errors
    let inner = if nested.bounds.len() > 1 {
        nested.rel_tol * v.abs()
    } else {
        0.0
    };
    let e = e * factor + inner;
    if !(v > 0.0) {
        // the mass sits in a spike narrower than the adaptive grid resolves
        let mc = RayIntegrator {
            kind: super::RayKind::MonteCarlo,
            n_rays: SPIKE_FALLBACK_RAYS,
            rel_tol: 0.0,
            seed: integ.seed,
        };
        let mut out = monte_carlo(&mc, dim, 1, precision, |n, o| o[0] = g(n))[0];
        out.flagged = true;
        return Ok(out);
    }
    let ln_v = ln_ref + v.ln();
    let rel = e / v;
    Ok(finish(ln_v, rel, nested.converged.get(), precision))
}

const SPIKE_FALLBACK_RAYS: usize = 1 << 20;
/// Tighter requests only exhaust subdivisions on round-off; 1e-12 already gives
/// errors near 1e-15 on smooth integrands.
const MIN_REL_TOL: f64 = 1e-12;

fn finish(ln_v: f64, rel: f64, converged: bool, precision: Precision) -> LogProb {
    let mut lp = match precision {
        Precision::Log => LogProb::from_ln(ln_v, Some(rel / std::f64::consts::LN_10)),
        Precision::Basic => {
            let v = ln_v.exp();
            LogProb::from_linear(v, v * rel)
        }
    };
    lp.flagged = !converged;
    lp
}

fn pilot_max<G: Fn(&[f64]) -> f64>(dim: usize, g: &G) -> f64 {
    let (bounds, _) = sphere_box(dim);
    let steps = match dim {
        2 => 2048,
        3 => 96,
        _ => 24,
    };
    let mut best = f64::NEG_INFINITY;
    let mut u = vec![0.0; bounds.len()];
    let mut n = vec![0.0; dim];
    let total = steps_pow(steps, bounds.len());
    for idx in 0..total {
        let mut r = idx;
        for (j, &(a, b, _)) in bounds.iter().enumerate() {
            let i = r % steps;
            r /= steps;
            u[j] = a + (b - a) * (i as f64 + 0.5) / steps as f64;
        }
        sphere_point(dim, &u, &mut n);
        best = best.max(g(&n));
    }
    // coordinate axes catch integrands peaked along them
    for i in 0..dim {
        n.iter_mut().for_each(|v| *v = 0.0);
        n[i] = 1.0;
        best = best.max(g(&n));
    }
    best
}

fn steps_pow(s: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, _| acc * s)
}
