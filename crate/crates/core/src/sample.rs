//! Random draws, reproducible for a given seed regardless of thread count.

use crate::params::{gx2_to_quad, Gx2Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Draws are generated in blocks of this size, each on its own stream.
const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplePath {
    /// Evaluate the canonical quadratic at standard normal vectors.
    Quadratic,
    /// Sum scaled noncentral chi-square draws plus the normal term.
    Component,
}

/// Generator for block `block` of the stream identified by `seed`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

pub fn sample(p: &Gx2Params, count: usize, seed: u64, path: SamplePath) -> Vec<f64> {
    let n_blocks = count.div_ceil(BLOCK);
    let quad = gx2_to_quad(p);
    let diag: Vec<f64> = quad.q2.diagonal().iter().copied().collect();
    let q1: Vec<f64> = quad.q1.iter().copied().collect();
    let chis: Vec<Option<ChiSquared<f64>>> =
        p.k.iter()
            .zip(&p.lambda)
            .map(|(&k, &l)| {
                let free = if l > 0.0 { k - 1 } else { k };
                (free > 0).then(|| ChiSquared::new(free as f64).expect("positive dof"))
            })
            .collect();

    let blocks: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b as u64);
            let len = BLOCK.min(count - b * BLOCK);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let v = match path {
                    SamplePath::Quadratic => {
                        let mut q = quad.q0;
                        for j in 0..diag.len() {
                            let z: f64 = rng.sample(StandardNormal);
                            q += (diag[j] * z + q1[j]) * z;
                        }
                        q
                    }
                    SamplePath::Component => {
                        let mut x = p.m;
                        for i in 0..p.w.len() {
                            let mut c = 0.0;
                            if p.lambda[i] > 0.0 {
                                let z: f64 = rng.sample(StandardNormal);
                                c += (z + p.lambda[i].sqrt()).powi(2);
                            }
                            if let Some(chi) = &chis[i] {
                                c += chi.sample(&mut rng);
                            }
                            x += p.w[i] * c;
                        }
                        if p.s != 0.0 {
                            let z: f64 = rng.sample(StandardNormal);
                            x += p.s * z;
                        }
                        x
                    }
                };
                out.push(v);
            }
            out
        })
        .collect();
    blocks.concat()
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
