//! Ray tracing for an arbitrary function of a normal vector, with roots found
//! numerically along each ray.

use super::{engine, ln_line_mass, LogProb, Precision, RayIntegrator, RayKind};
use crate::error::{Gx2Error, Result};
use crate::params::{NormalSpec, Side};
use crate::special::{chi_ln_cdf_sf, chi_ln_pdf, ln_add, LN_10};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use std::sync::atomic::{AtomicBool, Ordering};

/// Bracketing grid for root searches along each ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootConfig {
    /// Roots are sought in `[−z_max, z_max]`; beyond that the sign is taken as constant.
    pub z_max: f64,
    pub n_grid: usize,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig {
            z_max: 40.0,
            n_grid: 400,
        }
    }
}

/// A scalar function of the original (non-standardized) vector.
pub type ScalarFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);
/// Gradient of a [`ScalarFn`], written into the second argument.
pub type GradFn<'a> = &'a (dyn Fn(&[f64], &mut [f64]) + Sync);

struct Standardized<'a> {
    f: ScalarFn<'a>,
    normal: &'a NormalSpec,
    c: f64,
    cfg: RootConfig,
}

impl Standardized<'_> {
    fn point(&self, n: &[f64], r: f64, x: &mut [f64]) {
        let s = &self.normal.sqrt_sigma;
        let d = n.len();
        for i in 0..d {
            let mut v = self.normal.mu[i];
            for j in 0..d {
                v += s[(i, j)] * n[j] * r;
            }
            x[i] = v;
        }
    }

    fn g(&self, n: &[f64], r: f64, x: &mut [f64]) -> f64 {
        self.point(n, r, x);
        (self.f)(x) - self.c
    }

    /// Sign-change roots of `g` along `n`, plus the sign at the far left.
    fn roots(&self, n: &[f64], x: &mut [f64], bad: &AtomicBool) -> (Vec<f64>, bool) {
        let m = self.cfg.n_grid.max(2);
        let h = 2.0 * self.cfg.z_max / m as f64;
        let mut roots = Vec::new();
        let mut r0 = -self.cfg.z_max;
        let mut g0 = self.g(n, r0, x);
        let left_neg = g0 < 0.0;
        for i in 1..=m {
            let r1 = -self.cfg.z_max + i as f64 * h;
            let g1 = self.g(n, r1, x);
            if !g1.is_finite() {
                bad.store(true, Ordering::Relaxed);
            }
            if (g0 < 0.0) != (g1 < 0.0) {
                let (mut lo, mut hi, mut glo) = (r0, r1, g0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if hi - lo <= 1e-12 * (1.0 + mid.abs()) || mid <= lo || mid >= hi {
                        break;
                    }
                    let gm = self.g(n, mid, x);
                    if (gm < 0.0) == (glo < 0.0) {
                        lo = mid;
                        glo = gm;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            r0 = r1;
            g0 = g1;
        }
        (roots, left_neg)
    }
}

fn check(normal: &NormalSpec, integ: &RayIntegrator, cfg: &RootConfig) -> Result<()> {
    integ.check(normal.dim())?;
    if !(cfg.z_max > 0.0) || cfg.n_grid < 2 {
        return Err(Gx2Error::InvalidArgument(
            "root bracket needs z_max > 0 and at least 2 grid cells".into(),
        ));
    }
    Ok(())
}

fn integrate<G: Fn(&[f64]) -> f64 + Sync>(
    integ: &RayIntegrator,
    dim: usize,
    precision: Precision,
    g: G,
) -> Result<LogProb> {
    match integ.kind {
        RayKind::MonteCarlo => {
            Ok(engine::monte_carlo(integ, dim, 1, precision, |n, out| out[0] = g(n))[0])
        }
        RayKind::Quadrature => engine::quadrature(integ, dim, precision, g),
    }
}

/// Probability that `f(x) < c` (lower) or `f(x) > c` (upper) for `x ~ N(μ, Σ)`.
pub fn norm_fun_cdf(
    f: ScalarFn,
    normal: &NormalSpec,
    c: f64,
    side: Side,
    integ: &RayIntegrator,
    precision: Precision,
    cfg: &RootConfig,
) -> Result<LogProb> {
    check(normal, integ, cfg)?;
    let dim = normal.dim();
    let d = dim as f64;
    let st = Standardized {
        f,
        normal,
        c,
        cfg: *cfg,
    };
    let bad = AtomicBool::new(false);
    let mut out = integrate(integ, dim, precision, |n| {
        let mut x = vec![0.0; dim];
        let (roots, left_neg) = st.roots(n, &mut x, &bad);
        let want_neg = side == Side::Lower;
        let mut acc = f64::NEG_INFINITY;
        let mut lo = f64::NEG_INFINITY;
        let mut neg = left_neg;
        for &r in roots.iter().chain(std::iter::once(&f64::INFINITY)) {
            if neg == want_neg {
                acc = ln_add(acc, ln_line_mass(d, lo, r));
            }
            lo = r;
            neg = !neg;
        }
        acc
    })?;
    if bad.load(Ordering::Relaxed) {
        return Err(Gx2Error::NonFinite(
            "function returned a non-finite value".into(),
        ));
    }
    out.flagged |= beyond_bracket(d, cfg.z_max, &out);
    Ok(out)
}

/// Density of `f(x)` at `c` for `x ~ N(μ, Σ)`; slopes come from `grad` when given,
/// otherwise from central differences.
pub fn norm_fun_pdf(
    f: ScalarFn,
    grad: Option<GradFn>,
    normal: &NormalSpec,
    c: f64,
    integ: &RayIntegrator,
    precision: Precision,
    cfg: &RootConfig,
) -> Result<LogProb> {
    check(normal, integ, cfg)?;
    let dim = normal.dim();
    let d = dim as f64;
    let st = Standardized {
        f,
        normal,
        c,
        cfg: *cfg,
    };
    let bad = AtomicBool::new(false);
    let tangent = AtomicBool::new(false);
    let mut out = integrate(integ, dim, precision, |n| {
        let mut x = vec![0.0; dim];
        let mut gv = vec![0.0; dim];
        let (roots, _) = st.roots(n, &mut x, &bad);
        let mut acc = f64::NEG_INFINITY;
        for r in roots {
            let slope = match grad {
                Some(gr) => {
                    // d/dr f(S r n + μ) = (S n)·∇f
                    st.point(n, r, &mut x);
                    gr(&x, &mut gv);
                    let s = &normal.sqrt_sigma;
                    let mut v = 0.0;
                    for i in 0..dim {
                        let mut sn = 0.0;
                        for j in 0..dim {
                            sn += s[(i, j)] * n[j];
                        }
                        v += sn * gv[i];
                    }
                    v.abs()
                }
                None => {
                    let h = 1e-6 * (1.0 + r.abs());
                    ((st.g(n, r + h, &mut x) - st.g(n, r - h, &mut x)) / (2.0 * h)).abs()
                }
            };
            if !(slope > 0.0) || !slope.is_finite() {
                tangent.store(true, Ordering::Relaxed);
                continue;
            }
            acc = ln_add(acc, chi_ln_pdf(d, r.abs()) - LN_2 - slope.ln());
        }
        acc
    })?;
    if bad.load(Ordering::Relaxed) {
        return Err(Gx2Error::NonFinite(
            "function returned a non-finite value".into(),
        ));
    }
    out.flagged |= tangent.load(Ordering::Relaxed);
    Ok(out)
}

/// Whether the mass outside the scanned radius is not negligible next to the result.
fn beyond_bracket(d: f64, z_max: f64, out: &LogProb) -> bool {
    let tail = chi_ln_cdf_sf(d, z_max).1 / LN_10;
    tail > out.log10_value - 3.0
}
