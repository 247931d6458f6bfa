//! Ray-trace method: standardize to a spherical normal, reduce the quadratic to a
//! scalar quadratic along each line through the origin, and average the exact
//! per-line probability (or density) over directions.

mod engine;
mod normfun;

pub use normfun::{norm_fun_cdf, norm_fun_pdf, RootConfig};

use crate::error::{Gx2Error, Result};
use crate::params::{gx2_to_quad, Gx2Params, QuadForm, Side};
use crate::special::{chi_ln_cdf_sf, chi_ln_pdf, ln_add, ln_gamma, ln_one_minus_exp, LN_10};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

/// log10 of the smallest positive normal double.
pub const LOG10_REALMIN: f64 = -307.652_655_568_588_3;

/// Linear or log-domain accumulation of per-ray terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Basic,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogMode {
    Linear,
    LogFallback,
}

/// A probability or density carried as its log10.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogProb {
    pub log10_value: f64,
    /// Standard error of `log10_value`.
    pub uncertainty_log10: Option<f64>,
    pub mode: LogMode,
    /// Quadrature did not converge, a tangent root was skipped, or roots may lie
    /// outside the scanned range.
    pub flagged: bool,
}

impl LogProb {
    pub fn zero() -> Self {
        LogProb {
            log10_value: f64::NEG_INFINITY,
            uncertainty_log10: None,
            mode: LogMode::Linear,
            flagged: false,
        }
    }

    pub fn from_linear(v: f64, sem: f64) -> Self {
        let unc = if v > 0.0 {
            Some(sem / (v * LN_10))
        } else {
            None
        };
        LogProb {
            log10_value: v.log10(),
            uncertainty_log10: unc,
            mode: LogMode::Linear,
            flagged: false,
        }
    }

    pub fn from_ln(ln_v: f64, unc_log10: Option<f64>) -> Self {
        let l = ln_v / LN_10;
        let mode = if l < LOG10_REALMIN {
            LogMode::LogFallback
        } else {
            LogMode::Linear
        };
        LogProb {
            log10_value: l,
            uncertainty_log10: unc_log10,
            mode,
            flagged: false,
        }
    }

    /// Linear value (0 below the double range).
    pub fn value(&self) -> f64 {
        10f64.powf(self.log10_value)
    }

    /// Linear standard error.
    pub fn sem(&self) -> f64 {
        self.uncertainty_log10
            .map_or(0.0, |u| u * self.value() * LN_10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayKind {
    Quadrature,
    MonteCarlo,
}

/// How directions are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayIntegrator {
    pub kind: RayKind,
    pub n_rays: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl RayIntegrator {
    pub fn quadrature(rel_tol: f64) -> Self {
        RayIntegrator {
            kind: RayKind::Quadrature,
            n_rays: 0,
            rel_tol,
            seed: 0,
        }
    }

    pub fn monte_carlo(n_rays: usize, seed: u64) -> Self {
        RayIntegrator {
            kind: RayKind::MonteCarlo,
            n_rays,
            rel_tol: 0.0,
            seed,
        }
    }

    /// Quadrature (`rel_tol`) up to four dimensions, Monte Carlo above.
    pub fn auto(dim: usize, n_rays: usize, rel_tol: f64, seed: u64) -> Self {
        if dim <= 4 {
            Self::quadrature(rel_tol)
        } else {
            Self::monte_carlo(n_rays, seed)
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        match self.kind {
            RayKind::Quadrature if dim > 4 => Err(Gx2Error::InvalidArgument(format!(
                "ray quadrature needs dimension <= 4 (got {dim}); use Monte Carlo"
            ))),
            RayKind::Quadrature if !(self.rel_tol > 0.0) => Err(Gx2Error::InvalidArgument(
                "quadrature rel_tol must be positive".into(),
            )),
            RayKind::MonteCarlo if self.n_rays < 100 => Err(Gx2Error::InvalidArgument(
                "Monte Carlo needs at least 100 rays".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// The quadratic `q2·z² + q1·z + q0` along one ray, compared with level `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayQuadratic {
    pub q2: f64,
    pub q1: f64,
    pub q0: f64,
    pub c: f64,
}

/// Transversal crossings of a ray quadratic with its level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RayRoots {
    None,
    One { z: f64, slope: f64 },
    Two { z: [f64; 2], slope: f64 },
}

impl RayQuadratic {
    /// `q1² − 4·q2·(q0 − c)`.
    pub fn discriminant(&self) -> f64 {
        let d = self.q0 - self.c;
        self.q1 * self.q1 - 4.0 * self.q2 * d
    }
}

pub fn ray_roots(rq: &RayQuadratic) -> RayRoots {
    let d = rq.q0 - rq.c;
    if rq.q2 == 0.0 {
        if rq.q1 == 0.0 {
            return RayRoots::None;
        }
        return RayRoots::One {
            z: -d / rq.q1,
            slope: rq.q1.abs(),
        };
    }
    let disc = rq.discriminant();
    let scale = rq.q1 * rq.q1 + (4.0 * rq.q2 * d).abs();
    if !(disc > 1e-14 * scale) {
        return RayRoots::None;
    }
    let sd = disc.sqrt();
    let qq = -0.5 * (rq.q1 + sd.copysign(rq.q1));
    let mut r1 = qq / rq.q2;
    let mut r2 = d / qq;
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    RayRoots::Two {
        z: [r1, r2],
        slope: sd,
    }
}

/// Asymptotic log10 tail of the chi distribution with `d` degrees of freedom.
pub fn chi_tail_log10(d: u32, z: f64, side: Side) -> f64 {
    let d = d as f64;
    let h = 0.5 * d;
    let lg = ln_gamma(h) / LN_10;
    match side {
        Side::Lower => d * z.log10() - (d.log10() + (h - 1.0) * 2f64.log10() + lg),
        Side::Upper => {
            (d - 2.0) * z.log10() - z * z / (2.0 * LN_10) - ((h - 1.0) * 2f64.log10() + lg)
        }
    }
}

/// `log10 Σ 10^t`.
pub fn log_sum_exp10(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + terms
        .iter()
        .map(|t| 10f64.powf(t - max))
        .sum::<f64>()
        .log10()
}

/// Natural log of the mass of `[u, v]` under the signed-radius density `f_χd(|z|)/2`.
pub(crate) fn ln_line_mass(d: f64, u: f64, v: f64) -> f64 {
    if !(u < v) {
        return f64::NEG_INFINITY;
    }
    if v <= 0.0 {
        return ln_line_mass(d, -v, -u);
    }
    if u < 0.0 {
        let a = chi_ln_cdf_sf(d, -u).0;
        let b = chi_ln_cdf_sf(d, v).0;
        return ln_add(a, b) - LN_2;
    }
    // 0 <= u < v
    let (fu, su) = chi_ln_cdf_sf(d, u);
    let (fv, sv) = chi_ln_cdf_sf(d, v);
    let diff = if su < -LN_2 {
        su + ln_one_minus_exp(sv - su)
    } else {
        fv + ln_one_minus_exp(fu - fv)
    };
    diff - LN_2
}

/// Natural log of the mass of `{z : a z² + b z + c < 0}` on one line.
pub(crate) fn ln_ray_below(d: f64, a: f64, b: f64, c: f64) -> f64 {
    let rq = RayQuadratic {
        q2: a,
        q1: b,
        q0: c,
        c: 0.0,
    };
    let inf = f64::INFINITY;
    match ray_roots(&rq) {
        RayRoots::One { z, .. } => {
            if b > 0.0 {
                ln_line_mass(d, -inf, z)
            } else {
                ln_line_mass(d, z, inf)
            }
        }
        RayRoots::Two { z, .. } => {
            if a > 0.0 {
                ln_line_mass(d, z[0], z[1])
            } else {
                ln_add(ln_line_mass(d, -inf, z[0]), ln_line_mass(d, z[1], inf))
            }
        }
        // the sign is constant along the line, apart from a tangent point
        RayRoots::None => {
            if a < 0.0 || (a == 0.0 && c < 0.0) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// Natural log of the line density of `a z² + b z + c` at 0.
pub(crate) fn ln_ray_density(d: f64, a: f64, b: f64, c: f64) -> f64 {
    let rq = RayQuadratic {
        q2: a,
        q1: b,
        q0: c,
        c: 0.0,
    };
    let term = |z: f64| {
        if z.is_finite() {
            chi_ln_pdf(d, z.abs()) - LN_2
        } else {
            f64::NEG_INFINITY
        }
    };
    match ray_roots(&rq) {
        RayRoots::None => f64::NEG_INFINITY,
        RayRoots::One { z, slope } => term(z) - slope.ln(),
        RayRoots::Two { z, slope } => ln_add(term(z[0]), term(z[1])) - slope.ln(),
    }
}

/// Coefficients `(n'Q₂n, q₁'n)` for a direction.
pub(crate) trait Projection: Sync {
    fn dim(&self) -> usize;
    fn project(&self, n: &[f64]) -> (f64, f64);
}

struct Diagonal {
    d: Vec<f64>,
    q1: Vec<f64>,
}

impl Projection for Diagonal {
    fn dim(&self) -> usize {
        self.d.len()
    }

    fn project(&self, n: &[f64]) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..n.len() {
            a += self.d[i] * n[i] * n[i];
            b += self.q1[i] * n[i];
        }
        (a, b)
    }
}

struct Dense {
    q2: DMatrix<f64>,
    q1: Vec<f64>,
}

impl Projection for Dense {
    fn dim(&self) -> usize {
        self.q1.len()
    }

    fn project(&self, n: &[f64]) -> (f64, f64) {
        let dim = n.len();
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..dim {
            let mut row = 0.0;
            for j in 0..dim {
                row += self.q2[(i, j)] * n[j];
            }
            a += n[i] * row;
            b += self.q1[i] * n[i];
        }
        (a, b)
    }
}

/// What each ray contributes.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RayTarget {
    Cdf(Side),
    Pdf,
}

fn per_ray(d: f64, a: f64, b: f64, c: f64, target: RayTarget) -> f64 {
    match target {
        RayTarget::Cdf(Side::Lower) => ln_ray_below(d, a, b, c),
        RayTarget::Cdf(Side::Upper) => ln_ray_below(d, -a, -b, -c),
        RayTarget::Pdf => ln_ray_density(d, a, b, c),
    }
}

fn run<P: Projection>(
    proj: &P,
    q0: f64,
    xs: &[f64],
    target: RayTarget,
    integ: &RayIntegrator,
    precision: Precision,
) -> Result<Vec<LogProb>> {
    let dim = proj.dim();
    integ.check(dim)?;
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Gx2Error::InvalidArgument("evaluation point is NaN".into()));
    }
    let d = dim as f64;
    match integ.kind {
        RayKind::MonteCarlo => Ok(engine::monte_carlo(
            integ,
            dim,
            xs.len(),
            precision,
            |n, out| {
                let (a, b) = proj.project(n);
                for (o, x) in out.iter_mut().zip(xs) {
                    *o = per_ray(d, a, b, q0 - x, target);
                }
            },
        )),
        RayKind::Quadrature => xs
            .iter()
            .map(|x| {
                engine::quadrature(integ, dim, precision, |n| {
                    let (a, b) = proj.project(n);
                    per_ray(d, a, b, q0 - x, target)
                })
            })
            .collect(),
    }
}

fn diagonal(p: &Gx2Params) -> Result<(Diagonal, f64)> {
    p.validate()?;
    let q = gx2_to_quad(p);
    Ok((
        Diagonal {
            d: q.q2.diagonal().iter().copied().collect(),
            q1: q.q1.iter().copied().collect(),
        },
        q.q0,
    ))
}

/// Tail probabilities on `side` of each point, sharing one set of directions.
pub fn ray_cdf_many(
    p: &Gx2Params,
    xs: &[f64],
    side: Side,
    integ: &RayIntegrator,
    precision: Precision,
) -> Result<Vec<LogProb>> {
    let (proj, q0) = diagonal(p)?;
    run(&proj, q0, xs, RayTarget::Cdf(side), integ, precision)
}

pub fn ray_cdf(
    p: &Gx2Params,
    x: f64,
    side: Side,
    integ: &RayIntegrator,
    precision: Precision,
) -> Result<LogProb> {
    Ok(ray_cdf_many(p, &[x], side, integ, precision)?[0])
}

/// Densities at each point, sharing one set of directions.
pub fn ray_pdf_many(
    p: &Gx2Params,
    xs: &[f64],
    integ: &RayIntegrator,
    precision: Precision,
) -> Result<Vec<LogProb>> {
    let (proj, q0) = diagonal(p)?;
    run(&proj, q0, xs, RayTarget::Pdf, integ, precision)
}

pub fn ray_pdf(
    p: &Gx2Params,
    x: f64,
    integ: &RayIntegrator,
    precision: Precision,
) -> Result<LogProb> {
    Ok(ray_pdf_many(p, &[x], integ, precision)?[0])
}

/// Tail probability of a quadratic form in a standard normal vector.
pub fn quad_ray_cdf(
    q: &QuadForm,
    xs: &[f64],
    side: Side,
    integ: &RayIntegrator,
    precision: Precision,
) -> Result<Vec<LogProb>> {
    let proj = Dense {
        q2: q.q2.clone(),
        q1: q.q1.iter().copied().collect(),
    };
    run(&proj, q.q0, xs, RayTarget::Cdf(side), integ, precision)
}

/// Density of a quadratic form in a standard normal vector.
pub fn quad_ray_pdf(
    q: &QuadForm,
    xs: &[f64],
    integ: &RayIntegrator,
    precision: Precision,
) -> Result<Vec<LogProb>> {
    let proj = Dense {
        q2: q.q2.clone(),
        q1: q.q1.iter().copied().collect(),
    };
    run(&proj, q.q0, xs, RayTarget::Pdf, integ, precision)
}

#[cfg(test)]
mod tests;
