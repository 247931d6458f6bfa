//! Reference methods: Gil-Pelaez inversion of the characteristic function
//! (Imhof) and Ruben's mixture-of-chi-squares series for elliptical cases.

use crate::error::{Gx2Error, Result};
use crate::params::{ln_charfun, moments, Gx2Params, Side};
use crate::quadrature::{integrate, integrate_split, wynn_epsilon};
use crate::special::{ln_add, ln_gamma_pq, ln_gamma_prefactor};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

/// Tolerances for the adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_subdivisions: 4000,
        }
    }
}

/// A quadrature-backed probability or density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImhofValue {
    pub value: f64,
    /// Absolute error estimate.
    pub error: f64,
    /// Set when the raw result fell outside its valid range and was clamped.
    pub unreliable: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum Kernel {
    Cdf,
    Pdf,
}

/// `∫₀^∞ g(t) dt` for the Gil-Pelaez integrands, with error estimate.
fn gil_pelaez(p: &Gx2Params, x: f64, kernel: Kernel, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    let mut shifted = p.clone();
    shifted.m = p.m - x;
    let mo = moments(p);
    let k1 = mo.m1 - x;
    let series_c = mo.m3 / 6.0 + 0.5 * k1 * mo.m2 + k1 * k1 * k1 / 6.0;
    let small_t = 1e-4 / (k1.abs() + mo.m2.sqrt() + mo.m3.abs().cbrt());

    let g = |t: f64| -> f64 {
        match kernel {
            Kernel::Cdf => {
                if t < small_t {
                    k1 - t * t * series_c
                } else {
                    let l = ln_charfun(&shifted, t);
                    l.re.exp() * l.im.sin() / t
                }
            }
            Kernel::Pdf => {
                let l = ln_charfun(&shifted, t);
                l.re.exp() * l.im.cos()
            }
        }
    };
    let envelope = |t: f64| -> f64 {
        let a = ln_charfun(&shifted, t).re.exp();
        match kernel {
            Kernel::Cdf => a / t,
            Kernel::Pdf => a,
        }
    };

    let tol = PI * spec.abs_tol;
    let wmax = p.w.iter().fold(p.s.abs(), |a, w| a.max(w.abs()));
    let wmin = p.w.iter().fold(f64::INFINITY, |a, w| a.min(w.abs()));
    // beyond this point the CF has settled into its power-law, fixed-frequency regime
    let t_asym = if p.w.is_empty() {
        f64::INFINITY
    } else {
        20.0 / wmin
    };

    let mut t_end = 1.0 / wmax;
    let mut needs_tail = false;
    loop {
        if envelope(t_end) * t_end < 1e-3 * tol {
            break;
        }
        if t_end >= t_asym {
            needs_tail = true;
            break;
        }
        t_end *= 2.0;
    }

    // phase speed bound, used to pre-split the finite range
    let omega_max = k1.abs()
        + p.w
            .iter()
            .zip(&p.k)
            .zip(&p.lambda)
            .map(|((w, &k), l)| w.abs() * (k as f64 + l))
            .sum::<f64>();
    let pieces = ((t_end * omega_max / PI).ceil() as usize).clamp(1, 20_000);
    let body = integrate_split(
        g,
        0.0,
        t_end,
        pieces,
        0.5 * tol,
        spec.rel_tol,
        spec.max_subdivisions,
    );
    let mut value = body.value;
    let mut error = body.error;

    if needs_tail {
        let (tv, te) = oscillatory_tail(&g, t_end, p.m - x, 0.5 * tol, spec);
        value += tv;
        error += te;
    }
    if !value.is_finite() {
        return Err(Gx2Error::NonFinite(
            "characteristic-function integral".into(),
        ));
    }
    if error > 1e3 * tol.max(spec.rel_tol * value.abs()) && error > 1e-6 {
        return Err(Gx2Error::NoConvergence {
            estimate: value,
            residual: error,
        });
    }
    Ok((value, error))
}

/// `∫_{t0}^∞ g` where `g` oscillates asymptotically with angular frequency `omega`.
fn oscillatory_tail<G: Fn(f64) -> f64>(
    g: &G,
    t0: f64,
    omega: f64,
    tol: f64,
    spec: &QuadratureSpec,
) -> (f64, f64) {
    let mut t0 = t0;
    let (mut acc, mut quad_err) = (0.0, 0.0);
    if omega.abs() * t0 < 2.0 * PI {
        let period = 2.0 * PI / omega.abs();
        if !(period < 1e12 * t0) {
            // no oscillation within reach: map [t0, ∞) onto (0, 1]
            let e = integrate(
                |u: f64| {
                    if u == 0.0 {
                        0.0
                    } else {
                        g(t0 / u) * t0 / (u * u)
                    }
                },
                0.0,
                1.0,
                tol,
                spec.rel_tol,
                spec.max_subdivisions,
            );
            return (e.value, e.error);
        }
        // run up to the first full period on doubling intervals
        while t0 < period {
            let b = (2.0 * t0).min(period);
            let e = integrate(g, t0, b, 1e-2 * tol, spec.rel_tol, spec.max_subdivisions);
            acc += e.value;
            quad_err += e.error;
            t0 = b;
        }
    }
    let half = PI / omega.abs();
    let mut sums: Vec<f64> = Vec::new();
    let mut quiet = 0;
    let mut best = (0.0, f64::INFINITY);
    for j in 0..600 {
        let a = t0 + j as f64 * half;
        let e = integrate(g, a, a + half, 1e-2 * tol, spec.rel_tol, 200);
        acc += e.value;
        quad_err += e.error;
        sums.push(acc);
        if e.value.abs() < 1e-3 * tol {
            quiet += 1;
            if quiet >= 3 {
                return (acc, quad_err + e.value.abs());
            }
        } else {
            quiet = 0;
        }
        if sums.len() >= 6 {
            let tail = &sums[sums.len().saturating_sub(40)..];
            let (v, err) = wynn_epsilon(tail);
            if err < best.1 {
                best = (v, err);
            }
            if err < tol {
                return (v, err + quad_err);
            }
        }
    }
    (best.0, best.1 + quad_err)
}

/// `x` lies strictly past the end of a finite tail.
fn beyond_support(p: &Gx2Params, x: f64) -> bool {
    match p.finite_tail_side() {
        Some(Side::Lower) => x < p.m,
        Some(Side::Upper) => x > p.m,
        None => false,
    }
}

fn finish_probability(raw: f64, error: f64) -> ImhofValue {
    let unreliable = !(0.0..=1.0).contains(&raw);
    ImhofValue {
        value: raw.clamp(0.0, 1.0),
        error,
        unreliable,
    }
}

/// `P(X < x)` (lower) or `P(X > x)` (upper) by Gil-Pelaez inversion.
pub fn imhof(p: &Gx2Params, x: f64, side: Side, spec: &QuadratureSpec) -> Result<ImhofValue> {
    p.validate()?;
    if beyond_support(p, x) {
        let below = p.finite_tail_side() == Some(Side::Lower);
        let v = if (side == Side::Lower) == below {
            0.0
        } else {
            1.0
        };
        return Ok(ImhofValue {
            value: v,
            error: 0.0,
            unreliable: false,
        });
    }
    let (i, e) = gil_pelaez(p, x, Kernel::Cdf, spec)?;
    let raw = match side {
        Side::Lower => 0.5 - i / PI,
        Side::Upper => 0.5 + i / PI,
    };
    Ok(finish_probability(raw, e / PI))
}

pub fn imhof_cdf(p: &Gx2Params, x: f64, spec: &QuadratureSpec) -> Result<ImhofValue> {
    imhof(p, x, Side::Lower, spec)
}

pub fn imhof_pdf(p: &Gx2Params, x: f64, spec: &QuadratureSpec) -> Result<ImhofValue> {
    p.validate()?;
    if beyond_support(p, x) {
        return Ok(ImhofValue {
            value: 0.0,
            error: 0.0,
            unreliable: false,
        });
    }
    let (i, e) = gil_pelaez(p, x, Kernel::Pdf, spec)?;
    let raw = i / PI;
    Ok(ImhofValue {
        value: raw.max(0.0),
        error: e / PI,
        unreliable: raw < 0.0,
    })
}

/// Orders between direct restarts of the downward gamma recurrence.
const RESEED: usize = 16;

/// Coefficients of `F(x) = Σ a_i F_{χ²_{d+2i}}((x − m)/β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RubenExpansion {
    pub beta: f64,
    /// Linear coefficients; entries may underflow to zero.
    pub a: Vec<f64>,
    /// Natural logs of the coefficients.
    pub ln_a: Vec<f64>,
    pub dof_base: u32,
    pub partial_sum: f64,
    /// Offset and orientation of the expanded distribution.
    m: f64,
    flipped: bool,
}

/// Result of a series evaluation, carried in natural log form as well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub ln_value: f64,
    /// Upper bound on the truncation error of `value`.
    pub truncation: f64,
}

fn elliptical(p: &Gx2Params) -> Result<(Gx2Params, bool)> {
    p.validate()?;
    if !p.is_ellipse() {
        return Err(Gx2Error::Inapplicable {
            method: "ruben",
            reason: "weights must share one sign and s must be 0".into(),
            alternatives: "imhof, ifft, ray",
        });
    }
    Ok(p.positive_orientation())
}

struct RubenRecursion {
    g: Vec<f64>,
    mant: Vec<f64>,
    ln_scale: f64,
    c: Vec<f64>,
    k: Vec<f64>,
    lw: Vec<f64>,
    beta: f64,
}

impl RubenRecursion {
    fn new(p: &Gx2Params, beta: f64) -> Self {
        let c: Vec<f64> = p.w.iter().map(|w| 1.0 - beta / w).collect();
        let ln_a0 =
            p.w.iter()
                .zip(&p.k)
                .zip(&p.lambda)
                .map(|((w, &k), l)| 0.5 * k as f64 * (beta / w).ln() - 0.5 * l)
                .sum::<f64>();
        RubenRecursion {
            g: vec![0.0],
            mant: vec![1.0],
            ln_scale: ln_a0,
            c,
            k: p.k.iter().map(|&k| k as f64).collect(),
            lw: p.lambda.iter().zip(&p.w).map(|(l, w)| l / w).collect(),
            beta,
        }
    }

    fn push(&mut self) {
        let j = self.mant.len();
        let r = j as f64;
        let mut gr = 0.0;
        for i in 0..self.c.len() {
            let cp = self.c[i].powi(j as i32 - 1);
            gr += self.k[i] * cp * self.c[i] + self.beta * r * self.lw[i] * cp;
        }
        self.g.push(gr);
        let mut s = 0.0;
        for rr in 1..=j {
            s += self.g[rr] * self.mant[j - rr];
        }
        let aj = s / (2.0 * r);
        self.mant.push(aj);
        if aj > 1e250 {
            for v in &mut self.mant {
                *v *= 1e-250;
            }
            self.ln_scale += 250.0 * std::f64::consts::LN_10;
        }
    }

    fn ln_coeffs(&self) -> Vec<f64> {
        self.mant
            .iter()
            .map(|v| {
                if *v > 0.0 {
                    v.ln() + self.ln_scale
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }
}

/// Upper limit on automatically chosen series lengths.
pub const RUBEN_MAX_TERMS: usize = 20_000;

impl RubenExpansion {
    /// Expansion with `n_terms` coefficients and scale `beta` (default: smallest |w|).
    pub fn new(p: &Gx2Params, n_terms: usize, beta: Option<f64>) -> Result<Self> {
        let (q, flipped) = elliptical(p)?;
        let wmin = q.w.iter().cloned().fold(f64::INFINITY, f64::min);
        let beta = beta.unwrap_or(wmin);
        if !(beta > 0.0) {
            return Err(Gx2Error::InvalidArgument("beta must be positive".into()));
        }
        let mut rec = RubenRecursion::new(&q, beta);
        while rec.mant.len() < n_terms.max(1) {
            rec.push();
        }
        Ok(Self::from_recursion(&q, rec, flipped))
    }

    /// Expansion grown until the coefficients sum to 1 within `1e-14`, or the term cap.
    pub fn auto(p: &Gx2Params) -> Result<Self> {
        let (q, flipped) = elliptical(p)?;
        let beta = q.w.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut rec = RubenRecursion::new(&q, beta);
        while rec.mant.len() < RUBEN_MAX_TERMS {
            for _ in 0..16 {
                rec.push();
            }
            let ln_sum = rec
                .mant
                .iter()
                .filter(|v| **v > 0.0)
                .fold(f64::NEG_INFINITY, |acc, v| ln_add(acc, v.ln()))
                + rec.ln_scale;
            let n = rec.mant.len();
            let ln_last =
                rec.mant[n - 16..].iter().cloned().fold(0.0, f64::max).ln() + rec.ln_scale;
            if ln_sum > -1e-14 || (ln_sum > -0.1 && ln_last < -46.0) {
                break;
            }
        }
        Ok(Self::from_recursion(&q, rec, flipped))
    }

    fn from_recursion(q: &Gx2Params, rec: RubenRecursion, flipped: bool) -> Self {
        let ln_a = rec.ln_coeffs();
        let a: Vec<f64> = ln_a.iter().map(|l| l.exp()).collect();
        let ln_sum = ln_a
            .iter()
            .fold(f64::NEG_INFINITY, |acc, &l| ln_add(acc, l));
        RubenExpansion {
            beta: rec.beta,
            a,
            ln_a,
            dof_base: q.dof(),
            partial_sum: ln_sum.exp(),
            m: q.m,
            flipped,
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Mass missing from the truncated series.
    pub fn missing_mass(&self) -> f64 {
        (1.0 - self.partial_sum).max(0.0)
    }

    /// Tail probability on `side` of `x`.
    pub fn cdf(&self, x: f64, side: Side) -> SeriesValue {
        let (y, side) = if self.flipped {
            (-x - self.m, side.opposite())
        } else {
            (x - self.m, side)
        };
        let y = y / self.beta;
        let miss = self.missing_mass();
        if y <= 0.0 {
            return match side {
                Side::Lower => SeriesValue {
                    value: 0.0,
                    ln_value: f64::NEG_INFINITY,
                    truncation: 0.0,
                },
                Side::Upper => SeriesValue {
                    value: 1.0,
                    ln_value: 0.0,
                    truncation: 0.0,
                },
            };
        }
        let x2 = 0.5 * y;
        let lx = x2.ln();
        let a0 = 0.5 * self.dof_base as f64;
        let n = self.ln_a.len();
        let mut acc = f64::NEG_INFINITY;
        let truncation;
        match side {
            Side::Upper => {
                // Q(a+1) = Q(a) + D(a), D(a) = x^a e^{-x} / Γ(a+1)
                let mut lq = ln_gamma_pq(a0, x2).1;
                let mut ld = ln_gamma_prefactor(a0 + 1.0, x2) - lx;
                for i in 0..n {
                    acc = ln_add(acc, self.ln_a[i] + lq);
                    lq = ln_add(lq, ld);
                    ld += lx - (a0 + i as f64 + 1.0).ln();
                }
                truncation = miss;
            }
            Side::Lower => {
                // P(a) = P(a+1) + D(a), run downward from the top order
                let top = a0 + (n - 1) as f64;
                let mut lp = ln_gamma_pq(top, x2).0;
                let mut ld = ln_gamma_prefactor(top, x2) - lx; // D(top - 1)
                truncation = miss * ln_gamma_pq(top + 1.0, x2).0.exp();
                for i in (0..n).rev() {
                    let a = a0 + i as f64;
                    if i % RESEED == 0 && i + 1 < n {
                        // the recurrence loses about ε·|ln P| per step
                        lp = ln_gamma_pq(a, x2).0;
                        ld = ln_gamma_prefactor(a, x2) - lx;
                    }
                    acc = ln_add(acc, self.ln_a[i] + lp);
                    lp = ln_add(lp, ld);
                    ld += (a - 1.0).max(f64::MIN_POSITIVE).ln() - lx;
                }
            }
        }
        let acc = acc.min(0.0);
        SeriesValue {
            value: acc.exp(),
            ln_value: acc,
            truncation,
        }
    }

    /// Density at `x`.
    pub fn pdf(&self, x: f64) -> SeriesValue {
        let y = if self.flipped {
            -x - self.m
        } else {
            x - self.m
        } / self.beta;
        if y <= 0.0 {
            return SeriesValue {
                value: 0.0,
                ln_value: f64::NEG_INFINITY,
                truncation: 0.0,
            };
        }
        let x2 = 0.5 * y;
        let lx = x2.ln();
        let a0 = 0.5 * self.dof_base as f64;
        // f_{χ²_{2a}}(y) = D(a - 1; y/2) / 2
        let mut ld = ln_gamma_prefactor(a0, x2) - lx;
        let mut acc = f64::NEG_INFINITY;
        for i in 0..self.ln_a.len() {
            acc = ln_add(acc, self.ln_a[i] + ld);
            ld += lx - (a0 + i as f64).ln();
        }
        let ln_value = acc - LN_2 - self.beta.ln();
        SeriesValue {
            value: ln_value.exp(),
            ln_value,
            truncation: f64::NAN,
        }
    }
}

/// Ruben coefficients for elliptical parameters.
pub fn ruben_coeffs(p: &Gx2Params, n_terms: usize, beta: Option<f64>) -> Result<RubenExpansion> {
    RubenExpansion::new(p, n_terms, beta)
}

pub fn ruben_cdf(p: &Gx2Params, x: f64, n_terms: usize, side: Side) -> Result<f64> {
    Ok(RubenExpansion::new(p, n_terms, None)?.cdf(x, side).value)
}

pub fn ruben_pdf(p: &Gx2Params, x: f64, n_terms: usize) -> Result<f64> {
    Ok(RubenExpansion::new(p, n_terms, None)?.pdf(x).value)
}
