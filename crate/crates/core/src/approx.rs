//! Closed-form approximations: three-moment Pearson (body), dominant-pole
//! asymptote (infinite tails) and the ellipse estimate (finite tail).

use crate::error::{Gx2Error, Result};
use crate::params::{moments, Gx2Params, Side};
use crate::special::{chi2_ln_cdf_sf, chi2_ln_pdf, ln_gamma, ncx2_ln_pdf, ncx2_ln_sf, LN_10};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

const LOG10_REALMIN: f64 = crate::ray::LOG10_REALMIN;

/// Central chi-square matched to the first three moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonMatch {
    pub k_match: f64,
    /// Negative skew: the approximation is applied to `−X`.
    pub flipped: bool,
    /// Support end of the matched variable, in the flipped orientation.
    pub end: f64,
    /// Chi-square units per unit of x.
    pub scale: f64,
}

pub fn pearson_match(p: &Gx2Params) -> Result<PearsonMatch> {
    p.validate()?;
    let mo = moments(p);
    if mo.m3 == 0.0 {
        return Err(Gx2Error::Inapplicable {
            method: "pearson",
            reason: "third central moment is zero".into(),
            alternatives: "imhof, ifft, ray",
        });
    }
    let flipped = mo.m3 < 0.0;
    let q = p.merged();
    if q.w.len() == 1 && q.lambda[0] == 0.0 && q.s == 0.0 {
        // already a scaled chi-square; skip the moment round trip
        let m = if flipped { -q.m } else { q.m };
        return Ok(PearsonMatch {
            k_match: q.k[0] as f64,
            flipped,
            end: m,
            scale: 1.0 / q.w[0].abs(),
        });
    }
    let k = 8.0 * mo.m2.powi(3) / (mo.m3 * mo.m3);
    let scale = (2.0 * k / mo.m2).sqrt();
    let m1 = if flipped { -mo.m1 } else { mo.m1 };
    Ok(PearsonMatch {
        k_match: k,
        flipped,
        end: m1 - k / scale,
        scale,
    })
}

impl PearsonMatch {
    fn arg(&self, x: f64) -> (f64, f64) {
        let x = if self.flipped { -x } else { x };
        ((x - self.end) * self.scale, self.scale)
    }

    /// Natural log of the tail on `side` of `x`.
    pub fn ln_cdf(&self, x: f64, side: Side) -> f64 {
        let (y, _) = self.arg(x);
        let (lo, hi) = chi2_ln_cdf_sf(self.k_match, y.max(0.0));
        let side = if self.flipped { side.opposite() } else { side };
        match side {
            Side::Lower => lo,
            Side::Upper => hi,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let (y, scale) = self.arg(x);
        if y < 0.0 {
            return f64::NEG_INFINITY;
        }
        scale.ln() + chi2_ln_pdf(self.k_match, y)
    }
}

pub fn pearson_cdf(p: &Gx2Params, x: f64) -> Result<f64> {
    Ok(pearson_match(p)?.ln_cdf(x, Side::Lower).exp())
}

pub fn pearson_pdf(p: &Gx2Params, x: f64) -> Result<f64> {
    Ok(pearson_match(p)?.ln_pdf(x).exp())
}

/// The dominant weight of one infinite tail and the prefactor multiplying its
/// noncentral chi-square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDominant {
    /// Largest weight for the upper tail, most negative for the lower.
    pub w_star: f64,
    pub k_star: u32,
    pub lambda_star: f64,
    pub a: f64,
    pub ln_a: f64,
    pub side: Side,
}

impl TailDominant {
    pub fn odd_kstar(&self) -> bool {
        self.k_star % 2 == 1
    }

    /// Argument of the dominant chi-square, `x/w★`.
    fn y(&self, x: f64) -> f64 {
        x / self.w_star
    }
}

pub fn tail_dominant(p: &Gx2Params, side: Side) -> Result<TailDominant> {
    p.validate()?;
    let q = match side {
        Side::Upper => p.merged(),
        Side::Lower => p.flipped().merged(),
    };
    let Some(star) = (0..q.w.len())
        .filter(|&i| q.w[i] > 0.0)
        .max_by(|&i, &j| q.w[i].total_cmp(&q.w[j]))
    else {
        return Err(Gx2Error::Inapplicable {
            method: "tail",
            reason: format!("the {side:?} tail has no chi-square term").to_lowercase(),
            alternatives: "ray, imhof",
        });
    };
    let ws = q.w[star];
    let mut ln_a = q.m / (2.0 * ws) + q.s * q.s / (8.0 * ws * ws);
    for j in 0..q.w.len() {
        if j == star {
            continue;
        }
        let wj = q.w[j];
        ln_a += q.lambda[j] * wj / (2.0 * (ws - wj)) - 0.5 * q.k[j] as f64 * (1.0 - wj / ws).ln();
    }
    let w_star = match side {
        Side::Upper => ws,
        Side::Lower => -ws,
    };
    Ok(TailDominant {
        w_star,
        k_star: q.k[star],
        lambda_star: q.lambda[star],
        a: ln_a.exp(),
        ln_a,
        side,
    })
}

/// A tail approximation in log10 with applicability metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailValue {
    pub log10_value: f64,
    /// The point is beyond `m1 ± 2√m2` on the requested side.
    pub in_range: bool,
    pub odd_kstar: bool,
    /// The closed-form asymptote was used because the value is below the double range.
    pub asymptotic: bool,
}

fn in_tail_range(p: &Gx2Params, x: f64, side: Side) -> bool {
    let mo = moments(p);
    match side {
        Side::Upper => x > mo.m1 + 2.0 * mo.m2.sqrt(),
        Side::Lower => x < mo.m1 - 2.0 * mo.m2.sqrt(),
    }
}

/// log10 of the tail probability on `side` of `x`.
pub fn tail_cdf_log10(p: &Gx2Params, x: f64, side: Side) -> Result<TailValue> {
    let t = tail_dominant(p, side)?;
    let (k, l, y) = (t.k_star as f64, t.lambda_star, t.y(x));
    let exact = (t.ln_a + ncx2_ln_sf(k, l, y)) / LN_10;
    let (v, asym) = if exact >= LOG10_REALMIN || y <= 0.0 {
        (exact, false)
    } else {
        (tail_cdf_asymptote(&t, y), true)
    };
    Ok(TailValue {
        log10_value: v,
        in_range: in_tail_range(p, x, side),
        odd_kstar: t.odd_kstar(),
        asymptotic: asym,
    })
}

/// log10 of the density at `x`, from whichever infinite tail `x` lies in.
pub fn tail_pdf_log10(p: &Gx2Params, x: f64) -> Result<TailValue> {
    let side = if x >= moments(p).m1 {
        Side::Upper
    } else {
        Side::Lower
    };
    let t = tail_dominant(p, side)?;
    let (k, l, y) = (t.k_star as f64, t.lambda_star, t.y(x));
    let exact = (t.ln_a - t.w_star.abs().ln() + ncx2_ln_pdf(k, l, y)) / LN_10;
    let (v, asym) = if exact >= LOG10_REALMIN || y <= 0.0 {
        (exact, false)
    } else {
        (tail_pdf_asymptote(&t, y), true)
    };
    Ok(TailValue {
        log10_value: v,
        in_range: in_tail_range(p, x, side),
        odd_kstar: t.odd_kstar(),
        asymptotic: asym,
    })
}

fn tail_cdf_asymptote(t: &TailDominant, y: f64) -> f64 {
    let (k, l) = (t.k_star as f64, t.lambda_star);
    let log10_a = t.ln_a / LN_10;
    if l == 0.0 {
        log10_a + 0.5 * (k - 2.0) * (0.5 * y).log10()
            - y / (2.0 * LN_10)
            - ln_gamma(0.5 * k) / LN_10
    } else {
        log10_a + ((1.0 - k) / 4.0) * l.log10() - 0.5 * (2.0 * PI).log10()
            + 0.25 * (k - 3.0) * y.log10()
            - (y.sqrt() - l.sqrt()).powi(2) / (2.0 * LN_10)
    }
}

fn tail_pdf_asymptote(t: &TailDominant, y: f64) -> f64 {
    let (k, l) = (t.k_star as f64, t.lambda_star);
    let pre = (t.ln_a - t.w_star.abs().ln()) / LN_10;
    if l == 0.0 {
        pre - (0.5 * k * LN_2 + ln_gamma(0.5 * k)) / LN_10 + 0.5 * (k - 2.0) * y.log10()
            - y / (2.0 * LN_10)
    } else {
        pre + ((1.0 - k) / 4.0) * l.log10() - (2.0 * (2.0 * PI).sqrt()).log10()
            + 0.25 * (k - 3.0) * y.log10()
            + ((l * y).sqrt() - 0.5 * (y + l)) / LN_10
    }
}

/// Leading `x`-dependent terms of the tail asymptote, shared by cdf and pdf.
pub fn tail_rough_log10(p: &Gx2Params, x: f64, side: Side) -> Result<f64> {
    let t = tail_dominant(p, side)?;
    let (k, l, y) = (t.k_star as f64, t.lambda_star, t.y(x));
    Ok(if l == 0.0 {
        0.5 * (k - 2.0) * y.log10() - y / (2.0 * LN_10)
    } else {
        0.25 * (k - 3.0) * y.log10() + ((l * y).sqrt() - 0.5 * (y + l)) / LN_10
    })
}

/// Geometry of the shrinking ellipsoid at the finite tail end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseGeom {
    pub dim: usize,
    pub center: Vec<f64>,
    pub omega: Vec<f64>,
    pub c_norm_sq: f64,
    pub m: f64,
    /// Weights were negative; the finite tail is the upper one.
    pub flipped: bool,
}

impl EllipseGeom {
    pub fn new(p: &Gx2Params) -> Result<Self> {
        p.validate()?;
        if !p.is_ellipse() {
            return Err(Gx2Error::Inapplicable {
                method: "ellipse",
                reason: "weights must share one sign and s must be 0".into(),
                alternatives: "ray, tail, imhof",
            });
        }
        let (q, flipped) = p.positive_orientation();
        let mut center = Vec::new();
        let mut omega = Vec::new();
        for i in 0..q.w.len() {
            for j in 0..q.k[i] {
                center.push(if j == 0 { q.lambda[i].sqrt() } else { 0.0 });
                omega.push(q.w[i]);
            }
        }
        let c_norm_sq = q.lambda.iter().sum();
        Ok(EllipseGeom {
            dim: center.len(),
            center,
            omega,
            c_norm_sq,
            m: p.m,
            flipped,
        })
    }

    /// `Σ c_j² ω_j`.
    fn c_omega(&self) -> f64 {
        self.center
            .iter()
            .zip(&self.omega)
            .map(|(c, w)| c * c * w)
            .sum()
    }

    fn omega_min(&self) -> f64 {
        self.omega.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn log10_cdf_const(&self) -> f64 {
        let d = self.dim as f64;
        -0.5 * d * 2f64.log10()
            - self.c_norm_sq / (100f64).ln()
            - ln_gamma(0.5 * d + 1.0) / LN_10
            - 0.5 * self.omega.iter().map(|w| w.log10()).sum::<f64>()
    }

    fn log10_rel_err(&self, log10_x: f64) -> f64 {
        if self.c_norm_sq > 0.0 {
            self.c_norm_sq.log10() + 0.5 * (log10_x - self.c_omega().log10())
        } else {
            log10_x - (2.0 * self.omega_min()).log10()
        }
    }

    /// Distance from the tail end for a raw point (0 or negative outside the support).
    pub fn offset(&self, x: f64) -> f64 {
        if self.flipped {
            self.m - x
        } else {
            x - self.m
        }
    }

    /// Side of the finite tail.
    pub fn side(&self) -> Side {
        if self.flipped {
            Side::Upper
        } else {
            Side::Lower
        }
    }
}

/// Log10 estimate plus the log10 of its relative error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseValue {
    pub log10_value: f64,
    pub log10_rel_err: f64,
}

impl EllipseValue {
    pub fn rel_err(&self) -> f64 {
        10f64.powf(self.log10_rel_err)
    }
}

/// Finite-tail probability at offset `10^log10_x` from the tail end.
pub fn ellipse_cdf_log10(p: &Gx2Params, log10_x: f64) -> Result<EllipseValue> {
    let g = EllipseGeom::new(p)?;
    let d = g.dim as f64;
    Ok(EllipseValue {
        log10_value: 0.5 * d * log10_x + g.log10_cdf_const(),
        log10_rel_err: g.log10_rel_err(log10_x),
    })
}

/// Finite-tail density at offset `10^log10_x` from the tail end.
pub fn ellipse_pdf_log10(p: &Gx2Params, log10_x: f64) -> Result<EllipseValue> {
    let g = EllipseGeom::new(p)?;
    let d = g.dim as f64;
    // derivative of the cdf: (d/2) x^{d/2-1} times the same constant
    Ok(EllipseValue {
        log10_value: (0.5 * d).log10() + (0.5 * d - 1.0) * log10_x + g.log10_cdf_const(),
        log10_rel_err: g.log10_rel_err(log10_x),
    })
}

/// log10 of the offset at which the ellipse cdf equals `10^log10_p`.
pub fn ellipse_inv_log10(p: &Gx2Params, log10_p: f64) -> Result<f64> {
    let g = EllipseGeom::new(p)?;
    Ok((log10_p - g.log10_cdf_const()) / (0.5 * g.dim as f64))
}

/// Largest offset at which the relative error bound stays below `delta`.
pub fn ellipse_valid_range(p: &Gx2Params, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Gx2Error::InvalidArgument("delta must lie in (0, 1)".into()));
    }
    let g = EllipseGeom::new(p)?;
    Ok(if g.c_norm_sq > 0.0 {
        delta * delta / (g.c_norm_sq * g.c_norm_sq) * g.c_omega()
    } else {
        2.0 * delta * g.omega_min()
    })
}
