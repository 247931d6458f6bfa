//! Method routing by distribution type and region, and quantiles by root finding
//! on the routed cdf.

use crate::approx::{ellipse_inv_log10, EllipseGeom};
use crate::error::{Gx2Error, Result};
use crate::eval::{gx2cdf, EvalSettings};
use crate::params::{moments, Gx2Params, Side};
use crate::special::{norm_quantile, norm_quantile_ln, LN_10};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Imhof,
    Ruben,
    Ifft,
    Ray,
    Pearson,
    Tail,
    Ellipse,
    Auto,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Imhof,
        Method::Ruben,
        Method::Ifft,
        Method::Ray,
        Method::Pearson,
        Method::Tail,
        Method::Ellipse,
        Method::Auto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Imhof => "imhof",
            Method::Ruben => "ruben",
            Method::Ifft => "ifft",
            Method::Ray => "ray",
            Method::Pearson => "pearson",
            Method::Tail => "tail",
            Method::Ellipse => "ellipse",
            Method::Auto => "auto",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Gx2Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Gx2Error::InvalidArgument(format!(
                    "unknown method '{s}' (valid: {})",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Body,
    FiniteTail,
    InfiniteTail,
}

/// A concrete method for one region, with the reason it was picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodChoice {
    pub method: Method,
    pub region: Region,
    pub rationale: String,
}

/// Thresholds (log10 tail probability) at which routing changes method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingConfig {
    /// Tail probabilities at or above this count as the body.
    pub body_log10: f64,
    /// Below this the series hands over to the ellipse or tail asymptote.
    pub handoff_log10: f64,
    /// Imhof values below this are recomputed by ray.
    pub imhof_floor_log10: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            body_log10: -3.0,
            handoff_log10: -300.0,
            imhof_floor_log10: -8.0,
        }
    }
}

/// Best method for the region a tail probability of `10^p_estimate` on `side` falls in.
/// Without an estimate the point is taken to be in the body.
pub fn auto_method(
    p: &Gx2Params,
    p_estimate: Option<f64>,
    side: Side,
    cfg: &RoutingConfig,
) -> MethodChoice {
    let est = p_estimate.unwrap_or(0.0);
    let body = est >= cfg.body_log10;
    let choice = |method, region, why: &str| MethodChoice {
        method,
        region,
        rationale: why.to_string(),
    };
    if p.is_ellipse() {
        let finite = p.finite_tail_side() == Some(side);
        let region = if body {
            Region::Body
        } else if finite {
            Region::FiniteTail
        } else {
            Region::InfiniteTail
        };
        if est >= cfg.handoff_log10 {
            return choice(
                Method::Ruben,
                region,
                "elliptical: the series is exact and fast",
            );
        }
        if finite {
            return choice(
                Method::Ellipse,
                region,
                "finite tail below the double range",
            );
        }
        return choice(Method::Tail, region, "infinite tail below the double range");
    }
    if body {
        choice(Method::Imhof, Region::Body, "non-elliptical body")
    } else {
        choice(
            Method::Ray,
            Region::InfiniteTail,
            "non-elliptical tail: log-mode ray with tail cross-check",
        )
    }
}

/// Target tail probability for [`gx2inv`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prob {
    Linear(f64),
    Log10(f64),
}

impl Prob {
    fn log10(self) -> Result<f64> {
        match self {
            Prob::Linear(p) if p > 0.0 && p < 1.0 => Ok(p.log10()),
            Prob::Log10(l) if l < 0.0 && l.is_finite() => Ok(l),
            _ => Err(Gx2Error::InvalidArgument(format!(
                "probability {self:?} is outside (0, 1)"
            ))),
        }
    }
}

/// Relative x tolerance of the root finder.
const X_TOL: f64 = 1e-10;
/// Accepted cdf mismatch, relative to |log10 p|, when the x tolerance is not met.
const CDF_TOL: f64 = 1e-3;
const MAX_ITER: usize = 400;

/// The `x` with tail probability `prob` on `side`.
pub fn gx2inv(
    p: &Gx2Params,
    prob: Prob,
    side: Side,
    method: Method,
    st: &EvalSettings,
) -> Result<f64> {
    p.validate()?;
    let lp = prob.log10()?;
    let method = match method {
        Method::Auto => auto_method(p, Some(lp), side, &st.routing).method,
        m => m,
    };
    let finite = p.finite_tail_side();
    if method == Method::Ellipse {
        let g = EllipseGeom::new(p)?;
        if Some(side) != finite {
            return Err(Gx2Error::Inapplicable {
                method: "ellipse",
                reason: "quantiles on the infinite side need another method".into(),
                alternatives: "ruben, tail, ray",
            });
        }
        let off = 10f64.powf(ellipse_inv_log10(p, lp)?);
        return Ok(if g.flipped { g.m - off } else { g.m + off });
    }

    let dir = match side {
        Side::Lower => 1.0,
        Side::Upper => -1.0,
    };
    // increasing in x, zero at the quantile
    let h = |x: f64| -> Result<f64> {
        let v = gx2cdf(p, &[x], side, method, st)?.remove(0).log10_value;
        Ok(dir * (v - lp))
    };
    let end = finite.map(|_| p.m);
    let below_end = finite == Some(Side::Upper);
    let inside = |x: f64| match end {
        Some(e) if below_end => x < e,
        Some(e) => x > e,
        None => true,
    };

    let mo = moments(p);
    let sd = mo.m2.sqrt();
    let z = match prob {
        Prob::Linear(q) => norm_quantile(q),
        Prob::Log10(l) => norm_quantile_ln(l * LN_10),
    };
    let mut x0 = match side {
        Side::Lower => mo.m1 + z * sd,
        Side::Upper => mo.m1 - z * sd,
    };
    if let Some(e) = end {
        if !inside(x0) {
            x0 = if below_end {
                e - 0.5 * sd
            } else {
                e + 0.5 * sd
            };
        }
    }

    let h0 = h(x0)?;
    if h0 == 0.0 {
        return Ok(x0);
    }
    let mut step = sd.max(1e-3 * x0.abs()).max(f64::MIN_POSITIVE);
    let up = h0 < 0.0;
    let (mut x, mut fx) = (x0, h0);
    for _ in 0..MAX_ITER {
        let mut nx = if up { x + step } else { x - step };
        if let Some(e) = end {
            if !inside(nx) {
                // approach the support end geometrically
                nx = e + 0.25 * (x - e);
            }
        }
        let fnx = h(nx)?;
        if (fnx >= 0.0) == up {
            return if up {
                refine(&h, x, fx, nx, fnx, lp, end, sd)
            } else {
                refine(&h, nx, fnx, x, fx, lp, end, sd)
            };
        }
        if nx == x {
            break;
        }
        x = nx;
        fx = fnx;
        step *= 2.0;
    }
    Err(Gx2Error::RootNotFound(format!(
        "no bracket for log10 p = {lp} on the {side:?} side"
    )))
}

#[allow(clippy::too_many_arguments)]
fn refine<H: Fn(f64) -> Result<f64>>(
    h: &H,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
    lp: f64,
    end: Option<f64>,
    sd: f64,
) -> Result<f64> {
    // Illinois false position; bisection whenever a value is infinite or progress stalls
    let mut side_kept = 0i32;
    let mut best = if fa.abs() < fb.abs() {
        (a, fa)
    } else {
        (b, fb)
    };
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (a + b);
        let scale = match end {
            Some(e) => (mid - e).abs().min(mid.abs().max((mid - e).abs())),
            None => mid.abs().max(1e-5 * sd),
        };
        if (b - a) <= X_TOL * scale || mid <= a || mid >= b {
            return Ok(if fb.abs() < fa.abs() { b } else { a });
        }
        let mut x = if fa.is_finite() && fb.is_finite() && fb != fa {
            b - fb * (b - a) / (fb - fa)
        } else {
            mid
        };
        if !(x > a && x < b) || side_kept.abs() > 3 {
            x = mid;
            side_kept = 0;
        }
        let fx = h(x)?;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
            fa = fx;
            if side_kept < 0 {
                fb *= 0.5;
            }
            side_kept = side_kept.min(0) - 1;
        } else {
            b = x;
            fb = fx;
            if side_kept > 0 {
                fa *= 0.5;
            }
            side_kept = side_kept.max(0) + 1;
        }
    }
    if best.1.abs() <= CDF_TOL * lp.abs() {
        Ok(best.0)
    } else {
        Err(Gx2Error::RootNotFound(format!(
            "stalled at x = {} (log10 mismatch {})",
            best.0, best.1
        )))
    }
}
