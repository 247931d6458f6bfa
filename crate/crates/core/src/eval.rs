//! One entry point for cdf and pdf values by any method, with automatic routing.

use crate::approx::{
    ellipse_cdf_log10, ellipse_pdf_log10, tail_cdf_log10, tail_pdf_log10, EllipseGeom,
};
use crate::error::{Gx2Error, Result};
use crate::fourier::{auto_grid_with_cap, ifft_eval, FourierGrid, DEFAULT_MAX_HALF};
use crate::inverse::{auto_method, Method, MethodChoice, Region, RoutingConfig};
use crate::params::{moments, Gx2Params, Side, Target};
use crate::ray::{
    ray_cdf_many, ray_pdf_many, LogMode, LogProb, Precision, RayIntegrator, LOG10_REALMIN,
};
use crate::series::{imhof, imhof_pdf, QuadratureSpec, RubenExpansion};
use crate::special::{ln_norm_cdf_sf, LN_10};
use serde::{Deserialize, Serialize};

/// Ray integrator settings; quadrature is used up to `quadrature_max_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RaySettings {
    pub n_rays: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub quadrature_max_dim: usize,
}

impl Default for RaySettings {
    fn default() -> Self {
        RaySettings {
            n_rays: 1_000_000,
            rel_tol: 1e-6,
            seed: 1,
            quadrature_max_dim: 4,
        }
    }
}

impl RaySettings {
    pub fn integrator(&self, dim: usize) -> RayIntegrator {
        if dim <= self.quadrature_max_dim.min(4) {
            RayIntegrator::quadrature(self.rel_tol)
        } else {
            RayIntegrator::monte_carlo(self.n_rays, self.seed)
        }
    }
}

/// Per-method settings shared by every evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub imhof: QuadratureSpec,
    /// Fixed Ruben length; `None` grows the series until the coefficients sum to 1.
    pub ruben_terms: Option<usize>,
    pub ray: RaySettings,
    pub precision: Precision,
    /// Fixed transform grid; `None` picks one from the points.
    #[serde(skip)]
    pub ifft_grid: Option<FourierGrid>,
    pub ifft_max_half: usize,
    /// Relative error level used to flag ellipse values outside their valid range.
    pub ellipse_delta: f64,
    pub routing: RoutingConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            imhof: QuadratureSpec::default(),
            ruben_terms: None,
            ray: RaySettings::default(),
            precision: Precision::Log,
            ifft_grid: None,
            ifft_max_half: DEFAULT_MAX_HALF,
            ellipse_delta: 0.01,
            routing: RoutingConfig::default(),
        }
    }
}

/// One evaluated point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub x: f64,
    /// Linear value; 0 below the double range, where only `log10_value` is meaningful.
    pub value: f64,
    pub log10_value: f64,
    /// Absolute standard error or error bound of `value`, when the method gives one.
    pub uncertainty: Option<f64>,
    /// The same uncertainty on the log10 scale.
    pub uncertainty_log10: Option<f64>,
    pub method: Method,
    pub region: Region,
    pub mode: LogMode,
    pub flags: Vec<String>,
}

impl Evaluation {
    fn new(x: f64, log10_value: f64, unc: Option<f64>, method: Method) -> Self {
        let value = if log10_value < LOG10_REALMIN {
            0.0
        } else {
            10f64.powf(log10_value)
        };
        let unc_log10 = match unc {
            Some(u) if value > 0.0 => Some(u / (value * LN_10)),
            _ => None,
        };
        Evaluation {
            x,
            value,
            log10_value,
            uncertainty: unc,
            uncertainty_log10: unc_log10,
            method,
            region: Region::Body,
            mode: if log10_value < LOG10_REALMIN {
                LogMode::LogFallback
            } else {
                LogMode::Linear
            },
            flags: Vec::new(),
        }
    }

    fn from_logprob(x: f64, lp: &LogProb, method: Method) -> Self {
        let mut e = Evaluation::new(x, lp.log10_value, None, method);
        e.uncertainty_log10 = lp.uncertainty_log10;
        if let Some(u) = lp.uncertainty_log10 {
            if e.value > 0.0 {
                e.uncertainty = Some(e.value * u * LN_10);
            }
        }
        e.mode = lp.mode;
        if lp.flagged {
            e.flags.push("flagged".into());
        }
        e
    }

    fn flag(mut self, cond: bool, name: &str) -> Self {
        if cond {
            self.flags.push(name.into());
        }
        self
    }
}

fn log10_of(v: f64) -> f64 {
    if v > 0.0 {
        v.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Cheap log10 estimate of the tail on `side` of `x`: three-moment Pearson when
/// the skew allows it, else a normal match.
pub fn estimate_log10_tail(p: &Gx2Params, x: f64, side: Side) -> f64 {
    if let Ok(pm) = crate::approx::pearson_match(p) {
        let v = pm.ln_cdf(x, side) / LN_10;
        if v.is_finite() {
            return v;
        }
    }
    let mo = moments(p);
    let z = (x - mo.m1) / mo.m2.sqrt().max(f64::MIN_POSITIVE);
    let (lo, hi) = ln_norm_cdf_sf(z);
    match side {
        Side::Lower => lo / LN_10,
        Side::Upper => hi / LN_10,
    }
}

/// The tail nearer to `x`, used to classify density points.
fn nearer_side(p: &Gx2Params, x: f64) -> Side {
    if x < moments(p).m1 {
        Side::Lower
    } else {
        Side::Upper
    }
}

/// Tail probabilities on `side` of each point.
pub fn gx2cdf(
    p: &Gx2Params,
    xs: &[f64],
    side: Side,
    method: Method,
    st: &EvalSettings,
) -> Result<Vec<Evaluation>> {
    p.validate()?;
    check_points(xs)?;
    match method {
        Method::Auto => xs.iter().map(|&x| auto_one(p, x, Some(side), st)).collect(),
        Method::Ifft => ifft_many(p, xs, Some(side), st),
        Method::Ray => {
            let integ = st.ray.integrator(p.dim());
            let v = ray_cdf_many(p, xs, side, &integ, st.precision)?;
            Ok(xs
                .iter()
                .zip(&v)
                .map(|(&x, lp)| Evaluation::from_logprob(x, lp, Method::Ray))
                .collect())
        }
        m => xs.iter().map(|&x| one(p, x, Some(side), m, st)).collect(),
    }
}

/// Densities at each point.
pub fn gx2pdf(
    p: &Gx2Params,
    xs: &[f64],
    method: Method,
    st: &EvalSettings,
) -> Result<Vec<Evaluation>> {
    p.validate()?;
    check_points(xs)?;
    match method {
        Method::Auto => xs.iter().map(|&x| auto_one(p, x, None, st)).collect(),
        Method::Ifft => ifft_many(p, xs, None, st),
        Method::Ray => {
            let integ = st.ray.integrator(p.dim());
            let v = ray_pdf_many(p, xs, &integ, st.precision)?;
            Ok(xs
                .iter()
                .zip(&v)
                .map(|(&x, lp)| Evaluation::from_logprob(x, lp, Method::Ray))
                .collect())
        }
        m => xs.iter().map(|&x| one(p, x, None, m, st)).collect(),
    }
}

fn check_points(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Gx2Error::InvalidArgument("evaluation point is NaN".into()));
    }
    Ok(())
}

fn ifft_many(
    p: &Gx2Params,
    xs: &[f64],
    side: Option<Side>,
    st: &EvalSettings,
) -> Result<Vec<Evaluation>> {
    let target = if side.is_some() {
        Target::Cdf
    } else {
        Target::Pdf
    };
    let grid = match &st.ifft_grid {
        Some(g) => g.clone(),
        None => auto_grid_with_cap(p, xs, target, st.ifft_max_half)?,
    };
    let out = ifft_eval(p, xs, target, &grid)?;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let v = match side {
                Some(Side::Upper) => 1.0 - out.values[i],
                _ => out.values[i],
            };
            Evaluation::new(x, log10_of(v), Some(out.noise_floor), Method::Ifft)
                .flag(out.low_confidence[i], "low_confidence")
        })
        .collect())
}

/// One point by a concrete method; `side` is `None` for a density.
fn one(
    p: &Gx2Params,
    x: f64,
    side: Option<Side>,
    method: Method,
    st: &EvalSettings,
) -> Result<Evaluation> {
    match method {
        Method::Imhof => {
            let v = match side {
                Some(s) => imhof(p, x, s, &st.imhof)?,
                None => imhof_pdf(p, x, &st.imhof)?,
            };
            Ok(
                Evaluation::new(x, log10_of(v.value), Some(v.error), Method::Imhof)
                    .flag(v.unreliable, "unreliable"),
            )
        }
        Method::Ruben => {
            let r = match st.ruben_terms {
                Some(n) => RubenExpansion::new(p, n, None)?,
                None => RubenExpansion::auto(p)?,
            };
            let v = match side {
                Some(s) => r.cdf(x, s),
                None => r.pdf(x),
            };
            Ok(Evaluation::new(
                x,
                v.ln_value / LN_10,
                Some(v.truncation),
                Method::Ruben,
            ))
        }
        Method::Pearson => {
            let pm = crate::approx::pearson_match(p)?;
            let ln = match side {
                Some(s) => pm.ln_cdf(x, s),
                None => pm.ln_pdf(x),
            };
            Ok(Evaluation::new(x, ln / LN_10, None, Method::Pearson))
        }
        Method::Tail => {
            let t = match side {
                Some(s) => tail_cdf_log10(p, x, s)?,
                None => tail_pdf_log10(p, x)?,
            };
            Ok(Evaluation::new(x, t.log10_value, None, Method::Tail)
                .flag(!t.in_range, "outside_tail_range")
                .flag(t.odd_kstar, "odd_kstar"))
        }
        Method::Ellipse => ellipse_one(p, x, side, st),
        Method::Ifft => Ok(ifft_many(p, &[x], side, st)?.remove(0)),
        Method::Ray => {
            let integ = st.ray.integrator(p.dim());
            let lp = match side {
                Some(s) => ray_cdf_many(p, &[x], s, &integ, st.precision)?,
                None => ray_pdf_many(p, &[x], &integ, st.precision)?,
            };
            Ok(Evaluation::from_logprob(x, &lp[0], Method::Ray))
        }
        Method::Auto => auto_one(p, x, side, st),
    }
}

fn ellipse_one(p: &Gx2Params, x: f64, side: Option<Side>, st: &EvalSettings) -> Result<Evaluation> {
    let g = EllipseGeom::new(p)?;
    if let Some(s) = side {
        if s != g.side() {
            return Err(Gx2Error::Inapplicable {
                method: "ellipse",
                reason: format!("it covers only the finite {:?} tail", g.side()).to_lowercase(),
                alternatives: "ruben, ray, tail",
            });
        }
    }
    let off = g.offset(x);
    if off <= 0.0 {
        return Ok(Evaluation::new(
            x,
            f64::NEG_INFINITY,
            Some(0.0),
            Method::Ellipse,
        ));
    }
    let e = match side {
        Some(_) => ellipse_cdf_log10(p, off.log10())?,
        None => ellipse_pdf_log10(p, off.log10())?,
    };
    let mut ev = Evaluation::new(x, e.log10_value, None, Method::Ellipse);
    let rel = e.rel_err();
    ev.uncertainty_log10 = Some((1.0 + rel).log10());
    if ev.value > 0.0 {
        ev.uncertainty = Some(ev.value * rel);
    }
    Ok(ev.flag(rel > st.ellipse_delta, "outside_valid_range"))
}

fn auto_one(p: &Gx2Params, x: f64, side: Option<Side>, st: &EvalSettings) -> Result<Evaluation> {
    let tail_side = side.unwrap_or_else(|| nearer_side(p, x));
    let est = estimate_log10_tail(p, x, tail_side);
    let choice = auto_method(p, Some(est), tail_side, &st.routing);
    let mut ev = resolve(p, x, side, &choice, st)?;
    ev.region = choice.region;
    Ok(ev)
}

fn resolve(
    p: &Gx2Params,
    x: f64,
    side: Option<Side>,
    choice: &MethodChoice,
    st: &EvalSettings,
) -> Result<Evaluation> {
    let cfg = &st.routing;
    let finite = p.finite_tail_side();
    let tail_side = side.unwrap_or_else(|| nearer_side(p, x));
    match choice.method {
        Method::Ruben => {
            let ev = one(p, x, side, Method::Ruben, st)?;
            if ev.log10_value >= cfg.handoff_log10 {
                return Ok(ev);
            }
            // below the handoff the asymptotic forms take over
            let next = if finite == Some(tail_side) {
                Method::Ellipse
            } else {
                Method::Tail
            };
            match one(p, x, side, next, st) {
                Ok(e) => Ok(e),
                Err(_) => Ok(ev),
            }
        }
        Method::Imhof => {
            let ev = one(p, x, side, Method::Imhof, st)?;
            if ev.flags.is_empty() && ev.log10_value >= cfg.imhof_floor_log10 {
                return Ok(ev);
            }
            ray_with_cross_check(p, x, side, st)
        }
        Method::Ray => ray_with_cross_check(p, x, side, st),
        m => one(p, x, side, m, st),
    }
}

fn ray_with_cross_check(
    p: &Gx2Params,
    x: f64,
    side: Option<Side>,
    st: &EvalSettings,
) -> Result<Evaluation> {
    let mut settings = st.clone();
    settings.precision = Precision::Log;
    let ev = one(p, x, side, Method::Ray, &settings)?;
    let tail = one(p, x, side, Method::Tail, st);
    if let Ok(t) = tail {
        let tol = (0.01 * t.log10_value.abs()).max(1.0);
        if !t.flags.iter().any(|f| f == "outside_tail_range")
            && (ev.log10_value - t.log10_value).abs() > tol
        {
            return Ok(ev.flag(true, "tail_disagrees"));
        }
    }
    Ok(ev)
}
