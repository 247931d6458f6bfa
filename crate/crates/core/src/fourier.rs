//! Discrete inverse Fourier transform of the characteristic function on a
//! uniform grid, interpolated to the requested points.

use crate::error::{Gx2Error, Result};
use crate::params::{ln_charfun, moments, Gx2Params, Target};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest half-size N accepted by the automatic grid rule.
pub const SPEC_MAX_HALF: usize = 50_000_000;
/// Half-size cap used by default when actually transforming (about 270 MB of buffers).
pub const DEFAULT_MAX_HALF: usize = 1 << 22;

/// Uniform grid `x_j = x_mid + j·dx`, `j = −N..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierGrid {
    pub x_mid: f64,
    pub dx: f64,
    pub n_half: usize,
    pub dt: f64,
    pub span: f64,
}

impl FourierGrid {
    /// Grid of `2N+1` points covering `span`, N rounded up to a transform-friendly size.
    pub fn new(x_mid: f64, span: f64, n_half: usize) -> Result<Self> {
        if !(span > 0.0) || !span.is_finite() || !x_mid.is_finite() {
            return Err(Gx2Error::InvalidArgument(
                "grid span must be positive and finite".into(),
            ));
        }
        let m = smooth_odd_at_least(2 * n_half.max(1) + 1);
        let n_half = (m - 1) / 2;
        let dx = span / m as f64;
        Ok(FourierGrid {
            x_mid,
            dx,
            n_half,
            dt: 2.0 * PI / span,
            span,
        })
    }

    /// Grid with spacing exactly `dx` and at least `2N+1` points.
    pub fn from_spacing(x_mid: f64, dx: f64, n_half: usize) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() || !x_mid.is_finite() {
            return Err(Gx2Error::InvalidArgument(
                "grid spacing must be positive and finite".into(),
            ));
        }
        let m = smooth_odd_at_least(2 * n_half.max(1) + 1);
        let span = dx * m as f64;
        Ok(FourierGrid {
            x_mid,
            dx,
            n_half: (m - 1) / 2,
            dt: 2.0 * PI / span,
            span,
        })
    }

    /// Grid of spacing `span/(2N+1)`; when `n_half` exceeds `max_half` the spacing is
    /// kept and the span shrunk instead.
    pub fn with_limit(x_mid: f64, span: f64, n_half: usize, max_half: usize) -> Result<Self> {
        let dx = span / (2 * n_half.max(1) + 1) as f64;
        Self::from_spacing(x_mid, dx, n_half.min(max_half))
    }

    pub fn len(&self) -> usize {
        2 * self.n_half + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, j: isize) -> f64 {
        self.x_mid + j as f64 * self.dx
    }

    /// Whether `x` lies in the central 80% of the span.
    pub fn covers(&self, x: f64) -> bool {
        (x - self.x_mid).abs() <= 0.4 * self.span
    }
}

fn is_smooth(mut n: usize) -> bool {
    for f in [3, 5, 7] {
        while n % f == 0 {
            n /= f;
        }
    }
    n == 1
}

/// Smallest odd `3^a 5^b 7^c` not below `n`.
fn smooth_odd_at_least(n: usize) -> usize {
    let mut m = n | 1;
    while !is_smooth(m) {
        m += 2;
    }
    m
}

/// Grid for `points` by the default span rule, with the default transform cap.
pub fn auto_grid(p: &Gx2Params, points: &[f64], target: Target) -> Result<FourierGrid> {
    auto_grid_with_cap(p, points, target, DEFAULT_MAX_HALF)
}

/// Span `max(f·range, 10³·√m2)` with `f = 10⁵` (cdf) or `4·10⁵` (pdf), centred on the
/// points, and `dx ≤ range/10³` (or `√m2/10³` for a single point).
///
/// When the required N exceeds `max_half` the spacing is kept and the span reduced,
/// but never below `max(10³·√m2, 20·range)`; past that floor the spacing gives way.
pub fn auto_grid_with_cap(
    p: &Gx2Params,
    points: &[f64],
    target: Target,
    max_half: usize,
) -> Result<FourierGrid> {
    if points.is_empty() {
        return Err(Gx2Error::InvalidArgument("no evaluation points".into()));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Gx2Error::InvalidArgument(
            "evaluation points must be finite".into(),
        ));
    }
    let lo = points.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let sd = moments(p).m2.sqrt();
    let factor = match target {
        Target::Cdf => 1e5,
        Target::Pdf => 4e5,
    };
    let floor = 1e3 * sd;
    let span = (factor * range).max(floor);
    let dx_target = if range > 0.0 { range / 1e3 } else { sd / 1e3 };
    let x_mid = 0.5 * (lo + hi);
    let need = ((span / dx_target - 1.0) / 2.0).ceil() as usize;
    if need <= max_half {
        return FourierGrid::new(x_mid, span, need);
    }
    let m = (2 * max_half + 1) as f64;
    let reduced = (dx_target * m).max(floor.max(20.0 * range));
    FourierGrid::new(x_mid, reduced, max_half)
}

/// Grid values plus interpolated results.
#[derive(Debug, Clone, PartialEq)]
pub struct IfftOutput {
    pub values: Vec<f64>,
    /// Set where the value is within ten times the grid noise floor of 0 (or of 1 for a cdf).
    pub low_confidence: Vec<bool>,
    pub noise_floor: f64,
}

/// Full-grid transform: returns the `2N+1` values at `x_{−N}..x_N` (unclamped).
pub fn ifft_grid(p: &Gx2Params, target: Target, grid: &FourierGrid) -> Result<Vec<f64>> {
    p.validate()?;
    let n = grid.n_half;
    let len = grid.len();
    let mut shifted = p.clone();
    shifted.m = p.m - grid.x_mid;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    // φ̃_n = φ_shifted(−t_n) [/(i t_n)]; the input is Hermitian so only n ≥ 0 is evaluated
    for i in 0..=n {
        let t = i as f64 * grid.dt;
        let c = ln_charfun(&shifted, t).conj().exp();
        let v = match target {
            Target::Pdf => c,
            Target::Cdf if i == 0 => Complex64::new(0.0, 0.0),
            Target::Cdf => c / Complex64::new(0.0, t),
        };
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Gx2Error::NonFinite(format!(
                "characteristic function at t = {t}"
            )));
        }
        buf[i] = v;
        if i > 0 {
            buf[len - i] = v.conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / (len as f64 * grid.dx);
    let m1 = moments(p).m1;
    let mut out = vec![0.0; len];
    for (j, o) in out.iter_mut().enumerate() {
        let jj = j as isize - n as isize;
        let idx = if jj < 0 {
            (jj + len as isize) as usize
        } else {
            jj as usize
        };
        let re = buf[idx].re * scale;
        *o = match target {
            Target::Pdf => re,
            // the omitted t = 0 sample of the smooth part (x − m1) of the integrand
            Target::Cdf => 0.5 + re + (grid.x(jj) - m1) / grid.span,
        };
    }
    Ok(out)
}

/// Evaluate the cdf or pdf at `points` by one transform on `grid`.
pub fn ifft_eval(
    p: &Gx2Params,
    points: &[f64],
    target: Target,
    grid: &FourierGrid,
) -> Result<IfftOutput> {
    if let Some(&bad) = points.iter().find(|&&x| !grid.covers(x)) {
        return Err(Gx2Error::OutsideGrid { point: bad });
    }
    let vals = ifft_grid(p, target, grid)?;
    let floor = noise_floor(&vals, target);
    let n = grid.n_half as f64;
    let mut values = Vec::with_capacity(points.len());
    let mut low = Vec::with_capacity(points.len());
    for &x in points {
        let u = (x - grid.x_mid) / grid.dx + n;
        let j = (u.floor() as usize).min(vals.len() - 2);
        let f = u - j as f64;
        let v = vals[j] * (1.0 - f) + vals[j + 1] * f;
        let (v, tail) = match target {
            Target::Cdf => {
                let v = v.clamp(0.0, 1.0);
                (v, v.min(1.0 - v))
            }
            Target::Pdf => {
                let v = v.max(0.0);
                (v, v)
            }
        };
        values.push(v);
        low.push(tail < 10.0 * floor);
    }
    Ok(IfftOutput {
        values,
        low_confidence: low,
        noise_floor: floor,
    })
}

/// Largest deviation from the exact wing value (0, or 1 on the right for a cdf)
/// over the outer 5–10% of the grid on each side.
fn noise_floor(vals: &[f64], target: Target) -> f64 {
    let len = vals.len();
    let a = len / 20;
    let b = (len / 10).max(a + 1).min(len);
    let left = vals[a..b].iter().map(|v| v.abs());
    let right = vals[len - b..len - a].iter().map(|v| match target {
        Target::Cdf => (1.0 - v).abs(),
        Target::Pdf => v.abs(),
    });
    left.chain(right).fold(f64::MIN_POSITIVE, f64::max)
}
