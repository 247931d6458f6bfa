//! Special functions in the log domain: incomplete gamma, chi and
//! chi-square laws (central and noncentral), and the normal tail.

use statrs::function::erf::erfc_inv;
pub use statrs::function::gamma::ln_gamma;
use std::f64::consts::{LN_2, PI, SQRT_2};

pub const LN_10: f64 = std::f64::consts::LN_10;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(e^a + e^b)` without overflow.
pub fn ln_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(1 - e^l)` for `l <= 0`.
pub fn ln_one_minus_exp(l: f64) -> f64 {
    if l > -LN_2 {
        (-l.exp_m1()).ln()
    } else {
        (-l.exp()).ln_1p()
    }
}

// Stirling correction ln Γ*(a), accurate for a >= 10.
fn ln_gamma_star(a: f64) -> f64 {
    let r = 1.0 / a;
    let r2 = r * r;
    r * (1.0 / 12.0
        - r2 * (1.0 / 360.0
            - r2 * (1.0 / 1260.0
                - r2 * (1.0 / 1680.0 - r2 * (1.0 / 1188.0 - r2 * 691.0 / 360_360.0)))))
}

/// `ln(x^a e^{-x} / Γ(a))`, arranged to keep precision when a is large and x ≈ a.
pub fn ln_gamma_prefactor(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if a < 10.0 {
        return a * x.ln() - x - ln_gamma(a);
    }
    let d = x / a - 1.0;
    let phi = if d.abs() < 0.5 {
        d - d.ln_1p()
    } else {
        d - (x / a).ln()
    };
    -a * phi + 0.5 * (a.ln() - LN_2PI) - ln_gamma_star(a)
}

/// Natural logs of the regularized incomplete gamma functions `(ln P(a,x), ln Q(a,x))`.
pub fn ln_gamma_pq(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if x.is_infinite() {
        return (0.0, f64::NEG_INFINITY);
    }
    let lp = ln_gamma_prefactor(a, x);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0;
        let mut sum = 1.0;
        for _ in 0..1_000_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        let lnp = lp - a.ln() + sum.ln();
        let lnp = lnp.min(0.0);
        (lnp, ln_one_minus_exp(lnp))
    } else {
        // modified Lentz on the Legendre continued fraction
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1_000_000 {
            let fi = i as f64;
            let an = -fi * (fi - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let lnq = (lp + h.ln()).min(0.0);
        (ln_one_minus_exp(lnq), lnq)
    }
}

pub fn gamma_p(a: f64, x: f64) -> f64 {
    ln_gamma_pq(a, x).0.exp()
}

pub fn gamma_q(a: f64, x: f64) -> f64 {
    ln_gamma_pq(a, x).1.exp()
}

/// `(ln F, ln F̄)` of the central chi-square with `k` degrees of freedom at `y`.
pub fn chi2_ln_cdf_sf(k: f64, y: f64) -> (f64, f64) {
    ln_gamma_pq(0.5 * k, 0.5 * y)
}

pub fn chi2_cdf(k: f64, y: f64) -> f64 {
    chi2_ln_cdf_sf(k, y).0.exp()
}

pub fn chi2_sf(k: f64, y: f64) -> f64 {
    chi2_ln_cdf_sf(k, y).1.exp()
}

pub fn chi2_ln_pdf(k: f64, y: f64) -> f64 {
    if y < 0.0 {
        return f64::NEG_INFINITY;
    }
    if y == 0.0 {
        return match k.partial_cmp(&2.0) {
            Some(std::cmp::Ordering::Less) => f64::INFINITY,
            Some(std::cmp::Ordering::Equal) => -LN_2,
            _ => f64::NEG_INFINITY,
        };
    }
    ln_gamma_prefactor(0.5 * k, 0.5 * y) - y.ln()
}

pub fn chi2_pdf(k: f64, y: f64) -> f64 {
    chi2_ln_pdf(k, y).exp()
}

/// `(ln F, ln F̄)` of the chi distribution with `d` degrees of freedom at radius `r`.
pub fn chi_ln_cdf_sf(d: f64, r: f64) -> (f64, f64) {
    ln_gamma_pq(0.5 * d, 0.5 * r * r)
}

/// Log density of the chi distribution.
pub fn chi_ln_pdf(d: f64, r: f64) -> f64 {
    if r < 0.0 {
        return f64::NEG_INFINITY;
    }
    if r == 0.0 {
        return if d == 1.0 {
            0.5 * (2.0 / PI).ln()
        } else if d < 1.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
    }
    ln_gamma_prefactor(0.5 * d, 0.5 * r * r) - r.ln() + LN_2
}

/// Poisson(μ) mixture in the log domain: `ln Σ_j Pois(j; μ) e^{comp(j)}`.
fn ln_poisson_mixture(mu: f64, comp: impl Fn(f64) -> f64) -> f64 {
    let ln_mu = mu.ln();
    let ln_w = |j: f64| j * ln_mu - mu - ln_gamma(j + 1.0);
    let j0 = mu.floor();
    let mut best = f64::NEG_INFINITY;
    let mut acc = f64::NEG_INFINITY;
    let mut prev = f64::NEG_INFINITY;
    let mut j = j0;
    for _ in 0..2_000_000 {
        let t = ln_w(j) + comp(j);
        acc = ln_add(acc, t);
        best = best.max(t);
        if t < best - 40.0 && t <= prev {
            break;
        }
        prev = t;
        j += 1.0;
    }
    let mut j = j0 - 1.0;
    while j >= 0.0 {
        let t = ln_w(j) + comp(j);
        acc = ln_add(acc, t);
        best = best.max(t);
        if t < best - 40.0 {
            break;
        }
        j -= 1.0;
    }
    acc
}

/// Log survival of the noncentral chi-square χ'²(k, λ) at `y`.
pub fn ncx2_ln_sf(k: f64, lambda: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if lambda == 0.0 {
        return chi2_ln_cdf_sf(k, y).1;
    }
    ln_poisson_mixture(0.5 * lambda, |j| chi2_ln_cdf_sf(k + 2.0 * j, y).1).min(0.0)
}

/// Log cdf of the noncentral chi-square.
pub fn ncx2_ln_cdf(k: f64, lambda: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if lambda == 0.0 {
        return chi2_ln_cdf_sf(k, y).0;
    }
    ln_poisson_mixture(0.5 * lambda, |j| chi2_ln_cdf_sf(k + 2.0 * j, y).0).min(0.0)
}

/// Log density of the noncentral chi-square.
pub fn ncx2_ln_pdf(k: f64, lambda: f64, y: f64) -> f64 {
    if y < 0.0 {
        return f64::NEG_INFINITY;
    }
    if lambda == 0.0 {
        return chi2_ln_pdf(k, y);
    }
    ln_poisson_mixture(0.5 * lambda, |j| chi2_ln_pdf(k + 2.0 * j, y))
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `(ln Φ(z), ln Φ̄(z))` through the incomplete gamma of order 1/2.
pub fn ln_norm_cdf_sf(z: f64) -> (f64, f64) {
    let (lp, lq) = ln_gamma_pq(0.5, 0.5 * z * z);
    let tail = lq - LN_2;
    let body = ln_add(-LN_2, lp - LN_2);
    if z >= 0.0 {
        (body, tail)
    } else {
        (tail, body)
    }
}

pub fn norm_sf(z: f64) -> f64 {
    ln_norm_cdf_sf(z).1.exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    ln_norm_cdf_sf(z).0.exp()
}

/// `ln Φ̄(z)`, valid far below the double range.
pub fn ln_norm_sf(z: f64) -> f64 {
    if z < 8.0 {
        return ln_norm_cdf_sf(z).1;
    }
    // Laplace continued fraction, evaluated bottom-up
    let mut t = z;
    for n in (1..=60).rev() {
        t = z + n as f64 / t;
    }
    -0.5 * z * z - 0.5 * LN_2PI - t.ln()
}

/// Standard normal quantile Φ⁻¹(p).
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -norm_quantile(1.0 - p);
    }
    let z = -SQRT_2 * erfc_inv(2.0 * p);
    polish_lower_quantile(z, p.ln())
}

/// Φ⁻¹ of `e^{ln_p}` for `ln_p <= ln 0.5`, including arguments below the double range.
pub fn norm_quantile_ln(ln_p: f64) -> f64 {
    if ln_p > -700.0 {
        return norm_quantile(ln_p.exp());
    }
    let w = -2.0 * ln_p - LN_2PI;
    let z0 = -(w - w.ln()).sqrt();
    polish_lower_quantile(z0, ln_p)
}

// Newton steps on ln Φ(z) = ln p for z <= 0.
fn polish_lower_quantile(mut z: f64, ln_p: f64) -> f64 {
    for _ in 0..4 {
        let ln_f = ln_norm_sf(-z);
        let ln_dens = -0.5 * z * z - 0.5 * LN_2PI;
        let step = (ln_f - ln_p) * (ln_f - ln_dens).exp();
        z -= step;
        if step.abs() <= 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    z
}
