//! Discriminability between two equal-covariance normals: the exact Mahalanobis
//! index against the one recovered from the ray-traced error rate.

use crate::error::{Gx2Error, Result};
use crate::params::{NormalSpec, QuadForm, Side};
use crate::ray::{
    log_sum_exp10, norm_fun_pdf, quad_ray_cdf, LogProb, Precision, RayIntegrator, RootConfig,
    LOG10_REALMIN,
};
use crate::special::{ln_norm_sf, norm_quantile, LN_10};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

/// `√((μa − μb)' Σ⁻¹ (μa − μb))` by a Cholesky solve.
pub fn mahalanobis_dprime(
    mu_a: &DVector<f64>,
    mu_b: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<f64> {
    if mu_a.len() != mu_b.len() || sigma.nrows() != mu_a.len() || !sigma.is_square() {
        return Err(Gx2Error::InvalidArgument(
            "mean and covariance dimensions disagree".into(),
        ));
    }
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Gx2Error::InvalidArgument("covariance is not positive definite".into()))?;
    let d = mu_a - mu_b;
    let v = chol.solve(&d);
    Ok(d.dot(&v).max(0.0).sqrt())
}

/// `2√(w − ln w)` with `w = −2 ln p − ln 2π`.
fn second_order(log10_pe: f64) -> f64 {
    let w = -2.0 * LN_10 * log10_pe - (2.0 * PI).ln();
    2.0 * (w - w.ln()).sqrt()
}

/// Asymptotic index for error rates below the double range: the second-order
/// closed form, refined by Newton steps on `ln Φ̄(z) = ln p` in log space.
fn asymptotic_dprime(log10_pe: f64) -> f64 {
    let ln_p = log10_pe * LN_10;
    let mut z = 0.5 * second_order(log10_pe);
    for _ in 0..6 {
        let ln_sf = ln_norm_sf(z);
        let ln_dens = -0.5 * z * z - 0.5 * (2.0 * PI).ln();
        let step = (ln_sf - ln_p) * (ln_sf - ln_dens).exp();
        if !step.is_finite() {
            break;
        }
        z += step;
        if step.abs() <= 1e-15 * z {
            break;
        }
    }
    2.0 * z
}

/// Index `−2 Φ⁻¹(p_e)` implied by a classification error rate given as log10.
pub fn bayes_dprime(log10_pe: f64) -> Result<f64> {
    if log10_pe.is_nan() || log10_pe > 0.5f64.log10() {
        return Err(Gx2Error::InvalidArgument(format!(
            "error rate 10^{log10_pe} is not below 0.5"
        )));
    }
    if log10_pe == 0.5f64.log10() {
        return Ok(0.0);
    }
    if log10_pe >= LOG10_REALMIN {
        Ok(-2.0 * norm_quantile(10f64.powf(log10_pe)))
    } else {
        Ok(asymptotic_dprime(log10_pe))
    }
}

/// Two normals with covariance `sigma`, one at the origin and one along `direction`
/// at Mahalanobis distance `d_true`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrimCase {
    pub sigma: DMatrix<f64>,
    pub direction: DVector<f64>,
    pub d_true: f64,
    /// True error rate `Φ̄(d′/2)`.
    pub p_e: LogProb,
}

impl DiscrimCase {
    pub fn new(sigma: DMatrix<f64>, direction: DVector<f64>, d_true: f64) -> Result<Self> {
        if !(d_true >= 0.0) || !d_true.is_finite() {
            return Err(Gx2Error::InvalidArgument(
                "d′ must be finite and non-negative".into(),
            ));
        }
        let norm = direction.norm();
        if !(norm > 0.0) {
            return Err(Gx2Error::InvalidArgument(
                "direction must be non-zero".into(),
            ));
        }
        let direction = direction / norm;
        let p_e = LogProb::from_ln(ln_norm_sf(0.5 * d_true), None);
        Ok(DiscrimCase {
            sigma,
            direction,
            d_true,
            p_e,
        })
    }

    /// The three-dimensional covariance used in the published experiment.
    pub fn reference_sigma() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.7, 0.5, 2.0, 1.0, 0.7, 1.0, 3.0])
    }

    pub fn mu_b(&self) -> Result<DVector<f64>> {
        let zero = DVector::zeros(self.direction.len());
        let unit = mahalanobis_dprime(&zero, &self.direction, &self.sigma)?;
        Ok(&self.direction * (self.d_true / unit))
    }

    /// Error rate of the optimal linear classifier, averaged over both classes.
    pub fn ray_error_rate(&self, integ: &RayIntegrator, precision: Precision) -> Result<LogProb> {
        let dim = self.direction.len();
        let mu_a = DVector::zeros(dim);
        let mu_b = self.mu_b()?;
        let chol = self.sigma.clone().cholesky().ok_or_else(|| {
            Gx2Error::InvalidArgument("covariance is not positive definite".into())
        })?;
        let delta = &mu_b - &mu_a;
        let a = chol.solve(&delta);
        // boundary a'x = a'(μa + μb)/2; positive means "b"
        let boundary = QuadForm::new(
            DMatrix::zeros(dim, dim),
            a.clone(),
            -0.5 * a.dot(&(&mu_a + &mu_b)),
        )?;
        let na = NormalSpec::new(mu_a, self.sigma.clone())?;
        let nb = NormalSpec::new(mu_b, self.sigma.clone())?;
        let pa = quad_ray_cdf(
            &boundary.standardized(&na)?,
            &[0.0],
            Side::Upper,
            integ,
            precision,
        )?[0];
        let pb = quad_ray_cdf(
            &boundary.standardized(&nb)?,
            &[0.0],
            Side::Lower,
            integ,
            precision,
        )?[0];
        let l = log_sum_exp10(&[pa.log10_value, pb.log10_value]) - LN_2 / LN_10;
        let unc = match (pa.uncertainty_log10, pb.uncertainty_log10) {
            (Some(ua), Some(ub)) => {
                // weights of each class in the average
                let wa = 10f64.powf(pa.log10_value - l) / 2.0;
                let wb = 10f64.powf(pb.log10_value - l) / 2.0;
                Some(((wa * ua).powi(2) + (wb * ub).powi(2)).sqrt())
            }
            _ => None,
        };
        let mut out = LogProb::from_ln(l * LN_10, unc);
        out.flagged = pa.flagged || pb.flagged;
        Ok(out)
    }
}

/// Estimates and relative errors at one true index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPrimePoint {
    pub d_true: f64,
    pub d_hat: f64,
    pub log10_pe: f64,
    pub log10_pe_hat: f64,
    pub log10_f: f64,
    pub log10_f_hat: f64,
    /// |d̂′ − d′| / d′.
    pub d_rel_err: f64,
    /// |log10 p̂ − log10 p| / |log10 p|.
    pub pe_rel_err: f64,
    pub f_rel_err: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPrimeReport {
    pub points: Vec<DPrimePoint>,
}

impl DPrimeReport {
    pub fn max_d_rel_err(&self) -> f64 {
        self.points.iter().map(|p| p.d_rel_err).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        let mut s = String::from(
            "d'        d'_hat             rel err d'  rel err log10 p_e  rel err log10 f\n",
        );
        for p in &self.points {
            s += &format!(
                "{:<9.4} {:<18.12} {:<11.3e} {:<18.3e} {:.3e}{}\n",
                p.d_true,
                p.d_hat,
                p.d_rel_err,
                p.pe_rel_err,
                p.f_rel_err,
                if p.flagged { "  (flagged)" } else { "" }
            );
        }
        s += &format!("max relative error in d': {:.3e}\n", self.max_d_rel_err());
        s
    }
}

fn rel(est: f64, truth: f64) -> f64 {
    if est.is_finite() {
        ((est - truth) / truth).abs()
    } else {
        1.0
    }
}

/// Ray-traced error rate and boundary density at each true index, for the
/// reference covariance with means separated along (1, 1, 1).
///
/// Error rates use log-domain accumulation, so the indices may run past the
/// double range of the error rate.
pub fn dprime_experiment(d_grid: &[f64], integ: &RayIntegrator) -> Result<DPrimeReport> {
    if d_grid.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Gx2Error::InvalidArgument(
            "d′ grid values must be positive".into(),
        ));
    }
    let sigma = DiscrimCase::reference_sigma();
    let dir = DVector::from_element(3, 1.0);
    let std3 = NormalSpec::standard(3);
    let x1 = |x: &[f64]| x[0];
    let grad = |_: &[f64], g: &mut [f64]| {
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = 1.0;
    };
    let mut points = Vec::with_capacity(d_grid.len());
    for &d in d_grid {
        let case = DiscrimCase::new(sigma.clone(), dir.clone(), d)?;
        let pe = case.ray_error_rate(integ, Precision::Log)?;
        let d_hat = if pe.log10_value.is_finite() {
            bayes_dprime(pe.log10_value)?
        } else {
            f64::INFINITY
        };
        let c = 0.5 * d;
        let cfg = RootConfig {
            z_max: (2.0 * c).max(40.0),
            ..RootConfig::default()
        };
        let f = norm_fun_pdf(&x1, Some(&grad), &std3, c, integ, Precision::Log, &cfg)?;
        let log10_f = (-0.5 * c * c - 0.5 * (2.0 * PI).ln()) / LN_10;
        let log10_pe = case.p_e.log10_value;
        points.push(DPrimePoint {
            d_true: d,
            d_hat,
            log10_pe,
            log10_pe_hat: pe.log10_value,
            log10_f,
            log10_f_hat: f.log10_value,
            d_rel_err: rel(d_hat, d),
            pe_rel_err: rel(pe.log10_value, log10_pe),
            f_rel_err: rel(f.log10_value, log10_f),
            flagged: pe.flagged || f.flagged,
        });
    }
    Ok(DPrimeReport { points })
}
