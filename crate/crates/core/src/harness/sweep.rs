//! Accuracy of the ray and transform methods over randomly drawn distributions,
//! measured on the log10 scale at a fixed set of tail probabilities.

use crate::error::Result;
use crate::eval::{gx2cdf, gx2pdf, EvalSettings, RaySettings};
use crate::fourier::{auto_grid_with_cap, DEFAULT_MAX_HALF};
use crate::inverse::{gx2inv, Method, Prob};
use crate::params::{Gx2Params, Side, Target};
use crate::ray::Precision;
use crate::sample::block_rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Same-sign weights and no normal term: one finite tail.
    Elliptical,
    /// Two infinite tails.
    NonElliptical,
}

/// A tail probability on one side of the median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub p: f64,
    pub side: Side,
}

/// Ten lower-tail probabilities log-spaced from 1e-10 to the median, then the
/// same upper-tail probabilities back out to 1e-10.
pub fn default_quantiles() -> Vec<Quantile> {
    let lo = -10.0;
    let hi = 0.5f64.log10();
    let ps: Vec<f64> = (0..10)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / 9.0))
        .collect();
    let mut q: Vec<Quantile> = ps
        .iter()
        .map(|&p| Quantile {
            p,
            side: Side::Lower,
        })
        .collect();
    q.extend(ps.iter().rev().skip(1).map(|&p| Quantile {
        p,
        side: Side::Upper,
    }));
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    /// Ground-truth settings (Ruben for elliptical, Imhof otherwise).
    pub truth: EvalSettings,
    pub n_rays: usize,
    /// Transform grids are sized automatically under this cap.
    pub ifft_max_half: usize,
    pub pdf: bool,
    /// Tail probabilities at or above this count as the body.
    pub body_p: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        let mut truth = EvalSettings::default();
        truth.imhof.rel_tol = 1e-12;
        truth.imhof.abs_tol = 1e-16;
        SweepSettings {
            truth,
            n_rays: 1_000_000,
            ifft_max_half: DEFAULT_MAX_HALF,
            pdf: true,
            body_p: 1e-3,
        }
    }
}

/// `10^z` with `z` standard normal, or 0, with equal probability.
fn zero_or_lognormal<R: Rng>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        0.0
    } else {
        10f64.powf(rng.sample::<f64, _>(StandardNormal))
    }
}

/// One random draw of the given family.
///
/// The non-elliptical draw is repeated until it has two infinite tails; the
/// elliptical draw is the same draw with `|w|` and `s = 0`.
pub fn random_params<R: Rng>(rng: &mut R, family: Family) -> Gx2Params {
    loop {
        let n = rng.random_range(1..=10usize);
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let k: Vec<u32> = (0..n).map(|_| rng.random_range(1..=10u32)).collect();
        let lambda: Vec<f64> = (0..n).map(|_| zero_or_lognormal(rng)).collect();
        let s = zero_or_lognormal(rng);
        let m = zero_or_lognormal(rng) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let Ok(p) = Gx2Params::new(w, k, lambda, s, m) else {
            continue;
        };
        if p.is_ellipse() {
            continue;
        }
        return match family {
            Family::NonElliptical => p,
            Family::Elliptical => {
                let w = p.w.iter().map(|v| v.abs()).collect();
                Gx2Params::new(w, p.k, p.lambda, 0.0, p.m).expect("valid draw")
            }
        };
    }
}

/// One quantile point of one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub family: Family,
    pub draw: usize,
    pub quantile: Quantile,
    pub x: f64,
    /// Ground-truth tail probability and density.
    pub p: f64,
    pub f: Option<f64>,
    /// |log10 p − log10 p_q| / |log10 p_q|.
    pub inversion_error: f64,
    pub ray_cdf: f64,
    pub ifft_cdf: f64,
    pub ray_pdf: Option<f64>,
    pub ifft_pdf: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl SweepStats {
    fn of(v: &[f64]) -> Self {
        let n = v.len();
        if n == 0 {
            return SweepStats {
                n,
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        SweepStats { n, mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub n_distributions: usize,
    pub seed: u64,
    pub body_p: f64,
    pub records: Vec<SweepRecord>,
    /// Quantile points dropped because the ground truth failed or was 0.
    pub excluded: usize,
    /// Ground-truth probabilities outside [0, 1].
    pub truth_out_of_range: usize,
}

impl SweepReport {
    fn errors(&self, family: Family, method: Method, target: Target, body_only: bool) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.family == family && (!body_only || r.quantile.p >= self.body_p))
            .filter_map(|r| match (method, target) {
                (Method::Ray, Target::Cdf) => Some(r.ray_cdf),
                (Method::Ifft, Target::Cdf) => Some(r.ifft_cdf),
                (Method::Ray, Target::Pdf) => r.ray_pdf,
                (Method::Ifft, Target::Pdf) => r.ifft_pdf,
                _ => None,
            })
            .collect()
    }

    /// Relative log10 errors of `method` (ray or ifft) over all quantiles, or the body only.
    pub fn stats(
        &self,
        family: Family,
        method: Method,
        target: Target,
        body_only: bool,
    ) -> SweepStats {
        SweepStats::of(&self.errors(family, method, target, body_only))
    }

    pub fn inversion_stats(&self, family: Family) -> SweepStats {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.family == family)
            .map(|r| r.inversion_error)
            .collect();
        SweepStats::of(&v)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} draws per family, seed {}; {} points excluded, {} ground-truth values outside [0,1]\n",
            self.n_distributions, self.seed, self.excluded, self.truth_out_of_range
        );
        for fam in [Family::Elliptical, Family::NonElliptical] {
            let inv = self.inversion_stats(fam);
            s += &format!(
                "{fam:?}: inversion error {:.3e} ± {:.3e}\n",
                inv.mean, inv.sd
            );
            for target in [Target::Cdf, Target::Pdf] {
                for m in [Method::Ray, Method::Ifft] {
                    let all = self.stats(fam, m, target, false);
                    if all.n == 0 {
                        continue;
                    }
                    let body = self.stats(fam, m, target, true);
                    s += &format!(
                        "  {m} {target:?}: all {:.3} ± {:.3} (n={}), body {:.3} ± {:.3} (n={})\n",
                        all.mean, all.sd, all.n, body.mean, body.sd, body.n
                    );
                }
            }
        }
        s
    }
}

/// |log10 v̂ − log10 v| / |log10 v|, taken as 1 when `v̂` is not positive.
fn rel_log_error(est: f64, truth: f64) -> f64 {
    if !(est > 0.0) || !est.is_finite() {
        return 1.0;
    }
    let lt = truth.log10();
    ((est.log10() - lt) / lt).abs()
}

struct DrawOutcome {
    records: Vec<SweepRecord>,
    excluded: usize,
    out_of_range: usize,
}

fn run_draw(
    family: Family,
    draw: usize,
    p: &Gx2Params,
    seed: u64,
    quantiles: &[Quantile],
    st: &SweepSettings,
) -> Result<DrawOutcome> {
    let truth_method = if family == Family::Elliptical {
        Method::Ruben
    } else {
        Method::Imhof
    };
    let mut excluded = 0;
    let mut out_of_range = 0;
    let mut pts: Vec<(Quantile, f64, f64, Option<f64>)> = Vec::new();
    for &q in quantiles {
        let truth = gx2inv(p, Prob::Linear(q.p), q.side, truth_method, &st.truth).and_then(|x| {
            let c = gx2cdf(p, &[x], q.side, truth_method, &st.truth)?.remove(0);
            let f = if st.pdf {
                Some(gx2pdf(p, &[x], truth_method, &st.truth)?.remove(0))
            } else {
                None
            };
            Ok((x, c, f))
        });
        let Ok((x, c, f)) = truth else {
            excluded += 1;
            continue;
        };
        if !(0.0..=1.0).contains(&c.value) {
            out_of_range += 1;
        }
        let f_ok = f
            .as_ref()
            .is_none_or(|f| f.value > 0.0 && f.value.log10() != 0.0);
        if !(c.value > 0.0 && c.value < 1.0) || !c.flags.is_empty() || !f_ok {
            excluded += 1;
            continue;
        }
        pts.push((q, x, c.value, f.map(|f| f.value)));
    }
    let xs: Vec<f64> = pts.iter().map(|t| t.1).collect();
    let mut cand = EvalSettings {
        precision: Precision::Basic,
        ..EvalSettings::default()
    };
    cand.ray = RaySettings {
        n_rays: st.n_rays,
        seed,
        quadrature_max_dim: 0,
        ..RaySettings::default()
    };
    let mut ray_c = vec![f64::NAN; xs.len()];
    let mut ifft_c = vec![f64::NAN; xs.len()];
    let mut ray_f = vec![None; xs.len()];
    let mut ifft_f = vec![None; xs.len()];
    if !xs.is_empty() {
        let cdf_grid = auto_grid_with_cap(p, &xs, Target::Cdf, st.ifft_max_half).ok();
        for side in [Side::Lower, Side::Upper] {
            let idx: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].0.side == side).collect();
            if idx.is_empty() {
                continue;
            }
            let sx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
            let ray = gx2cdf(p, &sx, side, Method::Ray, &cand);
            let mut fc = cand.clone();
            fc.ifft_grid = cdf_grid.clone();
            let ifft = gx2cdf(p, &sx, side, Method::Ifft, &fc);
            for (j, &i) in idx.iter().enumerate() {
                ray_c[i] = ray
                    .as_ref()
                    .map_or(1.0, |v| rel_log_error(v[j].value, pts[i].2));
                ifft_c[i] = ifft
                    .as_ref()
                    .map_or(1.0, |v| rel_log_error(v[j].value, pts[i].2));
            }
        }
        if st.pdf {
            let ray = gx2pdf(p, &xs, Method::Ray, &cand);
            let mut fc = cand.clone();
            fc.ifft_grid = auto_grid_with_cap(p, &xs, Target::Pdf, st.ifft_max_half).ok();
            let ifft = gx2pdf(p, &xs, Method::Ifft, &fc);
            for i in 0..xs.len() {
                let truth = pts[i].3.expect("density computed");
                ray_f[i] = Some(
                    ray.as_ref()
                        .map_or(1.0, |v| rel_log_error(v[i].value, truth)),
                );
                ifft_f[i] = Some(
                    ifft.as_ref()
                        .map_or(1.0, |v| rel_log_error(v[i].value, truth)),
                );
            }
        }
    }
    let records = pts
        .iter()
        .enumerate()
        .map(|(i, &(q, x, pv, fv))| SweepRecord {
            family,
            draw,
            quantile: q,
            x,
            p: pv,
            f: fv,
            inversion_error: ((pv.log10() - q.p.log10()) / q.p.log10()).abs(),
            ray_cdf: ray_c[i],
            ifft_cdf: ifft_c[i],
            ray_pdf: ray_f[i],
            ifft_pdf: ifft_f[i],
        })
        .collect();
    Ok(DrawOutcome {
        records,
        excluded,
        out_of_range,
    })
}

/// Draws `n` distributions of each family, inverts the ground-truth cdf at each
/// quantile and scores ray and transform estimates there. Deterministic per seed.
pub fn random_sweep(
    n: usize,
    seed: u64,
    quantiles: &[Quantile],
    st: &SweepSettings,
) -> Result<SweepReport> {
    if n == 0 {
        return Err(crate::error::Gx2Error::InvalidArgument(
            "the sweep needs at least one distribution".into(),
        ));
    }
    let jobs: Vec<(Family, usize)> = [Family::Elliptical, Family::NonElliptical]
        .iter()
        .flat_map(|&f| (0..n).map(move |i| (f, i)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(family, i)| {
            // both families of draw i come from the same stream
            let mut rng = block_rng(seed, i as u64);
            let p = random_params(&mut rng, family);
            let ray_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            run_draw(family, i, &p, ray_seed, quantiles, st)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = SweepReport {
        n_distributions: n,
        seed,
        body_p: st.body_p,
        records: Vec::new(),
        excluded: 0,
        truth_out_of_range: 0,
    };
    for o in outcomes {
        report.records.extend(o.records);
        report.excluded += o.excluded;
        report.truth_out_of_range += o.out_of_range;
    }
    Ok(report)
}
