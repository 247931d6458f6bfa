//! Reproduction of published accuracy experiments: table comparisons, random
//! parameter sweeps and the equal-covariance discriminability test.

mod dprime;
mod golden;
mod sweep;

pub use dprime::{
    bayes_dprime, dprime_experiment, mahalanobis_dprime, DPrimePoint, DPrimeReport, DiscrimCase,
};
pub use golden::{
    golden_rows, parse_golden, Cell, PublishedColumn, Scale, Source, TableRow, GOLDEN_TOML,
};
pub use sweep::{
    default_quantiles, random_params, random_sweep, Family, Quantile, SweepReport, SweepSettings,
    SweepStats,
};

use crate::error::Result;
use crate::eval::{gx2cdf, gx2pdf, EvalSettings, Evaluation, RaySettings};
use crate::fourier::{FourierGrid, DEFAULT_MAX_HALF};
use crate::inverse::Method;
use crate::params::Target;
use crate::ray::Precision;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Integrator settings for table runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessSettings {
    pub eval: EvalSettings,
    /// Relative tolerance of ray quadrature (used up to four dimensions).
    pub ray_rel_tol: f64,
    /// Monte Carlo rays for linear-scale rows.
    pub n_rays: usize,
    pub seed: u64,
    /// Monte Carlo values count with this many standard errors.
    pub mc_sigmas: f64,
    /// Independent Monte Carlo runs averaged on log10-scale rows.
    pub log_repeats: usize,
    /// Rays per run on log10-scale rows.
    pub log_rays: usize,
    /// Restrict to these row ids.
    pub rows: Option<Vec<u32>>,
    pub ifft_max_half: usize,
}

impl Default for HarnessSettings {
    fn default() -> Self {
        HarnessSettings {
            eval: EvalSettings::default(),
            ray_rel_tol: 1e-9,
            n_rays: 1_000_000,
            seed: 1,
            mc_sigmas: 3.0,
            log_repeats: 10,
            log_rays: 1_000_000,
            rows: None,
            ifft_max_half: DEFAULT_MAX_HALF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Match,
    /// A cell that must match does not.
    Mismatch,
    /// Differs on a row published as a disagreement.
    KnownDisagreement,
    /// Differs on a cell that is not required to match.
    Differs,
}

/// One computed value compared with one reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub source: Source,
    pub row: u32,
    pub x: f64,
    pub target: Target,
    pub method: Method,
    pub value: Option<f64>,
    pub uncertainty: f64,
    /// "expected" or the published column's method name.
    pub reference: String,
    pub reference_text: String,
    pub reference_value: f64,
    pub reference_uncertainty: f64,
    pub allowed: f64,
    pub must_match: bool,
    pub verdict: Verdict,
    pub flags: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub cells: Vec<CellReport>,
}

impl TableReport {
    pub fn count(&self, v: Verdict) -> usize {
        self.cells.iter().filter(|c| c.verdict == v).count()
    }

    /// No must-match cell failed.
    pub fn passed(&self) -> bool {
        self.count(Verdict::Mismatch) == 0
    }

    pub fn summary(&self) -> String {
        let must = self.cells.iter().filter(|c| c.must_match).count();
        let mut s = format!(
            "{} comparisons: {} match, {} mismatch ({} must match), {} known disagreements, {} other differences\n",
            self.cells.len(),
            self.count(Verdict::Match),
            self.count(Verdict::Mismatch),
            must,
            self.count(Verdict::KnownDisagreement),
            self.count(Verdict::Differs),
        );
        for c in self.cells.iter().filter(|c| c.verdict != Verdict::Match) {
            let v = c
                .value
                .map_or_else(|| c.error.clone().unwrap_or_default(), |v| format!("{v}"));
            s += &format!(
                "  {:?} {:?} row {} x={} {:?} {} vs {} {}: {} ({})\n",
                c.verdict,
                c.source,
                c.row,
                c.x,
                c.target,
                c.method,
                c.reference,
                c.reference_text,
                v,
                c.uncertainty
            );
        }
        s
    }
}

/// A method's value at each point of a row, on the row's scale.
struct Computed {
    value: Option<f64>,
    uncertainty: f64,
    /// The value is compared after rounding to the reference's printed digits.
    rounded: bool,
    flags: Vec<String>,
    error: Option<String>,
}

impl Computed {
    fn failed(e: String) -> Self {
        Computed {
            value: None,
            uncertainty: 0.0,
            rounded: false,
            flags: Vec::new(),
            error: Some(e),
        }
    }
}

fn is_exact(m: Method) -> bool {
    matches!(
        m,
        Method::Imhof | Method::Ruben | Method::Ifft | Method::Ray | Method::Auto
    )
}

fn from_eval(e: &Evaluation, scale: Scale, sigmas: f64) -> Computed {
    let (value, unc) = match scale {
        Scale::Linear => (e.value, e.uncertainty.unwrap_or(0.0)),
        Scale::Log10 => (e.log10_value, e.uncertainty_log10.unwrap_or(0.0)),
    };
    let unc = if e.method == Method::Ray {
        sigmas * unc
    } else {
        unc
    };
    Computed {
        value: Some(value),
        uncertainty: unc,
        rounded: false,
        flags: e.flags.clone(),
        error: None,
    }
}

fn evaluate_points(row: &TableRow, method: Method, st: &EvalSettings) -> Vec<Result<Evaluation>> {
    let mut out: Vec<Option<Result<Evaluation>>> = vec![None; row.x_points.len()];
    for target in [Target::Cdf, Target::Pdf] {
        let idx: Vec<usize> = (0..row.x_points.len())
            .filter(|&i| row.targets[i] == target)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let xs: Vec<f64> = idx.iter().map(|&i| row.x_points[i]).collect();
        let r = match target {
            Target::Cdf => gx2cdf(&row.params, &xs, row.side, method, st),
            Target::Pdf => gx2pdf(&row.params, &xs, method, st),
        };
        match r {
            Ok(v) => idx.iter().zip(v).for_each(|(&i, e)| out[i] = Some(Ok(e))),
            Err(e) => idx.iter().for_each(|&i| out[i] = Some(Err(e.clone()))),
        }
    }
    out.into_iter()
        .map(|o| o.expect("every point has a target"))
        .collect()
}

fn compute(row: &TableRow, method: Method, hs: &HarnessSettings) -> Vec<Computed> {
    let mut st = hs.eval.clone();
    st.ifft_max_half = hs.ifft_max_half;
    match row.scale {
        Scale::Linear => {
            st.precision = Precision::Basic;
            st.ray = RaySettings {
                n_rays: hs.n_rays,
                rel_tol: hs.ray_rel_tol,
                seed: hs.seed,
                quadrature_max_dim: 4,
            };
            if let Some((span, n)) = row.ifft_grid {
                let lo = row.x_points.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = row
                    .x_points
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                st.ifft_grid = FourierGrid::with_limit(
                    0.5 * (lo + hi),
                    span,
                    (n / 2.0) as usize,
                    hs.ifft_max_half,
                )
                .ok();
            }
            // quadrature errors are bounds; Monte Carlo errors are standard errors
            let sigmas = if row.params.dim() <= 4 {
                1.0
            } else {
                hs.mc_sigmas
            };
            evaluate_points(row, method, &st)
                .into_iter()
                .map(|r| match r {
                    Ok(e) => {
                        let mut c = from_eval(&e, row.scale, sigmas);
                        if method == Method::Ifft {
                            c.uncertainty = 0.0;
                            c.rounded = true;
                        }
                        c
                    }
                    Err(e) => Computed::failed(e.to_string()),
                })
                .collect()
        }
        Scale::Log10 if method == Method::Ray => repeated_ray(row, hs),
        Scale::Log10 => {
            st.precision = Precision::Log;
            evaluate_points(row, method, &st)
                .into_iter()
                .map(|r| match r {
                    Ok(e) => from_eval(&e, row.scale, hs.mc_sigmas),
                    Err(e) => Computed::failed(e.to_string()),
                })
                .collect()
        }
    }
}

/// Mean and standard error of the log10 values from independent Monte Carlo runs.
fn repeated_ray(row: &TableRow, hs: &HarnessSettings) -> Vec<Computed> {
    let reps = hs.log_repeats.max(1);
    let mut runs: Vec<Vec<Result<Evaluation>>> = Vec::with_capacity(reps);
    for r in 0..reps {
        let mut st = hs.eval.clone();
        st.precision = Precision::Log;
        st.ray = RaySettings {
            n_rays: hs.log_rays,
            rel_tol: hs.ray_rel_tol,
            seed: hs.seed + r as u64,
            quadrature_max_dim: 0,
        };
        runs.push(evaluate_points(row, Method::Ray, &st));
    }
    (0..row.x_points.len())
        .map(|i| {
            let mut vals = Vec::with_capacity(reps);
            let mut flags = Vec::new();
            for run in &runs {
                match &run[i] {
                    Ok(e) => {
                        vals.push(e.log10_value);
                        for f in &e.flags {
                            if !flags.contains(f) {
                                flags.push(f.clone());
                            }
                        }
                    }
                    Err(e) => return Computed::failed(e.to_string()),
                }
            }
            if reps == 1 {
                let e = runs[0][i].as_ref().expect("checked above");
                return from_eval(e, Scale::Log10, hs.mc_sigmas);
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            Computed {
                value: Some(mean),
                uncertainty: (var / n).sqrt(),
                rounded: false,
                flags,
                error: None,
            }
        })
        .collect()
}

fn round_to(v: f64, unit: f64) -> f64 {
    (v / unit).round() * unit
}

fn compare(row: &TableRow, method: Method, computed: &[Computed]) -> Vec<CellReport> {
    let own = row.published.iter().find(|c| c.method == method);
    let mut refs: Vec<(&str, &[Cell])> = Vec::new();
    if let Some(col) = own {
        refs.push((method.name(), &col.cells));
    }
    let same_as_expected = own.is_some_and(|c| {
        c.cells
            .iter()
            .zip(&row.expected)
            .all(|(a, b)| a.text == b.text && a.uncert == b.uncert)
    });
    if !same_as_expected {
        refs.push(("expected", &row.expected));
    }
    let mut out = Vec::new();
    for (label, cells) in refs {
        for (i, (c, cell)) in computed.iter().zip(cells).enumerate() {
            // the log10 tables hold no exact column, so cross-method rows are informational
            let exact_ref = label != "expected" || row.scale == Scale::Linear;
            let must_match = cell.green
                && exact_ref
                && !row.known_disagreement
                && (is_exact(method) || own.is_some());
            // rounded values carry half a unit of their own rounding
            let half = if c.rounded { cell.half_unit() } else { 0.0 };
            let allowed = c.uncertainty + cell.uncert + half;
            let ok = c.value.is_some_and(|v| {
                let v = if c.rounded {
                    round_to(v, 2.0 * half)
                } else {
                    v
                };
                (v - cell.value).abs() <= allowed * (1.0 + 1e-9)
            });
            let verdict = if ok {
                Verdict::Match
            } else if row.known_disagreement {
                Verdict::KnownDisagreement
            } else if must_match {
                Verdict::Mismatch
            } else {
                Verdict::Differs
            };
            out.push(CellReport {
                source: row.source,
                row: row.id,
                x: row.x_points[i],
                target: row.targets[i],
                method,
                value: c.value,
                uncertainty: c.uncertainty,
                reference: label.to_string(),
                reference_text: cell.text.clone(),
                reference_value: cell.value,
                reference_uncertainty: cell.uncert,
                allowed,
                must_match,
                verdict,
                flags: c.flags.clone(),
                error: c.error.clone(),
            });
        }
    }
    out
}

/// Evaluates every golden row of `source` with each method and compares each value
/// with the published reference: they match when `|v₁ − v₂| ≤ Δ₁ + Δ₂`.
pub fn run_table(source: Source, methods: &[Method], hs: &HarnessSettings) -> Result<TableReport> {
    let rows: Vec<TableRow> = golden_rows()?
        .into_iter()
        .filter(|r| r.source == source)
        .filter(|r| hs.rows.as_ref().is_none_or(|ids| ids.contains(&r.id)))
        .collect();
    Ok(run_rows(&rows, methods, hs))
}

/// As [`run_table`] on explicit rows.
pub fn run_rows(rows: &[TableRow], methods: &[Method], hs: &HarnessSettings) -> TableReport {
    let mut cells: Vec<CellReport> = rows
        .par_iter()
        .flat_map_iter(|row| {
            methods.iter().flat_map(move |&m| {
                let c = compute(row, m, hs);
                compare(row, m, &c)
            })
        })
        .collect();
    cells.sort_by_key(|c| (c.row, methods.iter().position(|&m| m == c.method)));
    TableReport { cells }
}
