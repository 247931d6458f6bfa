//! `gx2`: generalized chi-square cdf, pdf, quantiles and samples from the command line,
//! plus the accuracy harness.

mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gx2::approx::{ellipse_cdf_log10, ellipse_pdf_log10, EllipseGeom};
use gx2::fourier::FourierGrid;
use gx2::harness::{
    default_quantiles, dprime_experiment, random_sweep, run_table, DPrimeReport, HarnessSettings,
    Source, SweepSettings, TableReport,
};
use gx2::ray::{Precision, RayIntegrator};
use gx2::{
    auto_method, gx2cdf, gx2inv, gx2pdf, moments, sample, EvalSettings, Gx2Error, Gx2Params,
    Method, Prob, SamplePath, Side,
};
use output::{
    eval_record, linear_field, mode_for, value_fields, write_records, Field, Record, COLUMNS,
};
use serde::Serialize;
use std::io::{self, Write};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gx2",
    version,
    about = "Generalized chi-square distribution: cdf, pdf, quantiles, samples and accuracy tables"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tail probabilities on one side of each point.
    Cdf(EvalCmd),
    /// Densities at each point.
    Pdf(EvalCmd),
    /// Points with a given tail probability.
    Inv(InvCmd),
    /// Random draws.
    Sample(SampleCmd),
    /// One column per method over the same points.
    Compare(CompareCmd),
    /// Reproduce a published table and report per-cell verdicts.
    Table(TableCmd),
    /// Ray and transform accuracy over random distributions.
    Sweep(SweepCmd),
    /// Discriminability index recovered from ray-traced error rates.
    Dprime(DprimeCmd),
}

#[derive(Args, Clone)]
struct DistArgs {
    /// Weights of the chi-square terms.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    w: Vec<f64>,
    /// Degrees of freedom (default all 1).
    #[arg(long, value_delimiter = ',')]
    k: Vec<u32>,
    /// Noncentralities (default all 0).
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    /// Scale of the normal term.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    s: f64,
    /// Offset.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    m: f64,
}

impl DistArgs {
    fn params(&self) -> Result<Gx2Params, Gx2Error> {
        let n = self.w.len();
        let k = if self.k.is_empty() {
            vec![1; n]
        } else {
            self.k.clone()
        };
        let lambda = if self.lambda.is_empty() {
            vec![0.0; n]
        } else {
            self.lambda.clone()
        };
        Gx2Params::new(self.w.clone(), k, lambda, self.s, self.m)
    }
}

#[derive(Args, Clone)]
#[group(required = true, multiple = false)]
struct Points {
    /// Comma-separated points.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    /// Evenly spaced points `start:stop:count`, or log spaced with a trailing `:log`.
    #[arg(long, allow_hyphen_values = true)]
    x_range: Option<String>,
}

impl Points {
    fn values(&self) -> Result<Vec<f64>, Gx2Error> {
        match (&self.x, &self.x_range) {
            (Some(x), _) => Ok(x.clone()),
            (None, Some(r)) => parse_range(r),
            (None, None) => Err(Gx2Error::InvalidArgument("no points given".into())),
        }
    }
}

fn parse_range(spec: &str) -> Result<Vec<f64>, Gx2Error> {
    let bad = || Gx2Error::InvalidArgument(format!("range '{spec}' is not start:stop:count[:log]"));
    let parts: Vec<&str> = spec.split(':').collect();
    if !(3..=4).contains(&parts.len()) || (parts.len() == 4 && parts[3] != "log") {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    let log = parts.len() == 4;
    if n == 0 || !a.is_finite() || !b.is_finite() || (log && !(a > 0.0 && b > 0.0)) {
        return Err(bad());
    }
    let at = |i: usize| {
        if n == 1 {
            0.0
        } else {
            i as f64 / (n - 1) as f64
        }
    };
    Ok((0..n)
        .map(|i| {
            if log {
                10f64.powf(a.log10() + (b.log10() - a.log10()) * at(i))
            } else {
                a + (b - a) * at(i)
            }
        })
        .collect())
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Lower,
    Upper,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Lower => Side::Lower,
            SideArg::Upper => Side::Upper,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Basic,
    Log,
}

#[derive(Args, Clone)]
struct MethodSettings {
    /// Ray-trace Monte Carlo ray count.
    #[arg(long, default_value_t = 1_000_000)]
    rays: usize,
    /// Ray-trace quadrature relative tolerance.
    #[arg(long, default_value_t = 1e-6)]
    rel_tol: f64,
    /// Always use Monte Carlo for the ray method.
    #[arg(long)]
    mc: bool,
    /// Ray accumulation: plain sums, or log-sum-exp for values past the double range.
    #[arg(long, value_enum, default_value = "log")]
    precision: PrecisionArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fixed Ruben series length.
    #[arg(long)]
    ruben_terms: Option<usize>,
    /// Imhof quadrature relative tolerance.
    #[arg(long)]
    imhof_rel_tol: Option<f64>,
    /// Transform grid span (with --ifft-n).
    #[arg(long, requires = "ifft_n")]
    ifft_span: Option<f64>,
    /// Transform grid point count (with --ifft-span).
    #[arg(long, requires = "ifft_span")]
    ifft_n: Option<f64>,
    /// Largest transform half-length.
    #[arg(long)]
    ifft_half: Option<usize>,
}

impl MethodSettings {
    fn eval(&self, p: &Gx2Params) -> Result<EvalSettings, Gx2Error> {
        let mut st = EvalSettings::default();
        st.ray.n_rays = self.rays;
        st.ray.rel_tol = self.rel_tol;
        st.ray.seed = self.seed;
        if self.mc {
            st.ray.quadrature_max_dim = 0;
        }
        st.precision = match self.precision {
            PrecisionArg::Basic => Precision::Basic,
            PrecisionArg::Log => Precision::Log,
        };
        st.ruben_terms = self.ruben_terms;
        if let Some(t) = self.imhof_rel_tol {
            st.imhof.rel_tol = t;
        }
        if let Some(h) = self.ifft_half {
            st.ifft_max_half = h;
        }
        if let (Some(span), Some(n)) = (self.ifft_span, self.ifft_n) {
            let half = (n / 2.0).max(1.0).min(usize::MAX as f64) as usize;
            st.ifft_grid = Some(FourierGrid::with_limit(
                moments(p).m1,
                span,
                half,
                st.ifft_max_half,
            )?);
        }
        Ok(st)
    }
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    dist: DistArgs,
    #[command(flatten)]
    points: Points,
    #[arg(long, value_enum, default_value = "lower")]
    side: SideArg,
    #[arg(long, default_value = "auto")]
    method: Method,
    /// Report log10 values and log10 uncertainties.
    #[arg(long)]
    log: bool,
    /// Points are log10 offsets from the finite tail end (ellipse method only).
    #[arg(long)]
    log10_x_from_tail: bool,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    settings: MethodSettings,
}

#[derive(Args)]
struct InvCmd {
    #[command(flatten)]
    dist: DistArgs,
    /// Tail probabilities.
    #[arg(
        long,
        value_delimiter = ',',
        conflicts_with = "log10_p",
        required_unless_present = "log10_p"
    )]
    p: Vec<f64>,
    /// Tail probabilities as log10, for values below the double range.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    log10_p: Vec<f64>,
    #[arg(long, value_enum, default_value = "lower")]
    side: SideArg,
    #[arg(long, default_value = "auto")]
    method: Method,
    #[arg(long)]
    log: bool,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    settings: MethodSettings,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Quadratic,
    Component,
}

#[derive(Args)]
struct SampleCmd {
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "component")]
    path: PathArg,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Cdf,
    Pdf,
}

#[derive(Args)]
struct CompareCmd {
    #[command(flatten)]
    dist: DistArgs,
    #[command(flatten)]
    points: Points,
    /// Methods to compare.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "imhof,ruben,ifft,ray,pearson,tail,ellipse"
    )]
    methods: Vec<Method>,
    #[arg(long, value_enum, default_value = "cdf")]
    target: TargetArg,
    #[arg(long, value_enum, default_value = "lower")]
    side: SideArg,
    #[arg(long)]
    log: bool,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    settings: MethodSettings,
}

#[derive(Args)]
struct TableCmd {
    /// imhof1961, liu2009 or paper_table3; all three when omitted.
    #[arg(long)]
    source: Option<Source>,
    /// Methods to run (default: imhof, ray and ifft on the linear tables; tail and ray on the log table).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Restrict to these row ids.
    #[arg(long, value_delimiter = ',')]
    rows: Vec<u32>,
    /// Monte Carlo rays on linear rows.
    #[arg(long, default_value_t = 1_000_000)]
    rays: usize,
    /// Rays per repeat on log rows.
    #[arg(long, default_value_t = 1_000_000)]
    log_rays: usize,
    /// Independent Monte Carlo repeats on log rows.
    #[arg(long, default_value_t = 10)]
    log_repeats: usize,
    #[arg(long, default_value_t = 1e-9)]
    ray_rel_tol: f64,
    #[arg(long)]
    ifft_half: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SweepCmd {
    /// Distributions per family.
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    rays: usize,
    /// Skip the density comparison.
    #[arg(long)]
    no_pdf: bool,
    #[arg(long)]
    ifft_half: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntegratorArg {
    /// Quadrature up to d' = 75, Monte Carlo beyond.
    Auto,
    Quadrature,
    Mc,
}

#[derive(Args)]
struct DprimeCmd {
    /// True indices `start:stop:count[:log]`.
    #[arg(long, conflicts_with = "d")]
    grid: Option<String>,
    /// True indices as a list.
    #[arg(long, value_delimiter = ',')]
    d: Vec<f64>,
    #[arg(long, value_enum, default_value = "auto")]
    integrator: IntegratorArg,
    #[arg(long, default_value_t = 1e-20)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    rays: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Gx2Error> for Failure {
    fn from(e: Gx2Error) -> Self {
        let code = match e {
            Gx2Error::InvalidParams(_) | Gx2Error::InvalidArgument(_) => 2,
            Gx2Error::Inapplicable { .. } => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

type Run = Result<u8, Failure>;

fn emit(records: &[Record], header: &[String], json: bool) -> Run {
    write_records(io::stdout().lock(), records, header, json)?;
    Ok(0)
}

fn default_header() -> Vec<String> {
    COLUMNS.iter().map(|s| s.to_string()).collect()
}

fn cmd_eval(c: &EvalCmd, pdf: bool) -> Run {
    let p = c.dist.params()?;
    let xs = c.points.values()?;
    if c.log10_x_from_tail {
        return cmd_ellipse_offsets(&p, &xs, c, pdf);
    }
    let st = c.settings.eval(&p)?;
    let evals = if pdf {
        gx2pdf(&p, &xs, c.method, &st)?
    } else {
        gx2cdf(&p, &xs, c.side.into(), c.method, &st)?
    };
    let records: Vec<Record> = evals.iter().map(|e| eval_record(e, c.log)).collect();
    emit(&records, &default_header(), c.json)
}

/// Ellipse values at offsets `10^x` from the finite tail end.
fn cmd_ellipse_offsets(p: &Gx2Params, xs: &[f64], c: &EvalCmd, pdf: bool) -> Run {
    if c.method != Method::Ellipse {
        return Err(Failure {
            code: 2,
            message: "--log10-x-from-tail needs --method ellipse".into(),
        });
    }
    let geom = EllipseGeom::new(p)?;
    if !pdf && Side::from(c.side) != geom.side() {
        return Err(Failure {
            code: 3,
            message: format!(
                "the finite tail is the {:?} one; use --side {:?}",
                geom.side(),
                geom.side()
            )
            .to_lowercase(),
        });
    }
    let mut records = Vec::new();
    for &lx in xs {
        let v = if pdf {
            ellipse_pdf_log10(p, lx)?
        } else {
            ellipse_cdf_log10(p, lx)?
        };
        let value = 10f64.powf(v.log10_value);
        let rel = v.rel_err();
        let mut r = Record::default();
        r.push("x", Field::num(lx));
        if c.log {
            r.push("value", Field::num(v.log10_value));
            r.push("log10_value", Field::num(v.log10_value));
            r.push("uncertainty", Field::num(rel / std::f64::consts::LN_10));
        } else {
            r.push("value", linear_field(value, v.log10_value));
            r.push("log10_value", Field::num(v.log10_value));
            r.push(
                "uncertainty",
                Field::opt((value > 0.0).then_some(value * rel)),
            );
        }
        r.push("method", Field::text("ellipse"));
        r.push("mode", Field::text(mode_for(v.log10_value)));
        r.push("flags", Field::text("log10_offset"));
        records.push(r);
    }
    emit(&records, &default_header(), c.json)
}

fn cmd_inv(c: &InvCmd) -> Run {
    let p = c.dist.params()?;
    let st = c.settings.eval(&p)?;
    let probs: Vec<Prob> = if c.p.is_empty() {
        c.log10_p.iter().map(|&l| Prob::Log10(l)).collect()
    } else {
        c.p.iter().map(|&v| Prob::Linear(v)).collect()
    };
    let mut records = Vec::new();
    for prob in probs {
        let (lin, l10) = match prob {
            Prob::Linear(v) => (v, v.log10()),
            Prob::Log10(l) => (10f64.powf(l), l),
        };
        let method = match c.method {
            Method::Auto => auto_method(&p, Some(l10), c.side.into(), &st.routing).method,
            m => m,
        };
        let x = gx2inv(&p, prob, c.side.into(), method, &st)?;
        let mut r = Record::default();
        r.push("x", Field::num(x));
        r.push(
            "value",
            if c.log {
                Field::num(l10)
            } else {
                linear_field(lin, l10)
            },
        );
        r.push("log10_value", Field::num(l10));
        r.push("uncertainty", Field::empty());
        r.push("method", Field::text(method.name()));
        r.push("mode", Field::text(mode_for(l10)));
        r.push("flags", Field::text(""));
        records.push(r);
    }
    emit(&records, &default_header(), c.json)
}

fn cmd_sample(c: &SampleCmd) -> Run {
    let p = c.dist.params()?;
    let path = match c.path {
        PathArg::Quadratic => SamplePath::Quadratic,
        PathArg::Component => SamplePath::Component,
    };
    let path_name = format!(
        "path={}",
        if path == SamplePath::Quadratic {
            "quadratic"
        } else {
            "component"
        }
    );
    let records: Vec<Record> = sample(&p, c.n, c.seed, path)
        .into_iter()
        .map(|x| {
            let mut r = Record::default();
            r.push("x", Field::num(x));
            for col in ["value", "log10_value", "uncertainty", "method", "mode"] {
                r.push(col, Field::empty());
            }
            r.push("flags", Field::text(path_name.clone()));
            r
        })
        .collect();
    emit(&records, &default_header(), c.json)
}

fn cmd_compare(c: &CompareCmd) -> Run {
    let p = c.dist.params()?;
    let xs = c.points.values()?;
    let st = c.settings.eval(&p)?;
    let mut header = vec!["x".to_string()];
    let mut columns = Vec::new();
    for &m in &c.methods {
        for suffix in ["value", "log10_value", "uncertainty", "flags"] {
            header.push(format!("{m}_{suffix}"));
        }
        let res = match c.target {
            TargetArg::Cdf => gx2cdf(&p, &xs, c.side.into(), m, &st),
            TargetArg::Pdf => gx2pdf(&p, &xs, m, &st),
        };
        columns.push(res);
    }
    let records: Vec<Record> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut r = Record::default();
            r.push("x", Field::num(x));
            for (m, res) in c.methods.iter().zip(&columns) {
                match res {
                    Ok(v) => {
                        let (value, log10, unc) = value_fields(&v[i], c.log);
                        let mut flags = v[i].flags.clone();
                        if *m == Method::Auto {
                            flags.insert(0, format!("via={}", v[i].method));
                        }
                        r.push(format!("{m}_value"), value);
                        r.push(format!("{m}_log10_value"), log10);
                        r.push(format!("{m}_uncertainty"), unc);
                        r.push(format!("{m}_flags"), Field::text(flags.join(";")));
                    }
                    Err(e) => {
                        for suffix in ["value", "log10_value", "uncertainty"] {
                            r.push(format!("{m}_{suffix}"), Field::empty());
                        }
                        r.push(format!("{m}_flags"), Field::text(format!("error: {e}")));
                    }
                }
            }
            r
        })
        .collect();
    emit(&records, &header, c.json)
}

fn print_json<T: Serialize>(v: &T) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn default_methods(source: Source) -> Vec<Method> {
    match source {
        Source::Imhof1961 | Source::Liu2009 => vec![Method::Imhof, Method::Ray, Method::Ifft],
        Source::PaperTable3 => vec![Method::Tail, Method::Ray],
    }
}

fn cmd_table(c: &TableCmd) -> Run {
    let mut hs = HarnessSettings {
        n_rays: c.rays,
        log_rays: c.log_rays,
        log_repeats: c.log_repeats,
        ray_rel_tol: c.ray_rel_tol,
        seed: c.seed,
        rows: (!c.rows.is_empty()).then(|| c.rows.clone()),
        ..HarnessSettings::default()
    };
    if let Some(h) = c.ifft_half {
        hs.ifft_max_half = h;
    }
    let sources: Vec<Source> = c.source.map_or_else(|| Source::ALL.to_vec(), |s| vec![s]);
    let mut report = TableReport { cells: Vec::new() };
    for s in sources {
        let methods = if c.methods.is_empty() {
            default_methods(s)
        } else {
            c.methods.clone()
        };
        report.cells.extend(run_table(s, &methods, &hs)?.cells);
    }
    print_json(&report)?;
    eprint!("{}", report.summary());
    Ok(if report.passed() { 0 } else { 1 })
}

fn cmd_sweep(c: &SweepCmd) -> Run {
    let mut st = SweepSettings {
        n_rays: c.rays,
        pdf: !c.no_pdf,
        ..SweepSettings::default()
    };
    if let Some(h) = c.ifft_half {
        st.ifft_max_half = h;
    }
    let r = random_sweep(c.n, c.seed, &default_quantiles(), &st)?;
    print_json(&r)?;
    eprint!("{}", r.summary());
    Ok(0)
}

/// Largest index the direction quadrature handles well.
const QUADRATURE_MAX_D: f64 = 75.0;

fn cmd_dprime(c: &DprimeCmd) -> Run {
    let grid = match &c.grid {
        Some(g) => parse_range(g)?,
        None if !c.d.is_empty() => c.d.clone(),
        None => parse_range("1:75:10")?,
    };
    let quad = RayIntegrator::quadrature(c.rel_tol);
    let mc = RayIntegrator::monte_carlo(c.rays, c.seed);
    let mut report = DPrimeReport { points: Vec::new() };
    match c.integrator {
        IntegratorArg::Quadrature => report = dprime_experiment(&grid, &quad)?,
        IntegratorArg::Mc => report = dprime_experiment(&grid, &mc)?,
        IntegratorArg::Auto => {
            let (lo, hi): (Vec<f64>, Vec<f64>) = grid.iter().partition(|&&d| d <= QUADRATURE_MAX_D);
            if !lo.is_empty() {
                report.points.extend(dprime_experiment(&lo, &quad)?.points);
            }
            if !hi.is_empty() {
                report.points.extend(dprime_experiment(&hi, &mc)?.points);
            }
        }
    }
    print_json(&report)?;
    eprint!("{}", report.summary());
    Ok(0)
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("GX2_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure {
                code: 2,
                message: format!("GX2_THREADS must be a positive integer (got '{v}')"),
            })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                code: 1,
                message: e.to_string(),
            })?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Run {
    configure_threads()?;
    match &cli.cmd {
        Cmd::Cdf(c) => cmd_eval(c, false),
        Cmd::Pdf(c) => cmd_eval(c, true),
        Cmd::Inv(c) => cmd_inv(c),
        Cmd::Sample(c) => cmd_sample(c),
        Cmd::Compare(c) => cmd_compare(c),
        Cmd::Table(c) => cmd_table(c),
        Cmd::Sweep(c) => cmd_sweep(c),
        Cmd::Dprime(c) => cmd_dprime(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("gx2: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
