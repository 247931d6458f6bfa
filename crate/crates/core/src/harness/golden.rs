//! Published reference values, loaded from a versioned TOML file.

use crate::error::{Gx2Error, Result};
use crate::inverse::Method;
use crate::params::{Gx2Params, Side, Target};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The embedded golden data.
pub const GOLDEN_TOML: &str = include_str!("../../data/golden.toml");

const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Imhof1961,
    Liu2009,
    PaperTable3,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Imhof1961, Source::Liu2009, Source::PaperTable3];

    pub fn name(self) -> &'static str {
        match self {
            Source::Imhof1961 => "imhof1961",
            Source::Liu2009 => "liu2009",
            Source::PaperTable3 => "paper_table3",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = Gx2Error;

    fn from_str(s: &str) -> Result<Self> {
        Source::ALL
            .iter()
            .copied()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let names: Vec<&str> = Source::ALL.iter().map(|v| v.name()).collect();
                Gx2Error::InvalidArgument(format!(
                    "unknown source '{s}' (valid: {})",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log10,
}

/// A published value with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// The value as printed.
    pub text: String,
    pub value: f64,
    pub uncert: f64,
    /// Published as agreeing with the other columns.
    pub green: bool,
}

impl Cell {
    /// Half a unit in the last printed digit.
    pub fn half_unit(&self) -> f64 {
        0.5 * last_digit_unit(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedColumn {
    pub method: Method,
    pub cells: Vec<Cell>,
}

/// One distribution with its evaluation points and published values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub id: u32,
    pub source: Source,
    pub scale: Scale,
    pub side: Side,
    pub params: Gx2Params,
    pub x_points: Vec<f64>,
    pub targets: Vec<Target>,
    pub expected: Vec<Cell>,
    pub published: Vec<PublishedColumn>,
    /// Published transform grid (span, point count).
    pub ifft_grid: Option<(f64, f64)>,
    /// The published columns disagree on this row.
    pub known_disagreement: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    schema: u32,
    row: Vec<RawRow>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    id: u32,
    source: Source,
    scale: Scale,
    side: Side,
    w: Vec<String>,
    k: Vec<u32>,
    lambda: Vec<String>,
    s: String,
    m: String,
    points: Vec<String>,
    #[serde(default)]
    targets: Option<Vec<Target>>,
    expected: Vec<String>,
    uncert: Vec<String>,
    #[serde(default)]
    green: Option<Vec<bool>>,
    #[serde(default)]
    ifft_grid: Option<RawGrid>,
    #[serde(default)]
    known_disagreement: bool,
    #[serde(default)]
    published: Vec<RawColumn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    span: String,
    n: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawColumn {
    method: Method,
    values: Vec<String>,
    uncert: Vec<String>,
    #[serde(default)]
    green: Option<Vec<bool>>,
}

/// Parses a decimal string or a fraction `a/b`.
fn number(s: &str) -> Result<f64> {
    let bad = || Gx2Error::InvalidArgument(format!("not a number: '{s}'"));
    let v = match s.split_once('/') {
        Some((a, b)) => {
            a.trim().parse::<f64>().map_err(|_| bad())?
                / b.trim().parse::<f64>().map_err(|_| bad())?
        }
        None => s.trim().parse::<f64>().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn numbers(v: &[String]) -> Result<Vec<f64>> {
    v.iter().map(|s| number(s)).collect()
}

/// Place value of the last printed digit of a decimal string.
fn last_digit_unit(s: &str) -> f64 {
    let s = s.trim();
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().unwrap_or(0)),
        None => (s, 0),
    };
    let decimals = mant.split_once('.').map_or(0, |(_, f)| f.len() as i32);
    10f64.powi(exp - decimals)
}

fn cells(
    values: &[String],
    uncert: &[String],
    green: Option<&Vec<bool>>,
    what: &str,
) -> Result<Vec<Cell>> {
    if uncert.len() != values.len() || green.is_some_and(|g| g.len() != values.len()) {
        return Err(Gx2Error::InvalidArgument(format!(
            "{what}: value, uncertainty and flag counts differ"
        )));
    }
    values
        .iter()
        .zip(uncert)
        .enumerate()
        .map(|(i, (v, u))| {
            Ok(Cell {
                text: v.clone(),
                value: number(v)?,
                uncert: number(u)?,
                green: green.map_or(true, |g| g[i]),
            })
        })
        .collect()
}

fn convert(r: RawRow) -> Result<TableRow> {
    let what = format!("{} row {}", r.source, r.id);
    let params = Gx2Params::new(
        numbers(&r.w)?,
        r.k,
        numbers(&r.lambda)?,
        number(&r.s)?,
        number(&r.m)?,
    )
    .map_err(|e| Gx2Error::InvalidArgument(format!("{what}: {e}")))?;
    let x_points = numbers(&r.points)?;
    let targets = r
        .targets
        .unwrap_or_else(|| vec![Target::Cdf; x_points.len()]);
    if targets.len() != x_points.len() {
        return Err(Gx2Error::InvalidArgument(format!(
            "{what}: targets and points differ in length"
        )));
    }
    let expected = cells(&r.expected, &r.uncert, r.green.as_ref(), &what)?;
    if expected.len() != x_points.len() {
        return Err(Gx2Error::InvalidArgument(format!(
            "{what}: expected and points differ in length"
        )));
    }
    for c in &expected {
        let ok = match r.scale {
            Scale::Linear => (0.0..=1.0).contains(&c.value),
            Scale::Log10 => c.value < 0.0,
        };
        if !ok {
            return Err(Gx2Error::InvalidArgument(format!(
                "{what}: expected value {} out of range",
                c.text
            )));
        }
    }
    let published = r
        .published
        .iter()
        .map(|c| {
            let cells = cells(&c.values, &c.uncert, c.green.as_ref(), &what)?;
            if cells.len() != x_points.len() {
                return Err(Gx2Error::InvalidArgument(format!(
                    "{what}: {} column has the wrong length",
                    c.method
                )));
            }
            Ok(PublishedColumn {
                method: c.method,
                cells,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ifft_grid = match r.ifft_grid {
        Some(g) => Some((number(&g.span)?, number(&g.n)?)),
        None => None,
    };
    Ok(TableRow {
        id: r.id,
        source: r.source,
        scale: r.scale,
        side: r.side,
        params,
        x_points,
        targets,
        expected,
        published,
        ifft_grid,
        known_disagreement: r.known_disagreement,
    })
}

/// Rows from golden-data text, sorted by source and id.
pub fn parse_golden(text: &str) -> Result<Vec<TableRow>> {
    let raw: RawFile =
        toml::from_str(text).map_err(|e| Gx2Error::InvalidArgument(format!("golden data: {e}")))?;
    if raw.schema != SCHEMA {
        return Err(Gx2Error::InvalidArgument(format!(
            "golden data schema {} (expected {SCHEMA})",
            raw.schema
        )));
    }
    let mut rows = raw
        .row
        .into_iter()
        .map(convert)
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (Source::ALL.iter().position(|&s| s == r.source), r.id));
    Ok(rows)
}

/// The embedded rows.
pub fn golden_rows() -> Result<Vec<TableRow>> {
    parse_golden(GOLDEN_TOML)
}
