//! CSV and JSON records shared by the evaluation subcommands.

use gx2::ray::{LogMode, LOG10_REALMIN};
use gx2::Evaluation;
use serde_json::{Map, Value};
use std::io::{self, Write};

pub const COLUMNS: [&str; 7] = [
    "x",
    "value",
    "log10_value",
    "uncertainty",
    "method",
    "mode",
    "flags",
];

/// Shortest round-trip text, switching to exponent form for very small or large magnitudes.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else if v == 0.0 || (1e-3..1e16).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(fmt_num(v)), Value::Number)
}

/// One output cell: text for CSV and a value for JSON.
#[derive(Debug, Clone)]
pub struct Field {
    pub text: String,
    pub json: Value,
}

impl Field {
    pub fn empty() -> Self {
        Field {
            text: String::new(),
            json: Value::Null,
        }
    }

    pub fn num(v: f64) -> Self {
        Field {
            text: fmt_num(v),
            json: num(v),
        }
    }

    pub fn opt(v: Option<f64>) -> Self {
        v.map_or_else(Field::empty, Field::num)
    }

    pub fn text(s: impl Into<String>) -> Self {
        let s = s.into();
        Field {
            json: Value::String(s.clone()),
            text: s,
        }
    }
}

/// Ordered named fields.
#[derive(Debug, Clone, Default)]
pub struct Record(pub Vec<(String, Field)>);

impl Record {
    pub fn push(&mut self, name: impl Into<String>, f: Field) {
        self.0.push((name.into(), f));
    }
}

/// A linear value, or its log10 as text when it is below the double range.
pub fn linear_field(value: f64, log10_value: f64) -> Field {
    if value == 0.0 && log10_value.is_finite() {
        Field {
            text: format!("10^{}", fmt_num(log10_value)),
            json: Value::Null,
        }
    } else {
        Field::num(value)
    }
}

pub fn mode_name(mode: LogMode) -> &'static str {
    match mode {
        LogMode::Linear => "linear",
        LogMode::LogFallback => "log_fallback",
    }
}

pub fn mode_for(log10_value: f64) -> &'static str {
    mode_name(if log10_value < LOG10_REALMIN {
        LogMode::LogFallback
    } else {
        LogMode::Linear
    })
}

/// The value and uncertainty cells of an evaluation, in log10 or linear units.
pub fn value_fields(e: &Evaluation, log: bool) -> (Field, Field, Field) {
    if log {
        (
            Field::num(e.log10_value),
            Field::num(e.log10_value),
            Field::opt(e.uncertainty_log10),
        )
    } else {
        (
            linear_field(e.value, e.log10_value),
            Field::num(e.log10_value),
            Field::opt(e.uncertainty),
        )
    }
}

pub fn eval_record(e: &Evaluation, log: bool) -> Record {
    let (value, log10, unc) = value_fields(e, log);
    let mut r = Record::default();
    r.push("x", Field::num(e.x));
    r.push("value", value);
    r.push("log10_value", log10);
    r.push("uncertainty", unc);
    r.push("method", Field::text(e.method.name()));
    r.push("mode", Field::text(mode_name(e.mode)));
    r.push("flags", Field::text(e.flags.join(";")));
    r
}

pub fn write_records<W: Write>(
    out: W,
    records: &[Record],
    header: &[String],
    json: bool,
) -> io::Result<()> {
    if json {
        let arr: Vec<Value> = records
            .iter()
            .map(|r| {
                Value::Object(
                    r.0.iter()
                        .map(|(k, f)| (k.clone(), f.json.clone()))
                        .collect::<Map<_, _>>(),
                )
            })
            .collect();
        let mut out = out;
        serde_json::to_writer_pretty(&mut out, &arr)?;
        writeln!(out)
    } else {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for r in records {
            w.write_record(r.0.iter().map(|(_, f)| f.text.as_str()))?;
        }
        w.flush()
    }
}
