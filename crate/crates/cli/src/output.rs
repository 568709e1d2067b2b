//! Tabular results and their CSV / JSON rendering.
//!
//! Floats are printed with 12 significant digits so repeated runs produce
//! identical bytes.

use serde_json::{Map, Number, Value as Json};

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Null,
    /// Fixed-length per-bit vector; CSV spreads it over `name_0, name_1, ...`.
    Nums(Vec<f64>),
    /// Variable-length index list; CSV joins it with `;`.
    Ints(Vec<i64>),
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<Option<f64>> for Value {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Value::Null, Value::Num)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<u64> for Value {
    fn from(n: u64) -> Self {
        Value::Int(n as i64)
    }
}

impl From<u32> for Value {
    fn from(n: u32) -> Self {
        Value::Int(n as i64)
    }
}

/// One output row: named fields in column order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record(pub Vec<(&'static str, Value)>);

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &'static str, value: impl Into<Value>) -> Self {
        self.0.push((key, value.into()));
        self
    }

    pub fn push(&mut self, key: &'static str, value: impl Into<Value>) {
        self.0.push((key, value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }
}

/// Output of one subcommand. `ok` is false when any row failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: &'static str,
    pub rows: Vec<Record>,
    pub ok: bool,
}

impl Report {
    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => to_csv(&self.rows),
            OutputFormat::Json => Ok(to_json(self)),
        }
    }
}

/// `x` with 12 significant digits, in fixed notation for exponents -5..12
/// and scientific otherwise. Trailing zeros are dropped.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-5..12).contains(&exp) {
        trim_zeros(format!("{x:.*}", (11 - exp) as usize))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_owned()))
    }
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn json_number(x: f64) -> Json {
    // Rounding through the 12-digit text keeps JSON and CSV in step.
    format_number(x)
        .parse::<f64>()
        .ok()
        .and_then(Number::from_f64)
        .map_or(Json::Null, Json::Number)
}

fn to_json_value(v: &Value) -> Json {
    match v {
        Value::Num(x) => json_number(*x),
        Value::Int(n) => Json::from(*n),
        Value::Text(s) => Json::from(s.as_str()),
        Value::Bool(b) => Json::Bool(*b),
        Value::Null => Json::Null,
        Value::Nums(xs) => Json::Array(xs.iter().map(|&x| json_number(x)).collect()),
        Value::Ints(ns) => Json::Array(ns.iter().map(|&n| Json::from(n)).collect()),
    }
}

pub fn to_json(report: &Report) -> String {
    let rows = report
        .rows
        .iter()
        .map(|r| {
            let obj: Map<String, Json> = r.0.iter().map(|(k, v)| (k.to_string(), to_json_value(v))).collect();
            Json::Object(obj)
        })
        .collect();
    let mut top = Map::new();
    top.insert("command".into(), Json::from(report.command));
    top.insert("ok".into(), Json::Bool(report.ok));
    top.insert("rows".into(), Json::Array(rows));
    let mut s = serde_json::to_string_pretty(&Json::Object(top)).expect("JSON values serialize");
    s.push('\n');
    s
}

/// CSV with a header row. Vector fields take as many columns as their
/// longest instance; shorter or missing ones leave cells empty.
pub fn to_csv(rows: &[Record]) -> Result<String> {
    let Some(first) = rows.first() else {
        return Ok(String::new());
    };
    let widths: Vec<usize> = first
        .0
        .iter()
        .map(|(key, _)| {
            rows.iter()
                .filter_map(|r| match r.get(key) {
                    Some(Value::Nums(xs)) => Some(xs.len()),
                    _ => None,
                })
                .max()
                .unwrap_or(0)
        })
        .collect();
    let is_vector: Vec<bool> = first
        .0
        .iter()
        .map(|(key, _)| rows.iter().any(|r| matches!(r.get(key), Some(Value::Nums(_)))))
        .collect();

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = Vec::new();
    for (i, (key, _)) in first.0.iter().enumerate() {
        if is_vector[i] {
            header.extend((0..widths[i]).map(|b| format!("{key}_{b}")));
        } else {
            header.push(key.to_string());
        }
    }
    w.write_record(&header)?;
    for row in rows {
        let mut cells = Vec::with_capacity(header.len());
        for (i, (key, _)) in first.0.iter().enumerate() {
            let value = row.get(key).unwrap_or(&Value::Null);
            if is_vector[i] {
                let xs: &[f64] = match value {
                    Value::Nums(xs) => xs,
                    _ => &[],
                };
                cells.extend((0..widths[i]).map(|b| xs.get(b).map_or(String::new(), |&x| format_number(x))));
            } else {
                cells.push(csv_cell(value));
            }
        }
        w.write_record(&cells)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Num(x) => format_number(*x),
        Value::Int(n) => n.to_string(),
        Value::Text(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Null => String::new(),
        Value::Nums(xs) => xs.iter().map(|&x| format_number(x)).collect::<Vec<_>>().join(";"),
        Value::Ints(ns) => ns.iter().map(i64::to_string).collect::<Vec<_>>().join(";"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(30.0), "30");
        assert_eq!(format_number(2.75034211032015), "2.75034211032");
        assert_eq!(format_number(10922.5), "10922.5");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(1.0e-7), "1e-7");
        assert_eq!(format_number(-1.234_567_890_123_4e-9), "-1.23456789012e-9");
        assert_eq!(format_number(4.294_836_225e12), "4.294836225e12");
        assert_eq!(format_number(999_999_999_999.6), "1e12");
        assert_eq!(format_number(0.000_012_345), "0.000012345");
        assert_eq!(format_number(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_spreads_vectors_and_quotes_text() {
        let rows = vec![
            Record::new()
                .with("x", 1.5)
                .with("note", "a, b")
                .with("delta", Value::Nums(vec![0.0, 2.0])),
            Record::new()
                .with("x", Value::Null)
                .with("note", "ok")
                .with("delta", Value::Null),
        ];
        let csv = to_csv(&rows).unwrap();
        assert_eq!(csv, "x,note,delta_0,delta_1\n1.5,\"a, b\",0,2\n,ok,,\n");
    }

    #[test]
    fn json_rounds_like_csv_and_maps_non_finite_to_null() {
        let report = Report {
            command: "solve",
            rows: vec![Record::new().with("a", 2.75034211032015).with("b", f64::INFINITY)],
            ok: true,
        };
        let s = to_json(&report);
        assert!(s.contains("\"a\": 2.75034211032"));
        assert!(s.contains("\"b\": null"));
        assert!(s.find("\"command\"").unwrap() < s.find("\"rows\"").unwrap());
    }
}
