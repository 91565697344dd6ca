//! JSON envelope and CSV tables.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use qruns::mc::format_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// One cell of a CSV row.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Int(u64),
    Num(f64),
    Text(String),
    Flag(bool),
    Empty,
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as u64)
    }
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Int(v)
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Num(v)
    }
}

impl From<Option<f64>> for Field {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Field::Empty, Field::Num)
    }
}

impl From<bool> for Field {
    fn from(v: bool) -> Self {
        Field::Flag(v)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_string())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Int(v) => v.to_string(),
            Field::Num(v) => format_number(*v),
            Field::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Field::Flag(b) => b.to_string(),
            Field::Empty => String::new(),
        }
    }
}

/// A CSV table with a header row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Field::render).collect();
            writeln!(out, "{}", cells.join(",")).expect("writing to a String");
        }
        out
    }
}

/// What a subcommand produced: a JSON payload and the equivalent table.
#[derive(Debug, Clone)]
pub struct Report {
    pub seed: Option<u64>,
    pub payload: Value,
    pub table: Table,
}

impl Report {
    pub fn new(payload: impl Serialize, table: Table) -> Self {
        Report {
            seed: None,
            payload: serde_json::to_value(payload).expect("payload serializes"),
            table,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.table.to_csv(),
            Format::Json => {
                let doc = json!({
                    "metadata": {
                        "tool": "qruns",
                        "version": env!("CARGO_PKG_VERSION"),
                        "seed": self.seed,
                    },
                    "payload": self.payload,
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("document serializes");
                s.push('\n');
                s
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rendering() {
        let mut t = Table::new(&["a", "b", "c", "d"]);
        t.push(vec![
            1usize.into(),
            0.1.into(),
            Field::Num(f64::NAN),
            "x,y".into(),
        ]);
        assert_eq!(t.to_csv(), "a,b,c,d\n1,0.1,,\"x,y\"\n");
        let mut t = Table::new(&["v"]);
        t.push(vec![4.440892098500626e-16.into()]);
        assert_eq!(t.to_csv(), "v\n4.440892098500626e-16\n");
    }

    #[test]
    fn json_envelope() {
        let r = Report::new(json!({"v": f64::NAN, "w": 0.1}), Table::new(&["v"])).with_seed(3);
        let doc: Value = serde_json::from_str(&r.render(Format::Json)).unwrap();
        assert_eq!(doc["metadata"]["seed"], 3);
        assert_eq!(doc["metadata"]["tool"], "qruns");
        assert!(doc["payload"]["v"].is_null());
        assert_eq!(doc["payload"]["w"], 0.1);
    }
}
