//! Report tables rendered as CSV (with a provenance comment line) or JSON.

use super::config::{OutputFormat, RunConfig};
use crate::{Error, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::io::Write;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    /// Binary64 values get 17 significant digits so they round-trip.
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(v) if !v.is_finite() => Value::String(v.to_string()),
            Cell::Empty => Value::Null,
            other => serde_json::to_value(other).expect("cell serializes"),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v.into())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, cfg: &RunConfig, out: W) -> Result<()> {
        match cfg.format {
            OutputFormat::Csv => self.write_csv(cfg, out),
            OutputFormat::Json => self.write_json(cfg, out),
        }
    }

    fn write_csv<W: Write>(&self, cfg: &RunConfig, mut out: W) -> Result<()> {
        writeln!(out, "{}", provenance(cfg))?;
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.into());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_json<W: Write>(&self, cfg: &RunConfig, mut out: W) -> Result<()> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                Value::Object(obj)
            })
            .collect();
        let doc = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "command": cfg.command,
            "config_sha256": cfg.hash(),
            "rows": rows,
        });
        serde_json::to_writer_pretty(&mut out, &doc)?;
        writeln!(out)?;
        Ok(())
    }
}

/// `# diamond-moments <version> command=<cmd> config_sha256=<hex>`
pub fn provenance(cfg: &RunConfig) -> String {
    format!(
        "# {} {} command={} config_sha256={}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        cfg.command,
        cfg.hash()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::{FileConfig, Overrides};

    fn cfg(format: OutputFormat) -> RunConfig {
        let o = Overrides { format: Some(format), ..Default::default() };
        RunConfig::resolve("constants", FileConfig::default(), &o).unwrap()
    }

    fn table() -> Table {
        let mut t = Table::new(["name", "value", "ok"]);
        t.push(vec!["a,b".into(), 0.1.into(), true.into()]);
        t.push(vec!["c".into(), Cell::Empty, false.into()]);
        t
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        table().write(&cfg(OutputFormat::Csv), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# diamond-moments "));
        assert_eq!(lines[1], "name,value,ok");
        assert_eq!(lines[2], "\"a,b\",1.0000000000000001e-1,true");
        assert_eq!(lines[3], "c,,false");
        let parsed: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(parsed, 0.1);
    }

    #[test]
    fn json_layout() {
        let mut buf = Vec::new();
        table().write(&cfg(OutputFormat::Json), &mut buf).unwrap();
        let v: Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["rows"][0]["value"], json!(0.1));
        assert_eq!(v["rows"][1]["value"], Value::Null);
        assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64);
    }
}
