//! Writers for machine-readable results and the human summary table.
//!
//! CSV files start with `#` comment lines holding the seed and the config
//! echo; floats are written with 17 significant digits so they parse back to
//! the same `f64`. JSON files wrap their payload as
//! `{"subcommand", "seed", "config", "data"}`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pbi_core::experiments::{ExperimentSummary, SummaryRow};
use serde::Serialize;

use crate::args::Format;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Output {
    dir: PathBuf,
    formats: Vec<Format>,
    config: RunConfig,
    seed: u64,
}

impl Output {
    pub fn new(config: &RunConfig, formats: &[Format], seed: u64) -> Result<Self, CliError> {
        let dir = config.out_dir();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Output { dir, formats: formats.to_vec(), config: config.clone(), seed })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn write_file(&self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_config(&self) -> Result<PathBuf, CliError> {
        self.write_file("config.txt", self.config.render().as_bytes())
    }

    fn header(&self) -> String {
        let mut s = format!("# pbi {}\n# seed = {}\n", self.config.subcommand, self.seed);
        for (k, v) in &self.config.entries {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }

    /// `<name>.csv` with the comment header, when CSV output is enabled.
    pub fn write_csv(&self, name: &str, columns: &[&str], rows: &[Vec<Cell>]) -> Result<Option<PathBuf>, CliError> {
        if !self.wants(Format::Csv) {
            return Ok(None);
        }
        let path = self.dir.join(format!("{name}.csv"));
        let mut buf = self.header().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let io = |e: csv::Error| CliError::io(&path, std::io::Error::other(e));
            w.write_record(columns).map_err(io)?;
            for row in rows {
                w.write_record(row.iter().map(Cell::render)).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
        }
        self.write_file(&format!("{name}.csv"), &buf).map(Some)
    }

    /// `<name>.json`, when JSON output is enabled.
    pub fn write_json<T: Serialize>(&self, name: &str, data: &T) -> Result<Option<PathBuf>, CliError> {
        if !self.wants(Format::Json) {
            return Ok(None);
        }
        let config: serde_json::Map<String, serde_json::Value> =
            self.config.entries.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect();
        let doc = serde_json::json!({
            "subcommand": self.config.subcommand,
            "seed": self.seed,
            "config": config,
            "data": data,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::io(self.dir.join(name), std::io::Error::other(e)))?;
        self.write_file(&format!("{name}.json"), format!("{text}\n").as_bytes()).map(Some)
    }

    pub fn write_summary(&self, name: &str, summary: &ExperimentSummary) -> Result<(), CliError> {
        let rows: Vec<Vec<Cell>> = summary
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.dgp.as_str().into(),
                    r.n.into(),
                    r.config.as_str().into(),
                    r.target.as_str().into(),
                    r.metric.as_str().into(),
                    r.estimate.into(),
                    r.mc_se.into(),
                    r.reps.into(),
                    r.paths.into(),
                ]
            })
            .collect();
        self.write_csv(name, &SUMMARY_COLUMNS, &rows)?;
        self.write_json(name, summary)?;
        Ok(())
    }
}

pub const SUMMARY_COLUMNS: [&str; 9] = ["dgp", "n", "config", "target", "metric", "estimate", "mc_se", "R", "B"];

/// Reads a summary CSV written by [`Output::write_summary`].
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let f = |i: usize| rec.get(i).unwrap_or("").to_owned();
        let num = |i: usize| f(i).parse::<f64>().map_err(|_| CliError::data(format!("{}: bad number `{}`", path.display(), f(i))));
        let int = |i: usize| f(i).parse::<usize>().map_err(|_| CliError::data(format!("{}: bad integer `{}`", path.display(), f(i))));
        rows.push(SummaryRow { dgp: f(0), n: int(1)?, config: f(2), target: f(3), metric: f(4), estimate: num(5)?, mc_se: num(6)?, reps: int(7)?, paths: int(8)? });
    }
    Ok(rows)
}

/// Fixed-width table with three decimals.
pub fn render_summary_table(summary: &ExperimentSummary) -> String {
    let header = ["dgp", "n", "config", "target", "metric", "estimate", "mc_se"];
    let body: Vec<[String; 7]> = summary
        .rows
        .iter()
        .map(|r| [r.dgp.clone(), r.n.to_string(), r.config.clone(), r.target.clone(), r.metric.clone(), format!("{:.3}", r.estimate), format!("{:.3}", r.mc_se)])
        .collect();
    render_grid(&header, &body)
}

pub fn render_grid<const K: usize>(header: &[&str; K], body: &[[String; K]]) -> String {
    let mut widths = header.map(str::len);
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    for row in body {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}
