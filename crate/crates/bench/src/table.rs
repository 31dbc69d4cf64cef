//! Comparison tables: dataset rows against method columns.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use scoredim_core::{Error, Result};

use crate::plan::{io_error, run_plan, ExperimentPlan, PlanOutcome, RunOptions};

/// Token printed for a failed cell.
pub const ERROR_TOKEN: &str = "ERR";
/// Token printed for a cell that was not run.
pub const MISSING_TOKEN: &str = "-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Int(usize),
    Real(f64),
    Text(String),
    Missing,
    Error(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Real(v) => write!(f, "{v:.2}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Missing => f.write_str(MISSING_TOKEN),
            Cell::Error(_) => f.write_str(ERROR_TOKEN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Cell in the row whose first cell prints as `row`.
    pub fn get(&self, row: &str, column: &str) -> Option<&Cell> {
        let c = self.column(column)?;
        self.rows.iter().find(|r| r.first().is_some_and(|x| x.to_string() == row)).map(|r| &r[c])
    }

    pub fn to_csv(&self) -> String {
        let quote = |s: String| if s.contains([',', '"', '\n']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s };
        let mut out = self.header.iter().cloned().map(quote).collect::<Vec<_>>().join(",") + "\n";
        for row in &self.rows {
            out += &(row.iter().map(|c| quote(c.to_string())).collect::<Vec<_>>().join(",") + "\n");
        }
        out
    }

    /// Right-aligned columns, first column left-aligned.
    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = std::iter::once(self.header.clone())
            .chain(self.rows.iter().map(|r| r.iter().map(ToString::to_string).collect()))
            .collect();
        let widths: Vec<usize> =
            (0..self.header.len()).map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            out += line.join("  ").trim_end();
            out.push('\n');
        }
        out
    }

    /// Writes `table.csv` and `table.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        for (name, body) in [("table.csv", self.to_csv()), ("table.txt", self.to_text())] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| io_error(&path, e))?;
        }
        Ok(())
    }

    /// Rows become columns; the header's first entry labels the new first column.
    pub fn transposed(&self, corner: &str) -> Table {
        let header = std::iter::once(corner.to_string())
            .chain(self.rows.iter().map(|r| r[0].to_string()))
            .collect();
        let rows = (1..self.header.len())
            .map(|c| std::iter::once(Cell::Text(self.header[c].clone())).chain(self.rows.iter().map(|r| r[c].clone())).collect())
            .collect();
        Table { header, rows }
    }
}

/// A table plus the outcomes it was built from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub table: Table,
    pub outcomes: Vec<PlanOutcome>,
}

fn baseline_cell(outcome: &PlanOutcome, label: &str, integer: bool) -> Cell {
    match outcome.baselines.get(label) {
        Some(Ok(v)) if integer => Cell::Int(*v as usize),
        Some(Ok(v)) => Cell::Real(*v),
        Some(Err(e)) => Cell::Error(e.clone()),
        None => Cell::Missing,
    }
}

/// Builds the `dataset, truth, ours, <baselines…>` table from outcomes. The
/// baseline columns appear in the order they are first listed by a plan.
pub fn comparison_table(plans: &[ExperimentPlan], outcomes: &[std::result::Result<PlanOutcome, String>]) -> Table {
    let mut columns: Vec<(String, bool)> = Vec::new();
    for b in plans.iter().flat_map(|p| &p.baselines) {
        if !columns.iter().any(|(l, _)| *l == b.label()) {
            columns.push((b.label(), b.is_integer()));
        }
    }
    let mut header = vec!["dataset".to_string(), "truth".into(), "ours".into()];
    header.extend(columns.iter().map(|(l, _)| l.clone()));
    let rows = plans
        .iter()
        .zip(outcomes)
        .map(|(plan, outcome)| {
            let mut row = vec![Cell::Text(plan.name.clone())];
            match outcome {
                Ok(o) => {
                    row.push(o.true_dim.map_or(Cell::Missing, Cell::Int));
                    row.push(match (&o.report, &o.diffusion_error) {
                        (Some(r), _) => Cell::Int(r.aggregate),
                        (None, Some(e)) => Cell::Error(e.clone()),
                        (None, None) => Cell::Missing,
                    });
                    row.extend(columns.iter().map(|(l, int)| baseline_cell(o, l, *int)));
                }
                Err(e) => row.extend(std::iter::repeat(Cell::Error(e.clone())).take(header.len() - 1)),
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// Runs plans in parallel, each on its own seed. Errors become messages.
pub fn run_plans(plans: &[ExperimentPlan], opts: &RunOptions) -> Result<Vec<std::result::Result<PlanOutcome, String>>> {
    let mut names: Vec<&str> = plans.iter().map(|p| p.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate plan name {:?}", w[0])));
    }
    Ok(plans
        .par_iter()
        .map(|p| {
            run_plan(p, opts).map_err(|e| {
                log::warn!("{}: {e}", p.name);
                e.to_string()
            })
        })
        .collect())
}

/// Runs every plan and tabulates the results. A failing plan fills its row
/// with error cells; the run continues.
pub fn run_table_benchmark(plans: &[ExperimentPlan], opts: &RunOptions) -> Result<ComparisonTable> {
    let results = run_plans(plans, opts)?;
    let table = comparison_table(plans, &results);
    if let Some(dir) = &opts.out_dir {
        table.write(dir)?;
    }
    Ok(ComparisonTable { table, outcomes: results.into_iter().filter_map(std::result::Result::ok).collect() })
}
