//! Iteration traces as CSV or JSON lines, and the end-of-run summary.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;
use szolp::solver::{IterationTrace, RunReport};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown format '{other}' (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

pub fn write_trace<W: Write>(rows: &[IterationTrace], format: Format, mut out: W) -> Result<(), TraceError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            for row in rows {
                serde_json::to_writer(&mut out, row).map_err(|source| TraceError::Json { line: 0, source })?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

pub fn read_trace<R: Read>(input: R, format: Format) -> Result<Vec<IterationTrace>, TraceError> {
    match format {
        Format::Csv => Ok(csv::Reader::from_reader(input)
            .deserialize()
            .collect::<Result<_, _>>()?),
        Format::Jsonl => BufReader::new(input)
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
            .map(|(i, line)| {
                serde_json::from_str(&line?).map_err(|source| TraceError::Json { line: i + 1, source })
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub termination: String,
    pub error: Option<String>,
    pub iterations: usize,
    pub eps: f64,
    pub f0: f64,
    pub max_constraint: f64,
    pub binding: Option<String>,
    pub x: Vec<f64>,
    pub samples: usize,
    pub infeasible_samples: usize,
    pub max_active: usize,
    pub descent_violations: usize,
    pub rejected_candidates: usize,
    pub degenerate_queries: usize,
    pub seconds: f64,
}

impl Summary {
    pub fn from_report(problem: &str, report: &RunReport, labels: Option<&[String]>) -> Self {
        let values = &report.state.values;
        let (binding, max_constraint) = values
            .iter()
            .enumerate()
            .skip(1)
            .fold((None, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (Some(i), v) } else { (bi, bv) });
        let binding = binding.map(|i| match labels {
            Some(names) => names[i - 1].clone(),
            None => format!("f{i}"),
        });
        Summary {
            problem: problem.to_string(),
            termination: report.termination.as_str().to_string(),
            error: report.error.as_ref().map(|e| e.to_string()),
            iterations: report.state.k,
            eps: report.state.eps,
            f0: report.f0(),
            max_constraint,
            binding,
            x: report.x().to_vec(),
            samples: report.samples(),
            infeasible_samples: report.ledger.infeasible_count(),
            max_active: report.max_active,
            descent_violations: report.descent_violations.len(),
            rejected_candidates: report.rejected_candidates,
            degenerate_queries: report.degenerate_queries,
            seconds: report.seconds,
        }
    }

    pub fn render(&self) -> String {
        let x: Vec<String> = self.x.iter().map(|v| format!("{v:.6}")).collect();
        let mut s = format!(
            "problem            {}\n\
             termination        {}\n\
             iterations         {}\n\
             final eps          {:.3e}\n\
             f0                 {:.8}\n\
             max constraint     {:.6e}{}\n\
             x                  [{}]\n\
             samples            {} ({} infeasible)\n\
             max near-active    {}\n\
             descent violations {}\n\
             rejected steps     {}\n\
             skipped queries    {}\n\
             seconds            {:.3}\n",
            self.problem,
            self.termination,
            self.iterations,
            self.eps,
            self.f0,
            self.max_constraint,
            self.binding.as_ref().map(|b| format!(" ({b})")).unwrap_or_default(),
            x.join(", "),
            self.samples,
            self.infeasible_samples,
            self.max_active,
            self.descent_violations,
            self.rejected_candidates,
            self.degenerate_queries,
            self.seconds,
        );
        if let Some(e) = &self.error {
            s.push_str(&format!("error              {e}\n"));
        }
        s
    }
}
