use std::io::{Read, Write};

use legtrunc::coeffs::{fmt_f64, parse_f64};

use crate::error::{CliError, Result};

pub const HEADER: [&str; 9] = [
    "delta",
    "h",
    "n",
    "gamma",
    "error_l2",
    "error_c",
    "card",
    "coef_err_linf",
    "wall_time",
];

/// One line of a results table. Errors are medians over seeds for random noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultsRow {
    pub delta: Option<f64>,
    pub h: Option<f64>,
    pub n: usize,
    pub gamma: f64,
    pub error_l2: f64,
    pub error_c: f64,
    pub card: usize,
    /// `max |perturbed - exact|` over the coefficients used.
    pub coef_err_linf: f64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub rows: Vec<ResultsRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(parse_f64(s)?))
    }
}

fn parse_usize(s: &str, col: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| CliError::Config(format!("bad integer '{s}' in column {col}")))
}

impl ResultsTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(HEADER)?;
        for r in &self.rows {
            out.write_record([
                opt(r.delta),
                opt(r.h),
                r.n.to_string(),
                fmt_f64(r.gamma),
                fmt_f64(r.error_l2),
                fmt_f64(r.error_c),
                r.card.to_string(),
                fmt_f64(r.coef_err_linf),
                fmt_f64(r.wall_time),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != HEADER {
            return Err(CliError::Config(format!(
                "unexpected results header '{}'",
                header.join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            rows.push(ResultsRow {
                delta: parse_opt(f(0))?,
                h: parse_opt(f(1))?,
                n: parse_usize(f(2), "n")?,
                gamma: parse_f64(f(3))?,
                error_l2: parse_f64(f(4))?,
                error_c: parse_f64(f(5))?,
                card: parse_usize(f(6), "card")?,
                coef_err_linf: parse_f64(f(7))?,
                wall_time: parse_f64(f(8))?,
            });
        }
        Ok(Self { rows })
    }
}

/// Per-seed results behind a random-noise table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRow {
    pub delta: f64,
    pub seed: u64,
    pub n: usize,
    pub gamma: f64,
    pub error_l2: f64,
    pub error_c: f64,
}

pub fn write_trials<W: Write>(trials: &[TrialRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["delta", "seed", "n", "gamma", "error_l2", "error_c"])?;
    for t in trials {
        out.write_record([
            fmt_f64(t.delta),
            t.seed.to_string(),
            t.n.to_string(),
            fmt_f64(t.gamma),
            fmt_f64(t.error_l2),
            fmt_f64(t.error_c),
        ])?;
    }
    out.flush()?;
    Ok(())
}
