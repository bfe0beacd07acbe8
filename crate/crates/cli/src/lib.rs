//! Study statistics over session logs and questionnaire tables.
//!
//! Every command takes comma-separated text with one header row and returns a
//! [`Report`] of `key = value` lines in a fixed order.

use std::fmt::{self, Display};

use anyhow::{bail, Context};
use bladeassist::evaluation::{
    cohens_dz, mean_sd, paired_t_test, parse_action_log, rtlx as rtlx_score, tct_summary, umux_lite, within_subject_ci,
    PairedSample, TlxResponse, UmuxResponse,
};

/// Ordered key/value output.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Report(Vec<(String, String)>);

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.0.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.0
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.0.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.0 {
            writeln!(f, "{k:<width$} = {v}")?;
        }
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// Numeric table with its header names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Parses a numeric CSV table. `columns` fixes the expected width.
pub fn read_table(text: &str, columns: Option<usize>) -> anyhow::Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers: Vec<String> = rdr.headers().context("reading header row")?.iter().map(str::to_string).collect();
    if let Some(n) = columns {
        if headers.len() != n {
            bail!("expected {n} columns, header has {}", headers.len());
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("line {line}"))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .with_context(|| format!("line {line}, column {:?}: {cell:?} is not a number", headers[j]))
            })
            .collect::<anyhow::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("no data rows");
    }
    Ok(Table { headers, rows })
}

fn paired(text: &str) -> anyhow::Result<(Table, PairedSample<f64>)> {
    let t = read_table(text, Some(2))?;
    let s = PairedSample::new(t.column(0), t.column(1))?;
    Ok((t, s))
}

/// Per-blade task completion times and totals from an action log export.
pub fn tct(text: &str) -> anyhow::Result<Report> {
    let rows = parse_action_log(text)?;
    let s = tct_summary(&rows)?;
    let mut r = Report::default();
    r.push("blades", s.blades.len());
    for b in &s.blades {
        r.push(format!("{}.tct_s", b.blade), num(b.tct_s));
        r.push(format!("{}.skipped_zone_check", b.blade), b.skipped_zone_check);
        r.push(format!("{}.skipped_thickness_check", b.blade), b.skipped_thickness_check);
    }
    r.push("total_s", num(s.total_s));
    r.push("mean_s", num(s.mean_s));
    r.push("sd_s", s.sd_s.map_or("n/a".to_string(), num));
    for (a, secs) in &s.per_action_s {
        r.push(format!("action{a}_s"), num(*secs));
    }
    Ok(r)
}

/// Two-tailed paired t-test of column A against column B.
pub fn ttest(text: &str) -> anyhow::Result<Report> {
    let (t, s) = paired(text)?;
    let res = paired_t_test(&s)?;
    let mut r = Report::default();
    r.push("n", s.len());
    for (name, col) in t.headers.iter().zip([s.a(), s.b()]) {
        let (m, sd) = mean_sd(col);
        r.push(format!("{name}.mean"), num(m));
        r.push(format!("{name}.sd"), num(sd));
    }
    r.push("t", num(res.t));
    r.push("df", res.df);
    r.push("p", num(res.p));
    r.push("dz", num(cohens_dz(&s)?));
    Ok(r)
}

/// Cohen's d_z from paired columns, or from a single column of differences.
pub fn dz(text: &str) -> anyhow::Result<Report> {
    let t = read_table(text, None)?;
    let s = match t.headers.len() {
        1 => PairedSample::new(t.column(0), vec![0.0; t.rows.len()])?,
        2 => PairedSample::new(t.column(0), t.column(1))?,
        n => bail!("expected 1 column of differences or 2 paired columns, got {n}"),
    };
    let res = paired_t_test(&s)?;
    let mut r = Report::default();
    r.push("n", s.len());
    r.push("t", num(res.t));
    r.push("dz", num(cohens_dz(&s)?));
    Ok(r)
}

fn scores(r: &mut Report, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        r.push(format!("row{}", i + 1), num(*v));
    }
    let (m, sd) = mean_sd(values);
    r.push("n", values.len());
    r.push("mean", num(m));
    r.push("sd", if values.len() > 1 { num(sd) } else { "n/a".into() });
}

/// Raw TLX per row (six subscale columns) with mean and SD.
pub fn rtlx(text: &str) -> anyhow::Result<Report> {
    let t = read_table(text, Some(6))?;
    let values = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let items: [f64; 6] = row.as_slice().try_into().expect("six columns");
            rtlx_score(&TlxResponse::from_array(items)).with_context(|| format!("row {}", i + 1))
        })
        .collect::<anyhow::Result<Vec<f64>>>()?;
    let mut r = Report::default();
    scores(&mut r, &values);
    Ok(r)
}

/// UMUX-LITE per row (PU, PEU columns) with mean and SD.
pub fn umux(text: &str) -> anyhow::Result<Report> {
    let t = read_table(text, Some(2))?;
    let values = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| umux_lite(&UmuxResponse { pu: row[0], peu: row[1] }).with_context(|| format!("row {}", i + 1)))
        .collect::<anyhow::Result<Vec<f64>>>()?;
    let mut r = Report::default();
    scores(&mut r, &values);
    Ok(r)
}

/// Within-subject confidence intervals, one column per condition.
pub fn wsci(text: &str, level: f64) -> anyhow::Result<Report> {
    let t = read_table(text, None)?;
    let cis = within_subject_ci(&t.rows, level)?;
    let mut r = Report::default();
    r.push("subjects", t.rows.len());
    r.push("level", level);
    for (name, ci) in t.headers.iter().zip(&cis) {
        r.push(format!("{name}.mean"), num(ci.mean));
        r.push(format!("{name}.half_width"), num(ci.half_width));
        r.push(format!("{name}.lower"), num(ci.mean - ci.half_width));
        r.push(format!("{name}.upper"), num(ci.mean + ci.half_width));
    }
    Ok(r)
}
