//! Questionnaire scoring, paired comparisons and task-completion-time summaries.
//!
//! Everything except the log summary is generic over [`Scalar`]; the
//! distribution functions carry their own incomplete-beta and log-gamma
//! implementations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{field} = {value} outside [{lo}, {hi}]")]
    OutOfRange { field: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("condition lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sample has zero variance")]
    Degenerate,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("incomplete matrix: row {row} has {found} values, expected {expected}")]
    Incomplete { row: usize, found: usize, expected: usize },
    #[error("confidence level {0} must lie in (0, 1)")]
    InvalidLevel(f64),
    #[error("log line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },
}

fn check_range<T: Scalar>(field: &'static str, v: T, lo: f64, hi: f64) -> Result<(), EvalError> {
    let x = crate::scalar::to_f64(v);
    if !(lo..=hi).contains(&x) {
        return Err(EvalError::OutOfRange { field, value: x, lo, hi });
    }
    Ok(())
}

/// NASA-TLX subscale ratings, each 0–100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlxResponse<T> {
    pub mental: T,
    pub physical: T,
    pub temporal: T,
    pub performance: T,
    pub effort: T,
    pub frustration: T,
}

impl<T: Scalar> TlxResponse<T> {
    pub fn from_array(v: [T; 6]) -> Self {
        TlxResponse { mental: v[0], physical: v[1], temporal: v[2], performance: v[3], effort: v[4], frustration: v[5] }
    }

    fn items(&self) -> [(&'static str, T); 6] {
        [
            ("mental", self.mental),
            ("physical", self.physical),
            ("temporal", self.temporal),
            ("performance", self.performance),
            ("effort", self.effort),
            ("frustration", self.frustration),
        ]
    }
}

/// Raw (unweighted) TLX: the mean of the six subscales.
pub fn rtlx<T: Scalar>(r: &TlxResponse<T>) -> Result<T, EvalError> {
    let mut sum = T::zero();
    for (name, v) in r.items() {
        check_range(name, v, 0.0, 100.0)?;
        sum += v;
    }
    Ok(sum / lit(6.0))
}

/// UMUX-LITE items on a 1–7 scale (averages allowed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UmuxResponse<T> {
    pub pu: T,
    pub peu: T,
}

/// `((pu − 1) + (peu − 1)) / 12 · 100`
pub fn umux_lite<T: Scalar>(r: &UmuxResponse<T>) -> Result<T, EvalError> {
    check_range("pu", r.pu, 1.0, 7.0)?;
    check_range("peu", r.peu, 1.0, 7.0)?;
    Ok((r.pu - T::one() + r.peu - T::one()) / lit(12.0) * lit(100.0))
}

/// Per-subject measurements under two conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample<T> {
    a: Vec<T>,
    b: Vec<T>,
}

impl<T: Scalar> PairedSample<T> {
    pub fn new(a: Vec<T>, b: Vec<T>) -> Result<Self, EvalError> {
        if a.len() != b.len() {
            return Err(EvalError::LengthMismatch(a.len(), b.len()));
        }
        if a.len() < 2 {
            return Err(EvalError::TooFewSamples { needed: 2, found: a.len() });
        }
        if a.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        Ok(PairedSample { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn a(&self) -> &[T] {
        &self.a
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn swapped(&self) -> Self {
        PairedSample { a: self.b.clone(), b: self.a.clone() }
    }

    pub fn differences(&self) -> Vec<T> {
        self.a.iter().zip(&self.b).map(|(&x, &y)| x - y).collect()
    }

    /// Mean and sample standard deviation (n − 1) of the differences.
    fn diff_stats(&self) -> Result<(T, T), EvalError> {
        let d = self.differences();
        let (mean, sd) = mean_sd(&d);
        if !(sd > T::zero()) {
            return Err(EvalError::Degenerate);
        }
        Ok((mean, sd))
    }
}

/// Mean and n − 1 standard deviation.
pub fn mean_sd<T: Scalar>(x: &[T]) -> (T, T) {
    let n: T = lit(x.len() as f64);
    let mean = x.iter().fold(T::zero(), |a, &v| a + v) / n;
    let ss = x.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean));
    (mean, (ss / (n - T::one())).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest<T> {
    pub t: T,
    pub df: usize,
    /// Two-tailed p-value.
    pub p: T,
}

pub fn paired_t_test<T: Scalar>(s: &PairedSample<T>) -> Result<TTest<T>, EvalError> {
    let (mean, sd) = s.diff_stats()?;
    let n: T = lit(s.len() as f64);
    let t = mean * n.sqrt() / sd;
    let df = s.len() - 1;
    Ok(TTest { t, df, p: student_t_two_tailed(t, lit(df as f64)) })
}

/// Standardized mean difference of paired samples, `mean(d) / sd(d)`.
pub fn cohens_dz<T: Scalar>(s: &PairedSample<T>) -> Result<T, EvalError> {
    let (mean, sd) = s.diff_stats()?;
    Ok(mean / sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCi<T> {
    pub mean: T,
    pub half_width: T,
}

/// Within-subject confidence intervals: subject offsets are removed by
/// normalizing each row to the grand mean, and the per-condition standard
/// error is corrected by `√(J / (J − 1))` for `J` conditions.
pub fn within_subject_ci<T: Scalar>(matrix: &[Vec<T>], level: T) -> Result<Vec<ConditionCi<T>>, EvalError> {
    let lv = crate::scalar::to_f64(level);
    if !(lv > 0.0 && lv < 1.0) {
        return Err(EvalError::InvalidLevel(lv));
    }
    let n = matrix.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples { needed: 2, found: n });
    }
    let j = matrix[0].len();
    if j < 2 {
        return Err(EvalError::TooFewSamples { needed: 2, found: j });
    }
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != j {
            return Err(EvalError::Incomplete { row, found: r.len(), expected: j });
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(EvalError::NonFinite);
        }
    }
    let (nt, jt): (T, T) = (lit(n as f64), lit(j as f64));
    let row_means: Vec<T> = matrix.iter().map(|r| r.iter().fold(T::zero(), |a, &v| a + v) / jt).collect();
    let grand = row_means.iter().fold(T::zero(), |a, &v| a + v) / nt;
    let t_crit = student_t_critical(level, lit((n - 1) as f64));
    let correction = (jt / (jt - T::one())).sqrt();
    Ok((0..j)
        .map(|c| {
            let y: Vec<T> = matrix.iter().zip(&row_means).map(|(r, &m)| r[c] - m + grand).collect();
            let (mean, sd) = mean_sd(&y);
            let se = sd / nt.sqrt() * correction;
            ConditionCi { mean, half_width: t_crit * se }
        })
        .collect())
}

/// Lanczos approximation (g = 7, 9 terms) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < lit(0.5) {
        // Reflection.
        let pi = T::pi();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut a: T = lit(C[0]);
    let t = x + lit(G + 0.5);
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += lit::<T>(c) / (x + lit(i as f64));
    }
    lit::<T>(0.5) * (T::two_pi()).ln() + (x + lit(0.5)) * t.ln() - t + a.ln()
}

/// Lentz convergence threshold: a few ulps, well inside the 1e-10 target.
fn cf_tolerance<T: Scalar>() -> T {
    T::default_epsilon() * lit(4.0)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf<T: Scalar>(a: T, b: T, x: T) -> T {
    let tiny: T = lit(1e-30);
    let tol = cf_tolerance::<T>();
    let one = T::one();
    let (qab, qap, qam) = (a + b, a + one, a - one);
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=1000 {
        let m: T = lit(m as f64);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h *= del;
        if (del - one).abs() < tol {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta<T: Scalar>(a: T, b: T, x: T) -> T {
    let one = T::one();
    if x <= T::zero() {
        return T::zero();
    }
    if x >= one {
        return one;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (one - x).ln();
    let front = ln_front.exp();
    if x < (a + one) / (a + b + lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        one - front * beta_cf(b, a, one - x) / b
    }
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed<T: Scalar>(t: T, df: T) -> T {
    let x = df / (df + t * t);
    reg_inc_beta(df / lit(2.0), lit(0.5), x).min(T::one()).max(T::zero())
}

/// Two-sided critical value: `t` with `P(|T| ≥ t) = 1 − level`.
pub fn student_t_critical<T: Scalar>(level: T, df: T) -> T {
    let alpha = T::one() - level;
    let mut hi = T::one();
    while student_t_two_tailed(hi, df) > alpha {
        hi *= lit(2.0);
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) / lit(2.0);
        if student_t_two_tailed(mid, df) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::default_epsilon() * hi {
            break;
        }
    }
    (lo + hi) / lit(2.0)
}

/// One action interval of the session log export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub blade: String,
    pub action: u8,
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

pub const LOG_HEADER: &str = "blade,action,label,start_s,end_s";

/// CSV export with the [`LOG_HEADER`] header row.
pub fn format_action_log(rows: &[ActionRecord]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(LOG_HEADER.split(',')).expect("in-memory csv");
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

pub fn parse_action_log(text: &str) -> Result<Vec<ActionRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| EvalError::MalformedLog { line: 1, reason: e.to_string() })?;
    if headers.iter().collect::<Vec<_>>().join(",") != LOG_HEADER {
        return Err(EvalError::MalformedLog { line: 1, reason: format!("header must be {LOG_HEADER:?}") });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<ActionRecord>().enumerate() {
        let line = i + 2;
        let r = rec.map_err(|e| EvalError::MalformedLog { line, reason: e.to_string() })?;
        if !(1..=6).contains(&r.action) {
            return Err(EvalError::MalformedLog { line, reason: format!("action {} not in 1..=6", r.action) });
        }
        if !r.start_s.is_finite() || !r.end_s.is_finite() || r.end_s < r.start_s {
            return Err(EvalError::MalformedLog { line, reason: format!("bad interval [{}, {}]", r.start_s, r.end_s) });
        }
        if r.blade.is_empty() {
            return Err(EvalError::MalformedLog { line, reason: "empty blade".into() });
        }
        rows.push(r);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BladeTct {
    pub blade: String,
    pub tct_s: f64,
    pub skipped_zone_check: bool,
    pub skipped_thickness_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TctSummary {
    /// In order of first appearance in the log.
    pub blades: Vec<BladeTct>,
    pub total_s: f64,
    pub mean_s: f64,
    /// `None` for fewer than two blades.
    pub sd_s: Option<f64>,
    pub per_action_s: BTreeMap<u8, f64>,
}

/// Per-blade TCT (last end − first start), totals and action 3/4 skip flags.
pub fn tct_summary(rows: &[ActionRecord]) -> Result<TctSummary, EvalError> {
    let mut order: Vec<&str> = Vec::new();
    let mut span: BTreeMap<&str, (f64, f64, bool, bool)> = BTreeMap::new();
    let mut per_action: BTreeMap<u8, f64> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if !(1..=6).contains(&r.action) || !(r.end_s >= r.start_s) || !r.start_s.is_finite() || !r.end_s.is_finite() {
            return Err(EvalError::MalformedLog { line: i + 2, reason: format!("bad record {r:?}") });
        }
        let e = span.entry(&r.blade).or_insert_with(|| {
            order.push(&r.blade);
            (f64::INFINITY, f64::NEG_INFINITY, false, false)
        });
        e.0 = e.0.min(r.start_s);
        e.1 = e.1.max(r.end_s);
        e.2 |= r.action == 3;
        e.3 |= r.action == 4;
        *per_action.entry(r.action).or_insert(0.0) += r.end_s - r.start_s;
    }
    let blades: Vec<BladeTct> = order
        .iter()
        .map(|b| {
            let (s, e, a3, a4) = span[b];
            BladeTct { blade: b.to_string(), tct_s: e - s, skipped_zone_check: !a3, skipped_thickness_check: !a4 }
        })
        .collect();
    let tcts: Vec<f64> = blades.iter().map(|b| b.tct_s).collect();
    let total_s: f64 = tcts.iter().sum();
    let (mean_s, sd_s) = match tcts.len() {
        0 => (0.0, None),
        1 => (total_s, None),
        _ => {
            let (m, s) = mean_sd(&tcts);
            (m, Some(s))
        }
    };
    Ok(TctSummary { blades, total_s, mean_s, sd_s, per_action_s: per_action })
}
