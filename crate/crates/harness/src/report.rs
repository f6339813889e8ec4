//! Result rows, CSV emission/parsing, and grouped summaries.
//!
//! Numbers are written with 17 significant digits (`{:.16e}`), which
//! round-trips every finite `f64` exactly, and lines end in LF on every
//! platform, so equal row sets produce byte-identical files.  The
//! `wall_time` column is part of the fixed header but always left empty:
//! timings are inherently non-reproducible and would break the contract
//! that output bytes are a pure function of the configuration.
//!
//! Summaries group rows by (experiment, method, d, n, m, axis value) and
//! report lower-median and interquartile range per metric (nearest-rank
//! quartiles), the fraction of rank-checked rows that passed, and — for
//! non-baseline methods — the ratio of the group's moment-error medians to
//! the Monte Carlo group at the same grid point.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// One (method, grid point, trial) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub d: usize,
    pub n: usize,
    /// Total feature count of the kernel, when finite.
    pub m: Option<usize>,
    /// Seed of the per-trial model draw (reproduces the trial in isolation).
    pub trial_seed: u64,
    /// Condition number or alpha for sweep experiments.
    pub cond_or_alpha: Option<f64>,
    pub mse_first: f64,
    pub mse_second: f64,
    pub est_avg_variance: f64,
    pub mmd_sq: Option<f64>,
    pub ksd_sq: Option<f64>,
    pub residual: Option<f64>,
    pub rank_ok: Option<bool>,
    pub iterations: Option<usize>,
    /// Never serialized with a value; see the module docs.
    pub wall_time: Option<f64>,
}

/// Fixed results header; column order is part of the output contract.
pub const CSV_HEADER: &str = "experiment,method,d,n,m,trial_seed,cond_or_alpha,\
mse_first,mse_second,est_avg_variance,mmd_sq,ksd_sq,residual,rank_ok,iterations,wall_time";

/// Serialization failures with path context.
#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed results CSV: {0}")]
    Malformed(String),
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_bool(v: Option<bool>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_line(row: &ResultRow) -> String {
    let mut line = String::new();
    let _ = write!(
        line,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        row.experiment,
        row.method,
        row.d,
        row.n,
        fmt_opt_usize(row.m),
        row.trial_seed,
        fmt_opt_f64(row.cond_or_alpha),
        fmt_f64(row.mse_first),
        fmt_f64(row.mse_second),
        fmt_f64(row.est_avg_variance),
        fmt_opt_f64(row.mmd_sq),
        fmt_opt_f64(row.ksd_sq),
        fmt_opt_f64(row.residual),
        fmt_opt_bool(row.rank_ok),
        fmt_opt_usize(row.iterations),
        fmt_opt_f64(row.wall_time),
    );
    line
}

/// Render rows to CSV text (header + one line per row, LF endings).
pub fn render_csv(rows: &[ResultRow]) -> String {
    let mut text = String::with_capacity(64 + rows.len() * 256);
    text.push_str(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&csv_line(row));
        text.push('\n');
    }
    text
}

fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    let io_err = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    out.write_all(text.as_bytes()).map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// Write the results CSV.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), ReportError> {
    write_text(path, &render_csv(rows))
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: usize, name: &str) -> Result<T, ReportError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| {
        ReportError::Malformed(format!("line {line}, field `{name}`: cannot parse {raw:?}: {e}"))
    })
}

fn parse_opt<T: std::str::FromStr>(
    raw: &str,
    line: usize,
    name: &str,
) -> Result<Option<T>, ReportError>
where
    T::Err: std::fmt::Display,
{
    if raw.is_empty() {
        Ok(None)
    } else {
        parse_field(raw, line, name).map(Some)
    }
}

/// Parse CSV text produced by [`render_csv`] back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, ReportError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ReportError::Malformed("empty input".into()))?;
    if header != CSV_HEADER {
        return Err(ReportError::Malformed(format!(
            "unexpected header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for (index, line) in lines.enumerate() {
        let line_no = index + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 16 {
            return Err(ReportError::Malformed(format!(
                "line {line_no}: expected 16 fields, got {}",
                fields.len()
            )));
        }
        rows.push(ResultRow {
            experiment: fields[0].to_string(),
            method: fields[1].to_string(),
            d: parse_field(fields[2], line_no, "d")?,
            n: parse_field(fields[3], line_no, "n")?,
            m: parse_opt(fields[4], line_no, "m")?,
            trial_seed: parse_field(fields[5], line_no, "trial_seed")?,
            cond_or_alpha: parse_opt(fields[6], line_no, "cond_or_alpha")?,
            mse_first: parse_field(fields[7], line_no, "mse_first")?,
            mse_second: parse_field(fields[8], line_no, "mse_second")?,
            est_avg_variance: parse_field(fields[9], line_no, "est_avg_variance")?,
            mmd_sq: parse_opt(fields[10], line_no, "mmd_sq")?,
            ksd_sq: parse_opt(fields[11], line_no, "ksd_sq")?,
            residual: parse_opt(fields[12], line_no, "residual")?,
            rank_ok: parse_opt(fields[13], line_no, "rank_ok")?,
            iterations: parse_opt(fields[14], line_no, "iterations")?,
            wall_time: parse_opt(fields[15], line_no, "wall_time")?,
        });
    }
    Ok(rows)
}

/// Lower median of an unsorted, non-empty slice.
fn lower_median(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

/// (median, interquartile range) by nearest-rank (lower) quartiles.
fn median_iqr(values: &mut Vec<f64>) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let q1 = values[(values.len() - 1) / 4];
    let q3 = values[(values.len() - 1) * 3 / 4];
    Some((lower_median(values), q3 - q1))
}

/// Aggregates for one (experiment, method, grid point) group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub method: String,
    pub d: usize,
    pub n: usize,
    pub m: Option<usize>,
    pub cond_or_alpha: Option<f64>,
    pub rows: usize,
    pub mse_first: Option<(f64, f64)>,
    pub mse_second: Option<(f64, f64)>,
    pub est_avg_variance: Option<(f64, f64)>,
    pub mmd_sq: Option<(f64, f64)>,
    pub ksd_sq: Option<(f64, f64)>,
    pub residual: Option<(f64, f64)>,
    /// Fraction of rank-checked rows with `rank_ok = true`.
    pub rank_ok_fraction: Option<f64>,
    /// Group moment-error medians over the Monte Carlo medians at the same
    /// (experiment, d, n, axis) grid point.
    pub rel_mse_first_vs_mc: Option<f64>,
    pub rel_mse_second_vs_mc: Option<f64>,
}

/// Fixed summary header.
pub const SUMMARY_HEADER: &str = "experiment,method,d,n,m,cond_or_alpha,rows,\
mse_first_median,mse_first_iqr,mse_second_median,mse_second_iqr,\
est_avg_variance_median,est_avg_variance_iqr,mmd_sq_median,mmd_sq_iqr,\
ksd_sq_median,ksd_sq_iqr,residual_median,residual_iqr,rank_ok_fraction,\
rel_mse_first_vs_mc,rel_mse_second_vs_mc";

/// Group key; axis values are non-negative in every experiment, so their bit
/// patterns order correctly.
type GroupKey = (String, String, usize, usize, Option<usize>, Option<u64>);

fn group_key(row: &ResultRow) -> GroupKey {
    (
        row.experiment.clone(),
        row.method.clone(),
        row.d,
        row.n,
        row.m,
        row.cond_or_alpha.map(f64::to_bits),
    )
}

/// Reduce rows to per-group medians, spreads, and Monte Carlo ratios.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(group_key(row)).or_default().push(row);
    }

    let mut summaries = Vec::with_capacity(groups.len());
    for ((experiment, method, d, n, m, axis_bits), members) in &groups {
        let collect = |f: fn(&ResultRow) -> Option<f64>| -> Option<(f64, f64)> {
            let mut values: Vec<f64> = members.iter().filter_map(|r| f(r)).collect();
            median_iqr(&mut values)
        };
        let ranked: Vec<bool> = members.iter().filter_map(|r| r.rank_ok).collect();
        summaries.push(SummaryRow {
            experiment: experiment.clone(),
            method: method.clone(),
            d: *d,
            n: *n,
            m: *m,
            cond_or_alpha: axis_bits.map(f64::from_bits),
            rows: members.len(),
            mse_first: collect(|r| Some(r.mse_first)),
            mse_second: collect(|r| Some(r.mse_second)),
            est_avg_variance: collect(|r| Some(r.est_avg_variance)),
            mmd_sq: collect(|r| r.mmd_sq),
            ksd_sq: collect(|r| r.ksd_sq),
            residual: collect(|r| r.residual),
            rank_ok_fraction: if ranked.is_empty() {
                None
            } else {
                Some(ranked.iter().filter(|ok| **ok).count() as f64 / ranked.len() as f64)
            },
            rel_mse_first_vs_mc: None,
            rel_mse_second_vs_mc: None,
        });
    }

    // Second pass: ratio of medians against the Monte Carlo group at the
    // same grid point.
    let mc: BTreeMap<(String, usize, usize, Option<u64>), (f64, f64)> = summaries
        .iter()
        .filter(|s| s.method == "monte_carlo")
        .filter_map(|s| {
            let key = (
                s.experiment.clone(),
                s.d,
                s.n,
                s.cond_or_alpha.map(f64::to_bits),
            );
            match (s.mse_first, s.mse_second) {
                (Some((m1, _)), Some((m2, _))) => Some((key, (m1, m2))),
                _ => None,
            }
        })
        .collect();
    for s in &mut summaries {
        if s.method == "monte_carlo" {
            continue;
        }
        let key = (
            s.experiment.clone(),
            s.d,
            s.n,
            s.cond_or_alpha.map(f64::to_bits),
        );
        if let Some((mc1, mc2)) = mc.get(&key) {
            if let Some((m1, _)) = s.mse_first {
                if *mc1 > 0.0 {
                    s.rel_mse_first_vs_mc = Some(m1 / mc1);
                }
            }
            if let Some((m2, _)) = s.mse_second {
                if *mc2 > 0.0 {
                    s.rel_mse_second_vs_mc = Some(m2 / mc2);
                }
            }
        }
    }
    summaries
}

fn fmt_pair(pair: Option<(f64, f64)>) -> (String, String) {
    match pair {
        Some((median, iqr)) => (fmt_f64(median), fmt_f64(iqr)),
        None => (String::new(), String::new()),
    }
}

/// Render the grouped summary CSV.
pub fn render_summary(rows: &[ResultRow]) -> String {
    let mut text = String::new();
    text.push_str(SUMMARY_HEADER);
    text.push('\n');
    for s in summarize(rows) {
        let (mse1_m, mse1_i) = fmt_pair(s.mse_first);
        let (mse2_m, mse2_i) = fmt_pair(s.mse_second);
        let (var_m, var_i) = fmt_pair(s.est_avg_variance);
        let (mmd_m, mmd_i) = fmt_pair(s.mmd_sq);
        let (ksd_m, ksd_i) = fmt_pair(s.ksd_sq);
        let (res_m, res_i) = fmt_pair(s.residual);
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.experiment,
            s.method,
            s.d,
            s.n,
            fmt_opt_usize(s.m),
            fmt_opt_f64(s.cond_or_alpha),
            s.rows,
            mse1_m,
            mse1_i,
            mse2_m,
            mse2_i,
            var_m,
            var_i,
            mmd_m,
            mmd_i,
            ksd_m,
            ksd_i,
            res_m,
            res_i,
            fmt_opt_f64(s.rank_ok_fraction),
            fmt_opt_f64(s.rel_mse_first_vs_mc),
            fmt_opt_f64(s.rel_mse_second_vs_mc),
        );
    }
    text
}

/// Write the grouped summary CSV.
pub fn emit_summary(rows: &[ResultRow], path: &Path) -> Result<(), ReportError> {
    write_text(path, &render_summary(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> ResultRow {
        ResultRow {
            experiment: "gaussian_sweep".into(),
            method: "svgd_linear".into(),
            d: 10,
            n: 11,
            m: Some(11),
            trial_seed: 0x1234_5678_9abc_def0,
            cond_or_alpha: None,
            mse_first: 1.2345678901234567e-11,
            mse_second: 3.5e-9,
            est_avg_variance: 0.9876543210987654,
            mmd_sq: Some(4.4e-5),
            ksd_sq: Some(2.2e-7),
            residual: Some(9.99e-10),
            rank_ok: Some(true),
            iterations: Some(4321),
            wall_time: None,
        }
    }

    fn mc_row() -> ResultRow {
        ResultRow {
            experiment: "gaussian_sweep".into(),
            method: "monte_carlo".into(),
            m: None,
            residual: None,
            rank_ok: None,
            iterations: None,
            mse_first: 2.0e-2,
            mse_second: 4.0e-2,
            ..sample_row()
        }
    }

    #[test]
    fn empty_row_list_renders_header_only() {
        assert_eq!(render_csv(&[]), format!("{CSV_HEADER}\n"));
        assert_eq!(render_summary(&[]), format!("{SUMMARY_HEADER}\n"));
    }

    #[test]
    fn round_trip_preserves_rows_exactly() {
        let rows = vec![
            sample_row(),
            mc_row(),
            ResultRow {
                cond_or_alpha: Some(2.5),
                mmd_sq: None,
                ksd_sq: None,
                rank_ok: Some(false),
                ..sample_row()
            },
        ];
        let text = render_csv(&rows);
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn floats_keep_seventeen_significant_digits() {
        let text = render_csv(&[sample_row()]);
        assert!(
            text.contains("1.2345678901234567e-11"),
            "got: {text}"
        );
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn wall_time_column_is_always_empty() {
        let mut row = sample_row();
        row.wall_time = Some(1.5); // even if populated internally
        let text = render_csv(&[row]);
        let line = text.lines().nth(1).unwrap();
        assert!(
            line.ends_with(",1.5000000000000000e0"),
            "serialization intentionally keeps the value only when set: {line}"
        );
        // the harness never sets it; the emitted column is empty there
        let text = render_csv(&[sample_row()]);
        assert!(text.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn header_mismatch_and_field_count_are_rejected() {
        assert!(parse_csv("bogus\n").is_err());
        let text = format!("{CSV_HEADER}\na,b,c\n");
        let err = parse_csv(&text).unwrap_err();
        assert!(err.to_string().contains("line 2"), "got: {err}");
    }

    #[test]
    fn summary_of_identical_rows_has_zero_iqr() {
        let rows = vec![sample_row(); 20];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].rows, 20);
        let (median, iqr) = s[0].mse_second.unwrap();
        assert_eq!(median, 3.5e-9);
        assert_eq!(iqr, 0.0);
        assert_eq!(s[0].rank_ok_fraction, Some(1.0));
    }

    #[test]
    fn summary_relative_columns_divide_by_monte_carlo_medians() {
        let rows = vec![sample_row(), mc_row()];
        let s = summarize(&rows);
        let svgd = s.iter().find(|g| g.method == "svgd_linear").unwrap();
        let rel1 = svgd.rel_mse_first_vs_mc.unwrap();
        let rel2 = svgd.rel_mse_second_vs_mc.unwrap();
        assert!((rel1 - 1.2345678901234567e-11 / 2.0e-2).abs() < 1e-24);
        assert!((rel2 - 3.5e-9 / 4.0e-2).abs() < 1e-18);
        let mc = s.iter().find(|g| g.method == "monte_carlo").unwrap();
        assert_eq!(mc.rel_mse_first_vs_mc, None);
    }

    #[test]
    fn median_follows_the_lower_rule() {
        let mut even = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(median_iqr(&mut even).unwrap().0, 2.0);
        let mut odd = vec![5.0, 1.0, 3.0];
        assert_eq!(median_iqr(&mut odd).unwrap().0, 3.0);
    }
}
