//! CSV and JSON serialisation of fits, diagnostics and cross-validation
//! results. Every real number is written with 12 significant digits.

use std::io::Write;

use serde_json::{json, Value};

use crate::crossval::{OracleReport, SimulationSummary};
use crate::diagnostics::DeletionStats;
use crate::error::{Error, Result};
use crate::glsfit::GlsFit;
use crate::scalar::Real;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Decimal rendering with [`SIGNIFICANT_DIGITS`] significant digits, trailing
/// zeros trimmed; scientific notation outside `1e-6 ..= 1e15`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-6..=15).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let body = if exp >= 0 {
        let int_len = exp as usize + 1;
        if int_len >= digits.len() {
            format!("{digits}{}", "0".repeat(int_len - digits.len()))
        } else {
            format!("{}.{}", &digits[..int_len], &digits[int_len..])
        }
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    format!("{sign}{}", trim_zeros(&body))
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to [`SIGNIFICANT_DIGITS`]; NaN and infinities become `null`.
pub fn json_num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    fmt_num(x)
        .parse::<f64>()
        .map(Value::from)
        .unwrap_or(Value::Null)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(";")
}

fn csv_error(e: csv::Error) -> Error {
    Error::data(format!("writing CSV: {e}"))
}

pub fn fit_summary_json<T: Real>(fit: &GlsFit<T>) -> Value {
    let names = fit.problem().column_names();
    let beta: Vec<Value> = names
        .iter()
        .zip(fit.beta_hat())
        .map(|(name, b)| json!({ "name": name, "value": json_num(b.to_f64_lossy()) }))
        .collect();
    json!({
        "family": fit.model().family().name(),
        "n": fit.n(),
        "p": fit.p(),
        "n_subjects": fit.problem().groups().len(),
        "beta": beta,
        "sigma2": json_num(fit.sigma2_hat().to_f64_lossy()),
        "rho": json_num(fit.rho_hat().to_f64_lossy()),
        "reml": json_num(fit.reml().to_f64_lossy()),
    })
}

/// One row per deletion set. `labels` names each unit (observation number or
/// subject id); failed deletions keep their row with the error message.
pub fn write_deletion_csv<T: Real, W: Write>(
    writer: W,
    labels: &[String],
    stats: &[Result<DeletionStats<T>>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "unit",
        "obs",
        "m",
        "srd",
        "lmocv_sq",
        "cook_multiple",
        "cook_distance",
        "sigma2_deleted_est",
        "sigma2_negative",
        "cv_resid_raw",
        "cv_resid_tilde",
        "error",
    ])
    .map_err(csv_error)?;
    for (label, s) in labels.iter().zip(stats) {
        let rec = match s {
            Ok(d) => {
                let f = |x: T| fmt_num(x.to_f64_lossy());
                let obs: Vec<String> = d
                    .subset
                    .indices()
                    .iter()
                    .map(|i| (i + 1).to_string())
                    .collect();
                let raw: Vec<f64> = d.cv_resid_raw.iter().map(|x| x.to_f64_lossy()).collect();
                let tilde: Vec<f64> = d.cv_resid_tilde.iter().map(|x| x.to_f64_lossy()).collect();
                vec![
                    label.clone(),
                    obs.join(";"),
                    d.m().to_string(),
                    f(d.srd),
                    f(d.lmocv_sq),
                    f(d.cook_multiple),
                    f(d.cook_distance),
                    f(d.sigma2_deleted_est),
                    d.sigma2_negative.to_string(),
                    join(&raw),
                    join(&tilde),
                    String::new(),
                ]
            }
            Err(e) => {
                let mut row = vec![label.clone()];
                row.extend(std::iter::repeat_n(String::new(), 10));
                row.push(e.to_string());
                row
            }
        };
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("deletion CSV", e))
}

pub fn write_oracle_csv<W: Write>(writer: W, report: &OracleReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "fold_id",
        "m",
        "srd_est",
        "srd_actual",
        "lmocv_sq",
        "cook_multiple",
        "rho_full",
        "rho_deleted",
        "error",
    ])
    .map_err(csv_error)?;
    for r in &report.records {
        w.write_record([
            r.fold_id.to_string(),
            r.m.to_string(),
            fmt_num(r.srd_est),
            fmt_num(r.srd_actual),
            fmt_num(r.lmocv_sq),
            fmt_num(r.cook_multiple),
            fmt_num(r.rho_full),
            fmt_num(r.rho_deleted),
            fmt_num(r.error),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("oracle CSV", e))
}

pub fn oracle_summary_json(report: &OracleReport) -> Value {
    let s = &report.summary;
    let failures: Vec<Value> = report
        .records
        .iter()
        .filter_map(|r| {
            r.failure
                .as_ref()
                .map(|f| json!({ "fold_id": r.fold_id, "message": f }))
        })
        .collect();
    json!({
        "scheme": s.scheme,
        "rho_policy": s.rho_policy,
        "family": s.family,
        "n": s.n,
        "p": s.p,
        "rho_full": json_num(s.rho_full),
        "sigma2_full": json_num(s.sigma2_full),
        "n_folds": s.n_folds,
        "n_failed": s.n_failed,
        "mean_srd_est": json_num(s.mean_srd_est),
        "mean_srd_actual": json_num(s.mean_srd_actual),
        "mean_lmocv_sq": json_num(s.mean_lmocv_sq),
        "mean_cook_multiple": json_num(s.mean_cook_multiple),
        "max_abs_error": json_num(s.max_abs_error),
        "corr_error_rho_drift": s.corr_error_rho_drift.map_or(Value::Null, json_num),
        "failures": failures,
    })
}

pub fn write_simulation_csv<W: Write>(writer: W, sim: &SimulationSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sim", "fold", "m", "srd_est", "contains_watched"])
        .map_err(csv_error)?;
    for s in 0..sim.n_sims {
        for f in 0..sim.k {
            let at = s * sim.k + f;
            w.write_record([
                (s + 1).to_string(),
                (f + 1).to_string(),
                sim.fold_size[at].to_string(),
                fmt_num(sim.fold_srd[at]),
                sim.contains_watched[at].to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| Error::io("simulation CSV", e))
}

/// Mean and sample standard deviation of the finite entries.
pub fn mean_sd(v: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = v.into_iter().filter(|x| x.is_finite()).collect();
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

pub fn simulation_json(sim: &SimulationSummary) -> Value {
    let (mean_of_means, sd_of_means) = mean_sd(sim.sim_means.iter().copied());
    let (mean_fold, sd_fold) = mean_sd(sim.fold_srd.iter().copied());
    let (watched_mean, _) = mean_sd(
        sim.fold_srd
            .iter()
            .zip(&sim.contains_watched)
            .filter(|(_, &w)| w)
            .map(|(&v, _)| v),
    );
    json!({
        "n_sims": sim.n_sims,
        "k": sim.k,
        "seed": sim.seed,
        "watch": sim.watched.map(|w| w + 1),
        "n_failed": sim.n_failed,
        "mean_fold_srd": json_num(mean_fold),
        "sd_fold_srd": json_num(sd_fold),
        "mean_of_sim_means": json_num(mean_of_means),
        "sd_of_sim_means": json_num(sd_of_means),
        "mean_srd_watched_folds": json_num(watched_mean),
        "sim_means": sim.sim_means.iter().map(|&m| json_num(m)).collect::<Vec<_>>(),
    })
}
