//! `glscv` command-line front end: fit, diagnose, cross-validate, simulate and
//! oracle-check GLS models on longitudinal CSV data.
//!
//! Every subcommand writes its results to `--out` and prints a one-line
//! summary. Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
//! error (including a failed `check`).

// Negated comparisons are used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glscv::report::{
    fit_summary_json, fmt_num, json_num, oracle_summary_json, simulation_json, write_deletion_csv,
    write_oracle_csv, write_simulation_csv,
};
use glscv::{
    build_design, compare_folds, deletion_stats, fit_gls, load_design_csv, load_long_csv, loo_all,
    make_folds, simulate_kfold, srd_via_partial, ColumnRoles, CorrelationModel, Error, Family,
    GlsFit, ModelSpec, RegressionProblem, RhoPolicy, Scheme,
};
use serde_json::{json, Value};

/// Exactness bound for closed-form versus refit SRD in `check`.
const CHECK_SRD_TOL: f64 = 1e-8;
const CHECK_IDENTITY_TOL: f64 = 1e-9;
const CHECK_FIT_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "glscv", version)]
#[command(about = "GLS fitting with closed-form leave-M-out cross-validation diagnostics")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the model and write fit.json.
    Fit(CommonArgs),
    /// Closed-form deletion diagnostics per observation, subject or fold.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        folds: FoldArgs,
    },
    /// Closed-form estimates against brute-force refits for every fold.
    Cv {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        folds: FoldArgs,
        #[arg(long = "rho-policy", value_enum, default_value_t = PolicyArg::Reestimate)]
        rho_policy: PolicyArg,
    },
    /// Repeated random K-fold partitions scored with closed-form SRDs.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long = "n-sims", default_value_t = 100)]
        n_sims: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// 1-based observation whose folds are flagged in the output.
        #[arg(long)]
        watch: Option<usize>,
    },
    /// Verify the exactness invariants on this input; exit 0 iff all hold.
    Check(CommonArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Long)]
    mode: ModeArg,
    /// Long-format CSV with a header row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Headerless design matrix (design mode).
    #[arg(long)]
    x: Option<PathBuf>,
    /// One response value per line (design mode).
    #[arg(long)]
    y: Option<PathBuf>,
    /// `subject_id,time` rows matching X and Y (design mode).
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long, default_value = "subject")]
    subject: String,
    #[arg(long, default_value = "time")]
    time: String,
    #[arg(long, default_value = "response")]
    response: String,
    /// Numeric covariate columns.
    #[arg(long, value_delimiter = ',')]
    numeric: Vec<String>,
    /// Categorical covariates as `column:reference`.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    #[arg(long = "no-intercept")]
    no_intercept: bool,
    #[arg(long, value_enum, default_value_t = FamilyArg::Car1)]
    family: FamilyArg,
    #[arg(long, conflicts_with = "estimate_rho", allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long = "estimate-rho")]
    estimate_rho: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FoldArgs {
    #[arg(long, value_enum, default_value_t = SchemeArg::Loo)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Long,
    Design,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Identity,
    Ar1,
    Car1,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Loo,
    Subject,
    Kfold,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    Fixed,
    Reestimate,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Identity => Family::Identity,
            FamilyArg::Ar1 => Family::Ar1,
            FamilyArg::Car1 => Family::Car1,
        }
    }
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Loo => Scheme::Loo,
            SchemeArg::Subject => Scheme::LeaveSubject,
            SchemeArg::Kfold => Scheme::Kfold,
        }
    }
}

impl From<PolicyArg> for RhoPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Fixed => RhoPolicy::HoldFixed,
            PolicyArg::Reestimate => RhoPolicy::ReEstimate,
        }
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
    CheckFailed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => 1,
        Failure::CheckFailed(_) => 3,
        Failure::Lib(e) if e.is_numerical() => 3,
        Failure::Lib(Error::Domain(_)) => 1,
        Failure::Lib(_) => 2,
    }
}

/// Validated inputs shared by every subcommand.
struct RunConfig {
    problem: RegressionProblem<f64>,
    model: CorrelationModel<f64>,
    estimate: bool,
    out: PathBuf,
}

impl RunConfig {
    fn from_args(a: &CommonArgs) -> Outcome<Self> {
        let family = Family::from(a.family);
        let estimate = a.estimate_rho;
        let rho = match (family, a.rho, estimate) {
            (Family::Identity, Some(_), _) | (Family::Identity, _, true) => {
                return Err(usage(
                    "--rho and --estimate-rho do not apply to --family identity",
                ))
            }
            (Family::Identity, None, false) => 0.0,
            (_, Some(r), false) => r,
            // Starting value only; the estimate searches the whole domain.
            (_, None, true) => 0.5,
            (_, None, false) => {
                return Err(usage(format!(
                    "--family {family} needs --rho <value> or --estimate-rho"
                )))
            }
            (_, Some(_), true) => unreachable!("clap rejects --rho with --estimate-rho"),
        };
        let model = CorrelationModel::new(family, rho)?;
        let problem = load_problem(a)?;
        Ok(RunConfig {
            problem,
            model,
            estimate,
            out: a.out.clone(),
        })
    }

    fn fit(&self) -> Outcome<GlsFit<f64>> {
        Ok(fit_gls(&self.problem, &self.model, self.estimate)?)
    }
}

fn load_problem(a: &CommonArgs) -> Outcome<RegressionProblem<f64>> {
    match a.mode {
        ModeArg::Long => {
            if a.x.is_some() || a.y.is_some() || a.groups.is_some() {
                return Err(usage("--x/--y/--groups require --mode design"));
            }
            let input = a
                .input
                .as_ref()
                .ok_or_else(|| usage("--mode long requires --input"))?;
            let roles = ColumnRoles {
                subject: a.subject.clone(),
                time: a.time.clone(),
                response: a.response.clone(),
            };
            let categorical = a
                .categorical
                .iter()
                .map(|c| {
                    c.split_once(':')
                        .map(|(col, lvl)| (col.to_owned(), lvl.to_owned()))
                        .ok_or_else(|| {
                            usage(format!("--categorical expects column:reference, got {c:?}"))
                        })
                })
                .collect::<Outcome<Vec<_>>>()?;
            let spec = ModelSpec {
                response: a.response.clone(),
                numeric_terms: a.numeric.clone(),
                categorical_terms: categorical,
                intercept: !a.no_intercept,
            };
            let data = load_long_csv(input, &roles)?;
            Ok(build_design(&data, &spec)?)
        }
        ModeArg::Design => {
            if a.input.is_some()
                || !a.numeric.is_empty()
                || !a.categorical.is_empty()
                || a.no_intercept
            {
                return Err(usage("--input and model terms apply to --mode long only"));
            }
            match (&a.x, &a.y, &a.groups) {
                (Some(x), Some(y), Some(g)) => Ok(load_design_csv(x, y, g)?),
                _ => Err(usage("--mode design requires --x, --y and --groups")),
            }
        }
    }
}

fn create(out: &Path, name: &str) -> Outcome<BufWriter<File>> {
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    let path = out.join(name);
    let file = File::create(&path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

fn write_json(out: &Path, name: &str, value: &Value) -> Outcome<()> {
    let mut w = create(out, name)?;
    let text = serde_json::to_string_pretty(value).expect("JSON values serialise");
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(|e| Error::Io {
            path: out.join(name).display().to_string(),
            source: e,
        })?;
    Ok(())
}

fn run_fit(a: &CommonArgs) -> Outcome<String> {
    let cfg = RunConfig::from_args(a)?;
    let fit = cfg.fit()?;
    write_json(&cfg.out, "fit.json", &fit_summary_json(&fit))?;
    Ok(format!(
        "fit: family={} n={} p={} rho={} sigma2={} -> {}",
        fit.model().family(),
        fit.n(),
        fit.p(),
        fmt_num(fit.rho_hat()),
        fmt_num(fit.sigma2_hat()),
        cfg.out.join("fit.json").display()
    ))
}

fn run_diagnose(a: &CommonArgs, f: &FoldArgs) -> Outcome<String> {
    let cfg = RunConfig::from_args(a)?;
    let fit = cfg.fit()?;
    let p = &cfg.problem;
    let scheme = Scheme::from(f.scheme);
    let (labels, stats): (Vec<String>, Vec<_>) = match scheme {
        Scheme::Loo => {
            let labels = (0..p.n())
                .map(|i| p.groups().id(p.groups().group_of(i)).to_owned())
                .collect();
            (labels, loo_all(&fit))
        }
        Scheme::LeaveSubject | Scheme::Kfold => {
            let folds = make_folds(p, scheme, f.k, f.seed)?;
            let labels = match scheme {
                Scheme::LeaveSubject => p.groups().ids().to_vec(),
                _ => (1..=folds.folds.len())
                    .map(|k| format!("fold{k}"))
                    .collect(),
            };
            (
                labels,
                folds
                    .folds
                    .iter()
                    .map(|m| deletion_stats(&fit, m))
                    .collect(),
            )
        }
    };
    let mut w = create(&cfg.out, "diagnostics.csv")?;
    write_deletion_csv(&mut w, &labels, &stats)?;
    let failed = stats.iter().filter(|s| s.is_err()).count();
    Ok(format!(
        "diagnose: {} units, {failed} singular -> {}",
        stats.len(),
        cfg.out.join("diagnostics.csv").display()
    ))
}

fn run_cv(a: &CommonArgs, f: &FoldArgs, policy: PolicyArg) -> Outcome<String> {
    let cfg = RunConfig::from_args(a)?;
    let fit = cfg.fit()?;
    let folds = make_folds(&cfg.problem, f.scheme.into(), f.k, f.seed)?;
    let report = compare_folds(&fit, &folds, policy.into());
    let mut w = create(&cfg.out, "cv_folds.csv")?;
    write_oracle_csv(&mut w, &report)?;
    write_json(&cfg.out, "cv_summary.json", &oracle_summary_json(&report))?;
    let s = &report.summary;
    Ok(format!(
        "cv: {} folds ({} failed), mean srd actual={} estimated={} lmocv_sq={} -> {}",
        s.n_folds,
        s.n_failed,
        fmt_num(s.mean_srd_actual),
        fmt_num(s.mean_srd_est),
        fmt_num(s.mean_lmocv_sq),
        cfg.out.display()
    ))
}

fn run_simulate(
    a: &CommonArgs,
    k: usize,
    n_sims: usize,
    seed: u64,
    watch: Option<usize>,
) -> Outcome<String> {
    let cfg = RunConfig::from_args(a)?;
    let watched = match watch {
        Some(0) => return Err(usage("--watch is 1-based")),
        Some(w) => Some(w - 1),
        None => None,
    };
    if n_sims == 0 {
        return Err(usage("--n-sims must be positive"));
    }
    let fit = cfg.fit()?;
    let sim = simulate_kfold(&fit, k, n_sims, seed, watched)?;
    let mut w = create(&cfg.out, "simulation.csv")?;
    write_simulation_csv(&mut w, &sim)?;
    let summary = simulation_json(&sim);
    write_json(&cfg.out, "simulation.json", &summary)?;
    Ok(format!(
        "simulate: {n_sims} x {k}-fold, mean of sim means={} sd={} -> {}",
        summary["mean_of_sim_means"],
        summary["sd_of_sim_means"],
        cfg.out.display()
    ))
}

struct Invariant {
    name: &'static str,
    worst: f64,
    tol: f64,
}

impl Invariant {
    fn new(name: &'static str, tol: f64) -> Self {
        Invariant {
            name,
            worst: 0.0,
            tol,
        }
    }

    fn observe(&mut self, v: f64) {
        // NaN must register as a failure.
        if !(v <= self.worst) {
            self.worst = v;
        }
    }

    fn holds(&self) -> bool {
        self.worst <= self.tol
    }
}

fn run_check(a: &CommonArgs) -> Outcome<String> {
    let cfg = RunConfig::from_args(a)?;
    let fit = cfg.fit()?;
    let p = &cfg.problem;
    let mut orth = Invariant::new("orthogonality", CHECK_FIT_TOL);
    let mut trace = Invariant::new("hat_trace", CHECK_FIT_TOL);
    let mut srd = Invariant::new("srd_vs_refit", CHECK_SRD_TOL);
    let mut decomposition = Invariant::new("decomposition", CHECK_IDENTITY_TOL);
    let mut route = Invariant::new("partial_route", CHECK_IDENTITY_TOL);

    let y_norm = p.y().iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    orth.observe(fit.orthogonality_defect() / y_norm);
    trace.observe((fit.hat_trace() - p.p() as f64).abs());

    let mut schemes = vec![Scheme::Loo];
    if p.groups().len() >= 2 {
        schemes.push(Scheme::LeaveSubject);
    }
    let (mut checked, mut skipped) = (0, 0);
    for scheme in schemes {
        let folds = make_folds(p, scheme, 0, 0)?;
        let report = compare_folds(&fit, &folds, RhoPolicy::HoldFixed);
        for (r, m) in report.records.iter().zip(&folds.folds) {
            if r.failure.is_some() {
                skipped += 1;
                continue;
            }
            checked += 1;
            let scale = r.srd_actual.abs().max(1.0);
            srd.observe(r.error.abs() / scale);
            let d = deletion_stats(&fit, m)?;
            let scale = d.srd.abs().max(1.0);
            decomposition.observe((d.lmocv_sq - d.cook_multiple - d.srd).abs() / scale);
            route.observe((srd_via_partial(&fit, m)? - d.srd).abs() / scale);
        }
    }
    if checked == 0 {
        return Err(Failure::CheckFailed(
            "check: no deletion could be evaluated".into(),
        ));
    }

    let all = [&orth, &trace, &srd, &decomposition, &route];
    let invariants: Vec<Value> = all
        .iter()
        .map(|i| json!({ "name": i.name, "worst": json_num(i.worst), "tolerance": i.tol, "pass": i.holds() }))
        .collect();
    let pass = all.iter().all(|i| i.holds());
    write_json(
        &cfg.out,
        "check.json",
        &json!({ "pass": pass, "deletions_checked": checked, "deletions_singular": skipped, "invariants": invariants }),
    )?;
    let failing: Vec<&str> = all.iter().filter(|i| !i.holds()).map(|i| i.name).collect();
    if pass {
        Ok(format!(
            "check: PASS ({} invariants, {checked} deletions, {skipped} singular)",
            all.len()
        ))
    } else {
        Err(Failure::CheckFailed(format!(
            "check: FAIL ({})",
            failing.join(", ")
        )))
    }
}

fn run(cli: Cli) -> Outcome<String> {
    match cli.command {
        Command::Fit(a) => run_fit(&a),
        Command::Diagnose { common, folds } => run_diagnose(&common, &folds),
        Command::Cv {
            common,
            folds,
            rho_policy,
        } => run_cv(&common, &folds, rho_policy),
        Command::Simulate {
            common,
            k,
            n_sims,
            seed,
            watch,
        } => run_simulate(&common, k, n_sims, seed, watch),
        Command::Check(a) => run_check(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) => format!("usage error: {m}"),
                Failure::Lib(e) => format!("error: {e}"),
                Failure::CheckFailed(m) => m.clone(),
            };
            eprintln!("{msg}");
            ExitCode::from(exit_code(&f))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("glscv").chain(args.iter().copied()))
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&usage("x")), 1);
        assert_eq!(exit_code(&Failure::Lib(Error::Domain("x".into()))), 1);
        assert_eq!(exit_code(&Failure::Lib(Error::Data("x".into()))), 2);
        let singular = Error::DeletionSingular { indices: vec![1] };
        assert_eq!(exit_code(&Failure::Lib(singular)), 3);
        assert_eq!(exit_code(&Failure::CheckFailed("x".into())), 3);
    }

    #[test]
    fn rho_flags_are_validated_before_loading() {
        let cli = parse(&[
            "fit",
            "--input",
            "/nonexistent",
            "--family",
            "identity",
            "--rho",
            "0.3",
        ])
        .unwrap();
        let Command::Fit(a) = cli.command else {
            panic!()
        };
        assert!(matches!(RunConfig::from_args(&a), Err(Failure::Usage(_))));
        assert!(parse(&["fit", "--rho", "0.3", "--estimate-rho"]).is_err());
    }

    #[test]
    fn negative_rho_parses() {
        let cli = parse(&["fit", "--family", "ar1", "--rho", "-0.4"]).unwrap();
        let Command::Fit(a) = cli.command else {
            panic!()
        };
        assert_eq!(a.rho, Some(-0.4));
    }
}
