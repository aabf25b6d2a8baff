//! Fold construction, the brute-force refit oracle, and repeated K-fold
//! simulation of the closed-form diagnostics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{CorrelationModel, Family, SubsetIndex};
use crate::dataset::RegressionProblem;
use crate::diagnostics::deletion_stats;
use crate::error::{Error, Result};
use crate::glsfit::{fit_gls, GlsFit};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Loo,
    LeaveSubject,
    Kfold,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loo" => Ok(Scheme::Loo),
            "subject" | "leave_subject" => Ok(Scheme::LeaveSubject),
            "kfold" => Ok(Scheme::Kfold),
            other => Err(Error::domain(format!("unknown fold scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldSet {
    pub scheme: Scheme,
    pub folds: Vec<SubsetIndex>,
    pub seed: Option<u64>,
}

/// Random partition of `0..n` into `k` folds: a seeded shuffle, then the first
/// `k − 1` folds take `⌊n/k⌋` indices each and the last takes the rest.
/// `stream` selects an independent ChaCha substream of `seed`.
pub fn kfold_partition(n: usize, k: usize, seed: u64, stream: u64) -> Result<Vec<SubsetIndex>> {
    if k < 2 || k > n {
        return Err(Error::domain(format!(
            "k-fold needs 2 ≤ k ≤ n (k = {k}, n = {n})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let base = n / k;
    (0..k)
        .map(|f| {
            let end = if f + 1 == k { n } else { (f + 1) * base };
            SubsetIndex::new(order[f * base..end].to_vec(), n)
        })
        .collect()
}

pub fn make_folds<T: Real>(
    problem: &RegressionProblem<T>,
    scheme: Scheme,
    k: usize,
    seed: u64,
) -> Result<FoldSet> {
    let n = problem.n();
    let folds = match scheme {
        Scheme::Loo => (0..n)
            .map(|i| SubsetIndex::single(i, n))
            .collect::<Result<_>>()?,
        Scheme::LeaveSubject => {
            if problem.groups().len() < 2 {
                return Err(Error::domain(
                    "leave-subject folds need at least two subjects",
                ));
            }
            problem
                .groups()
                .ranges()
                .map(|r| SubsetIndex::new(r.collect(), n))
                .collect::<Result<_>>()?
        }
        Scheme::Kfold => kfold_partition(n, k, seed, 0)?,
    };
    Ok(FoldSet {
        scheme,
        folds,
        seed: (scheme == Scheme::Kfold).then_some(seed),
    })
}

/// How ρ is treated when refitting without a fold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoPolicy {
    ReEstimate,
    HoldFixed,
}

impl std::str::FromStr for RhoPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reestimate" | "re_estimate" => Ok(RhoPolicy::ReEstimate),
            "fixed" | "hold_fixed" => Ok(RhoPolicy::HoldFixed),
            other => Err(Error::domain(format!("unknown rho policy {other:?}"))),
        }
    }
}

/// Quantities from an actual refit on the complement of a fold.
#[derive(Clone, Debug, PartialEq)]
pub struct ActualDeletion<T> {
    pub subset: SubsetIndex,
    pub sigma2_deleted_actual: T,
    pub rho_deleted: T,
    pub beta_deleted_actual: Vec<T>,
}

/// Refits `model` without the rows in `m`. Under [`RhoPolicy::HoldFixed`]
/// ρ stays at `model.rho()`; otherwise it is re-estimated (families with a ρ).
pub fn refit_actual<T: Real>(
    problem: &RegressionProblem<T>,
    model: &CorrelationModel<T>,
    m: &SubsetIndex,
    policy: RhoPolicy,
) -> Result<ActualDeletion<T>> {
    let wrap = |e: Error| Error::Refit {
        indices: m.indices().iter().map(|i| i + 1).collect(),
        source: Box::new(e),
    };
    let reduced = problem.subset(&m.complement(problem.n())).map_err(wrap)?;
    let estimate = policy == RhoPolicy::ReEstimate && model.family() != Family::Identity;
    let fit = fit_gls(&reduced, model, estimate).map_err(wrap)?;
    Ok(ActualDeletion {
        subset: m.clone(),
        sigma2_deleted_actual: fit.sigma2_hat(),
        rho_deleted: fit.rho_hat(),
        beta_deleted_actual: fit.beta_hat().to_vec(),
    })
}

/// One fold of an estimated-versus-actual comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldRecord {
    pub fold_id: usize,
    pub m: usize,
    pub srd_est: f64,
    /// `(n−p)σ̂² − (n−p−m)σ̂²₍M₎` from the refit.
    pub srd_actual: f64,
    pub lmocv_sq: f64,
    pub cook_multiple: f64,
    pub rho_full: f64,
    pub rho_deleted: f64,
    /// `srd_actual − srd_est`.
    pub error: f64,
    /// `ρ̂ − ρ̂₍M₎`.
    pub rho_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSummary {
    pub scheme: Scheme,
    pub rho_policy: RhoPolicy,
    pub family: String,
    pub n: usize,
    pub p: usize,
    pub rho_full: f64,
    pub sigma2_full: f64,
    pub n_folds: usize,
    pub n_failed: usize,
    pub mean_srd_est: f64,
    pub mean_srd_actual: f64,
    pub mean_lmocv_sq: f64,
    pub mean_cook_multiple: f64,
    pub max_abs_error: f64,
    /// Pearson correlation of `error` with `rho_drift`; absent when undefined.
    pub corr_error_rho_drift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub records: Vec<FoldRecord>,
    pub summary: OracleSummary,
}

/// Sample Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    let denom = (sxx * syy).sqrt();
    (denom > 0.0).then(|| sxy / denom)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

fn compare_one<T: Real>(
    fit: &GlsFit<T>,
    fold_id: usize,
    m: &SubsetIndex,
    policy: RhoPolicy,
) -> FoldRecord {
    let n = fit.n();
    let p = fit.p();
    let rho_full = fit.rho_hat().to_f64_lossy();
    let mut rec = FoldRecord {
        fold_id,
        m: m.len(),
        srd_est: f64::NAN,
        srd_actual: f64::NAN,
        lmocv_sq: f64::NAN,
        cook_multiple: f64::NAN,
        rho_full,
        rho_deleted: f64::NAN,
        error: f64::NAN,
        rho_drift: f64::NAN,
        failure: None,
    };
    let outcome = deletion_stats(fit, m)
        .and_then(|est| refit_actual(fit.problem(), fit.model(), m, policy).map(|act| (est, act)));
    match outcome {
        Ok((est, act)) => {
            let dof_del = T::from_usize_lossy(n - p - m.len());
            let actual = (fit.weighted_rss() - dof_del * act.sigma2_deleted_actual).to_f64_lossy();
            rec.srd_est = est.srd.to_f64_lossy();
            rec.srd_actual = actual;
            rec.lmocv_sq = est.lmocv_sq.to_f64_lossy();
            rec.cook_multiple = est.cook_multiple.to_f64_lossy();
            rec.rho_deleted = act.rho_deleted.to_f64_lossy();
            rec.error = actual - rec.srd_est;
            rec.rho_drift = rho_full - rec.rho_deleted;
        }
        Err(e) => rec.failure = Some(e.to_string()),
    }
    rec
}

/// Closed-form estimates against brute-force refits for every fold. Folds
/// that fail are flagged in their record and excluded from the summary.
pub fn compare_folds<T: Real>(fit: &GlsFit<T>, folds: &FoldSet, policy: RhoPolicy) -> OracleReport {
    let records: Vec<FoldRecord> = folds
        .folds
        .par_iter()
        .enumerate()
        .map(|(id, m)| compare_one(fit, id + 1, m, policy))
        .collect();
    let ok: Vec<&FoldRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    let errors: Vec<f64> = ok.iter().map(|r| r.error).collect();
    let drifts: Vec<f64> = ok.iter().map(|r| r.rho_drift).collect();
    let summary = OracleSummary {
        scheme: folds.scheme,
        rho_policy: policy,
        family: fit.model().family().to_string(),
        n: fit.n(),
        p: fit.p(),
        rho_full: fit.rho_hat().to_f64_lossy(),
        sigma2_full: fit.sigma2_hat().to_f64_lossy(),
        n_folds: records.len(),
        n_failed: records.len() - ok.len(),
        mean_srd_est: mean(ok.iter().map(|r| r.srd_est)),
        mean_srd_actual: mean(ok.iter().map(|r| r.srd_actual)),
        mean_lmocv_sq: mean(ok.iter().map(|r| r.lmocv_sq)),
        mean_cook_multiple: mean(ok.iter().map(|r| r.cook_multiple)),
        max_abs_error: errors.iter().fold(0.0, |a, e| a.max(e.abs())),
        corr_error_rho_drift: pearson(&errors, &drifts),
    };
    OracleReport { records, summary }
}

/// Estimated SRDs from repeated random K-fold partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSummary {
    pub n_sims: usize,
    pub k: usize,
    pub seed: u64,
    /// 0-based index of the watched observation, if any.
    pub watched: Option<usize>,
    /// Row-major `n_sims × k` fold SRDs (NaN for failed folds).
    pub fold_srd: Vec<f64>,
    pub fold_size: Vec<usize>,
    pub contains_watched: Vec<bool>,
    /// Mean over the successful folds of each simulation.
    pub sim_means: Vec<f64>,
    pub n_failed: usize,
}

impl SimulationSummary {
    pub fn fold(&self, sim: usize, fold: usize) -> f64 {
        self.fold_srd[sim * self.k + fold]
    }
}

/// `n_sims` independent K-fold partitions (substream `s` of `seed` for
/// simulation `s`), each scored with closed-form SRDs only.
pub fn simulate_kfold<T: Real>(
    fit: &GlsFit<T>,
    k: usize,
    n_sims: usize,
    seed: u64,
    watched: Option<usize>,
) -> Result<SimulationSummary> {
    let n = fit.n();
    if let Some(w) = watched {
        if w >= n {
            return Err(Error::domain(format!(
                "watched observation {} out of range 1..={n}",
                w + 1
            )));
        }
    }
    // Validates k once up front so per-simulation errors are numerical only.
    kfold_partition(n, k, seed, 0)?;
    let per_sim: Vec<Vec<(f64, usize, bool)>> = (0..n_sims)
        .into_par_iter()
        .map(|s| {
            let folds = kfold_partition(n, k, seed, s as u64).expect("k validated");
            folds
                .iter()
                .map(|m| {
                    let srd = deletion_stats(fit, m).map_or(f64::NAN, |d| d.srd.to_f64_lossy());
                    (srd, m.len(), watched.is_some_and(|w| m.contains(w)))
                })
                .collect()
        })
        .collect();
    let mut fold_srd = Vec::with_capacity(n_sims * k);
    let mut fold_size = Vec::with_capacity(n_sims * k);
    let mut contains_watched = Vec::with_capacity(n_sims * k);
    let mut sim_means = Vec::with_capacity(n_sims);
    for sim in &per_sim {
        sim_means.push(mean(sim.iter().map(|t| t.0).filter(|v| v.is_finite())));
        for &(srd, size, w) in sim {
            fold_srd.push(srd);
            fold_size.push(size);
            contains_watched.push(w);
        }
    }
    let n_failed = fold_srd.iter().filter(|v| !v.is_finite()).count();
    Ok(SimulationSummary {
        n_sims,
        k,
        seed,
        watched,
        fold_srd,
        fold_size,
        contains_watched,
        sim_means,
        n_failed,
    })
}
