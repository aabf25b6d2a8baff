//! Seeded synthetic longitudinal data for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariance::{CorrelationModel, Family};
use crate::dataset::{Groups, RegressionProblem};
use crate::error::Result;
use crate::linalg::Matrix;

/// Layout and error model of a synthetic panel.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelSpec {
    pub n_subjects: usize,
    /// Inclusive range of observations per subject.
    pub group_sizes: (usize, usize),
    /// Columns of X including the intercept.
    pub p: usize,
    pub family: Family,
    pub rho: f64,
    pub sigma: f64,
    /// When set, every subject is observed at these times (prefix of length
    /// group size); otherwise gaps are drawn uniformly from `[0.5, 2.5)`.
    pub fixed_times: Option<Vec<f64>>,
}

impl PanelSpec {
    pub fn new(n_subjects: usize, group_sizes: (usize, usize), p: usize) -> Self {
        PanelSpec {
            n_subjects,
            group_sizes,
            p,
            family: Family::Identity,
            rho: 0.0,
            sigma: 1.0,
            fixed_times: None,
        }
    }

    pub fn correlated(mut self, family: Family, rho: f64) -> Self {
        self.family = family;
        self.rho = rho;
        self
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Self {
        self.fixed_times = Some(times);
        self
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a panel: intercept plus `p − 1` standard-normal covariates (the first
/// also shared within subject, giving between-subject leverage spread),
/// β = (1, 0.5, −0.5, …), and errors following the stationary AR/CAR(1)
/// recursion `εₖ₊₁ = aₖεₖ + √(1−aₖ²)·zₖ`.
pub fn panel(spec: &PanelSpec, seed: u64) -> Result<RegressionProblem<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CorrelationModel::<f64>::new(spec.family, spec.rho)?;
    let mut labels = Vec::new();
    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let beta: Vec<f64> = (0..spec.p)
        .map(|j| {
            if j == 0 {
                1.0
            } else if j % 2 == 1 {
                0.5
            } else {
                -0.5
            }
        })
        .collect();
    for s in 0..spec.n_subjects {
        let (lo, hi) = spec.group_sizes;
        let mut g = rng.random_range(lo..=hi);
        if let Some(ft) = &spec.fixed_times {
            g = g.min(ft.len());
        }
        let subject_cov = normal(&mut rng);
        let mut t = 0.0;
        let mut eps = 0.0;
        for k in 0..g {
            let tk = match &spec.fixed_times {
                Some(ft) => ft[k],
                None => {
                    if k > 0 {
                        t += rng.random_range(0.5..2.5);
                    }
                    t
                }
            };
            let a = match spec.family {
                Family::Identity => 0.0,
                Family::Ar1 => spec.rho,
                Family::Car1 => spec.rho.powf(if k == 0 {
                    0.0
                } else {
                    tk - times[times.len() - 1]
                }),
            };
            let z = normal(&mut rng);
            eps = if k == 0 {
                z
            } else {
                a * eps + (1.0 - a * a).sqrt() * z
            };
            let mut row = vec![1.0];
            for j in 1..spec.p {
                row.push(if j == 1 {
                    subject_cov
                } else {
                    normal(&mut rng)
                });
            }
            let mean: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            y.push(mean + spec.sigma * eps);
            rows.push(row);
            labels.push(format!("s{s:04}"));
            times.push(tk);
        }
    }
    let groups = Groups::from_labels(labels.iter().map(String::as_str))?;
    let names = (0..spec.p)
        .map(|j| {
            if j == 0 {
                "(Intercept)".to_owned()
            } else {
                format!("x{j}")
            }
        })
        .collect();
    RegressionProblem::new(y, Matrix::from_rows(&rows), groups, times, names)
}
