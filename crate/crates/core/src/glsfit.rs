//! Generalised least squares fitting with a profiled REML estimate of ρ.
//!
//! A [`GlsFit`] caches everything later deletion diagnostics need: `X̃ = Σ⁻¹X`,
//! `r̃ = Σ⁻¹r`, the factor of `XᵀΣ⁻¹X` and its inverse, Σ⁻¹ itself and the
//! partial-correlation scaling. Every leave-M-out quantity is then a function
//! of `M × M` and `M × p` slices of these, with no refit.

use crate::covariance::{
    build_correlation, inverse_correlation, partial_correlation, CorrelationModel, Family,
    PartialCorrelation, PrecisionMatrix, SubsetIndex,
};
use crate::dataset::RegressionProblem;
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::Real;

/// Interior margin kept from each end of the ρ interval during optimisation.
pub const RHO_MARGIN: f64 = 1e-4;
/// Absolute tolerance on ρ for the golden-section search.
pub const RHO_TOLERANCE: f64 = 1e-7;
/// Iteration cap for the golden-section search.
pub const MAX_GOLDEN_ITERATIONS: usize = 200;
/// Coarse grid used to bracket the REML maximum before refinement.
const BRACKET_POINTS: usize = 25;

#[derive(Clone, Debug)]
pub struct GlsFit<T> {
    problem: RegressionProblem<T>,
    model: CorrelationModel<T>,
    beta_hat: Vec<T>,
    residuals: Vec<T>,
    sigma2_hat: T,
    xtsix: Cholesky<T>,
    xtsix_inv: Matrix<T>,
    tilde_x: Matrix<T>,
    tilde_r: Vec<T>,
    prec: PrecisionMatrix<T>,
    partial: PartialCorrelation<T>,
    reml: T,
}

impl<T: Real> GlsFit<T> {
    pub fn problem(&self) -> &RegressionProblem<T> {
        &self.problem
    }

    /// The correlation model at the fitted ρ̂.
    pub fn model(&self) -> &CorrelationModel<T> {
        &self.model
    }

    pub fn n(&self) -> usize {
        self.problem.n()
    }

    pub fn p(&self) -> usize {
        self.problem.p()
    }

    pub fn beta_hat(&self) -> &[T] {
        &self.beta_hat
    }

    pub fn residuals(&self) -> &[T] {
        &self.residuals
    }

    pub fn sigma2_hat(&self) -> T {
        self.sigma2_hat
    }

    pub fn rho_hat(&self) -> T {
        self.model.rho()
    }

    /// `(XᵀΣ⁻¹X)⁻¹`.
    pub fn xtsix_inv(&self) -> &Matrix<T> {
        &self.xtsix_inv
    }

    pub fn xtsix_factor(&self) -> &Cholesky<T> {
        &self.xtsix
    }

    /// `X̃ = Σ⁻¹X`.
    pub fn tilde_x(&self) -> &Matrix<T> {
        &self.tilde_x
    }

    /// `r̃ = Σ⁻¹r`.
    pub fn tilde_r(&self) -> &[T] {
        &self.tilde_r
    }

    pub fn precision(&self) -> &PrecisionMatrix<T> {
        &self.prec
    }

    pub fn partial(&self) -> &PartialCorrelation<T> {
        &self.partial
    }

    /// Restricted log-likelihood at ρ̂ (constants dropped).
    pub fn reml(&self) -> T {
        self.reml
    }

    /// `(n − p) σ̂² = rᵀΣ⁻¹r`.
    pub fn weighted_rss(&self) -> T {
        dot(&self.residuals, &self.tilde_r)
    }

    /// Diagonal of `H̃ = Σ⁻¹X(XᵀΣ⁻¹X)⁻¹XᵀΣ⁻¹`.
    pub fn tilde_leverage(&self) -> Vec<T> {
        (0..self.n())
            .map(|i| self.xtsix_inv.quad_form(self.tilde_x.row(i)))
            .collect()
    }

    /// `trace(Σ⁻¹H)`, which equals `p` for a full-rank design.
    pub fn hat_trace(&self) -> T {
        let x = self.problem.x();
        (0..self.n())
            .map(|i| dot(&self.xtsix_inv.mul_vec(x.row(i)), self.tilde_x.row(i)))
            .sum()
    }

    /// `max |rᵀΣ⁻¹X|`, zero up to rounding.
    pub fn orthogonality_defect(&self) -> T {
        self.problem
            .x()
            .tr_mul_vec(&self.tilde_r)
            .into_iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }
}

struct Profile<T> {
    prec: PrecisionMatrix<T>,
    tilde_x: Matrix<T>,
    xtsix: Cholesky<T>,
    beta: Vec<T>,
    residuals: Vec<T>,
    tilde_r: Vec<T>,
    reml: T,
}

fn profile<T: Real>(
    problem: &RegressionProblem<T>,
    model: &CorrelationModel<T>,
) -> Result<Profile<T>> {
    let sigma = build_correlation(
        model,
        problem.groups(),
        problem.times(),
        problem.positions(),
    )?;
    let prec = inverse_correlation(&sigma)?;
    let x = problem.x();
    let tilde_x = prec.mul_mat(x);
    let xtsix = Cholesky::new(&x.tr_matmul(&tilde_x)).map_err(|e| Error::RankDeficient {
        index: e.column + 1,
        name: problem
            .column_names()
            .get(e.column)
            .cloned()
            .unwrap_or_default(),
    })?;
    let beta = xtsix.solve(&tilde_x.tr_mul_vec(problem.y()));
    let fitted = x.mul_vec(&beta);
    let residuals: Vec<T> = problem
        .y()
        .iter()
        .zip(&fitted)
        .map(|(&y, &f)| y - f)
        .collect();
    let tilde_r = prec.mul_vec(&residuals);
    let rss = dot(&residuals, &tilde_r);
    let dof = T::from_usize_lossy(problem.n() - problem.p());
    let reml = -T::lit(0.5) * (dof * rss.ln() + prec.log_det_sigma() + xtsix.log_det());
    Ok(Profile {
        prec,
        tilde_x,
        xtsix,
        beta,
        residuals,
        tilde_r,
        reml,
    })
}

/// Restricted log-likelihood profiled over σ²:
/// `−½[(n−p)·log(rᵀΣ⁻¹r) + log det Σ + log det(XᵀΣ⁻¹X)]`, constants dropped.
pub fn restricted_loglik<T: Real>(
    problem: &RegressionProblem<T>,
    model: &CorrelationModel<T>,
) -> Result<T> {
    Ok(profile(problem, model)?.reml)
}

fn golden_max<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T) -> T {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let tol = T::lit(RHO_TOLERANCE);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..MAX_GOLDEN_ITERATIONS {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Maximises the restricted log-likelihood over ρ: a coarse grid brackets the
/// maximum, golden-section search refines it.
pub fn estimate_rho<T: Real>(problem: &RegressionProblem<T>, family: Family) -> Result<T> {
    let (lo, hi) = family
        .rho_bounds()
        .ok_or_else(|| Error::domain(format!("rho cannot be estimated for the {family} family")))?;
    let (lo, hi) = (lo + RHO_MARGIN, hi - RHO_MARGIN);
    let objective = |rho: T| -> T {
        CorrelationModel::new(family, rho)
            .and_then(|m| restricted_loglik(problem, &m))
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(T::neg_infinity())
    };
    let step = (hi - lo) / (BRACKET_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..BRACKET_POINTS).map(|k| lo + step * k as f64).collect();
    let values: Vec<T> = grid.iter().map(|&r| objective(T::lit(r))).collect();
    let (best, best_val) =
        values
            .iter()
            .enumerate()
            .fold(
                (0, T::neg_infinity()),
                |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
            );
    if best_val == T::neg_infinity() {
        return Err(Error::Optimizer(format!(
            "restricted likelihood not finite anywhere on [{lo}, {hi}] ({BRACKET_POINTS} grid points)"
        )));
    }
    let a = T::lit(grid[best.saturating_sub(1)]);
    let b = T::lit(grid[(best + 1).min(BRACKET_POINTS - 1)]);
    let rho = golden_max(objective, a, b);
    let val = objective(rho);
    // The refined point can only lose to the grid through a flat or jagged surface.
    Ok(if val >= best_val {
        rho
    } else {
        T::lit(grid[best])
    })
}

/// Fits `Y = Xβ + ε`, `var(ε) = σ²Σ(ρ)`. With `estimate_rho`, ρ is the REML
/// estimate; otherwise `model.rho()` is used as given. The identity family
/// gives ordinary least squares.
pub fn fit_gls<T: Real>(
    problem: &RegressionProblem<T>,
    model: &CorrelationModel<T>,
    estimate: bool,
) -> Result<GlsFit<T>> {
    let model = if estimate {
        model.with_rho(estimate_rho(problem, model.family())?)?
    } else {
        *model
    };
    let prof = profile(problem, &model)?;
    let dof = T::from_usize_lossy(problem.n() - problem.p());
    let sigma2_hat = dot(&prof.residuals, &prof.tilde_r) / dof;
    let partial = partial_correlation(&prof.prec);
    Ok(GlsFit {
        problem: problem.clone(),
        model,
        beta_hat: prof.beta,
        residuals: prof.residuals,
        sigma2_hat,
        xtsix_inv: prof.xtsix.inverse(),
        xtsix: prof.xtsix,
        tilde_x: prof.tilde_x,
        tilde_r: prof.tilde_r,
        prec: prof.prec,
        partial,
        reml: prof.reml,
    })
}

/// Residuals and leverages in the partial-correlation scalings.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformedResiduals<T> {
    /// `r* = S^{1/2}Σ⁻¹r`.
    pub star: Vec<T>,
    /// `r† = SΣ⁻¹r`: each residual adjusted for its correlation with the others.
    pub dagger: Vec<T>,
    /// Diagonal of `H* = S^{1/2}Σ⁻¹HΣ⁻¹S^{1/2}`.
    pub star_leverage: Vec<T>,
}

pub fn transformed_residuals<T: Real>(fit: &GlsFit<T>) -> TransformedResiduals<T> {
    let s = fit.partial.s();
    let lev = fit.tilde_leverage();
    TransformedResiduals {
        star: fit
            .tilde_r
            .iter()
            .zip(s)
            .map(|(&r, &si)| si.sqrt() * r)
            .collect(),
        dagger: fit.tilde_r.iter().zip(s).map(|(&r, &si)| si * r).collect(),
        star_leverage: lev.iter().zip(s).map(|(&h, &si)| si * h).collect(),
    }
}

/// The `M`-slices used by every deletion formula.
#[derive(Clone, Debug, PartialEq)]
pub struct TildeBlock<T> {
    /// `r̃_M`.
    pub r: Vec<T>,
    /// `H̃_M = X̃_M (XᵀΣ⁻¹X)⁻¹ X̃_Mᵀ`.
    pub h: Matrix<T>,
    /// `Σ^M`, the `M × M` block of Σ⁻¹.
    pub sigma_sup: Matrix<T>,
}

pub fn tilde_block<T: Real>(fit: &GlsFit<T>, m: &SubsetIndex) -> TildeBlock<T> {
    let idx = m.indices();
    let xm = fit.tilde_x.select_rows(idx);
    let w = xm.matmul(&fit.xtsix_inv);
    let h = Matrix::from_fn(idx.len(), idx.len(), |a, b| dot(w.row(a), xm.row(b)));
    TildeBlock {
        r: idx.iter().map(|&i| fit.tilde_r[i]).collect(),
        h,
        sigma_sup: fit.prec.principal(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Groups;

    fn mean_model() -> RegressionProblem<f64> {
        RegressionProblem::new(
            vec![0.0, 0.0, 3.0],
            Matrix::from_fn(3, 1, |_, _| 1.0),
            Groups::from_labels(["a", "a", "a"]).unwrap(),
            vec![0.0, 1.0, 2.0],
            vec!["(Intercept)".into()],
        )
        .unwrap()
    }

    #[test]
    fn mean_model_fit() {
        let fit = fit_gls(&mean_model(), &CorrelationModel::identity(), false).unwrap();
        assert!((fit.beta_hat()[0] - 1.0).abs() < 1e-15);
        for (r, want) in fit.residuals().iter().zip([-1.0, -1.0, 2.0]) {
            assert!((r - want).abs() < 1e-14);
        }
        assert!((fit.sigma2_hat() - 3.0).abs() < 1e-15);
        let tb = tilde_block(&fit, &SubsetIndex::single(2, 3).unwrap());
        assert!((tb.r[0] - 2.0).abs() < 1e-14);
        assert!((tb.h[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(tb.sigma_sup[(0, 0)], 1.0);
    }

    #[test]
    fn identity_reml_formula() {
        let p = mean_model();
        let v = restricted_loglik(&p, &CorrelationModel::identity()).unwrap();
        // −½[(n−p) log rᵀr + log det XᵀX] = −½[2 log 6 + log 3]
        let want = -0.5 * (2.0 * 6f64.ln() + 3f64.ln());
        assert!((v - want).abs() < 1e-14);
    }

    #[test]
    fn ar1_rho_zero_matches_ols() {
        let p = RegressionProblem::new(
            vec![1.0, 2.5, 2.0, 4.0, 3.0],
            Matrix::from_rows(&[
                vec![1.0, 0.0],
                vec![1.0, 1.0],
                vec![1.0, 2.0],
                vec![1.0, 3.0],
                vec![1.0, 4.0],
            ]),
            Groups::from_labels(["a", "a", "a", "b", "b"]).unwrap(),
            vec![0.0, 1.0, 2.0, 0.0, 1.0],
            vec!["c".into(), "t".into()],
        )
        .unwrap();
        let ols = fit_gls(&p, &CorrelationModel::identity(), false).unwrap();
        let ar = fit_gls(&p, &CorrelationModel::ar1(0.0).unwrap(), false).unwrap();
        assert_eq!(ols.beta_hat(), ar.beta_hat());
        assert_eq!(ols.sigma2_hat(), ar.sigma2_hat());
    }

    #[test]
    fn ar1_pair_dagger_residuals() {
        // The only column touches subject b, so subject a keeps residuals (1, −1).
        let p = RegressionProblem::new(
            vec![1.0, -1.0, 0.0],
            Matrix::from_rows(&[vec![0.0], vec![0.0], vec![1.0]]),
            Groups::from_labels(["a", "a", "b"]).unwrap(),
            vec![0.0, 1.0, 0.0],
            vec!["c".into()],
        )
        .unwrap();
        let fit: GlsFit<f64> = fit_gls(&p, &CorrelationModel::ar1(0.5).unwrap(), false).unwrap();
        assert_eq!(&fit.residuals()[..2], &[1.0, -1.0]);
        let tr = transformed_residuals(&fit);
        assert!((tr.dagger[0] - 1.5).abs() < 1e-14);
        assert!((tr.dagger[1] + 1.5).abs() < 1e-14);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let p = RegressionProblem::new(
            vec![1.0, 2.0, 3.0, 5.0],
            Matrix::from_rows(&[
                vec![1.0, 2.0],
                vec![1.0, 2.0],
                vec![1.0, 2.0],
                vec![1.0, 2.0],
            ]),
            Groups::singletons(4),
            vec![0.0; 4],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let err = fit_gls(&p, &CorrelationModel::identity(), false).unwrap_err();
        match err {
            Error::RankDeficient { index, name } => {
                assert_eq!(index, 2);
                assert_eq!(name, "b");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn identity_family_cannot_estimate_rho() {
        assert!(fit_gls(&mean_model(), &CorrelationModel::identity(), true).is_err());
    }

    #[test]
    fn golden_section_finds_quadratic_peak() {
        let x = golden_max(|x: f64| -(x - 0.3).powi(2), 0.0, 1.0);
        assert!((x - 0.3).abs() < 1e-7);
    }
}
