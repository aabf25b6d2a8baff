//! Closed-form leave-M-out deletion diagnostics from a single GLS fit.
//!
//! With `A = (Σ^M − H̃_M)⁻¹` and `u = A r̃_M`:
//!
//! | quantity                          | value          |
//! |-----------------------------------|----------------|
//! | squared residual difference (SRD) | `r̃_Mᵀ u`       |
//! | squared LMOCV residual            | `uᵀ Σ^M u`     |
//! | Cook's-distance multiple          | `uᵀ H̃_M u`     |
//! | β̂ without `M`                     | `β̂ − (XᵀΣ⁻¹X)⁻¹ X̃_Mᵀ u` |
//! | tilde-space CV residual           | `Σ^M u`        |
//!
//! SRD is the drop in the generalised residual sum of squares caused by
//! deleting `M` at fixed ρ, so `(n−p−m) σ̂²₍M₎ = (n−p) σ̂² − SRD`, and it splits
//! exactly as `LMOCV² − Cook multiple`.

use crate::covariance::SubsetIndex;
use crate::error::{Error, Result};
use crate::glsfit::{tilde_block, GlsFit};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct DeletionStats<T> {
    pub subset: SubsetIndex,
    /// `r̃_Mᵀ(Σ^M − H̃_M)⁻¹r̃_M`.
    pub srd: T,
    /// Squared leave-M-out CV residual, `r̃_MᵀAΣ^MAr̃_M`.
    pub lmocv_sq: T,
    /// `r̃_MᵀAH̃_MAr̃_M = (β̂ − β̂₍M₎)ᵀXᵀΣ⁻¹X(β̂ − β̂₍M₎)`.
    pub cook_multiple: T,
    /// Cook's distance proper: `cook_multiple / (p σ̂²)`.
    pub cook_distance: T,
    pub beta_deleted: Vec<T>,
    /// `[(n−p)σ̂² − srd]/(n−p−m)`; may be negative, see `sigma2_negative`.
    pub sigma2_deleted_est: T,
    pub sigma2_negative: bool,
    /// `Ỹ_M − X̃_M β̂₍M₎ = Σ^M A r̃_M`.
    pub cv_resid_tilde: Vec<T>,
    /// `Y_M − X_M β̂₍M₎`.
    pub cv_resid_raw: Vec<T>,
}

impl<T: Real> DeletionStats<T> {
    pub fn m(&self) -> usize {
        self.subset.len()
    }
}

fn check_size<T: Real>(fit: &GlsFit<T>, m: &SubsetIndex) -> Result<()> {
    if m.len() + fit.p() >= fit.n() {
        return Err(Error::domain(format!(
            "deleting {} of {} observations leaves no residual degrees of freedom (p = {})",
            m.len(),
            fit.n(),
            fit.p()
        )));
    }
    Ok(())
}

fn singular(m: &SubsetIndex) -> Error {
    Error::DeletionSingular {
        indices: m.indices().iter().map(|i| i + 1).collect(),
    }
}

fn assemble<T: Real>(
    fit: &GlsFit<T>,
    subset: SubsetIndex,
    srd: T,
    u: &[T],
    lmocv_sq: T,
    cook: T,
    cv_tilde: Vec<T>,
) -> DeletionStats<T> {
    let idx = subset.indices();
    let xm_t = fit.tilde_x().select_rows(idx);
    let shift = fit.xtsix_inv().mul_vec(&xm_t.tr_mul_vec(u));
    let beta_deleted: Vec<T> = fit
        .beta_hat()
        .iter()
        .zip(&shift)
        .map(|(&b, &s)| b - s)
        .collect();
    let x = fit.problem().x();
    let y = fit.problem().y();
    let cv_resid_raw = idx
        .iter()
        .map(|&i| y[i] - dot(x.row(i), &beta_deleted))
        .collect();
    let n = fit.n();
    let p = fit.p();
    let sigma2_deleted_est = (fit.weighted_rss() - srd) / T::from_usize_lossy(n - p - idx.len());
    DeletionStats {
        subset,
        srd,
        lmocv_sq,
        cook_multiple: cook,
        cook_distance: cook / (T::from_usize_lossy(p) * fit.sigma2_hat()),
        beta_deleted,
        sigma2_deleted_est,
        sigma2_negative: sigma2_deleted_est < T::zero(),
        cv_resid_tilde: cv_tilde,
        cv_resid_raw,
    }
}

/// Deletion diagnostics for the subset `m`, in the precision form.
pub fn deletion_stats<T: Real>(fit: &GlsFit<T>, m: &SubsetIndex) -> Result<DeletionStats<T>> {
    check_size(fit, m)?;
    let tb = tilde_block(fit, m);
    let d = tb.sigma_sup.sub(&tb.h);
    let ch = Cholesky::new(&d).map_err(|_| singular(m))?;
    let u = ch.solve(&tb.r);
    let srd = dot(&tb.r, &u);
    let cv_tilde = tb.sigma_sup.mul_vec(&u);
    let lmocv_sq = dot(&u, &cv_tilde);
    let cook = tb.h.quad_form(&u);
    Ok(assemble(fit, m.clone(), srd, &u, lmocv_sq, cook, cv_tilde))
}

/// SRD through the partial-correlation scaling:
/// `r*_Mᵀ(C^M − H*_M)⁻¹r*_M` with `r* = S^{1/2}r̃` and `H* = S^{1/2}H̃S^{1/2}`.
pub fn srd_via_partial<T: Real>(fit: &GlsFit<T>, m: &SubsetIndex) -> Result<T> {
    check_size(fit, m)?;
    let idx = m.indices();
    let root: Vec<T> = idx.iter().map(|&i| fit.partial().s()[i].sqrt()).collect();
    let r_star: Vec<T> = idx
        .iter()
        .zip(&root)
        .map(|(&i, &s)| s * fit.tilde_r()[i])
        .collect();
    let xm = fit.tilde_x().select_rows(idx);
    let w = xm.matmul(fit.xtsix_inv());
    let c = fit.partial().principal(m);
    let d = Matrix::from_fn(idx.len(), idx.len(), |a, b| {
        c[(a, b)] - root[a] * dot(w.row(a), xm.row(b)) * root[b]
    });
    let ch = Cholesky::new(&d).map_err(|_| singular(m))?;
    Ok(dot(&r_star, &ch.solve(&r_star)))
}

/// Leave-one-out diagnostics for every observation using scalar formulas.
/// A leverage-one observation yields an error in its slot only.
pub fn loo_all<T: Real>(fit: &GlsFit<T>) -> Vec<Result<DeletionStats<T>>> {
    let n = fit.n();
    let prec_diag = fit.precision().diag();
    let lev = fit.tilde_leverage();
    let floor = T::rcond_floor();
    (0..n)
        .map(|i| {
            let subset = SubsetIndex::single(i, n)?;
            check_size(fit, &subset)?;
            let d = prec_diag[i] - lev[i];
            if !(d > floor * prec_diag[i]) {
                return Err(singular(&subset));
            }
            let r = fit.tilde_r()[i];
            let u = r / d;
            let cv_tilde = prec_diag[i] * u;
            Ok(assemble(
                fit,
                subset,
                r * u,
                &[u],
                cv_tilde * u,
                lev[i] * u * u,
                vec![cv_tilde],
            ))
        })
        .collect()
}
