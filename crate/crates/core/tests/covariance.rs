mod common;

use common::{dense_sigma, gj_inverse, lu_log_det, random_panel};
use glscv::{
    build_correlation, deleted_precision, inverse_correlation, partial_correlation,
    CorrelationMatrix, CorrelationModel, Family, Groups, Matrix, SubsetIndex,
};
use proptest::prelude::*;

fn single_block(model: CorrelationModel<f64>, times: &[f64]) -> CorrelationMatrix<f64> {
    let g = Groups::from_labels(vec!["s"; times.len()]).unwrap();
    let pos: Vec<usize> = (0..times.len()).collect();
    build_correlation(&model, &g, times, &pos).unwrap()
}

#[test]
fn car1_tridiagonal_matches_dense_inverse() {
    let sigma = single_block(CorrelationModel::car1(0.5).unwrap(), &[0.0, 1.0, 3.0]);
    let prec = inverse_correlation(&sigma).unwrap().to_dense();
    let oracle = gj_inverse(&sigma.to_dense());
    assert!(prec.max_abs_diff(&oracle) < 1e-12);
    assert_eq!(prec[(0, 2)], 0.0);
    assert_eq!(prec[(2, 0)], 0.0);
}

#[test]
fn car1_partial_correlation_is_tridiagonal() {
    let sigma = single_block(CorrelationModel::car1(0.5).unwrap(), &[0.0, 1.0, 3.0]);
    let pc = partial_correlation(&inverse_correlation(&sigma).unwrap());
    let c = pc.c().to_dense();
    assert_eq!(c[(0, 2)], 0.0);
    // Dense route: S^{1/2} Σ⁻¹ S^{1/2} from the oracle inverse.
    let inv = gj_inverse(&sigma.to_dense());
    let dense_c = Matrix::from_fn(3, 3, |i, j| {
        inv[(i, j)] / (inv[(i, i)] * inv[(j, j)]).sqrt()
    });
    assert!(c.max_abs_diff(&dense_c) < 1e-12);
}

#[test]
fn ar1_middle_deletion_matches_delete_then_invert() {
    let sigma = single_block(CorrelationModel::ar1(0.5).unwrap(), &[0.0, 1.0, 2.0]);
    let prec = inverse_correlation(&sigma).unwrap();
    let m = SubsetIndex::single(1, 3).unwrap();
    let del = deleted_precision(&prec, &m).unwrap().to_dense();
    let oracle = gj_inverse(&Matrix::from_rows(&[vec![1.0, 0.25], vec![0.25, 1.0]]));
    assert!(del.max_abs_diff(&oracle) < 1e-12);
}

#[test]
fn deleted_precision_of_identity_is_identity() {
    let g = Groups::from_labels(["a", "a", "b", "c"]).unwrap();
    let sigma = build_correlation(
        &CorrelationModel::identity(),
        &g,
        &[0.0, 1.0, 0.0, 0.0],
        &[0, 1, 0, 0],
    )
    .unwrap();
    let prec = inverse_correlation(&sigma).unwrap();
    let del = deleted_precision(&prec, &SubsetIndex::new(vec![1, 3], 4).unwrap()).unwrap();
    assert_eq!(del.to_dense(), Matrix::identity(2));
}

#[test]
fn dense_fallback_for_general_blocks() {
    let block = Matrix::from_rows(&[
        vec![1.0, 0.3, 0.2],
        vec![0.3, 1.0, 0.4],
        vec![0.2, 0.4, 1.0],
    ]);
    let sigma = CorrelationMatrix::from_blocks(vec![block.clone()]);
    let prec = inverse_correlation(&sigma).unwrap();
    assert!(prec.to_dense().max_abs_diff(&gj_inverse(&block)) < 1e-12);
    assert!((prec.log_det_sigma() - lu_log_det(&block)).abs() < 1e-12);
}

#[test]
fn random_instances_product_and_log_det() {
    for seed in 0..40 {
        for (family, rho) in [
            (Family::Car1, 0.2 + 0.015 * seed as f64),
            (Family::Ar1, -0.7 + 0.035 * seed as f64),
        ] {
            let p = random_panel(seed, family, 0.5);
            let model = CorrelationModel::new(family, rho).unwrap();
            let sigma = build_correlation(&model, p.groups(), p.times(), p.positions()).unwrap();
            let dense = dense_sigma(&model, &p);
            assert!(sigma.to_dense().max_abs_diff(&dense) < 1e-15);
            let prec = inverse_correlation(&sigma).unwrap();
            // Σ·Σ⁻¹ = I and, row-wise, the dual-basis relation ⟨Ỹᵢ, Yⱼ⟩ = δᵢⱼ.
            let prod = sigma.blocks().mul_block(prec.blocks()).to_dense();
            assert!(
                prod.max_abs_diff(&Matrix::identity(p.n())) < 1e-10,
                "seed {seed}"
            );
            let dual = prec.blocks().mul_block(sigma.blocks()).to_dense();
            assert!(
                dual.max_abs_diff(&Matrix::identity(p.n())) < 1e-10,
                "seed {seed}"
            );
            let pd = prec.to_dense();
            assert!(pd.max_abs_diff(&gj_inverse(&dense)) < 1e-10, "seed {seed}");
            for i in 0..p.n() {
                for j in 0..p.n() {
                    if i.abs_diff(j) >= 2 {
                        assert_eq!(pd[(i, j)], 0.0);
                    }
                }
            }
            assert!((prec.log_det_sigma() - lu_log_det(&dense)).abs() < 1e-9);
            let pc = partial_correlation(&prec);
            let c = pc.c().to_dense();
            for i in 0..p.n() {
                assert_eq!(c[(i, i)], 1.0);
                for j in 0..i {
                    assert!((c[(i, j)] - c[(j, i)]).abs() <= 1e-12);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deleted_precision_inverts_reduced_sigma(
        seed in 0u64..1000,
        rho in 0.05f64..0.95,
        picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..6),
    ) {
        let p = random_panel(seed, Family::Car1, 0.5);
        let model = CorrelationModel::car1(rho).unwrap();
        let sigma = build_correlation(&model, p.groups(), p.times(), p.positions()).unwrap();
        let prec = inverse_correlation(&sigma).unwrap();
        let n = p.n();
        let mut idx: Vec<usize> = picks.iter().map(|ix| ix.index(n)).collect();
        idx.sort_unstable();
        idx.dedup();
        prop_assume!(idx.len() < n);
        let m = SubsetIndex::new(idx, n).unwrap();
        let del = deleted_precision(&prec, &m).unwrap();
        let keep = m.complement(n);
        let reduced = dense_sigma(&model, &p).principal(&keep);
        prop_assert!((del.log_det_sigma() - lu_log_det(&reduced)).abs() < 1e-9);
        let del = del.to_dense();
        let prod = del.matmul(&reduced);
        prop_assert!(prod.max_abs_diff(&Matrix::identity(keep.len())) < 1e-9);
        prop_assert!(del.max_abs_diff(&gj_inverse(&reduced)) < 1e-9);
    }
}
