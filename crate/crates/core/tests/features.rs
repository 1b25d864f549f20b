use bao::features::{apply_features, feature_scales, BalanceSpec, Transform};
use bao::linalg::Matrix;
use bao::panel::{PanelDataset, PathStrata, TreatmentPath};
use bao::rng;
use bao::simlab::gen_study1;
use proptest::prelude::*;

mod common;
use common::datasets::random_panel;

#[test]
fn identity_spec_copies_covariates() {
    let data = gen_study1(300, &mut rng::keyed(1, &[])).unwrap();
    let f = apply_features(&data, &BalanceSpec::identity(&data, None)).unwrap();
    for t in 0..2 {
        assert_eq!(&f.blocks[t], data.covariates(t));
    }
}

#[test]
fn study1_first_covariate_has_unit_sd() {
    let data = gen_study1(1000, &mut rng::keyed(2, &[])).unwrap();
    let f = apply_features(&data, &BalanceSpec::identity(&data, None)).unwrap();
    let scales = feature_scales(&f.blocks, &PathStrata::build(&data));
    let sd = scales.get(0, &TreatmentPath::root()).unwrap()[0].sd;
    assert!((sd - 1.0).abs() < 0.15, "{sd}");
}

#[test]
fn spec_with_mixed_transforms() {
    let data =
        PanelDataset::complete(vec![Matrix::from_rows(&[vec![2.0, 3.0], vec![-1.0, 4.0]], 2)], vec![vec![0], vec![1]], vec![0.0, 1.0])
            .unwrap();
    let spec: BalanceSpec = serde_json::from_str(
        r#"{"transforms": {"t1": [{"type": "square", "col": 1}, {"type": "interaction", "a": 1, "b": 2}]}, "intercept": true}"#,
    )
    .unwrap();
    let f = apply_features(&data, &spec).unwrap();
    assert_eq!(f.blocks[0].column(0), vec![4.0, 1.0]);
    assert_eq!(f.blocks[0].column(1), vec![6.0, -4.0]);
    assert!(matches!(spec.transforms_at(0)[0], Transform::Square { col: 1 }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn features_are_pure(seed in any::<u64>()) {
        let data = random_panel(seed, 40, 2, 3);
        let spec: BalanceSpec = serde_json::from_str(
            r#"{"transforms": {"t1": [{"type": "identity", "col": 1}, {"type": "square", "col": 2}],
                               "t2": [{"type": "interaction", "a": 1, "b": 3}, {"type": "indicator", "col": 2, "threshold": 0.0}]}}"#,
        ).unwrap();
        let a = apply_features(&data, &spec).unwrap();
        let b = apply_features(&data, &spec).unwrap();
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            prop_assert!(x.as_slice().iter().zip(y.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn scales_follow_affine_rescaling(seed in any::<u64>(), a in 0.1..10.0f64, b in -5.0..5.0f64) {
        let data = random_panel(seed, 50, 2, 2);
        let moved = data.map_covariate(0, 1, |x| a * x + b);
        let spec = BalanceSpec::identity(&data, None);
        let strata = PathStrata::build(&data);
        let s0 = feature_scales(&apply_features(&data, &spec).unwrap().blocks, &strata);
        let s1 = feature_scales(&apply_features(&moved, &spec).unwrap().blocks, &strata);
        let (x, y) = (s0.get(0, &TreatmentPath::root()).unwrap()[1].sd, s1.get(0, &TreatmentPath::root()).unwrap()[1].sd);
        prop_assert!((y - a * x).abs() <= 1e-9 * y.max(1.0));
    }
}
