use hyposc_core::geometry::ModelParams;
use hyposc_core::poisson::*;

#[test]
fn so22_table_holds() {
    for p in [ModelParams::unit(), ModelParams::new(1.7, 0.6).unwrap()] {
        let rep = verify_so22(&p, 300, 7);
        assert_eq!(rep.pairs.len(), 15);
        assert!(rep.passed(), "{}", rep.table());
        assert!(rep.pairs.iter().all(|c| !c.flagged));
    }
}

#[test]
fn tensor_algebra_holds_except_flagged_forms() {
    let p = ModelParams::new(0.8, 1.4).unwrap();
    let rep = verify_df_algebra(&p, 300, 11);
    assert!(rep.passed(), "{}", rep.table());
    let flagged: Vec<_> = rep.pairs.iter().filter(|c| c.flagged).collect();
    assert_eq!(flagged.len(), 3);
    assert!(flagged.iter().all(|c| !c.pass));
    for c in &rep.pairs {
        assert!(c.backend_gap.unwrap() < 1e-7, "{} {:?}", c.lhs, c.backend_gap);
    }
}

#[test]
fn fitted_coefficients_are_exact_rationals() {
    for fit in fit_df_coefficients(200, 3) {
        assert!(fit.residual < 1e-9, "{fit:?}");
        for (a, b) in fit.fitted.iter().zip(&fit.adopted) {
            assert!((a - b).abs() < 1e-8, "{fit:?}");
        }
    }
}

#[test]
fn oscillator_commutes_with_conserved_quantities() {
    let rep = verify_conservation(&ModelParams::new(1.2, 0.9).unwrap(), 300, 5);
    assert!(rep.passed(), "{}", rep.table());
}

#[test]
fn backends_agree_on_generators() {
    let p = ModelParams::unit();
    for s in sample_states(50, 9) {
        for i in 0..3 {
            for j in 0..3 {
                let f = Observable::builtin(Quantity::Boost(i));
                let g = Observable::builtin(Quantity::Rotation(j));
                let a = bracket_with(&f, &g, &s, &p, Backend::Dual).unwrap();
                let b = bracket_with(&f, &g, &s, &p, Backend::FiniteDifference).unwrap();
                assert!((a - b).abs() < 1e-7 * a.abs().max(1.0));
            }
        }
    }
}

#[test]
fn report_serializes() {
    let rep = verify_so22(&ModelParams::unit(), 10, 1);
    let json = serde_json::to_string(&rep).unwrap();
    let back: BracketReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.pairs.len(), 15);
    assert!(rep.table().lines().count() == 16);
}
