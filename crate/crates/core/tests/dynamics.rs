use hyposc_core::dynamics::*;
use hyposc_core::geometry::*;
use hyposc_core::invariants::HamiltonianMode;
use hyposc_core::orbits::*;

const OSC: HamiltonianMode = HamiltonianMode::Oscillator;

fn run(s: &PhaseState, p: &ModelParams, t1: f64, scheme: Scheme, mode: HamiltonianMode) -> Trajectory {
    let cfg = IntegrationConfig { scheme, ..IntegrationConfig::with_span(0.0, t1) };
    integrate(s, p, &cfg, mode).unwrap()
}

#[test]
fn chart_and_ambient_schemes_agree() {
    let p = ModelParams::unit();
    let starts = [
        analytic_initial_state(0.4, 0.25, &p).unwrap(),
        analytic_initial_state(0.25, -1.0, &p).unwrap(),
        PhaseState::outer(0.8, 0.3, 1.0, 0.2, -0.4, 0.9).unwrap(),
    ];
    for s in &starts {
        for t1 in [1.0, 3.3, 7.0, 12.0] {
            let a = run(s, &p, t1, Scheme::ChartSwitching, OSC);
            let b = run(s, &p, t1, Scheme::Ambient, OSC);
            let d = phase_distance(&a.last().ambient, &b.last().ambient, &p);
            assert!(d < 1e-7, "t = {t1}: {d:e}");
        }
    }
}

#[test]
fn invariants_are_conserved_over_ten_periods() {
    let p = ModelParams::unit();
    let s = analytic_initial_state(0.4, 0.25, &p).unwrap();
    let tr = run(&s, &p, 10.0 * period(0.4, &p), Scheme::ChartSwitching, OSC);
    for name in ["H", "L1", "L2", "L3", "Lsq", "D11", "D12", "D13", "D22", "D23", "D33"] {
        let d = tr.relative_drift(name, 1.0);
        assert!(d < 1e-8, "{name}: {d:e}");
    }
    assert!(tr.max_constraint_residual() < 1e-10);
}

#[test]
fn generic_state_conserves_the_tensor() {
    let p = ModelParams::new(1.3, 0.8).unwrap();
    let s = PhaseState::outer(0.6, -0.4, 2.0, 0.3, 0.5, 0.7).unwrap();
    let tr = run(&s, &p, 15.0, Scheme::ChartSwitching, OSC);
    for name in ["H", "L1", "L2", "L3", "Lsq", "D11", "D12", "D13", "D22", "D23", "D33"] {
        let d = tr.relative_drift(name, 1.0);
        assert!(d < 1e-8, "{name}: {d:e}");
    }
}

#[test]
fn free_motion_conserves_all_generators() {
    let p = ModelParams::unit();
    let s = PhaseState::outer(0.5, 0.2, 0.3, 0.4, -0.3, 0.6).unwrap();
    let tr = run(&s, &p, 8.0, Scheme::ChartSwitching, HamiltonianMode::Free);
    for name in ["H", "N1", "N2", "N3", "L1", "L2", "L3", "C2"] {
        let d = tr.relative_drift(name, 1.0);
        assert!(d < 1e-8, "{name}: {d:e}");
    }
}

#[test]
fn radial_zero_l2_motion_matches_closed_form() {
    let p = ModelParams::unit();
    let e = 0.3;
    let s = analytic_initial_state(e, 0.0, &p).unwrap();
    let tr = run(&s, &p, 20.0, Scheme::ChartSwitching, OSC);
    let k = 2.0 * e;
    let w = (1.0 - k).sqrt();
    for smp in &tr.samples {
        let y = smp.ambient.z.z[0].powi(2) - 1.0;
        let closed = k / (1.0 - k) * (w * smp.t).cos().powi(2);
        assert!((y - closed).abs() < 1e-6, "t = {}: {y} vs {closed}", smp.t);
    }
}

#[test]
fn negative_l2_orbit_crosses_twice_per_period() {
    let p = ModelParams::unit();
    let s = analytic_initial_state(0.25, -1.0, &p).unwrap();
    let t = period(0.25, &p);
    let tr = run(&s, &p, 5.0 * t, Scheme::ChartSwitching, OSC);
    let crossings = tr.events_of(EventKind::ChartCrossing);
    assert_eq!(crossings.len(), 10);
    for k in 0..5 {
        let n = crossings.iter().filter(|e| e.t >= k as f64 * t && e.t < (k + 1) as f64 * t).count();
        assert_eq!(n, 2, "period {k}");
    }
    assert!(tr.samples.iter().any(|s| !s.state.chart().is_outer()));
    assert!(tr.relative_drift("H", 1.0) < 1e-8);
}

#[test]
fn bounded_orbits_lie_on_their_conics() {
    let p = ModelParams::unit();
    for l_sq in [0.05, 0.25, 0.6] {
        let e_min = eff_minimum(l_sq, &p).unwrap().1;
        for f in [0.1, 0.5, 0.9] {
            let e = e_min + f * (0.5 - e_min);
            let c = orbit_conic(e, l_sq, &p).unwrap();
            let s = analytic_initial_state(e, l_sq, &p).unwrap();
            let tr = run(&s, &p, period(e, &p), Scheme::ChartSwitching, OSC);
            for smp in &tr.samples {
                let [r, tau, phi, ..] = smp.state.to_array();
                assert!(tau.abs() < 1e-12);
                assert!(conic_residual(r, phi, &c) < 1e-8, "E = {e}, L^2 = {l_sq}");
            }
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let p = ModelParams::unit();
    let s = analytic_initial_state(0.25, -1.0, &p).unwrap();
    let a = run(&s, &p, 6.0, Scheme::ChartSwitching, OSC);
    let b = run(&s, &p, 6.0, Scheme::ChartSwitching, OSC);
    assert_eq!(trajectory_csv(&a), trajectory_csv(&b));
    assert_eq!(events_json(&a), events_json(&b));
}

#[test]
fn invalid_configurations_are_rejected() {
    let p = ModelParams::unit();
    let s = analytic_initial_state(0.4, 0.25, &p).unwrap();
    let cfg = IntegrationConfig { rel_tol: -1.0, ..IntegrationConfig::default() };
    assert!(integrate(&s, &p, &cfg, OSC).is_err());
    let cfg = IntegrationConfig::with_span(1.0, 0.0);
    assert!(integrate(&s, &p, &cfg, OSC).is_err());
    assert!(integrate(&s, &ModelParams { omega: 1.0, radius: -1.0 }, &IntegrationConfig::default(), OSC).is_err());
}
