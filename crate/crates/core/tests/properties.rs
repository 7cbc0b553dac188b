use hyposc_core::geometry::*;
use hyposc_core::invariants::*;
use hyposc_core::orbits::*;
use hyposc_core::poisson::*;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams> {
    (0.3f64..3.0, 0.5f64..3.0).prop_map(|(omega, radius)| ModelParams { omega, radius })
}

fn outer_state() -> impl Strategy<Value = PhaseState> {
    (0.05f64..3.0, -2.0f64..2.0, -3.1f64..3.1, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0)
        .prop_map(|(r, t, f, a, b, c)| PhaseState::outer(r, t, f, a, b, c).unwrap())
}

fn inner_state() -> impl Strategy<Value = PhaseState> {
    (0.05f64..1.5, 0.05f64..2.0, -3.1f64..3.1, -2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0)
        .prop_map(|(x, m, f, a, b, c)| PhaseState::inner(x, m, f, a, b, c).unwrap())
}

fn any_state() -> impl Strategy<Value = PhaseState> {
    prop_oneof![outer_state(), inner_state()]
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn embedding_lies_on_the_hyperboloid(s in any_state(), p in params()) {
        let z = embed(&s.point, &p);
        let r2 = p.radius * p.radius;
        prop_assert!((quadric(&z.z) - r2).abs() < 1e-12 * r2 * z.z.iter().map(|v| v * v).sum::<f64>().max(r2) / r2);
    }

    #[test]
    fn unembed_inverts_embed(s in any_state(), p in params()) {
        let z = embed(&s.point, &p);
        let q = unembed(&z, s.chart(), &p).unwrap();
        prop_assert!((q.q1 - s.point.q1).abs() < 1e-10);
        prop_assert!((q.q2 - s.point.q2).abs() < 1e-10);
        prop_assert!(angle_gap(q.phi, s.point.phi) < 1e-10);
    }

    #[test]
    fn lifted_momentum_is_tangent(s in any_state(), p in params()) {
        let ph = momentum_lift(&s, &p).unwrap();
        let scale = ph.z.z.iter().map(|v| v.abs()).fold(1.0, f64::max) * ph.p.iter().map(|v| v.abs()).fold(1.0, f64::max);
        prop_assert!(ph.tangency().abs() < 1e-10 * scale);
    }

    #[test]
    fn chart_momenta_invert_the_lift(s in any_state(), p in params()) {
        let ph = momentum_lift(&s, &p).unwrap();
        let back = chart_momenta(&ph.p, &s.point, &p);
        for (a, b) in back.iter().zip([s.p1, s.p2, s.pphi]) {
            prop_assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn chart_generators_match_ambient(s in outer_state(), p in params()) {
        let chart = generators(&s, &p).unwrap();
        let amb = generators_ambient(&momentum_lift(&s, &p).unwrap());
        let (a, b) = ([chart.n1, chart.n2, chart.n3, chart.l1, chart.l2, chart.l3], [amb.n1, amb.n2, amb.n3, amb.l1, amb.l2, amb.l3]);
        for (x, y) in a.iter().zip(b) {
            prop_assert!((x - y).abs() < 1e-9 * y.abs().max(1.0));
        }
    }

    #[test]
    fn first_casimir_vanishes(s in any_state(), p in params()) {
        let inv = InvariantSet::from_state(&s, &p, HamiltonianMode::Oscillator).unwrap();
        let g = inv.generators;
        let scale = (g.n1.abs() + g.n2.abs() + g.n3.abs()) * (g.l1.abs() + g.l2.abs() + g.l3.abs());
        prop_assert!(inv.casimir1.abs() < 1e-10 * scale.max(1.0));
    }

    #[test]
    fn second_casimir_is_free_energy(s in any_state(), p in params()) {
        let inv = InvariantSet::from_state(&s, &p, HamiltonianMode::Oscillator).unwrap();
        let r2 = p.radius * p.radius;
        prop_assert!((inv.casimir2 + 2.0 * r2 * inv.free_hamiltonian).abs() < 1e-9 * inv.casimir2.abs().max(1.0));
    }

    #[test]
    fn chart_l_squared_is_the_generator_form(s in any_state(), p in params()) {
        let inv = InvariantSet::from_state(&s, &p, HamiltonianMode::Free).unwrap();
        let l2 = l_squared(&s).unwrap();
        prop_assert!((l2 - inv.generators.l_squared()).abs() < 1e-10 * l2.abs().max(1.0));
    }

    #[test]
    fn hamiltonian_in_terms_of_the_tensor(s in outer_state(), p in params()) {
        let inv = InvariantSet::from_state(&s, &p, HamiltonianMode::Oscillator).unwrap();
        let d = inv.df.d;
        let r2 = p.radius * p.radius;
        let rhs = 0.5 * (-d[0][0] + d[1][1] + d[2][2]) - inv.l_squared / (2.0 * r2);
        prop_assert!((inv.hamiltonian - rhs).abs() < 1e-9 * (d[0][0].abs() + d[1][1].abs() + d[2][2].abs()).max(1.0));
    }

    #[test]
    fn weighted_contraction_vanishes(s in outer_state(), p in params()) {
        let inv = InvariantSet::from_state(&s, &p, HamiltonianMode::Oscillator).unwrap();
        let l = inv.generators.rotations();
        for k in 0..3 {
            let terms: Vec<f64> = (0..3).map(|i| GBAR[i] * l[i] * inv.df.d[i][k]).collect();
            let scale = terms.iter().map(|t| t.abs()).sum::<f64>().max(1.0);
            prop_assert!(terms.iter().sum::<f64>().abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn brackets_are_antisymmetric(s in outer_state(), p in params(), i in 0usize..3, j in 0usize..3, k in 0usize..3) {
        let f = Observable::builtin(Quantity::DemkovFradkin(i, j));
        let g = Observable::builtin(Quantity::Boost(k));
        let ab = bracket(&f, &g, &s, &p).unwrap();
        let ba = bracket(&g, &f, &s, &p).unwrap();
        prop_assert!((ab + ba).abs() < 1e-9 * ab.abs().max(1.0));
    }

    #[test]
    fn oscillator_conserves_central_quantities(s in outer_state(), p in params()) {
        let h = Observable::builtin(Quantity::Hamiltonian(HamiltonianMode::Oscillator));
        let mut qs: Vec<Observable> = (0..3).map(|i| Observable::builtin(Quantity::Rotation(i))).collect();
        qs.push(Observable::builtin(Quantity::LSquared));
        for i in 0..3 {
            for k in i..3 {
                qs.push(Observable::builtin(Quantity::DemkovFradkin(i, k)));
            }
        }
        for q in &qs {
            let v = bracket(&h, q, &s, &p).unwrap();
            prop_assert!(v.abs() < 1e-6, "{} {}", q.name, v);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobi_holds_on_the_generators(s in outer_state(), a in 0usize..6, b in 0usize..6, c in 0usize..6) {
        let p = ModelParams::unit();
        let pick = |i: usize| if i < 3 { Observable::builtin(Quantity::Rotation(i)) } else { Observable::builtin(Quantity::Boost(i - 3)) };
        let res = jacobi_residual(&pick(a), &pick(b), &pick(c), &s, &p).unwrap();
        prop_assert!(res < 1e-5, "{res}");
    }
}

fn bounded_pair() -> impl Strategy<Value = (f64, f64, ModelParams)> {
    (params(), 0.02f64..0.98, 0.02f64..0.98).prop_map(|(p, a, b)| {
        let l_sq = a * p.l_sq_ceiling();
        let e_min = eff_minimum(l_sq, &p).unwrap().1;
        (e_min + b * (p.threshold_energy() - e_min), l_sq, p)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn roots_bracket_the_motion((e, l_sq, p) in bounded_pair()) {
        let (x1, x2) = radial_roots(e, l_sq, &p).unwrap();
        prop_assert!(0.0 < x1 && x1 < x2 && x2 < 1.0);
        for x in [x1, x2] {
            let u = effective_potential(x.sqrt().atanh(), l_sq, &p).unwrap();
            prop_assert!((u - e).abs() < 1e-10 * e.max(1.0));
        }
    }

    #[test]
    fn radial_solution_stays_between_turning_points((e, l_sq, p) in bounded_pair(), t in -20.0f64..20.0) {
        let sol = radial_solution(e, l_sq, &p, 0.0).unwrap();
        let (x1, x2) = radial_roots(e, l_sq, &p).unwrap();
        let (y1, y2) = (x1 / (1.0 - x1), x2 / (1.0 - x2));
        let y = sol.y(t);
        prop_assert!(y >= y1 * (1.0 - 1e-12) && y <= y2 * (1.0 + 1e-12));
        let period = sol.period().unwrap();
        prop_assert!((sol.y(period / 4.0) - y2).abs() < 1e-10 * y2);
        prop_assert!((sol.y(-period / 4.0) - y1).abs() < 1e-10 * y2);
    }

    #[test]
    fn radial_solution_satisfies_the_energy_equation((e, l_sq, p) in bounded_pair(), t in -10.0f64..10.0) {
        let sol = radial_solution(e, l_sq, &p, 0.3).unwrap();
        let r = sol.r(t).unwrap();
        // ṙ from ẏ = 2 sinh r cosh r ṙ, then E = R²ṙ²/2 + U_eff.
        let rdot = sol.y_dot(t) / (2.0 * r.sinh() * r.cosh());
        let energy = 0.5 * p.radius.powi(2) * rdot * rdot + effective_potential(r, l_sq, &p).unwrap();
        prop_assert!((energy - e).abs() < 1e-9 * e.max(1.0));
    }

    #[test]
    fn flight_time_inverts_the_radial_solution((e, l_sq, p) in bounded_pair(), u in 0.02f64..0.98, v in 0.02f64..0.98) {
        let sol = radial_solution(e, l_sq, &p, 0.0).unwrap();
        let quarter = sol.period().unwrap() / 4.0;
        let (ta, tb) = (-quarter + u * 2.0 * quarter, -quarter + v * 2.0 * quarter);
        let tof = time_of_flight(sol.r(ta).unwrap(), sol.r(tb).unwrap(), e, l_sq, &p).unwrap();
        prop_assert!((tof - (tb - ta).abs()).abs() < 1e-8, "{tof} vs {}", (tb - ta).abs());
    }

    #[test]
    fn flight_time_between_turning_points_is_half_the_period((e, l_sq, p) in bounded_pair()) {
        let t = turning_radii(e, l_sq, &p).unwrap();
        let tof = time_of_flight(t.r_min.unwrap(), t.r_max.unwrap(), e, l_sq, &p).unwrap();
        prop_assert!((tof - period(e, &p) / 2.0).abs() < 1e-8 * period(e, &p));
    }

    #[test]
    fn conic_parameters_are_consistent((e, l_sq, p) in bounded_pair()) {
        let c = orbit_conic(e, l_sq, &p).unwrap();
        prop_assert!(c.b_sq <= c.a_sq);
        prop_assert!((c.b_sq - c.p / (1.0 + c.eps)).abs() < 1e-12);
        prop_assert!((c.a_sq - c.p / (1.0 - c.eps)).abs() < 1e-10 * c.a_sq);
        let (x1, x2) = radial_roots(e, l_sq, &p).unwrap();
        prop_assert!((c.b_sq - x1).abs() < 1e-10 && (c.a_sq - x2).abs() < 1e-10);
        // The semiaxis product equals the root product L²/(ω²R⁴).
        prop_assert!((c.a_sq * c.b_sq - l_sq / p.l_sq_ceiling()).abs() < 1e-10);
        prop_assert_eq!(c.kind, ConicKind::Ellipse);
    }

    #[test]
    fn classification_is_total(e in -5.0f64..5.0, l_sq in -5.0f64..5.0, p in params()) {
        let c = classify(e, l_sq, &p);
        match c.regime {
            RadialRegime::Inadmissible => prop_assert!(c.carrier.is_none()),
            _ => {
                let carrier = c.carrier.unwrap();
                prop_assert_eq!(carrier == Carrier::OneSheeted, l_sq < 0.0);
                prop_assert_eq!(c.period.is_some(), c.regime.is_bounded());
                prop_assert_eq!(c.conic.is_some(), l_sq > 0.0);
                prop_assert_eq!(c.regime.is_bounded(), e < p.threshold_energy());
            }
        }
        prop_assert_eq!(eff_minimum(l_sq, &p).is_some(), (0.0..p.l_sq_ceiling()).contains(&l_sq));
    }

    #[test]
    fn minimum_matches_numeric_search(p in params(), a in 0.02f64..0.98) {
        let l_sq = a * p.l_sq_ceiling();
        let (r0, e_min) = eff_minimum(l_sq, &p).unwrap();
        let (r, u) = hyposc_core::numerics::golden_section(|r| effective_potential(r, l_sq, &p).unwrap(), 1e-3, 10.0, 1e-12);
        prop_assert!((r - r0).abs() < 1e-5 * r0.max(1.0));
        prop_assert!((u - e_min).abs() < 1e-12 * e_min.max(1.0));
    }

    #[test]
    fn angular_solution_is_satisfied(s in outer_state()) {
        let a = angular_solution_from_state(&s).unwrap();
        let [_, tau, phi, ..] = s.to_array();
        prop_assert!(a.residual(tau, phi).abs() < 1e-12);
    }
}
