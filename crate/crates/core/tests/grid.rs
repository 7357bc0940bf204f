use asse_core::grid::*;
use asse_core::uncertainty::Marginal;
use asse_core::Error;
use proptest::prelude::*;

const CASE9: &str = include_str!("data/case9.m");

/// Objective of the unmodified 9-bus OPF reported by PYPOWER's `runopf`.
const CASE9_GOLDEN_OBJECTIVE: f64 = 5296.686523629813;

fn case9() -> PowerSystemCase {
    parse_matpower_case(CASE9).unwrap()
}

fn bus(id: usize, kind: BusType, pd: f64, qd: f64) -> Bus {
    Bus {
        id,
        kind,
        pd,
        qd,
        gs: 0.0,
        bs: 0.0,
        area: 1.0,
        vm: 1.0,
        va: 0.0,
        base_kv: 345.0,
        zone: 1.0,
        vmax: 1.1,
        vmin: 0.9,
    }
}

fn line(from: usize, to: usize, r: f64, x: f64, rate: f64) -> Branch {
    Branch {
        from,
        to,
        r,
        x,
        b: 0.0,
        rate_a: rate,
        rate_b: rate,
        rate_c: rate,
        ratio: 0.0,
        angle: 0.0,
        in_service: true,
        angmin: -360.0,
        angmax: 360.0,
    }
}

fn unit(bus: usize, pg: f64, cost: (f64, f64, f64)) -> Generator {
    Generator {
        bus,
        pg,
        qg: 0.0,
        qmax: 300.0,
        qmin: -300.0,
        vg: 1.0,
        mbase: 100.0,
        in_service: true,
        pmax: 250.0,
        pmin: 0.0,
        cost: GenCost {
            startup: 0.0,
            shutdown: 0.0,
            c2: cost.0,
            c1: cost.1,
            c0: cost.2,
        },
    }
}

#[test]
fn parses_case9() {
    let case = case9();
    assert_eq!(case.base_mva, 100.0);
    assert_eq!(case.buses.len(), 9);
    assert_eq!(case.generators.len(), 3);
    assert_eq!(case.branches.len(), 9);
    let costs: Vec<(f64, f64, f64)> = case.generators.iter().map(|g| (g.cost.c2, g.cost.c1, g.cost.c0)).collect();
    assert_eq!(costs, vec![(0.11, 5.0, 150.0), (0.085, 1.2, 600.0), (0.1225, 1.0, 335.0)]);
    assert_eq!(case.buses[4].pd, 90.0);
    assert_eq!(case.branches[2].rate_a, 150.0);
}

#[test]
fn empty_input_reports_missing_base() {
    let err = parse_matpower_case("").unwrap_err();
    assert!(err.to_string().contains("missing baseMVA"), "{err}");
}

#[test]
fn comments_do_not_change_the_result() {
    let mut noisy = String::new();
    for l in CASE9.lines() {
        noisy.push_str("% interleaved comment\n");
        noisy.push_str(l);
        noisy.push('\n');
    }
    assert_eq!(parse_matpower_case(&noisy).unwrap(), case9());
}

#[test]
fn missing_section_is_named() {
    let start = CASE9.find("mpc.gencost").unwrap();
    let err = parse_matpower_case(&CASE9[..start]).unwrap_err();
    assert_eq!(err, Error::MissingSection("gencost".into()));
}

#[test]
fn bad_token_reports_line() {
    let text = CASE9.replacen("0.0576", "0.05x6", 1);
    let line = text.lines().position(|l| l.contains("0.05x6")).unwrap() + 1;
    match parse_matpower_case(&text) {
        Err(Error::Parse { line: got, .. }) => assert_eq!(got, line),
        other => panic!("{other:?}"),
    }
}

#[test]
fn piecewise_cost_is_unsupported() {
    let text = CASE9.replacen("2\t1500\t0\t3\t0.11\t5\t150", "1\t1500\t0\t2\t0\t0\t100\t1000", 1);
    assert!(matches!(parse_matpower_case(&text), Err(Error::Unsupported(_))));
}

#[test]
fn case9_round_trips() {
    let case = case9();
    assert_eq!(parse_matpower_case(&to_matpower(&case, "case9")).unwrap(), case);
}

fn arb_case() -> impl Strategy<Value = PowerSystemCase> {
    (2usize..8, any::<u64>()).prop_flat_map(|(nb, _)| {
        let buses = proptest::collection::vec(
            (-50.0..200.0f64, -50.0..80.0f64, 0.0..0.5f64, 0.85..0.95f64, 1.05..1.15f64),
            nb,
        );
        let branches = proptest::collection::vec(
            (1..=nb, 1..=nb, 0.0..0.05f64, 0.01..0.3f64, 0.0..0.4f64, 0.0..400.0f64, 0.9..1.1f64),
            1..12,
        );
        let gens = proptest::collection::vec(
            (1..=nb, 0.0..100.0f64, 100.0..300.0f64, 0.0..0.2f64, 0.0..10.0f64, 0.0..1000.0f64),
            1..4,
        );
        (Just(nb), buses, branches, gens, 1.0..1000.0f64)
    })
    .prop_map(|(nb, buses, branches, gens, base)| PowerSystemCase {
        base_mva: base,
        buses: buses
            .into_iter()
            .enumerate()
            .map(|(i, (pd, qd, gs, vmin, vmax))| Bus {
                gs,
                vmin,
                vmax,
                ..bus(i + 1, if i == 0 { BusType::Slack } else if i % 3 == 1 { BusType::Pv } else { BusType::Pq }, pd, qd)
            })
            .collect(),
        branches: branches
            .into_iter()
            .map(|(f, t, r, x, b, rate, ratio)| Branch {
                b,
                ratio,
                angle: r * 100.0,
                in_service: rate > 20.0,
                ..line(f, t, r, x, rate)
            })
            .collect(),
        generators: gens
            .into_iter()
            .map(|(b, pmin, pmax, c2, c1, c0)| Generator {
                pmin,
                pmax,
                ..unit(b.min(nb), pmin, (c2, c1, c0))
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn parse_serialize_parse_is_identity(case in arb_case()) {
        let text = to_matpower(&case, "random");
        let once = parse_matpower_case(&text).unwrap();
        prop_assert_eq!(&once, &case);
        let twice = parse_matpower_case(&to_matpower(&once, "random")).unwrap();
        prop_assert_eq!(twice, once);
    }
}

#[test]
fn zero_load_flat_start_converges_immediately() {
    let case = PowerSystemCase {
        base_mva: 100.0,
        buses: vec![bus(1, BusType::Slack, 0.0, 0.0), bus(2, BusType::Pq, 0.0, 0.0)],
        branches: vec![line(1, 2, 0.01, 0.1, 0.0)],
        generators: vec![unit(1, 0.0, (0.0, 1.0, 0.0))],
    };
    let pf = newton_power_flow(&case, None).unwrap();
    assert!(pf.converged);
    assert!(pf.iterations <= 1);
    assert!(pf.va.iter().all(|a| a.abs() < 1e-12));
    assert!(pf.vm.iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn two_bus_lossless_angle() {
    let mut g2 = unit(2, 0.0, (0.0, 1.0, 0.0));
    g2.vg = 1.0;
    let case = PowerSystemCase {
        base_mva: 100.0,
        buses: vec![bus(1, BusType::Slack, 0.0, 0.0), bus(2, BusType::Pv, 100.0, 0.0)],
        branches: vec![line(1, 2, 0.0, 0.1, 0.0)],
        generators: vec![unit(1, 0.0, (0.0, 1.0, 0.0)), g2],
    };
    let pf = newton_power_flow(&case, None).unwrap();
    assert!(pf.converged);
    // 10 sin(θ₁ − θ₂) = 1
    let expected = -(0.1f64).asin();
    assert!((pf.va[1] - expected).abs() < 1e-10, "{}", pf.va[1]);
    assert!((pf.va[1] + 0.100167).abs() < 1e-6);
    assert!((pf.pg[0] - 100.0).abs() < 1e-6);
}

#[test]
fn case9_power_flow_is_self_consistent() {
    let case = case9();
    let pf = newton_power_flow(&case, None).unwrap();
    assert!(pf.converged);
    assert!(pf.mismatch < 1e-8, "{}", pf.mismatch);
    // Re-substituting the solution leaves no further Newton step.
    let again = newton_power_flow(&case, Some((&pf.vm, &pf.va))).unwrap();
    assert!(again.converged && again.iterations == 0);
}

#[test]
fn singular_network_does_not_panic() {
    let case = PowerSystemCase {
        base_mva: 100.0,
        buses: vec![bus(1, BusType::Slack, 0.0, 0.0), bus(2, BusType::Pq, 50.0, 10.0)],
        branches: vec![Branch {
            in_service: false,
            ..line(1, 2, 0.0, 0.1, 0.0)
        }],
        generators: vec![unit(1, 0.0, (0.0, 1.0, 0.0))],
    };
    let pf = newton_power_flow(&case, None).unwrap();
    assert!(!pf.converged);
}

#[test]
fn symmetric_two_unit_dispatch_splits_evenly() {
    let case = PowerSystemCase {
        base_mva: 100.0,
        buses: vec![
            bus(1, BusType::Slack, 0.0, 0.0),
            bus(2, BusType::Pv, 0.0, 0.0),
            bus(3, BusType::Pq, 100.0, 0.0),
        ],
        branches: vec![line(1, 3, 0.0, 0.05, 0.0), line(2, 3, 0.0, 0.05, 0.0)],
        generators: vec![unit(1, 0.0, (0.1, 10.0, 0.0)), unit(2, 0.0, (0.1, 10.0, 0.0))],
    };
    let sol = solve_ac_opf(&case).unwrap();
    assert!(sol.converged(), "{sol:?}");
    assert!((sol.pg[0] - 50.0).abs() < 1e-4, "{:?}", sol.pg);
    assert!((sol.pg[1] - 50.0).abs() < 1e-4, "{:?}", sol.pg);
}

fn check_contract(case: &PowerSystemCase, sol: &OpfSolution) {
    assert!(sol.converged());
    assert!(sol.mismatch < 1e-8, "mismatch {}", sol.mismatch);
    assert!(sol.max_violation < 1e-6, "violation {}", sol.max_violation);
    let net = Network::new(case).unwrap();
    for (i, b) in case.buses.iter().enumerate() {
        assert!(sol.vm[i] <= b.vmax + 1e-6 && sol.vm[i] >= b.vmin - 1e-6);
    }
    for (g, gen) in case.generators.iter().enumerate() {
        assert!(sol.pg[g] <= gen.pmax + 1e-4 && sol.pg[g] >= gen.pmin - 1e-4);
        assert!(sol.qg[g] <= gen.qmax + 1e-4 && sol.qg[g] >= gen.qmin - 1e-4);
    }
    for ((sf, st), rate) in net.branch_flows(&sol.vm, &sol.va).into_iter().zip(net.branch_ratings()) {
        if rate > 0.0 {
            assert!(sf <= rate + 1e-6 && st <= rate + 1e-6);
        }
    }
    let cost = case.total_cost(&sol.pg);
    assert!((sol.objective - cost).abs() <= 1e-8 * cost.abs());
}

#[test]
fn case9_opf_matches_reference() {
    let case = case9();
    let sol = solve_ac_opf(&case).unwrap();
    check_contract(&case, &sol);
    let rel = (sol.objective - CASE9_GOLDEN_OBJECTIVE).abs() / CASE9_GOLDEN_OBJECTIVE;
    assert!(rel < 1e-3, "objective {} vs {}", sol.objective, CASE9_GOLDEN_OBJECTIVE);
    // Dispatch from the same reference run.
    for (got, want) in sol.pg.iter().zip([89.7986, 134.3207, 94.1874]) {
        assert!((got - want).abs() < 1e-3, "{:?}", sol.pg);
    }
}

#[test]
fn case9_opf_is_locally_optimal() {
    let case = case9();
    let sol = solve_ac_opf(&case).unwrap();
    assert!(sol.converged());
    for g in 0..case.generators.len() {
        if case.buses[case.bus_index()[&case.generators[g].bus]].kind == BusType::Slack {
            continue;
        }
        for delta in [-0.1, 0.1] {
            let mut perturbed = case.clone();
            for (k, gen) in perturbed.generators.iter_mut().enumerate() {
                gen.pg = sol.pg[k];
                gen.qg = sol.qg[k];
                gen.vg = sol.vm[case.bus_index()[&gen.bus]];
            }
            perturbed.generators[g].pg += delta;
            let pf = newton_power_flow(&perturbed, Some((&sol.vm, &sol.va))).unwrap();
            assert!(pf.converged);
            let cost = case.total_cost(&pf.pg);
            assert!(cost >= sol.objective - 1e-4, "Pg{} {delta:+}: {cost} < {}", g + 1, sol.objective);
        }
    }
}

#[test]
fn perturbed_cases_satisfy_the_contract() {
    let base = case9();
    let res = ResModel::default();
    let roles = [
        InputRole::Wind,
        InputRole::Irradiance,
        InputRole::Load { bus: 5 },
        InputRole::Load { bus: 7 },
        InputRole::Load { bus: 9 },
    ];
    for zeta in [
        [2.0, 0.0, 90.0, 100.0, 125.0],
        [12.0, 1.0, 85.0, 95.0, 120.0],
        [8.0, 0.4, 95.0, 105.0, 131.0],
        [30.0, 0.9, 90.0, 104.0, 118.0],
    ] {
        let (case, _) = apply_uncertainty(&base, &res, &roles, &zeta).unwrap();
        let sol = solve_ac_opf(&case).unwrap();
        check_contract(&case, &sol);
    }
}

#[test]
fn wind_curve_and_pv() {
    let res = ResModel::default();
    assert_eq!(res_power(&res, 12.0, 0.0).unwrap(), (100.0, 0.0));
    assert_eq!(res_power(&res, 2.9, 0.0).unwrap().0, 0.0);
    assert_eq!(res_power(&res, 25.1, 0.0).unwrap().0, 0.0);
    assert_eq!(res_power(&res, 20.0, 0.0).unwrap().0, 100.0);
    let mid = res_power(&res, 7.5, 0.5).unwrap();
    assert!((mid.0 - 100.0 * (7.5f64.powi(3) - 27.0) / (1728.0 - 27.0)).abs() < 1e-12);
    assert_eq!(mid.1, 50.0);
    assert!(res_power(&res, 5.0, 1.01).is_err());
    assert!(res_power(&res, -1.0, 0.5).is_err());
}

#[test]
fn mean_pv_output_under_beta_irradiance() {
    let res = ResModel::default();
    let beta = Marginal::beta(1.7, 0.74).unwrap();
    // Midpoint rule on the quantile function.
    let n = 200_000;
    let mean: f64 = (0..n)
        .map(|i| res.pv_power(beta.quantile((i as f64 + 0.5) / n as f64).unwrap()).unwrap())
        .sum::<f64>()
        / n as f64;
    let oracle = 100.0 * 1.7 / (1.7 + 0.74);
    assert!((mean - oracle).abs() < 1e-2, "{mean} vs {oracle}");
    assert!((oracle - 69.67).abs() < 5e-3);
}

#[test]
fn uncertainty_mapping() {
    let base = case9();
    let snapshot = base.clone();
    let res = ResModel::default();
    let roles = [
        InputRole::Wind,
        InputRole::Irradiance,
        InputRole::Load { bus: 5 },
        InputRole::Load { bus: 7 },
        InputRole::Load { bus: 9 },
    ];

    let (nominal, diag) = apply_uncertainty(&base, &res, &roles, &[0.0, 0.0, 90.0, 100.0, 125.0]).unwrap();
    assert_eq!(nominal, base);
    assert_eq!(diag.clamped_loads, 0);

    let (scaled, _) = apply_uncertainty(&base, &res, &roles, &[0.0, 0.0, 94.5, 100.0, 125.0]).unwrap();
    assert!((scaled.buses[4].qd - 31.5).abs() < 1e-12);

    let (full, _) = apply_uncertainty(&base, &res, &roles, &[12.0, 1.0, 90.0, 100.0, 125.0]).unwrap();
    assert_eq!(full.buses[1].pd, -100.0);
    assert_eq!(full.buses[2].pd, -100.0);
    assert!(full.generators.iter().all(|g| g.in_service));

    let (clamped, diag) = apply_uncertainty(&base, &res, &roles, &[0.0, 0.0, -3.0, 100.0, 125.0]).unwrap();
    assert_eq!(diag.clamped_loads, 1);
    assert_eq!(clamped.buses[4].pd, 0.0);
    assert_eq!(clamped.buses[4].qd, 0.0);

    let replace = ResModel {
        mode: ResMode::Replace,
        ..ResModel::default()
    };
    let (replaced, _) = apply_uncertainty(&base, &replace, &roles, &[12.0, 1.0, 90.0, 100.0, 125.0]).unwrap();
    assert!(!replaced.generators[1].in_service && !replaced.generators[2].in_service);

    assert_eq!(base, snapshot);
    assert!(apply_uncertainty(&base, &res, &roles[..2], &[1.0]).is_err());
    assert!(apply_uncertainty(&base, &res, &[InputRole::Load { bus: 42 }], &[1.0]).is_err());
}
