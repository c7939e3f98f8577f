use carbon_sched::cap::brute_force_cap;
use carbon_sched::trace::{Forecaster, HourlyTrace, LatencyMatrix, RegionSet};
use carbon_sched::{
    derive_weights, dispatch, solve_cap, verify_plan, CapInstance, DispatchContext, Outcome, RegionLoadState,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn alpha() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.0, 0.25, 0.5, 1.0])
}

/// Instances the exhaustive solver accepts.
fn tiny_instance() -> impl Strategy<Value = CapInstance> {
    (1usize..=3).prop_flat_map(|n| {
        (
            prop::collection::vec(1u32..600, n),
            prop::collection::vec(0u64..=6, n),
            prop::collection::vec(prop::collection::vec(0u32..50, n), n),
            1u32..60,
            prop::collection::vec(1u64..=3, n),
            1u64..=4,
            alpha(),
        )
            .prop_map(|(intensity, demand, lat, slo, cap, k, a)| {
                let lat = LatencyMatrix::from_rows(
                    lat.into_iter()
                        .map(|r| r.into_iter().map(f64::from).collect())
                        .collect(),
                )
                .unwrap();
                CapInstance::new(
                    intensity.into_iter().map(f64::from).collect(),
                    demand,
                    lat,
                    f64::from(slo),
                    cap,
                    k,
                    a,
                )
                .unwrap()
            })
    })
}

/// Larger instances, beyond brute-force reach.
fn medium_instance() -> impl Strategy<Value = CapInstance> {
    (2usize..=5).prop_flat_map(|n| {
        (
            prop::collection::vec(10u32..600, n),
            prop::collection::vec(0u64..400, n),
            prop::collection::vec(prop::collection::vec(1u32..200, n), n),
            5u32..250,
            prop::collection::vec(10u64..100, n),
            1u64..30,
            alpha(),
        )
            .prop_map(|(intensity, demand, lat, slo, cap, k, a)| {
                let lat = LatencyMatrix::from_rows(
                    lat.into_iter()
                        .map(|r| r.into_iter().map(f64::from).collect())
                        .collect(),
                )
                .unwrap();
                CapInstance::new(
                    intensity.into_iter().map(f64::from).collect(),
                    demand,
                    lat,
                    f64::from(slo),
                    cap,
                    k,
                    a,
                )
                .unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn solver_matches_oracle(inst in tiny_instance()) {
        let plan = solve_cap(&inst);
        let oracle = brute_force_cap(&inst).unwrap();
        prop_assert!((plan.objective - oracle.objective).abs() <= 1e-9,
            "solver {} oracle {}", plan.objective, oracle.objective);
        prop_assert!(verify_plan(&inst, &plan).is_empty());
    }

    #[test]
    fn solved_plans_satisfy_constraints(inst in medium_instance()) {
        let plan = solve_cap(&inst);
        let violations = verify_plan(&inst, &plan);
        prop_assert!(violations.is_empty(), "{violations:?}");
        for (j, &s) in plan.s.iter().enumerate() {
            if plan.loads()[j] == 0 {
                prop_assert_eq!(s, 0);
            }
        }
    }

    #[test]
    fn objective_non_increasing_in_ceiling(inst in tiny_instance(), extra in 1u32..40) {
        let looser = inst.with_slo(inst.slo_ms() + f64::from(extra)).unwrap();
        let tight = solve_cap(&inst).objective;
        let loose = solve_cap(&looser).objective;
        prop_assert!(loose <= tight + 1e-9, "{loose} > {tight}");
    }

    #[test]
    fn objective_invariant_to_intensity_scale(inst in tiny_instance(), factor in prop::sample::select(vec![0.1, 3.0, 10.0, 1000.0])) {
        let a = solve_cap(&inst).objective;
        let b = solve_cap(&inst.scaled_intensity(factor)).objective;
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }

    #[test]
    fn weights_are_row_stochastic(inst in medium_instance()) {
        let plan = solve_cap(&inst);
        let weights = derive_weights(&plan);
        for (i, row) in weights.w.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if plan.x[i].iter().sum::<u64>() == 0 {
                prop_assert!(weights.is_fallback(i));
            } else {
                prop_assert!((sum - 1.0).abs() <= 1e-12, "row {i} sums to {sum}");
                for (j, &w) in row.iter().enumerate() {
                    prop_assert_eq!(w > 0.0, plan.x[i][j] > 0);
                }
            }
        }
    }

    #[test]
    fn dispatch_serves_each_request_once(inst in medium_instance(), seed in any::<u64>(), extra in 0u64..200) {
        let plan = solve_cap(&inst);
        let weights = derive_weights(&plan);
        let ctx = DispatchContext::from_instance(&inst);
        let mut state = RegionLoadState::from_plan(&plan, inst.capacity());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut count = 0u64;
        for i in 0..inst.n() {
            for _ in 0..inst.demand()[i] + extra {
                let d = dispatch(i, &weights, &mut state, &ctx, &mut rng);
                count += 1;
                match d.outcome {
                    Outcome::LocalOverload => prop_assert_eq!(d.dest, i),
                    Outcome::Planned if weights.is_fallback(i) && d.dest == i => {}
                    _ => prop_assert!(inst.latency().get(i, d.dest) <= inst.slo_ms()),
                }
            }
        }
        prop_assert_eq!(state.served.iter().sum::<u64>(), count);
    }

    #[test]
    fn hourly_trace_round_trips(values in prop::collection::vec(prop::collection::vec(0u32..100_000, 1..48), 1..5), start in 0u32..1000) {
        let hours = values[0].len();
        let values: Vec<Vec<f64>> = values
            .into_iter()
            .map(|mut r| { r.resize(hours, 7); r.into_iter().map(|v| f64::from(v) / 10.0).collect() })
            .collect();
        let names: Vec<String> = (0..values.len()).map(|i| format!("r{i}")).collect();
        let regions = RegionSet::new(names).unwrap();
        let trace = HourlyTrace::new(start, values).unwrap();
        let parsed = HourlyTrace::parse(&trace.to_csv(&regions), &regions, "mem").unwrap();
        prop_assert_eq!(parsed, trace);
    }

    #[test]
    fn latency_matrix_round_trips(rows in (1usize..6).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0u32..5000, n), n))) {
        let n = rows.len();
        let m = LatencyMatrix::from_rows(rows.into_iter().map(|r| r.into_iter().map(|v| f64::from(v) / 4.0).collect()).collect()).unwrap();
        let regions = RegionSet::new((0..n).map(|i| format!("region-{i}"))).unwrap();
        prop_assert_eq!(LatencyMatrix::parse(&m.to_csv(&regions), &regions, "mem").unwrap(), m);
    }

    #[test]
    fn persistence_is_exact_on_daily_periodic_traces(day in prop::collection::vec(0u32..1000, 24), days in 1usize..4, start in 0u32..100) {
        let series: Vec<f64> = day.iter().cycle().take(24 * days).map(|&v| f64::from(v)).collect();
        let trace = HourlyTrace::new(start * 24, vec![series]).unwrap();
        let persistence = Forecaster::persistence();
        let oracle = Forecaster::oracle();
        for h in trace.start()..trace.end() {
            prop_assert_eq!(persistence.forecast(&trace, 0, h).unwrap(), oracle.forecast(&trace, 0, h).unwrap());
        }
    }
}
