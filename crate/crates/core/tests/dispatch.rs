mod common;

use ccpfr::cceval::wcc_evaluate;
use ccpfr::grid::{Bus, GridCase, Line};
use ccpfr::policy::{Deadband, DroopSet, Regime};
use ccpfr::ptdf::build_ptdf;
use ccpfr::solver::{solve_ccopf, solve_ccopf_pfr, solve_dcopf, PfrOptions, QpProblem, Status};
use ccpfr::uncertainty::{sigma_moments, WindStatistics};
use ccpfr::Error;
use common::{enumerate_active_sets, generator, study_case, two_bus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn one_bus(gens: Vec<ccpfr::grid::Generator>) -> GridCase {
    GridCase {
        slack_bus: 1,
        buses: vec![Bus { id: 1, load: 100.0 }],
        generators: gens,
        lines: vec![],
        wind_farms: vec![],
    }
}

#[test]
fn single_generator_meets_load() {
    let mut g = generator(1, 200.0, 0.0, 1.0);
    g.cost_quad = 1.0;
    let case = one_bus(vec![g]);
    let s = solve_dcopf(&case, &build_ptdf(&case).unwrap()).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!((s.p0[0] - 100.0).abs() < 1e-9);
    assert!((s.objective - 10000.0).abs() < 1e-6);
}

#[test]
fn identical_generators_split_evenly() {
    let case = one_bus(vec![generator(1, 200.0, 5.0, 0.5), generator(1, 200.0, 5.0, 0.5)]);
    let s = solve_dcopf(&case, &build_ptdf(&case).unwrap()).unwrap();
    assert!((s.p0[0] - 50.0).abs() < 1e-9 && (s.p0[1] - 50.0).abs() < 1e-9);
}

/// Equal reactances: a unit injected at bus 1 and withdrawn at bus 3 puts
/// 2/3 on line 1-3; from bus 2 it puts 1/3 on line 1-3.
#[test]
fn congested_triangle_matches_enumeration() {
    let line = |from, to, limit| Line { from, to, susceptance: 10.0, limit };
    let case = GridCase {
        slack_bus: 3,
        buses: vec![Bus { id: 1, load: 0.0 }, Bus { id: 2, load: 0.0 }, Bus { id: 3, load: 300.0 }],
        generators: vec![generator(1, 300.0, 10.0, 0.5), generator(2, 300.0, 30.0, 0.5)],
        lines: vec![line(1, 2, 1000.0), line(1, 3, 150.0), line(2, 3, 1000.0)],
        wind_farms: vec![],
    };
    let s = solve_dcopf(&case, &build_ptdf(&case).unwrap()).unwrap();

    let mut p = QpProblem::new(vec![0.02, 0.02], vec![10.0, 30.0]);
    p.push_equality(&[1.0, 1.0], 300.0);
    let flows = [[1.0 / 3.0, -1.0 / 3.0, 1000.0], [2.0 / 3.0, 1.0 / 3.0, 150.0], [1.0 / 3.0, 2.0 / 3.0, 1000.0]];
    for [a, b, limit] in flows {
        p.push_inequality(&[a, b], limit);
        p.push_inequality(&[-a, -b], limit);
    }
    for i in 0..2 {
        let mut row = [0.0; 2];
        row[i] = 1.0;
        p.push_inequality(&row, 300.0);
        row[i] = -1.0;
        p.push_inequality(&row, 0.0);
    }
    let (x, f) = enumerate_active_sets(&p).unwrap();
    assert!((x[0] - 150.0).abs() < 1e-9, "line 1-3 binds at p1 = 150");
    assert!((s.p0[0] - x[0]).abs() < 1e-6 && (s.p0[1] - x[1]).abs() < 1e-6);
    assert!((s.objective - f).abs() < 1e-6);
}

fn calm(case: &GridCase) -> WindStatistics {
    let wind = WindStatistics::from_case(case);
    WindStatistics::new(wind.means, vec![0.0; case.wind_farms.len()]).unwrap()
}

#[test]
fn ccopf_without_uncertainty_is_dcopf() {
    let case = two_bus(80.0);
    let ptdf = build_ptdf(&case).unwrap();
    let droops = DroopSet::from_case(&case).unwrap();
    let dc = solve_dcopf(&case, &ptdf).unwrap();
    let cc = solve_ccopf(&case, &ptdf, &droops, &calm(&case), 0.01).unwrap();
    for (a, b) in dc.p0.iter().zip(&cc.p0) {
        assert!((a - b).abs() < 1e-8);
    }
    assert!((dc.objective - cc.objective).abs() < 1e-6);
}

#[test]
fn ccopf_at_even_odds_has_no_margin() {
    let case = two_bus(80.0);
    let ptdf = build_ptdf(&case).unwrap();
    let droops = DroopSet::from_case(&case).unwrap();
    let dc = solve_dcopf(&case, &ptdf).unwrap();
    let cc = solve_ccopf(&case, &ptdf, &droops, &WindStatistics::from_case(&case), 0.5).unwrap();
    for (a, b) in dc.p0.iter().zip(&cc.p0) {
        assert!((a - b).abs() < 1e-8);
    }
    // Only the variance offset separates the objectives.
    let var = 100.0;
    let offset: f64 = case.generators.iter().map(|g| g.cost_quad * 0.25 * var).sum();
    assert!((cc.objective - dc.objective - offset).abs() < 1e-6);
}

#[test]
fn ccopf_tightening_binds_line() {
    let case = two_bus(80.0);
    let ptdf = build_ptdf(&case).unwrap();
    let droops = DroopSet::from_case(&case).unwrap();
    let cc = solve_ccopf(&case, &ptdf, &droops, &WindStatistics::from_case(&case), 0.05).unwrap();
    // The line carries p1 - S/2; its standard deviation is 5 MW.
    let margin = 1.6448536269514722 * 5.0;
    assert!((cc.p0[0] - (80.0 - margin)).abs() < 1e-6);
}

/// With the dead zone pushed out of reach, the secondary-only response
/// always applies. With no primary droop and no dead zone, the primary
/// regime applies the same shares, so both solves agree.
#[test]
fn unreachable_dead_zone_matches_secondary_only_affine() {
    let case = two_bus(80.0);
    let ptdf = build_ptdf(&case).unwrap();
    let droops = DroopSet::from_case(&case).unwrap();
    let wind = WindStatistics::from_case(&case);
    let far = solve_ccopf_pfr(&case, &ptdf, &droops, &wind, 0.05, Deadband::new(1e9).unwrap(), PfrOptions::default())
        .unwrap();
    let n = case.generators.len();
    let affine = DroopSet::new(vec![0.0; n], droops.alpha2.clone(), droops.gamma.clone()).unwrap();
    let zero = solve_ccopf_pfr(&case, &ptdf, &affine, &wind, 0.05, Deadband::new(0.0).unwrap(), PfrOptions::default())
        .unwrap();
    assert_eq!(far.status, Status::Optimal);
    assert_eq!(zero.status, Status::Optimal);
    for (a, b) in far.p0.iter().zip(&zero.p0) {
        assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", far.p0, zero.p0);
    }
    assert!((far.objective - zero.objective).abs() < 1e-6 * far.objective);
}

#[test]
fn pfr_without_uncertainty_is_close_to_dcopf() {
    let case = two_bus(80.0);
    let ptdf = build_ptdf(&case).unwrap();
    let droops = DroopSet::from_case(&case).unwrap();
    let dc = solve_dcopf(&case, &ptdf).unwrap();
    let pfr =
        solve_ccopf_pfr(&case, &ptdf, &droops, &calm(&case), 0.01, Deadband::new(100.0).unwrap(), PfrOptions::default())
            .unwrap();
    assert_eq!(pfr.status, Status::Optimal);
    // Calm wind never leaves the dead zone. There a deterministic limit is
    // backed off by the weight scale times ln(1/ε).
    let backoff: f64 = pfr
        .constraints
        .iter()
        .filter(|c| c.spec.regime == Regime::DeadZone)
        .map(|c| c.weight_scale * (1.0 / 0.01f64).ln())
        .fold(0.0, f64::max);
    for (a, b) in dc.p0.iter().zip(&pfr.p0) {
        assert!((a - b).abs() <= backoff + 1e-6);
    }
    assert!(backoff < 1e-2, "{backoff}");
}

#[test]
fn zero_iteration_budget_rejected() {
    let case = two_bus(80.0);
    let ptdf = build_ptdf(&case).unwrap();
    let droops = DroopSet::from_case(&case).unwrap();
    let options = PfrOptions { max_iterations: 0, ..PfrOptions::default() };
    let err = solve_ccopf_pfr(&case, &ptdf, &droops, &WindStatistics::from_case(&case), 0.01, Deadband::new(10.0).unwrap(), options);
    assert!(matches!(err, Err(Error::InvalidArgument(_))));
}

struct Study {
    case: GridCase,
    ptdf: ccpfr::ptdf::PtdfMatrix,
    droops: DroopSet,
    wind: WindStatistics,
    deadband: Deadband,
}

fn study() -> Study {
    let case = study_case();
    let ptdf = build_ptdf(&case).unwrap();
    let droops = DroopSet::from_case(&case).unwrap();
    let wind = WindStatistics::from_case(&case);
    Study { case, ptdf, droops, wind, deadband: Deadband::new(100.0).unwrap() }
}

#[test]
fn fixture_solution_properties() {
    let s = study();
    let eps = 1e-2;
    let pfr = solve_ccopf_pfr(&s.case, &s.ptdf, &s.droops, &s.wind, eps, s.deadband, PfrOptions::default()).unwrap();
    assert_eq!(pfr.status, Status::Optimal);
    assert!(pfr.iterations <= 200);
    for c in &pfr.constraints {
        assert!(c.value <= eps + 1e-6, "{} = {}", c.label, c.value);
    }

    // Ordering of the three formulations.
    let dc = solve_dcopf(&s.case, &s.ptdf).unwrap();
    let cc = solve_ccopf(&s.case, &s.ptdf, &s.droops, &s.wind, eps).unwrap();
    assert!(dc.objective <= cc.objective);
    assert!(cc.objective <= pfr.objective);

    // The worst constraint never gets worse as cuts accumulate.
    for w in pfr.violation_history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{:?}", pfr.violation_history);
    }
    assert!(*pfr.violation_history.last().unwrap() < 1e-6);

    // Every cut under-estimates ln value away from where it was taken.
    assert!(!pfr.cuts.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = pfr.p0.len();
    for _ in 0..20 {
        let step: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let shift = step.iter().sum::<f64>() / n as f64;
        let probe: Vec<f64> = pfr.p0.iter().zip(&step).map(|(p, d)| p + d - shift).collect();
        let moments = [
            sigma_moments(&s.case, &s.ptdf, &s.droops, &probe, &s.wind, Regime::DeadZone).unwrap(),
            sigma_moments(&s.case, &s.ptdf, &s.droops, &probe, &s.wind, Regime::Primary).unwrap(),
        ];
        for cut in &pfr.cuts {
            let c = pfr.constraints.iter().find(|c| c.label == cut.constraint).unwrap();
            let m = &moments[c.spec.regime.sigma() as usize];
            let truth = wcc_evaluate(&c.spec, m, &s.deadband, c.weight_scale).unwrap().log_value;
            assert!(cut.eval(&probe) <= truth + 1e-9 * truth.abs().max(1.0), "{}", cut.constraint);
        }
    }
}

#[test]
fn fixture_objectives_rise_as_risk_falls() {
    let s = study();
    let mut last = (0.0, 0.0);
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let cc = solve_ccopf(&s.case, &s.ptdf, &s.droops, &s.wind, eps).unwrap();
        let pfr = solve_ccopf_pfr(&s.case, &s.ptdf, &s.droops, &s.wind, eps, s.deadband, PfrOptions::default()).unwrap();
        assert!(cc.objective >= last.0 && pfr.objective >= last.1, "ε = {eps}");
        last = (cc.objective, pfr.objective);
    }
}

#[test]
fn solves_are_bit_identical() {
    let s = study();
    let a = solve_ccopf_pfr(&s.case, &s.ptdf, &s.droops, &s.wind, 1e-3, s.deadband, PfrOptions::default()).unwrap();
    let b = solve_ccopf_pfr(&s.case, &s.ptdf, &s.droops, &s.wind, 1e-3, s.deadband, PfrOptions::default()).unwrap();
    assert_eq!(a, b);
}
