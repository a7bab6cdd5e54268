mod common;

use common::load;
use ems_core::model::{Branch, Bus, BusKind, CostCurve, Generator, NetworkModel};
use ems_core::powerflow::{solve_ac, Start};
use ems_core::rtca::{contingency_list, run_rtca, write_violations_csv, RtcaOptions};
use ems_core::topology::find_radial_branches;

fn ring(rating_14: f64) -> NetworkModel {
    let buses = vec![
        Bus::new(1, BusKind::Slack, 0.0, 0.0),
        Bus::new(2, BusKind::Pq, 100.0, 20.0),
        Bus::new(3, BusKind::Pq, 0.0, 0.0),
        Bus::new(4, BusKind::Pq, 0.0, 0.0),
    ];
    let mut branches = vec![
        Branch::line(1, 1, 2, 0.01, 0.1, 1000.0),
        Branch::line(2, 2, 3, 0.01, 0.1, 1000.0),
        Branch::line(3, 3, 4, 0.01, 0.1, 1000.0),
        Branch::line(4, 1, 4, 0.01, 0.1, 1000.0),
    ];
    branches[3].rate_emergency = rating_14;
    branches[3].rate_normal = rating_14;
    let gens = vec![Generator::new(1, 1, 0.0, 500.0, 200.0)];
    let costs = vec![CostCurve::from_segments(1, 0.0, 0.0, &[(500.0, 10.0)])];
    NetworkModel::new("ring4", 100.0, buses, branches, gens, costs).unwrap()
}

#[test]
fn ring_single_violation_matches_direct_solve() {
    let loose = ring(1000.0);
    let direct = solve_ac(&loose, &[1], Start::Flat).unwrap();
    let post = direct.s_flow[3];
    let m = ring(0.98 * post);
    let base = solve_ac(&m, &[], Start::Flat).unwrap();
    let report = run_rtca(&m, &base, RtcaOptions::default()).unwrap();
    assert_eq!(report.cases_evaluated, 4);
    assert_eq!(report.violations.len(), 1);
    let v = &report.violations[0];
    assert_eq!((v.contingency, v.branch), (1, 4));
    assert!((v.flow_mva - post).abs() < 1e-4);
    assert!((v.overload_mva - 0.02 * post).abs() < 1e-4);
    assert!((v.overload_pct - v.overload_mva / v.rate_emergency * 100.0).abs() < 1e-12);
    assert_eq!(report.critical_contingencies.iter().copied().collect::<Vec<_>>(), vec![1]);
    assert_eq!(report.total_violation_mva, v.overload_mva);
    assert!(report.nonconverged.is_empty());
}

fn stressed_case30() -> NetworkModel {
    let mut m = load("case30.m");
    for br in &mut m.branches {
        br.rate_emergency *= 0.6;
        br.rate_normal *= 0.6;
    }
    m.index_and_validate().unwrap();
    m
}

#[test]
fn violations_match_flat_start_solves() {
    let m = stressed_case30();
    let base = solve_ac(&m, &[], Start::Flat).unwrap();
    let report = run_rtca(&m, &base, RtcaOptions::default()).unwrap();
    assert!(!report.violations.is_empty());
    for v in &report.violations {
        let flat = solve_ac(&m, &[v.contingency], Start::Flat).unwrap();
        let k = m.branch_index(v.branch).unwrap();
        assert!((flat.s_flow[k] - v.flow_mva).abs() <= 1e-4, "{} {}", v.contingency, v.branch);
        assert!(v.overload_mva > 0.0);
    }
    let total: f64 = report.violations.iter().map(|v| v.overload_mva).sum();
    assert_eq!(report.total_violation_mva, total);
    for c in &report.critical_contingencies {
        assert!(report.violations_of(*c).next().is_some());
    }
}

#[test]
fn light_load_has_no_violations() {
    let mut m = load("case30.m").with_load_scale(0.1);
    for g in &mut m.generators {
        g.p_initial *= 0.1;
        g.p_min = 0.0;
    }
    m.index_and_validate().unwrap();
    let base = solve_ac(&m, &[], Start::Flat).unwrap();
    let report = run_rtca(&m, &base, RtcaOptions::default()).unwrap();
    assert!(report.violations.is_empty());
    assert!(report.critical_contingencies.is_empty());
}

#[test]
fn radial_branches_are_skipped() {
    let m = load("case30.m");
    let radial = find_radial_branches(&m);
    assert!(!radial.is_empty());
    let list = contingency_list(&m);
    assert_eq!(list.len(), m.branches.iter().filter(|b| b.in_service).count() - radial.len());
    assert!(list.iter().all(|c| !radial.contains(&c.outaged_branch)));
    assert!(list.windows(2).all(|w| w[0].id < w[1].id));
}

#[test]
fn parallel_run_equals_serial_run() {
    let m = stressed_case30();
    let base = solve_ac(&m, &[], Start::Flat).unwrap();
    let parallel = run_rtca(&m, &base, RtcaOptions::default()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| run_rtca(&m, &base, RtcaOptions::default()).unwrap());
    assert_eq!(parallel, serial);
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_violations_csv(&parallel, &mut a).unwrap();
    write_violations_csv(&serial, &mut b).unwrap();
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with("contingency,branch,flow_mva"));
}
