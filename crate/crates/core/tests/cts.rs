mod common;

use std::collections::BTreeSet;

use common::meshed;

use ems_core::cts::{cts_effectiveness, pseudo_limit, pseudo_limits, replay_cts, run_cts, write_cts_csv, CtsOptions};
use ems_core::model::NetworkModel;
use ems_core::powerflow::{solve_ac, PowerFlowSolution, Start};
use ems_core::rtca::{run_rtca, CaReport, RtcaOptions};
use proptest::prelude::*;

fn analysed(m: &NetworkModel) -> (PowerFlowSolution, CaReport) {
    let base = solve_ac(m, &[], Start::Flat).unwrap();
    let ca = run_rtca(m, &base, RtcaOptions::default()).unwrap();
    assert!(!ca.critical_contingencies.is_empty());
    (base, ca)
}

/// Connectivity by repeated relaxation, independent of the library's graph code.
fn connected(m: &NetworkModel, out: &[usize]) -> bool {
    let mut seen = vec![false; m.buses.len()];
    seen[0] = true;
    loop {
        let mut grew = false;
        for br in m.branches.iter().filter(|b| b.in_service && !out.contains(&b.id)) {
            let (f, t) = (m.bus_index(br.from_bus).unwrap(), m.bus_index(br.to_bus).unwrap());
            if seen[f] != seen[t] {
                seen[f] = true;
                seen[t] = true;
                grew = true;
            }
        }
        if !grew {
            return seen.iter().all(|&s| s);
        }
    }
}

#[test]
fn matches_brute_force_enumeration() {
    let m = meshed();
    let (base, ca) = analysed(&m);
    let report = run_cts(&m, &base, &ca, CtsOptions { top_k: 20, prescreen: None }).unwrap();
    assert_eq!(report.results.len(), ca.critical_contingencies.len());
    for res in &report.results {
        let c = res.contingency;
        let post = solve_ac(&m, &[c], Start::Flat).unwrap();
        let violated: BTreeSet<usize> = res.violations.iter().map(|v| v.branch).collect();
        let over = |sol: &PowerFlowSolution, id: usize| {
            let k = m.branch_index(id).unwrap();
            (sol.s_flow[k] - m.branches[k].rate_emergency).max(0.0)
        };
        let original: f64 = violated.iter().map(|&b| over(&post, b)).sum();
        assert!((res.original_violation_mva - original).abs() < 1e-4);

        let mut expected = Vec::new();
        for s in m.branches.iter().map(|b| b.id) {
            if s == c || violated.contains(&s) || !connected(&m, &[c, s]) {
                continue;
            }
            let sol = solve_ac(&m, &[c, s], Start::Flat).unwrap();
            let after: f64 = violated.iter().map(|&b| over(&sol, b)).sum();
            let pareto = m.branches.iter().filter(|b| b.id != c && b.id != s).all(|b| over(&sol, b.id) <= over(&post, b.id) + 1e-9);
            expected.push((s, original - after, pareto));
        }
        assert_eq!(res.ranked.len(), expected.len(), "contingency {c}");
        for (s, red, pareto) in expected {
            let got = res.ranked.iter().find(|r| r.switch_branch == s).expect("candidate evaluated");
            assert!((got.violation_reduction_mva - red).abs() < 1e-4, "c{c} s{s}: {} vs {red}", got.violation_reduction_mva);
            assert_eq!(got.pareto, pareto, "c{c} s{s}");
        }
        assert!(res.ranked.iter().all(|r| !violated.contains(&r.switch_branch) && r.switch_branch != c));
    }
}

#[test]
fn ranking_order_and_ties() {
    let m = meshed();
    let (base, ca) = analysed(&m);
    let report = run_cts(&m, &base, &ca, CtsOptions { top_k: 3, prescreen: None }).unwrap();
    for res in &report.results {
        for w in res.ranked.windows(2) {
            let (a, b) = (w[0].violation_reduction_mva, w[1].violation_reduction_mva);
            assert!(a >= b - 1e-6);
            if (a - b).abs() < 1e-7 {
                assert!(w[0].switch_branch < w[1].switch_branch);
            }
        }
        assert!(res.top.len() <= 3);
        assert!(res.top.iter().all(|t| t.pareto && t.violation_reduction_mva > 0.0));
        let eligible: Vec<usize> =
            res.ranked.iter().filter(|r| r.pareto && r.violation_reduction_mva > 0.0).map(|r| r.switch_branch).take(3).collect();
        assert_eq!(res.top.iter().map(|t| t.switch_branch).collect::<Vec<_>>(), eligible);

        // twin lines give identical reductions and rank next to each other
        let twin = |id| res.ranked.iter().position(|r| r.switch_branch == id);
        if let (Some(a), Some(b)) = (twin(2), twin(7)) {
            assert_eq!(b, a + 1);
            assert!((res.ranked[a].violation_reduction_mva - res.ranked[b].violation_reduction_mva).abs() < 1e-6);
        }
        // opening one line of a pair feeding an empty bus changes nothing
        for dead in [8, 9] {
            let r = res.ranked.iter().find(|r| r.switch_branch == dead).unwrap();
            assert!(r.violation_reduction_mva.abs() < 1e-6);
            assert!(res.top.iter().all(|t| t.switch_branch != dead));
        }
    }
    let tau = &report.tau;
    assert_eq!(tau.len(), 3);
    assert!(tau.windows(2).all(|w| w[0] >= w[1] - 1e-9));
    assert_eq!(tau, &cts_effectiveness(&report.results, 3));
}

#[test]
fn prescreen_keeps_a_subset_with_identical_values() {
    let m = meshed();
    let (base, ca) = analysed(&m);
    let full = run_cts(&m, &base, &ca, CtsOptions { top_k: 5, prescreen: None }).unwrap();
    let screened = run_cts(&m, &base, &ca, CtsOptions { top_k: 5, prescreen: Some(2) }).unwrap();
    for (a, b) in full.results.iter().zip(&screened.results) {
        assert!(b.ranked.len() <= 2);
        for cand in &b.ranked {
            let twin = a.ranked.iter().find(|r| r.switch_branch == cand.switch_branch).unwrap();
            assert!((twin.violation_reduction_mva - cand.violation_reduction_mva).abs() < 1e-6);
        }
    }
}

#[test]
fn replay_at_the_same_point_reproduces_reductions() {
    let m = meshed();
    let (base, ca) = analysed(&m);
    let report = run_cts(&m, &base, &ca, CtsOptions::default()).unwrap();
    assert!(report.has_pareto_action());
    let replay = replay_cts(&m, &base, &ca, &report).unwrap();
    let expected: usize = report.results.iter().map(|r| r.top.len()).sum();
    assert_eq!(replay.len(), expected);
    for rec in &replay {
        let res = report.result_for(rec.contingency).unwrap();
        let cand = &res.top[rec.rank - 1];
        assert_eq!(cand.switch_branch, rec.switch_branch);
        let switched = rec.switched_violation_mva.unwrap();
        assert!((rec.unswitched_violation_mva - switched - cand.violation_reduction_mva).abs() < 1e-4);
        assert!(rec.reduces_violation());
        assert_eq!(rec.removes_violation(), switched <= 1e-6);
    }
}

#[test]
fn pseudo_limits_follow_the_chosen_candidate() {
    let m = meshed();
    let (base, ca) = analysed(&m);
    let report = run_cts(&m, &base, &ca, CtsOptions::default()).unwrap();
    for q_post in [true, false] {
        let first = pseudo_limits(&report, 1, q_post).unwrap();
        assert_eq!(first.len(), ca.violations.len());
        for p in &first {
            assert!(p.pseudo_limit_mw >= p.actual_limit_mw);
            let res = report.result_for(p.contingency).unwrap();
            let v = res.violations.iter().find(|v| v.branch == p.branch).unwrap();
            let q = if q_post { v.q_post } else { v.q_base };
            assert!((p.actual_limit_mw - (v.rate_emergency.powi(2) - q * q).sqrt()).abs() < 1e-9);
            match res.top.first() {
                Some(c) => {
                    assert_eq!(p.switch_branch, Some(c.switch_branch));
                    let s = v.rate_emergency + c.reduction_on(p.branch).max(0.0);
                    assert!((p.pseudo_limit_mw - (s * s - q * q).sqrt()).abs() < 1e-9);
                }
                None => assert_eq!(p.pseudo_limit_mw, p.actual_limit_mw),
            }
        }
        // ranks past the list fall back to the actual limit
        for p in pseudo_limits(&report, 99, q_post).unwrap() {
            assert_eq!(p.pseudo_limit_mw, p.actual_limit_mw);
            assert_eq!(p.switch_branch, None);
        }
    }
    let mut buf = Vec::new();
    write_cts_csv(&report, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: usize = report.results.iter().map(|r| r.top.len() * r.violations.len()).sum();
    assert_eq!(text.lines().count(), rows + 1);
}

#[test]
fn pseudo_limit_arithmetic() {
    // 1292.5 MVA with 147.99 MVar leaves 1284.0 MW
    let actual = pseudo_limit(1292.5, 0.0, 147.99).unwrap();
    assert!((actual - 1284.0).abs() < 0.05);
    assert!((pseudo_limit(1292.5, 45.4, 147.99).unwrap() - 1329.7).abs() < 0.05);
    assert!(pseudo_limit(100.0, -1.0, 0.0).is_err());
    assert!(pseudo_limit(100.0, 0.0, 120.0).is_err());
}

proptest! {
    #[test]
    fn pseudo_limit_grows_with_reduction(rating in 10.0f64..2000.0, frac in 0.0f64..0.99, a in 0.0f64..500.0, b in 0.0f64..500.0) {
        let q = frac * rating;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let actual = pseudo_limit(rating, 0.0, q).unwrap();
        let p_lo = pseudo_limit(rating, lo, q).unwrap();
        let p_hi = pseudo_limit(rating, hi, q).unwrap();
        prop_assert!(actual <= p_lo + 1e-9 && p_lo <= p_hi + 1e-9);
        prop_assert!(p_hi <= rating + hi + 1e-9);
    }
}
