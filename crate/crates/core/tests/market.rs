mod common;

use common::load;
use ems_core::market::{compute_lmps, nodal_price_gap, settle};
use ems_core::model::NetworkModel;
use ems_core::powerflow::{solve_ac, Start};
use ems_core::rtca::{run_rtca, RtcaOptions};
use ems_core::sced::{
    select_network_constraints, solve_sced, ConstraintKind, NetworkConstraint, ReserveRule,
    ScedConfig, Variant,
};

fn line_limit(branch: usize, limit: f64, ac_flow_mw: f64) -> NetworkConstraint {
    NetworkConstraint {
        kind: ConstraintKind::Base,
        branch,
        contingency: None,
        limit_mw: limit,
        is_pseudo: false,
        rating_mva: limit,
        q_mvar: 0.0,
        ac_flow_mw,
    }
}

fn config(variant: Variant) -> ScedConfig {
    ScedConfig {
        variant,
        reserve: ReserveRule::Mw(0.0),
        ..Default::default()
    }
}

#[test]
fn three_bus_prices() {
    let m = load("three_bus.json");
    let base = solve_ac(&m, &[], Start::Flat).unwrap();
    for variant in Variant::ALL {
        let sol = solve_sced(
            &m,
            &base,
            &[line_limit(2, 100.0, base.monitored_p(1))],
            &config(variant),
        )
        .unwrap();
        let lmps = compute_lmps(&m, &sol).unwrap();
        let got = lmps.total();
        for (g, want) in got.iter().zip([10.0, 20.0, 30.0]) {
            assert!((g - want).abs() < 1e-6, "{variant}: {got:?}");
        }
        let r = settle(&m, &lmps, &sol.dispatch);
        assert!((r.load_payment - 6000.0).abs() < 1e-4);
        assert!((r.generator_revenue - 3000.0).abs() < 1e-4);
        // rent of the congested line: limit times price spread across it
        assert!((r.congestion_revenue - 100.0 * 30.0).abs() < 1e-4);
        assert!((r.average_lmp - 20.0).abs() < 1e-6);
    }
}

fn rescaled(name: &str, factor: f64) -> NetworkModel {
    let mut m = load(name);
    for br in &mut m.branches {
        br.rate_emergency *= factor;
        br.rate_normal *= factor;
    }
    m.index_and_validate().unwrap();
    m
}

/// Cases with at least one binding transfer limit at the 80% base threshold.
fn congested_cases() -> Vec<NetworkModel> {
    vec![rescaled("case9.m", 0.8), rescaled("case39.m", 1.5)]
}

fn congested(
    m: &NetworkModel,
    variant: Variant,
) -> (
    ems_core::powerflow::PowerFlowSolution,
    Vec<NetworkConstraint>,
) {
    let base = solve_ac(m, &[], Start::Flat).unwrap();
    let ca = run_rtca(m, &base, RtcaOptions::default()).unwrap();
    let cfg = ScedConfig {
        pct: 80.0,
        ..config(variant)
    };
    let cons = select_network_constraints(m, &base, &ca, &cfg);
    (base, cons)
}

#[test]
fn prices_match_finite_differences() {
    for m in congested_cases() {
        for variant in [Variant::M3, Variant::M5] {
            let (base, cons) = congested(&m, variant);
            let sol = solve_sced(&m, &base, &cons, &config(variant)).unwrap();
            assert!(
                sol.constraints.iter().any(|c| c.binding),
                "{variant} has no congestion"
            );
            let lmps = compute_lmps(&m, &sol).unwrap().total();
            for i in 0..m.buses.len() {
                let mut bumped = m.clone();
                bumped.buses[i].p_load += 1.0;
                let up = solve_sced(&bumped, &base, &cons, &config(variant)).unwrap();
                let mut dropped = m.clone();
                dropped.buses[i].p_load -= 1.0;
                let down = solve_sced(&dropped, &base, &cons, &config(variant)).unwrap();
                // a degenerate vertex gives one-sided derivatives; the price lies between them
                let (lo, hi) = (
                    sol.total_cost - down.total_cost,
                    up.total_cost - sol.total_cost,
                );
                assert!(
                    lmps[i] >= lo.min(hi) - 1e-4 && lmps[i] <= lo.max(hi) + 1e-4,
                    "{variant} bus {}: lmp {} vs [{lo}, {hi}]",
                    m.buses[i].id,
                    lmps[i]
                );
            }
        }
    }
}

#[test]
fn angle_formulations_price_nodes_consistently() {
    for m in congested_cases() {
        for variant in [Variant::M4, Variant::M5] {
            let (base, cons) = congested(&m, variant);
            let sol = solve_sced(&m, &base, &cons, &config(variant)).unwrap();
            let gap = nodal_price_gap(&m, &sol).unwrap().unwrap();
            assert!(gap <= 1e-6, "{variant}: {gap}");
        }
        let (base, cons) = congested(&m, Variant::M3);
        let sol = solve_sced(&m, &base, &cons, &config(Variant::M3)).unwrap();
        assert_eq!(nodal_price_gap(&m, &sol).unwrap(), None);
    }
}

#[test]
fn settlement_accounting() {
    for m in congested_cases() {
        for variant in Variant::ALL {
            let (base, cons) = congested(&m, variant);
            let sol = solve_sced(&m, &base, &cons, &config(variant)).unwrap();
            let lmps = compute_lmps(&m, &sol).unwrap();
            let r = settle(&m, &lmps, &sol.dispatch);
            // incremental variants also pay generators for losses at the energy price
            let lossless = matches!(variant, Variant::M3 | Variant::M4 | Variant::M5);
            if lossless {
                assert!(r.congestion_revenue >= -1e-6, "{variant}: {}", r.congestion_revenue);
                // dual theory: the merchandising surplus equals the value of the transfer limits
                let rent: f64 = sol
                    .constraints
                    .iter()
                    .map(|c| c.constraint.limit_mw * c.dual.abs())
                    .sum();
                assert!(
                    (r.congestion_revenue - rent).abs() <= 1e-6 * rent.max(1.0),
                    "{variant}: {} vs {rent}",
                    r.congestion_revenue
                );
            }
            assert!(r.generator_rent >= -1e-6);

            // lifting every binding limit cannot raise what loads pay
            let relaxed: Vec<NetworkConstraint> = cons
                .iter()
                .zip(&sol.constraints)
                .map(|(c, o)| NetworkConstraint {
                    limit_mw: if o.binding {
                        c.limit_mw * 1.05
                    } else {
                        c.limit_mw
                    },
                    ..c.clone()
                })
                .collect();
            let sol2 = solve_sced(&m, &base, &relaxed, &config(variant)).unwrap();
            let r2 = settle(&m, &compute_lmps(&m, &sol2).unwrap(), &sol2.dispatch);
            assert!(sol2.total_cost <= sol.total_cost + 1e-6);
            assert!(
                r2.congestion_revenue.abs() <= r.congestion_revenue.abs() * 1.05 + 1e-6
                    || r2.load_payment <= r.load_payment + 1e-6
            );
        }
    }
}

#[test]
fn lmp_csv_has_one_row_per_bus() {
    let m = load("three_bus.json");
    let base = solve_ac(&m, &[], Start::Flat).unwrap();
    let sol = solve_sced(
        &m,
        &base,
        &[line_limit(2, 100.0, base.monitored_p(1))],
        &config(Variant::M3),
    )
    .unwrap();
    let r = settle(&m, &compute_lmps(&m, &sol).unwrap(), &sol.dispatch);
    let mut buf = Vec::new();
    ems_core::market::write_lmp_csv(&r, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "bus,lmp,energy,congestion");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,10"));
}
