#![allow(dead_code)]

use std::path::PathBuf;

use ems_core::model::{Branch, Bus, BusKind, CostCurve, Generator, NetworkModel};
use ems_core::powerflow::{solve_ac, Start};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

pub fn load(name: &str) -> NetworkModel {
    ems_core::native::load_case(&data(name)).unwrap()
}

/// Lossless network with one flat-priced generator at the slack bus 1.
pub fn dc_network(n: usize, lines: &[(usize, usize, f64)]) -> NetworkModel {
    let mut buses: Vec<Bus> = (1..=n)
        .map(|i| Bus::new(i, BusKind::Pq, 0.0, 0.0))
        .collect();
    buses[0].kind = BusKind::Slack;
    let branches = lines
        .iter()
        .enumerate()
        .map(|(k, &(f, t, x))| Branch::line(k + 1, f, t, 0.0, x, 0.0))
        .collect();
    let gens = vec![Generator::new(1, 1, 0.0, 1000.0, 0.0)];
    let costs = vec![CostCurve::from_segments(1, 0.0, 0.0, &[(1000.0, 10.0)])];
    NetworkModel::new("dc", 100.0, buses, branches, gens, costs).unwrap()
}

/// DC branch flows in MW by a direct solve of the full B-θ equations with
/// the slack angle fixed, skipping branches flagged in `out`.
pub fn b_theta_flows(model: &NetworkModel, out: &[bool], injections_mw: &[f64]) -> Vec<f64> {
    let n = model.buses.len();
    let slack = model.slack_index();
    let ends: Vec<(usize, usize)> = model
        .branches
        .iter()
        .map(|b| {
            (
                model.bus_index(b.from_bus).unwrap(),
                model.bus_index(b.to_bus).unwrap(),
            )
        })
        .collect();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for (k, br) in model.branches.iter().enumerate() {
        if out[k] || !br.in_service {
            continue;
        }
        let y = 1.0 / (br.x * br.tap_ratio);
        let (f, t) = ends[k];
        b[(f, f)] += y;
        b[(t, t)] += y;
        b[(f, t)] -= y;
        b[(t, f)] -= y;
    }
    for j in 0..n {
        b[(slack, j)] = 0.0;
    }
    b[(slack, slack)] = 1.0;
    let mut p = DVector::from_iterator(n, injections_mw.iter().map(|v| v / model.base_mva));
    p[slack] = 0.0;
    let theta = b.lu().solve(&p).expect("connected network");
    model
        .branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            if out[k] || !br.in_service {
                return 0.0;
            }
            let (f, t) = ends[k];
            model.base_mva * (theta[f] - theta[t]) / (br.x * br.tap_ratio)
        })
        .collect()
}

/// Connected random network: a random spanning tree plus extra lines,
/// at most `max_branches` in total, with parallel lines allowed.
pub fn random_network(
    max_buses: usize,
    max_branches: usize,
) -> impl Strategy<Value = NetworkModel> {
    (3..=max_buses).prop_flat_map(move |n| {
        let tree = proptest::collection::vec((any::<prop::sample::Index>(), 0.01f64..0.5), n - 1);
        let extra = proptest::collection::vec(
            (0..n, 0..n, 0.01f64..0.5),
            0..=(max_branches - (n - 1)).min(2 * n),
        );
        (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
            let mut lines = Vec::new();
            for (i, (parent, x)) in tree.into_iter().enumerate() {
                let child = i + 2;
                lines.push((parent.index(child - 1) + 1, child, x));
            }
            for (a, b, x) in extra {
                if a != b {
                    lines.push((a + 1, b + 1, x));
                }
            }
            dc_network(n, &lines)
        })
    })
}

/// Balanced MW injections for the model's buses.
pub fn balanced(raw: &[f64], n: usize) -> Vec<f64> {
    let mut p: Vec<f64> = raw.iter().cycle().take(n).copied().collect();
    let mean = p.iter().sum::<f64>() / n as f64;
    p.iter_mut().for_each(|v| *v -= mean);
    p
}

/// Ring 1-2-3-4 with a cheap unit at the slack bus 1 and an expensive one
/// at bus 3. Losing line 1-2 pushes the bus-2 load around the ring over
/// line 1-4, which is rated just under that flow.
pub fn four_bus() -> NetworkModel {
    let build = |rating: f64| {
        let buses = vec![
            Bus::new(1, BusKind::Slack, 0.0, 0.0),
            Bus::new(2, BusKind::Pq, 100.0, 20.0),
            Bus::new(3, BusKind::Pv, 0.0, 0.0),
            Bus::new(4, BusKind::Pq, 0.0, 0.0),
        ];
        let mut branches = vec![
            Branch::line(1, 1, 2, 0.01, 0.1, 1000.0),
            Branch::line(2, 2, 3, 0.01, 0.1, 1000.0),
            Branch::line(3, 3, 4, 0.01, 0.1, 1000.0),
            Branch::line(4, 1, 4, 0.01, 0.1, 1000.0),
        ];
        branches[3].rate_normal = rating;
        branches[3].rate_emergency = rating;
        let gens = vec![Generator::new(1, 1, 0.0, 300.0, 100.0), Generator::new(2, 3, 0.0, 300.0, 0.0)];
        let costs = vec![
            CostCurve::from_segments(1, 0.0, 0.0, &[(300.0, 10.0)]),
            CostCurve::from_segments(2, 0.0, 0.0, &[(300.0, 25.0)]),
        ];
        NetworkModel::new("four_bus", 100.0, buses, branches, gens, costs).unwrap()
    };
    let loose = build(1000.0);
    let post = solve_ac(&loose, &[1], Start::Flat).unwrap();
    build(0.8 * post.s_flow[3])
}

/// Four-bus ring with both diagonals, a doubled 2-3 line and a dead-end
/// bus 5 hung on twin lines. Branch 5 (1-3) is rated just under its worst
/// post-outage flow.
pub fn meshed() -> NetworkModel {
    let build = |rating_5: f64| {
        let buses = vec![
            Bus::new(1, BusKind::Slack, 0.0, 0.0),
            Bus::new(2, BusKind::Pq, 80.0, 15.0),
            Bus::new(3, BusKind::Pq, 100.0, 20.0),
            Bus::new(4, BusKind::Pq, 0.0, 0.0),
            Bus::new(5, BusKind::Pq, 0.0, 0.0),
        ];
        let mut branches = vec![
            Branch::line(1, 1, 2, 0.01, 0.1, 1000.0),
            Branch::line(2, 2, 3, 0.01, 0.12, 1000.0),
            Branch::line(3, 3, 4, 0.01, 0.1, 1000.0),
            Branch::line(4, 1, 4, 0.01, 0.15, 1000.0),
            Branch::line(5, 1, 3, 0.01, 0.1, 1000.0),
            Branch::line(6, 2, 4, 0.01, 0.2, 1000.0),
            Branch::line(7, 2, 3, 0.01, 0.12, 1000.0),
            Branch::line(8, 4, 5, 0.01, 0.1, 1000.0),
            Branch::line(9, 4, 5, 0.01, 0.1, 1000.0),
        ];
        branches[4].rate_normal = rating_5;
        branches[4].rate_emergency = rating_5;
        let gens = vec![Generator::new(1, 1, 0.0, 500.0, 180.0)];
        let costs = vec![CostCurve::from_segments(1, 0.0, 0.0, &[(500.0, 10.0)])];
        NetworkModel::new("meshed", 100.0, buses, branches, gens, costs).unwrap()
    };
    let loose = build(1000.0);
    let base = solve_ac(&loose, &[], Start::Flat).unwrap();
    let worst = [1, 4, 3]
        .iter()
        .map(|&c| solve_ac(&loose, &[c], Start::Warm(&base)).unwrap().s_flow[4])
        .fold(0.0, f64::max);
    build(0.9 * worst)
}
