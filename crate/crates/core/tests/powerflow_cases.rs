use std::path::PathBuf;

use ems_core::model::NetworkModel;
use ems_core::native::load_case;
use ems_core::powerflow::{solve_ac, AcSolver, PfOptions, Start};
use ems_core::Error;
use nalgebra::{DMatrix, DVector};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

const CASES: [&str; 8] = ["case9.m", "case14.m", "case30.m", "case39.m", "case57.m", "case118.m", "case300.m", "case2383wp.m"];

#[test]
fn open_cases_converge() {
    for name in CASES {
        let m = load_case(&data(name)).unwrap();
        let sol = solve_ac(&m, &[], Start::Flat).unwrap();
        assert!(sol.max_mismatch <= 1e-6, "{name}");
        assert!(sol.iterations <= 30);
    }
}

#[test]
fn case9_slack_output_matches_published_solution() {
    let m = load_case(&data("case9.m")).unwrap();
    let sol = solve_ac(&m, &[], Start::Flat).unwrap();
    assert!((sol.slack_p - 71.64).abs() < 0.01, "{}", sol.slack_p);
}

/// Rectangular-coordinate Newton with a finite-difference Jacobian.
fn rectangular_oracle(m: &NetworkModel) -> Vec<(f64, f64)> {
    let n = m.buses.len();
    let idx = |id: usize| m.bus_index(id).unwrap();
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, n);
    for (i, bus) in m.buses.iter().enumerate() {
        g[(i, i)] += bus.shunt_g / m.base_mva;
        b[(i, i)] += bus.shunt_b / m.base_mva;
    }
    for br in m.branches.iter().filter(|br| br.in_service) {
        let (f, t) = (idx(br.from_bus), idx(br.to_bus));
        let z2 = br.r * br.r + br.x * br.x;
        let (gs, bs) = (br.r / z2, -br.x / z2);
        let a = br.tap_ratio;
        let phi = br.phase_shift.to_radians();
        let (c, s) = (phi.cos(), phi.sin());
        g[(f, f)] += gs / (a * a);
        b[(f, f)] += (bs + br.b_charging / 2.0) / (a * a);
        g[(t, t)] += gs;
        b[(t, t)] += bs + br.b_charging / 2.0;
        // -ys / (a e^{-j phi}) and -ys / (a e^{j phi})
        g[(f, t)] += -(gs * c - bs * s) / a;
        b[(f, t)] += -(bs * c + gs * s) / a;
        g[(t, f)] += -(gs * c + bs * s) / a;
        b[(t, f)] += -(bs * c - gs * s) / a;
    }
    let mut pg = vec![0.0; n];
    let mut has_gen = vec![false; n];
    for gen in m.generators.iter().filter(|g| g.online) {
        pg[idx(gen.bus)] += gen.p_initial;
        has_gen[idx(gen.bus)] = true;
    }
    let kind: Vec<_> = m.buses.iter().map(|b| b.kind).collect();
    use ems_core::model::BusKind::*;
    let vset: Vec<f64> = m.buses.iter().map(|b| b.v_setpoint).collect();
    let mut x = DVector::<f64>::zeros(2 * n);
    for i in 0..n {
        x[2 * i] = if kind[i] == Pq { 1.0 } else { vset[i] };
    }
    let f = |x: &DVector<f64>| {
        let mut out = DVector::zeros(2 * n);
        for i in 0..n {
            let (e, fi) = (x[2 * i], x[2 * i + 1]);
            let (mut ir, mut ii) = (0.0, 0.0);
            for k in 0..n {
                ir += g[(i, k)] * x[2 * k] - b[(i, k)] * x[2 * k + 1];
                ii += g[(i, k)] * x[2 * k + 1] + b[(i, k)] * x[2 * k];
            }
            let p = e * ir + fi * ii;
            let q = fi * ir - e * ii;
            match kind[i] {
                Slack => {
                    out[2 * i] = e - vset[i];
                    out[2 * i + 1] = fi;
                }
                Pv => {
                    out[2 * i] = p - (pg[i] - m.buses[i].p_load) / m.base_mva;
                    out[2 * i + 1] = e * e + fi * fi - vset[i] * vset[i];
                }
                Pq => {
                    out[2 * i] = p - (pg[i] - m.buses[i].p_load) / m.base_mva;
                    out[2 * i + 1] = q + m.buses[i].q_load / m.base_mva;
                }
            }
        }
        out
    };
    for _ in 0..50 {
        let r = f(&x);
        if r.amax() < 1e-11 {
            break;
        }
        let mut jac = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..2 * n {
            let h = 1e-7;
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            jac.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
        }
        x -= jac.lu().solve(&r).unwrap();
    }
    (0..n).map(|i| (x[2 * i].hypot(x[2 * i + 1]), x[2 * i + 1].atan2(x[2 * i]))).collect()
}

#[test]
fn polar_newton_agrees_with_rectangular_oracle() {
    let no_q_limits = PfOptions { enforce_q_limits: false, ..PfOptions::default() };
    for name in ["case9.m", "case14.m", "case30.m"] {
        let m = load_case(&data(name)).unwrap();
        let sol = AcSolver::with_options(&m, no_q_limits).solve(&[], Start::Flat).unwrap();
        let oracle = rectangular_oracle(&m);
        for (i, &(vm, va)) in oracle.iter().enumerate() {
            assert!((sol.v_mag[i] - vm).abs() < 1e-6, "{name} bus {i}: {} vs {vm}", sol.v_mag[i]);
            assert!((sol.v_ang[i] - va).abs() < 1e-6, "{name} bus {i}: {} vs {va}", sol.v_ang[i]);
        }
    }
}

#[test]
fn lossless_branch_flows_balance_injections() {
    let mut m = load_case(&data("case14.m")).unwrap();
    for br in &mut m.branches {
        br.r = 0.0;
        br.b_charging = 0.0;
    }
    for b in &mut m.buses {
        b.shunt_g = 0.0;
    }
    m.index_and_validate().unwrap();
    let sol = solve_ac(&m, &[], Start::Flat).unwrap();
    assert!(sol.losses().abs() < 1e-6);
    // net injection at each non-slack bus from the schedule
    for (i, bus) in m.buses.iter().enumerate() {
        let mut out_flow = 0.0;
        for (k, br) in m.branches.iter().enumerate() {
            if br.from_bus == bus.id {
                out_flow += sol.p_from[k];
            }
            if br.to_bus == bus.id {
                out_flow += sol.p_to[k];
            }
        }
        let gen: f64 = m.generators.iter().filter(|g| g.online && g.bus == bus.id).map(|g| g.p_initial).sum();
        let injection = if i == m.slack_index() { sol.slack_p - bus.p_load } else { gen - bus.p_load };
        assert!((out_flow - injection).abs() / m.base_mva < 1e-6 + 1e-8, "bus {}", bus.id);
    }
}

#[test]
fn outage_override_equals_status_flag() {
    let m = load_case(&data("case30.m")).unwrap();
    let id = m.branches[5].id;
    let by_override = solve_ac(&m, &[id], Start::Flat).unwrap();
    let mut flagged = m.clone();
    flagged.branches[5].in_service = false;
    flagged.index_and_validate().unwrap();
    let by_flag = solve_ac(&flagged, &[], Start::Flat).unwrap();
    assert_eq!(by_override, by_flag);
}

#[test]
fn newton_converges_quadratically() {
    let m = load_case(&data("case118.m")).unwrap();
    let mut history = Vec::new();
    for k in 0..6 {
        let opts = PfOptions { max_iterations: k, tolerance: 1e-14, enforce_q_limits: false };
        match AcSolver::with_options(&m, opts).solve(&[], Start::Flat) {
            Err(Error::NotConverged { mismatch, .. }) => history.push(mismatch),
            Ok(sol) => history.push(sol.max_mismatch),
            Err(e) => panic!("{e}"),
        }
    }
    // once inside the quadratic basin each error is bounded by C e^2
    let tail: Vec<f64> = history.iter().copied().filter(|&e| e < 1e-1 && e > 1e-13).collect();
    assert!(tail.len() >= 2, "{history:?}");
    for w in tail.windows(2) {
        assert!(w[1] <= 10.0 * w[0] * w[0], "{history:?}");
    }
}
