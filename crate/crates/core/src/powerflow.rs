//! Newton–Raphson AC power flow in polar coordinates.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::export::write_table;
use crate::linalg::{minimum_degree_order, CscMatrix, SparseLu};
use crate::model::{BusKind, NetworkModel};
use crate::topology;

#[derive(Debug, Clone, Copy)]
pub struct PfOptions {
    /// pu, applied to both P and Q mismatch
    pub tolerance: f64,
    pub max_iterations: usize,
    pub enforce_q_limits: bool,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions { tolerance: 1e-6, max_iterations: 30, enforce_q_limits: true }
    }
}

/// Q-limit checks start once the mismatch falls below this (pu).
const Q_CHECK_MISMATCH: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    /// radians
    pub v_ang: Vec<f64>,
    /// MW / MVar per branch, measured at each end flowing into the branch
    pub p_from: Vec<f64>,
    pub q_from: Vec<f64>,
    pub p_to: Vec<f64>,
    pub q_to: Vec<f64>,
    /// MVA, larger of the two ends
    pub s_flow: Vec<f64>,
    /// MW / MVar generated at the slack bus
    pub slack_p: f64,
    pub slack_q: f64,
    /// MVar produced by generators at each bus
    pub q_gen: Vec<f64>,
    /// Bus types after PV-to-PQ conversion.
    pub bus_kinds: Vec<BusKind>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    /// Signed MW flow at the end that carries the monitoring value.
    pub fn monitored_p(&self, k: usize) -> f64 {
        if self.end_mva(k, true) >= self.end_mva(k, false) {
            self.p_from[k]
        } else {
            -self.p_to[k]
        }
    }

    /// Reactive flow at the monitored end, same orientation as `monitored_p`.
    pub fn monitored_q(&self, k: usize) -> f64 {
        if self.end_mva(k, true) >= self.end_mva(k, false) {
            self.q_from[k]
        } else {
            -self.q_to[k]
        }
    }

    fn end_mva(&self, k: usize, from: bool) -> f64 {
        if from {
            self.p_from[k].hypot(self.q_from[k])
        } else {
            self.p_to[k].hypot(self.q_to[k])
        }
    }

    /// Total active losses in MW.
    pub fn losses(&self) -> f64 {
        self.p_from.iter().zip(&self.p_to).map(|(a, b)| a + b).fold(0.0, |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Start<'a> {
    Flat,
    Warm(&'a PowerFlowSolution),
}

/// Admittance matrix stored by rows, diagonal included.
struct Ybus {
    rows: Vec<Vec<(usize, Complex64)>>,
}

struct BranchAdmittance {
    ff: Complex64,
    ft: Complex64,
    tf: Complex64,
    tt: Complex64,
}

fn branch_admittance(model: &NetworkModel, k: usize) -> BranchAdmittance {
    let br = &model.branches[k];
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
    let bc = Complex64::new(0.0, br.b_charging / 2.0);
    let tap = Complex64::from_polar(br.tap_ratio, br.phase_shift.to_radians());
    BranchAdmittance {
        ff: (ys + bc) / (tap * tap.conj()),
        ft: -ys / tap.conj(),
        tf: -ys / tap,
        tt: ys + bc,
    }
}

fn build_ybus(model: &NetworkModel, out: &[bool]) -> Ybus {
    let n = model.buses.len();
    let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    let mut add = |i: usize, k: usize, y: Complex64| match rows[i].iter_mut().find(|e| e.0 == k) {
        Some(e) => e.1 += y,
        None => rows[i].push((k, y)),
    };
    for (i, b) in model.buses.iter().enumerate() {
        add(i, i, Complex64::new(b.shunt_g, b.shunt_b) / model.base_mva);
    }
    for (k, br) in model.branches.iter().enumerate() {
        if out[k] {
            continue;
        }
        let f = model.bus_index(br.from_bus).unwrap();
        let t = model.bus_index(br.to_bus).unwrap();
        let y = branch_admittance(model, k);
        add(f, f, y.ff);
        add(f, t, y.ft);
        add(t, f, y.tf);
        add(t, t, y.tt);
    }
    for r in &mut rows {
        r.sort_by_key(|e| e.0);
    }
    Ybus { rows }
}

/// Reusable solver holding the fill-reducing ordering of a model.
pub struct AcSolver<'m> {
    model: &'m NetworkModel,
    order: Vec<usize>,
    has_gen: Vec<bool>,
    options: PfOptions,
}

impl<'m> AcSolver<'m> {
    pub fn new(model: &'m NetworkModel) -> Self {
        Self::with_options(model, PfOptions::default())
    }

    pub fn with_options(model: &'m NetworkModel, options: PfOptions) -> Self {
        // every branch counts regardless of status, so one ordering serves
        // all switching states
        let edges = model
            .branches
            .iter()
            .map(|b| (model.bus_index(b.from_bus).unwrap(), model.bus_index(b.to_bus).unwrap()));
        let bus_order = minimum_degree_order(model.buses.len(), edges);
        let order = bus_order.iter().flat_map(|&b| [2 * b, 2 * b + 1]).collect();
        let mut has_gen = vec![false; model.buses.len()];
        for g in model.generators.iter().filter(|g| g.online) {
            has_gen[model.bus_index(g.bus).unwrap()] = true;
        }
        AcSolver { model, order, has_gen, options }
    }

    pub fn model(&self) -> &NetworkModel {
        self.model
    }

    /// Solves with the branches whose ids are in `outaged` forced out of
    /// service in addition to the model's own status flags.
    pub fn solve(&self, outaged: &[usize], start: Start<'_>) -> Result<PowerFlowSolution> {
        let model = self.model;
        let n = model.buses.len();
        let mut out: Vec<bool> = model.branches.iter().map(|b| !b.in_service).collect();
        let mut out_pos = Vec::with_capacity(outaged.len());
        for &id in outaged {
            let k = model
                .branch_index(id)
                .ok_or_else(|| Error::Invalid(format!("unknown branch {id} in outage set")))?;
            out[k] = true;
            out_pos.push(k);
        }

        let slack = model.slack_index();
        let live = topology::reachable(model, &out_pos, slack);

        // scheduled injections in pu
        let mut p_gen = vec![0.0; n];
        let mut q_max = vec![0.0; n];
        let mut q_min = vec![0.0; n];
        let has_gen = &self.has_gen;
        for g in model.generators.iter().filter(|g| g.online) {
            let i = model.bus_index(g.bus).unwrap();
            p_gen[i] += g.p_initial;
            q_max[i] += g.q_max;
            q_min[i] += g.q_min;
        }
        let stranded: Vec<usize> = (0..n)
            .filter(|&i| {
                !live[i]
                    && (model.buses[i].p_load != 0.0 || model.buses[i].q_load != 0.0 || (has_gen[i] && p_gen[i] != 0.0))
            })
            .map(|i| model.buses[i].id)
            .collect();
        if !stranded.is_empty() {
            return Err(Error::IsolatedIsland(stranded));
        }
        let base = model.base_mva;
        let p_spec: Vec<f64> = (0..n).map(|i| (p_gen[i] - model.buses[i].p_load) / base).collect();
        let mut q_spec: Vec<f64> = (0..n).map(|i| -model.buses[i].q_load / base).collect();

        let mut kinds: Vec<BusKind> = model
            .buses
            .iter()
            .zip(has_gen)
            .map(|(b, &g)| if b.kind == BusKind::Pv && !g { BusKind::Pq } else { b.kind })
            .collect();
        let (mut vm, mut va): (Vec<f64>, Vec<f64>) = match start {
            Start::Flat => (
                model.buses.iter().zip(&kinds).map(|(b, k)| if *k == BusKind::Pq { 1.0 } else { b.v_setpoint }).collect(),
                vec![0.0; n],
            ),
            Start::Warm(sol) => {
                kinds.clone_from(&sol.bus_kinds);
                (sol.v_mag.clone(), sol.v_ang.clone())
            }
        };
        if let Start::Warm(sol) = start {
            // carried-over PQ conversions keep their limit as the Q schedule
            for i in 0..n {
                if model.buses[i].kind == BusKind::Pv && kinds[i] == BusKind::Pq && has_gen[i] {
                    q_spec[i] += sol.q_gen[i] / base;
                }
            }
        }
        for i in 0..n {
            if !live[i] {
                vm[i] = 1.0;
                va[i] = 0.0;
            }
        }

        let ybus = build_ybus(model, &out);
        let mut iterations = 0;
        let mut mismatch;
        loop {
            let s = injections(&ybus, &vm, &va);
            let f = residual(&s, &p_spec, &q_spec, &kinds, &live, slack);
            mismatch = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if self.options.enforce_q_limits && mismatch < Q_CHECK_MISMATCH {
                let mut switched = false;
                for i in 0..n {
                    if kinds[i] != BusKind::Pv || !live[i] {
                        continue;
                    }
                    let qg = (s[i].im * base) + model.buses[i].q_load;
                    let limit = if qg > q_max[i] {
                        q_max[i]
                    } else if qg < q_min[i] {
                        q_min[i]
                    } else {
                        continue;
                    };
                    kinds[i] = BusKind::Pq;
                    q_spec[i] = (limit - model.buses[i].q_load) / base;
                    switched = true;
                }
                if switched {
                    let f = residual(&s, &p_spec, &q_spec, &kinds, &live, slack);
                    mismatch = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                }
            }
            if mismatch <= self.options.tolerance {
                break;
            }
            if iterations == self.options.max_iterations || !mismatch.is_finite() || mismatch > 1e8 {
                return Err(Error::NotConverged { iterations, mismatch });
            }
            let f = residual(&s, &p_spec, &q_spec, &kinds, &live, slack);
            let jac = jacobian(&ybus, &vm, &va, &s, &kinds, &live, slack);
            let lu = SparseLu::factor(&jac, &self.order)?;
            let mut dx: Vec<f64> = f.iter().map(|v| -v).collect();
            lu.solve_in_place(&mut dx);
            for i in 0..n {
                va[i] += dx[2 * i];
                vm[i] += dx[2 * i + 1];
            }
            iterations += 1;
        }

        Ok(self.finish(&ybus, &out, vm, va, kinds, iterations, mismatch, slack))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        ybus: &Ybus,
        out: &[bool],
        vm: Vec<f64>,
        va: Vec<f64>,
        kinds: Vec<BusKind>,
        iterations: usize,
        mismatch: f64,
        slack: usize,
    ) -> PowerFlowSolution {
        let model = self.model;
        let base = model.base_mva;
        let nb = model.branches.len();
        let v: Vec<Complex64> = vm.iter().zip(&va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
        let (mut p_from, mut q_from, mut p_to, mut q_to, mut s_flow) =
            (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
        for k in 0..nb {
            if out[k] {
                continue;
            }
            let br = &model.branches[k];
            let f = model.bus_index(br.from_bus).unwrap();
            let t = model.bus_index(br.to_bus).unwrap();
            let y = branch_admittance(model, k);
            let sf = v[f] * (y.ff * v[f] + y.ft * v[t]).conj() * base;
            let st = v[t] * (y.tf * v[f] + y.tt * v[t]).conj() * base;
            p_from[k] = sf.re;
            q_from[k] = sf.im;
            p_to[k] = st.re;
            q_to[k] = st.im;
            s_flow[k] = sf.norm().max(st.norm());
        }
        let s = injections(ybus, &vm, &va);
        let q_gen: Vec<f64> = model
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| if self.has_gen[i] { s[i].im * base + b.q_load } else { 0.0 })
            .collect();
        PowerFlowSolution {
            slack_p: s[slack].re * base + model.buses[slack].p_load,
            slack_q: s[slack].im * base + model.buses[slack].q_load,
            v_mag: vm,
            v_ang: va,
            p_from,
            q_from,
            p_to,
            q_to,
            s_flow,
            q_gen,
            bus_kinds: kinds,
            converged: true,
            iterations,
            max_mismatch: mismatch,
        }
    }
}

/// Complex power injections `S = V conj(Y V)` in pu.
fn injections(ybus: &Ybus, vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    let v: Vec<Complex64> = vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    ybus.rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let current: Complex64 = row.iter().map(|&(k, y)| y * v[k]).sum();
            v[i] * current.conj()
        })
        .collect()
}

fn residual(s: &[Complex64], p: &[f64], q: &[f64], kinds: &[BusKind], live: &[bool], slack: usize) -> Vec<f64> {
    let mut f = vec![0.0; 2 * s.len()];
    for i in 0..s.len() {
        if i == slack || !live[i] {
            continue;
        }
        f[2 * i] = s[i].re - p[i];
        if kinds[i] == BusKind::Pq {
            f[2 * i + 1] = s[i].im - q[i];
        }
    }
    f
}

fn jacobian(
    ybus: &Ybus,
    vm: &[f64],
    va: &[f64],
    s: &[Complex64],
    kinds: &[BusKind],
    live: &[bool],
    slack: usize,
) -> CscMatrix {
    let n = vm.len();
    let v: Vec<Complex64> = vm.iter().zip(va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    let j = Complex64::new(0.0, 1.0);
    let mut t = Vec::with_capacity(4 * ybus.rows.iter().map(Vec::len).sum::<usize>());
    for i in 0..n {
        let fixed_angle = i == slack || !live[i];
        let fixed_v = fixed_angle || kinds[i] != BusKind::Pq;
        if fixed_angle {
            t.push((2 * i, 2 * i, 1.0));
        }
        if fixed_v {
            t.push((2 * i + 1, 2 * i + 1, 1.0));
        }
        if fixed_angle && fixed_v {
            continue;
        }
        // S_i = V_i conj(I_i)
        let i_conj = s[i] / v[i];
        for &(k, y) in &ybus.rows[i] {
            let yv = (y * v[k]).conj();
            let (d_ang, d_mag) = if k == i {
                (j * v[i] * (i_conj - yv), v[i] * (y * v[i] / vm[i]).conj() + i_conj * v[i] / vm[i])
            } else {
                (-j * v[i] * yv, v[i] * (y * v[k] / vm[k]).conj())
            };
            if !fixed_angle {
                t.push((2 * i, 2 * k, d_ang.re));
                t.push((2 * i, 2 * k + 1, d_mag.re));
            }
            if !fixed_v {
                t.push((2 * i + 1, 2 * k, d_ang.im));
                t.push((2 * i + 1, 2 * k + 1, d_mag.im));
            }
        }
    }
    CscMatrix::from_triplets(2 * n, 2 * n, &t)
}

/// Solves the AC power flow with `outaged` branch ids removed.
pub fn solve_ac(model: &NetworkModel, outaged: &[usize], start: Start<'_>) -> Result<PowerFlowSolution> {
    AcSolver::new(model).solve(outaged, start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rating {
    Normal,
    Emergency,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowViolation {
    pub branch: usize,
    pub flow_mva: f64,
    pub rating_mva: f64,
    pub overload_mva: f64,
    pub overload_pct: f64,
}

pub fn overload(flow_mva: f64, rating_mva: f64) -> Option<FlowViolation> {
    let over = flow_mva - rating_mva;
    (rating_mva > 0.0 && over > 0.0).then(|| FlowViolation {
        branch: 0,
        flow_mva,
        rating_mva,
        overload_mva: over,
        overload_pct: over / rating_mva * 100.0,
    })
}

/// Monitored in-service branches whose flow exceeds the chosen rating.
pub fn check_violations(solution: &PowerFlowSolution, model: &NetworkModel, which: Rating) -> Vec<FlowViolation> {
    model
        .branches
        .iter()
        .enumerate()
        .filter(|(_, br)| br.is_monitored())
        .filter_map(|(k, br)| {
            let rating = match which {
                Rating::Normal => br.rate_normal,
                Rating::Emergency => br.rate_emergency,
            };
            overload(solution.s_flow[k], rating).map(|v| FlowViolation { branch: br.id, ..v })
        })
        .collect()
}

#[derive(Serialize)]
struct BusRow {
    bus: usize,
    v_mag_pu: f64,
    v_ang_deg: f64,
    kind: BusKind,
    q_gen_mvar: f64,
}

#[derive(Serialize)]
struct BranchRow {
    branch: usize,
    from_bus: usize,
    to_bus: usize,
    p_from_mw: f64,
    q_from_mvar: f64,
    p_to_mw: f64,
    q_to_mvar: f64,
    s_flow_mva: f64,
}

pub fn write_bus_csv(solution: &PowerFlowSolution, model: &NetworkModel, out: impl Write) -> Result<()> {
    let rows = model.buses.iter().enumerate().map(|(i, b)| BusRow {
        bus: b.id,
        v_mag_pu: solution.v_mag[i],
        v_ang_deg: solution.v_ang[i].to_degrees(),
        kind: solution.bus_kinds[i],
        q_gen_mvar: solution.q_gen[i],
    });
    write_table(out, &["bus", "v_mag_pu", "v_ang_deg", "kind", "q_gen_mvar"], rows)
}

pub fn write_branch_csv(solution: &PowerFlowSolution, model: &NetworkModel, out: impl Write) -> Result<()> {
    let rows = model.branches.iter().enumerate().map(|(k, br)| BranchRow {
        branch: br.id,
        from_bus: br.from_bus,
        to_bus: br.to_bus,
        p_from_mw: solution.p_from[k],
        q_from_mvar: solution.q_from[k],
        p_to_mw: solution.p_to[k],
        q_to_mvar: solution.q_to[k],
        s_flow_mva: solution.s_flow[k],
    });
    write_table(
        out,
        &["branch", "from_bus", "to_bus", "p_from_mw", "q_from_mvar", "p_to_mw", "q_to_mvar", "s_flow_mva"],
        rows,
    )
}
