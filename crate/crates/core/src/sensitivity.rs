//! DC sensitivity factors.
//!
//! Branch susceptance is `1 / (x * tap)`. Phase shifters do not enter the
//! factors; their angle acts as a fixed pair of bus injections plus a fixed
//! branch flow offset, both returned by [`phase_shift_injections`].

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::{minimum_degree_order, CscMatrix, Factorization};
use crate::model::NetworkModel;
use crate::topology;

/// Denominators `1 - H[c,c]` below this mark an islanding outage.
const ISLANDING_TOL: f64 = 1e-8;

pub fn susceptance(model: &NetworkModel, k: usize) -> f64 {
    let br = &model.branches[k];
    1.0 / (br.x * br.tap_ratio)
}

/// Branch × bus matrix of MW flow change per MW injected at a bus and
/// withdrawn at the slack.
#[derive(Debug, Clone)]
pub struct PtdfMatrix {
    /// slack bus position
    pub slack: usize,
    pub n_branches: usize,
    pub n_buses: usize,
    data: Vec<f64>,
    /// branches out of service in the topology the matrix was built on
    pub out: Vec<bool>,
}

impl PtdfMatrix {
    pub fn get(&self, branch: usize, bus: usize) -> f64 {
        self.data[branch * self.n_buses + bus]
    }

    pub fn row(&self, branch: usize) -> &[f64] {
        &self.data[branch * self.n_buses..(branch + 1) * self.n_buses]
    }

    /// Flow change on `branch` per MW sent from bus `from` to bus `to`.
    pub fn transfer(&self, branch: usize, from: usize, to: usize) -> f64 {
        self.get(branch, from) - self.get(branch, to)
    }
}

/// PTDF on the model's in-service topology.
pub fn build_ptdf(model: &NetworkModel, slack_bus_id: usize) -> Result<PtdfMatrix> {
    build_ptdf_on(model, slack_bus_id, &[])
}

/// PTDF with the branches whose ids are in `outaged` also removed.
pub fn build_ptdf_on(model: &NetworkModel, slack_bus_id: usize, outaged: &[usize]) -> Result<PtdfMatrix> {
    let slack = model
        .bus_index(slack_bus_id)
        .ok_or_else(|| Error::Invalid(format!("unknown slack bus {slack_bus_id}")))?;
    let n = model.buses.len();
    let nbr = model.branches.len();
    let mut out: Vec<bool> = model.branches.iter().map(|b| !b.in_service).collect();
    let mut out_pos = Vec::new();
    for &id in outaged {
        let k = model.branch_index(id).ok_or_else(|| Error::Invalid(format!("unknown branch {id}")))?;
        out[k] = true;
        out_pos.push(k);
    }
    let islands = topology::islands(model, &out_pos);
    if islands.len() > 1 {
        return Err(Error::Singular(format!("network is split into {} islands", islands.len())));
    }
    for (k, br) in model.branches.iter().enumerate() {
        if !out[k] && br.x == 0.0 {
            return Err(Error::ZeroReactance(br.id));
        }
    }

    // reduced index: bus position -> row of the reduced matrix
    let red = |i: usize| if i < slack { Some(i) } else if i > slack { Some(i - 1) } else { None };
    let ends: Vec<(usize, usize)> = model
        .branches
        .iter()
        .map(|b| (model.bus_index(b.from_bus).unwrap(), model.bus_index(b.to_bus).unwrap()))
        .collect();
    let mut trip = Vec::with_capacity(4 * nbr);
    for k in (0..nbr).filter(|&k| !out[k]) {
        let b = susceptance(model, k);
        let (f, t) = ends[k];
        for (i, j, v) in [(f, f, b), (t, t, b), (f, t, -b), (t, f, -b)] {
            if let (Some(ri), Some(rj)) = (red(i), red(j)) {
                trip.push((ri, rj, v));
            }
        }
    }
    let m = n - 1;
    let mut data = vec![0.0; nbr * n];
    if m == 0 {
        return Ok(PtdfMatrix { slack, n_branches: nbr, n_buses: n, data, out });
    }
    let bred = CscMatrix::from_triplets(m, m, &trip);
    let order = minimum_degree_order(m, trip.iter().map(|&(i, j, _)| (i, j)));
    let lu = Factorization::new(&bred, &order)?;
    let mut rhs = vec![0.0; m];
    for k in (0..nbr).filter(|&k| !out[k]) {
        // B symmetric: row k of Bf B^-1 is B^-1 applied to b_k (e_f - e_t)
        let b = susceptance(model, k);
        let (f, t) = ends[k];
        rhs.iter_mut().for_each(|v| *v = 0.0);
        if let Some(rf) = red(f) {
            rhs[rf] += b;
        }
        if let Some(rt) = red(t) {
            rhs[rt] -= b;
        }
        lu.solve_in_place(&mut rhs);
        let row = &mut data[k * n..(k + 1) * n];
        for i in 0..n {
            if let Some(ri) = red(i) {
                row[i] = rhs[ri];
            }
        }
    }
    Ok(PtdfMatrix { slack, n_branches: nbr, n_buses: n, data, out })
}

/// Monitored × outaged matrix of flow redistribution factors.
#[derive(Debug, Clone)]
pub struct LodfMatrix {
    n: usize,
    data: Vec<f64>,
    /// outage columns that would split the network
    pub islanding: Vec<bool>,
}

impl LodfMatrix {
    /// `None` for islanding outages.
    pub fn get(&self, monitored: usize, outaged: usize) -> Option<f64> {
        (!self.islanding[outaged]).then(|| self.data[monitored * self.n + outaged])
    }
}

/// One outage column of the LODF matrix; `None` when the outage islands.
pub fn lodf_column(ptdf: &PtdfMatrix, model: &NetworkModel, c: usize) -> Option<Vec<f64>> {
    let nbr = ptdf.n_branches;
    let mut col = vec![0.0; nbr];
    if ptdf.out[c] {
        col[c] = -1.0;
        return Some(col);
    }
    let f = model.bus_index(model.branches[c].from_bus).unwrap();
    let t = model.bus_index(model.branches[c].to_bus).unwrap();
    let denom = 1.0 - ptdf.transfer(c, f, t);
    if denom.abs() < ISLANDING_TOL {
        return None;
    }
    for (k, v) in col.iter_mut().enumerate() {
        if !ptdf.out[k] {
            *v = ptdf.transfer(k, f, t) / denom;
        }
    }
    col[c] = -1.0;
    Some(col)
}

pub fn build_lodf(ptdf: &PtdfMatrix, model: &NetworkModel) -> LodfMatrix {
    let n = ptdf.n_branches;
    let mut data = vec![f64::NAN; n * n];
    let mut islanding = vec![false; n];
    for c in 0..n {
        match lodf_column(ptdf, model, c) {
            Some(col) => {
                for (k, v) in col.into_iter().enumerate() {
                    data[k * n + c] = v;
                }
            }
            None => islanding[c] = true,
        }
    }
    LodfMatrix { n, data, islanding }
}

/// Net MW injection per bus from online generators' `p_initial` and loads.
pub fn net_injections(model: &NetworkModel) -> Vec<f64> {
    let mut p: Vec<f64> = model.buses.iter().map(|b| -b.p_load).collect();
    for g in model.generators.iter().filter(|g| g.online) {
        p[model.bus_index(g.bus).unwrap()] += g.p_initial;
    }
    p
}

/// Equivalent bus injections (MW) and branch flow offsets (MW) of the
/// phase-shifting transformers in service.
pub fn phase_shift_injections(model: &NetworkModel, out: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let mut bus = vec![0.0; model.buses.len()];
    let mut branch = vec![0.0; model.branches.len()];
    for (k, br) in model.branches.iter().enumerate() {
        if out[k] || br.phase_shift == 0.0 {
            continue;
        }
        let pf = -susceptance(model, k) * br.phase_shift.to_radians() * model.base_mva;
        branch[k] = pf;
        bus[model.bus_index(br.from_bus).unwrap()] -= pf;
        bus[model.bus_index(br.to_bus).unwrap()] += pf;
    }
    (bus, branch)
}

/// DC branch flows (MW) for the given bus injections (MW), including the
/// phase-shifter offsets of the matrix's topology.
pub fn dc_flows(model: &NetworkModel, ptdf: &PtdfMatrix, injections: &[f64]) -> Vec<f64> {
    let (shift_bus, shift_branch) = phase_shift_injections(model, &ptdf.out);
    (0..ptdf.n_branches)
        .map(|k| {
            if ptdf.out[k] {
                return 0.0;
            }
            let row = ptdf.row(k);
            let mut f = shift_branch[k];
            for i in 0..ptdf.n_buses {
                f += row[i] * (injections[i] + shift_bus[i]);
            }
            f
        })
        .collect()
}

pub fn write_ptdf_csv(model: &NetworkModel, ptdf: &PtdfMatrix, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["branch".to_string()];
    header.extend(model.buses.iter().map(|b| format!("bus_{}", b.id)));
    w.write_record(&header).map_err(crate::export::csv_error)?;
    for (k, br) in model.branches.iter().enumerate() {
        let mut rec = vec![br.id.to_string()];
        rec.extend(ptdf.row(k).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(crate::export::csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lodf_csv(model: &NetworkModel, lodf: &LodfMatrix, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["monitored".to_string()];
    header.extend(model.branches.iter().map(|b| format!("out_{}", b.id)));
    w.write_record(&header).map_err(crate::export::csv_error)?;
    for (k, br) in model.branches.iter().enumerate() {
        let mut rec = vec![br.id.to_string()];
        rec.extend((0..lodf.n).map(|c| lodf.get(k, c).map_or("islanding".to_string(), |v| v.to_string())));
        w.write_record(&rec).map_err(crate::export::csv_error)?;
    }
    w.flush()?;
    Ok(())
}
