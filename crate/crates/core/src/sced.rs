//! Security-constrained economic dispatch over one interval.
//!
//! Energy and reserve are co-optimized. The network variants differ only in
//! how branch flows are expressed:
//!
//! * `M1` incremental PTDF around the AC operating point, post-contingency
//!   anchors from the AC contingency solves.
//! * `M2` as `M1` with post-contingency anchors estimated by LODF.
//! * `M3` PTDF applied to net injections.
//! * `M4`/`M5` explicit bus angles with one angle set per modeled outage.
//!
//! `M1` and `M4` convert MVA ratings with the post-contingency reactive flow,
//! the others with the base-case reactive flow.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ems_lp::{solve_lp, LinearProgram, RowId, Sense, Status, VarId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::write_table;
use crate::model::NetworkModel;
use crate::powerflow::PowerFlowSolution;
use crate::rtca::{mw_limit, CaReport};
use crate::sensitivity::{build_ptdf, dc_flows, phase_shift_injections, susceptance, PtdfMatrix};

/// Rows below this activity gap to a limit count as binding (MW).
const BINDING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    M1,
    M2,
    M3,
    M4,
    M5,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::M1, Variant::M2, Variant::M3, Variant::M4, Variant::M5];

    /// Whether ratings are converted with the post-contingency reactive flow.
    pub fn uses_post_contingency_q(self) -> bool {
        matches!(self, Variant::M1 | Variant::M4)
    }

    pub fn is_incremental(self) -> bool {
        matches!(self, Variant::M1 | Variant::M2)
    }

    pub fn is_angle_based(self) -> bool {
        matches!(self, Variant::M4 | Variant::M5)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::M1 => "M1",
            Variant::M2 => "M2",
            Variant::M3 => "M3",
            Variant::M4 => "M4",
            Variant::M5 => "M5",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variant> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(Variant::M1),
            "m2" => Ok(Variant::M2),
            "m3" => Ok(Variant::M3),
            "m4" => Ok(Variant::M4),
            "m5" => Ok(Variant::M5),
            _ => Err(Error::Invalid(format!("unknown variant {s:?}, expected m1..m5"))),
        }
    }
}

/// System reserve requirement.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum ReserveRule {
    /// capacity of the largest online unit
    #[default]
    LargestUnit,
    Mw(f64),
    PercentOfLoad(f64),
}

impl ReserveRule {
    pub fn requirement(self, model: &NetworkModel) -> f64 {
        match self {
            ReserveRule::LargestUnit => {
                model.generators.iter().filter(|g| g.online).map(|g| g.p_max).fold(0.0, f64::max)
            }
            ReserveRule::Mw(mw) => mw,
            ReserveRule::PercentOfLoad(pct) => pct / 100.0 * model.total_load(),
        }
    }
}

impl FromStr for ReserveRule {
    type Err = Error;

    /// `largest`, a MW figure such as `250`, or a percentage such as `5%`.
    fn from_str(s: &str) -> Result<ReserveRule> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("largest") || s.eq_ignore_ascii_case("largest-unit") {
            return Ok(ReserveRule::LargestUnit);
        }
        let bad = || Error::Invalid(format!("invalid reserve rule {s:?}"));
        let rule = match s.strip_suffix('%') {
            Some(p) => ReserveRule::PercentOfLoad(p.trim().parse().map_err(|_| bad())?),
            None => ReserveRule::Mw(s.parse().map_err(|_| bad())?),
        };
        match rule {
            ReserveRule::Mw(v) | ReserveRule::PercentOfLoad(v) if !(v >= 0.0 && v.is_finite()) => Err(bad()),
            r => Ok(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScedConfig {
    pub variant: Variant,
    /// percent of normal rating at which base-case branches are modeled
    pub pct: f64,
    /// percent of emergency rating at which post-contingency branches are
    /// modeled
    pub pctc: f64,
    pub interval_minutes: f64,
    pub reserve: ReserveRule,
    pub use_pseudo_limits: bool,
    pub cts_rank: usize,
}

impl Default for ScedConfig {
    fn default() -> Self {
        ScedConfig {
            variant: Variant::M1,
            pct: 50.0,
            pctc: 90.0,
            interval_minutes: 15.0,
            reserve: ReserveRule::LargestUnit,
            use_pseudo_limits: false,
            cts_rank: 3,
        }
    }
}

impl ScedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pct > 0.0 && self.pct <= 100.0) || !(self.pctc > 0.0 && self.pctc <= 100.0) {
            return Err(Error::Invalid(format!("thresholds must lie in (0, 100], got {} and {}", self.pct, self.pctc)));
        }
        if !(self.interval_minutes > 0.0 && self.interval_minutes.is_finite()) {
            return Err(Error::Invalid(format!("interval must be positive, got {}", self.interval_minutes)));
        }
        if self.cts_rank == 0 {
            return Err(Error::Invalid("CTS rank starts at 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Base,
    Contingency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConstraint {
    pub kind: ConstraintKind,
    pub branch: usize,
    pub contingency: Option<usize>,
    pub limit_mw: f64,
    pub is_pseudo: bool,
    /// MVA rating the limit was derived from
    pub rating_mva: f64,
    /// MVar used to convert the rating
    pub q_mvar: f64,
    /// AC MW flow (from-to orientation) at the base point, or after the
    /// outage for contingency rows
    pub ac_flow_mw: f64,
}

impl NetworkConstraint {
    pub fn name(&self) -> String {
        match self.contingency {
            None => format!("base_b{}", self.branch),
            Some(c) => format!("ctg_c{}_b{}", c, self.branch),
        }
    }
}

/// Base-case rows for branches loaded to at least `pct` of their normal
/// rating, contingency rows for post-outage loadings of at least `pctc` of
/// the emergency rating. Violations are always modeled.
pub fn select_network_constraints(
    model: &NetworkModel,
    base: &PowerFlowSolution,
    ca: &CaReport,
    config: &ScedConfig,
) -> Vec<NetworkConstraint> {
    let mut out = Vec::new();
    for (k, br) in model.branches.iter().enumerate() {
        if !br.is_monitored() || !br.in_service {
            continue;
        }
        let flow = base.s_flow[k];
        if flow < config.pct / 100.0 * br.rate_normal && flow <= br.rate_normal {
            continue;
        }
        let q = base.monitored_q(k);
        match mw_limit(br.rate_normal, q) {
            Ok(limit) if limit > 0.0 => out.push(NetworkConstraint {
                kind: ConstraintKind::Base,
                branch: br.id,
                contingency: None,
                limit_mw: limit,
                is_pseudo: false,
                rating_mva: br.rate_normal,
                q_mvar: q,
                ac_flow_mw: base.monitored_p(k),
            }),
            _ => log::warn!("branch {}: base-case limit is degenerate at {:.1} MVar, not modeled", br.id, q),
        }
    }

    if config.pctc < ca.record_threshold_pct {
        log::warn!(
            "contingency threshold {}% is below the recorded loading threshold {}%; pairs in between are not available",
            config.pctc,
            ca.record_threshold_pct
        );
    }
    let mut pairs = BTreeMap::new();
    for l in &ca.loadings {
        let k = model.branch_index(l.branch).expect("loading refers to a model branch");
        if l.flow_mva >= config.pctc / 100.0 * model.branches[k].rate_emergency {
            pairs.insert((l.contingency, l.branch), l);
        }
    }
    for v in &ca.violations {
        if !pairs.contains_key(&(v.contingency, v.branch)) {
            match ca.loadings.iter().find(|l| l.contingency == v.contingency && l.branch == v.branch) {
                Some(l) => {
                    pairs.insert((v.contingency, v.branch), l);
                }
                None => log::warn!("violation {}/{} has no recorded loading, not modeled", v.contingency, v.branch),
            }
        }
    }
    for ((c, b), l) in pairs {
        let k = model.branch_index(b).unwrap();
        let rating = model.branches[k].rate_emergency;
        let q = if config.variant.uses_post_contingency_q() { l.q_mvar } else { base.monitored_q(k) };
        match mw_limit(rating, q) {
            Ok(limit) if limit > 0.0 => out.push(NetworkConstraint {
                kind: ConstraintKind::Contingency,
                branch: b,
                contingency: Some(c),
                limit_mw: limit,
                is_pseudo: false,
                rating_mva: rating,
                q_mvar: q,
                ac_flow_mw: l.p_mw,
            }),
            _ => log::warn!("branch {b} under contingency {c}: limit is degenerate at {q:.1} MVar, not modeled"),
        }
    }
    out
}

/// Replaces contingency limits by pseudo limits. Entries without a
/// matching constraint are ignored with a warning.
pub fn apply_pseudo_limits(constraints: &[NetworkConstraint], pseudo: &[crate::cts::PseudoLimit]) -> Vec<NetworkConstraint> {
    let mut out = constraints.to_vec();
    for p in pseudo {
        let hit = out.iter_mut().find(|c| c.contingency == Some(p.contingency) && c.branch == p.branch);
        match hit {
            Some(c) => {
                c.limit_mw = p.pseudo_limit_mw;
                c.is_pseudo = true;
            }
            None => log::warn!("pseudo limit for branch {} under contingency {} matches no constraint", p.branch, p.contingency),
        }
    }
    out
}

/// Built dispatch LP with the handles needed to read the solution back.
pub struct ScedProblem {
    pub lp: LinearProgram,
    pub variant: Variant,
    pub constraints: Vec<NetworkConstraint>,
    p: Vec<Option<VarId>>,
    r: Vec<Option<VarId>>,
    balance: Option<RowId>,
    /// per angle copy, one row per bus
    nodal: Vec<Vec<RowId>>,
    rows: Vec<RowId>,
    /// MW added to each network row's activity to obtain the flow
    offsets: Vec<f64>,
    /// per constraint, flow sensitivity to injection at each bus
    sensitivities: Vec<Vec<f64>>,
    slack: usize,
}

impl ScedProblem {
    pub fn sensitivities(&self) -> &[Vec<f64>] {
        &self.sensitivities
    }
}

/// Operating point the incremental variants linearize around: `p_initial`
/// with the slack bus units picking up the AC slack output.
pub fn anchor_dispatch(model: &NetworkModel, base: &PowerFlowSolution) -> Vec<f64> {
    let mut p: Vec<f64> = model.generators.iter().map(|g| if g.online { g.p_initial } else { 0.0 }).collect();
    let slack_id = model.buses[model.slack_index()].id;
    let at_slack: Vec<usize> = (0..p.len()).filter(|&i| model.generators[i].online && model.generators[i].bus == slack_id).collect();
    if let Some(&first) = at_slack.first() {
        let scheduled: f64 = at_slack.iter().map(|&i| p[i]).fold(0.0, |a, b| a + b);
        p[first] += base.slack_p - scheduled;
    }
    p
}

fn lodf_entry(model: &NetworkModel, ptdf: &PtdfMatrix, k: usize, o: usize) -> Result<f64> {
    let f = model.bus_index(model.branches[o].from_bus).unwrap();
    let t = model.bus_index(model.branches[o].to_bus).unwrap();
    let denom = 1.0 - ptdf.transfer(o, f, t);
    if denom.abs() < 1e-8 {
        return Err(Error::Singular(format!("outage of branch {} islands the network", model.branches[o].id)));
    }
    Ok(ptdf.transfer(k, f, t) / denom)
}

/// DC linearization shared by the LP rows and the row screen: a network
/// row's flow is `constant + Σ sens[bus(g)] p_g`.
struct Linearization<'a> {
    model: &'a NetworkModel,
    base: &'a PowerFlowSolution,
    ptdf: PtdfMatrix,
    anchor: Vec<f64>,
    /// DC flows of the loads alone, phase shifters included
    load_flows: Vec<f64>,
    gen_bus: Vec<usize>,
}

impl<'a> Linearization<'a> {
    fn new(model: &'a NetworkModel, base: &'a PowerFlowSolution) -> Result<Self> {
        let ptdf = build_ptdf(model, model.buses[model.slack_index()].id)?;
        let injections: Vec<f64> = model.buses.iter().map(|b| -b.p_load).collect();
        let load_flows = dc_flows(model, &ptdf, &injections);
        Ok(Linearization {
            model,
            base,
            anchor: anchor_dispatch(model, base),
            gen_bus: model.generators.iter().map(|g| model.bus_index(g.bus).unwrap()).collect(),
            ptdf,
            load_flows,
        })
    }

    /// PTDF row for base rows, the outage-composed PTDF row for contingency rows.
    fn sensitivity(&self, c: &NetworkConstraint) -> Result<Vec<f64>> {
        let model = self.model;
        let k = model.branch_index(c.branch).ok_or_else(|| Error::Invalid(format!("unknown branch {}", c.branch)))?;
        let mut row = self.ptdf.row(k).to_vec();
        if let Some(cid) = c.contingency {
            let o = model.branch_index(cid).ok_or_else(|| Error::Invalid(format!("unknown contingency branch {cid}")))?;
            let lodf = lodf_entry(model, &self.ptdf, k, o)?;
            for (v, s) in row.iter_mut().zip(self.ptdf.row(o)) {
                *v += lodf * s;
            }
        }
        Ok(row)
    }

    /// Angle variants share the injection-based constant of `M3`.
    fn constant(&self, variant: Variant, c: &NetworkConstraint, sens: &[f64]) -> Result<f64> {
        let model = self.model;
        let k = model.branch_index(c.branch).unwrap();
        if variant.is_incremental() {
            let f0 = match (variant, c.contingency) {
                (Variant::M2, Some(cid)) => {
                    let o = model.branch_index(cid).unwrap();
                    self.base.monitored_p(k) + lodf_entry(model, &self.ptdf, k, o)? * self.base.monitored_p(o)
                }
                _ => c.ac_flow_mw,
            };
            Ok(f0 - self.gen_bus.iter().zip(&self.anchor).map(|(&b, a)| sens[b] * a).fold(0.0, |a, b| a + b))
        } else {
            Ok(match c.contingency {
                None => self.load_flows[k],
                Some(cid) => {
                    let o = model.branch_index(cid).unwrap();
                    self.load_flows[k] + lodf_entry(model, &self.ptdf, k, o)? * self.load_flows[o]
                }
            })
        }
    }
}

pub fn build_sced(
    model: &NetworkModel,
    base: &PowerFlowSolution,
    constraints: &[NetworkConstraint],
    config: &ScedConfig,
) -> Result<ScedProblem> {
    config.validate()?;
    build_on(&Linearization::new(model, base)?, constraints, config)
}

fn build_on(lin: &Linearization<'_>, constraints: &[NetworkConstraint], config: &ScedConfig) -> Result<ScedProblem> {
    let model = lin.model;
    let slack_pos = model.slack_index();
    let mut lp = LinearProgram::new();
    let ng = model.generators.len();
    let mut p = vec![None; ng];
    let mut r = vec![None; ng];
    let mut offset = 0.0;
    let span = config.interval_minutes;

    for (i, g) in model.generators.iter().enumerate() {
        if !g.online {
            continue;
        }
        let lo = g.p_min.max(g.p_initial - g.ramp_rate * span);
        let hi = g.p_max.min(g.p_initial + g.ramp_rate * span);
        if lo > hi + 1e-9 {
            return Err(Error::Invalid(format!("generator {} has an empty ramp envelope [{lo}, {hi}]", g.id)));
        }
        let pv = lp.add_variable(format!("p_g{}", g.id), lo, hi.max(lo), 0.0);
        p[i] = Some(pv);
        let curve = model.cost_of(g.id);
        let mut xs = vec![g.p_min];
        xs.extend(curve.points.iter().map(|pt| pt.0).filter(|&x| x > g.p_min && x < g.p_max));
        if g.p_max > g.p_min {
            xs.push(g.p_max);
        }
        offset += curve.cost_at(g.p_min);
        let mut terms = vec![(pv, 1.0)];
        for (j, w) in xs.windows(2).enumerate() {
            let width = w[1] - w[0];
            let price = (curve.cost_at(w[1]) - curve.cost_at(w[0])) / width;
            let s = lp.add_variable(format!("s_g{}_{}", g.id, j + 1), 0.0, width, price);
            terms.push((s, -1.0));
        }
        lp.add_row(format!("seg_g{}", g.id), &terms, Sense::Eq, g.p_min);

        let r_hi = (10.0 * g.ramp_rate).min(g.p_max - g.p_min).max(0.0);
        let rv = lp.add_variable(format!("r_g{}", g.id), 0.0, r_hi, g.reserve_price);
        r[i] = Some(rv);
        lp.add_row(format!("cap_g{}", g.id), &[(pv, 1.0), (rv, 1.0)], Sense::Le, g.p_max);
    }
    lp.set_objective_offset(offset);
    let reserve_terms: Vec<(VarId, f64)> = r.iter().flatten().map(|&v| (v, 1.0)).collect();
    lp.add_row("reserve", &reserve_terms, Sense::Ge, config.reserve.requirement(model));

    let gen_bus = &lin.gen_bus;
    let p_terms: Vec<(VarId, f64)> = p.iter().flatten().map(|&v| (v, 1.0)).collect();
    let mut balance = None;
    let mut nodal = Vec::new();
    let mut rows = Vec::with_capacity(constraints.len());
    let mut offsets = Vec::with_capacity(constraints.len());
    let mut sensitivities = Vec::with_capacity(constraints.len());
    for c in constraints {
        sensitivities.push(lin.sensitivity(c)?);
    }

    match config.variant {
        Variant::M1 | Variant::M2 | Variant::M3 => {
            let total = if config.variant.is_incremental() { lin.anchor.iter().fold(0.0, |a, b| a + b) } else { model.total_load() };
            balance = Some(lp.add_row("balance", &p_terms, Sense::Eq, total));
            for (c, sens) in constraints.iter().zip(&sensitivities) {
                let terms: Vec<(VarId, f64)> = (0..ng)
                    .filter_map(|i| p[i].map(|v| (v, sens[gen_bus[i]])))
                    .filter(|t| t.1 != 0.0)
                    .collect();
                let constant = lin.constant(config.variant, c, sens)?;
                rows.push(lp.add_ranged_row(c.name(), &terms, -c.limit_mw - constant, c.limit_mw - constant));
                offsets.push(constant);
            }
        }
        Variant::M4 | Variant::M5 => {
            let mut copies: Vec<Option<usize>> = vec![None];
            for c in constraints {
                if c.contingency.is_some() && !copies.contains(&c.contingency) {
                    copies.push(c.contingency);
                }
            }
            let mut angle: BTreeMap<Option<usize>, Vec<Option<VarId>>> = BTreeMap::new();
            for &copy in &copies {
                let tag = copy.map_or("base".to_string(), |c| format!("c{c}"));
                let out_pos = match copy {
                    Some(cid) => Some(model.branch_index(cid).ok_or_else(|| Error::Invalid(format!("unknown branch {cid}")))?),
                    None => None,
                };
                let mut out: Vec<bool> = model.branches.iter().map(|b| !b.in_service).collect();
                if let Some(o) = out_pos {
                    out[o] = true;
                }
                let psi: Vec<Option<VarId>> = model
                    .buses
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        (i != slack_pos).then(|| lp.add_variable(format!("psi_{tag}_{}", b.id), f64::NEG_INFINITY, f64::INFINITY, 0.0))
                    })
                    .collect();
                let (shift_bus, _) = phase_shift_injections(model, &out);
                let mut node_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); model.buses.len()];
                for i in 0..ng {
                    if let Some(v) = p[i] {
                        node_terms[gen_bus[i]].push((v, 1.0));
                    }
                }
                for (k, br) in model.branches.iter().enumerate() {
                    if out[k] {
                        continue;
                    }
                    let b = susceptance(model, k);
                    let f = model.bus_index(br.from_bus).unwrap();
                    let t = model.bus_index(br.to_bus).unwrap();
                    // injection at f equals the flow leaving it
                    for (bus, sign) in [(f, -1.0), (t, 1.0)] {
                        if let Some(v) = psi[f] {
                            node_terms[bus].push((v, sign * b));
                        }
                        if let Some(v) = psi[t] {
                            node_terms[bus].push((v, -sign * b));
                        }
                    }
                }
                let copy_rows: Vec<RowId> = model
                    .buses
                    .iter()
                    .enumerate()
                    .map(|(i, bus)| {
                        let terms = merge_terms(&node_terms[i]);
                        lp.add_row(format!("node_{tag}_{}", bus.id), &terms, Sense::Eq, bus.p_load - shift_bus[i])
                    })
                    .collect();
                nodal.push(copy_rows);
                angle.insert(copy, psi);
            }
            for c in constraints {
                let k = model.branch_index(c.branch).unwrap();
                let psi = &angle[&c.contingency];
                let mut out: Vec<bool> = model.branches.iter().map(|b| !b.in_service).collect();
                if let Some(cid) = c.contingency {
                    out[model.branch_index(cid).unwrap()] = true;
                }
                let (_, shift_branch) = phase_shift_injections(model, &out);
                let br = &model.branches[k];
                let b = susceptance(model, k);
                let f = model.bus_index(br.from_bus).unwrap();
                let t = model.bus_index(br.to_bus).unwrap();
                let mut terms = Vec::new();
                if let Some(v) = psi[f] {
                    terms.push((v, b));
                }
                if let Some(v) = psi[t] {
                    terms.push((v, -b));
                }
                let constant = shift_branch[k];
                rows.push(lp.add_ranged_row(c.name(), &terms, -c.limit_mw - constant, c.limit_mw - constant));
                offsets.push(constant);
            }
        }
    }

    Ok(ScedProblem {
        lp,
        variant: config.variant,
        constraints: constraints.to_vec(),
        p,
        r,
        balance,
        nodal,
        rows,
        offsets,
        sensitivities,
        slack: slack_pos,
    })
}

fn merge_terms(terms: &[(VarId, f64)]) -> Vec<(VarId, f64)> {
    let mut m: BTreeMap<usize, f64> = BTreeMap::new();
    for &(v, a) in terms {
        *m.entry(v.0).or_default() += a;
    }
    m.into_iter().filter(|e| e.1 != 0.0).map(|(v, a)| (VarId(v), a)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpStats {
    pub rows: usize,
    pub columns: usize,
    pub nonzeros: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintOutcome {
    pub constraint: NetworkConstraint,
    /// DC MW flow at the optimum
    pub flow_mw: f64,
    /// change in total cost per MW of additional limit ($/MWh, <= 0)
    pub dual: f64,
    pub binding: bool,
    /// raw row dual with respect to the active bound
    #[serde(skip)]
    pub row_dual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScedSolution {
    pub variant: Variant,
    /// MW per generator in model order, 0 for offline units
    pub dispatch: Vec<f64>,
    pub reserve: Vec<f64>,
    pub total_cost: f64,
    pub energy_cost: f64,
    pub reserve_cost: f64,
    pub congestion_cost: f64,
    /// total cost without network constraints
    pub relaxed_cost: f64,
    pub reserve_requirement: f64,
    /// dual of the system balance, or the slack nodal price for angle
    /// variants ($/MWh)
    pub energy_price: f64,
    /// summed nodal balance duals per bus, angle variants only
    pub nodal_prices: Option<Vec<f64>>,
    pub constraints: Vec<ConstraintOutcome>,
    pub lp_stats: LpStats,
    #[serde(skip)]
    pub solve_time: Duration,
    #[serde(skip)]
    pub sensitivities: Vec<Vec<f64>>,
}

impl ScedSolution {
    pub fn binding(&self) -> impl Iterator<Item = &ConstraintOutcome> {
        self.constraints.iter().filter(|c| c.binding)
    }
}

struct Solved {
    dispatch: Vec<f64>,
    reserve: Vec<f64>,
    energy_cost: f64,
    reserve_cost: f64,
    energy_price: f64,
    nodal_prices: Option<Vec<f64>>,
    constraints: Vec<ConstraintOutcome>,
    iterations: usize,
}

fn solve_problem(model: &NetworkModel, prob: &ScedProblem) -> Result<Solved> {
    let sol = solve_lp(&prob.lp)?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            return Err(Error::Infeasible(sol.infeasible_rows.iter().map(|&r| prob.lp.row_name(r).to_string()).collect()))
        }
        Status::Unbounded => {
            let name = sol.unbounded_ray.map_or("?".to_string(), |v| prob.lp.col_name(v).to_string());
            return Err(Error::Unbounded(name));
        }
    }
    let dispatch: Vec<f64> = prob.p.iter().map(|v| v.map_or(0.0, |v| sol.value(v))).collect();
    let reserve: Vec<f64> = prob.r.iter().map(|v| v.map_or(0.0, |v| sol.value(v))).collect();
    let energy_cost = model
        .generators
        .iter()
        .zip(&dispatch)
        .filter(|(g, _)| g.online)
        .map(|(g, &pg)| model.cost_of(g.id).cost_at(pg))
        .fold(0.0, |a, b| a + b);
    let reserve_cost = model.generators.iter().zip(&reserve).map(|(g, &rg)| g.reserve_price * rg).fold(0.0, |a, b| a + b);
    let nodal_prices = (!prob.nodal.is_empty()).then(|| {
        let mut prices = vec![0.0; model.buses.len()];
        for copy in &prob.nodal {
            for (i, &row) in copy.iter().enumerate() {
                prices[i] += sol.dual(row);
            }
        }
        prices
    });
    let energy_price = match (&prob.balance, &nodal_prices) {
        (Some(row), _) => sol.dual(*row),
        (None, Some(prices)) => prices[prob.slack],
        (None, None) => 0.0,
    };
    let constraints = prob
        .constraints
        .iter()
        .zip(&prob.rows)
        .zip(&prob.offsets)
        .map(|((c, &row), &off)| {
            let flow = sol.row_activity[row.0] + off;
            let y = sol.dual(row);
            ConstraintOutcome {
                constraint: c.clone(),
                flow_mw: flow,
                dual: 0.0 - y.abs(),
                binding: flow.abs() >= c.limit_mw - BINDING_TOL,
                row_dual: y,
            }
        })
        .collect();
    Ok(Solved {
        dispatch,
        reserve,
        energy_cost,
        reserve_cost,
        energy_price,
        nodal_prices,
        constraints,
        iterations: sol.iterations,
    })
}

/// How the network rows reach the LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowStrategy {
    /// all rows up to [`ROW_GENERATION_MIN`], row generation above
    #[default]
    Auto,
    Full,
    /// Start from the network-free optimum and add the most violated rows
    /// of each monitored branch until every row holds. Rows left out have a
    /// zero dual.
    Generate,
}

pub const ROW_GENERATION_MIN: usize = 500;
/// Rows added per monitored branch and round.
const ROWS_PER_BRANCH: usize = 2;
/// MW a left-out row may exceed its limit by.
const SCREEN_TOL: f64 = 1e-6;

/// Solves the dispatch and, unless it has no network rows, the same
/// problem without network rows for the congestion cost.
pub fn solve_sced(
    model: &NetworkModel,
    base: &PowerFlowSolution,
    constraints: &[NetworkConstraint],
    config: &ScedConfig,
) -> Result<ScedSolution> {
    solve_sced_with(model, base, constraints, config, RowStrategy::Auto)
}

pub fn solve_sced_with(
    model: &NetworkModel,
    base: &PowerFlowSolution,
    constraints: &[NetworkConstraint],
    config: &ScedConfig,
    strategy: RowStrategy,
) -> Result<ScedSolution> {
    let start = Instant::now();
    config.validate()?;
    let lin = Linearization::new(model, base)?;
    let generate = match strategy {
        RowStrategy::Auto => constraints.len() > ROW_GENERATION_MIN,
        RowStrategy::Full => false,
        RowStrategy::Generate => true,
    };
    let (prob, main, relaxed, sensitivities, iterations) = if constraints.is_empty() {
        let prob = build_on(&lin, constraints, config)?;
        let main = solve_problem(model, &prob)?;
        let iterations = main.iterations;
        (prob, main, None, Vec::new(), iterations)
    } else if generate {
        let relaxed = solve_problem(model, &build_on(&lin, &[], config)?)?;
        let (prob, main, sens, iterations) = generate_rows(&lin, constraints, config, &relaxed.dispatch)?;
        (prob, main, Some(relaxed), sens, iterations)
    } else {
        let prob = build_on(&lin, constraints, config)?;
        let relaxed_prob = build_on(&lin, &[], config)?;
        let (a, b) = rayon::join(|| solve_problem(model, &prob), || solve_problem(model, &relaxed_prob));
        let main = a?;
        let iterations = main.iterations;
        let sens = prob.sensitivities.clone();
        (prob, main, Some(b?), sens, iterations)
    };
    let total = main.energy_cost + main.reserve_cost;
    let relaxed_cost = relaxed.map_or(total, |r| r.energy_cost + r.reserve_cost);
    Ok(ScedSolution {
        variant: config.variant,
        dispatch: main.dispatch,
        reserve: main.reserve,
        total_cost: total,
        energy_cost: main.energy_cost,
        reserve_cost: main.reserve_cost,
        congestion_cost: total - relaxed_cost,
        relaxed_cost,
        reserve_requirement: config.reserve.requirement(model),
        energy_price: main.energy_price,
        nodal_prices: main.nodal_prices,
        constraints: main.constraints,
        lp_stats: LpStats {
            rows: prob.lp.num_rows(),
            columns: prob.lp.num_cols(),
            nonzeros: prob.lp.num_nonzeros(),
            iterations,
        },
        solve_time: start.elapsed(),
        sensitivities,
    })
}

/// Returns the last LP, its solution with outcomes for every row of
/// `constraints`, the per-row sensitivities (empty for rows left out) and
/// the simplex iterations over all rounds.
fn generate_rows(
    lin: &Linearization<'_>,
    constraints: &[NetworkConstraint],
    config: &ScedConfig,
    start: &[f64],
) -> Result<(ScedProblem, Solved, Vec<Vec<f64>>, usize)> {
    let model = lin.model;
    let online: Vec<usize> = (0..model.generators.len()).filter(|&i| model.generators[i].online).collect();
    // generator coefficients and constant of every row
    let screen: Vec<(Vec<f64>, f64)> = constraints
        .par_iter()
        .map(|c| {
            let sens = lin.sensitivity(c)?;
            let coef = online.iter().map(|&i| sens[lin.gen_bus[i]]).collect();
            Ok((coef, lin.constant(config.variant, c, &sens)?))
        })
        .collect::<Result<_>>()?;
    let flow = |j: usize, dispatch: &[f64]| {
        let (coef, constant) = &screen[j];
        constant + coef.iter().zip(&online).map(|(a, &i)| a * dispatch[i]).fold(0.0, |a, b| a + b)
    };

    let mut active = vec![false; constraints.len()];
    let mut dispatch = start.to_vec();
    let mut iterations = 0;
    let mut last: Option<(ScedProblem, Solved)> = None;
    loop {
        let mut worst: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
        for j in (0..constraints.len()).filter(|&j| !active[j]) {
            let excess = flow(j, &dispatch).abs() - constraints[j].limit_mw;
            if excess > SCREEN_TOL {
                worst.entry(constraints[j].branch).or_default().push((excess, j));
            }
        }
        if worst.is_empty() && last.is_some() {
            break;
        }
        for rows in worst.values_mut() {
            rows.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, j) in rows.iter().take(ROWS_PER_BRANCH) {
                active[j] = true;
            }
        }
        let subset: Vec<NetworkConstraint> = (0..constraints.len()).filter(|&j| active[j]).map(|j| constraints[j].clone()).collect();
        let prob = build_on(lin, &subset, config)?;
        let solved = solve_problem(model, &prob)?;
        iterations += solved.iterations;
        log::debug!("row generation: {} of {} rows, cost {}", subset.len(), constraints.len(), solved.energy_cost + solved.reserve_cost);
        dispatch.clone_from(&solved.dispatch);
        last = Some((prob, solved));
    }

    let (prob, mut solved) = last.expect("at least one round");
    let mut modeled = std::mem::take(&mut solved.constraints).into_iter();
    let mut modeled_sens = prob.sensitivities.iter();
    let mut outcomes = Vec::with_capacity(constraints.len());
    let mut sensitivities = Vec::with_capacity(constraints.len());
    for (j, c) in constraints.iter().enumerate() {
        if active[j] {
            outcomes.push(modeled.next().unwrap());
            sensitivities.push(modeled_sens.next().unwrap().clone());
        } else {
            let f = flow(j, &dispatch);
            outcomes.push(ConstraintOutcome {
                constraint: c.clone(),
                flow_mw: f,
                dual: 0.0,
                binding: f.abs() >= c.limit_mw - BINDING_TOL,
                row_dual: 0.0,
            });
            sensitivities.push(Vec::new());
        }
    }
    solved.constraints = outcomes;
    Ok((prob, solved, sensitivities, iterations))
}

#[derive(Serialize)]
struct DispatchRow {
    generator: usize,
    bus: usize,
    p_mw: f64,
    reserve_mw: f64,
    p_initial_mw: f64,
}

pub fn write_dispatch_csv(model: &NetworkModel, sol: &ScedSolution, out: impl Write) -> Result<()> {
    let rows = model.generators.iter().enumerate().map(|(i, g)| DispatchRow {
        generator: g.id,
        bus: g.bus,
        p_mw: sol.dispatch[i],
        reserve_mw: sol.reserve[i],
        p_initial_mw: g.p_initial,
    });
    write_table(out, &["generator", "bus", "p_mw", "reserve_mw", "p_initial_mw"], rows)
}

#[derive(Serialize)]
struct ConstraintRow {
    name: String,
    kind: ConstraintKind,
    branch: usize,
    contingency: Option<usize>,
    limit_mw: f64,
    is_pseudo: bool,
    flow_mw: f64,
    dual: f64,
    binding: bool,
}

pub fn write_constraint_csv(sol: &ScedSolution, out: impl Write) -> Result<()> {
    let rows = sol.constraints.iter().map(|c| ConstraintRow {
        name: c.constraint.name(),
        kind: c.constraint.kind,
        branch: c.constraint.branch,
        contingency: c.constraint.contingency,
        limit_mw: c.constraint.limit_mw,
        is_pseudo: c.constraint.is_pseudo,
        flow_mw: c.flow_mw,
        dual: c.dual,
        binding: c.binding,
    });
    write_table(
        out,
        &["name", "kind", "branch", "contingency", "limit_mw", "is_pseudo", "flow_mw", "dual", "binding"],
        rows,
    )
}
