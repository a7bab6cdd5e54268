//! Corrective transmission switching.
//!
//! For a critical contingency every single-branch opening that keeps the
//! post-contingency network connected is solved in AC and scored by how much
//! it lowers the overloads of the branches violated before switching.
//! The violated branches themselves are never opened.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::write_table;
use crate::model::NetworkModel;
use crate::powerflow::{AcSolver, PowerFlowSolution, Start};
use crate::rtca::{mw_limit, CaReport, ContingencyCase, ViolationRecord};
use crate::sensitivity::{build_ptdf_on, lodf_column};
use crate::topology::Graph;

/// Reductions are compared on this grid so that twin branches tie exactly.
const REDUCTION_GRID: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtsOptions {
    pub top_k: usize,
    /// Keep only this many candidates ranked by a DC estimate before the AC
    /// solves.
    pub prescreen: Option<usize>,
}

impl Default for CtsOptions {
    fn default() -> Self {
        CtsOptions { top_k: 5, prescreen: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtsCandidate {
    pub contingency: usize,
    pub switch_branch: usize,
    pub violation_reduction_mva: f64,
    pub reduction_pct: f64,
    pub pareto: bool,
    /// (violated branch id, overload reduction MVA) for each branch violated
    /// before switching
    pub branch_reductions: Vec<(usize, f64)>,
    /// (branch id, MVA) for every monitored branch after switching
    pub post_switch_flows: Vec<(usize, f64)>,
}

impl CtsCandidate {
    pub fn reduction_on(&self, branch: usize) -> f64 {
        self.branch_reductions.iter().find(|r| r.0 == branch).map_or(0.0, |r| r.1)
    }

    fn sort_key(&self) -> i64 {
        (self.violation_reduction_mva / REDUCTION_GRID).round() as i64
    }

    pub fn is_beneficial(&self) -> bool {
        self.sort_key() > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtsResult {
    pub contingency: usize,
    /// violations of the unswitched post-contingency state
    pub violations: Vec<ViolationRecord>,
    pub original_violation_mva: f64,
    /// every evaluated candidate, best first
    pub ranked: Vec<CtsCandidate>,
    /// the best `top_k` beneficial Pareto-improving candidates
    pub top: Vec<CtsCandidate>,
    /// candidates whose AC solve failed
    pub unevaluable: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CtsReport {
    pub top_k: usize,
    pub results: Vec<CtsResult>,
    /// τ per rank, starting at rank 1
    pub tau: Vec<f64>,
}

impl CtsReport {
    pub fn result_for(&self, contingency: usize) -> Option<&CtsResult> {
        self.results.iter().find(|r| r.contingency == contingency)
    }

    pub fn has_pareto_action(&self) -> bool {
        self.results.iter().any(|r| !r.top.is_empty())
    }
}

/// MVA rating relaxed by the switching reduction, converted to MW at
/// constant reactive flow.
pub fn pseudo_limit(rate_emergency: f64, violation_reduction: f64, q_post: f64) -> Result<f64> {
    if violation_reduction < 0.0 {
        return Err(Error::Invalid(format!("negative violation reduction {violation_reduction}")));
    }
    mw_limit(rate_emergency + violation_reduction, q_post)
}

/// Share of the original overload removed, in percent; 0 when there was none.
pub fn reduction_pct(reduction_mva: f64, original_mva: f64) -> f64 {
    if original_mva > 0.0 {
        reduction_mva / original_mva * 100.0
    } else {
        0.0
    }
}

/// Branch positions that may be opened after outaging `outaged` without
/// splitting the network.
fn candidate_positions(model: &NetworkModel, outaged: usize) -> Vec<usize> {
    let bridges = Graph::of_model(model, &[outaged]).bridges();
    (0..model.branches.len())
        .filter(|&k| k != outaged && model.branches[k].in_service && !bridges.contains(&k))
        .collect()
}

/// DC estimate of the overload reduction for each candidate, used by the
/// prescreen.
fn dc_estimates(
    model: &NetworkModel,
    post: &PowerFlowSolution,
    outaged_id: usize,
    violated: &[(usize, f64)],
    candidates: &[usize],
) -> Result<Vec<f64>> {
    let slack = model.buses[model.slack_index()].id;
    let ptdf = build_ptdf_on(model, slack, &[outaged_id])?;
    Ok(candidates
        .iter()
        .map(|&s| {
            let Some(col) = lodf_column(&ptdf, model, s) else {
                return f64::NEG_INFINITY;
            };
            let fs = post.monitored_p(s);
            violated
                .iter()
                .map(|&(k, rating)| {
                    let before = post.s_flow[k];
                    let p = post.monitored_p(k) + col[k] * fs;
                    let q = post.monitored_q(k);
                    let after = p.hypot(q);
                    (before - rating).max(0.0) - (after - rating).max(0.0)
                })
                .fold(0.0, |a, b| a + b)
        })
        .collect())
}

pub fn enumerate_cts(
    solver: &AcSolver<'_>,
    base: &PowerFlowSolution,
    contingency: ContingencyCase,
    violations: &[ViolationRecord],
    options: CtsOptions,
) -> Result<CtsResult> {
    let model = solver.model();
    let c = model
        .branch_index(contingency.outaged_branch)
        .ok_or_else(|| Error::Invalid(format!("unknown branch {}", contingency.outaged_branch)))?;
    let post = solver.solve(&[contingency.outaged_branch], Start::Warm(base))?;
    let mut violated: Vec<(usize, f64)> = violations
        .iter()
        .map(|v| (model.branch_index(v.branch).unwrap(), v.rate_emergency))
        .collect();
    violated.sort_unstable_by_key(|v| v.0);
    let original: Vec<f64> = violated.iter().map(|&(k, r)| (post.s_flow[k] - r).max(0.0)).collect();
    let original_total: f64 = original.iter().fold(0.0, |a, b| a + b);

    let mut candidates = candidate_positions(model, c);
    candidates.retain(|k| violated.iter().all(|v| v.0 != *k));
    if let Some(keep) = options.prescreen {
        if candidates.len() > keep {
            let est = dc_estimates(model, &post, contingency.outaged_branch, &violated, &candidates)?;
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by(|&a, &b| est[b].total_cmp(&est[a]).then(a.cmp(&b)));
            let mut kept: Vec<usize> = order[..keep].iter().map(|&i| candidates[i]).collect();
            kept.sort_unstable();
            candidates = kept;
        }
    }

    let evaluated: Vec<(usize, Option<PowerFlowSolution>)> = candidates
        .par_iter()
        .map(|&s| {
            let ids = [contingency.outaged_branch, model.branches[s].id];
            (s, solver.solve(&ids, Start::Warm(&post)).ok())
        })
        .collect();

    let mut ranked = Vec::new();
    let mut unevaluable = Vec::new();
    for (s, sol) in evaluated {
        let Some(sol) = sol else {
            unevaluable.push(model.branches[s].id);
            continue;
        };
        let branch_reductions: Vec<(usize, f64)> = violated
            .iter()
            .zip(&original)
            .map(|(&(k, rating), &before)| {
                let after = (sol.s_flow[k] - rating).max(0.0);
                (model.branches[k].id, before - after)
            })
            .collect();
        let reduction: f64 = branch_reductions.iter().map(|r| r.1).fold(0.0, |a, b| a + b);
        let mut pareto = true;
        let mut post_switch_flows = Vec::new();
        for (k, br) in model.branches.iter().enumerate() {
            if !br.is_monitored() || !br.in_service || k == c || k == s {
                continue;
            }
            post_switch_flows.push((br.id, sol.s_flow[k]));
            let before = (post.s_flow[k] - br.rate_emergency).max(0.0);
            let after = (sol.s_flow[k] - br.rate_emergency).max(0.0);
            if after > before {
                pareto = false;
            }
        }
        ranked.push(CtsCandidate {
            contingency: contingency.id,
            switch_branch: model.branches[s].id,
            violation_reduction_mva: reduction,
            reduction_pct: reduction_pct(reduction, original_total),
            pareto,
            branch_reductions,
            post_switch_flows,
        });
    }
    ranked.sort_by(|a, b| b.sort_key().cmp(&a.sort_key()).then(a.switch_branch.cmp(&b.switch_branch)));
    let top = ranked.iter().filter(|c| c.pareto && c.is_beneficial()).take(options.top_k).cloned().collect();
    Ok(CtsResult {
        contingency: contingency.id,
        violations: violations.to_vec(),
        original_violation_mva: original_total,
        ranked,
        top,
        unevaluable,
    })
}

/// Runs the switching search for every critical contingency of `ca`.
pub fn run_cts(model: &NetworkModel, base: &PowerFlowSolution, ca: &CaReport, options: CtsOptions) -> Result<CtsReport> {
    let solver = AcSolver::new(model);
    let results: Vec<Result<CtsResult>> = ca
        .critical_contingencies
        .par_iter()
        .map(|&id| {
            let case = ca.contingencies.iter().find(|c| c.id == id).copied().expect("critical id is listed");
            let violations: Vec<ViolationRecord> = ca.violations_of(id).cloned().collect();
            enumerate_cts(&solver, base, case, &violations, options)
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let tau = cts_effectiveness(&results, options.top_k);
    Ok(CtsReport { top_k: options.top_k, results, tau })
}

/// Mean reduction percent of the rank-r candidate over all contingencies,
/// for r = 1..=max_rank. A missing candidate counts as zero.
pub fn cts_effectiveness(results: &[CtsResult], max_rank: usize) -> Vec<f64> {
    if results.is_empty() {
        return vec![0.0; max_rank];
    }
    (0..max_rank)
        .map(|r| {
            let sum: f64 = results.iter().map(|res| res.top.get(r).map_or(0.0, |c| c.reduction_pct)).fold(0.0, |a, b| a + b);
            sum / results.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoLimit {
    pub contingency: usize,
    pub branch: usize,
    pub actual_limit_mw: f64,
    pub pseudo_limit_mw: f64,
    pub cts_rank_used: usize,
    pub switch_branch: Option<usize>,
}

/// Pseudo emergency limit of every violated (contingency, branch) pair
/// using the candidate at `rank` (1-based). Pairs without such a candidate
/// keep their actual limit. With `post_contingency_q` false the base-case
/// reactive flow is used for both the actual and the pseudo limit.
pub fn pseudo_limits(report: &CtsReport, rank: usize, post_contingency_q: bool) -> Result<Vec<PseudoLimit>> {
    let mut out = Vec::new();
    for res in &report.results {
        let cand = rank.checked_sub(1).and_then(|r| res.top.get(r));
        for v in &res.violations {
            let q = if post_contingency_q { v.q_post } else { v.q_base };
            let actual = mw_limit(v.rate_emergency, q)?;
            let (pseudo, switch) = match cand {
                Some(c) => {
                    let red = c.reduction_on(v.branch).max(0.0);
                    (pseudo_limit(v.rate_emergency, red, q)?, Some(c.switch_branch))
                }
                None => (actual, None),
            };
            out.push(PseudoLimit {
                contingency: res.contingency,
                branch: v.branch,
                actual_limit_mw: actual,
                pseudo_limit_mw: pseudo,
                cts_rank_used: rank,
                switch_branch: switch,
            });
        }
    }
    Ok(out)
}

/// Stored switching action applied at a new operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayRecord {
    pub contingency: usize,
    pub rank: usize,
    pub switch_branch: usize,
    /// summed overload of the contingency without switching
    pub unswitched_violation_mva: f64,
    /// same branches after switching; `None` if the solve failed
    pub switched_violation_mva: Option<f64>,
}

impl ReplayRecord {
    pub fn removes_violation(&self) -> bool {
        self.switched_violation_mva.is_some_and(|v| v <= REDUCTION_GRID)
    }

    pub fn reduces_violation(&self) -> bool {
        self.switched_violation_mva.is_some_and(|v| v < self.unswitched_violation_mva)
    }
}

/// Replays the stored top candidates against the violations found at a
/// new operating point. Only contingencies critical in both `stored` and
/// `ca` are replayed.
pub fn replay_cts(model: &NetworkModel, base: &PowerFlowSolution, ca: &CaReport, stored: &CtsReport) -> Result<Vec<ReplayRecord>> {
    let solver = AcSolver::new(model);
    let mut jobs = Vec::new();
    for res in &stored.results {
        if !ca.critical_contingencies.contains(&res.contingency) {
            continue;
        }
        for (r, cand) in res.top.iter().enumerate() {
            jobs.push((res.contingency, r + 1, cand.switch_branch));
        }
    }
    let mut by_contingency: BTreeMap<usize, Vec<&ViolationRecord>> = BTreeMap::new();
    for v in &ca.violations {
        by_contingency.entry(v.contingency).or_default().push(v);
    }
    let records = jobs
        .par_iter()
        .map(|&(c, rank, s)| {
            let violations = &by_contingency[&c];
            let unswitched: f64 = violations.iter().map(|v| v.overload_mva).fold(0.0, |a, b| a + b);
            let switched = solver.solve(&[c, s], Start::Warm(base)).ok().map(|sol| {
                violations
                    .iter()
                    .map(|v| {
                        if v.branch == s {
                            return 0.0;
                        }
                        let k = model.branch_index(v.branch).unwrap();
                        (sol.s_flow[k] - v.rate_emergency).max(0.0)
                    })
                    .fold(0.0, |a, b| a + b)
            });
            ReplayRecord {
                contingency: c,
                rank,
                switch_branch: s,
                unswitched_violation_mva: unswitched,
                switched_violation_mva: switched,
            }
        })
        .collect();
    Ok(records)
}

#[derive(Serialize)]
struct CtsRow {
    contingency: usize,
    rank: usize,
    switch_branch: usize,
    reduction_mva: f64,
    reduction_pct: f64,
    pareto: bool,
    monitored_branch: usize,
    pseudo_limit_mw: f64,
}

/// One row per (contingency, rank, violated branch).
pub fn write_cts_csv(report: &CtsReport, out: impl Write) -> Result<()> {
    let mut rows = Vec::new();
    for res in &report.results {
        for (r, cand) in res.top.iter().enumerate() {
            for v in &res.violations {
                rows.push(CtsRow {
                    contingency: res.contingency,
                    rank: r + 1,
                    switch_branch: cand.switch_branch,
                    reduction_mva: cand.violation_reduction_mva,
                    reduction_pct: cand.reduction_pct,
                    pareto: cand.pareto,
                    monitored_branch: v.branch,
                    pseudo_limit_mw: pseudo_limit(v.rate_emergency, cand.reduction_on(v.branch).max(0.0), v.q_post)?,
                });
            }
        }
    }
    write_table(
        out,
        &[
            "contingency",
            "rank",
            "switch_branch",
            "reduction_mva",
            "reduction_pct",
            "pareto",
            "monitored_branch",
            "pseudo_limit_mw",
        ],
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_limit_examples() {
        let q = 147.99;
        let expected = [(74.4, 1358.8), (70.1, 1354.5), (48.6, 1332.9), (48.0, 1332.3)];
        for (red, mw) in expected {
            assert!((pseudo_limit(1292.5, red, q).unwrap() - mw).abs() < 0.1);
        }
        assert_eq!(pseudo_limit(1292.5, 0.0, q).unwrap(), mw_limit(1292.5, q).unwrap());
        assert_eq!(pseudo_limit(100.0, 25.0, 0.0).unwrap(), 125.0);
        assert!(pseudo_limit(100.0, 0.0, 120.0).is_err());
        assert!(pseudo_limit(100.0, -1.0, 0.0).is_err());
    }

    fn result(pcts: &[f64]) -> CtsResult {
        let top = pcts
            .iter()
            .enumerate()
            .map(|(i, &p)| CtsCandidate {
                contingency: 1,
                switch_branch: i + 1,
                violation_reduction_mva: p,
                reduction_pct: p,
                pareto: true,
                branch_reductions: vec![],
                post_switch_flows: vec![],
            })
            .collect();
        CtsResult { contingency: 1, violations: vec![], original_violation_mva: 100.0, ranked: vec![], top, unevaluable: vec![] }
    }

    #[test]
    fn effectiveness_is_a_rank_wise_mean() {
        assert_eq!(cts_effectiveness(&[result(&[30.8])], 1), vec![30.8]);
        let tau = cts_effectiveness(&[result(&[40.0, 10.0]), result(&[20.0])], 3);
        assert_eq!(tau, vec![30.0, 5.0, 0.0]);
        assert_eq!(cts_effectiveness(&[result(&[]), result(&[])], 2), vec![0.0, 0.0]);
    }
}
