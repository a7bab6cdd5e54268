//! N-1 contingency analysis over non-radial branch outages.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::export::write_table;
use crate::model::NetworkModel;
use crate::powerflow::{overload, AcSolver, PowerFlowSolution, Start};
use crate::topology::find_radial_branches;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ContingencyCase {
    pub id: usize,
    pub outaged_branch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationRecord {
    pub contingency: usize,
    pub branch: usize,
    pub flow_mva: f64,
    pub rate_emergency: f64,
    pub overload_mva: f64,
    pub overload_pct: f64,
    /// MVar at the monitored end after the outage
    pub q_post: f64,
    /// MVar at the monitored end in the base case
    pub q_base: f64,
}

/// Post-contingency loading of a monitored branch, kept for constraint
/// selection when it reaches the recording threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostContingencyFlow {
    pub contingency: usize,
    pub branch: usize,
    pub flow_mva: f64,
    /// signed MW at the monitored end
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaReport {
    pub cases_evaluated: usize,
    pub contingencies: Vec<ContingencyCase>,
    pub violations: Vec<ViolationRecord>,
    pub critical_contingencies: BTreeSet<usize>,
    pub total_violation_mva: f64,
    pub nonconverged: Vec<usize>,
    /// percent of emergency rating at which loadings are recorded
    pub record_threshold_pct: f64,
    pub loadings: Vec<PostContingencyFlow>,
}

impl CaReport {
    pub fn violations_of(&self, contingency: usize) -> impl Iterator<Item = &ViolationRecord> {
        self.violations.iter().filter(move |v| v.contingency == contingency)
    }

    pub fn max_violation_pct(&self) -> f64 {
        self.violations.iter().map(|v| v.overload_pct).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RtcaOptions {
    pub record_threshold_pct: f64,
}

impl Default for RtcaOptions {
    fn default() -> Self {
        RtcaOptions { record_threshold_pct: 90.0 }
    }
}

/// In-service non-radial branches in id order. The contingency id is the
/// outaged branch id.
pub fn contingency_list(model: &NetworkModel) -> Vec<ContingencyCase> {
    let radial = find_radial_branches(model);
    let mut list: Vec<_> = model
        .branches
        .iter()
        .filter(|b| b.in_service && !radial.contains(&b.id))
        .map(|b| ContingencyCase { id: b.id, outaged_branch: b.id })
        .collect();
    list.sort_by_key(|c| c.id);
    list
}

pub fn run_rtca(model: &NetworkModel, base: &PowerFlowSolution, options: RtcaOptions) -> Result<CaReport> {
    run_rtca_on(model, base, &contingency_list(model), options)
}

/// Outcome of a single contingency.
pub enum CaseOutcome {
    Solved { violations: Vec<ViolationRecord>, loadings: Vec<PostContingencyFlow> },
    NotConverged,
}

pub fn evaluate_contingency(
    solver: &AcSolver<'_>,
    base: &PowerFlowSolution,
    case: ContingencyCase,
    options: RtcaOptions,
) -> Result<CaseOutcome> {
    let model = solver.model();
    let sol = match solver.solve(&[case.outaged_branch], Start::Warm(base)) {
        Ok(s) => s,
        Err(Error::NotConverged { .. }) | Err(Error::Singular(_)) => return Ok(CaseOutcome::NotConverged),
        Err(e) => return Err(e),
    };
    let mut violations = Vec::new();
    let mut loadings = Vec::new();
    for (k, br) in model.branches.iter().enumerate() {
        if !br.is_monitored() || !br.in_service || br.id == case.outaged_branch {
            continue;
        }
        let flow = sol.s_flow[k];
        if flow >= options.record_threshold_pct / 100.0 * br.rate_emergency {
            loadings.push(PostContingencyFlow {
                contingency: case.id,
                branch: br.id,
                flow_mva: flow,
                p_mw: sol.monitored_p(k),
                q_mvar: sol.monitored_q(k),
            });
        }
        if let Some(v) = overload(flow, br.rate_emergency) {
            violations.push(ViolationRecord {
                contingency: case.id,
                branch: br.id,
                flow_mva: flow,
                rate_emergency: br.rate_emergency,
                overload_mva: v.overload_mva,
                overload_pct: v.overload_pct,
                q_post: sol.monitored_q(k),
                q_base: base.monitored_q(k),
            });
        }
    }
    Ok(CaseOutcome::Solved { violations, loadings })
}

/// Runs the given contingency list. Cases are solved in parallel and merged
/// in list order.
pub fn run_rtca_on(
    model: &NetworkModel,
    base: &PowerFlowSolution,
    list: &[ContingencyCase],
    options: RtcaOptions,
) -> Result<CaReport> {
    let solver = AcSolver::new(model);
    let outcomes: Vec<Result<CaseOutcome>> =
        list.par_iter().map(|&case| evaluate_contingency(&solver, base, case, options)).collect();
    let mut report = CaReport {
        cases_evaluated: list.len(),
        contingencies: list.to_vec(),
        violations: Vec::new(),
        critical_contingencies: BTreeSet::new(),
        total_violation_mva: 0.0,
        nonconverged: Vec::new(),
        record_threshold_pct: options.record_threshold_pct,
        loadings: Vec::new(),
    };
    for (case, outcome) in list.iter().zip(outcomes) {
        match outcome? {
            CaseOutcome::Solved { violations, loadings } => {
                if !violations.is_empty() {
                    report.critical_contingencies.insert(case.id);
                }
                report.violations.extend(violations);
                report.loadings.extend(loadings);
            }
            CaseOutcome::NotConverged => report.nonconverged.push(case.id),
        }
    }
    report.total_violation_mva = report.violations.iter().map(|v| v.overload_mva).fold(0.0, |a, b| a + b);
    Ok(report)
}

/// MW headroom under an MVA rating at the post-contingency reactive flow.
pub fn mw_emergency_limit_accurate(rate_emergency: f64, q_post: f64) -> Result<f64> {
    mw_limit(rate_emergency, q_post)
}

/// Same conversion using the base-case reactive flow.
pub fn mw_emergency_limit_coarse(rate_emergency: f64, q_base: f64) -> Result<f64> {
    mw_limit(rate_emergency, q_base)
}

pub(crate) fn mw_limit(rating: f64, q: f64) -> Result<f64> {
    if q.abs() > rating {
        return Err(Error::DegenerateLimit { rating, q });
    }
    Ok((rating * rating - q * q).sqrt())
}

pub fn write_violations_csv(report: &CaReport, out: impl Write) -> Result<()> {
    write_table(
        out,
        &["contingency", "branch", "flow_mva", "rate_emergency", "overload_mva", "overload_pct", "q_post", "q_base"],
        &report.violations,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_examples() {
        assert!((mw_emergency_limit_accurate(1292.5, 147.99).unwrap() - 1284.0).abs() < 0.05);
        assert_eq!(mw_emergency_limit_accurate(1292.5, 0.0).unwrap(), 1292.5);
        assert!((mw_emergency_limit_accurate(100.0, 60.0).unwrap() - 80.0).abs() < 1e-12);
        assert!((mw_emergency_limit_coarse(1292.5, 45.4).unwrap() - 1291.7).abs() < 0.05);
        assert_eq!(mw_emergency_limit_coarse(1292.5, 0.0).unwrap(), 1292.5);
        assert!((mw_emergency_limit_coarse(100.0, 80.0).unwrap() - 60.0).abs() < 1e-12);
        assert!(matches!(mw_emergency_limit_accurate(100.0, 101.0), Err(Error::DegenerateLimit { .. })));
    }
}
