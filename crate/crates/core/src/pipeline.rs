//! End-to-end procedures: pre-dispatch analysis, dispatch, and the
//! post-dispatch recheck at the new operating point.
//!
//! Procedure A runs power flow, contingency analysis, constraint selection
//! and the dispatch, then repeats power flow and contingency analysis with
//! the dispatched units. Procedure B additionally searches for corrective
//! switching after the contingency analysis, relaxes the violated limits to
//! pseudo limits when `use_pseudo_limits` is set, and afterwards replays
//! the stored switching actions against the fresh violations.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cts::{pseudo_limits, replay_cts, run_cts, CtsOptions, CtsReport, PseudoLimit, ReplayRecord};
use crate::error::Result;
use crate::export::write_table;
use crate::market::{compute_lmps, settle, MarketReport};
use crate::model::NetworkModel;
use crate::powerflow::{check_violations, solve_ac, FlowViolation, PowerFlowSolution, Rating, Start};
use crate::rtca::{contingency_list, run_rtca_on, CaReport, ContingencyCase, RtcaOptions};
use crate::sced::{apply_pseudo_limits, select_network_constraints, solve_sced, ScedConfig, ScedSolution};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub sced: ScedConfig,
    #[serde(flatten)]
    pub cts: CtsOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Procedure {
    A,
    B,
}

/// Security analysis at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecurityStage {
    pub converged_iterations: usize,
    pub losses_mw: f64,
    pub base_violations: Vec<FlowViolation>,
    pub base_violation_mva: f64,
    pub ca: CaReport,
    pub cts: Option<CtsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchStage {
    pub constraints_modeled: usize,
    pub pseudo_limits: Vec<PseudoLimit>,
    pub solution: ScedSolution,
    pub market: MarketReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deltas {
    pub pre_violation_mva: f64,
    pub post_violation_mva: f64,
    pub violation_reduction_mva: f64,
    pub pre_base_violation_mva: f64,
    pub post_base_violation_mva: f64,
    pub congestion_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub procedure: Procedure,
    pub case: String,
    pub config: PipelineConfig,
    pub pre: SecurityStage,
    pub sced: DispatchStage,
    pub post: SecurityStage,
    /// stored pre-stage actions applied at the new dispatch, Procedure B only
    pub replay: Option<Vec<ReplayRecord>>,
    pub deltas: Deltas,
}

fn security_stage(
    model: &NetworkModel,
    list: &[ContingencyCase],
    options: RtcaOptions,
    cts: Option<CtsOptions>,
    stage: &'static str,
) -> Result<(PowerFlowSolution, SecurityStage)> {
    let base = solve_ac(model, &[], Start::Flat).map_err(|e| e.in_stage(stage))?;
    let base_violations = check_violations(&base, model, Rating::Normal);
    let ca = run_rtca_on(model, &base, list, options).map_err(|e| e.in_stage(stage))?;
    let cts = match cts {
        Some(o) => Some(run_cts(model, &base, &ca, o).map_err(|e| e.in_stage(stage))?),
        None => None,
    };
    let stage = SecurityStage {
        converged_iterations: base.iterations,
        losses_mw: base.losses(),
        base_violation_mva: base_violations.iter().map(|v| v.overload_mva).fold(0.0, |a, b| a + b),
        base_violations,
        ca,
        cts,
    };
    Ok((base, stage))
}

pub fn run_procedure_a(model: &NetworkModel, config: &PipelineConfig) -> Result<PipelineReport> {
    run(model, config, Procedure::A)
}

pub fn run_procedure_b(model: &NetworkModel, config: &PipelineConfig) -> Result<PipelineReport> {
    run(model, config, Procedure::B)
}

fn run(model: &NetworkModel, config: &PipelineConfig, procedure: Procedure) -> Result<PipelineReport> {
    config.sced.validate().map_err(|e| e.in_stage("config"))?;
    let with_cts = procedure == Procedure::B;
    let cts_options = with_cts.then_some(config.cts);
    let options = RtcaOptions { record_threshold_pct: config.sced.pctc.min(90.0) };
    let list = contingency_list(model);

    let (base, pre) = security_stage(model, &list, options, cts_options, "pre-dispatch")?;

    let mut constraints = select_network_constraints(model, &base, &pre.ca, &config.sced);
    let mut pseudo = Vec::new();
    if let (Some(cts), true) = (&pre.cts, config.sced.use_pseudo_limits) {
        pseudo = pseudo_limits(cts, config.sced.cts_rank, config.sced.variant.uses_post_contingency_q())
            .map_err(|e| e.in_stage("dispatch"))?;
        constraints = apply_pseudo_limits(&constraints, &pseudo);
    }
    let solution = solve_sced(model, &base, &constraints, &config.sced).map_err(|e| e.in_stage("dispatch"))?;
    let lmps = compute_lmps(model, &solution).map_err(|e| e.in_stage("settlement"))?;
    let market = settle(model, &lmps, &solution.dispatch);
    let sced = DispatchStage { constraints_modeled: constraints.len(), pseudo_limits: pseudo, solution, market };

    // the post stage sees only the model and the new dispatch
    let redispatched = model.with_dispatch(&sced.solution.dispatch);
    let (post_base, post) = security_stage(&redispatched, &list, options, cts_options, "post-dispatch")?;
    let replay = match &pre.cts {
        Some(stored) => Some(replay_cts(&redispatched, &post_base, &post.ca, stored).map_err(|e| e.in_stage("post-dispatch"))?),
        None => None,
    };

    let deltas = Deltas {
        pre_violation_mva: pre.ca.total_violation_mva,
        post_violation_mva: post.ca.total_violation_mva,
        violation_reduction_mva: pre.ca.total_violation_mva - post.ca.total_violation_mva,
        pre_base_violation_mva: pre.base_violation_mva,
        post_base_violation_mva: post.base_violation_mva,
        congestion_cost: sced.solution.congestion_cost,
    };
    Ok(PipelineReport { procedure, case: model.name.clone(), config: config.clone(), pre, sced, post, replay, deltas })
}

/// Procedure A with the plain limits next to Procedure B with pseudo limits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub sced: PipelineReport,
    pub esced: PipelineReport,
    pub congestion_cost_delta: f64,
    pub total_cost_delta: f64,
    pub load_payment_delta: f64,
    pub post_violation_delta_mva: f64,
}

pub fn compare(model: &NetworkModel, config: &PipelineConfig) -> Result<Comparison> {
    let mut plain = config.clone();
    plain.sced.use_pseudo_limits = false;
    let mut relaxed = config.clone();
    relaxed.sced.use_pseudo_limits = true;
    let sced = run_procedure_a(model, &plain)?;
    let esced = run_procedure_b(model, &relaxed)?;
    let (a, b) = (&sced.sced, &esced.sced);
    Ok(Comparison {
        congestion_cost_delta: b.solution.congestion_cost - a.solution.congestion_cost,
        total_cost_delta: b.solution.total_cost - a.solution.total_cost,
        load_payment_delta: b.market.load_payment - a.market.load_payment,
        post_violation_delta_mva: esced.post.ca.total_violation_mva - sced.post.ca.total_violation_mva,
        sced,
        esced,
    })
}

fn label(report: &PipelineReport) -> String {
    let kind = if report.sced.pseudo_limits.is_empty() { "SCED" } else { "E-SCED" };
    format!("{kind} {}", report.config.sced.variant)
}

fn violation_table(out: &mut String, ca: &CaReport) {
    if ca.violations.is_empty() {
        let _ = writeln!(out, "  no post-contingency violations ({} contingencies)", ca.cases_evaluated);
        return;
    }
    let _ = writeln!(out, "  {:>11} {:>7} {:>10} {:>10} {:>10} {:>8}", "contingency", "branch", "flow MVA", "rating", "overload", "%");
    for v in &ca.violations {
        let _ = writeln!(
            out,
            "  {:>11} {:>7} {:>10.1} {:>10.1} {:>10.1} {:>8.1}",
            v.contingency, v.branch, v.flow_mva, v.rate_emergency, v.overload_mva, v.overload_pct
        );
    }
    let _ = writeln!(out, "  total overload {:.1} MVA over {} contingencies", ca.total_violation_mva, ca.critical_contingencies.len());
    if !ca.nonconverged.is_empty() {
        let _ = writeln!(out, "  not converged: {:?}", ca.nonconverged);
    }
}

fn cts_table(out: &mut String, cts: &CtsReport) {
    for res in &cts.results {
        let _ = writeln!(out, "  contingency {} (overload {:.1} MVA)", res.contingency, res.original_violation_mva);
        if res.top.is_empty() {
            let _ = writeln!(out, "    no beneficial switching action");
        }
        for (r, c) in res.top.iter().enumerate() {
            let _ = writeln!(
                out,
                "    rank {} open {:>5}  reduction {:>8.1} MVA {:>6.1}%",
                r + 1,
                c.switch_branch,
                c.violation_reduction_mva,
                c.reduction_pct
            );
        }
    }
}

fn security_text(out: &mut String, title: &str, stage: &SecurityStage) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "  base case: losses {:.1} MW, overload {:.1} MVA", stage.losses_mw, stage.base_violation_mva);
    violation_table(out, &stage.ca);
    if let Some(cts) = &stage.cts {
        cts_table(out, cts);
    }
}

/// Human-readable summary, MW/MVA and $ to one decimal.
pub fn text_summary(report: &PipelineReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Procedure {:?} on {} ({})", report.procedure, report.case, label(report));
    security_text(&mut out, "Pre-dispatch", &report.pre);

    let s = &report.sced;
    let _ = writeln!(out, "Dispatch");
    if !s.pseudo_limits.is_empty() {
        let _ = writeln!(out, "  {:>11} {:>7} {:>10} {:>10} {:>7}", "contingency", "branch", "actual MW", "pseudo MW", "switch");
        for p in &s.pseudo_limits {
            let switch = p.switch_branch.map_or("-".to_string(), |b| b.to_string());
            let _ = writeln!(
                out,
                "  {:>11} {:>7} {:>10.1} {:>10.1} {:>7}",
                p.contingency, p.branch, p.actual_limit_mw, p.pseudo_limit_mw, switch
            );
        }
    }
    let sol = &s.solution;
    let _ = writeln!(out, "  constraints modeled {}, binding {}", s.constraints_modeled, sol.binding().count());
    for c in sol.binding() {
        let _ = writeln!(out, "    {:<16} limit {:>8.1} MW  dual {:>8.1} $/MWh", c.constraint.name(), c.constraint.limit_mw, c.dual);
    }
    let _ = writeln!(out, "  total cost ${:.1}", sol.total_cost);
    let _ = writeln!(out, "  congestion cost ${:.1}", sol.congestion_cost);
    let _ = writeln!(out, "  energy price ${:.1}/MWh, average LMP ${:.1}/MWh", sol.energy_price, s.market.average_lmp);
    let _ = writeln!(
        out,
        "  load payment ${:.1}, generator revenue ${:.1}, congestion revenue ${:.1}",
        s.market.load_payment, s.market.generator_revenue, s.market.congestion_revenue
    );

    security_text(&mut out, "Post-dispatch", &report.post);
    if let Some(replay) = &report.replay {
        let _ = writeln!(out, "Stored switching actions at the new dispatch");
        if replay.is_empty() {
            let _ = writeln!(out, "  none applicable");
        }
        for r in replay {
            let after = r.switched_violation_mva.map_or("failed".to_string(), |v| format!("{v:.1}"));
            let _ = writeln!(
                out,
                "  contingency {:>5} rank {} open {:>5}: {:.1} -> {} MVA",
                r.contingency, r.rank, r.switch_branch, r.unswitched_violation_mva, after
            );
        }
    }
    let d = &report.deltas;
    let _ = writeln!(
        out,
        "Contingency overload {:.1} -> {:.1} MVA, base overload {:.1} -> {:.1} MVA",
        d.pre_violation_mva, d.post_violation_mva, d.pre_base_violation_mva, d.post_base_violation_mva
    );
    out
}

pub fn comparison_summary(cmp: &Comparison) -> String {
    let mut out = String::new();
    let rows = [(&cmp.sced, "SCED"), (&cmp.esced, "E-SCED")];
    let _ = writeln!(out, "{:<8} {:>14} {:>14} {:>14} {:>12} {:>12}", "", "total $", "congestion $", "load pay $", "pre MVA", "post MVA");
    for (r, name) in rows {
        let _ = writeln!(
            out,
            "{:<8} {:>14.1} {:>14.1} {:>14.1} {:>12.1} {:>12.1}",
            name,
            r.sced.solution.total_cost,
            r.sced.solution.congestion_cost,
            r.sced.market.load_payment,
            r.deltas.pre_violation_mva,
            r.deltas.post_violation_mva
        );
    }
    let _ = writeln!(
        out,
        "{:<8} {:>14.1} {:>14.1} {:>14.1} {:>12} {:>12.1}",
        "delta", cmp.total_cost_delta, cmp.congestion_cost_delta, cmp.load_payment_delta, "", cmp.post_violation_delta_mva
    );
    out
}

#[derive(Serialize)]
struct CostBar {
    label: String,
    congestion_cost: f64,
    total_cost: f64,
}

#[derive(Serialize)]
struct PaymentBar {
    label: String,
    load_payment: f64,
    generator_revenue: f64,
    congestion_revenue: f64,
}

/// Bar chart data: congestion and total cost per run.
pub fn write_cost_plot(reports: &[&PipelineReport], out: impl Write) -> Result<()> {
    let rows = reports.iter().map(|r| CostBar {
        label: label(r),
        congestion_cost: r.sced.solution.congestion_cost,
        total_cost: r.sced.solution.total_cost,
    });
    write_table(out, &["label", "congestion_cost", "total_cost"], rows)
}

/// Bar chart data: load payment, generator revenue and congestion revenue.
pub fn write_payment_plot(reports: &[&PipelineReport], out: impl Write) -> Result<()> {
    let rows = reports.iter().map(|r| PaymentBar {
        label: label(r),
        load_payment: r.sced.market.load_payment,
        generator_revenue: r.sced.market.generator_revenue,
        congestion_revenue: r.sced.market.congestion_revenue,
    });
    write_table(out, &["label", "load_payment", "generator_revenue", "congestion_revenue"], rows)
}
