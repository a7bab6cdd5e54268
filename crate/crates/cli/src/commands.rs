use std::fmt::Write as _;
use std::time::Instant;

use ems_core::cts::{pseudo_limits, run_cts, write_cts_csv, CtsReport, PseudoLimit};
use ems_core::market::{compute_lmps, settle, write_lmp_csv, MarketReport};
use ems_core::model::NetworkModel;
use ems_core::pipeline::{
    comparison_summary, run_procedure_a, run_procedure_b, text_summary, write_cost_plot, write_payment_plot,
    PipelineReport,
};
use ems_core::powerflow::{
    check_violations, solve_ac, write_branch_csv, write_bus_csv, FlowViolation, PowerFlowSolution, Rating, Start,
};
use ems_core::rtca::{run_rtca, write_violations_csv, CaReport, RtcaOptions};
use ems_core::sced::{
    apply_pseudo_limits, select_network_constraints, solve_sced, write_constraint_csv, write_dispatch_csv,
    ScedSolution,
};
use serde::Serialize;

use crate::config::{RunArgs, RunConfig};
use crate::output::Artifacts;
use crate::Failure;

type Outcome = Result<(), Failure>;

struct Clock {
    enabled: bool,
    last: Instant,
}

impl Clock {
    fn new(enabled: bool) -> Clock {
        Clock { enabled, last: Instant::now() }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        if self.enabled {
            eprintln!("{stage:<14} {:>10.1} ms", (now - self.last).as_secs_f64() * 1e3);
        }
        self.last = now;
    }
}

fn domain(e: ems_core::Error) -> Failure {
    Failure::Domain(e)
}

fn load(args: &RunArgs) -> Result<(RunConfig, NetworkModel), Failure> {
    let cfg = args.resolve().map_err(Failure::Usage)?;
    let model = ems_core::native::load_case(&cfg.case_path)
        .map_err(|e| Failure::Usage(format!("cannot load {}: {e}", cfg.case_path.display())))?;
    Ok((cfg, model))
}

fn rtca_options(cfg: &RunConfig) -> RtcaOptions {
    RtcaOptions { record_threshold_pct: cfg.pipeline.sced.pctc.min(90.0) }
}

fn violation_text(out: &mut String, ca: &CaReport) {
    let _ = writeln!(out, "Contingencies evaluated: {}", ca.cases_evaluated);
    if !ca.nonconverged.is_empty() {
        let _ = writeln!(out, "Not converged: {:?}", ca.nonconverged);
    }
    if ca.violations.is_empty() {
        let _ = writeln!(out, "No post-contingency violations");
        return;
    }
    let _ = writeln!(out, "{:>11} {:>7} {:>10} {:>10} {:>10} {:>8}", "contingency", "branch", "flow MVA", "rating", "overload", "%");
    for v in &ca.violations {
        let _ = writeln!(
            out,
            "{:>11} {:>7} {:>10.1} {:>10.1} {:>10.1} {:>8.1}",
            v.contingency, v.branch, v.flow_mva, v.rate_emergency, v.overload_mva, v.overload_pct
        );
    }
    let _ = writeln!(out, "Total overload {:.1} MVA", ca.total_violation_mva);
}

#[derive(Serialize)]
struct PfReport<'a> {
    case: &'a str,
    losses_mw: f64,
    violations: Vec<FlowViolation>,
    solution: &'a PowerFlowSolution,
}

pub fn pf(args: &RunArgs, timings: bool) -> Outcome {
    let mut clock = Clock::new(timings);
    let (cfg, model) = load(args)?;
    clock.lap("load");
    let sol = solve_ac(&model, &[], Start::Flat).map_err(domain)?;
    clock.lap("power flow");
    let violations = check_violations(&sol, &model, Rating::Normal);

    let mut text = String::new();
    let _ = writeln!(
        text,
        "Case {}: {} buses, {} branches, {} generators",
        model.name,
        model.buses.len(),
        model.branches.len(),
        model.generators.len()
    );
    let _ = writeln!(text, "Power flow converged in {} iterations (max mismatch {:.1e} pu)", sol.iterations, sol.max_mismatch);
    let _ = writeln!(text, "Slack {:.1} MW {:.1} MVar, losses {:.1} MW", sol.slack_p, sol.slack_q, sol.losses());
    let _ = writeln!(text, "{:>7} {:>6} {:>6} {:>10} {:>10} {:>10} {:>10}", "branch", "from", "to", "P MW", "Q MVar", "S MVA", "rating");
    for (k, br) in model.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let _ = writeln!(
            text,
            "{:>7} {:>6} {:>6} {:>10.1} {:>10.1} {:>10.1} {:>10.1}",
            br.id, br.from_bus, br.to_bus, sol.p_from[k], sol.q_from[k], sol.s_flow[k], br.rate_normal
        );
    }
    if violations.is_empty() {
        let _ = writeln!(text, "No base-case violations");
    }
    for v in &violations {
        let _ = writeln!(text, "Branch {} at {:.1} MVA exceeds {:.1} by {:.1} ({:.1}%)", v.branch, v.flow_mva, v.rating_mva, v.overload_mva, v.overload_pct);
    }

    let report = PfReport { case: &model.name, losses_mw: sol.losses(), violations, solution: &sol };
    let mut art = Artifacts::new("pf", &report, text)?;
    art.table("branch.csv", |b| write_branch_csv(&sol, &model, b))?;
    art.table("bus.csv", |b| write_bus_csv(&sol, &model, b))?;
    art.emit(cfg.format, cfg.out_dir.as_deref())
}

fn analyse(model: &NetworkModel, cfg: &RunConfig, clock: &mut Clock) -> Result<(PowerFlowSolution, CaReport), Failure> {
    let base = solve_ac(model, &[], Start::Flat).map_err(domain)?;
    clock.lap("power flow");
    let ca = run_rtca(model, &base, rtca_options(cfg)).map_err(domain)?;
    clock.lap("contingencies");
    Ok((base, ca))
}

pub fn rtca(args: &RunArgs, timings: bool) -> Outcome {
    let mut clock = Clock::new(timings);
    let (cfg, model) = load(args)?;
    clock.lap("load");
    let (_, ca) = analyse(&model, &cfg, &mut clock)?;
    let mut text = String::new();
    violation_text(&mut text, &ca);
    let mut art = Artifacts::new("rtca", &ca, text)?;
    art.table("violations.csv", |b| write_violations_csv(&ca, b))?;
    art.emit(cfg.format, cfg.out_dir.as_deref())
}

fn cts_text(out: &mut String, cts: &CtsReport) {
    for res in &cts.results {
        let _ = writeln!(out, "Contingency {} (overload {:.1} MVA)", res.contingency, res.original_violation_mva);
        if res.top.is_empty() {
            let _ = writeln!(out, "  no beneficial switching action");
        }
        for (r, c) in res.top.iter().enumerate() {
            let _ = writeln!(
                out,
                "  rank {} open branch {:>5}: reduction {:.1} MVA ({:.1}%)",
                r + 1,
                c.switch_branch,
                c.violation_reduction_mva,
                c.reduction_pct
            );
        }
    }
    let taus: Vec<String> = cts.tau.iter().map(|t| format!("{t:.1}")).collect();
    let _ = writeln!(out, "Mean reduction by rank (%): {}", taus.join(" "));
}

#[derive(Serialize)]
struct CtsOutput<'a> {
    ca: &'a CaReport,
    cts: &'a CtsReport,
}

pub fn cts(args: &RunArgs, timings: bool) -> Outcome {
    let mut clock = Clock::new(timings);
    let (cfg, model) = load(args)?;
    clock.lap("load");
    let (base, ca) = analyse(&model, &cfg, &mut clock)?;
    let cts = run_cts(&model, &base, &ca, cfg.pipeline.cts).map_err(domain)?;
    clock.lap("switching");
    let mut text = String::new();
    violation_text(&mut text, &ca);
    cts_text(&mut text, &cts);
    let mut art = Artifacts::new("cts", &CtsOutput { ca: &ca, cts: &cts }, text)?;
    art.table("cts.csv", |b| write_cts_csv(&cts, b))?;
    art.table("violations.csv", |b| write_violations_csv(&ca, b))?;
    art.emit(cfg.format, cfg.out_dir.as_deref())
}

#[derive(Serialize)]
struct ScedOutput<'a> {
    case: &'a str,
    pseudo_limits: &'a [PseudoLimit],
    solution: &'a ScedSolution,
    market: &'a MarketReport,
}

pub fn sced(args: &RunArgs, with_pseudo: bool, timings: bool) -> Outcome {
    let mut clock = Clock::new(timings);
    let (cfg, model) = load(args)?;
    clock.lap("load");
    let sc = &cfg.pipeline.sced;
    let (base, ca) = analyse(&model, &cfg, &mut clock)?;
    let mut constraints = select_network_constraints(&model, &base, &ca, sc);
    let mut pseudo = Vec::new();
    if with_pseudo {
        let cts = run_cts(&model, &base, &ca, cfg.pipeline.cts).map_err(domain)?;
        clock.lap("switching");
        pseudo = pseudo_limits(&cts, sc.cts_rank, sc.variant.uses_post_contingency_q()).map_err(domain)?;
        constraints = apply_pseudo_limits(&constraints, &pseudo);
    }
    let sol = solve_sced(&model, &base, &constraints, sc).map_err(domain)?;
    clock.lap("dispatch");
    if timings {
        eprintln!("{:<14} {:>10.1} ms", "  lp solve", sol.solve_time.as_secs_f64() * 1e3);
    }
    let lmps = compute_lmps(&model, &sol).map_err(domain)?;
    let market = settle(&model, &lmps, &sol.dispatch);

    let mut text = String::new();
    let kind = if with_pseudo { "E-SCED" } else { "SCED" };
    let _ = writeln!(text, "{kind} {} on {}: {} network constraints, {} binding", sc.variant, model.name, constraints.len(), sol.binding().count());
    for c in sol.binding() {
        let _ = writeln!(text, "  {:<16} limit {:>8.1} MW  dual {:>8.1} $/MWh", c.constraint.name(), c.constraint.limit_mw, c.dual);
    }
    let _ = writeln!(text, "Total cost ${:.1}", sol.total_cost);
    let _ = writeln!(text, "Congestion cost ${:.1}", sol.congestion_cost);
    let _ = writeln!(text, "Reserve {:.1} MW required, cost ${:.1}", sol.reserve_requirement, sol.reserve_cost);
    let _ = writeln!(text, "{:>9} {:>6} {:>10} {:>10}", "generator", "bus", "MW", "reserve");
    for (i, g) in model.generators.iter().enumerate() {
        let _ = writeln!(text, "{:>9} {:>6} {:>10.1} {:>10.1}", g.id, g.bus, sol.dispatch[i], sol.reserve[i]);
    }
    let _ = writeln!(text, "Energy price ${:.1}/MWh, average LMP ${:.1}/MWh", sol.energy_price, market.average_lmp);
    let _ = writeln!(
        text,
        "Load payment ${:.1}, generator revenue ${:.1}, congestion revenue ${:.1}",
        market.load_payment, market.generator_revenue, market.congestion_revenue
    );

    let out = ScedOutput { case: &model.name, pseudo_limits: &pseudo, solution: &sol, market: &market };
    let mut art = Artifacts::new("sced", &out, text)?;
    art.table("dispatch.csv", |b| write_dispatch_csv(&model, &sol, b))?;
    art.table("constraints.csv", |b| write_constraint_csv(&sol, b))?;
    art.table("lmp.csv", |b| write_lmp_csv(&market, b))?;
    art.emit(cfg.format, cfg.out_dir.as_deref())
}

fn report_tables(art: &mut Artifacts, model: &NetworkModel, r: &PipelineReport) -> Outcome {
    art.table("dispatch.csv", |b| write_dispatch_csv(model, &r.sced.solution, b))?;
    art.table("lmp.csv", |b| write_lmp_csv(&r.sced.market, b))?;
    art.table("pre_violations.csv", |b| write_violations_csv(&r.pre.ca, b))?;
    art.table("post_violations.csv", |b| write_violations_csv(&r.post.ca, b))?;
    art.table("cost_plot.csv", |b| write_cost_plot(&[r], b))?;
    art.table("payment_plot.csv", |b| write_payment_plot(&[r], b))?;
    if let Some(cts) = &r.pre.cts {
        art.table("cts.csv", |b| write_cts_csv(cts, b))?;
    }
    Ok(())
}

pub fn procedure(args: &RunArgs, with_cts: bool, timings: bool) -> Outcome {
    let mut clock = Clock::new(timings);
    let (mut cfg, model) = load(args)?;
    clock.lap("load");
    let report = if with_cts {
        cfg.pipeline.sced.use_pseudo_limits = true;
        run_procedure_b(&model, &cfg.pipeline)
    } else {
        run_procedure_a(&model, &cfg.pipeline)
    }
    .map_err(domain)?;
    clock.lap("procedure");
    let name = if with_cts { "procedure_b" } else { "procedure_a" };
    let mut art = Artifacts::new(name, &report, text_summary(&report))?;
    report_tables(&mut art, &model, &report)?;
    art.emit(cfg.format, cfg.out_dir.as_deref())
}

pub fn compare(args: &RunArgs, timings: bool) -> Outcome {
    let mut clock = Clock::new(timings);
    let (cfg, model) = load(args)?;
    clock.lap("load");
    let cmp = ems_core::pipeline::compare(&model, &cfg.pipeline).map_err(domain)?;
    clock.lap("both procedures");
    let mut art = Artifacts::new("compare", &cmp, comparison_summary(&cmp))?;
    art.table("cost_plot.csv", |b| write_cost_plot(&[&cmp.sced, &cmp.esced], b))?;
    art.table("payment_plot.csv", |b| write_payment_plot(&[&cmp.sced, &cmp.esced], b))?;
    art.emit(cfg.format, cfg.out_dir.as_deref())
}
