//! Nodal prices and settlement at the dispatch optimum.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::export::write_table;
use crate::model::NetworkModel;
use crate::sced::ScedSolution;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lmps {
    pub energy: f64,
    /// $/MWh per bus in model order
    pub congestion: Vec<f64>,
}

impl Lmps {
    pub fn at(&self, bus: usize) -> f64 {
        self.energy + self.congestion[bus]
    }

    pub fn total(&self) -> Vec<f64> {
        self.congestion.iter().map(|c| self.energy + c).collect()
    }
}

/// Energy price plus the sum over network rows of row dual times the row's
/// flow sensitivity to an injection at the bus.
pub fn compute_lmps(model: &NetworkModel, sol: &ScedSolution) -> Result<Lmps> {
    let n = model.buses.len();
    // rows left out of the LP carry no sensitivities and a zero dual
    let missing = sol.sensitivities.iter().zip(&sol.constraints).any(|(s, c)| s.len() != n && c.row_dual != 0.0);
    if sol.sensitivities.len() != sol.constraints.len() || missing {
        return Err(Error::Invalid("dispatch solution lacks constraint sensitivities".into()));
    }
    let mut congestion = vec![0.0; n];
    for (c, sens) in sol.constraints.iter().zip(&sol.sensitivities) {
        if c.row_dual != 0.0 {
            for (v, s) in congestion.iter_mut().zip(sens) {
                *v += c.row_dual * s;
            }
        }
    }
    Ok(Lmps { energy: sol.energy_price, congestion })
}

/// Largest gap between the nodal balance duals of an angle-based dispatch
/// and the decomposed prices. `None` for PTDF variants.
pub fn nodal_price_gap(model: &NetworkModel, sol: &ScedSolution) -> Result<Option<f64>> {
    let Some(nodal) = &sol.nodal_prices else {
        return Ok(None);
    };
    let lmps = compute_lmps(model, sol)?;
    Ok(Some(nodal.iter().zip(lmps.total()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketReport {
    pub bus_ids: Vec<usize>,
    pub lmp: Vec<f64>,
    pub energy_lmp: f64,
    pub congestion_lmp: Vec<f64>,
    pub load_payment: f64,
    pub generator_revenue: f64,
    pub generator_cost: f64,
    pub generator_rent: f64,
    pub congestion_revenue: f64,
    /// unweighted bus means
    pub average_lmp: f64,
    pub average_congestion_lmp: f64,
}

pub fn settle(model: &NetworkModel, lmps: &Lmps, dispatch: &[f64]) -> MarketReport {
    let lmp = lmps.total();
    let load_payment: f64 = model.buses.iter().zip(&lmp).map(|(b, l)| l * b.p_load).fold(0.0, |a, b| a + b);
    let mut generator_revenue = 0.0;
    let mut generator_cost = 0.0;
    for (g, &p) in model.generators.iter().zip(dispatch) {
        if !g.online {
            continue;
        }
        generator_revenue += lmp[model.bus_index(g.bus).unwrap()] * p;
        generator_cost += model.cost_of(g.id).cost_at(p);
    }
    let n = lmp.len().max(1) as f64;
    MarketReport {
        bus_ids: model.buses.iter().map(|b| b.id).collect(),
        average_lmp: lmp.iter().fold(0.0, |a, b| a + b) / n,
        average_congestion_lmp: lmps.congestion.iter().fold(0.0, |a, b| a + b) / n,
        lmp,
        energy_lmp: lmps.energy,
        congestion_lmp: lmps.congestion.clone(),
        load_payment,
        generator_revenue,
        generator_cost,
        generator_rent: generator_revenue - generator_cost,
        congestion_revenue: load_payment - generator_revenue,
    }
}

#[derive(Serialize)]
struct LmpRow {
    bus: usize,
    lmp: f64,
    energy: f64,
    congestion: f64,
}

pub fn write_lmp_csv(report: &MarketReport, out: impl Write) -> Result<()> {
    let rows = report.bus_ids.iter().enumerate().map(|(i, &bus)| LmpRow {
        bus,
        lmp: report.lmp[i],
        energy: report.energy_lmp,
        congestion: report.congestion_lmp[i],
    });
    write_table(out, &["bus", "lmp", "energy", "congestion"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bus, BusKind, CostCurve, Generator};

    #[test]
    fn uniform_price_settles_without_congestion_revenue() {
        let buses = vec![Bus::new(1, BusKind::Slack, 60.0, 0.0), Bus::new(2, BusKind::Pq, 40.0, 0.0)];
        let branches = vec![crate::model::Branch::line(1, 1, 2, 0.0, 0.1, 0.0)];
        let gens = vec![Generator::new(1, 1, 0.0, 200.0, 100.0)];
        let costs = vec![CostCurve::from_segments(1, 0.0, 0.0, &[(50.0, 10.0), (200.0, 20.0)])];
        let m = NetworkModel::new("t", 100.0, buses, branches, gens, costs).unwrap();
        let lmps = Lmps { energy: 20.0, congestion: vec![0.0, 0.0] };
        let r = settle(&m, &lmps, &[100.0]);
        assert_eq!(r.load_payment, 2000.0);
        assert_eq!(r.congestion_revenue, 0.0);
        // full first segment plus half of the second
        assert_eq!(r.generator_cost, 500.0 + 1000.0);
        assert_eq!(r.generator_rent, 2000.0 - 1500.0);
        assert_eq!(r.average_lmp, 20.0);
    }
}
