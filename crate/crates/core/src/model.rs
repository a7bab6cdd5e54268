//! Network data model.
//!
//! Buses, branches and generators carry external integer ids. Internally
//! everything is addressed by position; [`NetworkModel::bus_index`] maps ids
//! to positions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// MW
    pub p_load: f64,
    /// MVar
    pub q_load: f64,
    /// MW consumed at 1 pu voltage
    #[serde(default)]
    pub shunt_g: f64,
    /// MVar injected at 1 pu voltage
    #[serde(default)]
    pub shunt_b: f64,
    #[serde(default = "one")]
    pub v_setpoint: f64,
    #[serde(default = "v_lo")]
    pub v_min: f64,
    #[serde(default = "v_hi")]
    pub v_max: f64,
    #[serde(default)]
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    #[serde(default)]
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_charging: f64,
    #[serde(default = "one")]
    pub tap_ratio: f64,
    /// degrees
    #[serde(default)]
    pub phase_shift: f64,
    /// MVA, 0 = unmonitored
    #[serde(default)]
    pub rate_normal: f64,
    /// MVA, 0 = unmonitored
    #[serde(default)]
    pub rate_emergency: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

impl Bus {
    /// Bus at nominal voltage with no shunts.
    pub fn new(id: usize, kind: BusKind, p_load: f64, q_load: f64) -> Bus {
        Bus {
            id,
            kind,
            p_load,
            q_load,
            shunt_g: 0.0,
            shunt_b: 0.0,
            v_setpoint: 1.0,
            v_min: v_lo(),
            v_max: v_hi(),
            base_kv: 0.0,
        }
    }
}

impl Branch {
    /// In-service line without charging or transformer, with both ratings set
    /// to `rating`.
    pub fn line(id: usize, from_bus: usize, to_bus: usize, r: f64, x: f64, rating: f64) -> Branch {
        Branch {
            id,
            from_bus,
            to_bus,
            r,
            x,
            b_charging: 0.0,
            tap_ratio: 1.0,
            phase_shift: 0.0,
            rate_normal: rating,
            rate_emergency: rating,
            in_service: true,
        }
    }

    pub fn is_monitored(&self) -> bool {
        self.rate_normal > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// MVar; may be infinite
    #[serde(default = "q_lo", with = "extended_float")]
    pub q_min: f64,
    #[serde(default = "q_hi", with = "extended_float")]
    pub q_max: f64,
    pub p_initial: f64,
    /// MW/min
    pub ramp_rate: f64,
    /// $/MWh
    #[serde(default)]
    pub reserve_price: f64,
    #[serde(default = "yes")]
    pub online: bool,
}

/// Convex piecewise-linear energy cost given by its breakpoints
/// `(MW, $/h)`. Segment prices are the slopes between consecutive points.
impl Generator {
    /// Online unit with unlimited reactive range, starting at `p_initial`
    /// and able to cross its range in one minute.
    pub fn new(id: usize, bus: usize, p_min: f64, p_max: f64, p_initial: f64) -> Generator {
        Generator {
            id,
            bus,
            p_min,
            p_max,
            q_min: f64::NEG_INFINITY,
            q_max: f64::INFINITY,
            p_initial,
            ramp_rate: (p_max - p_min).max(0.0),
            reserve_price: 0.0,
            online: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub owner: usize,
    pub points: Vec<(f64, f64)>,
}

impl CostCurve {
    /// Builds a curve from a starting point and `(end_mw, price)` segments.
    pub fn from_segments(owner: usize, start_mw: f64, start_cost: f64, segments: &[(f64, f64)]) -> CostCurve {
        let mut points = vec![(start_mw, start_cost)];
        for &(end, price) in segments {
            let &(p, c) = points.last().unwrap();
            points.push((end, c + price * (end - p)));
        }
        CostCurve { owner, points }
    }

    pub fn start_mw(&self) -> f64 {
        self.points[0].0
    }

    pub fn start_cost(&self) -> f64 {
        self.points[0].1
    }

    /// `(end_mw, price)` per segment.
    pub fn segments(&self) -> Vec<(f64, f64)> {
        self.points.windows(2).map(|w| (w[1].0, (w[1].1 - w[0].1) / (w[1].0 - w[0].0))).collect()
    }

    pub fn max_price(&self) -> f64 {
        self.segments().iter().map(|s| s.1).fold(0.0, f64::max)
    }

    /// Cost in $/h at `p`, extrapolating the end segments linearly.
    pub fn cost_at(&self, p: f64) -> f64 {
        let pts = &self.points;
        if pts.len() == 1 {
            return pts[0].1;
        }
        let k = match pts.iter().position(|&(x, _)| x >= p) {
            Some(0) => 1,
            Some(k) => k,
            None => pts.len() - 1,
        };
        let (x0, c0) = pts[k - 1];
        let (x1, c1) = pts[k];
        c0 + (c1 - c0) / (x1 - x0) * (p - x0)
    }

    pub fn is_convex(&self) -> bool {
        let segs = self.segments();
        self.points.windows(2).all(|w| w[1].0 > w[0].0) && segs.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-9 * w[0].1.abs().max(1.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkModel {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub cost_curves: Vec<CostCurve>,
    #[serde(skip)]
    bus_pos: HashMap<usize, usize>,
    #[serde(skip)]
    cost_pos: HashMap<usize, usize>,
}

impl PartialEq for NetworkModel {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.base_mva == other.base_mva
            && self.buses == other.buses
            && self.branches == other.branches
            && self.generators == other.generators
            && self.cost_curves == other.cost_curves
    }
}

fn one() -> f64 {
    1.0
}
fn v_lo() -> f64 {
    0.9
}
fn v_hi() -> f64 {
    1.1
}
fn q_lo() -> f64 {
    f64::NEG_INFINITY
}
fn q_hi() -> f64 {
    f64::INFINITY
}

/// Floats that may be infinite, written as the strings `"Inf"`/`"-Inf"`.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("Inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-Inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "Inf" | "inf" => Ok(f64::INFINITY),
                "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(serde::de::Error::custom(format!("expected a number or \"Inf\", got \"{t}\""))),
            },
        }
    }
}
fn yes() -> bool {
    true
}

impl NetworkModel {
    /// Assembles and validates a model.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        cost_curves: Vec<CostCurve>,
    ) -> Result<NetworkModel> {
        let mut model = NetworkModel {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators,
            cost_curves,
            bus_pos: HashMap::new(),
            cost_pos: HashMap::new(),
        };
        model.index_and_validate()?;
        Ok(model)
    }

    /// Rebuilds lookup tables and checks all invariants. Needed after
    /// deserializing or mutating fields directly.
    pub fn index_and_validate(&mut self) -> Result<()> {
        self.bus_pos.clear();
        for (k, b) in self.buses.iter().enumerate() {
            if self.bus_pos.insert(b.id, k).is_some() {
                return Err(Error::DuplicateId { what: "bus", id: b.id });
            }
        }
        self.cost_pos.clear();
        for (k, c) in self.cost_curves.iter().enumerate() {
            if self.cost_pos.insert(c.owner, k).is_some() {
                return Err(Error::DuplicateId { what: "cost curve owner", id: c.owner });
            }
        }
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(Error::Invalid(format!("base MVA must be positive, got {}", self.base_mva)));
        }
        if self.buses.is_empty() {
            return Err(Error::Invalid("model has no buses".into()));
        }
        for b in &self.buses {
            let values = [b.p_load, b.q_load, b.shunt_g, b.shunt_b, b.v_setpoint, b.v_min, b.v_max];
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("bus {} has a non-finite value", b.id)));
            }
            if b.v_min > b.v_max {
                return Err(Error::Invalid(format!("bus {} has v_min > v_max", b.id)));
            }
        }
        let mut seen = HashMap::new();
        for br in &self.branches {
            if seen.insert(br.id, ()).is_some() {
                return Err(Error::DuplicateId { what: "branch", id: br.id });
            }
            for bus in [br.from_bus, br.to_bus] {
                if !self.bus_pos.contains_key(&bus) {
                    return Err(Error::UnresolvedBus { what: "branch", id: br.id, bus });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::Invalid(format!("branch {} connects bus {} to itself", br.id, br.from_bus)));
            }
            if br.x == 0.0 {
                return Err(Error::ZeroReactance(br.id));
            }
            let values = [br.r, br.x, br.b_charging, br.tap_ratio, br.phase_shift, br.rate_normal, br.rate_emergency];
            if values.iter().any(|v| !v.is_finite()) || br.tap_ratio <= 0.0 {
                return Err(Error::Invalid(format!("branch {} has an invalid parameter", br.id)));
            }
            if br.rate_normal < 0.0 || (br.rate_normal > 0.0 && br.rate_emergency < br.rate_normal) {
                return Err(Error::Invalid(format!(
                    "branch {} ratings must satisfy emergency >= normal >= 0",
                    br.id
                )));
            }
        }
        seen.clear();
        for g in &self.generators {
            if seen.insert(g.id, ()).is_some() {
                return Err(Error::DuplicateId { what: "generator", id: g.id });
            }
            if !self.bus_pos.contains_key(&g.bus) {
                return Err(Error::UnresolvedBus { what: "generator", id: g.id, bus: g.bus });
            }
            let values = [g.p_min, g.p_max, g.p_initial, g.ramp_rate, g.reserve_price];
            if values.iter().any(|v| !v.is_finite()) || g.q_min.is_nan() || g.q_max.is_nan() {
                return Err(Error::Invalid(format!("generator {} has a non-finite value", g.id)));
            }
            if g.p_min > g.p_max || g.q_min > g.q_max || g.ramp_rate < 0.0 {
                return Err(Error::Invalid(format!("generator {} has inconsistent limits", g.id)));
            }
            if g.online && (g.p_initial < g.p_min - 1e-9 || g.p_initial > g.p_max + 1e-9) {
                return Err(Error::Invalid(format!(
                    "generator {} initial output {} outside [{}, {}]",
                    g.id, g.p_initial, g.p_min, g.p_max
                )));
            }
            if !self.cost_pos.contains_key(&g.id) {
                return Err(Error::Invalid(format!("generator {} has no cost curve", g.id)));
            }
        }
        for c in &self.cost_curves {
            if !seen.contains_key(&c.owner) {
                return Err(Error::Invalid(format!("cost curve for unknown generator {}", c.owner)));
            }
            if c.points.is_empty() || c.points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
                return Err(Error::Invalid(format!("cost curve of generator {} is malformed", c.owner)));
            }
            if !c.is_convex() {
                return Err(Error::NonConvexCost(c.owner));
            }
        }
        self.check_slacks()
    }

    fn check_slacks(&self) -> Result<()> {
        let islands = crate::topology::islands(self, &[]);
        let has_gen: Vec<bool> = {
            let mut v = vec![false; self.buses.len()];
            for g in self.generators.iter().filter(|g| g.online) {
                v[self.bus_pos[&g.bus]] = true;
            }
            v
        };
        let mut any_active = false;
        for island in &islands {
            let slacks = island.iter().filter(|&&b| self.buses[b].kind == BusKind::Slack).count();
            let active = island.iter().any(|&b| has_gen[b] || self.buses[b].p_load != 0.0 || self.buses[b].q_load != 0.0);
            any_active |= active || slacks > 0;
            if slacks > 1 {
                return Err(Error::MultipleSlack { bus: self.buses[island[0]].id, count: slacks });
            }
            if slacks == 0 && active {
                return Err(Error::NoSlack(self.buses[island[0]].id));
            }
        }
        if !any_active {
            return Err(Error::NoSlack(self.buses[0].id));
        }
        Ok(())
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.bus_pos.get(&id).copied()
    }

    /// Position of the slack bus in `buses`.
    pub fn slack_index(&self) -> usize {
        self.buses.iter().position(|b| b.kind == BusKind::Slack).expect("validated model has a slack bus")
    }

    pub fn branch_index(&self, id: usize) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn generator_index(&self, id: usize) -> Option<usize> {
        self.generators.iter().position(|g| g.id == id)
    }

    pub fn cost_of(&self, generator_id: usize) -> &CostCurve {
        &self.cost_curves[self.cost_pos[&generator_id]]
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).fold(0.0, |a, b| a + b)
    }

    /// Copy with every generator's `p_initial` replaced by `dispatch`
    /// (same order as `generators`).
    pub fn with_dispatch(&self, dispatch: &[f64]) -> NetworkModel {
        let mut m = self.clone();
        for (g, &p) in m.generators.iter_mut().zip(dispatch) {
            g.p_initial = p;
        }
        m
    }

    /// Copy with all bus loads multiplied by `factor`.
    pub fn with_load_scale(&self, factor: f64) -> NetworkModel {
        let mut m = self.clone();
        for b in &mut m.buses {
            b.p_load *= factor;
            b.q_load *= factor;
        }
        m
    }
}
