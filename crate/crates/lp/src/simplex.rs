//! Bounded primal revised simplex.
//!
//! Every row `i` gets an activity variable `s_i` with `a_i x - s_i = 0` and
//! `row_lower_i <= s_i <= row_upper_i`, so the starting basis is the set of
//! activity columns. Phase 1 minimizes the sum of bound infeasibilities of the
//! basic variables; phase 2 minimizes the objective. Pricing is Dantzig's
//! rule with a Harris two-pass ratio test; after a run of degenerate pivots
//! the solver falls back to Bland's rule until progress resumes.

use crate::factor::EtaFile;
use crate::{LinearProgram, LpError, RowId, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub max_iterations: Option<usize>,
    pub primal_tolerance: f64,
    pub dual_tolerance: f64,
    pub pivot_tolerance: f64,
    /// Basis updates between reinversions.
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: None,
            primal_tolerance: 1e-9,
            dual_tolerance: 1e-9,
            pivot_tolerance: 1e-9,
            refactor_interval: 100,
            bland_after: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// `d objective / d (active row bound)`, zero for non-binding rows.
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub row_activity: Vec<f64>,
    pub iterations: usize,
    /// Rows still violated at the end of phase 1 (infeasible status only).
    pub infeasible_rows: Vec<RowId>,
    /// Variable along whose direction the objective decreases without bound.
    pub unbounded_ray: Option<VarId>,
}

impl LpSolution {
    pub fn value(&self, var: VarId) -> f64 {
        self.x[var.0]
    }

    pub fn dual(&self, row: RowId) -> f64 {
        self.row_duals[row.0]
    }

    /// Optimality certificate residuals, computed from `x` and the row duals
    /// alone.
    pub fn kkt_residuals(&self, lp: &LinearProgram) -> KktResiduals {
        kkt_residuals(lp, &self.x, &self.row_duals)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl KktResiduals {
    pub fn relative_gap(&self) -> f64 {
        (self.primal_objective - self.dual_objective).abs() / (1.0 + self.primal_objective.abs())
    }
}

fn kkt_residuals(lp: &LinearProgram, x: &[f64], y: &[f64]) -> KktResiduals {
    const ZERO: f64 = 1e-12;
    let act = lp.row_activity(x);
    let mut primal = 0.0f64;
    let mut dual_inf = 0.0f64;
    let mut comp = 0.0f64;
    let mut dual_obj = lp.offset;

    for i in 0..lp.num_rows() {
        let (lo, hi) = (lp.row_lower[i], lp.row_upper[i]);
        primal = primal.max(lo - act[i]).max(act[i] - hi);
        let yi = y[i];
        if yi > ZERO {
            if lo.is_finite() {
                dual_obj += yi * lo;
                comp = comp.max(yi * (act[i] - lo).abs());
            } else {
                dual_inf = dual_inf.max(yi);
            }
        } else if yi < -ZERO {
            if hi.is_finite() {
                dual_obj += yi * hi;
                comp = comp.max(-yi * (hi - act[i]).abs());
            } else {
                dual_inf = dual_inf.max(-yi);
            }
        }
    }
    for j in 0..lp.num_cols() {
        let (l, u) = (lp.col_lower[j], lp.col_upper[j]);
        primal = primal.max(l - x[j]).max(x[j] - u);
        let d = lp.cost[j] - lp.columns[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>();
        if d > ZERO {
            if l.is_finite() {
                dual_obj += d * l;
                comp = comp.max(d * (x[j] - l).abs());
            } else {
                dual_inf = dual_inf.max(d);
            }
        } else if d < -ZERO {
            if u.is_finite() {
                dual_obj += d * u;
                comp = comp.max(-d * (u - x[j]).abs());
            } else {
                dual_inf = dual_inf.max(-d);
            }
        }
    }
    KktResiduals {
        primal_infeasibility: primal.max(0.0),
        dual_infeasibility: dual_inf,
        complementarity: comp,
        primal_objective: lp.objective(x),
        dual_objective: dual_obj,
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, &SimplexOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, options: &SimplexOptions) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let mut s = Simplex::new(lp, options);
    s.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    Free,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    opts: &'a SimplexOptions,
    n: usize,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    head: Vec<usize>,
    etas: EtaFile,
    updates: usize,
    base_nnz: usize,
    iterations: usize,
}

enum Step {
    Optimal,
    Infeasible,
    Unbounded(usize),
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, opts: &'a SimplexOptions) -> Self {
        let n = lp.num_cols();
        let m = lp.num_rows();
        let mut lower = lp.col_lower.clone();
        lower.extend_from_slice(&lp.row_lower);
        let mut upper = lp.col_upper.clone();
        upper.extend_from_slice(&lp.row_upper);
        let mut cost = lp.cost.clone();
        cost.resize(n + m, 0.0);

        let mut x = vec![0.0; n + m];
        let mut state = vec![State::Basic; n + m];
        for j in 0..n {
            if lower[j].is_finite() {
                state[j] = State::Lower;
                x[j] = lower[j];
            } else if upper[j].is_finite() {
                state[j] = State::Upper;
                x[j] = upper[j];
            } else {
                state[j] = State::Free;
            }
        }
        let head = (n..n + m).collect();
        Self {
            lp,
            opts,
            n,
            m,
            lower,
            upper,
            cost,
            x,
            state,
            head,
            etas: EtaFile::default(),
            updates: 0,
            base_nnz: 0,
            iterations: 0,
        }
    }

    fn tol(&self, bound: f64) -> f64 {
        self.opts.primal_tolerance * (1.0 + bound.abs())
    }

    /// Scatters column `j` of `[A  -I]` into a dense vector.
    fn column_into(&self, j: usize, v: &mut [f64]) {
        v.iter_mut().for_each(|e| *e = 0.0);
        if j < self.n {
            for &(i, a) in &self.lp.columns[j] {
                v[i] = a;
            }
        } else {
            v[j - self.n] = -1.0;
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.lp.columns[j].iter().map(|&(i, a)| y[i] * a).sum()
        } else {
            -y[j - self.n]
        }
    }

    fn reinvert(&mut self) -> Result<(), LpError> {
        self.etas.clear();
        self.updates = 0;
        let mut taken = vec![false; self.m];
        let mut new_head = vec![usize::MAX; self.m];

        let mut structurals = Vec::new();
        for &j in &self.head {
            if j >= self.n {
                let r = j - self.n;
                taken[r] = true;
                new_head[r] = j;
                self.etas.push_unit(r, -1.0);
            } else {
                structurals.push(j);
            }
        }
        structurals.sort_by_key(|&j| (self.lp.columns[j].len(), j));

        let mut w = vec![0.0; self.m];
        for j in structurals {
            self.column_into(j, &mut w);
            self.etas.ftran(&mut w);
            let mut best = None;
            let mut best_abs = 0.0;
            for r in 0..self.m {
                if !taken[r] && w[r].abs() > best_abs {
                    best_abs = w[r].abs();
                    best = Some(r);
                }
            }
            match best {
                Some(r) if best_abs > 1e-9 => {
                    taken[r] = true;
                    new_head[r] = j;
                    self.etas.push(r, &w);
                }
                _ => {
                    // Dependent column: drop it to a bound; a slack fills in below.
                    self.state[j] = self.nearest_bound_state(j);
                    self.x[j] = match self.state[j] {
                        State::Lower => self.lower[j],
                        State::Upper => self.upper[j],
                        _ => self.x[j],
                    };
                }
            }
        }
        for r in 0..self.m {
            if !taken[r] {
                let j = self.n + r;
                if self.state[j] != State::Basic {
                    self.state[j] = State::Basic;
                }
                new_head[r] = j;
                self.etas.push_unit(r, -1.0);
            }
        }
        self.head = new_head;
        self.base_nnz = self.etas.nnz().max(self.m);
        self.recompute_basics();
        Ok(())
    }

    fn nearest_bound_state(&self, j: usize) -> State {
        let (l, u, v) = (self.lower[j], self.upper[j], self.x[j]);
        match (l.is_finite(), u.is_finite()) {
            (true, true) => {
                if (v - l).abs() <= (u - v).abs() {
                    State::Lower
                } else {
                    State::Upper
                }
            }
            (true, false) => State::Lower,
            (false, true) => State::Upper,
            (false, false) => State::Free,
        }
    }

    fn recompute_basics(&mut self) {
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if self.state[j] == State::Basic || self.x[j] == 0.0 {
                continue;
            }
            if j < self.n {
                for &(i, a) in &self.lp.columns[j] {
                    rhs[i] -= a * self.x[j];
                }
            } else {
                rhs[j - self.n] += self.x[j];
            }
        }
        self.etas.ftran(&mut rhs);
        for (r, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[r];
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lower[j] - self.tol(self.lower[j]) {
            -1.0
        } else if v > self.upper[j] + self.tol(self.upper[j]) {
            1.0
        } else {
            0.0
        }
    }

    fn run(&mut self) -> Result<LpSolution, LpError> {
        let max_iter = self.opts.max_iterations.unwrap_or(20_000 + 20 * (self.n + self.m));
        self.reinvert()?;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut verified = false;
        let mut alpha = vec![0.0; self.m];
        let mut y = vec![0.0; self.m];

        let outcome = loop {
            if self.iterations >= max_iter {
                return Err(LpError::IterationLimit(max_iter));
            }
            if self.updates >= self.opts.refactor_interval || self.etas.nnz() > 4 * self.base_nnz + 10 * self.m {
                self.reinvert()?;
            }
            let phase1 = self.head.iter().any(|&j| self.infeasibility(j) != 0.0);
            for (r, &j) in self.head.iter().enumerate() {
                y[r] = if phase1 { self.infeasibility(j) } else { self.cost[j] };
            }
            self.etas.btran(&mut y);

            let entering = self.price(&y, phase1, bland);
            let Some((q, dir)) = entering else {
                if !verified {
                    self.reinvert()?;
                    verified = true;
                    continue;
                }
                break if phase1 { Step::Infeasible } else { Step::Optimal };
            };
            verified = false;

            self.column_into(q, &mut alpha);
            self.etas.ftran(&mut alpha);
            match self.ratio_and_pivot(q, dir, &alpha, phase1, bland) {
                Some(step) => {
                    self.iterations += 1;
                    if step < 1e-12 {
                        degenerate_run += 1;
                        if degenerate_run >= self.opts.bland_after {
                            bland = true;
                        }
                    } else {
                        degenerate_run = 0;
                        bland = false;
                    }
                }
                None => {
                    if phase1 {
                        // A phase-1 direction cannot be unbounded; refresh the factors and retry.
                        if !verified {
                            self.reinvert()?;
                            verified = true;
                            continue;
                        }
                        return Err(LpError::Singular);
                    }
                    break Step::Unbounded(q);
                }
            }
        };
        self.finish(outcome)
    }

    /// Returns the entering variable and its direction of motion.
    fn price(&self, y: &[f64], phase1: bool, bland: bool) -> Option<(usize, f64)> {
        let dtol = self.opts.dual_tolerance;
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n + self.m {
            let st = self.state[j];
            if st == State::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let c = if phase1 { 0.0 } else { self.cost[j] };
            let d = c - self.dot_column(j, y);
            let dir = match st {
                State::Lower if d < -dtol => 1.0,
                State::Upper if d > dtol => -1.0,
                State::Free if d.abs() > dtol => -d.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Performs the ratio test and the resulting update. Returns the step
    /// length, or `None` when nothing blocks the entering variable.
    fn ratio_and_pivot(&mut self, q: usize, dir: f64, alpha: &[f64], phase1: bool, bland: bool) -> Option<f64> {
        let ptol = self.opts.pivot_tolerance;
        let flip = self.upper[q] - self.lower[q];

        // Limit on the step for basic position r: (exact, relaxed, hits lower bound).
        let limit = |s: &Self, r: usize| -> Option<(f64, f64, bool)> {
            let a = alpha[r];
            if a.abs() <= ptol {
                return None;
            }
            let j = s.head[r];
            let rate = -dir * a;
            let (l, u, v) = (s.lower[j], s.upper[j], s.x[j]);
            if phase1 {
                let inf = s.infeasibility(j);
                if inf < 0.0 {
                    return (rate > 0.0).then(|| ((l - v) / rate, (l - v) / rate, true));
                }
                if inf > 0.0 {
                    return (rate < 0.0).then(|| ((v - u) / -rate, (v - u) / -rate, false));
                }
            }
            if rate < 0.0 && l.is_finite() {
                Some(((v - l) / -rate, (v - l + s.tol(l)) / -rate, true))
            } else if rate > 0.0 && u.is_finite() {
                Some(((u - v) / rate, (u - v + s.tol(u)) / rate, false))
            } else {
                None
            }
        };

        let mut leave: Option<usize> = None;
        let mut to_lower = false;
        let mut step = f64::INFINITY;
        if bland {
            for r in 0..self.m {
                if let Some((t, _, hits_lower)) = limit(self, r) {
                    let t = t.max(0.0);
                    let better = match leave {
                        None => true,
                        Some(cur) => t < step - 1e-12 || (t <= step + 1e-12 && self.head[r] < self.head[cur]),
                    };
                    if better {
                        leave = Some(r);
                        step = t;
                        to_lower = hits_lower;
                    }
                }
            }
        } else {
            let mut relaxed = f64::INFINITY;
            for r in 0..self.m {
                if let Some((_, t, _)) = limit(self, r) {
                    relaxed = relaxed.min(t);
                }
            }
            if relaxed.is_finite() {
                let mut best_alpha = 0.0;
                for r in 0..self.m {
                    if let Some((t, _, hits_lower)) = limit(self, r) {
                        if t <= relaxed {
                            let a = alpha[r].abs();
                            let better = a > best_alpha * (1.0 + 1e-12)
                                || (a >= best_alpha * (1.0 - 1e-12) && leave.is_some_and(|c| self.head[r] < self.head[c]));
                            if better {
                                best_alpha = a;
                                leave = Some(r);
                                step = t.max(0.0);
                                to_lower = hits_lower;
                            }
                        }
                    }
                }
            }
        }

        if flip.is_finite() && flip <= step {
            // Bound flip: the entering variable crosses to its other bound.
            let t = flip;
            self.move_along(q, dir, t, alpha);
            self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
            self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            return Some(t);
        }
        let r = leave?;
        let t = step;
        self.move_along(q, dir, t, alpha);
        let j = self.head[r];
        if to_lower {
            self.state[j] = State::Lower;
            self.x[j] = self.lower[j];
        } else {
            self.state[j] = State::Upper;
            self.x[j] = self.upper[j];
        }
        if self.lower[j] == self.upper[j] {
            self.state[j] = State::Lower;
        }
        self.state[q] = State::Basic;
        self.head[r] = q;
        self.etas.push(r, alpha);
        self.updates += 1;
        Some(t)
    }

    fn move_along(&mut self, q: usize, dir: f64, t: f64, alpha: &[f64]) {
        if t == 0.0 {
            return;
        }
        self.x[q] += dir * t;
        for (r, &j) in self.head.iter().enumerate() {
            if alpha[r] != 0.0 {
                self.x[j] -= dir * t * alpha[r];
            }
        }
    }

    fn finish(&mut self, outcome: Step) -> Result<LpSolution, LpError> {
        let n = self.n;
        let mut y = vec![0.0; self.m];
        let (status, ray) = match outcome {
            Step::Optimal => (Status::Optimal, None),
            Step::Infeasible => (Status::Infeasible, None),
            Step::Unbounded(q) => (Status::Unbounded, Some(q)),
        };
        if status == Status::Optimal {
            for (r, &j) in self.head.iter().enumerate() {
                y[r] = self.cost[j];
            }
            self.etas.btran(&mut y);
            // Snap basic values that drifted within tolerance onto their bounds.
            for &j in &self.head {
                if self.x[j] < self.lower[j] {
                    self.x[j] = self.lower[j];
                } else if self.x[j] > self.upper[j] {
                    self.x[j] = self.upper[j];
                }
            }
        }
        let x: Vec<f64> = self.x[..n].to_vec();
        let reduced_costs = (0..n).map(|j| self.cost[j] - self.dot_column(j, &y)).collect();
        let infeasible_rows = if status == Status::Infeasible {
            (0..self.m).filter(|&i| self.infeasibility(n + i) != 0.0).map(RowId).collect()
        } else {
            Vec::new()
        };
        let unbounded_ray = ray.filter(|&q| q < n).map(VarId);
        Ok(LpSolution {
            status,
            objective_value: self.lp.objective(&x),
            row_activity: self.lp.row_activity(&x),
            x,
            row_duals: y,
            reduced_costs,
            iterations: self.iterations,
            infeasible_rows,
            unbounded_ray,
        })
    }
}
