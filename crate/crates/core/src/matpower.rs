//! MATPOWER case files (version 2 layout).
//!
//! Reads `baseMVA`, `bus`, `gen`, `branch` and `gencost`, plus an optional
//! `reserve_price` column vector. Other fields are skipped. Polynomial costs
//! are sampled at [`PWL_SEGMENTS`] equal-width segments over `[Pmin, Pmax]`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Branch, Bus, BusKind, CostCurve, Generator, NetworkModel};

pub const PWL_SEGMENTS: usize = 10;

/// Reserve offer price as a fraction of a unit's highest energy price, used
/// when the case carries no `reserve_price` field.
pub const DEFAULT_RESERVE_PRICE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str,
    Punct(char),
    Newline,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax { line, column, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut line_start) = (0, 1, 0);
    while i < chars.len() {
        let c = chars[i];
        let col = i - line_start + 1;
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line, col });
        match c {
            '\n' => {
                push(&mut out, Tok::Newline);
                i += 1;
                line += 1;
                line_start = i;
            }
            ' ' | '\t' | '\r' => i += 1,
            '%' | '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '.' if chars[i..].starts_with(&['.', '.', '.']) => {
                // continuation: skip to the end of the line, newline included
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                i += 1;
                line += 1;
                line_start = i;
            }
            '\'' | '"' => {
                let quote = c;
                i += 1;
                while i < chars.len() && chars[i] != quote {
                    if chars[i] == '\n' {
                        return Err(syntax(line, col, "unterminated string"));
                    }
                    i += 1;
                }
                if i == chars.len() {
                    return Err(syntax(line, col, "unterminated string"));
                }
                i += 1;
                push(&mut out, Tok::Str);
            }
            c if c.is_ascii_digit() || c == '.' || ((c == '-' || c == '+') && starts_number(&chars[i + 1..])) => {
                let start = i;
                if c == '-' || c == '+' {
                    i += 1;
                }
                if chars[i..].starts_with(&['I', 'n', 'f']) {
                    i += 3;
                } else {
                    while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                        i += 1;
                    }
                    if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                        i += 1;
                        if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                            i += 1;
                        }
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v = parse_number(&s).ok_or_else(|| syntax(line, col, format!("malformed number '{s}'")))?;
                push(&mut out, Tok::Num(v));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                match s.as_str() {
                    "Inf" | "inf" => push(&mut out, Tok::Num(f64::INFINITY)),
                    "NaN" | "nan" => push(&mut out, Tok::Num(f64::NAN)),
                    _ => push(&mut out, Tok::Ident(s)),
                }
            }
            '=' | '[' | ']' | '{' | '}' | ';' | ',' | '(' | ')' => {
                push(&mut out, Tok::Punct(c));
                i += 1;
            }
            _ => return Err(syntax(line, col, format!("unexpected character '{c}'"))),
        }
    }
    out.push(Token { tok: Tok::Newline, line, col: chars.len() - line_start + 1 });
    Ok(out)
}

fn starts_number(rest: &[char]) -> bool {
    match rest.first() {
        Some(c) if c.is_ascii_digit() => true,
        Some('.') => rest.get(1).is_some_and(|c| c.is_ascii_digit()),
        Some('I') => rest.starts_with(&['I', 'n', 'f']),
        _ => false,
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s {
        "Inf" | "+Inf" => Some(f64::INFINITY),
        "-Inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

#[derive(Debug)]
enum Value {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Other,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> Token {
        let t = self.peek().clone();
        self.pos += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn error(&self, message: impl Into<String>) -> Error {
        let t = self.peek();
        syntax(t.line, t.col, message)
    }

    fn skip_line(&mut self) {
        while !self.at_end() && self.next().tok != Tok::Newline {}
    }

    fn statements(&mut self) -> Result<HashMap<String, (Value, usize)>> {
        let mut fields = HashMap::new();
        while !self.at_end() {
            let t = self.next();
            match t.tok {
                Tok::Newline | Tok::Punct(';') | Tok::Punct(',') => {}
                Tok::Ident(ref s) if s == "function" || s == "end" => self.skip_line(),
                Tok::Ident(name) => {
                    if self.next().tok != Tok::Punct('=') {
                        self.pos -= 1;
                        return Err(self.error(format!("expected '=' after '{name}'")));
                    }
                    let value = self.value()?;
                    match self.peek().tok {
                        Tok::Punct(';') | Tok::Punct(',') | Tok::Newline => {}
                        _ => return Err(self.error("expected end of statement")),
                    }
                    let key = name.strip_prefix("mpc.").unwrap_or(&name).to_string();
                    fields.insert(key, (value, t.line));
                }
                _ => return Err(syntax(t.line, t.col, "expected an assignment")),
            }
        }
        Ok(fields)
    }

    fn value(&mut self) -> Result<Value> {
        let t = self.next();
        match t.tok {
            Tok::Num(v) => Ok(Value::Scalar(v)),
            Tok::Str => Ok(Value::Other),
            Tok::Punct('[') => self.matrix(),
            Tok::Punct('{') => {
                let mut depth = 1;
                while depth > 0 {
                    if self.at_end() {
                        return Err(syntax(t.line, t.col, "unterminated cell array"));
                    }
                    match self.next().tok {
                        Tok::Punct('{') => depth += 1,
                        Tok::Punct('}') => depth -= 1,
                        _ => {}
                    }
                }
                Ok(Value::Other)
            }
            Tok::Ident(_) => {
                // expression such as a function call; skip it
                while !matches!(self.peek().tok, Tok::Punct(';') | Tok::Newline) {
                    self.pos += 1;
                }
                Ok(Value::Other)
            }
            _ => Err(syntax(t.line, t.col, "expected a value")),
        }
    }

    fn matrix(&mut self) -> Result<Value> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut row = Vec::new();
        loop {
            let t = self.next();
            match t.tok {
                Tok::Num(v) => row.push(v),
                Tok::Punct(',') => {}
                Tok::Punct(';') | Tok::Newline => {
                    if !row.is_empty() {
                        rows.push(std::mem::take(&mut row));
                    }
                }
                Tok::Punct(']') => {
                    if !row.is_empty() {
                        rows.push(row);
                    }
                    return Ok(Value::Matrix(rows));
                }
                _ if self.at_end() => return Err(syntax(t.line, t.col, "unterminated matrix")),
                _ => return Err(syntax(t.line, t.col, "expected a number inside matrix")),
            }
        }
    }
}

fn matrix<'a>(fields: &'a HashMap<String, (Value, usize)>, name: &str, min_cols: usize) -> Result<&'a [Vec<f64>]> {
    match fields.get(name) {
        Some((Value::Matrix(rows), line)) => {
            if let Some(r) = rows.iter().find(|r| r.len() < min_cols) {
                return Err(syntax(*line, 1, format!("mpc.{name} row has {} columns, need {min_cols}", r.len())));
            }
            Ok(rows)
        }
        Some((_, line)) => Err(syntax(*line, 1, format!("mpc.{name} must be a matrix"))),
        None => Err(Error::Invalid(format!("case has no mpc.{name}"))),
    }
}

fn as_id(v: f64, line: usize, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(syntax(line, 1, format!("{what} must be a non-negative integer, got {v}")))
    }
}

/// Parses MATPOWER case text into a validated model.
pub fn parse_matpower_case(text: &str) -> Result<NetworkModel> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let fields = parser.statements()?;

    let name = text
        .lines()
        .find_map(|l| l.trim().strip_prefix("function"))
        .and_then(|rest| rest.split('=').nth(1))
        .map(|s| s.trim().to_string())
        .unwrap_or_default();

    let base_mva = match fields.get("baseMVA") {
        Some((Value::Scalar(v), _)) => *v,
        Some((_, line)) => return Err(syntax(*line, 1, "mpc.baseMVA must be a scalar")),
        None => return Err(Error::Invalid("case has no mpc.baseMVA".into())),
    };
    let line_of = |name: &str| fields.get(name).map(|f| f.1).unwrap_or(0);

    let bus_rows = matrix(&fields, "bus", 13)?;
    let gen_rows = matrix(&fields, "gen", 10)?;
    let branch_rows = matrix(&fields, "branch", 11)?;
    let cost_rows = matrix(&fields, "gencost", 4)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for r in bus_rows {
        let kind = match r[1] as i64 {
            3 => BusKind::Slack,
            2 => BusKind::Pv,
            1 | 4 => BusKind::Pq,
            t => return Err(syntax(line_of("bus"), 1, format!("unknown bus type {t}"))),
        };
        buses.push(Bus {
            id: as_id(r[0], line_of("bus"), "bus number")?,
            kind,
            p_load: r[2],
            q_load: r[3],
            shunt_g: r[4],
            shunt_b: r[5],
            v_setpoint: r[7],
            v_min: r[12],
            v_max: r[11],
            base_kv: r[9],
        });
    }
    let bus_pos: HashMap<usize, usize> = buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();

    let mut generators = Vec::with_capacity(gen_rows.len());
    let mut has_online = vec![false; buses.len()];
    let mut vg_set = vec![false; buses.len()];
    for (k, r) in gen_rows.iter().enumerate() {
        let id = k + 1;
        let bus = as_id(r[0], line_of("gen"), "generator bus")?;
        let pos = *bus_pos.get(&bus).ok_or(Error::UnresolvedBus { what: "generator", id, bus })?;
        let online = r[7] > 0.0;
        let (p_max, p_min) = (r[8], r[9]);
        if online {
            has_online[pos] = true;
            if !vg_set[pos] {
                buses[pos].v_setpoint = r[5];
                vg_set[pos] = true;
            }
        }
        let ramp_agc = r.get(16).copied().unwrap_or(0.0);
        let ramp_rate = if ramp_agc > 0.0 { ramp_agc } else { (p_max - p_min).max(0.0) };
        let p_initial = if online { r[1].clamp(p_min.min(p_max), p_max) } else { r[1] };
        generators.push(Generator {
            id,
            bus,
            p_min,
            p_max,
            q_min: r[4],
            q_max: r[3],
            p_initial,
            ramp_rate,
            reserve_price: 0.0,
            online,
        });
    }
    for (b, online) in buses.iter_mut().zip(&has_online) {
        if b.kind == BusKind::Pv && !online {
            b.kind = BusKind::Pq;
        }
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (k, r) in branch_rows.iter().enumerate() {
        let rate_a = r[5];
        let rate_c = r[7];
        let (rate_normal, rate_emergency) = if rate_a > 0.0 {
            let e = if rate_c > 0.0 { rate_c } else { rate_a };
            (rate_a, e.max(rate_a))
        } else {
            (0.0, 0.0)
        };
        branches.push(Branch {
            id: k + 1,
            from_bus: as_id(r[0], line_of("branch"), "branch from bus")?,
            to_bus: as_id(r[1], line_of("branch"), "branch to bus")?,
            r: r[2],
            x: r[3],
            b_charging: r[4],
            tap_ratio: if r[8] == 0.0 { 1.0 } else { r[8] },
            phase_shift: r[9],
            rate_normal,
            rate_emergency,
            in_service: r[10] > 0.0,
        });
    }

    if cost_rows.len() < generators.len() {
        return Err(syntax(
            line_of("gencost"),
            1,
            format!("mpc.gencost has {} rows for {} generators", cost_rows.len(), generators.len()),
        ));
    }
    let mut cost_curves = Vec::with_capacity(generators.len());
    for (g, r) in generators.iter().zip(cost_rows) {
        let n = as_id(r[3], line_of("gencost"), "gencost point count")?;
        let points = match r[0] as i64 {
            1 => {
                if r.len() < 4 + 2 * n || n == 0 {
                    return Err(syntax(line_of("gencost"), 1, format!("gencost row for generator {} is short", g.id)));
                }
                (0..n).map(|i| (r[4 + 2 * i], r[5 + 2 * i])).collect()
            }
            2 => {
                if r.len() < 4 + n {
                    return Err(syntax(line_of("gencost"), 1, format!("gencost row for generator {} is short", g.id)));
                }
                sample_polynomial(&r[4..4 + n], g.p_min, g.p_max)
            }
            m => return Err(syntax(line_of("gencost"), 1, format!("unknown cost model {m}"))),
        };
        cost_curves.push(CostCurve { owner: g.id, points });
    }

    match fields.get("reserve_price") {
        Some((Value::Matrix(rows), line)) => {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            if flat.len() != generators.len() {
                return Err(syntax(*line, 1, "mpc.reserve_price needs one entry per generator"));
            }
            for (g, p) in generators.iter_mut().zip(flat) {
                g.reserve_price = p;
            }
        }
        Some((_, line)) => return Err(syntax(*line, 1, "mpc.reserve_price must be a vector")),
        None => {
            for (g, c) in generators.iter_mut().zip(&cost_curves) {
                g.reserve_price = DEFAULT_RESERVE_PRICE_FRACTION * c.max_price();
            }
        }
    }

    NetworkModel::new(name, base_mva, buses, branches, generators, cost_curves)
}

/// Chord sampling of `c[0] p^(n-1) + ... + c[n-1]` at equal spacing. For a
/// quadratic every chord slope equals the derivative at the segment midpoint.
fn sample_polynomial(coeffs: &[f64], p_min: f64, p_max: f64) -> Vec<(f64, f64)> {
    let f = |p: f64| coeffs.iter().fold(0.0, |acc, &c| acc * p + c);
    if p_max <= p_min {
        return vec![(p_min, f(p_min))];
    }
    let width = (p_max - p_min) / PWL_SEGMENTS as f64;
    (0..=PWL_SEGMENTS)
        .map(|k| {
            let p = if k == PWL_SEGMENTS { p_max } else { p_min + width * k as f64 };
            (p, f(p))
        })
        .collect()
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "Inf".into()
    } else if v == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        format!("{v}")
    }
}

/// Serializes a model as MATPOWER text that [`parse_matpower_case`] reads
/// back to an identical model. Costs are written as piecewise-linear points.
pub fn write_matpower_case(model: &NetworkModel) -> String {
    let mut s = String::new();
    let name = if model.name.is_empty() { "case" } else { model.name.as_str() };
    let _ = writeln!(s, "function mpc = {name}");
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", num(model.base_mva));
    let _ = writeln!(s, "\n%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin");
    let _ = writeln!(s, "mpc.bus = [");
    for b in &model.buses {
        let kind = match b.kind {
            BusKind::Slack => 3,
            BusKind::Pv => 2,
            BusKind::Pq => 1,
        };
        let cols = [
            b.id as f64, kind as f64, b.p_load, b.q_load, b.shunt_g, b.shunt_b, 1.0, b.v_setpoint, 0.0, b.base_kv, 1.0,
            b.v_max, b.v_min,
        ];
        row(&mut s, &cols);
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin Pc1 Pc2 Qc1min Qc1max Qc2min Qc2max ramp_agc ramp_10 ramp_30 ramp_q apf");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &model.generators {
        let vg = model.bus_index(g.bus).map(|k| model.buses[k].v_setpoint).unwrap_or(1.0);
        let mut cols = vec![
            g.bus as f64,
            g.p_initial,
            0.0,
            g.q_max,
            g.q_min,
            vg,
            model.base_mva,
            if g.online { 1.0 } else { 0.0 },
            g.p_max,
            g.p_min,
        ];
        cols.extend([0.0; 6]);
        cols.extend([g.ramp_rate, 0.0, 0.0, 0.0, 0.0]);
        row(&mut s, &cols);
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax");
    let _ = writeln!(s, "mpc.branch = [");
    for br in &model.branches {
        let cols = [
            br.from_bus as f64,
            br.to_bus as f64,
            br.r,
            br.x,
            br.b_charging,
            br.rate_normal,
            br.rate_emergency,
            br.rate_emergency,
            br.tap_ratio,
            br.phase_shift,
            if br.in_service { 1.0 } else { 0.0 },
            -360.0,
            360.0,
        ];
        row(&mut s, &cols);
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "\n%% 1 startup shutdown n x1 y1 ... xn yn");
    let _ = writeln!(s, "mpc.gencost = [");
    let width = model.cost_curves.iter().map(|c| c.points.len()).max().unwrap_or(1);
    for g in &model.generators {
        let c = model.cost_of(g.id);
        let mut cols = vec![1.0, 0.0, 0.0, c.points.len() as f64];
        for &(p, f) in &c.points {
            cols.extend([p, f]);
        }
        cols.resize(4 + 2 * width, 0.0);
        row(&mut s, &cols);
    }
    let _ = writeln!(s, "];");
    let _ = writeln!(s, "\nmpc.reserve_price = [");
    for g in &model.generators {
        let _ = writeln!(s, "\t{};", num(g.reserve_price));
    }
    let _ = writeln!(s, "];");
    s
}

fn row(s: &mut String, cols: &[f64]) {
    s.push('\t');
    s.push_str(&cols.iter().map(|&v| num(v)).collect::<Vec<_>>().join("\t"));
    s.push_str(";\n");
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = "function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;
    2 1 100 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
    1 100 0 300 -300 1 100 1 250 10 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
    1 2 0 0.1 0 150 150 180 0 0 1 -360 360;
];
mpc.gencost = [
    2 0 0 3 0.01 20 0;
];
";

    #[test]
    fn parses_minimal_case() {
        let m = parse_matpower_case(TWO_BUS).unwrap();
        assert_eq!(m.name, "two_bus");
        assert_eq!(m.buses.len(), 2);
        assert_eq!(m.branches.len(), 1);
        assert_eq!(m.branches[0].rate_emergency, 180.0);
        assert_eq!(m.cost_curves[0].points.len(), PWL_SEGMENTS + 1);
        let slopes: Vec<f64> = m.cost_curves[0].segments().iter().map(|s| s.1).collect();
        assert!(slopes.windows(2).all(|w| w[1] >= w[0]));
        // chord slope of 0.01 p^2 + 20 p on [10, 34] is 0.01 * 44 + 20
        assert!((slopes[0] - 20.44).abs() < 1e-9);
        assert!((m.generators[0].reserve_price - 0.1 * slopes[9]).abs() < 1e-12);
    }

    #[test]
    fn reports_unknown_generator_bus() {
        let text = TWO_BUS.replace("    1 100 0 300", "    99 100 0 300");
        match parse_matpower_case(&text) {
            Err(Error::UnresolvedBus { bus: 99, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let text = TWO_BUS.replace("1 2 0 0.1 0 150", "1 2 0 0.1 0 1@0");
        match parse_matpower_case(&text) {
            Err(Error::Syntax { line: 12, column, .. }) => assert_eq!(column, 18),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_convex_polynomial() {
        let text = TWO_BUS.replace("2 0 0 3 0.01 20 0", "2 0 0 3 -0.01 20 0");
        assert!(matches!(parse_matpower_case(&text), Err(Error::NonConvexCost(1))));
    }

    #[test]
    fn requires_a_slack_bus() {
        let text = TWO_BUS.replace("1 3 0 0 0 0 1 1 0 230", "1 2 0 0 0 0 1 1 0 230");
        assert!(matches!(parse_matpower_case(&text), Err(Error::NoSlack(_))));
    }

    #[test]
    fn writer_output_parses_back_identically() {
        let m = parse_matpower_case(TWO_BUS).unwrap();
        let again = parse_matpower_case(&write_matpower_case(&m)).unwrap();
        assert_eq!(m, again);
    }
}
