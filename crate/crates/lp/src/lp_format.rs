//! CPLEX LP text export, for cross-checking models against external solvers.

use std::io::{self, Write};

use crate::LinearProgram;

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]()".contains(c) { c } else { '_' })
        .collect()
}

fn term(out: &mut impl Write, coef: f64, name: &str, first: bool) -> io::Result<()> {
    if coef < 0.0 {
        write!(out, " - {} {}", -coef, name)
    } else if first {
        write!(out, " {} {}", coef, name)
    } else {
        write!(out, " + {} {}", coef, name)
    }
}

pub fn write_lp_format(lp: &LinearProgram, out: &mut impl Write) -> io::Result<()> {
    let cols: Vec<String> = lp.col_names.iter().enumerate().map(|(j, n)| format!("{}_{}", sanitize(n), j)).collect();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_rows()];
    for (j, column) in lp.columns.iter().enumerate() {
        for &(i, v) in column {
            rows[i].push((j, v));
        }
    }

    writeln!(out, "\\ offset {}", lp.offset)?;
    writeln!(out, "Minimize")?;
    write!(out, " obj:")?;
    let mut first = true;
    for (j, &c) in lp.cost.iter().enumerate() {
        if c != 0.0 {
            term(out, c, &cols[j], first)?;
            first = false;
        }
    }
    if first {
        write!(out, " 0 {}", cols.first().map(String::as_str).unwrap_or("x"))?;
    }
    writeln!(out)?;

    writeln!(out, "Subject To")?;
    for (i, row) in rows.iter().enumerate() {
        let (lo, hi) = (lp.row_lower[i], lp.row_upper[i]);
        let name = format!("{}_{}", sanitize(&lp.row_names[i]), i);
        let mut emit = |suffix: &str, op: &str, rhs: f64| -> io::Result<()> {
            write!(out, " {}{}:", name, suffix)?;
            let mut first = true;
            for &(j, v) in row {
                term(out, v, &cols[j], first)?;
                first = false;
            }
            if first {
                write!(out, " 0 {}", cols.first().map(String::as_str).unwrap_or("x"))?;
            }
            writeln!(out, " {} {}", op, rhs)
        };
        if lo == hi {
            emit("", "=", lo)?;
        } else {
            if lo.is_finite() {
                emit(if hi.is_finite() { "_lo" } else { "" }, ">=", lo)?;
            }
            if hi.is_finite() {
                emit(if lo.is_finite() { "_hi" } else { "" }, "<=", hi)?;
            }
        }
    }

    writeln!(out, "Bounds")?;
    for (j, name) in cols.iter().enumerate() {
        let (l, u) = (lp.col_lower[j], lp.col_upper[j]);
        match (l.is_finite(), u.is_finite()) {
            (false, false) => writeln!(out, " {} free", name)?,
            (true, true) if l == u => writeln!(out, " {} = {}", name, l)?,
            (true, true) => writeln!(out, " {} <= {} <= {}", l, name, u)?,
            (true, false) => writeln!(out, " {} >= {}", name, l)?,
            (false, true) => writeln!(out, " -inf <= {} <= {}", name, u)?,
        }
    }
    writeln!(out, "End")
}
