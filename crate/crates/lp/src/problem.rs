use crate::LpError;

/// Index of a structural variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// Index of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// `minimize c·x + offset` subject to `row_lower <= A x <= row_upper` and
/// `col_lower <= x <= col_upper`.
///
/// Rows built with [`LinearProgram::add_row`] carry one finite side; ranged
/// rows carry two. The matrix is stored column-wise.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub(crate) col_names: Vec<String>,
    pub(crate) col_lower: Vec<f64>,
    pub(crate) col_upper: Vec<f64>,
    pub(crate) cost: Vec<f64>,
    pub(crate) row_names: Vec<String>,
    pub(crate) row_lower: Vec<f64>,
    pub(crate) row_upper: Vec<f64>,
    pub(crate) columns: Vec<Vec<(usize, f64)>>,
    pub(crate) offset: f64,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.col_names.push(name.into());
        self.col_lower.push(lower);
        self.col_upper.push(upper);
        self.cost.push(cost);
        self.columns.push(Vec::new());
        VarId(self.cost.len() - 1)
    }

    pub fn add_row(&mut self, name: impl Into<String>, terms: &[(VarId, f64)], sense: Sense, rhs: f64) -> RowId {
        let (lower, upper) = match sense {
            Sense::Le => (f64::NEG_INFINITY, rhs),
            Sense::Eq => (rhs, rhs),
            Sense::Ge => (rhs, f64::INFINITY),
        };
        self.add_ranged_row(name, terms, lower, upper)
    }

    /// Adds `lower <= terms <= upper`. Repeated variables are summed.
    pub fn add_ranged_row(&mut self, name: impl Into<String>, terms: &[(VarId, f64)], lower: f64, upper: f64) -> RowId {
        let row = self.row_names.len();
        self.row_names.push(name.into());
        self.row_lower.push(lower);
        self.row_upper.push(upper);
        for &(VarId(col), value) in terms {
            let column = &mut self.columns[col];
            match column.last_mut() {
                Some((r, v)) if *r == row => *v += value,
                _ => column.push((row, value)),
            }
        }
        RowId(row)
    }

    pub fn set_objective_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn objective_offset(&self) -> f64 {
        self.offset
    }

    pub fn set_row_bounds(&mut self, row: RowId, lower: f64, upper: f64) {
        self.row_lower[row.0] = lower;
        self.row_upper[row.0] = upper;
    }

    pub fn set_col_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.col_lower[var.0] = lower;
        self.col_upper[var.0] = upper;
    }

    pub fn num_rows(&self) -> usize {
        self.row_names.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cost.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.columns.iter().map(|c| c.iter().filter(|(_, v)| *v != 0.0).count()).sum()
    }

    pub fn row_bounds(&self, row: RowId) -> (f64, f64) {
        (self.row_lower[row.0], self.row_upper[row.0])
    }

    pub fn col_bounds(&self, var: VarId) -> (f64, f64) {
        (self.col_lower[var.0], self.col_upper[var.0])
    }

    pub fn cost(&self, var: VarId) -> f64 {
        self.cost[var.0]
    }

    pub fn row_name(&self, row: RowId) -> &str {
        &self.row_names[row.0]
    }

    pub fn col_name(&self, var: VarId) -> &str {
        &self.col_names[var.0]
    }

    pub fn find_row(&self, name: &str) -> Option<RowId> {
        self.row_names.iter().position(|n| n == name).map(RowId)
    }

    pub fn column(&self, var: VarId) -> &[(usize, f64)] {
        &self.columns[var.0]
    }

    /// Row activities `A x`.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for (col, entries) in self.columns.iter().enumerate() {
            for &(row, v) in entries {
                act[row] += v * x[col];
            }
        }
        act
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.offset + self.cost.iter().zip(x).map(|(c, x)| c * x).sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for j in 0..self.num_cols() {
            let (l, u) = (self.col_lower[j], self.col_upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::NonFinite { location: format!("bounds of {}", self.col_names[j]) });
            }
            if l > u {
                return Err(LpError::InvertedBounds { name: self.col_names[j].clone(), lower: l, upper: u });
            }
            if !self.cost[j].is_finite() {
                return Err(LpError::NonFinite { location: format!("cost of {}", self.col_names[j]) });
            }
            if self.columns[j].iter().any(|(_, v)| !v.is_finite()) {
                return Err(LpError::NonFinite { location: format!("column {}", self.col_names[j]) });
            }
        }
        for i in 0..self.num_rows() {
            let (l, u) = (self.row_lower[i], self.row_upper[i]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::NonFinite { location: format!("bounds of row {}", self.row_names[i]) });
            }
            if l > u {
                return Err(LpError::InvertedBounds { name: self.row_names[i].clone(), lower: l, upper: u });
            }
        }
        if !self.offset.is_finite() {
            return Err(LpError::NonFinite { location: "objective offset".into() });
        }
        Ok(())
    }

    /// Copy with rows stored in the order given by `order` (a permutation of
    /// row indices).
    pub fn permute_rows(&self, order: &[usize]) -> LinearProgram {
        assert_eq!(order.len(), self.num_rows());
        let mut inverse = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let mut columns: Vec<Vec<(usize, f64)>> = self
            .columns
            .iter()
            .map(|c| c.iter().map(|&(r, v)| (inverse[r], v)).collect())
            .collect();
        for c in &mut columns {
            c.sort_by_key(|&(r, _)| r);
        }
        LinearProgram {
            col_names: self.col_names.clone(),
            col_lower: self.col_lower.clone(),
            col_upper: self.col_upper.clone(),
            cost: self.cost.clone(),
            row_names: order.iter().map(|&o| self.row_names[o].clone()).collect(),
            row_lower: order.iter().map(|&o| self.row_lower[o]).collect(),
            row_upper: order.iter().map(|&o| self.row_upper[o]).collect(),
            columns,
            offset: self.offset,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_terms_are_summed() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 0.0, 1.0, 1.0);
        lp.add_row("r", &[(x, 1.0), (x, 2.0)], Sense::Le, 5.0);
        assert_eq!(lp.column(x), &[(0, 3.0)]);
        assert_eq!(lp.num_nonzeros(), 1);
    }

    #[test]
    fn rejects_inverted_bounds() {
        let mut lp = LinearProgram::new();
        lp.add_variable("x", 2.0, 1.0, 0.0);
        assert!(matches!(lp.validate(), Err(LpError::InvertedBounds { .. })));
    }

    #[test]
    fn rejects_nan_coefficient() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 0.0, 1.0, 0.0);
        lp.add_row("r", &[(x, f64::NAN)], Sense::Ge, 0.0);
        assert!(matches!(lp.validate(), Err(LpError::NonFinite { .. })));
    }
}
