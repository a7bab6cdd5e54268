//! Product-form inverse of the simplex basis.
//!
//! `B^-1 = E_k ... E_1` where every `E` is an identity matrix with one column
//! replaced. Reinversion rebuilds the eta file from scratch by pivoting the
//! basic columns into an identity, slack columns first, structural columns
//! with partial pivoting. Basis changes between reinversions append one eta.

const DROP: f64 = 1e-14;

#[derive(Debug, Clone)]
struct Eta {
    row: usize,
    pivot_inv: f64,
    others: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct EtaFile {
    etas: Vec<Eta>,
    nnz: usize,
}

impl EtaFile {
    pub fn clear(&mut self) {
        self.etas.clear();
        self.nnz = 0;
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    /// Appends the eta for pivoting `alpha = B^-1 a_q` on `row`.
    pub fn push(&mut self, row: usize, alpha: &[f64]) {
        let piv = alpha[row];
        let mut others = Vec::new();
        for (i, &a) in alpha.iter().enumerate() {
            if i != row && a.abs() > DROP {
                others.push((i, -a / piv));
            }
        }
        self.nnz += others.len() + 1;
        self.etas.push(Eta { row, pivot_inv: 1.0 / piv, others });
    }

    /// Appends the eta for a column that is a multiple of a unit vector.
    pub fn push_unit(&mut self, row: usize, value: f64) {
        self.nnz += 1;
        self.etas.push(Eta { row, pivot_inv: 1.0 / value, others: Vec::new() });
    }

    /// `v <- B^-1 v`.
    pub fn ftran(&self, v: &mut [f64]) {
        for eta in &self.etas {
            let t = v[eta.row];
            if t == 0.0 {
                continue;
            }
            v[eta.row] = t * eta.pivot_inv;
            for &(i, e) in &eta.others {
                v[i] += e * t;
            }
        }
    }

    /// `y <- y^T B^-1`.
    pub fn btran(&self, y: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut s = y[eta.row] * eta.pivot_inv;
            for &(i, e) in &eta.others {
                s += e * y[i];
            }
            y[eta.row] = s;
        }
    }
}
