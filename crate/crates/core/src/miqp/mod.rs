//! Convex QP solver and branch-and-bound over binary variables.
//!
//! Problems are stated as
//!
//! ```text
//! minimize   1/2 z'Qz + c'z + offset
//! subject to A z <= b,  lower <= z <= upper,  z_i in {0, 1} for binary i
//! ```

mod bnb;
mod dump;
pub(crate) mod linalg;
mod qp;

pub use bnb::{solve_miqp, MiqpOptions, MiqpSolution, MiqpStats, MiqpStatus};
pub use dump::{read_triplets, write_triplets};
pub use qp::{solve_qp, Duals, KktResiduals, QpOptions, QpSolution, QpStatus};

use crate::error::{MiqpError, QpError};

pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QpProblem {
    pub n: usize,
    /// Entries of the symmetric cost matrix. `(i, j)` and `(j, i)` denote the
    /// same off-diagonal pair and must be listed once; duplicates are summed.
    pub q: Vec<(usize, usize, f64)>,
    pub c: Vec<f64>,
    pub offset: f64,
    pub rows: Vec<SparseRow>,
    pub b: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Family index of each row (parallel to `rows`), used to explain infeasibility.
    pub row_family: Vec<usize>,
    pub families: Vec<String>,
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        QpProblem {
            n,
            c: vec![0.0; n],
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            ..Default::default()
        }
    }

    pub fn family(&mut self, name: &str) -> usize {
        if let Some(i) = self.families.iter().position(|f| f == name) {
            return i;
        }
        self.families.push(name.to_string());
        self.families.len() - 1
    }

    /// Appends `row . z <= b`.
    pub fn add_row(&mut self, row: SparseRow, b: f64, family: usize) -> usize {
        self.rows.push(row);
        self.b.push(b);
        self.row_family.push(family);
        self.rows.len() - 1
    }

    pub fn add_q(&mut self, i: usize, j: usize, v: f64) {
        self.q.push((i, j, v));
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// `Q z` using the symmetric interpretation of `q`.
    pub fn q_mul(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, j, v) in &self.q {
            out[i] += v * z[j];
            if i != j {
                out[j] += v * z[i];
            }
        }
        out
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let qz = self.q_mul(z);
        let quad: f64 = z.iter().zip(&qz).map(|(a, b)| a * b).sum();
        let lin: f64 = z.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.offset
    }

    pub fn row_activity(&self, r: usize, z: &[f64]) -> f64 {
        self.rows[r].iter().map(|&(j, a)| a * z[j]).sum()
    }

    /// Largest violation over rows and bounds.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let rows = (0..self.m()).map(|r| self.row_activity(r, z) - self.b[r]);
        let lo = (0..self.n).map(|j| self.lower[j] - z[j]);
        let hi = (0..self.n).map(|j| z[j] - self.upper[j]);
        rows.chain(lo).chain(hi).fold(0.0, f64::max)
    }

    pub fn family_of_row(&self, r: usize) -> &str {
        self.row_family
            .get(r)
            .and_then(|&f| self.families.get(f))
            .map(String::as_str)
            .unwrap_or("rows")
    }

    pub fn check_dimensions(&self) -> Result<(), QpError> {
        let n = self.n;
        let bad = |msg: String| Err(QpError::Dimension(msg));
        if self.c.len() != n || self.lower.len() != n || self.upper.len() != n {
            return bad(format!("n = {n} but c/lower/upper have lengths {}/{}/{}", self.c.len(), self.lower.len(), self.upper.len()));
        }
        if self.b.len() != self.rows.len() {
            return bad(format!("{} rows but {} right-hand sides", self.rows.len(), self.b.len()));
        }
        if !self.row_family.is_empty() && self.row_family.len() != self.rows.len() {
            return bad("row_family length differs from row count".into());
        }
        if self.q.iter().any(|&(i, j, _)| i >= n || j >= n) {
            return bad("cost entry index out of range".into());
        }
        if self.rows.iter().flatten().any(|&(j, _)| j >= n) {
            return bad("row entry index out of range".into());
        }
        if (0..n).any(|j| self.lower[j] > self.upper[j]) {
            return bad("lower bound above upper bound".into());
        }
        Ok(())
    }
}

/// Disjunctive indicator group: each member binary relaxes one row
/// (`a.z - M*delta <= b`), and at least one member must stay at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorGroup {
    pub members: Vec<IndicatorMember>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorMember {
    pub var: usize,
    pub row: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MiqpProblem {
    pub base: QpProblem,
    pub binaries: Vec<usize>,
    /// Optional disjunction structure over a subset of `binaries`.
    pub groups: Vec<IndicatorGroup>,
}

impl MiqpProblem {
    pub fn validate(&self) -> Result<(), MiqpError> {
        self.base.check_dimensions()?;
        let n = self.base.n;
        for &v in &self.binaries {
            if v >= n {
                return Err(MiqpError::Invalid(format!("binary index {v} out of range")));
            }
            if self.base.lower[v] < 0.0 || self.base.upper[v] > 1.0 || self.base.lower[v] > self.base.upper[v] {
                return Err(MiqpError::Invalid(format!("binary {v} must have bounds within [0, 1]")));
            }
        }
        let mut is_bin = vec![false; n];
        self.binaries.iter().for_each(|&v| is_bin[v] = true);
        let mut in_group = vec![false; n];
        for g in &self.groups {
            if g.members.len() < 2 {
                return Err(MiqpError::Invalid("indicator group needs at least two members".into()));
            }
            for m in &g.members {
                if m.var >= n || !is_bin[m.var] || in_group[m.var] {
                    return Err(MiqpError::Invalid(format!("group member {} is not a unique binary", m.var)));
                }
                in_group[m.var] = true;
                if m.row >= self.base.m() {
                    return Err(MiqpError::Invalid(format!("group row {} out of range", m.row)));
                }
                let coef = self.base.rows[m.row].iter().filter(|e| e.0 == m.var).map(|e| e.1).sum::<f64>();
                if coef >= 0.0 {
                    return Err(MiqpError::Invalid(format!("indicator {} must relax its row with a negative coefficient", m.var)));
                }
                if self.base.c[m.var] != 0.0 {
                    return Err(MiqpError::Invalid(format!("indicator {} carries objective weight", m.var)));
                }
            }
        }
        if self.base.q.iter().any(|&(i, j, v)| v != 0.0 && (in_group[i] || in_group[j])) {
            return Err(MiqpError::Invalid("indicator binaries must not appear in the quadratic cost".into()));
        }
        Ok(())
    }
}
