//! MILP container: variables, sparse rows, minimization objective.

use super::MilpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub obj: f64,
    pub binary: bool,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Sparse minimization MILP. Binary variables carry bounds within [0, 1];
/// relaxing integrality is just ignoring the flag.
#[derive(Debug, Clone, Default)]
pub struct MilpModel {
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64, obj: f64) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            lo,
            hi,
            obj,
            binary: false,
        });
        self.vars.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            lo: 0.0,
            hi: 1.0,
            obj: 0.0,
            binary: true,
        });
        self.vars.len() - 1
    }

    /// Rows are stored with coefficients sorted by column, so models
    /// rebuilt from an MPS round trip compare field-exact.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        sense: Sense,
        rhs: f64,
        mut coeffs: Vec<(usize, f64)>,
    ) -> usize {
        coeffs.sort_by_key(|&(j, _)| j);
        self.rows.push(Row {
            name: name.into(),
            coeffs,
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn binary_indices(&self) -> Vec<usize> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.binary)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, xi)| v.obj * xi).sum()
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        for (i, v) in self.vars.iter().enumerate() {
            if v.lo > v.hi {
                return Err(MilpError::InvalidModel(format!(
                    "variable {} ({}) has lo {} > hi {}",
                    i, v.name, v.lo, v.hi
                )));
            }
            if v.binary && (v.lo < 0.0 || v.hi > 1.0) {
                return Err(MilpError::InvalidModel(format!(
                    "binary variable {} ({}) has bounds [{}, {}] outside [0, 1]",
                    i, v.name, v.lo, v.hi
                )));
            }
            if !v.obj.is_finite() {
                return Err(MilpError::InvalidModel(format!(
                    "variable {} ({}) has non-finite objective {}",
                    i, v.name, v.obj
                )));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(MilpError::InvalidModel(format!(
                    "row {} ({}) has non-finite rhs",
                    r, row.name
                )));
            }
            for &(j, c) in &row.coeffs {
                if j >= self.vars.len() {
                    return Err(MilpError::InvalidModel(format!(
                        "row {} ({}) references variable {} out of range",
                        r, row.name, j
                    )));
                }
                if !c.is_finite() {
                    return Err(MilpError::InvalidModel(format!(
                        "row {} ({}) has non-finite coefficient on variable {}",
                        r, row.name, j
                    )));
                }
            }
        }
        Ok(())
    }

    /// Max violation of rows and bounds at `x`; used by tests and the
    /// fast-path acceptance check.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lo - xi).max(xi - v.hi);
        }
        for row in &self.rows {
            let act: f64 = row.coeffs.iter().map(|&(j, c)| c * x[j]).sum();
            let viol = match row.sense {
                Sense::Le => act - row.rhs,
                Sense::Ge => row.rhs - act,
                Sense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_bounds() {
        let mut m = MilpModel::new();
        m.add_var("x", 2.0, 1.0, 0.0);
        assert!(m.validate().is_err());
    }

    #[test]
    fn rejects_binary_outside_unit_interval() {
        let mut m = MilpModel::new();
        let j = m.add_binary("b");
        m.vars[j].hi = 2.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn violation_of_feasible_point_is_zero() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 10.0, 1.0);
        m.add_row("r", Sense::Ge, 1.0, vec![(x, 1.0)]);
        assert_eq!(m.max_violation(&[2.0]), 0.0);
        assert!(m.max_violation(&[0.5]) > 0.4);
    }
}
