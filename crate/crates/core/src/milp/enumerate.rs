//! Exhaustive binary enumeration: the ground-truth oracle for
//! branch-and-bound. Every assignment of the binaries is fixed and the
//! remaining LP solved; exact by construction, capped at 20 binaries.

use super::branch_bound::{MipSolution, MipStatus};
use super::model::MilpModel;
use super::simplex::{solve_lp_with_overrides, LpStatus};
use super::MilpError;

pub const MAX_ENUM_BINARIES: usize = 20;

pub fn enumerate_solve(model: &MilpModel) -> Result<MipSolution, MilpError> {
    model.validate()?;
    let binaries = model.binary_indices();
    let k = binaries.len();
    if k > MAX_ENUM_BINARIES {
        return Err(MilpError::TooManyBinaries(k));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 1usize << k;
    for mask in 0..total {
        let overrides: Vec<(usize, f64, f64)> = binaries
            .iter()
            .enumerate()
            .map(|(bit, &j)| {
                let v = if mask >> bit & 1 == 1 { 1.0 } else { 0.0 };
                (j, v, v)
            })
            .collect();
        let lp = solve_lp_with_overrides(model, &overrides)?;
        match lp.status {
            LpStatus::Optimal => {
                let mut x = lp.x;
                for &(j, v, _) in &overrides {
                    x[j] = v;
                }
                let better = best
                    .as_ref()
                    .map(|(obj, _)| lp.objective < obj - 1e-12)
                    .unwrap_or(true);
                if better {
                    best = Some((lp.objective, x));
                }
            }
            LpStatus::Infeasible => {}
            LpStatus::Unbounded => {
                return Ok(MipSolution {
                    status: MipStatus::Unbounded,
                    x: Vec::new(),
                    objective: f64::NEG_INFINITY,
                    bound: f64::NEG_INFINITY,
                    gap: 0.0,
                    nodes: mask + 1,
                    trace: Vec::new(),
                });
            }
        }
    }

    Ok(match best {
        Some((obj, x)) => MipSolution {
            status: MipStatus::Optimal,
            x,
            objective: obj,
            bound: obj,
            gap: 0.0,
            nodes: total,
            trace: Vec::new(),
        },
        None => MipSolution {
            status: MipStatus::Infeasible,
            x: Vec::new(),
            objective: f64::INFINITY,
            bound: f64::INFINITY,
            gap: 0.0,
            nodes: total,
            trace: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::branch_bound::{branch_and_bound, BnbOptions};
    use crate::milp::model::Sense;

    #[test]
    fn two_binaries_solve_four_lps() {
        let mut m = MilpModel::new();
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        m.vars[a].obj = -2.0;
        m.vars[b].obj = -3.0;
        m.add_row("cap", Sense::Le, 1.0, vec![(a, 1.0), (b, 1.0)]);
        let sol = enumerate_solve(&m).unwrap();
        assert_eq!(sol.nodes, 4);
        assert!((sol.objective + 3.0).abs() < 1e-9);
    }

    #[test]
    fn all_assignments_infeasible() {
        let mut m = MilpModel::new();
        let a = m.add_binary("a");
        m.add_row("lo", Sense::Ge, 0.4, vec![(a, 1.0)]);
        m.add_row("hi", Sense::Le, 0.6, vec![(a, 1.0)]);
        let sol = enumerate_solve(&m).unwrap();
        assert_eq!(sol.status, MipStatus::Infeasible);
    }

    #[test]
    fn cap_on_binary_count() {
        let mut m = MilpModel::new();
        for i in 0..21 {
            m.add_binary(format!("b{i}"));
        }
        assert!(matches!(
            enumerate_solve(&m),
            Err(MilpError::TooManyBinaries(21))
        ));
    }

    #[test]
    fn enumeration_lower_bounds_branch_and_bound() {
        let mut m = MilpModel::new();
        let vars: Vec<usize> = (0..5).map(|i| m.add_binary(format!("b{i}"))).collect();
        let obj = [-3.0, 1.0, -2.0, -5.0, 4.0];
        for (&v, &c) in vars.iter().zip(obj.iter()) {
            m.vars[v].obj = c;
        }
        m.add_row(
            "cap",
            Sense::Le,
            2.0,
            vars.iter().map(|&v| (v, 1.0)).collect(),
        );
        let exact = enumerate_solve(&m).unwrap();
        let bnb = branch_and_bound(&m, &BnbOptions::default()).unwrap();
        assert!(exact.objective <= bnb.objective + 1e-9);
        assert!((exact.objective - bnb.objective).abs() < 1e-9);
    }
}
