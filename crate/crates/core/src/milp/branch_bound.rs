//! Branch-and-bound on binary variables over the simplex LP solver.
//!
//! Best-bound node selection with deterministic tie-breaking by node id,
//! branching on the most fractional binary (branch-priority variables
//! first). The complementarity fast path solves the plain relaxation and
//! accepts it when no charge/discharge pair is simultaneously active,
//! falling back to branch-and-bound that branches the violating pairs
//! first.

use super::model::MilpModel;
use super::simplex::{lp_relax_solve, solve_lp_with_overrides, LpStatus};
use super::MilpError;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct BnbOptions {
    /// Relative optimality gap at which the search stops.
    pub rel_gap: f64,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Record (bound, incumbent) after every processed node.
    pub trace: bool,
    /// Binary variables to branch before any other fractional binary.
    pub branch_priority: Vec<usize>,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            rel_gap: 1e-6,
            node_limit: 200_000,
            time_limit: None,
            trace: false,
            branch_priority: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    /// Incumbent found but limits were reached before proving the gap.
    Feasible,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub bound: f64,
    pub incumbent: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Proven lower bound on the optimal objective.
    pub bound: f64,
    /// (objective - bound) / max(1, |objective|).
    pub gap: f64,
    pub nodes: usize,
    pub trace: Vec<TracePoint>,
}

impl MipSolution {
    fn from_parts(
        status: MipStatus,
        x: Vec<f64>,
        objective: f64,
        bound: f64,
        nodes: usize,
        trace: Vec<TracePoint>,
    ) -> Self {
        let gap = if objective.is_finite() {
            (objective - bound) / objective.abs().max(1.0)
        } else {
            f64::INFINITY
        };
        MipSolution {
            status,
            x,
            objective,
            bound,
            gap,
            nodes,
            trace,
        }
    }
}

struct Node {
    id: usize,
    bound: f64,
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; invert so the smallest bound pops first,
    // ties broken by the older node id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(other.id.cmp(&self.id))
    }
}

pub fn branch_and_bound(model: &MilpModel, opts: &BnbOptions) -> Result<MipSolution, MilpError> {
    model.validate()?;
    let binaries = model.binary_indices();
    if binaries.is_empty() {
        let lp = lp_relax_solve(model)?;
        return Ok(match lp.status {
            LpStatus::Optimal => MipSolution::from_parts(
                MipStatus::Optimal,
                lp.x,
                lp.objective,
                lp.objective,
                1,
                Vec::new(),
            ),
            LpStatus::Infeasible => MipSolution::from_parts(
                MipStatus::Infeasible,
                Vec::new(),
                f64::INFINITY,
                f64::INFINITY,
                1,
                Vec::new(),
            ),
            LpStatus::Unbounded => MipSolution::from_parts(
                MipStatus::Unbounded,
                Vec::new(),
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
                1,
                Vec::new(),
            ),
        });
    }

    let started = Instant::now();
    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut next_id = 0usize;
    heap.push(Node {
        id: next_id,
        bound: f64::NEG_INFINITY,
        fixes: Vec::new(),
    });
    next_id += 1;

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut best_bound = f64::NEG_INFINITY;
    let mut nodes = 0usize;
    let mut trace = Vec::new();
    let mut limits_hit = false;

    while let Some(node) = heap.pop() {
        best_bound = best_bound.max(node.bound);
        if let Some((inc_obj, _)) = &incumbent {
            let cutoff = inc_obj - opts.rel_gap * inc_obj.abs().max(1.0);
            if node.bound >= cutoff {
                // best-first order: everything left is within gap
                break;
            }
        }
        if nodes >= opts.node_limit {
            limits_hit = true;
            break;
        }
        if let Some(limit) = opts.time_limit {
            if started.elapsed() > limit {
                limits_hit = true;
                break;
            }
        }
        nodes += 1;

        let overrides: Vec<(usize, f64, f64)> =
            node.fixes.iter().map(|&(j, v)| (j, v, v)).collect();
        let lp = solve_lp_with_overrides(model, &overrides)?;
        match lp.status {
            LpStatus::Infeasible => {
                if opts.trace {
                    trace.push(TracePoint {
                        bound: best_bound,
                        incumbent: incumbent.as_ref().map(|(o, _)| *o),
                    });
                }
                continue;
            }
            LpStatus::Unbounded => {
                if node.fixes.is_empty() {
                    return Ok(MipSolution::from_parts(
                        MipStatus::Unbounded,
                        Vec::new(),
                        f64::NEG_INFINITY,
                        f64::NEG_INFINITY,
                        nodes,
                        trace,
                    ));
                }
                return Err(MilpError::NumericalFailure(
                    "unbounded node LP below the root".into(),
                ));
            }
            LpStatus::Optimal => {}
        }

        if let Some((inc_obj, _)) = &incumbent {
            let cutoff = inc_obj - opts.rel_gap * inc_obj.abs().max(1.0);
            if lp.objective >= cutoff {
                if opts.trace {
                    trace.push(TracePoint {
                        bound: best_bound,
                        incumbent: incumbent.as_ref().map(|(o, _)| *o),
                    });
                }
                continue;
            }
        }

        let frac = pick_branch_var(&binaries, &opts.branch_priority, &lp.x);
        match frac {
            None => {
                let obj = lp.objective;
                let better = incumbent
                    .as_ref()
                    .map(|(inc, _)| obj < inc - 1e-12)
                    .unwrap_or(true);
                if better {
                    incumbent = Some((obj, lp.x));
                }
            }
            Some(j) => {
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    heap.push(Node {
                        id: next_id,
                        bound: lp.objective,
                        fixes,
                    });
                    next_id += 1;
                }
            }
        }

        if opts.trace {
            trace.push(TracePoint {
                bound: best_bound,
                incumbent: incumbent.as_ref().map(|(o, _)| *o),
            });
        }
    }

    match incumbent {
        Some((obj, x)) => {
            let bound = if heap.is_empty() && !limits_hit {
                obj
            } else {
                heap.iter()
                    .map(|n| n.bound)
                    .fold(best_bound, f64::min)
                    .min(obj)
            };
            let gap = (obj - bound) / obj.abs().max(1.0);
            let status = if !limits_hit || gap <= opts.rel_gap {
                MipStatus::Optimal
            } else {
                MipStatus::Feasible
            };
            Ok(MipSolution::from_parts(status, x, obj, bound, nodes, trace))
        }
        None => {
            if limits_hit {
                Err(MilpError::NoFeasibleFound)
            } else {
                Ok(MipSolution::from_parts(
                    MipStatus::Infeasible,
                    Vec::new(),
                    f64::INFINITY,
                    f64::INFINITY,
                    nodes,
                    trace,
                ))
            }
        }
    }
}

/// Most fractional binary, restricted to priority variables when any of
/// them is fractional; ties break to the lowest index.
fn pick_branch_var(binaries: &[usize], priority: &[usize], x: &[f64]) -> Option<usize> {
    let fractional = |j: usize| {
        let v = x[j];
        let dist = (v - v.round()).abs();
        (dist > INT_TOL).then_some(dist)
    };
    let best_of = |set: &[usize]| {
        let mut best: Option<(usize, f64)> = None;
        for &j in set {
            if let Some(dist) = fractional(j) {
                let score = (dist - 0.5).abs();
                let better = match best {
                    None => true,
                    Some((bj, bscore)) => {
                        score < bscore - 1e-15 || (score <= bscore + 1e-15 && j < bj)
                    }
                };
                if better {
                    best = Some((j, score));
                }
            }
        }
        best.map(|(j, _)| j)
    };
    best_of(priority).or_else(|| best_of(binaries))
}

/// Complementarity fast path: solve the LP relaxation, accept it when no
/// power pair is simultaneously active above 1e-6 MW, and otherwise fall
/// back to branch-and-bound with the violating mode binaries branched
/// first. `pairs` holds (charge, discharge) power columns and
/// `pair_binaries` the matching (mode-charge, mode-discharge) columns.
pub fn solve_complementarity_fastpath(
    model: &MilpModel,
    pairs: &[(usize, usize)],
    pair_binaries: &[(usize, usize)],
    opts: &BnbOptions,
) -> Result<MipSolution, MilpError> {
    let lp = lp_relax_solve(model)?;
    match lp.status {
        LpStatus::Infeasible => {
            return Ok(MipSolution::from_parts(
                MipStatus::Infeasible,
                Vec::new(),
                f64::INFINITY,
                f64::INFINITY,
                1,
                Vec::new(),
            ))
        }
        LpStatus::Unbounded => {
            return Ok(MipSolution::from_parts(
                MipStatus::Unbounded,
                Vec::new(),
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
                1,
                Vec::new(),
            ))
        }
        LpStatus::Optimal => {}
    }

    let mut violators = Vec::new();
    for (k, &(ch, dis)) in pairs.iter().enumerate() {
        if lp.x[ch] > 1e-6 && lp.x[dis] > 1e-6 {
            violators.push(k);
        }
    }

    if violators.is_empty() {
        let mut x = lp.x;
        for (&(ch, dis), &(gch, gdis)) in pairs.iter().zip(pair_binaries) {
            x[gch] = if x[ch] > 1e-6 { 1.0 } else { 0.0 };
            x[gdis] = if x[dis] > 1e-6 { 1.0 } else { 0.0 };
        }
        let objective = model.objective_value(&x);
        return Ok(MipSolution::from_parts(
            MipStatus::Optimal,
            x,
            objective,
            objective,
            1,
            Vec::new(),
        ));
    }

    let mut fallback = opts.clone();
    for k in violators {
        let (gch, gdis) = pair_binaries[k];
        fallback.branch_priority.push(gch);
        fallback.branch_priority.push(gdis);
    }
    branch_and_bound(model, &fallback)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::Sense;

    #[test]
    fn knapsack_pair_picks_one() {
        // min -x1 - x2, binaries, x1 + x2 <= 1 -> objective -1
        let mut m = MilpModel::new();
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        m.vars[a].obj = -1.0;
        m.vars[b].obj = -1.0;
        m.add_row("cap", Sense::Le, 1.0, vec![(a, 1.0), (b, 1.0)]);
        let sol = branch_and_bound(&m, &BnbOptions::default()).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn no_binaries_matches_lp() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 10.0, 2.0);
        m.add_row("r", Sense::Ge, 3.0, vec![(x, 1.0)]);
        let sol = branch_and_bound(&m, &BnbOptions::default()).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert!((sol.objective - 6.0).abs() < 1e-9);
        assert_eq!(sol.nodes, 1);
    }

    #[test]
    fn infeasible_binary_model() {
        let mut m = MilpModel::new();
        let a = m.add_binary("a");
        m.add_row("need", Sense::Ge, 2.0, vec![(a, 1.0)]);
        let sol = branch_and_bound(&m, &BnbOptions::default()).unwrap();
        assert_eq!(sol.status, MipStatus::Infeasible);
    }

    #[test]
    fn fractional_relaxation_forces_branching() {
        // min -x1 - x2 - x3 st 2x1 + 2x2 + 2x3 <= 3, binaries: optimum -1
        // fractional LP at 1.5/2 each.
        let mut m = MilpModel::new();
        let vars: Vec<usize> = (0..3).map(|i| m.add_binary(format!("b{i}"))).collect();
        for &v in &vars {
            m.vars[v].obj = -1.0;
        }
        m.add_row(
            "cap",
            Sense::Le,
            3.0,
            vars.iter().map(|&v| (v, 2.0)).collect(),
        );
        let sol = branch_and_bound(&m, &BnbOptions::default()).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-9, "{}", sol.objective);
        assert!(sol.nodes > 1);
    }

    #[test]
    fn trace_bound_monotone_incumbent_monotone() {
        let mut m = MilpModel::new();
        let vars: Vec<usize> = (0..6).map(|i| m.add_binary(format!("b{i}"))).collect();
        let weights = [3.0, 5.0, 7.0, 4.0, 6.0, 2.0];
        let values = [-4.0, -6.0, -9.0, -5.0, -7.0, -2.0];
        for (&v, &c) in vars.iter().zip(values.iter()) {
            m.vars[v].obj = c;
        }
        m.add_row(
            "cap",
            Sense::Le,
            12.0,
            vars.iter()
                .zip(weights.iter())
                .map(|(&v, &w)| (v, w))
                .collect(),
        );
        let opts = BnbOptions {
            trace: true,
            ..Default::default()
        };
        let sol = branch_and_bound(&m, &opts).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        let mut prev_bound = f64::NEG_INFINITY;
        let mut prev_inc = f64::INFINITY;
        for p in &sol.trace {
            assert!(p.bound >= prev_bound - 1e-9);
            prev_bound = p.bound;
            if let Some(inc) = p.incumbent {
                assert!(inc <= prev_inc + 1e-9);
                prev_inc = inc;
            }
        }
        assert!(sol.gap <= 1e-6 + 1e-12);
    }
}
