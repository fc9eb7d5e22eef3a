//! Bounded-variable revised simplex with a product-form inverse.
//!
//! Rows become logical variables (`a·x - s = 0` with the row bounds
//! carried by `s`), so the initial all-logical basis is trivially
//! invertible. Phase 1 minimizes the total bound violation of the basic
//! variables and shares all machinery with phase 2. Pricing is Dantzig
//! with a Bland's-rule fallback after a stall, which guarantees
//! termination; the ratio test is a two-pass Harris variant in which a
//! violated basic blocks at the bound it is violating, so small drift
//! self-heals. The basis inverse is an eta file, refactorized every 50
//! pivots; logical columns are peeled as fill-free singletons and
//! structural columns are eliminated sparsest-first with tracked fill.

use super::model::{MilpModel, Sense};
use super::MilpError;

/// Absolute tolerance on bound violations (data is MW-scale, so an
/// absolute tolerance stays meaningful).
pub const PRIMAL_TOL: f64 = 1e-9;
/// Reduced-cost optimality tolerance, scaled by (1 + |c_j|).
pub const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-8;
const REFACTOR_EVERY: usize = 50;
const STALL_LIMIT: usize = 400;
/// Total phase-1 infeasibility above which a stuck model is declared
/// infeasible.
const INFEAS_ACCEPT: f64 = 1e-6;
/// Total infeasibility that sends the solver (back) into phase 1.
const PHASE1_TRIGGER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (meaningful when status is Optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    /// Simplex multipliers, one per row; the reduced cost of structural
    /// j is `obj_j - duals · col_j`.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    /// Lagrangian lower bound at the returned duals: every variable
    /// (structural and logical) contributes its cheaper bound weighted
    /// by its reduced cost. Weak duality: never exceeds the primal
    /// objective.
    pub fn dual_bound(&self, model: &MilpModel) -> f64 {
        let mut total = 0.0;
        for (j, v) in model.vars.iter().enumerate() {
            total += pick_bound(self.reduced_costs[j], v.lo, v.hi);
        }
        for (r, row) in model.rows.iter().enumerate() {
            let (lo, hi) = row_bounds(row.sense, row.rhs);
            total += pick_bound(self.duals[r], lo, hi);
        }
        total
    }
}

fn pick_bound(d: f64, lo: f64, hi: f64) -> f64 {
    if d > 0.0 {
        if lo.is_finite() {
            d * lo
        } else {
            f64::NEG_INFINITY
        }
    } else if d < 0.0 {
        if hi.is_finite() {
            d * hi
        } else {
            f64::NEG_INFINITY
        }
    } else {
        0.0
    }
}

fn row_bounds(sense: Sense, rhs: f64) -> (f64, f64) {
    match sense {
        Sense::Le => (f64::NEG_INFINITY, rhs),
        Sense::Ge => (rhs, f64::INFINITY),
        Sense::Eq => (rhs, rhs),
    }
}

/// Solve the LP relaxation of `model` (binaries become their [0, 1]
/// bounds).
pub fn lp_relax_solve(model: &MilpModel) -> Result<LpSolution, MilpError> {
    solve_lp_with_overrides(model, &[])
}

/// LP relaxation with per-variable bound overrides `(var, lo, hi)`;
/// branch-and-bound uses this to fix binaries without cloning the model.
pub fn solve_lp_with_overrides(
    model: &MilpModel,
    overrides: &[(usize, f64, f64)],
) -> Result<LpSolution, MilpError> {
    model.validate()?;
    let mut w = Worker::new(model, overrides);
    w.solve()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free nonbasic variable pinned at zero.
    FreeZero,
}

struct Eta {
    row: usize,
    pivot: f64,
    /// Off-pivot entries of the eta column.
    others: Vec<(usize, f64)>,
}

struct Factorization {
    etas: Vec<Eta>,
}

impl Factorization {
    fn ftran(&self, v: &mut [f64]) {
        for eta in &self.etas {
            let t = v[eta.row];
            if t != 0.0 {
                let t = t / eta.pivot;
                v[eta.row] = t;
                for &(i, w) in &eta.others {
                    v[i] -= w * t;
                }
            }
        }
    }

    fn btran(&self, v: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut t = v[eta.row];
            for &(i, w) in &eta.others {
                t -= w * v[i];
            }
            v[eta.row] = t / eta.pivot;
        }
    }
}

struct Worker {
    m: usize,
    n: usize,
    /// Sparse columns, structural then logical (logical j is -e_{j-n}).
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    obj: Vec<f64>,
    /// basis[r] = variable occupying pivot row r.
    basis: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<f64>,
    factor: Factorization,
    pivots_since_refactor: usize,
    iterations: usize,
    bland: bool,
    stall: usize,
}

impl Worker {
    fn new(model: &MilpModel, overrides: &[(usize, f64, f64)]) -> Self {
        let n = model.vars.len();
        let m = model.rows.len();
        let total = n + m;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total];
        for (r, row) in model.rows.iter().enumerate() {
            for &(j, c) in &row.coeffs {
                if c != 0.0 {
                    cols[j].push((r, c));
                }
            }
            cols[n + r].push((r, -1.0));
        }
        let mut lo = Vec::with_capacity(total);
        let mut hi = Vec::with_capacity(total);
        let mut obj = Vec::with_capacity(total);
        for v in &model.vars {
            lo.push(v.lo);
            hi.push(v.hi);
            obj.push(v.obj);
        }
        for &(j, l, h) in overrides {
            lo[j] = l;
            hi[j] = h;
        }
        for row in &model.rows {
            let (l, h) = row_bounds(row.sense, row.rhs);
            lo.push(l);
            hi.push(h);
            obj.push(0.0);
        }

        let mut state = Vec::with_capacity(total);
        let mut x = vec![0.0; total];
        for j in 0..n {
            let s = initial_state(lo[j], hi[j]);
            x[j] = match s {
                VarState::AtLower => lo[j],
                VarState::AtUpper => hi[j],
                _ => 0.0,
            };
            state.push(s);
        }
        let mut basis = Vec::with_capacity(m);
        for r in 0..m {
            state.push(VarState::Basic(r));
            basis.push(n + r);
        }

        Worker {
            m,
            n,
            cols,
            lo,
            hi,
            obj,
            basis,
            state,
            x,
            factor: Factorization { etas: Vec::new() },
            pivots_since_refactor: 0,
            iterations: 0,
            bland: false,
            stall: 0,
        }
    }

    /// Rebuild the eta file from the current basis. Logical columns are
    /// fill-free singletons and go first; structural columns are
    /// eliminated sparsest-first with stamp-tracked fill so the cost is
    /// proportional to actual fill, not m².
    fn refactorize(&mut self) -> Result<(), MilpError> {
        self.factor.etas.clear();
        let mut row_taken = vec![false; self.m];
        let mut new_basis = vec![usize::MAX; self.m];
        let mut neg_rows = vec![false; self.m];
        let mut structurals: Vec<usize> = Vec::new();
        for &j in &self.basis {
            if j >= self.n {
                let r = j - self.n;
                self.factor.etas.push(Eta {
                    row: r,
                    pivot: -1.0,
                    others: Vec::new(),
                });
                row_taken[r] = true;
                neg_rows[r] = true;
                new_basis[r] = j;
            } else {
                structurals.push(j);
            }
        }
        let n_logical = self.factor.etas.len();
        structurals.sort_by_key(|&j| (self.cols[j].len(), j));

        let mut v = vec![0.0; self.m];
        let mut stamp = vec![0u32; self.m];
        let mut epoch = 0u32;
        let mut nz: Vec<usize> = Vec::new();
        for &j in &structurals {
            epoch += 1;
            nz.clear();
            for &(r, c) in &self.cols[j] {
                v[r] = if neg_rows[r] { -c } else { c };
                stamp[r] = epoch;
                nz.push(r);
            }
            for eta in &self.factor.etas[n_logical..] {
                let t = if stamp[eta.row] == epoch {
                    v[eta.row]
                } else {
                    0.0
                };
                if t != 0.0 {
                    let t = t / eta.pivot;
                    v[eta.row] = t;
                    for &(i, w) in &eta.others {
                        if stamp[i] == epoch {
                            v[i] -= w * t;
                        } else {
                            v[i] = -w * t;
                            stamp[i] = epoch;
                            nz.push(i);
                        }
                    }
                }
            }
            let mut best = usize::MAX;
            let mut best_abs = 0.0;
            for &r in &nz {
                if !row_taken[r] {
                    let a = v[r].abs();
                    if a > best_abs {
                        best_abs = a;
                        best = r;
                    }
                }
            }
            if best == usize::MAX || best_abs < 1e-11 {
                return Err(MilpError::NumericalFailure(format!(
                    "singular basis during refactorization (column {j})"
                )));
            }
            let mut others = Vec::new();
            for &r in &nz {
                if r != best && v[r].abs() > 1e-14 {
                    others.push((r, v[r]));
                }
            }
            self.factor.etas.push(Eta {
                row: best,
                pivot: v[best],
                others,
            });
            row_taken[best] = true;
            new_basis[best] = j;
        }
        for (r, &j) in new_basis.iter().enumerate() {
            self.basis[r] = j;
            self.state[j] = VarState::Basic(r);
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Recompute basic values from the nonbasic bounds: x_B = B⁻¹(-N x_N).
    fn recompute_basics(&mut self) {
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.n + self.m {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj != 0.0 {
                for &(r, c) in &self.cols[j] {
                    rhs[r] -= c * xj;
                }
            }
        }
        self.factor.ftran(&mut rhs);
        for (r, &j) in self.basis.iter().enumerate() {
            self.x[j] = rhs[r];
        }
    }

    fn infeasibility(&self) -> f64 {
        let mut f = 0.0;
        for &j in &self.basis {
            let xj = self.x[j];
            if xj < self.lo[j] - PRIMAL_TOL {
                f += self.lo[j] - xj;
            } else if xj > self.hi[j] + PRIMAL_TOL {
                f += xj - self.hi[j];
            }
        }
        f
    }

    fn solve(&mut self) -> Result<LpSolution, MilpError> {
        self.refactorize()?;
        self.recompute_basics();
        let max_iter = 100_000 + 200 * (self.m + self.n);
        let mut y = vec![0.0; self.m];
        let mut w = vec![0.0; self.m];
        let mut last_merit = f64::INFINITY;
        let mut last_phase1 = true;
        let mut cleanup_rounds = 0usize;

        loop {
            self.iterations += 1;
            if self.iterations > max_iter {
                return Err(MilpError::NumericalFailure(format!(
                    "iteration limit {max_iter} reached"
                )));
            }
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactorize()?;
                self.recompute_basics();
            }

            let infeas = self.infeasibility();
            let phase1 = infeas > PHASE1_TRIGGER;
            if phase1 != last_phase1 {
                last_merit = f64::INFINITY;
                self.stall = 0;
                self.bland = false;
                last_phase1 = phase1;
            }

            for e in y.iter_mut() {
                *e = 0.0;
            }
            for (r, &j) in self.basis.iter().enumerate() {
                y[r] = if phase1 {
                    let xj = self.x[j];
                    if xj < self.lo[j] - PRIMAL_TOL {
                        -1.0
                    } else if xj > self.hi[j] + PRIMAL_TOL {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.obj[j]
                };
            }
            self.factor.btran(&mut y);

            let entering = self.price(&y, phase1);
            let Some((q, dir)) = entering else {
                if phase1 {
                    if infeas > INFEAS_ACCEPT {
                        return Ok(self.finish(LpStatus::Infeasible));
                    }
                    // ambiguous zone: refresh the factorization and retry
                    if cleanup_rounds < 3 {
                        cleanup_rounds += 1;
                        self.refactorize()?;
                        self.recompute_basics();
                        continue;
                    }
                    return Ok(self.finish(LpStatus::Infeasible));
                }
                // claim optimality only on a fresh factorization
                if cleanup_rounds < 3 {
                    cleanup_rounds += 1;
                    self.refactorize()?;
                    self.recompute_basics();
                    if self.infeasibility() > PHASE1_TRIGGER {
                        continue;
                    }
                    if self.price_recheck().is_none() {
                        return Ok(self.finish(LpStatus::Optimal));
                    }
                    continue;
                }
                return Ok(self.finish(LpStatus::Optimal));
            };

            for e in w.iter_mut() {
                *e = 0.0;
            }
            for &(r, c) in &self.cols[q] {
                w[r] = c;
            }
            self.factor.ftran(&mut w);

            match self.ratio_test(q, dir, &w) {
                RatioOutcome::Unbounded => {
                    if phase1 {
                        return Err(MilpError::NumericalFailure(
                            "unbounded phase-1 direction".into(),
                        ));
                    }
                    return Ok(self.finish(LpStatus::Unbounded));
                }
                RatioOutcome::BoundFlip(theta) => {
                    let step = dir * theta;
                    self.x[q] += step;
                    for (r, &bj) in self.basis.iter().enumerate() {
                        self.x[bj] -= w[r] * step;
                    }
                    self.state[q] = if dir > 0.0 {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                RatioOutcome::Pivot {
                    leave_pos,
                    theta,
                    to_upper,
                } => {
                    let step = dir * theta;
                    self.x[q] += step;
                    for (r, &bj) in self.basis.iter().enumerate() {
                        self.x[bj] -= w[r] * step;
                    }
                    let leaving = self.basis[leave_pos];
                    self.state[leaving] = if to_upper {
                        VarState::AtUpper
                    } else {
                        VarState::AtLower
                    };
                    self.x[leaving] = if to_upper {
                        self.hi[leaving]
                    } else {
                        self.lo[leaving]
                    };
                    self.basis[leave_pos] = q;
                    self.state[q] = VarState::Basic(leave_pos);
                    let mut others = Vec::new();
                    for (i, &wv) in w.iter().enumerate() {
                        if i != leave_pos && wv.abs() > 1e-14 {
                            others.push((i, wv));
                        }
                    }
                    self.factor.etas.push(Eta {
                        row: leave_pos,
                        pivot: w[leave_pos],
                        others,
                    });
                    self.pivots_since_refactor += 1;
                }
            }

            let merit = if phase1 {
                self.infeasibility()
            } else {
                self.current_objective()
            };
            if merit < last_merit - 1e-12 * (1.0 + merit.abs()) {
                self.stall = 0;
                self.bland = false;
            } else {
                self.stall += 1;
                if self.stall > STALL_LIMIT {
                    self.bland = true;
                }
            }
            last_merit = merit;
            cleanup_rounds = 0;
        }
    }

    fn current_objective(&self) -> f64 {
        (0..self.n).map(|j| self.obj[j] * self.x[j]).sum()
    }

    /// Pick an entering variable: Dantzig normally, smallest-index
    /// eligible in Bland mode. Returns (var, direction).
    fn price(&self, y: &[f64], phase1: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.n + self.m {
            let st = self.state[j];
            if matches!(st, VarState::Basic(_)) {
                continue;
            }
            if self.lo[j] == self.hi[j] {
                continue;
            }
            let cost = if phase1 { 0.0 } else { self.obj[j] };
            let mut d = cost;
            for &(r, c) in &self.cols[j] {
                d -= y[r] * c;
            }
            let tol = DUAL_TOL * (1.0 + cost.abs());
            let dir = match st {
                VarState::AtLower => {
                    if d < -tol {
                        1.0
                    } else {
                        continue;
                    }
                }
                VarState::AtUpper => {
                    if d > tol {
                        -1.0
                    } else {
                        continue;
                    }
                }
                VarState::FreeZero => {
                    if d < -tol {
                        1.0
                    } else if d > tol {
                        -1.0
                    } else {
                        continue;
                    }
                }
                VarState::Basic(_) => unreachable!(),
            };
            if self.bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Re-price with phase-2 costs after a fresh refactorization.
    fn price_recheck(&mut self) -> Option<(usize, f64)> {
        let mut y = vec![0.0; self.m];
        for (r, &j) in self.basis.iter().enumerate() {
            y[r] = self.obj[j];
        }
        self.factor.btran(&mut y);
        self.price(&y, false)
    }

    /// Two-pass Harris ratio test. A basic variable violating a bound
    /// blocks at that bound when the step moves it back toward
    /// feasibility (phase 1 progress and phase 2 drift repair); a
    /// feasible basic blocks at whichever bound the step approaches.
    fn ratio_test(&self, q: usize, dir: f64, w: &[f64]) -> RatioOutcome {
        let own_range = self.hi[q] - self.lo[q];
        let mut theta_max = if own_range.is_finite() {
            own_range
        } else {
            f64::INFINITY
        };

        for (r, &bj) in self.basis.iter().enumerate() {
            let delta = -dir * w[r];
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            if let Some((bound, _)) = self.blocking_bound(bj, delta) {
                let t = (bound + PRIMAL_TOL * delta.signum() - self.x[bj]) / delta;
                if t < theta_max {
                    theta_max = t;
                }
            }
        }

        if !theta_max.is_finite() {
            return RatioOutcome::Unbounded;
        }

        let mut best: Option<(usize, f64, bool, f64)> = None;
        for (r, &bj) in self.basis.iter().enumerate() {
            let delta = -dir * w[r];
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            if let Some((bound, to_upper)) = self.blocking_bound(bj, delta) {
                let t = ((bound - self.x[bj]) / delta).max(0.0);
                if t <= theta_max {
                    let better = match best {
                        None => true,
                        Some((_, _, _, piv)) => delta.abs() > piv,
                    };
                    if better {
                        best = Some((r, t, to_upper, delta.abs()));
                    }
                }
            }
        }

        match best {
            Some((pos, theta, to_upper, _)) => {
                if own_range.is_finite() && own_range < theta {
                    RatioOutcome::BoundFlip(own_range)
                } else {
                    RatioOutcome::Pivot {
                        leave_pos: pos,
                        theta,
                        to_upper,
                    }
                }
            }
            None => {
                if own_range.is_finite() {
                    RatioOutcome::BoundFlip(own_range)
                } else {
                    RatioOutcome::Unbounded
                }
            }
        }
    }

    /// The bound at which basic variable `bj` blocks a movement of
    /// `delta` per unit step, if any. Returns (bound, leaves_at_upper).
    fn blocking_bound(&self, bj: usize, delta: f64) -> Option<(f64, bool)> {
        let xj = self.x[bj];
        let (lo, hi) = (self.lo[bj], self.hi[bj]);
        let below = xj < lo - PRIMAL_TOL;
        let above = xj > hi + PRIMAL_TOL;
        if delta > 0.0 {
            if below {
                Some((lo, false))
            } else if hi.is_finite() && !above {
                Some((hi, true))
            } else {
                None
            }
        } else if above {
            Some((hi, true))
        } else if lo.is_finite() && !below {
            Some((lo, false))
        } else {
            None
        }
    }

    fn finish(&mut self, status: LpStatus) -> LpSolution {
        let mut y = vec![0.0; self.m];
        for (r, &j) in self.basis.iter().enumerate() {
            y[r] = self.obj[j];
        }
        self.factor.btran(&mut y);
        let mut reduced = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let mut d = self.obj[j];
            for &(r, c) in &self.cols[j] {
                d -= y[r] * c;
            }
            reduced.push(d);
        }
        LpSolution {
            status,
            x: self.x[..self.n].to_vec(),
            objective: self.current_objective(),
            duals: y,
            reduced_costs: reduced,
            iterations: self.iterations,
        }
    }
}

fn initial_state(lo: f64, hi: f64) -> VarState {
    if lo.is_finite() {
        VarState::AtLower
    } else if hi.is_finite() {
        VarState::AtUpper
    } else {
        VarState::FreeZero
    }
}

enum RatioOutcome {
    Unbounded,
    BoundFlip(f64),
    Pivot {
        leave_pos: usize,
        theta: f64,
        to_upper: bool,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::{MilpModel, Sense};

    #[test]
    fn minimal_lower_bound_lp() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 10.0, 1.0);
        m.add_row("r", Sense::Ge, 1.0, vec![(x, 1.0)]);
        let sol = lp_relax_solve(&m).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 10.0, 1.0);
        m.add_row("lo", Sense::Ge, 2.0, vec![(x, 1.0)]);
        m.add_row("hi", Sense::Le, 1.0, vec![(x, 1.0)]);
        let sol = lp_relax_solve(&m).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction_detected() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, f64::INFINITY, -1.0);
        m.add_row("r", Sense::Ge, 0.0, vec![(x, 1.0)]);
        let sol = lp_relax_solve(&m).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_rows_and_negative_costs() {
        // min -x - 2y  st  x + y = 1, x,y in [0,1]  ->  y=1, obj=-2
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 1.0, -1.0);
        let y = m.add_var("y", 0.0, 1.0, -2.0);
        m.add_row("bal", Sense::Eq, 1.0, vec![(x, 1.0), (y, 1.0)]);
        let sol = lp_relax_solve(&m).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 2.0).abs() < 1e-9);
        assert!((sol.x[y] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_ties_terminate() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 10.0, 1.0);
        let y = m.add_var("y", 0.0, 10.0, 1.0);
        for i in 0..6 {
            m.add_row(format!("r{i}"), Sense::Ge, 2.0, vec![(x, 1.0), (y, 1.0)]);
        }
        m.add_row("rx", Sense::Ge, 1.0, vec![(x, 1.0)]);
        let sol = lp_relax_solve(&m).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-8);
    }

    #[test]
    fn free_variable_equality() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        m.add_row("fix", Sense::Eq, -3.0, vec![(x, 1.0)]);
        let sol = lp_relax_solve(&m).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn weak_duality_holds_at_optimum() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 4.0, 3.0);
        let y = m.add_var("y", 0.0, 4.0, 5.0);
        m.add_row("r1", Sense::Ge, 6.0, vec![(x, 1.0), (y, 2.0)]);
        m.add_row("r2", Sense::Ge, 5.0, vec![(x, 2.0), (y, 1.0)]);
        let sol = lp_relax_solve(&m).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        let bound = sol.dual_bound(&m);
        assert!(bound <= sol.objective + 1e-9);
        assert!(
            (sol.objective - bound).abs() < 1e-7,
            "{} vs {bound}",
            sol.objective
        );
    }

    #[test]
    fn bound_overrides_fix_variables() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 1.0, -1.0);
        let y = m.add_var("y", 0.0, 1.0, -1.0);
        m.add_row("cap", Sense::Le, 1.5, vec![(x, 1.0), (y, 1.0)]);
        let sol = solve_lp_with_overrides(&m, &[(x, 0.0, 0.0)]).unwrap();
        assert!(sol.x[x].abs() < 1e-9);
        assert!((sol.x[y] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reduced_cost_optimality_at_bounds() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 2.0, 1.5);
        let y = m.add_var("y", 0.0, 2.0, 1.0);
        m.add_row("need", Sense::Ge, 3.0, vec![(x, 1.0), (y, 1.0)]);
        let sol = lp_relax_solve(&m).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        // y fills first (cheaper); x covers the rest
        assert!((sol.x[y] - 2.0).abs() < 1e-9);
        assert!((sol.x[x] - 1.0).abs() < 1e-9);
        // at-lower variables must have nonnegative reduced cost shifts
        for (j, d) in sol.reduced_costs.iter().enumerate() {
            if (sol.x[j] - m.vars[j].lo).abs() < 1e-9 {
                assert!(*d >= -1e-9, "var {j} reduced cost {d}");
            }
            if (sol.x[j] - m.vars[j].hi).abs() < 1e-9 {
                assert!(*d <= 1e-9, "var {j} reduced cost {d}");
            }
        }
    }
}
