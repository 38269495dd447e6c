//! Dense bounded-variable primal simplex.
//!
//! Sized for the small programs that show up here (tens of variables, a few
//! hundred rows at most). Phase 1 minimizes the sum of artificial variables;
//! phase 2 optimizes the caller's objective from the resulting basis.
//! Pricing is Dantzig's rule with lowest-index tie breaking, switching to
//! Bland's rule for the rest of a phase after a run of degenerate pivots.

use thiserror::Error;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Smallest tableau entry accepted as a pivot.
pub const PIVOT_TOL: f64 = 1e-10;
/// Reduced-cost threshold for optimality.
const OPT_TOL: f64 = 1e-10;
/// Degenerate pivots in a row before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("NaN in {0}")]
    NaN(String),
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// `opt c'x  s.t.  A_eq x = b_eq,  A_le x <= b_le,  lo <= x <= hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub le_rows: Vec<Vec<f64>>,
    pub le_rhs: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// New program with every variable bounded to `[0, +inf)`.
    pub fn new(objective: Vec<f64>, sense: Sense) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            sense,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            le_rows: Vec::new(),
            le_rhs: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self::new(objective, Sense::Minimize)
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::new(objective, Sense::Maximize)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds.iter_mut().for_each(|b| *b = (lo, hi));
        self
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.bounds[j] = (lo, hi);
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.le_rows.push(row);
        self.le_rhs.push(rhs);
    }

    pub fn add_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.le_rows.push(row.into_iter().map(|a| -a).collect());
        self.le_rhs.push(-rhs);
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.bounds.len() != n {
            return Err(LpError::DimensionMismatch(format!(
                "{} bounds for {n} variables",
                self.bounds.len()
            )));
        }
        if self.eq_rows.len() != self.eq_rhs.len() || self.le_rows.len() != self.le_rhs.len() {
            return Err(LpError::DimensionMismatch("row and right-hand-side counts differ".into()));
        }
        for r in self.eq_rows.iter().chain(&self.le_rows) {
            if r.len() != n {
                return Err(LpError::DimensionMismatch(format!(
                    "row of length {} for {n} variables",
                    r.len()
                )));
            }
        }
        let nan = |v: &[f64]| v.iter().any(|x| x.is_nan());
        if nan(&self.objective) {
            return Err(LpError::NaN("objective".into()));
        }
        if self.eq_rows.iter().chain(&self.le_rows).any(|r| nan(r))
            || nan(&self.eq_rhs)
            || nan(&self.le_rhs)
        {
            return Err(LpError::NaN("constraints".into()));
        }
        if self.bounds.iter().any(|(l, h)| l.is_nan() || h.is_nan()) {
            return Err(LpError::NaN("bounds".into()));
        }
        Ok(())
    }

    /// Largest violation of the constraints and bounds at `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut worst = 0.0f64;
        for (r, b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((dot(r) - b).abs());
        }
        for (r, b) in self.le_rows.iter().zip(&self.le_rhs) {
            worst = worst.max(dot(r) - b);
        }
        for (xj, (lo, hi)) in x.iter().zip(&self.bounds) {
            worst = worst.max(lo - xj).max(xj - hi);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Largest constraint or bound violation at `x`.
    pub residual: f64,
    /// Phase-1 optimum: the minimal total constraint violation.
    pub infeasibility: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    Solver::default().solve(lp)
}

/// How an original variable maps onto internal columns, all of which live in
/// `[0, u]`.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = lo + y`
    Shifted { col: usize, lo: f64 },
    /// `x = hi - y`
    Negated { col: usize, hi: f64 },
    /// `x = y+ - y-`
    Split { pos: usize, neg: usize },
}

const NONE: usize = usize::MAX;

/// Working state for one solve at a time. Reuse across solves to avoid
/// reallocating the tableau.
#[derive(Debug, Default)]
pub struct Solver {
    m: usize,
    nc: usize,
    n_art_start: usize,
    tab: Vec<f64>,
    rhs: Vec<f64>,
    upper: Vec<f64>,
    xb: Vec<f64>,
    basis: Vec<usize>,
    basic_row: Vec<usize>,
    at_upper: Vec<bool>,
    cost: Vec<f64>,
    duals: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Solver {
    pub fn solve(&mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        lp.check()?;
        let n = lp.num_vars();

        let mut infeasible_bounds = false;
        let mut maps = Vec::with_capacity(n);
        let mut col_upper = Vec::with_capacity(n + 1);
        for &(lo, hi) in &lp.bounds {
            if lo > hi + FEAS_TOL || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                infeasible_bounds = true;
            }
            let c = col_upper.len();
            if lo.is_finite() {
                maps.push(VarMap::Shifted { col: c, lo });
                col_upper.push((hi - lo).max(0.0));
            } else if hi.is_finite() {
                maps.push(VarMap::Negated { col: c, hi });
                col_upper.push(f64::INFINITY);
            } else {
                maps.push(VarMap::Split { pos: c, neg: c + 1 });
                col_upper.push(f64::INFINITY);
                col_upper.push(f64::INFINITY);
            }
        }
        if infeasible_bounds {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective_value: f64::NAN,
                residual: f64::INFINITY,
                infeasibility: f64::INFINITY,
                iterations: 0,
            });
        }
        let n_struct = col_upper.len();
        let n_eq = lp.eq_rows.len();
        let n_le = lp.le_rows.len();
        let m = n_eq + n_le;
        let n_art_start = n_struct + n_le;
        let nc = n_art_start + m;

        self.m = m;
        self.nc = nc;
        self.n_art_start = n_art_start;
        self.tab.clear();
        self.tab.resize(m * nc, 0.0);
        self.rhs.clear();
        self.rhs.resize(m, 0.0);
        self.upper.clear();
        self.upper.extend_from_slice(&col_upper);
        self.upper.extend(std::iter::repeat_n(f64::INFINITY, n_le + m));
        self.iterations = 0;
        self.max_iterations = 5_000 + 50 * (m + nc);

        for (i, (row, b)) in lp
            .eq_rows
            .iter()
            .zip(&lp.eq_rhs)
            .chain(lp.le_rows.iter().zip(&lp.le_rhs))
            .enumerate()
        {
            let mut rhs = *b;
            let t = &mut self.tab[i * nc..(i + 1) * nc];
            for (a, map) in row.iter().zip(&maps) {
                if *a == 0.0 {
                    continue;
                }
                match *map {
                    VarMap::Shifted { col, lo } => {
                        t[col] = *a;
                        rhs -= a * lo;
                    }
                    VarMap::Negated { col, hi } => {
                        t[col] = -a;
                        rhs -= a * hi;
                    }
                    VarMap::Split { pos, neg } => {
                        t[pos] = *a;
                        t[neg] = -a;
                    }
                }
            }
            if i >= n_eq {
                t[n_struct + (i - n_eq)] = 1.0;
            }
            if rhs < 0.0 {
                t[..n_art_start].iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
            }
            t[n_art_start + i] = 1.0;
            self.rhs[i] = rhs;
        }

        self.basis.clear();
        self.basis.extend(n_art_start..nc);
        self.basic_row.clear();
        self.basic_row.resize(nc, NONE);
        for i in 0..m {
            self.basic_row[n_art_start + i] = i;
        }
        self.at_upper.clear();
        self.at_upper.resize(nc, false);
        self.xb.clear();
        self.xb.extend_from_slice(&self.rhs);

        // phase 1
        self.cost.clear();
        self.cost.resize(nc, 0.0);
        self.cost[n_art_start..].iter_mut().for_each(|c| *c = 1.0);
        self.run_phase()?;
        self.refresh_basic_values();
        let infeasibility: f64 = (0..m)
            .filter(|&i| self.basis[i] >= n_art_start)
            .map(|i| self.xb[i].max(0.0))
            .sum();
        if infeasibility > FEAS_TOL {
            let x = self.extract(&maps, n);
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                residual: lp.residual(&x),
                objective_value: f64::NAN,
                x,
                infeasibility,
                iterations: self.iterations,
            });
        }

        // phase 2: artificials are pinned at zero and driven out where possible
        for j in n_art_start..nc {
            self.upper[j] = 0.0;
        }
        self.drive_out_artificials();
        self.refresh_basic_values();

        self.cost.iter_mut().for_each(|c| *c = 0.0);
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        for (c, map) in lp.objective.iter().zip(&maps) {
            match *map {
                VarMap::Shifted { col, .. } => self.cost[col] = sign * c,
                VarMap::Negated { col, .. } => self.cost[col] = -sign * c,
                VarMap::Split { pos, neg } => {
                    self.cost[pos] = sign * c;
                    self.cost[neg] = -sign * c;
                }
            }
        }
        let end = self.run_phase()?;
        self.refresh_basic_values();
        let x = self.extract(&maps, n);
        let objective_value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let status = match end {
            PhaseEnd::Optimal => LpStatus::Optimal,
            PhaseEnd::Unbounded => LpStatus::Unbounded,
        };
        Ok(LpSolution {
            status,
            residual: lp.residual(&x),
            objective_value,
            x,
            infeasibility,
            iterations: self.iterations,
        })
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    fn extract(&self, maps: &[VarMap], n: usize) -> Vec<f64> {
        let val = |c: usize| match self.basic_row[c] {
            NONE => self.nonbasic_value(c),
            r => self.xb[r],
        };
        let mut x = Vec::with_capacity(n);
        for map in maps {
            x.push(match *map {
                VarMap::Shifted { col, lo } => lo + val(col),
                VarMap::Negated { col, hi } => hi - val(col),
                VarMap::Split { pos, neg } => val(pos) - val(neg),
            });
        }
        x
    }

    /// Recomputes basic values as `B^-1 (b - N x_N)`; the artificial columns of
    /// the tableau hold `B^-1`.
    fn refresh_basic_values(&mut self) {
        // x_B = B^-1 b - sum over nonbasic-at-upper columns of T_j u_j
        let (m, nc, a0) = (self.m, self.nc, self.n_art_start);
        for i in 0..m {
            let row = &self.tab[i * nc + a0..(i + 1) * nc];
            self.xb[i] = row.iter().zip(&self.rhs).map(|(a, b)| a * b).sum();
        }
        for j in 0..nc {
            if self.basic_row[j] == NONE && self.at_upper[j] && self.upper[j] > 0.0 {
                let u = self.upper[j];
                for i in 0..m {
                    self.xb[i] -= self.tab[i * nc + j] * u;
                }
            }
        }
    }

    fn drive_out_artificials(&mut self) {
        let (m, nc, a0) = (self.m, self.nc, self.n_art_start);
        for r in 0..m {
            if self.basis[r] < a0 {
                continue;
            }
            let row = &self.tab[r * nc..r * nc + a0];
            let mut best = NONE;
            let mut best_abs = 1e-9;
            for (j, a) in row.iter().enumerate() {
                if self.basic_row[j] == NONE && self.upper[j] > 0.0 && a.abs() > best_abs {
                    best = j;
                    best_abs = a.abs();
                }
            }
            if best != NONE {
                let leaving = self.basis[r];
                self.pivot(r, best);
                self.basic_row[leaving] = NONE;
                self.at_upper[leaving] = false;
                self.basis[r] = best;
                self.basic_row[best] = r;
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let nc = self.nc;
        let piv = self.tab[r * nc + j];
        for v in &mut self.tab[r * nc..(r + 1) * nc] {
            *v /= piv;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.tab[i * nc + j];
            if f == 0.0 {
                continue;
            }
            for c in 0..nc {
                let rv = self.tab[r * nc + c];
                if rv != 0.0 {
                    self.tab[i * nc + c] -= f * rv;
                }
            }
            self.tab[i * nc + j] = 0.0;
        }
    }

    fn run_phase(&mut self) -> Result<PhaseEnd, LpError> {
        let (m, nc) = (self.m, self.nc);
        let mut bland = false;
        let mut degenerate = 0usize;
        self.duals.resize(m, 0.0);
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            for i in 0..m {
                self.duals[i] = self.cost[self.basis[i]];
            }

            let mut enter = NONE;
            let mut enter_score = 0.0;
            for j in 0..nc {
                if self.basic_row[j] != NONE || self.upper[j] <= 0.0 {
                    continue;
                }
                let mut d = self.cost[j];
                for i in 0..m {
                    d -= self.duals[i] * self.tab[i * nc + j];
                }
                let improving = if self.at_upper[j] { d > OPT_TOL } else { d < -OPT_TOL };
                if improving {
                    if bland {
                        enter = j;
                        break;
                    }
                    if d.abs() > enter_score {
                        enter = j;
                        enter_score = d.abs();
                    }
                }
            }
            if enter == NONE {
                return Ok(PhaseEnd::Optimal);
            }
            self.iterations += 1;

            let j = enter;
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };
            let mut t_min = f64::INFINITY;
            let mut leave = NONE;
            let mut leave_to_upper = false;
            let mut leave_alpha = 0.0f64;
            for i in 0..m {
                let alpha = self.tab[i * nc + j];
                let rate = -dir * alpha;
                let b = self.basis[i];
                let (limit, to_upper) = if rate < -PIVOT_TOL {
                    ((self.xb[i] / -rate).max(0.0), false)
                } else if rate > PIVOT_TOL && self.upper[b].is_finite() {
                    (((self.upper[b] - self.xb[i]) / rate).max(0.0), true)
                } else {
                    continue;
                };
                let better = if leave == NONE || limit < t_min - 1e-12 {
                    true
                } else if limit <= t_min + 1e-12 {
                    if bland {
                        b < self.basis[leave]
                    } else {
                        alpha.abs() > leave_alpha.abs()
                    }
                } else {
                    false
                };
                if better {
                    t_min = limit;
                    leave = i;
                    leave_to_upper = to_upper;
                    leave_alpha = alpha;
                }
            }

            let flip = self.upper[j];
            if leave == NONE && !flip.is_finite() {
                return Ok(PhaseEnd::Unbounded);
            }
            if flip <= t_min {
                for i in 0..m {
                    self.xb[i] += dir * -self.tab[i * nc + j] * flip;
                }
                self.at_upper[j] = !self.at_upper[j];
                degenerate = 0;
                continue;
            }

            let t = t_min;
            for i in 0..m {
                self.xb[i] += dir * -self.tab[i * nc + j] * t;
            }
            let entering_value = if dir > 0.0 { t } else { self.upper[j] - t };
            let leaving = self.basis[leave];
            self.pivot(leave, j);
            self.basic_row[leaving] = NONE;
            self.at_upper[leaving] = leave_to_upper;
            self.basis[leave] = j;
            self.basic_row[j] = leave;
            self.at_upper[j] = false;
            self.xb[leave] = entering_value;

            if t < 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn corner_solution() {
        let mut lp = LinearProgram::minimize(vec![1.0, 0.0]).with_bounds(0.0, 1.0);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(close(s.x[0], 0.0, 1e-12) && close(s.x[1], 1.0, 1e-12));
        assert!(close(s.objective_value, 0.0, 1e-12));
    }

    #[test]
    fn hand_substitution_example() {
        // c2 = (0.95 - 0.9 c1) / 0.1, c2 <= 1 forces c1 >= 0.5; max c1 = 1, c2 = 0.5
        let mut lp = LinearProgram::maximize(vec![1.0, 0.0]).with_bounds(0.0, 1.0);
        lp.add_eq(vec![0.9, 0.1], 0.95);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(close(s.x[0], 1.0, 1e-10) && close(s.x[1], 0.5, 1e-10));
        assert!(close(s.objective_value, 1.0, 1e-10));
    }

    #[test]
    fn contradictory_bound_is_infeasible() {
        let mut lp = LinearProgram::minimize(vec![1.0]).with_bounds(0.0, 1.0);
        lp.add_eq(vec![1.0], 2.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(close(s.infeasibility, 1.0, 1e-10));
    }

    #[test]
    fn unbounded_detected() {
        let mut lp = LinearProgram::maximize(vec![1.0, 1.0]);
        lp.add_le(vec![1.0, -1.0], 1.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_upper_only_variables() {
        // x free, y <= 3: along x + y = 2 the objective is 4 - x
        let mut lp = LinearProgram::minimize(vec![1.0, 2.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        lp.set_bounds(1, f64::NEG_INFINITY, 3.0);
        lp.add_ge(vec![1.0, 1.0], 2.0);
        assert_eq!(solve(&lp).unwrap().status, LpStatus::Unbounded);

        let mut lp = LinearProgram::minimize(vec![1.0, 2.0]);
        lp.set_bounds(0, f64::NEG_INFINITY, 5.0);
        lp.set_bounds(1, f64::NEG_INFINITY, 3.0);
        lp.add_ge(vec![1.0, 1.0], 2.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(close(s.x[0], 5.0, 1e-10) && close(s.x[1], -3.0, 1e-10));
        assert!(close(s.objective_value, -1.0, 1e-10));
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::maximize(vec![1.0, 2.0, 3.0]).with_bounds(0.0, 1.0);
        lp.add_eq(vec![1.0, 1.0, 1.0], 1.0);
        lp.add_eq(vec![2.0, 2.0, 2.0], 2.0);
        lp.add_eq(vec![1.0, 0.0, 0.0], 0.25);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(close(s.objective_value, 0.25 + 3.0 * 0.75, 1e-10));
        assert!(s.residual < 1e-10);
    }

    #[test]
    fn dimension_and_nan_errors() {
        let mut lp = LinearProgram::minimize(vec![1.0, 1.0]);
        lp.add_eq(vec![1.0], 1.0);
        assert!(matches!(solve(&lp), Err(LpError::DimensionMismatch(_))));
        let lp = LinearProgram::minimize(vec![f64::NAN]);
        assert!(matches!(solve(&lp), Err(LpError::NaN(_))));
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example, which cycles under the textbook rule
        let mut lp = LinearProgram::minimize(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let s = solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(close(s.objective_value, -0.05, 1e-10));
    }
}
