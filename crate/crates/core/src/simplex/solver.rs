use std::time::Instant;

use super::basis::{initial_slack_basis, nonbasic_value, Basis, VarStatus};
use super::lu::DenseLu;
use super::{BasicSolution, Pricing, SolveMetrics, SolveStatus, SolverConfig, MAX_INF_GATE};
use crate::lp::{to_standard_form, LpInstance, StandardFormLp};

/// Drift in `B x_B` against the nonbasic-adjusted rhs that forces a refactor.
const ACCURACY_LIMIT: f64 = 1e-7;
/// Relative width of a pricing or ratio tie.
const TIE_EPS: f64 = 1e-9;
/// Recovery attempts when the final point misses the accuracy gate.
const MAX_CLEANUPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PhaseEnd {
    Optimal,
    Unbounded,
    IterationLimit,
    Singular,
}

struct Workspace<'a> {
    sf: &'a StandardFormLp,
    cfg: &'a SolverConfig,
    m: usize,
    basis: Basis,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    /// Row-major dense basis inverse.
    binv: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    degenerate_streak: usize,
    // scratch
    y: Vec<f64>,
    alpha: Vec<f64>,
}

impl<'a> Workspace<'a> {
    fn new(sf: &'a StandardFormLp, cfg: &'a SolverConfig) -> Self {
        let basis = initial_slack_basis(sf);
        let m = sf.num_rows();
        let mut lower = sf.lower.clone();
        let mut upper = sf.upper.clone();
        lower.extend(basis.artificials.iter().map(|_| 0.0));
        upper.extend(basis.artificials.iter().map(|_| f64::INFINITY));
        let total = lower.len();
        let mut x = vec![0.0; total];
        for j in 0..total {
            x[j] = nonbasic_value(basis.status[j], lower[j], upper[j]);
        }
        Self {
            sf,
            cfg,
            m,
            basis,
            lower,
            upper,
            cost: vec![0.0; total],
            x,
            binv: Vec::new(),
            since_refactor: 0,
            iterations: 0,
            degenerate_streak: 0,
            y: vec![0.0; m],
            alpha: vec![0.0; m],
        }
    }

    fn total_cols(&self) -> usize {
        self.lower.len()
    }

    fn for_each_entry(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.basis.num_columns {
            for (i, v) in self.sf.matrix.column_iter(j) {
                f(i, v);
            }
        } else {
            let a = self.basis.artificials[j - self.basis.num_columns];
            f(a.row, a.sign);
        }
    }

    /// `b - A_N x_N`.
    fn nonbasic_rhs(&self) -> Vec<f64> {
        let mut r = self.sf.rhs.clone();
        for j in 0..self.total_cols() {
            if self.basis.status[j] != VarStatus::Basic {
                let v = self.x[j];
                if v != 0.0 {
                    self.for_each_entry(j, |i, a| r[i] -= a * v);
                }
            }
        }
        r
    }

    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut dense = vec![0.0; m * m];
        for (k, &col) in self.basis.basic.iter().enumerate() {
            self.for_each_entry(col, |i, a| dense[i * m + k] = a);
        }
        let lu = match DenseLu::factor(dense, m, self.cfg.pivot_tolerance) {
            Ok(lu) => lu,
            Err(_) => return false,
        };
        self.binv = lu.inverse();
        self.since_refactor = 0;
        let r = self.nonbasic_rhs();
        let xb = lu.solve(&r);
        for (k, &col) in self.basis.basic.iter().enumerate() {
            self.x[col] = xb[k];
        }
        true
    }

    fn basis_drift(&self) -> f64 {
        let mut r = self.nonbasic_rhs();
        for &col in &self.basis.basic {
            let v = self.x[col];
            self.for_each_entry(col, |i, a| r[i] -= a * v);
        }
        r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    fn compute_duals(&mut self) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &col) in self.basis.basic.iter().enumerate() {
            let cb = self.cost[col];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yr, b) in self.y.iter_mut().zip(row) {
                    *yr += cb * b;
                }
            }
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        let mut d = self.cost[j];
        self.for_each_entry(j, |i, a| d -= self.y[i] * a);
        d
    }

    /// Columns that may enter in the current phase.
    fn priceable(&self, j: usize, phase: Phase) -> bool {
        if self.basis.status[j] == VarStatus::Basic || self.lower[j] == self.upper[j] {
            return false;
        }
        !(phase == Phase::Two && self.basis.is_artificial(j))
    }

    /// Improvement score and direction (+1 increase, -1 decrease) for `j`.
    fn improving(&self, j: usize, d: f64) -> Option<(f64, f64)> {
        let tol = self.cfg.dual_tolerance;
        match self.basis.status[j] {
            VarStatus::AtLower if d < -tol => Some((-d, 1.0)),
            VarStatus::AtUpper if d > tol => Some((d, -1.0)),
            VarStatus::Free if d.abs() > tol => Some((d.abs(), -d.signum())),
            _ => None,
        }
    }

    fn choose_entering(&self, phase: Phase, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.total_cols() {
            if !self.priceable(j, phase) {
                continue;
            }
            let d = self.reduced_cost(j);
            let Some((score, dir)) = self.improving(j, d) else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            match best {
                Some((_, s, _)) if score <= s + TIE_EPS * s.max(1.0) => {}
                _ => best = Some((j, score, dir)),
            }
        }
        best.map(|(j, _, dir)| (j, dir))
    }

    fn compute_alpha(&mut self, q: usize) {
        let m = self.m;
        let mut entries = Vec::new();
        self.for_each_entry(q, |i, a| entries.push((i, a)));
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.alpha[i] = entries.iter().map(|&(r, a)| row[r] * a).sum();
        }
    }

    /// Returns the blocking basis position (with the bound it hits) and the step.
    fn ratio_test(&self, dir: f64, bland: bool) -> Option<(usize, bool, f64)> {
        let ptol = self.cfg.pivot_tolerance;
        let mut best: Option<(usize, bool, f64, f64)> = None;
        for (i, &col) in self.basis.basic.iter().enumerate() {
            let a = self.alpha[i];
            if a.abs() <= ptol {
                continue;
            }
            let rate = -dir * a;
            let (ratio, to_upper) = if rate < 0.0 {
                if !self.lower[col].is_finite() {
                    continue;
                }
                ((self.x[col] - self.lower[col]) / -rate, false)
            } else {
                if !self.upper[col].is_finite() {
                    continue;
                }
                ((self.upper[col] - self.x[col]) / rate, true)
            };
            let ratio = ratio.max(0.0);
            let replace = match best {
                None => true,
                Some((bi, _, br, ba)) => {
                    let width = TIE_EPS * br.max(1.0) * 1e-3;
                    if ratio < br - width {
                        true
                    } else if ratio <= br + width {
                        let bcol = self.basis.basic[bi];
                        if bland {
                            col < bcol
                        } else if a.abs() > ba * (1.0 + TIE_EPS) {
                            true
                        } else {
                            a.abs() >= ba * (1.0 - TIE_EPS) && col < bcol
                        }
                    } else {
                        false
                    }
                }
            };
            if replace {
                best = Some((i, to_upper, ratio, a.abs()));
            }
        }
        best.map(|(i, up, r, _)| (i, up, r))
    }

    fn pivot(&mut self, q: usize, dir: f64, leave: usize, to_upper: bool, step: f64) {
        let m = self.m;
        self.x[q] += dir * step;
        for i in 0..m {
            let col = self.basis.basic[i];
            self.x[col] -= dir * step * self.alpha[i];
        }
        let out = self.basis.basic[leave];
        self.x[out] = if to_upper { self.upper[out] } else { self.lower[out] };
        self.basis.status[out] = if to_upper && self.lower[out] != self.upper[out] {
            VarStatus::AtUpper
        } else {
            VarStatus::AtLower
        };
        self.basis.basic[leave] = q;
        self.basis.status[q] = VarStatus::Basic;

        let p = leave;
        let inv_piv = 1.0 / self.alpha[p];
        let prow: Vec<f64> = self.binv[p * m..(p + 1) * m].iter().map(|v| v * inv_piv).collect();
        for i in 0..m {
            let f = self.alpha[i];
            if i == p || f == 0.0 {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for (r, pv) in row.iter_mut().zip(&prow) {
                *r -= f * pv;
            }
        }
        self.binv[p * m..(p + 1) * m].copy_from_slice(&prow);
        self.since_refactor += 1;
    }

    fn artificial_mass(&self) -> f64 {
        (self.basis.num_columns..self.total_cols())
            .map(|j| self.x[j].abs())
            .sum()
    }

    fn run_phase(&mut self, phase: Phase, counter: &mut usize) -> PhaseEnd {
        let mut bland = self.cfg.pricing == Pricing::Bland;
        loop {
            if phase == Phase::One && self.artificial_mass() <= 1e-12 {
                return PhaseEnd::Optimal;
            }
            if self.iterations >= self.cfg.iteration_limit {
                return PhaseEnd::IterationLimit;
            }
            self.compute_duals();
            let Some((q, dir)) = self.choose_entering(phase, bland) else {
                return PhaseEnd::Optimal;
            };
            self.compute_alpha(q);
            let block = self.ratio_test(dir, bland);
            let flip = self.upper[q] - self.lower[q];
            let flips = flip.is_finite() && block.map_or(true, |(_, _, r)| flip <= r);
            let step = if flips {
                let step = flip;
                self.x[q] += dir * step;
                for i in 0..self.m {
                    let col = self.basis.basic[i];
                    self.x[col] -= dir * step * self.alpha[i];
                }
                self.basis.status[q] = if dir > 0.0 {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
                self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                step
            } else if let Some((leave, to_upper, step)) = block {
                self.pivot(q, dir, leave, to_upper, step);
                step
            } else {
                return PhaseEnd::Unbounded;
            };
            self.iterations += 1;
            *counter += 1;

            if step <= 0.0 {
                self.degenerate_streak += 1;
                if self.degenerate_streak >= self.cfg.bland_stall_threshold {
                    bland = true;
                }
            } else {
                self.degenerate_streak = 0;
                bland = self.cfg.pricing == Pricing::Bland;
            }

            if self.since_refactor >= self.cfg.refactor_interval
                || self.basis_drift() > ACCURACY_LIMIT
            {
                if !self.refactor() {
                    return PhaseEnd::Singular;
                }
            }
        }
    }

    fn enter_phase_two(&mut self) {
        let n = self.basis.num_columns;
        for j in n..self.total_cols() {
            self.lower[j] = 0.0;
            self.upper[j] = 0.0;
            if self.basis.status[j] != VarStatus::Basic {
                self.x[j] = 0.0;
                self.basis.status[j] = VarStatus::AtLower;
            }
        }
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        self.cost[..n].copy_from_slice(&self.sf.objective);
        self.degenerate_streak = 0;
    }

    /// (primal infeasibility, dual infeasibility) of the current point.
    fn infeasibility(&mut self, phase: Phase) -> (f64, f64) {
        let n = self.basis.num_columns;
        let mut r = self.sf.rhs.clone();
        for j in 0..n {
            let v = self.x[j];
            if v != 0.0 {
                for (i, a) in self.sf.matrix.column_iter(j) {
                    r[i] -= a * v;
                }
            }
        }
        let mut primal = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        for j in 0..n {
            primal = primal
                .max(self.lower[j] - self.x[j])
                .max(self.x[j] - self.upper[j]);
        }
        for j in n..self.total_cols() {
            primal = primal.max(self.x[j].abs());
        }
        self.compute_duals();
        let mut dual = 0.0f64;
        for j in 0..self.total_cols() {
            if phase == Phase::Two && self.basis.is_artificial(j) {
                continue;
            }
            let d = self.reduced_cost(j);
            let v = match self.basis.status[j] {
                VarStatus::Basic => d.abs(),
                _ if self.lower[j] == self.upper[j] => 0.0,
                VarStatus::AtLower => (-d).max(0.0),
                VarStatus::AtUpper => d.max(0.0),
                VarStatus::Free => d.abs(),
            };
            dual = dual.max(v);
        }
        (primal, dual)
    }
}

/// Solves `lp` with the two-phase bounded revised simplex.
///
/// Never fails: problems are reported through [`SolveMetrics::status`].
pub fn solve(lp: &LpInstance, cfg: &SolverConfig) -> (BasicSolution, SolveMetrics) {
    let sf = to_standard_form(lp);
    let mut ws = Workspace::new(&sf, cfg);
    let start = Instant::now();
    let mut p1 = 0usize;
    let mut p2 = 0usize;

    let status = 'solve: {
        if !ws.refactor() {
            break 'solve SolveStatus::NumericalTrouble;
        }
        if !ws.basis.artificials.is_empty() {
            for j in ws.basis.num_columns..ws.total_cols() {
                ws.cost[j] = 1.0;
            }
            match ws.run_phase(Phase::One, &mut p1) {
                PhaseEnd::Optimal => {}
                PhaseEnd::IterationLimit => break 'solve SolveStatus::IterationLimit,
                PhaseEnd::Singular | PhaseEnd::Unbounded => {
                    break 'solve SolveStatus::NumericalTrouble
                }
            }
            if ws.artificial_mass() > cfg.primal_tolerance {
                break 'solve SolveStatus::Infeasible;
            }
        }
        ws.enter_phase_two();
        let mut cleanups = 0;
        loop {
            match ws.run_phase(Phase::Two, &mut p2) {
                PhaseEnd::Optimal => {}
                PhaseEnd::Unbounded => break 'solve SolveStatus::Unbounded,
                PhaseEnd::IterationLimit => break 'solve SolveStatus::IterationLimit,
                PhaseEnd::Singular => break 'solve SolveStatus::NumericalTrouble,
            }
            if !ws.refactor() {
                break 'solve SolveStatus::NumericalTrouble;
            }
            let (primal, dual) = ws.infeasibility(Phase::Two);
            if primal.max(dual) <= MAX_INF_GATE {
                break 'solve SolveStatus::Optimal;
            }
            cleanups += 1;
            if cleanups >= MAX_CLEANUPS {
                break 'solve SolveStatus::NumericalTrouble;
            }
            log::debug!("final point misses accuracy gate (primal {primal:e}, dual {dual:e}); resuming");
        }
    };
    let solve_time = start.elapsed().as_secs_f64();

    let phase = if ws.cost[..sf.num_cols()] == sf.objective[..] {
        Phase::Two
    } else {
        Phase::One
    };
    let (primal_inf, dual_inf) = if ws.binv.len() == ws.m * ws.m {
        ws.infeasibility(phase)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let n = sf.num_cols();
    let x = ws.x[..n].to_vec();
    let objective = lp.objective_value(&x[..lp.num_cols()]);
    let metrics = SolveMetrics {
        status,
        iterations: ws.iterations,
        phase1_iterations: p1,
        phase2_iterations: p2,
        solve_time,
        max_inf: primal_inf.max(dual_inf),
        primal_inf,
        dual_inf,
    };
    let solution = BasicSolution {
        x,
        objective,
        basis: ws.basis,
        num_original: lp.num_cols(),
    };
    (solution, metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{LpBuilder, RowSense};

    fn toy() -> LpInstance {
        // min -x - y  s.t. x + y <= 4, x <= 2, y <= 3
        let mut b = LpBuilder::new("toy");
        let x = b.add_col("x", -1.0, 0.0, f64::INFINITY);
        let y = b.add_col("y", -1.0, 0.0, f64::INFINITY);
        b.add_row("c0", RowSense::Le, 4.0, &[(x, 1.0), (y, 1.0)]);
        b.add_row("c1", RowSense::Le, 2.0, &[(x, 1.0)]);
        b.add_row("c2", RowSense::Le, 3.0, &[(y, 1.0)]);
        b.build().unwrap()
    }

    #[test]
    fn toy_optimum() {
        let (sol, met) = solve(&toy(), &SolverConfig::default());
        assert_eq!(met.status, SolveStatus::Optimal);
        assert!((sol.objective + 4.0).abs() < 1e-9);
        assert!(met.max_inf <= MAX_INF_GATE);
        assert_eq!(met.phase1_iterations, 0);
        assert!(met.iterations >= 2);
    }

    #[test]
    fn infeasible_bounds() {
        let mut b = LpBuilder::new("inf");
        let x = b.add_col("x", 1.0, 0.0, f64::INFINITY);
        b.add_row("c", RowSense::Le, -1.0, &[(x, 1.0)]);
        let (_, met) = solve(&b.build().unwrap(), &SolverConfig::default());
        assert_eq!(met.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_without_rows() {
        let mut b = LpBuilder::new("unb");
        b.add_col("x", -1.0, 0.0, f64::INFINITY);
        let (_, met) = solve(&b.build().unwrap(), &SolverConfig::default());
        assert_eq!(met.status, SolveStatus::Unbounded);
    }

    #[test]
    fn unbounded_with_rows() {
        let mut b = LpBuilder::new("unb2");
        let x = b.add_col("x", -1.0, 0.0, f64::INFINITY);
        let y = b.add_col("y", 0.0, 0.0, f64::INFINITY);
        b.add_row("c", RowSense::Ge, 1.0, &[(x, 1.0), (y, 1.0)]);
        let (_, met) = solve(&b.build().unwrap(), &SolverConfig::default());
        assert_eq!(met.status, SolveStatus::Unbounded);
    }

    #[test]
    fn equality_rows_need_phase_one() {
        // min x + 2y s.t. x + y = 3, x - y = 1  ->  x = 2, y = 1
        let mut b = LpBuilder::new("eq");
        let x = b.add_col("x", 1.0, 0.0, f64::INFINITY);
        let y = b.add_col("y", 2.0, 0.0, f64::INFINITY);
        b.add_row("a", RowSense::Eq, 3.0, &[(x, 1.0), (y, 1.0)]);
        b.add_row("b", RowSense::Eq, 1.0, &[(x, 1.0), (y, -1.0)]);
        let (sol, met) = solve(&b.build().unwrap(), &SolverConfig::default());
        assert_eq!(met.status, SolveStatus::Optimal);
        assert!(met.phase1_iterations >= 1);
        assert!((sol.original_x()[0] - 2.0).abs() < 1e-9);
        assert!((sol.original_x()[1] - 1.0).abs() < 1e-9);
        let art: f64 = sol.basis.basic.iter().filter(|&&c| sol.basis.is_artificial(c)).count() as f64;
        assert!(art <= 2.0);
    }

    #[test]
    fn free_and_boxed_variables() {
        // min -x + y, -1 <= y, x free, x - y <= 1, x + y <= 3, x in [-5, 5]
        let mut b = LpBuilder::new("box");
        let x = b.add_col("x", -1.0, f64::NEG_INFINITY, f64::INFINITY);
        let y = b.add_col("y", 1.0, -1.0, 10.0);
        b.add_row("a", RowSense::Le, 1.0, &[(x, 1.0), (y, -1.0)]);
        b.add_row("b", RowSense::Le, 3.0, &[(x, 1.0), (y, 1.0)]);
        let (sol, met) = solve(&b.build().unwrap(), &SolverConfig::default());
        assert_eq!(met.status, SolveStatus::Optimal);
        // x = 1 + y, objective -1 - y + y = -1 along the edge; any y in [-1, 1]
        assert!((sol.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities() {
        let mut b = LpBuilder::new("red");
        let x = b.add_col("x", 1.0, 0.0, f64::INFINITY);
        let y = b.add_col("y", 1.0, 0.0, f64::INFINITY);
        b.add_row("a", RowSense::Eq, 2.0, &[(x, 1.0), (y, 1.0)]);
        b.add_row("b", RowSense::Eq, 4.0, &[(x, 2.0), (y, 2.0)]);
        let (sol, met) = solve(&b.build().unwrap(), &SolverConfig::default());
        assert_eq!(met.status, SolveStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn bland_pricing_agrees() {
        let cfg = SolverConfig {
            pricing: Pricing::Bland,
            ..Default::default()
        };
        let (sol, met) = solve(&toy(), &cfg);
        assert_eq!(met.status, SolveStatus::Optimal);
        assert!((sol.objective + 4.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_limit_reported() {
        let cfg = SolverConfig {
            iteration_limit: 1,
            ..Default::default()
        };
        let (_, met) = solve(&toy(), &cfg);
        assert_eq!(met.status, SolveStatus::IterationLimit);
        assert_eq!(met.iterations, 1);
    }

    #[test]
    fn repeated_solves_are_identical() {
        let lp = toy();
        let cfg = SolverConfig::default();
        let (a, ma) = solve(&lp, &cfg);
        let (b, mb) = solve(&lp, &cfg);
        assert_eq!(ma.iterations, mb.iterations);
        assert_eq!(
            a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.basis, b.basis);
    }
}
