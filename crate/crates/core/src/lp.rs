//! Dense two-phase simplex for small linear programs.
//!
//! Solves `maximize c·x  s.t.  G x <= h, x >= 0` with Bland's pivoting rule.
//! Right-hand sides may be negative; those rows get artificial variables and
//! are handled in phase one. Problems here have a handful of variables and
//! rows, so a dense tableau is the right tool.

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpStatus {
    Optimal { x: Vec<f64>, value: f64 },
    Unbounded,
}

/// Tableau state after a successful phase one. Clone it to run several
/// objectives from the same feasible basis.
#[derive(Debug, Clone)]
pub(crate) struct FeasibleTableau {
    n_vars: usize,
    /// Total structural columns (original + slack + artificial).
    n_cols: usize,
    /// Row-major, each row has `n_cols + 1` entries; the last one is the rhs.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Columns allowed to enter the basis in phase two.
    allowed: Vec<bool>,
}

/// Runs phase one. Returns `None` if the constraint set is infeasible beyond
/// `feas_tol` (measured as the summed violation of the rows).
pub(crate) fn phase_one(g: &[Vec<f64>], h: &[f64], feas_tol: f64) -> Option<FeasibleTableau> {
    let m = g.len();
    let n = g.first().map_or(0, Vec::len);
    let n_art = h.iter().filter(|&&v| v < 0.0).count();
    let n_cols = n + m + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art_col = n + m;
    for (i, (gi, &hi)) in g.iter().zip(h).enumerate() {
        let mut row = vec![0.0; n_cols + 1];
        if hi >= 0.0 {
            row[..n].copy_from_slice(gi);
            row[n + i] = 1.0;
            row[n_cols] = hi;
            basis.push(n + i);
        } else {
            for (dst, src) in row[..n].iter_mut().zip(gi) {
                *dst = -src;
            }
            row[n + i] = -1.0;
            row[art_col] = 1.0;
            row[n_cols] = -hi;
            basis.push(art_col);
            art_col += 1;
        }
        rows.push(row);
    }
    let mut allowed = vec![true; n_cols];
    for a in allowed.iter_mut().skip(n + m) {
        *a = false;
    }
    let mut tab = FeasibleTableau {
        n_vars: n,
        n_cols,
        rows,
        basis,
        allowed: vec![true; n_cols],
    };
    if n_art > 0 {
        let mut cost = vec![0.0; n_cols];
        for c in cost.iter_mut().skip(n + m) {
            *c = -1.0;
        }
        // Phase one objective is bounded above by zero.
        let value = match tab.optimize(&cost) {
            LpStatus::Optimal { value, .. } => value,
            LpStatus::Unbounded => return None,
        };
        if value < -feas_tol {
            return None;
        }
        tab.evict_artificials(n + m);
    }
    tab.allowed = allowed;
    Some(tab)
}

impl FeasibleTableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.n_cols + 1;
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for k in 0..width {
                    row[k] -= f * pivot_row[k];
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Pivots artificial variables out of the basis after phase one, dropping
    /// rows that turn out to be redundant.
    fn evict_artificials(&mut self, first_art: usize) {
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= first_art {
                let entering = (0..first_art).find(|&j| self.rows[r][j].abs() > PIVOT_TOL);
                match entering {
                    Some(j) => {
                        self.pivot(r, j);
                        r += 1;
                    }
                    None => {
                        self.rows.swap_remove(r);
                        self.basis.swap_remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
    }

    /// Maximizes `cost · columns` from the current basis.
    fn optimize(&mut self, cost: &[f64]) -> LpStatus {
        let rhs = self.n_cols;
        // Reduced-cost row: d_j = c_B B^-1 A_j - c_j; optimal when all d_j >= 0.
        let mut reduced: Vec<f64> = cost.iter().map(|c| -c).collect();
        let mut value = 0.0;
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for j in 0..self.n_cols {
                    reduced[j] += cb * row[j];
                }
                value += cb * row[rhs];
            }
        }
        loop {
            let entering =
                (0..self.n_cols).find(|&j| self.allowed[j] && reduced[j] < -COST_TOL);
            let Some(c) = entering else {
                break;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_TOL {
                    let ratio = row[rhs].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr || (ratio == lr && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return LpStatus::Unbounded;
            };
            self.pivot(r, c);
            let f = reduced[c];
            let row = &self.rows[r];
            for j in 0..self.n_cols {
                reduced[j] -= f * row[j];
            }
            reduced[c] = 0.0;
            value -= f * row[rhs];
        }
        let mut x = vec![0.0; self.n_vars];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < self.n_vars {
                x[b] = row[rhs];
            }
        }
        LpStatus::Optimal { x, value }
    }

    /// Maximizes `c · x` over the original variables.
    pub(crate) fn maximize(&self, c: &[f64]) -> LpStatus {
        let mut cost = vec![0.0; self.n_cols];
        cost[..self.n_vars].copy_from_slice(c);
        self.clone().optimize(&cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(g: &[Vec<f64>], h: &[f64], c: &[f64]) -> Option<LpStatus> {
        phase_one(g, h, 1e-9).map(|t| t.maximize(c))
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let g = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]];
        let h = [4.0, 12.0, 18.0];
        match solve(&g, &h, &[3.0, 5.0]).unwrap() {
            LpStatus::Optimal { x, value } => {
                assert!((x[0] - 2.0).abs() < 1e-12);
                assert!((x[1] - 6.0).abs() < 1e-12);
                assert!((value - 36.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // x + y >= 1 written as -x - y <= -1, x <= 2, y <= 2; min x -> 0 with y = 1.
        let g = vec![vec![-1.0, -1.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let h = [-1.0, 2.0, 2.0];
        match solve(&g, &h, &[-1.0, 0.0]).unwrap() {
            LpStatus::Optimal { x, .. } => assert!(x[0].abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        match solve(&g, &h, &[1.0, 1.0]).unwrap() {
            LpStatus::Optimal { value, .. } => assert!((value - 4.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infeasible_detected() {
        // x >= 3 and x <= 1
        let g = vec![vec![-1.0], vec![1.0]];
        assert!(solve(&g, &[-3.0, 1.0], &[1.0]).is_none());
    }

    #[test]
    fn unbounded_detected() {
        let g = vec![vec![-1.0, 1.0]];
        assert_eq!(solve(&g, &[1.0], &[1.0, 0.0]), Some(LpStatus::Unbounded));
    }

    #[test]
    fn degenerate_equality_pair() {
        // x + y <= 1 and x + y >= 1 with box [0,1]^2: max x = 1, min x = 0.
        let g = vec![
            vec![1.0, 1.0],
            vec![-1.0, -1.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ];
        let h = [1.0, -1.0, 1.0, 1.0];
        let t = phase_one(&g, &h, 1e-9).unwrap();
        match t.maximize(&[1.0, 0.0]) {
            LpStatus::Optimal { value, .. } => assert!((value - 1.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        match t.maximize(&[-1.0, 0.0]) {
            LpStatus::Optimal { value, .. } => assert!(value.abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }
}
