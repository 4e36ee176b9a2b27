//! Dense two-phase simplex over exact rationals.
//!
//! Solves `min cᵀx  s.t.  Ax = b, x ≥ 0` with Bland's rule for both the
//! entering and the leaving variable, so the method terminates on the
//! degenerate systems produced by polytope membership problems. Sizes here
//! are tiny (≤ 30 columns, ≤ 17 rows).

use crate::ratio::Ratio;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal { x: Vec<Ratio>, value: Ratio },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn point(&self) -> Option<&[Ratio]> {
        match self {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<Ratio>>,
    rhs: Vec<Ratio>,
    basis: Vec<usize>,
    /// Reduced costs, one per column.
    reduced: Vec<Ratio>,
    /// Current objective value.
    value: Ratio,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c].clone();
        if !piv.is_one() {
            for v in self.rows[r].iter_mut() {
                if !v.is_zero() {
                    *v = &*v / &piv;
                }
            }
            self.rhs[r] = &self.rhs[r] / &piv;
        }
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let factor = self.rows[i][c].clone();
            for (v, p) in self.rows[i].iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &(&factor * p);
                }
            }
            self.rhs[i] -= &(&factor * &pivot_rhs);
        }
        if !self.reduced[c].is_zero() {
            let factor = self.reduced[c].clone();
            for (v, p) in self.reduced.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &(&factor * p);
                }
            }
            self.value += &(&factor * &pivot_rhs);
        }
        self.basis[r] = c;
    }

    /// Runs Bland's-rule iterations over columns `< allowed`. Returns `false`
    /// if the objective is unbounded below.
    fn optimize(&mut self, allowed: usize) -> bool {
        loop {
            let Some(enter) = (0..allowed).find(|&j| self.reduced[j].is_negative()) else {
                return true;
            };
            let mut leave: Option<(usize, Ratio)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][enter];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rhs[i] / a;
                let better = match &leave {
                    None => true,
                    Some((best_i, best)) => ratio < *best || (ratio == *best && self.basis[i] < self.basis[*best_i]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                Some((i, _)) => self.pivot(i, enter),
                None => return false,
            }
        }
    }
}

/// Minimizes `cost · x` subject to `a x = b`, `x ≥ 0`.
pub fn minimize(a: &[Vec<Ratio>], b: &[Ratio], cost: &[Ratio]) -> LpOutcome {
    let m = a.len();
    let n = cost.len();
    assert_eq!(b.len(), m, "rhs length");
    assert!(a.iter().all(|row| row.len() == n), "ragged constraint matrix");

    // Phase one: artificial column n + i for row i, rows scaled so b ≥ 0.
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for (i, (row, bi)) in a.iter().zip(b).enumerate() {
        let flip = bi.is_negative();
        let mut full: Vec<Ratio> = row.iter().map(|v| if flip { -v } else { v.clone() }).collect();
        full.extend((0..m).map(|k| if k == i { Ratio::one() } else { Ratio::zero() }));
        rows.push(full);
        rhs.push(if flip { -bi } else { bi.clone() });
    }
    let mut reduced = vec![Ratio::zero(); n + m];
    for j in 0..n {
        reduced[j] = -rows.iter().map(|r| &r[j]).sum::<Ratio>();
    }
    let value: Ratio = rhs.iter().sum();
    let mut t = Tableau { rows, rhs, basis: (n..n + m).collect(), reduced, value };
    // The phase-one objective is bounded below by zero.
    t.optimize(n);
    if !t.value.is_zero() {
        return LpOutcome::Infeasible;
    }

    // Drive zero-level artificials out of the basis; drop redundant rows.
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| !t.rows[i][j].is_zero()) {
                t.pivot(i, j);
            } else {
                t.rows.remove(i);
                t.rhs.remove(i);
                t.basis.remove(i);
                continue;
            }
        }
        i += 1;
    }

    // Phase two.
    let mut reduced = vec![Ratio::zero(); n + m];
    for j in 0..n {
        let mut r = cost[j].clone();
        for (row, &bj) in t.rows.iter().zip(&t.basis) {
            if !row[j].is_zero() && !cost[bj].is_zero() {
                r -= &(&cost[bj] * &row[j]);
            }
        }
        reduced[j] = r;
    }
    t.reduced = reduced;
    t.value = t.basis.iter().zip(&t.rhs).map(|(&bj, v)| &cost[bj] * v).sum();
    if !t.optimize(n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![Ratio::zero(); n];
    for (&bj, v) in t.basis.iter().zip(&t.rhs) {
        x[bj] = v.clone();
    }
    LpOutcome::Optimal { x, value: t.value }
}

/// A point of `{x ≥ 0 : a x = b}`, if any.
pub fn feasible_point(a: &[Vec<Ratio>], b: &[Ratio]) -> Option<Vec<Ratio>> {
    let n = a.first().map_or(0, Vec::len);
    match minimize(a, b, &vec![Ratio::zero(); n]) {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}

/// Convex weights `w` with `Σ w_i points_i = target`, `w ≥ 0`, `Σ w = 1`.
pub fn convex_weights(points: &[Vec<Ratio>], target: &[Ratio]) -> Option<Vec<Ratio>> {
    let dim = target.len();
    assert!(points.iter().all(|p| p.len() == dim));
    let mut a: Vec<Vec<Ratio>> = (0..dim).map(|k| points.iter().map(|p| p[k].clone()).collect()).collect();
    a.push(vec![Ratio::one(); points.len()]);
    let mut b = target.to_vec();
    b.push(Ratio::one());
    feasible_point(&a, &b)
}
