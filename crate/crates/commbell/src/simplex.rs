//! Phase-1 simplex for local-polytope membership.
//!
//! The membership program asks for weights `w >= 0` over all deterministic
//! local strategy pairs (a: X -> {0,1}) x (b: Y -> {0,1}) with
//! `sum_s w_s D_s = p` entrywise and `sum_s w_s = 1`. Columns are never
//! materialized: a strategy's column has a single 1 per setting pair, so
//! pricing decomposes over Bob's strategy mask with a greedy choice of
//! Alice's answer per input.
//!
//! Phase-1 minimizes the artificial mass. Optimum zero yields the weights;
//! a positive optimum yields the dual vector, which is a functional
//! nonpositive (up to tolerance) on every deterministic box but positive on
//! the target - an explicit separating witness.

const ENTER_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const RATIO_TIE_TOL: f64 = 1e-12;
const REFACTOR_EVERY: usize = 64;
const STALL_LIMIT: usize = 64;
const MAX_ITERS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BasisVar {
    Strategy { amask: u64, bmask: u64 },
    Artificial(usize),
}

pub(crate) enum LpOutcome {
    Feasible {
        /// (alice mask, bob mask, weight), weights summing to 1.
        weights: Vec<(u64, u64, f64)>,
        residual: f64,
    },
    Infeasible {
        /// Dual vector, one entry per row (box entries then total weight).
        duals: Vec<f64>,
        residual: f64,
    },
}

struct Lp {
    nx: usize,
    ny: usize,
    m: usize,
    b: Vec<f64>,
    basis: Vec<BasisVar>,
    /// Row-major m x m inverse of the basis matrix.
    binv: Vec<f64>,
    xb: Vec<f64>,
}

fn row_of(x: usize, y: usize, a: usize, b: usize, ny: usize) -> usize {
    ((x * ny + y) * 2 + a) * 2 + b
}

/// Row indices of a strategy column (all carrying coefficient 1).
fn column_rows(amask: u64, bmask: u64, nx: usize, ny: usize, m: usize) -> Vec<usize> {
    let mut rows = Vec::with_capacity(nx * ny + 1);
    for x in 0..nx {
        let a = ((amask >> x) & 1) as usize;
        for y in 0..ny {
            let b = ((bmask >> y) & 1) as usize;
            rows.push(row_of(x, y, a, b, ny));
        }
    }
    rows.push(m - 1);
    rows
}

/// `max_s duals . A_s` over every strategy column, computed exactly by the
/// per-Bob-mask greedy decomposition.
pub(crate) fn max_over_strategies(nx: usize, ny: usize, duals: &[f64]) -> f64 {
    best_strategy(nx, ny, duals).0
}

fn best_strategy(nx: usize, ny: usize, duals: &[f64]) -> (f64, u64, u64) {
    let m = duals.len();
    let mut best = f64::NEG_INFINITY;
    let mut best_masks = (0u64, 0u64);
    for bmask in 0..(1u64 << ny) {
        let mut total = duals[m - 1];
        let mut amask = 0u64;
        for x in 0..nx {
            let mut t = [0.0f64; 2];
            for (a, slot) in t.iter_mut().enumerate() {
                for y in 0..ny {
                    let b = ((bmask >> y) & 1) as usize;
                    *slot += duals[row_of(x, y, a, b, ny)];
                }
            }
            if t[1] > t[0] {
                amask |= 1 << x;
                total += t[1];
            } else {
                total += t[0];
            }
        }
        if total > best {
            best = total;
            best_masks = (amask, bmask);
        }
    }
    (best, best_masks.0, best_masks.1)
}

impl Lp {
    fn new(nx: usize, ny: usize, p: &[f64]) -> Lp {
        let m = nx * ny * 4 + 1;
        let mut b: Vec<f64> = p.iter().map(|&v| v.max(0.0)).collect();
        b.push(1.0);
        let basis = (0..m).map(BasisVar::Artificial).collect();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let xb = b.clone();
        Lp {
            nx,
            ny,
            m,
            b,
            basis,
            binv,
            xb,
        }
    }

    fn duals(&self) -> Vec<f64> {
        // y = c_B^T B^-1 with artificial costs 1, strategy costs 0
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, var) in self.basis.iter().enumerate() {
            if matches!(var, BasisVar::Artificial(_)) {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yj, rj) in y.iter_mut().zip(row) {
                    *yj += rj;
                }
            }
        }
        y
    }

    fn objective(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(v, _)| matches!(v, BasisVar::Artificial(_)))
            .map(|(_, &x)| x.max(0.0))
            .sum()
    }

    /// Lowest-index strategy column with positive score, for Bland's rule.
    fn first_improving(&self, y: &[f64]) -> Option<(u64, u64)> {
        for amask in 0..(1u64 << self.nx) {
            for bmask in 0..(1u64 << self.ny) {
                let rows = column_rows(amask, bmask, self.nx, self.ny, self.m);
                let score: f64 = rows.iter().map(|&r| y[r]).sum();
                if score > ENTER_TOL {
                    return Some((amask, bmask));
                }
            }
        }
        None
    }

    fn variable_index(&self, var: BasisVar) -> u64 {
        match var {
            BasisVar::Strategy { amask, bmask } => amask << self.ny | bmask,
            BasisVar::Artificial(j) => (1u64 << (self.nx + self.ny)) + j as u64,
        }
    }

    /// Pivot the strategy column in; returns false when the ratio test
    /// finds no admissible row.
    fn pivot_in(&mut self, amask: u64, bmask: u64, bland: bool) -> bool {
        let m = self.m;
        let rows = column_rows(amask, bmask, self.nx, self.ny, m);
        // d = B^-1 a_s; the column is an indicator vector over `rows`
        let mut d = vec![0.0; m];
        for (i, di) in d.iter_mut().enumerate() {
            let row = &self.binv[i * m..(i + 1) * m];
            *di = rows.iter().map(|&r| row[r]).sum();
        }
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for (i, &di) in d.iter().enumerate() {
            if di > PIVOT_TOL {
                let ratio = self.xb[i].max(0.0) / di;
                let replace = match leave {
                    None => true,
                    Some(cur) => {
                        if ratio < best_ratio - RATIO_TIE_TOL {
                            true
                        } else if ratio <= best_ratio + RATIO_TIE_TOL {
                            if bland {
                                self.variable_index(self.basis[i])
                                    < self.variable_index(self.basis[cur])
                            } else {
                                false
                            }
                        } else {
                            false
                        }
                    }
                };
                if replace {
                    leave = Some(i);
                    best_ratio = ratio;
                }
            }
        }
        let Some(r) = leave else {
            return false;
        };
        let pivot = d[r];
        let t = self.xb[r].max(0.0) / pivot;
        // eta update of B^-1 and the basic solution
        let pivot_row: Vec<f64> = self.binv[r * m..(r + 1) * m]
            .iter()
            .map(|v| v / pivot)
            .collect();
        for (i, &factor) in d.iter().enumerate() {
            if i == r {
                continue;
            }
            if factor != 0.0 {
                let row = &mut self.binv[i * m..(i + 1) * m];
                for (rv, pv) in row.iter_mut().zip(&pivot_row) {
                    *rv -= factor * pv;
                }
                self.xb[i] -= factor * t;
            }
        }
        self.binv[r * m..(r + 1) * m].copy_from_slice(&pivot_row);
        self.xb[r] = t;
        self.basis[r] = BasisVar::Strategy { amask, bmask };
        true
    }

    /// Rebuild B^-1 and the basic solution from scratch.
    fn refactor(&mut self) -> Result<(), String> {
        let m = self.m;
        let mut basis_mat = vec![0.0; m * m];
        for (col, var) in self.basis.iter().enumerate() {
            match *var {
                BasisVar::Artificial(j) => basis_mat[j * m + col] = 1.0,
                BasisVar::Strategy { amask, bmask } => {
                    for r in column_rows(amask, bmask, self.nx, self.ny, m) {
                        basis_mat[r * m + col] = 1.0;
                    }
                }
            }
        }
        self.binv = invert(basis_mat, m).ok_or("basis matrix became singular")?;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.xb[i] = row.iter().zip(&self.b).map(|(r, b)| r * b).sum();
        }
        Ok(())
    }
}

/// Gauss-Jordan inversion with partial pivoting.
fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let mut piv = col;
        let mut best = a[col * m + col].abs();
        for r in col + 1..m {
            let v = a[r * m + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-12 {
            return None;
        }
        if piv != col {
            for j in 0..m {
                a.swap(col * m + j, piv * m + j);
                inv.swap(col * m + j, piv * m + j);
            }
        }
        let p = a[col * m + col];
        for j in 0..m {
            a[col * m + j] /= p;
            inv[col * m + j] /= p;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = a[r * m + col];
            if f != 0.0 {
                for j in 0..m {
                    a[r * m + j] -= f * a[col * m + j];
                    inv[r * m + j] -= f * inv[col * m + j];
                }
            }
        }
    }
    Some(inv)
}

/// Solve the membership program for an `nx` x `ny` box table `p` (layout
/// `[x][y][a][b]`).
pub(crate) fn solve_lhv(nx: usize, ny: usize, p: &[f64]) -> Result<LpOutcome, String> {
    let mut lp = Lp::new(nx, ny, p);
    let mut bland = false;
    let mut stall = 0usize;
    let mut last_obj = f64::INFINITY;
    for iter in 0..MAX_ITERS {
        if iter > 0 && iter % REFACTOR_EVERY == 0 {
            lp.refactor()?;
        }
        let y = lp.duals();
        let entering = if bland {
            lp.first_improving(&y)
        } else {
            let (score, amask, bmask) = best_strategy(nx, ny, &y);
            if score > ENTER_TOL {
                Some((amask, bmask))
            } else {
                None
            }
        };
        let Some((amask, bmask)) = entering else {
            // optimal for phase 1
            lp.refactor()?;
            let residual = lp.objective();
            if residual <= crate::correlations::LHV_FEASIBLE_TOL {
                let mut weights: Vec<(u64, u64, f64)> = lp
                    .basis
                    .iter()
                    .zip(&lp.xb)
                    .filter_map(|(var, &w)| match *var {
                        BasisVar::Strategy { amask, bmask } if w > 1e-12 => Some((amask, bmask, w)),
                        _ => None,
                    })
                    .collect();
                let total: f64 = weights.iter().map(|(_, _, w)| w).sum();
                if total > 0.0 {
                    for (_, _, w) in &mut weights {
                        *w /= total;
                    }
                }
                weights.sort_by_key(|&(a, b, _)| (a, b));
                return Ok(LpOutcome::Feasible { weights, residual });
            }
            return Ok(LpOutcome::Infeasible {
                duals: lp.duals(),
                residual,
            });
        };
        if !lp.pivot_in(amask, bmask, bland) {
            // phase 1 cannot be unbounded; a failed ratio test is numerical
            lp.refactor()?;
            if !lp.pivot_in(amask, bmask, bland) {
                return Err("ratio test failed after refactorization".into());
            }
        }
        let obj = lp.objective();
        if obj > last_obj - 1e-12 {
            stall += 1;
            if stall >= STALL_LIMIT {
                bland = true;
            }
        } else {
            stall = 0;
        }
        last_obj = obj;
    }
    Err(format!("no convergence after {MAX_ITERS} pivots"))
}
