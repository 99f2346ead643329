//! Dense two-phase tableau simplex with Bland's rule, generic over [`Scalar`].
//!
//! Exact scalars give exact optima and exact vertex solutions; `f64` uses the
//! pivot tolerance of [`Scalar::tolerance`].

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row<T> {
    pub coeffs: Vec<(usize, T)>,
    pub cmp: Cmp,
    pub rhs: T,
}

/// `maximize objective·x` subject to the rows and `x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    pub num_vars: usize,
    pub objective: Vec<T>,
    pub rows: Vec<Row<T>>,
    pub max_pivots: usize,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub value: T,
    pub x: Vec<T>,
    pub pivots: usize,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![T::zero(); num_vars],
            rows: Vec::new(),
            max_pivots: 200_000,
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, T)>, cmp: Cmp, rhs: T) {
        debug_assert!(coeffs.iter().all(|(j, _)| *j < self.num_vars));
        self.rows.push(Row { coeffs, cmp, rhs });
    }

    pub fn maximize(&self) -> Result<LpSolution<T>> {
        Tableau::build(self)?.solve(&self.objective, self.max_pivots)
    }

    pub fn minimize(&self) -> Result<LpSolution<T>> {
        let neg: Vec<T> = self.objective.iter().map(|c| -c.clone()).collect();
        let mut sol = Tableau::build(self)?.solve(&neg, self.max_pivots)?;
        sol.value = -sol.value;
        Ok(sol)
    }

    /// Any feasible point, or `None` when the system is infeasible.
    pub fn feasible_point(&self) -> Result<Option<Vec<T>>> {
        let zero = vec![T::zero(); self.num_vars];
        match Tableau::build(self)?.solve(&zero, self.max_pivots) {
            Ok(sol) => Ok(Some(sol.x)),
            Err(Error::Lp(msg)) if msg == INFEASIBLE => Ok(None),
            Err(e) => Err(e),
        }
    }
}

pub const INFEASIBLE: &str = "infeasible";
pub const UNBOUNDED: &str = "unbounded";

struct Tableau<T> {
    a: Vec<Vec<T>>,
    b: Vec<T>,
    basis: Vec<usize>,
    num_vars: usize,
    first_artificial: usize,
    cols: usize,
}

impl<T: Scalar> Tableau<T> {
    fn build(lp: &LinearProgram<T>) -> Result<Self> {
        let m = lp.rows.len();
        let slack_count = lp.rows.iter().filter(|r| r.cmp != Cmp::Eq).count();
        let first_artificial = lp.num_vars + slack_count;
        let mut art_count = 0;
        let mut rows = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut kinds = Vec::with_capacity(m);
        for row in &lp.rows {
            let flip = row.rhs < T::zero();
            let mut dense = vec![T::zero(); lp.num_vars];
            for (j, v) in &row.coeffs {
                dense[*j] = dense[*j].clone() + v.clone();
            }
            let (cmp, rhs) = if flip {
                for v in dense.iter_mut() {
                    *v = -v.clone();
                }
                let cmp = match row.cmp {
                    Cmp::Le => Cmp::Ge,
                    Cmp::Ge => Cmp::Le,
                    Cmp::Eq => Cmp::Eq,
                };
                (cmp, -row.rhs.clone())
            } else {
                (row.cmp, row.rhs.clone())
            };
            if cmp != Cmp::Le {
                art_count += 1;
            }
            rows.push(dense);
            b.push(rhs);
            kinds.push(cmp);
        }
        let cols = first_artificial + art_count;
        let mut a = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut slack = lp.num_vars;
        let mut art = first_artificial;
        for (dense, cmp) in rows.into_iter().zip(kinds) {
            let mut full = dense;
            full.resize(cols, T::zero());
            match cmp {
                Cmp::Le => {
                    full[slack] = T::one();
                    basis.push(slack);
                    slack += 1;
                }
                Cmp::Ge => {
                    full[slack] = -T::one();
                    slack += 1;
                    full[art] = T::one();
                    basis.push(art);
                    art += 1;
                }
                Cmp::Eq => {
                    full[art] = T::one();
                    basis.push(art);
                    art += 1;
                }
            }
            a.push(full);
        }
        Ok(Tableau {
            a,
            b,
            basis,
            num_vars: lp.num_vars,
            first_artificial,
            cols,
        })
    }

    fn pivot(&mut self, r: usize, c: usize, d: &mut [T], value: &mut T) {
        let p = self.a[r][c].clone();
        let inv = T::one() / p;
        let nz: Vec<usize> = (0..self.cols).filter(|&j| !self.a[r][j].is_zero()).collect();
        for &j in &nz {
            self.a[r][j] = self.a[r][j].clone() * inv.clone();
        }
        self.a[r][c] = T::one();
        self.b[r] = self.b[r].clone() * inv;
        let pivot_row = self.a[r].clone();
        let pivot_b = self.b[r].clone();
        for i in 0..self.a.len() {
            if i == r {
                continue;
            }
            let f = self.a[i][c].clone();
            if f.is_zero() {
                continue;
            }
            let row = &mut self.a[i];
            for &j in &nz {
                row[j] = row[j].clone() - f.clone() * pivot_row[j].clone();
            }
            row[c] = T::zero();
            self.b[i] = self.b[i].clone() - f * pivot_b.clone();
            if !T::EXACT && self.b[i] < T::zero() && self.b[i] > -T::tolerance() {
                self.b[i] = T::zero();
            }
        }
        let fc = d[c].clone();
        if !fc.is_zero() {
            for &j in &nz {
                d[j] = d[j].clone() - fc.clone() * pivot_row[j].clone();
            }
            d[c] = T::zero();
            *value = value.clone() + fc * pivot_b;
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on reduced costs `d` over columns `< limit`.
    fn iterate(&mut self, d: &mut [T], value: &mut T, limit: usize, max_pivots: usize, pivots: &mut usize) -> Result<()> {
        loop {
            let Some(c) = (0..limit).find(|&j| d[j].is_positive_tol()) else {
                return Ok(());
            };
            let mut best: Option<(usize, T)> = None;
            for i in 0..self.a.len() {
                let aic = &self.a[i][c];
                if !aic.is_positive_tol() {
                    continue;
                }
                let ratio = self.b[i].clone() / aic.clone();
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br || (ratio == br && self.basis[i] < self.basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, _)) = best else {
                return Err(Error::Lp(UNBOUNDED.into()));
            };
            self.pivot(r, c, d, value);
            *pivots += 1;
            if *pivots > max_pivots {
                return Err(Error::Lp(format!("no optimum after {max_pivots} pivots")));
            }
        }
    }

    fn solve(mut self, objective: &[T], max_pivots: usize) -> Result<LpSolution<T>> {
        let mut pivots = 0;
        let has_artificial = self.cols > self.first_artificial;
        if has_artificial {
            let mut d = vec![T::zero(); self.cols];
            let mut value = T::zero();
            for i in 0..self.a.len() {
                if self.basis[i] >= self.first_artificial {
                    for j in 0..self.first_artificial {
                        d[j] = d[j].clone() + self.a[i][j].clone();
                    }
                    value = value - self.b[i].clone();
                }
            }
            self.iterate(&mut d, &mut value, self.first_artificial, max_pivots, &mut pivots)?;
            let tol = if T::EXACT { T::zero() } else { T::from_ratio(1, 100_000_000) };
            if value < -tol {
                return Err(Error::Lp(INFEASIBLE.into()));
            }
            // drive remaining artificials out of the basis, dropping redundant rows
            let mut i = 0;
            while i < self.a.len() {
                if self.basis[i] >= self.first_artificial {
                    let col = (0..self.first_artificial).find(|&j| {
                        let v = &self.a[i][j];
                        v.is_positive_tol() || v.is_negative_tol()
                    });
                    match col {
                        Some(c) => {
                            let mut dummy = vec![T::zero(); self.cols];
                            let mut dv = T::zero();
                            self.pivot(i, c, &mut dummy, &mut dv);
                            pivots += 1;
                        }
                        None => {
                            self.a.remove(i);
                            self.b.remove(i);
                            self.basis.remove(i);
                            continue;
                        }
                    }
                }
                i += 1;
            }
        }
        let limit = self.first_artificial;
        let mut cost = vec![T::zero(); self.cols];
        cost[..self.num_vars].clone_from_slice(objective);
        let mut d = cost.clone();
        let mut value = T::zero();
        for i in 0..self.a.len() {
            let cb = cost[self.basis[i]].clone();
            if cb.is_zero() {
                continue;
            }
            for j in 0..self.cols {
                if !self.a[i][j].is_zero() {
                    d[j] = d[j].clone() - cb.clone() * self.a[i][j].clone();
                }
            }
            value = value + cb * self.b[i].clone();
        }
        for j in limit..self.cols {
            d[j] = T::zero();
        }
        self.iterate(&mut d, &mut value, limit, max_pivots, &mut pivots)?;
        let mut x = vec![T::zero(); self.num_vars];
        for (i, &bv) in self.basis.iter().enumerate() {
            if bv < self.num_vars {
                x[bv] = self.b[i].clone();
            }
        }
        let value = objective
            .iter()
            .zip(&x)
            .fold(T::zero(), |acc, (c, v)| acc + c.clone() * v.clone());
        Ok(LpSolution { value, x, pivots })
    }
}
