//! Distributions over `D^k`, fixed-marginal primal and dual LPs, dominating
//! polynomials, t-wise independence tests and the value `opt_t`.

use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinat::{binomial, decode_tuple, encode_tuple, pow_usize, subsets_of_size};
use crate::csp::{MarginalVector, Relation, RelationFamily};
use crate::error::{Error, Result};
use crate::lp::{Cmp, LinearProgram};
use crate::scalar::Scalar;

/// Largest `q^k` for which the LPs are attempted at all.
pub const LP_STATE_CAP: usize = 1 << 12;
/// Largest `q^k` solved in exact rational arithmetic under [`LpMode::Auto`].
pub const EXACT_LP_THRESHOLD: usize = 256;
/// Default cap on the number of marginal grid points.
pub const DEFAULT_NET_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpMode {
    Exact,
    Float,
    Auto,
}

impl LpMode {
    pub fn is_exact(self, q: usize, k: usize) -> bool {
        match self {
            LpMode::Exact => true,
            LpMode::Float => false,
            LpMode::Auto => q.checked_pow(k as u32).is_some_and(|s| s <= EXACT_LP_THRESHOLD),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable<T = f64> {
    pub arity: usize,
    pub q: usize,
    pub probs: Vec<T>,
}

impl<T: Scalar> DistributionTable<T> {
    pub fn product(nu: &MarginalVector, k: usize) -> Self {
        let q = nu.q();
        let probs = (0..pow_usize(q, k))
            .map(|i| {
                decode_tuple(i, q, k)
                    .into_iter()
                    .fold(T::one(), |acc, a| acc * nu.prob::<T>(a))
            })
            .collect();
        DistributionTable { arity: k, q, probs }
    }

    /// Marginal of the table on the coordinates `w` (listed in increasing order).
    pub fn marginal(&self, w: &[usize]) -> Vec<T> {
        let mut out = vec![T::zero(); pow_usize(self.q, w.len())];
        for (i, p) in self.probs.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let x = decode_tuple(i, self.q, self.arity);
            let j = encode_tuple(w.iter().map(|&c| x[c]), self.q);
            out[j] = out[j].clone() + p.clone();
        }
        out
    }

    /// Whether every size-`t` marginal equals the product of `nu`.
    pub fn is_t_wise_independent(&self, nu: &MarginalVector, t: usize, tol: f64) -> bool {
        subsets_of_size(self.arity, t).iter().all(|w| {
            let marg = self.marginal(w);
            marg.iter().enumerate().all(|(j, m)| {
                let b = decode_tuple(j, self.q, w.len());
                let target = b.iter().fold(T::one(), |acc, &a| acc * nu.prob::<T>(a));
                if T::EXACT {
                    *m == target
                } else {
                    (m.as_f64() - target.as_f64()).abs() <= tol
                }
            })
        })
    }

    pub fn mass_on(&self, rel: &Relation) -> T {
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| rel.contains_index(*i))
            .fold(T::zero(), |acc, (_, p)| acc + p.clone())
    }

    pub fn to_f64(&self) -> DistributionTable<f64> {
        DistributionTable {
            arity: self.arity,
            q: self.q,
            probs: self.probs.iter().map(Scalar::as_f64).collect(),
        }
    }
}

/// `Q(x) = Σ_W c_W(x_W)` over the size-`t` subsets `W` of `[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominatingPolynomial<T = f64> {
    pub k: usize,
    pub t: usize,
    pub q: usize,
    pub subsets: Vec<Vec<usize>>,
    /// `coefficients[w][b]` with `b` a row-major index over `D^W`.
    pub coefficients: Vec<Vec<T>>,
    pub marginal: MarginalVector,
}

impl<T: Scalar> DominatingPolynomial<T> {
    pub fn evaluate(&self, x: &[usize]) -> T {
        self.subsets
            .iter()
            .zip(&self.coefficients)
            .fold(T::zero(), |acc, (w, c)| {
                acc + c[encode_tuple(w.iter().map(|&i| x[i]), self.q)].clone()
            })
    }

    /// `E_{x ~ ν^t} Q(x)`.
    pub fn val_t(&self) -> T {
        self.expectation_under(&self.marginal)
    }

    pub fn expectation_under(&self, nu: &MarginalVector) -> T {
        let mut total = T::zero();
        for c in &self.coefficients {
            for (j, v) in c.iter().enumerate() {
                if v.is_zero() {
                    continue;
                }
                let b = decode_tuple(j, self.q, self.t);
                let p = b.iter().fold(T::one(), |acc, &a| acc * nu.prob::<T>(a));
                total = total + v.clone() * p;
            }
        }
        total
    }

    pub fn l1_norm(&self) -> T {
        self.coefficients
            .iter()
            .flatten()
            .fold(T::zero(), |acc, v| acc + v.abs())
    }

    /// `Σ_W max_b |c_W(b)|`, the Lipschitz weight of `ν ↦ E_ν Q`.
    pub fn sup_norm_sum(&self) -> T {
        self.coefficients.iter().fold(T::zero(), |acc, c| {
            acc + c.iter().fold(T::zero(), |m, v| T::max_of(m, v.abs()))
        })
    }

    /// `max(0, max_x P(x) − Q(x))`; zero exactly when `Q` dominates `P`.
    pub fn dominance_deficit(&self, rel: &Relation) -> T {
        let mut worst = T::zero();
        for i in 0..rel.table_len() {
            let x = decode_tuple(i, self.q, self.k);
            let p = if rel.contains_index(i) { T::one() } else { T::zero() };
            worst = T::max_of(worst, p - self.evaluate(&x));
        }
        worst
    }

    pub fn dominates(&self, rel: &Relation) -> bool {
        self.dominance_deficit(rel).is_zero()
    }

    pub fn to_f64(&self) -> DominatingPolynomial<f64> {
        DominatingPolynomial {
            k: self.k,
            t: self.t,
            q: self.q,
            subsets: self.subsets.clone(),
            coefficients: self
                .coefficients
                .iter()
                .map(|c| c.iter().map(Scalar::as_f64).collect())
                .collect(),
            marginal: self.marginal.clone(),
        }
    }
}

/// `Q(x) = Σ_{|S| ≤ t} ĉ_S χ_S(x)` with `χ_S(x) = Π_{i∈S} (1 − 2x_i)` (boolean only).
#[derive(Debug, Clone, PartialEq)]
pub struct FourierPolynomial<T = f64> {
    pub k: usize,
    pub t: usize,
    pub subsets: Vec<Vec<usize>>,
    pub coefficients: Vec<T>,
    pub marginal: MarginalVector,
}

pub fn character(subset: &[usize], x: &[usize]) -> i64 {
    if subset.iter().filter(|&&i| x[i] == 1).count() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// All subsets of `[k]` with at most `t` elements, by size then lexicographically.
pub fn subsets_up_to(k: usize, t: usize) -> Vec<Vec<usize>> {
    (0..=t.min(k)).flat_map(|s| subsets_of_size(k, s)).collect()
}

impl<T: Scalar> FourierPolynomial<T> {
    pub fn evaluate(&self, x: &[usize]) -> T {
        self.subsets
            .iter()
            .zip(&self.coefficients)
            .fold(T::zero(), |acc, (s, c)| acc + c.clone() * T::from_i64(character(s, x)))
    }

    /// `Σ_S ĉ_S · bias^{|S|}` with `bias = ν(0) − ν(1)`.
    pub fn val_t(&self) -> T {
        let bias = self.marginal.prob::<T>(0) - self.marginal.prob::<T>(1);
        self.subsets
            .iter()
            .zip(&self.coefficients)
            .fold(T::zero(), |acc, (s, c)| acc + c.clone() * power(&bias, s.len()))
    }

    pub fn l1_norm(&self) -> T {
        self.coefficients.iter().fold(T::zero(), |acc, v| acc + v.abs())
    }

    pub fn dominance_deficit(&self, rel: &Relation) -> T {
        let mut worst = T::zero();
        for i in 0..rel.table_len() {
            let x = decode_tuple(i, 2, self.k);
            let p = if rel.contains_index(i) { T::one() } else { T::zero() };
            worst = T::max_of(worst, p - self.evaluate(&x));
        }
        worst
    }

    pub fn to_f64(&self) -> FourierPolynomial<f64> {
        FourierPolynomial {
            k: self.k,
            t: self.t,
            subsets: self.subsets.clone(),
            coefficients: self.coefficients.iter().map(Scalar::as_f64).collect(),
            marginal: self.marginal.clone(),
        }
    }
}

pub(crate) fn power<T: Scalar>(base: &T, e: usize) -> T {
    (0..e).fold(T::one(), |acc, _| acc * base.clone())
}

fn check_shape(rel: &Relation, nu: &MarginalVector, t: usize) -> Result<()> {
    if t == 0 || t > rel.arity {
        return Err(Error::invalid(format!("t = {t} must lie in 1..={}", rel.arity)));
    }
    if nu.q() != rel.q {
        return Err(Error::invalid("marginal length differs from the domain size"));
    }
    if rel.table_len() > LP_STATE_CAP {
        return Err(Error::limit("fixed-marginal LP", format!("q^k = {}", rel.table_len()), LP_STATE_CAP));
    }
    Ok(())
}

fn product_weight<T: Scalar>(nu: &MarginalVector, b: &[usize]) -> T {
    b.iter().fold(T::one(), |acc, &a| acc * nu.prob::<T>(a))
}

/// Maximum of `Σ_x P(x) μ(x)` over t-wise ν-independent `μ`.
pub fn solve_primal<T: Scalar>(rel: &Relation, nu: &MarginalVector, t: usize) -> Result<(T, DistributionTable<T>)> {
    check_shape(rel, nu, t)?;
    let (q, k) = (rel.q, rel.arity);
    let size = rel.table_len();
    let mut lp = LinearProgram::<T>::new(size);
    lp.objective = (0..size)
        .map(|i| if rel.contains_index(i) { T::one() } else { T::zero() })
        .collect();
    for w in subsets_of_size(k, t) {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); pow_usize(q, t)];
        for i in 0..size {
            let x = decode_tuple(i, q, k);
            rows[encode_tuple(w.iter().map(|&c| x[c]), q)].push((i, T::one()));
        }
        for (j, coeffs) in rows.into_iter().enumerate() {
            let b = decode_tuple(j, q, t);
            lp.add_row(coeffs, Cmp::Eq, product_weight(nu, &b));
        }
    }
    let sol = lp.maximize()?;
    Ok((
        sol.value,
        DistributionTable {
            arity: k,
            q,
            probs: sol.x,
        },
    ))
}

/// Minimum-value dominating polynomial over size-`t` indicator coefficients.
///
/// Free coefficients are split as `c⁺ − c⁻`, so the simplex returns a basic
/// solution supported on linearly independent columns.
pub fn solve_dual<T: Scalar>(rel: &Relation, nu: &MarginalVector, t: usize) -> Result<DominatingPolynomial<T>> {
    check_shape(rel, nu, t)?;
    let (q, k) = (rel.q, rel.arity);
    let subsets = subsets_of_size(k, t);
    let per = pow_usize(q, t);
    let nvars = subsets.len() * per;
    let mut lp = LinearProgram::<T>::new(2 * nvars);
    for (wi, _) in subsets.iter().enumerate() {
        for j in 0..per {
            let b = decode_tuple(j, q, t);
            let w: T = product_weight(nu, &b);
            lp.objective[wi * per + j] = w.clone();
            lp.objective[nvars + wi * per + j] = -w;
        }
    }
    for i in 0..rel.table_len() {
        let x = decode_tuple(i, q, k);
        let mut coeffs = Vec::with_capacity(2 * subsets.len());
        for (wi, w) in subsets.iter().enumerate() {
            let col = wi * per + encode_tuple(w.iter().map(|&c| x[c]), q);
            coeffs.push((col, T::one()));
            coeffs.push((nvars + col, -T::one()));
        }
        let rhs = if rel.contains_index(i) { T::one() } else { T::zero() };
        lp.add_row(coeffs, Cmp::Ge, rhs);
    }
    let sol = lp.minimize()?;
    let coefficients = (0..subsets.len())
        .map(|wi| {
            (0..per)
                .map(|j| sol.x[wi * per + j].clone() - sol.x[nvars + wi * per + j].clone())
                .collect()
        })
        .collect();
    Ok(DominatingPolynomial {
        k,
        t,
        q,
        subsets,
        coefficients,
        marginal: nu.clone(),
    })
}

/// Boolean dual in the ±1 character basis with all `|S| ≤ t`.
pub fn solve_dual_boolean<T: Scalar>(rel: &Relation, nu: &MarginalVector, t: usize) -> Result<FourierPolynomial<T>> {
    check_shape(rel, nu, t)?;
    if rel.q != 2 {
        return Err(Error::WrongMode("the character basis needs a boolean domain".into()));
    }
    let k = rel.arity;
    let subsets = subsets_up_to(k, t);
    let s = subsets.len();
    let bias = nu.prob::<T>(0) - nu.prob::<T>(1);
    let mut lp = LinearProgram::<T>::new(2 * s);
    for (i, sub) in subsets.iter().enumerate() {
        let w = power(&bias, sub.len());
        lp.objective[i] = w.clone();
        lp.objective[s + i] = -w;
    }
    for i in 0..rel.table_len() {
        let x = decode_tuple(i, 2, k);
        let mut coeffs = Vec::with_capacity(2 * s);
        for (j, sub) in subsets.iter().enumerate() {
            let chi = T::from_i64(character(sub, &x));
            coeffs.push((j, chi.clone()));
            coeffs.push((s + j, -chi));
        }
        let rhs = if rel.contains_index(i) { T::one() } else { T::zero() };
        lp.add_row(coeffs, Cmp::Ge, rhs);
    }
    let sol = lp.minimize()?;
    Ok(FourierPolynomial {
        k,
        t,
        subsets,
        coefficients: (0..s).map(|j| sol.x[j].clone() - sol.x[s + j].clone()).collect(),
        marginal: nu.clone(),
    })
}

/// Natural log of the coefficient-norm cap `q^{k(q^k+1)}` for vertex dual solutions.
pub fn coefficient_cap_ln(q: usize, k: usize) -> f64 {
    (k as f64) * ((q as f64).powi(k as i32) + 1.0) * (q as f64).ln()
}

/// A degree-`t` function with `E_{ν^k} f = 0` and `f ≥ 1` on the relation.
#[derive(Debug, Clone, PartialEq)]
pub enum Separator<T = f64> {
    Fourier(FourierPolynomial<T>),
    Indicator(DominatingPolynomial<T>),
}

impl<T: Scalar> Separator<T> {
    pub fn evaluate(&self, x: &[usize]) -> T {
        match self {
            Separator::Fourier(f) => f.evaluate(x),
            Separator::Indicator(f) => f.evaluate(x),
        }
    }

    pub fn expectation(&self) -> T {
        match self {
            Separator::Fourier(f) => f.val_t(),
            Separator::Indicator(f) => f.val_t(),
        }
    }

    pub fn expectation_under(&self, nu: &MarginalVector) -> T {
        match self {
            Separator::Fourier(f) => {
                let mut g = f.clone();
                g.marginal = nu.clone();
                g.val_t()
            }
            Separator::Indicator(f) => f.expectation_under(nu),
        }
    }

    pub fn l1_norm(&self) -> T {
        match self {
            Separator::Fourier(f) => f.l1_norm(),
            Separator::Indicator(f) => f.l1_norm(),
        }
    }

    pub fn degree(&self) -> usize {
        match self {
            Separator::Fourier(f) => f.t,
            Separator::Indicator(f) => f.t,
        }
    }
}

/// Finds a separator of minimum coefficient ℓ1 norm, or `None` when some
/// t-wise ν-independent distribution is supported on the relation.
///
/// The LP is the Farkas alternative of the moment system, so marginals with
/// zero entries need no special treatment: coordinates outside `supp(ν)` are
/// forced to zero probability by the moment constraints themselves.
pub fn polynomial_separator<T: Scalar>(rel: &Relation, nu: &MarginalVector, t: usize) -> Result<Option<Separator<T>>> {
    check_shape(rel, nu, t)?;
    let (q, k) = (rel.q, rel.arity);
    let sat: Vec<Vec<usize>> = rel.satisfying();
    if q == 2 {
        let subsets = subsets_up_to(k, t);
        let s = subsets.len();
        let bias = nu.prob::<T>(0) - nu.prob::<T>(1);
        let mut lp = LinearProgram::<T>::new(2 * s);
        lp.objective = vec![-T::one(); 2 * s];
        let mean: Vec<(usize, T)> = subsets
            .iter()
            .enumerate()
            .flat_map(|(j, sub)| {
                let w = power(&bias, sub.len());
                [(j, w.clone()), (s + j, -w)]
            })
            .collect();
        lp.add_row(mean, Cmp::Eq, T::zero());
        for x in &sat {
            let coeffs = subsets
                .iter()
                .enumerate()
                .flat_map(|(j, sub)| {
                    let chi = T::from_i64(character(sub, x));
                    [(j, chi.clone()), (s + j, -chi)]
                })
                .collect();
            lp.add_row(coeffs, Cmp::Ge, T::one());
        }
        return match lp.maximize() {
            Ok(sol) => Ok(Some(Separator::Fourier(FourierPolynomial {
                k,
                t,
                subsets,
                coefficients: (0..s).map(|j| sol.x[j].clone() - sol.x[s + j].clone()).collect(),
                marginal: nu.clone(),
            }))),
            Err(Error::Lp(m)) if m == crate::lp::INFEASIBLE => Ok(None),
            Err(e) => Err(e),
        };
    }
    let subsets = subsets_of_size(k, t);
    let per = pow_usize(q, t);
    let nv = subsets.len() * per;
    let mut lp = LinearProgram::<T>::new(2 * nv);
    lp.objective = vec![-T::one(); 2 * nv];
    let mut mean = Vec::with_capacity(2 * nv);
    for wi in 0..subsets.len() {
        for j in 0..per {
            let w: T = product_weight(nu, &decode_tuple(j, q, t));
            mean.push((wi * per + j, w.clone()));
            mean.push((nv + wi * per + j, -w));
        }
    }
    lp.add_row(mean, Cmp::Eq, T::zero());
    for x in &sat {
        let mut coeffs = Vec::new();
        for (wi, w) in subsets.iter().enumerate() {
            let col = wi * per + encode_tuple(w.iter().map(|&c| x[c]), q);
            coeffs.push((col, T::one()));
            coeffs.push((nv + col, -T::one()));
        }
        lp.add_row(coeffs, Cmp::Ge, T::one());
    }
    match lp.maximize() {
        Ok(sol) => Ok(Some(Separator::Indicator(DominatingPolynomial {
            k,
            t,
            q,
            coefficients: (0..subsets.len())
                .map(|wi| {
                    (0..per)
                        .map(|j| sol.x[wi * per + j].clone() - sol.x[nv + wi * per + j].clone())
                        .collect()
                })
                .collect(),
            subsets,
            marginal: nu.clone(),
        }))),
        Err(Error::Lp(m)) if m == crate::lp::INFEASIBLE => Ok(None),
        Err(e) => Err(e),
    }
}

/// Some t-wise ν-independent distribution supported on the relation, if any.
pub fn supported_independent_distribution<T: Scalar>(
    rel: &Relation,
    nu: &MarginalVector,
    t: usize,
) -> Result<Option<DistributionTable<T>>> {
    check_shape(rel, nu, t)?;
    let (q, k) = (rel.q, rel.arity);
    let support: Vec<usize> = (0..rel.table_len()).filter(|&i| rel.contains_index(i)).collect();
    let mut lp = LinearProgram::<T>::new(support.len());
    for w in subsets_of_size(k, t) {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); pow_usize(q, t)];
        for (col, &i) in support.iter().enumerate() {
            let x = decode_tuple(i, q, k);
            rows[encode_tuple(w.iter().map(|&c| x[c]), q)].push((col, T::one()));
        }
        for (j, coeffs) in rows.into_iter().enumerate() {
            lp.add_row(coeffs, Cmp::Eq, product_weight(nu, &decode_tuple(j, q, t)));
        }
    }
    Ok(lp.feasible_point()?.map(|x| {
        let mut probs = vec![T::zero(); rel.table_len()];
        for (col, &i) in support.iter().enumerate() {
            probs[i] = x[col].clone();
        }
        DistributionTable { arity: k, q, probs }
    }))
}

/// Grid `{counts / steps}` over the simplex, in lexicographic order of counts.
pub fn simplex_grid(q: usize, steps: u64) -> Vec<MarginalVector> {
    let mut out = Vec::new();
    let mut counts = vec![0u64; q];
    fn rec(pos: usize, left: u64, counts: &mut Vec<u64>, steps: u64, out: &mut Vec<MarginalVector>) {
        let q = counts.len();
        if pos == q - 1 {
            counts[pos] = left;
            out.push(MarginalVector {
                counts: counts.clone(),
                denom: steps,
            });
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, counts, steps, out);
        }
    }
    rec(0, steps, &mut counts, steps, &mut out);
    out
}

pub fn grid_size(q: usize, steps: u64) -> u128 {
    binomial(steps + q as u64 - 1, q as u64 - 1)
}

/// Number of grid steps realizing a step no larger than `delta`.
pub fn steps_for(delta: f64) -> Result<u64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid("net step must be positive"));
    }
    let s = (1.0 / delta - 1e-9).ceil().max(1.0);
    if s > 1e12 {
        return Err(Error::limit("marginal net", format!("step {delta}"), "1e-12"));
    }
    Ok(s as u64)
}

/// Largest ℓ1 distance from a point of the simplex to the grid with `steps` steps.
pub fn grid_covering_radius(q: usize, steps: u64) -> f64 {
    if q <= 1 {
        return 0.0;
    }
    q as f64 / (2.0 * steps as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetPointValue {
    pub marginal: MarginalVector,
    pub probs: Vec<f64>,
    pub value: f64,
    pub max_dual_l1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptTResult {
    pub value: f64,
    pub best_marginal: MarginalVector,
    pub net_resolution: f64,
    pub net_steps: u64,
    pub exact: bool,
    /// `t · max ‖Q_ν‖₁ · covering radius`: the true value lies in `[value, value + lipschitz_slack]`.
    pub lipschitz_slack: f64,
    pub per_point: Vec<NetPointValue>,
}

#[derive(Debug, Clone)]
pub struct OptTOptions {
    pub mode: LpMode,
    pub net_step: Option<f64>,
    pub net_cap: u128,
}

impl Default for OptTOptions {
    fn default() -> Self {
        OptTOptions {
            mode: LpMode::Auto,
            net_step: None,
            net_cap: DEFAULT_NET_CAP,
        }
    }
}

struct PointEval<T> {
    value: T,
    l1: f64,
}

fn eval_point<T: Scalar>(family: &RelationFamily, nu: &MarginalVector, t: usize) -> Result<PointEval<T>> {
    let mut value = T::zero();
    let mut l1 = 0.0f64;
    for (rel, &w) in family.relations.iter().zip(&family.weights) {
        if w == 0.0 {
            continue;
        }
        let (v, _) = solve_primal::<T>(rel, nu, t)?;
        let dual = solve_dual::<T>(rel, nu, t)?;
        l1 = l1.max(dual.l1_norm().as_f64());
        value = value + T::from_big_ratio(&crate::scalar::f64_to_big_ratio(w)) * v;
    }
    Ok(PointEval { value, l1 })
}

fn eval_grid<T: Scalar>(
    family: &RelationFamily,
    t: usize,
    steps: u64,
) -> Result<(Vec<MarginalVector>, Vec<PointEval<T>>)> {
    let grid = simplex_grid(family.q(), steps);
    let evals = grid
        .par_iter()
        .map(|nu| eval_point::<T>(family, nu, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, evals))
}

/// `opt_t(ρ)` over a grid of marginals.
///
/// Without an explicit step the grid is refined until its step is at most
/// `min(ε / (3 t B), 1 / (2q))`, where `B` is the largest dual ℓ1 norm seen.
pub fn opt_t(family: &RelationFamily, t: usize, epsilon: f64, opts: &OptTOptions) -> Result<OptTResult> {
    family.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let k = family.arity();
    if t == 0 || t > k {
        return Err(Error::invalid(format!("t = {t} must lie in 1..={k}")));
    }
    let q = family.q();
    if opts.mode.is_exact(q, k) {
        opt_t_generic::<BigRational>(family, t, epsilon, opts, true)
    } else {
        opt_t_generic::<f64>(family, t, epsilon, opts, false)
    }
}

fn opt_t_generic<T: Scalar>(
    family: &RelationFamily,
    t: usize,
    epsilon: f64,
    opts: &OptTOptions,
    exact: bool,
) -> Result<OptTResult> {
    let q = family.q();
    let check_cap = |steps: u64| -> Result<()> {
        let size = grid_size(q, steps);
        if size > opts.net_cap {
            return Err(Error::limit(
                "opt_t marginal net",
                format!("{size} points (step {:.3e})", 1.0 / steps as f64),
                opts.net_cap,
            ));
        }
        Ok(())
    };
    let (grid, evals, steps) = match opts.net_step {
        Some(step) => {
            let steps = steps_for(step)?;
            check_cap(steps)?;
            let (g, e) = eval_grid::<T>(family, t, steps)?;
            (g, e, steps)
        }
        None => {
            let mut steps = 2 * q as u64;
            let mut result = None;
            for _ in 0..6 {
                check_cap(steps)?;
                let (g, e) = eval_grid::<T>(family, t, steps)?;
                let b = e.iter().map(|p| p.l1).fold(0.0f64, f64::max).max(1.0);
                let delta = (epsilon / (3.0 * t as f64 * b)).min(1.0 / (2.0 * q as f64));
                let needed = steps_for(delta)?;
                result = Some((g, e, steps));
                if needed <= steps {
                    break;
                }
                steps = needed;
            }
            result.expect("at least one grid evaluated")
        }
    };
    let mut best = 0usize;
    for i in 1..evals.len() {
        if evals[i].value > evals[best].value {
            best = i;
        }
    }
    let b = evals.iter().map(|p| p.l1).fold(0.0f64, f64::max);
    let per_point = grid
        .iter()
        .zip(&evals)
        .map(|(nu, e)| NetPointValue {
            probs: nu.probs(),
            marginal: nu.clone(),
            value: e.value.as_f64(),
            max_dual_l1: e.l1,
        })
        .collect();
    Ok(OptTResult {
        value: evals[best].value.as_f64(),
        best_marginal: grid[best].clone(),
        net_resolution: 1.0 / steps as f64,
        net_steps: steps,
        exact,
        lipschitz_slack: t as f64 * b * grid_covering_radius(q, steps),
        per_point,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriState {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct TwiseAnswer {
    pub answer: TriState,
    /// For `Yes`: a marginal and a distribution per relation supported on it.
    pub witness: Option<(MarginalVector, Vec<DistributionTable<BigRational>>)>,
    /// Grid steps used for the final decision.
    pub net_steps: u64,
    /// Smallest robust separator margin over the grid (for `No`/`Unknown`).
    pub min_margin: f64,
}

/// Decides whether one relation supports a t-wise ν-independent distribution
/// for some ν.
pub fn is_t_wise_independent(rel: &Relation, t: usize, tol: f64) -> Result<TwiseAnswer> {
    let fam = RelationFamily::single(rel.clone());
    is_family_t_wise_independent(&fam, t, tol)
}

/// Family version: a common ν must work for every relation of positive weight.
///
/// Searches grids of step `1/(2q)`, `1/(4q)`, ... . A grid point certifies
/// `Yes` through an exact feasible distribution. `No` needs, at every grid
/// point, some relation with a separator `f` whose robust margin
/// `1 − t‖f‖₁ r` exceeds `tol`, where `r` is the grid covering radius; then no
/// marginal within `r` of that point admits a supported distribution.
pub fn is_family_t_wise_independent(family: &RelationFamily, t: usize, tol: f64) -> Result<TwiseAnswer> {
    family.validate()?;
    let q = family.q();
    let rels: Vec<&Relation> = family
        .relations
        .iter()
        .zip(&family.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(r, _)| r)
        .collect();
    let mut steps = 2 * q as u64;
    let mut min_margin = f64::NEG_INFINITY;
    for _ in 0..5 {
        if grid_size(q, steps) > 20_000 {
            break;
        }
        let grid = simplex_grid(q, steps);
        let radius = grid_covering_radius(q, steps);
        let results: Vec<Result<PointVerdict>> = grid
            .par_iter()
            .map(|nu| point_verdict(&rels, nu, t, radius))
            .collect();
        let mut all_robust = true;
        min_margin = f64::INFINITY;
        for (nu, r) in grid.iter().zip(results) {
            match r? {
                PointVerdict::Feasible(dists) => {
                    return Ok(TwiseAnswer {
                        answer: TriState::Yes,
                        witness: Some((nu.clone(), dists)),
                        net_steps: steps,
                        min_margin: f64::NAN,
                    })
                }
                PointVerdict::Separated(margin) => {
                    min_margin = min_margin.min(margin);
                    if margin <= tol {
                        all_robust = false;
                    }
                }
            }
        }
        if all_robust {
            return Ok(TwiseAnswer {
                answer: TriState::No,
                witness: None,
                net_steps: steps,
                min_margin,
            });
        }
        steps *= 2;
    }
    Ok(TwiseAnswer {
        answer: TriState::Unknown,
        witness: None,
        net_steps: steps,
        min_margin,
    })
}

enum PointVerdict {
    Feasible(Vec<DistributionTable<BigRational>>),
    Separated(f64),
}

fn point_verdict(rels: &[&Relation], nu: &MarginalVector, t: usize, radius: f64) -> Result<PointVerdict> {
    let mut dists = Vec::new();
    let mut best_margin = f64::NEG_INFINITY;
    for rel in rels {
        match supported_independent_distribution::<BigRational>(rel, nu, t)? {
            Some(d) => dists.push(d),
            None => {
                if let Some(sep) = polynomial_separator::<BigRational>(rel, nu, t)? {
                    let margin = 1.0 - t as f64 * sep.l1_norm().as_f64() * radius;
                    best_margin = best_margin.max(margin);
                }
            }
        }
    }
    if dists.len() == rels.len() {
        Ok(PointVerdict::Feasible(dists))
    } else {
        Ok(PointVerdict::Separated(best_margin))
    }
}
