//! Brute-force ground truth, written independently of the main path: its own
//! tuple enumeration, exact integer/rational arithmetic, and its own LP.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csp::{brute_opt, sample_instance, Instance, MarginalVector, Relation, RelationFamily};
use crate::error::{Error, Result};
use crate::twise::{DistributionTable, OptTOptions};

/// Oracles refuse inputs with more assignments than this.
pub const ORACLE_STATE_CAP: u128 = 1 << 20;

fn states(q: usize, n: usize) -> Result<u128> {
    let s = (q as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if s > ORACLE_STATE_CAP {
        return Err(Error::limit("oracle enumeration", format!("{q}^{n} assignments"), ORACLE_STATE_CAP));
    }
    Ok(s)
}

/// Assignment number `idx` with the last variable varying fastest.
fn assignment(mut idx: u128, q: usize, n: usize) -> Vec<usize> {
    let mut x = vec![0; n];
    for v in (0..n).rev() {
        x[v] = (idx % q as u128) as usize;
        idx /= q as u128;
    }
    x
}

/// Every ordered tuple of `len` distinct values below `n`.
fn distinct_tuples(n: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fn go(n: usize, len: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for v in 0..n {
            if !cur.contains(&v) {
                cur.push(v);
                go(n, len, cur, out);
                cur.pop();
            }
        }
    }
    go(n, len, &mut cur, &mut out);
    out
}

fn falling_big(n: usize, r: usize) -> BigInt {
    (0..r).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i))
}

/// Background per distinct `|S|`-tuple under the realized density of the subinstance.
fn realized_background(n: usize, k: usize, s: usize, m: usize) -> BigRational {
    // p_ord · fan-out = m · (n−s)^{(k−s)} / n^{(k)} = m / n^{(s)}
    let _ = k;
    BigRational::new(BigInt::from(m), falling_big(n, s))
}

/// Exhaustive `max_x |Σ_b w(b) C_{S,b}(x)|` for the constraints of `rel`
/// (all constraints when `None`), with background `m_rel / n^(|S| falling)`
/// unless `background` is supplied.
pub fn brute_weighted_deviation_max(
    inst: &Instance,
    rel: Option<usize>,
    subset: &[usize],
    weights: &[BigRational],
    background: Option<BigRational>,
) -> Result<BigRational> {
    let (n, q, k) = (inst.n, inst.q(), inst.k());
    let total = states(q, n)?;
    let s = subset.len();
    if weights.len() != q.pow(s as u32) {
        return Err(Error::invalid("weights must cover D^S"));
    }
    let scopes: Vec<Vec<usize>> = inst
        .constraints
        .iter()
        .filter(|c| rel.map_or(true, |r| c.relation == r))
        .map(|c| subset.iter().map(|&i| c.scope[i] as usize).collect())
        .collect();
    let bg = background.unwrap_or_else(|| realized_background(n, k, s, scopes.len()));
    let tuples = distinct_tuples(n, s);
    let index = |vals: &mut dyn Iterator<Item = usize>| vals.fold(0usize, |acc, a| acc * q + a);
    let mut best = BigRational::zero();
    for i in 0..total {
        let x = assignment(i, q, n);
        let mut hit = BigRational::zero();
        for sc in &scopes {
            hit += &weights[index(&mut sc.iter().map(|&v| x[v]))];
        }
        let mut matched = BigRational::zero();
        for tpl in &tuples {
            matched += &weights[index(&mut tpl.iter().map(|&v| x[v]))];
        }
        let val = (hit - &bg * matched).abs();
        if val > best {
            best = val;
        }
    }
    Ok(best)
}

/// Exhaustive `max_x |C_{S,β}(x)|` (unnormalized).
pub fn brute_deviation_max(inst: &Instance, rel: Option<usize>, subset: &[usize], beta: &[usize]) -> Result<BigRational> {
    let q = inst.q();
    let mut w = vec![BigRational::zero(); q.pow(subset.len() as u32)];
    w[beta.iter().fold(0usize, |acc, &a| acc * q + a)] = BigRational::one();
    brute_weighted_deviation_max(inst, rel, subset, &w, None)
}

pub fn to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// `μ_J ∝ Π_C f_C(b_{V(C)}) · ν^V(b)` as a dense exact table.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedDistribution {
    pub n: usize,
    pub q: usize,
    pub marginal: MarginalVector,
    pub table: Vec<BigRational>,
    pub normalizer: BigRational,
}

impl PlantedDistribution {
    /// Marginal on `vars`, indexed row-major over `D^{vars}`.
    pub fn project(&self, vars: &[usize]) -> Vec<BigRational> {
        let mut out = vec![BigRational::zero(); self.q.pow(vars.len() as u32)];
        for (i, p) in self.table.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let x = assignment(i as u128, self.q, self.n);
            let j = vars.iter().fold(0usize, |acc, &v| acc * self.q + x[v]);
            out[j] += p;
        }
        out
    }

    pub fn total_mass(&self) -> BigRational {
        self.table.iter().fold(BigRational::zero(), |a, p| a + p)
    }
}

fn nu_exact(nu: &MarginalVector) -> Vec<BigRational> {
    nu.counts
        .iter()
        .map(|&c| BigRational::new(BigInt::from(c), BigInt::from(nu.denom)))
        .collect()
}

fn check_independent(mu: &DistributionTable<BigRational>, nu: &[BigRational], t: usize) -> bool {
    let (q, k) = (mu.q, mu.arity);
    // every size-t marginal must be the product ν^t
    let mut w: Vec<usize> = (0..t).collect();
    loop {
        let mut marg = vec![BigRational::zero(); q.pow(t as u32)];
        for (i, p) in mu.probs.iter().enumerate() {
            let x = assignment(i as u128, q, k);
            marg[w.iter().fold(0usize, |acc, &c| acc * q + x[c])] += p;
        }
        for (j, m) in marg.iter().enumerate() {
            let b = assignment(j as u128, q, t);
            let prod = b.iter().fold(BigRational::one(), |acc, &a| acc * &nu[a]);
            if *m != prod {
                return false;
            }
        }
        // next combination
        let mut i = t;
        loop {
            if i == 0 {
                return true;
            }
            i -= 1;
            if w[i] < k - t + i {
                w[i] += 1;
                for j in i + 1..t {
                    w[j] = w[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Builds `μ_J` from one t-wise ν-independent distribution per relation.
pub fn planted_distribution(
    inst: &Instance,
    per_relation: &BTreeMap<usize, DistributionTable<BigRational>>,
    nu: &MarginalVector,
    t: usize,
) -> Result<PlantedDistribution> {
    let (n, q, k) = (inst.n, inst.q(), inst.k());
    let total = states(q, n)?;
    let nu_q = nu_exact(nu);
    let mut densities: BTreeMap<usize, Vec<BigRational>> = BTreeMap::new();
    for c in &inst.constraints {
        if densities.contains_key(&c.relation) {
            continue;
        }
        let mu = per_relation
            .get(&c.relation)
            .ok_or_else(|| Error::invalid(format!("no distribution for relation {}", c.relation)))?;
        if mu.arity != k || mu.q != q {
            return Err(Error::invalid("distribution shape differs from the family"));
        }
        if !check_independent(mu, &nu_q, t) {
            return Err(Error::Precondition(format!("distribution for relation {} is not {t}-wise ν-independent", c.relation)));
        }
        let f = mu
            .probs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let x = assignment(i as u128, q, k);
                let base = x.iter().fold(BigRational::one(), |acc, &a| acc * &nu_q[a]);
                if base.is_zero() {
                    BigRational::zero()
                } else {
                    p / base
                }
            })
            .collect();
        densities.insert(c.relation, f);
    }
    let mut table = Vec::with_capacity(total as usize);
    let mut z = BigRational::zero();
    for i in 0..total {
        let x = assignment(i, q, n);
        let mut w = x.iter().fold(BigRational::one(), |acc, &a| acc * &nu_q[a]);
        for c in &inst.constraints {
            if w.is_zero() {
                break;
            }
            let j = c.scope.iter().fold(0usize, |acc, &v| acc * q + x[v as usize]);
            w *= &densities[&c.relation][j];
        }
        z += &w;
        table.push(w);
    }
    if z.is_zero() {
        return Err(Error::Degenerate("the planted distribution has zero normalizer".into()));
    }
    for p in &mut table {
        *p /= &z;
    }
    Ok(PlantedDistribution {
        n,
        q,
        marginal: nu.clone(),
        table,
        normalizer: z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InvarianceOutcome {
    Equal,
    NotEqual,
    /// The overlap precondition fails, so the check says nothing.
    Vacuous,
}

/// Compares `π_S(μ_J)` with `π_S(μ_{J∖C})` for the constraint at `c_index`.
pub fn check_marginal_invariance(
    inst: &Instance,
    per_relation: &BTreeMap<usize, DistributionTable<BigRational>>,
    nu: &MarginalVector,
    t: usize,
    subset: &[usize],
    c_index: usize,
) -> Result<InvarianceOutcome> {
    if c_index >= inst.constraints.len() {
        return Err(Error::invalid("constraint index out of range"));
    }
    let vc: BTreeSet<usize> = inst.constraints[c_index].scope.iter().map(|&v| v as usize).collect();
    let mut others: BTreeSet<usize> = subset.iter().copied().collect();
    for (i, c) in inst.constraints.iter().enumerate() {
        if i != c_index {
            others.extend(c.scope.iter().map(|&v| v as usize));
        }
    }
    if vc.intersection(&others).count() > t {
        return Ok(InvarianceOutcome::Vacuous);
    }
    let with = planted_distribution(inst, per_relation, nu, t)?;
    let mut rest = inst.clone();
    rest.constraints.remove(c_index);
    let without = planted_distribution(&rest, per_relation, nu, t)?;
    Ok(if with.project(subset) == without.project(subset) {
        InvarianceOutcome::Equal
    } else {
        InvarianceOutcome::NotEqual
    })
}

/// Whether removing `r` disconnects `s` from `t` in the clique graph of the scopes.
pub fn separates(inst: &Instance, s: &[usize], t: &[usize], r: &[usize]) -> bool {
    let n = inst.n;
    let blocked: BTreeSet<usize> = r.iter().copied().collect();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for c in &inst.constraints {
        for &a in &c.scope {
            for &b in &c.scope {
                if a != b {
                    adj[a as usize].insert(b as usize);
                }
            }
        }
    }
    let targets: BTreeSet<usize> = t.iter().copied().filter(|v| !blocked.contains(v)).collect();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &v in s {
        if !blocked.contains(&v) && !seen[v] {
            seen[v] = true;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        if targets.contains(&v) {
            return false;
        }
        for &u in &adj[v] {
            if !blocked.contains(&u) && !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    true
}

/// Exact check that `b_S` and `b_T` are independent given `b_R` under `μ_J`.
pub fn check_separator_independence(
    inst: &Instance,
    per_relation: &BTreeMap<usize, DistributionTable<BigRational>>,
    nu: &MarginalVector,
    t: usize,
    s: &[usize],
    tt: &[usize],
    r: &[usize],
) -> Result<bool> {
    if !separates(inst, s, tt, r) {
        return Err(Error::Precondition("R does not separate S from T".into()));
    }
    let mu = planted_distribution(inst, per_relation, nu, t)?;
    let union: Vec<usize> = s.iter().chain(tt).chain(r).copied().collect::<BTreeSet<_>>().into_iter().collect();
    let pos = |v: usize| union.iter().position(|&u| u == v).expect("variable in union");
    let joint = mu.project(&union);
    let q = mu.q;
    let sub = |vars: &[usize]| -> (Vec<usize>, Vec<BigRational>) {
        let vs: Vec<usize> = vars.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let p = mu.project(&vs);
        (vs, p)
    };
    let sr: Vec<usize> = s.iter().chain(r).copied().collect();
    let tr: Vec<usize> = tt.iter().chain(r).copied().collect();
    let (v_sr, p_sr) = sub(&sr);
    let (v_tr, p_tr) = sub(&tr);
    let (v_r, p_r) = sub(r);
    let idx = |x: &[usize], vars: &[usize]| vars.iter().fold(0usize, |acc, &v| acc * q + x[pos(v)]);
    for (j, pj) in joint.iter().enumerate() {
        let x = assignment(j as u128, q, union.len());
        let lhs = pj * &p_r[idx(&x, &v_r)];
        let rhs = &p_sr[idx(&x, &v_sr)] * &p_tr[idx(&x, &v_tr)];
        if lhs != rhs {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalRow {
    pub n: usize,
    pub m_expected: f64,
    pub gaps: Vec<f64>,
    pub median_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub reference: f64,
    pub rows: Vec<EmpiricalRow>,
}

/// `|brute_opt − opt_k(ρ)|` on sampled instances of growing size.
pub fn empirical_opt_check(
    family: &RelationFamily,
    t: usize,
    n_list: &[usize],
    m_rule: impl Fn(usize) -> f64,
    seeds: &[u64],
) -> Result<EmpiricalReport> {
    let reference = crate::twise::opt_t(family, t, 0.05, &OptTOptions::default())?.value;
    let mut rows = Vec::new();
    for &n in n_list {
        states(family.q(), n)?;
        let m = m_rule(n);
        let mut gaps = Vec::new();
        for &seed in seeds {
            let inst = sample_instance(family, n, m, seed)?;
            if inst.m() == 0 {
                continue;
            }
            let (opt, _) = brute_opt(&inst)?;
            gaps.push((opt - reference).abs());
        }
        let median_gap = crate::spectral::median(&gaps);
        rows.push(EmpiricalRow {
            n,
            m_expected: m,
            gaps,
            median_gap,
        });
    }
    Ok(EmpiricalReport { reference, rows })
}

fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &v)| {
        let mut row = r.clone();
        row.push(v);
        row
    }).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Row-reduces `A x = b`, dropping dependent rows.
fn independent_rows(a: &[Vec<f64>], b: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut out_a, mut out_b) = (Vec::new(), Vec::new());
    for (row, &rhs) in a.iter().zip(b) {
        let mut r = row.clone();
        r.push(rhs);
        for bv in &basis {
            let lead = bv.iter().position(|v| v.abs() > 1e-12).expect("nonzero basis row");
            let f = r[lead] / bv[lead];
            if f != 0.0 {
                for (x, y) in r.iter_mut().zip(bv) {
                    *x -= f * y;
                }
            }
        }
        if r[..row.len()].iter().any(|v| v.abs() > 1e-9) {
            basis.push(r);
            out_a.push(row.clone());
            out_b.push(rhs);
        }
    }
    (out_a, out_b)
}

/// `max cᵀx` over `{A x = b, x ≥ 0}` by enumerating basic solutions.
pub fn vertex_enumeration_max(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<Option<f64>> {
    let (a, b) = independent_rows(a, b);
    let vars = c.len();
    let r = a.len();
    if crate::combinat::binomial(vars as u64, r as u64) > 5_000_000 {
        return Err(Error::limit("vertex enumeration", format!("C({vars},{r}) bases"), 5_000_000));
    }
    let mut best: Option<f64> = None;
    let mut cols: Vec<usize> = (0..r).collect();
    loop {
        let sq: Vec<Vec<f64>> = a.iter().map(|row| cols.iter().map(|&j| row[j]).collect()).collect();
        if let Some(x) = gauss_solve(&sq, &b) {
            if x.iter().all(|&v| v >= -1e-10) {
                let val: f64 = cols.iter().zip(&x).map(|(&j, v)| c[j] * v).sum();
                best = Some(best.map_or(val, |b: f64| b.max(val)));
            }
        }
        if !crate::combinat::next_combination(&mut cols, vars) {
            break;
        }
    }
    Ok(best)
}

/// Fixed-marginal primal value of `rel` at `ν` via vertex enumeration.
pub fn primal_by_vertices(rel: &Relation, nu: &[f64], t: usize) -> Result<f64> {
    let (q, k) = (rel.q, rel.arity);
    let size = q.pow(k as u32);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut w: Vec<usize> = (0..t).collect();
    loop {
        for j in 0..q.pow(t as u32) {
            let bj = assignment(j as u128, q, t);
            let row: Vec<f64> = (0..size)
                .map(|i| {
                    let x = assignment(i as u128, q, k);
                    if w.iter().zip(&bj).all(|(&c, &v)| x[c] == v) { 1.0 } else { 0.0 }
                })
                .collect();
            a.push(row);
            b.push(bj.iter().map(|&v| nu[v]).product());
        }
        if !crate::combinat::next_combination(&mut w, k) {
            break;
        }
    }
    let c: Vec<f64> = (0..size).map(|i| if rel.contains_index(i) { 1.0 } else { 0.0 }).collect();
    vertex_enumeration_max(&a, &b, &c)?.ok_or_else(|| Error::Lp("infeasible".into()))
}

/// Strings of length `k` with independent bits equal to 1 with probability `p`.
pub fn sample_biased_strings(k: usize, p: f64, count: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: BTreeSet<Vec<u8>> = BTreeSet::new();
    for _ in 0..count {
        out.insert((0..k).map(|_| u8::from(rng.gen::<f64>() < p)).collect());
    }
    out.into_iter().collect()
}

/// `Σ_{i<j} (1 − 2a_i)(1 − 2a_j)`, evaluated term by term.
pub fn pairwise_character_sum(a: &[u8]) -> i64 {
    let chi: Vec<i64> = a.iter().map(|&v| 1 - 2 * v as i64).collect();
    let mut s = 0;
    for i in 0..chi.len() {
        for j in i + 1..chi.len() {
            s += chi[i] * chi[j];
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::Constraint;
    use crate::twise::supported_independent_distribution;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn deviation_oracle_examples() {
        let fam = RelationFamily::single(Relation::neq(2));
        let inst = Instance::new(4, vec![Constraint { scope: vec![0, 1], relation: 0 }], fam.clone()).unwrap();
        let v = brute_deviation_max(&inst, None, &[0, 1], &[0, 1]).unwrap();
        // x = (0,1,1,1): the edge hits and only 3 distinct pairs match
        assert_eq!(v, rat(3, 4));
        let mut cs = Vec::new();
        for a in 0..4u32 {
            for b in 0..4u32 {
                if a != b {
                    cs.push(Constraint { scope: vec![a, b], relation: 0 });
                }
            }
        }
        let full = Instance::new(4, cs, fam).unwrap();
        assert_eq!(brute_deviation_max(&full, None, &[0, 1], &[1, 0]).unwrap(), rat(0, 1));
    }

    fn pairwise_uniform_xor() -> DistributionTable<BigRational> {
        let rel = Relation::parity(3, 0);
        supported_independent_distribution::<BigRational>(&rel, &MarginalVector::uniform(2), 2)
            .unwrap()
            .unwrap()
    }

    #[test]
    fn planted_examples() {
        let fam = RelationFamily::single(Relation::parity(3, 0));
        let mut per = BTreeMap::new();
        per.insert(0, pairwise_uniform_xor());
        let nu = MarginalVector::uniform(2);
        let empty = Instance::new(4, vec![], fam.clone()).unwrap();
        let mu = planted_distribution(&empty, &per, &nu, 2).unwrap();
        assert!(mu.table.iter().all(|p| *p == rat(1, 16)));
        let one = Instance::new(4, vec![Constraint { scope: vec![2, 0, 3], relation: 0 }], fam).unwrap();
        let mu = planted_distribution(&one, &per, &nu, 2).unwrap();
        assert_eq!(mu.total_mass(), rat(1, 1));
        assert_eq!(mu.project(&[2, 0, 3]), per[&0].probs);
    }

    #[test]
    fn separator_examples() {
        let fam = RelationFamily::single(Relation::parity(3, 0));
        let mut per = BTreeMap::new();
        per.insert(0, pairwise_uniform_xor());
        let nu = MarginalVector::uniform(2);
        let path = Instance::new(
            5,
            vec![
                Constraint { scope: vec![0, 1, 2], relation: 0 },
                Constraint { scope: vec![2, 3, 4], relation: 0 },
            ],
            fam,
        )
        .unwrap();
        assert!(check_separator_independence(&path, &per, &nu, 2, &[0], &[4], &[2]).unwrap());
        assert!(check_separator_independence(&path, &per, &nu, 2, &[2], &[4], &[2]).unwrap());
        assert!(matches!(
            check_separator_independence(&path, &per, &nu, 2, &[0], &[4], &[]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn vertex_oracle_matches_simple_lp() {
        // max x0 + 2 x1 s.t. x0 + x1 + x2 = 1
        let v = vertex_enumeration_max(&[vec![1.0, 1.0, 1.0]], &[1.0], &[1.0, 2.0, 0.0]).unwrap();
        assert_eq!(v, Some(2.0));
        let neq = primal_by_vertices(&Relation::neq(2), &[0.5, 0.5], 2).unwrap();
        assert!((neq - 0.5).abs() < 1e-12);
    }

    #[test]
    fn character_sum_closed_form() {
        for r in 0..=10usize {
            let a: Vec<u8> = (0..10).map(|i| u8::from(i < r)).collect();
            let k = 10i64;
            let rr = r as i64;
            assert_eq!(pairwise_character_sum(&a), ((k - 2 * rr).pow(2) - k) / 2);
        }
    }
}
