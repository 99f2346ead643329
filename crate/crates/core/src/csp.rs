//! Domains, relations, instances, random generation and value evaluation.

use num_rational::BigRational;
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinat::{binomial, decode_tuple, encode_tuple, odometer_next, unrank_combination};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default cap on the number of assignments scanned by exhaustive routines.
pub const DEFAULT_STATE_CAP: u128 = 1 << 24;

/// Exhaustive-search cap, overridable through `REFUTER_CAP_STATES`.
pub fn state_cap() -> u128 {
    std::env::var("REFUTER_CAP_STATES")
        .ok()
        .and_then(|s| s.trim().parse::<u128>().ok())
        .filter(|&c| c > 0)
        .unwrap_or(DEFAULT_STATE_CAP)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub size: usize,
    pub labels: Vec<String>,
}

impl DomainSpec {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let d = DomainSpec {
            size: labels.len(),
            labels,
        };
        d.validate()?;
        Ok(d)
    }

    /// Domain `{0, 1, ..., q-1}` labelled by the decimal digits.
    pub fn numeric(q: usize) -> Self {
        DomainSpec {
            size: q,
            labels: (0..q).map(|a| a.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::invalid("domain must be nonempty"));
        }
        if self.labels.len() != self.size {
            return Err(Error::invalid("domain label count differs from its size"));
        }
        let mut sorted = self.labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.size {
            return Err(Error::invalid("domain labels must be distinct"));
        }
        Ok(())
    }
}

/// A k-ary relation stored as a membership table over `D^k` in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub arity: usize,
    pub q: usize,
    pub membership: Vec<bool>,
}

impl Relation {
    pub fn from_table(arity: usize, q: usize, membership: Vec<bool>) -> Result<Self> {
        if arity < 2 {
            return Err(Error::invalid("relation arity must be at least 2"));
        }
        if membership.len() != q.pow(arity as u32) {
            return Err(Error::invalid("membership table length must be q^k"));
        }
        Ok(Relation {
            arity,
            q,
            membership,
        })
    }

    pub fn from_predicate(arity: usize, q: usize, pred: impl Fn(&[usize]) -> bool) -> Result<Self> {
        let size = q.pow(arity as u32);
        let table = (0..size).map(|i| pred(&decode_tuple(i, q, arity))).collect();
        Relation::from_table(arity, q, table)
    }

    pub fn from_tuples(arity: usize, q: usize, tuples: &[Vec<usize>]) -> Result<Self> {
        let mut table = vec![false; q.pow(arity as u32)];
        for t in tuples {
            if t.len() != arity || t.iter().any(|&v| v >= q) {
                return Err(Error::invalid(format!("tuple {t:?} is not in D^{arity}")));
            }
            table[encode_tuple(t.iter().copied(), q)] = true;
        }
        Relation::from_table(arity, q, table)
    }

    pub fn table_len(&self) -> usize {
        self.membership.len()
    }

    pub fn contains(&self, tuple: &[usize]) -> bool {
        self.membership[encode_tuple(tuple.iter().copied(), self.q)]
    }

    pub fn contains_index(&self, index: usize) -> bool {
        self.membership[index]
    }

    /// Satisfying tuples in lexicographic order.
    pub fn satisfying(&self) -> Vec<Vec<usize>> {
        (0..self.table_len())
            .filter(|&i| self.membership[i])
            .map(|i| decode_tuple(i, self.q, self.arity))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.membership.iter().filter(|&&b| b).count()
    }

    pub fn full(arity: usize, q: usize) -> Self {
        Relation::from_table(arity, q, vec![true; q.pow(arity as u32)]).expect("valid shape")
    }

    pub fn empty(arity: usize, q: usize) -> Self {
        Relation::from_table(arity, q, vec![false; q.pow(arity as u32)]).expect("valid shape")
    }

    /// Boolean not-equal (`x1 != x2`).
    pub fn neq(q: usize) -> Self {
        Relation::from_predicate(2, q, |x| x[0] != x[1]).expect("valid shape")
    }

    pub fn equality(arity: usize, q: usize) -> Self {
        Relation::from_predicate(arity, q, |x| x.iter().all(|&v| v == x[0])).expect("valid shape")
    }

    /// Exactly one coordinate equals 1 (boolean).
    pub fn one_in_three() -> Self {
        Relation::from_predicate(3, 2, |x| x.iter().sum::<usize>() == 1).expect("valid shape")
    }

    pub fn not_all_equal(arity: usize) -> Self {
        Relation::from_predicate(arity, 2, |x| !x.iter().all(|&v| v == x[0])).expect("valid shape")
    }

    pub fn parity(arity: usize, rhs: usize) -> Self {
        Relation::from_predicate(arity, 2, |x| x.iter().sum::<usize>() % 2 == rhs).expect("valid shape")
    }

    pub fn or(arity: usize) -> Self {
        Relation::from_predicate(arity, 2, |x| x.iter().any(|&v| v == 1)).expect("valid shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationFamily {
    pub domain: DomainSpec,
    pub relations: Vec<Relation>,
    pub weights: Vec<f64>,
}

impl RelationFamily {
    pub fn new(domain: DomainSpec, relations: Vec<Relation>, weights: Vec<f64>) -> Result<Self> {
        let fam = RelationFamily {
            domain,
            relations,
            weights,
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn single(relation: Relation) -> Self {
        let q = relation.q;
        RelationFamily::new(DomainSpec::numeric(q), vec![relation], vec![1.0]).expect("valid family")
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.relations.is_empty() {
            return Err(Error::invalid("family needs at least one relation"));
        }
        if self.weights.len() != self.relations.len() {
            return Err(Error::invalid("one weight per relation required"));
        }
        let k = self.relations[0].arity;
        for r in &self.relations {
            if r.arity != k {
                return Err(Error::invalid("all relations must share one arity"));
            }
            if r.q != self.domain.size {
                return Err(Error::invalid("relation table does not match the domain size"));
            }
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.domain.size
    }

    pub fn arity(&self) -> usize {
        self.relations[0].arity
    }

    /// Some `a` with `a^k` in every relation of positive weight.
    pub fn trivially_satisfying_value(&self) -> Option<usize> {
        let k = self.arity();
        (0..self.q()).find(|&a| {
            self.relations
                .iter()
                .zip(&self.weights)
                .all(|(r, &w)| w == 0.0 || r.contains(&vec![a; k]))
        })
    }

    /// Named built-in families: `neq`, `eq`, `1in3`, `nae3`, `xor3`, `or3`, `3col`.
    pub fn builtin(name: &str) -> Result<Self> {
        let rel = match name {
            "neq" | "maxcut" => Relation::neq(2),
            "eq" => Relation::equality(2, 2),
            "1in3" => Relation::one_in_three(),
            "nae3" => Relation::not_all_equal(3),
            "xor3" => Relation::parity(3, 0),
            "or3" => Relation::or(3),
            "3col" => Relation::neq(3),
            "full2" => Relation::full(2, 2),
            _ => return Err(Error::invalid(format!("unknown builtin family `{name}`"))),
        };
        Ok(RelationFamily::single(rel))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub scope: Vec<u32>,
    pub relation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub n: usize,
    pub constraints: Vec<Constraint>,
    pub family: RelationFamily,
    pub seed: u64,
    pub m_expected: Option<f64>,
}

impl Instance {
    pub fn new(n: usize, constraints: Vec<Constraint>, family: RelationFamily) -> Result<Self> {
        let inst = Instance {
            n,
            constraints,
            family,
            seed: 0,
            m_expected: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if self.n >= 1 << 16 {
            return Err(Error::invalid("at most 65535 variables are supported"));
        }
        let k = self.family.arity();
        for c in &self.constraints {
            if c.scope.len() != k {
                return Err(Error::invalid("constraint scope length differs from the arity"));
            }
            if c.relation >= self.family.relations.len() {
                return Err(Error::invalid("relation index out of range"));
            }
            if c.scope.iter().any(|&v| v as usize >= self.n) {
                return Err(Error::invalid("scope entry out of range"));
            }
            if !crate::combinat::is_injective(&c.scope) {
                return Err(Error::invalid("scope entries must be distinct"));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn q(&self) -> usize {
        self.family.q()
    }

    pub fn k(&self) -> usize {
        self.family.arity()
    }

    /// Constraints restricted to one relation, keeping variables and family.
    pub fn restrict_to_relation(&self, rel: usize) -> Instance {
        Instance {
            n: self.n,
            constraints: self
                .constraints
                .iter()
                .filter(|c| c.relation == rel)
                .cloned()
                .collect(),
            family: self.family.clone(),
            seed: self.seed,
            m_expected: self.m_expected.map(|m| m * self.family.weights[rel]),
        }
    }

    pub fn relation_count(&self, rel: usize) -> usize {
        self.constraints.iter().filter(|c| c.relation == rel).count()
    }

    pub fn satisfied_count(&self, x: &Assignment) -> usize {
        let q = self.q();
        self.constraints
            .iter()
            .filter(|c| {
                let idx = encode_tuple(c.scope.iter().map(|&v| x.values[v as usize]), q);
                self.family.relations[c.relation].contains_index(idx)
            })
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub values: Vec<usize>,
}

impl Assignment {
    pub fn new(values: Vec<usize>) -> Self {
        Assignment { values }
    }

    pub fn validate(&self, n: usize, q: usize) -> Result<()> {
        if self.values.len() != n || self.values.iter().any(|&v| v >= q) {
            return Err(Error::invalid("assignment length or values out of range"));
        }
        Ok(())
    }
}

/// A rational point of the probability simplex, `probs[a] = counts[a] / denom`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MarginalVector {
    pub counts: Vec<u64>,
    pub denom: u64,
}

impl MarginalVector {
    pub fn new(counts: Vec<u64>, denom: u64) -> Result<Self> {
        if denom == 0 || counts.is_empty() {
            return Err(Error::invalid("marginal needs a positive denominator and q >= 1"));
        }
        if counts.iter().sum::<u64>() != denom {
            return Err(Error::invalid("marginal counts must sum to the denominator"));
        }
        Ok(MarginalVector { counts, denom })
    }

    pub fn uniform(q: usize) -> Self {
        MarginalVector {
            counts: vec![1; q],
            denom: q as u64,
        }
    }

    pub fn point_mass(q: usize, a: usize) -> Self {
        let mut counts = vec![0; q];
        counts[a] = 1;
        MarginalVector { counts, denom: 1 }
    }

    /// Rounds a probability vector to denominator `10^9`, preserving an exact total.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("not a probability vector"));
        }
        const DEN: u64 = 1_000_000_000;
        let mut counts: Vec<u64> = probs.iter().map(|&p| (p * DEN as f64).round() as u64).collect();
        let sum: u64 = counts.iter().sum();
        let top = (0..counts.len()).max_by_key(|&i| counts[i]).unwrap_or(0);
        counts[top] = (counts[top] + DEN).saturating_sub(sum);
        MarginalVector::new(counts, DEN)
    }

    pub fn q(&self) -> usize {
        self.counts.len()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.denom as f64)
            .collect()
    }

    pub fn prob<T: Scalar>(&self, a: usize) -> T {
        T::from_ratio(self.counts[a] as i64, self.denom as i64)
    }

    pub fn exact(&self) -> Vec<BigRational> {
        (0..self.q()).map(|a| self.prob::<BigRational>(a)).collect()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.q()).filter(|&a| self.counts[a] > 0).collect()
    }

    /// Probabilities reduced to lowest terms, for canonical comparisons.
    pub fn reduced(&self) -> MarginalVector {
        let g = self
            .counts
            .iter()
            .fold(self.denom, |g, &c| num_integer::gcd(g, c));
        MarginalVector {
            counts: self.counts.iter().map(|&c| c / g).collect(),
            denom: self.denom / g,
        }
    }

    pub fn l1_distance(&self, other: &MarginalVector) -> f64 {
        self.probs()
            .iter()
            .zip(other.probs())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Samples a binomial random instance.
///
/// Each undirected k-subset is kept independently with probability
/// `min(1, m_expected / C(n,k))`. Stream 0 of a ChaCha8 generator seeded with
/// `seed` drives the inclusion decisions (geometric skips over subsets in
/// lexicographic rank order); stream `i + 1` drives the orientation and the
/// relation of the `i`-th kept subset, so the output is reproducible and each
/// constraint can be generated independently.
pub fn sample_instance(family: &RelationFamily, n: usize, m_expected: f64, seed: u64) -> Result<Instance> {
    family.validate()?;
    let k = family.arity();
    if n < k {
        return Err(Error::invalid(format!("n = {n} is smaller than the arity {k}")));
    }
    if n >= 1 << 16 {
        return Err(Error::invalid("at most 65535 variables are supported"));
    }
    if !(m_expected >= 0.0) || !m_expected.is_finite() {
        return Err(Error::invalid("m_expected must be a nonnegative number"));
    }
    let total = binomial(n as u64, k as u64);
    if total > 1u128 << 60 {
        return Err(Error::limit("sample_instance", format!("C({n},{k}) subsets"), "2^60"));
    }
    let p = (m_expected / total as f64).min(1.0);

    let mut ranks = Vec::new();
    if p >= 1.0 {
        ranks.extend(0..total);
    } else if p > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let log_q = (1.0 - p).ln();
        let mut pos: u128 = 0;
        loop {
            let u: f64 = 1.0 - rng.gen::<f64>();
            let skip = (u.ln() / log_q).floor();
            if skip >= (total - pos) as f64 {
                break;
            }
            pos += skip as u128;
            ranks.push(pos);
            pos += 1;
            if pos >= total {
                break;
            }
        }
    }

    let weights = WeightedIndex::new(&family.weights)
        .map_err(|e| Error::invalid(format!("relation weights: {e}")))?;
    let constraints = ranks
        .iter()
        .enumerate()
        .map(|(i, &rank)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let mut scope: Vec<u32> = unrank_combination(n, k, rank)
                .into_iter()
                .map(|v| v as u32)
                .collect();
            scope.shuffle(&mut rng);
            let relation = weights.sample(&mut rng);
            Constraint { scope, relation }
        })
        .collect();

    Ok(Instance {
        n,
        constraints,
        family: family.clone(),
        seed,
        m_expected: Some(m_expected),
    })
}

/// Fraction of constraints satisfied by `x`.
pub fn eval_value(inst: &Instance, x: &Assignment) -> Result<f64> {
    if inst.constraints.is_empty() {
        return Err(Error::UndefinedValue("instance has no constraints".into()));
    }
    x.validate(inst.n, inst.q())?;
    Ok(inst.satisfied_count(x) as f64 / inst.m() as f64)
}

/// Exhaustive maximum of the instance value; ties go to the lexicographically
/// smallest assignment.
pub fn brute_opt(inst: &Instance) -> Result<(f64, Assignment)> {
    brute_opt_with_cap(inst, state_cap())
}

pub fn brute_opt_with_cap(inst: &Instance, cap: u128) -> Result<(f64, Assignment)> {
    let q = inst.q();
    let states = (q as u128).checked_pow(inst.n as u32).unwrap_or(u128::MAX);
    if states > cap {
        return Err(Error::limit("brute_opt", format!("{q}^{}", inst.n), cap));
    }
    let mut x = vec![0usize; inst.n];
    let mut best = (0usize, x.clone());
    let mut first = true;
    loop {
        let a = Assignment { values: x.clone() };
        let s = inst.satisfied_count(&a);
        if first || s > best.0 {
            best = (s, x.clone());
            first = false;
        }
        if !odometer_next(&mut x, q) {
            break;
        }
    }
    let value = if inst.m() == 0 {
        0.0
    } else {
        best.0 as f64 / inst.m() as f64
    };
    Ok((value, Assignment { values: best.1 }))
}

pub fn marginal_vector(x: &Assignment, q: usize) -> Result<MarginalVector> {
    if x.values.is_empty() {
        return Err(Error::invalid("empty assignment has no marginal"));
    }
    let mut counts = vec![0u64; q];
    for &v in &x.values {
        if v >= q {
            return Err(Error::invalid("assignment value out of range"));
        }
        counts[v] += 1;
    }
    MarginalVector::new(counts, x.values.len() as u64)
}

/// Empirical fraction of constraints carrying each relation.
pub fn empirical_relation_distribution(inst: &Instance) -> Result<Vec<f64>> {
    if inst.constraints.is_empty() {
        return Err(Error::UndefinedValue("instance has no constraints".into()));
    }
    let mut counts = vec![0usize; inst.family.relations.len()];
    for c in &inst.constraints {
        counts[c.relation] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|c| c as f64 / inst.m() as f64)
        .collect())
}
