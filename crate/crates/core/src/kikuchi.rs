//! Deviation tensors, cross tensors, level-ℓ Kikuchi index spaces, indicator
//! lifts and the even/odd Kikuchi operators.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;
use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::ToPrimitive;

use crate::combinat::{
    binomial, binomial_big, decode_tuple, encode_tuple, falling, is_injective, next_combination, pack,
    pow_usize, rank_combination, unpack,
};
use crate::csp::{Assignment, Instance};
use crate::error::{Error, Result};
use crate::scalar::{f64_to_big_ratio, Scalar};

/// Hash map with a fixed hasher, so iteration (and float summation) order is
/// reproducible across processes.
pub type FixedMap<K, V> = HashMap<K, V, BuildHasherDefault<DefaultHasher>>;

/// Largest live index-space dimension that is enumerated row by row.
pub const INDEX_SPACE_CAP: u128 = 50_000_000;

/// How the per-ordered-tuple edge density `p_ord` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    /// `m_expected · ρ(R) / n^(k falling)`; falls back to `Realized` when the
    /// instance carries no expected count.
    Expected,
    /// Realized constraint count over `n^(k falling)`.
    Realized,
    /// An explicit rational `num / den`.
    Explicit { num: u64, den: u64 },
}

/// `C_S = sparse − background` over injective |S|-tuples.
#[derive(Debug, Clone)]
pub struct DeviationTensor<T> {
    pub n: usize,
    pub k: usize,
    pub subset: Vec<usize>,
    /// Sparse part keyed by packed tuples (all injective).
    pub sparse: FixedMap<u128, T>,
    /// Value subtracted at every injective tuple.
    pub background: T,
    pub p_ord: T,
    /// Constraints that contributed to the sparse part.
    pub m: usize,
    pub normalized: bool,
}

impl<T: Scalar> DeviationTensor<T> {
    /// A tensor with arbitrary sparse entries, for testing the operator identities.
    pub fn from_entries(n: usize, order: usize, entries: Vec<(Vec<u32>, T)>, background: T) -> Result<Self> {
        let mut sparse = FixedMap::default();
        for (tuple, v) in entries {
            if tuple.len() != order || !is_injective(&tuple) || tuple.iter().any(|&x| x as usize >= n) {
                return Err(Error::invalid(format!("tuple {tuple:?} is not an injective {order}-tuple")));
            }
            let e = sparse.entry(pack(&tuple)).or_insert_with(T::zero);
            *e = e.clone() + v;
        }
        Ok(DeviationTensor {
            n,
            k: order,
            subset: (0..order).collect(),
            sparse,
            background,
            p_ord: T::zero(),
            m: 0,
            normalized: false,
        })
    }

    pub fn order(&self) -> usize {
        self.subset.len()
    }

    pub fn entry(&self, tuple: &[u32]) -> T {
        if !is_injective(tuple) {
            return T::zero();
        }
        let base = self.sparse.get(&pack(tuple)).cloned().unwrap_or_else(T::zero);
        base - self.background.clone()
    }

    pub fn is_zero(&self) -> bool {
        let injective_count = falling(self.n as u64, self.order() as u64);
        if self.background.is_zero() {
            return self.sparse.values().all(|v| v.is_zero());
        }
        self.sparse.len() as u128 == injective_count
            && self.sparse.values().all(|v| *v == self.background)
    }

    /// Sum of all entries.
    pub fn total(&self) -> T {
        let count = falling(self.n as u64, self.order() as u64);
        let sparse = self.sparse.values().fold(T::zero(), |a, v| a + v.clone());
        sparse - self.background.clone() * T::from_i128(count as i128)
    }

    /// `Σ_γ C_S[γ]²` over injective tuples.
    pub fn sq_term(&self) -> T {
        let count = falling(self.n as u64, self.order() as u64);
        let b = self.background.clone();
        let mut total = T::zero();
        for v in self.sparse.values() {
            let d = v.clone() - b.clone();
            total = total + d.clone() * d;
        }
        let rest = count - self.sparse.len() as u128;
        total + b.clone() * b * T::from_i128(rest as i128)
    }

    /// Entries divided by `m` (no-op when already normalized or `m = 0`).
    pub fn normalized(&self) -> Self {
        if self.normalized || self.m == 0 {
            return self.clone();
        }
        let m = T::from_i64(self.m as i64);
        DeviationTensor {
            sparse: self.sparse.iter().map(|(k, v)| (*k, v.clone() / m.clone())).collect(),
            background: self.background.clone() / m,
            normalized: true,
            ..self.clone()
        }
    }

    /// `Σ_γ C_S[γ] w(x_γ)` with `w` a table over `D^{|S|}`.
    pub fn evaluate_weighted(&self, x: &[usize], q: usize, weights: &[T]) -> T {
        let s = self.order();
        let mut total = T::zero();
        for (key, v) in &self.sparse {
            let tuple = unpack(*key);
            let w = &weights[encode_tuple(tuple.iter().map(|&u| x[u as usize]), q)];
            if !w.is_zero() {
                total = total + v.clone() * w.clone();
            }
        }
        if !self.background.is_zero() {
            let mut counts = vec![0u64; q];
            for &a in x {
                counts[a] += 1;
            }
            let mut bg = T::zero();
            for (j, w) in weights.iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                let b = decode_tuple(j, q, s);
                bg = bg + w.clone() * T::from_i128(matching_tuples(&counts, &b) as i128);
            }
            total = total - self.background.clone() * bg;
        }
        total
    }

    /// `C_{S,β}(x)`.
    pub fn evaluate(&self, x: &[usize], q: usize, beta: &[usize]) -> T {
        let mut w = vec![T::zero(); pow_usize(q, beta.len())];
        w[encode_tuple(beta.iter().copied(), q)] = T::one();
        self.evaluate_weighted(x, q, &w)
    }
}

/// Number of injective tuples `γ` with `x_γ = b`, given the value counts of `x`.
pub fn matching_tuples(counts: &[u64], b: &[usize]) -> u128 {
    let mut mult = vec![0u64; counts.len()];
    for &a in b {
        mult[a] += 1;
    }
    counts
        .iter()
        .zip(&mult)
        .map(|(&c, &m)| falling(c, m))
        .product()
}

fn density_value<T: Scalar>(inst: &Instance, restrict_rel: Option<usize>, density: Density, realized: usize) -> T {
    let tuples = falling(inst.n as u64, inst.k() as u64) as i128;
    match density {
        Density::Explicit { num, den } => T::from_ratio(num as i64, den as i64),
        Density::Realized => T::from_i128(realized as i128) / T::from_i128(tuples),
        Density::Expected => match inst.m_expected {
            Some(m) => {
                let scale = restrict_rel.map_or(1.0, |r| inst.family.weights[r]);
                let total = crate::combinat::binomial(inst.n as u64, inst.k() as u64) as f64;
                // the sampler clamps inclusion at probability one
                let m = (m * scale).min(total * scale);
                T::from_big_ratio(&f64_to_big_ratio(m)) / T::from_i128(tuples)
            }
            None => T::from_i128(realized as i128) / T::from_i128(tuples),
        },
    }
}

/// Deviation tensor of the constraints (optionally of one relation) on the
/// coordinates `subset` of each scope.
pub fn build_deviation_tensor<T: Scalar>(
    inst: &Instance,
    subset: &[usize],
    restrict_rel: Option<usize>,
    density: Density,
) -> Result<DeviationTensor<T>> {
    let k = inst.k();
    if subset.is_empty() || subset.len() > k {
        return Err(Error::invalid(format!("|S| = {} must lie in 1..={k}", subset.len())));
    }
    if subset.iter().any(|&i| i >= k) || !subset.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("S must be an increasing list of coordinates below k"));
    }
    let mut sparse: FixedMap<u128, T> = FixedMap::default();
    let mut m = 0;
    let mut tuple = Vec::with_capacity(subset.len());
    for c in &inst.constraints {
        if restrict_rel.is_some_and(|r| r != c.relation) {
            continue;
        }
        m += 1;
        tuple.clear();
        tuple.extend(subset.iter().map(|&i| c.scope[i]));
        let e = sparse.entry(pack(&tuple)).or_insert_with(T::zero);
        *e = e.clone() + T::one();
    }
    let p_ord: T = density_value(inst, restrict_rel, density, m);
    let fanout = falling((inst.n - subset.len()) as u64, (k - subset.len()) as u64);
    Ok(DeviationTensor {
        n: inst.n,
        k,
        subset: subset.to_vec(),
        sparse,
        background: p_ord.clone() * T::from_i128(fanout as i128),
        p_ord,
        m,
        normalized: false,
    })
}

/// `C̃[α,γ] = Σ_t C[α,t] C[γ,t]` for `α ≠ γ`, kept in closed form.
///
/// With `C = A − b·1_inj`, every entry is
/// `AA[α,γ] − b Σ_{t∉γ} A[α,t] − b Σ_{t∉α} A[γ,t] + b² (n − |α ∪ γ|)`.
#[derive(Debug, Clone)]
pub struct CrossTensor<T> {
    pub n: usize,
    /// `|S|`; the cross tensor is indexed by pairs of `(|S|−1)`-tuples.
    pub order: usize,
    pub background: T,
    sparse: FixedMap<u128, T>,
    pair_sums: FixedMap<(u128, u128), T>,
    row_sums: FixedMap<u128, T>,
}

impl<T: Scalar> CrossTensor<T> {
    pub fn half_order(&self) -> usize {
        self.order - 1
    }

    fn a(&self, alpha: &[u32], t: u32) -> T {
        let mut full = alpha.to_vec();
        full.push(t);
        self.sparse.get(&pack(&full)).cloned().unwrap_or_else(T::zero)
    }

    pub fn entry(&self, alpha: &[u32], gamma: &[u32]) -> T {
        if alpha == gamma || !is_injective(alpha) || !is_injective(gamma) {
            return T::zero();
        }
        let (ka, kg) = (pack(alpha), pack(gamma));
        let mut total = self.pair_sums.get(&(ka, kg)).cloned().unwrap_or_else(T::zero);
        if self.background.is_zero() {
            return total;
        }
        let b = self.background.clone();
        let row = |key: u128, own: &[u32], other: &[u32]| -> T {
            let mut s = self.row_sums.get(&key).cloned().unwrap_or_else(T::zero);
            for &t in other {
                if !own.contains(&t) {
                    s = s - self.a(own, t);
                }
            }
            s
        };
        total = total - b.clone() * row(ka, alpha, gamma) - b.clone() * row(kg, gamma, alpha);
        let mut union: Vec<u32> = alpha.iter().chain(gamma).copied().collect();
        union.sort_unstable();
        union.dedup();
        let free = self.n as i64 - union.len() as i64;
        total + b.clone() * b * T::from_i64(free)
    }

    pub fn is_zero_tensor(&self) -> bool {
        self.background.is_zero()
            && self.pair_sums.values().all(|v| v.is_zero())
    }

    /// Every nonzero entry, for small `n`.
    pub fn materialize(&self) -> HashMap<(Vec<u32>, Vec<u32>), T> {
        let h = self.half_order();
        let mut out = HashMap::new();
        let tuples = injective_tuples(self.n, h);
        for a in &tuples {
            for g in &tuples {
                let v = self.entry(a, g);
                if !v.is_zero() {
                    out.insert((a.clone(), g.clone()), v);
                }
            }
        }
        out
    }

    /// `Σ_{α≠γ} C̃[α,γ] w(x_α, x_γ)` by direct enumeration (small `n`).
    pub fn evaluate_weighted(&self, x: &[usize], q: usize, pair_weights: &[T]) -> T {
        let h = self.half_order();
        let tuples = injective_tuples(self.n, h);
        let mut total = T::zero();
        for a in &tuples {
            let ia = encode_tuple(a.iter().map(|&v| x[v as usize]), q);
            for g in &tuples {
                let ig = encode_tuple(g.iter().map(|&v| x[v as usize]), q);
                let w = &pair_weights[ia * pow_usize(q, h) + ig];
                if w.is_zero() {
                    continue;
                }
                total = total + self.entry(a, g) * w.clone();
            }
        }
        total
    }
}

/// All injective tuples of the given length over `0..n`.
pub fn injective_tuples(n: usize, len: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; len];
    if len == 0 {
        return vec![Vec::new()];
    }
    loop {
        let t: Vec<u32> = cur.iter().map(|&v| v as u32).collect();
        if is_injective(&t) {
            out.push(t);
        }
        if !crate::combinat::odometer_next(&mut cur, n) {
            break;
        }
    }
    out
}

pub fn build_cross_tensor<T: Scalar>(c: &DeviationTensor<T>) -> Result<CrossTensor<T>> {
    let s = c.order();
    if s % 2 == 0 {
        return Err(Error::WrongMode(format!("cross tensors need odd |S|, got {s}")));
    }
    let mut by_last: std::collections::BTreeMap<u32, Vec<(u128, T)>> = Default::default();
    let mut row_sums: FixedMap<u128, T> = FixedMap::default();
    for (key, v) in &c.sparse {
        let tuple = unpack(*key);
        let (alpha, t) = tuple.split_at(s - 1);
        let ka = pack(alpha);
        by_last.entry(t[0]).or_default().push((ka, v.clone()));
        let e = row_sums.entry(ka).or_insert_with(T::zero);
        *e = e.clone() + v.clone();
    }
    let mut pair_sums: FixedMap<(u128, u128), T> = FixedMap::default();
    for list in by_last.values() {
        for (i, (ka, va)) in list.iter().enumerate() {
            for (j, (kg, vg)) in list.iter().enumerate() {
                if i == j {
                    continue;
                }
                let e = pair_sums.entry((*ka, *kg)).or_insert_with(T::zero);
                *e = e.clone() + va.clone() * vg.clone();
            }
        }
    }
    Ok(CrossTensor {
        n: c.n,
        order: s,
        background: c.background.clone(),
        sparse: c.sparse.clone(),
        pair_sums,
        row_sums,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// Label structure: even operators use one label per coordinate of `S`; odd
/// operators use two copies of `S′ = S ∖ {last}`, copy 1 first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub parity: Parity,
    pub order: usize,
    pub num_labels: usize,
    pub groups: Vec<Vec<usize>>,
    pub half: usize,
}

impl Layout {
    pub fn new(parity: Parity, order: usize) -> Result<Self> {
        match parity {
            Parity::Even => {
                if order == 0 || order % 2 == 1 {
                    return Err(Error::WrongMode(format!("even operators need even |S|, got {order}")));
                }
                Ok(Layout {
                    parity,
                    order,
                    num_labels: order,
                    groups: vec![(0..order).collect()],
                    half: order / 2,
                })
            }
            Parity::Odd => {
                if order < 3 || order % 2 == 0 {
                    return Err(Error::WrongMode(format!("odd operators need odd |S| >= 3, got {order}")));
                }
                let h = order - 1;
                Ok(Layout {
                    parity,
                    order,
                    num_labels: 2 * h,
                    groups: vec![(0..h).collect(), (h..2 * h).collect()],
                    half: h / 2,
                })
            }
        }
    }

    fn group_of(&self, label: usize) -> usize {
        match self.parity {
            Parity::Even => 0,
            Parity::Odd => label / (self.order - 1),
        }
    }

    /// Labels in `I Δ J`: `order` (even) or `2(order−1)` (odd).
    pub fn diff_size(&self) -> usize {
        self.num_labels
    }

    pub fn min_ell(&self) -> usize {
        self.half * self.groups.len()
    }
}

/// A Kikuchi index: `ℓ` triples `(v, a, label)` with distinct `(v, label)`
/// slots, stored sorted by slot `v·|L| + label`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KikuchiIndex {
    pub slots: Vec<u32>,
    pub values: Vec<u8>,
}

impl KikuchiIndex {
    pub fn triples(&self, num_labels: usize) -> Vec<(usize, usize, usize)> {
        let mut t: Vec<(usize, usize, usize)> = self
            .slots
            .iter()
            .zip(&self.values)
            .map(|(&s, &a)| (s as usize / num_labels, a as usize, s as usize % num_labels))
            .collect();
        t.sort_unstable();
        t
    }

    /// Canonical `v:a:label,...` form, triples in ascending order.
    pub fn serialize(&self, num_labels: usize) -> String {
        let mut out = String::new();
        for (i, (v, a, l)) in self.triples(num_labels).into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}:{a}:{l}");
        }
        out
    }
}

/// Live level-ℓ index space over `n` variables, `q` values and `num_labels` labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexSpace {
    pub n: usize,
    pub q: usize,
    pub num_labels: usize,
    pub ell: usize,
}

impl IndexSpace {
    pub fn slots(&self) -> usize {
        self.n * self.num_labels
    }

    pub fn dimension(&self) -> u128 {
        binomial(self.slots() as u64, self.ell as u64).saturating_mul((self.q as u128).saturating_pow(self.ell as u32))
    }

    pub fn rank(&self, idx: &KikuchiIndex) -> u128 {
        let slots: Vec<usize> = idx.slots.iter().map(|&s| s as usize).collect();
        let c = rank_combination(self.slots(), &slots);
        let v = encode_tuple(idx.values.iter().map(|&a| a as usize), self.q) as u128;
        c * (self.q as u128).pow(self.ell as u32) + v
    }

    /// Calls `f` on every live index.
    pub fn for_each(&self, mut f: impl FnMut(&KikuchiIndex)) {
        let total = self.slots();
        if self.ell > total {
            return;
        }
        let mut comb: Vec<usize> = (0..self.ell).collect();
        let mut idx = KikuchiIndex {
            slots: vec![0; self.ell],
            values: vec![0; self.ell],
        };
        loop {
            for (d, &c) in idx.slots.iter_mut().zip(&comb) {
                *d = c as u32;
            }
            let mut vals = vec![0usize; self.ell];
            loop {
                for (d, &v) in idx.values.iter_mut().zip(&vals) {
                    *d = v as u8;
                }
                f(&idx);
                if !crate::combinat::odometer_next(&mut vals, self.q) {
                    break;
                }
            }
            if !next_combination(&mut comb, total) {
                break;
            }
        }
    }
}

/// Support of the indicator lift of `x`: every live index whose values agree with `x`.
pub fn indicator_lift(x: &Assignment, ell: usize, num_labels: usize) -> Vec<KikuchiIndex> {
    let slots = x.values.len() * num_labels;
    let mut out = Vec::new();
    if ell > slots {
        return out;
    }
    let mut comb: Vec<usize> = (0..ell).collect();
    loop {
        out.push(KikuchiIndex {
            slots: comb.iter().map(|&s| s as u32).collect(),
            values: comb.iter().map(|&s| x.values[s / num_labels] as u8).collect(),
        });
        if !next_combination(&mut comb, slots) {
            break;
        }
    }
    out
}

/// Value of the indicator lift of `x` at an arbitrary index (triples may be
/// contradictory or repeat a slot, in which case the value is 0 or the index
/// is not live).
pub fn lift_value(x: &Assignment, triples: &[(usize, usize, usize)]) -> u8 {
    let mut seen = std::collections::HashSet::new();
    for &(v, a, l) in triples {
        if x.values[v] != a {
            return 0;
        }
        seen.insert((v, l));
    }
    u8::from(seen.len() == triples.len())
}

#[derive(Debug, Clone)]
enum Source<T> {
    Even(Arc<DeviationTensor<T>>),
    Odd(Arc<CrossTensor<T>>),
}

/// Symmetric Kikuchi operator `M[I,J] = C[V(IΔJ)] · w(D(IΔJ))` on well-behaved pairs.
#[derive(Debug, Clone)]
pub struct KikuchiOperator<T> {
    pub layout: Layout,
    pub space: IndexSpace,
    /// Table over `D^{|L|}`, labels in layout order.
    pub weights: Vec<T>,
    pub beta: Option<Vec<usize>>,
    source: Source<T>,
}

/// A compressed sparse row matrix over the active (nonzero) rows.
#[derive(Debug, Clone)]
pub struct Csr<T> {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<u32>,
    pub val: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col[lo..hi].binary_search(&(j as u32)) {
            Ok(p) => self.val[lo + p].clone(),
            Err(_) => T::zero(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.dim]; self.dim];
        for i in 0..self.dim {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[i][self.col[p] as usize] = self.val[p].clone();
            }
        }
        out
    }

    pub fn map_f64(&self) -> Csr<f64> {
        Csr {
            dim: self.dim,
            row_ptr: self.row_ptr.clone(),
            col: self.col.clone(),
            val: self.val.iter().map(Scalar::as_f64).collect(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).all(|p| self.get(self.col[p] as usize, i) == self.val[p])
        })
    }
}

/// An operator restricted to its active rows.
#[derive(Debug, Clone)]
pub struct AssembledOperator<T> {
    pub rows: Vec<KikuchiIndex>,
    pub matrix: Csr<T>,
    pub live_dimension: u128,
    pub num_labels: usize,
}

impl<T: Scalar> AssembledOperator<T> {
    /// Line-oriented `I<TAB>J<TAB>value` triplets, sorted by serialized indices.
    pub fn triplets(&self) -> String {
        let names: Vec<String> = self.rows.iter().map(|r| r.serialize(self.num_labels)).collect();
        let mut lines = Vec::with_capacity(self.matrix.nnz());
        for i in 0..self.matrix.dim {
            for p in self.matrix.row_ptr[i]..self.matrix.row_ptr[i + 1] {
                let v = &self.matrix.val[p];
                lines.push(format!("{}\t{}\t{:?}", names[i], names[self.matrix.col[p] as usize], v.as_f64()));
            }
        }
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

fn check_ell(layout: &Layout, ell: usize) -> Result<()> {
    if ell < layout.min_ell() {
        return Err(Error::invalid(format!(
            "ℓ = {ell} is below the minimum {} for |S| = {}",
            layout.min_ell(),
            layout.order
        )));
    }
    Ok(())
}

fn beta_weights<T: Scalar>(q: usize, labels: usize, beta_on_labels: &[usize]) -> Vec<T> {
    let mut w = vec![T::zero(); pow_usize(q, labels)];
    w[encode_tuple(beta_on_labels.iter().copied(), q)] = T::one();
    w
}

pub fn build_kikuchi_even<T: Scalar>(c: Arc<DeviationTensor<T>>, q: usize, beta: &[usize], ell: usize) -> Result<KikuchiOperator<T>> {
    let s = c.order();
    if beta.len() != s || beta.iter().any(|&a| a >= q) {
        return Err(Error::invalid("β must be an assignment to S"));
    }
    let w = beta_weights(q, s, beta);
    let mut op = build_kikuchi_even_weighted(c, q, w, ell)?;
    op.beta = Some(beta.to_vec());
    Ok(op)
}

pub fn build_kikuchi_even_weighted<T: Scalar>(
    c: Arc<DeviationTensor<T>>,
    q: usize,
    weights: Vec<T>,
    ell: usize,
) -> Result<KikuchiOperator<T>> {
    let layout = Layout::new(Parity::Even, c.order())?;
    check_ell(&layout, ell)?;
    if weights.len() != pow_usize(q, layout.num_labels) {
        return Err(Error::invalid("weight table must cover D^S"));
    }
    Ok(KikuchiOperator {
        space: IndexSpace {
            n: c.n,
            q,
            num_labels: layout.num_labels,
            ell,
        },
        layout,
        weights,
        beta: None,
        source: Source::Even(c),
    })
}

pub fn build_kikuchi_odd<T: Scalar>(ct: Arc<CrossTensor<T>>, q: usize, beta: &[usize], ell: usize) -> Result<KikuchiOperator<T>> {
    let s = ct.order;
    if beta.len() != s || beta.iter().any(|&a| a >= q) {
        return Err(Error::invalid("β must be an assignment to S"));
    }
    let prime = &beta[..s - 1];
    let doubled: Vec<usize> = prime.iter().chain(prime).copied().collect();
    let w = beta_weights(q, 2 * (s - 1), &doubled);
    let mut op = build_kikuchi_odd_weighted(ct, q, w, ell)?;
    op.beta = Some(beta.to_vec());
    Ok(op)
}

/// Odd operator with a weight table over `D^{S′} × D^{S′}` (copy 1 major).
pub fn build_kikuchi_odd_weighted<T: Scalar>(
    ct: Arc<CrossTensor<T>>,
    q: usize,
    pair_weights: Vec<T>,
    ell: usize,
) -> Result<KikuchiOperator<T>> {
    let layout = Layout::new(Parity::Odd, ct.order)?;
    check_ell(&layout, ell)?;
    if pair_weights.len() != pow_usize(q, layout.num_labels) {
        return Err(Error::invalid("weight table must cover D^{S′} × D^{S′}"));
    }
    Ok(KikuchiOperator {
        space: IndexSpace {
            n: ct.n,
            q,
            num_labels: layout.num_labels,
            ell,
        },
        layout,
        weights: pair_weights,
        beta: None,
        source: Source::Odd(ct),
    })
}

/// `C(n|L|, ℓ)`, the squared norm of every indicator lift.
pub fn lift_norm_sq(n: usize, num_labels: usize, ell: usize) -> BigInt {
    binomial_big((n * num_labels) as u64, ell as u64)
}

/// Binomial factor relating the lifted quadratic form to the polynomial.
pub fn identity_factor(parity: Parity, n: usize, order: usize, ell: usize) -> BigInt {
    match parity {
        Parity::Even => {
            binomial_big(((n - 1) * order) as u64, (ell - order / 2) as u64) * binomial_big(order as u64, (order / 2) as u64)
        }
        Parity::Odd => {
            let h = order - 1;
            let c = binomial_big(h as u64, (h / 2) as u64);
            binomial_big((2 * (n - 1) * h) as u64, (ell + 1 - order) as u64) * c.clone() * c
        }
    }
}

pub fn big_to_f64(v: &BigInt) -> f64 {
    v.to_f64().unwrap_or(f64::INFINITY)
}

impl<T: Scalar> KikuchiOperator<T> {
    pub fn parity(&self) -> Parity {
        self.layout.parity
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn live_dimension(&self) -> u128 {
        self.space.dimension()
    }

    pub fn identity_factor(&self) -> BigInt {
        identity_factor(self.layout.parity, self.space.n, self.layout.order, self.space.ell)
    }

    pub fn lift_norm_sq(&self) -> BigInt {
        lift_norm_sq(self.space.n, self.space.num_labels, self.space.ell)
    }

    fn entry_for(&self, verts_by_label: &[u32]) -> T {
        match &self.source {
            Source::Even(c) => c.entry(verts_by_label),
            Source::Odd(ct) => {
                let h = self.layout.order - 1;
                ct.entry(&verts_by_label[..h], &verts_by_label[h..])
            }
        }
    }

    /// Calls `f(J, M[I,J])` for every well-behaved `J` with a nonzero entry.
    ///
    /// When `fixed` is given, added triples must carry the value `fixed[v]`
    /// (used for quadratic forms against an indicator lift).
    pub fn for_each_neighbor(&self, i: &KikuchiIndex, fixed: Option<&[usize]>, mut f: impl FnMut(KikuchiIndex, T)) {
        let lay = &self.layout;
        let big_l = lay.num_labels;
        let q = self.space.q;
        let n = self.space.n;
        let ell = i.slots.len();
        let labels: Vec<usize> = i.slots.iter().map(|&s| s as usize % big_l).collect();
        let verts: Vec<u32> = i.slots.iter().map(|&s| s / big_l as u32).collect();
        let remove_count = lay.min_ell();

        let mut chosen: Vec<usize> = (0..remove_count).collect();
        if remove_count > ell {
            return;
        }
        let mut diff_vert = vec![0u32; big_l];
        let mut diff_val = vec![0usize; big_l];
        loop {
            // removal set must take `half` distinct labels from every group
            let mut ok = true;
            let mut used = vec![false; big_l];
            let mut per_group = vec![0usize; lay.groups.len()];
            for &e in &chosen {
                let l = labels[e];
                if used[l] {
                    ok = false;
                    break;
                }
                used[l] = true;
                per_group[lay.group_of(l)] += 1;
            }
            if ok && per_group.iter().all(|&c| c == lay.half) {
                for &e in &chosen {
                    diff_vert[labels[e]] = verts[e];
                    diff_val[labels[e]] = i.values[e] as usize;
                }
                let added: Vec<usize> = (0..big_l).filter(|&l| !used[l]).collect();
                let kept: Vec<usize> = (0..ell).filter(|e| !chosen.contains(e)).collect();
                let kept_slots: Vec<u32> = kept.iter().map(|&e| i.slots[e]).collect();
                self.enumerate_additions(
                    i, &kept, &kept_slots, &added, n, q, fixed, &mut diff_vert, &mut diff_val, &mut f,
                );
            }
            if !next_combination(&mut chosen, ell) {
                break;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate_additions(
        &self,
        i: &KikuchiIndex,
        kept: &[usize],
        kept_slots: &[u32],
        added: &[usize],
        n: usize,
        q: usize,
        fixed: Option<&[usize]>,
        diff_vert: &mut [u32],
        diff_val: &mut [usize],
        f: &mut impl FnMut(KikuchiIndex, T),
    ) {
        let big_l = self.layout.num_labels;
        let r = added.len();
        let mut vs = vec![0usize; r];
        loop {
            let slots: Vec<u32> = added
                .iter()
                .zip(&vs)
                .map(|(&l, &v)| (v * big_l + l) as u32)
                .collect();
            if slots.iter().all(|s| !kept_slots.contains(s)) {
                for (&l, &v) in added.iter().zip(&vs) {
                    diff_vert[l] = v as u32;
                }
                let entry = self.entry_for(diff_vert);
                if !entry.is_zero() {
                    let mut vals = vec![0usize; r];
                    loop {
                        let consistent = match fixed {
                            Some(x) => vs.iter().zip(&vals).all(|(&v, &a)| x[v] == a),
                            None => true,
                        };
                        if consistent {
                            for (&l, &a) in added.iter().zip(&vals) {
                                diff_val[l] = a;
                            }
                            let w = &self.weights[encode_tuple(diff_val.iter().copied(), q)];
                            if !w.is_zero() {
                                let mut elems: Vec<(u32, u8)> = kept
                                    .iter()
                                    .map(|&e| (i.slots[e], i.values[e]))
                                    .chain(slots.iter().zip(&vals).map(|(&s, &a)| (s, a as u8)))
                                    .collect();
                                elems.sort_unstable();
                                let j = KikuchiIndex {
                                    slots: elems.iter().map(|e| e.0).collect(),
                                    values: elems.iter().map(|e| e.1).collect(),
                                };
                                f(j, entry.clone() * w.clone());
                            }
                        }
                        if fixed.is_some() {
                            // only one value tuple can be consistent
                            let next: Vec<usize> = vs.iter().map(|&v| fixed.unwrap()[v]).collect();
                            if vals == next {
                                break;
                            }
                            vals = next;
                            continue;
                        }
                        if !crate::combinat::odometer_next(&mut vals, q) {
                            break;
                        }
                    }
                }
            }
            if !crate::combinat::odometer_next(&mut vs, n) {
                break;
            }
        }
    }

    /// `(x^{⊙ℓ})ᵀ M x^{⊙ℓ}`, evaluated matrix-free.
    pub fn quadratic_form_on_lift(&self, x: &Assignment) -> T {
        let mut total = T::zero();
        for idx in indicator_lift(x, self.space.ell, self.space.num_labels) {
            self.for_each_neighbor(&idx, Some(&x.values), |_, v| total = total.clone() + v);
        }
        total
    }

    /// Explicit sparse matrix over the active rows of the live index space.
    pub fn assemble(&self) -> Result<AssembledOperator<T>> {
        let dim = self.live_dimension();
        if dim > INDEX_SPACE_CAP {
            return Err(Error::limit("Kikuchi index space", dim, INDEX_SPACE_CAP));
        }
        let mut rows: Vec<(u128, KikuchiIndex, Vec<(u128, KikuchiIndex, T)>)> = Vec::new();
        self.space.for_each(|idx| {
            let mut nbrs = Vec::new();
            self.for_each_neighbor(idx, None, |j, v| nbrs.push((self.space.rank(&j), j, v)));
            if !nbrs.is_empty() {
                rows.push((self.space.rank(idx), idx.clone(), nbrs));
            }
        });
        rows.sort_by_key(|r| r.0);
        let id_of: HashMap<u128, u32> = rows.iter().enumerate().map(|(p, r)| (r.0, p as u32)).collect();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for (_, _, nbrs) in &rows {
            let mut entries: Vec<(u32, T)> = nbrs
                .iter()
                .map(|(r, _, v)| (*id_of.get(r).expect("Kikuchi operator is symmetric"), v.clone()))
                .collect();
            entries.sort_by_key(|e| e.0);
            let mut merged: Vec<(u32, T)> = Vec::with_capacity(entries.len());
            for (c, v) in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 = last.1.clone() + v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged {
                if !v.is_zero() {
                    col.push(c);
                    val.push(v);
                }
            }
            row_ptr.push(col.len());
        }
        Ok(AssembledOperator {
            rows: rows.into_iter().map(|r| r.1).collect(),
            matrix: Csr {
                dim: row_ptr.len() - 1,
                row_ptr,
                col,
                val,
            },
            live_dimension: dim,
            num_labels: self.space.num_labels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::{Constraint, Relation, RelationFamily};
    use crate::scalar::Rational128;

    fn r(n: i128, d: i128) -> Rational128 {
        Rational128::new(n, d)
    }

    fn neq_inst(n: usize, edges: &[(u32, u32)], m_expected: Option<f64>) -> Instance {
        let mut inst = Instance::new(
            n,
            edges
                .iter()
                .map(|&(a, b)| Constraint { scope: vec![a, b], relation: 0 })
                .collect(),
            RelationFamily::single(Relation::neq(2)),
        )
        .unwrap();
        inst.m_expected = m_expected;
        inst
    }

    #[test]
    fn single_constraint_tensor() {
        let inst = neq_inst(4, &[(0, 1)], Some(1.0));
        let c = build_deviation_tensor::<Rational128>(&inst, &[0, 1], None, Density::Expected).unwrap();
        assert_eq!(c.p_ord, r(1, 12));
        assert_eq!(c.entry(&[0, 1]), r(11, 12));
        assert_eq!(c.entry(&[1, 0]), r(-1, 12));
        assert_eq!(c.entry(&[2, 2]), r(0, 1));
        assert_eq!(c.total(), r(0, 1));
    }

    #[test]
    fn empty_and_complete_tensors() {
        let fam = RelationFamily::single(Relation::neq(2));
        let mut inst = Instance::new(5, vec![], fam.clone()).unwrap();
        inst.m_expected = Some(3.0);
        let c = build_deviation_tensor::<Rational128>(&inst, &[0], None, Density::Expected).unwrap();
        // background = p_ord · fan-out = (3/20) · 4
        assert_eq!(c.entry(&[2]), r(-3, 5));
        let mut cs = Vec::new();
        for a in 0..4u32 {
            for b in 0..4u32 {
                if a != b {
                    cs.push(Constraint { scope: vec![a, b], relation: 0 });
                }
            }
        }
        let inst = Instance::new(4, cs, fam).unwrap();
        for s in [vec![0], vec![1], vec![0, 1]] {
            let c = build_deviation_tensor::<Rational128>(&inst, &s, None, Density::Realized).unwrap();
            assert_eq!(c.p_ord, r(1, 1));
            assert!(c.is_zero());
        }
    }

    #[test]
    fn sq_term_examples() {
        let c = DeviationTensor::<Rational128>::from_entries(4, 3, vec![(vec![0, 1, 2], r(1, 2))], r(0, 1)).unwrap();
        assert_eq!(c.sq_term(), r(1, 4));
        let z = DeviationTensor::<Rational128>::from_entries(4, 3, vec![], r(0, 1)).unwrap();
        assert_eq!(z.sq_term(), r(0, 1));
    }

    #[test]
    fn cross_tensor_hand_expansion() {
        let fam = RelationFamily::single(Relation::one_in_three());
        let cs = vec![
            Constraint { scope: vec![0, 1, 4], relation: 0 },
            Constraint { scope: vec![2, 3, 4], relation: 0 },
        ];
        let inst = Instance::new(5, cs, fam).unwrap();
        let zero = build_deviation_tensor::<Rational128>(&inst, &[0, 1, 2], None, Density::Explicit { num: 0, den: 1 }).unwrap();
        let ct = build_cross_tensor(&zero).unwrap();
        let all = ct.materialize();
        assert_eq!(all.len(), 2);
        assert_eq!(all[&(vec![0, 1], vec![2, 3])], r(1, 1));
        let c = build_deviation_tensor::<Rational128>(&inst, &[0, 1, 2], None, Density::Realized).unwrap();
        assert_eq!(c.background, r(1, 30));
        let ct = build_cross_tensor(&c).unwrap();
        let b = r(1, 30);
        assert_eq!(ct.entry(&[0, 1], &[2, 3]), r(1, 1) - b * 2 + b * b);
        assert_eq!(ct.entry(&[0, 1], &[0, 1]), r(0, 1));
        // direct sum over t as an independent check
        let direct = |a: &[u32], g: &[u32]| {
            (0..5u32).fold(r(0, 1), |acc, t| {
                acc + c.entry(&[a[0], a[1], t]) * c.entry(&[g[0], g[1], t])
            })
        };
        for a in injective_tuples(5, 2) {
            for g in injective_tuples(5, 2) {
                if a != g {
                    assert_eq!(ct.entry(&a, &g), direct(&a, &g), "{a:?} {g:?}");
                }
            }
        }
        assert!(build_cross_tensor(&build_deviation_tensor::<Rational128>(&inst, &[0, 1], None, Density::Realized).unwrap()).is_err());
    }

    #[test]
    fn single_entry_cross_tensor_vanishes() {
        let c = DeviationTensor::<Rational128>::from_entries(5, 3, vec![(vec![0, 1, 2], r(3, 1))], r(0, 1)).unwrap();
        assert!(build_cross_tensor(&c).unwrap().materialize().is_empty());
    }

    #[test]
    fn lift_examples() {
        let x = Assignment::new(vec![0, 1]);
        let lift = indicator_lift(&x, 1, 1);
        let names: Vec<String> = lift.iter().map(|i| i.serialize(1)).collect();
        assert_eq!(names, vec!["0:0:0", "1:1:0"]);
        let x = Assignment::new(vec![1, 0, 1, 1]);
        assert_eq!(indicator_lift(&x, 2, 3).len() as u128, binomial(12, 2));
        assert_eq!(lift_value(&x, &[(0, 1, 0), (0, 0, 1)]), 0);
        assert_eq!(lift_value(&x, &[(0, 1, 0), (1, 0, 1)]), 1);
    }

    #[test]
    fn even_level_one_entries() {
        let inst = neq_inst(4, &[(0, 1), (2, 3), (1, 3)], None);
        let c = Arc::new(build_deviation_tensor::<Rational128>(&inst, &[0, 1], None, Density::Realized).unwrap());
        let op = build_kikuchi_even(c.clone(), 2, &[0, 1], 1).unwrap();
        let asm = op.assemble().unwrap();
        assert!(asm.matrix.is_symmetric());
        let find = |name: &str| asm.rows.iter().position(|r| r.serialize(2) == name).unwrap();
        for u in 0..4u32 {
            for v in 0..4u32 {
                if u != v {
                    let i = find(&format!("{u}:0:0"));
                    let j = find(&format!("{v}:1:1"));
                    assert_eq!(asm.matrix.get(i, j), c.entry(&[u, v]));
                }
            }
        }
        for bits in 0..16usize {
            let x = Assignment::new((0..4).map(|i| (bits >> i) & 1).collect());
            let lhs = op.quadratic_form_on_lift(&x);
            assert_eq!(lhs, c.evaluate(&x.values, 2, &[0, 1]) * r(2, 1));
        }
    }

    #[test]
    fn zero_tensor_gives_zero_operator() {
        let c = Arc::new(DeviationTensor::<Rational128>::from_entries(5, 2, vec![], r(0, 1)).unwrap());
        let op = build_kikuchi_even(c, 2, &[1, 1], 2).unwrap();
        assert_eq!(op.assemble().unwrap().matrix.nnz(), 0);
        let c = Arc::new(DeviationTensor::<Rational128>::from_entries(5, 3, vec![], r(0, 1)).unwrap());
        let ct = Arc::new(build_cross_tensor(&c).unwrap());
        let op = build_kikuchi_odd(ct, 2, &[0, 1, 0], 2).unwrap();
        assert_eq!(op.assemble().unwrap().matrix.nnz(), 0);
    }

    #[test]
    fn parity_and_level_checks() {
        let c = Arc::new(DeviationTensor::<Rational128>::from_entries(5, 3, vec![], r(0, 1)).unwrap());
        assert!(matches!(build_kikuchi_even(c.clone(), 2, &[0, 0, 0], 2), Err(Error::WrongMode(_))));
        let c2 = Arc::new(DeviationTensor::<Rational128>::from_entries(5, 4, vec![], r(0, 1)).unwrap());
        assert!(matches!(build_kikuchi_even(c2, 2, &[0; 4], 1), Err(Error::InvalidParameters(_))));
        let ct = Arc::new(build_cross_tensor(&c).unwrap());
        assert!(matches!(build_kikuchi_odd(ct, 2, &[0; 3], 1), Err(Error::InvalidParameters(_))));
    }

    #[test]
    fn triplet_export_is_sorted_and_symmetric() {
        let inst = neq_inst(3, &[(0, 1), (1, 2)], None);
        let c = Arc::new(build_deviation_tensor::<f64>(&inst, &[0, 1], None, Density::Realized).unwrap());
        let asm = build_kikuchi_even(c, 2, &[0, 1], 1).unwrap().assemble().unwrap();
        let text = asm.triplets();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines.windows(2).all(|w| w[0] <= w[1]));
        for l in &lines {
            let parts: Vec<&str> = l.split('\t').collect();
            assert!(lines.contains(&format!("{}\t{}\t{}", parts[1], parts[0], parts[2]).as_str()));
        }
    }
}
