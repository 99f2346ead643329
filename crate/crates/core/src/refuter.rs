//! End-to-end refutation: heavy/light split, deviation certificates, marginal
//! enumeration and the final certified bound.

use std::collections::BTreeMap;

use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinat::{decode_tuple, falling, subsets_of_size};
use crate::csp::{Instance, MarginalVector};
use crate::error::{Error, Result};
use crate::io::instance_digest;
use crate::kikuchi::{build_deviation_tensor, matching_tuples, Density};
use crate::scalar::Scalar;
use crate::spectral::{all_betas, certify_weighted, indicator_weights, CertOptions, DeviationCertificate, NormMode, TensorBundle};
use crate::twise::{
    character, grid_covering_radius, grid_size, simplex_grid, solve_dual, solve_dual_boolean, steps_for, subsets_up_to,
    DominatingPolynomial, FourierPolynomial, LpMode, DEFAULT_NET_CAP,
};

pub const CERTIFICATE_SCHEMA: &str = "csp-refute/certificate/v1";
/// Exact empirical marginals `counts / n` are enumerated up to this many points.
pub const EXACT_NET_CAP: u128 = 4096;
/// Added once to every bound to absorb floating-point summation error.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Indicator,
    Monomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitPolicy {
    /// Abort with a resource-limit error.
    Error,
    /// Charge the relation at value 1.
    MarkBad,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefuteOptions {
    pub t: usize,
    pub ell: usize,
    pub epsilon: f64,
    pub basis: Basis,
    pub norm_mode: NormMode,
    pub lp_mode: LpMode,
    /// Forces a grid net with this step instead of exact empirical marginals.
    pub net_step: Option<f64>,
    pub net_cap: u128,
    pub seed: u64,
    pub tol: f64,
    pub dense_cap: usize,
    pub limit_policy: LimitPolicy,
}

impl RefuteOptions {
    pub fn new(t: usize, ell: usize, epsilon: f64) -> Self {
        RefuteOptions {
            t,
            ell,
            epsilon,
            basis: Basis::Indicator,
            norm_mode: NormMode::Exact,
            lp_mode: LpMode::Auto,
            net_step: None,
            net_cap: DEFAULT_NET_CAP,
            seed: 0,
            tol: 1e-10,
            dense_cap: crate::spectral::DENSE_CAP,
            limit_policy: LimitPolicy::Error,
        }
    }
}

/// `δ = ε / (6 · 2^{q^k})`, clamped away from zero.
pub fn heavy_threshold(epsilon: f64, q: usize, k: usize) -> f64 {
    let states = (q as f64).powi(k as i32);
    (epsilon / (6.0 * 2f64.powf(states))).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone)]
pub struct HeavyClass {
    pub relation: usize,
    pub mass: f64,
    pub sub: Instance,
}

#[derive(Debug, Clone)]
pub struct HeavySplit {
    pub heavy: Vec<HeavyClass>,
    pub light: Vec<usize>,
    pub light_mass: f64,
}

/// Partitions constraints by relation; relations with empirical mass `≥ δ` are heavy.
pub fn heavy_split(inst: &Instance, delta: f64) -> Result<HeavySplit> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("heavy threshold {delta} must lie in (0, 1]")));
    }
    let m = inst.m();
    if m == 0 {
        return Err(Error::UndefinedValue("an instance without constraints has no value".into()));
    }
    let mut split = HeavySplit {
        heavy: Vec::new(),
        light: Vec::new(),
        light_mass: 0.0,
    };
    for r in 0..inst.family.relations.len() {
        let count = inst.relation_count(r);
        if count == 0 {
            continue;
        }
        let mass = count as f64 / m as f64;
        if mass >= delta {
            split.heavy.push(HeavyClass {
                relation: r,
                mass,
                sub: inst.restrict_to_relation(r),
            });
        } else {
            split.light.push(r);
            split.light_mass += mass;
        }
    }
    Ok(split)
}

fn cmp_marginals(a: &MarginalVector, b: &MarginalVector) -> std::cmp::Ordering {
    for (x, y) in a.counts.iter().zip(&b.counts) {
        let o = (*x as u128 * b.denom as u128).cmp(&(*y as u128 * a.denom as u128));
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Grid of step `δ_net` over the simplex; with `n` in the boolean case every
/// Hamming-weight marginal `j/n` is added too. Sorted, duplicates removed.
pub fn marginal_net(q: usize, delta_net: f64, n: Option<usize>, cap: u128) -> Result<Vec<MarginalVector>> {
    let steps = steps_for(delta_net)?;
    let size = grid_size(q, steps) + if q == 2 { n.unwrap_or(0) as u128 + 1 } else { 0 };
    if size > cap {
        return Err(Error::limit("marginal net", format!("{size} points"), cap));
    }
    let mut pts: Vec<MarginalVector> = simplex_grid(q, steps).into_iter().map(|m| m.reduced()).collect();
    if q == 2 {
        if let Some(n) = n.filter(|&n| n > 0) {
            pts.extend(simplex_grid(2, n as u64).into_iter().map(|m| m.reduced()));
        }
    }
    pts.sort_by(cmp_marginals);
    pts.dedup_by(|a, b| cmp_marginals(a, b).is_eq());
    Ok(pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RelationStatus {
    Certified,
    Bad { reason: String },
    Light,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationReport {
    pub relation: usize,
    pub mass: f64,
    pub m: usize,
    pub m_expected: Option<f64>,
    /// Expected over realized constraint count.
    pub edge_factor: f64,
    #[serde(flatten)]
    pub status: RelationStatus,
    pub max_cert_slack: f64,
    pub certification_budget: f64,
    pub budget_met: bool,
    pub certificate_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertKind {
    Beta,
    Character,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateEntry {
    pub id: usize,
    pub relation: usize,
    pub kind: CertKind,
    pub certificate: DeviationCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationPointBound {
    pub relation: usize,
    pub val_t: f64,
    /// Difference between the value under uniformly random distinct tuples and `val_t`.
    pub tuple_correction: f64,
    pub net_slack: f64,
    pub cert_slack: f64,
    pub dominance_deficit: f64,
    pub uncapped: f64,
    pub bound: f64,
    pub dual_l1: f64,
    pub combined_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetPoint {
    pub counts: Vec<u64>,
    pub denom: u64,
    pub probs: Vec<f64>,
    pub bound: f64,
    pub relations: Vec<RelationPointBound>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetKind {
    /// Every realizable empirical marginal `counts / n`.
    ExactMarginals,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetDescription {
    pub kind: NetKind,
    pub steps: u64,
    pub delta_net: f64,
    pub covering_radius: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub light: f64,
    pub certification: f64,
    pub net: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SlackItems {
    pub tuple_correction: f64,
    pub net: f64,
    pub certification: f64,
    pub dominance: f64,
    pub cap_adjustment: f64,
    pub light_mass: f64,
    pub bad_mass: f64,
    pub rounding: f64,
}

impl SlackItems {
    pub fn total(&self) -> f64 {
        self.tuple_correction
            + self.net
            + self.certification
            + self.dominance
            + self.cap_adjustment
            + self.light_mass
            + self.bad_mass
            + self.rounding
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoundnessMode {
    Certified,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefutationCertificate {
    pub schema: String,
    pub instance_digest: String,
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub k: usize,
    pub t: usize,
    pub ell: usize,
    pub epsilon: f64,
    pub basis: Basis,
    pub norm_mode: NormMode,
    pub exact_lp: bool,
    pub heavy_threshold: f64,
    pub budget: Budget,
    pub relations: Vec<RelationReport>,
    pub net: NetDescription,
    pub net_points: Vec<NetPoint>,
    pub deviation_certificates: Vec<CertificateEntry>,
    pub argmax: usize,
    pub base_value: f64,
    pub slack: SlackItems,
    pub total_slack: f64,
    pub final_bound: f64,
    pub soundness_mode: SoundnessMode,
}

impl RefutationCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RefutationCertificate = serde_json::from_str(text)?;
        if c.schema != CERTIFICATE_SCHEMA {
            return Err(Error::Format(format!("unsupported certificate schema `{}`", c.schema)));
        }
        Ok(c)
    }

    /// Re-derives the final bound from the per-point table and checks the slack arithmetic.
    pub fn check_consistency(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Format(msg));
        let best = self
            .net_points
            .iter()
            .map(|p| p.bound)
            .fold(f64::NEG_INFINITY, f64::max);
        if (best - self.final_bound).abs() > 1e-9 {
            return fail(format!("final bound {} differs from the best net point {best}", self.final_bound));
        }
        if (self.base_value + self.slack.total() - self.final_bound).abs() > 1e-9 {
            return fail("itemized slack does not add up to the final bound".into());
        }
        if (self.slack.total() - self.total_slack).abs() > 1e-9 {
            return fail("declared total slack differs from its items".into());
        }
        let entries: BTreeMap<usize, &CertificateEntry> = self.deviation_certificates.iter().map(|e| (e.id, e)).collect();
        for e in &self.deviation_certificates {
            let raw = e.certificate.recompute_raw(self.n);
            if (raw - e.certificate.raw_bound).abs() > 1e-9 * raw.abs().max(1.0) {
                return fail(format!("deviation certificate {} does not recompute", e.id));
            }
        }
        for p in &self.net_points {
            for r in &p.relations {
                if r.combined_ids.iter().any(|id| !entries.contains_key(id)) {
                    return fail("dangling certificate reference".into());
                }
            }
        }
        Ok(())
    }
}

/// Per-relation certified data that does not depend on the marginal.
struct RelationData {
    relation: usize,
    mass: f64,
    m: usize,
    m_expected: Option<f64>,
    bundles: BTreeMap<Vec<usize>, TensorBundle>,
    /// Per-β certificate ids keyed by `(S, β)`.
    beta_certs: BTreeMap<(Vec<usize>, Vec<usize>), usize>,
    /// Character certificate ids keyed by `S` (monomial basis).
    char_certs: BTreeMap<Vec<usize>, usize>,
}

enum Dual {
    Indicator(DominatingPolynomial<f64>, f64),
    Monomial(FourierPolynomial<f64>, f64),
}

fn dual_for(rel: &crate::csp::Relation, nu: &MarginalVector, t: usize, basis: Basis, exact: bool) -> Result<Dual> {
    Ok(match (basis, exact) {
        (Basis::Indicator, true) => {
            let d = solve_dual::<BigRational>(rel, nu, t)?;
            Dual::Indicator(d.to_f64(), d.dominance_deficit(rel).as_f64())
        }
        (Basis::Indicator, false) => {
            let d = solve_dual::<f64>(rel, nu, t)?;
            let def = d.dominance_deficit(rel);
            Dual::Indicator(d, def)
        }
        (Basis::Monomial, true) => {
            let d = solve_dual_boolean::<BigRational>(rel, nu, t)?;
            Dual::Monomial(d.to_f64(), d.dominance_deficit(rel).as_f64())
        }
        (Basis::Monomial, false) => {
            let d = solve_dual_boolean::<f64>(rel, nu, t)?;
            let def = d.dominance_deficit(rel);
            Dual::Monomial(d, def)
        }
    })
}

fn key_of(weights: &[f64]) -> Vec<u64> {
    weights.iter().map(|w| w.to_bits()).collect()
}

fn inj_expectation(counts: &[u64], n: usize, q: usize, weights: &[f64], s: usize) -> f64 {
    let denom = falling(n as u64, s as u64) as f64;
    if denom == 0.0 {
        return 0.0;
    }
    weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(j, w)| w * matching_tuples(counts, &decode_tuple(j, q, s)) as f64)
        .sum::<f64>()
        / denom
}

fn is_limit(e: &Error) -> bool {
    matches!(e, Error::ResourceLimit { .. })
}

/// Certifies `max_x Val(x) ≤ opt_t + slack` for an instance.
pub fn refute(inst: &Instance, opts: &RefuteOptions) -> Result<RefutationCertificate> {
    inst.validate()?;
    let (n, q, k, t, ell, eps) = (inst.n, inst.q(), inst.k(), opts.t, opts.ell, opts.epsilon);
    if t < 2 || t > k {
        return Err(Error::invalid(format!("t = {t} must lie in 2..={k}")));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if ell == 0 || ell + 1 < t {
        return Err(Error::invalid(format!("ℓ = {ell} must be at least max(1, t − 1) = {}", (t - 1).max(1))));
    }
    if opts.basis == Basis::Monomial && q != 2 {
        return Err(Error::WrongMode("the monomial basis needs a boolean domain".into()));
    }
    if n < k {
        return Err(Error::invalid("n must be at least k"));
    }
    let m = inst.m();
    let delta = heavy_threshold(eps, q, k);
    let split = heavy_split(inst, delta)?;
    let exact_lp = opts.lp_mode.is_exact(q, k);
    let budget = Budget {
        light: eps / 3.0,
        certification: eps / 3.0,
        net: eps / 3.0,
    };
    let cert_opts = CertOptions {
        ell,
        mode: opts.norm_mode,
        tol: opts.tol,
        seed: opts.seed,
        dense_cap: opts.dense_cap,
    };

    // Step 1: marginal-independent certificates per heavy relation.
    let mut entries: Vec<CertificateEntry> = Vec::new();
    let mut datas: Vec<RelationData> = Vec::new();
    let mut bad: Vec<(usize, f64, String)> = Vec::new();
    let subsets: Vec<Vec<usize>> = (1..=t).flat_map(|s| subsets_of_size(k, s)).collect();
    for class in &split.heavy {
        let r = class.relation;
        let prepared: Result<RelationData> = (|| {
            let mut bundles = BTreeMap::new();
            let m_exp = inst.m_expected.map(|me| me * inst.family.weights[r]);
            for s in &subsets {
                let tensor = build_deviation_tensor::<f64>(inst, s, Some(r), Density::Realized)?;
                bundles.insert(s.clone(), TensorBundle::new(tensor, q, m_exp)?);
            }
            let jobs: Vec<(Vec<usize>, Option<Vec<usize>>, Vec<f64>)> = subsets
                .iter()
                .flat_map(|s| {
                    let mut v: Vec<(Vec<usize>, Option<Vec<usize>>, Vec<f64>)> = all_betas(q, s.len())
                        .into_iter()
                        .map(|b| (s.clone(), Some(b.clone()), indicator_weights(q, &b)))
                        .collect();
                    if opts.basis == Basis::Monomial {
                        let w = (0..1usize << s.len())
                            .map(|j| character(&(0..s.len()).collect::<Vec<_>>(), &decode_tuple(j, 2, s.len())) as f64)
                            .collect();
                        v.push((s.clone(), None, w));
                    }
                    v
                })
                .collect();
            let certs = jobs
                .par_iter()
                .map(|(s, b, w)| certify_weighted(&bundles[s], w, b.clone(), &cert_opts))
                .collect::<Result<Vec<_>>>()?;
            let mut data = RelationData {
                relation: r,
                mass: class.mass,
                m: class.sub.m(),
                m_expected: m_exp,
                bundles,
                beta_certs: BTreeMap::new(),
                char_certs: BTreeMap::new(),
            };
            for ((s, b, _), c) in jobs.into_iter().zip(certs) {
                let id = entries.len();
                match b {
                    Some(b) => {
                        data.beta_certs.insert((s, b), id);
                        entries.push(CertificateEntry { id, relation: r, kind: CertKind::Beta, certificate: c });
                    }
                    None => {
                        data.char_certs.insert(s, id);
                        entries.push(CertificateEntry { id, relation: r, kind: CertKind::Character, certificate: c });
                    }
                }
            }
            Ok(data)
        })();
        match prepared {
            Ok(d) => datas.push(d),
            Err(e) if is_limit(&e) && opts.limit_policy == LimitPolicy::Error => return Err(e),
            Err(e) => bad.push((r, class.mass, e.to_string())),
        }
    }

    // Step 2: the marginal net and the dual polynomials at every point.
    let exact_points = grid_size(q, n as u64);
    let use_exact = opts.net_step.is_none() && exact_points <= EXACT_NET_CAP.min(opts.net_cap);
    let solve_all = |net: &[MarginalVector]| -> Result<Vec<Vec<Dual>>> {
        net.par_iter()
            .map(|nu| {
                datas
                    .iter()
                    .map(|d| dual_for(&inst.family.relations[d.relation], nu, t, opts.basis, exact_lp))
                    .collect::<Result<Vec<_>>>()
            })
            .collect()
    };
    let dual_lipschitz = |d: &Dual| -> f64 {
        match d {
            Dual::Indicator(p, _) => p.sup_norm_sum(),
            Dual::Monomial(p, _) => p.subsets.iter().zip(&p.coefficients).map(|(s, c)| c.abs() * s.len() as f64).sum(),
        }
    };
    let (net, duals, steps) = if use_exact {
        let net = simplex_grid(q, n as u64);
        let duals = solve_all(&net)?;
        (net, duals, n as u64)
    } else {
        let check = |steps: u64| -> Result<()> {
            let size = grid_size(q, steps);
            if size > opts.net_cap {
                return Err(Error::limit("refutation marginal net", format!("{size} points"), opts.net_cap));
            }
            Ok(())
        };
        match opts.net_step {
            Some(step) => {
                let steps = steps_for(step)?;
                check(steps)?;
                let net = simplex_grid(q, steps);
                let duals = solve_all(&net)?;
                (net, duals, steps)
            }
            None => {
                let mut steps = 2 * q as u64;
                loop {
                    check(steps)?;
                    let net = simplex_grid(q, steps);
                    let duals = solve_all(&net)?;
                    let b = duals.iter().flatten().map(dual_lipschitz).fold(1.0f64, f64::max);
                    let needed = steps_for((eps / (3.0 * t as f64 * b)).min(1.0 / (2.0 * q as f64)))?;
                    if needed <= steps {
                        break (net, duals, steps);
                    }
                    steps = needed;
                }
            }
        }
    };
    let radius = if use_exact { 0.0 } else { grid_covering_radius(q, steps) };

    // Step 3: combined certificates for the indicator coefficients.
    let mut combined: BTreeMap<(usize, Vec<usize>, Vec<u64>), usize> = BTreeMap::new();
    if opts.basis == Basis::Indicator {
        let mut jobs: Vec<(usize, Vec<usize>, Vec<f64>)> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for point in &duals {
            for (di, d) in point.iter().enumerate() {
                if let Dual::Indicator(p, _) = d {
                    for (w, c) in p.subsets.iter().zip(&p.coefficients) {
                        if c.iter().filter(|v| **v != 0.0).count() <= 1 {
                            continue;
                        }
                        let key = (di, w.clone(), key_of(c));
                        if seen.insert(key) {
                            jobs.push((di, w.clone(), c.clone()));
                        }
                    }
                }
            }
        }
        let results: Vec<Result<DeviationCertificate>> = jobs
            .par_iter()
            .map(|(di, w, c)| certify_weighted(&datas[*di].bundles[w], c, None, &cert_opts))
            .collect();
        for ((di, w, c), res) in jobs.into_iter().zip(results) {
            match res {
                Ok(cert) => {
                    let id = entries.len();
                    entries.push(CertificateEntry {
                        id,
                        relation: datas[di].relation,
                        kind: CertKind::Combined,
                        certificate: cert,
                    });
                    combined.insert((di, w, key_of(&c)), id);
                }
                // the per-β certificates still give a valid bound
                Err(e) if is_limit(&e) => {}
                Err(e) => return Err(e),
            }
        }
    }

    // Step 4: per-point bounds.
    let bad_mass: f64 = bad.iter().map(|b| b.1).sum();
    let mut points = Vec::with_capacity(net.len());
    for (nu, point) in net.iter().zip(&duals) {
        let mut rels = Vec::with_capacity(datas.len());
        let mut total = split.light_mass + bad_mass;
        for (di, (d, dual)) in datas.iter().zip(point).enumerate() {
            let tcorr_bound = |lip_inj: f64| lip_inj * (t * (t - 1)) as f64 / n as f64;
            let (val_t, tuple_correction, net_slack, cert_slack, deficit, l1, ids) = match dual {
                Dual::Indicator(p, deficit) => {
                    let val = p.val_t();
                    let sup = p.sup_norm_sum();
                    let tuple = if use_exact {
                        p.subsets
                            .iter()
                            .zip(&p.coefficients)
                            .map(|(_, c)| inj_expectation(&nu.counts, n, q, c, t))
                            .sum::<f64>()
                            - val
                    } else {
                        tcorr_bound(sup)
                    };
                    let mut cert = 0.0;
                    let mut ids = Vec::new();
                    for (w, c) in p.subsets.iter().zip(&p.coefficients) {
                        let per_beta: f64 = c
                            .iter()
                            .enumerate()
                            .filter(|(_, v)| **v != 0.0)
                            .map(|(j, v)| {
                                let id = d.beta_certs[&(w.clone(), decode_tuple(j, q, w.len()))];
                                v.abs() * entries[id].certificate.bound
                            })
                            .sum();
                        let mut best = per_beta;
                        if let Some(&id) = combined.get(&(di, w.clone(), key_of(c))) {
                            let b = entries[id].certificate.bound;
                            if b < best {
                                best = b;
                                ids.push(id);
                            }
                        }
                        cert += best;
                    }
                    (val, tuple, t as f64 * sup * radius, cert, *deficit, p.l1_norm(), ids)
                }
                Dual::Monomial(p, deficit) => {
                    let val = p.val_t();
                    let mut tuple = 0.0;
                    let mut lip = 0.0;
                    let mut cert = 0.0;
                    for (s, c) in p.subsets.iter().zip(&p.coefficients) {
                        if s.is_empty() || *c == 0.0 {
                            continue;
                        }
                        let len = s.len();
                        lip += c.abs() * len as f64;
                        let chi: Vec<f64> = (0..1usize << len)
                            .map(|j| character(&(0..len).collect::<Vec<_>>(), &decode_tuple(j, 2, len)) as f64)
                            .collect();
                        if use_exact {
                            let bias = (nu.counts[0] as f64 - nu.counts[1] as f64) / n as f64;
                            tuple += c * (inj_expectation(&nu.counts, n, 2, &chi, len) - bias.powi(len as i32));
                        } else {
                            tuple += c.abs() * (len * (len - 1)) as f64 / n as f64;
                        }
                        cert += c.abs() * entries[d.char_certs[s]].certificate.bound;
                    }
                    (val, tuple, lip * radius, cert, *deficit, p.l1_norm(), Vec::new())
                }
            };
            let uncapped = val_t + tuple_correction + net_slack + cert_slack + deficit;
            let bound = uncapped.min(1.0);
            total += d.mass * bound;
            rels.push(RelationPointBound {
                relation: d.relation,
                val_t,
                tuple_correction,
                net_slack,
                cert_slack,
                dominance_deficit: deficit,
                uncapped,
                bound,
                dual_l1: l1,
                combined_ids: ids,
            });
        }
        points.push(NetPoint {
            counts: nu.counts.clone(),
            denom: nu.denom,
            probs: nu.probs(),
            bound: total + ROUNDING_SLACK,
            relations: rels,
        });
    }
    let mut argmax = 0;
    for (i, p) in points.iter().enumerate() {
        if p.bound > points[argmax].bound {
            argmax = i;
        }
    }
    let star = &points[argmax];
    let mut slack = SlackItems {
        light_mass: split.light_mass,
        bad_mass,
        rounding: ROUNDING_SLACK,
        ..Default::default()
    };
    let mut base_value = 0.0;
    for (d, r) in datas.iter().zip(&star.relations) {
        base_value += d.mass * r.val_t;
        slack.tuple_correction += d.mass * r.tuple_correction;
        slack.net += d.mass * r.net_slack;
        slack.certification += d.mass * r.cert_slack;
        slack.dominance += d.mass * r.dominance_deficit;
        slack.cap_adjustment += d.mass * (r.bound - r.uncapped);
    }
    // absorb float reassociation so the items add up to the bound exactly
    slack.cap_adjustment += star.bound - (base_value + slack.total());

    let mut relations = Vec::new();
    for d in &datas {
        let di = relations.len();
        let max_cert = points.iter().map(|p| p.relations[di].cert_slack).fold(0.0f64, f64::max);
        let mut ids: Vec<usize> = d.beta_certs.values().chain(d.char_certs.values()).copied().collect();
        ids.sort_unstable();
        relations.push(RelationReport {
            relation: d.relation,
            mass: d.mass,
            m: d.m,
            m_expected: d.m_expected,
            edge_factor: d.m_expected.map_or(1.0, |e| e / d.m as f64),
            status: RelationStatus::Certified,
            max_cert_slack: max_cert,
            certification_budget: budget.certification,
            budget_met: max_cert <= budget.certification,
            certificate_ids: ids,
        });
    }
    for (r, mass, reason) in bad {
        relations.push(RelationReport {
            relation: r,
            mass,
            m: inst.relation_count(r),
            m_expected: inst.m_expected.map(|me| me * inst.family.weights[r]),
            edge_factor: 1.0,
            status: RelationStatus::Bad { reason },
            max_cert_slack: 0.0,
            certification_budget: budget.certification,
            budget_met: false,
            certificate_ids: Vec::new(),
        });
    }
    for &r in &split.light {
        let count = inst.relation_count(r);
        relations.push(RelationReport {
            relation: r,
            mass: count as f64 / m as f64,
            m: count,
            m_expected: inst.m_expected.map(|me| me * inst.family.weights[r]),
            edge_factor: 1.0,
            status: RelationStatus::Light,
            max_cert_slack: 0.0,
            certification_budget: budget.certification,
            budget_met: true,
            certificate_ids: Vec::new(),
        });
    }
    relations.sort_by_key(|r| r.relation);

    let certified = opts.norm_mode == NormMode::Exact
        && entries.iter().all(|e| e.certificate.certified);
    let final_bound = star.bound;
    Ok(RefutationCertificate {
        schema: CERTIFICATE_SCHEMA.to_string(),
        instance_digest: instance_digest(inst),
        n,
        m,
        q,
        k,
        t,
        ell,
        epsilon: eps,
        basis: opts.basis,
        norm_mode: opts.norm_mode,
        exact_lp,
        heavy_threshold: delta,
        budget,
        relations,
        net: NetDescription {
            kind: if use_exact { NetKind::ExactMarginals } else { NetKind::Grid },
            steps,
            delta_net: 1.0 / steps as f64,
            covering_radius: radius,
            points: net.len(),
        },
        net_points: points,
        deviation_certificates: entries,
        argmax,
        base_value,
        total_slack: slack.total(),
        slack,
        final_bound,
        soundness_mode: if certified { SoundnessMode::Certified } else { SoundnessMode::Heuristic },
    })
}

/// Smallest legal ℓ for a given `t` and basis.
pub fn default_ell(t: usize, basis: Basis) -> usize {
    let has_odd = match basis {
        Basis::Indicator => t % 2 == 1 && t >= 3,
        Basis::Monomial => t >= 3,
    };
    if has_odd {
        t - 1
    } else {
        t.div_ceil(2)
    }
}

/// `Σ_{|S| ≤ t}` subsets used by a basis, for reporting.
pub fn certified_subsets(k: usize, t: usize, basis: Basis) -> Vec<Vec<usize>> {
    match basis {
        Basis::Indicator => subsets_of_size(k, t),
        Basis::Monomial => subsets_up_to(k, t).into_iter().filter(|s| !s.is_empty()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::{brute_opt, sample_instance, Constraint, Relation, RelationFamily};

    #[test]
    fn heavy_split_examples() {
        let fam = RelationFamily::single(Relation::neq(2));
        let inst = sample_instance(&fam, 10, 20.0, 1).unwrap();
        let s = heavy_split(&inst, 1.0).unwrap();
        assert_eq!(s.heavy.len(), 1);
        assert_eq!(s.light_mass, 0.0);

        let fam2 = RelationFamily::new(
            crate::csp::DomainSpec::numeric(2),
            vec![Relation::neq(2), Relation::equality(2, 2)],
            vec![0.5, 0.5],
        )
        .unwrap();
        let mut cs: Vec<Constraint> = (0..9).map(|i| Constraint { scope: vec![i, i + 1], relation: 0 }).collect();
        cs.push(Constraint { scope: vec![0, 9], relation: 1 });
        let inst = Instance::new(10, cs, fam2).unwrap();
        let s = heavy_split(&inst, 0.2).unwrap();
        assert_eq!(s.heavy.iter().map(|h| h.relation).collect::<Vec<_>>(), vec![0]);
        assert!((s.light_mass - 0.1).abs() < 1e-15);
        assert!((heavy_threshold(0.3, 2, 2) - 0.05 / 16.0).abs() < 1e-18);
    }

    #[test]
    fn marginal_net_examples() {
        let net = marginal_net(2, 0.5, None, 1000).unwrap();
        let probs: Vec<Vec<f64>> = net.iter().map(|m| m.probs()).collect();
        assert_eq!(probs, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert_eq!(marginal_net(3, 0.5, None, 1000).unwrap().len(), 6);
        let net = marginal_net(2, 0.5, Some(4), 1000).unwrap();
        let ones: Vec<f64> = net.iter().map(|m| m.probs()[1]).collect();
        for v in [0.0, 0.25, 0.5, 0.75, 1.0] {
            assert!(ones.contains(&v));
        }
        assert!(matches!(marginal_net(3, 1e-4, None, 1000), Err(Error::ResourceLimit { .. })));
    }

    #[test]
    fn refute_is_sound_on_small_neq() {
        let fam = RelationFamily::single(Relation::neq(2));
        for seed in 0..4 {
            let inst = sample_instance(&fam, 8, 20.0, seed).unwrap();
            let (opt, _) = brute_opt(&inst).unwrap();
            for basis in [Basis::Indicator, Basis::Monomial] {
                let mut o = RefuteOptions::new(2, 1, 0.2);
                o.basis = basis;
                let c = refute(&inst, &o).unwrap();
                assert!(c.final_bound >= opt, "{basis:?} {} < {opt}", c.final_bound);
                c.check_consistency().unwrap();
                assert_eq!(c.soundness_mode, SoundnessMode::Certified);
            }
        }
    }

    #[test]
    fn trivially_satisfiable_family_is_not_contradicted() {
        let fam = RelationFamily::single(Relation::full(2, 2));
        let inst = sample_instance(&fam, 8, 16.0, 3).unwrap();
        let c = refute(&inst, &RefuteOptions::new(2, 1, 0.2)).unwrap();
        assert!(c.final_bound >= 1.0 - 1e-9);
    }

    #[test]
    fn parameter_validation() {
        let fam = RelationFamily::single(Relation::neq(2));
        let inst = sample_instance(&fam, 8, 10.0, 0).unwrap();
        assert!(refute(&inst, &RefuteOptions::new(1, 1, 0.2)).is_err());
        assert!(refute(&inst, &RefuteOptions::new(3, 2, 0.2)).is_err());
        assert!(refute(&inst, &RefuteOptions::new(2, 0, 0.2)).is_err());
        assert!(refute(&inst, &RefuteOptions::new(2, 1, 0.0)).is_err());
        let empty = Instance::new(8, vec![], fam).unwrap();
        assert!(matches!(refute(&empty, &RefuteOptions::new(2, 1, 0.2)), Err(Error::UndefinedValue(_))));
        assert_eq!(default_ell(2, Basis::Indicator), 1);
        assert_eq!(default_ell(3, Basis::Indicator), 2);
        assert_eq!(default_ell(4, Basis::Indicator), 2);
    }

    #[test]
    fn deterministic_output() {
        let fam = RelationFamily::single(Relation::one_in_three());
        let inst = sample_instance(&fam, 7, 20.0, 5).unwrap();
        let o = RefuteOptions::new(2, 1, 0.3);
        let a = refute(&inst, &o).unwrap().to_json();
        let b = refute(&inst, &o).unwrap().to_json();
        assert_eq!(a, b);
        let back = RefutationCertificate::from_json(&a).unwrap();
        back.check_consistency().unwrap();
    }
}
