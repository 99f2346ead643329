//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line each, and exits nonzero if any failed.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csp_refute::csp::{brute_opt, sample_instance, Assignment, Constraint, Instance, MarginalVector, Relation, RelationFamily};
use csp_refute::kikuchi::{
    build_cross_tensor, build_deviation_tensor, build_kikuchi_even, build_kikuchi_odd, indicator_lift, Density,
    DeviationTensor,
};
use csp_refute::oracle::{
    brute_weighted_deviation_max, check_marginal_invariance, check_separator_independence, pairwise_character_sum,
    primal_by_vertices, sample_biased_strings, separates, to_f64, InvarianceOutcome,
};
use csp_refute::refuter::{default_ell, refute, Basis, RefuteOptions};
use csp_refute::scalar::f64_to_big_ratio;
use csp_refute::spectral::{bench_norm_scaling, median, BenchConfig, NormMode};
use csp_refute::twise::{
    coefficient_cap_ln, opt_t, polynomial_separator, solve_dual, solve_primal, supported_independent_distribution,
    OptTOptions,
};

type Q = BigRational;

struct Outcome {
    pass: bool,
    detail: String,
}

fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_relation(r: &mut ChaCha8Rng, k: usize, qd: usize) -> Relation {
    loop {
        let size = qd.pow(k as u32);
        let density = r.gen_range(0.2..0.8);
        let table: Vec<bool> = (0..size).map(|_| r.gen_bool(density)).collect();
        if table.iter().any(|&b| b) {
            return Relation::from_table(k, qd, table).unwrap();
        }
    }
}

fn random_marginal(r: &mut ChaCha8Rng, qd: usize, allow_zero: bool) -> MarginalVector {
    let denom = r.gen_range(qd as u64 + 1..=12);
    loop {
        let mut counts: Vec<u64> = (0..qd).map(|_| r.gen_range(0..=denom)).collect();
        let s: u64 = counts.iter().sum();
        if s == 0 {
            continue;
        }
        // rescale to a common denominator by adjusting the last entry
        if s > denom {
            continue;
        }
        counts[qd - 1] += denom - s;
        if !allow_zero && counts.contains(&0) {
            continue;
        }
        return MarginalVector::new(counts, denom).unwrap();
    }
}

/// Injective tuples over `0..n`, enumerated independently of the library.
fn injective(n: usize, len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        let mut next = Vec::new();
        for t in &out {
            for v in 0..n as u32 {
                if !t.contains(&v) {
                    let mut u = t.clone();
                    u.push(v);
                    next.push(u);
                }
            }
        }
        out = next;
    }
    out
}

fn all_assignments(n: usize, qd: usize) -> Vec<Vec<usize>> {
    (0..qd.pow(n as u32))
        .map(|mut i| {
            (0..n)
                .map(|_| {
                    let d = i % qd;
                    i /= qd;
                    d
                })
                .collect()
        })
        .collect()
}

fn matches(x: &[usize], tuple: &[u32], beta: &[usize]) -> bool {
    tuple.iter().zip(beta).all(|(&v, &b)| x[v as usize] == b)
}

fn criterion_1_2() -> (Outcome, Outcome) {
    let mut r = rng(1);
    let mut cases = 0;
    let mut exact_mismatch = 0;
    let mut float_err: f64 = 0.0;
    let mut not_dominating = 0;
    let mut over_cap = 0;
    let mut max_l1_small: f64 = 0.0;
    let mut over_100 = 0;
    while cases < 200 {
        let qd = r.gen_range(2..=3);
        let k = if qd == 3 { r.gen_range(2..=3) } else { r.gen_range(2..=4) };
        let t = r.gen_range(1..=k.min(3));
        let rel = random_relation(&mut r, k, qd);
        let allow_zero = r.gen_bool(0.2);
        let nu = random_marginal(&mut r, qd, allow_zero);
        let (pv, _) = solve_primal::<Q>(&rel, &nu, t).unwrap();
        let dual = solve_dual::<Q>(&rel, &nu, t).unwrap();
        if dual.val_t() != pv {
            exact_mismatch += 1;
        }
        let (pf, _) = solve_primal::<f64>(&rel, &nu, t).unwrap();
        let df = solve_dual::<f64>(&rel, &nu, t).unwrap().val_t();
        let exact = to_f64(&pv);
        float_err = float_err.max((pf - exact).abs()).max((df - exact).abs());
        if !dual.dominates(&rel) {
            not_dominating += 1;
        }
        let l1 = to_f64(&dual.l1_norm());
        if l1 > 0.0 && l1.ln() > coefficient_cap_ln(qd, k) {
            over_cap += 1;
        }
        if k <= 3 {
            max_l1_small = max_l1_small.max(l1);
            if l1 > 100.0 {
                over_100 += 1;
            }
        }
        cases += 1;
    }
    (
        Outcome {
            pass: exact_mismatch == 0 && float_err <= 1e-8,
            detail: format!("{cases} triples, exact mismatches {exact_mismatch}, max float error {float_err:.2e}"),
        },
        Outcome {
            pass: not_dominating == 0 && over_cap == 0,
            detail: format!(
                "{cases} duals, non-dominating {not_dominating}, over coefficient cap {over_cap}; observed max ‖Q‖₁ for k ≤ 3 is {max_l1_small:.3} ({over_100} above 100)"
            ),
        },
    )
}

fn random_tensor(r: &mut ChaCha8Rng, n: usize, s: usize) -> DeviationTensor<Q> {
    let tuples = injective(n, s);
    let count = r.gen_range(1..=6);
    let entries = (0..count)
        .map(|_| (tuples[r.gen_range(0..tuples.len())].clone(), q(r.gen_range(-4..=6), r.gen_range(1..=3))))
        .collect();
    let background = if r.gen_bool(0.5) { Q::zero() } else { q(r.gen_range(1..=3), r.gen_range(5..=40)) };
    DeviationTensor::from_entries(n, s, entries, background).unwrap()
}

/// `Σ_{I,J ∈ lift} M[I,J]` through the assembled sparse matrix.
fn assembled_form(op: &csp_refute::kikuchi::KikuchiOperator<Q>, x: &Assignment, ell: usize, labels: usize) -> Q {
    let asm = op.assemble().unwrap();
    let pos: HashMap<String, usize> = asm.rows.iter().enumerate().map(|(i, r)| (r.serialize(labels), i)).collect();
    let lift: Vec<usize> = indicator_lift(x, ell, labels)
        .iter()
        .filter_map(|i| pos.get(&i.serialize(labels)).copied())
        .collect();
    let mut total = Q::zero();
    for &i in &lift {
        for &j in &lift {
            total += asm.matrix.get(i, j);
        }
    }
    total
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let mut configs = Vec::new();
    for s in [2usize, 3, 4] {
        let min_ell = if s % 2 == 0 { s / 2 } else { s - 1 };
        for ell in min_ell..=3 {
            for (n, qd) in [(4usize, 2usize), (5, 2), (6, 2), (4, 3), (5, 3)] {
                configs.push((s, ell, n, qd));
            }
        }
    }
    let mut tensors = 0;
    let mut checked = 0u64;
    let mut failures = Vec::new();
    let mut skipped = 0;
    for &(s, ell, n, qd) in &configs {
        let labels = if s % 2 == 0 { s } else { 2 * (s - 1) };
        let lift_size = csp_refute::combinat::binomial((n * labels) as u64, ell as u64);
        if csp_refute::combinat::binomial((n * qd * labels) as u64, ell as u64) > 30_000 || lift_size > 400 {
            skipped += 1;
            continue;
        }
        let reps = if s == 3 { 4 } else { 3 };
        for _ in 0..reps {
            let c = random_tensor(&mut r, n, s);
            let beta: Vec<usize> = (0..s).map(|_| r.gen_range(0..qd)).collect();
            let xs = all_assignments(n, qd);
            tensors += 1;
            if s % 2 == 0 {
                let op = build_kikuchi_even(Arc::new(c.clone()), qd, &beta, ell).unwrap();
                let factor = Q::from_integer(op.identity_factor());
                let tuples = injective(n, s);
                for x in &xs {
                    let poly: Q = tuples.iter().filter(|u| matches(x, u, &beta)).map(|u| c.entry(u)).sum();
                    let a = Assignment::new(x.clone());
                    let lhs = assembled_form(&op, &a, ell, labels);
                    let free = op.quadratic_form_on_lift(&a);
                    checked += 1;
                    if lhs != &factor * &poly || free != lhs {
                        failures.push(format!("even s={s} ℓ={ell} n={n} q={qd} x={x:?}"));
                    }
                }
            } else {
                let ct = build_cross_tensor(&c).unwrap();
                let op = build_kikuchi_odd(Arc::new(ct), qd, &beta, ell).unwrap();
                let factor = Q::from_integer(op.identity_factor());
                let h = s - 1;
                let halves = injective(n, h);
                let prime = &beta[..h];
                for x in &xs {
                    let live: Vec<&Vec<u32>> = halves.iter().filter(|a| matches(x, a, prime)).collect();
                    let mut poly = Q::zero();
                    for a in &live {
                        for g in &live {
                            if a == g {
                                continue;
                            }
                            for t in 0..n as u32 {
                                let mut at = (*a).clone();
                                at.push(t);
                                let mut gt = (*g).clone();
                                gt.push(t);
                                poly += c.entry(&at) * c.entry(&gt);
                            }
                        }
                    }
                    let a = Assignment::new(x.clone());
                    let lhs = assembled_form(&op, &a, ell, labels);
                    let free = op.quadratic_form_on_lift(&a);
                    checked += 1;
                    if lhs != &factor * &poly || free != lhs {
                        failures.push(format!("odd s={s} ℓ={ell} n={n} q={qd} x={x:?}"));
                    }
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty() && tensors >= 50,
        detail: format!(
            "{tensors} tensors, {checked} assignments, {} mismatches, {skipped} oversized configurations skipped{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    }
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let families: Vec<(&str, RelationFamily)> = vec![
        ("neq", RelationFamily::builtin("neq").unwrap()),
        ("eq", RelationFamily::single(Relation::equality(2, 2))),
        ("1in3", RelationFamily::builtin("1in3").unwrap()),
        ("nae3", RelationFamily::builtin("nae3").unwrap()),
        ("xor3", RelationFamily::builtin("xor3").unwrap()),
        ("or3", RelationFamily::builtin("or3").unwrap()),
    ];
    let mut instances = 0;
    let mut bound_violations = Vec::new();
    let mut deviation_checks = 0;
    let mut deviation_violations = 0;
    let mut min_gap = f64::INFINITY;
    let mut odd_runs = 0;
    while instances < 110 {
        let random = r.gen_bool(0.25);
        let k = r.gen_range(2..=3);
        let (name, fam) = if random {
            let rels = (0..r.gen_range(1..=2)).map(|_| random_relation(&mut r, k, 2)).collect::<Vec<_>>();
            let w = vec![1.0 / rels.len() as f64; rels.len()];
            ("random", RelationFamily::new(csp_refute::csp::DomainSpec::numeric(2), rels, w).unwrap())
        } else {
            let (nm, f) = &families[r.gen_range(0..families.len())];
            (*nm, f.clone())
        };
        let k = fam.arity();
        let use_t3 = k == 3 && odd_runs < 6 && instances % 15 == 7;
        let n = if use_t3 { 5 } else { r.gen_range(k + 2..=10) };
        let m = r.gen_range(n as f64..4.0 * n as f64);
        let inst = sample_instance(&fam, n, m, r.gen()).unwrap();
        if inst.m() == 0 {
            continue;
        }
        let t = if use_t3 { 3 } else { 2 };
        if use_t3 {
            odd_runs += 1;
        }
        let basis = if r.gen_bool(0.3) { Basis::Monomial } else { Basis::Indicator };
        let mut opts = RefuteOptions::new(t, default_ell(t, basis), 0.2);
        opts.basis = basis;
        let cert = refute(&inst, &opts).unwrap();
        let (opt, _) = brute_opt(&inst).unwrap();
        min_gap = min_gap.min(cert.final_bound - opt);
        if cert.final_bound < opt {
            bound_violations.push(format!("{name} n={n} m={} bound {} < opt {opt}", inst.m(), cert.final_bound));
        }
        for e in &cert.deviation_certificates {
            let c = &e.certificate;
            let w: Vec<Q> = c.weights.iter().map(|&v| f64_to_big_ratio(v)).collect();
            let truth = to_f64(&brute_weighted_deviation_max(&inst, Some(e.relation), &c.subset, &w, None).unwrap());
            deviation_checks += 1;
            if c.raw_bound < truth {
                deviation_violations += 1;
            }
        }
        instances += 1;
    }
    Outcome {
        pass: bound_violations.is_empty() && deviation_violations == 0,
        detail: format!(
            "{instances} instances ({odd_runs} at t=3), bound violations {}, smallest bound − opt {min_gap:.4}; {deviation_checks} deviation certificates, {deviation_violations} violations",
            bound_violations.len()
        ),
    }
}

fn criterion_5() -> Outcome {
    let fam = RelationFamily::single(Relation::neq(2));
    let mut medians = Vec::new();
    for m in [512.0, 2048.0, 8192.0] {
        let bounds: Vec<f64> = (0..10u64)
            .map(|seed| {
                let inst = sample_instance(&fam, 64, m, seed).unwrap();
                refute(&inst, &RefuteOptions::new(2, 1, 0.2)).unwrap().final_bound
            })
            .collect();
        medians.push(median(&bounds));
    }
    let monotone = medians.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let target = 0.5 + 0.2 + 0.1;
    Outcome {
        pass: monotone && medians[2] <= target,
        detail: format!(
            "median bounds at m = 512, 2048, 8192: {:.4}, {:.4}, {:.4} (target ≤ {target:.1})",
            medians[0], medians[1], medians[2]
        ),
    }
}

fn ratio_spread(rows: &[csp_refute::spectral::BenchRow]) -> (f64, Vec<(f64, f64)>) {
    let mut by_m: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for row in rows {
        by_m.entry(row.m_expected as u64).or_default().push(row.ratio);
    }
    let med: Vec<(f64, f64)> = by_m.iter().map(|(m, v)| (*m as f64, median(v))).collect();
    let hi = med.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let lo = med.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    (hi / lo, med)
}

fn criterion_6() -> Outcome {
    let even = bench_norm_scaling(&BenchConfig {
        n: 64,
        ms: vec![256.0, 512.0, 1024.0, 2048.0, 4096.0],
        ell: 1,
        subset_size: 2,
        seeds: (0..5).collect(),
        mode: NormMode::Exact,
    })
    .unwrap();
    let odd = bench_norm_scaling(&BenchConfig {
        n: 24,
        ms: vec![150.0, 300.0, 600.0, 1200.0],
        ell: 2,
        subset_size: 3,
        seeds: (0..2).collect(),
        mode: NormMode::Estimate,
    })
    .unwrap();
    let (se, me) = ratio_spread(&even);
    let (so, mo) = ratio_spread(&odd);
    let fmt = |v: &[(f64, f64)]| v.iter().map(|(m, r)| format!("{m}:{r:.3}")).collect::<Vec<_>>().join(" ");
    Outcome {
        pass: se <= 4.0 && so <= 4.0 && se.is_finite() && so.is_finite(),
        detail: format!("even spread {se:.2}× [{}]; odd spread {so:.2}× [{}]", fmt(&me), fmt(&mo)),
    }
}

fn criterion_7() -> Outcome {
    let mut r = rng(7);
    let mut checked = 0u64;
    let mut violations = 0;
    let mut instances = 0;
    while instances < 12 {
        let n = r.gen_range(4..=6);
        let k = 3;
        let fam = if r.gen_bool(0.5) {
            RelationFamily::builtin("1in3").unwrap()
        } else {
            RelationFamily::single(random_relation(&mut r, k, 2))
        };
        let inst = sample_instance(&fam, n, r.gen_range(3.0..12.0), r.gen()).unwrap();
        if inst.m() == 0 {
            continue;
        }
        instances += 1;
        let c = build_deviation_tensor::<Q>(&inst, &[0, 1, 2], None, Density::Realized).unwrap();
        let sq = c.sq_term();
        let nq = Q::from_integer(BigInt::from(n));
        let halves = injective(n, 2);
        for beta in all_assignments(3, 2) {
            for x in all_assignments(n, 2) {
                let mut cb = Q::zero();
                for u in injective(n, 3) {
                    if matches(&x, &u, &beta) {
                        cb += c.entry(&u);
                    }
                }
                let live: Vec<&Vec<u32>> = halves.iter().filter(|a| matches(&x, a, &beta[..2])).collect();
                let mut cross = Q::zero();
                for a in &live {
                    for g in &live {
                        if a != g {
                            for t in 0..n as u32 {
                                let at = [a[0], a[1], t];
                                let gt = [g[0], g[1], t];
                                cross += c.entry(&at) * c.entry(&gt);
                            }
                        }
                    }
                }
                checked += 1;
                if &cb * &cb > &nq * (&sq + cross) {
                    violations += 1;
                }
            }
        }
    }
    // squares: sq_term against m·√(log n) on a 10-point sweep
    let n = 40;
    let fam = RelationFamily::single(Relation::full(3, 2));
    let xs: Vec<(f64, f64)> = (1..=10)
        .map(|i| {
            let inst = sample_instance(&fam, n, 100.0 * i as f64, 70 + i).unwrap();
            let c = build_deviation_tensor::<f64>(&inst, &[0, 1, 2], None, Density::Realized).unwrap();
            (inst.m() as f64 * (n as f64).ln().sqrt(), c.sq_term())
        })
        .collect();
    let c_fit = xs.iter().map(|(x, y)| x * y).sum::<f64>() / xs.iter().map(|(x, _)| x * x).sum::<f64>();
    let worst = xs.iter().map(|(x, y)| y / (c_fit * x)).fold(0.0, f64::max);
    Outcome {
        pass: violations == 0 && worst <= 1.5,
        detail: format!(
            "{instances} instances, {checked} (β, x) pairs, {violations} violations; squares fit c = {c_fit:.4}, worst point {worst:.3}× the fit"
        ),
    }
}

fn planted_setup(r: &mut ChaCha8Rng) -> Option<(RelationFamily, BTreeMap<usize, csp_refute::twise::DistributionTable<Q>>, MarginalVector, usize)> {
    let k = r.gen_range(2..=3);
    let t = r.gen_range(1..k);
    let choice = r.gen_range(0..3);
    let rel = match (k, choice) {
        (3, 0) => Relation::parity(3, 0),
        (3, 1) => Relation::not_all_equal(3),
        _ => random_relation(r, k, 2),
    };
    let nu = if r.gen_bool(0.5) { MarginalVector::uniform(2) } else { random_marginal(r, 2, false) };
    let dist = supported_independent_distribution::<Q>(&rel, &nu, t).ok()??;
    let mut per = BTreeMap::new();
    per.insert(0, dist);
    Some((RelationFamily::single(rel), per, nu, t))
}

fn random_constraints(r: &mut ChaCha8Rng, n: usize, k: usize, count: usize) -> Vec<Constraint> {
    (0..count)
        .map(|_| {
            let mut vars: Vec<u32> = (0..n as u32).collect();
            for i in 0..k {
                let j = r.gen_range(i..n);
                vars.swap(i, j);
            }
            Constraint { scope: vars[..k].to_vec(), relation: 0 }
        })
        .collect()
}

fn criterion_8() -> (Outcome, Outcome) {
    let mut r = rng(8);
    let (mut equal, mut unequal, mut vacuous, mut attempts) = (0, 0, 0, 0);
    while equal + unequal < 200 && attempts < 5000 {
        attempts += 1;
        let Some((fam, per, nu, t)) = planted_setup(&mut r) else { continue };
        let k = fam.arity();
        let n = r.gen_range(k + 1..=6);
        let count = r.gen_range(1..=3);
        let cs = random_constraints(&mut r, n, k, count);
        let inst = Instance::new(n, cs, fam).unwrap();
        let subset: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.4)).collect();
        let ci = r.gen_range(0..inst.m());
        match check_marginal_invariance(&inst, &per, &nu, t, &subset, ci) {
            Ok(InvarianceOutcome::Equal) => equal += 1,
            Ok(InvarianceOutcome::NotEqual) => unequal += 1,
            Ok(InvarianceOutcome::Vacuous) => vacuous += 1,
            Err(_) => {}
        }
    }
    let invariance = Outcome {
        pass: unequal == 0 && equal >= 200,
        detail: format!("{equal} equal, {unequal} unequal, {vacuous} vacuous draws skipped"),
    };
    let (mut holds, mut fails, mut attempts) = (0, 0, 0);
    while holds + fails < 200 && attempts < 20000 {
        attempts += 1;
        let Some((fam, per, nu, t)) = planted_setup(&mut r) else { continue };
        let k = fam.arity();
        let n = r.gen_range(k + 1..=6);
        let count = r.gen_range(1..=3);
        let cs = random_constraints(&mut r, n, k, count);
        let inst = Instance::new(n, cs, fam).unwrap();
        let mut label: Vec<u8> = (0..n).map(|_| r.gen_range(0..4)).collect();
        label[r.gen_range(0..n)] = 0;
        let pick = |l: u8| (0..n).filter(|&v| label[v] == l).collect::<Vec<_>>();
        let (s, tt, sep) = (pick(0), pick(1), pick(2));
        if tt.is_empty() || !separates(&inst, &s, &tt, &sep) {
            continue;
        }
        match check_separator_independence(&inst, &per, &nu, t, &s, &tt, &sep) {
            Ok(true) => holds += 1,
            Ok(false) => fails += 1,
            Err(_) => {}
        }
    }
    let separator = Outcome {
        pass: fails == 0 && holds >= 200,
        detail: format!("{holds} separated triples independent, {fails} dependent"),
    };
    (invariance, separator)
}

fn criterion_9() -> Outcome {
    let neq = Relation::neq(2);
    let nu = MarginalVector::uniform(2);
    let sep = polynomial_separator::<Q>(&neq, &nu, 2).unwrap();
    let mut valid = false;
    let mut detail = String::from("no separator returned");
    if let Some(f) = sep {
        let mean: Q = all_assignments(2, 2).iter().map(|x| f.evaluate(x) * q(1, 4)).sum();
        let min_on_rel = neq.satisfying().iter().map(|x| f.evaluate(x)).min().unwrap();
        valid = mean.is_zero() && min_on_rel >= Q::one();
        detail = format!("NEQ separator mean {mean}, minimum on the relation {min_on_rel}");
    }
    let k = 40;
    let strings = sample_biased_strings(k, 1.0 / 20.0, 2000, 9);
    let mut positive = true;
    let mut formula_ok = true;
    let mut max_weight = 0;
    for a in &strings {
        let w = a.iter().filter(|&&b| b == 1).count() as i64;
        max_weight = max_weight.max(w);
        let f = pairwise_character_sum(a);
        let s = k as i64 - 2 * w;
        formula_ok &= 2 * f == s * s - k as i64;
        positive &= f > 0;
    }
    // E over the uniform cube is zero since every term is a nontrivial character
    Outcome {
        pass: valid && positive && formula_ok,
        detail: format!(
            "{detail}; {} distinct biased strings (max weight {max_weight}), quadratic positive on all: {positive}",
            strings.len()
        ),
    }
}

fn criterion_10() -> Outcome {
    let mut r = rng(10);
    let eps = 0.1;
    let delta = 0.1;
    let mut worst: f64 = 0.0;
    let mut nested_violations = 0;
    for _ in 0..20 {
        let qd = r.gen_range(2..=3);
        let k = if qd == 3 { 2 } else { r.gen_range(2..=3) };
        let rels: Vec<Relation> = (0..r.gen_range(1..=2)).map(|_| random_relation(&mut r, k, qd)).collect();
        let w = vec![1.0 / rels.len() as f64; rels.len()];
        let fam = RelationFamily::new(csp_refute::csp::DomainSpec::numeric(qd), rels, w).unwrap();
        let t = r.gen_range(1..=2);
        let run = |step: f64| {
            opt_t(&fam, t, eps, &OptTOptions { net_step: Some(step), ..OptTOptions::default() }).unwrap().value
        };
        let coarse = run(delta);
        let fine = run(delta / 10.0);
        worst = worst.max((coarse - fine).abs());
        if fine < coarse - 1e-9 {
            nested_violations += 1;
        }
    }
    let fam = RelationFamily::builtin("1in3").unwrap();
    let res = opt_t(&fam, 2, eps, &OptTOptions::default()).unwrap();
    let rel = &fam.relations[0];
    let oracle = res
        .per_point
        .iter()
        .map(|p| primal_by_vertices(rel, &p.probs, 2).unwrap())
        .fold(f64::MIN, f64::max);
    let gap = (oracle - res.value).abs();
    Outcome {
        pass: worst <= eps && nested_violations == 0 && gap <= 1e-6,
        detail: format!(
            "20 families, max |opt(δ) − opt(δ/10)| = {worst:.4} (ε = {eps}), nesting violations {nested_violations}; opt_2(1-in-3) = {:.6}, vertex oracle {oracle:.6}",
            res.value
        ),
    }
}

fn main() {
    let mut failed = 0;
    let mut report = |id: &str, o: Outcome, started: Instant| {
        println!(
            "criterion {id}: {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    };
    let s = Instant::now();
    let (c1, c2) = criterion_1_2();
    report("1", c1, s);
    report("2", c2, s);
    let s = Instant::now();
    report("3", criterion_3(), s);
    let s = Instant::now();
    report("4", criterion_4(), s);
    let s = Instant::now();
    report("5", criterion_5(), s);
    let s = Instant::now();
    report("6", criterion_6(), s);
    let s = Instant::now();
    report("7", criterion_7(), s);
    let s = Instant::now();
    let (c8a, c8b) = criterion_8();
    report("8a", c8a, s);
    report("8b", c8b, s);
    let s = Instant::now();
    report("9", criterion_9(), s);
    let s = Instant::now();
    report("10", criterion_10(), s);
    if failed > 0 {
        println!("{failed} acceptance checks failed");
        std::process::exit(1);
    }
}
