//! Spectral norms of Kikuchi operators and the deviation certificates built on them.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinat::{binomial, decode_tuple, pow_usize};
use crate::csp::{sample_instance, Instance, RelationFamily};
use crate::error::{Error, Result};
use crate::kikuchi::{
    big_to_f64, build_cross_tensor, build_deviation_tensor, build_kikuchi_even_weighted, build_kikuchi_odd_weighted,
    identity_factor, lift_norm_sq, Csr, CrossTensor, Density, DeviationTensor, KikuchiOperator, Parity,
};

/// Largest compressed dimension handed to the dense eigensolver.
pub const DENSE_CAP: usize = 4000;
/// Dense solves up to this size are cross-checked with Jacobi rotations.
pub const JACOBI_CHECK_CAP: usize = 200;
/// Relative inflation applied to exact norms to absorb floating-point error.
pub const EXACT_INFLATION: f64 = 1e-9;
/// Multiplicative safety factor on iterative estimates.
pub const ESTIMATE_INFLATION: f64 = 1.05;

pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn matvec(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for Csr<f64> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[p] * x[self.col[p] as usize];
            }
            *yi = s;
        });
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..self.ncols()).map(|j| self[(i, j)] * x[j]).sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    Exact,
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    DenseExact,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    /// Value used downstream (inflated).
    pub value: f64,
    /// Uninflated computed value.
    pub raw_value: f64,
    pub method: NormMethod,
    pub iterations: usize,
    pub residual: f64,
    pub certified: bool,
    pub converged: bool,
    pub dimension: usize,
    /// Norm from an independent second solve, when one was run.
    pub cross_check: Option<f64>,
}

impl NormEstimate {
    pub fn zero(dimension: usize) -> Self {
        NormEstimate {
            value: 0.0,
            raw_value: 0.0,
            method: NormMethod::DenseExact,
            iterations: 0,
            residual: 0.0,
            certified: true,
            converged: true,
            dimension,
            cross_check: Some(0.0),
        }
    }
}

fn to_dense(op: &dyn SymmetricOperator) -> DMatrix<f64> {
    let d = op.dim();
    let mut m = DMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    let mut col = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        op.matvec(&e, &mut col);
        e[j] = 0.0;
        for i in 0..d {
            m[(i, j)] = col[i];
        }
    }
    m
}

fn csr_to_dense(c: &Csr<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(c.dim, c.dim);
    for i in 0..c.dim {
        for p in c.row_ptr[i]..c.row_ptr[i + 1] {
            m[(i, c.col[p] as usize)] = c.val[p];
        }
    }
    m
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let (arp, arq) = (a[r][p], a[r][q]);
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let (apr, aqr) = (a[p][r], a[q][r]);
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

fn dense_norm(m: DMatrix<f64>) -> NormEstimate {
    let d = m.nrows();
    if d == 0 {
        return NormEstimate::zero(0);
    }
    let cross = if d <= JACOBI_CHECK_CAP {
        let ev = jacobi_eigenvalues(&m);
        Some(ev.iter().fold(0.0f64, |a, v| a.max(v.abs())))
    } else {
        None
    };
    let eig = SymmetricEigen::new(m);
    let raw = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let residual = cross.map_or(0.0, |c| (c - raw).abs());
    NormEstimate {
        value: raw * (1.0 + EXACT_INFLATION) + f64::MIN_POSITIVE,
        raw_value: raw,
        method: NormMethod::DenseExact,
        iterations: 0,
        residual,
        certified: true,
        converged: true,
        dimension: d,
        cross_check: cross,
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Power iteration on `M²` from a seeded random start.
pub fn power_iteration(op: &dyn SymmetricOperator, tol: f64, max_iter: Option<usize>, seed: u64) -> NormEstimate {
    let d = op.dim();
    if d == 0 {
        let mut z = NormEstimate::zero(0);
        z.method = NormMethod::Iterative;
        z.certified = false;
        return z;
    }
    let max_iter = max_iter.unwrap_or_else(|| ((10.0 * d as f64 * (d as f64).ln().max(1.0)) as usize).max(100));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut prev = 0.0f64;
    let mut stable = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut lambda = 0.0;
    while iterations < max_iter {
        iterations += 1;
        op.matvec(&v, &mut w);
        op.matvec(&w, &mut u);
        // Rayleigh quotient of M² is ‖Mv‖²
        lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nu = norm2(&u);
        if nu == 0.0 {
            converged = true;
            lambda = 0.0;
            break;
        }
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / nu;
        }
        let rel = if lambda == 0.0 { 0.0 } else { (lambda - prev).abs() / lambda };
        prev = lambda;
        if rel < tol {
            stable += 1;
            if stable >= 10 {
                converged = true;
                break;
            }
        } else {
            stable = 0;
        }
    }
    op.matvec(&v, &mut w);
    op.matvec(&w, &mut u);
    let l2 = w.iter().map(|x| x * x).sum::<f64>();
    let residual = u.iter().zip(&v).map(|(a, b)| (a - l2 * b).powi(2)).sum::<f64>().sqrt();
    NormEstimate {
        value: lambda * ESTIMATE_INFLATION,
        raw_value: lambda,
        method: NormMethod::Iterative,
        iterations,
        residual,
        certified: false,
        converged,
        dimension: d,
        cross_check: None,
    }
}

/// Norm of an explicit matrix in either mode.
pub fn spectral_norm_csr(m: &Csr<f64>, mode: NormMode, tol: f64, seed: u64) -> Result<NormEstimate> {
    spectral_norm_csr_capped(m, mode, tol, seed, DENSE_CAP)
}

pub fn spectral_norm_csr_capped(m: &Csr<f64>, mode: NormMode, tol: f64, seed: u64, dense_cap: usize) -> Result<NormEstimate> {
    if m.nnz() == 0 {
        let mut z = NormEstimate::zero(m.dim);
        if mode == NormMode::Estimate {
            z.method = NormMethod::Iterative;
            z.certified = false;
        }
        return Ok(z);
    }
    match mode {
        NormMode::Exact => {
            if m.dim > dense_cap {
                return Err(Error::limit("dense eigensolve", m.dim as u128, dense_cap as u128));
            }
            Ok(dense_norm(csr_to_dense(m)))
        }
        NormMode::Estimate => Ok(power_iteration(m, tol, None, seed)),
    }
}

/// Norm of a generic operator; exact mode densifies it through matvecs.
pub fn spectral_norm_dyn(op: &dyn SymmetricOperator, mode: NormMode, tol: f64, seed: u64) -> Result<NormEstimate> {
    match mode {
        NormMode::Exact => {
            if op.dim() > DENSE_CAP {
                return Err(Error::limit("dense eigensolve", op.dim() as u128, DENSE_CAP as u128));
            }
            Ok(dense_norm(to_dense(op)))
        }
        NormMode::Estimate => Ok(power_iteration(op, tol, None, seed)),
    }
}

/// Assembles the operator over its active rows and computes its norm.
pub fn spectral_norm(op: &KikuchiOperator<f64>, mode: NormMode, tol: f64, seed: u64) -> Result<NormEstimate> {
    spectral_norm_capped(op, mode, tol, seed, DENSE_CAP)
}

pub fn spectral_norm_capped(op: &KikuchiOperator<f64>, mode: NormMode, tol: f64, seed: u64, dense_cap: usize) -> Result<NormEstimate> {
    let asm = op.assemble()?;
    spectral_norm_csr_capped(&asm.matrix, mode, tol, seed, dense_cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertMethod {
    /// `|S| = 1`: the polynomial is separable, its maximum is exact.
    Separable,
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertOptions {
    pub ell: usize,
    pub mode: NormMode,
    pub tol: f64,
    pub seed: u64,
    pub dense_cap: usize,
}

impl Default for CertOptions {
    fn default() -> Self {
        CertOptions {
            ell: 1,
            mode: NormMode::Exact,
            tol: 1e-10,
            seed: 0,
            dense_cap: DENSE_CAP,
        }
    }
}

/// A bound on `max_x |Σ_b w(b) C_{S,b}(x)|`, the single-β case being `w = δ_β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationCertificate {
    pub subset: Vec<usize>,
    pub beta: Option<Vec<usize>>,
    /// Weight table over `D^S` (row-major).
    pub weights: Vec<f64>,
    pub ell: usize,
    pub method: CertMethod,
    pub norm: Option<NormEstimate>,
    pub lift_norm_sq: f64,
    pub identity_factor: f64,
    pub sq_term: Option<f64>,
    pub kappa: Option<f64>,
    /// Bound on the unnormalized polynomial.
    pub raw_bound: f64,
    pub m: usize,
    /// `raw_bound / m`: bound on the normalized deviation.
    pub bound: f64,
    /// Expected over realized constraint count.
    pub edge_factor: f64,
    /// `k²/n`, the ordered-tuple correction recorded for the audit trail.
    pub tuple_correction: f64,
    pub certified: bool,
}

impl DeviationCertificate {
    /// Recomputes the raw bound from the recorded norm and binomial factors.
    pub fn recompute_raw(&self, n: usize) -> f64 {
        match self.method {
            CertMethod::Separable => self.raw_bound,
            CertMethod::Even => self.lift_norm_sq * self.norm.as_ref().map_or(0.0, |e| e.value) / self.identity_factor,
            CertMethod::Odd => {
                let cross = self.lift_norm_sq * self.norm.as_ref().map_or(0.0, |e| e.value) / self.identity_factor;
                (n as f64 * (self.kappa.unwrap_or(1.0) * self.sq_term.unwrap_or(0.0) + cross)).max(0.0).sqrt()
            }
        }
    }
}

/// A deviation tensor with its lazily needed odd-case companions.
#[derive(Debug, Clone)]
pub struct TensorBundle {
    pub tensor: Arc<DeviationTensor<f64>>,
    pub cross: Option<Arc<CrossTensor<f64>>>,
    pub sq_term: f64,
    pub q: usize,
    pub m_expected: Option<f64>,
}

impl TensorBundle {
    pub fn new(tensor: DeviationTensor<f64>, q: usize, m_expected: Option<f64>) -> Result<Self> {
        let sq_term = tensor.sq_term();
        let order = tensor.order();
        let cross = if order % 2 == 1 && order >= 3 {
            Some(Arc::new(build_cross_tensor(&tensor)?))
        } else {
            None
        };
        Ok(TensorBundle {
            tensor: Arc::new(tensor),
            cross,
            sq_term,
            q,
            m_expected,
        })
    }

    pub fn order(&self) -> usize {
        self.tensor.order()
    }
}

/// Certifies `max_x |Σ_b w(b) C_{S,b}(x)|` for a weight table `w` over `D^S`.
pub fn certify_weighted(bundle: &TensorBundle, weights: &[f64], beta: Option<Vec<usize>>, opts: &CertOptions) -> Result<DeviationCertificate> {
    let c = &bundle.tensor;
    let q = bundle.q;
    let s = c.order();
    let n = c.n;
    if weights.len() != pow_usize(q, s) {
        return Err(Error::invalid("weight table must cover D^S"));
    }
    let m = c.m;
    let mut cert = DeviationCertificate {
        subset: c.subset.clone(),
        beta,
        weights: weights.to_vec(),
        ell: opts.ell,
        method: CertMethod::Separable,
        norm: None,
        lift_norm_sq: 0.0,
        identity_factor: 1.0,
        sq_term: None,
        kappa: None,
        raw_bound: 0.0,
        m,
        bound: 0.0,
        edge_factor: match bundle.m_expected {
            Some(e) if m > 0 => e / m as f64,
            _ => 1.0,
        },
        tuple_correction: (c.k * c.k) as f64 / n as f64,
        certified: true,
    };
    if s == 1 {
        // Σ_v C[v] w(x_v) is maximized coordinate-wise
        let bg = c.background;
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for v in 0..n as u32 {
            let cv = c.sparse.get(&crate::combinat::pack(&[v])).copied().unwrap_or(0.0) - bg;
            let vals = weights.iter().map(|w| cv * w);
            hi += vals.clone().fold(f64::NEG_INFINITY, f64::max);
            lo += vals.fold(f64::INFINITY, f64::min);
        }
        let raw = hi.abs().max(lo.abs());
        cert.raw_bound = raw * (1.0 + EXACT_INFLATION);
    } else if s % 2 == 0 {
        let op = build_kikuchi_even_weighted(c.clone(), q, weights.to_vec(), opts.ell)?;
        let norm = spectral_norm_capped(&op, opts.mode, opts.tol, opts.seed, opts.dense_cap)?;
        cert.method = CertMethod::Even;
        cert.lift_norm_sq = big_to_f64(&lift_norm_sq(n, s, opts.ell));
        cert.identity_factor = big_to_f64(&identity_factor(Parity::Even, n, s, opts.ell));
        cert.certified = norm.certified;
        cert.norm = Some(norm);
        cert.raw_bound = cert.recompute_raw(n);
    } else {
        let cross = bundle
            .cross
            .clone()
            .ok_or_else(|| Error::WrongMode("odd certificate without a cross tensor".into()))?;
        let h = s - 1;
        let qh = pow_usize(q, h);
        // w(b1,b2) = Σ_a c(b1,a) c(b2,a); κ = max_b Σ_a c(b,a)²
        let coeff = |b: usize, a: usize| weights[b * q + a];
        let mut pair = vec![0.0; qh * qh];
        for b1 in 0..qh {
            for b2 in 0..qh {
                pair[b1 * qh + b2] = (0..q).map(|a| coeff(b1, a) * coeff(b2, a)).sum();
            }
        }
        let kappa = (0..qh)
            .map(|b| (0..q).map(|a| coeff(b, a).powi(2)).sum::<f64>())
            .fold(0.0, f64::max);
        let op = build_kikuchi_odd_weighted(cross, q, pair, opts.ell)?;
        let norm = spectral_norm_capped(&op, opts.mode, opts.tol, opts.seed, opts.dense_cap)?;
        cert.method = CertMethod::Odd;
        cert.lift_norm_sq = big_to_f64(&lift_norm_sq(n, 2 * h, opts.ell));
        cert.identity_factor = big_to_f64(&identity_factor(Parity::Odd, n, s, opts.ell));
        cert.sq_term = Some(bundle.sq_term * (1.0 + EXACT_INFLATION));
        cert.kappa = Some(kappa);
        cert.certified = norm.certified;
        cert.norm = Some(norm);
        cert.raw_bound = cert.recompute_raw(n) * (1.0 + EXACT_INFLATION);
    }
    cert.bound = if m == 0 { cert.raw_bound } else { cert.raw_bound / m as f64 };
    Ok(cert)
}

pub fn indicator_weights(q: usize, beta: &[usize]) -> Vec<f64> {
    let mut w = vec![0.0; pow_usize(q, beta.len())];
    w[crate::combinat::encode_tuple(beta.iter().copied(), q)] = 1.0;
    w
}

/// Certificate for a single `(S, β)` on the subinstance of one relation.
pub fn certify_deviation(inst: &Instance, rel_index: usize, subset: &[usize], beta: &[usize], opts: &CertOptions) -> Result<DeviationCertificate> {
    if rel_index >= inst.family.relations.len() {
        return Err(Error::invalid(format!("relation index {rel_index} out of range")));
    }
    if beta.len() != subset.len() || beta.iter().any(|&a| a >= inst.q()) {
        return Err(Error::invalid("β must be an assignment to S"));
    }
    let tensor = build_deviation_tensor::<f64>(inst, subset, Some(rel_index), Density::Realized)?;
    let m_expected = inst.m_expected.map(|m| m * inst.family.weights[rel_index]);
    let bundle = TensorBundle::new(tensor, inst.q(), m_expected)?;
    certify_weighted(&bundle, &indicator_weights(inst.q(), beta), Some(beta.to_vec()), opts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n: usize,
    pub ms: Vec<f64>,
    pub ell: usize,
    pub subset_size: usize,
    pub seeds: Vec<u64>,
    pub mode: NormMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    /// Realized constraint count.
    pub m: usize,
    pub m_expected: f64,
    pub ell: usize,
    pub s_size: usize,
    pub parity: Parity,
    pub seed: u64,
    pub norm: f64,
    pub predicted: f64,
    pub ratio: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str = "n,m,ell,S_size,parity,seed,norm,predicted,ratio";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            self.m,
            self.ell,
            self.s_size,
            match self.parity {
                Parity::Even => "even",
                Parity::Odd => "odd",
            },
            self.seed,
            self.norm,
            self.predicted,
            self.ratio
        )
    }
}

/// Constant-free predicted norm shape (natural log).
pub fn predicted_norm(parity: Parity, n: usize, m: f64, s: usize, ell: usize) -> f64 {
    let (nf, lf) = (n as f64, ell as f64);
    let half = nf.powf(s as f64 / 2.0);
    let tail = (lf * nf.ln()).sqrt();
    match parity {
        Parity::Even => (m / half).sqrt() * lf.powf(s as f64 / 4.0) * tail,
        Parity::Odd => (m / half) * lf.powf((s as f64 - 1.0) / 2.0) * tail,
    }
}

/// Norms of raw-count Kikuchi operators (β = 0) over a sweep of densities.
pub fn bench_norm_scaling(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    let s = cfg.subset_size;
    let parity = if s % 2 == 0 { Parity::Even } else { Parity::Odd };
    let family = RelationFamily::single(crate::csp::Relation::full(s.max(2), 2));
    let points: Vec<(f64, u64)> = cfg.ms.iter().flat_map(|&m| cfg.seeds.iter().map(move |&sd| (m, sd))).collect();
    points
        .par_iter()
        .map(|&(m_exp, seed)| {
            let inst = sample_instance(&family, cfg.n, m_exp, seed)?;
            let subset: Vec<usize> = (0..s).collect();
            let tensor = build_deviation_tensor::<f64>(&inst, &subset, None, Density::Realized)?;
            let m = tensor.m;
            let bundle = TensorBundle::new(tensor, 2, Some(m_exp))?;
            let w = indicator_weights(2, &vec![0; s]);
            let opts = CertOptions {
                ell: cfg.ell,
                mode: cfg.mode,
                tol: 1e-9,
                seed,
                dense_cap: DENSE_CAP,
            };
            let norm = if s == 1 {
                0.0
            } else if parity == Parity::Even {
                let op = build_kikuchi_even_weighted(bundle.tensor.clone(), 2, w, cfg.ell)?;
                spectral_norm(&op, opts.mode, opts.tol, seed)?.raw_value
            } else {
                let h = s - 1;
                let mut pair = vec![0.0; pow_usize(2, 2 * h)];
                pair[0] = 1.0;
                let op = build_kikuchi_odd_weighted(bundle.cross.clone().expect("odd bundle"), 2, pair, cfg.ell)?;
                spectral_norm(&op, opts.mode, opts.tol, seed)?.raw_value
            };
            let predicted = predicted_norm(parity, cfg.n, m as f64, s, cfg.ell);
            Ok(BenchRow {
                n: cfg.n,
                m,
                m_expected: m_exp,
                ell: cfg.ell,
                s_size: s,
                parity,
                seed,
                norm,
                predicted,
                ratio: if predicted > 0.0 { norm / predicted } else { 0.0 },
            })
        })
        .collect()
}

/// Median of a slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let l = v.len();
    if l == 0 {
        return f64::NAN;
    }
    if l % 2 == 1 {
        v[l / 2]
    } else {
        (v[l / 2 - 1] + v[l / 2]) / 2.0
    }
}

/// All local assignments `β ∈ D^S`.
pub fn all_betas(q: usize, s: usize) -> Vec<Vec<usize>> {
    (0..pow_usize(q, s)).map(|i| decode_tuple(i, q, s)).collect()
}

/// Number of `(S, β)` pairs with `1 ≤ |S| ≤ t`.
pub fn pair_count(q: usize, k: usize, t: usize) -> u128 {
    (1..=t).map(|s| binomial(k as u64, s as u64) * (q as u128).pow(s as u32)).sum()
}
