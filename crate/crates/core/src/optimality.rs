//! When can private recommendations reproduce the system optimum?
//!
//! On a single-pair network with injective incidence matrix and affine
//! delays, the optimum path flow is affine in the path free-flow delays
//! `b = A'θ`:
//!
//! ```text
//! z*(θ) = υ W + V b,   M = (2 A' diag(α)⁻¹ A)⁻¹,   r = M 1,   s = 1'M1,
//! W = r / s,           V = (r r' - s M) / s.
//! ```
//!
//! At the optimum every path-cost difference equals half the free-flow
//! difference, so recommending `z*` is obedient iff
//! `E[(b_i - b_j) z*_i] <= 0` for every ordered pair of paths.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{self, PathSet};
use crate::optimum::{check_full_support, single_od, SupportCheck, DEFAULT_DELTA_MIN};
use crate::uncertainty::{moments, path_freeflow, StateDistribution};

/// A pair condition passes when its value is at most this.
pub const CONDITION_TOL: f64 = 1e-9;
const METZLER_TOL: f64 = 1e-12;

/// `M = (2 A' diag(α)⁻¹ A)⁻¹`, symmetric positive definite.
pub fn compute_m(ps: &PathSet, alphas: &[f64]) -> Result<DMatrix<f64>> {
    network::require_injective(ps)?;
    let a = ps.incidence();
    let inv_alpha = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        alphas.len(),
        alphas.iter().map(|x| 2.0 / x),
    ));
    let gram = a.transpose() * inv_alpha * a;
    let n = gram.nrows();
    let chol = gram.cholesky().ok_or(Error::NotInjective { rank: n.saturating_sub(1), paths: n })?;
    let m = chol.inverse();
    Ok((&m + m.transpose()) * 0.5)
}

/// `(W, V)` through the rank-one identity `V = (r r' - s M) / s`.
pub fn compute_wv(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let r: Vec<f64> = (0..n).map(|i| m.row(i).sum()).collect();
    let s: f64 = r.iter().sum();
    let w = r.iter().map(|x| x / s).collect();
    let v = DMatrix::from_fn(n, n, |i, g| (r[i] * r[g] - s * m[(i, g)]) / s);
    (w, v)
}

/// `(W, V)` by the defining double sums, `O(n⁴)`; kept to validate
/// [`compute_wv`].
pub fn compute_wv_by_definition(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let s: f64 = m.iter().sum();
    let w = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).sum::<f64>() / s).collect();
    let v = DMatrix::from_fn(n, n, |i, g| {
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                acc += m[(j, g)] * m[(i, k)] - m[(j, k)] * m[(i, g)];
            }
        }
        acc / s
    });
    (w, v)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCondition {
    pub i: usize,
    pub j: usize,
    pub value: f64,
    /// `|value| <= CONDITION_TOL`.
    pub tight: bool,
}

impl PairCondition {
    fn new(i: usize, j: usize, value: f64) -> Self {
        PairCondition { i, j, value, tight: value.abs() <= CONDITION_TOL }
    }

    pub fn holds(&self) -> bool {
        self.value <= CONDITION_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Achievable,
    NotAchievable { i: usize, j: usize, value: f64 },
    Inapplicable { reason: String },
}

impl Verdict {
    pub fn is_achievable(&self) -> bool {
        matches!(self, Verdict::Achievable)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Achievable => "true",
            Verdict::NotAchievable { .. } => "false",
            Verdict::Inapplicable { .. } => "inapplicable",
        }
    }
}

fn verdict_from_pairs(pairs: &[PairCondition]) -> Verdict {
    match pairs
        .iter()
        .filter(|p| !p.holds())
        .max_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal))
    {
        None => Verdict::Achievable,
        Some(p) => Verdict::NotAchievable { i: p.i, j: p.j, value: p.value },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientFlags {
    pub delta_zero: bool,
    pub k_diagonal: bool,
    pub v_metzler: bool,
    /// Largest `|E[b_i - b_j]|` with its path pair.
    pub max_abs_delta: (f64, usize, usize),
    /// Largest off-diagonal `|K|` with its link pair.
    pub max_offdiag_k: (f64, usize, usize),
    /// Most negative off-diagonal `V` with its path pair.
    pub min_offdiag_v: (f64, usize, usize),
}

impl SufficientFlags {
    pub fn all(&self) -> bool {
        self.delta_zero && self.k_diagonal && self.v_metzler
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityCertificate {
    pub m: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    /// `s · V = r r' - s M`, the double sum before division by `1'M1`.
    pub v_unnormalized: Vec<Vec<f64>>,
    pub mean_b: Vec<f64>,
    pub delta: Vec<Vec<f64>>,
    pub cov_k: Vec<Vec<f64>>,
    pub pairs: Vec<PairCondition>,
    pub flags: Option<SufficientFlags>,
    pub support: Option<SupportCheck>,
    pub warnings: Vec<String>,
    pub verdict: Verdict,
}

fn inapplicable(reason: String, dist: &StateDistribution, ps: &PathSet) -> OptimalityCertificate {
    let stats = moments(ps, dist);
    OptimalityCertificate {
        m: vec![],
        w: vec![],
        v: vec![],
        v_unnormalized: vec![],
        mean_b: stats.mean_b,
        delta: rows(&stats.delta),
        cov_k: rows(&stats.cov_k),
        pairs: vec![],
        flags: None,
        support: None,
        warnings: vec![],
        verdict: Verdict::Inapplicable { reason },
    }
}

/// Evaluates `E[(b_i - b_j)(υ W_i + Σ_γ V_iγ (b_γ - b_i))]` for every ordered
/// pair. Returns an inapplicable verdict when the network has several pairs,
/// a non-injective incidence matrix, or an optimum that leaves a path unused
/// in some state.
pub fn theorem_condition(ps: &PathSet, alphas: &[f64], dist: &StateDistribution) -> Result<OptimalityCertificate> {
    dist.check_dim(ps.link_count())?;
    if ps.od_count() != 1 {
        return Ok(inapplicable(format!("{} origin-destination pairs; exactly one is required", ps.od_count()), dist, ps));
    }
    if !network::is_incidence_injective(ps) {
        return Ok(inapplicable(
            format!(
                "link-path incidence matrix has rank {} < {} paths; the optimal path flow is not unique",
                network::incidence_rank(ps),
                ps.len()
            ),
            dist,
            ps,
        ));
    }
    let throughput = single_od(ps)?;
    let m = compute_m(ps, alphas)?;
    let (w, v) = compute_wv(&m);
    let s: f64 = m.iter().sum();
    let support = check_full_support(ps, alphas, dist, DEFAULT_DELTA_MIN)?;
    let stats = moments(ps, dist);
    let n = ps.len();

    let bs: Vec<Vec<f64>> = dist.atoms().iter().map(|a| path_freeflow(ps, &a.theta)).collect();
    let mut pairs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let value = dist
                .atoms()
                .iter()
                .zip(&bs)
                .map(|(a, b)| {
                    let share = throughput * w[i] + (0..n).map(|g| v[(i, g)] * (b[g] - b[i])).sum::<f64>();
                    a.prob * (b[i] - b[j]) * share
                })
                .sum();
            pairs.push(PairCondition::new(i, j, value));
        }
    }
    let flags = sufficient_flags(&stats.delta, &stats.cov_k, &v);
    let mut warnings = Vec::new();
    let verdict = if support.full_support {
        verdict_from_pairs(&pairs)
    } else if support.boundary {
        let (k, g) = support.witness.unwrap_or((0, 0));
        warnings.push(format!(
            "optimal flow on path {g} in state {k} is {:e}, within {DEFAULT_DELTA_MIN:e} of zero",
            support.min_path_flow
        ));
        verdict_from_pairs(&pairs)
    } else {
        let (k, g) = support.witness.unwrap_or((0, 0));
        Verdict::Inapplicable {
            reason: format!(
                "optimal flow on path {g} is {:e} in state {k}; the condition needs every path used in every state",
                support.min_path_flow
            ),
        }
    };
    Ok(OptimalityCertificate {
        m: rows(&m),
        w,
        v_unnormalized: rows(&(&v * s)),
        v: rows(&v),
        mean_b: stats.mean_b,
        delta: rows(&stats.delta),
        cov_k: rows(&stats.cov_k),
        pairs,
        flags: Some(flags),
        support: Some(support),
        warnings,
        verdict,
    })
}

fn sufficient_flags(delta: &DMatrix<f64>, cov_k: &DMatrix<f64>, v: &DMatrix<f64>) -> SufficientFlags {
    let mut max_abs_delta = (0.0, 0, 0);
    for i in 0..delta.nrows() {
        for j in 0..delta.ncols() {
            if delta[(i, j)].abs() > max_abs_delta.0 {
                max_abs_delta = (delta[(i, j)].abs(), i, j);
            }
        }
    }
    let mut max_offdiag_k = (0.0, 0, 0);
    for e in 0..cov_k.nrows() {
        for l in 0..cov_k.ncols() {
            if e != l && cov_k[(e, l)].abs() > max_offdiag_k.0 {
                max_offdiag_k = (cov_k[(e, l)].abs(), e, l);
            }
        }
    }
    let mut min_offdiag_v = (f64::INFINITY, 0, 0);
    for i in 0..v.nrows() {
        for g in 0..v.ncols() {
            if i != g && v[(i, g)] < min_offdiag_v.0 {
                min_offdiag_v = (v[(i, g)], i, g);
            }
        }
    }
    if v.nrows() < 2 {
        min_offdiag_v = (0.0, 0, 0);
    }
    SufficientFlags {
        delta_zero: max_abs_delta.0 <= CONDITION_TOL,
        k_diagonal: max_offdiag_k.0 <= CONDITION_TOL,
        v_metzler: min_offdiag_v.0 >= -METZLER_TOL,
        max_abs_delta,
        max_offdiag_k,
        min_offdiag_v,
    }
}

/// The three structural sufficient conditions: equal mean free-flow delays,
/// uncorrelated link states, and `V` with nonnegative off-diagonal entries.
pub fn sufficient_conditions(ps: &PathSet, alphas: &[f64], dist: &StateDistribution) -> Result<SufficientFlags> {
    let m = compute_m(ps, alphas)?;
    let (_, v) = compute_wv(&m);
    let stats = moments(ps, dist);
    Ok(sufficient_flags(&stats.delta, &stats.cov_k, &v))
}

fn parallel_links(ps: &PathSet) -> Option<Vec<usize>> {
    if ps.od_count() != 1 || ps.len() != ps.link_count() {
        return None;
    }
    let links: Vec<usize> = ps.paths().iter().map(|p| p.links[0]).collect();
    ps.paths().iter().all(|p| p.links.len() == 1).then_some(links)
}

/// Parallel-link form of the pair condition:
/// `Δ_ij (2υ + Σ_{γ≠i} α_γ Δ_γi) - Σ_{γ≠i} α_γ (K_ii + K_γj - K_γi - K_ij)`.
/// Same sign as the general condition, scaled by `2 Σα / α_i`.
pub fn corollary_parallel(ps: &PathSet, alphas: &[f64], dist: &StateDistribution) -> Result<Vec<PairCondition>> {
    let links = parallel_links(ps).ok_or(Error::NotParallel)?;
    let throughput = ps.throughput(0);
    let stats = moments(ps, dist);
    let (d, k) = (&stats.delta, &stats.path_cov);
    let alpha: Vec<f64> = links.iter().map(|&e| alphas[e]).collect();
    let n = links.len();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut rhs = 2.0 * throughput;
            let mut lhs = 0.0;
            for g in (0..n).filter(|&g| g != i) {
                rhs += alpha[g] * d[(g, i)];
                lhs += alpha[g] * (k[(i, i)] + k[(g, j)] - k[(g, i)] - k[(i, j)]);
            }
            out.push(PairCondition::new(i, j, d[(i, j)] * rhs - lhs));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoLinkCheck {
    /// `Var(Θ_1 - Θ_2)`.
    pub sigma2: f64,
    pub threshold: f64,
    pub holds: bool,
}

/// Two parallel links: achievable iff
/// `Var(Θ_1 - Θ_2) >= max{Δ_12 (2υ/α_2 - Δ_12), Δ_21 (2υ/α_1 - Δ_21)}`.
pub fn corollary_two_link(ps: &PathSet, alphas: &[f64], dist: &StateDistribution) -> Result<TwoLinkCheck> {
    let links = parallel_links(ps).ok_or(Error::NotParallel)?;
    if links.len() != 2 {
        return Err(Error::NotTwoLink(links.len()));
    }
    let throughput = ps.throughput(0);
    let stats = moments(ps, dist);
    let k = &stats.path_cov;
    let sigma2 = k[(0, 0)] + k[(1, 1)] - 2.0 * k[(0, 1)];
    let d12 = stats.delta[(0, 1)];
    let d21 = stats.delta[(1, 0)];
    let (a1, a2) = (alphas[links[0]], alphas[links[1]]);
    let threshold = (d12 * (2.0 * throughput / a2 - d12)).max(d21 * (2.0 * throughput / a1 - d21));
    Ok(TwoLinkCheck { sigma2, threshold, holds: sigma2 - threshold >= -CONDITION_TOL })
}
