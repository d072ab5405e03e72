//! System-optimum flows: closed form on injective single-pair networks,
//! conditional gradient everywhere else.

use rayon::prelude::*;
use serde::Serialize;

use crate::cg::{self, Objective, Problem, Settings};
use crate::costs::{system_cost, AffineDelays, DelayModel, FlowProfile};
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{self, PathSet};
use crate::optimality::compute_m;
use crate::uncertainty::{path_freeflow, StateDistribution};

pub const DEFAULT_DELTA_MIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedForm {
    pub z: Vec<f64>,
    /// Common marginal path cost at the optimum.
    pub lambda: f64,
}

pub(crate) fn single_od(ps: &PathSet) -> Result<f64> {
    if ps.od_count() != 1 {
        return Err(Error::MultiOd(ps.od_count()));
    }
    Ok(ps.throughput(0))
}

/// Stationary point of the total cost on the affine hull of the path simplex:
/// `z = M(λ1 - A'θ)` with `1'z = υ`. Entries may be negative; the caller
/// decides whether the support assumption holds.
pub fn optimum_closed_form(ps: &PathSet, alphas: &[f64], theta: &[f64]) -> Result<ClosedForm> {
    let throughput = single_od(ps)?;
    network::require_injective(ps)?;
    let m = compute_m(ps, alphas)?;
    Ok(closed_form_with(&m, throughput, &path_freeflow(ps, theta)))
}

pub(crate) fn closed_form_with(m: &nalgebra::DMatrix<f64>, throughput: f64, b: &[f64]) -> ClosedForm {
    let n = b.len();
    let r: Vec<f64> = (0..n).map(|i| m.row(i).sum()).collect();
    let s: f64 = r.iter().sum();
    let mb = linalg::mat_vec(m, b);
    let lambda = (throughput + mb.iter().sum::<f64>()) / s;
    let z = (0..n).map(|i| lambda * r[i] - mb[i]).collect();
    ClosedForm { z, lambda }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterativeOptimum {
    pub link: Vec<f64>,
    /// Present when the incidence matrix is injective.
    pub path: Option<Vec<f64>>,
    pub gap: f64,
    pub iterations: usize,
}

/// Minimizes total travel time in a single state by pairwise conditional gradient.
pub fn optimum_iterative<D: DelayModel + ?Sized>(
    ps: &PathSet,
    delays: &D,
    theta: &[f64],
    tol: f64,
) -> Result<IterativeOptimum> {
    let (sol, injective) = solve_state(ps, delays, theta, tol)?;
    Ok(IterativeOptimum {
        link: sol.flows.into_iter().next().expect("one state"),
        path: injective.then(|| sol.weights.iter().enumerate().flat_map(|(od, w)| w.iter().map(move |x| x * ps.throughput(od))).collect()),
        gap: sol.gap,
        iterations: sol.iterations,
    })
}

fn solve_state<D: DelayModel + ?Sized>(
    ps: &PathSet,
    delays: &D,
    theta: &[f64],
    tol: f64,
) -> Result<(cg::Solution, bool)> {
    let blocks = (0..ps.od_count())
        .map(|od| {
            ps.od_range(od)
                .map(|g| {
                    ps.paths()[g]
                        .links
                        .iter()
                        .map(|&e| (0, e, ps.throughput(od)))
                        .collect()
                })
                .collect()
        })
        .collect();
    let problem = Problem {
        delays,
        objective: Objective::TotalCost,
        probs: vec![1.0],
        thetas: vec![theta],
        blocks,
    };
    let sol = problem.solve(None, Settings { tol, ..Settings::default() })?;
    Ok((sol, network::is_incidence_injective(ps)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportCheck {
    pub full_support: bool,
    /// Smallest path flow over all atoms and paths.
    pub min_path_flow: f64,
    /// `(atom, path)` where the minimum is attained.
    pub witness: Option<(usize, usize)>,
    /// Minimum lies within `delta_min` of zero.
    pub boundary: bool,
}

/// Whether the closed-form optimum keeps every path used in every state.
pub fn check_full_support(
    ps: &PathSet,
    alphas: &[f64],
    dist: &StateDistribution,
    delta_min: f64,
) -> Result<SupportCheck> {
    let throughput = single_od(ps)?;
    network::require_injective(ps)?;
    let m = compute_m(ps, alphas)?;
    let mut min = f64::INFINITY;
    let mut witness = None;
    for (k, atom) in dist.atoms().iter().enumerate() {
        let cf = closed_form_with(&m, throughput, &path_freeflow(ps, &atom.theta));
        for (g, &z) in cf.z.iter().enumerate() {
            if z < min {
                min = z;
                witness = Some((k, g));
            }
        }
    }
    Ok(SupportCheck {
        full_support: min >= delta_min,
        min_path_flow: min,
        witness,
        boundary: min.abs() < delta_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimumResult {
    pub method: Method,
    pub flows: FlowProfile,
    /// Per-atom multiplier, closed form only.
    pub lambda: Option<Vec<f64>>,
    pub cost: f64,
    /// `None` when the support test does not apply (several pairs or non-injective).
    pub support: Option<SupportCheck>,
}

/// System optimum in every support atom. Uses the closed form when the
/// network has one pair, an injective incidence matrix and a full-support
/// optimum; otherwise solves each atom iteratively (in parallel).
pub fn system_optimum(
    ps: &PathSet,
    delays: &AffineDelays,
    dist: &StateDistribution,
    tol: f64,
) -> Result<OptimumResult> {
    dist.check_dim(ps.link_count())?;
    let alphas = delays.alphas();
    let closed_ok = ps.od_count() == 1 && network::is_incidence_injective(ps);
    let support = if closed_ok {
        Some(check_full_support(ps, alphas, dist, DEFAULT_DELTA_MIN)?)
    } else {
        None
    };
    if let Some(check) = support.as_ref().filter(|c| c.full_support) {
        let m = compute_m(ps, alphas)?;
        let (paths, lambdas): (Vec<_>, Vec<_>) = dist
            .atoms()
            .iter()
            .map(|a| {
                let cf = closed_form_with(&m, ps.throughput(0), &path_freeflow(ps, &a.theta));
                (cf.z, cf.lambda)
            })
            .unzip();
        let link = paths.iter().map(|z| network::link_flow(ps, z)).collect();
        let flows = FlowProfile { link, path: Some(paths) };
        let cost = system_cost(dist, delays, &flows)?;
        return Ok(OptimumResult {
            method: Method::ClosedForm,
            flows,
            lambda: Some(lambdas),
            cost,
            support: Some(check.clone()),
        });
    }

    let per_atom: Vec<IterativeOptimum> = dist
        .atoms()
        .par_iter()
        .map(|a| optimum_iterative(ps, delays, &a.theta, tol))
        .collect::<Result<_>>()?;
    let injective = network::is_incidence_injective(ps);
    let path = injective.then(|| per_atom.iter().map(|o| o.path.clone().unwrap_or_default()).collect());
    let flows = FlowProfile { link: per_atom.into_iter().map(|o| o.link).collect(), path };
    let cost = system_cost(dist, delays, &flows)?;
    Ok(OptimumResult { method: Method::Iterative, flows, lambda: None, cost, support })
}
