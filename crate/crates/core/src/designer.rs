//! Search for the cheapest obedient direct rule on small single-pair instances.
//!
//! A direct rule is one recommendation distribution `π_k` per support atom.
//! With affine delays everything lives in path space: the induced flow in atom
//! `k` is `υ A π_k`, the path costs are `b_k + υ G π_k` with
//! `G = A' diag(α)⁻¹ A`, and the obedience constraints are bilinear in `π`.
//! The search is a dense grid over the product of simplices followed by an
//! augmented-Lagrangian projected-gradient refinement from several starts.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bwe::{check_obedience, obedient_flows, solve_bwe, SlackReport, DEFAULT_OBEDIENCE_TOL};
use crate::cg::DEFAULT_TOL;
use crate::costs::{system_cost, AffineDelays};
use crate::error::{Error, Result};
use crate::network::{self, PathSet};
use crate::optimality::{theorem_condition, Verdict};
use crate::optimum::system_optimum;
use crate::signaling::{revelation_transform, rule_full_info, rule_no_info, SignalingRule};
use crate::uncertainty::{path_freeflow, StateDistribution};

/// Default bound on `paths × atoms`.
pub const DEFAULT_CAP: usize = 12;
pub const DEFAULT_MULTISTART: usize = 16;
/// Grid points evaluated at most; the step is coarsened to fit.
pub const DEFAULT_GRID_BUDGET: usize = 2_000_000;
const GRID_KEEP: usize = 4;

#[derive(Debug, Clone)]
pub struct DesignProblem<'a> {
    pub ps: &'a PathSet,
    pub delays: &'a AffineDelays,
    pub dist: &'a StateDistribution,
    /// `None` picks 1e-3 for up to two free parameters and 1e-2 otherwise.
    pub grid_step: Option<f64>,
    pub grid_budget: usize,
    pub multistart: usize,
    /// Obedience tolerance used for certification.
    pub tol: f64,
    /// Tolerance for the equilibrium solves behind the fallback rules.
    pub solver_tol: f64,
    pub cap: usize,
    pub seed: u64,
}

impl<'a> DesignProblem<'a> {
    pub fn new(ps: &'a PathSet, delays: &'a AffineDelays, dist: &'a StateDistribution) -> Self {
        DesignProblem {
            ps,
            delays,
            dist,
            grid_step: None,
            grid_budget: DEFAULT_GRID_BUDGET,
            multistart: DEFAULT_MULTISTART,
            tol: DEFAULT_OBEDIENCE_TOL,
            solver_tol: DEFAULT_TOL,
            cap: DEFAULT_CAP,
            seed: 0x5eed,
        }
    }

    fn validate(&self) -> Result<()> {
        self.dist.check_dim(self.ps.link_count())?;
        if self.ps.od_count() != 1 {
            return Err(Error::MultiOd(self.ps.od_count()));
        }
        let params = self.ps.len() * self.dist.len();
        if params > self.cap {
            return Err(Error::CapExceeded { params, cap: self.cap });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Grid,
    Refined,
    Optimum,
    NoInfo,
    FullInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignResult {
    /// `fractions[atom][path]`.
    pub fractions: Vec<Vec<f64>>,
    pub cost: f64,
    pub slacks: SlackReport,
    pub source: Source,
    pub grid_step: f64,
    pub grid_points: usize,
    #[serde(skip)]
    pub rule: SignalingRule,
}

/// Path-space model of direct rules.
struct Model {
    n: usize,
    throughput: f64,
    probs: Vec<f64>,
    b: Vec<Vec<f64>>,
    g: DMatrix<f64>,
}

impl Model {
    fn new(ps: &PathSet, alphas: &[f64], dist: &StateDistribution) -> Self {
        let a = ps.incidence();
        let inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(alphas.len(), alphas.iter().map(|x| 1.0 / x)));
        Model {
            n: ps.len(),
            throughput: ps.throughput(0),
            probs: dist.atoms().iter().map(|a| a.prob).collect(),
            b: dist.atoms().iter().map(|a| path_freeflow(ps, &a.theta)).collect(),
            g: a.transpose() * inv * a,
        }
    }

    fn path_costs(&self, k: usize, pi: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.b[k][i] + self.throughput * (0..self.n).map(|j| self.g[(i, j)] * pi[j]).sum::<f64>())
            .collect()
    }

    /// Expected cost contribution of atom `k`.
    fn atom_cost(&self, k: usize, pi: &[f64], c: &[f64]) -> f64 {
        // υ π'c = υ b'π + υ² π'Gπ, the link-space f'τ
        self.probs[k] * self.throughput * pi.iter().zip(c).map(|(p, c)| p * c).sum::<f64>()
    }

    /// Contribution of atom `k` to every pair constraint, row-major `n × n`.
    fn atom_slacks(&self, k: usize, pi: &[f64], c: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            for j in 0..self.n {
                out[i * self.n + j] = self.probs[k] * pi[i] * (c[i] - c[j]);
            }
        }
    }

    fn cost(&self, pi: &[Vec<f64>]) -> f64 {
        pi.iter().enumerate().map(|(k, p)| self.atom_cost(k, p, &self.path_costs(k, p))).sum()
    }

    /// Constraint values `g_ij`, `i != j`, in row-major order.
    fn constraints(&self, pi: &[Vec<f64>]) -> Vec<f64> {
        let n = self.n;
        let mut total = vec![0.0; n * n];
        let mut buf = vec![0.0; n * n];
        for (k, p) in pi.iter().enumerate() {
            self.atom_slacks(k, p, &self.path_costs(k, p), &mut buf);
            for (t, x) in total.iter_mut().zip(&buf) {
                *t += x;
            }
        }
        (0..n * n).filter(|&ij| ij / n != ij % n).map(|ij| total[ij]).collect()
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        (0..n * n).filter(|&ij| ij / n != ij % n).map(|ij| (ij / n, ij % n)).collect()
    }

    /// Augmented Lagrangian value and gradient.
    fn lagrangian(&self, pi: &[Vec<f64>], mu: &[f64], rho: f64) -> (f64, Vec<Vec<f64>>) {
        let n = self.n;
        let u = self.throughput;
        let costs: Vec<Vec<f64>> = pi.iter().enumerate().map(|(k, p)| self.path_costs(k, p)).collect();
        let g = self.constraints(pi);
        let mut value = 0.0;
        let mut grad: Vec<Vec<f64>> = vec![vec![0.0; n]; pi.len()];
        for (k, p) in pi.iter().enumerate() {
            value += self.atom_cost(k, p, &costs[k]);
            // d/dπ [υ b'π + υ² π'Gπ] = υ b + 2 υ² G π = υ (2c - b)
            for i in 0..n {
                grad[k][i] += self.probs[k] * u * (2.0 * costs[k][i] - self.b[k][i]);
            }
        }
        for (c, &(i, j)) in self.pairs().iter().enumerate() {
            let m = (mu[c] + rho * g[c]).max(0.0);
            value += (m * m - mu[c] * mu[c]) / (2.0 * rho);
            if m == 0.0 {
                continue;
            }
            for (k, p) in pi.iter().enumerate() {
                let w = m * self.probs[k];
                grad[k][i] += w * (costs[k][i] - costs[k][j]);
                for l in 0..n {
                    grad[k][l] += w * p[i] * u * (self.g[(i, l)] - self.g[(j, l)]);
                }
            }
        }
        (value, grad)
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut shift = 0.0;
    for (i, x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            shift = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - shift).max(0.0);
    }
}

fn step(pi: &[Vec<f64>], grad: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    pi.iter()
        .zip(grad)
        .map(|(p, g)| {
            let mut q: Vec<f64> = p.iter().zip(g).map(|(p, g)| p - t * g).collect();
            project_simplex(&mut q);
            q
        })
        .collect()
}

fn sq_dist(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Projected gradient with Barzilai-Borwein steps and Armijo backtracking.
fn minimize_inner(model: &Model, mut pi: Vec<Vec<f64>>, mu: &[f64], rho: f64) -> Vec<Vec<f64>> {
    let (mut val, mut grad) = model.lagrangian(&pi, mu, rho);
    let mut t = 1.0;
    for _ in 0..3000 {
        let mut accepted = None;
        let mut trial_t = t;
        for _ in 0..60 {
            let cand = step(&pi, &grad, trial_t);
            let (cv, cg) = model.lagrangian(&cand, mu, rho);
            let decrease: f64 = pi
                .iter()
                .flatten()
                .zip(cand.iter().flatten())
                .zip(grad.iter().flatten())
                .map(|((p, c), g)| g * (c - p))
                .sum();
            if cv <= val + 1e-4 * decrease {
                accepted = Some((cand, cv, cg));
                break;
            }
            trial_t *= 0.5;
        }
        let Some((cand, cv, cg)) = accepted else { break };
        let s2 = sq_dist(&cand, &pi);
        let sy: f64 = cand
            .iter()
            .flatten()
            .zip(pi.iter().flatten())
            .zip(cg.iter().flatten().zip(grad.iter().flatten()))
            .map(|((c, p), (a, b))| (c - p) * (a - b))
            .sum();
        pi = cand;
        val = cv;
        grad = cg;
        if s2 <= 1e-30 {
            break;
        }
        t = if sy > 0.0 { (s2 / sy).clamp(1e-10, 1e10) } else { trial_t * 2.0 };
    }
    pi
}

/// Augmented Lagrangian refinement from `start`.
fn refine(model: &Model, start: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let pairs = model.pairs().len();
    let mut mu = vec![0.0; pairs];
    let mut rho = 10.0;
    let mut pi = start;
    let mut last_violation = f64::INFINITY;
    for _ in 0..40 {
        pi = minimize_inner(model, pi, &mu, rho);
        let g = model.constraints(&pi);
        let violation = g.iter().fold(0.0_f64, |m, &x| m.max(x));
        let complementarity = g.iter().zip(&mu).fold(0.0_f64, |m, (&g, &mu)| m.max((mu * g).abs()));
        for (m, &gc) in mu.iter_mut().zip(&g) {
            *m = (*m + rho * gc).max(0.0);
        }
        if violation <= 1e-13 && complementarity <= 1e-13 {
            break;
        }
        if violation > 0.25 * last_violation {
            rho = (rho * 10.0).min(1e12);
        }
        last_violation = violation;
    }
    pi
}

/// All compositions of `steps` into `n` parts, as fractions.
fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == n {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(n, left - c, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, steps, steps, &mut Vec::with_capacity(n), &mut out);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Largest step count whose product grid fits the budget, capped at `1 / step`.
fn grid_steps(n: usize, atoms: usize, step: f64, budget: usize) -> usize {
    let mut steps = (1.0 / step).round().max(1.0) as usize;
    while steps > 1 && binomial(steps + n - 1, n - 1).powi(atoms as i32) > budget as f64 {
        steps = (steps as f64 * 0.9) as usize;
    }
    steps
}

type Ranked = Vec<(f64, usize)>;

fn keep_best(mut list: Ranked, item: (f64, usize)) -> Ranked {
    list.push(item);
    list.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    list.truncate(GRID_KEEP);
    list
}

/// Best feasible grid points as `(cost, flat index)`, ties broken by index.
fn grid_search(model: &Model, points: &[Vec<f64>], atoms: usize, tol: f64) -> Ranked {
    let n = model.n;
    let per = points.len();
    // per-atom caches: cost and constraint contributions
    let cache: Vec<(Vec<f64>, Vec<f64>)> = (0..atoms)
        .map(|k| {
            let mut costs = Vec::with_capacity(per);
            let mut slacks = vec![0.0; per * n * n];
            for (p, pi) in points.iter().enumerate() {
                let c = model.path_costs(k, pi);
                costs.push(model.atom_cost(k, pi, &c));
                model.atom_slacks(k, pi, &c, &mut slacks[p * n * n..(p + 1) * n * n]);
            }
            (costs, slacks)
        })
        .collect();
    let total = per.pow(atoms as u32);
    (0..total)
        .into_par_iter()
        .fold(Vec::new, |best: Ranked, idx| {
            let mut rest = idx;
            let mut cost = 0.0;
            let mut g = [0.0f64; DEFAULT_CAP * DEFAULT_CAP];
            let g = &mut g[..n * n];
            for (costs, slacks) in &cache {
                let p = rest % per;
                rest /= per;
                cost += costs[p];
                for (x, s) in g.iter_mut().zip(&slacks[p * n * n..(p + 1) * n * n]) {
                    *x += s;
                }
            }
            if g.iter().all(|&x| x <= tol) {
                keep_best(best, (cost, idx))
            } else {
                best
            }
        })
        .reduce(Vec::new, |a, b| b.into_iter().fold(a, keep_best))
}

fn decode(points: &[Vec<f64>], atoms: usize, mut idx: usize) -> Vec<Vec<f64>> {
    (0..atoms)
        .map(|_| {
            let p = idx % points.len();
            idx /= points.len();
            points[p].clone()
        })
        .collect()
}

fn random_rule(rng: &mut ChaCha8Rng, n: usize, atoms: usize) -> Vec<Vec<f64>> {
    (0..atoms)
        .map(|_| {
            let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

fn direct_fractions(rule: &SignalingRule, atoms: usize) -> Vec<Vec<f64>> {
    (0..atoms).map(|k| rule.probs(k, 0).to_vec()).collect()
}

/// Cost-minimizing obedient direct rule, certified with [`check_obedience`].
/// The revelations of the no-information and full-information equilibria are
/// always candidates, so the search never comes back empty.
pub fn best_obedient_rule(problem: &DesignProblem) -> Result<DesignResult> {
    problem.validate()?;
    let (ps, delays, dist) = (problem.ps, problem.delays, problem.dist);
    let model = Model::new(ps, delays.alphas(), dist);
    let (n, atoms) = (model.n, dist.len());

    let free = atoms * (n - 1);
    let step = problem.grid_step.unwrap_or(if free <= 2 { 1e-3 } else { 1e-2 });
    let steps = grid_steps(n, atoms, step, problem.grid_budget);
    let points = simplex_grid(n, steps);
    let grid_points = points.len().pow(atoms as u32);
    let ranked = grid_search(&model, &points, atoms, problem.tol);

    let mut candidates: Vec<(Vec<Vec<f64>>, Source)> = Vec::new();
    for &(_, idx) in &ranked {
        candidates.push((decode(&points, atoms, idx), Source::Grid));
    }
    for (rule, source) in [(rule_no_info(ps, dist), Source::NoInfo), (rule_full_info(ps, dist), Source::FullInfo)] {
        let eq = solve_bwe(ps, delays, dist, &rule, problem.solver_tol)?;
        let direct = revelation_transform(ps, dist, &rule, &eq.y)?;
        candidates.push((direct_fractions(&direct, atoms), source));
    }
    let opt = system_optimum(ps, delays, dist, problem.solver_tol)?;
    if let Some(paths) = &opt.flows.path {
        let fr = paths.iter().map(|z| z.iter().map(|x| x / model.throughput).collect()).collect();
        candidates.push((fr, Source::Optimum));
    }

    // local refinement starts: grid leaders, fallbacks, the optimum, random points
    let mut starts: Vec<Vec<Vec<f64>>> = candidates.iter().map(|(c, _)| c.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    while starts.len() < problem.multistart.max(candidates.len()) {
        starts.push(random_rule(&mut rng, n, atoms));
    }
    let refined: Vec<Vec<Vec<f64>>> = starts.into_par_iter().map(|s| refine(&model, s)).collect();
    candidates.extend(refined.into_iter().map(|r| (r, Source::Refined)));

    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, (pi, _))| model.constraints(pi).iter().all(|&g| g <= problem.tol))
        .map(|(i, (pi, _))| (model.cost(pi), i))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    for (_, i) in scored {
        let (fractions, source) = candidates[i].clone();
        let rule = SignalingRule::direct(ps, dist, &fractions)?;
        let slacks = check_obedience(ps, delays, dist, &rule, problem.tol)?;
        if !slacks.pass {
            continue;
        }
        let cost = system_cost(dist, delays, &obedient_flows(ps, &rule)?)?;
        return Ok(DesignResult { fractions, cost, slacks, source, grid_step: 1.0 / steps as f64, grid_points, rule });
    }
    Err(Error::NonConvergence { iterations: problem.multistart, gap: f64::NAN })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AchievabilityMethod {
    /// Closed-form pair condition.
    PairCondition,
    /// Obedience of the optimum recommended directly.
    DirectObedience,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Achievability {
    pub verdict: Verdict,
    pub method: AchievabilityMethod,
    pub warnings: Vec<String>,
}

/// Whether some obedient rule induces the system optimum. Uses the pair
/// condition when it applies, otherwise recommends the optimum directly and
/// checks obedience; non-injective networks are left undecided.
pub fn achievability(ps: &PathSet, delays: &AffineDelays, dist: &StateDistribution, tol: f64) -> Result<Achievability> {
    dist.check_dim(ps.link_count())?;
    if !network::is_incidence_injective(ps) {
        return Ok(Achievability {
            verdict: Verdict::Inapplicable {
                reason: format!(
                    "link-path incidence matrix has rank {} < {} paths; several path flows realize the optimum and no single recommendation is canonical",
                    network::incidence_rank(ps),
                    ps.len()
                ),
            },
            method: AchievabilityMethod::None,
            warnings: vec![],
        });
    }
    let mut warnings = Vec::new();
    if ps.od_count() == 1 {
        let cert = theorem_condition(ps, delays.alphas(), dist)?;
        match cert.verdict {
            Verdict::Inapplicable { reason } => warnings.push(reason),
            verdict => return Ok(Achievability { verdict, method: AchievabilityMethod::PairCondition, warnings: cert.warnings }),
        }
    }
    let opt = system_optimum(ps, delays, dist, tol)?;
    let paths = opt.flows.path.as_ref().ok_or_else(|| Error::InvalidNetwork("optimum path flow unavailable".into()))?;
    let fractions: Vec<Vec<f64>> = paths
        .iter()
        .map(|z| {
            (0..ps.len())
                .map(|g| {
                    let od = (0..ps.od_count()).find(|&o| ps.od_range(o).contains(&g)).unwrap_or(0);
                    z[g] / ps.throughput(od)
                })
                .collect()
        })
        .collect();
    let rule = SignalingRule::direct(ps, dist, &fractions)?;
    let report = check_obedience(ps, delays, dist, &rule, DEFAULT_OBEDIENCE_TOL)?;
    let verdict = match report.worst() {
        Some(w) if !report.pass => Verdict::NotAchievable { i: w.from, j: w.to, value: w.slack },
        _ => Verdict::Achievable,
    };
    Ok(Achievability { verdict, method: AchievabilityMethod::DirectObedience, warnings })
}
