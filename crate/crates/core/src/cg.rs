//! Pairwise conditional gradient over a product of simplices.
//!
//! Both the system optimum and the equilibrium potential are separable convex
//! functions of state-dependent link flows, and those flows are linear in the
//! simplex weights. Each weight owns a sparse "column" of flow it adds per
//! unit of mass. A step moves mass inside one block from the worst used
//! column to the best column, with an exact line search.

use crate::costs::DelayModel;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
const REFRESH_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Objective {
    /// `Σ_e ∫_0^{f_e} τ_e`, whose minimizers are equilibria.
    Potential,
    /// `Σ_e f_e τ_e`, total travel time.
    TotalCost,
}

/// Flow added per unit of mass: `(atom, link, amount)` triples.
pub(crate) type Column = Vec<(usize, usize, f64)>;

pub(crate) struct Problem<'a, D: DelayModel + ?Sized> {
    pub delays: &'a D,
    pub objective: Objective,
    pub probs: Vec<f64>,
    pub thetas: Vec<&'a [f64]>,
    pub blocks: Vec<Vec<Column>>,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub weights: Vec<Vec<f64>>,
    pub flows: Vec<Vec<f64>>,
    pub gap: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, record_trace: false }
    }
}

impl<D: DelayModel + ?Sized> Problem<'_, D> {
    fn links(&self) -> usize {
        self.delays.link_count()
    }

    pub fn flows(&self, weights: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut flows = vec![vec![0.0; self.links()]; self.probs.len()];
        for (block, w) in self.blocks.iter().zip(weights) {
            for (col, &x) in block.iter().zip(w) {
                if x != 0.0 {
                    for &(k, e, a) in col {
                        flows[k][e] += x * a;
                    }
                }
            }
        }
        flows
    }

    pub fn value(&self, flows: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (k, f) in flows.iter().enumerate() {
            let theta = self.thetas[k];
            let v: f64 = match self.objective {
                Objective::Potential => (0..f.len())
                    .map(|e| self.delays.antiderivative(e, theta[e], f[e]))
                    .sum(),
                Objective::TotalCost => (0..f.len())
                    .map(|e| f[e] * self.delays.delay(e, theta[e], f[e]))
                    .sum(),
            };
            total += self.probs[k] * v;
        }
        total
    }

    fn marginal(&self, k: usize, e: usize, f: f64) -> f64 {
        let theta = self.thetas[k][e];
        match self.objective {
            Objective::Potential => self.delays.delay(e, theta, f),
            Objective::TotalCost => {
                self.delays.delay(e, theta, f) + f * self.delays.slope(e, theta, f)
            }
        }
    }

    /// Partial derivative of the objective with respect to each weight.
    pub fn gradient(&self, flows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let marg: Vec<Vec<f64>> = flows
            .iter()
            .enumerate()
            .map(|(k, f)| (0..f.len()).map(|e| self.probs[k] * self.marginal(k, e, f[e])).collect())
            .collect();
        self.blocks
            .iter()
            .map(|block| {
                block
                    .iter()
                    .map(|col| col.iter().map(|&(k, e, a)| a * marg[k][e]).sum())
                    .collect()
            })
            .collect()
    }

    fn directional(&self, flows: &[Vec<f64>], dir: &[(usize, usize, f64)], t: f64) -> f64 {
        dir.iter()
            .map(|&(k, e, d)| self.probs[k] * d * self.marginal(k, e, flows[k][e] + t * d))
            .sum()
    }

    /// Minimizes the objective from `init` (uniform weights when `None`).
    pub fn solve(&self, init: Option<Vec<Vec<f64>>>, settings: Settings) -> Result<Solution> {
        let mut weights = init.unwrap_or_else(|| {
            self.blocks
                .iter()
                .map(|b| vec![1.0 / b.len() as f64; b.len()])
                .collect()
        });
        let mut flows = self.flows(&weights);
        let mut trace = Vec::new();
        if settings.record_trace {
            trace.push(self.value(&flows));
        }
        let mut gap = f64::INFINITY;
        for iter in 0..=settings.max_iter {
            if iter > 0 && iter % REFRESH_EVERY == 0 {
                flows = self.flows(&weights);
            }
            let grad = self.gradient(&flows);
            gap = 0.0;
            // (pairwise gap, block, away index, toward index)
            let mut best: Option<(f64, usize, usize, usize)> = None;
            for (b, (g, w)) in grad.iter().zip(&weights).enumerate() {
                if g.len() < 2 {
                    continue;
                }
                let toward = argmin(g);
                let mut away = None;
                for (i, (&gi, &wi)) in g.iter().zip(w).enumerate() {
                    if wi > 0.0 && away.is_none_or(|a: usize| gi > g[a]) {
                        away = Some(i);
                    }
                }
                let fw: f64 = g.iter().zip(w).map(|(gi, wi)| gi * wi).sum::<f64>() - g[toward];
                gap += fw.max(0.0);
                let away = away.expect("simplex block has mass");
                let pg = g[away] - g[toward];
                if pg > 0.0 && best.is_none_or(|(p, ..)| pg > p) {
                    best = Some((pg, b, away, toward));
                }
            }
            if gap <= settings.tol {
                let flows = self.flows(&weights);
                return Ok(Solution { weights, flows, gap, iterations: iter, trace });
            }
            if iter == settings.max_iter {
                break;
            }
            let Some((_, b, away, toward)) = best else {
                // gap above tolerance with no improving pair: rounding floor
                let flows = self.flows(&weights);
                return Ok(Solution { weights, flows, gap, iterations: iter, trace });
            };
            let dir = difference(&self.blocks[b][toward], &self.blocks[b][away]);
            let t_max = weights[b][away];
            let t = self.line_search(&flows, &dir, t_max);
            if t <= 0.0 {
                let flows = self.flows(&weights);
                return Ok(Solution { weights, flows, gap, iterations: iter, trace });
            }
            if t >= t_max {
                weights[b][toward] += t_max;
                weights[b][away] = 0.0;
            } else {
                weights[b][toward] += t;
                weights[b][away] -= t;
            }
            for &(k, e, d) in &dir {
                flows[k][e] += t * d;
            }
            if settings.record_trace {
                trace.push(self.value(&flows));
            }
        }
        Err(Error::NonConvergence { iterations: settings.max_iter, gap })
    }

    /// Step in `[0, t_max]` minimizing the objective along `dir`.
    fn line_search(&self, flows: &[Vec<f64>], dir: &[(usize, usize, f64)], t_max: f64) -> f64 {
        let d0 = self.directional(flows, dir, 0.0);
        if d0 >= 0.0 {
            return 0.0;
        }
        let d1 = self.directional(flows, dir, t_max);
        if d1 <= 0.0 {
            return t_max;
        }
        // Illinois regula falsi; exact in one step when the derivative is affine.
        let (mut lo, mut hi, mut flo, mut fhi) = (0.0, t_max, d0, d1);
        let mut side = 0i8;
        let mut t = lo;
        for _ in 0..200 {
            t = (lo * fhi - hi * flo) / (fhi - flo);
            if !(t > lo && t < hi) {
                t = 0.5 * (lo + hi);
            }
            let ft = self.directional(flows, dir, t);
            if ft == 0.0 || (hi - lo) <= 1e-16 * t_max.max(1.0) {
                break;
            }
            if ft < 0.0 {
                lo = t;
                flo = ft;
                if side == -1 {
                    fhi *= 0.5;
                }
                side = -1;
            } else {
                hi = t;
                fhi = ft;
                if side == 1 {
                    flo *= 0.5;
                }
                side = 1;
            }
            if (fhi - flo).abs() < f64::MIN_POSITIVE {
                break;
            }
            if ft.abs() <= 1e-15 * (d0.abs() + d1.abs()) {
                break;
            }
        }
        t
    }
}

fn argmin(g: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..g.len() {
        if g[i] < g[best] {
            best = i;
        }
    }
    best
}

/// Sparse `a - b`.
fn difference(a: &Column, b: &Column) -> Vec<(usize, usize, f64)> {
    let mut out: Vec<(usize, usize, f64)> = a.clone();
    out.extend(b.iter().map(|&(k, e, x)| (k, e, -x)));
    out.sort_by_key(|&(k, e, _)| (k, e));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(out.len());
    for (k, e, x) in out {
        match merged.last_mut() {
            Some(last) if last.0 == k && last.1 == e => last.2 += x,
            _ => merged.push((k, e, x)),
        }
    }
    merged.retain(|&(_, _, x)| x != 0.0);
    merged
}
