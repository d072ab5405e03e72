//! Finite-support network states and their moment statistics.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::PathSet;

/// Tolerance on the total probability mass.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Atom {
    /// Free-flow delay of every link in this state.
    pub theta: Vec<f64>,
    pub prob: f64,
}

/// Distribution of the network state with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDistribution {
    atoms: Vec<Atom>,
}

impl StateDistribution {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let Some(first) = atoms.first() else {
            return Err(Error::InvalidDistribution("empty support".into()));
        };
        let dim = first.theta.len();
        let mut mass = 0.0;
        for (k, a) in atoms.iter().enumerate() {
            if a.theta.len() != dim {
                return Err(Error::InvalidDistribution(format!(
                    "atom {k} has {} entries, expected {dim}",
                    a.theta.len()
                )));
            }
            if !(a.prob.is_finite() && a.prob > 0.0) {
                return Err(Error::InvalidDistribution(format!("atom {k} has probability {}", a.prob)));
            }
            if let Some((link, &value)) = a.theta.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
                return Err(Error::NegativeState { link, value });
            }
            mass += a.prob;
        }
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {mass}")));
        }
        Ok(StateDistribution { atoms })
    }

    /// Point mass at `theta`.
    pub fn deterministic(theta: Vec<f64>) -> Result<Self> {
        Self::new(vec![Atom { theta, prob: 1.0 }])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].theta.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for a in &self.atoms {
            for (m, t) in mean.iter_mut().zip(&a.theta) {
                *m += a.prob * t;
            }
        }
        mean
    }

    pub fn expect(&self, mut f: impl FnMut(&Atom) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.prob * f(a)).sum()
    }

    pub(crate) fn check_dim(&self, links: usize) -> Result<()> {
        if self.dim() != links {
            return Err(Error::InvalidDistribution(format!(
                "states have {} entries but the network has {links} links",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Symmetric two-point distribution `base ± sigma * shift`, each with
/// probability 1/2. `sigma = 0` collapses to a single atom.
pub fn make_twopoint(base: &[f64], shift: &[f64], sigma: f64) -> Result<StateDistribution> {
    if base.len() != shift.len() {
        return Err(Error::InvalidDistribution("base and shift differ in length".into()));
    }
    if !sigma.is_finite() {
        return Err(Error::InvalidDistribution(format!("sigma is {sigma}")));
    }
    if sigma == 0.0 {
        return StateDistribution::deterministic(base.to_vec());
    }
    let plus: Vec<f64> = base.iter().zip(shift).map(|(b, s)| b + sigma * s).collect();
    let minus: Vec<f64> = base.iter().zip(shift).map(|(b, s)| b - sigma * s).collect();
    StateDistribution::new(vec![Atom { theta: plus, prob: 0.5 }, Atom { theta: minus, prob: 0.5 }])
}

/// Free-flow delay of every path, `A' theta`.
pub fn path_freeflow(ps: &PathSet, theta: &[f64]) -> Vec<f64> {
    linalg::mat_t_vec(ps.incidence(), theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    /// `delta[(i, j)] = E[b_i - b_j]` over path pairs.
    pub delta: DMatrix<f64>,
    /// Covariance of the state over link pairs.
    pub cov_k: DMatrix<f64>,
    /// Covariance of the path free-flow delays.
    pub path_cov: DMatrix<f64>,
    pub mean_b: Vec<f64>,
}

pub fn moments(ps: &PathSet, dist: &StateDistribution) -> MomentStats {
    let mean_theta = dist.mean();
    let mean_b = path_freeflow(ps, &mean_theta);
    let n = ps.len();
    let delta = DMatrix::from_fn(n, n, |i, j| mean_b[i] - mean_b[j]);

    let links = dist.dim();
    let mut cov_k = DMatrix::zeros(links, links);
    let mut path_cov = DMatrix::zeros(n, n);
    for a in dist.atoms() {
        let dt: Vec<f64> = a.theta.iter().zip(&mean_theta).map(|(t, m)| t - m).collect();
        let db = path_freeflow(ps, &dt);
        for e in 0..links {
            for l in e..links {
                let x = a.prob * dt[e] * dt[l];
                cov_k[(e, l)] += x;
                if l != e {
                    cov_k[(l, e)] += x;
                }
            }
        }
        for i in 0..n {
            for j in i..n {
                let x = a.prob * db[i] * db[j];
                path_cov[(i, j)] += x;
                if j != i {
                    path_cov[(j, i)] += x;
                }
            }
        }
    }
    MomentStats { delta, cov_k, path_cov, mean_b }
}
