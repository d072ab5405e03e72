//! Link delays, path costs and the expected system cost.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::PathSet;
use crate::uncertainty::StateDistribution;

/// Separable link delay functions, strictly increasing in the flow.
pub trait DelayModel: Sync {
    fn link_count(&self) -> usize;

    fn delay(&self, link: usize, theta: f64, flow: f64) -> f64;

    /// `∫_0^flow delay(link, theta, s) ds`.
    fn antiderivative(&self, link: usize, theta: f64, flow: f64) -> f64;

    /// Derivative of the delay with respect to the flow.
    fn slope(&self, link: usize, theta: f64, flow: f64) -> f64;
}

/// `delay = flow / alpha + theta` on every link.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDelays {
    alphas: Vec<f64>,
}

impl AffineDelays {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidNetwork(format!("non-positive slope {a}")));
        }
        Ok(AffineDelays { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

impl DelayModel for AffineDelays {
    fn link_count(&self) -> usize {
        self.alphas.len()
    }

    fn delay(&self, link: usize, theta: f64, flow: f64) -> f64 {
        link_delay(self.alphas[link], theta, flow)
    }

    fn antiderivative(&self, link: usize, theta: f64, flow: f64) -> f64 {
        flow * flow / (2.0 * self.alphas[link]) + theta * flow
    }

    fn slope(&self, link: usize, _theta: f64, _flow: f64) -> f64 {
        1.0 / self.alphas[link]
    }
}

pub fn link_delay(alpha: f64, theta: f64, flow: f64) -> f64 {
    flow / alpha + theta
}

pub fn link_delays<D: DelayModel + ?Sized>(delays: &D, theta: &[f64], f: &[f64]) -> Vec<f64> {
    (0..f.len()).map(|e| delays.delay(e, theta[e], f[e])).collect()
}

/// Cost of every path, `A' τ(θ, f)`.
pub fn path_cost<D: DelayModel + ?Sized>(ps: &PathSet, delays: &D, theta: &[f64], f: &[f64]) -> Vec<f64> {
    linalg::mat_t_vec(ps.incidence(), &link_delays(delays, theta, f))
}

/// State-dependent link flows, one vector per support atom.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowProfile {
    pub link: Vec<Vec<f64>>,
    /// Path flows per atom, when they are well defined.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<Vec<f64>>>,
}

impl FlowProfile {
    pub fn from_link_flows(link: Vec<Vec<f64>>) -> Self {
        FlowProfile { link, path: None }
    }

    /// Largest per-atom, per-link absolute difference.
    pub fn max_link_diff(&self, other: &FlowProfile) -> f64 {
        self.link
            .iter()
            .zip(&other.link)
            .map(|(a, b)| linalg::max_abs_diff(a, b))
            .fold(0.0, f64::max)
    }
}

/// Total travel time `Σ_e f_e τ_e(θ_e, f_e)` in one state.
pub fn state_cost<D: DelayModel + ?Sized>(delays: &D, theta: &[f64], f: &[f64]) -> f64 {
    (0..f.len()).map(|e| f[e] * delays.delay(e, theta[e], f[e])).sum()
}

/// Expected total travel time of a state-dependent flow.
pub fn system_cost<D: DelayModel + ?Sized>(
    dist: &StateDistribution,
    delays: &D,
    flow: &FlowProfile,
) -> Result<f64> {
    if flow.link.len() < dist.len() {
        return Err(Error::MissingState(flow.link.len()));
    }
    Ok(dist
        .atoms()
        .iter()
        .zip(&flow.link)
        .map(|(a, f)| a.prob * state_cost(delays, &a.theta, f))
        .sum())
}
