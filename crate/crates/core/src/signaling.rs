//! Signaling rules, posteriors, the fair signal sampler and the revelation
//! transform.
//!
//! Rules are stored extensionally: one probability vector over the message
//! set for every (support atom, origin-destination pair).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::PathSet;
use crate::uncertainty::StateDistribution;

/// Tolerance on per-(atom, pair) message probability sums.
pub const RULE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalingRule {
    messages: Vec<String>,
    /// `probs[atom][od][message]`.
    probs: Vec<Vec<Vec<f64>>>,
    direct: bool,
    public: bool,
}

impl SignalingRule {
    /// Validates a rule. It is flagged direct when its messages are the path
    /// labels (in path order) and no pair is recommended a foreign path.
    pub fn new(
        ps: &PathSet,
        dist: &StateDistribution,
        messages: Vec<String>,
        probs: Vec<Vec<Vec<f64>>>,
        public: bool,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidRule(m));
        if messages.is_empty() {
            return bad("empty message set".into());
        }
        if probs.len() != dist.len() {
            return bad(format!("rule covers {} atoms, distribution has {}", probs.len(), dist.len()));
        }
        for (k, per_od) in probs.iter().enumerate() {
            if per_od.len() != ps.od_count() {
                return bad(format!("atom {k}: expected {} pairs, got {}", ps.od_count(), per_od.len()));
            }
            for (od, p) in per_od.iter().enumerate() {
                if p.len() != messages.len() {
                    return bad(format!("atom {k}, pair {od}: expected {} messages", messages.len()));
                }
                if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return bad(format!("atom {k}, pair {od}: negative or non-finite probability"));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > RULE_TOL {
                    return bad(format!("atom {k}, pair {od}: probabilities sum to {sum}"));
                }
            }
        }
        let direct = messages.as_slice() == ps.labels()
            && probs.iter().all(|per_od| {
                per_od.iter().enumerate().all(|(od, p)| {
                    let range = ps.od_range(od);
                    p.iter().enumerate().all(|(g, &x)| range.contains(&g) || x == 0.0)
                })
            });
        Ok(SignalingRule { messages, probs, direct, public })
    }

    /// Direct rule from per-atom path recommendation fractions
    /// (`fractions[atom][path]`, summing to one within each pair).
    pub fn direct(ps: &PathSet, dist: &StateDistribution, fractions: &[Vec<f64>]) -> Result<Self> {
        let probs = fractions
            .iter()
            .map(|frac| {
                (0..ps.od_count())
                    .map(|od| {
                        let range = ps.od_range(od);
                        (0..ps.len()).map(|g| if range.contains(&g) { frac[g] } else { 0.0 }).collect()
                    })
                    .collect()
            })
            .collect();
        let rule = Self::new(ps, dist, ps.labels().to_vec(), probs, false)?;
        if !rule.direct {
            return Err(Error::NotDirect);
        }
        Ok(rule)
    }

    pub fn messages(&self) -> &[String] {
        &self.messages
    }

    pub fn message_count(&self) -> usize {
        self.messages.len()
    }

    pub fn atom_count(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, atom: usize, od: usize, message: usize) -> f64 {
        self.probs[atom][od][message]
    }

    pub fn probs(&self, atom: usize, od: usize) -> &[f64] {
        &self.probs[atom][od]
    }

    pub fn is_direct(&self) -> bool {
        self.direct
    }

    pub fn is_public(&self) -> bool {
        self.public
    }

    /// Total probability that a user of `od` receives `message`.
    pub fn message_prob(&self, dist: &StateDistribution, od: usize, message: usize) -> f64 {
        dist.atoms()
            .iter()
            .enumerate()
            .map(|(k, a)| a.prob * self.probs[k][od][message])
            .sum()
    }

    /// Per-atom recommendation fractions `[atom][path]` of a direct rule.
    pub fn recommendations(&self, ps: &PathSet) -> Result<Vec<Vec<f64>>> {
        if !self.direct {
            return Err(Error::NotDirect);
        }
        Ok(self
            .probs
            .iter()
            .map(|per_od| {
                (0..ps.len())
                    .map(|g| per_od[ps.paths()[g].od][g])
                    .collect()
            })
            .collect())
    }
}

/// One message sent to everybody regardless of the state.
pub fn rule_no_info(ps: &PathSet, dist: &StateDistribution) -> SignalingRule {
    SignalingRule {
        messages: vec!["none".into()],
        probs: vec![vec![vec![1.0]; ps.od_count()]; dist.len()],
        direct: false,
        public: true,
    }
}

/// The realized state is announced to everybody: message `k` in atom `k`.
pub fn rule_full_info(ps: &PathSet, dist: &StateDistribution) -> SignalingRule {
    let n = dist.len();
    SignalingRule {
        messages: (0..n).map(|k| format!("state{k}")).collect(),
        probs: (0..n)
            .map(|k| {
                let mut p = vec![0.0; n];
                p[k] = 1.0;
                vec![p; ps.od_count()]
            })
            .collect(),
        direct: false,
        public: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Posterior {
    /// Reweighted atom probabilities; all zero when unreachable.
    pub weights: Vec<f64>,
    pub reachable: bool,
    pub message_prob: f64,
}

/// Belief over the support atoms of a user of `od` who received `message`.
pub fn posterior(rule: &SignalingRule, dist: &StateDistribution, od: usize, message: usize) -> Posterior {
    let joint: Vec<f64> = dist
        .atoms()
        .iter()
        .enumerate()
        .map(|(k, a)| a.prob * rule.prob(k, od, message))
        .collect();
    let total: f64 = joint.iter().sum();
    if total > 0.0 {
        Posterior { weights: joint.iter().map(|j| j / total).collect(), reachable: true, message_prob: total }
    } else {
        Posterior { weights: vec![0.0; joint.len()], reachable: false, message_prob: 0.0 }
    }
}

/// Message of user `u ∈ [0, throughput)` of `od` in state `atom` under the
/// shared seed `psi ∈ [0, 1)`. Users are laid on a circle of unit length
/// offset by `psi`, and each message owns an arc of length equal to its
/// probability, so the mass of users receiving a message is exact.
pub fn sample_signal(
    rule: &SignalingRule,
    od: usize,
    atom: usize,
    u: f64,
    throughput: f64,
    psi: f64,
) -> usize {
    let raw = psi + u / throughput;
    let pos = raw - raw.floor();
    let probs = rule.probs(atom, od);
    let mut upper = 0.0;
    for (m, &p) in probs.iter().enumerate() {
        upper += p;
        if pos < upper {
            return m;
        }
    }
    // rounding left `pos` past the last boundary
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Users' response: `y[od][message][k]` is the fraction of `od` users told
/// `message` who take the `k`-th path of `od`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChoiceProfile {
    y: Vec<Vec<Vec<f64>>>,
}

impl ChoiceProfile {
    pub fn new(ps: &PathSet, messages: usize, y: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let bad = |m: String| Err(Error::MalformedChoiceProfile(m));
        if y.len() != ps.od_count() {
            return bad(format!("expected {} pairs, got {}", ps.od_count(), y.len()));
        }
        for (od, rows) in y.iter().enumerate() {
            if rows.len() != messages {
                return bad(format!("pair {od}: expected {messages} messages, got {}", rows.len()));
            }
            for (m, row) in rows.iter().enumerate() {
                if row.len() != ps.od_range(od).len() {
                    return bad(format!("pair {od}, message {m}: wrong number of paths"));
                }
                if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return bad(format!("pair {od}, message {m}: negative entry"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > RULE_TOL {
                    return bad(format!("pair {od}, message {m}: fractions sum to {sum}"));
                }
            }
        }
        Ok(ChoiceProfile { y })
    }

    /// Everybody follows the recommendation of a direct rule.
    pub fn obedient(ps: &PathSet) -> Self {
        let y = (0..ps.od_count())
            .map(|od| {
                let range = ps.od_range(od);
                (0..ps.len())
                    .map(|m| range.clone().map(|g| if g == m { 1.0 } else { 0.0 }).collect())
                    .map(|row: Vec<f64>| {
                        if row.iter().sum::<f64>() == 0.0 {
                            // foreign recommendation, never sent: any valid row
                            let mut r = vec![0.0; row.len()];
                            r[0] = 1.0;
                            r
                        } else {
                            row
                        }
                    })
                    .collect()
            })
            .collect();
        ChoiceProfile { y }
    }

    pub fn rows(&self, od: usize) -> &[Vec<f64>] {
        &self.y[od]
    }

    /// Fraction of `od` users told `message` who take global path `path`.
    pub fn get(&self, ps: &PathSet, od: usize, path: usize, message: usize) -> f64 {
        let range = ps.od_range(od);
        if range.contains(&path) {
            self.y[od][message][path - range.start]
        } else {
            0.0
        }
    }

    pub fn message_count(&self) -> usize {
        self.y.first().map_or(0, |rows| rows.len())
    }
}

/// Direct rule recommending each path with the probability that the original
/// rule's message leads users onto it.
pub fn revelation_transform(
    ps: &PathSet,
    dist: &StateDistribution,
    rule: &SignalingRule,
    y: &ChoiceProfile,
) -> Result<SignalingRule> {
    if y.y.len() != ps.od_count() || y.message_count() != rule.message_count() {
        return Err(Error::MalformedChoiceProfile(
            "choice profile does not match the rule's messages".into(),
        ));
    }
    let fractions: Vec<Vec<f64>> = (0..rule.atom_count())
        .map(|k| {
            let mut frac = vec![0.0; ps.len()];
            for od in 0..ps.od_count() {
                let range = ps.od_range(od);
                for (m, &p) in rule.probs(k, od).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (local, g) in range.clone().enumerate() {
                        frac[g] += y.y[od][m][local] * p;
                    }
                }
            }
            frac
        })
        .collect();
    SignalingRule::direct(ps, dist, &fractions)
}
