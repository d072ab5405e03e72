//! JSON scenario files: network, state distribution, optional rule and sweep.
//!
//! Any number in the network or distribution sections may be replaced by the
//! name of an entry of `parameters`, which is how sweeps vary a scenario.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::costs::AffineDelays;
use crate::error::{Error, Result};
use crate::network::{enumerate_paths, Link, Network, OdPair, PathSet, DEFAULT_MAX_PATHS};
use crate::signaling::SignalingRule;
use crate::uncertainty::{make_twopoint, Atom, StateDistribution};

pub const SCHEMA_VERSION: u32 = 1;

/// A literal number or a parameter name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Param(String),
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub alpha: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    pub origin: String,
    pub destination: String,
    pub rate: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: Vec<String>,
    pub links: Vec<LinkSpec>,
    pub throughput: Vec<DemandSpec>,
    /// Explicit path order as link-id sequences; enumeration order otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub theta: Vec<Value>,
    pub prob: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoPointSpec {
    pub base: Vec<Value>,
    pub shift: Vec<Value>,
    pub sigma: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Atoms(Vec<AtomSpec>),
    Twopoint(TwoPointSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleEntry {
    /// Support atom index.
    pub state: usize,
    /// `[origin, destination]` node ids.
    pub od: [String; 2],
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub messages: Vec<String>,
    #[serde(default)]
    pub public: bool,
    pub entries: Vec<RuleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
    pub network: NetworkSpec,
    pub distribution: DistributionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// A validated scenario ready for the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub network: Network,
    pub paths: PathSet,
    pub delays: AffineDelays,
    pub dist: StateDistribution,
    pub rule: Option<SignalingRule>,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Scenario(msg.into()))
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        if s.schema_version != SCHEMA_VERSION {
            return invalid(format!("unsupported schema_version {}, expected {SCHEMA_VERSION}", s.schema_version));
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Copy with `name` set to `value`.
    pub fn with_param(&self, name: &str, value: f64) -> Self {
        let mut s = self.clone();
        s.parameters.insert(name.to_string(), value);
        s
    }

    fn value(&self, v: &Value) -> Result<f64> {
        let x = match v {
            Value::Num(x) => *x,
            Value::Param(name) => match self.parameters.get(name) {
                Some(&x) => x,
                None => return invalid(format!("unknown parameter {name:?}")),
            },
        };
        if !x.is_finite() {
            return invalid(format!("non-finite value {x}"));
        }
        Ok(x)
    }

    fn values(&self, vs: &[Value]) -> Result<Vec<f64>> {
        vs.iter().map(|v| self.value(v)).collect()
    }

    pub fn build(&self) -> Result<Instance> {
        let spec = &self.network;
        let node = |id: &str| {
            spec.nodes
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::Scenario(format!("unknown node {id:?}")))
        };
        let links = spec
            .links
            .iter()
            .map(|l| {
                Ok(Link { id: l.id.clone(), tail: node(&l.tail)?, head: node(&l.head)?, alpha: self.value(&l.alpha)? })
            })
            .collect::<Result<Vec<_>>>()?;
        let demand = spec
            .throughput
            .iter()
            .map(|d| {
                Ok(OdPair {
                    origin: node(&d.origin)?,
                    destination: node(&d.destination)?,
                    throughput: self.value(&d.rate)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let network = Network::new(spec.nodes.clone(), links, demand)?;
        let mut paths = enumerate_paths(&network, DEFAULT_MAX_PATHS)?;
        if let Some(order) = &spec.paths {
            let order = order
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|id| network.link_index(id).ok_or_else(|| Error::Scenario(format!("unknown link {id:?}"))))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            paths = paths.reordered(&network, &order)?;
        }
        let delays = AffineDelays::new(network.alphas())?;
        let dist = match &self.distribution {
            DistributionSpec::Atoms(atoms) => StateDistribution::new(
                atoms
                    .iter()
                    .map(|a| Ok(Atom { theta: self.values(&a.theta)?, prob: self.value(&a.prob)? }))
                    .collect::<Result<Vec<_>>>()?,
            )?,
            DistributionSpec::Twopoint(t) => {
                let sigma = self.value(&t.sigma)?;
                if sigma < 0.0 {
                    return invalid(format!("two-point sigma must be nonnegative, got {sigma}"));
                }
                make_twopoint(&self.values(&t.base)?, &self.values(&t.shift)?, sigma)?
            }
        };
        dist.check_dim(network.links().len())?;
        let rule = match &self.rule {
            Some(r) => Some(r.build(&network, &paths, &dist)?),
            None => None,
        };
        Ok(Instance { network, paths, delays, dist, rule })
    }
}

impl RuleSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidRule(e.to_string()))
    }

    /// Every (state, pair with positive throughput) must appear exactly once.
    /// Entries for other node pairs are ignored.
    pub fn build(&self, network: &Network, ps: &PathSet, dist: &StateDistribution) -> Result<SignalingRule> {
        let pairs = ps.od_count();
        let mut probs: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; pairs]; dist.len()];
        for e in &self.entries {
            let node = |id: &str| network.node_index(id).ok_or_else(|| Error::InvalidRule(format!("unknown node {id:?}")));
            let (o, d) = (node(&e.od[0])?, node(&e.od[1])?);
            if e.state >= dist.len() {
                return Err(Error::InvalidRule(format!("state {} out of range ({} atoms)", e.state, dist.len())));
            }
            let Some(od) = network.od_index(o, d) else {
                continue;
            };
            let slot = &mut probs[e.state][od];
            if slot.is_some() {
                return Err(Error::InvalidRule(format!("duplicate entry for state {} pair {:?}", e.state, e.od)));
            }
            *slot = Some(e.probs.clone());
        }
        let probs = probs
            .into_iter()
            .enumerate()
            .map(|(k, per_od)| {
                per_od
                    .into_iter()
                    .enumerate()
                    .map(|(od, p)| p.ok_or_else(|| Error::InvalidRule(format!("no entry for state {k} pair {od}"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        SignalingRule::new(ps, dist, self.messages.clone(), probs, self.public)
    }
}

/// Parses `"min:max"`.
pub fn parse_range(text: &str) -> Result<(f64, f64)> {
    let bad = || Error::Scenario(format!("range {text:?} is not of the form min:max"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(bad());
    }
    Ok((a, b))
}

/// `steps` evenly spaced points from `min` to `max` inclusive.
pub fn sweep_points(min: f64, max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![min],
        _ => (0..steps).map(|i| min + (max - min) * i as f64 / (steps - 1) as f64).collect(),
    }
}

/// Shortest form with `digits` significant digits, like C's `%.{digits}g`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}{:02}", trim(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    }
}
