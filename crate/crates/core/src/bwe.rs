//! Bayesian Wardrop equilibria as minimizers of the signaling potential, and
//! the equilibrium / obedience slack checks.

use serde::Serialize;

use crate::cg::{Objective, Problem, Settings};
use crate::costs::{path_cost, system_cost, DelayModel, FlowProfile};
use crate::error::{Error, Result};
use crate::network::PathSet;
use crate::signaling::{ChoiceProfile, SignalingRule};
use crate::uncertainty::StateDistribution;

pub const DEFAULT_OBEDIENCE_TOL: f64 = 1e-9;

/// Link flows per atom induced by a rule and the users' response.
pub fn induced_flows(
    ps: &PathSet,
    dist: &StateDistribution,
    rule: &SignalingRule,
    y: &ChoiceProfile,
) -> FlowProfile {
    let link = (0..dist.len())
        .map(|k| {
            let mut z = vec![0.0; ps.len()];
            for od in 0..ps.od_count() {
                let range = ps.od_range(od);
                let rows = y.rows(od);
                for (m, &p) in rule.probs(k, od).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (local, g) in range.clone().enumerate() {
                        z[g] += ps.throughput(od) * p * rows[m][local];
                    }
                }
            }
            crate::network::link_flow(ps, &z)
        })
        .collect();
    FlowProfile::from_link_flows(link)
}

/// Link flows per atom when everybody follows a direct rule.
pub fn obedient_flows(ps: &PathSet, rule: &SignalingRule) -> Result<FlowProfile> {
    let rec = rule.recommendations(ps)?;
    let mut paths = Vec::with_capacity(rec.len());
    let mut link = Vec::with_capacity(rec.len());
    for frac in rec {
        let z: Vec<f64> = (0..ps.len())
            .map(|g| ps.throughput(ps.paths()[g].od) * frac[g])
            .collect();
        link.push(crate::network::link_flow(ps, &z));
        paths.push(z);
    }
    Ok(FlowProfile { link, path: Some(paths) })
}

fn potential_of_flows<D: DelayModel + ?Sized>(dist: &StateDistribution, delays: &D, flows: &FlowProfile) -> f64 {
    dist.atoms()
        .iter()
        .zip(&flows.link)
        .map(|(a, f)| {
            a.prob
                * (0..f.len())
                    .map(|e| delays.antiderivative(e, a.theta[e], f[e]))
                    .sum::<f64>()
        })
        .sum()
}

/// Expected Beckmann potential of the flows induced by `(rule, y)`.
pub fn potential<D: DelayModel + ?Sized>(
    ps: &PathSet,
    delays: &D,
    dist: &StateDistribution,
    rule: &SignalingRule,
    y: &ChoiceProfile,
) -> f64 {
    potential_of_flows(dist, delays, &induced_flows(ps, dist, rule, y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackEntry {
    pub od: usize,
    pub message: usize,
    pub from: usize,
    pub to: usize,
    /// Expected gain of switching from `from` to `to`, weighted by the
    /// probability of the message; positive means a profitable deviation.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackReport {
    pub entries: Vec<SlackEntry>,
    pub max_slack: f64,
    pub pass: bool,
}

impl SlackReport {
    fn from_entries(entries: Vec<SlackEntry>, tol: f64) -> Self {
        let max_slack = entries.iter().map(|e| e.slack).fold(f64::NEG_INFINITY, f64::max);
        let max_slack = if entries.is_empty() { 0.0 } else { max_slack };
        SlackReport { entries, max_slack, pass: max_slack <= tol }
    }

    pub fn worst(&self) -> Option<&SlackEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.slack.partial_cmp(&b.slack).unwrap_or(std::cmp::Ordering::Equal))
    }
}

/// `Σ_θ P(θ) (c_from - c_to)(θ) weight(θ)` for every ordered pair of `od` paths.
fn pair_slacks<D: DelayModel + ?Sized>(
    ps: &PathSet,
    delays: &D,
    dist: &StateDistribution,
    flows: &FlowProfile,
    od: usize,
    message: usize,
    weight: impl Fn(usize) -> f64,
    from_filter: impl Fn(usize) -> bool,
    out: &mut Vec<SlackEntry>,
) {
    let range = ps.od_range(od);
    let costs: Vec<Vec<f64>> = dist
        .atoms()
        .iter()
        .zip(&flows.link)
        .map(|(a, f)| path_cost(ps, delays, &a.theta, f))
        .collect();
    for i in range.clone().filter(|&i| from_filter(i)) {
        for j in range.clone().filter(|&j| j != i) {
            let slack = dist
                .atoms()
                .iter()
                .enumerate()
                .map(|(k, a)| a.prob * (costs[k][i] - costs[k][j]) * weight(k))
                .sum();
            out.push(SlackEntry { od, message, from: i, to: j, slack });
        }
    }
}

/// Equilibrium conditions for a response `y`: users of every used
/// (pair, message, path) cannot gain by switching. Unreachable messages pass.
pub fn check_equilibrium<D: DelayModel + ?Sized>(
    ps: &PathSet,
    delays: &D,
    dist: &StateDistribution,
    rule: &SignalingRule,
    y: &ChoiceProfile,
    tol: f64,
) -> SlackReport {
    let flows = induced_flows(ps, dist, rule, y);
    let mut entries = Vec::new();
    for od in 0..ps.od_count() {
        let start = ps.od_range(od).start;
        for m in 0..rule.message_count() {
            if rule.message_prob(dist, od, m) == 0.0 {
                continue;
            }
            let row = &y.rows(od)[m];
            pair_slacks(
                ps,
                delays,
                dist,
                &flows,
                od,
                m,
                |k| rule.prob(k, od, m),
                |i| row[i - start] > 0.0,
                &mut entries,
            );
        }
    }
    SlackReport::from_entries(entries, tol)
}

/// Obedience constraints of a direct rule: recipients of a recommendation
/// prefer it to every alternative.
pub fn check_obedience<D: DelayModel + ?Sized>(
    ps: &PathSet,
    delays: &D,
    dist: &StateDistribution,
    rule: &SignalingRule,
    tol: f64,
) -> Result<SlackReport> {
    let flows = obedient_flows(ps, rule)?;
    let mut entries = Vec::new();
    for od in 0..ps.od_count() {
        for i in ps.od_range(od) {
            pair_slacks(ps, delays, dist, &flows, od, i, |k| rule.prob(k, od, i), |g| g == i, &mut entries);
        }
    }
    Ok(SlackReport::from_entries(entries, tol))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BweResult {
    pub y: ChoiceProfile,
    pub flows: FlowProfile,
    pub potential: f64,
    pub cost: f64,
    pub gap: f64,
    pub iterations: usize,
    pub slacks: SlackReport,
    /// Potential after every solver step, when requested.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BweSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for BweSettings {
    fn default() -> Self {
        let s = Settings::default();
        BweSettings { tol: s.tol, max_iter: s.max_iter, record_trace: false }
    }
}

/// Equilibrium for `rule` by minimizing the potential over the users'
/// responses, starting from uniform choices.
pub fn solve_bwe<D: DelayModel + ?Sized>(
    ps: &PathSet,
    delays: &D,
    dist: &StateDistribution,
    rule: &SignalingRule,
    tol: f64,
) -> Result<BweResult> {
    solve_bwe_with(ps, delays, dist, rule, None, BweSettings { tol, ..BweSettings::default() })
}

pub fn solve_bwe_with<D: DelayModel + ?Sized>(
    ps: &PathSet,
    delays: &D,
    dist: &StateDistribution,
    rule: &SignalingRule,
    init: Option<&ChoiceProfile>,
    settings: BweSettings,
) -> Result<BweResult> {
    dist.check_dim(ps.link_count())?;
    if rule.atom_count() != dist.len() {
        return Err(Error::InvalidRule("rule and distribution disagree on the support".into()));
    }
    let messages = rule.message_count();
    // one simplex per reachable (pair, message)
    let mut keys = Vec::new();
    let mut blocks = Vec::new();
    for od in 0..ps.od_count() {
        for m in 0..messages {
            if rule.message_prob(dist, od, m) == 0.0 {
                continue;
            }
            let cols = ps
                .od_range(od)
                .map(|g| {
                    let mut col = Vec::new();
                    for k in 0..dist.len() {
                        let w = ps.throughput(od) * rule.prob(k, od, m);
                        if w != 0.0 {
                            col.extend(ps.paths()[g].links.iter().map(|&e| (k, e, w)));
                        }
                    }
                    col
                })
                .collect();
            keys.push((od, m));
            blocks.push(cols);
        }
    }
    let problem = Problem {
        delays,
        objective: Objective::Potential,
        probs: dist.atoms().iter().map(|a| a.prob).collect(),
        thetas: dist.atoms().iter().map(|a| a.theta.as_slice()).collect(),
        blocks,
    };
    let start = init.map(|y| keys.iter().map(|&(od, m)| y.rows(od)[m].clone()).collect());
    let sol = problem.solve(
        start,
        Settings { tol: settings.tol, max_iter: settings.max_iter, record_trace: settings.record_trace },
    )?;

    let mut y: Vec<Vec<Vec<f64>>> = (0..ps.od_count())
        .map(|od| {
            let n = ps.od_range(od).len();
            vec![vec![1.0 / n as f64; n]; messages]
        })
        .collect();
    for (&(od, m), w) in keys.iter().zip(sol.weights) {
        y[od][m] = w;
    }
    let y = ChoiceProfile::new(ps, messages, y)?;
    let flows = induced_flows(ps, dist, rule, &y);
    let potential = potential_of_flows(dist, delays, &flows);
    let cost = system_cost(dist, delays, &flows)?;
    let slacks = check_equilibrium(ps, delays, dist, rule, &y, settings.tol.max(DEFAULT_OBEDIENCE_TOL));
    Ok(BweResult { y, flows, potential, cost, gap: sol.gap, iterations: sol.iterations, slacks, trace: sol.trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::AffineDelays;
    use crate::network::fixtures::*;
    use crate::network::{enumerate_paths, DEFAULT_MAX_PATHS};
    use crate::signaling::{revelation_transform, rule_full_info, rule_no_info};
    use crate::uncertainty::make_twopoint;
    use approx::assert_abs_diff_eq;

    fn setup(x: f64) -> (PathSet, AffineDelays, StateDistribution) {
        let ps = enumerate_paths(&parallel(&[1.0, 1.0], 1.0), DEFAULT_MAX_PATHS).unwrap();
        let dist = make_twopoint(&[2.0, 1.8], &[0.0, 1.0], x).unwrap();
        (ps, AffineDelays::new(vec![1.0, 1.0]).unwrap(), dist)
    }

    #[test]
    fn potential_by_hand() {
        let (ps, delays, dist) = setup(0.4);
        let rule = rule_no_info(&ps, &dist);
        let y = ChoiceProfile::new(&ps, 1, vec![vec![vec![0.4, 0.6]]]).unwrap();
        assert_abs_diff_eq!(potential(&ps, &delays, &dist, &rule, &y), 2.14, epsilon = 1e-14);
    }

    #[test]
    fn zero_throughput_potential() {
        let net = crate::network::Network::new(
            vec!["o".into(), "d".into()],
            vec![crate::network::Link { id: "e1".into(), tail: 0, head: 1, alpha: 1.0 }],
            vec![],
        )
        .unwrap();
        let ps = enumerate_paths(&net, DEFAULT_MAX_PATHS).unwrap();
        let dist = StateDistribution::deterministic(vec![1.0]).unwrap();
        let delays = AffineDelays::new(vec![1.0]).unwrap();
        let rule = rule_no_info(&ps, &dist);
        let y = ChoiceProfile::new(&ps, 1, vec![]).unwrap();
        assert_eq!(potential(&ps, &delays, &dist, &rule, &y), 0.0);
        let r = solve_bwe(&ps, &delays, &dist, &rule, 1e-10).unwrap();
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn no_info_equilibrium() {
        let (ps, delays, dist) = setup(0.4);
        let r = solve_bwe(&ps, &delays, &dist, &rule_no_info(&ps, &dist), 1e-10).unwrap();
        for f in &r.flows.link {
            assert_abs_diff_eq!(f[0], 0.4, epsilon = 1e-10);
            assert_abs_diff_eq!(f[1], 0.6, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(r.cost, 2.4, epsilon = 1e-10);
        assert!(r.slacks.pass);
    }

    #[test]
    fn full_info_equilibrium() {
        let x = 0.4;
        let (ps, delays, dist) = setup(x);
        let r = solve_bwe(&ps, &delays, &dist, &rule_full_info(&ps, &dist), 1e-10).unwrap();
        assert_abs_diff_eq!(r.flows.link[0][0], 0.4 + x / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.flows.link[1][0], 0.4 - x / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.cost, 2.4, epsilon = 1e-10);
    }

    #[test]
    fn deterministic_state_gives_wardrop() {
        let (ps, delays, dist) = setup(0.0);
        let a = solve_bwe(&ps, &delays, &dist, &rule_no_info(&ps, &dist), 1e-12).unwrap();
        let b = solve_bwe(&ps, &delays, &dist, &rule_full_info(&ps, &dist), 1e-12).unwrap();
        assert!(a.flows.max_link_diff(&b.flows) < 1e-10);
        let c = path_cost(&ps, &delays, &dist.atoms()[0].theta, &a.flows.link[0]);
        assert_abs_diff_eq!(c[0], c[1], epsilon = 1e-10);
    }

    #[test]
    fn equilibrium_check_catches_even_split() {
        let (ps, delays, dist) = setup(0.4);
        let rule = rule_no_info(&ps, &dist);
        let y = ChoiceProfile::new(&ps, 1, vec![vec![vec![0.5, 0.5]]]).unwrap();
        let report = check_equilibrium(&ps, &delays, &dist, &rule, &y, 1e-9);
        assert!(!report.pass);
        let worst = report.worst().unwrap();
        assert_eq!((worst.from, worst.to), (0, 1));
        assert_abs_diff_eq!(worst.slack, 0.2, epsilon = 1e-14);
    }

    #[test]
    fn unreachable_messages_pass() {
        let (ps, delays, dist) = setup(0.4);
        let rule = SignalingRule::direct(&ps, &dist, &[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let y = ChoiceProfile::new(&ps, 2, vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]]]).unwrap();
        let report = check_equilibrium(&ps, &delays, &dist, &rule, &y, 1e-9);
        assert!(report.entries.iter().all(|e| e.message == 0));
    }

    fn optimal_recommendation(ps: &PathSet, dist: &StateDistribution, x: f64) -> SignalingRule {
        let fr = vec![
            vec![9.0 / 20.0 + x / 4.0, 11.0 / 20.0 - x / 4.0],
            vec![9.0 / 20.0 - x / 4.0, 11.0 / 20.0 + x / 4.0],
        ];
        SignalingRule::direct(ps, dist, &fr).unwrap()
    }

    #[test]
    fn obedience_of_optimal_recommendation() {
        let (ps, delays, dist) = setup(0.7);
        let rule = optimal_recommendation(&ps, &dist, 0.7);
        assert!(check_obedience(&ps, &delays, &dist, &rule, 1e-9).unwrap().pass);

        let (ps, delays, dist) = setup(0.4);
        let rule = optimal_recommendation(&ps, &dist, 0.4);
        let report = check_obedience(&ps, &delays, &dist, &rule, 1e-9).unwrap();
        assert!(!report.pass);
        // half of E[(b1 - b2) z1*] = (0.09 - x²/4) / 2
        assert_abs_diff_eq!(report.max_slack, (0.09 - 0.04) / 2.0, epsilon = 1e-14);

        let (ps, delays, dist) = setup(0.6);
        let rule = optimal_recommendation(&ps, &dist, 0.6);
        let report = check_obedience(&ps, &delays, &dist, &rule, 1e-9).unwrap();
        assert!(report.pass, "boundary slack {}", report.max_slack);
    }

    #[test]
    fn obedience_requires_direct_rule() {
        let (ps, delays, dist) = setup(0.4);
        assert_eq!(
            check_obedience(&ps, &delays, &dist, &rule_no_info(&ps, &dist), 1e-9),
            Err(Error::NotDirect)
        );
    }

    #[test]
    fn potential_decreases_and_kkt_holds() {
        let alphas = [0.5, 1.0, 10.0, 1.0, 1.0, 0.5, 1.0];
        let net = five_node(alphas);
        let ps = five_node_paths(&net);
        let delays = AffineDelays::new(alphas.to_vec()).unwrap();
        let dist = make_twopoint(&[4.0, 1.0, 1.0, 3.0, 1.0, 1.0, 4.0], &[0.5, 0.0, 1.0, -1.0, 0.0, 0.0, 0.5], 1.0)
            .unwrap();
        let rule = rule_full_info(&ps, &dist);
        let settings = BweSettings { tol: 1e-11, record_trace: true, ..BweSettings::default() };
        let r = solve_bwe_with(&ps, &delays, &dist, &rule, None, settings).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-14);
        }
        assert!(r.slacks.pass, "max slack {}", r.slacks.max_slack);
    }

    #[test]
    fn flow_is_unique_across_starts() {
        let net = two_stage();
        let ps = enumerate_paths(&net, DEFAULT_MAX_PATHS).unwrap();
        let delays = AffineDelays::new(vec![1.0, 2.0, 0.5, 1.0]).unwrap();
        let dist = make_twopoint(&[1.0, 1.0, 2.0, 1.5], &[1.0, 0.0, -1.0, 0.5], 0.5).unwrap();
        let rule = rule_full_info(&ps, &dist);
        let tol = 1e-11;
        let a = solve_bwe(&ps, &delays, &dist, &rule, tol).unwrap();
        let skew = ChoiceProfile::new(&ps, 2, vec![vec![vec![0.7, 0.1, 0.1, 0.1], vec![0.0, 0.0, 0.0, 1.0]]]).unwrap();
        let b = solve_bwe_with(&ps, &delays, &dist, &rule, Some(&skew), BweSettings { tol, ..BweSettings::default() })
            .unwrap();
        assert!(a.flows.max_link_diff(&b.flows) < 1e-8);
    }

    #[test]
    fn revelation_end_to_end() {
        let (ps, delays, dist) = setup(0.5);
        for rule in [rule_no_info(&ps, &dist), rule_full_info(&ps, &dist)] {
            let r = solve_bwe(&ps, &delays, &dist, &rule, 1e-12).unwrap();
            let direct = revelation_transform(&ps, &dist, &rule, &r.y).unwrap();
            assert!(check_obedience(&ps, &delays, &dist, &direct, 1e-9).unwrap().pass);
            let f = obedient_flows(&ps, &direct).unwrap();
            assert!(f.max_link_diff(&r.flows) < 1e-12);
            assert_abs_diff_eq!(system_cost(&dist, &delays, &f).unwrap(), r.cost, epsilon = 1e-12);
        }
    }
}
