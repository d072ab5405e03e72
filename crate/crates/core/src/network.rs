//! Directed multigraph, path enumeration and the link-path incidence matrix.
//!
//! A path is a sequence of links where the head of each link is the tail of
//! the next and no node appears twice as a tail. Parallel links are kept
//! apart by their index, so multigraphs need no special handling.

use std::collections::{HashMap, HashSet};
use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_MAX_PATHS: usize = 10_000;

/// Absolute tolerance on per-pair throughput sums of a path flow.
pub const THROUGHPUT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub tail: usize,
    pub head: usize,
    /// Congestion slope: the delay grows by `1 / alpha` per unit of flow.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdPair {
    pub origin: usize,
    pub destination: usize,
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<String>,
    links: Vec<Link>,
    od_pairs: Vec<OdPair>,
}

impl Network {
    /// Validates and builds a network. Pairs with zero throughput are dropped.
    pub fn new(nodes: Vec<String>, links: Vec<Link>, demand: Vec<OdPair>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidNetwork(msg));
        let mut seen = HashSet::new();
        for n in &nodes {
            if !seen.insert(n.as_str()) {
                return invalid(format!("duplicate node id {n:?}"));
            }
        }
        let mut seen = HashSet::new();
        for l in &links {
            if !seen.insert(l.id.as_str()) {
                return invalid(format!("duplicate link id {:?}", l.id));
            }
            if l.tail >= nodes.len() || l.head >= nodes.len() {
                return invalid(format!("link {:?} refers to an unknown node", l.id));
            }
            if l.tail == l.head {
                return invalid(format!("link {:?} is a self-loop", l.id));
            }
            if !(l.alpha.is_finite() && l.alpha > 0.0) {
                return invalid(format!("link {:?} has non-positive slope {}", l.id, l.alpha));
            }
        }
        let mut od_pairs = Vec::new();
        let mut seen = HashSet::new();
        for od in demand {
            if od.origin >= nodes.len() || od.destination >= nodes.len() {
                return invalid("throughput refers to an unknown node".into());
            }
            if !(od.throughput.is_finite() && od.throughput >= 0.0) {
                return invalid(format!("throughput {} is not a nonnegative number", od.throughput));
            }
            if od.origin == od.destination {
                if od.throughput > 0.0 {
                    return invalid(format!("positive throughput on diagonal entry {:?}", nodes[od.origin]));
                }
                continue;
            }
            if !seen.insert((od.origin, od.destination)) {
                return invalid(format!(
                    "duplicate throughput entry ({:?}, {:?})",
                    nodes[od.origin], nodes[od.destination]
                ));
            }
            if od.throughput > 0.0 {
                od_pairs.push(od);
            }
        }
        let net = Network { nodes, links, od_pairs };
        for od in &net.od_pairs {
            if !net.reachable(od.origin, od.destination) {
                return Err(Error::NoPath {
                    origin: net.nodes[od.origin].clone(),
                    destination: net.nodes[od.destination].clone(),
                });
            }
        }
        Ok(net)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Origin-destination pairs with positive throughput.
    pub fn od_pairs(&self) -> &[OdPair] {
        &self.od_pairs
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.alpha).collect()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    pub fn od_index(&self, origin: usize, destination: usize) -> Option<usize> {
        self.od_pairs
            .iter()
            .position(|od| od.origin == origin && od.destination == destination)
    }

    /// True when every link runs from the single origin to the single destination.
    pub fn is_parallel(&self) -> bool {
        match self.od_pairs.as_slice() {
            [od] => self
                .links
                .iter()
                .all(|l| l.tail == od.origin && l.head == od.destination),
            _ => false,
        }
    }

    fn reachable(&self, from: usize, to: usize) -> bool {
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        visited[from] = true;
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            for l in self.links.iter().filter(|l| l.tail == n) {
                if !visited[l.head] {
                    visited[l.head] = true;
                    stack.push(l.head);
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Index into [`Network::od_pairs`].
    pub od: usize,
    pub links: Vec<usize>,
}

/// Enumerated paths grouped by origin-destination pair, plus the incidence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    paths: Vec<Path>,
    labels: Vec<String>,
    od_ranges: Vec<Range<usize>>,
    throughput: Vec<f64>,
    incidence: DMatrix<f64>,
}

impl PathSet {
    fn from_groups(net: &Network, groups: Vec<Vec<Vec<usize>>>) -> Self {
        let mut paths = Vec::new();
        let mut od_ranges = Vec::new();
        for (od, group) in groups.into_iter().enumerate() {
            let start = paths.len();
            paths.extend(group.into_iter().map(|links| Path { od, links }));
            od_ranges.push(start..paths.len());
        }
        let mut incidence = DMatrix::zeros(net.links.len(), paths.len());
        for (g, p) in paths.iter().enumerate() {
            for &e in &p.links {
                incidence[(e, g)] = 1.0;
            }
        }
        let labels = paths
            .iter()
            .map(|p| {
                p.links
                    .iter()
                    .map(|&e| net.links[e].id.as_str())
                    .collect::<Vec<_>>()
                    .join("-")
            })
            .collect();
        PathSet {
            paths,
            labels,
            od_ranges,
            throughput: net.od_pairs.iter().map(|od| od.throughput).collect(),
            incidence,
        }
    }

    /// Reorders the paths of every pair to follow `order`, given as link-index
    /// sequences. `order` must be a permutation of the enumerated paths.
    pub fn reordered(&self, net: &Network, order: &[Vec<usize>]) -> Result<PathSet> {
        if order.len() != self.paths.len() {
            return Err(Error::InvalidNetwork(format!(
                "path ordering lists {} paths, the network has {}",
                order.len(),
                self.paths.len()
            )));
        }
        let index: HashMap<&[usize], usize> = self
            .paths
            .iter()
            .enumerate()
            .map(|(g, p)| (p.links.as_slice(), g))
            .collect();
        let mut groups = vec![Vec::new(); self.od_ranges.len()];
        let mut used = HashSet::new();
        for links in order {
            let g = *index.get(links.as_slice()).ok_or_else(|| {
                Error::InvalidNetwork(format!("listed path {links:?} is not a path of the network"))
            })?;
            if !used.insert(g) {
                return Err(Error::InvalidNetwork(format!("path {links:?} listed twice")));
            }
            groups[self.paths[g].od].push(links.clone());
        }
        Ok(PathSet::from_groups(net, groups))
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn od_count(&self) -> usize {
        self.od_ranges.len()
    }

    /// Indices of the paths serving pair `od`.
    pub fn od_range(&self, od: usize) -> Range<usize> {
        self.od_ranges[od].clone()
    }

    pub fn throughput(&self, od: usize) -> f64 {
        self.throughput[od]
    }

    pub fn throughputs(&self) -> &[f64] {
        &self.throughput
    }

    pub fn link_count(&self) -> usize {
        self.incidence.nrows()
    }

    /// Binary matrix with one row per link and one column per path.
    pub fn incidence(&self) -> &DMatrix<f64> {
        &self.incidence
    }
}

/// All paths of every pair with positive throughput, in lexicographic order of
/// their link indices.
pub fn enumerate_paths(net: &Network, max_paths: usize) -> Result<PathSet> {
    let mut out_links: Vec<Vec<usize>> = vec![Vec::new(); net.nodes.len()];
    for (e, l) in net.links.iter().enumerate() {
        out_links[l.tail].push(e);
    }

    let mut total = 0usize;
    let mut groups = Vec::with_capacity(net.od_pairs.len());
    for od in &net.od_pairs {
        let mut found = Vec::new();
        let mut tails = vec![false; net.nodes.len()];
        let mut current = Vec::new();
        dfs(
            net,
            &out_links,
            od.origin,
            od.destination,
            &mut tails,
            &mut current,
            &mut found,
            &mut total,
            max_paths,
        )?;
        if found.is_empty() {
            return Err(Error::NoPath {
                origin: net.nodes[od.origin].clone(),
                destination: net.nodes[od.destination].clone(),
            });
        }
        found.sort();
        groups.push(found);
    }
    Ok(PathSet::from_groups(net, groups))
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    net: &Network,
    out_links: &[Vec<usize>],
    node: usize,
    dest: usize,
    tails: &mut [bool],
    current: &mut Vec<usize>,
    found: &mut Vec<Vec<usize>>,
    total: &mut usize,
    max_paths: usize,
) -> Result<()> {
    tails[node] = true;
    for &e in &out_links[node] {
        let head = net.links[e].head;
        current.push(e);
        if head == dest {
            *total += 1;
            if *total > max_paths {
                return Err(Error::PathExplosion { max_paths });
            }
            found.push(current.clone());
        }
        if !tails[head] {
            dfs(net, out_links, head, dest, tails, current, found, total, max_paths)?;
        }
        current.pop();
    }
    tails[node] = false;
    Ok(())
}

/// Whether the columns of the incidence matrix are linearly independent.
pub fn is_incidence_injective(ps: &PathSet) -> bool {
    incidence_rank(ps) == ps.len()
}

pub fn incidence_rank(ps: &PathSet) -> usize {
    linalg::rank(ps.incidence(), linalg::PIVOT_TOL)
}

pub(crate) fn require_injective(ps: &PathSet) -> Result<()> {
    let rank = incidence_rank(ps);
    if rank == ps.len() {
        Ok(())
    } else {
        Err(Error::NotInjective { rank, paths: ps.len() })
    }
}

/// Link flow `A z` induced by a feasible path flow.
pub fn feasible_flow(ps: &PathSet, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != ps.len() {
        return Err(Error::InfeasiblePathFlow(format!(
            "expected {} path entries, got {}",
            ps.len(),
            z.len()
        )));
    }
    if let Some((g, v)) = z.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InfeasiblePathFlow(format!("path {g} carries {v}")));
    }
    for od in 0..ps.od_count() {
        let sum: f64 = z[ps.od_range(od)].iter().sum();
        if (sum - ps.throughput(od)).abs() > THROUGHPUT_TOL {
            return Err(Error::InfeasiblePathFlow(format!(
                "pair {od} routes {sum} but its throughput is {}",
                ps.throughput(od)
            )));
        }
    }
    Ok(link_flow(ps, z))
}

/// `A z` without feasibility checks.
pub(crate) fn link_flow(ps: &PathSet, z: &[f64]) -> Vec<f64> {
    linalg::mat_vec(ps.incidence(), z)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn parallel(alphas: &[f64], throughput: f64) -> Network {
        let links = alphas
            .iter()
            .enumerate()
            .map(|(i, &alpha)| Link { id: format!("e{}", i + 1), tail: 0, head: 1, alpha })
            .collect();
        Network::new(
            vec!["o".into(), "d".into()],
            links,
            vec![OdPair { origin: 0, destination: 1, throughput }],
        )
        .unwrap()
    }

    /// Five nodes, seven links, one pair (n1, n5).
    pub fn five_node(alphas: [f64; 7]) -> Network {
        let ends = [(0, 1), (0, 2), (1, 3), (2, 3), (1, 4), (3, 4), (2, 4)];
        let links = ends
            .iter()
            .zip(alphas)
            .enumerate()
            .map(|(i, (&(tail, head), alpha))| Link { id: format!("e{}", i + 1), tail, head, alpha })
            .collect();
        Network::new(
            (1..=5).map(|i| format!("n{i}")).collect(),
            links,
            vec![OdPair { origin: 0, destination: 4, throughput: 1.0 }],
        )
        .unwrap()
    }

    /// Two parallel links o->n followed by two parallel links n->d.
    pub fn two_stage() -> Network {
        let ends = [(0, 1), (0, 1), (1, 2), (1, 2)];
        let links = ends
            .iter()
            .enumerate()
            .map(|(i, &(tail, head))| Link { id: format!("e{}", i + 1), tail, head, alpha: 1.0 })
            .collect();
        Network::new(
            vec!["o".into(), "n".into(), "d".into()],
            links,
            vec![OdPair { origin: 0, destination: 2, throughput: 1.0 }],
        )
        .unwrap()
    }

    /// Five-node network with paths in the order (e1,e5), (e1,e3,e6), (e2,e4,e6), (e2,e7).
    pub fn five_node_paths(net: &Network) -> PathSet {
        let ps = enumerate_paths(net, DEFAULT_MAX_PATHS).unwrap();
        ps.reordered(net, &[vec![0, 4], vec![0, 2, 5], vec![1, 3, 5], vec![1, 6]])
            .unwrap()
    }
}
