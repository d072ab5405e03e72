#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use routesignal::network::{enumerate_paths, Link, Network, OdPair, PathSet, DEFAULT_MAX_PATHS};
use routesignal::uncertainty::{make_twopoint, Atom, StateDistribution};

pub fn network(nodes: usize, ends: &[(usize, usize)], alphas: &[f64], od: (usize, usize), rate: f64) -> Network {
    let links = ends
        .iter()
        .zip(alphas)
        .enumerate()
        .map(|(i, (&(tail, head), &alpha))| Link { id: format!("e{}", i + 1), tail, head, alpha })
        .collect();
    Network::new(
        (1..=nodes).map(|i| format!("n{i}")).collect(),
        links,
        vec![OdPair { origin: od.0, destination: od.1, throughput: rate }],
    )
    .unwrap()
}

pub fn parallel(alphas: &[f64], rate: f64) -> Network {
    network(2, &vec![(0, 1); alphas.len()], alphas, (0, 1), rate)
}

pub const FIVE_NODE_ENDS: [(usize, usize); 7] = [(0, 1), (0, 2), (1, 3), (2, 3), (1, 4), (3, 4), (2, 4)];

pub fn five_node(alphas: &[f64], rate: f64) -> Network {
    network(5, &FIVE_NODE_ENDS, alphas, (0, 4), rate)
}

/// Paths (e1,e5), (e1,e3,e6), (e2,e4,e6), (e2,e7).
pub fn five_node_paths(net: &Network) -> PathSet {
    enumerate_paths(net, DEFAULT_MAX_PATHS)
        .unwrap()
        .reordered(net, &[vec![0, 4], vec![0, 2, 5], vec![1, 3, 5], vec![1, 6]])
        .unwrap()
}

/// Two parallel links into a middle node, two parallel links out of it.
pub fn two_stage(alphas: &[f64], rate: f64) -> Network {
    network(3, &[(0, 1), (0, 1), (1, 2), (1, 2)], alphas, (0, 2), rate)
}

pub fn paths(net: &Network) -> PathSet {
    enumerate_paths(net, DEFAULT_MAX_PATHS).unwrap()
}

/// Two parallel links, `Θ = (2, 1.8 ± x)`.
pub fn ex1(x: f64) -> (PathSet, StateDistribution) {
    (paths(&parallel(&[1.0, 1.0], 1.0)), make_twopoint(&[2.0, 1.8], &[0.0, 1.0], x).unwrap())
}

pub fn ex1_optimum_cost(x: f64) -> f64 {
    479.0 / 200.0 - x * x / 8.0
}

pub const EX3_ALPHAS: [f64; 7] = [0.5, 1.0, 10.0, 1.0, 1.0, 0.5, 1.0];
pub const EX3_MEANS: [f64; 7] = [4.0, 1.0, 0.0, 3.0, 1.0, 1.0, 4.0];

pub fn ex3(sigma: f64) -> (PathSet, StateDistribution) {
    let mut shift = [0.0; 7];
    shift[3] = 1.0;
    (five_node_paths(&five_node(&EX3_ALPHAS, 1.0)), make_twopoint(&EX3_MEANS, &shift, sigma).unwrap())
}

pub fn random_probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn random_dist(rng: &mut ChaCha8Rng, links: usize, atoms: usize, lo: f64, hi: f64) -> StateDistribution {
    let probs = random_probs(rng, atoms);
    StateDistribution::new(
        probs
            .into_iter()
            .map(|prob| Atom { theta: (0..links).map(|_| rng.gen_range(lo..hi)).collect(), prob })
            .collect(),
    )
    .unwrap()
}

/// A random single-pair network with 2 to 4 paths: parallel links, the
/// five-node network or the two-stage network.
pub fn random_network(rng: &mut ChaCha8Rng, alpha: (f64, f64), rate: f64, injective_only: bool) -> (Network, PathSet) {
    let kinds = if injective_only { 2 } else { 3 };
    match rng.gen_range(0..kinds) {
        0 => {
            let n = rng.gen_range(2..=4);
            let alphas: Vec<f64> = (0..n).map(|_| rng.gen_range(alpha.0..alpha.1)).collect();
            let net = parallel(&alphas, rate);
            let ps = paths(&net);
            (net, ps)
        }
        1 => {
            let alphas: Vec<f64> = (0..7).map(|_| rng.gen_range(alpha.0..alpha.1)).collect();
            let net = five_node(&alphas, rate);
            let ps = five_node_paths(&net);
            (net, ps)
        }
        _ => {
            let alphas: Vec<f64> = (0..4).map(|_| rng.gen_range(alpha.0..alpha.1)).collect();
            let net = two_stage(&alphas, rate);
            let ps = paths(&net);
            (net, ps)
        }
    }
}
