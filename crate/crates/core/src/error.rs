use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("path enumeration exceeded the cap of {max_paths} paths")]
    PathExplosion { max_paths: usize },

    #[error("no path from {origin} to {destination} although its throughput is positive")]
    NoPath { origin: String, destination: String },

    #[error("infeasible path flow: {0}")]
    InfeasiblePathFlow(String),

    #[error("invalid state distribution: {0}")]
    InvalidDistribution(String),

    #[error("state vector has a negative entry at link {link}: {value}")]
    NegativeState { link: usize, value: f64 },

    #[error("flow profile has no entry for support atom {0}")]
    MissingState(usize),

    #[error("link-path incidence matrix is not injective (rank {rank} < {paths} paths)")]
    NotInjective { rank: usize, paths: usize },

    #[error("operation requires exactly one origin-destination pair with positive throughput, found {0}")]
    MultiOd(usize),

    #[error("solver did not converge within {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("invalid signaling rule: {0}")]
    InvalidRule(String),

    #[error("malformed choice profile: {0}")]
    MalformedChoiceProfile(String),

    #[error("signaling rule is not direct")]
    NotDirect,

    #[error("network is not a set of parallel links between one origin and one destination")]
    NotParallel,

    #[error("operation requires exactly two parallel links, found {0}")]
    NotTwoLink(usize),

    #[error("design problem has {params} free parameters, above the cap of {cap}")]
    CapExceeded { params: usize, cap: usize },

    #[error("invalid scenario: {0}")]
    Scenario(String),
}
