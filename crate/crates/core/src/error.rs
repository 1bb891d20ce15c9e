use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid array geometry: {0}")]
    Geometry(String),
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("angle {0} rad outside (0, pi)")]
    AngleOutOfRange(f64),
    #[error("distance {distance} m is inside the aperture guard ({guard} m)")]
    InsideAperture { distance: f64, guard: f64 },
    #[error("spherical path-length term non-positive at tx {tx}, rx {rx}")]
    NonPositivePathTerm { tx: usize, rx: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("extraction-ratio bound denominator {0} < 1: profile admits no ratio in (0, 1]")]
    InvalidProfile(f64),
    #[error("invalid semantic profile: {0}")]
    ProfileShape(String),
    #[error("CPU frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("latency budget must be positive, got {0} s")]
    NonPositiveDeadline(f64),
    #[error("extraction ratio must be positive, got {0}")]
    NonPositiveRatio(f64),
    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error("sequence length mismatch: {estimates} estimates vs {truths} truths")]
    LengthMismatch { estimates: usize, truths: usize },
    #[error("empty sequence")]
    Empty,
    #[error("particle filter needs at least one particle")]
    NoParticles,
}

/// Outcome classes of a conic solve other than success.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("power budget {budget} W at RSU {rsu} is exhausted by fixed computing costs")]
    BudgetExhausted { rsu: usize, budget: f64 },
    #[error("program is primal infeasible")]
    Infeasible,
    #[error("program is unbounded")]
    Unbounded,
    #[error("solver stopped without convergence: {0}")]
    NotConverged(String),
    #[error("malformed program: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("CPU demand {demand} Hz exceeds capacity {capacity} Hz at RSU {rsu}")]
    CpuInfeasible { rsu: usize, demand: f64, capacity: f64 },
    #[error("extraction ratio infeasible at RSU {rsu}: fixed power {fixed} W exceeds budget {budget} W")]
    RatioInfeasible { rsu: usize, fixed: f64, budget: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("every candidate assignment is infeasible ({evaluated} evaluated)")]
    Exhausted { evaluated: usize },
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
}

impl PlanError {
    /// Whether the error marks an infeasible assignment (tabu material) as
    /// opposed to a programming or numerical failure.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            PlanError::CpuInfeasible { .. }
                | PlanError::RatioInfeasible { .. }
                | PlanError::Solve(SolveError::BudgetExhausted { .. })
                | PlanError::Solve(SolveError::Infeasible)
        )
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("vehicle placement exhausted after {attempts} rejections")]
    PlacementExhausted { attempts: usize },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
