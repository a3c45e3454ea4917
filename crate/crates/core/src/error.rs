use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },
    #[error("matrix at node {node} is not Hermitian (deviation {deviation:e})")]
    NotHermitian { node: usize, deviation: f64 },
    #[error("matrix at node {node} is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { node: usize, min_eig: f64 },
    #[error("singular metric at node {node}")]
    SingularMetric { node: usize },
    #[error("eigenvalues outside the admissible cone at node {node}")]
    OutOfCone { node: usize },
    #[error("defective pencil: eigenbasis condition number {condition:e}")]
    DefectivePencil { condition: f64 },
    #[error("cutoff parameter kappa = {0} must satisfy 0 < kappa < 1/8")]
    KappaOutOfRange(f64),
    #[error("line search stalled at iteration {iteration} (residual {residual:e})")]
    LineSearchStalled { iteration: usize, residual: f64 },
    #[error("no feasible Newton step inside the cone at iteration {iteration}")]
    ConeExit { iteration: usize },
    #[error("inner linear solve failed after {iterations} iterations (relative residual {relative_residual:e})")]
    LinearSolveFailure { iterations: usize, relative_residual: f64 },
    #[error("Newton iteration cap {0} reached")]
    IterationCap(usize),
    #[error("continuation stalled at t = {t} with minimum step {min_step}")]
    PathStalled { t: f64, min_step: f64 },
    #[error("Ricci form is not negative definite at node {node} (max eigenvalue {max_eig:e})")]
    RicciNotNegative { node: usize, max_eig: f64 },
    #[error("compatibility integral violated: {integral:e}")]
    CompatibilityViolated { integral: f64 },
    #[error("second Koszul form not positive at node {node} (min eigenvalue {min_eig:e})")]
    KappaNotPositive { node: usize, min_eig: f64 },
    #[error("metric is not Hessian: symmetry defect {0:e}")]
    NotHessian(f64),
    #[error("flow step too large: dt = {dt:e} exceeds stability bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("positivity lost at flow step {0}")]
    PositivityLost(usize),
    #[error("configuration invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
    #[error("empty manifest")]
    EmptyManifest,
}

pub type Result<T> = std::result::Result<T, Error>;
