//! Error type shared by every solver stage.

/// Failures raised by the nozzle solver.
#[derive(Debug, thiserror::Error)]
pub enum NozzleError {
    /// Bernoulli head z - |p|^2/2 is not positive
    #[error("cavitation: nonpositive enthalpy head {head:e} at r={r}, phi={phi}")]
    Cavitation { head: f64, r: f64, phi: f64 },
    /// Stream component does not vanish on the axis
    #[error("axis regularity violated: |psi(r,0)| = {value:e}")]
    AxisRegularity { value: f64 },
    /// Fields sampled on different grids
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// Radial velocity is not positive
    #[error("backflow: u_r = {u_r:e} at r={r}, phi={phi}")]
    Backflow { u_r: f64, r: f64, phi: f64 },
    /// Sonic denominator of the radial ODE vanishes
    #[error("sonic singularity at r={r} (denominator {denominator:e})")]
    SonicSingularity { r: f64, denominator: f64 },
    /// Background initial data outside the supersonic window
    #[error("inadmissible background data: {0}")]
    Admissibility(String),
    /// The background leaves its admissible band before the exit
    #[error("background horizon r* = {r_star} lies before the exit r_ex = {r_ex}")]
    HorizonBeforeExit { r_star: f64, r_ex: f64 },
    /// Discretization is not converged at the requested accuracy
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    /// Evaluation point outside [0, phi0]
    #[error("angle {phi} outside [0, {phi0}]")]
    OutOfDomain { phi: f64, phi0: f64 },
    /// Boundary profiles violate the compatibility conditions
    #[error("compatibility conditions failed: {}", .0.join("; "))]
    Compatibility(Vec<String>),
    /// Flow is too close to sonic in the radial direction
    #[error("sonic approach: margin {margin:e} at r={r}, phi={phi}")]
    SonicApproach { margin: f64, r: f64, phi: f64 },
    /// Linear system could not be factored
    #[error("singular linear system (smallest pivot {pivot:e})")]
    SingularSystem { pivot: f64 },
    /// Fixed-point loop hit its iteration cap
    #[error("no convergence in {loop_name} after {iterations} iterations")]
    NonConvergence { loop_name: String, iterations: usize },
    /// An iterate left its trust region
    #[error("{loop_name} iterate norm {norm:e} exceeds the budget {budget:e}")]
    BudgetExceeded { loop_name: String, norm: f64, budget: f64 },
    /// A member of a parameter study did not converge
    #[error("study aborted: {0}")]
    StudyAborted(String),
    /// Grid too small for the requested stencil
    #[error("grid too small: {0}")]
    InsufficientGrid(String),
    /// Malformed case file
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    /// Case violates a documented invariant
    #[error("invalid case: {0}")]
    Validation(String),
    /// File system failure
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Result alias used throughout the crate.
pub type NozzleResult<T> = Result<T, NozzleError>;
