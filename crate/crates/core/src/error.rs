use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OscError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("line {line}: node `{node}` used before declaration (strict mode)")]
    UndeclaredNode { line: usize, node: String },

    #[error("invalid network: {0}")]
    Invalid(String),

    #[error("not bilayer for given bipartition: {0}")]
    NotBilayer(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("inconsistent system: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    InconsistentSystem { residual: f64, tol: f64 },

    #[error("effective Laplacian property violated: {0}")]
    PropertyViolated(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("irregular pencil: {0}")]
    IrregularPencil(String),

    #[error("eigenvalue iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("eigenvector in span{{1}}: {0}")]
    TrivialEigenvector(String),

    #[error("eigenvalue {0} is not on the imaginary axis")]
    NotOnImaginaryAxis(String),

    #[error("witness residual too large: {0}")]
    WitnessResidual(String),

    #[error("defective mode cluster at {0}")]
    DefectiveMode(String),

    #[error("inconsistent initial condition: fit residual {residual:.3e}")]
    InconsistentInitialCondition { residual: f64 },

    #[error("mode with positive real part: {0}")]
    NonPassive(String),

    #[error("trajectory residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    DynamicsResidual { residual: f64, tol: f64 },

    #[error("sample window too short: {0}")]
    WindowTooShort(String),

    #[error("singular step matrix: {0}")]
    SingularStep(String),

    #[error("verdict mismatch: {0}")]
    VerdictMismatch(String),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, OscError>;
