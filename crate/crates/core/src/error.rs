use thiserror::Error;

#[derive(Debug, Error)]
pub enum HosfemError {
    #[error("invalid polynomial order {0}")]
    InvalidOrder(usize),

    #[error("Newton iteration for GLL point {index} did not converge for order {order}")]
    NewtonDiverged { order: usize, index: usize },

    #[error("size mismatch: expected {expected}, got {actual} ({what})")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("element {element} is degenerate: Jacobian determinant {det:e} at node {node}")]
    DegenerateElement {
        element: usize,
        node: usize,
        det: f64,
    },

    #[error("singular Jacobian (det = {0:e})")]
    SingularJacobian(f64),

    #[error("element {element} is not a parallelepiped (vertex identity residual {residual:e})")]
    NotParallelepiped { element: usize, residual: f64 },

    #[error("invalid mesh parameter: {0}")]
    InvalidMesh(String),

    #[error("incompatible kernel configuration: {0}")]
    IncompatibleSpec(String),

    #[error("invalid hardware profile: {0}")]
    InvalidProfile(String),

    #[error("invalid model input: {0}")]
    InvalidModel(String),

    #[error("no MBP crossing for N1 in {lo}..={hi}")]
    NoCrossing { lo: usize, hi: usize },

    #[error("CG breakdown: {0}")]
    SolverBreakdown(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HosfemError>;
