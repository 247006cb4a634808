use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("topology error: {0}")]
    Topology(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("singular configuration in stretch spring {spring}: edge length {length:e}")]
    SingularStretch { spring: usize, length: f64 },

    #[error("kink in bend-twist spring {spring}: adjacent edges are antiparallel")]
    Kink { spring: usize },

    #[error("degenerate triangle {triangle}")]
    DegenerateTriangle { triangle: usize },

    #[error("ill-conditioned mid-edge frame on triangle {triangle}, edge slot {slot}")]
    Conditioning { triangle: usize, slot: usize },

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error(
        "Newton failed to converge at step {step} (t = {time:.6} s): residual {residual:e} after {iterations} iterations"
    )]
    StepFailure {
        step: usize,
        time: f64,
        residual: f64,
        iterations: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
