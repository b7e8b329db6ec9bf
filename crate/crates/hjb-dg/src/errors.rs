use thiserror::Error;

/// Errors produced by mesh construction, problem verification and the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh topology error: {0}")]
    MeshTopology(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("problem data error: {0}")]
    ProblemData(String),

    #[error("Cordes condition violated: eps_min = {eps_min:.6e} at (x, y, t) = ({x:.4}, {y:.4}, {t:.4}), control {control}")]
    CordesViolation {
        eps_min: f64,
        x: f64,
        y: f64,
        t: f64,
        control: usize,
    },

    #[error("singular linear system in slab {slab}: {detail}")]
    SingularSystem { slab: usize, detail: String },

    #[error("slab {slab} did not converge after {iters} iterations; residual history {history:?}")]
    NonConvergence {
        slab: usize,
        iters: usize,
        history: Vec<f64>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
