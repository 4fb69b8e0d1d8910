use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("spectral deficit: requested {requested} bound states, found {found}")]
    SpectralDeficit { requested: usize, found: usize },

    #[error("condition (NL) violated: {0}")]
    Condition(String),

    #[error("eigensolver did not converge: {0}")]
    Eigen(String),

    #[error("continuation failed at lambda = {lambda}: {reason}")]
    Continuation { lambda: f64, reason: String },

    #[error("positivity error: negative mass fraction {0:.3e}")]
    Positivity(f64),

    #[error("ill-conditioned inner solve (residual {residual:.3e}, smallest eigenvalue estimate {min_eig:.3e})")]
    IllConditioned { residual: f64, min_eig: f64 },

    #[error("internal mode energy too close to threshold: E^2 = {0:.3e}")]
    ThresholdCollision(f64),

    #[error("biorthogonalization is singular: {0}")]
    Degeneracy(String),

    #[error("scattering solve failed: {0}")]
    Scattering(String),

    #[error("resolvent solve stagnated at residual {0:.3e}")]
    Resolvent(f64),

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error("denominator below floor for {index}: {value:.3e} < {floor:.3e}")]
    Denominator {
        index: String,
        value: f64,
        floor: f64,
    },

    #[error("cancellation lemma violated: discrepancy {0:.3e}")]
    LemmaViolation(f64),

    #[error("conjugate closure violated: imaginary residue {0:.3e}")]
    Closure(f64),

    #[error("lambda = {lambda} outside evaluator range [{lo}, {hi}]")]
    Interpolation { lambda: f64, lo: f64, hi: f64 },

    #[error("perturbativity lost: |M| = {0:.3e}")]
    Perturbativity(f64),

    #[error("integrator failed at t = {t}: {reason}")]
    Integrator { t: f64, reason: String },

    #[error("evolution blew up at t = {0}")]
    Blowup(f64),

    #[error("decomposition left the tube: {0}")]
    TubeExit(String),

    #[error("decomposition fit quality {0:.3e} above tolerance")]
    FitQuality(f64),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by the input configuration rather than a failed computation.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::GridMismatch(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
