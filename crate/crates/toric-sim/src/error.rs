use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid lattice size L={0}: {1}")]
    InvalidSize(usize, &'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("syndrome has odd anyon count {0}")]
    OddSyndrome(usize),

    #[error("no perfect matching exists even on the complete anyon graph")]
    NoPerfectMatching,

    #[error("curves do not cross in the sampled range: {0}")]
    NoCrossing(String),

    #[error("matrix of dimension {0} too large for dense eigendecomposition (limit {1}); use a smaller L")]
    MatrixTooLarge(usize, usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("experiment {experiment}: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("linear algebra backend: {0}")]
    Linalg(String),
}

impl Error {
    pub fn invalid_parameter(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn in_experiment(self, experiment: &str) -> Self {
        Error::Experiment {
            experiment: experiment.to_string(),
            source: Box::new(self),
        }
    }
}
