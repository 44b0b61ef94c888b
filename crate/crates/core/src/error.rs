use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse rational {0:?} (expected \"p/q\")")]
    ParseRational(String),

    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("spec failed validation with {count} violation(s); first: {first}")]
    InvalidSpec { count: usize, first: String },

    #[error("chi undefined at level {level}: interior gaps mix zero and positive values")]
    ChiUndefined { level: usize },

    #[error("star system needs one lookahead level (spec depth {depth} < 2)")]
    StarTooShallow { depth: usize },

    #[error("split depth {given} does not match level exponent {exponent} - 1 for n = {n}, M = {modulus}")]
    DepthMismatch {
        n: u64,
        modulus: u64,
        exponent: u32,
        given: u32,
    },

    #[error("degenerate level {level}: {detail}")]
    DegenerateLevel { level: usize, detail: String },

    #[error("degenerate image branch {index} at level {level} (length {length})")]
    DegenerateImage {
        level: usize,
        index: usize,
        length: f64,
    },

    #[error("property {property} violated: {witness}")]
    PropertyViolated {
        property: &'static str,
        witness: String,
    },

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            detail: detail.into(),
        }
    }

    /// Tags an error with the pipeline stage that raised it.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the error reports a violated mathematical invariant rather
    /// than bad input.
    pub fn is_invariant_violation(&self) -> bool {
        match self {
            Error::InvalidSpec { .. }
            | Error::PropertyViolated { .. }
            | Error::ChiUndefined { .. }
            | Error::DegenerateLevel { .. }
            | Error::DegenerateImage { .. } => true,
            Error::Stage { source, .. } => source.is_invariant_violation(),
            _ => false,
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
