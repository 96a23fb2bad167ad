use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite activation in block {block} ({name})")]
    NonFinite { block: usize, name: &'static str },

    #[error("loss is not finite at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("mask selects no texels")]
    EmptyMask,

    #[error(transparent)]
    Core(#[from] relit_core::Error),
}

impl NetError {
    /// Validation failures map to CLI exit code 2.
    pub fn is_validation(&self) -> bool {
        match self {
            NetError::Shape(_) | NetError::Config(_) | NetError::EmptyMask => true,
            NetError::Core(e) => e.is_validation(),
            NetError::NonFinite { .. } | NetError::Diverged { .. } => false,
        }
    }
}

impl From<serde_json::Error> for NetError {
    fn from(e: serde_json::Error) -> Self {
        NetError::Core(e.into())
    }
}

pub type NetResult<T> = std::result::Result<T, NetError>;
