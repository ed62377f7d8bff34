use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("mask error: requested {requested} nodes of class {class} but only {available} exist")]
    Mask {
        class: u8,
        requested: usize,
        available: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("class means are identical, the ansatz direction is undefined")]
    DegenerateMeans,

    #[error("non-finite {quantity} at iteration {iteration}")]
    Numerical {
        quantity: &'static str,
        iteration: usize,
    },

    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),

    #[error("estimation error: {0}")]
    Estimation(String),
}

impl Error {
    /// True for failures of the numerical routines themselves, as opposed to
    /// rejected inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::PivotLimit(_))
    }
}
