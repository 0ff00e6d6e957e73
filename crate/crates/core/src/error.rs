use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("phasor family is not Hermitian at harmonic {k} (defect {defect:.3e})")]
    NotHermitian { k: i64, defect: f64 },

    #[error("trajectory spans {available} samples, {required} required ({reason})")]
    TooShort {
        available: usize,
        required: usize,
        reason: &'static str,
    },

    #[error("sampling too coarse: {samples_per_period} samples per period, order {p} needs at least {required}")]
    BelowNyquist {
        samples_per_period: usize,
        p: usize,
        required: usize,
    },

    #[error("non-finite or exploding state at sample {index}")]
    BlowUp { index: usize },

    #[error("window ending at sample {index} has zero norm")]
    DegenerateWindow { index: usize },

    #[error("data not informative: rank {rank} < {required} (need at least {required} well-excited columns, have {columns})")]
    NotInformative {
        rank: usize,
        required: usize,
        columns: usize,
    },

    #[error("selected column submatrix is singular; reselect columns (e.g. greedy pivoting)")]
    SingularSubset,
}
