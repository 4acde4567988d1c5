//! Command implementations behind the `beliefnet` binary.
//!
//! The binary is a thin clap wrapper; everything testable lives here.

pub mod gradcheck;
pub mod model_file;
pub mod pipeline;

use beliefnet_core::DbnError;

pub use model_file::ModelFile;

/// Process exit codes. Zero only when a command fully succeeded.
pub mod exit {
    pub const OK: i32 = 0;
    /// A self-check ran to completion and at least one check failed.
    pub const CHECK_FAILED: i32 = 1;
    /// Bad command-line usage (reported by the argument parser).
    pub const USAGE: i32 = 2;
    /// Malformed input: unparsable files, wrong shapes, invalid settings.
    pub const PARSE: i32 = 3;
    /// Training diverged to NaN or infinity.
    pub const NUMERIC: i32 = 4;
    /// A file could not be read or written.
    pub const IO: i32 = 5;
}

pub fn exit_code(err: &DbnError) -> i32 {
    match err {
        DbnError::NonFinite { .. } => exit::NUMERIC,
        DbnError::Io { .. } => exit::IO,
        DbnError::Shape { .. }
        | DbnError::Validation(_)
        | DbnError::Parse { .. }
        | DbnError::BudgetExceeded { .. }
        | DbnError::Unsupported(_)
        | DbnError::Contract(_) => exit::PARSE,
    }
}
