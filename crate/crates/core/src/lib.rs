//! Link-level simulation of non-binary LDPC coded large-scale MIMO systems.
//!
//! The crate covers GF(2^m) arithmetic, (2, d_c)-regular codes over GF(2^m)
//! with repetition-based rate lowering, flooding belief propagation,
//! Rayleigh MIMO channels with Kronecker correlation and imperfect channel
//! knowledge, MMSE and matched-filter soft-output detection, Monte Carlo
//! density evolution and closed-form complexity accounting. The
//! [`experiment`] module turns TOML configurations into CSV result tables.
//!
//! ```
//! use std::sync::Arc;
//! use nbmimo::{CodeSpec, FieldTable, GfSymbol};
//!
//! let field = Arc::new(FieldTable::new(8, None).unwrap());
//! let code = CodeSpec::regular(field, 48, 3, 7).unwrap();
//! let info = vec![GfSymbol(5); code.k()];
//! let x = code.encode(&info).unwrap();
//! assert!(code.syndrome(&x).unwrap().iter().all(|s| s.is_zero()));
//! ```

pub mod channel;
pub mod code;
pub mod complexity;
pub mod de;
pub mod decoder;
pub mod detect;
pub mod experiment;
pub mod galois;
pub mod linalg;
pub mod rng;
pub mod stats;

pub use channel::{ChannelRealization, Constellation, CorrelationSpec, FadingMode, SymbolMapper};
pub use code::{CodeError, CodeSpec, Encoder, Repetition, SparseParityMatrix};
pub use complexity::{flops_mmse, flops_proposed, Flops};
pub use de::{DeConfig, DePoint, DeResult};
pub use decoder::{BpDecoder, DecodeResult, DecoderOptions, PriorBlock};
pub use detect::{DetectorKind, LikelihoodBlock, StreamEstimate};
pub use experiment::{ExperimentConfig, RunError};
pub use galois::{FieldError, FieldTable, GfSymbol};
pub use linalg::CMatrix;
