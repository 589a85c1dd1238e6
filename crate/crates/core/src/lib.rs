//! Dual-view learned sparse retrieval.
//!
//! * [`repr`]: sparse vectors, dual-view representations and their JSONL form.
//! * [`lexecho`]: the encoding head (toy encoder, connector, English view, ECHO weights).
//! * [`losses`]: alignment and contrastive objectives with analytic gradients.
//! * [`training`]: synthetic data, the two training stages and the ablation matrix.
//! * [`index`]: impact postings, exact search, pruning and the binary index format.
//! * [`eval`]: nDCG and recall, qrels/run IO.

pub mod error;
pub mod eval;
pub mod index;
pub mod lexecho;
pub mod losses;
pub mod repr;
pub mod training;
pub mod vocab;

pub use error::{Error, FormatError, Result};
pub use repr::{score_pair, DualViewRepr, Namespace, SparseVec, TermKey};
