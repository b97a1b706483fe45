//! Static word embeddings trained with a contextual center-word encoder.
//!
//! The crate contains two trainers that share sampling, storage and
//! evaluation machinery:
//!
//! * [`sgns`]: the classic skip-gram trainer with negative sampling and
//!   frequent-word subsampling. Its output lexicon is the center table.
//! * [`dynsg`]: center words are represented by a contextual encoder
//!   ([`encoder`]), projected into the embedding space and scored against an
//!   attention-weighted aggregate of their context words. Its output lexicon
//!   is the context table.
//!
//! [`eval`] implements word similarity, analogy and relation similarity
//! scoring on top of [`embed_store`].

pub mod corpus;
pub mod dynsg;
pub mod embed_store;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hogwild;
pub mod optim;
pub mod rng;
pub mod sgns;
pub mod synthetic;

pub use corpus::{NoiseTable, SentenceStream, Vocab};
pub use embed_store::{EmbeddingMatrix, TableRole, WordVectors};
pub use error::{Error, Result};
