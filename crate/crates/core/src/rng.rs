//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from a
//! single run seed, so adding a consumer never shifts the numbers another
//! component sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Identifies a consumer of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    EncoderInit,
    Masking,
    MaskEval,
    PretrainShuffle,
    SgnsInit,
    SgnsTrain,
    DynInit,
    DynTrain,
    Synthetic,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::EncoderInit => 1,
            Stream::Masking => 2,
            Stream::MaskEval => 3,
            Stream::PretrainShuffle => 4,
            Stream::SgnsInit => 5,
            Stream::SgnsTrain => 6,
            Stream::DynInit => 7,
            Stream::DynTrain => 8,
            Stream::Synthetic => 9,
        }
    }
}

pub fn stream(seed: u64, stream: Stream) -> Rng {
    worker_stream(seed, stream, 0)
}

/// Stream for one worker of a parallel trainer. Worker 0 is the stream used
/// by the single-threaded path.
pub fn worker_stream(seed: u64, stream: Stream, worker: usize) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream.id() << 32) | worker as u64);
    rng
}
