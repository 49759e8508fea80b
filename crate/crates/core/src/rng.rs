//! Named random substreams derived from a single episode seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Every consumer of randomness draws from its own stream so that adding draws
/// in one subsystem never perturbs another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Population,
    Economy,
    EvalShock,
    Exploration,
    Hpi,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Population => 1,
            Stream::Economy => 2,
            Stream::EvalShock => 3,
            Stream::Exploration => 4,
            Stream::Hpi => 5,
        }
    }
}

/// Stream `stream` of `seed`, optionally split further by an episode index.
pub fn substream(seed: u64, stream: Stream, episode: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ episode.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream.id());
    rng
}
