use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

/// Handle on a counter-based random stream. Equal `(seed, stream_id)` pairs
/// always replay the same sequence; distinct stream ids are independent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrawKind {
    Uniform,
    StandardNormal,
    Rademacher,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// ChaCha8 keyed by `seed`, positioned at the start of `stream_id`.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A stream for a named sub-task, keyed by a stable hash of the name.
    pub fn derive(&self, task: &str) -> RngStream {
        RngStream { seed: derive_seed(self.seed ^ self.stream_id.rotate_left(17), task), stream_id: 0 }
    }
}

/// Stable sub-seed for `(seed, task)`: the first eight bytes of SHA-256.
pub fn derive_seed(seed: u64, task: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(task.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn rng_draw(stream: RngStream, kind: DrawKind, n: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..n)
        .map(|_| match kind {
            DrawKind::Uniform => rng.random::<f64>(),
            DrawKind::StandardNormal => rng.sample::<f64, _>(StandardNormal),
            DrawKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect()
}
