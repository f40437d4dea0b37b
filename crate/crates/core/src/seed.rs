//! Named, collision-free RNG streams derived from a single root seed.
//!
//! Every stochastic step of a run (fading draw for round t / user i, a
//! mini-batch pick, the receiver noise of a round, ...) pulls from its own
//! stream, so results are independent of evaluation order and of how much
//! intra-round parallelism is in play. Streams are derived by packing the
//! root seed and the (round, user, purpose) coordinates directly into the
//! ChaCha key; distinct names give distinct keys by construction.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

/// What a derived stream is used for. Part of the stream name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    /// Uplink fading realization of one user in one round.
    Fading = 1,
    /// Per-hop CSI estimation errors.
    CsiError = 2,
    /// Receiver AWGN of one round.
    RxNoise = 3,
    /// Mini-batch sampling during local SGD on the global task.
    LocalBatch = 4,
    /// Mini-batch sampling during personalized SGD steps.
    PersonalBatch = 5,
    /// Shared RIS-to-PS hop in the central-surface baseline.
    SharedSurface = 6,
    /// Subsampling for per-round diagnostics.
    Diagnostics = 7,
    /// One-time draws: user placement, data partition, model init,
    /// gradient-bound calibration.
    Setup = 8,
}

/// Root of the stream tree for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

/// Pseudo-user index for streams that are not tied to one user.
pub const NO_USER: u64 = u64::MAX;

impl SeedTree {
    pub fn new(root: u64) -> Self {
        SeedTree { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Stream for (round, user, purpose). Pure; the same name always yields
    /// the same generator.
    pub fn stream(&self, round: u64, user: u64, purpose: StreamPurpose) -> ChaCha12Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.root.to_le_bytes());
        key[8..16].copy_from_slice(&round.to_le_bytes());
        key[16..24].copy_from_slice(&user.to_le_bytes());
        key[24..32].copy_from_slice(&(purpose as u64).to_le_bytes());
        ChaCha12Rng::from_seed(key)
    }

    /// Setup-phase stream not tied to a round or user; `tag` separates the
    /// one-time draws from each other.
    pub fn setup_stream(&self, tag: u64) -> ChaCha12Rng {
        self.stream(u64::MAX, tag, StreamPurpose::Setup)
    }
}
