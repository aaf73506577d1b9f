//! Counter-based random streams.
//!
//! Every replicate draws from its own ChaCha stream, selected by the master
//! seed, the pipeline stage and the replicate index. Results therefore do not
//! depend on how replicates are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type SimRng = ChaCha8Rng;

/// Pipeline stage owning a family of streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Phase1,
    Phase2,
    Phase3,
    Simulate,
    Synthetic,
}

impl Stage {
    fn salt(self) -> u64 {
        match self {
            Stage::Phase1 => 0x9e37_79b9_7f4a_7c15,
            Stage::Phase2 => 0xbf58_476d_1ce4_e5b9,
            Stage::Phase3 => 0x94d0_49bb_1331_11eb,
            Stage::Simulate => 0xd6e8_feb8_6659_fd93,
            Stage::Synthetic => 0xa076_1d64_78bd_642f,
        }
    }
}

pub fn stream(master: u64, stage: Stage, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ stage.salt());
    rng.set_stream(index);
    rng
}

/// Runs `count` independent replicates in parallel and returns their results
/// in replicate order.
pub fn replicate<T, F>(count: usize, master: u64, stage: Stage, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut SimRng) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(master, stage, t as u64);
            f(t, &mut rng)
        })
        .collect()
}
