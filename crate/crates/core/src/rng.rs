//! Counter-style seed derivation. Every random draw in a run comes from a
//! substream keyed by `(master seed, purpose, observer, subject, step)`, so
//! results never depend on iteration order or thread scheduling.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64Mcg;

/// Observer id used for measurements taken by the roadside network.
pub const ROADSIDE_OBSERVER: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    ClassAssignment = 1,
    OnboardSensing = 2,
    RoadsideSensing = 3,
    ExperimentCell = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds the key words into one 64-bit seed.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix(master), |h, &w| splitmix(h ^ w))
}

pub fn substream_seed(master: u64, purpose: Purpose, observer: u32, subject: u32, step: u64) -> u64 {
    derive_seed(
        master,
        &[purpose as u64, ((observer as u64) << 32) | subject as u64, step],
    )
}

pub fn substream(master: u64, purpose: Purpose, observer: u32, subject: u32, step: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(substream_seed(master, purpose, observer, subject, step))
}

/// Two independent standard normal draws for one measurement.
pub fn normal_pair(rng: &mut Pcg64Mcg) -> (f64, f64) {
    (StandardNormal.sample(rng), StandardNormal.sample(rng))
}
