//! Seeded fixtures shared by the benchmarks under `benches/`.

use milco_core::{DualViewRepr, SparseVec, TermKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A representation with up to `max_terms` terms over a Zipf-ish vocabulary,
/// so a few terms have long posting lists.
pub fn random_repr(rng: &mut ChaCha8Rng, max_terms: usize) -> DualViewRepr {
    let n = rng.gen_range(1..=max_terms);
    let pairs = (0..n).map(|_| {
        let id = (rng.gen::<f64>().powi(2) * 5000.0) as u32;
        let key = if rng.gen_bool(0.6) { TermKey::english(id) } else { TermKey::source(id) };
        (key, rng.gen_range(0.01..3.0))
    });
    DualViewRepr::from_combined(&SparseVec::from_pairs(pairs).expect("finite weights"))
}

pub fn corpus(seed: u64, docs: usize, max_terms: usize) -> Vec<(String, DualViewRepr)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs).map(|i| (format!("d{i}"), random_repr(&mut rng, max_terms))).collect()
}

pub fn queries(seed: u64, count: usize) -> Vec<DualViewRepr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_repr(&mut rng, 16)).collect()
}
