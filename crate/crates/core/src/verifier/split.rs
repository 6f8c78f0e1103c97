//! Seeded stratified train/test partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::VerifierError;

/// Partitions indices `0..labels.len()` so that each class contributes
/// `round(ratio × class size)` items to the first set. Both index lists are
/// returned sorted.
pub fn stratified_split(
    labels: &[bool],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), VerifierError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(VerifierError::InvalidRatio(ratio));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            return Err(VerifierError::SingleClass);
        }
        members.shuffle(&mut rng);
        let take = (ratio * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
