use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{Dataset, FlowRecord};
use crate::{seed, Error, Result};

/// Number of attack records needed for `target` attack fraction given
/// `benign` benign records.
pub fn target_attack_count(benign: usize, target: f64) -> usize {
    (benign as f64 * target / (1.0 - target)).round() as usize
}

/// Oversamples attack records with replacement until they make up `target`
/// of the dataset (0.5 gives exactly as many attack as benign records).
///
/// Originals are kept, resampled copies are appended, and the result is
/// shuffled under `seed`. Benign records are never touched, and a dataset
/// already at or above the target is only shuffled.
pub fn bootstrap_balance(ds: &Dataset, target: f64, seed: u64) -> Result<Dataset> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "bootstrap target {target} must lie in (0, 1)"
        )));
    }
    let attacks: Vec<&FlowRecord> = ds.records().iter().filter(|r| r.is_attack()).collect();
    let benign = ds.len() - attacks.len();
    if attacks.is_empty() {
        return Err(Error::Empty("bootstrap needs at least one attack record".into()));
    }
    if benign == 0 {
        return Err(Error::Empty("bootstrap needs at least one benign record".into()));
    }

    let mut rng = seed::rng(seed);
    let wanted = target_attack_count(benign, target);
    let mut out: Vec<FlowRecord> = ds.records().to_vec();
    for _ in attacks.len()..wanted.max(attacks.len()) {
        let pick = attacks[rng.random_range(0..attacks.len())];
        out.push(pick.clone());
    }
    out.shuffle(&mut rng);
    ds.derive(out, format!("bootstrap(target={target}, seed={seed})"))
}
