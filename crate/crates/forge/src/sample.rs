//! Stratified subsetting by reasoning type.
//!
//! Each type keeps `round(fraction * count)` questions, rounding half to even,
//! drawn uniformly without replacement from a ChaCha8 stream seeded once per run.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ForgeError;

pub fn check_fraction(fraction: f64) -> Result<f64, ForgeError> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(fraction)
    } else {
        Err(ForgeError::FractionOutOfRange(fraction))
    }
}

/// Number of items a stratum of `count` keeps.
pub fn stratum_quota(count: usize, fraction: f64) -> usize {
    (fraction * count as f64).round_ties_even() as usize
}

/// Indices into `types` of the selected items, in ascending order.
pub fn stratified_sample<S: AsRef<str>>(types: &[S], fraction: f64, seed: u64) -> Result<Vec<usize>, ForgeError> {
    let fraction = check_fraction(fraction)?;
    let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in types.iter().enumerate() {
        strata.entry(t.as_ref()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for members in strata.values() {
        let k = stratum_quota(members.len(), fraction);
        let chosen = rand::seq::index::sample(&mut rng, members.len(), k);
        picked.extend(chosen.into_iter().map(|j| members[j]));
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Reasoning type of a raw program line; lines without one form their own stratum.
pub fn reasoning_type_of(line: &str) -> Result<String, serde_json::Error> {
    let v: serde_json::Value = serde_json::from_str(line)?;
    Ok(v.get("reasoning_type")
        .and_then(|t| t.as_str())
        .unwrap_or_default()
        .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quota_rounds_half_to_even() {
        assert_eq!(stratum_quota(50, 0.05), 2); // 2.5
        assert_eq!(stratum_quota(70, 0.05), 4); // 3.5
        assert_eq!(stratum_quota(1000, 0.05), 50);
        assert_eq!(stratum_quota(100, 0.1), 10);
    }

    #[test]
    fn full_fraction_is_identity() {
        let types = ["a", "b", "a", "c"];
        assert_eq!(stratified_sample(&types, 1.0, 3).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn fraction_bounds() {
        assert!(matches!(
            stratified_sample(&["a"], 0.0, 1),
            Err(ForgeError::FractionOutOfRange(_))
        ));
        assert!(stratified_sample(&["a"], 1.5, 1).is_err());
    }

    #[test]
    fn two_even_strata() {
        let mut types = vec!["x"; 100];
        types.extend(vec!["y"; 100]);
        let picked = stratified_sample(&types, 0.1, 42).unwrap();
        assert_eq!(picked.iter().filter(|&&i| i < 100).count(), 10);
        assert_eq!(picked.iter().filter(|&&i| i >= 100).count(), 10);
        assert_eq!(picked, stratified_sample(&types, 0.1, 42).unwrap());
    }
}
