//! Seeded proportional stratified sampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("requested {requested} items but only {available} are available")]
    TooMany { requested: usize, available: usize },
}

/// Splits `n` across strata proportionally to their sizes using the largest
/// remainder method. Each quota is the floor or the ceiling of the exact
/// proportional share. Ties on the remainder go to the earlier stratum.
pub fn allocate(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| s * n / total).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // remainder numerators share the denominator `total`
    order.sort_by(|&a, &b| {
        let ra = sizes[a] * n % total;
        let rb = sizes[b] * n % total;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Draws `n` indices from `items`, stratified by `key`. The result is sorted
/// by original index so the sample preserves input order.
pub fn stratified_indices<T, K, F>(
    items: &[T],
    n: usize,
    key: F,
    seed: u64,
) -> Result<Vec<usize>, SampleError>
where
    K: Ord,
    F: Fn(&T) -> K,
{
    if n > items.len() {
        return Err(SampleError::TooMany {
            requested: n,
            available: items.len(),
        });
    }
    let mut strata: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        strata.entry(key(item)).or_default().push(i);
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let quotas = allocate(&sizes, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (members, quota) in strata.into_values().zip(quotas) {
        let mut members = members;
        members.shuffle(&mut rng);
        picked.extend(members.into_iter().take(quota));
    }
    picked.sort_unstable();
    Ok(picked)
}
