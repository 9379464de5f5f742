//! Exemplar-subset enumeration, the reference for affinity propagation.

use std::collections::BTreeSet;

use forexsum::tensor::Matrix;

/// Exhaustive search over exemplar subsets maximizing
/// sum of preferences plus each point's best similarity to an exemplar.
pub fn brute_force_partition(s: &Matrix) -> BTreeSet<BTreeSet<usize>> {
    let n = s.rows;
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for mask in 1u32..(1 << n) {
        let ex: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) != 0).collect();
        let mut total = 0.0;
        for i in 0..n {
            if ex.contains(&i) {
                total += s.get(i, i);
            } else {
                total += ex
                    .iter()
                    .map(|&k| s.get(i, k))
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        let better = match &best {
            None => true,
            Some((b, c, _)) => total > *b + 1e-12 || ((total - *b).abs() <= 1e-12 && ex.len() < *c),
        };
        if better {
            best = Some((total, ex.len(), ex));
        }
    }
    let ex = best.unwrap().2;
    let mut clusters: Vec<BTreeSet<usize>> = ex.iter().map(|&k| BTreeSet::from([k])).collect();
    for i in (0..n).filter(|i| !ex.contains(i)) {
        let mut bi = 0;
        for (c, &k) in ex.iter().enumerate() {
            if s.get(i, k) > s.get(i, ex[bi]) {
                bi = c;
            }
        }
        clusters[bi].insert(i);
    }
    clusters.into_iter().collect()
}

pub fn partition_of(labels: &[usize]) -> BTreeSet<BTreeSet<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    (0..k)
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect()
}
