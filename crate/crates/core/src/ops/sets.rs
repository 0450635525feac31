//! Index-set and ordering primitives.

use crate::ops::topk::float_cmp;
use crate::scalar::Scalar;

/// Sorted distinct values present in both inputs.
pub fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Stable permutation that orders `v` non-decreasingly.
pub fn sort_args<T: Scalar>(v: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| float_cmp(v[a], v[b]));
    idx
}
