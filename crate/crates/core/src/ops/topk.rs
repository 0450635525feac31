//! Per-row top-k selection with a deterministic tie-break (smaller index first).

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopkMode {
    Smallest,
    Largest,
}

/// `n × k` indices and values; row `i` lives at `[i*k, (i+1)*k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopKResult<T> {
    pub n: usize,
    pub k: usize,
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> TopKResult<T> {
    pub fn row_indices(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn row_values(&self, i: usize) -> &[T] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    /// Stack results row-wise (used to merge sample-axis batches).
    pub fn concat(parts: Vec<TopKResult<T>>, k: usize) -> Self {
        let mut out = TopKResult {
            n: 0,
            k,
            indices: Vec::new(),
            values: Vec::new(),
        };
        for p in parts {
            debug_assert_eq!(p.k, k);
            out.n += p.n;
            out.indices.extend(p.indices);
            out.values.extend(p.values);
        }
        out
    }
}

/// Total order on floats: NaN sorts after everything.
#[inline]
pub fn float_cmp<T: Scalar>(a: T, b: T) -> Ordering {
    match a.partial_cmp(&b) {
        Some(o) => o,
        None => a.is_nan().cmp(&b.is_nan()),
    }
}

/// Ascending `(value, index)` order.
#[inline]
pub fn asc<T: Scalar>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    float_cmp(a.0, b.0).then(a.1.cmp(&b.1))
}

#[inline]
fn desc<T: Scalar>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    float_cmp(b.0, a.0).then(a.1.cmp(&b.1))
}

/// Keep the `k` best of `items` under `cmp`, sorted.
pub fn select_sorted<T: Scalar>(
    items: &mut Vec<(T, usize)>,
    k: usize,
    cmp: impl Fn(&(T, usize), &(T, usize)) -> Ordering,
) {
    if items.len() > k && k > 0 {
        items.select_nth_unstable_by(k - 1, &cmp);
        items.truncate(k);
    } else if k == 0 {
        items.clear();
    }
    items.sort_unstable_by(&cmp);
}

/// Bounded sorted buffer holding the `k` smallest `(value, index)` pairs seen.
#[derive(Debug, Clone)]
pub struct SmallestK<T> {
    k: usize,
    items: Vec<(T, usize)>,
}

impl<T: Scalar> SmallestK<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, value: T, index: usize) {
        let item = (value, index);
        if self.items.len() == self.k {
            match self.items.last() {
                Some(worst) if asc(&item, worst) == Ordering::Less => {}
                _ => return,
            }
        }
        let pos = self.items.partition_point(|x| asc(x, &item) == Ordering::Less);
        self.items.insert(pos, item);
        if self.items.len() > self.k {
            self.items.pop();
        }
    }

    pub fn into_sorted(self) -> Vec<(T, usize)> {
        self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Top-k of a single row.
pub fn topk_row<T: Scalar>(row: &[T], k: usize, mode: TopkMode) -> Vec<(T, usize)> {
    let mut items: Vec<(T, usize)> = row.iter().copied().zip(0..).collect();
    match mode {
        TopkMode::Smallest => select_sorted(&mut items, k, asc),
        TopkMode::Largest => select_sorted(&mut items, k, desc),
    }
    items
}

/// Top-k of every row of `m`.
pub fn topk<T: Scalar>(m: &DenseMatrix<T>, k: usize, mode: TopkMode) -> Result<TopKResult<T>> {
    topk_rows(m, 0..m.n(), k, mode)
}

/// Top-k over a contiguous range of rows.
pub fn topk_rows<T: Scalar>(
    m: &DenseMatrix<T>,
    rows: std::ops::Range<usize>,
    k: usize,
    mode: TopkMode,
) -> Result<TopKResult<T>> {
    if k == 0 || k > m.d() {
        return Err(Error::KOutOfRange { k, max: m.d() });
    }
    let mut indices = Vec::with_capacity(rows.len() * k);
    let mut values = Vec::with_capacity(rows.len() * k);
    let n = rows.len();
    for i in rows {
        for (v, j) in topk_row(m.row(i), k, mode) {
            indices.push(j);
            values.push(v);
        }
    }
    Ok(TopKResult { n, k, indices, values })
}
