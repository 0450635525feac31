//! Provable quantization: evaluate distances at a low precision, certify
//! each decision against an analytic rounding-error bound, and recompute
//! only the uncertain entries at full precision. Outputs are identical to
//! the full-precision operators.

use std::ops::Range;

use half::f16;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::batch::BatchPlan;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::functional::{NeighborList, RangeNeighbors};
use crate::fused::{fused_knn, fused_nwr, PairSource};
use crate::ledger::MemoryLedger;
use crate::ops::distance::{cdist_sq, combine, fill_block, row_norms};
use crate::ops::topk::{asc, SmallestK};
use crate::scalar::{Precision, Scalar};
use crate::tensor::{cast, cast_rows, DenseMatrix};

/// Bound on `|D_computed − D_exact|` for one squared distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub d: usize,
    pub x_max: f64,
    pub eps: f64,
    pub exponent: u32,
    pub bound: f64,
}

/// `4·d·x_max²·[(1+eps)^m − 1]` with `m = ⌈log₂ d⌉ + 5`.
///
/// Three factors come from the norm/dot decomposition, two from rounding
/// each operand into the evaluation precision.
pub fn sqdist_error_bound(d: usize, x_max: f64, eps: f64) -> ErrorBound {
    let d = d.max(1);
    let exponent = ceil_log2(d) + 5;
    let growth = (exponent as f64 * eps.ln_1p()).exp_m1();
    ErrorBound {
        d,
        x_max,
        eps,
        exponent,
        bound: 4.0 * d as f64 * x_max * x_max * growth,
    }
}

fn ceil_log2(d: usize) -> u32 {
    if d <= 1 {
        0
    } else {
        usize::BITS - (d - 1).leading_zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantReport {
    pub total_entries: u64,
    pub verified_low: u64,
    pub recomputed_full: u64,
    pub bound_used: ErrorBound,
    /// Decision margin: low-precision bound plus full-precision bound.
    pub margin: f64,
    pub low_precision: Precision,
}

impl QuantReport {
    /// Associative tally merge; bounds must agree.
    pub fn merge(mut self, other: &QuantReport) -> QuantReport {
        debug_assert_eq!(self.low_precision, other.low_precision);
        self.total_entries += other.total_entries;
        self.verified_low += other.verified_low;
        self.recomputed_full += other.recomputed_full;
        self
    }

    pub fn verified_fraction(&self) -> f64 {
        if self.total_entries == 0 {
            1.0
        } else {
            self.verified_low as f64 / self.total_entries as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    verified: u64,
    recomputed: u64,
}

/// Largest absolute coordinate of the operands, rejecting unscaled input.
pub fn scaled_x_max<T: Scalar>(src: &PairSource<'_, T>) -> Result<f64> {
    let x_max = src.queries.max_abs().max(src.reference.max_abs());
    if !(x_max <= 1.0 + 1e-12) {
        return Err(Error::RequiresScaledInput { x_max });
    }
    Ok(x_max)
}

struct Setup {
    bound: ErrorBound,
    margin: f64,
    /// Low-precision evaluation could overflow or can never certify anything.
    fallback: bool,
}

fn setup<T: Scalar, L: Scalar>(d: usize, x_max: f64) -> Result<Setup> {
    if L::PRECISION.eps() < T::PRECISION.eps() {
        return Err(Error::InvalidParameter(format!(
            "low precision {} is finer than {}",
            L::PRECISION,
            T::PRECISION
        )));
    }
    // Bounds hold for any |x| ≤ x_max; a zero matrix still gets a positive margin.
    let x_max = x_max.max(f64::MIN_POSITIVE);
    let bound = sqdist_error_bound(d, x_max, L::PRECISION.eps());
    let high = sqdist_error_bound(d, x_max, T::PRECISION.eps());
    let magnitude = 4.0 * d.max(1) as f64 * x_max * x_max;
    Ok(Setup {
        bound,
        margin: bound.bound + high.bound,
        fallback: magnitude * 2.0 >= L::PRECISION.max_finite(),
    })
}

fn report<L: Scalar>(s: &Setup, total: u64, t: Tally) -> QuantReport {
    QuantReport {
        total_entries: total,
        verified_low: t.verified,
        recomputed_full: t.recomputed,
        bound_used: s.bound,
        margin: s.margin,
        low_precision: L::PRECISION,
    }
}

/// Operand block of one side: low-precision copy plus both norm vectors.
struct Side<L, T> {
    low: DenseMatrix<L>,
    low_norms: Vec<L>,
    high_norms: Vec<T>,
}

fn side<'l, T: Scalar, L: Scalar>(
    x: &DenseMatrix<T>,
    range: Range<usize>,
    ledger: &'l MemoryLedger,
) -> Result<(Side<L, T>, crate::ledger::Allocation<'l>)> {
    let lb = L::PRECISION.bytes_per_value() as u64;
    let hb = T::PRECISION.bytes_per_value() as u64;
    let len = range.len() as u64;
    let grant = ledger.alloc(len * x.d() as u64 * lb + len * (lb + hb))?;
    let low: DenseMatrix<L> = cast_rows(x, range.clone());
    let low_norms = row_norms(&low, 0..low.n());
    let high_norms = row_norms(x, range);
    Ok((
        Side {
            low,
            low_norms,
            high_norms,
        },
        grant,
    ))
}

fn low_tile<T: Scalar, L: Scalar>(q: &Side<L, T>, r: &Side<L, T>, tile: &mut Vec<L>) {
    tile.clear();
    tile.resize(q.low.n() * r.low.n(), L::zero());
    fill_block(&q.low, &q.low_norms, 0..q.low.n(), &r.low, &r.low_norms, 0..r.low.n(), tile);
}

#[inline]
fn high_entry<T: Scalar>(src: &PairSource<'_, T>, i: usize, qn: T, j: usize, rn: T, scratch: &mut Vec<T>) -> T {
    combine(qn, rn, T::dot_pairwise(src.queries.row(i), src.reference.row(j), scratch))
}

/// Range neighbours identical to [`fused_nwr`] at `T`, evaluated at `L`.
pub fn nwr_provable<T: Scalar, L: Scalar>(
    src: PairSource<'_, T>,
    phi: T,
    plan: &BatchPlan,
    exec: &Executor,
) -> Result<(RangeNeighbors, QuantReport)> {
    src.check()?;
    let x_max = scaled_x_max(&src)?;
    nwr_provable_with_bound::<T, L>(src, phi, x_max, plan, exec)
}

/// [`nwr_provable`] with a caller-supplied bound on `|x|`, for operands that
/// may leave the unit box (scaled test data).
pub fn nwr_provable_with_bound<T: Scalar, L: Scalar>(
    src: PairSource<'_, T>,
    phi: T,
    x_max: f64,
    plan: &BatchPlan,
    exec: &Executor,
) -> Result<(RangeNeighbors, QuantReport)> {
    src.check()?;
    if !(phi >= T::zero()) {
        return Err(Error::InvalidParameter("range threshold must be non-negative".into()));
    }
    let s = setup::<T, L>(src.queries.d(), x_max)?;
    let phi_w = phi.widen();
    let total = src.entries();
    if s.fallback || s.margin >= phi_w {
        let out = fused_nwr(src, phi, plan, exec)?;
        return Ok((
            out,
            report::<L>(
                &s,
                total,
                Tally {
                    verified: 0,
                    recomputed: total,
                },
            ),
        ));
    }
    let cols = plan.col_blocks().to_vec();
    let margin = s.margin;
    let parts = exec.run(plan.row_blocks(), |rows, ledger| {
        nwr_block::<T, L>(&src, rows.clone(), &cols, phi, margin, ledger)
    })?;
    let mut tally = Tally::default();
    let mut adjacency = Vec::with_capacity(src.queries.n());
    for (adj, t) in parts {
        adjacency.extend(adj);
        tally.verified += t.verified;
        tally.recomputed += t.recomputed;
    }
    Ok((
        RangeNeighbors {
            threshold: phi_w,
            adjacency,
        },
        report::<L>(&s, total, tally),
    ))
}

fn nwr_block<T: Scalar, L: Scalar>(
    src: &PairSource<'_, T>,
    rows: Range<usize>,
    col_blocks: &[Range<usize>],
    phi: T,
    margin: f64,
    ledger: &MemoryLedger,
) -> Result<(Vec<Vec<usize>>, Tally)> {
    let phi_w = phi.widen();
    let (q, _qg) = side::<T, L>(src.queries, rows.clone(), ledger)?;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); rows.len()];
    let mut tally = Tally::default();
    let mut tile = Vec::new();
    let mut scratch = Vec::new();
    for cols in col_blocks {
        let (r, _rg) = side::<T, L>(src.reference, cols.clone(), ledger)?;
        let _tg = ledger.alloc_values(rows.len() * cols.len(), L::PRECISION.bytes_per_value())?;
        low_tile(&q, &r, &mut tile);
        for (ri, i) in rows.clone().enumerate() {
            let line = &tile[ri * cols.len()..(ri + 1) * cols.len()];
            for ((cj, j), &v) in cols.clone().enumerate().zip(line) {
                if src.self_join && i == j {
                    continue;
                }
                let gap = v.widen() - phi_w;
                let inside = if gap > margin {
                    tally.verified += 1;
                    false
                } else if -gap > margin {
                    tally.verified += 1;
                    true
                } else {
                    tally.recomputed += 1;
                    high_entry(src, i, q.high_norms[ri], j, r.high_norms[cj], &mut scratch) <= phi
                };
                if inside {
                    adj[ri].push(j);
                }
            }
        }
    }
    Ok((adj, tally))
}

/// k nearest neighbours identical (indices and `T` distances) to
/// [`fused_knn`] at `T`, with the scan done at `L`.
///
/// Per row, with `t_k`/`t_{k+1}` the k-th and (k+1)-th smallest low values,
/// the true neighbours all lie within `t_k + 2·margin`. Those candidates are
/// re-ranked by their full-precision value. A candidate is counted as
/// recomputed when it sits within `2·margin` of the opposite side of the
/// boundary.
pub fn topk_provable<T: Scalar, L: Scalar>(
    src: PairSource<'_, T>,
    k: usize,
    plan: &BatchPlan,
    exec: &Executor,
) -> Result<(NeighborList<T>, QuantReport)> {
    src.check()?;
    let x_max = scaled_x_max(&src)?;
    topk_provable_with_bound::<T, L>(src, k, x_max, plan, exec)
}

pub fn topk_provable_with_bound<T: Scalar, L: Scalar>(
    src: PairSource<'_, T>,
    k: usize,
    x_max: f64,
    plan: &BatchPlan,
    exec: &Executor,
) -> Result<(NeighborList<T>, QuantReport)> {
    src.check()?;
    src.check_k(k)?;
    let s = setup::<T, L>(src.queries.d(), x_max)?;
    let total = src.entries();
    if s.fallback {
        let out = fused_knn(src, k, plan, exec)?;
        return Ok((
            out,
            report::<L>(
                &s,
                total,
                Tally {
                    verified: 0,
                    recomputed: total,
                },
            ),
        ));
    }
    let cols = plan.col_blocks().to_vec();
    let window = 2.0 * s.margin;
    let parts = exec.run(plan.row_blocks(), |rows, ledger| {
        topk_block::<T, L>(&src, rows.clone(), &cols, k, window, ledger)
    })?;
    let mut tally = Tally::default();
    let mut indices = Vec::with_capacity(src.queries.n() * k);
    let mut distances_sq = Vec::with_capacity(src.queries.n() * k);
    for (idx, dist, t) in parts {
        indices.extend(idx);
        distances_sq.extend(dist);
        tally.verified += t.verified;
        tally.recomputed += t.recomputed;
    }
    Ok((
        NeighborList {
            n: src.queries.n(),
            k,
            indices,
            distances_sq,
        },
        report::<L>(&s, total, tally),
    ))
}

type TopkBlock<T> = (Vec<usize>, Vec<T>, Tally);

fn topk_block<T: Scalar, L: Scalar>(
    src: &PairSource<'_, T>,
    rows: Range<usize>,
    col_blocks: &[Range<usize>],
    k: usize,
    window: f64,
    ledger: &MemoryLedger,
) -> Result<TopkBlock<T>> {
    let idx_bytes = std::mem::size_of::<usize>();
    let lb = L::PRECISION.bytes_per_value();
    let hb = T::PRECISION.bytes_per_value();
    let (q, _qg) = side::<T, L>(src.queries, rows.clone(), ledger)?;
    let _lowg = ledger.alloc_values(rows.len() * (k + 1), lb + idx_bytes)?;
    let _highg = ledger.alloc_values(rows.len() * k, hb + idx_bytes)?;
    let mut tile = Vec::new();

    // Pass 1: the k+1 smallest low-precision values per row.
    let mut low_best: Vec<SmallestK<L>> = (0..rows.len()).map(|_| SmallestK::new(k + 1)).collect();
    let single = col_blocks.len() == 1;
    let mut kept = None;
    for cols in col_blocks {
        let (r, rg) = side::<T, L>(src.reference, cols.clone(), ledger)?;
        let tg = ledger.alloc_values(rows.len() * cols.len(), lb)?;
        low_tile(&q, &r, &mut tile);
        for ((ri, i), best) in rows.clone().enumerate().zip(&mut low_best) {
            let line = &tile[ri * cols.len()..(ri + 1) * cols.len()];
            for (j, &v) in cols.clone().zip(line) {
                if !(src.self_join && i == j) {
                    best.push(v, j);
                }
            }
        }
        if single {
            kept = Some((r, rg, tg));
        }
    }
    // (t_k, index of k-th) and t_{k+1} per row.
    let cut: Vec<((L, usize), f64)> = low_best
        .into_iter()
        .map(|b| {
            let v = b.into_sorted();
            let next = v.get(k).map_or(f64::INFINITY, |p| p.0.widen());
            (v[k - 1], next)
        })
        .collect();

    // Pass 2: re-rank every candidate that could be a true neighbour.
    let mut tally = Tally::default();
    let mut high_best: Vec<SmallestK<T>> = (0..rows.len()).map(|_| SmallestK::new(k)).collect();
    let mut scratch = Vec::new();
    let mut scan = |r: &Side<L, T>, cols: &Range<usize>, tile: &[L]| {
        for (ri, i) in rows.clone().enumerate() {
            let (kth, next) = cut[ri];
            let t_k = kth.0.widen();
            let line = &tile[ri * cols.len()..(ri + 1) * cols.len()];
            for ((cj, j), &v) in cols.clone().enumerate().zip(line) {
                if src.self_join && i == j {
                    continue;
                }
                let member = asc(&(v, j), &kth) != std::cmp::Ordering::Greater;
                let w = v.widen();
                let candidate = member || w - t_k <= window;
                let ambiguous = if member { next - w <= window } else { w - t_k <= window };
                if ambiguous {
                    tally.recomputed += 1;
                } else {
                    tally.verified += 1;
                }
                if candidate {
                    let h = high_entry(src, i, q.high_norms[ri], j, r.high_norms[cj], &mut scratch);
                    high_best[ri].push(h, j);
                }
            }
        }
    };
    if let Some((r, _rg, _tg)) = kept {
        scan(&r, &col_blocks[0], &tile);
    } else {
        for cols in col_blocks {
            let (r, _rg) = side::<T, L>(src.reference, cols.clone(), ledger)?;
            let _tg = ledger.alloc_values(rows.len() * cols.len(), lb)?;
            low_tile(&q, &r, &mut tile);
            scan(&r, cols, &tile);
        }
    }

    let mut idx = Vec::with_capacity(rows.len() * k);
    let mut dist = Vec::with_capacity(rows.len() * k);
    for b in high_best {
        for (v, j) in b.into_sorted() {
            idx.push(j);
            dist.push(v);
        }
    }
    Ok((idx, dist, tally))
}

/// [`nwr_provable`] with the low precision chosen at run time.
pub fn nwr_provable_dyn<T: Scalar>(
    src: PairSource<'_, T>,
    phi: T,
    low: Precision,
    x_max: f64,
    plan: &BatchPlan,
    exec: &Executor,
) -> Result<(RangeNeighbors, QuantReport)> {
    match low {
        Precision::P16 => nwr_provable_with_bound::<T, f16>(src, phi, x_max, plan, exec),
        Precision::P32 => nwr_provable_with_bound::<T, f32>(src, phi, x_max, plan, exec),
        Precision::P64 => nwr_provable_with_bound::<T, f64>(src, phi, x_max, plan, exec),
    }
}

/// [`topk_provable`] with the low precision chosen at run time.
pub fn topk_provable_dyn<T: Scalar>(
    src: PairSource<'_, T>,
    k: usize,
    low: Precision,
    x_max: f64,
    plan: &BatchPlan,
    exec: &Executor,
) -> Result<(NeighborList<T>, QuantReport)> {
    match low {
        Precision::P16 => topk_provable_with_bound::<T, f16>(src, k, x_max, plan, exec),
        Precision::P32 => topk_provable_with_bound::<T, f32>(src, k, x_max, plan, exec),
        Precision::P64 => topk_provable_with_bound::<T, f64>(src, k, x_max, plan, exec),
    }
}

/// Max `|D_low − D_64|` over `trials` random `n × n` distance matrices of
/// points uniform in `[0, 1]^d`.
pub fn verify_bound_empirically(trials: usize, n: usize, d: usize, low: Precision, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let vals: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
        let x = DenseMatrix::from_vec(n, d, vals).expect("shape");
        let exact = cdist_sq(&x, &x).expect("shape").block;
        let approx: Vec<f64> = match low {
            Precision::P16 => low_distances::<f16>(&x),
            Precision::P32 => low_distances::<f32>(&x),
            Precision::P64 => exact.values().to_vec(),
        };
        for (a, b) in approx.iter().zip(exact.values()) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

fn low_distances<L: Scalar>(x: &DenseMatrix<f64>) -> Vec<f64> {
    let low: DenseMatrix<L> = cast(x);
    cdist_sq(&low, &low).expect("shape").block.values().iter().map(|v| v.widen()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::{plan, OpKind};
    use proptest::prelude::*;
    use rand::Rng;

    fn uniform(n: usize, d: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_vec(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    fn binomial_growth(m: u32, eps: f64) -> f64 {
        // Σ_{i=1..m} C(m, i) eps^i
        let mut c = 1.0;
        let mut s = 0.0;
        for i in 1..=m {
            c = c * (m - i + 1) as f64 / i as f64;
            s += c * eps.powi(i as i32);
        }
        s
    }

    fn full_plan(op: OpKind, n: usize, d: usize, b: Option<usize>) -> BatchPlan {
        plan(op, n, d, Precision::P64, u64::MAX, b).unwrap()
    }

    fn oracle_nwr(x: &DenseMatrix<f64>, phi: f64) -> RangeNeighbors {
        fused_nwr(PairSource::self_join(x), phi, &full_plan(OpKind::Nwr, x.n(), x.d(), None), &Executor::sequential()).unwrap()
    }

    fn oracle_knn(x: &DenseMatrix<f64>, k: usize) -> NeighborList<f64> {
        fused_knn(PairSource::self_join(x), k, &full_plan(OpKind::Knn { k }, x.n(), x.d(), None), &Executor::sequential())
            .unwrap()
    }

    #[test]
    fn bound_closed_form() {
        let eps = 2f64.powi(-24);
        let b = sqdist_error_bound(4, 1.0, eps);
        assert_eq!(b.exponent, 7);
        let want = 16.0 * binomial_growth(7, eps);
        assert!((b.bound - want).abs() <= 1e-15 * want);
        assert!((b.bound - 6.6757e-6).abs() < 1e-9);
        assert_eq!(sqdist_error_bound(1, 1.0, eps).exponent, 5);
        assert_eq!(sqdist_error_bound(5, 1.0, eps).exponent, 8);
        assert_eq!(sqdist_error_bound(64, 1.0, eps).exponent, 11);
    }

    #[test]
    fn bound_monotone() {
        let eps = 2f64.powi(-11);
        assert!(sqdist_error_bound(4, 1.0, eps).bound < sqdist_error_bound(8, 1.0, eps).bound);
        assert!(sqdist_error_bound(4, 0.5, eps).bound < sqdist_error_bound(4, 1.0, eps).bound);
        assert!(sqdist_error_bound(4, 1.0, 2f64.powi(-24)).bound < sqdist_error_bound(4, 1.0, eps).bound);
        assert!(sqdist_error_bound(1, 1e-3, 2f64.powi(-53)).bound > 0.0);
    }

    #[test]
    fn empirical_discrepancy_within_bound() {
        assert_eq!(verify_bound_empirically(1, 50, 8, Precision::P64, 0), 0.0);
        for d in [1, 4, 16, 33] {
            let w32 = verify_bound_empirically(1, 200, d, Precision::P32, d as u64);
            let w16 = verify_bound_empirically(1, 200, d, Precision::P16, d as u64);
            assert!(w32 <= sqdist_error_bound(d, 1.0, Precision::P32.eps()).bound);
            assert!(w16 <= sqdist_error_bound(d, 1.0, Precision::P16.eps()).bound);
            assert!(w16 > w32);
        }
    }

    #[test]
    fn rejects_unscaled_input() {
        let x = DenseMatrix::<f64>::from_rows(&[[0.0, 2.0], [1.0, 0.0]]).unwrap();
        let p = full_plan(OpKind::Nwr, 2, 2, None);
        let r = nwr_provable::<f64, f32>(PairSource::self_join(&x), 0.5, &p, &Executor::sequential());
        assert!(matches!(r, Err(Error::RequiresScaledInput { .. })));
        let r = topk_provable::<f64, f32>(PairSource::self_join(&x), 1, &p, &Executor::sequential());
        assert!(matches!(r, Err(Error::RequiresScaledInput { .. })));
        let r = nwr_provable::<f32, f64>(PairSource::self_join(&cast(&x.map(|v| v / 2.0))), 0.5, &p, &Executor::sequential());
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn separated_clusters_need_no_recompute() {
        let mut rows = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 1e-3;
            rows.push([t, t, 0.0, t]);
            rows.push([1.0 - t, 1.0, 1.0 - t, 1.0]);
        }
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let p = full_plan(OpKind::Nwr, 40, 4, Some(13));
        let (r, rep) = nwr_provable::<f64, f32>(PairSource::self_join(&x), 1.5, &p, &Executor::sequential()).unwrap();
        assert_eq!(rep.recomputed_full, 0);
        assert_eq!(rep.verified_low, 40 * 39);
        assert_eq!(r, oracle_nwr(&x, 1.5));
    }

    #[test]
    fn exact_boundary_pair_is_recomputed_and_inside() {
        let x = DenseMatrix::<f64>::from_rows(&[[0.0, 0.0], [0.5, 0.0], [1.0, 1.0]]).unwrap();
        let p = full_plan(OpKind::Nwr, 3, 2, None);
        let (r, rep) = nwr_provable::<f64, f32>(PairSource::self_join(&x), 0.25, &p, &Executor::sequential()).unwrap();
        assert_eq!(rep.recomputed_full, 2);
        assert_eq!(r.adjacency, vec![vec![1], vec![0], vec![]]);
    }

    #[test]
    fn short_circuit_when_bound_exceeds_phi() {
        let x = uniform(60, 16, 3);
        let p = full_plan(OpKind::Nwr, 60, 16, None);
        let (r, rep) = nwr_provable::<f64, f16>(PairSource::self_join(&x), 0.1, &p, &Executor::sequential()).unwrap();
        assert_eq!(rep.verified_low, 0);
        assert_eq!(rep.recomputed_full, 60 * 59);
        assert_eq!(r, oracle_nwr(&x, 0.1));
    }

    #[test]
    fn nwr_matches_full_precision() {
        for seed in 0..20 {
            for d in [2, 4, 8] {
                let x = uniform(120, d, seed);
                for phi in [0.01, 0.1, 0.3] {
                    let p = full_plan(OpKind::ProvableNwr { low: Precision::P32 }, 120, d, Some(37));
                    let want = oracle_nwr(&x, phi);
                    let src = PairSource::self_join(&x);
                    let (a, ra) = nwr_provable::<f64, f32>(src, phi, &p, &Executor::sequential()).unwrap();
                    let (b, rb) = nwr_provable::<f64, f16>(src, phi, &p, &Executor::sequential()).unwrap();
                    assert_eq!(a, want);
                    assert_eq!(b, want);
                    assert_eq!(ra.verified_low + ra.recomputed_full, ra.total_entries);
                    assert!(ra.recomputed_full <= rb.recomputed_full);
                }
            }
        }
    }

    #[test]
    fn topk_matches_full_precision() {
        for seed in 0..20 {
            for d in [2, 8, 16] {
                let x = uniform(150, d, 100 + seed);
                let want = oracle_knn(&x, 10);
                for b in [None, Some(40)] {
                    let p = full_plan(OpKind::ProvableKnn { k: 10, low: Precision::P16 }, 150, d, b);
                    let src = PairSource::self_join(&x);
                    let (a, ra) = topk_provable::<f64, f32>(src, 10, &p, &Executor::sequential()).unwrap();
                    let (h, rh) = topk_provable::<f64, f16>(src, 10, &p, &Executor::sequential()).unwrap();
                    assert_eq!(a, want);
                    assert_eq!(h, want);
                    assert_eq!(rh.verified_low + rh.recomputed_full, rh.total_entries);
                    assert!(ra.recomputed_full <= rh.recomputed_full);
                }
            }
        }
    }

    #[test]
    fn topk_well_separated_needs_no_recompute() {
        let x = uniform(30, 3, 9);
        let k = 5;
        let margin = setup::<f64, f32>(3, x.max_abs()).unwrap().margin;
        let full = cdist_sq(&x, &x).unwrap();
        for i in 0..30 {
            let mut row: Vec<f64> = (0..30).filter(|&j| j != i).map(|j| full.at(i, j)).collect();
            row.sort_by(f64::total_cmp);
            assert!(row[k] - row[k - 1] > 4.0 * margin, "construction precondition");
        }
        let p = full_plan(OpKind::Knn { k }, 30, 3, None);
        let (nl, rep) = topk_provable::<f64, f32>(PairSource::self_join(&x), k, &p, &Executor::sequential()).unwrap();
        assert_eq!(rep.recomputed_full, 0);
        assert_eq!(nl, oracle_knn(&x, k));
    }

    #[test]
    fn duplicates_are_ambiguous_but_exact() {
        let mut rows = vec![[0.25, 0.25]; 6];
        rows.extend([[0.9, 0.1], [0.1, 0.9], [0.5, 0.5], [0.25, 0.25]]);
        let x = DenseMatrix::<f64>::from_rows(&rows).unwrap();
        let p = full_plan(OpKind::Knn { k: 3 }, 10, 2, Some(3));
        let (nl, rep) = topk_provable::<f64, f16>(PairSource::self_join(&x), 3, &p, &Executor::sequential()).unwrap();
        assert!(rep.recomputed_full > 0);
        assert_eq!(nl, oracle_knn(&x, 3));
        assert_eq!(nl.row(0), &[1, 2, 3]);
    }

    #[test]
    fn cross_queries_and_workers() {
        let train = uniform(90, 6, 11);
        let test = uniform(40, 6, 12).map(|v| v * 1.2 - 0.1);
        let src = PairSource::cross(&test, &train);
        let ex = Executor::with_workers(3).unwrap();
        let p = crate::batch::plan_cross(OpKind::Knn { k: 7 }, 40, 90, 6, Precision::P64, u64::MAX, Some(16)).unwrap();
        let want = fused_knn(src, 7, &p, &Executor::sequential()).unwrap();
        let x_max = src.queries.max_abs().max(src.reference.max_abs());
        let (got, rep) = topk_provable_dyn(src, 7, Precision::P16, x_max, &p, &ex).unwrap();
        assert_eq!(got, want);
        assert_eq!(rep.total_entries, 40 * 90);
        let (got, _) = nwr_provable_dyn(src, 0.4, Precision::P32, x_max, &p, &ex).unwrap();
        assert_eq!(got, fused_nwr(src, 0.4, &p, &Executor::sequential()).unwrap());
    }

    #[test]
    fn workspace_is_charged_at_low_precision() {
        let x = uniform(400, 16, 4);
        let src = PairSource::self_join(&x);
        let p64 = full_plan(OpKind::Knn { k: 10 }, 400, 16, Some(400));
        let ex = Executor::sequential();
        fused_knn(src, 10, &p64, &ex).unwrap();
        let full = ex.peak_bytes();
        assert_eq!(full, p64.est_block_bytes);
        let ex = Executor::sequential();
        let p16 = full_plan(OpKind::ProvableKnn { k: 10, low: Precision::P16 }, 400, 16, Some(400));
        topk_provable::<f64, f16>(src, 10, &p16, &ex).unwrap();
        assert!(ex.peak_bytes() <= p16.est_block_bytes);
        assert!((ex.peak_bytes() as f64) < 0.35 * full as f64);
    }

    #[test]
    fn report_merge_is_associative() {
        let b = sqdist_error_bound(4, 1.0, 1e-3);
        let r = |t, v| QuantReport {
            total_entries: t,
            verified_low: v,
            recomputed_full: t - v,
            bound_used: b,
            margin: b.bound,
            low_precision: Precision::P16,
        };
        let (a, bb, c) = (r(10, 3), r(7, 7), r(5, 0));
        assert_eq!(a.merge(&bb).merge(&c), a.merge(&bb.merge(&c)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn everything_ambiguous_still_exact(seed in 0u64..10_000, k in 1usize..6) {
            // Coarse data on a small grid: many exact ties and near-ties.
            let x = uniform(40, 3, seed).map(|v| (v * 4.0).round() / 4.0);
            let p = full_plan(OpKind::Knn { k }, 40, 3, Some(9));
            let (nl, _) = topk_provable::<f64, f16>(PairSource::self_join(&x), k, &p, &Executor::sequential()).unwrap();
            prop_assert_eq!(nl, oracle_knn(&x, k));
            let phi = 0.125;
            let (r, _) = nwr_provable::<f64, f32>(PairSource::self_join(&x), phi, &p, &Executor::sequential()).unwrap();
            prop_assert_eq!(r, oracle_nwr(&x, phi));
        }
    }
}
