//! Deterministic reductions.
//!
//! All ensemble averages in this crate go through a fixed pairwise tree so
//! results are bit-identical for any worker count. Leaves and split points
//! depend only on the index range, never on the thread schedule.

const LEAF: usize = 256;
const PAR_THRESHOLD: usize = 16_384;

/// Binary-counter cascade: adds `f(i)` pairwise all the way down, so equal
/// summands combine exactly at every level.
fn cascade_sum<F>(lo: usize, hi: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut stack = [0.0f64; 64];
    let mut count: usize = 0;
    for i in lo..hi {
        let mut v = f(i);
        let mut level = 0;
        let mut c = count;
        while c & 1 == 1 {
            v += stack[level];
            level += 1;
            c >>= 1;
        }
        stack[level] = v;
        count += 1;
    }
    let mut s = 0.0;
    for (level, v) in stack.iter().enumerate() {
        if count & (1 << level) != 0 {
            s += v;
        }
        if 1usize << level > count {
            break;
        }
    }
    s
}

/// Pairwise-tree sum of `f(i)` over `lo..hi`. The tree depends only on the
/// index range, never on the thread schedule.
pub fn pairwise_sum_by<F>(lo: usize, hi: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let n = hi - lo;
    if n <= LEAF {
        return cascade_sum(lo, hi, f);
    }
    let mid = lo + n / 2;
    if n >= PAR_THRESHOLD {
        let (a, b) = rayon::join(|| pairwise_sum_by(lo, mid, f), || pairwise_sum_by(mid, hi, f));
        a + b
    } else {
        pairwise_sum_by(lo, mid, f) + pairwise_sum_by(mid, hi, f)
    }
}

pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(0, values.len(), &|i| values[i])
}

pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Sample mean and standard error (sample std / sqrt(n)).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let m = mean(values);
    if n < 2 {
        return (m, 0.0);
    }
    let ss = pairwise_sum_by(0, n, &|i| {
        let d = values[i] - m;
        d * d
    });
    let var = ss / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    pairwise_sum_by(0, n, &|i| {
        let d = values[i] - m;
        d * d
    }) / (n - 1) as f64
}
