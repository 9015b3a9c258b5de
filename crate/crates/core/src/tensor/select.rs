use std::cmp::Ordering;

use super::Real;

/// Descending by value, ties broken by ascending index.
#[inline]
fn rank_order<T: Real>(values: &[T], a: usize, b: usize) -> Ordering {
    values[b].as_f64().total_cmp(&values[a].as_f64()).then(a.cmp(&b))
}

/// Indices of the `k` largest values, sorted descending with ties broken by
/// ascending index. `k` larger than `values.len()` returns all.
///
/// Small `k` uses one pass with a sorted buffer of the current best `k`;
/// otherwise linear-time selection followed by a sort of the selected
/// entries.
pub fn top_k_desc<T: Real>(values: &[T], k: usize) -> Vec<usize> {
    let n = values.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    if k * 16 <= n {
        return top_k_streaming(values, k);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if k < n {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_order(values, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| rank_order(values, a, b));
    idx
}

fn top_k_streaming<T: Real>(values: &[T], k: usize) -> Vec<usize> {
    let mut best: Vec<usize> = Vec::with_capacity(k + 1);
    for i in 0..values.len() {
        if best.len() == k {
            // a later index only enters on a strictly larger value
            let worst = values[best[k - 1]].as_f64();
            if values[i].as_f64().total_cmp(&worst) != Ordering::Greater {
                continue;
            }
        }
        let pos = best.partition_point(|&b| rank_order(values, b, i) == Ordering::Less);
        best.insert(pos, i);
        best.truncate(k);
    }
    best
}
