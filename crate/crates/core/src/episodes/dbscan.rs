//! One-dimensional DBSCAN.
//!
//! Labels follow the usual reference convention: clusters are numbered in
//! the order of their lowest-index core point, `min_samples` counts the
//! point itself, neighborhoods are closed (`|a - b| <= eps`), and a border
//! point reachable from several clusters joins the lowest-numbered one.

/// Cluster label per input point, `None` for noise.
pub fn dbscan_1d(points: &[f64], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| points[i]).collect();

    // Closed-neighborhood sizes by two-pointer sweep over sorted values.
    let mut is_core = vec![false; n];
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..n {
        while sorted[i] - sorted[lo] > eps {
            lo += 1;
        }
        if hi < i {
            hi = i;
        }
        while hi + 1 < n && sorted[hi + 1] - sorted[i] <= eps {
            hi += 1;
        }
        is_core[i] = hi - lo + 1 >= min_samples;
    }

    // Cores chain into one component when consecutive cores are within eps.
    let mut component = vec![usize::MAX; n];
    let mut n_components = 0;
    let mut last_core: Option<usize> = None;
    for i in 0..n {
        if !is_core[i] {
            continue;
        }
        match last_core {
            Some(j) if sorted[i] - sorted[j] <= eps => component[i] = component[j],
            _ => {
                component[i] = n_components;
                n_components += 1;
            }
        }
        last_core = Some(i);
    }

    // Renumber components by their lowest original index.
    let mut first_index = vec![usize::MAX; n_components];
    for i in 0..n {
        if is_core[i] {
            let c = component[i];
            first_index[c] = first_index[c].min(order[i]);
        }
    }
    let mut by_first: Vec<usize> = (0..n_components).collect();
    by_first.sort_by_key(|&c| first_index[c]);
    let mut label_of = vec![0; n_components];
    for (label, &c) in by_first.iter().enumerate() {
        label_of[c] = label;
    }

    // Nearest core on either side decides membership of border points; the
    // cores within eps on one side always share a component.
    let mut prev_core = vec![None; n];
    let mut last = None;
    for i in 0..n {
        if is_core[i] {
            last = Some(i);
        }
        prev_core[i] = last;
    }
    let mut next_core = vec![None; n];
    let mut last = None;
    for i in (0..n).rev() {
        if is_core[i] {
            last = Some(i);
        }
        next_core[i] = last;
    }

    let mut labels = vec![None; n];
    for i in 0..n {
        let label = if is_core[i] {
            Some(label_of[component[i]])
        } else {
            let left = prev_core[i]
                .filter(|&j| sorted[i] - sorted[j] <= eps)
                .map(|j| label_of[component[j]]);
            let right = next_core[i]
                .filter(|&j| sorted[j] - sorted[i] <= eps)
                .map(|j| label_of[component[j]]);
            match (left, right) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            }
        };
        labels[order[i]] = label;
    }
    labels
}
