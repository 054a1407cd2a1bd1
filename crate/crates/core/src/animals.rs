//! Enumeration of connected vertex sets (lattice animals) without repetition.

/// Calls `visit` once for every connected set of at most `max_size` vertices that
/// contains `root` and otherwise only vertices accepted by `allowed`.
///
/// Redelmeier's method: a vertex leaves the untried set for good once tried, so
/// every set is produced exactly once. The visitor may return `false` to stop
/// growing the current set.
pub fn for_each_connected_set(
    adj: &[Vec<usize>],
    root: usize,
    max_size: usize,
    allowed: impl Fn(usize) -> bool,
    mut visit: impl FnMut(&[usize]) -> bool,
) {
    if max_size == 0 {
        return;
    }
    let mut seen = vec![false; adj.len()];
    seen[root] = true;
    let mut current = Vec::with_capacity(max_size);
    grow(adj, &allowed, &mut visit, &mut seen, &mut current, vec![root], max_size);
}

fn grow(
    adj: &[Vec<usize>],
    allowed: &impl Fn(usize) -> bool,
    visit: &mut impl FnMut(&[usize]) -> bool,
    seen: &mut [bool],
    current: &mut Vec<usize>,
    mut untried: Vec<usize>,
    max_size: usize,
) {
    while let Some(v) = untried.pop() {
        current.push(v);
        let go_on = visit(current);
        if go_on && current.len() < max_size {
            let mut added = Vec::new();
            for &u in &adj[v] {
                if !seen[u] && allowed(u) {
                    seen[u] = true;
                    added.push(u);
                }
            }
            let mut next = untried.clone();
            next.extend(&added);
            grow(adj, allowed, visit, seen, current, next, max_size);
            for u in added {
                seen[u] = false;
            }
        }
        current.pop();
    }
}

/// Number of connected sets of each size `1..=max_size` containing `root`.
pub fn count_by_size(adj: &[Vec<usize>], root: usize, max_size: usize) -> Vec<u64> {
    let mut counts = vec![0u64; max_size + 1];
    for_each_connected_set(adj, root, max_size, |_| true, |s| {
        counts[s.len()] += 1;
        true
    });
    counts
}

/// Nearest-neighbour graph of the cube `[-r, r]^d` in `Z^d` (no wraparound) and
/// the index of the origin.
pub fn hypercubic_window(d: usize, r: usize) -> (Vec<Vec<usize>>, usize) {
    let side = 2 * r + 1;
    let n = side.pow(d as u32);
    let adj = (0..n)
        .map(|v| {
            let mut out = Vec::new();
            for a in 0..d {
                let stride = side.pow(a as u32);
                let u = v / stride % side;
                if u > 0 {
                    out.push(v - stride);
                }
                if u + 1 < side {
                    out.push(v + stride);
                }
            }
            out
        })
        .collect();
    let origin = (0..d).map(|a| r * side.pow(a as u32)).sum();
    (adj, origin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_lattice_rooted_counts() {
        let (adj, o) = hypercubic_window(2, 5);
        // rooted animals: size k polyominoes times k
        assert_eq!(count_by_size(&adj, o, 5), vec![0, 1, 4, 18, 76, 315]);
    }

    #[test]
    fn triangle_sets() {
        let adj = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
        assert_eq!(count_by_size(&adj, 0, 3), vec![0, 1, 2, 1]);
    }
}
