//! Capacitated bipartite assignment by augmenting paths.

/// Assigns every unit of `supply[l]` to right groups with `capacity[r]`,
/// using only pairs where `allowed(l, r)`. Returns `flow[l][r]` when a
/// complete assignment exists.
pub(crate) fn capacitated_assignment(
    supply: &[usize],
    capacity: &[usize],
    allowed: impl Fn(usize, usize) -> bool,
) -> Option<Vec<Vec<usize>>> {
    let nl = supply.len();
    let nr = capacity.len();
    let adj: Vec<Vec<usize>> = (0..nl)
        .map(|l| (0..nr).filter(|&r| allowed(l, r)).collect())
        .collect();
    let mut flow = vec![vec![0usize; nr]; nl];
    let mut used = vec![0usize; nr];

    fn augment(
        l: usize,
        adj: &[Vec<usize>],
        capacity: &[usize],
        flow: &mut [Vec<usize>],
        used: &mut [usize],
        visited: &mut [bool],
    ) -> bool {
        for &r in &adj[l] {
            if visited[r] {
                continue;
            }
            visited[r] = true;
            if used[r] < capacity[r] {
                used[r] += 1;
                flow[l][r] += 1;
                return true;
            }
            for other in 0..flow.len() {
                if flow[other][r] > 0 && augment(other, adj, capacity, flow, used, visited) {
                    flow[other][r] -= 1;
                    flow[l][r] += 1;
                    return true;
                }
            }
        }
        false
    }

    for (l, &units) in supply.iter().enumerate() {
        for _ in 0..units {
            let mut visited = vec![false; nr];
            if !augment(l, &adj, capacity, &mut flow, &mut used, &mut visited) {
                return None;
            }
        }
    }
    Some(flow)
}
