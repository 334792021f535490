//! Minimum-cost assignment of clients to servers with capacity
//! `ceil(n_clients / n_servers)` per server, solved by the Hungarian method on
//! a matrix with each server replicated that many times.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(server, client)` pairs sorted by server then client.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn empty() -> Self {
        Self { pairs: Vec::new(), total_cost: 0.0 }
    }

    pub fn clients_of(&self, server: usize) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().filter(move |p| p.0 == server).map(|p| p.1)
    }

    pub fn server_of(&self, client: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == client).map(|p| p.0)
    }
}

/// Solves the replicated-server assignment for an `n_servers x n_clients`
/// cost matrix. Equal-cost alternatives resolve toward lower slot indices.
pub fn hungarian_assign(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n_servers = cost.len();
    let n_clients = cost.first().map_or(0, Vec::len);
    if n_servers == 0 || n_clients == 0 {
        return Err(Error::Degenerate("empty cost matrix".into()));
    }
    for row in cost {
        if row.len() != n_clients {
            return Err(Error::Dimension("ragged cost matrix".into()));
        }
        if row.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::NonFinite("costs must be finite and non-negative".into()));
        }
    }
    let copies = n_clients.div_ceil(n_servers);
    let slots = n_servers * copies;
    // rows: clients (n), columns: server slots (m >= n)
    let slot_cost = |client: usize, slot: usize| cost[slot / copies][client];
    let slot_of_client = solve_rectangular(n_clients, slots, slot_cost);

    let mut pairs: Vec<(usize, usize)> = slot_of_client
        .iter()
        .enumerate()
        .map(|(client, &slot)| (slot / copies, client))
        .collect();
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(s, c)| cost[s][c]).sum();
    Ok(Assignment { pairs, total_cost })
}

/// Shortest-augmenting-path Hungarian algorithm with potentials for an
/// `n x m` matrix, `n <= m`. Returns the column matched to each row.
fn solve_rectangular(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(n <= m);
    // 1-based arrays, index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut row_of_col = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=m {
        if row_of_col[j] != 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Exhaustive minimum over all client-to-server maps respecting the
    /// replicated capacity.
    pub fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
        let n_servers = cost.len();
        let n_clients = cost[0].len();
        let cap = n_clients.div_ceil(n_servers);
        let mut load = vec![0usize; n_servers];
        let mut best = f64::INFINITY;
        fn rec(c: usize, acc: f64, cost: &[Vec<f64>], cap: usize, load: &mut [usize], best: &mut f64) {
            if c == cost[0].len() {
                *best = best.min(acc);
                return;
            }
            for s in 0..cost.len() {
                if load[s] < cap {
                    load[s] += 1;
                    rec(c + 1, acc + cost[s][c], cost, cap, load, best);
                    load[s] -= 1;
                }
            }
        }
        rec(0, 0.0, cost, cap, &mut load, &mut best);
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two() {
        let a = hungarian_assign(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
    }

    #[test]
    fn zero_diagonal() {
        let n = 5;
        let cost: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 3.0 + (i * j) as f64 }).collect())
            .collect();
        let a = hungarian_assign(&cost).unwrap();
        assert_eq!(a.pairs, (0..n).map(|i| (i, i)).collect::<Vec<_>>());
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn more_clients_than_servers_respects_capacity() {
        let cost = vec![
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            vec![9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0],
            vec![5.0, 5.0, 5.0, 5.0, 5.0, 5.0, 5.0],
            vec![7.0, 7.0, 7.0, 7.0, 7.0, 7.0, 7.0],
        ];
        let a = hungarian_assign(&cost).unwrap();
        assert_eq!(a.pairs.len(), 7);
        for s in 0..4 {
            assert!(a.clients_of(s).count() <= 2);
        }
        // two at cost 1, two at 5, two at 7, one at 9
        assert_eq!(a.total_cost, 2.0 + 10.0 + 14.0 + 9.0);
        assert_eq!(a.total_cost, oracle::brute_force_min(&cost));
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(hungarian_assign(&[]).is_err());
        assert!(hungarian_assign(&[vec![]]).is_err());
        assert!(hungarian_assign(&[vec![f64::NAN]]).is_err());
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(
            servers in 1usize..=4,
            clients in 1usize..=7,
            seed in prop::collection::vec(0u32..1000, 28),
        ) {
            let cost: Vec<Vec<f64>> = (0..servers)
                .map(|s| (0..clients).map(|c| f64::from(seed[s * 7 + c]) / 8.0).collect())
                .collect();
            let a = hungarian_assign(&cost).unwrap();
            prop_assert_eq!(a.total_cost, oracle::brute_force_min(&cost));
            let mut seen = vec![false; clients];
            for &(s, c) in &a.pairs {
                prop_assert!(!seen[c]);
                seen[c] = true;
                prop_assert!(s < servers);
            }
            prop_assert!(seen.iter().all(|x| *x));
            let cap = clients.div_ceil(servers);
            for s in 0..servers {
                prop_assert!(a.clients_of(s).count() <= cap);
            }
        }
    }
}
