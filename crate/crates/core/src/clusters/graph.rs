use std::collections::VecDeque;

use super::canonical_partition;

/// Undirected graph over users, complete at creation, edges removed only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserGraph {
    users: usize,
    adj: Vec<bool>,
    edges: usize,
}

impl UserGraph {
    pub fn complete(users: usize) -> Self {
        let mut adj = vec![true; users * users];
        for i in 0..users {
            adj[i * users + i] = false;
        }
        Self { users, adj, edges: users * users.saturating_sub(1) / 2 }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.users + j]
    }

    /// Removes `{i, j}`; returns whether it was present.
    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        if i == j || !self.has_edge(i, j) {
            return false;
        }
        self.adj[i * self.users + j] = false;
        self.adj[j * self.users + i] = false;
        self.edges -= 1;
        true
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[i * self.users..(i + 1) * self.users].iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j)
    }

    /// `{i}` together with its neighbours, ascending.
    pub fn neighbors_plus_self(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.neighbors(i).collect();
        let at = out.partition_point(|&j| j < i);
        out.insert(at, i);
        out
    }

    /// Connected component containing `i`, ascending.
    pub fn connected_component(&self, i: usize) -> Vec<usize> {
        let mut seen = vec![false; self.users];
        self.bfs(i, &mut seen)
    }

    fn bfs(&self, start: usize, seen: &mut [bool]) -> Vec<usize> {
        let mut out = vec![start];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    out.push(w);
                    queue.push_back(w);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// All connected components, each ascending, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.users];
        let mut out = Vec::new();
        for i in 0..self.users {
            if !seen[i] {
                out.push(self.bfs(i, &mut seen));
            }
        }
        canonical_partition(out)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.users).all(|i| (0..self.users).all(|j| self.has_edge(i, j) == self.has_edge(j, i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn complete_graph_queries() {
        let g = UserGraph::complete(5);
        assert_eq!(g.edge_count(), 10);
        assert_eq!(g.connected_component(2), vec![0, 1, 2, 3, 4]);
        assert_eq!(g.neighbors_plus_self(3), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn isolated_user() {
        let mut g = UserGraph::complete(4);
        for j in [0, 2, 3] {
            assert!(g.remove_edge(1, j));
        }
        assert!(!g.remove_edge(1, 0));
        assert_eq!(g.connected_component(1), vec![1]);
        assert_eq!(g.neighbors_plus_self(1), vec![1]);
        assert_eq!(g.components(), vec![vec![0, 2, 3], vec![1]]);
    }

    #[test]
    fn path_minus_edge() {
        // users 0,1,2 standing for 1,2,3
        let mut g = UserGraph::complete(3);
        g.remove_edge(0, 2);
        assert_eq!(g.connected_component(0), vec![0, 1, 2]);
        g.remove_edge(1, 2);
        assert_eq!(g.connected_component(0), vec![0, 1]);
    }

    #[test]
    fn star_leaf_neighbors() {
        let mut g = UserGraph::complete(4);
        for (i, j) in [(1, 2), (1, 3), (2, 3)] {
            g.remove_edge(i, j);
        }
        assert_eq!(g.neighbors_plus_self(1), vec![0, 1]);
        assert_eq!(g.connected_component(1), vec![0, 1, 2, 3]);
    }

    fn reachable(g: &UserGraph, i: usize) -> Vec<usize> {
        // transitive closure by repeated relaxation
        let n = g.users();
        let mut r = vec![false; n];
        r[i] = true;
        for _ in 0..n {
            for a in 0..n {
                for b in 0..n {
                    if r[a] && g.has_edge(a, b) {
                        r[b] = true;
                    }
                }
            }
        }
        (0..n).filter(|&k| r[k]).collect()
    }

    fn refines(fine: &[Vec<usize>], coarse: &[Vec<usize>]) -> bool {
        fine.iter().all(|f| coarse.iter().any(|c| f.iter().all(|x| c.contains(x))))
    }

    proptest! {
        #[test]
        fn deletions_only_refine(n in 2usize..9, dels in prop::collection::vec((0usize..9, 0usize..9), 0..40)) {
            let mut g = UserGraph::complete(n);
            let mut prev = g.components();
            let mut edges = g.edge_count();
            for (a, b) in dels {
                g.remove_edge(a % n, b % n);
                prop_assert!(g.is_symmetric());
                prop_assert!(g.edge_count() <= edges);
                edges = g.edge_count();
                let cur = g.components();
                prop_assert!(refines(&cur, &prev));
                prev = cur;
                for i in 0..n {
                    prop_assert_eq!(g.connected_component(i), reachable(&g, i));
                    let nb = g.neighbors_plus_self(i);
                    prop_assert!(nb.iter().all(|x| g.connected_component(i).contains(x)));
                }
            }
        }
    }
}
