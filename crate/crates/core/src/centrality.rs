//! PageRank and betweenness centrality on an undirected weighted graph.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CharacterId, SocialGraph, WeightedGraph};
use crate::scalar::Scalar;

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Pagerank,
    Betweenness,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Pagerank => "pagerank",
            Measure::Betweenness => "betweenness",
        })
    }
}

/// One score per node plus the mean used for nodes outside the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct CentralityScores<T> {
    pub measure: Measure,
    pub values: Vec<T>,
    pub imputed_mean: T,
}

impl<T: Scalar> CentralityScores<T> {
    fn new(measure: Measure, values: Vec<T>) -> Self {
        let imputed_mean = if values.is_empty() {
            T::zero()
        } else {
            values.iter().copied().sum::<T>() / T::of_usize(values.len())
        };
        CentralityScores {
            measure,
            values,
            imputed_mean,
        }
    }

    /// Score of `v`, or the mean score when `v` is absent.
    pub fn feature_value(&self, v: Option<CharacterId>) -> T {
        v.and_then(|v| self.values.get(v.index()).copied())
            .unwrap_or(self.imputed_mean)
    }

    /// Score looked up by name in `g`, imputing absent names.
    pub fn feature_value_by_name(&self, g: &SocialGraph, name: &str) -> T {
        self.feature_value(g.names().get(name))
    }

    /// Node indices sorted by descending score, ties by index.
    pub fn ranked(&self) -> Vec<(usize, T)> {
        let mut r: Vec<(usize, T)> = self.values.iter().copied().enumerate().collect();
        r.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
        r
    }
}

/// Weighted PageRank by power iteration. Each undirected edge is a pair of
/// arcs; a walker at `u` moves to `v` with probability `w_uv / s_u`.
/// Mass on nodes without edges is spread uniformly. Stops when the L1
/// change drops below `tol`.
pub fn pagerank<T: Scalar>(
    g: &WeightedGraph<T>,
    damping: T,
    tol: T,
    max_iter: usize,
) -> Result<CentralityScores<T>> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::Invalid("pagerank of an empty graph".into()));
    }
    if !(damping > T::zero() && damping < T::one()) {
        return Err(Error::Invalid(format!("damping {damping} outside (0, 1)")));
    }
    let nf = T::of_usize(n);
    let strength: Vec<T> = (0..n).map(|v| g.strength(v)).collect();
    let mut x = vec![T::one() / nf; n];
    let mut next = vec![T::zero(); n];
    let mut residual = T::infinity();
    for _ in 0..max_iter {
        let dangling: T = (0..n)
            .filter(|&v| strength[v] <= T::zero())
            .map(|v| x[v])
            .sum();
        let base = (T::one() - damping) / nf + damping * dangling / nf;
        next.iter_mut().for_each(|y| *y = base);
        for u in 0..n {
            if strength[u] <= T::zero() {
                continue;
            }
            let share = damping * x[u] / strength[u];
            for &(v, w) in g.neighbors(u) {
                // a self-loop counts twice in the strength, and twice here
                let w = if u == v { w + w } else { w };
                next[v] += share * w;
            }
        }
        residual = x.iter().zip(&next).map(|(&a, &b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if residual < tol {
            return Ok(CentralityScores::new(Measure::Pagerank, x));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: residual.as_f64(),
        last: x.iter().map(|v| v.as_f64()).collect(),
    })
}

/// Brandes betweenness on unweighted shortest paths, normalized by
/// `(n - 1)(n - 2) / 2` so values lie in `[0, 1]`.
pub fn betweenness<T: Scalar>(g: &WeightedGraph<T>) -> CentralityScores<T> {
    let n = g.node_count();
    let mut cb = vec![T::zero(); n];
    let mut sigma = vec![T::zero(); n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![T::zero(); n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        for v in 0..n {
            sigma[v] = T::zero();
            dist[v] = usize::MAX;
            delta[v] = T::zero();
            preds[v].clear();
        }
        sigma[s] = T::one();
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &(w, _) in g.neighbors(v) {
                if w == v {
                    continue;
                }
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    let sv = sigma[v];
                    sigma[w] += sv;
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                let c = sigma[v] / sigma[w] * (T::one() + delta[w]);
                delta[v] += c;
            }
            if w != s {
                let d = delta[w];
                cb[w] += d;
            }
        }
    }
    // Each unordered pair was counted from both endpoints.
    if n > 2 {
        let scale = T::one() / (T::of_usize(n - 1) * T::of_usize(n - 2));
        cb.iter_mut().for_each(|c| *c *= scale);
    } else {
        cb.iter_mut().for_each(|c| *c = T::zero());
    }
    CentralityScores::new(Measure::Betweenness, cb)
}

pub fn pagerank_social(g: &SocialGraph, damping: f64) -> Result<CentralityScores<f64>> {
    pagerank(&WeightedGraph::from_social(g), damping, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// PageRank with every edge weight set to 1.
pub fn pagerank_social_unweighted(g: &SocialGraph, damping: f64) -> Result<CentralityScores<f64>> {
    let wg = WeightedGraph::from_edges(
        g.node_count(),
        g.edges().iter().map(|e| (e.a.index(), e.b.index(), 1.0)),
    );
    pagerank(&wg, damping, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn betweenness_social(g: &SocialGraph) -> CentralityScores<f64> {
    betweenness(&WeightedGraph::<f64>::from_social(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(n: usize, edges: &[(usize, usize)]) -> WeightedGraph<f64> {
        WeightedGraph::from_edges(n, edges.iter().map(|&(a, b)| (a, b, 1.0)))
    }

    #[test]
    fn cycle_is_uniform() {
        let g = unit(3, &[(0, 1), (1, 2), (2, 0)]);
        for d in [0.1, 0.5, 0.85, 0.99] {
            let pr = pagerank(&g, d, 1e-12, 10_000).unwrap();
            for v in pr.values {
                assert!((v - 1.0 / 3.0).abs() < 1e-10);
            }
        }
    }

    /// Dense column-stochastic iteration written independently.
    fn dense_pagerank(adj: &[Vec<f64>], d: f64) -> Vec<f64> {
        let n = adj.len();
        let out: Vec<f64> = adj.iter().map(|r| r.iter().sum()).collect();
        let mut x = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut y = vec![0.0; n];
            for (i, yi) in y.iter_mut().enumerate() {
                let mut s = 0.0;
                for j in 0..n {
                    s += if out[j] > 0.0 { adj[j][i] / out[j] * x[j] } else { x[j] / n as f64 };
                }
                *yi = (1.0 - d) / n as f64 + d * s;
            }
            let diff: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum();
            x = y;
            if diff < 1e-14 {
                break;
            }
        }
        x
    }

    #[test]
    fn star_matches_dense_oracle() {
        let g = unit(4, &[(0, 1), (0, 2), (0, 3)]);
        let mut adj = vec![vec![0.0; 4]; 4];
        for leaf in 1..4 {
            adj[0][leaf] = 1.0;
            adj[leaf][0] = 1.0;
        }
        let oracle = dense_pagerank(&adj, 0.85);
        let pr = pagerank(&g, 0.85, 1e-13, 10_000).unwrap();
        for v in 0..4 {
            assert!((pr.values[v] - oracle[v]).abs() < 1e-12);
        }
        assert!(pr.values[0] > pr.values[1]);
    }

    #[test]
    fn dangling_mass_is_spread() {
        let g = unit(4, &[(0, 1)]);
        let pr = pagerank(&g, 0.85, 1e-12, 10_000).unwrap();
        assert!((pr.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut adj = vec![vec![0.0; 4]; 4];
        adj[0][1] = 1.0;
        adj[1][0] = 1.0;
        let oracle = dense_pagerank(&adj, 0.85);
        for v in 0..4 {
            assert!((pr.values[v] - oracle[v]).abs() < 1e-10);
        }
    }

    #[test]
    fn non_convergence_returns_last_iterate() {
        let g = unit(4, &[(0, 1), (0, 2), (0, 3)]);
        match pagerank(&g, 0.85, 1e-15, 2) {
            Err(Error::NonConvergence { iterations, last, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last.len(), 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(pagerank(&g, 1.0, 1e-10, 10).is_err());
    }

    #[test]
    fn tiny_damping_is_near_uniform() {
        let g = unit(5, &[(0, 1), (0, 2), (0, 3), (3, 4)]);
        let pr = pagerank(&g, 1e-6, 1e-12, 1000).unwrap();
        for v in pr.values {
            assert!((v - 0.2).abs() < 1e-4);
        }
    }

    #[test]
    fn betweenness_hand_cases() {
        let path = betweenness(&unit(3, &[(0, 1), (1, 2)]));
        assert_eq!(path.values, vec![0.0, 1.0, 0.0]);
        let star = betweenness(&unit(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]));
        assert!((star.values[0] - 1.0).abs() < 1e-15);
        assert!(star.values[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn imputation() {
        let s = CentralityScores::new(Measure::Betweenness, vec![0.1f64, 0.2, 0.6]);
        assert_eq!(s.feature_value(Some(CharacterId(1))), 0.2);
        let mean: f64 = (0.1 + 0.2 + 0.6) / 3.0;
        assert!((s.feature_value(None) - mean).abs() < 1e-15);
        assert!((s.feature_value(Some(CharacterId(9))) - mean).abs() < 1e-15);
        assert_eq!(s.ranked()[0].0, 2);
    }

    #[test]
    fn f32_variant() {
        let g: WeightedGraph<f32> = WeightedGraph::from_edges(3, vec![(0, 1, 1.0), (1, 2, 1.0)]);
        let pr = pagerank(&g, 0.85f32, 1e-6, 1000).unwrap();
        assert!((pr.values.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        assert_eq!(betweenness(&g).values[1], 1.0);
    }

    /// Betweenness by explicit path counting: σ_st(v) = σ_sv σ_vt whenever
    /// v lies on a shortest s-t path.
    pub(crate) fn brute_force_betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b && !adj[a].contains(&b) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let bfs = |s: usize| {
            let mut d = vec![usize::MAX; n];
            let mut c = vec![0u64; n];
            d[s] = 0;
            c[s] = 1;
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                for &u in &adj[v] {
                    if d[u] == usize::MAX {
                        d[u] = d[v] + 1;
                        q.push_back(u);
                    }
                    if d[u] == d[v] + 1 {
                        c[u] += c[v];
                    }
                }
            }
            (d, c)
        };
        let all: Vec<(Vec<usize>, Vec<u64>)> = (0..n).map(bfs).collect();
        let mut b = vec![0.0; n];
        for s in 0..n {
            for t in s + 1..n {
                let (ds, cs) = &all[s];
                if ds[t] == usize::MAX {
                    continue;
                }
                for v in 0..n {
                    if v == s || v == t {
                        continue;
                    }
                    let dt = &all[t].0;
                    if ds[v] != usize::MAX && dt[v] != usize::MAX && ds[v] + dt[v] == ds[t] {
                        b[v] += (cs[v] * all[t].1[v]) as f64 / cs[t] as f64;
                    }
                }
            }
        }
        if n > 2 {
            let norm = ((n - 1) * (n - 2)) as f64 / 2.0;
            b.iter_mut().for_each(|x| *x /= norm);
        }
        b
    }

    proptest! {
        #[test]
        fn betweenness_matches_path_counting(
            (n, edges) in (1usize..=20).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..3 * n)))
        ) {
            let g = unit(n, &edges.iter().copied().filter(|(a, b)| a != b).collect::<Vec<_>>());
            let fast = betweenness(&g).values;
            let slow = brute_force_betweenness(n, &edges);
            for v in 0..n {
                prop_assert!((fast[v] - slow[v]).abs() <= 1e-12, "node {}: {} vs {}", v, fast[v], slow[v]);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&fast[v]));
            }
        }

        #[test]
        fn pagerank_sums_to_one_and_relabels(
            (n, edges, perm_seed) in (2usize..15).prop_flat_map(|n| (
                Just(n),
                prop::collection::vec((0..n, 0..n, 1u8..5), 1..3 * n),
                any::<u64>(),
            ))
        ) {
            let edges: Vec<(usize, usize, f64)> = edges.into_iter()
                .filter(|(a, b, _)| a != b)
                .map(|(a, b, w)| (a, b, f64::from(w))).collect();
            let g = WeightedGraph::from_edges(n, edges.clone());
            let pr = pagerank(&g, 0.85, 1e-12, 10_000).unwrap();
            prop_assert!((pr.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(pr.values.iter().all(|&v| v > 0.0));
            // relabel nodes with a permutation
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = perm_seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let h = WeightedGraph::from_edges(n, edges.iter().map(|&(a, b, w)| (perm[a], perm[b], w)));
            let pr2 = pagerank(&h, 0.85, 1e-12, 10_000).unwrap();
            for v in 0..n {
                prop_assert!((pr.values[v] - pr2.values[perm[v]]).abs() < 1e-9);
            }
        }
    }
}
