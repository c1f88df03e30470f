//! Brute-force reference implementations for tests.
//!
//! Nothing here calls into the code paths it checks; each routine uses the
//! textbook algorithm on plain data.

use alloc::vec;
use alloc::vec::Vec;

use crate::graphgen::{DistanceMatrix, Graph};

/// O(n^3) all-pairs hop distances.
pub fn floyd_warshall(g: &Graph) -> DistanceMatrix {
    let n = g.n();
    let inf = u64::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if i != j && g.is_adjacent(i, j) {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    let flat = d
        .into_iter()
        .flatten()
        .map(|x| if x >= inf { DistanceMatrix::UNREACHABLE } else { x as u32 })
        .collect();
    DistanceMatrix::from_raw(n, flat).expect("square matrix")
}

/// Layers of a breadth-first search from `src`: `layers[r]` holds the nodes
/// first reached after `r` hops, ascending.
pub fn bfs_layers(g: &Graph, src: usize) -> Vec<Vec<usize>> {
    let n = g.n();
    let mut seen = vec![false; n];
    seen[src] = true;
    let mut layers = vec![vec![src]];
    loop {
        let mut next = Vec::new();
        for &u in layers.last().unwrap() {
            for v in 0..n {
                if !seen[v] && g.is_adjacent(u, v) {
                    seen[v] = true;
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            return layers;
        }
        next.sort_unstable();
        layers.push(next);
    }
}

/// `(local, far)` scores of node `i` by scanning every node.
pub fn scores_by_scan(g: &Graph, distances: &DistanceMatrix, i: usize, r_star: u32) -> (f64, Option<f64>) {
    let z = g.z();
    let (mut loc_sum, mut loc_n, mut far_sum, mut far_n) = (0.0, 0usize, 0.0, 0usize);
    for j in 0..g.n() {
        if j == i || g.is_adjacent(i, j) {
            loc_sum += z[j];
            loc_n += 1;
        }
        if distances.get(i, j) == Some(r_star) {
            far_sum += z[j];
            far_n += 1;
        }
    }
    (loc_sum / loc_n as f64, (far_n > 0).then(|| far_sum / far_n as f64))
}

/// Mean number of nodes at each finite distance, by double loop.
pub fn shell_counts_brute(dm: &DistanceMatrix) -> Vec<f64> {
    let n = dm.n();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if let Some(r) = dm.get(i, j) {
                let r = r as usize;
                if out.len() <= r {
                    out.resize(r + 1, 0.0);
                }
                out[r] += 1.0;
            }
        }
    }
    out.iter_mut().for_each(|c| *c /= n as f64);
    out
}

/// Shell-corrected attention profile by explicit loops over every `(i, j)`
/// pair of every matrix. Unreachable pairs land one past the diameter.
pub fn attention_profile_brute(matrices: &[Vec<f64>], dm: &DistanceMatrix) -> Vec<f64> {
    let n = dm.n();
    let mut diameter = 0;
    let mut any_unreachable = false;
    for i in 0..n {
        for j in 0..n {
            match dm.get(i, j) {
                Some(r) => diameter = diameter.max(r as usize),
                None => any_unreachable = true,
            }
        }
    }
    let buckets = diameter + 1 + usize::from(any_unreachable);
    let bucket = |i: usize, j: usize| dm.get(i, j).map_or(diameter + 1, |r| r as usize);
    let mut mass = vec![0.0; buckets];
    let mut size = vec![0.0; buckets];
    for i in 0..n {
        for j in 0..n {
            size[bucket(i, j)] += 1.0 / n as f64;
            for a in matrices {
                mass[bucket(i, j)] += a[i * n + j] / (matrices.len() * n) as f64;
            }
        }
    }
    let corrected: Vec<f64> = mass.iter().zip(&size).map(|(m, s)| if *s > 0.0 { m / s } else { 0.0 }).collect();
    let total: f64 = corrected.iter().sum();
    corrected.into_iter().map(|c| c / total).collect()
}

/// Minimum-cost transport between two histograms on hop support with cost
/// `|r - r'|`, solved as a min-cost flow by successive shortest paths.
pub fn w1_lp(p: &[f64], q: &[f64]) -> f64 {
    // Nodes: source 0, supplies 1..=a, demands a+1..=a+b, sink a+b+1.
    let (a, b) = (p.len(), q.len());
    let nodes = a + b + 2;
    let sink = nodes - 1;
    struct Edge {
        to: usize,
        cap: f64,
        cost: f64,
    }
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |edges: &mut Vec<Edge>, u: usize, v: usize, cap: f64, cost: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0.0, cost: -cost });
    };
    let big = 2.0;
    for (r, &m) in p.iter().enumerate() {
        add(&mut edges, 0, 1 + r, m, 0.0);
    }
    for (s, &m) in q.iter().enumerate() {
        add(&mut edges, 1 + a + s, sink, m, 0.0);
    }
    for r in 0..a {
        for s in 0..b {
            add(&mut edges, 1 + r, 1 + a + s, big, (r as f64 - s as f64).abs());
        }
    }
    let eps = 1e-15;
    let mut total_cost = 0.0;
    loop {
        // Bellman-Ford on the residual graph.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[0] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &adj[u] {
                    let edge = &edges[e];
                    if edge.cap > eps && dist[u] + edge.cost < dist[edge.to] - 1e-12 {
                        dist[edge.to] = dist[u] + edge.cost;
                        via[edge.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == f64::INFINITY {
            return total_cost;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != 0 {
            let e = via[v];
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while v != 0 {
            let e = via[v];
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        total_cost += push * dist[sink];
    }
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn finite_diff_grads(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + eps;
            let up = f(&probe);
            probe[k] = x[k] - eps;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `exp(l_j) / sum_k exp(l_k)` evaluated literally.
pub fn softmax_closed_form(logits: &[f64]) -> Vec<f64> {
    let exps: Vec<f64> = logits.iter().map(|&l| libm::exp(l)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub struct Path6Fixture {
    pub graph: Graph,
    pub beta: f64,
    pub r_star: u32,
    pub expected_labels: Vec<Option<u8>>,
}

/// Path 0-1-2-3-4-5 with hand-picked latent values, `beta = 0.5`,
/// `r_star = 3`. Every node has exactly one node three hops away.
pub fn path6_fixture() -> Path6Fixture {
    let z = [2.0, -1.0, 0.5, 3.0, -2.0, 1.0];
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)];
    let graph = Graph::from_parts(1, 0, &edges, vec![0; 6], z.to_vec(), 1, vec![0.0; 6]).expect("valid fixture");

    let loc = [
        (z[0] + z[1]) / 2.0,
        (z[0] + z[1] + z[2]) / 3.0,
        (z[1] + z[2] + z[3]) / 3.0,
        (z[2] + z[3] + z[4]) / 3.0,
        (z[3] + z[4] + z[5]) / 3.0,
        (z[4] + z[5]) / 2.0,
    ];
    let far = [z[3], z[4], z[5], z[0], z[1], z[2]];
    let standardized = |v: [f64; 6]| {
        let mean = v.iter().sum::<f64>() / 6.0;
        let std = libm::sqrt(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 6.0);
        v.map(|x| (x - mean) / std)
    };
    let (lh, fh) = (standardized(loc), standardized(far));
    let beta = 0.5;
    let expected_labels = (0..6).map(|i| Some(u8::from(beta * lh[i] + (1.0 - beta) * fh[i] > 0.0))).collect();
    Path6Fixture { graph, beta, r_star: 3, expected_labels }
}
