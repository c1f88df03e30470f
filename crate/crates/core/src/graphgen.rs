//! CSBM graph sampling and hop-distance geometry.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Generative knobs of a contextual stochastic block model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct CsbmParams {
    pub n_nodes: usize,
    pub n_communities: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Community signal amplitude `m` in `z_j = m * sign(c_j) + noise`.
    pub signal_strength: f64,
    pub feature_dim: usize,
    pub feature_noise_sigma: f64,
    pub seed: u64,
}

impl Default for CsbmParams {
    fn default() -> Self {
        Self {
            n_nodes: 300,
            n_communities: 2,
            p_in: 0.08,
            p_out: 0.02,
            signal_strength: 1.0,
            feature_dim: 16,
            feature_noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl CsbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::EmptyGraph);
        }
        let bad = |msg: &str| Err(Error::InvalidParams(msg.into()));
        if self.n_communities == 0 {
            return bad("n_communities must be positive");
        }
        if self.n_nodes < self.n_communities {
            return bad("n_nodes must be at least n_communities");
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return bad("edge probabilities must lie in [0, 1]");
        }
        if self.p_out > self.p_in {
            return bad("p_out must not exceed p_in");
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return bad("signal_strength must be finite and non-negative");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if !(self.feature_noise_sigma > 0.0 && self.feature_noise_sigma.is_finite()) {
            return bad("feature_noise_sigma must be finite and positive");
        }
        Ok(())
    }
}

/// One sampled graph instance.
///
/// Adjacency is stored as sorted neighbor lists; the relation is symmetric
/// and has no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_communities: usize,
    seed: u64,
    neighbors: Vec<Vec<usize>>,
    community: Vec<usize>,
    z: Vec<f64>,
    feature_dim: usize,
    features: Vec<f64>,
}

impl Graph {
    /// Builds a graph from raw parts, checking every structural invariant.
    ///
    /// `edges` may be in any order; duplicates are rejected.
    pub fn from_parts(
        n_communities: usize,
        seed: u64,
        edges: &[(usize, usize)],
        community: Vec<usize>,
        z: Vec<f64>,
        feature_dim: usize,
        features: Vec<f64>,
    ) -> Result<Self> {
        let n = community.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if z.len() != n || features.len() != n * feature_dim {
            return Err(Error::ShapeMismatch(format!(
                "{n} nodes but {} latent values and {} feature entries (dim {feature_dim})",
                z.len(),
                features.len()
            )));
        }
        if n_communities == 0 || community.iter().any(|&c| c >= n_communities) {
            return Err(Error::InvalidParams("community id out of range".into()));
        }
        if z.iter().chain(features.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite node value".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParams(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidParams(format!("self-loop at node {a}")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParams("duplicate edge".into()));
            }
        }
        Ok(Self {
            n_communities,
            seed,
            neighbors,
            community,
            z,
            feature_dim,
            features,
        })
    }

    pub fn n(&self) -> usize {
        self.community.len()
    }

    pub fn n_communities(&self) -> usize {
        self.n_communities
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn community(&self) -> &[usize] {
        &self.community
    }

    /// Latent per-node signal.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Row-major `n x feature_dim` feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Same graph with the latent signal replaced; features are kept.
    pub fn with_z(&self, z: Vec<f64>) -> Result<Self> {
        if z.len() != self.n() {
            return Err(Error::ShapeMismatch(format!("{} latent values for {} nodes", z.len(), self.n())));
        }
        Ok(Self { z, ..self.clone() })
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::ShapeMismatch("permutation length".into()));
        }
        let mut community = vec![0; n];
        let mut z = vec![0.0; n];
        let mut features = vec![0.0; self.features.len()];
        for (old, &new) in perm.iter().enumerate() {
            community[new] = self.community[old];
            z[new] = self.z[old];
            features[new * self.feature_dim..(new + 1) * self.feature_dim]
                .copy_from_slice(self.feature_row(old));
        }
        let edges: Vec<_> = self.edges().map(|(a, b)| (perm[a], perm[b])).collect();
        Self::from_parts(self.n_communities, self.seed, &edges, community, z, self.feature_dim, features)
    }
}

/// Community sign: `+1` for community 0, `-1` for community 1, evenly
/// spaced in `[-1, 1]` for more communities.
pub fn community_sign(c: usize, n_communities: usize) -> f64 {
    if n_communities <= 1 {
        1.0
    } else {
        1.0 - 2.0 * c as f64 / (n_communities - 1) as f64
    }
}

/// Samples one CSBM instance. Draw order: community shuffle, edges
/// (upper triangle, row-major), latent noise, feature noise.
pub fn sample_csbm(params: &CsbmParams) -> Result<Graph> {
    params.validate()?;
    let n = params.n_nodes;
    let k = params.n_communities;
    let mut rng = rng_from_seed(params.seed);

    let mut community: Vec<usize> = (0..n).map(|i| i % k).collect();
    community.shuffle(&mut rng);

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if community[i] == community[j] { params.p_in } else { params.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let z: Vec<f64> = community
        .iter()
        .map(|&c| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            params.signal_strength * community_sign(c, k) + eps
        })
        .collect();

    let dim = params.feature_dim;
    let direction = 1.0 / libm::sqrt(dim as f64);
    let mut features = Vec::with_capacity(n * dim);
    for &zj in &z {
        for _ in 0..dim {
            let eta: f64 = StandardNormal.sample(&mut rng);
            features.push(zj * direction + params.feature_noise_sigma * eta);
        }
    }

    Graph::from_parts(k, params.seed, &edges, community, z, dim, features)
}

/// All-pairs hop distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<u32>,
    diameter: u32,
}

impl DistanceMatrix {
    pub const UNREACHABLE: u32 = u32::MAX;

    /// Wraps a raw row-major matrix, computing the diameter.
    pub fn from_raw(n: usize, d: Vec<u32>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::ShapeMismatch(format!("{} entries for n = {n}", d.len())));
        }
        let diameter = d.iter().copied().filter(|&x| x != Self::UNREACHABLE).max().unwrap_or(0);
        Ok(Self { n, d, diameter })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Largest finite distance.
    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u32> {
        match self.d[i * self.n + j] {
            Self::UNREACHABLE => None,
            r => Some(r),
        }
    }

    /// Raw entry, `UNREACHABLE` included.
    pub fn raw(&self, i: usize, j: usize) -> u32 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    pub fn has_unreachable(&self) -> bool {
        self.d.contains(&Self::UNREACHABLE)
    }

    /// Distance used by the attention bias: finite hops, or `diameter + 1`
    /// for unreachable pairs.
    pub fn surrogate(&self, i: usize, j: usize) -> u32 {
        match self.d[i * self.n + j] {
            Self::UNREACHABLE => self.diameter + 1,
            r => r,
        }
    }

    /// Row-major matrix of surrogate distances as reals.
    pub fn surrogate_matrix(&self) -> Vec<f64> {
        let far = (self.diameter + 1) as f64;
        self.d
            .iter()
            .map(|&r| if r == Self::UNREACHABLE { far } else { r as f64 })
            .collect()
    }

    /// Mean number of unreachable nodes per node.
    pub fn mean_unreachable(&self) -> f64 {
        self.d.iter().filter(|&&r| r == Self::UNREACHABLE).count() as f64 / self.n as f64
    }
}

/// Breadth-first search from every node.
pub fn all_pairs_spd(g: &Graph) -> DistanceMatrix {
    let n = g.n();
    let mut d = vec![DistanceMatrix::UNREACHABLE; n * n];
    let mut queue = Vec::with_capacity(n);
    for src in 0..n {
        let row = &mut d[src * n..(src + 1) * n];
        row[src] = 0;
        queue.clear();
        queue.push(src);
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            let next = row[u] + 1;
            for &v in g.neighbors(u) {
                if row[v] == DistanceMatrix::UNREACHABLE {
                    row[v] = next;
                    queue.push(v);
                }
            }
        }
    }
    let diameter = d.iter().copied().filter(|&x| x != DistanceMatrix::UNREACHABLE).max().unwrap_or(0);
    DistanceMatrix { n, d, diameter }
}

/// Nodes at exactly `r` hops from `i`, ascending.
pub fn shell(dm: &DistanceMatrix, i: usize, r: u32) -> Vec<usize> {
    dm.row(i)
        .iter()
        .enumerate()
        .filter(|&(_, &d)| d == r)
        .map(|(j, _)| j)
        .collect()
}

/// Mean shell size per hop distance `0..=diameter`. Entry 0 is exactly 1.
pub fn mean_shell_sizes(dm: &DistanceMatrix) -> Vec<f64> {
    let mut counts = vec![0usize; dm.diameter() as usize + 1];
    for &r in &dm.d {
        if r != DistanceMatrix::UNREACHABLE {
            counts[r as usize] += 1;
        }
    }
    let n = dm.n() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}
