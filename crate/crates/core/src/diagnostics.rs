//! Distance-resolved mismatch between task dependence and model attention.
//!
//! Both sides are probability vectors over hop distance. The task side puts
//! `beta` of its mass on the closed 1-hop neighborhood (split between `r = 0`
//! and `r = 1` in proportion to mean shell sizes) and the rest on `r_star`.
//! The model side pools attention mass per hop distance over layers, heads
//! and query nodes, then divides by the mean shell size so that it reflects
//! per-node attention rather than shell population.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graphgen::{mean_shell_sizes, DistanceMatrix};
use crate::model::AttentionRecord;
use crate::task::TaskSpec;

/// Default half-width of the ALIGNED band, in hops.
pub const DEFAULT_REGIME_TOL: f64 = 0.1;

/// Probability mass over hop distances `0..=r_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile {
    mass: Vec<f64>,
}

impl DistanceProfile {
    /// Accepts a vector that is already a probability distribution.
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() || mass.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return Err(Error::InvalidParams("profile mass must be finite and non-negative".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("profile mass sums to {total}")));
        }
        Ok(Self { mass })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParams("profile weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParams("profile weights sum to zero".into()));
        }
        Ok(Self { mass: weights.into_iter().map(|w| w / total).collect() })
    }

    /// Unit mass at `r`.
    pub fn point(r: usize) -> Self {
        let mut mass = vec![0.0; r + 1];
        mass[r] = 1.0;
        Self { mass }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn r_max(&self) -> usize {
        self.mass.len() - 1
    }

    /// Mass at `r`, zero beyond `r_max`.
    pub fn at(&self, r: usize) -> f64 {
        self.mass.get(r).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Regime {
    /// Task depends on larger distances than the model reaches.
    UnderReaching,
    /// Model spreads attention further than the task needs.
    OverGlobalizing,
    Aligned,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::UnderReaching => "UNDER_REACHING",
            Regime::OverGlobalizing => "OVER_GLOBALIZING",
            Regime::Aligned => "ALIGNED",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Regime::UnderReaching, Regime::OverGlobalizing, Regime::Aligned]
            .into_iter()
            .find(|r| r.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchReport {
    pub mu_task: f64,
    pub mu_a: f64,
    /// `mu_task - mu_a`
    pub gap: f64,
    pub w1: f64,
    pub regime: Regime,
}

impl MismatchReport {
    pub fn compare(task: &DistanceProfile, attention: &DistanceProfile, tol: f64) -> Self {
        let mu_task = mean_distance(task);
        let mu_a = mean_distance(attention);
        let gap = mu_task - mu_a;
        Self { mu_task, mu_a, gap, w1: wasserstein1(task, attention), regime: classify_regime(gap, tol) }
    }
}

/// Task-side profile: `beta * w_loc + (1 - beta) * delta_{r_star}` on
/// `0..=max(r_star, diameter)`.
pub fn task_profile(dm: &DistanceMatrix, spec: &TaskSpec) -> DistanceProfile {
    let shells = mean_shell_sizes(dm);
    let self_size = shells[0];
    let neighbor_size = shells.get(1).copied().unwrap_or(0.0);
    let local_total = self_size + neighbor_size;
    let r_max = (spec.r_star.max(dm.diameter())) as usize;
    let mut mass = vec![0.0; r_max + 1];
    mass[0] = spec.beta * self_size / local_total;
    mass[1] = spec.beta * neighbor_size / local_total;
    mass[spec.r_star as usize] += 1.0 - spec.beta;
    DistanceProfile { mass }
}

/// Number of distance buckets used for attention: `0..=diameter`, plus one
/// bucket at `diameter + 1` when some pair is unreachable.
fn attention_buckets(dm: &DistanceMatrix) -> usize {
    dm.diameter() as usize + 1 + usize::from(dm.has_unreachable())
}

/// Mean per-node count in each attention bucket. The unreachable bucket
/// counts unreachable nodes.
pub fn bucket_sizes(dm: &DistanceMatrix) -> Vec<f64> {
    let mut sizes = mean_shell_sizes(dm);
    if dm.has_unreachable() {
        sizes.push(dm.mean_unreachable());
    }
    sizes
}

/// Attention mass per hop distance, averaged over layers, heads and query
/// nodes. Each layer/head contributes a distribution summing to one.
pub fn pooled_attention_mass(rec: &AttentionRecord, dm: &DistanceMatrix) -> Result<Vec<f64>> {
    let mats: Vec<&[f64]> = rec.matrices().iter().map(Vec::as_slice).collect();
    pooled_mass_of(&mats, dm, rec.n())
}

fn pooled_mass_of(mats: &[&[f64]], dm: &DistanceMatrix, n: usize) -> Result<Vec<f64>> {
    if n != dm.n() {
        return Err(Error::ShapeMismatch(format!("attention over {n} nodes, distances over {}", dm.n())));
    }
    let far_bucket = dm.diameter() as usize + 1;
    let mut mass = vec![0.0; attention_buckets(dm)];
    for a in mats {
        for i in 0..n {
            let row = &a[i * n..(i + 1) * n];
            for (&r, &w) in dm.row(i).iter().zip(row) {
                let bucket = if r == DistanceMatrix::UNREACHABLE { far_bucket } else { r as usize };
                mass[bucket] += w;
            }
        }
    }
    let denom = (mats.len() * n) as f64;
    mass.iter_mut().for_each(|m| *m /= denom);
    Ok(mass)
}

/// Divides pooled mass by bucket size and renormalizes.
pub fn shell_corrected(raw: &[f64], dm: &DistanceMatrix) -> Result<DistanceProfile> {
    let sizes = bucket_sizes(dm);
    if raw.len() != sizes.len() {
        return Err(Error::ShapeMismatch("raw mass does not match distance buckets".into()));
    }
    let corrected = raw
        .iter()
        .zip(&sizes)
        .map(|(&m, &s)| if s > 0.0 { m / s } else { 0.0 })
        .collect();
    DistanceProfile::from_weights(corrected)
}

/// Shell-size-corrected attention profile pooled over all layers and heads.
pub fn attention_profile(rec: &AttentionRecord, dm: &DistanceMatrix) -> Result<DistanceProfile> {
    shell_corrected(&pooled_attention_mass(rec, dm)?, dm)
}

/// One shell-corrected profile per layer, pooled over that layer's heads.
pub fn attention_profiles_per_layer(rec: &AttentionRecord, dm: &DistanceMatrix) -> Result<Vec<DistanceProfile>> {
    (0..rec.n_layers())
        .map(|l| {
            let mats: Vec<&[f64]> = (0..rec.n_heads()).map(|h| rec.matrix(l, h)).collect();
            shell_corrected(&pooled_mass_of(&mats, dm, rec.n())?, dm)
        })
        .collect()
}

/// Variant that corrects by each query node's own shell sizes before pooling.
pub fn attention_profile_per_node(rec: &AttentionRecord, dm: &DistanceMatrix) -> Result<DistanceProfile> {
    let n = rec.n();
    if n != dm.n() {
        return Err(Error::ShapeMismatch("attention and distances disagree on n".into()));
    }
    let buckets = attention_buckets(dm);
    let far_bucket = dm.diameter() as usize + 1;
    let bucket_of = |r: u32| if r == DistanceMatrix::UNREACHABLE { far_bucket } else { r as usize };
    let mut total = vec![0.0; buckets];
    let mut counts = vec![0usize; buckets];
    let mut local = vec![0.0; buckets];
    for i in 0..n {
        counts.iter_mut().for_each(|c| *c = 0);
        for &r in dm.row(i) {
            counts[bucket_of(r)] += 1;
        }
        for a in rec.matrices() {
            local.iter_mut().for_each(|m| *m = 0.0);
            for (&r, &w) in dm.row(i).iter().zip(&a[i * n..(i + 1) * n]) {
                local[bucket_of(r)] += w;
            }
            for b in 0..buckets {
                if counts[b] > 0 {
                    total[b] += local[b] / counts[b] as f64;
                }
            }
        }
    }
    DistanceProfile::from_weights(total)
}

/// Fraction of attention each node keeps on itself, averaged over layers,
/// heads and nodes.
pub fn self_attention_mass(rec: &AttentionRecord) -> f64 {
    let n = rec.n();
    let total: f64 = rec.matrices().iter().map(|a| (0..n).map(|i| a[i * n + i]).sum::<f64>()).sum();
    total / (rec.matrices().len() * n) as f64
}

/// `sum_r r * p(r)`
pub fn mean_distance(p: &DistanceProfile) -> f64 {
    p.mass.iter().enumerate().map(|(r, &m)| r as f64 * m).sum()
}

/// Earth mover's distance with ground metric `|r - r'|`, via the CDF
/// difference on the common support.
pub fn wasserstein1(p: &DistanceProfile, q: &DistanceProfile) -> f64 {
    let len = p.mass.len().max(q.mass.len());
    let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
    for r in 0..len.saturating_sub(1) {
        cp += p.at(r);
        cq += q.at(r);
        total += (cp - cq).abs();
    }
    total
}

pub fn classify_regime(gap: f64, tol: f64) -> Regime {
    if gap > tol {
        Regime::UnderReaching
    } else if gap < -tol {
        Regime::OverGlobalizing
    } else {
        Regime::Aligned
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{all_pairs_spd, sample_csbm, CsbmParams, Graph};
    use crate::oracles;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_parts(1, 0, edges, vec![0; n], vec![0.0; n], 1, vec![0.0; n]).unwrap()
    }

    fn random_record(n: usize, layers: usize, heads: usize, seed: u64) -> AttentionRecord {
        let mut rng = rng_from_seed(seed);
        let mats = (0..layers * heads)
            .map(|_| {
                let mut m: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
                for row in m.chunks_mut(n) {
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|x| *x /= s);
                }
                m
            })
            .collect();
        AttentionRecord::new(n, layers, heads, mats).unwrap()
    }

    fn random_profile(len: usize, rng: &mut crate::rng::Rng) -> DistanceProfile {
        DistanceProfile::from_weights((0..len).map(|_| rng.random::<f64>() + 1e-3).collect()).unwrap()
    }

    fn sampled(seed: u64) -> DistanceMatrix {
        all_pairs_spd(&sample_csbm(&CsbmParams { n_nodes: 40, p_in: 0.12, p_out: 0.03, seed, ..Default::default() }).unwrap())
    }

    #[test]
    fn task_profile_cases() {
        let dm = sampled(0);
        let far = task_profile(&dm, &TaskSpec { beta: 0.0, r_star: 3, ..Default::default() });
        assert_eq!(far.at(3), 1.0);
        assert_eq!(mean_distance(&far), 3.0);

        // K_4: every node has degree 3.
        let k4 = all_pairs_spd(&graph_from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]));
        let local = task_profile(&k4, &TaskSpec { beta: 1.0, r_star: 3, ..Default::default() });
        assert_eq!(local.mass(), &[0.25, 0.75, 0.0, 0.0]);

        let mixed = task_profile(&dm, &TaskSpec { beta: 0.5, r_star: 3, ..Default::default() });
        let sizes = oracles::shell_counts_brute(&dm);
        let deg = sizes[1];
        let expect0 = 0.5 * 1.0 / (1.0 + deg);
        let expect1 = 0.5 * deg / (1.0 + deg);
        assert!((mixed.at(0) - expect0).abs() < 1e-12);
        assert!((mixed.at(1) - expect1).abs() < 1e-12);
        assert!((mixed.at(3) - 0.5).abs() < 1e-12);
        assert!((mixed.mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn attention_profile_cases() {
        let dm = sampled(1);
        let n = dm.n();
        let mut eye = vec![0.0; n * n];
        (0..n).for_each(|i| eye[i * n + i] = 1.0);
        let rec = AttentionRecord::new(n, 1, 1, vec![eye]).unwrap();
        let p = attention_profile(&rec, &dm).unwrap();
        assert_eq!(p.at(0), 1.0);
        assert_eq!(mean_distance(&p), 0.0);

        let uniform = AttentionRecord::new(n, 2, 1, vec![vec![1.0 / n as f64; n * n]; 2]).unwrap();
        let p = attention_profile(&uniform, &dm).unwrap();
        let expected = 1.0 / p.mass().len() as f64;
        for &m in p.mass() {
            assert!((m - expected).abs() < 1e-12, "{:?}", p.mass());
        }
    }

    #[test]
    fn attention_profile_matches_brute_force() {
        for seed in 0..5 {
            let dm = sampled(seed);
            let rec = random_record(dm.n(), 2, 2, seed + 100);
            let fast = attention_profile(&rec, &dm).unwrap();
            let slow = oracles::attention_profile_brute(rec.matrices(), &dm);
            assert_eq!(fast.mass().len(), slow.len());
            for (a, b) in fast.mass().iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unreachable_attention_goes_to_last_bucket() {
        let dm = all_pairs_spd(&graph_from_edges(4, &[(0, 1), (2, 3)]));
        let m = vec![0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0];
        let rec = AttentionRecord::new(4, 1, 1, vec![m]).unwrap();
        let p = attention_profile(&rec, &dm).unwrap();
        assert_eq!(p.mass(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn pooling_is_linear() {
        let dm = sampled(2);
        let n = dm.n();
        let a = random_record(n, 2, 2, 7);
        let b = random_record(n, 2, 2, 8);
        let t = 0.3;
        let mixed: Vec<Vec<f64>> = a
            .matrices()
            .iter()
            .zip(b.matrices())
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| t * u + (1.0 - t) * v).collect())
            .collect();
        let c = AttentionRecord::new(n, 2, 2, mixed).unwrap();
        let (ma, mb, mc) = (
            pooled_attention_mass(&a, &dm).unwrap(),
            pooled_attention_mass(&b, &dm).unwrap(),
            pooled_attention_mass(&c, &dm).unwrap(),
        );
        for r in 0..mc.len() {
            assert!((mc[r] - (t * ma[r] + (1.0 - t) * mb[r])).abs() < 1e-12);
        }
    }

    #[test]
    fn per_layer_and_per_node_variants_are_profiles() {
        let dm = sampled(3);
        let rec = random_record(dm.n(), 2, 2, 9);
        let layers = attention_profiles_per_layer(&rec, &dm).unwrap();
        assert_eq!(layers.len(), 2);
        let node = attention_profile_per_node(&rec, &dm).unwrap();
        for p in layers.iter().chain([&node]) {
            assert!((p.mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let uniform = AttentionRecord::new(dm.n(), 1, 1, vec![vec![1.0 / dm.n() as f64; dm.n() * dm.n()]]).unwrap();
        let s = self_attention_mass(&uniform);
        assert!((s - 1.0 / dm.n() as f64).abs() < 1e-15);
    }

    #[test]
    fn mean_distance_cases() {
        assert_eq!(mean_distance(&DistanceProfile::point(3)), 3.0);
        let u = DistanceProfile::from_weights(vec![1.0, 1.0, 1.0]).unwrap();
        assert!((mean_distance(&u) - 1.0).abs() < 1e-15);
        let mut rng = rng_from_seed(5);
        for _ in 0..20 {
            let p = random_profile(6, &mut rng);
            let direct: f64 = (0..6).map(|r| r as f64 * p.mass()[r]).rev().sum();
            assert!((mean_distance(&p) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn wasserstein_cases() {
        let p = DistanceProfile::from_weights(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(wasserstein1(&p, &p), 0.0);
        assert_eq!(wasserstein1(&DistanceProfile::point(0), &DistanceProfile::point(3)), 3.0);
        let mut rng = rng_from_seed(11);
        for _ in 0..100 {
            let (lp, lq) = (rng.random_range(1..=8), rng.random_range(1..=8));
            let p = random_profile(lp, &mut rng);
            let q = random_profile(lq, &mut rng);
            let lp_value = oracles::w1_lp(p.mass(), q.mass());
            assert!((wasserstein1(&p, &q) - lp_value).abs() < 1e-9);
        }
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(0.8, 0.1), Regime::UnderReaching);
        assert_eq!(classify_regime(-0.8, 0.1), Regime::OverGlobalizing);
        assert_eq!(classify_regime(0.0, 0.1), Regime::Aligned);
        assert_eq!(classify_regime(0.1, 0.1), Regime::Aligned);
        for r in [Regime::UnderReaching, Regime::OverGlobalizing, Regime::Aligned] {
            assert_eq!(Regime::from_name(r.name()), Some(r));
        }
        let report = MismatchReport::compare(&DistanceProfile::point(3), &DistanceProfile::point(1), 0.1);
        assert_eq!((report.gap, report.w1, report.regime), (2.0, 2.0, Regime::UnderReaching));
    }

    #[test]
    fn profile_constructors_validate() {
        assert!(DistanceProfile::new(vec![0.5, 0.4]).is_err());
        assert!(DistanceProfile::new(vec![1.2, -0.2]).is_err());
        assert!(DistanceProfile::from_weights(vec![0.0, 0.0]).is_err());
        assert!(DistanceProfile::new(vec![0.25, 0.75]).is_ok());
    }

    mod props {
        use super::*;
        use proptest::collection::vec as pvec;
        use proptest::prelude::*;

        fn profile() -> impl Strategy<Value = DistanceProfile> {
            pvec(0.0f64..1.0, 1..9).prop_filter_map("zero mass", |w| DistanceProfile::from_weights(w).ok())
        }

        proptest! {
            #[test]
            fn w1_is_a_metric(p in profile(), q in profile(), s in profile()) {
                let pq = wasserstein1(&p, &q);
                prop_assert!(pq >= 0.0);
                prop_assert!((pq - wasserstein1(&q, &p)).abs() < 1e-12);
                prop_assert!(pq <= wasserstein1(&p, &s) + wasserstein1(&s, &q) + 1e-12);
                prop_assert!(wasserstein1(&p, &p) == 0.0);
            }

            #[test]
            fn point_masses(r in 0usize..20, t in 0usize..20) {
                prop_assert_eq!(mean_distance(&DistanceProfile::point(r)), r as f64);
                let w = wasserstein1(&DistanceProfile::point(r), &DistanceProfile::point(t));
                prop_assert_eq!(w, (r as f64 - t as f64).abs());
            }
        }
    }
}
