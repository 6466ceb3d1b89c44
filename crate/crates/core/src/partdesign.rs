//! Part design: keypoint configurations of each part type are normalized and
//! greedily clustered; each cluster becomes one part detector whose positives
//! are the members closest to the cluster center.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keypoints::{InstanceRecord, InstanceRef, KeypointSet, PartType};
use crate::seed;

pub const CLUSTERS_VERSION: &str = "clusters-v1";

/// Landmark coordinates of one part, centered on their centroid and scaled to unit RMS radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedConfig(Vec<[f64; 2]>);

impl NormalizedConfig {
    pub fn points(&self) -> &[[f64; 2]] {
        &self.0
    }

    /// Center and rescale arbitrary points.
    pub fn from_points(points: &[[f64; 2]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = points.len() as f64;
        let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
        let rms = (points
            .iter()
            .map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        if !(rms > 1e-12) {
            return Err(Error::DegenerateConfig);
        }
        Ok(NormalizedConfig(
            points.iter().map(|p| [(p[0] - cx) / rms, (p[1] - cy) / rms]).collect(),
        ))
    }

    pub fn distance(&self, other: &NormalizedConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn normalize_config(k: &KeypointSet, part: PartType) -> Result<NormalizedConfig> {
    let mut points = Vec::with_capacity(part.landmarks().len());
    for &l in part.landmarks() {
        let kp = k.get(l);
        if !kp.visible {
            return Err(Error::MissingKeypoints(part.name()));
        }
        points.push([kp.x, kp.y]);
    }
    NormalizedConfig::from_points(&points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub id: InstanceRef,
    pub config: NormalizedConfig,
    /// Distance to the center at the moment of admission (0 for the founder).
    pub admission_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartCluster {
    pub part_type: PartType,
    pub index: usize,
    pub center: NormalizedConfig,
    pub members: Vec<ClusterMember>,
    /// Ids of the members closest to the final center, nearest first.
    pub positives: Vec<InstanceRef>,
}

impl PartCluster {
    pub fn member_ids(&self) -> Vec<InstanceRef> {
        self.members.iter().map(|m| m.id).collect()
    }

    /// Final distance of every member to the center.
    pub fn final_distances(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.config.distance(&self.center)).collect()
    }
}

struct Builder {
    sum: Vec<[f64; 2]>,
    center: NormalizedConfig,
    members: Vec<ClusterMember>,
}

impl Builder {
    fn admit(&mut self, member: ClusterMember) {
        for (s, p) in self.sum.iter_mut().zip(member.config.points()) {
            s[0] += p[0];
            s[1] += p[1];
        }
        let n = (self.members.len() + 1) as f64;
        let mean: Vec<[f64; 2]> = self.sum.iter().map(|s| [s[0] / n, s[1] / n]).collect();
        // A mean of opposite configurations can collapse; keep the raw mean then.
        self.center = NormalizedConfig::from_points(&mean).unwrap_or(NormalizedConfig(mean));
        self.members.push(member);
    }
}

/// One greedy pass over the configurations in a seeded random order. Each is
/// admitted to the nearest center closer than `eps`, otherwise it founds a new
/// cluster. Centers track the running mean of their members. Positives are
/// left empty; see [`select_positives`].
pub fn greedy_cluster(
    part: PartType,
    configs: &[(InstanceRef, NormalizedConfig)],
    eps: f64,
    seed: u64,
) -> Result<Vec<PartCluster>> {
    if configs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(eps > 0.0) {
        return Err(Error::ConfigInvalid(format!("cluster eps must be positive, got {eps}")));
    }
    let mut order: Vec<usize> = (0..configs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut builders: Vec<Builder> = Vec::new();
    for idx in order {
        let (id, config) = &configs[idx];
        let nearest = builders
            .iter()
            .enumerate()
            .map(|(j, b)| (j, config.distance(&b.center)))
            .filter(|&(_, d)| d < eps)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((j, d)) => builders[j].admit(ClusterMember {
                id: *id,
                config: config.clone(),
                admission_distance: d,
            }),
            None => builders.push(Builder {
                sum: config.points().to_vec(),
                center: config.clone(),
                members: vec![ClusterMember {
                    id: *id,
                    config: config.clone(),
                    admission_distance: 0.0,
                }],
            }),
        }
    }
    Ok(builders
        .into_iter()
        .enumerate()
        .map(|(index, b)| PartCluster {
            part_type: part,
            index,
            center: b.center,
            members: b.members,
            positives: Vec::new(),
        })
        .collect())
}

/// The `m` members nearest the center, ascending by distance then id.
pub fn select_positives(cluster: &PartCluster, m: usize) -> Vec<InstanceRef> {
    let mut ranked: Vec<(f64, InstanceRef)> = cluster
        .members
        .iter()
        .map(|mb| (mb.config.distance(&cluster.center), mb.id))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(m).map(|(_, id)| id).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub eps: f64,
    pub max_positives: usize,
    /// Clusters with fewer members do not get a detector.
    pub min_positives: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            eps: 1.0,
            max_positives: 100,
            min_positives: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterInventory {
    pub version: String,
    pub eps: f64,
    pub max_positives: usize,
    pub clusters: Vec<PartCluster>,
}

impl ClusterInventory {
    pub fn of_type(&self, part: PartType) -> impl Iterator<Item = &PartCluster> {
        self.clusters.iter().filter(move |c| c.part_type == part)
    }

    pub fn count(&self, part: PartType) -> usize {
        self.of_type(part).count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let inv: ClusterInventory = serde_json::from_slice(&fs::read(path)?)?;
        if inv.version != CLUSTERS_VERSION {
            return Err(Error::VersionMismatch {
                expected: CLUSTERS_VERSION,
                found: inv.version,
            });
        }
        Ok(inv)
    }
}

/// Cluster every part type over the fully visible instances of a training split.
pub fn cluster_parts<'a>(
    instances: impl IntoIterator<Item = (InstanceRef, &'a InstanceRecord)>,
    config: &ClusterConfig,
    seed: u64,
) -> Result<ClusterInventory> {
    let mut per_type: HashMap<PartType, Vec<(InstanceRef, NormalizedConfig)>> = HashMap::new();
    for (id, inst) in instances {
        let Some(k) = &inst.keypoints else { continue };
        for part in PartType::ALL {
            if let Ok(c) = normalize_config(k, part) {
                per_type.entry(part).or_default().push((id, c));
            }
        }
    }
    let mut clusters = Vec::new();
    for part in PartType::ALL {
        let configs = per_type.remove(&part).unwrap_or_default();
        if configs.is_empty() {
            log::warn!("no fully visible {part} configurations");
            continue;
        }
        let mut found = greedy_cluster(part, &configs, config.eps, seed::derive(seed, part.name()))?;
        for c in &mut found {
            c.positives = select_positives(c, config.max_positives);
        }
        log::info!("{part}: {} clusters from {} configurations", found.len(), configs.len());
        clusters.extend(found);
    }
    Ok(ClusterInventory {
        version: CLUSTERS_VERSION.to_string(),
        eps: config.eps,
        max_positives: config.max_positives,
        clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoints::{Keypoint, Landmark};
    use proptest::prelude::*;
    use rand::Rng;

    fn torso(points: [[f64; 2]; 4]) -> KeypointSet {
        let mut k = KeypointSet::default();
        for (l, p) in PartType::Torso.landmarks().iter().zip(points) {
            k.set(*l, Keypoint::visible(p[0], p[1]));
        }
        k
    }

    fn rid(i: u32) -> InstanceRef {
        InstanceRef::new(i, 0)
    }

    #[test]
    fn unit_square_normalizes_to_unit_radii() {
        let c = normalize_config(
            &torso([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]]),
            PartType::Torso,
        )
        .unwrap();
        for p in c.points() {
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
        }
        let s = 1.0 / 2f64.sqrt();
        assert!((c.points()[0][0] + s).abs() < 1e-12 && (c.points()[3][1] - s).abs() < 1e-12);
        let again = NormalizedConfig::from_points(c.points()).unwrap();
        for (a, b) in again.points().iter().zip(c.points()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_and_missing() {
        let k = torso([[3.0, 4.0]; 4]);
        assert!(matches!(
            normalize_config(&k, PartType::Torso),
            Err(Error::DegenerateConfig)
        ));
        let mut k = torso([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        k.set(Landmark::LeftHip, Keypoint::hidden());
        assert!(matches!(
            normalize_config(&k, PartType::Torso),
            Err(Error::MissingKeypoints("torso"))
        ));
    }

    fn jitter(base: &[[f64; 2]], amount: f64, rng: &mut impl Rng) -> NormalizedConfig {
        let pts: Vec<[f64; 2]> = base
            .iter()
            .map(|p| {
                [
                    p[0] + rng.gen_range(-amount..amount),
                    p[1] + rng.gen_range(-amount..amount),
                ]
            })
            .collect();
        NormalizedConfig::from_points(&pts).unwrap()
    }

    #[test]
    fn identical_configs_form_one_cluster() {
        let c = NormalizedConfig::from_points(&[[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [1.0, 3.0]]).unwrap();
        let configs: Vec<_> = (0..20).map(|i| (rid(i), c.clone())).collect();
        let out = greedy_cluster(PartType::Torso, &configs, 1.0, 7).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].members.len(), 20);
    }

    #[test]
    fn two_separated_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = [[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [1.0, 3.0]];
        let b = [[0.0, 0.0], [3.0, 0.0], [0.0, 1.0], [3.0, 1.0]];
        let mut configs = Vec::new();
        for i in 0..40u32 {
            let base = if i % 2 == 0 { &a } else { &b };
            configs.push((rid(i), jitter(base, 0.02, &mut rng)));
        }
        // Brute-force check that the construction has the intended geometry.
        for (i, x) in configs.iter().enumerate() {
            for (j, y) in configs.iter().enumerate() {
                let d = x.1.distance(&y.1);
                if i % 2 == j % 2 {
                    assert!(d < 0.5, "within-group {d}");
                } else {
                    assert!(d > 1.0, "cross-group {d}");
                }
            }
        }
        let out = greedy_cluster(PartType::Torso, &configs, 1.0, 3).unwrap();
        assert_eq!(out.len(), 2);
        for c in &out {
            let parity: Vec<u32> = c.members.iter().map(|m| m.id.image % 2).collect();
            assert!(parity.iter().all(|&p| p == parity[0]));
        }
    }

    #[test]
    fn clustering_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [1.0, 2.0]];
        let configs: Vec<_> = (0..60).map(|i| (rid(i), jitter(&base, 0.6, &mut rng))).collect();
        let a = greedy_cluster(PartType::Torso, &configs, 0.8, 42).unwrap();
        let b = greedy_cluster(PartType::Torso, &configs, 0.8, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            greedy_cluster(PartType::Head, &[], 1.0, 0),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn positive_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [1.0, 2.0]];
        let configs: Vec<_> = (0..50).map(|i| (rid(i), jitter(&base, 0.1, &mut rng))).collect();
        let out = greedy_cluster(PartType::Torso, &configs, 10.0, 1).unwrap();
        assert_eq!(out.len(), 1);
        let c = &out[0];
        let mut brute: Vec<(f64, InstanceRef)> =
            configs.iter().map(|(id, cfg)| (cfg.distance(&c.center), *id)).collect();
        brute.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<InstanceRef> = brute.iter().take(10).map(|x| x.1).collect();
        assert_eq!(select_positives(c, 10), want);
        assert_eq!(select_positives(c, 1), vec![want[0]]);
        assert_eq!(select_positives(c, 100).len(), 50);
    }

    #[test]
    fn positive_ties_break_by_id() {
        let cfg = NormalizedConfig::from_points(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let configs: Vec<_> = [5u32, 2, 9].iter().map(|&i| (rid(i), cfg.clone())).collect();
        let out = greedy_cluster(PartType::Torso, &configs, 1.0, 0).unwrap();
        assert_eq!(select_positives(&out[0], 1), vec![rid(2)]);
        assert_eq!(select_positives(&out[0], 100), vec![rid(2), rid(5), rid(9)]);
    }

    #[test]
    fn inventory_roundtrip_and_version() {
        let cfg = NormalizedConfig::from_points(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let mut clusters = greedy_cluster(PartType::Head, &[(rid(1), cfg)], 1.0, 0).unwrap();
        clusters[0].positives = select_positives(&clusters[0], 100);
        let inv = ClusterInventory {
            version: CLUSTERS_VERSION.into(),
            eps: 1.0,
            max_positives: 100,
            clusters,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clusters.json");
        inv.save(&p).unwrap();
        assert_eq!(ClusterInventory::load(&p).unwrap(), inv);
        let mut bad = inv.clone();
        bad.version = "clusters-v0".into();
        bad.save(&p).unwrap();
        assert!(matches!(ClusterInventory::load(&p), Err(Error::VersionMismatch { .. })));
        assert!(matches!(
            ClusterInventory::load(&dir.path().join("nope.json")),
            Err(Error::MissingArtifact(_))
        ));
    }

    fn arb_points() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec(prop::array::uniform2(-50.0f64..50.0), 4)
    }

    proptest! {
        #[test]
        fn similarity_invariance(pts in arb_points(), alpha in 0.1f64..10.0, cx in -100.0f64..100.0, cy in -100.0f64..100.0) {
            let Ok(a) = NormalizedConfig::from_points(&pts) else { return Ok(()); };
            prop_assume!(pts.iter().any(|p| (p[0] - pts[0][0]).abs() > 1e-3 || (p[1] - pts[0][1]).abs() > 1e-3));
            let moved: Vec<[f64; 2]> = pts.iter().map(|p| [alpha * p[0] + cx, alpha * p[1] + cy]).collect();
            let b = NormalizedConfig::from_points(&moved).unwrap();
            for (u, v) in a.points().iter().zip(b.points()) {
                prop_assert!((u[0] - v[0]).abs() < 1e-9 && (u[1] - v[1]).abs() < 1e-9);
            }
            let n = a.points().len() as f64;
            let (mx, my) = a.points().iter().fold((0.0, 0.0), |s, p| (s.0 + p[0], s.1 + p[1]));
            prop_assert!((mx / n).abs() < 1e-9 && (my / n).abs() < 1e-9);
            let rms = (a.points().iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / n).sqrt();
            prop_assert!((rms - 1.0).abs() < 1e-9);
        }

        #[test]
        fn clustering_laws(sets in prop::collection::vec(arb_points(), 1..40), eps in 0.05f64..3.0, seed in any::<u64>()) {
            let configs: Vec<_> = sets
                .iter()
                .enumerate()
                .filter_map(|(i, p)| NormalizedConfig::from_points(p).ok().map(|c| (rid(i as u32), c)))
                .collect();
            prop_assume!(!configs.is_empty());
            let out = greedy_cluster(PartType::Torso, &configs, eps, seed).unwrap();
            prop_assert!(!out.is_empty() && out.len() <= configs.len());
            let total: usize = out.iter().map(|c| c.members.len()).sum();
            prop_assert_eq!(total, configs.len());
            for c in &out {
                for m in &c.members {
                    prop_assert!(m.admission_distance < eps);
                }
            }
            let one = greedy_cluster(PartType::Torso, &configs, 1e9, seed).unwrap();
            prop_assert_eq!(one.len(), 1);
            let all = greedy_cluster(PartType::Torso, &configs, 1e-12, seed).unwrap();
            let unique = {
                let mut u: Vec<&NormalizedConfig> = Vec::new();
                for (_, c) in &configs {
                    if !u.iter().any(|x| x.distance(c) < 1e-12) {
                        u.push(c);
                    }
                }
                u.len()
            };
            prop_assert_eq!(all.len(), unique);
        }
    }
}
