//! Traffic profiling and online classification.
//!
//! Offline: standard-score normalization of 4-feature samples
//! (CQI, MCS, bitrate, BLER), density-based clustering, and per-cluster
//! centroid extraction. Online: nearest-centroid assignment of incoming
//! samples against the trained model. All functions are pure; the model is
//! an immutable value.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FEATURE_DIM: usize = 4;

/// One training or inference point, extraction order fixed as
/// (CQI, MCS, bitrate, BLER).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub cqi: f64,
    pub mcs: f64,
    pub bitrate_bps: f64,
    pub bler_pct: f64,
}

impl FeatureVector {
    pub fn new(cqi: f64, mcs: f64, bitrate_bps: f64, bler_pct: f64) -> Self {
        Self {
            cqi,
            mcs,
            bitrate_bps,
            bler_pct,
        }
    }

    pub fn to_array(self) -> [f64; FEATURE_DIM] {
        [self.cqi, self.mcs, self.bitrate_bps, self.bler_pct]
    }

    pub fn from_array(a: [f64; FEATURE_DIM]) -> Self {
        Self {
            cqi: a[0],
            mcs: a[1],
            bitrate_bps: a[2],
            bler_pct: a[3],
        }
    }
}

impl From<&crate::ran_sim::AnalyticsSample> for FeatureVector {
    fn from(s: &crate::ran_sim::AnalyticsSample) -> Self {
        Self {
            cqi: s.dl_cqi,
            mcs: s.dl_mcs,
            bitrate_bps: s.dl_bitrate_bps,
            bler_pct: s.dl_bler_pct,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfilerError {
    #[error("need at least 2 samples to fit a standardizer, got {0}")]
    InsufficientData(usize),
    #[error("every point was labeled noise; no valid clusters")]
    NoValidClusters,
}

/// Per-feature mean/standard-deviation pair for standard-score
/// normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mu: [f64; FEATURE_DIM],
    pub sigma: [f64; FEATURE_DIM],
}

impl Standardizer {
    pub fn transform(&self, x: FeatureVector) -> [f64; FEATURE_DIM] {
        let a = x.to_array();
        let mut out = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            out[i] = (a[i] - self.mu[i]) / self.sigma[i];
        }
        out
    }

    pub fn transform_all(&self, xs: &[FeatureVector]) -> Vec<[f64; FEATURE_DIM]> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }
}

/// Population mean and standard deviation per feature. Degenerate features
/// (sigma below 1e-12) fall back to sigma 1 so constant columns normalize
/// to zero instead of NaN.
pub fn fit_standardizer(xs: &[FeatureVector]) -> Result<Standardizer, ProfilerError> {
    if xs.len() < 2 {
        return Err(ProfilerError::InsufficientData(xs.len()));
    }
    let n = xs.len() as f64;
    let mut mu = [0.0; FEATURE_DIM];
    for x in xs {
        let a = x.to_array();
        for i in 0..FEATURE_DIM {
            mu[i] += a[i];
        }
    }
    for m in &mut mu {
        *m /= n;
    }
    let mut sigma = [0.0; FEATURE_DIM];
    for x in xs {
        let a = x.to_array();
        for i in 0..FEATURE_DIM {
            sigma[i] += (a[i] - mu[i]).powi(2);
        }
    }
    for s in &mut sigma {
        *s = (*s / n).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    Ok(Standardizer { mu, sigma })
}

pub fn euclidean(a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub const NOISE: i32 = -1;

/// Density-based clustering with Euclidean distance and closed
/// eps-neighborhoods (a point counts itself toward `min_pts`).
///
/// Returns one label per input point: -1 for noise, otherwise a cluster
/// index assigned in order of the first core point encountered in input
/// order. Border points go to the earliest-started cluster that reaches
/// them.
pub fn dbscan(points: &[[f64; FEATURE_DIM]], eps: f64, min_pts: usize) -> Vec<i32> {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(&points[i], &points[j]) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_pts).collect();

    const UNDEF: i32 = -2;
    let mut labels = vec![UNDEF; n];
    let mut cid: i32 = 0;
    for p in 0..n {
        if labels[p] != UNDEF {
            continue;
        }
        if !core[p] {
            labels[p] = NOISE;
            continue;
        }
        labels[p] = cid;
        let mut queue: std::collections::VecDeque<usize> = neighbors[p].iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cid; // border point, reachable but not core
            }
            if labels[q] != UNDEF {
                continue;
            }
            labels[q] = cid;
            if core[q] {
                queue.extend(neighbors[q].iter().copied());
            }
        }
        cid += 1;
    }
    labels
}

/// Mean of each cluster's members in the clustered space, noise excluded.
pub fn centroids(
    points: &[[f64; FEATURE_DIM]],
    labels: &[i32],
) -> Result<Vec<[f64; FEATURE_DIM]>, ProfilerError> {
    let k = labels.iter().copied().max().unwrap_or(NOISE) + 1;
    if k <= 0 {
        return Err(ProfilerError::NoValidClusters);
    }
    let mut sums = vec![[0.0; FEATURE_DIM]; k as usize];
    let mut counts = vec![0usize; k as usize];
    for (point, &label) in points.iter().zip(labels) {
        if label == NOISE {
            continue;
        }
        let j = label as usize;
        counts[j] += 1;
        for i in 0..FEATURE_DIM {
            sums[j][i] += point[i];
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let mut out = [0.0; FEATURE_DIM];
            for i in 0..FEATURE_DIM {
                out[i] = s[i] / c as f64;
            }
            out
        })
        .collect())
}

/// Traffic class names assigned to clusters by descending mean bitrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SemanticLabel {
    #[serde(rename = "HIGH")]
    High,
    #[serde(rename = "MEDIUM")]
    Medium,
    #[serde(rename = "LOW")]
    Low,
    #[serde(rename = "IDLE")]
    Idle,
}

impl std::fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SemanticLabel::High => "HIGH",
            SemanticLabel::Medium => "MEDIUM",
            SemanticLabel::Low => "LOW",
            SemanticLabel::Idle => "IDLE",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SemanticLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "HIGH" => Ok(SemanticLabel::High),
            "MEDIUM" => Ok(SemanticLabel::Medium),
            "LOW" => Ok(SemanticLabel::Low),
            "IDLE" => Ok(SemanticLabel::Idle),
            other => Err(format!("unknown traffic class {other:?}")),
        }
    }
}

const IDLE_BITRATE_CUTOFF_BPS: f64 = 1000.0;

/// Names clusters by the bitrate component of their raw-space centroids,
/// descending: HIGH, MEDIUM, LOW, IDLE. With fewer than four clusters the
/// names are assigned from HIGH downward, except that the lowest-bitrate
/// cluster is always IDLE when its mean bitrate is under 1 kbps.
pub fn label_clusters(
    raw: &[FeatureVector],
    labels: &[i32],
) -> Result<BTreeMap<usize, SemanticLabel>, ProfilerError> {
    let raw_points: Vec<[f64; FEATURE_DIM]> = raw.iter().map(|x| x.to_array()).collect();
    let cents = centroids(&raw_points, labels)?;
    let mut order: Vec<usize> = (0..cents.len()).collect();
    order.sort_by(|&a, &b| cents[b][2].partial_cmp(&cents[a][2]).unwrap());

    const RANKED: [SemanticLabel; 4] = [
        SemanticLabel::High,
        SemanticLabel::Medium,
        SemanticLabel::Low,
        SemanticLabel::Idle,
    ];
    let mut out = BTreeMap::new();
    for (rank, &cluster) in order.iter().enumerate() {
        if rank < RANKED.len() {
            out.insert(cluster, RANKED[rank]);
        }
    }
    let last = *order.last().unwrap();
    if cents[last][2] < IDLE_BITRATE_CUTOFF_BPS {
        out.retain(|_, v| *v != SemanticLabel::Idle);
        out.insert(last, SemanticLabel::Idle);
    }
    Ok(out)
}

/// Trained profiling model: normalization parameters, valid-cluster
/// centroids (in standardized space), and the semantic name of each
/// cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub model_version: u32,
    #[serde(flatten)]
    pub standardizer: Standardizer,
    pub eps: f64,
    pub min_pts: usize,
    pub centroids: Vec<[f64; FEATURE_DIM]>,
    pub labels_semantic: BTreeMap<usize, SemanticLabel>,
}

pub const MODEL_VERSION: u32 = 1;

impl ClusterModel {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Cluster indices whose semantic label is in `targets`.
    pub fn clusters_with_labels(&self, targets: &[SemanticLabel]) -> Vec<usize> {
        self.labels_semantic
            .iter()
            .filter(|(_, l)| targets.contains(l))
            .map(|(&j, _)| j)
            .collect()
    }

    pub fn all_cluster_indices(&self) -> Vec<usize> {
        (0..self.centroids.len()).collect()
    }
}

/// Outcome of an offline fit, including the per-point labels the model was
/// built from.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub model: ClusterModel,
    pub labels: Vec<i32>,
    pub n_clusters: usize,
    pub noise_count: usize,
}

/// Full offline pipeline: fit the standardizer, cluster the standardized
/// points, compute centroids, and name the clusters.
pub fn fit_model(
    xs: &[FeatureVector],
    eps: f64,
    min_pts: usize,
) -> Result<ModelFit, ProfilerError> {
    let standardizer = fit_standardizer(xs)?;
    let points = standardizer.transform_all(xs);
    let labels = dbscan(&points, eps, min_pts);
    let cents = centroids(&points, &labels)?;
    let semantic = label_clusters(xs, &labels)?;
    let noise_count = labels.iter().filter(|&&l| l == NOISE).count();
    let n_clusters = cents.len();
    Ok(ModelFit {
        model: ClusterModel {
            model_version: MODEL_VERSION,
            standardizer,
            eps,
            min_pts,
            centroids: cents,
            labels_semantic: semantic,
        },
        labels,
        n_clusters,
        noise_count,
    })
}

/// Nearest-centroid assignment of a raw sample; ties break to the lowest
/// cluster index.
pub fn classify(x: FeatureVector, model: &ClusterModel) -> usize {
    debug_assert!(!model.centroids.is_empty());
    let p = model.standardizer.transform(x);
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (j, c) in model.centroids.iter().enumerate() {
        let d = euclidean(&p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Reads a training set from CSV with header `cqi,mcs,bitrate_bps,bler_pct`.
pub fn read_feature_csv<R: Read>(r: R) -> Result<Vec<FeatureVector>, csv::Error> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().collect()
}

pub fn write_feature_csv<W: Write>(w: W, xs: &[FeatureVector]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    for x in xs {
        wtr.serialize(x)?;
    }
    wtr.flush()?;
    Ok(())
}
