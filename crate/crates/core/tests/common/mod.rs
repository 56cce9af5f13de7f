//! Shared test helpers: an independent density-clustering reference and
//! certificate material for mutual-TLS tests.

#![allow(dead_code)]

use y1jamlab_core::profiler::FEATURE_DIM;

/// Disjoint-set over point indices.
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb] = ra;
        }
    }
}

/// Brute-force density clustering over a full O(n^2) closed-neighborhood
/// table: cores are points with at least `min_pts` closed neighbors,
/// clusters are the connected components of the core adjacency graph
/// (indexed by their first core in input order), border points join the
/// lowest-indexed adjacent cluster, and everything else is noise (-1).
///
/// Same partition semantics as the production algorithm, entirely
/// different machinery.
pub fn dbscan_reference(points: &[[f64; FEATURE_DIM]], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    let dist = |a: &[f64; FEATURE_DIM], b: &[f64; FEATURE_DIM]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            adj[i][j] = dist(&points[i], &points[j]) <= eps;
        }
    }
    let core: Vec<bool> = (0..n)
        .map(|i| adj[i].iter().filter(|&&x| x).count() >= min_pts)
        .collect();

    let mut uf = UnionFind::new(n);
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for j in (i + 1)..n {
            if core[j] && adj[i][j] {
                uf.union(i, j);
            }
        }
    }

    // Component ids ranked by the first core point in input order.
    let mut root_to_id: std::collections::HashMap<usize, i32> = std::collections::HashMap::new();
    let mut next_id = 0;
    for (p, &is_core) in core.iter().enumerate() {
        if is_core {
            let root = uf.find(p);
            root_to_id.entry(root).or_insert_with(|| {
                let id = next_id;
                next_id += 1;
                id
            });
        }
    }

    (0..n)
        .map(|p| {
            if core[p] {
                return root_to_id[&uf.find(p)];
            }
            // Border: lowest-indexed cluster with a core reaching p.
            (0..n)
                .filter(|&q| core[q] && adj[p][q])
                .map(|q| root_to_id[&uf.find(q)])
                .min()
                .unwrap_or(-1)
        })
        .collect()
}

/// Canonical form of a labeling: noise index set plus the set of clusters,
/// each as a sorted index list, ordered by smallest member.
pub fn canonical_partition(labels: &[i32]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut noise = Vec::new();
    let mut clusters: std::collections::HashMap<i32, Vec<usize>> = std::collections::HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l < 0 {
            noise.push(i);
        } else {
            clusters.entry(l).or_default().push(i);
        }
    }
    let mut groups: Vec<Vec<usize>> = clusters.into_values().collect();
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort();
    (noise, groups)
}

/// PEM bundle for one mutual-TLS deployment: a CA plus a service identity
/// valid for localhost, usable as both server and client certificate.
pub struct TestCerts {
    pub dir: tempfile::TempDir,
    pub ca_path: std::path::PathBuf,
    pub cert_path: std::path::PathBuf,
    pub key_path: std::path::PathBuf,
}

pub fn generate_test_certs() -> TestCerts {
    use rcgen::{
        BasicConstraints, CertificateParams, DnType, ExtendedKeyUsagePurpose, IsCa, KeyPair,
        KeyUsagePurpose, SanType,
    };

    let ca_key = KeyPair::generate().unwrap();
    let mut ca_params = CertificateParams::new(Vec::<String>::new()).unwrap();
    ca_params.is_ca = IsCa::Ca(BasicConstraints::Unconstrained);
    ca_params
        .distinguished_name
        .push(DnType::CommonName, "y1jamlab test ca");
    ca_params.key_usages = vec![
        KeyUsagePurpose::KeyCertSign,
        KeyUsagePurpose::CrlSign,
        KeyUsagePurpose::DigitalSignature,
    ];
    let ca_cert = ca_params.clone().self_signed(&ca_key).unwrap();

    let svc_key = KeyPair::generate().unwrap();
    let mut svc_params = CertificateParams::new(vec!["localhost".to_string()]).unwrap();
    svc_params
        .subject_alt_names
        .push(SanType::IpAddress(std::net::IpAddr::V4(
            std::net::Ipv4Addr::LOCALHOST,
        )));
    svc_params
        .distinguished_name
        .push(DnType::CommonName, "y1jamlab service");
    svc_params.extended_key_usages = vec![
        ExtendedKeyUsagePurpose::ServerAuth,
        ExtendedKeyUsagePurpose::ClientAuth,
    ];
    let svc_cert = svc_params.signed_by(&svc_key, &ca_cert, &ca_key).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let ca_path = dir.path().join("ca.pem");
    let cert_path = dir.path().join("svc.pem");
    let key_path = dir.path().join("svc.key");
    std::fs::write(&ca_path, ca_cert.pem()).unwrap();
    std::fs::write(&cert_path, svc_cert.pem()).unwrap();
    std::fs::write(&key_path, svc_key.serialize_pem()).unwrap();
    TestCerts {
        dir,
        ca_path,
        cert_path,
        key_path,
    }
}
