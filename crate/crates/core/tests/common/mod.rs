//! Reference implementations and generators shared by the integration tests.
//! The oracles favor obviousness over speed and share no code with the crate.
#![allow(dead_code)]

use lesiondet::{
    ConfidenceRule, Connectivity, ExtractionParams, Geometry, ProbabilityMap, ThresholdMode,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn adjacent(a: [usize; 3], b: [usize; 3], conn: Connectivity) -> bool {
    let d: Vec<usize> = (0..3).map(|i| a[i].abs_diff(b[i])).collect();
    if d.iter().any(|&x| x > 1) {
        return false;
    }
    let moved = d.iter().filter(|&&x| x == 1).count();
    match conn {
        Connectivity::Six => moved == 1,
        Connectivity::Eighteen => moved == 1 || moved == 2,
        Connectivity::TwentySix => moved >= 1,
    }
}

pub fn coords(dims: [usize; 3], i: usize) -> [usize; 3] {
    [
        i % dims[0],
        (i / dims[0]) % dims[1],
        i / (dims[0] * dims[1]),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCandidate {
    pub seed_index: usize,
    pub seed_prob: f32,
    pub voxels: Vec<usize>,
    pub confidence: f32,
}

/// Seed-and-grow by repeated full sweeps until the region stops changing.
pub fn oracle_extract(
    values: &[f32],
    dims: [usize; 3],
    p: &ExtractionParams,
) -> Vec<OracleCandidate> {
    let n = values.len();
    let mut work = values.to_vec();
    let mut out = Vec::new();
    let cap = std::cmp::max(32, 4 * p.max_candidates);
    let mut iterations = 0;
    while out.len() < p.max_candidates && iterations < cap {
        iterations += 1;
        let mut seed = 0;
        for i in 1..n {
            if work[i] > work[seed] {
                seed = i;
            }
        }
        let s = work[seed];
        if s <= 0.0 || (s as f64) < p.min_seed_prob {
            break;
        }
        let tau = match p.threshold {
            ThresholdMode::Adaptive { alpha } => alpha * s as f64,
            ThresholdMode::Fixed { tau } => tau,
        };
        let eligible: Vec<bool> = work.iter().map(|&w| w > 0.0 && w as f64 >= tau).collect();
        let mut inside = vec![false; n];
        inside[seed] = true;
        loop {
            let mut changed = false;
            for i in 0..n {
                if inside[i] || !eligible[i] {
                    continue;
                }
                let ci = coords(dims, i);
                if (0..n).any(|j| inside[j] && adjacent(ci, coords(dims, j), p.connectivity)) {
                    inside[i] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let voxels: Vec<usize> = (0..n).filter(|&i| inside[i]).collect();
        for &v in &voxels {
            work[v] = 0.0;
        }
        if voxels.len() >= p.min_voxels {
            let confidence = match p.confidence {
                ConfidenceRule::Seed => s,
                ConfidenceRule::Mean => {
                    (voxels.iter().map(|&v| values[v] as f64).sum::<f64>() / voxels.len() as f64)
                        as f32
                }
            };
            out.push(OracleCandidate {
                seed_index: seed,
                seed_prob: s,
                voxels,
                confidence,
            });
        }
    }
    out
}

/// Neighbor lists computed from coordinates, one per voxel.
pub fn neighbor_table(dims: [usize; 3], conn: Connectivity) -> Vec<Vec<usize>> {
    let n = dims[0] * dims[1] * dims[2];
    (0..n)
        .map(|i| {
            let c = coords(dims, i);
            let mut v = Vec::new();
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let q = [c[0] as i64 + dx, c[1] as i64 + dy, c[2] as i64 + dz];
                        if (0..3).any(|a| q[a] < 0 || q[a] >= dims[a] as i64) {
                            continue;
                        }
                        let qu = [q[0] as usize, q[1] as usize, q[2] as usize];
                        if adjacent(c, qu, conn) {
                            v.push(qu[0] + dims[0] * (qu[1] + dims[1] * qu[2]));
                        }
                    }
                }
            }
            v
        })
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Same semantics as [`oracle_extract`], but each region is the union-find
/// component of the seed among eligible voxels, so it scales to 12^3 grids.
pub fn oracle_extract_fast(
    values: &[f32],
    table: &[Vec<usize>],
    p: &ExtractionParams,
) -> Vec<OracleCandidate> {
    let n = values.len();
    let mut work = values.to_vec();
    let mut out = Vec::new();
    let cap = std::cmp::max(32, 4 * p.max_candidates);
    let mut parent: Vec<usize> = vec![0; n];
    for _ in 0..cap {
        if out.len() >= p.max_candidates {
            break;
        }
        let mut seed = 0;
        for i in 1..n {
            if work[i] > work[seed] {
                seed = i;
            }
        }
        let s = work[seed];
        if s <= 0.0 || (s as f64) < p.min_seed_prob {
            break;
        }
        let tau = match p.threshold {
            ThresholdMode::Adaptive { alpha } => alpha * s as f64,
            ThresholdMode::Fixed { tau } => tau,
        };
        let eligible: Vec<bool> = (0..n)
            .map(|i| i == seed || (work[i] > 0.0 && work[i] as f64 >= tau))
            .collect();
        for (i, slot) in parent.iter_mut().enumerate() {
            *slot = i;
        }
        for i in 0..n {
            if !eligible[i] {
                continue;
            }
            for &j in &table[i] {
                if j < i && eligible[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
        let root = find(&mut parent, seed);
        let voxels: Vec<usize> = (0..n)
            .filter(|&i| eligible[i] && find(&mut parent, i) == root)
            .collect();
        for &v in &voxels {
            work[v] = 0.0;
        }
        if voxels.len() >= p.min_voxels {
            let confidence = match p.confidence {
                ConfidenceRule::Seed => s,
                ConfidenceRule::Mean => {
                    (voxels.iter().map(|&v| values[v] as f64).sum::<f64>() / voxels.len() as f64)
                        as f32
                }
            };
            out.push(OracleCandidate {
                seed_index: seed,
                seed_prob: s,
                voxels,
                confidence,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub enum MapStyle {
    Uniform,
    /// Few distinct levels, so ties are common.
    Quantized,
    /// Gaussian bumps over a zero background.
    Blobs,
    Constant,
    Checkerboard,
}

pub const STYLES: [MapStyle; 5] = [
    MapStyle::Uniform,
    MapStyle::Quantized,
    MapStyle::Blobs,
    MapStyle::Constant,
    MapStyle::Checkerboard,
];

pub fn random_map(r: &mut impl Rng, dims: [usize; 3], style: MapStyle) -> Vec<f32> {
    let n = dims[0] * dims[1] * dims[2];
    match style {
        MapStyle::Uniform => (0..n).map(|_| r.gen::<f32>()).collect(),
        MapStyle::Quantized => {
            let levels = r.gen_range(2..6);
            (0..n)
                .map(|_| r.gen_range(0..=levels) as f32 / levels as f32)
                .collect()
        }
        MapStyle::Blobs => {
            let bumps: Vec<([f64; 3], f64, f64)> = (0..r.gen_range(1..5))
                .map(|_| {
                    (
                        [
                            r.gen_range(0.0..dims[0] as f64),
                            r.gen_range(0.0..dims[1] as f64),
                            r.gen_range(0.0..dims[2] as f64),
                        ],
                        r.gen_range(0.8..3.0),
                        r.gen_range(0.1..1.0),
                    )
                })
                .collect();
            (0..n)
                .map(|i| {
                    let c = coords(dims, i);
                    let v: f64 = bumps
                        .iter()
                        .map(|(m, s, a)| {
                            let d2: f64 = (0..3).map(|k| (c[k] as f64 - m[k]).powi(2)).sum();
                            a * (-d2 / (2.0 * s * s)).exp()
                        })
                        .fold(0.0, f64::max);
                    if v < 0.02 {
                        0.0
                    } else {
                        v as f32
                    }
                })
                .collect()
        }
        MapStyle::Constant => vec![r.gen_range(0.0f32..=1.0); n],
        MapStyle::Checkerboard => {
            let hi = r.gen_range(0.1f32..=1.0);
            let lo = r.gen_range(0.0..hi);
            (0..n)
                .map(|i| {
                    let c = coords(dims, i);
                    if (c[0] + c[1] + c[2]) % 2 == 0 {
                        hi
                    } else {
                        lo
                    }
                })
                .collect()
        }
    }
}

pub fn random_params(r: &mut impl Rng) -> ExtractionParams {
    let threshold = if r.gen_bool(0.5) {
        ThresholdMode::Adaptive {
            alpha: r.gen_range(0.01..=1.0),
        }
    } else {
        ThresholdMode::Fixed {
            tau: r.gen_range(0.01..=1.0),
        }
    };
    ExtractionParams {
        threshold,
        max_candidates: r.gen_range(1..10),
        min_seed_prob: if r.gen_bool(0.3) {
            0.0
        } else {
            r.gen_range(0.0..0.3)
        },
        min_voxels: r.gen_range(1..12),
        connectivity: [
            Connectivity::Six,
            Connectivity::Eighteen,
            Connectivity::TwentySix,
        ][r.gen_range(0..3)],
        confidence: if r.gen_bool(0.5) {
            ConfidenceRule::Seed
        } else {
            ConfidenceRule::Mean
        },
    }
}

pub fn prob_map(dims: [usize; 3], values: Vec<f32>) -> ProbabilityMap {
    ProbabilityMap::from_values(Geometry::with_dims(dims).unwrap(), values).unwrap()
}

/// Union-find labeling of nonzero voxels; components in order of their
/// smallest voxel index.
pub fn oracle_components(
    nonzero: &[bool],
    dims: [usize; 3],
    conn: Connectivity,
) -> Vec<Vec<usize>> {
    let n = nonzero.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        if !nonzero[i] {
            continue;
        }
        for j in 0..i {
            if nonzero[j] && adjacent(coords(dims, i), coords(dims, j), conn) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in (0..n).filter(|&i| nonzero[i]) {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut comps: Vec<Vec<usize>> = groups.into_values().collect();
    comps.sort_by_key(|c| c[0]);
    comps
}

/// Pairwise Mann-Whitney count with ties worth one half.
pub fn oracle_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &q in neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[derive(Debug, Clone)]
pub struct OracleDetection {
    pub case_id: String,
    pub rank: usize,
    pub confidence: f64,
    pub tp: bool,
}

/// Walks every cutoff of the ranking (confidence desc, case id, rank),
/// recounting precision and recall from scratch at each one.
pub fn oracle_ap(dets: &[OracleDetection], total_gt: usize) -> f64 {
    let mut remaining: Vec<&OracleDetection> = dets.iter().collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (a, b) = (remaining[i], remaining[best]);
            let key_a = (-a.confidence, a.case_id.clone(), a.rank);
            let key_b = (-b.confidence, b.case_id.clone(), b.rank);
            if key_a.partial_cmp(&key_b) == Some(std::cmp::Ordering::Less) {
                best = i;
            }
        }
        order.push(remaining.remove(best));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 1..=order.len() {
        let tp = order[..k].iter().filter(|d| d.tp).count() as f64;
        let precision = tp / k as f64;
        let recall = tp / total_gt as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}
