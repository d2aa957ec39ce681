//! Regenerates the committed test fixtures:
//!
//! * `tests/fixtures/pipeline/`: eight synthetic cases (CT-like image,
//!   low-resolution organ mask, two model probability maps on the crop grid,
//!   ground-truth lesion mask on the full grid)
//! * `tests/fixtures/split/cases.csv`: case metadata for the split golden
//!
//! Usage: `cargo run -p lesiondet --example make_fixtures [OUT_DIR]`

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lesiondet::roi::{compute_crop_box, mask_bbox_physical, MarginMm};
use lesiondet::{write_mha, Geometry, Volume, VoxelData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LESION_SIGMA_MM: f64 = 4.5;
const LOBE_GAP_MM: f64 = 15.0;
const SECOND_LOBE: f64 = 0.9;
const CUTOFF: f64 = 0.02;

struct Case {
    id: &'static str,
    fold: usize,
    /// Lesion peak and first-lobe center; `None` for negatives.
    lesion: Option<(f64, [f64; 3])>,
    /// Distractor blobs: peak, center, sigma.
    blobs: &'static [(f64, [f64; 3], f64)],
}

const CASES: [Case; 8] = [
    Case {
        id: "case01",
        fold: 0,
        lesion: Some((0.95, [-6.0, 1.5, 0.0])),
        blobs: &[(0.3, [-16.0, -11.0, 9.0], 3.0)],
    },
    Case {
        id: "case02",
        fold: 0,
        lesion: Some((0.80, [-4.0, -2.0, 3.0])),
        blobs: &[],
    },
    Case {
        id: "case03",
        fold: 0,
        lesion: None,
        blobs: &[(0.35, [0.0, 6.0, -6.0], 3.0)],
    },
    Case {
        id: "case04",
        fold: 0,
        lesion: None,
        blobs: &[
            (0.2, [8.0, -8.0, 6.0], 3.0),
            (0.15, [-12.0, 8.0, -9.0], 3.0),
        ],
    },
    Case {
        id: "case05",
        fold: 1,
        lesion: Some((0.92, [-7.0, 0.0, -3.0])),
        blobs: &[],
    },
    Case {
        id: "case06",
        fold: 1,
        lesion: Some((0.78, [-5.0, 3.0, 3.0])),
        blobs: &[(0.25, [14.0, -10.0, -9.0], 3.0)],
    },
    Case {
        id: "case07",
        fold: 1,
        lesion: None,
        blobs: &[(0.85, [2.0, -4.0, 0.0], 3.0)],
    },
    Case {
        id: "case08",
        fold: 1,
        lesion: None,
        blobs: &[],
    },
];

fn full_geometry() -> Geometry {
    Geometry::new([48, 40, 20], [1.5, 1.5, 3.0], [-36.0, -30.0, -30.0]).unwrap()
}

fn mask_geometry() -> Geometry {
    Geometry::new([24, 20, 10], [3.0, 3.0, 6.0], [-35.25, -29.25, -28.5]).unwrap()
}

pub const MARGIN: [f64; 3] = [6.0, 6.0, 6.0];

fn in_organ(p: [f64; 3]) -> bool {
    (p[0] / 18.0).powi(2) + (p[1] / 12.0).powi(2) + (p[2] / 15.0).powi(2) <= 1.0
}

fn gauss(p: [f64; 3], c: [f64; 3], sigma: f64) -> f64 {
    let d2: f64 = (0..3).map(|a| (p[a] - c[a]).powi(2)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

fn second_lobe(c1: [f64; 3]) -> [f64; 3] {
    [c1[0] + LOBE_GAP_MM, c1[1], c1[2]]
}

fn probability(case: &Case, p: [f64; 3]) -> f64 {
    let mut v: f64 = 0.0;
    if let Some((peak, c1)) = case.lesion {
        v = v
            .max(peak * gauss(p, c1, LESION_SIGMA_MM))
            .max(SECOND_LOBE * peak * gauss(p, second_lobe(c1), LESION_SIGMA_MM));
    }
    for &(peak, c, s) in case.blobs {
        v = v.max(peak * gauss(p, c, s));
    }
    if v < CUTOFF {
        0.0
    } else {
        v
    }
}

/// Ground truth: the capsule of radius 1.5 sigma around the lobe axis.
fn in_lesion(case: &Case, p: [f64; 3]) -> bool {
    let Some((_, c1)) = case.lesion else {
        return false;
    };
    let c2 = second_lobe(c1);
    let t = ((p[0] - c1[0]) / (c2[0] - c1[0])).clamp(0.0, 1.0);
    let q = [c1[0] + t * (c2[0] - c1[0]), c1[1], c1[2]];
    let d2: f64 = (0..3).map(|a| (p[a] - q[a]).powi(2)).sum();
    d2 <= (1.5 * LESION_SIGMA_MM).powi(2)
}

fn physical(g: &Geometry, i: usize) -> [f64; 3] {
    let idx = g.voxel_index(i);
    g.voxel_to_physical([idx[0] as i64, idx[1] as i64, idx[2] as i64])
}

fn write(volume: &Volume, path: &Path) {
    write_mha(volume, path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
}

fn pipeline(root: &Path) {
    std::fs::create_dir_all(root).unwrap();
    let full = full_geometry();
    let low = mask_geometry();
    let mut index = String::from("case_id,label,fold\n");
    for (ci, case) in CASES.iter().enumerate() {
        let dir = root.join(case.id);
        std::fs::create_dir_all(&dir).unwrap();

        let mask: Vec<u8> = (0..low.num_voxels())
            .map(|i| in_organ(physical(&low, i)) as u8)
            .collect();
        let mask = Volume::from_u8(low, mask).unwrap();
        write(&mask, &dir.join("mask.mha"));

        let image: Vec<i16> = (0..full.num_voxels())
            .map(|i| {
                let p = physical(&full, i);
                let base = if in_organ(p) { 45.0 } else { -80.0 };
                let texture = 12.0 * ((p[0] * 0.3).sin() + (p[1] * 0.2 + ci as f64).cos()) + p[2];
                (base + texture).round() as i16
            })
            .collect();
        write(
            &Volume::new(full, VoxelData::I16(image)).unwrap(),
            &dir.join("image.mha"),
        );

        let gt: Vec<u8> = (0..full.num_voxels())
            .map(|i| in_lesion(case, physical(&full, i)) as u8)
            .collect();
        write(&Volume::from_u8(full, gt).unwrap(), &dir.join("gt.mha"));

        // Model outputs live on the crop grid the pipeline will derive.
        let (lo, hi) = mask_bbox_physical(&mask).unwrap();
        let margin = MarginMm::new(MARGIN[0], MARGIN[1], MARGIN[2]).unwrap();
        let crop = compute_crop_box(lo, hi, &full, margin)
            .unwrap()
            .cropped_geometry();
        for (name, sign) in [("model_a.mha", 1.0), ("model_b.mha", -1.0)] {
            let values: Vec<f32> = (0..crop.num_voxels())
                .map(|i| {
                    let p = physical(&crop, i);
                    let wobble = 1.0 + sign * 0.04 * (p[0] * 0.7 + p[2] * 0.3).sin();
                    (probability(case, p) * wobble).clamp(0.0, 1.0) as f32
                })
                .collect();
            write(&Volume::from_f32(crop, values).unwrap(), &dir.join(name));
        }
        let label = if case.lesion.is_some() {
            "PDAC"
        } else {
            "non-PDAC"
        };
        let _ = writeln!(index, "{},{},{}", case.id, label, case.fold);
    }
    std::fs::write(root.join("cases.csv"), index).unwrap();
}

fn split_cases(path: &Path) {
    let mut r = ChaCha8Rng::seed_from_u64(20240601);
    let mut out = String::from("case_id,label,lesion_size_mm,age,sex\n");
    for i in 0..60 {
        let positive = i % 3 == 0;
        let size = if positive {
            format!("{:.1}", r.gen_range(5.0..60.0))
        } else {
            String::new()
        };
        let age = r.gen_range(35..85);
        let sex = if r.gen_bool(0.5) { "M" } else { "F" };
        let label = if positive { "PDAC" } else { "non-PDAC" };
        let _ = writeln!(out, "split{i:03},{label},{size},{age},{sex}");
    }
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, out).unwrap();
}

fn main() {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"));
    pipeline(&out.join("pipeline"));
    split_cases(&out.join("split/cases.csv"));
    println!("fixtures written to {}", out.display());
}
