//! Physical-margin region-of-interest cropping.
//!
//! A coarse organ mask gives a physical bounding box, which is grown by a
//! margin in millimetres and mapped into the voxel grid of a (possibly
//! finer) target image. No resampling happens anywhere: the two grids only
//! meet through physical coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{Geometry, Volume, VolumeError, VoxelData};

/// Continuous voxel coordinates within this distance of an integer are
/// snapped to it before floor/ceil, absorbing affine round-off.
const SNAP_VOXELS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum RoiError {
    #[error("no foreground")]
    NoForeground,
    #[error("crop box is empty: the region lies outside the target grid")]
    EmptyBox,
    #[error("invalid physical box: lower corner {lo:?} exceeds upper corner {hi:?}")]
    InvalidBox { lo: [f64; 3], hi: [f64; 3] },
    #[error("invalid margin {0:?}: components must be finite and non-negative")]
    InvalidMargin([f64; 3]),
    #[error("invalid crop box: {0}")]
    InvalidCropBox(String),
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Margin in mm added on each side of the box, per axis (x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginMm {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MarginMm {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, RoiError> {
        let m = MarginMm { x, y, z };
        if m.as_array().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(RoiError::InvalidMargin(m.as_array()));
        }
        Ok(m)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Default for MarginMm {
    fn default() -> Self {
        MarginMm {
            x: 100.0,
            y: 50.0,
            z: 15.0,
        }
    }
}

impl std::str::FromStr for MarginMm {
    type Err = String;

    /// Parses `X,Y,Z`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("margin must be X,Y,Z in mm, got `{s}`"))?;
        match parts.as_slice() {
            [x, y, z] => MarginMm::new(*x, *y, *z).map_err(|e| e.to_string()),
            _ => Err(format!("margin must be X,Y,Z in mm, got `{s}`")),
        }
    }
}

/// Half-open voxel box `[lo, hi)` in a reference geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub reference: Geometry,
}

impl CropBox {
    pub fn new(lo: [usize; 3], hi: [usize; 3], reference: Geometry) -> Result<Self, RoiError> {
        let b = CropBox { lo, hi, reference };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), RoiError> {
        self.reference.validate()?;
        for a in 0..3 {
            if !(self.lo[a] < self.hi[a] && self.hi[a] <= self.reference.dims[a]) {
                return Err(RoiError::InvalidCropBox(format!(
                    "need 0 <= lo < hi <= dims, got lo {:?} hi {:?} dims {:?}",
                    self.lo, self.hi, self.reference.dims
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    pub fn whole(reference: Geometry) -> Self {
        CropBox {
            lo: [0; 3],
            hi: reference.dims,
            reference,
        }
    }

    /// Geometry of the cropped grid: same spacing, origin moved to `lo`.
    pub fn cropped_geometry(&self) -> Geometry {
        Geometry {
            dims: self.dims(),
            spacing: self.reference.spacing,
            origin: self.reference.voxel_to_physical(self.lo.map(|v| v as i64)),
        }
    }

    pub fn contains(&self, idx: [usize; 3]) -> bool {
        (0..3).all(|a| idx[a] >= self.lo[a] && idx[a] < self.hi[a])
    }
}

/// Physical bounding box `(min, max)` of the centers of voxels with value > 0.
pub fn mask_bbox_physical(mask: &Volume) -> Result<([f64; 3], [f64; 3]), RoiError> {
    let g = mask.geometry();
    let data = mask.data();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    let [nx, ny, nz] = g.dims;
    let mut linear = 0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if data.get_f64(linear) > 0.0 {
                    any = true;
                    let idx = [i, j, k];
                    for a in 0..3 {
                        lo[a] = lo[a].min(idx[a]);
                        hi[a] = hi[a].max(idx[a]);
                    }
                }
                linear += 1;
            }
        }
    }
    if !any {
        return Err(RoiError::NoForeground);
    }
    Ok((
        g.voxel_to_physical(lo.map(|v| v as i64)),
        g.voxel_to_physical(hi.map(|v| v as i64)),
    ))
}

fn snap(c: f64) -> f64 {
    let r = c.round();
    if (c - r).abs() <= SNAP_VOXELS {
        r
    } else {
        c
    }
}

/// Grows `[phys_lo, phys_hi]` by `margin` on each side and maps it into
/// `target`: floor for the lower index, ceil + 1 for the exclusive upper
/// index, clamped to the grid.
pub fn compute_crop_box(
    phys_lo: [f64; 3],
    phys_hi: [f64; 3],
    target: &Geometry,
    margin: MarginMm,
) -> Result<CropBox, RoiError> {
    target.validate()?;
    if (0..3).any(|a| !(phys_lo[a] <= phys_hi[a])) {
        return Err(RoiError::InvalidBox {
            lo: phys_lo,
            hi: phys_hi,
        });
    }
    let m = MarginMm::new(margin.x, margin.y, margin.z)?.as_array();
    let mut grown_lo = [0.0; 3];
    let mut grown_hi = [0.0; 3];
    for a in 0..3 {
        grown_lo[a] = phys_lo[a] - m[a];
        grown_hi[a] = phys_hi[a] + m[a];
    }
    let c_lo = target.physical_to_voxel(grown_lo);
    let c_hi = target.physical_to_voxel(grown_hi);
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let dim = target.dims[a] as f64;
        let l = snap(c_lo[a]).floor().clamp(0.0, dim);
        let h = (snap(c_hi[a]).ceil() + 1.0).clamp(0.0, dim);
        if l >= h {
            return Err(RoiError::EmptyBox);
        }
        lo[a] = l as usize;
        hi[a] = h as usize;
    }
    CropBox::new(lo, hi, *target)
}

pub fn crop(volume: &Volume, bx: &CropBox) -> Result<Volume, RoiError> {
    bx.validate()?;
    if !volume.geometry().is_compatible(&bx.reference) {
        return Err(RoiError::GeometryMismatch(format!(
            "volume {:?} vs box reference {:?}",
            volume.geometry(),
            bx.reference
        )));
    }
    let src = volume.geometry();
    let out_geom = bx.cropped_geometry();
    let [ox, oy, oz] = out_geom.dims;
    let rows = (0..oz).flat_map(|k| (0..oy).map(move |j| (j, k)));
    fn gather<T: Copy>(
        values: &[T],
        src: &Geometry,
        bx: &CropBox,
        rows: impl Iterator<Item = (usize, usize)>,
        ox: usize,
    ) -> Vec<T> {
        let mut out = Vec::new();
        for (j, k) in rows {
            let start = src.linear_index([bx.lo[0], bx.lo[1] + j, bx.lo[2] + k]);
            out.extend_from_slice(&values[start..start + ox]);
        }
        out
    }
    let data = match volume.data() {
        VoxelData::U8(v) => VoxelData::U8(gather(v, src, bx, rows, ox)),
        VoxelData::I16(v) => VoxelData::I16(gather(v, src, bx, rows, ox)),
        VoxelData::U16(v) => VoxelData::U16(gather(v, src, bx, rows, ox)),
        VoxelData::F32(v) => VoxelData::F32(gather(v, src, bx, rows, ox)),
    };
    Ok(Volume::new(out_geom, data)?)
}

/// Pastes a cropped volume back into the box's full-size reference grid,
/// zero outside the box.
pub fn uncrop(cropped: &Volume, bx: &CropBox) -> Result<Volume, RoiError> {
    bx.validate()?;
    let g = cropped.geometry();
    if g.dims != bx.dims() {
        return Err(RoiError::GeometryMismatch(format!(
            "volume dims {:?} vs box dims {:?}",
            g.dims,
            bx.dims()
        )));
    }
    if !g.spacing_matches(&bx.reference) {
        return Err(RoiError::GeometryMismatch(format!(
            "volume spacing {:?} vs reference spacing {:?}",
            g.spacing, bx.reference.spacing
        )));
    }
    let full = bx.reference;
    let [ox, oy, oz] = g.dims;
    fn scatter<T: Copy + Default>(
        values: &[T],
        full: &Geometry,
        bx: &CropBox,
        [ox, oy, oz]: [usize; 3],
    ) -> Vec<T> {
        let mut out = vec![T::default(); full.num_voxels()];
        for k in 0..oz {
            for j in 0..oy {
                let src = ox * (j + oy * k);
                let dst = full.linear_index([bx.lo[0], bx.lo[1] + j, bx.lo[2] + k]);
                out[dst..dst + ox].copy_from_slice(&values[src..src + ox]);
            }
        }
        out
    }
    let dims = [ox, oy, oz];
    let data = match cropped.data() {
        VoxelData::U8(v) => VoxelData::U8(scatter(v, &full, bx, dims)),
        VoxelData::I16(v) => VoxelData::I16(scatter(v, &full, bx, dims)),
        VoxelData::U16(v) => VoxelData::U16(scatter(v, &full, bx, dims)),
        VoxelData::F32(v) => VoxelData::F32(scatter(v, &full, bx, dims)),
    };
    Ok(Volume::new(full, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dims: [usize; 3]) -> Geometry {
        Geometry::with_dims(dims).unwrap()
    }

    #[test]
    fn single_voxel_bbox() {
        let g = unit([5, 5, 5]);
        let mut m = vec![0u8; 125];
        m[g.linear_index([2, 3, 4])] = 1;
        let v = Volume::from_u8(g, m).unwrap();
        assert_eq!(
            mask_bbox_physical(&v).unwrap(),
            ([2.0, 3.0, 4.0], [2.0, 3.0, 4.0])
        );
    }

    #[test]
    fn two_voxel_bbox_with_spacing() {
        let g = Geometry::new([5, 1, 1], [2.0, 1.0, 1.0], [0.0; 3]).unwrap();
        let v = Volume::from_u8(g, vec![1, 0, 0, 0, 1]).unwrap();
        assert_eq!(
            mask_bbox_physical(&v).unwrap(),
            ([0.0, 0.0, 0.0], [8.0, 0.0, 0.0])
        );
    }

    #[test]
    fn empty_mask() {
        let v = Volume::from_u8(unit([2, 2, 2]), vec![0; 8]).unwrap();
        assert_eq!(mask_bbox_physical(&v).unwrap_err(), RoiError::NoForeground);
        assert_eq!(RoiError::NoForeground.to_string(), "no foreground");
    }

    #[test]
    fn zero_margin_single_voxel_box() {
        let g = unit([10, 10, 10]);
        let b = compute_crop_box(
            [2.0, 3.0, 4.0],
            [2.0, 3.0, 4.0],
            &g,
            MarginMm::new(0.0, 0.0, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(b.lo, [2, 3, 4]);
        assert_eq!(b.hi, [3, 4, 5]);
    }

    #[test]
    fn default_margin_example() {
        let g = unit([512, 512, 512]);
        let b = compute_crop_box([50.0; 3], [60.0; 3], &g, MarginMm::default()).unwrap();
        assert_eq!(b.lo, [0, 0, 35]);
        assert_eq!(b.hi, [161, 111, 76]);
    }

    #[test]
    fn outside_target_is_empty() {
        let g = unit([10, 10, 10]);
        let err = compute_crop_box(
            [100.0; 3],
            [120.0; 3],
            &g,
            MarginMm::new(1.0, 1.0, 1.0).unwrap(),
        )
        .unwrap_err();
        assert_eq!(err, RoiError::EmptyBox);
        let err = compute_crop_box(
            [-40.0; 3],
            [-30.0; 3],
            &g,
            MarginMm::new(1.0, 1.0, 1.0).unwrap(),
        )
        .unwrap_err();
        assert_eq!(err, RoiError::EmptyBox);
    }

    #[test]
    fn inverted_box_rejected() {
        let g = unit([10, 10, 10]);
        assert!(matches!(
            compute_crop_box([3.0, 0.0, 0.0], [2.0, 0.0, 0.0], &g, MarginMm::default()),
            Err(RoiError::InvalidBox { .. })
        ));
    }

    #[test]
    fn margin_parsing() {
        let m: MarginMm = "100,50,15".parse().unwrap();
        assert_eq!(m, MarginMm::default());
        assert!("1,2".parse::<MarginMm>().is_err());
        assert!("1,-2,3".parse::<MarginMm>().is_err());
    }

    #[test]
    fn full_crop_is_identity() {
        let g = Geometry::new([3, 2, 2], [0.5, 1.0, 2.0], [1.0, 2.0, 3.0]).unwrap();
        let v = Volume::from_f32(g, (0..12).map(|i| i as f32).collect()).unwrap();
        let b = CropBox::whole(g);
        assert_eq!(crop(&v, &b).unwrap(), v);
        assert_eq!(uncrop(&v, &b).unwrap(), v);
    }

    #[test]
    fn one_voxel_crop_origin() {
        let g = Geometry::new([4, 4, 4], [0.5, 1.0, 2.0], [10.0, 20.0, 30.0]).unwrap();
        let v = Volume::from_f32(g, (0..64).map(|i| i as f32).collect()).unwrap();
        let b = CropBox::new([1, 2, 3], [2, 3, 4], g).unwrap();
        let c = crop(&v, &b).unwrap();
        assert_eq!(c.geometry().dims, [1, 1, 1]);
        assert_eq!(c.geometry().origin, [10.5, 22.0, 36.0]);
        assert_eq!(c.as_f32().unwrap(), &[g.linear_index([1, 2, 3]) as f32]);
        let back = uncrop(&c, &b).unwrap();
        let nonzero = back.as_f32().unwrap().iter().filter(|&&x| x != 0.0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn crop_rejects_mismatched_reference() {
        let g = unit([4, 4, 4]);
        let other = Geometry::new([4, 4, 4], [1.0; 3], [5.0, 0.0, 0.0]).unwrap();
        let v = Volume::from_u8(g, vec![0; 64]).unwrap();
        let b = CropBox::whole(other);
        assert!(matches!(crop(&v, &b), Err(RoiError::GeometryMismatch(_))));
    }

    #[test]
    fn uncrop_rejects_wrong_dims_or_spacing() {
        let g = unit([4, 4, 4]);
        let b = CropBox::new([0, 0, 0], [2, 2, 2], g).unwrap();
        let wrong = Volume::from_u8(unit([2, 2, 1]), vec![0; 4]).unwrap();
        assert!(matches!(
            uncrop(&wrong, &b),
            Err(RoiError::GeometryMismatch(_))
        ));
        let spaced = Volume::from_u8(
            Geometry::new([2, 2, 2], [2.0; 3], [0.0; 3]).unwrap(),
            vec![0; 8],
        )
        .unwrap();
        assert!(matches!(
            uncrop(&spaced, &b),
            Err(RoiError::GeometryMismatch(_))
        ));
    }

    #[test]
    fn crop_box_json_shape() {
        let b = CropBox::new([0, 1, 2], [3, 4, 5], unit([6, 6, 6])).unwrap();
        let json = serde_json::to_value(b).unwrap();
        assert_eq!(json["lo"], serde_json::json!([0, 1, 2]));
        assert_eq!(json["reference"]["dims"], serde_json::json!([6, 6, 6]));
        let back: CropBox = serde_json::from_value(json).unwrap();
        assert_eq!(back, b);
    }
}
