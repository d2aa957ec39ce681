//! Geometry-aware 3D volumes.
//!
//! Buffers are stored x-fastest: the linear index of voxel `(i, j, k)` is
//! `i + nx * (j + ny * k)`, matching the MetaImage on-disk layout.

pub mod mha;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance (mm) for spacing/origin when deciding whether two grids match.
pub const GEOMETRY_TOLERANCE_MM: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum VolumeError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("buffer length {actual} does not match dims product {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("incompatible geometries: {0}")]
    IncompatibleGeometry(String),
    #[error("expected element type {expected}, found {found}")]
    ElementKind {
        expected: ElementKind,
        found: ElementKind,
    },
    #[error("invalid probability {value} at voxel {index}")]
    InvalidProbability { index: usize, value: f32 },
    #[error("at least one volume is required")]
    Empty,
}

/// Grid size, voxel spacing (mm) and the physical position (mm) of the
/// center of voxel (0, 0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self, VolumeError> {
        let g = Geometry {
            dims,
            spacing,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unit spacing, zero origin.
    pub fn with_dims(dims: [usize; 3]) -> Result<Self, VolumeError> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        if self.dims.contains(&0) {
            return Err(VolumeError::InvalidGeometry(format!(
                "dims must be positive, got {:?}",
                self.dims
            )));
        }
        if self
            .dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .is_none()
        {
            return Err(VolumeError::InvalidGeometry("voxel count overflows".into()));
        }
        if self.spacing.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(VolumeError::InvalidGeometry(format!(
                "spacing must be finite and positive, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(VolumeError::InvalidGeometry(format!(
                "origin must be finite, got {:?}",
                self.origin
            )));
        }
        Ok(())
    }

    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn linear_index(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    #[inline]
    pub fn voxel_index(&self, linear: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let nxy = nx * self.dims[1];
        [linear % nx, (linear / nx) % self.dims[1], linear / nxy]
    }

    pub fn contains(&self, idx: [i64; 3]) -> bool {
        (0..3).all(|a| idx[a] >= 0 && (idx[a] as u64) < self.dims[a] as u64)
    }

    /// Same dims, spacing and origin within [`GEOMETRY_TOLERANCE_MM`].
    pub fn is_compatible(&self, other: &Geometry) -> bool {
        self.dims == other.dims
            && self.spacing_matches(other)
            && (0..3).all(|a| (self.origin[a] - other.origin[a]).abs() <= GEOMETRY_TOLERANCE_MM)
    }

    pub fn spacing_matches(&self, other: &Geometry) -> bool {
        (0..3).all(|a| (self.spacing[a] - other.spacing[a]).abs() <= GEOMETRY_TOLERANCE_MM)
    }

    pub fn ensure_compatible(&self, other: &Geometry) -> Result<(), VolumeError> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(VolumeError::IncompatibleGeometry(format!(
                "{self:?} vs {other:?}"
            )))
        }
    }

    /// `origin + idx * spacing`. Indices outside the grid are allowed.
    pub fn voxel_to_physical(&self, idx: [i64; 3]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = self.origin[a] + idx[a] as f64 * self.spacing[a];
        }
        p
    }

    /// Continuous voxel coordinates of a physical point; callers round as needed.
    pub fn physical_to_voxel(&self, p: [f64; 3]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = (p[a] - self.origin[a]) / self.spacing[a];
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    U8,
    I16,
    U16,
    F32,
}

impl ElementKind {
    pub fn byte_size(self) -> usize {
        match self {
            ElementKind::U8 => 1,
            ElementKind::I16 | ElementKind::U16 => 2,
            ElementKind::F32 => 4,
        }
    }

    pub fn met_name(self) -> &'static str {
        match self {
            ElementKind::U8 => "MET_UCHAR",
            ElementKind::I16 => "MET_SHORT",
            ElementKind::U16 => "MET_USHORT",
            ElementKind::F32 => "MET_FLOAT",
        }
    }

    pub fn from_met_name(name: &str) -> Option<Self> {
        match name {
            "MET_UCHAR" => Some(ElementKind::U8),
            "MET_SHORT" => Some(ElementKind::I16),
            "MET_USHORT" => Some(ElementKind::U16),
            "MET_FLOAT" => Some(ElementKind::F32),
            _ => None,
        }
    }
}

impl std::fmt::Display for ElementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.met_name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl VoxelData {
    pub fn kind(&self) -> ElementKind {
        match self {
            VoxelData::U8(_) => ElementKind::U8,
            VoxelData::I16(_) => ElementKind::I16,
            VoxelData::U16(_) => ElementKind::U16,
            VoxelData::F32(_) => ElementKind::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::I16(v) => v.len(),
            VoxelData::U16(v) => v.len(),
            VoxelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros(kind: ElementKind, len: usize) -> Self {
        match kind {
            ElementKind::U8 => VoxelData::U8(vec![0; len]),
            ElementKind::I16 => VoxelData::I16(vec![0; len]),
            ElementKind::U16 => VoxelData::U16(vec![0; len]),
            ElementKind::F32 => VoxelData::F32(vec![0.0; len]),
        }
    }

    /// Value at `i` widened to f64.
    #[inline]
    pub fn get_f64(&self, i: usize) -> f64 {
        match self {
            VoxelData::U8(v) => v[i] as f64,
            VoxelData::I16(v) => v[i] as f64,
            VoxelData::U16(v) => v[i] as f64,
            VoxelData::F32(v) => v[i] as f64,
        }
    }

    #[inline]
    pub fn is_nonzero(&self, i: usize) -> bool {
        match self {
            VoxelData::U8(v) => v[i] != 0,
            VoxelData::I16(v) => v[i] != 0,
            VoxelData::U16(v) => v[i] != 0,
            VoxelData::F32(v) => v[i] != 0.0,
        }
    }
}

/// A 3D scalar grid with physical geometry. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geometry: Geometry,
    data: VoxelData,
}

impl Volume {
    pub fn new(geometry: Geometry, data: VoxelData) -> Result<Self, VolumeError> {
        geometry.validate()?;
        let expected = geometry.num_voxels();
        if data.len() != expected {
            return Err(VolumeError::BufferLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Volume { geometry, data })
    }

    pub fn from_f32(geometry: Geometry, values: Vec<f32>) -> Result<Self, VolumeError> {
        Self::new(geometry, VoxelData::F32(values))
    }

    pub fn from_u8(geometry: Geometry, values: Vec<u8>) -> Result<Self, VolumeError> {
        Self::new(geometry, VoxelData::U8(values))
    }

    pub fn zeros(geometry: Geometry, kind: ElementKind) -> Result<Self, VolumeError> {
        geometry.validate()?;
        let n = geometry.num_voxels();
        Ok(Volume {
            geometry,
            data: VoxelData::zeros(kind, n),
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn into_data(self) -> VoxelData {
        self.data
    }

    pub fn kind(&self) -> ElementKind {
        self.data.kind()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_f32(&self) -> Result<&[f32], VolumeError> {
        match &self.data {
            VoxelData::F32(v) => Ok(v),
            other => Err(VolumeError::ElementKind {
                expected: ElementKind::F32,
                found: other.kind(),
            }),
        }
    }

    /// Same buffer, new geometry with identical dims.
    pub fn with_geometry(self, geometry: Geometry) -> Result<Self, VolumeError> {
        Volume::new(geometry, self.data)
    }
}

/// A float-32 volume whose values all lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap(Volume);

impl ProbabilityMap {
    pub fn new(volume: Volume) -> Result<Self, VolumeError> {
        let values = volume.as_f32()?;
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(VolumeError::InvalidProbability { index, value });
        }
        Ok(ProbabilityMap(volume))
    }

    pub fn from_values(geometry: Geometry, values: Vec<f32>) -> Result<Self, VolumeError> {
        Self::new(Volume::from_f32(geometry, values)?)
    }

    pub fn geometry(&self) -> &Geometry {
        self.0.geometry()
    }

    pub fn values(&self) -> &[f32] {
        match self.0.data() {
            VoxelData::F32(v) => v,
            _ => unreachable!("probability maps are always float-32"),
        }
    }

    pub fn volume(&self) -> &Volume {
        &self.0
    }

    pub fn into_volume(self) -> Volume {
        self.0
    }

    pub fn max(&self) -> f32 {
        self.values().iter().copied().fold(0.0, f32::max)
    }
}

/// Voxelwise arithmetic mean of probability maps.
///
/// Accumulates in f64 and rounds once, so the output stays within the
/// voxelwise input range. The output takes the first input's geometry.
pub fn mean_volumes(maps: &[ProbabilityMap]) -> Result<ProbabilityMap, VolumeError> {
    let first = maps.first().ok_or(VolumeError::Empty)?;
    for m in &maps[1..] {
        first.geometry().ensure_compatible(m.geometry())?;
    }
    let n = first.values().len();
    let count = maps.len() as f64;
    let mut sum = vec![0.0f64; n];
    for m in maps {
        for (s, &v) in sum.iter_mut().zip(m.values()) {
            *s += v as f64;
        }
    }
    let mean = sum.into_iter().map(|s| (s / count) as f32).collect();
    ProbabilityMap::from_values(*first.geometry(), mean)
}
