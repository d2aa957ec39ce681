//! Voxel adjacency in 3D.

use serde::{Deserialize, Serialize};

use crate::volume::Geometry;

/// Faces (6), faces and edges (18), or faces, edges and corners (26).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nonzero = (dx != 0) as u8 + (dy != 0) as u8 + (dz != 0) as u8;
                    let keep = match self {
                        Connectivity::Six => nonzero == 1,
                        Connectivity::Eighteen => nonzero == 1 || nonzero == 2,
                        Connectivity::TwentySix => nonzero >= 1,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    pub fn count(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(format!("connectivity must be 6, 18 or 26, got {v}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        c.count()
    }
}

impl std::str::FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v: u8 = s
            .trim()
            .parse()
            .map_err(|_| format!("connectivity must be 6, 18 or 26, got {s}"))?;
        Connectivity::try_from(v)
    }
}

/// Precomputed neighbor offsets for one grid.
pub(crate) struct Neighbors {
    dims: [i64; 3],
    offsets: Vec<[i64; 3]>,
}

impl Neighbors {
    pub(crate) fn new(geometry: &Geometry, connectivity: Connectivity) -> Self {
        Neighbors {
            dims: geometry.dims.map(|d| d as i64),
            offsets: connectivity.offsets(),
        }
    }

    /// Calls `f` with the linear index of every in-bounds neighbor of `linear`.
    #[inline]
    pub(crate) fn for_each(&self, linear: usize, mut f: impl FnMut(usize)) {
        let [nx, ny, nz] = self.dims;
        let l = linear as i64;
        let (x, y, z) = (l % nx, (l / nx) % ny, l / (nx * ny));
        for o in &self.offsets {
            let (xx, yy, zz) = (x + o[0], y + o[1], z + o[2]);
            if xx >= 0 && yy >= 0 && zz >= 0 && xx < nx && yy < ny && zz < nz {
                f((xx + nx * (yy + ny * zz)) as usize);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_counts() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
    }

    #[test]
    fn parse_and_serde() {
        assert_eq!(
            "18".parse::<Connectivity>().unwrap(),
            Connectivity::Eighteen
        );
        assert!("8".parse::<Connectivity>().is_err());
        assert_eq!(serde_json::to_string(&Connectivity::Six).unwrap(), "6");
        assert!(serde_json::from_str::<Connectivity>("4").is_err());
    }

    #[test]
    fn corner_voxel_neighbors() {
        let g = Geometry::with_dims([3, 3, 3]).unwrap();
        let mut seen = vec![];
        Neighbors::new(&g, Connectivity::TwentySix).for_each(0, |n| seen.push(n));
        assert_eq!(seen.len(), 7);
        let mut six = vec![];
        Neighbors::new(&g, Connectivity::Six).for_each(13, |n| six.push(n));
        six.sort();
        assert_eq!(six, vec![4, 10, 12, 14, 16, 22]);
    }
}
