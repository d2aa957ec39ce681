use serde::{Deserialize, Serialize};

use crate::neighborhood::{Connectivity, Neighbors};
use crate::volume::Volume;

/// One connected component of a ground-truth lesion mask.
/// `voxels` holds sorted linear indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtLesion {
    pub lesion_id: usize,
    pub voxels: Vec<usize>,
}

/// Connected components of the nonzero voxels. Ids follow the smallest
/// member linear index.
pub fn label_components(mask: &Volume, connectivity: Connectivity) -> Vec<GtLesion> {
    let data = mask.data();
    let neighbors = Neighbors::new(mask.geometry(), connectivity);
    let mut visited = vec![false; data.len()];
    let mut lesions = Vec::new();
    for start in 0..data.len() {
        if visited[start] || !data.is_nonzero(start) {
            continue;
        }
        visited[start] = true;
        let mut voxels = vec![start];
        let mut head = 0;
        while head < voxels.len() {
            let v = voxels[head];
            head += 1;
            neighbors.for_each(v, |n| {
                if !visited[n] && data.is_nonzero(n) {
                    visited[n] = true;
                    voxels.push(n);
                }
            });
        }
        voxels.sort_unstable();
        lesions.push(GtLesion {
            lesion_id: lesions.len(),
            voxels,
        });
    }
    lesions
}
