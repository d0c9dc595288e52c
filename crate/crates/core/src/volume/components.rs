//! 26-connected component labeling.
//!
//! Two raster passes with a union-find over provisional labels. Final ids are
//! assigned in order of each component's first voxel in the x-fastest scan,
//! so the labeling is independent of how the union-find happened to merge.

use crate::mask::{BinaryMask, BoundingBox, Geometry};

/// One connected component. `voxels` holds linear indices in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: u32,
    pub voxels: Vec<usize>,
    pub bbox: BoundingBox,
}

impl Component {
    pub fn voxel_count(&self) -> usize {
        self.voxels.len()
    }
}

/// A partition of a mask's foreground into labeled components.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionSet {
    geometry: Geometry,
    labels: Vec<u32>,
    components: Vec<Component>,
}

impl LesionSet {
    pub(crate) fn from_parts(geometry: Geometry, labels: Vec<u32>, components: Vec<Component>) -> Self {
        LesionSet {
            geometry,
            labels,
            components,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Per-voxel component id, 0 for background.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Component> {
        self.components
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.components[i])
    }

    pub fn foreground_count(&self) -> usize {
        self.components.iter().map(Component::voxel_count).sum()
    }

    pub fn component_mask(&self, id: u32) -> Option<BinaryMask> {
        let c = self.get(id)?;
        Some(BinaryMask::from_indices(self.geometry, c.voxels.iter().copied()))
    }

    /// Keep only components for which `keep` returns true. Retained
    /// components keep their ids; dropped voxels become background.
    pub fn retain(&self, mut keep: impl FnMut(&Component) -> bool) -> LesionSet {
        let mut labels = self.labels.clone();
        let mut components = Vec::with_capacity(self.components.len());
        for c in &self.components {
            if keep(c) {
                components.push(c.clone());
            } else {
                for &v in &c.voxels {
                    labels[v] = 0;
                }
            }
        }
        LesionSet {
            geometry: self.geometry,
            labels,
            components,
        }
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let root = ra.min(rb);
        self.parent[ra.max(rb) as usize] = root;
        root
    }
}

/// Offsets of the 13 neighbors that precede a voxel in the scan.
fn backward_offsets() -> Vec<[i64; 3]> {
    let mut out = Vec::with_capacity(13);
    for dz in -1..=0i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if dz == 0 && (dy > 0 || (dy == 0 && dx >= 0)) {
                    continue;
                }
                out.push([dx, dy, dz]);
            }
        }
    }
    out
}

pub fn connected_components(mask: &BinaryMask) -> LesionSet {
    let g = *mask.geometry();
    let [nx, ny, nz] = g.dims;
    let bits = mask.bits();
    let offsets = backward_offsets();
    let stride = |d: [i64; 3]| d[0] + nx as i64 * (d[1] + ny as i64 * d[2]);

    // provisional label + 1, 0 = background
    let mut provisional = vec![0u32; bits.len()];
    let mut sets = DisjointSet { parent: Vec::new() };

    let mut i = 0usize;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if bits[i] {
                    let mut label: Option<u32> = None;
                    for off in &offsets {
                        let (qx, qy, qz) = (x as i64 + off[0], y as i64 + off[1], z as i64 + off[2]);
                        if qx < 0 || qy < 0 || qz < 0 || qx >= nx as i64 || qy >= ny as i64 {
                            continue;
                        }
                        let q = (i as i64 + stride(*off)) as usize;
                        let lq = provisional[q];
                        if lq != 0 {
                            label = Some(match label {
                                None => lq - 1,
                                Some(l) => sets.union(l, lq - 1),
                            });
                        }
                    }
                    let l = match label {
                        Some(l) => l,
                        None => sets.make(),
                    };
                    provisional[i] = l + 1;
                }
                i += 1;
            }
        }
    }

    let mut final_of_root = vec![0u32; sets.parent.len()];
    let mut labels = provisional;
    let mut components: Vec<Component> = Vec::new();
    for (i, slot) in labels.iter_mut().enumerate() {
        if *slot == 0 {
            continue;
        }
        let root = sets.find(*slot - 1) as usize;
        if final_of_root[root] == 0 {
            components.push(Component {
                id: components.len() as u32 + 1,
                voxels: Vec::new(),
                bbox: BoundingBox::point(g.coords(i)),
            });
            final_of_root[root] = components.len() as u32;
        }
        let id = final_of_root[root];
        *slot = id;
        let c = &mut components[id as usize - 1];
        c.voxels.push(i);
        c.bbox.include(g.coords(i));
    }

    LesionSet::from_parts(g, labels, components)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryMask::empty(Geometry::isotropic([4, 4, 4]));
        let set = connected_components(&m);
        assert!(set.is_empty());
        assert!(set.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn corner_neighbors_join() {
        let g = Geometry::isotropic([3, 3, 3]);
        let m = BinaryMask::from_coords(g, [[0, 0, 0], [1, 1, 1]]);
        let set = connected_components(&m);
        assert_eq!(set.len(), 1);
        assert_eq!(set.components()[0].voxel_count(), 2);
    }

    #[test]
    fn gap_separates() {
        let g = Geometry::isotropic([5, 1, 1]);
        let m = BinaryMask::from_coords(g, [[0, 0, 0], [2, 0, 0], [4, 0, 0]]);
        let set = connected_components(&m);
        assert_eq!(set.len(), 3);
        assert_eq!(set.labels(), &[1, 0, 2, 0, 3]);
    }

    #[test]
    fn ids_follow_first_encounter() {
        // A "V" whose arms are only joined on a later slice: the union-find
        // has to merge two provisional labels.
        let g = Geometry::isotropic([7, 3, 2]);
        let m = BinaryMask::from_coords(
            g,
            [
                [0, 0, 0],
                [3, 0, 0],
                [6, 0, 0],
                [0, 0, 1],
                [1, 1, 1],
                [2, 2, 1],
                [3, 2, 1],
                [4, 2, 1],
                [5, 1, 1],
                [6, 0, 1],
            ],
        );
        let set = connected_components(&m);
        assert_eq!(set.len(), 2);
        assert_eq!(set.labels()[0], 1);
        assert_eq!(set.labels()[3], 2);
        assert_eq!(set.labels()[6], 1);
        let c1 = set.get(1).unwrap();
        assert_eq!(c1.voxel_count(), 9);
        assert_eq!(c1.bbox, BoundingBox { min: [0, 0, 0], max: [6, 2, 1] });
        assert_eq!(set.get(2).unwrap().voxel_count(), 1);
    }

    #[test]
    fn retain_keeps_ids() {
        let g = Geometry::isotropic([5, 1, 1]);
        let m = BinaryMask::from_coords(g, [[0, 0, 0], [2, 0, 0], [3, 0, 0]]);
        let set = connected_components(&m);
        let kept = set.retain(|c| c.voxel_count() >= 2);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.components()[0].id, 2);
        assert_eq!(kept.labels(), &[0, 0, 2, 2, 0]);
        assert!(kept.get(1).is_none());
    }
}
