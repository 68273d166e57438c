//! Binary masks and 4-connected component labeling.
//!
//! Labeling is the two-pass Hoshen-Kopelman scheme: a raster pass assigns
//! provisional labels and records equivalences in a union-find forest, a
//! second pass resolves every provisional label to its root. Final ids are
//! handed out in raster order of each component's first pixel, so the same
//! mask always yields the same ids.

use thiserror::Error;

use crate::types::{ClassId, LabelMap};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("mask dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("class {class} out of range for {class_count} classes")]
    ClassOutOfRange { class: ClassId, class_count: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask bit count");
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.bits[i]
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> BinaryMask {
        Self::new(self.width, self.height, self.bits.iter().map(|b| !b).collect())
    }

    /// Indices of set pixels in raster order.
    pub fn set_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<(), MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// In-place union; used by aggregation loops that avoid reallocating.
    pub fn union_with(&mut self, other: &BinaryMask) -> Result<(), MaskError> {
        self.check_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }
}

pub fn mask_intersect(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask, MaskError> {
    a.check_dims(b)?;
    let bits = a.bits.iter().zip(&b.bits).map(|(&x, &y)| x && y).collect();
    Ok(BinaryMask::new(a.width, a.height, bits))
}

pub fn mask_union(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask, MaskError> {
    a.check_dims(b)?;
    let bits = a.bits.iter().zip(&b.bits).map(|(&x, &y)| x || y).collect();
    Ok(BinaryMask::new(a.width, a.height, bits))
}

pub fn mask_area(a: &BinaryMask) -> usize {
    a.area()
}

/// Mask of pixels whose label equals `class`.
pub fn extract_class_mask(
    map: &LabelMap,
    class: ClassId,
    class_count: usize,
) -> Result<BinaryMask, MaskError> {
    if class as usize >= class_count {
        return Err(MaskError::ClassOutOfRange { class, class_count });
    }
    let bits = map.labels().iter().map(|&l| l == class).collect();
    Ok(BinaryMask::new(map.width(), map.height(), bits))
}

/// Per-pixel component ids (0 = background) with per-component areas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentLabeling {
    width: usize,
    height: usize,
    ids: Vec<u32>,
    areas: Vec<usize>,
}

impl ComponentLabeling {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Component id per pixel, row-major; 0 is background.
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Number of components `M`; ids run `1..=M`.
    pub fn count(&self) -> usize {
        self.areas.len()
    }

    /// `areas()[j]` is the area of component `j + 1`.
    pub fn areas(&self) -> &[usize] {
        &self.areas
    }

    pub fn area_of(&self, id: u32) -> usize {
        self.areas[id as usize - 1]
    }

    /// Pixel indices of every component, in raster order, indexed by `id - 1`.
    pub fn pixel_lists(&self) -> Vec<Vec<usize>> {
        let mut lists: Vec<Vec<usize>> = self.areas.iter().map(|&a| Vec::with_capacity(a)).collect();
        for (i, &id) in self.ids.iter().enumerate() {
            if id != 0 {
                lists[id as usize - 1].push(i);
            }
        }
        lists
    }

    pub fn component_mask(&self, id: u32) -> BinaryMask {
        BinaryMask::new(
            self.width,
            self.height,
            self.ids.iter().map(|&v| v == id).collect(),
        )
    }

    /// Union of all components.
    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::new(
            self.width,
            self.height,
            self.ids.iter().map(|&v| v != 0).collect(),
        )
    }
}

/// Union-find over provisional labels with path halving and union by size.
struct DisjointSets {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSets {
    fn new() -> Self {
        Self {
            parent: Vec::new(),
            size: Vec::new(),
        }
    }

    fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.size.push(1);
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

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
    }
}

const NONE: u32 = u32::MAX;

/// Labels the maximal 4-connected regions of set pixels.
pub fn connected_components(mask: &BinaryMask) -> ComponentLabeling {
    let (w, h) = (mask.width, mask.height);
    let mut provisional = vec![NONE; w * h];
    let mut sets = DisjointSets::new();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.bits[i] {
                continue;
            }
            let west = if x > 0 { provisional[i - 1] } else { NONE };
            let north = if y > 0 { provisional[i - w] } else { NONE };
            provisional[i] = match (west, north) {
                (NONE, NONE) => sets.make_set(),
                (l, NONE) | (NONE, l) => l,
                (a, b) => {
                    sets.union(a, b);
                    a
                }
            };
        }
    }

    let mut final_id = vec![0u32; sets.parent.len()];
    let mut areas: Vec<usize> = Vec::new();
    let mut ids = vec![0u32; w * h];
    for (i, &p) in provisional.iter().enumerate() {
        if p == NONE {
            continue;
        }
        let root = sets.find(p) as usize;
        if final_id[root] == 0 {
            areas.push(0);
            final_id[root] = areas.len() as u32;
        }
        let id = final_id[root];
        ids[i] = id;
        areas[id as usize - 1] += 1;
    }

    ComponentLabeling {
        width: w,
        height: h,
        ids,
        areas,
    }
}

/// Removes components smaller than `min_area` pixels and re-compacts the
/// surviving ids to `1..=M'` in their original order.
pub fn filter_components(labeling: &ComponentLabeling, min_area: usize) -> ComponentLabeling {
    let mut remap = vec![0u32; labeling.areas.len() + 1];
    let mut areas = Vec::new();
    for (j, &a) in labeling.areas.iter().enumerate() {
        if a >= min_area {
            areas.push(a);
            remap[j + 1] = areas.len() as u32;
        }
    }
    let ids = labeling.ids.iter().map(|&id| remap[id as usize]).collect();
    ComponentLabeling {
        width: labeling.width,
        height: labeling.height,
        ids,
        areas,
    }
}
