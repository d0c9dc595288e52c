use crate::mask::BinaryMask;

/// One dilation by the full 3×3×3 structuring element, clipped at the grid
/// boundary. The box element is separable, so this runs as three 1-voxel
/// max filters, one per axis.
pub fn dilate_once(mask: &BinaryMask) -> BinaryMask {
    let g = *mask.geometry();
    let [nx, ny, nz] = g.dims;
    let mut cur = mask.bits().to_vec();
    let mut next = vec![false; cur.len()];

    let strides = [1, nx, nx * ny];
    for (axis, &stride) in strides.iter().enumerate() {
        let n = g.dims[axis];
        for (i, out) in next.iter_mut().enumerate() {
            let pos = (i / stride) % n;
            let mut v = cur[i];
            if pos > 0 {
                v |= cur[i - stride];
            }
            if pos + 1 < n {
                v |= cur[i + stride];
            }
            *out = v;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    debug_assert_eq!(cur.len(), nx * ny * nz);
    BinaryMask::from_bits(g, cur).expect("same geometry")
}

/// Foreground voxels with at least one face neighbor that is background or
/// outside the grid.
pub fn surface_mask(mask: &BinaryMask) -> BinaryMask {
    let g = *mask.geometry();
    let [nx, ny, _] = g.dims;
    let bits = mask.bits();
    let strides = [1, nx, nx * ny];
    let mut out = BinaryMask::empty(g);
    for i in mask.foreground() {
        let c = g.coords(i);
        let exposed = (0..3).any(|axis| {
            let s = strides[axis];
            c[axis] == 0 || c[axis] + 1 == g.dims[axis] || !bits[i - s] || !bits[i + s]
        });
        if exposed {
            out.set(i, true);
        }
    }
    out
}

pub fn surface_voxels(mask: &BinaryMask) -> Vec<[usize; 3]> {
    let s = surface_mask(mask);
    s.foreground().map(|i| s.geometry().coords(i)).collect()
}
