//! NIfTI-1 single-file (`.nii` / `.nii.gz`) reading and writing for 3D label
//! volumes.
//!
//! Only the fields the toolkit needs are interpreted: `dim`, `pixdim`,
//! `datatype`, `vox_offset` and the magic. Orientation (qform/sform) and
//! intensity scaling (`scl_slope`/`scl_inter`) are ignored; labels are
//! categorical and the metrics only need physical distances.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::NiftiError;
use crate::mask::{BinaryMask, Geometry};

pub const HEADER_SIZE: usize = 348;
/// Offset of the voxel data in files this module writes: header plus the
/// 4-byte empty extension block.
pub const WRITE_VOX_OFFSET: usize = 352;
pub const MAGIC: [u8; 4] = *b"n+1\0";

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_XYZT_UNITS: usize = 123;
const OFF_MAGIC: usize = 344;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Datatype {
    U8,
    I16,
    I32,
    F32,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::U8 => 2,
            Datatype::I16 => 4,
            Datatype::I32 => 8,
            Datatype::F32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self, NiftiError> {
        match code {
            2 => Ok(Datatype::U8),
            4 => Ok(Datatype::I16),
            8 => Ok(Datatype::I32),
            16 => Ok(Datatype::F32),
            other => Err(NiftiError::UnsupportedDatatype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Datatype::U8 => 1,
            Datatype::I16 => 2,
            Datatype::I32 | Datatype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ByteOrder {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeHeader {
    pub geometry: Geometry,
    pub datatype: Datatype,
    pub byte_order: ByteOrder,
}

/// Decoded voxel values, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::I16(v) => v.len(),
            VoxelData::I32(v) => v.len(),
            VoxelData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn datatype(&self) -> Datatype {
        match self {
            VoxelData::U8(_) => Datatype::U8,
            VoxelData::I16(_) => Datatype::I16,
            VoxelData::I32(_) => Datatype::I32,
            VoxelData::F32(_) => Datatype::F32,
        }
    }

    fn nonzero(&self) -> Vec<bool> {
        match self {
            VoxelData::U8(v) => v.iter().map(|&x| x != 0).collect(),
            VoxelData::I16(v) => v.iter().map(|&x| x != 0).collect(),
            VoxelData::I32(v) => v.iter().map(|&x| x != 0).collect(),
            VoxelData::F32(v) => v.iter().map(|&x| x != 0.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    header: VolumeHeader,
    data: VoxelData,
}

impl LabelVolume {
    pub fn new(geometry: Geometry, data: VoxelData) -> Result<Self, NiftiError> {
        if data.len() != geometry.len() {
            return Err(NiftiError::Data(format!(
                "{} voxels for dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(LabelVolume {
            header: VolumeHeader {
                geometry,
                datatype: data.datatype(),
                byte_order: ByteOrder::Little,
            },
            data,
        })
    }

    /// Encode a mask as a 0/1 `uint8` label volume.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let data = VoxelData::U8(mask.bits().iter().map(|&b| b as u8).collect());
        LabelVolume::new(*mask.geometry(), data).expect("mask length matches geometry")
    }

    pub fn with_byte_order(mut self, order: ByteOrder) -> Self {
        self.header.byte_order = order;
        self
    }

    pub fn header(&self) -> &VolumeHeader {
        &self.header
    }

    pub fn geometry(&self) -> &Geometry {
        &self.header.geometry
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    /// Foreground iff the stored value is nonzero.
    pub fn binarize(&self) -> BinaryMask {
        BinaryMask::from_bits(self.header.geometry, self.data.nonzero())
            .expect("voxel count matches geometry")
    }
}

struct Fields<'a> {
    raw: &'a [u8],
    order: ByteOrder,
}

impl Fields<'_> {
    fn i16_at(&self, off: usize) -> i16 {
        let b = [self.raw[off], self.raw[off + 1]];
        match self.order {
            ByteOrder::Little => i16::from_le_bytes(b),
            ByteOrder::Big => i16::from_be_bytes(b),
        }
    }

    fn f32_at(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.raw[off..off + 4].try_into().unwrap();
        match self.order {
            ByteOrder::Little => f32::from_le_bytes(b),
            ByteOrder::Big => f32::from_be_bytes(b),
        }
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

/// Parse a NIfTI-1 single file, gzip-compressed or not.
pub fn read_volume(bytes: &[u8]) -> Result<LabelVolume, NiftiError> {
    if is_gzip(bytes) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut raw)
            .map_err(|e| NiftiError::Gzip(e.to_string()))?;
        return parse_raw(&raw);
    }
    parse_raw(bytes)
}

pub fn read_volume_file(path: impl AsRef<Path>) -> Result<LabelVolume, NiftiError> {
    read_volume(&fs::read(path)?)
}

fn parse_raw(raw: &[u8]) -> Result<LabelVolume, NiftiError> {
    if raw.len() < HEADER_SIZE {
        return Err(NiftiError::TooShort(raw.len()));
    }
    let size_bytes: [u8; 4] = raw[0..4].try_into().unwrap();
    let order = match (
        i32::from_le_bytes(size_bytes),
        i32::from_be_bytes(size_bytes),
    ) {
        (348, _) => ByteOrder::Little,
        (_, 348) => ByteOrder::Big,
        (le, _) => return Err(NiftiError::HeaderLength(le)),
    };
    let magic: [u8; 4] = raw[OFF_MAGIC..OFF_MAGIC + 4].try_into().unwrap();
    if magic != MAGIC {
        return Err(NiftiError::BadMagic(magic));
    }
    let f = Fields { raw, order };

    let datatype = Datatype::from_code(f.i16_at(OFF_DATATYPE))?;

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = f.i16_at(OFF_DIM + 2 * i);
    }
    if !(1..=7).contains(&dim[0]) {
        return Err(NiftiError::Dimensionality(dim[0]));
    }
    let mut ndim = dim[0] as usize;
    while ndim > 3 && dim[ndim] == 1 {
        ndim -= 1;
    }
    if ndim != 3 {
        return Err(NiftiError::Dimensionality(dim[0]));
    }
    let mut dims = [0usize; 3];
    let mut spacing = [0f64; 3];
    for axis in 0..3 {
        let d = dim[axis + 1];
        if d < 1 {
            return Err(NiftiError::InvalidDim {
                axis: axis + 1,
                value: d,
            });
        }
        dims[axis] = d as usize;
        let p = f.f32_at(OFF_PIXDIM + 4 * (axis + 1));
        if !(p.is_finite() && p > 0.0) {
            return Err(NiftiError::InvalidSpacing {
                axis: axis + 1,
                value: p,
            });
        }
        spacing[axis] = p as f64;
    }
    let geometry = Geometry { dims, spacing };

    let vox_offset = f.f32_at(OFF_VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(NiftiError::VoxOffset(vox_offset));
    }
    let start = vox_offset as usize;
    let n = geometry.len();
    let need = n * datatype.size();
    let available = raw.len().saturating_sub(start);
    if available < need {
        return Err(NiftiError::Truncated {
            expected: need,
            actual: available,
        });
    }
    let body = &raw[start..start + need];
    let data = decode(body, datatype, order);

    Ok(LabelVolume {
        header: VolumeHeader {
            geometry,
            datatype,
            byte_order: order,
        },
        data,
    })
}

fn decode(body: &[u8], datatype: Datatype, order: ByteOrder) -> VoxelData {
    macro_rules! words {
        ($ty:ty, $n:literal) => {
            body.chunks_exact($n)
                .map(|c| {
                    let b: [u8; $n] = c.try_into().unwrap();
                    match order {
                        ByteOrder::Little => <$ty>::from_le_bytes(b),
                        ByteOrder::Big => <$ty>::from_be_bytes(b),
                    }
                })
                .collect()
        };
    }
    match datatype {
        Datatype::U8 => VoxelData::U8(body.to_vec()),
        Datatype::I16 => VoxelData::I16(words!(i16, 2)),
        Datatype::I32 => VoxelData::I32(words!(i32, 4)),
        Datatype::F32 => VoxelData::F32(words!(f32, 4)),
    }
}

/// Serialize to an uncompressed NIfTI-1 byte buffer.
pub fn encode_volume(volume: &LabelVolume) -> Result<Vec<u8>, NiftiError> {
    let order = volume.header.byte_order;
    let datatype = volume.data.datatype();
    let g = volume.header.geometry;
    if let Some(axis) = g.dims.iter().position(|&d| d > i16::MAX as usize) {
        return Err(NiftiError::Data(format!(
            "dim[{}] = {} exceeds the NIfTI-1 limit",
            axis + 1,
            g.dims[axis]
        )));
    }
    let mut out = vec![0u8; WRITE_VOX_OFFSET + g.len() * datatype.size()];

    let put_i16 = |buf: &mut [u8], off: usize, v: i16| {
        let b = match order {
            ByteOrder::Little => v.to_le_bytes(),
            ByteOrder::Big => v.to_be_bytes(),
        };
        buf[off..off + 2].copy_from_slice(&b);
    };
    let put_i32 = |buf: &mut [u8], off: usize, v: i32| {
        let b = match order {
            ByteOrder::Little => v.to_le_bytes(),
            ByteOrder::Big => v.to_be_bytes(),
        };
        buf[off..off + 4].copy_from_slice(&b);
    };
    let put_f32 = |buf: &mut [u8], off: usize, v: f32| put_i32(buf, off, v.to_bits() as i32);

    put_i32(&mut out, 0, HEADER_SIZE as i32);
    let dim = [3i16, g.dims[0] as i16, g.dims[1] as i16, g.dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put_i16(&mut out, OFF_DIM + 2 * i, *d);
    }
    put_i16(&mut out, OFF_DATATYPE, datatype.code());
    put_i16(&mut out, OFF_BITPIX, (datatype.size() * 8) as i16);
    let pixdim = [
        1.0f32,
        g.spacing[0] as f32,
        g.spacing[1] as f32,
        g.spacing[2] as f32,
        0.0,
        0.0,
        0.0,
        0.0,
    ];
    for (i, p) in pixdim.iter().enumerate() {
        put_f32(&mut out, OFF_PIXDIM + 4 * i, *p);
    }
    put_f32(&mut out, OFF_VOX_OFFSET, WRITE_VOX_OFFSET as f32);
    put_f32(&mut out, OFF_SCL_SLOPE, 1.0);
    // NIFTI_UNITS_MM
    out[OFF_XYZT_UNITS] = 2;
    out[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(&MAGIC);

    let body = &mut out[WRITE_VOX_OFFSET..];
    macro_rules! fill {
        ($v:expr, $n:literal) => {
            for (chunk, x) in body.chunks_exact_mut($n).zip($v) {
                let b = match order {
                    ByteOrder::Little => x.to_le_bytes(),
                    ByteOrder::Big => x.to_be_bytes(),
                };
                chunk.copy_from_slice(&b);
            }
        };
    }
    match &volume.data {
        VoxelData::U8(v) => body.copy_from_slice(v),
        VoxelData::I16(v) => fill!(v, 2),
        VoxelData::I32(v) => fill!(v, 4),
        VoxelData::F32(v) => fill!(v, 4),
    }
    Ok(out)
}

/// Write an uncompressed NIfTI-1 file to `dest`; returns the byte count.
pub fn write_volume(volume: &LabelVolume, dest: &mut impl Write) -> Result<usize, NiftiError> {
    let bytes = encode_volume(volume)?;
    dest.write_all(&bytes)?;
    Ok(bytes.len())
}

/// Write to `path`, gzip-compressing when the name ends in `.gz`. Returns the
/// number of bytes written to disk.
pub fn write_volume_file(volume: &LabelVolume, path: impl AsRef<Path>) -> Result<usize, NiftiError> {
    let path = path.as_ref();
    let bytes = encode_volume(volume)?;
    let gz = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    let on_disk = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(&bytes)?;
        enc.finish()?
    } else {
        bytes
    };
    fs::write(path, &on_disk)?;
    Ok(on_disk.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabelVolume {
        let g = Geometry::new([2, 2, 2], [1.0, 1.0, 1.0]).unwrap();
        LabelVolume::new(g, VoxelData::U8(vec![0, 1, 2, 3, 4, 5, 6, 7])).unwrap()
    }

    fn hand_built_header() -> Vec<u8> {
        let mut h = vec![0u8; HEADER_SIZE];
        h[0..4].copy_from_slice(&348i32.to_le_bytes());
        for (i, d) in [3i16, 2, 2, 2, 1, 1, 1, 1].iter().enumerate() {
            h[OFF_DIM + 2 * i..OFF_DIM + 2 * i + 2].copy_from_slice(&d.to_le_bytes());
        }
        h[OFF_DATATYPE..OFF_DATATYPE + 2].copy_from_slice(&2i16.to_le_bytes());
        h[OFF_BITPIX..OFF_BITPIX + 2].copy_from_slice(&8i16.to_le_bytes());
        for i in 0..4 {
            h[OFF_PIXDIM + 4 * i..OFF_PIXDIM + 4 * i + 4].copy_from_slice(&1f32.to_le_bytes());
        }
        h[OFF_VOX_OFFSET..OFF_VOX_OFFSET + 4].copy_from_slice(&348f32.to_le_bytes());
        h[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(&MAGIC);
        h
    }

    #[test]
    fn reads_hand_built_minimal_file() {
        let mut bytes = hand_built_header();
        bytes.extend_from_slice(&[0, 1, 0, 1, 1, 0, 0, 9]);
        let vol = read_volume(&bytes).unwrap();
        assert_eq!(vol.geometry().dims, [2, 2, 2]);
        assert_eq!(vol.geometry().spacing, [1.0; 3]);
        assert_eq!(vol.data(), &VoxelData::U8(vec![0, 1, 0, 1, 1, 0, 0, 9]));
        assert_eq!(vol.header().byte_order, ByteOrder::Little);
    }

    #[test]
    fn zero_volume_file_size() {
        let g = Geometry::isotropic([2, 2, 2]);
        let vol = LabelVolume::new(g, VoxelData::U8(vec![0; 8])).unwrap();
        let mut buf = Vec::new();
        let n = write_volume(&vol, &mut buf).unwrap();
        assert_eq!(n, 348 + 4 + 8);
        assert_eq!(buf.len(), n);
    }

    #[test]
    fn round_trip_anisotropic() {
        let g = Geometry::new([5, 4, 3], [0.5, 0.5, 2.0]).unwrap();
        let data: Vec<i16> = (0..60).map(|i| (i * 37 % 11) as i16 - 3).collect();
        let vol = LabelVolume::new(g, VoxelData::I16(data)).unwrap();
        let back = read_volume(&encode_volume(&vol).unwrap()).unwrap();
        assert_eq!(back, vol);
    }

    #[test]
    fn spacing_survives_as_f32() {
        let g = Geometry::new([3, 3, 3], [0.9375, 0.9375, 1.2]).unwrap();
        let vol = LabelVolume::new(g, VoxelData::U8(vec![0; 27])).unwrap();
        let back = read_volume(&encode_volume(&vol).unwrap()).unwrap();
        let s = back.geometry().spacing;
        assert_eq!(s[0], 0.9375);
        assert_eq!(s[1], 0.9375);
        assert_eq!(s[2], 1.2f32 as f64);
    }

    #[test]
    fn big_endian_matches_little_endian() {
        let le = tiny();
        let be = tiny().with_byte_order(ByteOrder::Big);
        let le_back = read_volume(&encode_volume(&le).unwrap()).unwrap();
        let be_back = read_volume(&encode_volume(&be).unwrap()).unwrap();
        assert_eq!(be_back.header().byte_order, ByteOrder::Big);
        assert_eq!(le_back.data(), be_back.data());
        assert_eq!(le_back.geometry(), be_back.geometry());
    }

    #[test]
    fn gzip_is_detected() {
        let vol = tiny();
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&encode_volume(&vol).unwrap()).unwrap();
        let gz = enc.finish().unwrap();
        assert_eq!(read_volume(&gz).unwrap(), vol);
    }

    #[test]
    fn corrupt_gzip_is_rejected() {
        let vol = tiny();
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&encode_volume(&vol).unwrap()).unwrap();
        let mut gz = enc.finish().unwrap();
        let mid = gz.len() / 2;
        gz.truncate(mid);
        assert!(matches!(read_volume(&gz), Err(NiftiError::Gzip(_))));
    }

    #[test]
    fn malformed_headers_are_named() {
        let good = encode_volume(&tiny()).unwrap();

        let mut b = good.clone();
        b[OFF_MAGIC..OFF_MAGIC + 4].fill(0);
        let err = read_volume(&b).unwrap_err();
        assert!(matches!(err, NiftiError::BadMagic(_)));
        assert!(err.to_string().contains("bad magic"));

        let mut b = good.clone();
        b[0..4].copy_from_slice(&540i32.to_le_bytes());
        assert!(matches!(read_volume(&b), Err(NiftiError::HeaderLength(540))));

        let mut b = good.clone();
        b[OFF_DATATYPE..OFF_DATATYPE + 2].copy_from_slice(&64i16.to_le_bytes());
        assert!(matches!(
            read_volume(&b),
            Err(NiftiError::UnsupportedDatatype(64))
        ));

        let mut b = good.clone();
        b[OFF_DIM..OFF_DIM + 2].copy_from_slice(&2i16.to_le_bytes());
        assert!(matches!(read_volume(&b), Err(NiftiError::Dimensionality(2))));

        let mut b = good.clone();
        b.truncate(good.len() - 3);
        assert!(matches!(
            read_volume(&b),
            Err(NiftiError::Truncated {
                expected: 8,
                actual: 5
            })
        ));

        let mut b = good.clone();
        b[OFF_PIXDIM + 8..OFF_PIXDIM + 12].copy_from_slice(&0f32.to_le_bytes());
        assert!(matches!(
            read_volume(&b),
            Err(NiftiError::InvalidSpacing { axis: 2, .. })
        ));

        let mut b = good.clone();
        b[OFF_DIM + 6..OFF_DIM + 8].copy_from_slice(&0i16.to_le_bytes());
        assert!(matches!(
            read_volume(&b),
            Err(NiftiError::InvalidDim { axis: 3, value: 0 })
        ));

        assert!(matches!(
            read_volume(&good[..100]),
            Err(NiftiError::TooShort(100))
        ));
    }

    #[test]
    fn singleton_fourth_axis_is_squeezed() {
        let mut b = encode_volume(&tiny()).unwrap();
        b[OFF_DIM..OFF_DIM + 2].copy_from_slice(&4i16.to_le_bytes());
        let vol = read_volume(&b).unwrap();
        assert_eq!(vol.geometry().dims, [2, 2, 2]);

        b[OFF_DIM + 8..OFF_DIM + 10].copy_from_slice(&2i16.to_le_bytes());
        assert!(matches!(read_volume(&b), Err(NiftiError::Dimensionality(4))));
    }

    #[test]
    fn extension_bytes_are_skipped() {
        let vol = tiny();
        let plain = encode_volume(&vol).unwrap();
        let mut b = plain[..WRITE_VOX_OFFSET].to_vec();
        b[348] = 1;
        b.extend_from_slice(&[0xAB; 16]);
        b.extend_from_slice(&plain[WRITE_VOX_OFFSET..]);
        let off = (WRITE_VOX_OFFSET + 16) as f32;
        b[OFF_VOX_OFFSET..OFF_VOX_OFFSET + 4].copy_from_slice(&off.to_le_bytes());
        assert_eq!(read_volume(&b).unwrap(), vol);
    }

    #[test]
    fn binarize_nonzero_rule() {
        let g = Geometry::isotropic([3, 1, 1]);
        let zeros = LabelVolume::new(g, VoxelData::U8(vec![0; 3])).unwrap();
        assert_eq!(zeros.binarize().count(), 0);

        let labels = LabelVolume::new(g, VoxelData::U8(vec![0, 2, 255])).unwrap();
        assert_eq!(labels.binarize().bits(), &[false, true, true]);

        let binary = LabelVolume::new(g, VoxelData::I32(vec![1, 0, 1])).unwrap();
        assert_eq!(binary.binarize().bits(), &[true, false, true]);

        let floats = LabelVolume::new(g, VoxelData::F32(vec![0.0, -0.5, 0.0])).unwrap();
        assert_eq!(floats.binarize().bits(), &[false, true, false]);
    }

    #[test]
    fn binarize_is_idempotent() {
        let g = Geometry::isotropic([4, 1, 1]);
        let vol = LabelVolume::new(g, VoxelData::I16(vec![0, 7, -2, 0])).unwrap();
        let mask = vol.binarize();
        assert_eq!(LabelVolume::from_mask(&mask).binarize(), mask);
    }
}
