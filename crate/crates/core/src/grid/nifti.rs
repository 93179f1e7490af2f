//! Minimal single-file NIfTI-1 (.nii) codec.
//!
//! Supported subset: little-endian, float32 payload, 3D scalar volumes and
//! 4D vector fields (last dim = components). `scl_slope`/`scl_inter` are
//! honored on read and written as identity. Orientation fields are ignored;
//! the grid convention is voxel (0,0,0) center at the physical origin.

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Modality, Volume};
use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use ndarray::Array3;
use std::io::Read;
use std::path::Path;

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const DT_FLOAT32: i16 = 16;

// byte offsets inside the header
const OFF_SIZEOF_HDR: usize = 0;
const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_MAGIC: usize = 344;

/// Raw decoded NIfTI payload: dims (without the ndim slot), mm spacing for
/// the first three axes, and x-fastest voxel data rescaled by scl.
pub(crate) struct RawNifti {
    pub dims: Vec<usize>,
    pub spacing: [f32; 3],
    pub data: Vec<f32>,
}

pub(crate) fn read_raw(path: &Path) -> Result<RawNifti> {
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;

    if bytes.len() < VOX_OFFSET {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!(
                "file truncated: {} bytes, need at least {VOX_OFFSET} for header",
                bytes.len()
            ),
        });
    }
    let sizeof_hdr = LittleEndian::read_i32(&bytes[OFF_SIZEOF_HDR..]);
    if sizeof_hdr != HEADER_SIZE as i32 {
        // 1_543_569_408 is 348 byte-swapped: a big-endian file
        let message = if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
            "big-endian NIfTI not supported".to_string()
        } else {
            format!("sizeof_hdr = {sizeof_hdr}, expected 348")
        };
        return Err(Error::Parse {
            offset: OFF_SIZEOF_HDR,
            message,
        });
    }
    let magic = &bytes[OFF_MAGIC..OFF_MAGIC + 4];
    if magic != b"n+1\0" {
        return Err(Error::Parse {
            offset: OFF_MAGIC,
            message: format!("bad magic {magic:?}, expected \"n+1\\0\""),
        });
    }
    let datatype = LittleEndian::read_i16(&bytes[OFF_DATATYPE..]);
    if datatype != DT_FLOAT32 {
        return Err(Error::Parse {
            offset: OFF_DATATYPE,
            message: format!("datatype {datatype} unsupported, expected float32 (16)"),
        });
    }
    let ndim = LittleEndian::read_i16(&bytes[OFF_DIM..]) as usize;
    if !(1..=7).contains(&ndim) {
        return Err(Error::Parse {
            offset: OFF_DIM,
            message: format!("ndim {ndim} out of range"),
        });
    }
    let mut dims = Vec::with_capacity(ndim);
    for d in 0..ndim {
        let v = LittleEndian::read_i16(&bytes[OFF_DIM + 2 * (d + 1)..]);
        if v <= 0 {
            return Err(Error::Parse {
                offset: OFF_DIM + 2 * (d + 1),
                message: format!("dim[{}] = {v} must be positive", d + 1),
            });
        }
        dims.push(v as usize);
    }
    let mut spacing = [1.0f32; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let v = LittleEndian::read_f32(&bytes[OFF_PIXDIM + 4 * (a + 1)..]);
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Parse {
                offset: OFF_PIXDIM + 4 * (a + 1),
                message: format!("pixdim[{}] = {v} must be positive", a + 1),
            });
        }
        *s = v;
    }
    let vox_offset = LittleEndian::read_f32(&bytes[OFF_VOX_OFFSET..]) as usize;
    if vox_offset < VOX_OFFSET || vox_offset > bytes.len() {
        return Err(Error::Parse {
            offset: OFF_VOX_OFFSET,
            message: format!("vox_offset {vox_offset} out of range"),
        });
    }
    let scl_slope = LittleEndian::read_f32(&bytes[OFF_SCL_SLOPE..]);
    let scl_inter = LittleEndian::read_f32(&bytes[OFF_SCL_INTER..]);

    let n_vox: usize = dims.iter().product();
    let need = n_vox * 4;
    let avail = bytes.len() - vox_offset;
    if avail < need {
        return Err(Error::Integrity(format!(
            "payload holds {avail} bytes but header dims {dims:?} require {need}"
        )));
    }
    let mut data = vec![0.0f32; n_vox];
    LittleEndian::read_f32_into(&bytes[vox_offset..vox_offset + need], &mut data);
    if scl_slope != 0.0 && (scl_slope != 1.0 || scl_inter != 0.0) {
        for v in &mut data {
            *v = scl_slope * *v + scl_inter;
        }
    }
    Ok(RawNifti {
        dims,
        spacing,
        data,
    })
}

pub(crate) fn write_raw(path: &Path, dims: &[usize], spacing: [f32; 3], data: &[f32]) -> Result<()> {
    let n_vox: usize = dims.iter().product();
    if n_vox != data.len() {
        return Err(Error::Integrity(format!(
            "dims {dims:?} imply {n_vox} voxels, got {}",
            data.len()
        )));
    }
    if dims.len() > 7 || dims.is_empty() {
        return Err(Error::invalid(format!("ndim {} unsupported", dims.len())));
    }
    let mut header = vec![0u8; VOX_OFFSET];
    LittleEndian::write_i32(&mut header[OFF_SIZEOF_HDR..], HEADER_SIZE as i32);
    LittleEndian::write_i16(&mut header[OFF_DIM..], dims.len() as i16);
    for (d, &n) in dims.iter().enumerate() {
        LittleEndian::write_i16(&mut header[OFF_DIM + 2 * (d + 1)..], n as i16);
    }
    for d in dims.len()..7 {
        LittleEndian::write_i16(&mut header[OFF_DIM + 2 * (d + 1)..], 1);
    }
    LittleEndian::write_i16(&mut header[OFF_DATATYPE..], DT_FLOAT32);
    LittleEndian::write_i16(&mut header[OFF_BITPIX..], 32);
    LittleEndian::write_f32(&mut header[OFF_PIXDIM..], 1.0); // qfac
    for (a, &s) in spacing.iter().enumerate() {
        LittleEndian::write_f32(&mut header[OFF_PIXDIM + 4 * (a + 1)..], s);
    }
    for d in 3..7 {
        LittleEndian::write_f32(&mut header[OFF_PIXDIM + 4 * (d + 1)..], 1.0);
    }
    LittleEndian::write_f32(&mut header[OFF_VOX_OFFSET..], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut header[OFF_SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut header[OFF_SCL_INTER..], 0.0);
    header[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(b"n+1\0");

    let mut out = Vec::with_capacity(VOX_OFFSET + data.len() * 4);
    out.extend_from_slice(&header);
    for &v in data {
        out.write_f32::<LittleEndian>(v)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a 3D float32 volume. The modality tag is not stored in the file and
/// must be supplied by the caller.
pub fn read_volume(path: &Path, modality: Modality) -> Result<Volume> {
    let raw = read_raw(path)?;
    if raw.dims.len() != 3 {
        return Err(Error::Integrity(format!(
            "expected a 3D volume, file has {} dims {:?}",
            raw.dims.len(),
            raw.dims
        )));
    }
    let (nx, ny, nz) = (raw.dims[0], raw.dims[1], raw.dims[2]);
    // file order is x-fastest; Array3 is C-order (z fastest)
    let mut data = Array3::<f32>::zeros((nx, ny, nz));
    let mut idx = 0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                data[[i, j, k]] = raw.data[idx];
                idx += 1;
            }
        }
    }
    Volume::new(data, raw.spacing, modality)
}

pub fn write_volume(v: &Volume, path: &Path) -> Result<()> {
    let [nx, ny, nz] = v.shape();
    let mut flat = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                flat.push(v.data()[[i, j, k]]);
            }
        }
    }
    write_raw(path, &[nx, ny, nz], v.spacing(), &flat)
}

/// Reads a mask stored as a float32 NIfTI; values > 0.5 become 1.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let v = read_volume(path, Modality::Phantom)?;
    let data = v.data().mapv(|x| u8::from(x > 0.5));
    BinaryMask::new(data, v.spacing())
}

pub fn write_mask(m: &BinaryMask, path: &Path) -> Result<()> {
    let [nx, ny, nz] = m.shape();
    let mut flat = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                flat.push(m.data()[[i, j, k]] as f32);
            }
        }
    }
    write_raw(path, &[nx, ny, nz], m.spacing(), &flat)
}
