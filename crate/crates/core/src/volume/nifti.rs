//! Minimal NIfTI-1 reader/writer.
//!
//! Deliberately a small subset: single-file `.nii`, uncompressed,
//! little-endian, datatypes int16 (code 4) and float32 (code 16). That is
//! enough for the pipeline's own round-trips and externally converted inputs.

use super::Volume;
use crate::error::{Error, Result};
use std::fs;
use std::io::Write as _;
use std::path::Path;

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

fn read_i16(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn read_i32(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn read_f32(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Read a single-file uncompressed little-endian NIfTI-1 volume.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| Error::io(&pstr, e))?;
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        return Err(Error::nifti(&pstr, "gzip-compressed NIfTI is not supported; decompress to .nii first"));
    }
    if bytes.len() < VOX_OFFSET {
        return Err(Error::nifti(&pstr, format!("file too small ({} bytes) for a NIfTI-1 header", bytes.len())));
    }
    let sizeof_hdr = read_i32(&bytes, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        // 348 byte-swapped reads as 1543569408
        if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
            return Err(Error::nifti(&pstr, "big-endian NIfTI is not supported (sizeof_hdr is byte-swapped)"));
        }
        return Err(Error::nifti(&pstr, format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
    }
    let magic = &bytes[344..348];
    if magic == b"ni1\0" {
        return Err(Error::nifti(&pstr, "magic is \"ni1\\0\" (detached header .hdr/.img pair); only single-file \"n+1\\0\" is supported"));
    }
    if magic != b"n+1\0" {
        return Err(Error::nifti(&pstr, format!("magic is {:?}, expected \"n+1\\0\"", String::from_utf8_lossy(magic))));
    }
    let ndim = read_i16(&bytes, 40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::nifti(&pstr, format!("dim[0] is {ndim}, expected 1..=7")));
    }
    let mut dim = [1usize; 7];
    for (ax, d) in dim.iter_mut().enumerate().take(ndim as usize) {
        let v = read_i16(&bytes, 42 + 2 * ax);
        if v < 1 {
            return Err(Error::nifti(&pstr, format!("dim[{}] is {v}, must be >= 1", ax + 1)));
        }
        *d = v as usize;
    }
    if dim[3..].iter().any(|&d| d != 1) {
        return Err(Error::nifti(&pstr, "only 3D volumes are supported (dim[4..] must be 1)"));
    }
    let dims = [dim[0], dim[1], dim[2]];
    let datatype = read_i16(&bytes, 70);
    let mut spacing = [0.0f64; 3];
    for (ax, s) in spacing.iter_mut().enumerate() {
        let v = read_f32(&bytes, 76 + 4 * (ax + 1)) as f64; // pixdim[1..3]
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::nifti(&pstr, format!("pixdim[{}] is {v}, must be positive", ax + 1)));
        }
        *s = v;
    }
    let vox_offset = read_f32(&bytes, 108) as usize;
    let scl_slope = read_f32(&bytes, 112);
    let scl_inter = read_f32(&bytes, 116);
    let qform_code = read_i16(&bytes, 252);
    let origin = if qform_code > 0 {
        [
            read_f32(&bytes, 268) as f64,
            read_f32(&bytes, 272) as f64,
            read_f32(&bytes, 276) as f64,
        ]
    } else {
        [0.0; 3]
    };
    let n = dims[0] * dims[1] * dims[2];
    let bytes_per = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => {
            return Err(Error::nifti(
                &pstr,
                format!("datatype code {other} is not supported (only int16 = 4 and float32 = 16)"),
            ))
        }
    };
    let data_start = vox_offset.max(VOX_OFFSET);
    if bytes.len() < data_start + n * bytes_per {
        return Err(Error::nifti(
            &pstr,
            format!("file truncated: need {} data bytes at offset {data_start}", n * bytes_per),
        ));
    }
    let raw = &bytes[data_start..data_start + n * bytes_per];
    let apply_scale = scl_slope != 0.0 && !(scl_slope == 1.0 && scl_inter == 0.0);
    let mut data = Vec::with_capacity(n);
    match datatype {
        DT_INT16 => {
            for c in raw.chunks_exact(2) {
                let v = i16::from_le_bytes([c[0], c[1]]) as f32;
                data.push(if apply_scale { v * scl_slope + scl_inter } else { v });
            }
        }
        DT_FLOAT32 => {
            for c in raw.chunks_exact(4) {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                data.push(if apply_scale { v * scl_slope + scl_inter } else { v });
            }
        }
        _ => unreachable!(),
    }
    Volume::new(dims, spacing, origin, data)
}

/// Write a volume as float32 single-file NIfTI-1, readable by [`read_nifti`].
pub fn write_nifti(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let mut header = vec![0u8; VOX_OFFSET];
    let put_i32 = |h: &mut [u8], off: usize, v: i32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());
    let put_i16 = |h: &mut [u8], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    let dims = vol.dims();
    let spacing = vol.spacing();
    let origin = vol.origin();
    put_i32(&mut header, 0, HEADER_SIZE as i32);
    put_i16(&mut header, 40, 3); // dim[0]
    for ax in 0..3 {
        put_i16(&mut header, 42 + 2 * ax, dims[ax] as i16);
    }
    for ax in 3..7 {
        put_i16(&mut header, 42 + 2 * ax, 1);
    }
    put_i16(&mut header, 70, DT_FLOAT32);
    put_i16(&mut header, 72, 32); // bitpix
    put_f32(&mut header, 76, 1.0); // pixdim[0] = qfac
    for ax in 0..3 {
        put_f32(&mut header, 76 + 4 * (ax + 1), spacing[ax] as f32);
    }
    put_f32(&mut header, 108, VOX_OFFSET as f32);
    put_f32(&mut header, 112, 1.0); // scl_slope
    put_f32(&mut header, 116, 0.0); // scl_inter
    header[123] = 2; // xyzt_units: mm
    put_i16(&mut header, 252, 1); // qform_code: identity quaternion
    put_i16(&mut header, 254, 1); // sform_code
    // quatern_b/c/d = 0 -> identity rotation
    put_f32(&mut header, 268, origin[0] as f32);
    put_f32(&mut header, 272, origin[1] as f32);
    put_f32(&mut header, 276, origin[2] as f32);
    // srow: diagonal spacing with origin translation
    put_f32(&mut header, 280, spacing[0] as f32);
    put_f32(&mut header, 292, origin[0] as f32);
    put_f32(&mut header, 300, spacing[1] as f32);
    put_f32(&mut header, 308, origin[1] as f32);
    put_f32(&mut header, 320, spacing[2] as f32);
    put_f32(&mut header, 324, origin[2] as f32);
    header[344..348].copy_from_slice(b"n+1\0");
    // bytes 348..352 stay zero: no header extension

    let mut file = fs::File::create(path).map_err(|e| Error::io(&pstr, e))?;
    file.write_all(&header).map_err(|e| Error::io(&pstr, e))?;
    let mut buf = Vec::with_capacity(vol.len() * 4);
    for &v in vol.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&buf).map_err(|e| Error::io(&pstr, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_volume() -> Volume {
        let data: Vec<f32> = (0..24).map(|i| i as f32 * 1.5 - 7.25).collect();
        Volume::new([2, 3, 4], [0.52, 0.52, 0.7], [-10.0, 4.0, 2.5], data).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.nii");
        let v = sample_volume();
        write_nifti(&v, &path).unwrap();
        let r = read_nifti(&path).unwrap();
        assert_eq!(v.dims(), r.dims());
        assert_eq!(v.data(), r.data());
        for ax in 0..3 {
            // spacing/origin pass through f32 header fields
            assert!((v.spacing()[ax] - r.spacing()[ax]).abs() < 1e-6);
            assert!((v.origin()[ax] - r.origin()[ax]).abs() < 1e-5);
        }
    }

    #[test]
    fn file_layout_arithmetic() {
        // 348-byte header + 4-byte extension pad + 8 voxels * 4 bytes
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.nii");
        let v = Volume::filled([2, 2, 2], [1.0; 3], [0.0; 3], 0.0).unwrap();
        write_nifti(&v, &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, 348 + 4 + 32);
    }

    #[test]
    fn detached_header_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("detached.nii");
        let v = Volume::filled([2, 2, 2], [1.0; 3], [0.0; 3], 0.0).unwrap();
        write_nifti(&v, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[344..348].copy_from_slice(b"ni1\0");
        std::fs::write(&path, &bytes).unwrap();
        let err = read_nifti(&path).unwrap_err();
        assert!(err.to_string().contains("ni1"), "got: {err}");
    }

    #[test]
    fn int16_scaling_rule() {
        // int16 value 100 with scl_slope = 2.0, scl_inter = 5.0 -> 205.0
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scaled.nii");
        let v = Volume::filled([1, 1, 1], [1.0; 3], [0.0; 3], 0.0).unwrap();
        write_nifti(&v, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[70..72].copy_from_slice(&4i16.to_le_bytes()); // datatype int16
        bytes[72..74].copy_from_slice(&16i16.to_le_bytes()); // bitpix
        bytes[112..116].copy_from_slice(&2.0f32.to_le_bytes()); // scl_slope
        bytes[116..120].copy_from_slice(&5.0f32.to_le_bytes()); // scl_inter
        bytes.truncate(352);
        bytes.extend_from_slice(&100i16.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let r = read_nifti(&path).unwrap();
        assert_eq!(r.data(), &[205.0]);
    }

    #[test]
    fn missing_file_and_bad_datatype() {
        assert!(read_nifti("/nonexistent/no.nii").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baddt.nii");
        let v = Volume::filled([1, 1, 1], [1.0; 3], [0.0; 3], 0.0).unwrap();
        write_nifti(&v, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[70..72].copy_from_slice(&64i16.to_le_bytes()); // float64: unsupported
        std::fs::write(&path, &bytes).unwrap();
        let err = read_nifti(&path).unwrap_err();
        assert!(err.to_string().contains("datatype"), "got: {err}");
    }

    #[test]
    fn qform_zero_falls_back_to_zero_origin() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("noq.nii");
        let v = sample_volume();
        write_nifti(&v, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[252..254].copy_from_slice(&0i16.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let r = read_nifti(&path).unwrap();
        assert_eq!(r.origin(), [0.0; 3]);
    }
}
