//! Binary file formats shared by the corpus, feature cache, and embedding cache.
//!
//! Every data file starts with the magic `AIV1` followed by a little-endian
//! header and a raw row-major `f32` payload:
//!
//! * wave files: `AIV1 | u32 sample_rate | u64 length | f32 * length`
//! * matrix files: `AIV1 | u32 rate | u64 frames | u32 dims | f32 * frames*dims`
//!
//! Parsers are total: corrupt input yields a format error naming the offending
//! field, never a panic. The `parse_*_bytes` functions are the fuzz entry
//! points; the `read_*`/`write_*` wrappers attach file names to errors.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const DATA_MAGIC: &[u8; 4] = b"AIV1";
pub const MODEL_MAGIC: &[u8; 4] = b"AIVM";

/// Decoded wave payload.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveData {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

/// Decoded matrix payload (frames x dims, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixData {
    pub rate: u32,
    pub frames: Vec<f32>,
    pub n_frames: usize,
    pub dims: usize,
}

impl MatrixData {
    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_frames, self.dims), |(t, d)| {
            f64::from(self.frames[t * self.dims + d])
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, field: &str) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format!("truncated while reading {field}"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, field: &str) -> std::result::Result<u32, String> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, field: &str) -> std::result::Result<u64, String> {
        let b = self.take(8, field)?;
        Ok(u64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn magic(&mut self, expect: &[u8; 4]) -> std::result::Result<(), String> {
        let b = self.take(4, "magic")?;
        if b != expect {
            return Err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(b),
                String::from_utf8_lossy(expect)
            ));
        }
        Ok(())
    }

    fn f32_payload(&mut self, count: usize, field: &str) -> std::result::Result<Vec<f32>, String> {
        let nbytes = count
            .checked_mul(4)
            .ok_or_else(|| format!("{field} count overflows"))?;
        let b = self.take(nbytes, field)?;
        let mut out = Vec::with_capacity(count);
        for (i, chunk) in b.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(format!("{field}[{i}] is not finite"));
            }
            out.push(v);
        }
        Ok(out)
    }

    fn expect_end(&self, field: &str) -> std::result::Result<(), String> {
        if self.pos != self.bytes.len() {
            return Err(format!(
                "{} trailing bytes after {field}",
                self.bytes.len() - self.pos
            ));
        }
        Ok(())
    }
}

fn to_count(v: u64, field: &str) -> std::result::Result<usize, String> {
    usize::try_from(v).map_err(|_| format!("{field} {v} does not fit in memory"))
}

/// Parse a wave file payload. Fuzz entry point.
pub fn parse_wave_bytes(bytes: &[u8]) -> std::result::Result<WaveData, String> {
    let mut r = Reader::new(bytes);
    r.magic(DATA_MAGIC)?;
    let sample_rate = r.u32("sample_rate")?;
    if sample_rate == 0 {
        return Err("sample_rate must be positive".into());
    }
    let length = to_count(r.u64("length")?, "length")?;
    let samples = r.f32_payload(length, "samples")?;
    r.expect_end("samples")?;
    Ok(WaveData {
        sample_rate,
        samples,
    })
}

/// Parse a matrix file payload. Fuzz entry point.
pub fn parse_matrix_bytes(bytes: &[u8]) -> std::result::Result<MatrixData, String> {
    let mut r = Reader::new(bytes);
    r.magic(DATA_MAGIC)?;
    let rate = r.u32("rate")?;
    if rate == 0 {
        return Err("rate must be positive".into());
    }
    let n_frames = to_count(r.u64("frames")?, "frames")?;
    let dims = to_count(u64::from(r.u32("dims")?), "dims")?;
    if dims == 0 {
        return Err("dims must be positive".into());
    }
    let count = n_frames
        .checked_mul(dims)
        .ok_or("frames * dims overflows")?;
    let frames = r.f32_payload(count, "frames")?;
    r.expect_end("frames")?;
    Ok(MatrixData {
        rate,
        frames,
        n_frames,
        dims,
    })
}

pub fn encode_wave(sample_rate: u32, samples: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + samples.len() * 4);
    out.extend_from_slice(DATA_MAGIC);
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn encode_matrix(rate: u32, mat: &Array2<f64>) -> Vec<u8> {
    let (n_frames, dims) = mat.dim();
    let mut out = Vec::with_capacity(20 + n_frames * dims * 4);
    out.extend_from_slice(DATA_MAGIC);
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(n_frames as u64).to_le_bytes());
    out.extend_from_slice(&(dims as u32).to_le_bytes());
    for row in mat.rows() {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_wave(path: &Path) -> Result<WaveData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wave_bytes(&bytes).map_err(|detail| Error::format(path.display().to_string(), detail))
}

pub fn read_matrix(path: &Path) -> Result<MatrixData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_bytes(&bytes).map_err(|detail| Error::format(path.display().to_string(), detail))
}

pub fn write_wave(path: &Path, sample_rate: u32, samples: &[f32]) -> Result<()> {
    write_atomic(path, &encode_wave(sample_rate, samples))
}

pub fn write_matrix(path: &Path, rate: u32, mat: &Array2<f64>) -> Result<()> {
    write_atomic(path, &encode_matrix(rate, mat))
}

/// Write via a temp file + rename so interrupted runs never leave a torn file
/// that a later cache lookup would trust.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Round to the nearest f32-representable value. Applied wherever values cross
/// the file boundary so that save/load round trips are bit-exact.
pub fn quantize(x: f64) -> f64 {
    x as f32 as f64
}
