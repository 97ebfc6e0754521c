//! On-disk formats: the `TSTK` stack file, `HGTF` float rasters, `KMAP` byte
//! rasters and optional PGM previews. Everything is little-endian.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use tomosar_core::model::AcquisitionGeometry;
use tomosar_core::simulate::InsarStack;

use crate::error::{CliError, CliResult};

pub const STACK_MAGIC: &[u8; 4] = b"TSTK";
pub const STACK_VERSION: u32 = 1;
pub const FLOAT_RASTER_MAGIC: &[u8; 4] = b"HGTF";
pub const BYTE_RASTER_MAGIC: &[u8; 4] = b"KMAP";

/// Bytes taken by a stack file with `n` acquisitions of `rows × cols`.
pub fn stack_file_len(n: usize, rows: usize, cols: usize) -> usize {
    4 + 4 * 4 + 3 * 8 + 8 * n + 8 * n * rows * cols
}

fn read_all(path: &Path) -> CliResult<Vec<u8>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::open(path, e))?;
    Ok(bytes)
}

fn write_all(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::write(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| CliError::write(path, e))
}

/// Little-endian cursor over a byte buffer.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(CliError::Data(format!("{}: truncated file", self.path.display())));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn magic(&mut self, expected: &[u8; 4], kind: &str) -> CliResult<()> {
        let found = self.bytes.get(..4).unwrap_or(self.bytes);
        if found != expected {
            return Err(CliError::Usage(format!(
                "{} is not a {kind} (magic {:?}, expected {:?})",
                self.path.display(),
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(expected)
            )));
        }
        self.pos = 4;
        Ok(())
    }

    fn finish(&self) -> CliResult<()> {
        if self.pos != self.bytes.len() {
            return Err(CliError::Data(format!(
                "{}: {} trailing bytes",
                self.path.display(),
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn dim(v: usize, what: &str) -> CliResult<u32> {
    u32::try_from(v).map_err(|_| CliError::Data(format!("{what} {v} does not fit the file format")))
}

/// Serialises a stack. Samples are stored as complex64 (two f32).
pub fn encode_stack(stack: &InsarStack) -> CliResult<Vec<u8>> {
    let (n, rows, cols) = stack.images.dim();
    let g = &stack.geometry;
    let mut out = Vec::with_capacity(stack_file_len(n, rows, cols));
    out.extend_from_slice(STACK_MAGIC);
    out.extend_from_slice(&STACK_VERSION.to_le_bytes());
    for (v, what) in [(n, "acquisition count"), (rows, "row count"), (cols, "column count")] {
        out.extend_from_slice(&dim(v, what)?.to_le_bytes());
    }
    for v in [g.wavelength, g.range, g.incidence_angle] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for b in &g.baselines {
        out.extend_from_slice(&b.to_le_bytes());
    }
    for z in stack.images.iter() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_stack(bytes: &[u8], path: &Path) -> CliResult<InsarStack> {
    let mut r = Reader { bytes, pos: 0, path };
    r.magic(STACK_MAGIC, "stack file")?;
    let version = r.u32()?;
    if version != STACK_VERSION {
        return Err(CliError::Data(format!(
            "{}: unsupported stack version {version}",
            path.display()
        )));
    }
    let (n, rows, cols) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let (wavelength, range, incidence) = (r.f64()?, r.f64()?, r.f64()?);
    let baselines = (0..n).map(|_| r.f64()).collect::<CliResult<Vec<f64>>>()?;
    let expected = stack_file_len(n, rows, cols);
    if bytes.len() != expected {
        return Err(CliError::Data(format!(
            "{}: {} bytes, expected {expected} for {n}×{rows}×{cols}",
            path.display(),
            bytes.len()
        )));
    }
    let payload = r.take(8 * n * rows * cols)?;
    r.finish()?;
    let samples: Vec<Complex64> = payload
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().expect("4 bytes"));
            let im = f32::from_le_bytes(c[4..].try_into().expect("4 bytes"));
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    let images = Array3::from_shape_vec((n, rows, cols), samples).expect("length checked");
    let geometry = AcquisitionGeometry::new(wavelength, range, incidence, baselines)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    InsarStack::new(geometry, images, 0).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_stack(path: &Path, stack: &InsarStack) -> CliResult<()> {
    write_all(path, &encode_stack(stack)?)
}

pub fn read_stack(path: &Path) -> CliResult<InsarStack> {
    decode_stack(&read_all(path)?, path)
}

fn raster_header(magic: &[u8; 4], rows: usize, cols: usize) -> CliResult<Vec<u8>> {
    let mut out = Vec::with_capacity(12);
    out.extend_from_slice(magic);
    out.extend_from_slice(&dim(rows, "row count")?.to_le_bytes());
    out.extend_from_slice(&dim(cols, "column count")?.to_le_bytes());
    Ok(out)
}

pub fn encode_float_raster(raster: &Array2<f64>) -> CliResult<Vec<u8>> {
    let (rows, cols) = raster.dim();
    let mut out = raster_header(FLOAT_RASTER_MAGIC, rows, cols)?;
    for v in raster.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn encode_byte_raster(raster: &Array2<u8>) -> CliResult<Vec<u8>> {
    let (rows, cols) = raster.dim();
    let mut out = raster_header(BYTE_RASTER_MAGIC, rows, cols)?;
    out.extend(raster.iter());
    Ok(out)
}

fn decode_raster<'a>(bytes: &'a [u8], path: &'a Path, magic: &[u8; 4], kind: &str, size: usize) -> CliResult<(usize, usize, &'a [u8])> {
    let mut r = Reader { bytes, pos: 0, path };
    r.magic(magic, kind)?;
    let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
    let payload = r.take(rows * cols * size)?;
    r.finish()?;
    Ok((rows, cols, payload))
}

pub fn decode_float_raster(bytes: &[u8], path: &Path) -> CliResult<Array2<f64>> {
    let (rows, cols, payload) = decode_raster(bytes, path, FLOAT_RASTER_MAGIC, "float raster", 4)?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

pub fn decode_byte_raster(bytes: &[u8], path: &Path) -> CliResult<Array2<u8>> {
    let (rows, cols, payload) = decode_raster(bytes, path, BYTE_RASTER_MAGIC, "byte raster", 1)?;
    Ok(Array2::from_shape_vec((rows, cols), payload.to_vec()).expect("length checked"))
}

pub fn write_float_raster(path: &Path, raster: &Array2<f64>) -> CliResult<()> {
    write_all(path, &encode_float_raster(raster)?)
}

pub fn read_float_raster(path: &Path) -> CliResult<Array2<f64>> {
    decode_float_raster(&read_all(path)?, path)
}

pub fn write_byte_raster(path: &Path, raster: &Array2<u8>) -> CliResult<()> {
    write_all(path, &encode_byte_raster(raster)?)
}

pub fn read_byte_raster(path: &Path) -> CliResult<Array2<u8>> {
    decode_byte_raster(&read_all(path)?, path)
}

/// Binary PGM with a min–max stretch over the finite values; non-finite
/// pixels are black.
pub fn encode_pgm(raster: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = raster.dim();
    let (lo, hi) = raster
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(raster.iter().map(|&v| {
        if !v.is_finite() {
            0
        } else if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            128
        }
    }));
    out
}

pub fn write_pgm(path: &Path, raster: &Array2<f64>) -> CliResult<()> {
    write_all(path, &encode_pgm(raster))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_all(path, text.as_bytes())
}

pub fn read_text(path: &Path) -> CliResult<String> {
    String::from_utf8(read_all(path)?)
        .map_err(|_| CliError::Usage(format!("{} is not UTF-8 text", path.display())))
}
