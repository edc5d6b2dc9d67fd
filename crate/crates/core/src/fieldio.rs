//! Binary container for complex patched fields.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"MAGFIELD"  u32 version = 1  u32 dim  u32 patch count
//! per patch:   f64 center[dim]  f64 half_width  f64 spacing  u64 nodes per axis
//! per patch:   (f64 re, f64 im) for every node, row-major (last axis fastest)
//! ```

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, Patch, PatchedField};

pub const MAGIC: &[u8; 8] = b"MAGFIELD";
pub const VERSION: u32 = 1;

pub fn write_field<W: Write>(mut out: W, u: &PatchedField) -> Result<()> {
    let grid = u.grid();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(grid.dim() as u32).to_le_bytes())?;
    out.write_all(&(grid.patches().len() as u32).to_le_bytes())?;
    for p in grid.patches() {
        for c in p.center() {
            out.write_all(&c.to_le_bytes())?;
        }
        out.write_all(&p.half_width().to_le_bytes())?;
        out.write_all(&p.spacing().to_le_bytes())?;
        out.write_all(&(p.nodes_per_axis() as u64).to_le_bytes())?;
    }
    let mut buf = Vec::new();
    for vals in u.values() {
        buf.clear();
        buf.reserve(16 * vals.len());
        for z in vals {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    Ok(b)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

pub fn read_field<R: Read>(mut r: R) -> Result<PatchedField> {
    let magic: [u8; 8] = read_array(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a field file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    let count = read_u32(&mut r)? as usize;
    if !(1..=3).contains(&dim) || count == 0 || count > 1 << 16 {
        return Err(Error::Format(format!("implausible header: dim {dim}, {count} patches")));
    }
    let mut patches = Vec::with_capacity(count);
    for _ in 0..count {
        let center = (0..dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let half_width = read_f64(&mut r)?;
        let spacing = read_f64(&mut r)?;
        let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let p = Patch::new(&center, half_width, spacing).map_err(|e| Error::Format(format!("bad patch: {e}")))?;
        if p.nodes_per_axis() != n {
            return Err(Error::Format(format!("patch declares {n} nodes per axis, geometry gives {}", p.nodes_per_axis())));
        }
        patches.push(p);
    }
    let grid = Arc::new(Grid::new(patches).map_err(|e| Error::Format(format!("bad grid: {e}")))?);
    let mut values = Vec::with_capacity(count);
    for p in grid.patches() {
        let mut raw = vec![0u8; 16 * p.len()];
        r.read_exact(&mut raw).map_err(|e| Error::Format(format!("truncated data: {e}")))?;
        values.push(
            raw.chunks_exact(16)
                .map(|c| {
                    let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                    let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                    Complex64::new(re, im)
                })
                .collect(),
        );
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after field data".into()));
    }
    PatchedField::from_values(grid, values)
}

pub fn save_field(path: &Path, u: &PatchedField) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_field(&mut w, u)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<PatchedField> {
    read_field(std::io::BufReader::new(std::fs::File::open(path)?))
}
