//! Field snapshot files.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "NLCHF1"            6 bytes
//! dim                 u64
//! cells[0..dim]       u64 each
//! extent[0..dim]      f64 each
//! values              f64, row-major (axis 0 slowest)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const SNAPSHOT_MAGIC: &[u8; 6] = b"NLCHF1";

pub fn write_snapshot<W: Write>(mut w: W, field: &Field) -> Result<()> {
    let grid = field.grid();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(grid.dim() as u64).to_le_bytes())?;
    for a in 0..grid.dim() {
        w.write_all(&(grid.cells(a) as u64).to_le_bytes())?;
    }
    for a in 0..grid.dim() {
        w.write_all(&grid.extent(a).to_le_bytes())?;
    }
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Field> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for magic".into()))?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let dim = read_u64(&mut r)? as usize;
    if !(1..=2).contains(&dim) {
        return Err(Error::Format(format!("unsupported dimension {dim}")));
    }
    let mut cells = [1usize; 2];
    for c in cells.iter_mut().take(dim) {
        *c = read_u64(&mut r)? as usize;
    }
    let mut extent = [1.0; 2];
    for e in extent.iter_mut().take(dim) {
        *e = read_f64(&mut r)?;
    }
    let grid = if dim == 1 {
        Grid::new_1d(cells[0], extent[0])
    } else {
        Grid::new_2d(cells, extent)
    }
    .map_err(|e| Error::Format(format!("invalid grid header: {e}")))?;
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)
            .map_err(|_| Error::Format(format!("expected {} values, found {i}", grid.len())))?;
        values.push(f64::from_le_bytes(b));
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after field values".into()));
    }
    Field::from_values(grid, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_snapshot(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Field> {
    read_snapshot(BufReader::new(File::open(path)?))
}

/// Plot-ready CSV: integer cell indices, cell-center coordinates, value.
pub fn write_field_csv<W: Write>(w: W, field: &Field) -> Result<()> {
    let grid = field.grid();
    let mut out = csv::Writer::from_writer(w);
    if grid.dim() == 1 {
        out.write_record(["i", "x", "value"])?;
    } else {
        out.write_record(["i", "j", "x", "y", "value"])?;
    }
    for (idx, v) in field.values().iter().enumerate() {
        let k = grid.multi_index(idx);
        let x = grid.center(idx);
        if grid.dim() == 1 {
            out.write_record([k[0].to_string(), x[0].to_string(), v.to_string()])?;
        } else {
            out.write_record([
                k[0].to_string(),
                k[1].to_string(),
                x[0].to_string(),
                x[1].to_string(),
                v.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
