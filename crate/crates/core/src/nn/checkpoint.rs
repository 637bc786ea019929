//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"HSDPARAM"   u32 version   u32 set count
//! per set:   u32 name length, UTF-8 name, u32 block count
//! per block: u32 name length, UTF-8 name, u64 rows, u64 cols, rows*cols f64 (row-major)
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::ParamSet;
use crate::error::{HsdError, Result};

const MAGIC: &[u8; 8] = b"HSDPARAM";
const VERSION: u32 = 1;

pub fn write_sets<W: Write>(mut w: W, sets: &BTreeMap<String, ParamSet>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(sets.len() as u32).to_le_bytes())?;
    for (name, set) in sets {
        write_str(&mut w, name)?;
        w.write_all(&(set.len() as u32).to_le_bytes())?;
        for (block_name, block) in set.iter() {
            write_str(&mut w, block_name)?;
            w.write_all(&(block.nrows() as u64).to_le_bytes())?;
            w.write_all(&(block.ncols() as u64).to_le_bytes())?;
            for v in block.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_sets<R: Read>(mut r: R) -> Result<BTreeMap<String, ParamSet>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HsdError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(HsdError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let n_sets = read_u32(&mut r)?;
    let mut sets = BTreeMap::new();
    for _ in 0..n_sets {
        let name = read_str(&mut r)?;
        let n_blocks = read_u32(&mut r)?;
        let mut set = ParamSet::new();
        for _ in 0..n_blocks {
            let block_name = read_str(&mut r)?;
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| HsdError::Checkpoint("block too large".into()))?;
            let mut values = Vec::with_capacity(count);
            let mut buf = [0u8; 8];
            for _ in 0..count {
                r.read_exact(&mut buf)?;
                values.push(f64::from_le_bytes(buf));
            }
            let block = Array2::from_shape_vec((rows, cols), values)
                .map_err(|e| HsdError::Checkpoint(e.to_string()))?;
            set.push(block_name, block);
        }
        sets.insert(name, set);
    }
    Ok(sets)
}

pub fn save(path: &Path, sets: &BTreeMap<String, ParamSet>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_sets(&mut w, sets)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<BTreeMap<String, ParamSet>> {
    let file = std::fs::File::open(path)?;
    read_sets(std::io::BufReader::new(file))
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| HsdError::Checkpoint(e.to_string()))
}
