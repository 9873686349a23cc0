//! On-disk feature cache and CSV export.
//!
//! The cache is a little-endian binary file: the header `LJPC` + version +
//! record count, then one record per image holding the relative path, class
//! label, the config fingerprint the features were computed under, and the
//! raw feature values. Records whose fingerprint does not match the current
//! configuration are ignored on load, so a stale cache never poisons a run.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LJPC";
const VERSION: u32 = 1;

/// One cached feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheRecord {
    pub rel_path: String,
    pub label: u32,
    pub fingerprint: u64,
    pub values: Vec<f64>,
}

/// Writes all records to `path`, replacing any existing file.
pub fn write_cache(path: impl AsRef<Path>, records: &[CacheRecord]) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for rec in records {
        let path_bytes = rec.rel_path.as_bytes();
        w.write_all(&rec.fingerprint.to_le_bytes())?;
        w.write_all(&(path_bytes.len() as u32).to_le_bytes())?;
        w.write_all(path_bytes)?;
        w.write_all(&rec.label.to_le_bytes())?;
        w.write_all(&(rec.values.len() as u32).to_le_bytes())?;
        for v in &rec.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads every record in the file; fails on structural corruption.
pub fn read_cache(path: impl AsRef<Path>) -> Result<Vec<CacheRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a feature cache file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported cache version {version}"
        )));
    }
    let count = read_u64(&mut r)?;
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let fingerprint = read_u64(&mut r)?;
        let path_len = read_u32(&mut r)? as usize;
        let mut path_bytes = vec![0u8; path_len];
        r.read_exact(&mut path_bytes)?;
        let rel_path = String::from_utf8(path_bytes)
            .map_err(|_| Error::Format("cache record path is not UTF-8".into()))?;
        let label = read_u32(&mut r)?;
        let value_count = read_u32(&mut r)? as usize;
        let mut values = Vec::with_capacity(value_count);
        let mut buf = [0u8; 8];
        for _ in 0..value_count {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        records.push(CacheRecord {
            rel_path,
            label,
            fingerprint,
            values,
        });
    }
    Ok(records)
}

/// Loads the records matching `fingerprint`, keyed by relative path.
/// A missing file is an empty cache, not an error.
pub fn load_matching(
    path: impl AsRef<Path>,
    fingerprint: u64,
) -> Result<HashMap<String, CacheRecord>> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(HashMap::new());
    }
    Ok(read_cache(path)?
        .into_iter()
        .filter(|r| r.fingerprint == fingerprint)
        .map(|r| (r.rel_path.clone(), r))
        .collect())
}

/// Human-readable export: `path,label,f0..f294` header, one row per record.
pub fn export_csv(path: impl AsRef<Path>, records: &[CacheRecord]) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    let width = records.first().map_or(0, |r| r.values.len());
    write!(w, "path,label")?;
    if width > 0 {
        write!(w, ",f0..f{}", width - 1)?;
    }
    writeln!(w)?;
    for rec in records {
        write!(w, "{},{}", rec.rel_path, rec.label)?;
        for v in &rec.values {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
