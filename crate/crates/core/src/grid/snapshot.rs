//! Binary field snapshots.
//!
//! Layout, byte for byte:
//!
//! ```text
//! MDFLOW v1 scalar <n_r> <n_theta> <t>\n
//! <n_r * n_theta little-endian f64 values, radius-major>
//! ```
//!
//! The header is ASCII with single spaces; `t` is printed in Rust's
//! shortest round-trip form, so reading it back reproduces the time exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Grid, ScalarField};
use crate::error::{FlowError, Result};

pub const SNAPSHOT_MAGIC: &str = "MDFLOW v1 scalar";

pub fn write_snapshot(w: &mut impl Write, f: &ScalarField, t: f64) -> Result<()> {
    let g = f.grid();
    writeln!(w, "{SNAPSHOT_MAGIC} {} {} {t:?}", g.n_r(), g.n_theta())?;
    let mut buf = Vec::with_capacity(8 * f.values.len());
    for v in &f.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_snapshot(path: &Path, f: &ScalarField, t: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot(&mut w, f, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<(ScalarField, f64)> {
    let mut r = BufReader::new(File::open(path).map_err(|e| FlowError::Io(format!("{}: {e}", path.display())))?);
    read_snapshot(&mut r)
}

/// Returns the field and its time stamp.
pub fn read_snapshot(r: &mut impl Read) -> Result<(ScalarField, f64)> {
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(FlowError::Io("snapshot header is not terminated".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 256 {
            return Err(FlowError::Io("snapshot header too long".into()));
        }
    }
    let header = String::from_utf8(header).map_err(|_| FlowError::Io("snapshot header is not ASCII".into()))?;
    let rest = header
        .strip_prefix(SNAPSHOT_MAGIC)
        .ok_or_else(|| FlowError::Io(format!("not an MDFLOW v1 scalar snapshot: {header:?}")))?;
    let parts: Vec<&str> = rest.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(FlowError::Io(format!("malformed snapshot header: {header:?}")));
    }
    let bad = |what: &str| FlowError::Io(format!("bad {what} in snapshot header"));
    let n_r: usize = parts[0].parse().map_err(|_| bad("n_r"))?;
    let n_theta: usize = parts[1].parse().map_err(|_| bad("n_theta"))?;
    let t: f64 = parts[2].parse().map_err(|_| bad("time"))?;
    let grid = Grid::new(n_r, n_theta)?;
    let mut bytes = vec![0u8; 8 * grid.len()];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((ScalarField::from_values(grid, values)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let g = Grid::new(8, 16).unwrap();
        let f = ScalarField::from_cartesian(g, |x, y| (x * 3.1).sin() + y / 7.0);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f, 0.1 + 0.2).unwrap();
        assert!(buf.starts_with(b"MDFLOW v1 scalar 8 16 0.30000000000000004\n"));
        let (back, t) = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(back, f);
        assert_eq!(t, 0.1 + 0.2);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_snapshot(&mut &b"HELLO\n"[..]).is_err());
        assert!(read_snapshot(&mut &b"MDFLOW v1 scalar 8 16 0\n\x00\x01"[..]).is_err());
    }
}
