use std::io::{Read, Write};
use std::path::Path;

use super::model::{ArchConfig, Networks};
use super::tensor::Mat;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PXNW";
const VERSION: u32 = 1;

/// Header (magic, version, architecture hash, N, d_z, basis seed, V,
/// widths), then named tensors as little-endian f32.
pub fn write_checkpoint(nets: &Networks<f32>, mut w: impl Write) -> std::io::Result<()> {
    let a = &nets.arch;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&nets.arch_hash().to_le_bytes())?;
    for v in [a.n as u32, a.d_z as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&nets.basis_seed.to_le_bytes())?;
    for v in [a.vertices as u32, a.widths[0] as u32, a.widths[1] as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(nets.params.len() as u32).to_le_bytes())?;
    for (name, m) in nets.params.names.iter().zip(&nets.params.values) {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&2u32.to_le_bytes())?;
        w.write_all(&(m.rows as u32).to_le_bytes())?;
        w.write_all(&(m.cols as u32).to_le_bytes())?;
        for v in &m.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn take<'a>(buf: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    if *at + n > buf.len() {
        return Err(Error::Validation(format!(
            "checkpoint truncated at byte {at}"
        )));
    }
    let s = &buf[*at..*at + n];
    *at += n;
    Ok(s)
}

fn u32_at(buf: &[u8], at: &mut usize) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, at, 4)?.try_into().unwrap()))
}

fn u64_at(buf: &[u8], at: &mut usize) -> Result<u64> {
    Ok(u64::from_le_bytes(take(buf, at, 8)?.try_into().unwrap()))
}

/// Reads a checkpoint and verifies its architecture hash. `file` labels
/// errors.
pub fn read_checkpoint(mut r: impl Read, file: &str) -> Result<Networks<f32>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io(file, e))?;
    let at = &mut 0usize;
    if take(&buf, at, 4)? != MAGIC {
        return Err(Error::Validation(format!("{file}: not a checkpoint")));
    }
    let version = u32_at(&buf, at)?;
    if version != VERSION {
        return Err(Error::Validation(format!(
            "{file}: unsupported checkpoint version {version}"
        )));
    }
    let hash = u64_at(&buf, at)?;
    let n = u32_at(&buf, at)? as usize;
    let d_z = u32_at(&buf, at)? as usize;
    let basis_seed = u64_at(&buf, at)?;
    let vertices = u32_at(&buf, at)? as usize;
    let widths = [u32_at(&buf, at)? as usize, u32_at(&buf, at)? as usize];
    let arch = ArchConfig {
        n,
        vertices,
        d_z,
        widths,
    };
    let mut nets = Networks::<f32>::new(arch, basis_seed, 0);
    if nets.arch_hash() != hash {
        return Err(Error::ArchitectureMismatch {
            file: file.into(),
            expected: format!("{:016x}, file has {hash:016x}", nets.arch_hash()),
        });
    }
    let count = u32_at(&buf, at)? as usize;
    if count != nets.params.len() {
        return Err(Error::ArchitectureMismatch {
            file: file.into(),
            expected: format!("{} tensors, file has {count}", nets.params.len()),
        });
    }
    for i in 0..count {
        let len = u32_at(&buf, at)? as usize;
        let name = std::str::from_utf8(take(&buf, at, len)?)
            .map_err(|_| Error::Validation(format!("{file}: tensor name is not UTF-8")))?;
        let rank = u32_at(&buf, at)?;
        let rows = u32_at(&buf, at)? as usize;
        let cols = u32_at(&buf, at)? as usize;
        let expect = &nets.params.values[i];
        if name != nets.params.names[i] || rank != 2 || rows != expect.rows || cols != expect.cols {
            return Err(Error::ArchitectureMismatch {
                file: file.into(),
                expected: format!(
                    "tensor {} {}x{}, file has {name} {rows}x{cols}",
                    nets.params.names[i], expect.rows, expect.cols
                ),
            });
        }
        let data = take(&buf, at, 4 * rows * cols)?
            .chunks(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        nets.params.values[i] = Mat::from_vec(rows, cols, data);
    }
    if *at != buf.len() {
        return Err(Error::Validation(format!("{file}: trailing bytes")));
    }
    Ok(nets)
}

pub fn save_checkpoint(nets: &Networks<f32>, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_checkpoint(nets, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Networks<f32>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f), &path.display().to_string())
}
