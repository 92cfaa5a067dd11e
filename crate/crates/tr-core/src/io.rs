//! Binary tensor and mask files, and on-disk core persistence.
//!
//! `.dten` layout: magic "DTEN", version u16 LE, mode count N u16 LE, N mode
//! sizes as u64 LE, then the payload as little-endian f64 in the pinned
//! linear order (mode-1 fastest). `.dmask` uses the same header with magic
//! "DMSK" and one byte per entry (0/1).
//!
//! Writes go through a temporary file in the target directory and are
//! renamed into place, so a failed run never leaves a partial output.

use crate::error::{Result, TrError};
use crate::model::TRCores;
use crate::tensor::{DenseTensor, ObservationMask};
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const TENSOR_MAGIC: &[u8; 4] = b"DTEN";
const MASK_MAGIC: &[u8; 4] = b"DMSK";
const FORMAT_VERSION: u16 = 1;

/// Largest mode size / entry count accepted when reading headers.
const MAX_ENTRIES: u64 = 1 << 40;

fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<Vec<usize>> {
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    if &buf4 != magic {
        return Err(TrError::BadFormat(format!(
            "bad magic {:?}, expected {:?}",
            buf4, magic
        )));
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != FORMAT_VERSION {
        return Err(TrError::BadFormat(format!("unsupported version {version}")));
    }
    r.read_exact(&mut buf2)?;
    let n = u16::from_le_bytes(buf2) as usize;
    if n < 2 {
        return Err(TrError::BadFormat(format!("mode count {n} < 2")));
    }
    let mut dims = Vec::with_capacity(n);
    let mut total: u64 = 1;
    for _ in 0..n {
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let d = u64::from_le_bytes(buf8);
        if d == 0 {
            return Err(TrError::BadFormat("zero mode size".into()));
        }
        total = total
            .checked_mul(d)
            .filter(|&t| t <= MAX_ENTRIES)
            .ok_or_else(|| TrError::BadFormat("dimension overflow".into()))?;
        dims.push(d as usize);
    }
    Ok(dims)
}

fn write_header(w: &mut impl Write, magic: &[u8; 4], dims: &[usize]) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(dims.len() as u16).to_le_bytes())?;
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

/// Writes via a sibling temp file and an atomic rename.
fn write_atomically(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_tensor(x: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomically(path, |w| {
        write_header(w, TENSOR_MAGIC, x.shape())?;
        for v in x.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let dims = read_header(&mut r, TENSOR_MAGIC)?;
    let total: usize = dims.iter().product();
    let mut data = Vec::with_capacity(total);
    let mut buf8 = [0u8; 8];
    for _ in 0..total {
        r.read_exact(&mut buf8).map_err(|_| {
            TrError::BadFormat("truncated payload".into())
        })?;
        data.push(f64::from_le_bytes(buf8));
    }
    DenseTensor::new(dims, data)
}

pub fn write_mask(m: &ObservationMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomically(path, |w| {
        write_header(w, MASK_MAGIC, m.shape())?;
        let bytes: Vec<u8> = m.bits().iter().map(|&b| b as u8).collect();
        w.write_all(&bytes)?;
        Ok(())
    })
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<ObservationMask> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let dims = read_header(&mut r, MASK_MAGIC)?;
    let total: usize = dims.iter().product();
    let mut bytes = vec![0u8; total];
    r.read_exact(&mut bytes)
        .map_err(|_| TrError::BadFormat("truncated payload".into()))?;
    if let Some(&bad) = bytes.iter().find(|&&b| b > 1) {
        return Err(TrError::BadFormat(format!("mask byte {bad} is not 0/1")));
    }
    ObservationMask::new(dims, bytes.into_iter().map(|b| b == 1).collect())
}

/// Sidecar metadata for a persisted core directory.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreManifest {
    pub order: usize,
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub seed: Option<u64>,
    pub solver: Option<String>,
}

/// Persists cores as `manifest.json` plus `core_XX.dten` files.
pub fn save_cores(
    cores: &TRCores,
    dir: impl AsRef<Path>,
    seed: Option<u64>,
    solver: Option<String>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifest = CoreManifest {
        order: cores.order(),
        dims: cores.dims(),
        ranks: cores.ranks(),
        seed,
        solver,
    };
    write_atomically(&dir.join("manifest.json"), |w| {
        serde_json::to_writer_pretty(w, &manifest)?;
        Ok(())
    })?;
    for (k, core) in cores.cores().iter().enumerate() {
        write_tensor(core, dir.join(format!("core_{k:02}.dten")))?;
    }
    Ok(())
}

/// Loads cores and validates them against the manifest (ring closure is
/// re-checked by the `TRCores` constructor).
pub fn load_cores(dir: impl AsRef<Path>) -> Result<TRCores> {
    let dir = dir.as_ref();
    let manifest: CoreManifest =
        serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
    let mut cores = Vec::with_capacity(manifest.order);
    for k in 0..manifest.order {
        cores.push(read_tensor(dir.join(format!("core_{k:02}.dten")))?);
    }
    let cores = TRCores::new(cores)?;
    if cores.dims() != manifest.dims || cores.ranks() != manifest.ranks {
        return Err(TrError::BadFormat(format!(
            "manifest mismatch: dims {:?} ranks {:?} vs cores dims {:?} ranks {:?}",
            manifest.dims,
            manifest.ranks,
            cores.dims(),
            cores.ranks()
        )));
    }
    Ok(cores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::random_cores;

    #[test]
    fn tensor_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let x = DenseTensor::new(
            vec![3, 4, 2],
            (0..24).map(|v| (v as f64).sin() * 1e-7).collect(),
        )
        .unwrap();
        let path = dir.path().join("x.dten");
        write_tensor(&x, &path).unwrap();
        let y = read_tensor(&path).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn corrupt_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.dten");
        fs::write(&path, b"NOPE\x01\x00\x02\x00").unwrap();
        match read_tensor(&path) {
            Err(TrError::BadFormat(_)) => {}
            other => panic!("expected BadFormat, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let x = DenseTensor::new(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        let path = dir.path().join("x.dten");
        write_tensor(&x, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(read_tensor(&path).is_err());
    }

    #[test]
    fn mask_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let m = ObservationMask::new(vec![2, 3], vec![true, false, true, true, false, false])
            .unwrap();
        let path = dir.path().join("m.dmask");
        write_mask(&m, &path).unwrap();
        assert_eq!(read_mask(&path).unwrap(), m);
        // tensor magic is not a mask
        let x = DenseTensor::zeros(vec![2, 3]).unwrap();
        let tp = dir.path().join("x.dten");
        write_tensor(&x, &tp).unwrap();
        assert!(read_mask(&tp).is_err());
    }

    #[test]
    fn cores_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let cores = random_cores(&[3, 4, 2], &[2, 3, 2], 5);
        save_cores(&cores, dir.path(), Some(5), Some("awrtrd".into())).unwrap();
        let loaded = load_cores(dir.path()).unwrap();
        assert_eq!(cores, loaded);
        // reconstruction equal after reload
        let a = cores.reconstruct();
        let b = loaded.reconstruct();
        assert_eq!(a, b);
        // tamper with a rank in the manifest
        let mpath = dir.path().join("manifest.json");
        let text = fs::read_to_string(&mpath).unwrap();
        let tampered = text.replacen("3", "4", 1);
        fs::write(&mpath, tampered).unwrap();
        assert!(load_cores(dir.path()).is_err());
    }
}
