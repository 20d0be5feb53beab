//! On-disk joint SVD cache.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    8 bytes  "QNDJSVD\0"
//! version  u32
//! N        u32
//! eps      f64
//! U, V     (N+1)^4 f64 each, row-major
//! factors  for Δz in 0..=N, Δx in 0..=N:
//!            count u32, then count × (row u32, col u32, amp f64)
//! sha256   32 bytes over everything above
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use qnd_core::ensemble::EnsembleSize;
use qnd_core::jsvd::{compute_joint_svd, JointSvd};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"QNDJSVD\0";
pub const VERSION: u32 = 1;
pub const ENV_DIR: &str = "QND_CACHE_DIR";
/// Seed for the random coefficient draws inside the decomposition. The
/// result does not depend on it; fixing it keeps cache files reproducible.
pub const BUILD_SEED: u64 = 0x514e_4400;

pub fn default_dir() -> PathBuf {
    std::env::var_os(ENV_DIR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".qnd-cache"))
}

pub fn file_name(n: usize) -> String {
    format!("jsvd_N{n}.bin")
}

fn is_cache_name(name: &str) -> bool {
    name.strip_prefix("jsvd_N")
        .and_then(|r| r.strip_suffix(".bin"))
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

pub fn build(n: usize) -> Result<JointSvd> {
    let size = EnsembleSize::new(n)?;
    Ok(compute_joint_svd(size, &mut ChaCha8Rng::seed_from_u64(BUILD_SEED))?)
}

fn put_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
}

pub fn encode(j: &JointSvd) -> Vec<u8> {
    let n = j.size().n();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&j.eps().to_le_bytes());
    put_matrix(&mut out, j.u());
    put_matrix(&mut out, j.v());
    for dz in 0..=n {
        for dx in 0..=n {
            let t = j.factor(dz, dx).triples();
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            for (r, c, a) in t {
                out.extend_from_slice(&r.to_le_bytes());
                out.extend_from_slice(&c.to_le_bytes());
                out.extend_from_slice(&a.to_le_bytes());
            }
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| Error::CacheFormat {
            path: self.path.to_owned(),
            msg: format!("truncated at byte {}", self.pos),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn matrix(&mut self, d: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                m[(r, c)] = self.f64()?;
            }
        }
        Ok(m)
    }
}

/// Parses a cache image; `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<JointSvd> {
    let bad = |msg: String| Error::CacheFormat { path: path.to_owned(), msg };
    if bytes.len() < MAGIC.len() + 32 {
        return Err(bad("file too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum(path.to_owned()));
    }
    let mut rd = Reader { buf: body, pos: 0, path };
    if rd.take(8)? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = rd.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = rd.u32()? as usize;
    let eps = rd.f64()?;
    let size = EnsembleSize::new(n)?;
    let d = size.dim();
    let u = rd.matrix(d)?;
    let v = rd.matrix(d)?;
    let mut triples = Vec::with_capacity((n + 1) * (n + 1));
    for _ in 0..(n + 1) * (n + 1) {
        let count = rd.u32()? as usize;
        if count > d {
            return Err(bad(format!("factor with {count} entries exceeds dimension {d}")));
        }
        let mut t = Vec::with_capacity(count);
        for _ in 0..count {
            t.push((rd.u32()?, rd.u32()?, rd.f64()?));
        }
        triples.push(t);
    }
    if rd.pos != body.len() {
        return Err(bad(format!("{} trailing bytes", body.len() - rd.pos)));
    }
    Ok(JointSvd::from_parts(size, u, v, &triples, eps)?)
}

pub fn path_for(dir: &Path, n: usize) -> PathBuf {
    dir.join(file_name(n))
}

pub fn save(dir: &Path, j: &JointSvd) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = path_for(dir, j.size().n());
    fs::write(&path, encode(j)).map_err(io_err(&path))?;
    Ok(path)
}

pub fn load(dir: &Path, n: usize) -> Result<JointSvd> {
    let path = path_for(dir, n);
    if !path.exists() {
        return Err(Error::MissingCache { n, path });
    }
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    decode(&bytes, &path)
}

/// Loads the cached decomposition, building and storing it first when
/// `build_missing` is set.
pub fn load_or_build(dir: &Path, n: usize, build_missing: bool) -> Result<JointSvd> {
    match load(dir, n) {
        Err(Error::MissingCache { .. }) if build_missing => {
            let j = build(n)?;
            save(dir, &j)?;
            Ok(j)
        }
        other => other,
    }
}

/// Removes cache files (all of them, or only N=`n`) and returns their paths.
/// Other files in the directory are left alone.
pub fn clear(dir: &Path, n: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut removed = Vec::new();
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(removed),
        Err(e) => return Err(Error::Io { path: dir.to_owned(), source: e }),
    };
    for entry in entries {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let wanted = match n {
            Some(n) => name == file_name(n),
            None => is_cache_name(&name),
        };
        if wanted {
            let p = entry.path();
            fs::remove_file(&p).map_err(io_err(&p))?;
            removed.push(p);
        }
    }
    removed.sort();
    Ok(removed)
}

/// Human-readable summary: sector sizes and a histogram of `|Λ|` values.
pub fn inspect(j: &JointSvd) -> String {
    let size = j.size();
    let n = size.n();
    let mut v_count = vec![0usize; n + 1];
    let mut u_count = vec![0usize; n + 1];
    for &s in j.v_sectors() {
        v_count[s] += 1;
    }
    for &s in j.u_sectors() {
        u_count[s] += 1;
    }
    let mut out = format!("N={n} dim={} eps={:e}\n", size.dim(), j.eps());
    out.push_str("sector  V  U\n");
    for d in 0..=n {
        out.push_str(&format!("{d:>6} {:>2} {:>2}\n", v_count[d], u_count[d]));
    }
    let mut values: Vec<f64> = j.factors().iter().flat_map(|f| f.triples()).map(|(_, _, a)| a.abs()).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let mut hist: Vec<(f64, usize)> = Vec::new();
    for v in values {
        match hist.last_mut() {
            Some((rep, c)) if (*rep - v).abs() <= 1e-9 * rep.max(1e-300) => *c += 1,
            _ => hist.push((v, 1)),
        }
    }
    out.push_str(&format!("singular values: {} distinct\n", hist.len()));
    out.push_str("      |lambda|  count\n");
    for (v, c) in hist {
        out.push_str(&format!("{v:>14.9} {c:>6}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use qnd_core::jsvd::reconstruction_error;

    #[test]
    fn round_trip_preserves_the_decomposition() {
        let dir = tempfile::tempdir().unwrap();
        for n in 1..=4 {
            let j = build(n).unwrap();
            save(dir.path(), &j).unwrap();
            let back = load(dir.path(), n).unwrap();
            assert_eq!(back.u(), j.u());
            assert_eq!(back.v(), j.v());
            assert_eq!(back.factors(), j.factors());
            assert!(reconstruction_error(&back).unwrap() < 1e-10);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let j = build(2).unwrap();
        let mut bytes = encode(&j);
        bytes[40] ^= 1;
        assert!(matches!(decode(&bytes, Path::new("x")), Err(Error::Checksum(_))));
        assert!(decode(&bytes[..10], Path::new("x")).is_err());
    }

    #[test]
    fn encoding_is_deterministic() {
        assert_eq!(encode(&build(3).unwrap()), encode(&build(3).unwrap()));
    }

    #[test]
    fn missing_cache_without_build_flag() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_or_build(dir.path(), 2, false), Err(Error::MissingCache { n: 2, .. })));
        load_or_build(dir.path(), 2, true).unwrap();
        assert!(path_for(dir.path(), 2).exists());
    }

    #[test]
    fn clear_removes_only_cache_files() {
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &build(1).unwrap()).unwrap();
        save(dir.path(), &build(2).unwrap()).unwrap();
        fs::write(dir.path().join("notes.txt"), "keep").unwrap();
        fs::write(dir.path().join("jsvd_Nx.bin"), "keep").unwrap();
        assert_eq!(clear(dir.path(), Some(1)).unwrap().len(), 1);
        assert!(path_for(dir.path(), 2).exists());
        assert_eq!(clear(dir.path(), None).unwrap().len(), 1);
        assert!(dir.path().join("notes.txt").exists());
        assert!(dir.path().join("jsvd_Nx.bin").exists());
    }

    #[test]
    fn inspect_lists_sector_sizes() {
        let text = inspect(&build(2).unwrap());
        let rows: Vec<&str> = text.lines().skip(2).take(3).collect();
        assert_eq!(rows, ["     0  3  3", "     1  4  4", "     2  2  2"]);
    }
}
