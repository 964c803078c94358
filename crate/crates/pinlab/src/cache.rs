//! Binary on-disk cache for constrained partition tables.
//!
//! Building a table is the O(N^3) piece of every experiment; h and rho
//! sweeps, sampling batches and re-runs all reuse the same triangles, so
//! completed builds are persisted. A file is keyed by everything the table
//! value depends on: (alpha, n_max, N, beta, disorder dist, field seed).
//! Writes land in a temp file first and are renamed into place, so readers
//! never observe a torn file and concurrent builders of the same table
//! settle on one winner.
//!
//! Layout (all little-endian): magic "PINLABT1"; alpha f64; n_max u64; N
//! u64; beta f64; dist tag u8 (0 homogeneous, 1 gaussian, 2 rademacher);
//! field seed u64; then triangle rows m = 0..=N, row m holding N-m+1 f64
//! log-weights.

use crate::disorder::DisorderField;
use crate::partition::{build_constrained_with_cap, ConstrainedDP, DEFAULT_MAX_TABLE_N};
use crate::renewal::InterArrivalLaw;
use crate::triangle::LogTriangle;
use crate::{Error, Result};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 8] = b"PINLABT1";

#[derive(Debug, Clone, Copy, PartialEq)]
struct Header {
    alpha: f64,
    n_max: u64,
    n: u64,
    beta: f64,
    dist_tag: u8,
    seed: u64,
}

impl Header {
    fn key(law: &InterArrivalLaw, n: usize, field: Option<&DisorderField>) -> Header {
        Header {
            alpha: law.alpha(),
            n_max: law.n_max(),
            n: n as u64,
            beta: field.map_or(0.0, |f| f.beta()),
            dist_tag: field.map_or(0, |f| f.dist().tag()),
            seed: field.map_or(0, |f| f.seed()),
        }
    }

    fn of_table(dp: &ConstrainedDP) -> Header {
        Header {
            alpha: dp.law_alpha(),
            n_max: dp.law_n_max(),
            n: dp.n() as u64,
            beta: dp.field().map_or(0.0, |f| f.beta()),
            dist_tag: dp.field().map_or(0, |f| f.dist().tag()),
            seed: dp.field().map_or(0, |f| f.seed()),
        }
    }

    fn file_name(&self) -> String {
        format!(
            "table_a{}_k{}_n{}_b{}_d{}_s{}.bin",
            self.alpha, self.n_max, self.n, self.beta, self.dist_tag, self.seed
        )
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.alpha.to_le_bytes())?;
        w.write_all(&self.n_max.to_le_bytes())?;
        w.write_all(&self.n.to_le_bytes())?;
        w.write_all(&self.beta.to_le_bytes())?;
        w.write_all(&[self.dist_tag])?;
        w.write_all(&self.seed.to_le_bytes())
    }

    fn read_from(r: &mut impl Read) -> std::io::Result<Option<Header>> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Ok(None);
        }
        let mut b8 = [0u8; 8];
        let mut read_u64 = |r: &mut dyn Read| -> std::io::Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let alpha = f64::from_bits(read_u64(r)?);
        let n_max = read_u64(r)?;
        let n = read_u64(r)?;
        let beta = f64::from_bits(read_u64(r)?);
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        Ok(Some(Header {
            alpha,
            n_max,
            n,
            beta,
            dist_tag: tag[0],
            seed: u64::from_le_bytes(b8),
        }))
    }
}

/// The path a table for (law, n, field) caches under in `dir`.
pub fn table_path(
    dir: &Path,
    law: &InterArrivalLaw,
    n: usize,
    field: Option<&DisorderField>,
) -> PathBuf {
    dir.join(Header::key(law, n, field).file_name())
}

/// Persists a built table; returns the final path.
pub fn store_table(dir: &Path, dp: &ConstrainedDP) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let header = Header::of_table(dp);
    let path = dir.join(header.file_name());
    let tmp = dir.join(format!("{}.tmp.{}", header.file_name(), std::process::id()));
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        header.write_to(&mut w)?;
        let tri = dp.triangle();
        for m in 0..=tri.n() {
            for &v in tri.row(m) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Loads a table and checks it is exactly the one keyed by (law, n, field).
/// The field itself is re-attached from the argument, not deserialized.
pub fn load_table(
    path: &Path,
    law: &InterArrivalLaw,
    n: usize,
    field: Option<&DisorderField>,
) -> Result<ConstrainedDP> {
    let bad = |reason: String| Error::Cache {
        path: path.display().to_string(),
        reason,
    };
    let mut r = BufReader::new(fs::File::open(path)?);
    let header = Header::read_from(&mut r)
        .map_err(|e| bad(format!("truncated header: {e}")))?
        .ok_or_else(|| bad("bad magic".into()))?;
    let expect = Header::key(law, n, field);
    if header != expect {
        return Err(bad(format!(
            "key mismatch: file {header:?}, wanted {expect:?}"
        )));
    }
    let mut rows = Vec::with_capacity(n + 1);
    let mut buf = Vec::new();
    for m in 0..=n {
        let width = n - m + 1;
        buf.resize(width * 8, 0u8);
        r.read_exact(&mut buf)
            .map_err(|e| bad(format!("truncated at row {m}: {e}")))?;
        rows.push(
            buf.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<f64>>(),
        );
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after last row".into()));
    }
    ConstrainedDP::from_parts(law, field.cloned(), LogTriangle::from_rows(rows))
}

/// Returns the cached table for (law, n, field), building and persisting it
/// on a miss. A stale or corrupt cache entry is rebuilt, not trusted.
pub fn load_or_build(
    dir: &Path,
    law: &InterArrivalLaw,
    n: usize,
    field: Option<&DisorderField>,
) -> Result<ConstrainedDP> {
    load_or_build_with_cap(dir, law, n, field, DEFAULT_MAX_TABLE_N)
}

pub fn load_or_build_with_cap(
    dir: &Path,
    law: &InterArrivalLaw,
    n: usize,
    field: Option<&DisorderField>,
    max_n: usize,
) -> Result<ConstrainedDP> {
    let path = table_path(dir, law, n, field);
    if path.exists() {
        match load_table(&path, law, n, field) {
            Ok(dp) => return Ok(dp),
            Err(Error::Cache { .. }) => {} // fall through to a rebuild
            Err(e) => return Err(e),
        }
    }
    let dp = build_constrained_with_cap(law, n, field, max_n)?;
    store_table(dir, &dp)?;
    Ok(dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{DisorderDist, DisorderField};
    use crate::renewal::build_power_law;

    fn law() -> InterArrivalLaw {
        build_power_law(1.5, 4096).unwrap()
    }

    #[test]
    fn roundtrip_homogeneous_and_disordered() {
        let dir = tempfile::tempdir().unwrap();
        let law = law();
        let field = DisorderField::generate(DisorderDist::Gaussian, 0.7, 24, 99).unwrap();
        for f in [None, Some(&field)] {
            let built = crate::partition::build_constrained(&law, 24, f).unwrap();
            let path = store_table(dir.path(), &built).unwrap();
            assert!(path.exists());
            let loaded = load_table(&path, &law, 24, f).unwrap();
            for n in 0..=24 {
                for m in 0..=n {
                    assert_eq!(built.log_z(n, m), loaded.log_z(n, m), "({m},{n})");
                }
            }
            assert_eq!(loaded.beta(), built.beta());
        }
    }

    #[test]
    fn load_or_build_hits_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let law = law();
        let a = load_or_build(dir.path(), &law, 20, None).unwrap();
        let path = table_path(dir.path(), &law, 20, None);
        let mtime = fs::metadata(&path).unwrap().modified().unwrap();
        let b = load_or_build(dir.path(), &law, 20, None).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().modified().unwrap(), mtime);
        for n in 0..=20 {
            for m in 0..=n {
                assert_eq!(a.log_z(n, m), b.log_z(n, m));
            }
        }
    }

    #[test]
    fn distinct_keys_get_distinct_files() {
        let dir = Path::new("/cache");
        let law15 = law();
        let law25 = build_power_law(2.5, 4096).unwrap();
        let f1 = DisorderField::generate(DisorderDist::Gaussian, 1.0, 8, 1).unwrap();
        let f2 = DisorderField::generate(DisorderDist::Gaussian, 1.0, 8, 2).unwrap();
        let f3 = DisorderField::generate(DisorderDist::Rademacher, 1.0, 8, 1).unwrap();
        let paths = [
            table_path(dir, &law15, 8, None),
            table_path(dir, &law25, 8, None),
            table_path(dir, &law15, 9, None),
            table_path(dir, &law15, 8, Some(&f1)),
            table_path(dir, &law15, 8, Some(&f2)),
            table_path(dir, &law15, 8, Some(&f3)),
        ];
        for (i, a) in paths.iter().enumerate() {
            for b in &paths[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn corruption_is_detected_and_rebuilt() {
        let dir = tempfile::tempdir().unwrap();
        let law = law();
        let built = crate::partition::build_constrained(&law, 16, None).unwrap();
        let path = store_table(dir.path(), &built).unwrap();

        // key mismatch: right file, wrong query
        let other = build_power_law(2.5, 4096).unwrap();
        assert!(matches!(
            load_table(&path, &other, 16, None),
            Err(Error::Cache { .. })
        ));

        // truncation
        let full = fs::read(&path).unwrap();
        fs::write(&path, &full[..full.len() - 3]).unwrap();
        assert!(matches!(
            load_table(&path, &law, 16, None),
            Err(Error::Cache { .. })
        ));
        let recovered = load_or_build(dir.path(), &law, 16, None).unwrap();
        assert_eq!(recovered.log_z(16, 4), built.log_z(16, 4));

        // bad magic
        let mut garbled = full.clone();
        garbled[0] ^= 0xff;
        fs::write(&path, &garbled).unwrap();
        assert!(matches!(
            load_table(&path, &law, 16, None),
            Err(Error::Cache { .. })
        ));

        // trailing junk
        let mut long = full.clone();
        long.push(0);
        fs::write(&path, &long).unwrap();
        assert!(matches!(
            load_table(&path, &law, 16, None),
            Err(Error::Cache { .. })
        ));
    }
}
