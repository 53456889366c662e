//! Binary dataset, checkpoint and power-matrix archive files.
//!
//! All formats are little-endian with a magic tag and a version number up
//! front. Writers stream into `<path>.partial` and rename on success, so a
//! failed run never leaves a file that looks complete.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::feasible::PowerMatrix;
use crate::gat::{param_layout, GatParams, WIDTHS};
use crate::scenario::ScenarioSample;
use crate::Mat;

pub const DATASET_MAGIC: [u8; 8] = *b"PCGATDS\0";
pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: [u8; 8] = *b"PCGATCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const POWER_MAGIC: [u8; 8] = *b"PCGATPW\0";
pub const POWER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub m: usize,
    pub k_max: usize,
    pub t_p: usize,
    pub count: usize,
    pub config_hash: [u8; 32],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<ScenarioSample>,
}

/// Path of the in-progress file for `path`.
pub fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

struct Writer {
    inner: BufWriter<File>,
    path: PathBuf,
}

impl Writer {
    fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner: BufWriter::new(f),
            path: path.to_path_buf(),
        })
    }

    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b).map_err(|e| Error::io(&self.path, e))
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Input(format!("{v} does not fit a 32-bit field")))?;
        self.bytes(&v.to_le_bytes())
    }

    fn u64(&mut self, v: usize) -> Result<()> {
        self.bytes(&(v as u64).to_le_bytes())
    }

    fn f64s<'a>(&mut self, vals: impl IntoIterator<Item = &'a f64>) -> Result<()> {
        for v in vals {
            self.bytes(&v.to_le_bytes())?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))?;
        let f = self.inner.into_inner().map_err(|e| Error::io(&self.path, e.into_error()))?;
        f.sync_all().map_err(|e| Error::io(&self.path, e))
    }
}

struct Reader {
    inner: BufReader<File>,
    path: PathBuf,
}

impl Reader {
    fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner: BufReader::new(f),
            path: path.to_path_buf(),
        })
    }

    fn format(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.clone(),
            reason: reason.into(),
        }
    }

    fn exact<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => self.format("truncated file"),
            _ => Error::io(&self.path, e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.exact()?) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.exact()?) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.exact()?))
    }

    fn mat(&mut self, rows: usize, cols: usize) -> Result<Mat> {
        let mut v = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            v.push(self.f64()?);
        }
        Ok(Array2::from_shape_vec((rows, cols), v).expect("length matches"))
    }

    fn magic(&mut self, want: [u8; 8], version: u32) -> Result<()> {
        let got: [u8; 8] = self.exact()?;
        if got != want {
            return Err(self.format(format!("bad magic {got:?}")));
        }
        let v = self.u32()?;
        if v != version as usize {
            return Err(self.format(format!("unsupported version {v} (expected {version})")));
        }
        Ok(())
    }

    fn at_end(&mut self) -> Result<bool> {
        let mut one = [0u8; 1];
        match self.inner.read(&mut one) {
            Ok(0) => Ok(true),
            Ok(_) => Ok(false),
            Err(e) => Err(Error::io(&self.path, e)),
        }
    }
}

fn commit(partial: &Path, path: &Path) -> Result<()> {
    std::fs::rename(partial, path).map_err(|e| Error::io(path, e))
}

/// Write a dataset. Every sample must match the header shape; the count is
/// taken from `samples`.
pub fn write_dataset(path: &Path, header: &DatasetHeader, samples: &[ScenarioSample]) -> Result<()> {
    let partial = partial_path(path);
    let mut w = Writer::create(&partial)?;
    w.bytes(&DATASET_MAGIC)?;
    w.u32(DATASET_VERSION as usize)?;
    w.u32(header.m)?;
    w.u32(header.k_max)?;
    w.u32(header.t_p)?;
    w.u64(samples.len())?;
    w.bytes(&header.config_hash)?;
    for (i, s) in samples.iter().enumerate() {
        if s.b.dim() != (header.m, header.k_max) {
            return Err(Error::shape(
                format!("dataset record {i}"),
                format!("{}x{}", header.m, header.k_max),
                format!("{}x{}", s.m(), s.k_max()),
            ));
        }
        w.u32(s.k_act)?;
        w.f64s(s.b.iter())?;
        w.f64s(s.phi.iter())?;
    }
    w.finish()?;
    commit(&partial, path)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut r = Reader::open(path)?;
    r.magic(DATASET_MAGIC, DATASET_VERSION)?;
    let m = r.u32()?;
    let k_max = r.u32()?;
    let t_p = r.u32()?;
    let count = r.u64()?;
    let config_hash = r.exact()?;
    if m == 0 || k_max == 0 {
        return Err(r.format(format!("degenerate shape {m}x{k_max}")));
    }
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let k_act = r.u32()?;
        let b = r.mat(m, k_max)?;
        let phi = r.mat(k_max, k_max)?;
        let s = ScenarioSample::from_parts(b, phi, k_act)
            .map_err(|e| r.format(format!("record {i}: {e}")))?;
        samples.push(s);
    }
    if !r.at_end()? {
        return Err(r.format(format!("trailing bytes after {count} records")));
    }
    Ok(Dataset {
        header: DatasetHeader {
            m,
            k_max,
            t_p,
            count,
            config_hash,
        },
        samples,
    })
}

/// Write power matrices of equal shape, one per dataset record.
pub fn write_power_archive(path: &Path, powers: &[PowerMatrix]) -> Result<()> {
    let (m, k) = powers.first().map_or((0, 0), |p| p.dim());
    if let Some(p) = powers.iter().find(|p| p.dim() != (m, k)) {
        return Err(Error::shape("power matrix", format!("{m}x{k}"), format!("{:?}", p.dim())));
    }
    let partial = partial_path(path);
    let mut w = Writer::create(&partial)?;
    w.bytes(&POWER_MAGIC)?;
    w.u32(POWER_VERSION as usize)?;
    w.u32(m)?;
    w.u32(k)?;
    w.u64(powers.len())?;
    for p in powers {
        w.f64s(p.iter())?;
    }
    w.finish()?;
    commit(&partial, path)
}

/// Read an archive written by [`write_power_archive`]. Entries are checked
/// for feasibility with `antennas` at tolerance 0.
pub fn read_power_archive(path: &Path, antennas: usize) -> Result<Vec<PowerMatrix>> {
    let mut r = Reader::open(path)?;
    r.magic(POWER_MAGIC, POWER_VERSION)?;
    let m = r.u32()?;
    let k = r.u32()?;
    let count = r.u64()?;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let mu = r.mat(m, k)?;
        let p = PowerMatrix::try_new(mu, antennas, 0.0)
            .map_err(|rep| r.format(format!("record {i} infeasible: {rep:?}")))?;
        out.push(p);
    }
    if !r.at_end()? {
        return Err(r.format(format!("trailing bytes after {count} records")));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub m: usize,
    pub k_max: usize,
    pub widths: Vec<usize>,
    pub config_hash: [u8; 32],
}

pub fn save_checkpoint(path: &Path, params: &GatParams, k_max: usize, config_hash: [u8; 32]) -> Result<()> {
    params.validate()?;
    let partial = partial_path(path);
    let mut w = Writer::create(&partial)?;
    w.bytes(&CHECKPOINT_MAGIC)?;
    w.u32(CHECKPOINT_VERSION as usize)?;
    w.u32(params.m)?;
    w.u32(k_max)?;
    w.u32(WIDTHS.len())?;
    for width in WIDTHS {
        w.u32(width)?;
    }
    w.bytes(&config_hash)?;
    w.u32(params.tensors.len())?;
    for (name, t) in &params.tensors {
        w.u32(name.len())?;
        w.bytes(name.as_bytes())?;
        w.u32(t.nrows())?;
        w.u32(t.ncols())?;
        w.f64s(t.iter())?;
    }
    w.finish()?;
    commit(&partial, path)
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(GatParams, CheckpointHeader)> {
    let mut r = Reader::open(path)?;
    r.magic(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let m = r.u32()?;
    let k_max = r.u32()?;
    let n_widths = r.u32()?;
    if n_widths > 64 {
        return Err(r.format(format!("implausible layer count {n_widths}")));
    }
    let widths = (0..n_widths).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let config_hash = r.exact()?;
    let header = CheckpointHeader {
        m,
        k_max,
        widths,
        config_hash,
    };
    if header.widths != WIDTHS {
        return Err(Error::shape("checkpoint layer widths", format!("{WIDTHS:?}"), format!("{:?}", header.widths)));
    }
    let n = r.u32()?;
    let expected = param_layout(m);
    if n != expected.len() {
        return Err(Error::shape("checkpoint tensor count", expected.len(), n));
    }
    let mut tensors = std::collections::BTreeMap::new();
    for _ in 0..n {
        let len = r.u32()?;
        if len > 256 {
            return Err(r.format(format!("implausible tensor name length {len}")));
        }
        let mut name = vec![0u8; len];
        r.inner.read_exact(&mut name).map_err(|_| r.format("truncated tensor name"))?;
        let name = String::from_utf8(name).map_err(|_| r.format("tensor name is not UTF-8"))?;
        let rows = r.u32()?;
        let cols = r.u32()?;
        if rows.saturating_mul(cols) > 1 << 24 {
            return Err(r.format(format!("implausible tensor shape {rows}x{cols}")));
        }
        tensors.insert(name, r.mat(rows, cols)?);
    }
    if !r.at_end()? {
        return Err(r.format("trailing bytes after tensors"));
    }
    let params = GatParams { m, tensors };
    params.validate()?;
    Ok((params, header))
}

/// Outcome of comparing a checkpoint header with the data it is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Compatibility {
    Match,
    /// Shapes agree but the creating configuration differs.
    ConfigHashDiffers,
}

/// Shapes must agree; a differing config hash is reported but allowed.
pub fn check_compatible(header: &CheckpointHeader, m: usize, k_max: usize, config_hash: &[u8; 32]) -> Result<Compatibility> {
    if header.m != m {
        return Err(Error::shape("checkpoint AP count (M)", m, header.m));
    }
    if header.k_max != k_max {
        return Err(Error::shape("checkpoint K_max", k_max, header.k_max));
    }
    if &header.config_hash != config_hash {
        log::warn!("checkpoint was created under a different configuration hash");
        return Ok(Compatibility::ConfigHashDiffers);
    }
    Ok(Compatibility::Match)
}
