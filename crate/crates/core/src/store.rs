//! Single-file archive of a built model and its tables.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "RAILCRWD"
//! version    u32      currently 1
//! sections   repeated: tag [u8; 4], length u64, payload
//! checksum   32 bytes SHA-256 of every preceding byte
//! ```
//!
//! Sections appear in the order `META`, `MODL`, `LOCT`, `DEST`. Strings are a
//! `u32` byte length followed by UTF-8. See `docs/archive-format.md` for the
//! payload of each section.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::desttable::DestinationTable;
use crate::estimator::{ActionTimeModel, WalkMoments};
use crate::loctable::{LocationTable, LocationTableSet};
use crate::network::{enumerate_walk_variables, ActionId, StationIdx, Topology};

pub const MAGIC: [u8; 8] = *b"RAILCRWD";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("archive i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an archive (bad magic bytes)")]
    BadMagic,
    #[error("unsupported archive version {found} (supported: {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("archive checksum mismatch: file is truncated or corrupted")]
    Checksum,
    #[error("archive was built for a different network topology")]
    Fingerprint,
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("inconsistent tables: {0}")]
    Inconsistent(String),
}

/// Build parameters recorded alongside the tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchiveMeta {
    pub fingerprint: [u8; 32],
    /// Seconds since the Unix epoch.
    pub built_at: i64,
    pub delta: f64,
    pub i_max: u32,
    /// Fixed horizon in steps, 0 when sized per route.
    pub horizon: u32,
    pub bin_width: i64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableArchive {
    pub meta: ArchiveMeta,
    pub model: ActionTimeModel,
    pub locations: LocationTableSet,
    pub destinations: DestinationTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveSummary {
    pub version: u32,
    pub bytes: u64,
    pub walk_variables: usize,
    pub location_tables: usize,
    pub location_cells: usize,
    pub destination_records: usize,
    /// Set when the archive has no destination history.
    pub empty_destination_table: bool,
}

impl std::fmt::Display for ArchiveSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "archive v{}: {} bytes, {} walk variables, {} location tables ({} cells), {} destination records",
            self.version,
            self.bytes,
            self.walk_variables,
            self.location_tables,
            self.location_cells,
            self.destination_records
        )?;
        if self.empty_destination_table {
            write!(f, " [empty destination table]")?;
        }
        Ok(())
    }
}

impl TableArchive {
    pub fn summary(&self, bytes: u64) -> ArchiveSummary {
        ArchiveSummary {
            version: FORMAT_VERSION,
            bytes,
            walk_variables: self.model.len(),
            location_tables: self.locations.len(),
            location_cells: self.locations.iter().map(|t| t.counts().len()).sum(),
            destination_records: self.destinations.n_records(),
            empty_destination_table: self.destinations.is_empty(),
        }
    }
}

#[derive(Default)]
struct Buf(Vec<u8>);

impl Buf {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn section(&mut self, tag: &[u8; 4], payload: Buf) {
        self.0.extend_from_slice(tag);
        self.u64(payload.0.len() as u64);
        self.0.extend_from_slice(&payload.0);
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        if self.data.len() - self.pos < n {
            return Err(StoreError::Corrupt(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], StoreError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn i64(&mut self) -> Result<i64, StoreError> {
        Ok(i64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, StoreError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn len(&mut self, unit: usize) -> Result<usize, StoreError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(unit) > self.data.len() - self.pos {
            return Err(StoreError::Corrupt(format!("length {n} exceeds remaining data")));
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, StoreError> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| StoreError::Corrupt("invalid UTF-8".into()))
    }
    fn section(&mut self, tag: &[u8; 4]) -> Result<Cursor<'a>, StoreError> {
        let found = self.array::<4>()?;
        if &found != tag {
            return Err(StoreError::Corrupt(format!(
                "expected section {}, found {}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(&found)
            )));
        }
        let n = self.u64()? as usize;
        Ok(Cursor { data: self.take(n)?, pos: 0 })
    }
    fn finish(&self, what: &str) -> Result<(), StoreError> {
        if self.pos != self.data.len() {
            return Err(StoreError::Corrupt(format!("{} trailing bytes in {what}", self.data.len() - self.pos)));
        }
        Ok(())
    }
}

/// Serialises an archive to bytes. Fails if the tables were built for
/// different topologies.
pub fn encode_archive(archive: &TableArchive) -> Result<Vec<u8>, StoreError> {
    let fp = archive.meta.fingerprint;
    if archive.locations.fingerprint() != fp {
        return Err(StoreError::Inconsistent("location tables were built for another topology".into()));
    }
    if !archive.destinations.is_empty() && archive.destinations.fingerprint() != fp {
        return Err(StoreError::Inconsistent("destination table was built for another topology".into()));
    }

    let mut out = Buf::default();
    out.0.extend_from_slice(&MAGIC);
    out.u32(FORMAT_VERSION);

    let m = &archive.meta;
    let mut meta = Buf::default();
    meta.0.extend_from_slice(&m.fingerprint);
    meta.i64(m.built_at);
    meta.f64(m.delta);
    meta.u32(m.i_max);
    meta.u32(m.horizon);
    meta.i64(m.bin_width);
    meta.u64(m.seed);
    out.section(b"META", meta);

    let mut model = Buf::default();
    model.u32(archive.model.len() as u32);
    for (v, mo) in archive.model.walks().vars().iter().zip(archive.model.moments()) {
        model.str(&v.id);
        model.f64(mo.mean);
        model.f64(mo.variance);
    }
    out.section(b"MODL", model);

    let mut loc = Buf::default();
    loc.u32(archive.locations.n_stations() as u32);
    loc.u32(archive.locations.len() as u32);
    for t in archive.locations.iter() {
        loc.u32(t.origin().0);
        loc.u32(t.destination().0);
        loc.f64(t.delta());
        loc.u32(t.horizon());
        loc.u32(t.i_max());
        loc.u32(t.n_actions() as u32);
        for a in t.actions() {
            loc.u32(a.0);
        }
        for &c in t.counts() {
            loc.u32(c);
        }
    }
    out.section(b"LOCT", loc);

    let d = &archive.destinations;
    let mut dest = Buf::default();
    dest.u32(d.n_stations() as u32);
    dest.i64(d.bin_width());
    let cells: Vec<_> = d.cells().collect();
    dest.u32(cells.len() as u32);
    for ((s, bin, to), times) in cells {
        dest.u32(s.0);
        dest.u32(bin);
        dest.u32(to.0);
        dest.u32(times.len() as u32);
        for &t in times {
            dest.f64(t);
        }
    }
    out.section(b"DEST", dest);

    let digest = Sha256::digest(&out.0);
    out.0.extend_from_slice(&digest);
    Ok(out.0)
}

/// Parses archive bytes and checks them against `topo`.
pub fn decode_archive(bytes: &[u8], topo: &Topology) -> Result<TableArchive, StoreError> {
    if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
        return Err(StoreError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 4 + CHECKSUM_LEN {
        return Err(StoreError::Checksum);
    }
    let (body, sum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != sum {
        return Err(StoreError::Checksum);
    }
    let mut cur = Cursor { data: body, pos: MAGIC.len() };
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(StoreError::Version { found: version });
    }

    let mut s = cur.section(b"META")?;
    let meta = ArchiveMeta {
        fingerprint: s.array()?,
        built_at: s.i64()?,
        delta: s.f64()?,
        i_max: s.u32()?,
        horizon: s.u32()?,
        bin_width: s.i64()?,
        seed: s.u64()?,
    };
    s.finish("META")?;
    if meta.fingerprint != topo.fingerprint() {
        return Err(StoreError::Fingerprint);
    }

    let mut s = cur.section(b"MODL")?;
    let walks = enumerate_walk_variables(topo);
    let n = s.len(20)?;
    if n != walks.len() {
        return Err(StoreError::Corrupt(format!("model has {n} variables, network has {}", walks.len())));
    }
    let mut moments = Vec::with_capacity(n);
    for l in 0..n {
        let id = s.str()?;
        if id != walks.get(l).id {
            return Err(StoreError::Corrupt(format!("model variable {l} is '{id}', expected '{}'", walks.get(l).id)));
        }
        moments.push(WalkMoments { mean: s.f64()?, variance: s.f64()? });
    }
    s.finish("MODL")?;
    let model = ActionTimeModel::new(walks, moments).map_err(|e| StoreError::Corrupt(e.to_string()))?;

    let mut s = cur.section(b"LOCT")?;
    let n_stations = s.u32()? as usize;
    if n_stations != topo.n_stations() {
        return Err(StoreError::Corrupt(format!(
            "tables cover {n_stations} stations, network has {}",
            topo.n_stations()
        )));
    }
    let n_tables = s.len(32)?;
    let n_actions = topo.catalog().len() as u32;
    let mut tables = Vec::with_capacity(n_tables);
    for _ in 0..n_tables {
        let (o, d) = (s.u32()?, s.u32()?);
        let delta = s.f64()?;
        let horizon = s.u32()?;
        let i_max = s.u32()?;
        let m = s.len(4)?;
        if o as usize >= n_stations || d as usize >= n_stations {
            return Err(StoreError::Corrupt(format!("station index out of range in table {o}->{d}")));
        }
        let mut actions = Vec::with_capacity(m);
        for _ in 0..m {
            let a = s.u32()?;
            if a >= n_actions {
                return Err(StoreError::Corrupt(format!("action id {a} out of range")));
            }
            actions.push(ActionId(a));
        }
        let cells =
            (m + 1).checked_mul(horizon as usize).ok_or_else(|| StoreError::Corrupt("table too large".into()))?;
        let raw = s.take(cells.checked_mul(4).ok_or_else(|| StoreError::Corrupt("table too large".into()))?)?;
        let counts = raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        let t = LocationTable::from_counts(StationIdx(o), StationIdx(d), actions, delta, horizon, i_max, counts)
            .map_err(|e| StoreError::Corrupt(e.to_string()))?;
        tables.push(t);
    }
    s.finish("LOCT")?;
    let locations = LocationTableSet::new(n_stations, meta.fingerprint, tables);

    let mut s = cur.section(b"DEST")?;
    let dest_stations = s.u32()? as usize;
    let bin_width = s.i64()?;
    if bin_width <= 0 {
        return Err(StoreError::Corrupt(format!("bin width {bin_width}")));
    }
    let n_cells = s.len(16)?;
    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let (o, bin, d) = (s.u32()?, s.u32()?, s.u32()?);
        let n = s.len(8)?;
        let raw = s.take(n * 8)?;
        let times = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        cells.push(((StationIdx(o), bin, StationIdx(d)), times));
    }
    s.finish("DEST")?;
    let dest_stations = if n_cells == 0 { topo.n_stations() } else { dest_stations };
    let destinations = DestinationTable::from_cells(dest_stations, bin_width, meta.fingerprint, cells);
    cur.finish("archive")?;

    Ok(TableArchive { meta, model, locations, destinations })
}

/// Writes the archive to `path` and returns its summary.
pub fn save_archive(path: &Path, archive: &TableArchive) -> Result<ArchiveSummary, StoreError> {
    let bytes = encode_archive(archive)?;
    fs::write(path, &bytes)?;
    Ok(archive.summary(bytes.len() as u64))
}

pub fn load_archive(path: &Path, topo: &Topology) -> Result<TableArchive, StoreError> {
    decode_archive(&fs::read(path)?, topo)
}
