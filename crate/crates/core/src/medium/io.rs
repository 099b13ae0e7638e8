//! Binary `.dat` container for node fields, plus a JSON sidecar that records
//! how a realization was drawn.
//!
//! Layout (little endian): magic `KPPM`, `u16` version, `u64` node count,
//! `f64` spacing, `f64` window, `u64` master seed, `u64` stream id,
//! `u64` realization id, `u16` field count, then each field as `n` doubles.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{regenerate, EnsembleSpec, MediumRealization, Transform};
use crate::error::{KppError, Result};

const MAGIC: &[u8; 4] = b"KPPM";
const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Header {
    pub n: u64,
    pub h: f64,
    pub window: f64,
    pub master_seed: u64,
    pub stream_id: u64,
    pub realization_id: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub header: Header,
    pub fields: Vec<Vec<f64>>,
}

/// Everything needed to redraw a realization bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub ensemble: EnsembleSpec,
    pub master_seed: u64,
    pub stream_id: u64,
    pub base_window: f64,
    pub window: f64,
    pub h: f64,
    pub transform: Transform,
    pub realization_id: String,
    pub fields: Vec<String>,
}

pub fn header_of(m: &MediumRealization) -> Header {
    Header {
        n: m.len() as u64,
        h: m.spacing(),
        window: m.window(),
        master_seed: m.master_seed,
        stream_id: m.stream_id,
        realization_id: m.realization_id,
    }
}

pub fn encode(header: &Header, fields: &[&[f64]]) -> Result<Vec<u8>> {
    let n = header.n as usize;
    if fields.iter().any(|f| f.len() != n) {
        return Err(KppError::Format(
            "field length differs from node count".into(),
        ));
    }
    let mut buf = Vec::with_capacity(64 + 8 * n * fields.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&header.n.to_le_bytes());
    buf.extend_from_slice(&header.h.to_le_bytes());
    buf.extend_from_slice(&header.window.to_le_bytes());
    buf.extend_from_slice(&header.master_seed.to_le_bytes());
    buf.extend_from_slice(&header.stream_id.to_le_bytes());
    buf.extend_from_slice(&header.realization_id.to_le_bytes());
    buf.extend_from_slice(&(fields.len() as u16).to_le_bytes());
    for f in fields {
        for v in f.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let end = self.pos + K;
        if end > self.bytes.len() {
            return Err(KppError::Format("truncated container".into()));
        }
        let out = self.bytes[self.pos..end]
            .try_into()
            .expect("slice has length K");
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Container> {
    let mut cur = Cursor { bytes, pos: 0 };
    if &cur.take::<4>()? != MAGIC {
        return Err(KppError::Format("bad magic".into()));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(KppError::Format(format!("unsupported version {version}")));
    }
    let header = Header {
        n: cur.u64()?,
        h: cur.f64()?,
        window: cur.f64()?,
        master_seed: cur.u64()?,
        stream_id: cur.u64()?,
        realization_id: cur.u64()?,
    };
    let count = cur.u16()? as usize;
    let n = header.n as usize;
    if bytes.len() - cur.pos != 8 * n * count {
        return Err(KppError::Format(
            "payload size does not match header".into(),
        ));
    }
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        let mut f = Vec::with_capacity(n);
        for _ in 0..n {
            f.push(cur.f64()?);
        }
        fields.push(f);
    }
    Ok(Container { header, fields })
}

pub fn write_container(path: &Path, header: &Header, fields: &[&[f64]]) -> Result<()> {
    let bytes = encode(header, fields)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Container> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn sidecar_path(dat: &Path) -> PathBuf {
    dat.with_extension("json")
}

pub fn sidecar_of(m: &MediumRealization) -> Sidecar {
    Sidecar {
        ensemble: m.ensemble.clone(),
        master_seed: m.master_seed,
        stream_id: m.stream_id,
        base_window: m.base_window(),
        window: m.window(),
        h: m.spacing(),
        transform: m.transform,
        realization_id: format!("{:016x}", m.realization_id),
        fields: vec!["a".into(), "a_prime".into(), "c".into()],
    }
}

/// Write `a`, `a'` and `c` to `path` and the sidecar next to it.
pub fn save_realization(m: &MediumRealization, path: &Path) -> Result<()> {
    write_container(path, &header_of(m), &[&m.a, &m.a_prime, &m.c])?;
    let side = serde_json::to_string_pretty(&sidecar_of(m))?;
    fs::write(sidecar_path(path), side)?;
    Ok(())
}

/// Redraw the realization described by the sidecar and check it against the
/// stored arrays.
pub fn load_realization(path: &Path) -> Result<MediumRealization> {
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let stored = read_container(path)?;
    let m = regenerate(
        &side.ensemble,
        side.master_seed,
        side.stream_id,
        side.base_window,
        side.window,
        side.h,
        side.transform,
    )?;
    if stored.fields.len() < 3 {
        return Err(KppError::Format("expected fields a, a', c".into()));
    }
    if header_of(&m) != stored.header
        || stored.fields[0] != m.a
        || stored.fields[1] != m.a_prime
        || stored.fields[2] != m.c
    {
        return Err(KppError::Format(
            "stored arrays disagree with the sidecar".into(),
        ));
    }
    Ok(m)
}
