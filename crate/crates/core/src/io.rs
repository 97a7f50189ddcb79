//! File formats: binary field snapshots and network checkpoints, CSV tables,
//! JSON manifests. Every write goes to a temporary file in the target
//! directory and is renamed into place.

use crate::net::MlpParams;
use crate::spectral::GridField;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const FIELD_MAGIC: [u8; 4] = *b"SQGF";
pub const FIELD_VERSION: u32 = 1;
pub const NET_MAGIC: [u8; 4] = *b"TNET";
pub const NET_VERSION: u32 = 1;

/// A field on the `N × N` grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub time: f64,
    pub field: GridField,
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format(format!("{} is truncated", self.what)));
        }
        let (a, b) = self.bytes.split_at(n);
        self.bytes = b;
        Ok(a)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn header(&mut self, magic: [u8; 4], version: u32) -> Result<()> {
        let m = self.take(4)?;
        if m != magic {
            return Err(Error::Format(format!("{}: bad magic {:?}", self.what, m)));
        }
        let v = self.u32()?;
        if v != version {
            return Err(Error::Format(format!("{}: unsupported version {v}", self.what)));
        }
        Ok(())
    }
    fn finish(&self) -> Result<()> {
        if self.bytes.is_empty() {
            Ok(())
        } else {
            Err(Error::Format(format!("{}: {} trailing bytes", self.what, self.bytes.len())))
        }
    }
}

/// Header `SQGF`, version, `N`, time, then `N²` values row-major with `x2`
/// fastest, all little-endian.
pub fn encode_field(s: &FieldSnapshot) -> Vec<u8> {
    let n = s.field.n();
    let mut out = Vec::with_capacity(20 + 8 * n * n);
    out.extend_from_slice(&FIELD_MAGIC);
    out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&s.time.to_le_bytes());
    for v in s.field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<FieldSnapshot> {
    let mut r = Reader { bytes, what: "field snapshot" };
    r.header(FIELD_MAGIC, FIELD_VERSION)?;
    let n = r.u32()? as usize;
    let time = r.f64()?;
    if bytes.len() != 20 + 8 * n * n {
        return Err(Error::Format(format!(
            "field snapshot: {} bytes for N = {n}",
            bytes.len()
        )));
    }
    let values = (0..n * n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(FieldSnapshot {
        time,
        field: GridField::new(n, values)?,
    })
}

pub fn write_field(path: &Path, s: &FieldSnapshot) -> Result<()> {
    write_atomic(path, &encode_field(s))
}

pub fn read_field(path: &Path) -> Result<FieldSnapshot> {
    decode_field(&std::fs::read(path)?)
}

/// Header `TNET`, version, seed, layer count and sizes, parameter count,
/// then the flat parameters (per layer: weights row-major `out × in`, then
/// biases), all little-endian.
pub fn encode_net(net: &MlpParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&NET_MAGIC);
    out.extend_from_slice(&NET_VERSION.to_le_bytes());
    out.extend_from_slice(&net.seed().to_le_bytes());
    out.extend_from_slice(&(net.layer_sizes().len() as u32).to_le_bytes());
    for &l in net.layer_sizes() {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out.extend_from_slice(&(net.len() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_net(bytes: &[u8]) -> Result<MlpParams> {
    let mut r = Reader { bytes, what: "network checkpoint" };
    r.header(NET_MAGIC, NET_VERSION)?;
    let seed = r.u64()?;
    let layers = r.u32()? as usize;
    if layers > 1024 {
        return Err(Error::Format(format!("network checkpoint: {layers} layers")));
    }
    let sizes = (0..layers)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let count = r.u64()? as usize;
    if r.bytes.len() != 8 * count {
        return Err(Error::Format("network checkpoint: parameter count mismatch".into()));
    }
    let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    MlpParams::from_parts(&sizes, params, seed)
}

pub fn write_net(path: &Path, net: &MlpParams) -> Result<()> {
    write_atomic(path, &encode_net(net))
}

pub fn read_net(path: &Path) -> Result<MlpParams> {
    decode_net(&std::fs::read(path)?)
}

/// CSV with a header row; floats use the shortest round-trip form.
pub fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &json_bytes(value)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Provenance of one run: the inputs that determine it and a hash of every
/// file it wrote. Contains no timestamps, so identical runs give identical
/// manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let config_sha256 = sha256_hex(&serde_json::to_vec(&config)?);
        Ok(Self {
            tool: "sqgnet".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            config_sha256,
            seed,
            outputs: BTreeMap::new(),
        })
    }

    /// Hashes the files under `dir` named in `files` (relative paths).
    pub fn record(&mut self, dir: &Path, files: &[String]) -> Result<()> {
        for f in files {
            let bytes = std::fs::read(dir.join(f))?;
            self.outputs.insert(f.clone(), sha256_hex(&bytes));
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_is_bitwise() {
        let f = GridField::from_fn(8, |x, y| (x * 1.3).sin() * y.cos() + 1e-300).unwrap();
        let s = FieldSnapshot { time: 0.125, field: f };
        let bytes = encode_field(&s);
        let back = decode_field(&bytes).unwrap();
        assert_eq!(encode_field(&back), bytes);
        assert_eq!(back.time.to_bits(), s.time.to_bits());
        for (a, b) in back.field.values().iter().zip(s.field.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn field_header_is_checked() {
        let s = FieldSnapshot { time: 0.0, field: GridField::zeros(4).unwrap() };
        let mut bytes = encode_field(&s);
        bytes[0] = b'X';
        assert!(matches!(decode_field(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_field(&s);
        bytes[4] = 2;
        assert!(matches!(decode_field(&bytes), Err(Error::Format(_))));
        let bytes = encode_field(&s);
        assert!(matches!(decode_field(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    }

    #[test]
    fn net_round_trip() {
        let net = MlpParams::new(&[3, 7, 4, 1], 5).unwrap();
        let back = decode_net(&encode_net(&net)).unwrap();
        assert_eq!(back, net);
        let mut bytes = encode_net(&net);
        bytes[2] = 0;
        assert!(decode_net(&bytes).is_err());
    }

    #[test]
    fn atomic_write_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(&dir.path().join("a.bin"), b"hello").unwrap();
        let mut m = Manifest::new("test", &serde_json::json!({"k": 1}), Some(3)).unwrap();
        m.record(dir.path(), &["a.bin".to_string()]).unwrap();
        assert_eq!(
            m.outputs["a.bin"],
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        m.write(dir.path()).unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert!(names.iter().all(|n| !n.contains(".tmp")), "{names:?}");
    }

    #[test]
    fn csv_round_trip() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Row {
            x1: f64,
            x2: f64,
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![Row { x1: 0.1, x2: -3.0 }, Row { x1: 1e-17, x2: 2.5 }];
        write_csv(&p, &rows).unwrap();
        assert_eq!(read_csv::<Row>(&p).unwrap(), rows);
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("x1,x2\n"));
    }
}
