//! Binary checkpoints for energy networks and soft classifiers.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 8     | magic `EBSMCKPT` |
//! | 4     | format version (`u32`, currently 1) |
//! | 4     | type tag (`u32`: 1 energy, 2 classifier) |
//! | 8     | input dimension `d` (`u64`) |
//! | 8     | number of widths `L + 1` (`u64`) |
//! | 8·(L+1) | widths (`u64`), input first |
//! | 8     | `σ` (`f64`) |
//! | 8     | parameter count (`u64`) |
//! | 8·P   | parameters (`f64`) in the [`Mlp`] layer order |

use std::path::Path;

use crate::classifier::SoftClassifier;
use crate::energy::EnergyNet;
use crate::mlp::Mlp;
use crate::score::ScoreSource;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EBSMCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Kind {
    Energy = 1,
    Classifier = 2,
}

pub fn encode(kind: Kind, mlp: &Mlp, sigma: f64) -> Vec<u8> {
    let widths = mlp.widths();
    let mut out = Vec::with_capacity(48 + 8 * (widths.len() + mlp.num_params()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&(mlp.input_dim() as u64).to_le_bytes());
    out.extend_from_slice(&(widths.len() as u64).to_le_bytes());
    for &w in widths {
        out.extend_from_slice(&(w as u64).to_le_bytes());
    }
    out.extend_from_slice(&sigma.to_le_bytes());
    out.extend_from_slice(&(mlp.num_params() as u64).to_le_bytes());
    for p in mlp.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| Error::Format {
            offset: self.pos as u64,
            detail: format!("truncated checkpoint while reading {what}"),
        })?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn fail<T>(&self, offset: usize, detail: String) -> Result<T> {
        Err(Error::Format { offset: offset as u64, detail })
    }
}

/// Decode a checkpoint of the expected kind into `(network, σ)`.
pub fn decode(bytes: &[u8], expected: Kind) -> Result<(Mlp, f64)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return r.fail(0, "bad checkpoint magic".into());
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return r.fail(8, format!("unsupported checkpoint version {version}"));
    }
    let tag = r.u32("type tag")?;
    if tag != expected as u32 {
        return r.fail(12, format!("checkpoint type tag {tag}, expected {}", expected as u32));
    }
    let d = r.u64("dimension")?;
    let n_widths = r.u64("width count")?;
    if !(2..=1024).contains(&n_widths) {
        return r.fail(24, format!("implausible width count {n_widths}"));
    }
    let mut widths = Vec::with_capacity(n_widths as usize);
    for _ in 0..n_widths {
        widths.push(r.u64("width")? as usize);
    }
    if widths[0] as u64 != d {
        return r.fail(16, format!("dimension {d} disagrees with input width {}", widths[0]));
    }
    let sigma = r.f64("sigma")?;
    let count_at = r.pos;
    let count = r.u64("parameter count")? as usize;
    let mlp = Mlp::zeros(&widths).map_err(|e| Error::Format { offset: 32, detail: e.to_string() })?;
    if count != mlp.num_params() {
        return r.fail(count_at, format!("parameter count {count} does not match widths ({})", mlp.num_params()));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        params.push(r.f64("parameter")?);
    }
    if r.pos != bytes.len() {
        return r.fail(r.pos, "trailing bytes after parameters".into());
    }
    Ok((Mlp::from_params(&widths, params)?, sigma))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    Ok(std::fs::read(path)?)
}

pub fn save_energy(net: &EnergyNet, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, encode(Kind::Energy, net.mlp(), net.sigma()))?)
}

pub fn load_energy(path: &Path) -> Result<EnergyNet> {
    let (mlp, sigma) = decode(&read(path)?, Kind::Energy)?;
    EnergyNet::from_mlp(mlp, sigma)
}

/// `sigma` records the noise scale the classifier was trained at.
pub fn save_classifier(clf: &SoftClassifier, sigma: f64, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, encode(Kind::Classifier, clf.mlp(), sigma))?)
}

pub fn load_classifier(path: &Path) -> Result<(SoftClassifier, f64)> {
    let (mlp, sigma) = decode(&read(path)?, Kind::Classifier)?;
    Ok((SoftClassifier::from_mlp(mlp)?, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;

    #[test]
    fn bit_exact_round_trip() {
        let net = EnergyNet::from_mlp(Mlp::new(&[3, 5, 4, 1], &mut RngStream::new(1, 0)).unwrap(), 0.3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.ckpt");
        save_energy(&net, &p).unwrap();
        let back = load_energy(&p).unwrap();
        assert_eq!(back.sigma().to_bits(), 0.3f64.to_bits());
        assert!(back.mlp().params().iter().zip(net.mlp().params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.mlp().widths(), net.mlp().widths());
    }

    #[test]
    fn header_layout() {
        let mlp = Mlp::zeros(&[2, 1]).unwrap();
        let b = encode(Kind::Energy, &mlp, 1.5);
        assert_eq!(&b[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[24..32].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[48..56].try_into().unwrap()), 1.5);
        assert_eq!(b.len(), 56 + 8 + 3 * 8);
    }

    #[test]
    fn rejects_wrong_kind_and_corruption() {
        let mlp = Mlp::zeros(&[2, 3, 2]).unwrap();
        let b = encode(Kind::Classifier, &mlp, 0.5);
        assert!(decode(&b, Kind::Energy).is_err());
        assert!(decode(&b, Kind::Classifier).is_ok());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, Kind::Classifier), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode(&b[..b.len() - 1], Kind::Classifier), Err(Error::Format { .. })));
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode(&extra, Kind::Classifier).is_err());
    }
}
