//! Binary checkpoint format, little-endian:
//!
//! ```text
//! magic        4 bytes  "CBL1"
//! num_classes  u32
//! num_stages   u32
//! widths       u32 x num_stages
//! kernel_hidden u32
//! multi_scale  u8 (0 | 1)
//! base_cell    f64
//! seed         u64
//! num_cbl      u32
//! cbl_stages   u32 x num_cbl
//! num_params   u64
//! params       f64 x num_params, tensors in declaration order
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::model::{NetConfig, SegNet};

pub const MAGIC: &[u8; 4] = b"CBL1";

pub fn encode(net: &SegNet) -> Vec<u8> {
    let c = &net.config;
    let mut out = Vec::with_capacity(64 + 8 * net.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(c.num_classes as u32).to_le_bytes());
    out.extend_from_slice(&(c.widths.len() as u32).to_le_bytes());
    for &w in &c.widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.extend_from_slice(&(c.kernel_hidden as u32).to_le_bytes());
    out.push(u8::from(c.multi_scale_head));
    out.extend_from_slice(&c.base_cell.to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&(c.cbl_stages.len() as u32).to_le_bytes());
    for &s in &c.cbl_stages {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    let params = net.flat_params();
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<SegNet> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(&MAGIC[..]) {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let num_classes = r.u32()?;
    let num_stages = r.u32()?;
    if num_stages > 64 {
        return Err(Error::Checkpoint(format!("implausible stage count {num_stages}")));
    }
    let widths = (0..num_stages).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let kernel_hidden = r.u32()?;
    let multi_scale_head = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Checkpoint(format!("bad multi-scale flag {other}"))),
    };
    let base_cell = r.f64()?;
    let seed = r.u64()?;
    let num_cbl = r.u32()?;
    if num_cbl > num_stages {
        return Err(Error::Checkpoint("more contrastive stages than stages".into()));
    }
    let cbl_stages = (0..num_cbl).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let config = NetConfig {
        num_classes,
        widths,
        kernel_hidden,
        multi_scale_head,
        cbl_stages,
        base_cell,
        seed,
    };
    let mut net = SegNet::new(config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let count = r.u64()? as usize;
    if count != net.num_params() {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match architecture ({})",
            net.num_params()
        )));
    }
    if bytes.len() - r.pos != 8 * count {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            8 * count,
            bytes.len() - r.pos
        )));
    }
    let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    net.set_flat_params(&params)?;
    Ok(net)
}

pub fn save_checkpoint(net: &SegNet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(net))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SegNet> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let net = SegNet::new(NetConfig {
            widths: vec![3, 4],
            cbl_stages: vec![1],
            seed: 77,
            ..Default::default()
        })
        .unwrap();
        let bytes = encode(&net);
        assert_eq!(&bytes[..4], b"CBL1");
        assert_eq!(decode(&bytes).unwrap(), net);
    }

    #[test]
    fn rejects_corruption() {
        let net = SegNet::new(NetConfig::default()).unwrap();
        let bytes = encode(&net);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(m)) if m.contains("magic")));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        assert!(decode(b"CB").is_err());
    }
}
