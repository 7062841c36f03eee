//! Weights file.
//!
//! ```text
//! offset  size  content
//! 0       8     magic b"RGAGNET\0"
//! 8       4     format version, u32 little endian (currently 1)
//! 12      8     header length H, u64 little endian
//! 20      H     UTF-8 JSON header: net_config, action_set, train_config, layout
//! 20+H    8     parameter count P, u64 little endian
//! 28+H    8·P   parameters, f64 little endian, in layout order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{NetConfig, TrainConfig};
use super::model::RewardNet;
use super::params::{Layout, NetworkParameters};
use crate::actions::ActionSet;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RGAGNET\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    net_config: NetConfig,
    action_set: serde_json::Value,
    train_config: Option<TrainConfig>,
    layout: Layout,
}

/// A network together with the training configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub net: RewardNet,
    pub train_config: Option<TrainConfig>,
}

pub fn write_weights<W: Write>(
    mut w: W,
    net: &RewardNet,
    train_config: Option<&TrainConfig>,
) -> Result<()> {
    let header = Header {
        net_config: net.config.clone(),
        action_set: ActionSet::default().describe(),
        train_config: train_config.cloned(),
        layout: net.params.layout.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(net.params.len() as u64).to_le_bytes())?;
    for v in net.params.flat() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::UnsupportedFormat(msg.into())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_weights<R: Read>(mut r: R) -> Result<WeightsFile> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| bad("weights file is truncated"))?;
    if &magic != MAGIC {
        return Err(bad("not a weights file (bad magic)"));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported weights format version {version}")));
    }
    let hlen = read_u64(&mut r)?;
    if hlen > 1 << 30 {
        return Err(bad("weights header is implausibly large"));
    }
    let mut json = vec![0u8; hlen as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    if ActionSet::from_description(&header.action_set)? != ActionSet::default() {
        return Err(Error::validation(
            "weights were trained for a different action set",
        ));
    }
    let layout = Layout::new(&header.net_config);
    if layout != header.layout {
        return Err(Error::validation(
            "stored layout does not match the stored configuration",
        ));
    }
    let count = read_u64(&mut r)? as usize;
    if count != layout.total() {
        return Err(Error::validation(format!(
            "weights hold {count} parameters, the configuration needs {}",
            layout.total()
        )));
    }
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| bad("weights file is truncated"))?;
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let params = NetworkParameters::from_flat(&header.net_config, values)?;
    Ok(WeightsFile {
        net: RewardNet::from_parts(header.net_config, params)?,
        train_config: header.train_config,
    })
}

pub fn save_weights(
    path: impl AsRef<Path>,
    net: &RewardNet,
    train_config: Option<&TrainConfig>,
) -> Result<()> {
    write_weights(BufWriter::new(File::create(path)?), net, train_config)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightsFile> {
    read_weights(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = RewardNet::new(NetConfig::desk()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_weights(&path, &net, Some(&TrainConfig::desk())).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.net, net);
        assert_eq!(back.train_config, Some(TrainConfig::desk()));
    }

    #[test]
    fn byte_layout() {
        let net = RewardNet::new(NetConfig::desk()).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &net, None).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        let h = u64::from_le_bytes(buf[12..20].try_into().unwrap()) as usize;
        let p = u64::from_le_bytes(buf[20 + h..28 + h].try_into().unwrap()) as usize;
        assert_eq!(p, net.params.len());
        assert_eq!(buf.len(), 28 + h + 8 * p);
        let first = f64::from_le_bytes(buf[28 + h..36 + h].try_into().unwrap());
        assert_eq!(first, net.params.values[0]);
    }

    #[test]
    fn rejects_corruption() {
        let net = RewardNet::new(NetConfig::desk()).unwrap();
        let mut buf = Vec::new();
        write_weights(&mut buf, &net, None).unwrap();
        let mut wrong_magic = buf.clone();
        wrong_magic[0] = b'X';
        assert!(read_weights(&wrong_magic[..]).is_err());
        let mut wrong_version = buf.clone();
        wrong_version[8] = 9;
        assert!(read_weights(&wrong_version[..]).is_err());
        assert!(read_weights(&buf[..buf.len() - 8]).is_err());
    }
}
