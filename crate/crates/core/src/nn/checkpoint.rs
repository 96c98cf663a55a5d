//! Model checkpoints: `GMEBCKPT`, u32 version, u32 header length, a JSON
//! header (backbone, dims, seed, parameter shapes), then every parameter as
//! row-major little-endian f64 in declaration order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::model::{Backbone, GnnModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GMEBCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    backbone: Backbone,
    feat_dim: usize,
    hidden_dim: usize,
    num_classes: usize,
    dropout: f64,
    seed: u64,
    params: Vec<ParamShape>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamShape {
    name: String,
    rows: usize,
    cols: usize,
}

pub fn write_checkpoint(model: &GnnModel, mut w: impl Write) -> Result<()> {
    let header = Header {
        backbone: model.backbone,
        feat_dim: model.feat_dim,
        hidden_dim: model.hidden_dim,
        num_classes: model.num_classes,
        dropout: model.dropout,
        seed: model.seed,
        params: model
            .backbone
            .param_names()
            .into_iter()
            .zip(model.params())
            .map(|(name, p)| ParamShape {
                name,
                rows: p.rows(),
                cols: p.cols(),
            })
            .collect(),
    };
    let h = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(h.len() as u32).to_le_bytes())?;
    w.write_all(&h)?;
    for p in model.params() {
        for v in p.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<GnnModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    r.read_exact(&mut b4)?;
    let mut h = vec![0u8; u32::from_le_bytes(b4) as usize];
    r.read_exact(&mut h)?;
    let header: Header = serde_json::from_slice(&h)?;
    let mut params = Vec::with_capacity(header.params.len());
    let mut b8 = [0u8; 8];
    for s in &header.params {
        let mut data = Vec::with_capacity(s.rows * s.cols);
        for _ in 0..s.rows * s.cols {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        params.push(Matrix::from_vec(s.rows, s.cols, data)?);
    }
    GnnModel::from_params(
        header.backbone,
        header.feat_dim,
        header.hidden_dim,
        header.num_classes,
        header.dropout,
        header.seed,
        params,
    )
}

pub fn save_checkpoint(model: &GnnModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GnnModel> {
    read_checkpoint(fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_every_backbone() {
        for b in Backbone::ALL {
            let m = GnnModel::init(b, 7, 5, 3, 0.5, 99);
            let mut buf = Vec::new();
            write_checkpoint(&m, &mut buf).unwrap();
            assert_eq!(read_checkpoint(buf.as_slice()).unwrap(), m);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&b"NOTACKPT\x01\0\0\0"[..]).is_err());
        let m = GnnModel::init(Backbone::Gcn, 2, 2, 2, 0.0, 0);
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }
}
