//! Binary weight files.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! magic "ZMNW" | version | input rank | input dims... | layer count |
//! per layer: tag byte (0 dense, 1 conv2d, 2 relu) + its fields |
//! parameter value count | f32 values in declaration order (weight, bias per layer)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Layer, Network, Tensor};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"ZMNW";
pub const WEIGHTS_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::WeightFormat(format!("value {v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub fn write_weights<W: Write>(net: &Network, w: &mut W) -> Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    put_u32(w, WEIGHTS_VERSION as usize)?;
    put_u32(w, net.input_shape().len())?;
    for &d in net.input_shape() {
        put_u32(w, d)?;
    }
    put_u32(w, net.layers().len())?;
    for layer in net.layers() {
        match *layer {
            Layer::Dense { inputs, outputs } => {
                w.write_all(&[0])?;
                put_u32(w, inputs)?;
                put_u32(w, outputs)?;
            }
            Layer::Conv2d { in_channels, out_channels, kernel_h, kernel_w, stride_h, stride_w } => {
                w.write_all(&[1])?;
                for v in [in_channels, out_channels, kernel_h, kernel_w, stride_h, stride_w] {
                    put_u32(w, v)?;
                }
            }
            Layer::Relu => w.write_all(&[2])?,
        }
    }
    put_u32(w, net.param_count())?;
    for p in net.params() {
        for &v in p.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_weights<R: Read>(r: &mut R) -> Result<Network> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::WeightFormat(format!("bad magic {magic:?}")));
    }
    let version = get_u32(r)?;
    if version != WEIGHTS_VERSION as usize {
        return Err(Error::WeightFormat(format!("unsupported version {version}")));
    }
    let rank = get_u32(r)?;
    if rank == 0 || rank > 8 {
        return Err(Error::WeightFormat(format!("implausible input rank {rank}")));
    }
    let input_shape = (0..rank).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
    let n_layers = get_u32(r)?;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        layers.push(match tag[0] {
            0 => Layer::Dense { inputs: get_u32(r)?, outputs: get_u32(r)? },
            1 => Layer::Conv2d {
                in_channels: get_u32(r)?,
                out_channels: get_u32(r)?,
                kernel_h: get_u32(r)?,
                kernel_w: get_u32(r)?,
                stride_h: get_u32(r)?,
                stride_w: get_u32(r)?,
            },
            2 => Layer::Relu,
            t => return Err(Error::WeightFormat(format!("unknown layer tag {t}"))),
        });
    }
    let skeleton = Network::zeros(&input_shape, layers.clone())?;
    let count = get_u32(r)?;
    if count != skeleton.param_count() {
        return Err(Error::WeightFormat(format!(
            "header declares {count} parameters, layers need {}",
            skeleton.param_count()
        )));
    }
    let mut params = Vec::with_capacity(skeleton.params().len());
    for p in skeleton.params() {
        let mut data = Vec::with_capacity(p.len());
        let mut b = [0u8; 4];
        for _ in 0..p.len() {
            r.read_exact(&mut b)?;
            data.push(f32::from_le_bytes(b) as f64);
        }
        params.push(Tensor::new(p.shape().to_vec(), data)?);
    }
    Network::from_parts(&input_shape, layers, params)
}

pub fn save_weights(net: &Network, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<Network> {
    read_weights(&mut BufReader::new(File::open(path)?))
}
