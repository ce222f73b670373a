//! Checkpoint file format.
//!
//! Layout (little-endian):
//! - magic `V2VC`
//! - u32 format version
//! - u32 header length, then that many bytes of JSON-encoded [`NetConfig`]
//! - u32 block count, then per parameter:
//!   u32 name length, name bytes, u32 rows, u32 cols, rows·cols f32 values
//!   in row-major order.
//!
//! Round-trips preserve parameter values at 32-bit precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NetConfig, TranslatorNet};
use crate::error::{Error, Result};
use crate::numerics::ParamModel;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"V2VC";
const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(net: &TranslatorNet, path: &Path) -> Result<()> {
    let tmp = path.with_extension("v2vc.tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<()> {
            w.write_all(bytes).map_err(|e| Error::io(path, e))
        };
        write(&mut w, CHECKPOINT_MAGIC)?;
        write(&mut w, &CHECKPOINT_VERSION.to_le_bytes())?;
        let header = serde_json::to_vec(&net.config)?;
        write(&mut w, &(header.len() as u32).to_le_bytes())?;
        write(&mut w, &header)?;
        let params = net.params();
        write(&mut w, &(params.len() as u32).to_le_bytes())?;
        for p in params {
            let name = p.name.as_bytes();
            write(&mut w, &(name.len() as u32).to_le_bytes())?;
            write(&mut w, name)?;
            write(&mut w, &(p.value.rows() as u32).to_le_bytes())?;
            write(&mut w, &(p.value.cols() as u32).to_le_bytes())?;
            for v in p.value.to_f32() {
                write(&mut w, &v.to_le_bytes())?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn read_exact(&mut self, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) => Err(Error::Parse {
                path: path.to_path_buf(),
                offset: self.offset,
                message: format!("truncated while reading {what}: {e}"),
            }),
        }
    }

    fn read_u32(&mut self, path: &Path, what: &str) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf, path, what)?;
        Ok(u32::from_le_bytes(buf))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<TranslatorNet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Cursor {
        inner: BufReader::new(file),
        offset: 0,
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, path, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("bad magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"),
        });
    }
    let version = r.read_u32(path, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let header_len = r.read_u32(path, "header length")? as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header, path, "config header")?;
    let config: NetConfig = serde_json::from_slice(&header)?;

    let mut net = TranslatorNet::zeroed(&config)?;
    let block_count = r.read_u32(path, "block count")? as usize;
    let expected = net.params().len();
    if block_count != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: r.offset,
            message: format!("expected {expected} parameter blocks, file has {block_count}"),
        });
    }

    for _ in 0..block_count {
        let name_len = r.read_u32(path, "name length")? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes, path, "parameter name")?;
        let name = String::from_utf8(name_bytes).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            offset: r.offset,
            message: format!("parameter name not utf-8: {e}"),
        })?;
        let rows = r.read_u32(path, "rows")? as usize;
        let cols = r.read_u32(path, "cols")? as usize;
        let mut raw = vec![0u8; rows * cols * 4];
        r.read_exact(&mut raw, path, &format!("values of {name}"))?;

        let param = net
            .params_mut()
            .into_iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                offset: r.offset,
                message: format!("unknown parameter `{name}` for this config"),
            })?;
        if param.value.shape() != (rows, cols) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                offset: r.offset,
                message: format!(
                    "parameter `{name}` has shape {rows}x{cols}, expected {:?}",
                    param.value.shape()
                ),
            });
        }
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            param.value.data_mut()[i] = f64::from(v);
        }
    }
    Ok(net)
}
