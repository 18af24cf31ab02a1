//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "THAT"  u32 version
//! u32 bands, channels, blocks, heads, window, scale, gamma, kmeans_max_iters
//! u8 flags (bit 0 use_pci, 1 use_ptsa, 2 use_mvfn, 3 output-stage upsampling)
//! u8 token axis (0 channel, 1 spatial_window)
//! f64 tau_init
//! u32 record count, then per record:
//!   u32 name length, name bytes (UTF-8), u32 rank, rank × u32 extents,
//!   f32 values
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{ModelConfig, That, UpsampleStage};
use crate::attention::TokenAxis;
use crate::error::{Error, Result};
use crate::nn::{assign_parameters, named_parameters};
use crate::tensor::{Real, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"THAT";

pub fn write_checkpoint<T: Real, W: Write>(model: &That<T>, out: &mut W) -> std::io::Result<()> {
    let cfg = &model.cfg;
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for v in [
        cfg.bands,
        cfg.channels,
        cfg.blocks,
        cfg.heads,
        cfg.window,
        cfg.scale,
        cfg.gamma,
        cfg.kmeans_max_iters,
    ] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    let flags = cfg.use_pci as u8
        | (cfg.use_ptsa as u8) << 1
        | (cfg.use_mvfn as u8) << 2
        | ((cfg.upsample_stage == UpsampleStage::Output) as u8) << 3;
    out.write_all(&[flags, (cfg.token_axis == TokenAxis::SpatialWindow) as u8])?;
    out.write_all(&cfg.tau_init.to_le_bytes())?;
    let params = named_parameters(model);
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            out.write_all(&(v.f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated: {what} needs {n} bytes, {} left", self.buf.len() - self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<That<f32>> {
    let mut buf = Vec::new();
    input
        .read_to_end(&mut buf)
        .map_err(|e| Error::format(0, format!("read failed: {e}")))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"THAT\""));
    }
    let at = c.pos as u64;
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(at, format!("unsupported version {version}")));
    }
    let mut ints = [0usize; 8];
    for v in &mut ints {
        *v = c.u32("config")? as usize;
    }
    let flag_at = c.pos as u64;
    let flags = c.u8("flags")?;
    if flags >> 4 != 0 {
        return Err(Error::format(flag_at, format!("unknown flag bits {flags:#04x}")));
    }
    let token_axis = match c.u8("token axis")? {
        0 => TokenAxis::Channel,
        1 => TokenAxis::SpatialWindow,
        v => return Err(Error::format(flag_at + 1, format!("unknown token axis {v}"))),
    };
    let tau_init = f64::from_le_bytes(c.take(8, "tau_init")?.try_into().expect("8 bytes"));
    let cfg = ModelConfig {
        bands: ints[0],
        channels: ints[1],
        blocks: ints[2],
        heads: ints[3],
        window: ints[4],
        scale: ints[5],
        gamma: ints[6],
        kmeans_max_iters: ints[7],
        use_pci: flags & 1 != 0,
        use_ptsa: flags & 2 != 0,
        use_mvfn: flags & 4 != 0,
        upsample_stage: if flags & 8 != 0 {
            UpsampleStage::Output
        } else {
            UpsampleStage::Input
        },
        token_axis,
        tau_init,
    };
    let mut model = That::<f32>::new(cfg, 0)?;
    let count = c.u32("record count")?;
    let mut records = Vec::new();
    for _ in 0..count {
        let name_at = c.pos as u64;
        let len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::format(name_at + 4, "parameter name is not UTF-8"))?
            .to_string();
        let rank = c.u32("rank")? as usize;
        if rank > 8 {
            return Err(Error::format(c.pos as u64 - 4, format!("rank {rank} too large")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("extent")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(c.pos as u64, format!("{name}: shape {shape:?} overflows")))?;
        let raw = c.take(n, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        records.push((name, Tensor::new(&shape, data)?));
    }
    if c.pos != buf.len() {
        return Err(Error::format(c.pos as u64, "trailing bytes after last record"));
    }
    assign_parameters(&mut model, records)?;
    Ok(model)
}

pub fn save_checkpoint<T: Real>(model: &That<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<That<f32>> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut f).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}
