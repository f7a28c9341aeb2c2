//! Versioned binary checkpoints.
//!
//! Layout: magic `CARVECK1`, format version, then tagged sections (tag byte
//! plus little-endian `u64` payload length). The grid section carries the
//! level count, each level's resolution/row-count/channel-count, and the raw
//! feature scalars as little-endian `f32`; MLP, embedding, and optimizer
//! sections follow the same shape-then-data pattern. The embedded config
//! (and its hash) make a checkpoint self-describing: resuming rebuilds the
//! model from it and training continues bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::config::{fnv1a, RunConfig};
use crate::error::{Error, Result};
use crate::field::{NeuralField, ParamBuf};
use crate::mlp::Linear;
use crate::scalar::Real;
use crate::training::optim::AdamState;

const MAGIC: &[u8; 8] = b"CARVECK1";
const FORMAT_VERSION: u32 = 1;

mod tag {
    pub const GRID: u8 = 1;
    pub const SDF_MLP: u8 = 2;
    pub const COLOR_MLP: u8 = 3;
    pub const EMBEDDINGS: u8 = 4;
    pub const VARIANCE: u8 = 5;
    pub const OPTIMIZER: u8 = 6;
    pub const STATE: u8 = 7;
    pub const CONFIG: u8 = 8;
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub iteration: u64,
    pub field: NeuralField<f32>,
    pub adam: AdamState<f32>,
}

struct SectionWriter {
    buf: Vec<u8>,
}

impl SectionWriter {
    fn new() -> Self {
        SectionWriter { buf: Vec::new() }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f32_slice<T: Real>(&mut self, values: &[T]) {
        self.u64(values.len() as u64);
        for &v in values {
            self.buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }

    fn linear<T: Real>(&mut self, layer: &Linear<T>) {
        self.u32(layer.in_dim as u32);
        self.u32(layer.out_dim as u32);
        self.f32_slice(&layer.w);
        self.f32_slice(&layer.b);
    }
}

struct SectionReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> SectionReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        SectionReader { buf, pos: 0 }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let slice = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Checkpoint("truncated section".into()))?;
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f32_into(&mut self, dst: &mut [f32]) -> Result<()> {
        let n = self.u64()? as usize;
        if n != dst.len() {
            return Err(Error::Checkpoint(format!(
                "parameter slice length {n} does not match model shape {}",
                dst.len()
            )));
        }
        for d in dst.iter_mut() {
            *d = f32::from_le_bytes(self.bytes(4)?.try_into().unwrap());
        }
        Ok(())
    }

    fn linear_into(&mut self, layer: &mut Linear<f32>) -> Result<()> {
        let (in_dim, out_dim) = (self.u32()? as usize, self.u32()? as usize);
        if in_dim != layer.in_dim || out_dim != layer.out_dim {
            return Err(Error::Checkpoint(format!(
                "layer shape {in_dim}x{out_dim} does not match model {}x{}",
                layer.in_dim, layer.out_dim
            )));
        }
        self.f32_into(&mut layer.w)?;
        self.f32_into(&mut layer.b)
    }
}

fn param_flat(buf: &ParamBuf<f32>) -> Vec<f32> {
    buf.slices().iter().flat_map(|s| s.iter().copied()).collect()
}

fn param_unflat(buf: &mut ParamBuf<f32>, flat: &[f32]) -> Result<()> {
    let mut offset = 0;
    for slice in buf.slices_mut() {
        let next = offset + slice.len();
        let src = flat
            .get(offset..next)
            .ok_or_else(|| Error::Checkpoint("optimizer state too short".into()))?;
        slice.copy_from_slice(src);
        offset = next;
    }
    if offset != flat.len() {
        return Err(Error::Checkpoint("optimizer state too long".into()));
    }
    Ok(())
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut sections: Vec<(u8, Vec<u8>)> = Vec::new();

    let mut grid = SectionWriter::new();
    let cfg = &ckpt.field.grid.config;
    grid.u32(cfg.levels as u32);
    for (level, table) in ckpt.field.grid.tables.iter().enumerate() {
        grid.u32(ckpt.field.grid.resolutions()[level]);
        grid.u32((table.len() / cfg.channels) as u32);
        grid.u32(cfg.channels as u32);
        grid.f32_slice(table);
    }
    sections.push((tag::GRID, grid.buf));

    let mut sdf = SectionWriter::new();
    sdf.linear(&ckpt.field.sdf.hidden);
    sdf.linear(&ckpt.field.sdf.out);
    sections.push((tag::SDF_MLP, sdf.buf));

    let mut color = SectionWriter::new();
    color.u32(ckpt.field.color.layers.len() as u32);
    for layer in &ckpt.field.color.layers {
        color.linear(layer);
    }
    sections.push((tag::COLOR_MLP, color.buf));

    let mut embed = SectionWriter::new();
    embed.u32(ckpt.field.embeddings.dim as u32);
    embed.f32_slice(&ckpt.field.embeddings.table);
    sections.push((tag::EMBEDDINGS, embed.buf));

    let mut variance = SectionWriter::new();
    variance.f32_slice(&[ckpt.field.variance.log_s]);
    sections.push((tag::VARIANCE, variance.buf));

    let mut optim = SectionWriter::new();
    optim.u64(ckpt.adam.step);
    optim.u64(ckpt.adam.consecutive_skips);
    optim.u64(ckpt.adam.total_skips);
    optim.f32_slice(&param_flat(&ckpt.adam.m));
    optim.f32_slice(&param_flat(&ckpt.adam.v));
    sections.push((tag::OPTIMIZER, optim.buf));

    let mut state = SectionWriter::new();
    state.u64(ckpt.iteration);
    sections.push((tag::STATE, state.buf));

    let mut config = SectionWriter::new();
    let toml = ckpt.config.to_toml();
    config.u64(ckpt.config.hash());
    config.u64(toml.len() as u64);
    config.buf.extend_from_slice(toml.as_bytes());
    sections.push((tag::CONFIG, config.buf));

    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (t, payload) in sections {
        out.push(t);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut sections: std::collections::HashMap<u8, &[u8]> = std::collections::HashMap::new();
    let mut pos = 12usize;
    while pos < bytes.len() {
        let t = bytes[pos];
        let len = u64::from_le_bytes(
            bytes
                .get(pos + 1..pos + 9)
                .ok_or_else(|| Error::Checkpoint("truncated section header".into()))?
                .try_into()
                .unwrap(),
        ) as usize;
        let payload = bytes
            .get(pos + 9..pos + 9 + len)
            .ok_or_else(|| Error::Checkpoint("truncated section payload".into()))?;
        sections.insert(t, payload);
        pos += 9 + len;
    }
    let section = |t: u8, name: &str| -> Result<&[u8]> {
        sections
            .get(&t)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("missing {name} section")))
    };

    // config first: it defines every shape
    let mut r = SectionReader::new(section(tag::CONFIG, "config")?);
    let stored_hash = r.u64()?;
    let toml_len = r.u64()? as usize;
    let toml_bytes = r.bytes(toml_len)?;
    let toml_text =
        std::str::from_utf8(toml_bytes).map_err(|_| Error::Checkpoint("non-utf8 config".into()))?;
    if fnv1a(toml_text.as_bytes()) != stored_hash {
        return Err(Error::Checkpoint("config hash mismatch".into()));
    }
    let config = RunConfig::from_toml(toml_text, &[])?;

    let mut r = SectionReader::new(section(tag::EMBEDDINGS, "embeddings")?);
    let embed_dim = r.u32()? as usize;
    let n_embed = r.u64()? as usize; // peek length to recover image count
    let n_images = if embed_dim == 0 { 0 } else { n_embed / embed_dim };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    use rand::SeedableRng;
    let mut field = NeuralField::<f32>::init(
        config.encoding,
        config.field_config(n_images),
        config.network.sphere_radius as f32,
        &mut rng,
    )?;

    let mut r = SectionReader::new(section(tag::GRID, "grid")?);
    let levels = r.u32()? as usize;
    if levels != field.grid.config.levels {
        return Err(Error::Checkpoint("level count mismatch".into()));
    }
    for level in 0..levels {
        let resolution = r.u32()?;
        let rows = r.u32()? as usize;
        let channels = r.u32()? as usize;
        if resolution != field.grid.resolutions()[level]
            || channels != field.grid.config.channels
            || rows * channels != field.grid.tables[level].len()
        {
            return Err(Error::Checkpoint(format!(
                "grid level {level} shape mismatch"
            )));
        }
        r.f32_into(&mut field.grid.tables[level])?;
    }

    let mut r = SectionReader::new(section(tag::SDF_MLP, "sdf mlp")?);
    r.linear_into(&mut field.sdf.hidden)?;
    r.linear_into(&mut field.sdf.out)?;

    let mut r = SectionReader::new(section(tag::COLOR_MLP, "color mlp")?);
    let n_layers = r.u32()? as usize;
    if n_layers != field.color.layers.len() {
        return Err(Error::Checkpoint("color layer count mismatch".into()));
    }
    for layer in &mut field.color.layers {
        r.linear_into(layer)?;
    }

    let mut r = SectionReader::new(section(tag::EMBEDDINGS, "embeddings")?);
    let _ = r.u32()?;
    r.f32_into(&mut field.embeddings.table)?;

    let mut r = SectionReader::new(section(tag::VARIANCE, "variance")?);
    let mut log_s = [0.0f32];
    r.f32_into(&mut log_s)?;
    field.variance.log_s = log_s[0];

    let mut adam = AdamState::new(&field);
    let mut r = SectionReader::new(section(tag::OPTIMIZER, "optimizer")?);
    adam.step = r.u64()?;
    adam.consecutive_skips = r.u64()?;
    adam.total_skips = r.u64()?;
    let read_flat = |r: &mut SectionReader| -> Result<Vec<f32>> {
        let n = r.u64()? as usize;
        let mut out = vec![0.0f32; n];
        for v in out.iter_mut() {
            *v = f32::from_le_bytes(r.bytes(4)?.try_into().unwrap());
        }
        Ok(out)
    };
    let m_flat = read_flat(&mut r)?;
    let v_flat = read_flat(&mut r)?;
    param_unflat(&mut adam.m, &m_flat)?;
    param_unflat(&mut adam.v, &v_flat)?;

    let mut r = SectionReader::new(section(tag::STATE, "state")?);
    let iteration = r.u64()?;

    Ok(Checkpoint {
        config,
        iteration,
        field,
        adam,
    })
}
