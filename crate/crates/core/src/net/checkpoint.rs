//! Binary checkpoints: magic, format version, shape header, tensor table,
//! then raw little-endian `f64` data. Optimizer moments are optional.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::optim::{MomentState, NadamConfig, OptimizerState};
use super::{Layer, NetShape, NetworkParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"OFFTLNN\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub state: Option<OptimizerState>,
}

fn ck(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("truncated or unreadable: {e}"))
}

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn u8(&mut self, v: u8) -> Result<()> {
        self.0.write_all(&[v]).map_err(ck)
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Checkpoint("value exceeds u32".into()))?;
        self.0.write_all(&v.to_le_bytes()).map_err(ck)
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.0.write_all(&v.to_le_bytes()).map_err(ck)
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.0.write_all(&v.to_le_bytes()).map_err(ck)
    }
    fn f64s(&mut self, vs: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(vs.len() * 8);
        for v in vs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.0.write_all(&buf).map_err(ck)
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(ck)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64s_into(&mut self, out: &mut [f64]) -> Result<()> {
        let mut buf = vec![0u8; out.len() * 8];
        self.0.read_exact(&mut buf).map_err(ck)?;
        for (o, chunk) in out.iter_mut().zip(buf.chunks_exact(8)) {
            *o = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        Ok(())
    }
}

pub fn write_checkpoint<W: Write>(
    w: W,
    params: &NetworkParams,
    state: Option<&OptimizerState>,
) -> Result<()> {
    let mut out = Out(w);
    out.0.write_all(MAGIC).map_err(ck)?;
    out.u32(VERSION as usize)?;
    let s = &params.shape;
    for v in [
        s.emb_dim,
        s.lstm_units,
        s.filters,
        s.dense_units,
        s.cluster_width,
        s.n_classes,
    ] {
        out.u32(v)?;
    }
    out.u32(s.kernel_sizes.len())?;
    for &k in &s.kernel_sizes {
        out.u32(k)?;
    }
    out.f64(s.leaky_slope)?;

    let tensors = params.tensors();
    out.u32(tensors.len())?;
    for t in &tensors {
        out.u32(t.name.len())?;
        out.0.write_all(t.name.as_bytes()).map_err(ck)?;
        out.u8(t.layer.id())?;
        out.u32(t.shape.len())?;
        for &d in &t.shape {
            out.u32(d)?;
        }
    }
    for t in &tensors {
        out.f64s(t.data)?;
    }
    match state {
        None => out.u8(0)?,
        Some(st) => {
            out.u8(1)?;
            let c = st.config;
            for v in [c.lr, c.beta1, c.beta2, c.eps, c.schedule_decay] {
                out.f64(v)?;
            }
            for g in &st.groups {
                out.u64(g.step)?;
                out.f64(g.m_schedule)?;
                for (m, v) in g.m.iter().zip(&g.v) {
                    out.f64s(m)?;
                    out.f64s(v)?;
                }
            }
        }
    }
    out.0.flush().map_err(ck)
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let mut inp = In(r);
    let magic: [u8; 8] = inp.bytes()?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a network checkpoint".into()));
    }
    let version = inp.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {VERSION})"
        )));
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = inp.u32()?;
    }
    let n_kernels = inp.u32()?;
    if n_kernels > 64 {
        return Err(Error::Checkpoint("implausible kernel count".into()));
    }
    let kernel_sizes = (0..n_kernels)
        .map(|_| inp.u32())
        .collect::<Result<Vec<_>>>()?;
    let shape = NetShape {
        emb_dim: dims[0],
        lstm_units: dims[1],
        filters: dims[2],
        dense_units: dims[3],
        cluster_width: dims[4],
        n_classes: dims[5],
        kernel_sizes,
        leaky_slope: inp.f64()?,
    };
    shape
        .validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut params = NetworkParams::init(shape, 0)?;

    let count = inp.u32()?;
    let expected = params.tensors();
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors stored, shape implies {}",
            expected.len()
        )));
    }
    for t in &expected {
        let len = inp.u32()?;
        if len > 256 {
            return Err(Error::Checkpoint("implausible tensor name".into()));
        }
        let mut name = vec![0u8; len];
        inp.0.read_exact(&mut name).map_err(ck)?;
        let layer = Layer::from_id(inp.u8()?);
        let ndim = inp.u32()?;
        if ndim > 4 {
            return Err(Error::Checkpoint("implausible tensor rank".into()));
        }
        let stored = (0..ndim).map(|_| inp.u32()).collect::<Result<Vec<_>>>()?;
        if name != t.name.as_bytes() || layer != Some(t.layer) || stored != t.shape {
            return Err(Error::Checkpoint(format!(
                "tensor table mismatch at {}",
                t.name
            )));
        }
    }
    drop(expected);
    for t in params.tensors_mut() {
        inp.f64s_into(t.data)?;
    }
    let state = match inp.u8()? {
        0 => None,
        1 => {
            let mut c = [0.0; 5];
            for v in &mut c {
                *v = inp.f64()?;
            }
            let config = NadamConfig {
                lr: c[0],
                beta1: c[1],
                beta2: c[2],
                eps: c[3],
                schedule_decay: c[4],
            };
            let mut st = OptimizerState::new(&params, config);
            for g in st.groups.iter_mut() {
                g.step = inp.u64()?;
                g.m_schedule = inp.f64()?;
                let MomentState { m, v, .. } = g;
                for (m, v) in m.iter_mut().zip(v.iter_mut()) {
                    inp.f64s_into(m)?;
                    inp.f64s_into(v)?;
                }
            }
            Some(st)
        }
        other => return Err(Error::Checkpoint(format!("bad optimizer flag {other}"))),
    };
    let mut rest = [0u8; 1];
    if inp.0.read(&mut rest).map_err(ck)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { params, state })
}

pub fn save_checkpoint(
    path: &Path,
    params: &NetworkParams,
    state: Option<&OptimizerState>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(BufWriter::new(file), params, state)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
