//! Instance container and solver trace files.
//!
//! Instance layout (all integers and floats little-endian):
//!
//! | bytes            | content                                        |
//! |------------------|------------------------------------------------|
//! | 4                | magic `QMRI`                                   |
//! | 4                | format version (`u32`, currently 1)            |
//! | 4                | header length `h` (`u32`)                      |
//! | h                | UTF-8 JSON header: `{"spec": …, "dim": d}`     |
//! | 8·d              | ground truth in working coordinates (`f64`)    |
//! | 8·n              | observations `b`                               |
//! | 8·n·d²           | matrices, row-major, one after another         |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array3};
use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleSpec, MeasurementSet, Signal};
use crate::error::{QmrError, Result};
use crate::grnm::IterateRecord;

pub const INSTANCE_MAGIC: &[u8; 4] = b"QMRI";
pub const INSTANCE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct InstanceHeader {
    spec: EnsembleSpec,
    dim: usize,
}

pub fn write_instance(set: &MeasurementSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| QmrError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_instance_to(set, &mut w).map_err(|e| QmrError::io(path, e))?;
    w.flush().map_err(|e| QmrError::io(path, e))
}

fn write_instance_to<W: Write>(set: &MeasurementSet, w: &mut W) -> std::io::Result<()> {
    let header = serde_json::to_vec(&InstanceHeader {
        spec: *set.spec(),
        dim: set.dim(),
    })
    .expect("header serializes");
    w.write_all(INSTANCE_MAGIC)?;
    w.write_all(&INSTANCE_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    let floats = set
        .truth()
        .values()
        .iter()
        .chain(set.b().iter())
        .chain(set.matrices().iter());
    for v in floats {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<MeasurementSet> {
    let file = File::open(path).map_err(|e| QmrError::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |reason: String| QmrError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let io = |e: std::io::Error| QmrError::io(path, e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != INSTANCE_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = read_u32(&mut r).map_err(io)?;
    if version != INSTANCE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let header_len = read_u32(&mut r).map_err(io)? as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header).map_err(io)?;
    let header: InstanceHeader =
        serde_json::from_slice(&header).map_err(|e| bad(format!("header: {e}")))?;
    let spec = header.spec;
    spec.validate()?;
    let d = header.dim;
    if d != spec.working_dim() {
        return Err(bad(format!(
            "header dimension {d} does not match the ensemble ({})",
            spec.working_dim()
        )));
    }
    let truth = read_f64s(&mut r, d).map_err(io)?;
    let b = read_f64s(&mut r, spec.n).map_err(io)?;
    let mats = read_f64s(&mut r, spec.n * d * d).map_err(io)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io)? != 0 {
        return Err(bad("trailing bytes".into()));
    }
    let truth = Signal::new(Array1::from(truth), spec.kind.domain())?;
    let mats = Array3::from_shape_vec((spec.n, d, d), mats).expect("length checked");
    MeasurementSet::from_parts(spec, truth, mats, Array1::from(b))
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> std::io::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

/// Trace CSV with columns `k, phase, f, grad_norm, j_k, tau, dir_norm`.
pub fn write_trace_csv(trace: &[IterateRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| QmrError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["k", "phase", "f", "grad_norm", "j_k", "tau", "dir_norm"])?;
    for r in trace {
        w.write_record([
            r.k.to_string(),
            r.phase.number().to_string(),
            r.f.to_string(),
            r.grad_norm.to_string(),
            r.j_k.to_string(),
            r.tau.to_string(),
            r.dir_norm.to_string(),
        ])?;
    }
    w.flush().map_err(|e| QmrError::io(path, e))
}
