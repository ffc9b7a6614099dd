//! Dataset file formats and checkpoints.
//!
//! Two dataset formats: JSON-lines (one `{"label": n, "joints": T×V×3}`
//! object per line, debuggable) and a binary container (fast): the magic
//! `SGN1` followed by per-sample records of little-endian `u32 T, V, C,
//! label` and `T·C·V` 32-bit floats in `(t, c, v)` order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sgn_core::data::{Dataset, Sample};
use sgn_core::tensor::DenseTensor;

use crate::config::RunConfig;
use crate::CliError;

const DATA_MAGIC: &[u8; 4] = b"SGN1";
const CKPT_MAGIC: &[u8; 8] = b"SGNCKPT1";

#[derive(Serialize, Deserialize)]
struct JsonSample {
    label: usize,
    /// T×V×3 nested coordinate arrays.
    joints: Vec<Vec<[f32; 3]>>,
}

fn io_err(path: &Path, err: impl std::fmt::Display) -> CliError {
    CliError::data(format!("{}: {err}", path.display()))
}

pub fn write_jsonl(path: &Path, ds: &Dataset) -> Result<(), CliError> {
    let mut out = String::new();
    for s in &ds.samples {
        let (t_dim, _, v_dim) = s.joints.shape();
        let joints: Vec<Vec<[f32; 3]>> = (0..t_dim)
            .map(|t| {
                (0..v_dim)
                    .map(|v| {
                        [
                            s.joints.get(t, 0, v) as f32,
                            s.joints.get(t, 1, v) as f32,
                            s.joints.get(t, 2, v) as f32,
                        ]
                    })
                    .collect()
            })
            .collect();
        let row = JsonSample { label: s.label, joints };
        out.push_str(&serde_json::to_string(&row).expect("json serialization"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Dataset, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut samples = Vec::new();
    let mut num_classes = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonSample = serde_json::from_str(line)
            .map_err(|e| io_err(path, format!("line {}: {e}", lineno + 1)))?;
        let t_dim = row.joints.len();
        if t_dim == 0 {
            return Err(io_err(path, format!("line {}: empty sequence", lineno + 1)));
        }
        let v_dim = row.joints[0].len();
        let mut tensor = DenseTensor::zeros(t_dim, 3, v_dim);
        for (t, frame) in row.joints.iter().enumerate() {
            if frame.len() != v_dim {
                return Err(io_err(path, format!("line {}: ragged joints", lineno + 1)));
            }
            for (v, coord) in frame.iter().enumerate() {
                for c in 0..3 {
                    tensor.set(t, c, v, coord[c] as f64);
                }
            }
        }
        num_classes = num_classes.max(row.label + 1);
        samples.push(Sample { label: row.label, joints: tensor });
    }
    if samples.is_empty() {
        return Err(io_err(path, "no samples"));
    }
    Ok(Dataset { samples, num_classes })
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn take_u32(buf: &[u8], pos: &mut usize, path: &Path) -> Result<u32, CliError> {
    let end = *pos + 4;
    if end > buf.len() {
        return Err(io_err(path, format!("truncated at offset {pos}")));
    }
    let v = u32::from_le_bytes(buf[*pos..end].try_into().unwrap());
    *pos = end;
    Ok(v)
}

pub fn write_bin(path: &Path, ds: &Dataset) -> Result<(), CliError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DATA_MAGIC);
    for s in &ds.samples {
        let (t_dim, c_dim, v_dim) = s.joints.shape();
        push_u32(&mut buf, t_dim as u32);
        push_u32(&mut buf, v_dim as u32);
        push_u32(&mut buf, c_dim as u32);
        push_u32(&mut buf, s.label as u32);
        for &x in s.joints.data() {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| io_err(path, e))
}

pub fn read_bin(path: &Path) -> Result<Dataset, CliError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| io_err(path, e))?;
    if buf.len() < 4 || &buf[..4] != DATA_MAGIC {
        return Err(io_err(path, "missing SGN1 magic"));
    }
    let mut pos = 4usize;
    let mut samples = Vec::new();
    let mut num_classes = 0usize;
    while pos < buf.len() {
        let t_dim = take_u32(&buf, &mut pos, path)? as usize;
        let v_dim = take_u32(&buf, &mut pos, path)? as usize;
        let c_dim = take_u32(&buf, &mut pos, path)? as usize;
        let label = take_u32(&buf, &mut pos, path)? as usize;
        let n = t_dim * c_dim * v_dim;
        let end = pos + 4 * n;
        if end > buf.len() {
            return Err(io_err(path, format!("truncated sample at offset {pos}")));
        }
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let off = pos + 4 * i;
            data.push(f32::from_le_bytes(buf[off..off + 4].try_into().unwrap()) as f64);
        }
        pos = end;
        let tensor = DenseTensor::from_vec(t_dim, c_dim, v_dim, data)
            .map_err(|e| io_err(path, e))?;
        num_classes = num_classes.max(label + 1);
        samples.push(Sample { label, joints: tensor });
    }
    if samples.is_empty() {
        return Err(io_err(path, "no samples"));
    }
    Ok(Dataset { samples, num_classes })
}

/// Load either format, picked by extension.
pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => read_jsonl(path),
        Some("bin") => read_bin(path),
        other => Err(CliError::data(format!(
            "{}: unsupported dataset extension {other:?} (expected .jsonl or .bin)",
            path.display()
        ))),
    }
}

/// Self-contained checkpoint: embedded run configuration, graph text, and all
/// named parameters as f64 little-endian blobs.
pub fn write_checkpoint(
    path: &Path,
    cfg: &RunConfig,
    graph_text: &str,
    model: &mut sgn_core::model::Model,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    let cfg_text = cfg.to_text();
    push_u32(&mut buf, cfg_text.len() as u32);
    buf.extend_from_slice(cfg_text.as_bytes());
    push_u32(&mut buf, graph_text.len() as u32);
    buf.extend_from_slice(graph_text.as_bytes());
    let mut params: Vec<(String, Vec<f64>)> = Vec::new();
    model.visit_params(&mut |p| params.push((p.name.clone(), p.value.clone())));
    push_u32(&mut buf, params.len() as u32);
    for (name, values) in params {
        push_u32(&mut buf, name.len() as u32);
        buf.extend_from_slice(name.as_bytes());
        push_u32(&mut buf, values.len() as u32);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| io_err(path, e))
}

pub struct Checkpoint {
    pub config: RunConfig,
    pub graph_text: String,
    pub params: Vec<(String, Vec<f64>)>,
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| io_err(path, e))?;
    if buf.len() < 8 || &buf[..8] != CKPT_MAGIC {
        return Err(io_err(path, "missing checkpoint magic"));
    }
    let mut pos = 8usize;
    let take_str = |buf: &[u8], pos: &mut usize| -> Result<String, CliError> {
        let len = take_u32(buf, pos, path)? as usize;
        let end = *pos + len;
        if end > buf.len() {
            return Err(io_err(path, "truncated string"));
        }
        let s = String::from_utf8(buf[*pos..end].to_vec())
            .map_err(|_| io_err(path, "non-utf8 string"))?;
        *pos = end;
        Ok(s)
    };
    let cfg_text = take_str(&buf, &mut pos)?;
    let graph_text = take_str(&buf, &mut pos)?;
    let n_params = take_u32(&buf, &mut pos, path)? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name = take_str(&buf, &mut pos)?;
        let len = take_u32(&buf, &mut pos, path)? as usize;
        let end = pos + 8 * len;
        if end > buf.len() {
            return Err(io_err(path, "truncated parameter"));
        }
        let mut values = Vec::with_capacity(len);
        for i in 0..len {
            let off = pos + 8 * i;
            values.push(f64::from_le_bytes(buf[off..off + 8].try_into().unwrap()));
        }
        pos = end;
        params.push((name, values));
    }
    Ok(Checkpoint { config: RunConfig::from_text(&cfg_text)?, graph_text, params })
}

/// Restore parameters into a freshly built model, by name.
pub fn load_params(model: &mut sgn_core::model::Model, params: &[(String, Vec<f64>)]) -> Result<(), CliError> {
    let mut loaded = 0usize;
    let mut missing = Vec::new();
    model.visit_params(&mut |p| {
        match params.iter().find(|(n, _)| n == &p.name) {
            Some((_, values)) if values.len() == p.value.len() => {
                p.value.copy_from_slice(values);
                loaded += 1;
            }
            _ => missing.push(p.name.clone()),
        }
    });
    if !missing.is_empty() {
        return Err(CliError::data(format!(
            "checkpoint is missing parameters: {missing:?}"
        )));
    }
    if loaded != params.len() {
        return Err(CliError::data(format!(
            "checkpoint carries {} parameters, model consumed {loaded}",
            params.len()
        )));
    }
    Ok(())
}

/// Append a CSV file with a timestamped comment header.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&format!("# generated {}\n", chrono::Utc::now().to_rfc3339()));
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}
