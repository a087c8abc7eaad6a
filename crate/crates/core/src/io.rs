//! Binary dataset and checkpoint files, JSON ground truth.
//!
//! Both binary formats share one layout:
//!
//! ```text
//! magic      8 bytes   "TBRDATA1" or "TBRCKPT1"
//! header_len u64 LE
//! header     header_len bytes of UTF-8 JSON
//! payload    arrays in the order listed by the header
//! ```
//!
//! Dataset payload: `X` (n × d_x), `Z` (n × k), `Y` (n) as f64 LE in row-major
//! order, then `env` (n) and `split` (n) as u32 LE. Split codes are
//! train 0, val 1, test 2.
//!
//! Checkpoint payload: one f64 LE array per tensor in `header.tensors` order:
//! for each of the three encoder layers its weight (fan_in × fan_out,
//! row-major) then bias, followed by `w0` and `delta` (|A| × k̂) for TBR or
//! `w` for the baseline.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{MultiEnvDataset, Split};
use crate::env_tree::{EnvId, EnvTree};
use crate::error::{Result, TbrError};
use crate::model::{BaselineParams, ModelKind, ModelParams, TbrParams};
use crate::numerics::{Architecture, EncoderParams, Matrix, ParamSet};
use crate::simulator::{GroundTruth, SimConfig};

pub const DATASET_MAGIC: &[u8; 8] = b"TBRDATA1";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TBRCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub config: SimConfig,
    /// `parent<TAB>child` lines.
    pub tree: String,
    pub observed: Vec<usize>,
    pub n: usize,
    pub d_x: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub architecture: Architecture,
    pub k_hat: usize,
    pub tree_fingerprint: String,
    pub lambda: f64,
    pub seed: u64,
    pub run_id: String,
    pub tensors: Vec<TensorSpec>,
}

fn write_framed<W: Write>(out: &mut W, magic: &[u8; 8], header: &impl Serialize) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    out.write_all(magic)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    Ok(())
}

fn read_framed<R: Read, H: for<'de> Deserialize<'de>>(input: &mut R, magic: &[u8; 8]) -> Result<H> {
    let mut m = [0u8; 8];
    input.read_exact(&mut m)?;
    if &m != magic {
        return Err(TbrError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    Ok(serde_json::from_slice(&json)?)
}

fn write_f64s<W: Write>(out: &mut W, v: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 8);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    input.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_u32s<W: Write>(out: &mut W, v: impl Iterator<Item = u32>) -> Result<()> {
    let buf: Vec<u8> = v.flat_map(u32::to_le_bytes).collect();
    out.write_all(&buf)?;
    Ok(())
}

fn read_u32s<R: Read>(input: &mut R, n: usize) -> Result<Vec<u32>> {
    let mut buf = vec![0u8; n * 4];
    input.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
}

fn expect_eof<R: Read>(input: &mut R) -> Result<()> {
    let mut extra = [0u8; 1];
    match input.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(TbrError::Format("trailing bytes after payload".into())),
    }
}

pub fn write_dataset<W: Write>(mut out: W, tree: &EnvTree, data: &MultiEnvDataset) -> Result<()> {
    let header = DatasetHeader {
        config: data.config.clone(),
        tree: tree.to_edge_list_string(),
        observed: data.observed.iter().map(|e| e.0).collect(),
        n: data.len(),
        d_x: data.d_x(),
        k: data.k(),
    };
    write_framed(&mut out, DATASET_MAGIC, &header)?;
    write_f64s(&mut out, data.x.as_slice())?;
    write_f64s(&mut out, data.z.as_slice())?;
    write_f64s(&mut out, &data.y)?;
    write_u32s(&mut out, data.env.iter().map(|e| e.0 as u32))?;
    write_u32s(&mut out, data.split.iter().map(|&s| s as u32))?;
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut input: R) -> Result<(EnvTree, MultiEnvDataset)> {
    let h: DatasetHeader = read_framed(&mut input, DATASET_MAGIC)?;
    let tree = EnvTree::parse_edge_list(&h.tree)?;
    let x = Matrix::from_vec(h.n, h.d_x, read_f64s(&mut input, h.n * h.d_x)?)?;
    let z = Matrix::from_vec(h.n, h.k, read_f64s(&mut input, h.n * h.k)?)?;
    let y = read_f64s(&mut input, h.n)?;
    let env: Vec<EnvId> = read_u32s(&mut input, h.n)?.into_iter().map(|e| EnvId(e as usize)).collect();
    let split = read_u32s(&mut input, h.n)?
        .into_iter()
        .map(Split::from_code)
        .collect::<Result<Vec<_>>>()?;
    expect_eof(&mut input)?;
    if let Some(&e) = h.observed.iter().find(|&&e| e >= tree.num_nodes()) {
        return Err(TbrError::UnknownEnv(e));
    }
    let observed = h.observed.into_iter().map(EnvId).collect();
    let data = MultiEnvDataset::new(h.config, x, z, y, env, split, observed)?;
    Ok((tree, data))
}

pub fn save_dataset(path: &Path, tree: &EnvTree, data: &MultiEnvDataset) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset(f, tree, data)
}

pub fn load_dataset(path: &Path) -> Result<(EnvTree, MultiEnvDataset)> {
    read_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(truth)?)?;
    Ok(())
}

pub fn load_truth(path: &Path) -> Result<GroundTruth> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn tensor_specs(kind: ModelKind, arch: &Architecture, num_arcs: usize) -> Vec<TensorSpec> {
    let w = arch.widths();
    let mut specs = Vec::new();
    for l in 0..3 {
        specs.push(TensorSpec {
            name: format!("encoder.{l}.weight"),
            shape: vec![w[l], w[l + 1]],
        });
        specs.push(TensorSpec {
            name: format!("encoder.{l}.bias"),
            shape: vec![w[l + 1]],
        });
    }
    let k = arch.output_dim;
    match kind {
        ModelKind::Tbr => {
            specs.push(TensorSpec {
                name: "w0".into(),
                shape: vec![k],
            });
            specs.push(TensorSpec {
                name: "delta".into(),
                shape: vec![num_arcs, k],
            });
        }
        ModelKind::Baseline => specs.push(TensorSpec {
            name: "w".into(),
            shape: vec![k],
        }),
    }
    specs
}

fn groups_of(params: &ModelParams) -> Vec<&[f64]> {
    match params {
        ModelParams::Tbr(p) => p.groups(),
        ModelParams::Baseline(p) => p.groups(),
    }
}

/// Run metadata stored alongside the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub lambda: f64,
    pub seed: u64,
    pub run_id: String,
}

pub fn write_checkpoint<W: Write>(mut out: W, params: &ModelParams, tree: &EnvTree, meta: &CheckpointMeta) -> Result<()> {
    let arch = *params.encoder().arch();
    let header = CheckpointHeader {
        kind: params.kind(),
        architecture: arch,
        k_hat: params.k_hat(),
        tree_fingerprint: tree.fingerprint(),
        lambda: meta.lambda,
        seed: meta.seed,
        run_id: meta.run_id.clone(),
        tensors: tensor_specs(params.kind(), &arch, tree.num_arcs()),
    };
    let groups = groups_of(params);
    for (g, t) in groups.iter().zip(&header.tensors) {
        if g.len() != t.shape.iter().product::<usize>() {
            return Err(TbrError::Format(format!("tensor {} does not match the tree", t.name)));
        }
    }
    write_framed(&mut out, CHECKPOINT_MAGIC, &header)?;
    for g in groups {
        write_f64s(&mut out, g)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a checkpoint and checks it against `tree` by fingerprint.
pub fn read_checkpoint<R: Read>(mut input: R, tree: &EnvTree) -> Result<(ModelParams, CheckpointHeader)> {
    let h: CheckpointHeader = read_framed(&mut input, CHECKPOINT_MAGIC)?;
    if h.tree_fingerprint != tree.fingerprint() {
        return Err(TbrError::Format("checkpoint was trained on a different tree".into()));
    }
    let arch = h.architecture;
    if arch.output_dim != h.k_hat {
        return Err(TbrError::Format("architecture output width differs from k_hat".into()));
    }
    let expected = tensor_specs(h.kind, &arch, tree.num_arcs());
    if expected != h.tensors {
        return Err(TbrError::Format("unexpected tensor layout".into()));
    }
    let k = h.k_hat;
    let mut params = match h.kind {
        ModelKind::Tbr => ModelParams::Tbr(TbrParams {
            encoder: EncoderParams::zeros(arch),
            w0: vec![0.0; k],
            delta: Matrix::zeros(tree.num_arcs(), k),
        }),
        ModelKind::Baseline => ModelParams::Baseline(BaselineParams {
            encoder: EncoderParams::zeros(arch),
            w: vec![0.0; k],
        }),
    };
    let groups = match &mut params {
        ModelParams::Tbr(p) => p.groups_mut(),
        ModelParams::Baseline(p) => p.groups_mut(),
    };
    for g in groups {
        let v = read_f64s(&mut input, g.len())?;
        g.copy_from_slice(&v);
    }
    expect_eof(&mut input)?;
    Ok((params, h))
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, tree: &EnvTree, meta: &CheckpointMeta) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(f, params, tree, meta)
}

pub fn load_checkpoint(path: &Path, tree: &EnvTree) -> Result<(ModelParams, CheckpointHeader)> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?), tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};
    use crate::simulator::simulate;

    fn small() -> SimConfig {
        SimConfig {
            depth: 2,
            n_per_env: 12,
            d_x: 3,
            k: 2,
            ..SimConfig::desk()
        }
    }

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let (tree, _, data) = simulate(&small()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &tree, &data).unwrap();
        assert_eq!(&buf[..8], DATASET_MAGIC);
        let (tree2, data2) = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(tree, tree2);
        assert!(data.same_data(&data2));
        assert_eq!(data.config, data2.config);
        let mut again = Vec::new();
        write_dataset(&mut again, &tree2, &data2).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let (tree, _, data) = simulate(&small()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &tree, &data).unwrap();
        assert!(read_dataset(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_dataset(extra.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_dataset(bad.as_slice()).is_err());
        let mut bad_split = buf;
        let n = bad_split.len();
        bad_split[n - 4..].copy_from_slice(&7u32.to_le_bytes());
        assert!(read_dataset(bad_split.as_slice()).is_err());
    }

    #[test]
    fn truth_json_round_trip() {
        let (_, truth, _) = simulate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("truth.json");
        save_truth(&p, &truth).unwrap();
        assert_eq!(load_truth(&p).unwrap(), truth);
    }

    #[test]
    fn checkpoint_round_trip_both_kinds() {
        let tree = EnvTree::build_balanced_binary(2).unwrap();
        let arch = Architecture::new(3, 2);
        let mut rng = substream(1, Domain::ModelInit, 0);
        let mut tbr = TbrParams::init(arch, tree.num_arcs(), &mut rng);
        tbr.delta = Matrix::from_fn(tree.num_arcs(), 2, |i, j| (i as f64 - j as f64) * 0.1);
        let base = BaselineParams::init(arch, &mut rng);
        let meta = CheckpointMeta {
            lambda: 0.01,
            seed: 4,
            run_id: "r".into(),
        };
        for params in [ModelParams::Tbr(tbr), ModelParams::Baseline(base)] {
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &params, &tree, &meta).unwrap();
            let (back, h) = read_checkpoint(buf.as_slice(), &tree).unwrap();
            assert_eq!(h.kind, params.kind());
            assert_eq!(h.seed, 4);
            let bits = |p: &ModelParams| groups_of(p).concat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&params), bits(&back));
            let other = EnvTree::build_balanced_binary(3).unwrap();
            assert!(read_checkpoint(buf.as_slice(), &other).is_err());
        }
    }
}
