use std::collections::BTreeMap;
use std::path::Path;

use crate::bagstore::{Reader, TaskKind, Writer};
use crate::baselines::{AttnMil, MeanPool};
use crate::error::{Error, Result};
use crate::head::MlpHead;
use crate::numkit::{Matrix, Params};
use crate::statstream::{Codebook, StatStream};
use crate::topostream::GcnParams;
use crate::trainer::{Composition, ModelState, Variant};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RTMC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializes the parameters of a model as `RTMC`: magic, version, a
/// `key=value` metadata block, then named `rows x cols` f64 tensors.
/// Optimizer state is not stored.
pub fn encode_checkpoint(state: &ModelState) -> Result<Vec<u8>> {
    let mut meta = format!(
        "variant={}\ntask={}\nclasses={}\nk_knn={}\ncomp={}\ncomp_frozen={}\ntopo_frozen={}\n",
        state.variant.name(),
        state.task.code(),
        state.classes,
        state.k_knn,
        state.comp.as_ref().map_or("none", Composition::kind),
        state.comp_frozen,
        state.topo_frozen,
    );
    if let Some(t) = &state.topo {
        meta.push_str(&format!("dropout={}\n", t.dropout));
    }
    let mut tensors: Vec<(&str, &Matrix)> = Vec::new();
    if let Some(c) = &state.comp {
        tensors.extend(c.tensors());
    }
    if let Some(t) = &state.topo {
        tensors.extend(t.tensors());
    }
    let mut w = Writer::default();
    w.bytes(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u32(meta.len() as u32);
    w.bytes(meta.as_bytes());
    w.u32(tensors.len() as u32);
    for (name, m) in tensors {
        w.u32(name.len() as u32);
        w.bytes(name.as_bytes());
        w.u32(m.rows() as u32);
        w.u32(m.cols() as u32);
        for &v in m.as_slice() {
            w.f64(v);
        }
    }
    Ok(w.buf)
}

fn meta_value<'a>(meta: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Corrupt(format!("checkpoint metadata lacks {key}")))
}

fn meta_parse<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<T> {
    meta_value(meta, key)?
        .parse()
        .map_err(|_| Error::Corrupt(format!("checkpoint metadata {key} is malformed")))
}

struct TensorBank(BTreeMap<String, Matrix>);

impl TensorBank {
    fn take(&mut self, name: &str) -> Result<Matrix> {
        self.0
            .remove(name)
            .ok_or_else(|| Error::Corrupt(format!("checkpoint lacks tensor {name}")))
    }

    fn head(&mut self, prefix: &str) -> Result<MlpHead> {
        Ok(MlpHead {
            w1: self.take(&format!("{prefix}w1"))?,
            b1: self.take(&format!("{prefix}b1"))?,
            w2: self.take(&format!("{prefix}w2"))?,
            b2: self.take(&format!("{prefix}b2"))?,
        })
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelState> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.array4("magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let meta_len = r.u32("metadata length")? as usize;
    let meta_text = std::str::from_utf8(r.take(meta_len, "metadata")?)
        .map_err(|_| Error::Corrupt("checkpoint metadata is not UTF-8".into()))?;
    let meta: BTreeMap<String, String> = meta_text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let count = r.u32("tensor count")?;
    let mut bank = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Corrupt(format!("tensor {name} is too large")))?;
        let data = r.f64_block(n, &name)?;
        bank.insert(name, Matrix::from_vec(rows, cols, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut bank = TensorBank(bank);
    let variant: Variant = meta_value(&meta, "variant")?.parse()?;
    let task = TaskKind::from_code(meta_parse(&meta, "task")?)
        .ok_or_else(|| Error::Corrupt("unknown task code".into()))?;
    let comp = match meta_value(&meta, "comp")? {
        "none" => None,
        "stat" => {
            let prototypes = bank.take("prototypes")?;
            let log_tau = bank.take("log_tau")?;
            let codebook = Codebook::new(prototypes, log_tau.get(0, 0).exp())?;
            let head = bank.head("stat_")?;
            let mut stat = StatStream { codebook, head };
            // Restore the stored bits rather than the re-exponentiated value.
            stat.codebook.log_tau = log_tau;
            Some(Composition::Stat(stat))
        }
        "meanpool" => Some(Composition::MeanPool(MeanPool { head: bank.head("")? })),
        "abmil" => {
            let v = bank.take("attn_v")?;
            let w = bank.take("attn_w")?;
            Some(Composition::AttnMil(AttnMil { v, w, head: bank.head("")? }))
        }
        other => return Err(Error::Corrupt(format!("unknown composition kind {other}"))),
    };
    let topo = if bank.0.contains_key("gcn_w1") {
        Some(GcnParams {
            w1: bank.take("gcn_w1")?,
            b1: bank.take("gcn_b1")?,
            w2: bank.take("gcn_w2")?,
            b2: bank.take("gcn_b2")?,
            w_topo: bank.take("w_topo")?,
            b_topo: bank.take("b_topo")?,
            dropout: meta_parse(&meta, "dropout")?,
        })
    } else {
        None
    };
    if let Some(extra) = bank.0.keys().next() {
        return Err(Error::Corrupt(format!("unexpected tensor {extra}")));
    }
    Ok(ModelState {
        variant,
        task,
        classes: meta_parse(&meta, "classes")?,
        k_knn: meta_parse(&meta, "k_knn")?,
        comp,
        topo,
        comp_frozen: meta_parse(&meta, "comp_frozen")?,
        topo_frozen: meta_parse(&meta, "topo_frozen")?,
        comp_opt: None,
        topo_opt: None,
    })
}

pub fn save_checkpoint(state: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(state)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    decode_checkpoint(&std::fs::read(path)?)
}
