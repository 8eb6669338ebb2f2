//! The `RTMB` little-endian bag container.
//!
//! ```text
//! "RTMB" | u32 version | u32 d | u8 task | u32 bag_count
//! per bag:
//!   u32 id | u32 patient_id (0xFFFFFFFF = absent)
//!   label: classification -> u32 class
//!          survival       -> u8 interval | u8 event | f64 time
//!   u32 N | u32 key_count (0xFFFFFFFF = absent) | key_count x u32
//!   N x 2 f32 coords | N x d f32 embeddings
//! ```
//!
//! Values are narrowed to `f32` on disk and widened back to `f64` on load.

use std::fs;
use std::path::Path;

use crate::bagstore::{Bag, BagDataset, Label, TaskKind};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const DATASET_MAGIC: [u8; 4] = *b"RTMB";
pub const DATASET_VERSION: u32 = 1;
const ABSENT: u32 = u32::MAX;

pub fn encode_dataset(ds: &BagDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let mut w = Writer::default();
    w.bytes(&DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u32(to_u32(ds.dim, "dimension")?);
    w.u8(ds.task.code());
    w.u32(to_u32(ds.bags.len(), "bag count")?);
    for b in &ds.bags {
        w.u32(b.id);
        w.u32(b.patient_id.unwrap_or(ABSENT));
        match b.label {
            Label::Class(c) => w.u32(c),
            Label::Survival {
                interval,
                event_observed,
                time,
            } => {
                w.u8(interval);
                w.u8(event_observed as u8);
                w.f64(time);
            }
        }
        w.u32(to_u32(b.len(), "bag size")?);
        match &b.key_indices {
            None => w.u32(ABSENT),
            Some(keys) => {
                w.u32(to_u32(keys.len(), "key count")?);
                keys.iter().for_each(|&k| w.u32(k));
            }
        }
        b.coords.as_slice().iter().for_each(|&v| w.f32(v as f32));
        b.embeddings.as_slice().iter().for_each(|&v| w.f32(v as f32));
    }
    Ok(w.buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<BagDataset> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.array4("magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: DATASET_MAGIC,
            found: magic,
        });
    }
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            expected: DATASET_VERSION,
            found: version,
        });
    }
    let dim = r.u32("dimension")? as usize;
    let task_code = r.u8("task kind")?;
    let task = TaskKind::from_code(task_code)
        .ok_or_else(|| Error::Corrupt(format!("unknown task kind {task_code}")))?;
    let count = r.u32("bag count")? as usize;
    let mut bags = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let id = r.u32("bag id")?;
        let patient = r.u32("patient id")?;
        let label = match task {
            TaskKind::Classification => Label::Class(r.u32("class label")?),
            TaskKind::Survival => Label::Survival {
                interval: r.u8("interval")?,
                event_observed: r.u8("event flag")? != 0,
                time: r.f64("survival time")?,
            },
        };
        let n = r.u32("instance count")? as usize;
        let key_count = r.u32("key count")?;
        let key_indices = if key_count == ABSENT {
            None
        } else {
            Some((0..key_count).map(|_| r.u32("key index")).collect::<Result<Vec<_>>>()?)
        };
        let coords = r.f32_block(n * 2, "coordinates")?;
        let emb = r.f32_block(n * dim, "embeddings")?;
        let bag = Bag {
            id,
            embeddings: Matrix::from_vec(n, dim, emb)?,
            coords: Matrix::from_vec(n, 2, coords)?,
            label,
            key_indices,
            patient_id: (patient != ABSENT).then_some(patient),
        };
        bag.validate().map_err(|e| Error::Corrupt(format!("bag {id}: {e}")))?;
        bags.push(bag);
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let ds = BagDataset {
        bags,
        dim,
        task,
        provenance: String::new(),
    };
    ds.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(ds)
}

pub fn save_dataset(ds: &BagDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<BagDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    decode_dataset(&fs::read(path)?)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit in u32")))
}

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    pub buf: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(format!("while reading {what} at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn array4(&mut self, what: &str) -> Result<[u8; 4]> {
        Ok(self.take(4, what)?.try_into().expect("4 bytes"))
    }
    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array4(what)?))
    }
    pub fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    pub fn f32_block(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Corrupt(what.into()))?, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
    pub fn f64_block(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt(what.into()))?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_dataset(with_keys: bool) -> BagDataset {
        let emb = Matrix::from_vec(3, 2, vec![0.5, -1.25, 2.0, 0.0, 3.5, 1e-3f32 as f64]).unwrap();
        let coords = Matrix::from_vec(3, 2, vec![0.0, 1.0, 0.25, 0.5, 0.75, 0.125]).unwrap();
        let mut b = Bag::new(4, emb, coords, Label::Class(1)).unwrap();
        if with_keys {
            b.key_indices = Some(vec![2, 0]);
            b.patient_id = Some(17);
        }
        BagDataset::new(vec![b], 2, TaskKind::Classification, "").unwrap()
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = BagDataset::new(vec![], 8, TaskKind::Survival, "").unwrap();
        assert_eq!(decode_dataset(&encode_dataset(&ds).unwrap()).unwrap(), ds);
    }

    #[test]
    fn keyed_bag_round_trips_bitwise() {
        let ds = small_dataset(true);
        let bytes = encode_dataset(&ds).unwrap();
        assert_eq!(decode_dataset(&bytes).unwrap(), ds);
        assert_eq!(&bytes[..4], b"RTMB");
    }

    #[test]
    fn corruption_maps_to_distinct_errors() {
        let bytes = encode_dataset(&small_dataset(false)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_dataset(&bad), Err(Error::VersionMismatch { found: 9, .. })));
        assert!(matches!(decode_dataset(&bytes[..bytes.len() - 3]), Err(Error::Truncated(_))));
    }

    #[test]
    fn files_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.rtmb");
        let ds = small_dataset(true);
        save_dataset(&ds, &p).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), ds);
        assert!(matches!(load_dataset(dir.path().join("nope")), Err(Error::MissingInput(_))));
    }

    proptest! {
        #[test]
        fn f32_representable_datasets_round_trip(
            sizes in proptest::collection::vec(1usize..6, 0..5),
            survival in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let mut rng = crate::numkit::RngStream::new(seed);
            let dim = 3;
            let bags: Vec<Bag> = sizes.iter().enumerate().map(|(i, &n)| {
                let f = |r: &mut crate::numkit::RngStream| r.normal() as f32 as f64;
                let emb = Matrix::from_vec(n, dim, (0..n * dim).map(|_| f(&mut rng)).collect()).unwrap();
                let coords = Matrix::from_vec(n, 2, (0..n * 2).map(|_| rng.uniform() as f32 as f64).collect()).unwrap();
                let label = if survival {
                    Label::Survival { interval: (i % 4) as u8, event_observed: i % 2 == 0, time: rng.uniform() * 4.0 }
                } else {
                    Label::Class((i % 3) as u32)
                };
                let mut b = Bag::new(i as u32 * 3, emb, coords, label).unwrap();
                if i % 2 == 1 { b.key_indices = Some(vec![(n - 1) as u32]); }
                if i % 3 == 0 { b.patient_id = Some(i as u32); }
                b
            }).collect();
            let task = if survival { TaskKind::Survival } else { TaskKind::Classification };
            let ds = BagDataset::new(bags, dim, task, "").unwrap();
            prop_assert_eq!(decode_dataset(&encode_dataset(&ds).unwrap()).unwrap(), ds);
        }
    }
}
