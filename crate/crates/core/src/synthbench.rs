//! Synthetic composition/topology benchmark.
//!
//! Bags hold 50 "digit" instances. Dataset A is labelled by whether digit 9
//! occurs (composition only; coordinates are noise). Dataset B fixes the
//! composition to one each of 1, 3, 5, 7, 9 plus 45 even digits and labels a
//! bag positive when the five odd digits form a compact spatial cluster.
//! Digit images are replaced by class-conditional Gaussian embeddings.

use serde::{Deserialize, Serialize};

use crate::bagstore::{Bag, BagDataset, Label, Splits, TaskKind};
use crate::error::{Error, Result};
use crate::numkit::{dot, norm, Matrix, RngStream};

pub const N_DIGITS: usize = 10;
const MAX_COS: f64 = 0.5;
const MAX_RETRIES: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    /// One unit-norm mean per digit class (10 x d).
    pub means: Matrix,
    pub sigma: f64,
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// One embedding of `digit`, rounded to `f32` so it survives the on-disk
    /// format unchanged.
    pub fn sample(&self, digit: u8, rng: &mut RngStream) -> Vec<f64> {
        self.means
            .row(digit as usize)
            .iter()
            .map(|&m| (m + self.sigma * rng.normal()) as f32 as f64)
            .collect()
    }
}

/// Ten unit-norm class means with pairwise cosine at most 0.5.
pub fn make_embedding_model(dim: usize, seed: u64) -> Result<EmbeddingModel> {
    let mut rng = RngStream::new(seed).derive(0xE11B);
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(N_DIGITS);
    let mut tries = 0;
    while means.len() < N_DIGITS {
        tries += 1;
        if tries > MAX_RETRIES || dim == 0 {
            return Err(Error::Separation {
                classes: N_DIGITS,
                dim,
                max_cos: MAX_COS,
            });
        }
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = norm(&v);
        if n < 1e-12 {
            continue;
        }
        let v: Vec<f64> = v.iter().map(|x| x / n).collect();
        if means.iter().all(|m| dot(m, &v) <= MAX_COS) {
            means.push(v);
        }
    }
    let flat = means.concat();
    Ok(EmbeddingModel {
        means: Matrix::from_vec(N_DIGITS, dim, flat)?,
        sigma: 0.1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bench {
    A,
    B,
    Survival,
}

impl Bench {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Bench::A),
            "b" => Ok(Bench::B),
            "survival" | "s" => Ok(Bench::Survival),
            other => Err(Error::Config(format!("unknown benchmark {other:?} (expected a, b or survival)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Bench::A => "a",
            Bench::B => "b",
            Bench::Survival => "survival",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Bench::A => 0xA,
            Bench::B => 0xB,
            Bench::Survival => 0x5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub bag_size: usize,
    pub dim: usize,
    pub motif_sigma: f64,
    pub centroid_lo: f64,
    pub centroid_hi: f64,
    pub key_digits: Vec<u8>,
    pub background_digits: Vec<u8>,
    pub positive_fraction: f64,
    pub censor_prob: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_train: 2000,
            n_val: 250,
            n_test: 500,
            bag_size: 50,
            dim: 64,
            motif_sigma: 0.05,
            centroid_lo: 0.2,
            centroid_hi: 0.8,
            key_digits: vec![1, 3, 5, 7, 9],
            background_digits: vec![0, 2, 4, 6, 8],
            positive_fraction: 0.5,
            censor_prob: 0.2,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.bag_size < self.key_digits.len() || self.bag_size == 0 {
            return bad(format!("bag_size {} smaller than the key set", self.bag_size));
        }
        if !(self.motif_sigma > 0.0) {
            return bad("motif_sigma must be positive".into());
        }
        if !(0.0 <= self.centroid_lo && self.centroid_lo <= self.centroid_hi && self.centroid_hi <= 1.0) {
            return bad("centroid box must lie within [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) || !(0.0..=1.0).contains(&self.censor_prob) {
            return bad("fractions must lie in [0,1]".into());
        }
        if self.background_digits.is_empty() || self.dim == 0 {
            return bad("background digits and dim must be non-empty".into());
        }
        if self
            .key_digits
            .iter()
            .chain(&self.background_digits)
            .any(|&d| d as usize >= N_DIGITS)
        {
            return bad("digits must be in 0..=9".into());
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 13] = [
        "n_train",
        "n_val",
        "n_test",
        "bag_size",
        "dim",
        "motif_sigma",
        "centroid_lo",
        "centroid_hi",
        "key_digits",
        "background_digits",
        "positive_fraction",
        "censor_prob",
        "seed",
    ];

    /// Applies one `key=value` setting; digit lists are comma separated.
    /// Unknown keys are rejected by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
        }
        let digits = |value: &str| -> Result<Vec<u8>> {
            value
                .split(',')
                .filter(|d| !d.trim().is_empty())
                .map(|d| num(key, d))
                .collect()
        };
        match key {
            "n_train" => self.n_train = num(key, value)?,
            "n_val" => self.n_val = num(key, value)?,
            "n_test" => self.n_test = num(key, value)?,
            "bag_size" => self.bag_size = num(key, value)?,
            "dim" => self.dim = num(key, value)?,
            "motif_sigma" => self.motif_sigma = num(key, value)?,
            "centroid_lo" => self.centroid_lo = num(key, value)?,
            "centroid_hi" => self.centroid_hi = num(key, value)?,
            "key_digits" => self.key_digits = digits(value)?,
            "background_digits" => self.background_digits = digits(value)?,
            "positive_fraction" => self.positive_fraction = num(key, value)?,
            "censor_prob" => self.censor_prob = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown benchmark key {key:?}"))),
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    /// Sidecar manifest: one `key=value` line per field.
    pub fn manifest(&self, bench: Bench) -> String {
        let digits = |d: &[u8]| d.iter().map(u8::to_string).collect::<Vec<_>>().join(",");
        format!(
            "bench={}\nn_train={}\nn_val={}\nn_test={}\nbag_size={}\ndim={}\nmotif_sigma={}\n\
             centroid_lo={}\ncentroid_hi={}\nkey_digits={}\nbackground_digits={}\n\
             positive_fraction={}\ncensor_prob={}\nseed={}\nembedding_sigma=0.1\nrng={}\n",
            bench.name(),
            self.n_train,
            self.n_val,
            self.n_test,
            self.bag_size,
            self.dim,
            self.motif_sigma,
            self.centroid_lo,
            self.centroid_hi,
            digits(&self.key_digits),
            digits(&self.background_digits),
            self.positive_fraction,
            self.censor_prob,
            self.seed,
            crate::numkit::RNG_ALGORITHM,
        )
    }
}

/// A generated dataset plus the digit of every instance.
#[derive(Clone, Debug)]
pub struct Generated {
    pub dataset: BagDataset,
    pub digits: Vec<Vec<u8>>,
}

/// Segment sizes in id order: train, val, test.
fn segments(cfg: &BenchConfig) -> [(u32, usize); 3] {
    [
        (0, cfg.n_train),
        (cfg.n_train as u32, cfg.n_val),
        ((cfg.n_train + cfg.n_val) as u32, cfg.n_test),
    ]
}

/// Balanced labels for one segment, shuffled.
fn segment_labels(cfg: &BenchConfig, n: usize, rng: &mut RngStream) -> Vec<bool> {
    let n_pos = (cfg.positive_fraction * n as f64).round() as usize;
    let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    rng.shuffle(&mut labels);
    labels
}

fn uniform_coord(rng: &mut RngStream) -> f64 {
    rng.uniform() as f32 as f64
}

fn assemble(
    id: u32,
    model: &EmbeddingModel,
    digits: &[u8],
    coords: Vec<f64>,
    label: Label,
    rng: &mut RngStream,
) -> Result<Bag> {
    let n = digits.len();
    let mut emb = Vec::with_capacity(n * model.dim());
    for &d in digits {
        emb.extend(model.sample(d, rng));
    }
    Bag::new(
        id,
        Matrix::from_vec(n, model.dim(), emb)?,
        Matrix::from_vec(n, 2, coords)?,
        label,
    )
}

fn check_model(cfg: &BenchConfig, model: &EmbeddingModel) -> Result<()> {
    cfg.validate()?;
    if model.dim() != cfg.dim {
        return Err(Error::Config(format!(
            "embedding model has dimension {}, config asks for {}",
            model.dim(),
            cfg.dim
        )));
    }
    Ok(())
}

/// Dataset A: composition only.
pub fn gen_dataset_a(cfg: &BenchConfig, model: &EmbeddingModel) -> Result<BagDataset> {
    gen_dataset_a_with_digits(cfg, model).map(|g| g.dataset)
}

pub fn gen_dataset_a_with_digits(cfg: &BenchConfig, model: &EmbeddingModel) -> Result<Generated> {
    check_model(cfg, model)?;
    let master = RngStream::new(cfg.seed).derive(Bench::A.tag());
    let mut bags = Vec::with_capacity(cfg.total());
    let mut all_digits = Vec::with_capacity(cfg.total());
    for (seg, (offset, n)) in segments(cfg).into_iter().enumerate() {
        let labels = segment_labels(cfg, n, &mut master.derive(1000 + seg as u64));
        for (j, positive) in labels.into_iter().enumerate() {
            let id = offset + j as u32;
            let mut rng = master.derive(id as u64);
            let mut digits: Vec<u8> = (0..cfg.bag_size)
                .map(|_| if positive { rng.below(10) as u8 } else { rng.below(9) as u8 })
                .collect();
            if positive && !digits.contains(&9) {
                let slot = rng.below(cfg.bag_size);
                digits[slot] = 9;
            }
            let coords: Vec<f64> = (0..cfg.bag_size * 2).map(|_| uniform_coord(&mut rng)).collect();
            bags.push(assemble(id, model, &digits, coords, Label::Class(positive as u32), &mut rng)?);
            all_digits.push(digits);
        }
    }
    Ok(Generated {
        dataset: BagDataset::new(bags, cfg.dim, TaskKind::Classification, "synthetic bench A (composition)")?,
        digits: all_digits,
    })
}

/// Digits for a Dataset-B-style bag in random order, and where the key digits sit.
fn b_layout(cfg: &BenchConfig, rng: &mut RngStream) -> (Vec<u8>, Vec<u32>) {
    let mut digits: Vec<u8> = cfg.key_digits.clone();
    for _ in cfg.key_digits.len()..cfg.bag_size {
        digits.push(cfg.background_digits[rng.below(cfg.background_digits.len())]);
    }
    let mut order: Vec<usize> = (0..cfg.bag_size).collect();
    rng.shuffle(&mut order);
    let shuffled: Vec<u8> = order.iter().map(|&i| digits[i]).collect();
    // Original slot k < key count holds key digit k; find where it landed.
    let mut keys = vec![0u32; cfg.key_digits.len()];
    for (pos, &src) in order.iter().enumerate() {
        if src < cfg.key_digits.len() {
            keys[src] = pos as u32;
        }
    }
    (shuffled, keys)
}

fn b_coords(cfg: &BenchConfig, keys: &[u32], compact: bool, rng: &mut RngStream) -> Vec<f64> {
    let mut coords: Vec<f64> = (0..cfg.bag_size * 2).map(|_| uniform_coord(rng)).collect();
    if compact {
        let cx = rng.uniform_range(cfg.centroid_lo, cfg.centroid_hi);
        let cy = rng.uniform_range(cfg.centroid_lo, cfg.centroid_hi);
        for &k in keys {
            let k = k as usize;
            coords[2 * k] = (cx + cfg.motif_sigma * rng.normal()).clamp(0.0, 1.0) as f32 as f64;
            coords[2 * k + 1] = (cy + cfg.motif_sigma * rng.normal()).clamp(0.0, 1.0) as f32 as f64;
        }
    }
    coords
}

/// Dataset B: topology only.
pub fn gen_dataset_b(cfg: &BenchConfig, model: &EmbeddingModel) -> Result<BagDataset> {
    gen_dataset_b_with_digits(cfg, model).map(|g| g.dataset)
}

pub fn gen_dataset_b_with_digits(cfg: &BenchConfig, model: &EmbeddingModel) -> Result<Generated> {
    check_model(cfg, model)?;
    let master = RngStream::new(cfg.seed).derive(Bench::B.tag());
    let mut bags = Vec::with_capacity(cfg.total());
    let mut all_digits = Vec::with_capacity(cfg.total());
    for (seg, (offset, n)) in segments(cfg).into_iter().enumerate() {
        let labels = segment_labels(cfg, n, &mut master.derive(1000 + seg as u64));
        for (j, positive) in labels.into_iter().enumerate() {
            let id = offset + j as u32;
            let mut rng = master.derive(id as u64);
            let (digits, keys) = b_layout(cfg, &mut rng);
            let coords = b_coords(cfg, &keys, positive, &mut rng);
            let mut bag = assemble(id, model, &digits, coords, Label::Class(positive as u32), &mut rng)?;
            bag.key_indices = Some(keys);
            bags.push(bag);
            all_digits.push(digits);
        }
    }
    Ok(Generated {
        dataset: BagDataset::new(bags, cfg.dim, TaskKind::Classification, "synthetic bench B (topology)")?,
        digits: all_digits,
    })
}

/// Negative mean pairwise distance among the key instances.
pub fn motif_risk(bag: &Bag) -> f64 {
    let keys: Vec<usize> = bag.key_indices.iter().flatten().map(|&k| k as usize).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..keys.len() {
        for b in a + 1..keys.len() {
            let (pa, pb) = (bag.coords.row(keys[a]), bag.coords.row(keys[b]));
            total += ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        -total / pairs as f64
    }
}

/// Survival bags: Dataset-B layout where half the bags carry a compact motif.
/// Risk is [`motif_risk`]; the highest-risk quartile falls in interval 0 and
/// times inside an interval decrease with risk. Each record is censored with
/// probability `censor_prob`.
pub fn gen_survival_dataset(cfg: &BenchConfig, model: &EmbeddingModel) -> Result<BagDataset> {
    check_model(cfg, model)?;
    let master = RngStream::new(cfg.seed).derive(Bench::Survival.tag());
    let mut bags = Vec::with_capacity(cfg.total());
    for (seg, (offset, n)) in segments(cfg).into_iter().enumerate() {
        let compact = segment_labels(cfg, n, &mut master.derive(1000 + seg as u64));
        let mut seg_bags = Vec::with_capacity(n);
        for (j, c) in compact.into_iter().enumerate() {
            let id = offset + j as u32;
            let mut rng = master.derive(id as u64);
            let (digits, keys) = b_layout(cfg, &mut rng);
            let coords = b_coords(cfg, &keys, c, &mut rng);
            let placeholder = Label::Survival {
                interval: 0,
                event_observed: true,
                time: 0.0,
            };
            let mut bag = assemble(id, model, &digits, coords, placeholder, &mut rng)?;
            bag.key_indices = Some(keys);
            seg_bags.push(bag);
        }
        // Rank by risk (ties by id) and cut into quartiles.
        let mut order: Vec<usize> = (0..seg_bags.len()).collect();
        let risks: Vec<f64> = seg_bags.iter().map(motif_risk).collect();
        order.sort_by(|&a, &b| risks[a].total_cmp(&risks[b]).then(a.cmp(&b)));
        let mut trng = master.derive(2000 + seg as u64);
        for (rank, &i) in order.iter().enumerate() {
            let quartile = (rank * 4 / n.max(1)).min(3);
            let lo = (quartile * n).div_ceil(4);
            let hi = ((quartile + 1) * n).div_ceil(4);
            let within = (rank - lo) as f64 + 0.5;
            let frac = within / (hi - lo).max(1) as f64;
            let interval = 3 - quartile;
            let time = interval as f64 + 0.9 * (1.0 - frac) + 0.1 * trng.uniform();
            let event_observed = !trng.bernoulli(cfg.censor_prob);
            seg_bags[i].label = Label::Survival {
                interval: interval as u8,
                event_observed,
                time,
            };
        }
        bags.extend(seg_bags);
    }
    BagDataset::new(
        bags,
        cfg.dim,
        TaskKind::Survival,
        "synthetic survival bench (motif compactness drives hazard)",
    )
}

/// Generates the requested benchmark with an embedding model seeded from `cfg.seed`.
pub fn generate(bench: Bench, cfg: &BenchConfig) -> Result<BagDataset> {
    let model = make_embedding_model(cfg.dim, cfg.seed)?;
    match bench {
        Bench::A => gen_dataset_a(cfg, &model),
        Bench::B => gen_dataset_b(cfg, &model),
        Bench::Survival => gen_survival_dataset(cfg, &model),
    }
}

/// Cuts a generated dataset into its train/val/test segments by id.
pub fn partition(ds: &BagDataset, cfg: &BenchConfig) -> Splits {
    let (a, b) = (cfg.n_train as u32, (cfg.n_train + cfg.n_val) as u32);
    Splits {
        train: ds.filtered(|bag| bag.id < a),
        val: ds.filtered(|bag| bag.id >= a && bag.id < b),
        test: ds.filtered(|bag| bag.id >= b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::c_index;

    fn small(seed: u64) -> BenchConfig {
        BenchConfig {
            n_train: 60,
            n_val: 10,
            n_test: 30,
            seed,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn settings_parse_and_unknown_keys_are_named() {
        let mut c = BenchConfig::default();
        c.set("n_train", "12").unwrap();
        c.set("key_digits", "1,3").unwrap();
        c.set("motif_sigma", "0.1").unwrap();
        assert_eq!((c.n_train, c.key_digits.clone(), c.motif_sigma), (12, vec![1, 3], 0.1));
        let err = c.set("bag_sise", "3").unwrap_err().to_string();
        assert!(err.contains("bag_sise"));
        assert!(c.set("dim", "x").is_err());
        for k in BenchConfig::KEYS {
            assert!(c.manifest(Bench::B).contains(&format!("{k}=")));
        }
    }

    #[test]
    fn embedding_means_are_separated_unit_vectors() {
        let m = make_embedding_model(64, 3).unwrap();
        for i in 0..N_DIGITS {
            assert!((norm(m.means.row(i)) - 1.0).abs() < 1e-12);
            for j in 0..i {
                assert!(dot(m.means.row(i), m.means.row(j)) <= 0.5);
            }
        }
        assert_eq!(m, make_embedding_model(64, 3).unwrap());
        assert!(matches!(make_embedding_model(2, 3), Err(Error::Separation { .. })));
    }

    #[test]
    fn dataset_a_labels_follow_digit_nine() {
        let cfg = small(1);
        let m = make_embedding_model(cfg.dim, 1).unwrap();
        let g = gen_dataset_a_with_digits(&cfg, &m).unwrap();
        for (bag, digits) in g.dataset.bags.iter().zip(&g.digits) {
            assert_eq!(bag.label, Label::Class(digits.contains(&9) as u32));
            assert_eq!(bag.len(), 50);
        }
        let splits = partition(&g.dataset, &cfg);
        for (part, n) in [(&splits.train, 60), (&splits.val, 10), (&splits.test, 30)] {
            let pos = part.bags.iter().filter(|b| b.label == Label::Class(1)).count();
            assert_eq!(part.len(), n);
            assert_eq!(pos, n / 2);
        }
        // Replay the first bag's digit draw.
        let mut rng = RngStream::new(1).derive(0xA).derive(0);
        let positive = g.dataset.bags[0].label == Label::Class(1);
        let mut replay: Vec<u8> = (0..50)
            .map(|_| if positive { rng.below(10) as u8 } else { rng.below(9) as u8 })
            .collect();
        if positive && !replay.contains(&9) {
            let slot = rng.below(50);
            replay[slot] = 9;
        }
        assert_eq!(replay, g.digits[0]);
    }

    #[test]
    fn dataset_b_composition_is_fixed() {
        let cfg = small(2);
        let m = make_embedding_model(cfg.dim, 2).unwrap();
        let g = gen_dataset_b_with_digits(&cfg, &m).unwrap();
        for (bag, digits) in g.dataset.bags.iter().zip(&g.digits) {
            for k in [1u8, 3, 5, 7, 9] {
                assert_eq!(digits.iter().filter(|&&d| d == k).count(), 1);
            }
            let keys = bag.key_indices.as_ref().unwrap();
            let key_digits: Vec<u8> = keys.iter().map(|&k| digits[k as usize]).collect();
            assert_eq!(key_digits, vec![1, 3, 5, 7, 9]);
            assert!(bag.coords.as_slice().iter().all(|&c| (0.0..=1.0).contains(&c)));
        }
    }

    #[test]
    fn generation_is_bitwise_deterministic() {
        let cfg = small(5);
        for bench in [Bench::A, Bench::B, Bench::Survival] {
            let a = crate::bagstore::encode_dataset(&generate(bench, &cfg).unwrap()).unwrap();
            let b = crate::bagstore::encode_dataset(&generate(bench, &cfg).unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn survival_layout() {
        let mut cfg = small(4);
        cfg.censor_prob = 0.0;
        let ds = generate(Bench::Survival, &cfg).unwrap();
        let train = partition(&ds, &cfg).train;
        let mut risks: Vec<(f64, u8)> = train
            .bags
            .iter()
            .map(|b| match b.label {
                Label::Survival { interval, event_observed, .. } => {
                    assert!(event_observed);
                    (motif_risk(b), interval)
                }
                _ => unreachable!(),
            })
            .collect();
        risks.sort_by(|a, b| b.0.total_cmp(&a.0));
        for r in &risks[..train.len() / 4] {
            assert_eq!(r.1, 0);
        }
        let (risk, time, event): (Vec<f64>, Vec<f64>, Vec<bool>) = ds
            .bags
            .iter()
            .map(|b| match b.label {
                Label::Survival { time, event_observed, .. } => (motif_risk(b), time, event_observed),
                _ => unreachable!(),
            })
            .fold((vec![], vec![], vec![]), |mut acc, (r, t, e)| {
                acc.0.push(r);
                acc.1.push(t);
                acc.2.push(e);
                acc
            });
        assert!(c_index(&risk, &time, &event).unwrap() >= 0.9);
    }
}
