//! Acceptance suite. Runs every numbered criterion at its stated tolerance
//! and prints one PASS/FAIL line per criterion, then exits nonzero if any
//! criterion failed.
//!
//! The desk-scale training runs (criterion 1) are shared with the gradient
//! gate (3), gradient dynamics (4), shuffle audit (5) and localization (8).

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use restopo::bagstore::{shuffle_coords, Bag, BagDataset, Label};
use restopo::baselines::{AttnMil, MeanPool};
use restopo::cli::{run_from, RunManifest};
use restopo::diagnostics::{
    auc, c_index, certify_permutation_invariance, shuffle_audit, shuffled_dataset, verify_prop1, AuditCurve,
    DEFAULT_FRACTIONS,
};
use restopo::localize::{dice, froc, localize, ScoredBag, FROC_POINTS};
use restopo::numkit::{dot, finite_diff_grad, Matrix, Params, RngStream};
use restopo::statstream::{stat_backward, Codebook, StatStream};
use restopo::synthbench::{generate, partition, Bench, BenchConfig};
use restopo::topostream::{
    build_knn_graph, gcn_backward, gcn_forward, texture_hinge, texture_loss, DropoutMasks, GcnCache, GcnParams,
    SpatialGraph,
};
use restopo::trainer::{
    evaluate, survival_loss, train_stage1, train_stage2, train_variant, ModelState, Stage, TrainConfig, TrainLog,
    Variant,
};
use restopo::Error;

const SEEDS: [u64; 3] = [0, 1, 2];
const DATA_SEED: u64 = 7;
const FD_EPS: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;
const FD_CONFIGS: usize = 20;
const KINK_GUARD: f64 = 1e-4;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

fn note(msg: &str) {
    eprintln!("  .. {msg}");
}

// ---------------------------------------------------------------- data

struct Bench2 {
    train: BagDataset,
    val: BagDataset,
    test: BagDataset,
}

fn desk_bench(b: Bench) -> Bench2 {
    let cfg = BenchConfig {
        n_train: 2000,
        n_val: 250,
        n_test: 500,
        dim: 64,
        seed: DATA_SEED,
        ..BenchConfig::default()
    };
    let ds = generate(b, &cfg).expect("benchmark generation");
    let sp = partition(&ds, &cfg);
    Bench2 {
        train: sp.train,
        val: sp.val,
        test: sp.test,
    }
}

/// Default protocol with the residual GCN at width 64; its learning rate is
/// scaled up by the width ratio inside the trainer.
fn desk_config(variant: Variant, seed: u64) -> TrainConfig {
    TrainConfig {
        variant,
        seed,
        topo_hidden: Some(64),
        ..TrainConfig::default()
    }
}

struct Run {
    seed: u64,
    state: ModelState,
    log: TrainLog,
    test_auc: f64,
}

fn run_variant(data: &Bench2, variant: Variant, seed: u64) -> Run {
    let t = Instant::now();
    let cfg = desk_config(variant, seed);
    let (state, log) = train_variant(&data.train, Some(&data.val), &cfg).expect("training");
    let test_auc = evaluate(&state, &data.test).expect("evaluation");
    note(&format!("{variant} seed {seed}: test AUC {test_auc:.4} ({:.0?})", t.elapsed()));
    Run {
        seed,
        state,
        log,
        test_auc,
    }
}

/// Two-stage and no-texture runs share stage 1, which depends only on the seed.
fn run_two_stage_pair(data: &Bench2, seed: u64) -> (Run, Run) {
    let t = Instant::now();
    let full = desk_config(Variant::TwoStage, seed);
    let (s1, log1) = train_stage1(&data.train, Some(&data.val), &full).expect("stage 1");
    let mut out = Vec::new();
    for variant in [Variant::TwoStage, Variant::NoTexture] {
        let cfg = desk_config(variant, seed);
        let (state, log) = train_stage2(&data.train, Some(&data.val), &cfg, s1.clone(), log1.clone()).expect("stage 2");
        let mut state = state;
        state.variant = variant;
        let test_auc = evaluate(&state, &data.test).expect("evaluation");
        note(&format!("{variant} seed {seed}: test AUC {test_auc:.4} ({:.0?})", t.elapsed()));
        out.push(Run {
            seed,
            state,
            log,
            test_auc,
        });
    }
    let nt = out.pop().unwrap();
    (out.pop().unwrap(), nt)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn aucs(runs: &[Run]) -> Vec<f64> {
    runs.iter().map(|r| r.test_auc).collect()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

struct Desk {
    a_abmil: Vec<Run>,
    a_meanpool: Vec<Run>,
    b_abmil: Vec<Run>,
    b_meanpool: Vec<Run>,
    b_stat: Vec<Run>,
    b_two_stage: Vec<Run>,
    b_no_texture: Vec<Run>,
    b_joint: Vec<Run>,
    b: Bench2,
}

fn desk_runs() -> Desk {
    let a = desk_bench(Bench::A);
    let b = desk_bench(Bench::B);
    let per_seed = |data: &Bench2, v| SEEDS.iter().map(|&s| run_variant(data, v, s)).collect::<Vec<_>>();
    let a_abmil = per_seed(&a, Variant::AttnMil);
    let a_meanpool = per_seed(&a, Variant::MeanPool);
    let b_abmil = per_seed(&b, Variant::AttnMil);
    let b_meanpool = per_seed(&b, Variant::MeanPool);
    let b_stat = per_seed(&b, Variant::StatOnly);
    let (b_two_stage, b_no_texture): (Vec<Run>, Vec<Run>) = SEEDS.iter().map(|&s| run_two_stage_pair(&b, s)).unzip();
    let b_joint = per_seed(&b, Variant::Joint);
    Desk {
        a_abmil,
        a_meanpool,
        b_abmil,
        b_meanpool,
        b_stat,
        b_two_stage,
        b_no_texture,
        b_joint,
        b,
    }
}

// ---------------------------------------------------------------- 1

fn criterion_1(d: &Desk) -> Outcome {
    let in_band = |v: &[f64]| (0.40..=0.65).contains(&mean(v));
    let a_ok = mean(&aucs(&d.a_abmil)) >= 0.95 && mean(&aucs(&d.a_meanpool)) >= 0.95;
    let b_ok = in_band(&aucs(&d.b_abmil)) && in_band(&aucs(&d.b_meanpool)) && in_band(&aucs(&d.b_stat));
    let c_ok = mean(&aucs(&d.b_two_stage)) >= 0.90;
    let gap = mean(&aucs(&d.b_two_stage)) - mean(&aucs(&d.b_joint));
    let d_ok = gap >= 0.05;
    let detail = format!(
        "(a) A: abmil {} meanpool {} [{}]; (b) B: abmil {} meanpool {} stat_only {} [{}]; \
         (c) B two_stage {} [{}]; (d) B joint {} gap {:.3} [{}]",
        fmt(&aucs(&d.a_abmil)),
        fmt(&aucs(&d.a_meanpool)),
        if a_ok { "ok" } else { "FAIL" },
        fmt(&aucs(&d.b_abmil)),
        fmt(&aucs(&d.b_meanpool)),
        fmt(&aucs(&d.b_stat)),
        if b_ok { "ok" } else { "FAIL" },
        fmt(&aucs(&d.b_two_stage)),
        if c_ok { "ok" } else { "FAIL" },
        fmt(&aucs(&d.b_joint)),
        gap,
        if d_ok { "ok" } else { "FAIL" },
    );
    outcome("1", a_ok && b_ok && c_ok && d_ok, detail)
}

// ---------------------------------------------------------------- 2

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    // Entries far below the gradient's scale are compared against that scale.
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

fn random_bag(n: usize, d: usize, rng: &mut RngStream) -> Bag {
    let emb = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap();
    let coords = Matrix::from_vec(n, 2, (0..n * 2).map(|_| rng.uniform()).collect()).unwrap();
    Bag::new(0, emb, coords, Label::Class(1)).unwrap()
}

fn random_vec(n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

fn check_stat(rng: &mut RngStream) -> f64 {
    let (n, d, k, classes) = (2 + rng.below(12), 2 + rng.below(6), 2 + rng.below(6), 2 + rng.below(3));
    let bag = random_bag(n, d, rng);
    let protos = Matrix::from_vec(k, d, random_vec(k * d, rng)).unwrap();
    let tau = 0.5 + 2.0 * rng.uniform();
    let stream = StatStream::new(Codebook::new(protos, tau).unwrap(), 3 + rng.below(8), classes, rng);
    let df = random_vec(classes, rng);
    let (_, cache) = stream.forward(&bag).unwrap();
    let analytic = stat_backward(&stream, &bag, &cache, &df).unwrap().flatten();
    let numeric = finite_diff_grad(
        |x| {
            let mut s = stream.clone();
            s.assign_flat(x);
            dot(&s.logits(&bag).unwrap(), &df)
        },
        &stream.flatten(),
        FD_EPS,
    )
    .unwrap();
    rel_error(&analytic, &numeric)
}

/// Closest any ReLU pre-activation of the cached passes comes to the kink.
fn kink_distance(caches: &[&GcnCache]) -> f64 {
    caches
        .iter()
        .flat_map(|c| c.pre1.as_slice().iter().chain(c.pre2.as_slice()))
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Full residual objective: a random functional of the logits plus the
/// texture hinge between the clean and a shuffled view, masks held fixed.
/// Biases are drawn at random too (they start at zero in training), and a
/// draw is repeated while any pre-activation sits within `KINK_GUARD` of the
/// ReLU or hinge kink, where the objective has no derivative to compare against.
fn check_topo(rng: &mut RngStream) -> f64 {
    loop {
        let (n, d, hidden, classes) = (3 + rng.below(12), 2 + rng.below(5), 2 + rng.below(6), 2 + rng.below(3));
        let bag = random_bag(n, d, rng);
        let k = 1 + rng.below(5);
        let graph = build_knn_graph(&bag.coords, k).unwrap();
        let shuffled = shuffle_coords(&bag, 1.0, rng);
        let sgraph = build_knn_graph(&shuffled.coords, k).unwrap();
        let mut params = GcnParams::new(d, hidden, classes, 0.25, rng).unwrap();
        for b in [&mut params.b1, &mut params.b2, &mut params.b_topo] {
            b.as_mut_slice().iter_mut().for_each(|v| *v = 0.1 * rng.normal());
        }
        let masks = DropoutMasks::draw(n, hidden, 0.25, rng);
        let df = random_vec(classes, rng);
        let margin = 0.3 + 0.7 * rng.uniform();
        let (o, cache) = gcn_forward(&bag.embeddings, &graph, &params, Some(&masks)).unwrap();
        let (s, scache) = gcn_forward(&shuffled.embeddings, &sgraph, &params, Some(&masks)).unwrap();
        let tex = texture_loss(&o.z_topo, &s.z_topo, margin);
        let hinge_arg = margin - (1.0 - tex.similarity);
        if kink_distance(&[&cache, &scache]) < KINK_GUARD || hinge_arg.abs() < KINK_GUARD {
            continue;
        }
        let objective = |p: &GcnParams| {
            let (o, _) = gcn_forward(&bag.embeddings, &graph, p, Some(&masks)).unwrap();
            let (s, _) = gcn_forward(&shuffled.embeddings, &sgraph, p, Some(&masks)).unwrap();
            dot(&o.f_topo, &df) + texture_loss(&o.z_topo, &s.z_topo, margin).loss
        };
        let mut grads = params.zeros_like();
        gcn_backward(&params, &cache, &df, Some(&tex.grad_clean), &mut grads).unwrap();
        gcn_backward(&params, &scache, &vec![0.0; classes], Some(&tex.grad_shuffled), &mut grads).unwrap();
        let numeric = finite_diff_grad(
            |x| {
                let mut q = params.clone();
                q.assign_flat(x);
                objective(&q)
            },
            &params.flatten(),
            FD_EPS,
        )
        .unwrap();
        return rel_error(&grads.flatten(), &numeric);
    }
}

fn check_meanpool(rng: &mut RngStream) -> f64 {
    let (n, d, classes) = (1 + rng.below(12), 2 + rng.below(6), 2 + rng.below(3));
    let bag = random_bag(n, d, rng);
    let model = MeanPool::new(d, 3 + rng.below(8), classes, rng);
    let df = random_vec(classes, rng);
    let (_, cache) = model.forward(&bag).unwrap();
    let analytic = model.backward(&cache, &df).unwrap().flatten();
    let numeric = finite_diff_grad(
        |x| {
            let mut q = model.clone();
            q.assign_flat(x);
            dot(&q.logits(&bag).unwrap(), &df)
        },
        &model.flatten(),
        FD_EPS,
    )
    .unwrap();
    rel_error(&analytic, &numeric)
}

fn check_abmil(rng: &mut RngStream) -> f64 {
    let (n, d, classes) = (1 + rng.below(12), 2 + rng.below(6), 2 + rng.below(3));
    let bag = random_bag(n, d, rng);
    let mut model = AttnMil::new(d, 3 + rng.below(8), classes, rng);
    // Sharper attention than the small initialization gives.
    model.w.scale(5.0);
    let df = random_vec(classes, rng);
    let (_, cache) = model.forward(&bag).unwrap();
    let analytic = model.backward(&bag, &cache, &df).unwrap().flatten();
    let numeric = finite_diff_grad(
        |x| {
            let mut q = model.clone();
            q.assign_flat(x);
            dot(&q.logits(&bag).unwrap(), &df)
        },
        &model.flatten(),
        FD_EPS,
    )
    .unwrap();
    rel_error(&analytic, &numeric)
}

fn check_survival(rng: &mut RngStream) -> f64 {
    let logits: Vec<f64> = (0..4).map(|_| 2.0 * rng.normal()).collect();
    let interval = rng.below(4) as u8;
    let event = rng.bernoulli(0.7);
    let (_, analytic) = survival_loss(&logits, interval, event).unwrap();
    let numeric = finite_diff_grad(|x| survival_loss(x, interval, event).unwrap().0, &logits, FD_EPS).unwrap();
    rel_error(&analytic, &numeric)
}

/// One randomized gradient check returning its relative error.
type GradCheck = fn(&mut RngStream) -> f64;

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut rng = RngStream::new(2024);
    let checks: [(&str, GradCheck); 5] = [
        ("statstream", check_stat),
        ("topostream", check_topo),
        ("meanpool", check_meanpool),
        ("abmil", check_abmil),
        ("survival_loss", check_survival),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, check) in checks {
        let worst = (0..FD_CONFIGS).map(|_| check(&mut rng)).fold(0.0, f64::max);
        pass &= worst <= FD_TOL;
        parts.push(format!("{name} {worst:.1e}"));
    }
    let detail = format!(
        "max rel. error over {FD_CONFIGS} configs each (eps {FD_EPS:.0e}, tol {FD_TOL:.0e}): {} in {:.1?}",
        parts.join(", "),
        t.elapsed()
    );
    outcome("2", pass, detail)
}

// ---------------------------------------------------------------- 3

fn criterion_3(d: &Desk) -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for r in d.b_two_stage.iter().chain(&d.b_no_texture).chain(&d.b_joint) {
        match verify_prop1(&r.log.steps) {
            Ok(rep) => {
                checked += rep.steps_checked;
                violations += rep.violations;
                worst = worst.max(rep.max_relative_violation);
            }
            Err(e) => return outcome("3", false, format!("gate check failed: {e}")),
        }
    }
    let mut inflated = d.b_two_stage[0].log.steps.clone();
    let victim = inflated.iter().position(|s| s.gate_rhs > 0.0).expect("a gated step");
    inflated[victim].gate_lhs = inflated[victim].gate_rhs * 1.01;
    let control = verify_prop1(&inflated).expect("control report");
    let flagged = !control.passes && control.violations == 1;
    outcome(
        "3",
        violations == 0 && checked > 0 && flagged,
        format!(
            "{checked} gated steps, {violations} violations, max (lhs-rhs)/rhs {worst:.2e}; \
             inflated control flagged: {flagged}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn mean_grad_topo(log: &TrainLog, epochs: &[usize]) -> f64 {
    let g: Vec<f64> = log
        .steps
        .iter()
        .filter(|s| epochs.contains(&s.epoch))
        .map(|s| s.grad_topo)
        .collect();
    mean(&g)
}

fn criterion_4(d: &Desk) -> Outcome {
    let stage2_start = |log: &TrainLog| log.epochs.iter().find(|e| e.stage == Stage::Stage2).map(|e| e.epoch);
    let mut full = Vec::new();
    let mut nt = Vec::new();
    let mut joint = Vec::new();
    for ((ts, nx), j) in d.b_two_stage.iter().zip(&d.b_no_texture).zip(&d.b_joint) {
        let s = stage2_start(&ts.log).expect("stage 2 epochs");
        full.push(mean_grad_topo(&ts.log, &[s, s + 1]));
        let s = stage2_start(&nx.log).expect("stage 2 epochs");
        nt.push(mean_grad_topo(&nx.log, &[s, s + 1]));
        let last = j.log.epochs.len();
        joint.push(mean_grad_topo(&j.log, &[last - 2, last - 1]));
        assert_eq!(ts.log.steps.len(), j.log.steps.len(), "matched step count");
    }
    let factor_full = mean(&full) / mean(&joint);
    let factor_nt = mean(&nt) / mean(&joint);
    outcome(
        "4",
        factor_full >= 2.0 && factor_nt < factor_full,
        format!(
            "mean |grad_topo|: first 2 stage-2 epochs {:.3e} (no_texture {:.3e}), last 2 joint epochs {:.3e}; \
             factor {factor_full:.2} (no_texture {factor_nt:.2})",
            mean(&full),
            mean(&nt),
            mean(&joint)
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5(d: &Desk) -> Outcome {
    let test = &d.b.test;
    let shuffled = shuffled_dataset(test, 1.0, 99);
    let mut baseline_exact = true;
    let mut deltas = Vec::new();
    for r in d.b_abmil.iter().chain(&d.b_meanpool) {
        let clean = r.state.predict(&test.bags).unwrap();
        let shuf = r.state.predict(&shuffled.bags).unwrap();
        baseline_exact &= clean == shuf;
        let delta = evaluate(&r.state, test).unwrap() - evaluate(&r.state, &shuffled).unwrap();
        baseline_exact &= delta == 0.0;
        deltas.push(delta);
    }
    let mut drops = Vec::new();
    let mut monotone = true;
    let mut curves: Vec<AuditCurve> = Vec::new();
    for r in &d.b_two_stage {
        let curve = shuffle_audit(&r.state, test, &DEFAULT_FRACTIONS, 3, 1000 + r.seed, "two_stage").unwrap();
        drops.push(curve.endpoint_drop());
        monotone &= curve.is_nonincreasing_within_std();
        curves.push(curve);
    }
    let nt_drops: Vec<f64> = d
        .b_no_texture
        .iter()
        .map(|r| {
            shuffle_audit(&r.state, test, &DEFAULT_FRACTIONS, 3, 1000 + r.seed, "no_texture")
                .unwrap()
                .endpoint_drop()
        })
        .collect();
    let drop_ok = drops.iter().all(|&x| x >= 0.2);
    let means: Vec<String> = curves.iter().map(|c| fmt(&c.mean)).collect();
    outcome(
        "5",
        baseline_exact && drop_ok && monotone,
        format!(
            "baseline AUC deltas {} (bitwise identical logits: {baseline_exact}); two_stage drops {} \
             curves {} nonincreasing within pooled std: {monotone}; no_texture drops {} (info)",
            fmt(&deltas),
            fmt(&drops),
            means.join(" "),
            fmt(&nt_drops)
        ),
    )
}

// ---------------------------------------------------------------- 6

fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn c_index_oracle(risks: &[f64], times: &[f64], events: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..risks.len() {
        for j in 0..risks.len() {
            if events[i] && times[i] < times[j] {
                den += 1.0;
                if risks[i] > risks[j] {
                    num += 1.0;
                } else if risks[i] == risks[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

fn dice_oracle(scores: &[f64], truth: &[bool], t: f64) -> f64 {
    let p: BTreeSet<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
    let q: BTreeSet<usize> = (0..truth.len()).filter(|&i| truth[i]).collect();
    if p.is_empty() && q.is_empty() {
        return 1.0;
    }
    2.0 * p.intersection(&q).count() as f64 / (p.len() + q.len()) as f64
}

/// Flood fill over the undirected KNN graph restricted to `active`.
fn flood(graph: &SpatialGraph, active: &[bool]) -> Vec<Vec<usize>> {
    let n = active.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for &j in graph.neighbors(i) {
            adj[i].push(j as usize);
            adj[j as usize].push(i);
        }
    }
    let mut seen = vec![false; n];
    let mut comps = Vec::new();
    for s in 0..n {
        if !active[s] || seen[s] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(u) = queue.pop_front() {
            comp.push(u);
            for &v in &adj[u] {
                if active[v] && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        comps.push(comp);
    }
    comps
}

fn froc_oracle(bags: &[ScoredBag], points: &[f64]) -> f64 {
    let mut lesions = Vec::new();
    for b in bags {
        let truth = b.truth.as_ref().unwrap();
        lesions.push(flood(&b.graph, truth));
    }
    let total: usize = lesions.iter().map(Vec::len).sum();
    let mut levels: Vec<f64> = bags.iter().flat_map(|b| b.normalized.clone()).collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let mut curve = vec![(0.0, 0.0)];
    for t in levels {
        let mut fps = 0usize;
        let mut hit = 0usize;
        for (b, bag) in bags.iter().enumerate() {
            let active: Vec<bool> = bag.normalized.iter().map(|&s| s >= t).collect();
            let mut found = vec![false; lesions[b].len()];
            for comp in flood(&bag.graph, &active) {
                // Highest score, lowest index on ties.
                let top = *comp
                    .iter()
                    .max_by(|&&x, &&y| bag.normalized[x].total_cmp(&bag.normalized[y]).then(y.cmp(&x)))
                    .unwrap();
                match lesions[b].iter().position(|l| l.contains(&top)) {
                    Some(l) => found[l] = true,
                    None => fps += 1,
                }
            }
            hit += found.iter().filter(|&&f| f).count();
        }
        curve.push((fps as f64 / bags.len() as f64, hit as f64 / total as f64));
    }
    let sens: Vec<f64> = points
        .iter()
        .map(|&p| {
            curve
                .iter()
                .filter(|c| c.0 <= p)
                .fold((f64::NEG_INFINITY, 0.0), |best, &c| {
                    if c.0 > best.0 || (c.0 == best.0 && c.1 > best.1) {
                        c
                    } else {
                        best
                    }
                })
                .1
        })
        .collect();
    sens.iter().sum::<f64>() / points.len() as f64
}

fn criterion_6() -> Outcome {
    let mut rng = RngStream::new(6);
    let mut mismatches = Vec::new();
    for trial in 0..50 {
        let n = 2 + rng.below(99);
        let levels = 1 + rng.below(20);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        if auc(&scores, &labels).unwrap() != auc_oracle(&scores, &labels) {
            mismatches.push(format!("auc#{trial}"));
        }
        let times: Vec<f64> = (0..n).map(|_| rng.below(30) as f64).collect();
        let mut events: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.6)).collect();
        let risks: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64).collect();
        events[0] = true;
        let comparable = (0..n).any(|i| events[i] && times.iter().any(|&t| t > times[i]));
        let agrees = match c_index(&risks, &times, &events) {
            Ok(v) => comparable && v == c_index_oracle(&risks, &times, &events),
            Err(_) => !comparable,
        };
        if !agrees {
            mismatches.push(format!("c_index#{trial}"));
        }
        let n_bags = 1 + rng.below(4);
        let bags: Vec<ScoredBag> = (0..n_bags)
            .map(|b| {
                let m = 1 + rng.below(50);
                let coords = Matrix::from_vec(m, 2, (0..2 * m).map(|_| rng.uniform()).collect()).unwrap();
                let graph = build_knn_graph(&coords, 1 + rng.below(6)).unwrap();
                let raw: Vec<f64> = (0..m).map(|_| rng.below(levels + 1) as f64).collect();
                let mut truth: Vec<bool> = (0..m).map(|_| rng.bernoulli(0.25)).collect();
                if b == 0 {
                    truth[0] = true;
                }
                ScoredBag::new(b as u32, raw, Some(truth), graph)
            })
            .collect();
        let t = rng.below(21) as f64 / 20.0;
        for b in &bags {
            if dice(b, t).unwrap() != dice_oracle(&b.normalized, b.truth.as_ref().unwrap(), t) {
                mismatches.push(format!("dice#{trial}"));
            }
        }
        if froc(&bags, &FROC_POINTS).unwrap().average != froc_oracle(&bags, &FROC_POINTS) {
            mismatches.push(format!("froc#{trial}"));
        }
    }
    outcome(
        "6",
        mismatches.is_empty(),
        format!(
            "auc, c_index, dice, froc vs enumeration oracles on 50 random instances: {} mismatches {:?}",
            mismatches.len(),
            mismatches
        ),
    )
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let values = [texture_hinge(1.0, 0.3), texture_hinge(0.7, 0.3), texture_hinge(-1.0, 0.3)];
    let same = texture_loss(&[1.0, 0.0], &[2.0, 0.0], 0.3).loss;
    let opposite = texture_loss(&[1.0, 0.0], &[-3.0, 0.0], 0.3).loss;
    let pass = values == [0.3, 0.0, 0.0] && same == 0.3 && opposite == 0.0;
    outcome(
        "7",
        pass,
        format!("hinge(sim=1, 0.7, -1; m=0.3) = {values:?}; via vectors: parallel {same}, opposite {opposite}"),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8(d: &Desk) -> Outcome {
    let model = &d.b_two_stage[0].state;
    let report = match localize(model, &d.b.val.bags, &d.b.test.bags, 1) {
        Ok(r) => r,
        Err(e) => return outcome("8", false, format!("localization failed: {e}")),
    };
    let refusal = localize(&d.b_stat[0].state, &d.b.val.bags, &d.b.test.bags, 1);
    let refused = matches!(refusal, Err(Error::NoPatchScores(_)));
    let gap = report.mean_key_score - report.mean_background_score;
    outcome(
        "8",
        report.dice_mean >= 0.5 && report.froc.average >= 0.5 && refused,
        format!(
            "two_stage seed 0: threshold {:.2}, mean test Dice {:.3}, FROC {:.3} (per point {}); \
             key vs background score gap {gap:.3}; stat_only refused patch scores: {refused}",
            report.threshold,
            report.dice_mean,
            report.froc.average,
            fmt(&report.froc.sensitivities)
        ),
    )
}

// ---------------------------------------------------------------- 9

fn run_twice(args: &[&str]) -> Result<bool, String> {
    let out_pos = args.iter().position(|a| *a == "--out").expect("--out flag");
    let out = Path::new(args[out_pos + 1]);
    let mut manifests: Vec<RunManifest> = Vec::new();
    for _ in 0..2 {
        if out.exists() {
            std::fs::remove_dir_all(out).map_err(|e| e.to_string())?;
        }
        let full: Vec<&str> = std::iter::once("restopo").chain(args.iter().copied()).collect();
        manifests.push(run_from(full).map_err(|e| format!("{} failed: {e}", args[0]))?);
    }
    let same = manifests[0] == manifests[1];
    let bytes = std::fs::read(out.join("manifest.json")).map_err(|e| e.to_string())?;
    Ok(same && !bytes.is_empty())
}

fn criterion_9() -> Outcome {
    let t = Instant::now();
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let (data, run, ev, au, lo, ab, rep) = (p("data"), p("run"), p("eval"), p("audit"), p("loc"), p("ablate"), p("report"));
    let (train, val, test) = (format!("{data}/b_train.rtmb"), format!("{data}/b_val.rtmb"), format!("{data}/b_test.rtmb"));
    let model = format!("{run}/model.rtmc");
    let small = [
        "stage1_epochs=2",
        "stage2_epochs=2",
        "hidden=16",
        "prototypes=4",
        "kmeans_sample=500",
    ];
    let mut commands: Vec<Vec<String>> = vec![
        vec!["gen", "--bench", "a,b", "--n", "60", "--seed", "7", "--out", &data, "n_val=20", "n_test=20", "dim=16"]
            .into_iter()
            .map(String::from)
            .collect(),
    ];
    let mut train_cmd: Vec<String> = ["train", "--train", &train, "--val", &val, "--test", &test, "--out", &run]
        .into_iter()
        .map(String::from)
        .collect();
    train_cmd.extend(small.iter().map(|s| s.to_string()));
    commands.push(train_cmd);
    for c in [
        vec!["eval", "--model", &model, "--data", &test, "--out", &ev],
        vec!["audit-shuffle", "--model", &model, "--data", &test, "--seeds", "2", "--out", &au],
        vec!["localize", "--model", &model, "--val", &val, "--test", &test, "--out", &lo],
    ] {
        commands.push(c.into_iter().map(String::from).collect());
    }
    let mut ablate: Vec<String> = [
        "ablate", "--train", &train, "--val", &val, "--test", &test, "--variants", "two_stage,meanpool", "--seeds",
        "2", "--out", &ab,
    ]
    .into_iter()
    .map(String::from)
    .collect();
    ablate.extend(small.iter().map(|s| s.to_string()));
    commands.push(ablate);
    commands.push(
        ["report", "--out", &rep, &run, &au, &ab]
            .into_iter()
            .map(String::from)
            .collect(),
    );
    let mut results = Vec::new();
    let mut pass = true;
    for c in &commands {
        let args: Vec<&str> = c.iter().map(String::as_str).collect();
        match run_twice(&args) {
            Ok(same) => {
                pass &= same;
                results.push(format!("{} {}", c[0], if same { "identical" } else { "DIFFERS" }));
            }
            Err(e) => {
                pass = false;
                results.push(e);
            }
        }
    }
    outcome(
        "9",
        pass,
        format!("reruns with identical flags, manifest hashes: {} ({:.1?})", results.join(", "), t.elapsed()),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let mut rng = RngStream::new(10);
    let mut perm_fail = 0;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (n, d) = (2 + rng.below(60), 2 + rng.below(10));
        let bag = random_bag(n, d, &mut rng);
        let protos = Matrix::from_vec(6, d, random_vec(6 * d, &mut rng)).unwrap();
        let stat = StatStream::new(Codebook::new(protos, 1.0).unwrap(), 16, 2, &mut rng);
        let mp = MeanPool::new(d, 16, 2, &mut rng);
        let ab = AttnMil::new(d, 16, 2, &mut rng);
        let reports = [
            certify_permutation_invariance(|b: &Bag| stat.logits(b), &bag, 5, &mut rng).unwrap(),
            certify_permutation_invariance(|b: &Bag| mp.logits(b), &bag, 5, &mut rng).unwrap(),
            certify_permutation_invariance(|b: &Bag| ab.logits(b), &bag, 5, &mut rng).unwrap(),
        ];
        for r in reports {
            worst = worst.max(r.max_abs_deviation);
            perm_fail += (!r.passes) as usize;
        }
    }
    let mut rigid_fail = 0;
    let mut sets = 0;
    while sets < 100 {
        let n = 3 + rng.below(60);
        let k = 1 + rng.below(10);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.uniform(), rng.uniform()]).collect();
        if !distance_gaps_clear(&pts, 1e-6) {
            continue;
        }
        sets += 1;
        let theta = std::f64::consts::TAU * rng.uniform();
        let scale = 0.1 + 10.0 * rng.uniform();
        let (tx, ty) = (10.0 * rng.normal(), 10.0 * rng.normal());
        let moved: Vec<f64> = pts
            .iter()
            .flat_map(|p| {
                let x = scale * (theta.cos() * p[0] - theta.sin() * p[1]) + tx;
                let y = scale * (theta.sin() * p[0] + theta.cos() * p[1]) + ty;
                [x, y]
            })
            .collect();
        let a = build_knn_graph(&Matrix::from_vec(n, 2, pts.concat()).unwrap(), k).unwrap();
        let b = build_knn_graph(&Matrix::from_vec(n, 2, moved).unwrap(), k).unwrap();
        let ea: BTreeSet<(u32, u32)> = a.edges().into_iter().collect();
        let eb: BTreeSet<(u32, u32)> = b.edges().into_iter().collect();
        rigid_fail += (ea != eb) as usize;
    }
    outcome(
        "10",
        perm_fail == 0 && rigid_fail == 0,
        format!(
            "permutation invariance on 100 bags x 3 models: {perm_fail} failures (max deviation {worst:.1e}, tol 1e-10); \
             rigid motions on 100 point sets: {rigid_fail} edge-set mismatches"
        ),
    )
}

/// True when all pairwise squared distances differ by more than `rel`
/// relative to their size, so neighbor rankings survive rounding.
fn distance_gaps_clear(pts: &[[f64; 2]], rel: f64) -> bool {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2));
        }
    }
    d.sort_by(f64::total_cmp);
    d.windows(2).all(|w| w[1] - w[0] > rel * w[1])
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut outcomes = vec![criterion_2(), criterion_6(), criterion_7(), criterion_10(), criterion_9()];
    note("desk-scale training runs for criteria 1, 3, 4, 5, 8");
    let desk = desk_runs();
    outcomes.extend([
        criterion_1(&desk),
        criterion_3(&desk),
        criterion_4(&desk),
        criterion_5(&desk),
        criterion_8(&desk),
    ]);
    outcomes.sort_by_key(|o| o.id.parse::<u32>().unwrap());
    for o in &outcomes {
        println!("criterion {:>2}: {}  {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.0?}",
        outcomes.len(),
        start.elapsed()
    );
    if passed == outcomes.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
