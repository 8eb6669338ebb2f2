use rayon::prelude::*;

use crate::bagstore::{Bag, BagDataset, TaskKind};
use crate::baselines::{AttnMil, MeanPool};
use crate::error::{Error, Result};
use crate::numkit::{accumulate, cosine_lr, optimizer_for, step_params, Matrix, Params, RngStream};
use crate::statstream::{init_codebook, Codebook, StatStream};
use crate::topostream::{
    build_knn_graph, gcn_backward, gcn_forward, shuffled_forward, texture_loss, DropoutMasks, GcnParams, SpatialGraph,
};
use crate::trainer::{
    evaluate, task_loss, Composition, EpochRecord, GateForm, ModelState, Stage, StepRecord, TrainConfig, TrainLog,
    Variant, MULTI_LR_FACTOR,
};

const TAG_INIT: u64 = 1;
const TAG_KMEANS: u64 = 2;
const TAG_TOPO_INIT: u64 = 3;
const TAG_EPOCH: u64 = 1 << 20;
const TAG_STEP: u64 = 1 << 40;

fn stage_tag(stage: Stage) -> u64 {
    match stage {
        Stage::Stage1 => 11,
        Stage::Stage2 => 12,
        Stage::Single => 13,
    }
}

/// One optimization phase over a fixed stream configuration.
#[derive(Clone, Copy, Debug)]
struct Phase {
    stage: Stage,
    epochs: usize,
    use_topo: bool,
    train_comp: bool,
    train_topo: bool,
    texture_weight: f64,
    topo_lr_scale: f64,
}

fn instance_sample(train: &BagDataset, amount: usize, rng: &mut RngStream) -> Result<Matrix> {
    let total: usize = train.bags.iter().map(Bag::len).sum();
    let mut owner = Vec::with_capacity(total);
    for (b, bag) in train.bags.iter().enumerate() {
        owner.extend((0..bag.len()).map(|i| (b, i)));
    }
    let mut picks = rng.sample_indices(total, amount.min(total));
    picks.sort_unstable();
    let mut data = Vec::with_capacity(picks.len() * train.dim);
    for p in picks.iter() {
        let (b, i) = owner[*p];
        data.extend_from_slice(train.bags[b].embeddings.row(i));
    }
    Matrix::from_vec(picks.len(), train.dim, data)
}

fn new_topo(dim: usize, classes: usize, cfg: &TrainConfig) -> Result<GcnParams> {
    let mut rng = RngStream::new(cfg.seed).derive(TAG_TOPO_INIT);
    let mut p = GcnParams::new(dim, cfg.topo_width(), classes, cfg.dropout, &mut rng)?;
    // The residual starts as an additive identity on top of the base logits.
    p.zero_head();
    Ok(p)
}

/// Freshly initialized model for `cfg.variant`: prototypes seeded by
/// minibatch k-means on training instances, residual head at zero.
pub fn init_model(train: &BagDataset, cfg: &TrainConfig) -> Result<ModelState> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    let classes = train.n_classes();
    let root = RngStream::new(cfg.seed);
    let mut init_rng = root.derive(TAG_INIT);
    let dim = train.dim;
    let comp = match cfg.variant {
        Variant::TopoOnly => None,
        Variant::MeanPool => Some(Composition::MeanPool(MeanPool::new(dim, cfg.hidden, classes, &mut init_rng))),
        Variant::AttnMil => Some(Composition::AttnMil(AttnMil::new(dim, cfg.hidden, classes, &mut init_rng))),
        _ => {
            let mut km_rng = root.derive(TAG_KMEANS);
            let sample = instance_sample(train, cfg.kmeans_sample, &mut km_rng)?;
            let seeded = init_codebook(&sample, cfg.prototypes, &mut km_rng)?;
            let codebook = Codebook::new(seeded.prototypes, cfg.tau_init)?;
            Some(Composition::Stat(StatStream::new(codebook, cfg.hidden, classes, &mut init_rng)))
        }
    };
    let topo = if cfg.variant.has_topo() {
        Some(new_topo(dim, classes, cfg)?)
    } else {
        None
    };
    Ok(ModelState {
        variant: cfg.variant,
        task: train.task,
        classes,
        k_knn: cfg.k_knn,
        comp,
        topo,
        comp_frozen: false,
        topo_frozen: false,
        comp_opt: None,
        topo_opt: None,
    })
}

struct BagResult {
    loss_cls: f64,
    loss_texture: f64,
    comp_grad: Option<Composition>,
    topo_grad: Option<GcnParams>,
    topo_cls: Option<GcnParams>,
    resid_sq: f64,
    fgrad_sq: f64,
    form: GateForm,
    degenerate: bool,
}

struct StepContext<'a> {
    state: &'a ModelState,
    cfg: &'a TrainConfig,
    phase: Phase,
    cached_comp: Option<&'a [Vec<f64>]>,
    graphs: Option<&'a [SpatialGraph]>,
}

fn bag_step(ctx: &StepContext<'_>, index: usize, bag: &Bag, rng: &mut RngStream) -> Result<BagResult> {
    let state = ctx.state;
    let phase = ctx.phase;
    let (mut logits, comp_cache) = match (&state.comp, ctx.cached_comp) {
        (Some(c), _) if phase.train_comp => {
            let (l, cache) = c.forward(bag)?;
            (l, Some(cache))
        }
        (Some(_), Some(cached)) => (cached[index].clone(), None),
        (Some(c), None) => (c.logits(bag)?, None),
        (None, _) => (vec![0.0; state.classes], None),
    };
    let topo = if phase.use_topo { state.topo.as_ref() } else { None };
    let mut masks = None;
    let mut topo_fwd = None;
    if let Some(p) = topo {
        let graph = match ctx.graphs {
            Some(g) => g[index].clone(),
            None => build_knn_graph(&bag.coords, state.k_knn)?,
        };
        if phase.train_topo && p.dropout > 0.0 {
            masks = Some(DropoutMasks::draw(bag.len(), p.hidden_dim(), p.dropout, rng));
        }
        let (out, cache) = gcn_forward(&bag.embeddings, &graph, p, masks.as_ref())?;
        for (l, f) in logits.iter_mut().zip(&out.f_topo) {
            *l += f;
        }
        topo_fwd = Some((out, cache));
    }
    let (loss_cls, dlogits) = task_loss(&logits, &bag.label)?;
    let binary = state.task == TaskKind::Classification && state.classes == 2;
    let resid_sq = if binary {
        dlogits[1] * dlogits[1]
    } else {
        dlogits.iter().map(|v| v * v).sum()
    };
    let comp_grad = match (&state.comp, &comp_cache) {
        (Some(c), Some(cache)) => Some(c.backward(bag, cache, &dlogits)?),
        _ => None,
    };
    let mut result = BagResult {
        loss_cls,
        loss_texture: 0.0,
        comp_grad,
        topo_grad: None,
        topo_cls: None,
        resid_sq,
        fgrad_sq: 0.0,
        form: GateForm::None,
        degenerate: false,
    };
    let (Some(p), Some((out, cache))) = (topo, topo_fwd) else {
        return Ok(result);
    };
    if !phase.train_topo {
        return Ok(result);
    }
    let mut cls = p.zeros_like();
    gcn_backward(p, &cache, &dlogits, None, &mut cls)?;
    let mut total = cls.clone();
    if phase.texture_weight > 0.0 {
        let (sout, scache) = shuffled_forward(bag, p, state.k_knn, masks.as_ref(), rng)?;
        let tex = texture_loss(&out.z_topo, &sout.z_topo, ctx.cfg.margin);
        result.loss_texture = tex.loss;
        result.degenerate = tex.degenerate || bag.len() <= 2;
        if tex.loss > 0.0 {
            let zero = vec![0.0; state.classes];
            let lam = phase.texture_weight;
            let gc: Vec<f64> = tex.grad_clean.iter().map(|g| lam * g).collect();
            let gs: Vec<f64> = tex.grad_shuffled.iter().map(|g| lam * g).collect();
            gcn_backward(p, &cache, &zero, Some(&gc), &mut total)?;
            gcn_backward(p, &scache, &zero, Some(&gs), &mut total)?;
        }
    }
    if ctx.cfg.log_prop1 {
        if binary {
            let mut g = p.zeros_like();
            gcn_backward(p, &cache, &[-1.0, 1.0], None, &mut g)?;
            result.fgrad_sq = g.norm().powi(2);
            result.form = GateForm::Binary;
        } else {
            for c in 0..state.classes {
                let mut unit = vec![0.0; state.classes];
                unit[c] = 1.0;
                let mut g = p.zeros_like();
                gcn_backward(p, &cache, &unit, None, &mut g)?;
                result.fgrad_sq += g.norm().powi(2);
            }
            result.form = GateForm::Extension;
        }
    }
    result.topo_grad = Some(total);
    result.topo_cls = Some(cls);
    Ok(result)
}

fn sum_into<P: Params + Clone>(acc: &mut Option<P>, g: Option<P>) {
    if let Some(g) = g {
        match acc {
            Some(a) => accumulate(a, &g, 1.0),
            None => *acc = Some(g),
        }
    }
}

fn run_phase(
    state: &mut ModelState,
    train: &BagDataset,
    val: Option<&BagDataset>,
    cfg: &TrainConfig,
    phase: Phase,
    log: &mut TrainLog,
) -> Result<()> {
    if phase.epochs == 0 {
        return Ok(());
    }
    let n = train.len();
    if n == 0 {
        return Err(Error::EmptyPartition("train"));
    }
    let batch = cfg.batch_size;
    let steps_per_epoch = n.div_ceil(batch);
    let total_steps = phase.epochs * steps_per_epoch;

    let cached_comp = match &state.comp {
        Some(c) if !phase.train_comp => Some(
            train
                .bags
                .par_iter()
                .map(|b| c.logits(b))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };
    let graphs = if phase.use_topo && state.topo.is_some() {
        Some(
            train
                .bags
                .par_iter()
                .map(|b| build_knn_graph(&b.coords, state.k_knn))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let adam = cfg.adam();
    state.comp_frozen = state.comp.is_some() && !phase.train_comp;
    state.topo_frozen = state.topo.is_some() && !(phase.use_topo && phase.train_topo);
    state.comp_opt = match &state.comp {
        Some(c) if phase.train_comp => Some(optimizer_for(c, adam)),
        _ => None,
    };
    state.topo_opt = match &state.topo {
        Some(t) if phase.use_topo && phase.train_topo => Some(optimizer_for(t, adam)),
        _ => None,
    };

    let root = RngStream::new(cfg.seed).derive(stage_tag(phase.stage));
    let first_epoch = log.next_epoch();
    let mut step_index = log.next_step();
    let mut local_step = 0usize;
    for e in 0..phase.epochs {
        let epoch = first_epoch + e;
        let mut order: Vec<usize> = (0..n).collect();
        root.derive(TAG_EPOCH + e as u64).shuffle(&mut order);
        let mut sum_cls = 0.0;
        let mut sum_tex = 0.0;
        for chunk in order.chunks(batch) {
            let lr = cosine_lr(local_step, total_steps, cfg.lr)?;
            let step_root = root.derive(TAG_STEP + local_step as u64);
            let ctx = StepContext {
                state,
                cfg,
                phase,
                cached_comp: cached_comp.as_deref(),
                graphs: graphs.as_deref(),
            };
            let results: Vec<BagResult> = if chunk.len() == 1 {
                let mut rng = step_root.derive(0);
                vec![bag_step(&ctx, chunk[0], &train.bags[chunk[0]], &mut rng)?]
            } else {
                chunk
                    .par_iter()
                    .enumerate()
                    .map(|(j, &i)| {
                        let mut rng = step_root.derive(j as u64);
                        bag_step(&ctx, i, &train.bags[i], &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let scale = 1.0 / results.len() as f64;
            let mut loss_cls = 0.0;
            let mut loss_tex = 0.0;
            let mut resid = 0.0;
            let mut fgrad = 0.0;
            let mut degenerate = 0;
            let mut form = GateForm::None;
            let mut comp_grad: Option<Composition> = None;
            let mut topo_grad: Option<GcnParams> = None;
            let mut topo_cls: Option<GcnParams> = None;
            for r in results {
                loss_cls += r.loss_cls;
                loss_tex += r.loss_texture;
                resid += r.resid_sq;
                fgrad += r.fgrad_sq;
                degenerate += r.degenerate as usize;
                form = r.form;
                sum_into(&mut comp_grad, r.comp_grad);
                sum_into(&mut topo_grad, r.topo_grad);
                sum_into(&mut topo_cls, r.topo_cls);
            }
            loss_cls *= scale;
            loss_tex *= scale;
            if !(loss_cls.is_finite() && loss_tex.is_finite()) {
                return Err(Error::Diverged(step_index));
            }
            let mut grad_stat = 0.0;
            if let (Some(mut g), Some(c), Some(opt)) = (comp_grad, state.comp.as_mut(), state.comp_opt.as_mut()) {
                g.tensors_mut().into_iter().for_each(|m| m.scale(scale));
                grad_stat = g.norm();
                step_params(c, &g, opt, lr)?;
            }
            let mut grad_topo = 0.0;
            if let (Some(mut g), Some(t), Some(opt)) = (topo_grad, state.topo.as_mut(), state.topo_opt.as_mut()) {
                g.tensors_mut().into_iter().for_each(|m| m.scale(scale));
                grad_topo = g.norm();
                step_params(t, &g, opt, lr * phase.topo_lr_scale)?;
            }
            let residual_rms = (resid * scale).sqrt();
            let (gate_lhs, gate_rhs) = match (topo_cls, form) {
                (Some(g), f) if f != GateForm::None => (g.norm() * scale, residual_rms * (fgrad * scale).sqrt()),
                _ => (0.0, 0.0),
            };
            if !(grad_stat.is_finite() && grad_topo.is_finite()) {
                return Err(Error::Diverged(step_index));
            }
            log.steps.push(StepRecord {
                step: step_index,
                epoch,
                stage: phase.stage,
                lr,
                loss_cls,
                loss_texture: loss_tex,
                grad_stat,
                grad_topo,
                residual_rms,
                gate_lhs,
                gate_rhs,
                gate_form: form,
                degenerate,
            });
            sum_cls += loss_cls;
            sum_tex += loss_tex;
            step_index += 1;
            local_step += 1;
        }
        let val_metric = match val {
            Some(v) if !v.is_empty() => evaluate(state, v)?,
            _ => f64::NAN,
        };
        log.epochs.push(EpochRecord {
            epoch,
            stage: phase.stage,
            loss_cls: sum_cls / steps_per_epoch as f64,
            loss_texture: sum_tex / steps_per_epoch as f64,
            val_metric,
        });
    }
    Ok(())
}

fn stage1_phase(cfg: &TrainConfig) -> Phase {
    Phase {
        stage: Stage::Stage1,
        epochs: cfg.stage1_epochs,
        use_topo: false,
        train_comp: true,
        train_topo: false,
        texture_weight: 0.0,
        topo_lr_scale: 1.0,
    }
}

/// Trains only the statistical stream with cross-entropy. Any topological
/// parameters present are left bitwise untouched.
pub fn train_stage1(train: &BagDataset, val: Option<&BagDataset>, cfg: &TrainConfig) -> Result<(ModelState, TrainLog)> {
    let mut state = init_model(train, cfg)?;
    if state.stat().is_none() {
        return Err(Error::Config(format!("variant {} has no statistical stream", cfg.variant)));
    }
    let mut log = TrainLog::default();
    run_phase(&mut state, train, val, cfg, stage1_phase(cfg), &mut log)?;
    Ok((state, log))
}

/// Freezes the statistical stream, caches its logits, and fits the
/// topological residual on the combined loss with the texture term. The
/// step and epoch counters continue from `log`.
pub fn train_stage2(
    train: &BagDataset,
    val: Option<&BagDataset>,
    cfg: &TrainConfig,
    mut state: ModelState,
    mut log: TrainLog,
) -> Result<(ModelState, TrainLog)> {
    if state.stat().is_none() {
        return Err(Error::Config("stage 2 needs a stage-1 statistical stream".into()));
    }
    if state.topo.is_none() {
        state.topo = Some(new_topo(train.dim, state.classes, cfg)?);
    }
    let phase = Phase {
        stage: Stage::Stage2,
        epochs: cfg.stage2_epochs_for(state.task),
        use_topo: true,
        train_comp: false,
        train_topo: true,
        texture_weight: cfg.effective_texture_weight(),
        topo_lr_scale: cfg.topo_width_factor(),
    };
    run_phase(&mut state, train, val, cfg, phase, &mut log)?;
    Ok((state, log))
}

/// Runs the protocol registered under `cfg.variant`. Single-phase variants
/// get the same epoch budget as both stages together.
pub fn train_variant(train: &BagDataset, val: Option<&BagDataset>, cfg: &TrainConfig) -> Result<(ModelState, TrainLog)> {
    if cfg.variant.is_two_stage() {
        let (state, log) = train_stage1(train, val, cfg)?;
        return train_stage2(train, val, cfg, state, log);
    }
    let mut state = init_model(train, cfg)?;
    let epochs = cfg.stage1_epochs + cfg.stage2_epochs_for(train.task);
    let has_topo = state.topo.is_some();
    let phase = Phase {
        stage: Stage::Single,
        epochs,
        use_topo: has_topo,
        train_comp: state.comp.is_some(),
        train_topo: has_topo,
        texture_weight: if has_topo { cfg.effective_texture_weight() } else { 0.0 },
        topo_lr_scale: cfg.topo_width_factor() * if cfg.variant == Variant::MultiLr { MULTI_LR_FACTOR } else { 1.0 },
    };
    let mut log = TrainLog::default();
    run_phase(&mut state, train, val, cfg, phase, &mut log)?;
    Ok((state, log))
}
