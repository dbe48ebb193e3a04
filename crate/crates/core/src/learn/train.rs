use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::{multinomial_loss_from_logits, siamese_loss};
use super::optim::Adadelta;
use super::pairs::{GroundTruth, PairSampler, PairSet};
use super::LearnError;
use crate::mesh::Mesh;
use crate::net::{Activation, LayerKind, Model, ShapeContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Descriptor,
    Correspondence,
    Retrieval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the negative term of the siamese loss.
    pub gamma: f64,
    pub margin: f64,
    pub max_updates: usize,
    /// Positive (and as many negative) vertex pairs per descriptor update.
    pub pairs_per_batch: usize,
    /// Vertices per correspondence update.
    pub vertices_per_batch: usize,
    /// Positive (and as many negative) shape pairs per retrieval update.
    pub shape_pairs_per_batch: usize,
    pub seed: u64,
    pub decay: f64,
    pub epsilon: f64,
    /// Validation loss is evaluated every this many updates and after the last.
    pub validate_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            margin: 1.0,
            max_updates: 2500,
            pairs_per_batch: 32,
            vertices_per_batch: 256,
            shape_pairs_per_batch: 4,
            seed: 0,
            decay: 0.95,
            epsilon: 1e-6,
            validate_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(LearnError::InvalidConfig(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.margin >= 0.0) {
            return Err(LearnError::InvalidConfig(format!("negative margin {}", self.margin)));
        }
        if !(0.0..1.0).contains(&self.decay) || !(self.epsilon > 0.0) {
            return Err(LearnError::InvalidConfig("Adadelta needs decay in [0, 1) and epsilon > 0".into()));
        }
        if self.validate_every == 0 {
            return Err(LearnError::InvalidConfig("validate_every must be positive".into()));
        }
        Ok(())
    }
}

/// One training or validation shape.
#[derive(Debug, Clone, Copy)]
pub struct TrainShape<'a> {
    pub features: ArrayView2<'a, f64>,
    pub ctx: ShapeContext<'a>,
    pub mesh: &'a Mesh,
    /// Per-vertex reference index (descriptor and correspondence tasks).
    pub ground_truth: Option<&'a [usize]>,
    /// Class label (retrieval task).
    pub label: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainData<'a> {
    pub train: Vec<TrainShape<'a>>,
    pub validation: Vec<TrainShape<'a>>,
    /// Geodesic disc radius; negatives within twice this are rejected.
    pub rho0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub model: Model,
    pub history: Vec<LossRecord>,
    /// Update after which the retained parameters were taken (0 = initial).
    pub best_step: Option<usize>,
}

/// Loss and parameter gradient over a batch.
struct Batch {
    loss: f64,
    grad: Vec<f64>,
}

fn ground_truths<'a>(shapes: &[TrainShape<'a>]) -> Result<Vec<GroundTruth<'a>>, LearnError> {
    shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let to_reference = s
                .ground_truth
                .ok_or_else(|| LearnError::InsufficientGroundTruth(format!("shape {i} has no ground truth")))?;
            Ok(GroundTruth { mesh: s.mesh, to_reference })
        })
        .collect()
}

fn check_head(model: &Model, task: Task, data: &TrainData) -> Result<(), LearnError> {
    let kinds: Vec<LayerKind> = model.layers().iter().map(|l| l.kind).collect();
    let has_cov = kinds.contains(&LayerKind::Cov);
    let softmax_last = kinds.last() == Some(&LayerKind::Softmax);
    for s in data.train.iter().chain(&data.validation) {
        if s.features.ncols() != model.input_dim() {
            return Err(LearnError::DimensionMismatch {
                expected: model.input_dim(),
                found: s.features.ncols(),
            });
        }
    }
    match task {
        Task::Descriptor => {
            if has_cov || softmax_last {
                return Err(LearnError::HeadMismatch("descriptor training needs a per-vertex output".into()));
            }
            if data.train.len() < 2 {
                return Err(LearnError::InsufficientGroundTruth("descriptor training needs 2 shapes".into()));
            }
        }
        Task::Correspondence => {
            if !softmax_last {
                return Err(LearnError::HeadMismatch("correspondence training needs a softmax head".into()));
            }
            for (i, s) in data.train.iter().chain(&data.validation).enumerate() {
                let gt = s
                    .ground_truth
                    .ok_or_else(|| LearnError::InsufficientGroundTruth(format!("shape {i} has no ground truth")))?;
                if gt.len() != s.features.nrows() {
                    return Err(LearnError::DimensionMismatch {
                        expected: s.features.nrows(),
                        found: gt.len(),
                    });
                }
                if let Some(&t) = gt.iter().find(|&&t| t >= model.output_dim()) {
                    return Err(LearnError::TargetOutOfRange {
                        target: t,
                        classes: model.output_dim(),
                    });
                }
            }
        }
        Task::Retrieval => {
            if !has_cov {
                return Err(LearnError::HeadMismatch("retrieval training needs a COV layer".into()));
            }
            if data.train.iter().chain(&data.validation).any(|s| s.label.is_none()) {
                return Err(LearnError::InsufficientGroundTruth("retrieval shapes need class labels".into()));
            }
        }
    }
    Ok(())
}

/// Forward passes of the listed shapes, keyed by shape index.
fn forward_shapes(
    model: &Model,
    shapes: &[TrainShape],
    which: impl IntoIterator<Item = usize>,
) -> Result<BTreeMap<usize, (Array2<f64>, Activation)>, LearnError> {
    let mut out = BTreeMap::new();
    for s in which {
        if let std::collections::btree_map::Entry::Vacant(e) = out.entry(s) {
            e.insert(model.forward(shapes[s].features, &shapes[s].ctx)?);
        }
    }
    Ok(out)
}

/// Siamese loss over pairs of rows drawn from per-shape outputs, with the
/// gradients pushed back through every involved shape in index order.
fn siamese_batch(
    model: &Model,
    shapes: &[TrainShape],
    pairs: &[((usize, usize), (usize, usize), bool)],
    config: &TrainConfig,
    want_grad: bool,
) -> Result<Batch, LearnError> {
    let involved = pairs.iter().flat_map(|&(a, b, _)| [a.0, b.0]);
    let fwd = forward_shapes(model, shapes, involved)?;
    let dim = model.output_dim();
    let mut a = Array2::zeros((pairs.len(), dim));
    let mut b = Array2::zeros((pairs.len(), dim));
    for (i, &(pa, pb, _)) in pairs.iter().enumerate() {
        a.row_mut(i).assign(&fwd[&pa.0].0.row(pa.1));
        b.row_mut(i).assign(&fwd[&pb.0].0.row(pb.1));
    }
    let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();
    let l = siamese_loss(a.view(), b.view(), &labels, config.gamma, config.margin)?;
    let mut grad = vec![0.0; model.parameter_count()];
    if want_grad {
        let mut out_grads: BTreeMap<usize, Array2<f64>> =
            fwd.iter().map(|(&s, (y, _))| (s, Array2::zeros(y.raw_dim()))).collect();
        for (i, &(pa, pb, _)) in pairs.iter().enumerate() {
            let mut ga = out_grads.get_mut(&pa.0).expect("forwarded").row_mut(pa.1);
            ga += &l.grad_a.row(i);
            let mut gb = out_grads.get_mut(&pb.0).expect("forwarded").row_mut(pb.1);
            gb += &l.grad_b.row(i);
        }
        for (s, (_, act)) in &fwd {
            let g = model.backward(act, out_grads[s].view(), &shapes[*s].ctx)?;
            grad.iter_mut().zip(&g.params).for_each(|(t, v)| *t += v);
        }
    }
    Ok(Batch { loss: l.loss, grad })
}

fn vertex_pairs(set: &PairSet) -> Vec<((usize, usize), (usize, usize), bool)> {
    let conv = |(a, b): &(super::VertexRef, super::VertexRef), pos| ((a.shape, a.vertex), (b.shape, b.vertex), pos);
    set.positives
        .iter()
        .map(|p| conv(p, true))
        .chain(set.negatives.iter().map(|p| conv(p, false)))
        .collect()
}

fn correspondence_batch(model: &Model, shape: &TrainShape, rows: &[usize], want_grad: bool) -> Result<Batch, LearnError> {
    let depth = model.logit_depth();
    let (logits, act) = model.forward_to(shape.features, &shape.ctx, depth)?;
    let gt = shape.ground_truth.expect("checked");
    let targets: Vec<usize> = rows.iter().map(|&r| gt[r]).collect();
    let picked = logits.select(ndarray::Axis(0), rows);
    let (loss, g) = multinomial_loss_from_logits(picked.view(), &targets)?;
    let mut grad = vec![0.0; model.parameter_count()];
    if want_grad {
        let mut full = Array2::zeros(logits.raw_dim());
        for (i, &r) in rows.iter().enumerate() {
            let mut row = full.row_mut(r);
            row += &g.row(i);
        }
        grad = model.backward(&act, full.view(), &shape.ctx)?.params;
    }
    Ok(Batch { loss, grad })
}

fn shape_pairs<R: Rng>(shapes: &[TrainShape], count: usize, rng: &mut R) -> Vec<((usize, usize), (usize, usize), bool)> {
    let label = |s: usize| shapes[s].label.expect("checked");
    let n = shapes.len();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for s in 0..n {
        for t in s + 1..n {
            if label(s) == label(t) {
                pos.push(((s, 0), (t, 0), true));
            } else {
                neg.push(((s, 0), (t, 0), false));
            }
        }
    }
    let mut pick = |list: &Vec<_>| -> Vec<_> {
        if list.len() <= count {
            list.clone()
        } else {
            let mut idx = sample_indices(rng, list.len(), count).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| list[i]).collect()
        }
    };
    let mut out = pick(&pos);
    out.extend(pick(&neg));
    out
}

fn all_shape_pairs(shapes: &[TrainShape]) -> Vec<((usize, usize), (usize, usize), bool)> {
    let mut out = Vec::new();
    for s in 0..shapes.len() {
        for t in s + 1..shapes.len() {
            out.push(((s, 0), (t, 0), shapes[s].label == shapes[t].label));
        }
    }
    out
}

/// Fixed validation objective, evaluated on the same sample every time.
enum Validator<'a, 'b> {
    None,
    Pairs(&'a [TrainShape<'b>], Vec<((usize, usize), (usize, usize), bool)>),
    Vertices(&'a [TrainShape<'b>]),
}

impl Validator<'_, '_> {
    fn loss(&self, model: &Model, config: &TrainConfig) -> Result<Option<f64>, LearnError> {
        Ok(match self {
            Validator::None => None,
            Validator::Pairs(shapes, pairs) => Some(siamese_batch(model, shapes, pairs, config, false)?.loss),
            Validator::Vertices(shapes) => {
                let mut total = 0.0;
                for s in shapes.iter() {
                    let rows: Vec<usize> = (0..s.features.nrows()).collect();
                    total += correspondence_batch(model, s, &rows, false)?.loss;
                }
                Some(total)
            }
        })
    }
}

/// Seed stream for the fixed validation sample, separate from training.
const VALIDATION_STREAM: u64 = 0x5eed_0f_7a11;

/// Runs at most `max_updates` Adadelta steps. With validation shapes, the
/// parameters with the lowest validation loss (earliest on ties, initial
/// parameters included) are returned.
pub fn train(model: &Model, task: Task, data: &TrainData, config: &TrainConfig) -> Result<TrainResult, LearnError> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(LearnError::EmptyData);
    }
    check_head(model, task, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train_gt;
    let sampler = match task {
        Task::Descriptor => {
            train_gt = ground_truths(&data.train)?;
            Some(PairSampler::new(&train_gt, data.rho0)?)
        }
        _ => None,
    };
    let val_gt;
    let validator = if data.validation.is_empty() {
        Validator::None
    } else {
        let mut vrng = ChaCha8Rng::seed_from_u64(config.seed ^ VALIDATION_STREAM);
        match task {
            Task::Descriptor => {
                val_gt = ground_truths(&data.validation)?;
                let set = PairSampler::new(&val_gt, data.rho0)?.sample(
                    config.pairs_per_batch,
                    config.pairs_per_batch,
                    &mut vrng,
                )?;
                Validator::Pairs(&data.validation, vertex_pairs(&set))
            }
            Task::Correspondence => Validator::Vertices(&data.validation),
            Task::Retrieval => Validator::Pairs(&data.validation, all_shape_pairs(&data.validation)),
        }
    };

    let mut model = model.clone();
    let mut history = Vec::with_capacity(config.max_updates);
    if config.max_updates == 0 {
        return Ok(TrainResult {
            model,
            history,
            best_step: None,
        });
    }
    let mut best = validator
        .loss(&model, config)?
        .map(|l| (l, 0usize, model.parameters().values().to_vec()));
    let mut opt = Adadelta::new(model.parameter_count(), config.decay, config.epsilon);

    for step in 1..=config.max_updates {
        let batch = match task {
            Task::Descriptor => {
                let set = sampler
                    .as_ref()
                    .expect("descriptor sampler")
                    .sample(config.pairs_per_batch, config.pairs_per_batch, &mut rng)?;
                siamese_batch(&model, &data.train, &vertex_pairs(&set), config, true)?
            }
            Task::Correspondence => {
                let s = rng.gen_range(0..data.train.len());
                let n = data.train[s].features.nrows();
                let mut rows = sample_indices(&mut rng, n, config.vertices_per_batch.min(n)).into_vec();
                rows.sort_unstable();
                correspondence_batch(&model, &data.train[s], &rows, true)?
            }
            Task::Retrieval => {
                let pairs = shape_pairs(&data.train, config.shape_pairs_per_batch, &mut rng);
                if pairs.is_empty() {
                    return Err(LearnError::InsufficientGroundTruth("no shape pairs to train on".into()));
                }
                siamese_batch(&model, &data.train, &pairs, config, true)?
            }
        };
        opt.step(model.parameters_mut(), &batch.grad);
        let val_loss = if step % config.validate_every == 0 || step == config.max_updates {
            validator.loss(&model, config)?
        } else {
            None
        };
        if let (Some(v), Some((bv, _, _))) = (val_loss, &best) {
            if v < *bv {
                best = Some((v, step, model.parameters().values().to_vec()));
            }
        }
        history.push(LossRecord {
            step,
            loss: batch.loss,
            val_loss,
        });
        log::debug!("update {step}: loss {:.6e}", batch.loss);
    }
    let best_step = match best {
        Some((_, step, params)) => {
            model.set_parameters(&params)?;
            Some(step)
        }
        None => None,
    };
    Ok(TrainResult {
        model,
        history,
        best_step,
    })
}
