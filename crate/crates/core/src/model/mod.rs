//! Character-level bidirectional LSTM masked language model.
//!
//! `embedding -> stacked biLSTM -> [fwd ; bwd] -> projection -> output -> log-softmax`
//!
//! Forward and backward passes are written out by hand over `ndarray`
//! matrices. Everything is generic over the float type so the gradient check
//! can run the exact training code at 64-bit precision.

mod lstm;
mod optim;
mod train;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{s, Array1, Array2, ArrayViewD, ArrayViewMutD, Axis, LinalgScalar, ScalarOperand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::masking::MaskedSample;
use crate::vocab::{Id, NUM_SPECIALS, PAD};

pub use lstm::Lstm;
pub use optim::{clip_grad_norm, AdamW};
pub use train::{
    length_chunks, masked_loss_accuracy, train, EpochRecord, TrainConfig, TrainError, TrainOutcome,
    DEV_MASK_SEED,
};

pub trait Scalar:
    num_traits::Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Debug
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    /// Per direction.
    pub hidden_dim: usize,
    pub projection_dim: usize,
    pub layers: usize,
    pub bidirectional: bool,
    pub projection_activation: Activation,
}

impl ModelConfig {
    /// 200 / 300 / 150, four bidirectional layers, linear projection.
    pub fn new(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            embedding_dim: 200,
            hidden_dim: 300,
            projection_dim: 150,
            layers: 4,
            bidirectional: true,
            projection_activation: Activation::Identity,
        }
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            self.vocab_size,
            self.embedding_dim,
            self.hidden_dim,
            self.projection_dim,
            self.layers,
        ];
        if dims.contains(&0) {
            return Err(ModelError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("id {id} is outside the vocabulary of size {vocab_size}")]
    IndexOutOfVocab { id: Id, vocab_size: usize },
    #[error("sequence length {length} exceeds padded width {width}")]
    LengthMismatch { length: usize, width: usize },
    #[error("sample {0} has no masked positions")]
    NoMaskedPositions(usize),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
}

/// Trainable tensors. Gradients and optimizer moments use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub embedding: Array2<F>,
    /// `lstm[layer * directions + direction]`, direction 0 reads left to right.
    pub lstm: Vec<Lstm<F>>,
    pub proj_w: Array2<F>,
    pub proj_b: Array1<F>,
    pub out_w: Array2<F>,
    pub out_b: Array1<F>,
}

impl<F: Scalar> Params<F> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.directions();
        let h = cfg.hidden_dim;
        let lstm = (0..cfg.layers * d)
            .map(|k| {
                let input = if k < d { cfg.embedding_dim } else { d * h };
                Lstm::zeros(input, h)
            })
            .collect();
        Params {
            embedding: Array2::zeros((cfg.vocab_size, cfg.embedding_dim)),
            lstm,
            proj_w: Array2::zeros((d * h, cfg.projection_dim)),
            proj_b: Array1::zeros(cfg.projection_dim),
            out_w: Array2::zeros((cfg.projection_dim, cfg.vocab_size)),
            out_b: Array1::zeros(cfg.vocab_size),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            lstm: self.lstm.iter().map(Lstm::zeros_like).collect(),
            proj_w: Array2::zeros(self.proj_w.raw_dim()),
            proj_b: Array1::zeros(self.proj_b.raw_dim()),
            out_w: Array2::zeros(self.out_w.raw_dim()),
            out_b: Array1::zeros(self.out_b.raw_dim()),
        }
    }

    fn names(&self) -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        let dirs = self.direction_count();
        for (k, _) in self.lstm.iter().enumerate() {
            let (layer, dir) = (k / dirs, k % dirs);
            let dir = if dir == 0 { "fwd" } else { "bwd" };
            for part in ["w_ih", "w_hh", "bias"] {
                names.push(format!("lstm.{layer}.{dir}.{part}"));
            }
        }
        names.extend(["proj.weight", "proj.bias", "out.weight", "out.bias"].map(String::from));
        names
    }

    fn direction_count(&self) -> usize {
        // The top projection reads `directions * hidden` features.
        let hidden = self.lstm[0].w_hh.nrows();
        self.proj_w.nrows() / hidden
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut views: Vec<ArrayViewD<'_, F>> = vec![self.embedding.view().into_dyn()];
        for l in &self.lstm {
            views.push(l.w_ih.view().into_dyn());
            views.push(l.w_hh.view().into_dyn());
            views.push(l.bias.view().into_dyn());
        }
        views.push(self.proj_w.view().into_dyn());
        views.push(self.proj_b.view().into_dyn());
        views.push(self.out_w.view().into_dyn());
        views.push(self.out_b.view().into_dyn());
        self.names().into_iter().zip(views).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let names = self.names();
        let mut views: Vec<ArrayViewMutD<'_, F>> = vec![self.embedding.view_mut().into_dyn()];
        for l in &mut self.lstm {
            views.push(l.w_ih.view_mut().into_dyn());
            views.push(l.w_hh.view_mut().into_dyn());
            views.push(l.bias.view_mut().into_dyn());
        }
        views.push(self.proj_w.view_mut().into_dyn());
        views.push(self.proj_b.view_mut().into_dyn());
        views.push(self.out_w.view_mut().into_dyn());
        views.push(self.out_b.view_mut().into_dyn());
        names.into_iter().zip(views).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn squared_norm(&self) -> F {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().map(|&x| x * x).collect::<Vec<_>>())
            .sum()
    }
}

/// A padded batch of index sequences stored time-major: row `t * size + b`
/// holds position `t` of sequence `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub size: usize,
    pub width: usize,
    pub ids: Vec<Id>,
    pub lengths: Vec<usize>,
}

impl Batch {
    pub fn new<S: AsRef<[Id]>>(seqs: &[S]) -> Self {
        let width = seqs.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
        Self::padded(seqs, width).expect("width covers every sequence")
    }

    pub fn padded<S: AsRef<[Id]>>(seqs: &[S], width: usize) -> Result<Self, ModelError> {
        let size = seqs.len();
        let mut ids = vec![PAD; size * width];
        let mut lengths = Vec::with_capacity(size);
        for (b, seq) in seqs.iter().enumerate() {
            let seq = seq.as_ref();
            if seq.len() > width {
                return Err(ModelError::LengthMismatch {
                    length: seq.len(),
                    width,
                });
            }
            for (t, &id) in seq.iter().enumerate() {
                ids[t * size + b] = id;
            }
            lengths.push(seq.len());
        }
        Ok(Batch {
            size,
            width,
            ids,
            lengths,
        })
    }

    pub fn row(&self, b: usize, t: usize) -> usize {
        t * self.size + b
    }

    pub fn rows(&self) -> usize {
        self.size * self.width
    }

    pub fn is_live(&self, b: usize, t: usize) -> bool {
        t < self.lengths[b]
    }

    fn check(&self, vocab_size: usize) -> Result<(), ModelError> {
        if let Some(&id) = self.ids.iter().find(|&&id| id as usize >= vocab_size) {
            return Err(ModelError::IndexOutOfVocab { id, vocab_size });
        }
        if let Some(&length) = self.lengths.iter().find(|&&l| l > self.width) {
            return Err(ModelError::LengthMismatch {
                length,
                width: self.width,
            });
        }
        if self.ids.len() != self.rows() || self.lengths.len() != self.size {
            return Err(ModelError::LengthMismatch {
                length: self.ids.len(),
                width: self.rows(),
            });
        }
        Ok(())
    }
}

/// A batch of masked samples with one `(row, target)` pair per masked position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub batch: Batch,
    pub targets: Vec<(usize, Id)>,
}

impl MaskedBatch {
    pub fn new(samples: &[&MaskedSample]) -> Result<Self, ModelError> {
        let inputs: Vec<&[Id]> = samples.iter().map(|s| s.input_ids.as_slice()).collect();
        let batch = Batch::new(&inputs);
        let mut targets = Vec::new();
        for (b, s) in samples.iter().enumerate() {
            if s.mask_positions.is_empty() {
                return Err(ModelError::NoMaskedPositions(b));
            }
            targets.extend(
                s.mask_positions
                    .iter()
                    .map(|&t| (batch.row(b, t), s.target_ids[t])),
            );
        }
        Ok(MaskedBatch { batch, targets })
    }
}

/// Per-position log distributions, one row per batch row.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbs<F> {
    pub batch_size: usize,
    pub width: usize,
    pub data: Array2<F>,
}

impl<F: Scalar> LogProbs<F> {
    pub fn at(&self, b: usize, t: usize) -> ndarray::ArrayView1<'_, F> {
        self.data.row(t * self.batch_size + b)
    }
}

/// Mean negative log-likelihood of the targets at masked positions.
///
/// Pad and unmasked positions do not contribute.
pub fn mlm_loss<F: Scalar>(
    log_probs: &LogProbs<F>,
    samples: &[&MaskedSample],
) -> Result<F, ModelError> {
    let mut total = F::zero();
    let mut count = 0usize;
    for (b, s) in samples.iter().enumerate() {
        if s.mask_positions.is_empty() {
            return Err(ModelError::NoMaskedPositions(b));
        }
        for &t in &s.mask_positions {
            total -= log_probs.at(b, t)[s.target_ids[t] as usize];
            count += 1;
        }
    }
    Ok(total / F::of(count as f64))
}

/// Index of the largest entry among ordinary symbols; ties go to the lowest index.
pub fn argmax_char<F: Scalar>(row: ndarray::ArrayView1<'_, F>) -> Id {
    argmax_from(row, NUM_SPECIALS)
}

/// Index of the largest entry over the whole vocabulary; ties go to the lowest index.
pub fn argmax_any<F: Scalar>(row: ndarray::ArrayView1<'_, F>) -> Id {
    argmax_from(row, 0)
}

fn argmax_from<F: Scalar>(row: ndarray::ArrayView1<'_, F>, start: usize) -> Id {
    let mut best = start.min(row.len().saturating_sub(1));
    for i in start..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    best as Id
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    pub config: ModelConfig,
    pub params: Params<F>,
}

struct StackCache<F> {
    /// Input to each layer, `rows x input_dim`.
    inputs: Vec<Array2<F>>,
    dirs: Vec<lstm::DirCache<F>>,
    top: Array2<F>,
}

struct HeadCache<F> {
    input: Array2<F>,
    hidden: Array2<F>,
    log_probs: Array2<F>,
}

impl<F: Scalar> Model<F> {
    /// Uniform initialization in `±1/sqrt(fan)`; forget-gate biases start at 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&config);
        fill_uniform(&mut params.embedding, 0.5, &mut rng);
        let k = 1.0 / (config.hidden_dim as f64).sqrt();
        for l in &mut params.lstm {
            fill_uniform(&mut l.w_ih, k, &mut rng);
            fill_uniform(&mut l.w_hh, k, &mut rng);
            let h = config.hidden_dim;
            l.bias.slice_mut(s![h..2 * h]).fill(F::one());
        }
        let kp = 1.0 / ((config.directions() * config.hidden_dim) as f64).sqrt();
        fill_uniform(&mut params.proj_w, kp, &mut rng);
        fill_uniform_1d(&mut params.proj_b, kp, &mut rng);
        let ko = 1.0 / (config.projection_dim as f64).sqrt();
        fill_uniform(&mut params.out_w, ko, &mut rng);
        fill_uniform_1d(&mut params.out_b, ko, &mut rng);
        Ok(Model { config, params })
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        let c2 = |a: &Array2<F>| a.mapv(|x| G::of(x.f64()));
        let c1 = |a: &Array1<F>| a.mapv(|x| G::of(x.f64()));
        Model {
            config: self.config.clone(),
            params: Params {
                embedding: c2(&self.params.embedding),
                lstm: self
                    .params
                    .lstm
                    .iter()
                    .map(|l| Lstm {
                        w_ih: c2(&l.w_ih),
                        w_hh: c2(&l.w_hh),
                        bias: c1(&l.bias),
                    })
                    .collect(),
                proj_w: c2(&self.params.proj_w),
                proj_b: c1(&self.params.proj_b),
                out_w: c2(&self.params.out_w),
                out_b: c1(&self.params.out_b),
            },
        }
    }

    fn run_stack(&self, batch: &Batch) -> StackCache<F> {
        let d = self.config.directions();
        let mut x = Array2::zeros((batch.rows(), self.config.embedding_dim));
        for (r, &id) in batch.ids.iter().enumerate() {
            x.row_mut(r).assign(&self.params.embedding.row(id as usize));
        }
        let mut inputs = Vec::with_capacity(self.config.layers);
        let mut dirs = Vec::with_capacity(self.config.layers * d);
        for layer in 0..self.config.layers {
            let caches: Vec<lstm::DirCache<F>> = (0..d)
                .map(|dir| self.params.lstm[layer * d + dir].forward(&x, batch, dir == 1))
                .collect();
            let outs: Vec<_> = caches.iter().map(|c| c.h.view()).collect();
            let next = ndarray::concatenate(Axis(1), &outs).expect("equal row counts");
            inputs.push(std::mem::replace(&mut x, next));
            dirs.extend(caches);
        }
        StackCache {
            inputs,
            dirs,
            top: x,
        }
    }

    fn head(&self, input: Array2<F>) -> HeadCache<F> {
        let mut hidden = input.dot(&self.params.proj_w) + &self.params.proj_b;
        if self.config.projection_activation == Activation::Tanh {
            hidden.mapv_inplace(|x| x.tanh());
        }
        let mut logits = hidden.dot(&self.params.out_w) + &self.params.out_b;
        log_softmax_rows(&mut logits);
        HeadCache {
            input,
            hidden,
            log_probs: logits,
        }
    }

    /// Log distributions over the vocabulary at every batch position. Rows of
    /// pad positions are computed but carry no meaning.
    pub fn forward(&self, batch: &Batch) -> Result<LogProbs<F>, ModelError> {
        batch.check(self.config.vocab_size)?;
        let stack = self.run_stack(batch);
        Ok(LogProbs {
            batch_size: batch.size,
            width: batch.width,
            data: self.head(stack.top).log_probs,
        })
    }

    /// Log distributions at the given batch rows only.
    pub fn forward_rows(&self, batch: &Batch, rows: &[usize]) -> Result<Array2<F>, ModelError> {
        batch.check(self.config.vocab_size)?;
        let stack = self.run_stack(batch);
        Ok(self.head(stack.top.select(Axis(0), rows)).log_probs)
    }

    pub fn loss(&self, mb: &MaskedBatch) -> Result<F, ModelError> {
        let rows: Vec<usize> = mb.targets.iter().map(|t| t.0).collect();
        let lp = self.forward_rows(&mb.batch, &rows)?;
        Ok(nll(&lp, &mb.targets))
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, mb: &MaskedBatch) -> Result<(F, Params<F>), ModelError> {
        let batch = &mb.batch;
        batch.check(self.config.vocab_size)?;
        if mb.targets.is_empty() {
            return Err(ModelError::NoMaskedPositions(0));
        }
        let stack = self.run_stack(batch);
        let rows: Vec<usize> = mb.targets.iter().map(|t| t.0).collect();
        let head = self.head(stack.top.select(Axis(0), &rows));
        let loss = nll(&head.log_probs, &mb.targets);
        let mut grad = self.params.zeros_like();

        // d loss / d logits = (softmax - onehot) / n
        let n = F::of(mb.targets.len() as f64);
        let mut d_logits = head.log_probs.mapv(|x| x.exp() / n);
        for (i, &(_, target)) in mb.targets.iter().enumerate() {
            d_logits[[i, target as usize]] -= F::one() / n;
        }
        grad.out_w = head.hidden.t().dot(&d_logits);
        grad.out_b = d_logits.sum_axis(Axis(0));
        let mut d_hidden = d_logits.dot(&self.params.out_w.t());
        if self.config.projection_activation == Activation::Tanh {
            d_hidden.zip_mut_with(&head.hidden, |d, &y| *d *= F::one() - y * y);
        }
        grad.proj_w = head.input.t().dot(&d_hidden);
        grad.proj_b = d_hidden.sum_axis(Axis(0));
        let d_sel = d_hidden.dot(&self.params.proj_w.t());

        let mut d_out = Array2::zeros(stack.top.raw_dim());
        for (i, &r) in rows.iter().enumerate() {
            let mut row = d_out.row_mut(r);
            row += &d_sel.row(i);
        }

        let d = self.config.directions();
        let h = self.config.hidden_dim;
        for layer in (0..self.config.layers).rev() {
            let input = &stack.inputs[layer];
            let mut d_in = Array2::zeros(input.raw_dim());
            for dir in 0..d {
                let k = layer * d + dir;
                let d_h = d_out.slice(s![.., dir * h..(dir + 1) * h]);
                d_in += &self.params.lstm[k].backward(
                    &stack.dirs[k],
                    input,
                    d_h,
                    batch,
                    dir == 1,
                    &mut grad.lstm[k],
                );
            }
            d_out = d_in;
        }
        for (r, &id) in batch.ids.iter().enumerate() {
            let mut row = grad.embedding.row_mut(id as usize);
            row += &d_out.row(r);
        }
        Ok((loss, grad))
    }
}

fn nll<F: Scalar>(log_probs: &Array2<F>, targets: &[(usize, Id)]) -> F {
    let total: F = targets
        .iter()
        .enumerate()
        .map(|(i, &(_, t))| -log_probs[[i, t as usize]])
        .sum();
    total / F::of(targets.len() as f64)
}

pub fn log_softmax_rows<F: Scalar>(m: &mut Array2<F>) {
    for mut row in m.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let sum: F = row.iter().map(|&x| (x - max).exp()).sum();
        let shift = max + sum.ln();
        row.mapv_inplace(|x| x - shift);
    }
}

fn fill_uniform<F: Scalar, R: Rng>(a: &mut Array2<F>, k: f64, rng: &mut R) {
    a.mapv_inplace(|_| F::of(rng.random_range(-k..k)));
}

fn fill_uniform_1d<F: Scalar, R: Rng>(a: &mut Array1<F>, k: f64, rng: &mut R) {
    a.mapv_inplace(|_| F::of(rng.random_range(-k..k)));
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            embedding_dim: 4,
            hidden_dim: 5,
            projection_dim: 3,
            layers: 2,
            bidirectional: true,
            projection_activation: Activation::Identity,
        }
    }

    #[test]
    fn default_config_dimensions() {
        let c = ModelConfig::new(134);
        assert_eq!(
            (c.embedding_dim, c.hidden_dim, c.projection_dim, c.layers),
            (200, 300, 150, 4)
        );
        assert!(c.bidirectional);
    }

    #[test]
    fn rows_are_distributions() {
        let m = Model::<f64>::init(tiny_config(), 3).unwrap();
        let batch = Batch::new(&[vec![3u32, 4, 5, 2, 7], vec![8, 9]]);
        let lp = m.forward(&batch).unwrap();
        for b in 0..2 {
            for t in 0..batch.lengths[b] {
                let total: f64 = lp.at(b, t).iter().map(|x| x.exp()).sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn padding_does_not_leak() {
        let m = Model::<f64>::init(tiny_config(), 5).unwrap();
        let short = vec![3u32, 4, 5];
        let alone = m
            .forward(&Batch::new(std::slice::from_ref(&short)))
            .unwrap();
        let padded = m
            .forward(&Batch::new(&[short.clone(), vec![6, 7, 8, 9, 10, 11, 3]]))
            .unwrap();
        for t in 0..3 {
            for (a, b) in alone.at(0, t).iter().zip(padded.at(0, t).iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_ids_and_lengths() {
        let m = Model::<f32>::init(tiny_config(), 1).unwrap();
        assert_eq!(
            m.forward(&Batch::new(&[vec![3u32, 12]])),
            Err(ModelError::IndexOutOfVocab {
                id: 12,
                vocab_size: 12
            })
        );
        assert!(matches!(
            Batch::padded(&[vec![3u32, 4, 5]], 2),
            Err(ModelError::LengthMismatch {
                length: 3,
                width: 2
            })
        ));
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        let row = ndarray::arr1(&[0.9f32, 0.1, 0.1, 0.5, 0.5, 0.2]);
        assert_eq!(argmax_char(row.view()), 3);
        assert_eq!(argmax_any(row.view()), 0);
    }

    #[test]
    fn tensor_names_are_unique_and_complete() {
        let p = Params::<f32>::zeros(&tiny_config());
        let names: Vec<String> = p.tensors().into_iter().map(|t| t.0).collect();
        assert_eq!(names.len(), 1 + 2 * 2 * 3 + 4);
        assert_eq!(names[1], "lstm.0.fwd.w_ih");
        assert_eq!(names[4], "lstm.0.bwd.w_ih");
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
    }
}
