//! Cross-entropy training with ADAM, stratified k-fold evaluation and an
//! end-to-end finite-difference gradient check.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::NetworkSpec;
use crate::dataset::{DatasetSplit, LabeledImage};
use crate::error::{Error, Result};
use crate::layers::BnMode;
use crate::model::{Grads, Model, ParamStore};
use crate::tensor::{argmax, Scalar, Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub bn_mode: BnMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 128,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            bn_mode: BnMode::WidthAxis,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!(
                "adam betas must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            ));
        }
        if self.epsilon <= 0.0 {
            return bad("adam epsilon must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        Ok(())
    }
}

/// Softmax cross-entropy for one sample: `−ln max(p[label], 1e−12)` and the
/// gradient with respect to the pre-softmax scores, `p − onehot(label)`.
pub fn cross_entropy<T: Scalar>(pred: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= pred.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: pred.len(),
        });
    }
    let loss = -pred[label].max(T::from_f64(1e-12)).ln();
    let mut grad = pred.to_vec();
    grad[label] = grad[label] - T::one();
    Ok((loss, grad))
}

/// ADAM moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|p| vec![T::zero(); p.value.data().len()]).collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected ADAM update of every trainable parameter.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &Grads<T>,
    state: &mut OptimizerState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.values.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::InvalidConfig(format!(
            "optimizer expects {} parameter tensors, got {} gradients",
            params.len(),
            grads.values.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = T::from_f64(1.0 - b1.powi(t));
    let c2 = T::from_f64(1.0 - b2.powi(t));
    let (b1, b2) = (T::from_f64(b1), T::from_f64(b2));
    let lr = T::from_f64(cfg.learning_rate);
    let eps = T::from_f64(cfg.epsilon);
    for (i, p) in params.iter_mut().enumerate() {
        if !p.trainable {
            continue;
        }
        let g = &grads.values[i];
        if g.len() != p.value.data().len() {
            return Err(Error::DataLength {
                expected: p.value.data().len(),
                got: g.len(),
            });
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((w, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// One row of the metrics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMetrics {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

impl BatchMetrics {
    pub const CSV_HEADER: &'static str = "epoch,batch,loss,accuracy";

    pub fn csv_row(&self) -> String {
        format!("{},{},{:.6},{:.6}", self.epoch, self.batch, self.loss, self.accuracy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

pub struct TrainOutcome {
    pub model: Model<f32>,
    pub batches: Vec<BatchMetrics>,
    pub epochs: Vec<EpochMetrics>,
}

fn batch_tensor(images: &[&LabeledImage]) -> Result<Tensor<f32>> {
    let refs: Vec<&Tensor<f32>> = images.iter().map(|im| &im.pixels).collect();
    Tensor::stack(&refs)
}

/// Mean loss, correct count and the `(N, c, 1, 1)` score gradient of a batch.
fn batch_loss<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<(T, usize, Tensor<T>)> {
    let c = probs.shape().c();
    let inv = T::from_f64(1.0 / labels.len() as f64);
    let mut loss = T::zero();
    let mut correct = 0;
    let mut grad = Vec::with_capacity(probs.data().len());
    for (row, &label) in probs.data().chunks_exact(c).zip(labels) {
        let (l, g) = cross_entropy(row, label)?;
        loss = loss + l;
        if argmax(row) == label {
            correct += 1;
        }
        grad.extend(g.into_iter().map(|v| v * inv));
    }
    Ok((loss * inv, correct, Tensor::from_vec(probs.shape(), grad)?))
}

fn check_data(spec: &NetworkSpec, images: &[LabeledImage]) -> Result<()> {
    let want = spec.input;
    for im in images {
        if im.pixels.shape() != want {
            return Err(Error::Dataset(format!(
                "image {} has shape {:?}, network expects {:?}",
                im.source,
                im.pixels.shape().dims(),
                want.dims()
            )));
        }
        if im.label >= spec.classes {
            return Err(Error::LabelOutOfRange {
                label: im.label,
                classes: spec.classes,
            });
        }
    }
    Ok(())
}

/// Trains a freshly initialized model on `data.train`.
pub fn train(spec: &NetworkSpec, data: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(spec, &data.train, cfg, |_| {})
}

/// Like [`train`], reporting every batch to `on_batch` as it completes.
pub fn train_with(
    spec: &NetworkSpec,
    images: &[LabeledImage],
    cfg: &TrainConfig,
    mut on_batch: impl FnMut(&BatchMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let spec = if spec.bn_mode == cfg.bn_mode {
        spec.clone()
    } else {
        spec.with_bn_mode(cfg.bn_mode)?
    };
    check_data(&spec, images)?;
    let mut model = Model::<f32>::init(&spec, cfg.seed);
    let mut opt = OptimizerState::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut batches = Vec::new();
    let mut epochs = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct_sum = 0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<&LabeledImage> = idx.iter().map(|&i| &images[i]).collect();
            let labels: Vec<usize> = items.iter().map(|im| im.label).collect();
            let x = batch_tensor(&items)?;
            let diverged = || Error::Divergence { epoch, batch };
            let (probs, cache) = match model.forward_train(&x) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(diverged()),
                Err(e) => return Err(e),
            };
            let (loss, correct, d_scores) = batch_loss(&probs, &labels)?;
            if !loss.is_finite() {
                return Err(diverged());
            }
            let grads = model.backward(&cache, &d_scores)?;
            adam_step(model.params_mut(), &grads, &mut opt, cfg)?;
            let m = BatchMetrics {
                epoch,
                batch,
                loss: loss as f64,
                accuracy: correct as f64 / labels.len() as f64,
            };
            on_batch(&m);
            batches.push(m);
            loss_sum += loss as f64 * labels.len() as f64;
            correct_sum += correct;
        }
        epochs.push(EpochMetrics {
            epoch,
            loss: loss_sum / images.len() as f64,
            accuracy: correct_sum as f64 / images.len() as f64,
        });
    }
    Ok(TrainOutcome { model, batches, epochs })
}

/// Inference-phase accuracy over `images`, evaluated in chunks of 64.
pub fn evaluate(model: &Model<f32>, images: &[LabeledImage]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Dataset("evaluation set is empty".into()));
    }
    let mut correct = 0;
    for chunk in images.chunks(64) {
        let refs: Vec<&LabeledImage> = chunk.iter().collect();
        let probs = model.predict(&batch_tensor(&refs)?)?;
        let c = probs.shape().c();
        correct += probs
            .data()
            .chunks_exact(c)
            .zip(chunk)
            .filter(|(row, im)| argmax(row) == im.label)
            .count();
    }
    Ok(correct as f64 / images.len() as f64)
}

/// Assigns every image to one of `k` folds, stratified by class: each
/// class is shuffled with `seed`, classes are concatenated in label order
/// and position `i` goes to fold `i mod k`.
pub fn stratified_folds(images: &[LabeledImage], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidConfig("k-fold needs k >= 2".into()));
    }
    if images.len() < k {
        return Err(Error::Dataset(format!(
            "{} samples cannot fill {k} folds",
            images.len()
        )));
    }
    let classes = images.iter().map(|im| im.label).max().unwrap_or(0) + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(images.len());
    for c in 0..classes {
        let mut members: Vec<usize> = (0..images.len()).filter(|&i| images[i].label == c).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    let mut folds = vec![Vec::new(); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KFoldReport {
    pub fold_accuracies: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub warnings: Vec<String>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains on `k − 1` folds and tests on the held-out fold, `k` times.
pub fn kfold_evaluate(spec: &NetworkSpec, data: &DatasetSplit, k: usize, cfg: &TrainConfig) -> Result<KFoldReport> {
    kfold_with(data, k, cfg.seed, |train_set, test_set, _| {
        let split = DatasetSplit {
            train: train_set,
            test: Vec::new(),
            class_names: data.class_names.clone(),
        };
        let out = train(spec, &split, cfg)?;
        evaluate(&out.model, &test_set)
    })
}

/// k-fold driver with a pluggable train-and-score step.
pub fn kfold_with(
    data: &DatasetSplit,
    k: usize,
    seed: u64,
    mut fit_and_score: impl FnMut(Vec<LabeledImage>, Vec<LabeledImage>, usize) -> Result<f64>,
) -> Result<KFoldReport> {
    let images = &data.train;
    let folds = stratified_folds(images, k, seed)?;
    let classes = images.iter().map(|im| im.label).max().unwrap_or(0) + 1;
    let mut warnings = Vec::new();
    let mut accs = Vec::with_capacity(k);
    for (f, fold) in folds.iter().enumerate() {
        let mut present = vec![false; classes];
        fold.iter().for_each(|&i| present[images[i].label] = true);
        let missing: Vec<usize> = (0..classes).filter(|&c| !present[c]).collect();
        if !missing.is_empty() {
            warnings.push(format!("fold {f} has no samples of classes {missing:?}"));
        }
        let mut in_test = vec![false; images.len()];
        fold.iter().for_each(|&i| in_test[i] = true);
        let test: Vec<LabeledImage> = fold.iter().map(|&i| images[i].clone()).collect();
        let train_set: Vec<LabeledImage> = (0..images.len())
            .filter(|&i| !in_test[i])
            .map(|i| images[i].clone())
            .collect();
        accs.push(fit_and_score(train_set, test, f)?);
    }
    let (mean, std) = mean_std(&accs);
    Ok(KFoldReport {
        fold_accuracies: accs,
        fold_sizes: folds.iter().map(Vec::len).collect(),
        mean,
        std,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the perturbation flipped a ReLU sign or a
    /// max-pool argmax, where the loss is not differentiable.
    pub skipped: usize,
    /// Name of the parameter with the largest error.
    pub worst: String,
}

/// Relative error with a floor on the denominator so that two
/// near-zero gradients compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

pub const GRAD_CHECK_STEP: f64 = 1e-4;
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares back-propagated gradients of the batch loss against central
/// differences (`h = 1e−4`) for every trainable scalar, in 64-bit precision.
pub fn gradient_check(model: &Model<f64>, x: &Tensor<f64>, labels: &[usize]) -> Result<GradCheckReport> {
    gradient_check_impl(model, x, labels, None)
}

/// Like [`gradient_check`], but probes at most `per_param` coordinates of
/// each trainable tensor, drawn without replacement with `seed`.
pub fn gradient_check_sampled(
    model: &Model<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    per_param: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    gradient_check_impl(model, x, labels, Some((per_param, seed)))
}

fn gradient_check_impl(
    model: &Model<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    sample: Option<(usize, u64)>,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample.map_or(0, |s| s.1));
    let mut base = model.clone();
    let (probs, cache) = base.forward_train(x)?;
    let (_, _, d_scores) = batch_loss(&probs, labels)?;
    let grads = base.backward(&cache, &d_scores)?;
    let signature = cache.branch_signature(base.nodes());

    let mut probe = model.clone();
    let eval = |probe: &mut Model<f64>| -> Result<(f64, u64)> {
        let (p, c) = probe.forward_train(x)?;
        let (loss, _, _) = batch_loss(&p, labels)?;
        Ok((loss, c.branch_signature(probe.nodes())))
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        worst: String::new(),
    };
    for pi in 0..model.params().len() {
        if !model.params().as_slice()[pi].trainable {
            continue;
        }
        let len = model.params().as_slice()[pi].value.data().len();
        let coords: Vec<usize> = match sample {
            Some((k, _)) if k < len => rand::seq::index::sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for ei in coords {
            let orig = model.params().as_slice()[pi].value.data()[ei];
            let set = |probe: &mut Model<f64>, v: f64| {
                probe.params_mut().iter_mut().nth(pi).expect("index").value.data_mut()[ei] = v;
            };
            set(&mut probe, orig + GRAD_CHECK_STEP);
            let (plus, sig_plus) = eval(&mut probe)?;
            set(&mut probe, orig - GRAD_CHECK_STEP);
            let (minus, sig_minus) = eval(&mut probe)?;
            set(&mut probe, orig);
            if sig_plus != signature || sig_minus != signature {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
            let err = relative_error(grads.values[pi][ei], numeric);
            if !err.is_finite() {
                return Err(Error::NonFinite("gradient check".into()));
            }
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("{}[{ei}]", model.params().as_slice()[pi].name);
            }
        }
    }
    Ok(report)
}

/// Input shape used by the shrunken-network gradient checks.
pub fn shrunken_input() -> Shape {
    Shape::new(1, 1, 12, 12).expect("static shape")
}
