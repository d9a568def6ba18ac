//! Loss, SGD, the epoch loop, offline feature caching and the three-step
//! transfer pipeline (cache features, train head, fine-tune).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{map_label, Dataset, FiveClassLabel, LabelScheme};
use crate::error::{Error, Result};
use crate::layers::{self, Cache, LayerSpec};
use crate::metrics::argmax;
use crate::network::{forward_layers, put_str, ByteReader, Head, NetLayer, Network};
use crate::tensor::{SeededRng, Tensor};

/// Random stream for mini-batch order in [`train_epochs`] and
/// [`train_head_on_cache`]; the two must agree for cached and attached head
/// training to see the same batches.
const STREAM_SHUFFLE: u64 = 1 << 20;
const STREAM_FINETUNE_SHUFFLE: u64 = 2 << 20;
const STREAM_HEAD_INIT: u64 = 3 << 20;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_pretrain: f64,
    pub lr_finetune: f64,
    pub epochs_pretrain: usize,
    pub epochs_finetune: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// Stop once an epoch's training accuracy reaches this value.
    pub early_stop_train_acc: Option<f64>,
    pub frozen_blocks_finetune: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_pretrain: 0.001,
            lr_finetune: 0.0005,
            epochs_pretrain: 50,
            epochs_finetune: 100,
            batch_size: 32,
            momentum: 0.0,
            early_stop_train_acc: Some(0.99),
            frozen_blocks_finetune: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [("lr_pretrain", self.lr_pretrain), ("lr_finetune", self.lr_finetune)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Range(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Range("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Range(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if let Some(t) = self.early_stop_train_acc {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Range(format!("early-stop accuracy {t} outside (0, 1]")));
            }
        }
        Ok(())
    }

    /// One-line `key=value` rendering, also used to fingerprint trials.
    pub fn describe(&self) -> String {
        let stop = self
            .early_stop_train_acc
            .map_or_else(|| "off".to_string(), |t| t.to_string());
        format!(
            "lr_pretrain={} lr_finetune={} epochs_pretrain={} epochs_finetune={} batch_size={} \
             momentum={} early_stop={} frozen_blocks={} seed={}",
            self.lr_pretrain,
            self.lr_finetune,
            self.epochs_pretrain,
            self.epochs_finetune,
            self.batch_size,
            self.momentum,
            stop,
            self.frozen_blocks_finetune,
            self.seed
        )
    }
}

/// `−ln p[class]` with `p` floored at 1e-12.
pub fn cross_entropy(probs: &Tensor, class: usize) -> Result<f64> {
    let p = probs
        .data()
        .get(class)
        .ok_or_else(|| Error::Range(format!("class {class} out of range for {} outputs", probs.len())))?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Softmax and cross-entropy in one step: `(loss, probs, dlogits)` with
/// `dlogits = probs − onehot(class)`.
pub fn softmax_cross_entropy(logits: &Tensor, class: usize) -> Result<(f64, Tensor, Tensor)> {
    let probs = layers::softmax_forward(logits);
    let loss = cross_entropy(&probs, class)?;
    let mut grad = probs.clone();
    grad.data_mut()[class] -= 1.0;
    Ok((loss, probs, grad))
}

/// Largest relative disagreement between the fused gradient and central
/// differences of the loss with respect to the logits.
pub fn softmax_cross_entropy_check(logits: &Tensor, class: usize, h: f64) -> Result<f64> {
    let (_, _, grad) = softmax_cross_entropy(logits, class)?;
    let mut worst: f64 = 0.0;
    for i in 0..logits.len() {
        let mut plus = logits.clone();
        plus.data_mut()[i] += h;
        let mut minus = logits.clone();
        minus.data_mut()[i] -= h;
        let numeric = (softmax_cross_entropy(&plus, class)?.0 - softmax_cross_entropy(&minus, class)?.0) / (2.0 * h);
        let analytic = grad.data()[i];
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1.0));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub dw: Tensor,
    pub db: Tensor,
}

/// Momentum buffers for each trainable parameterized layer.
#[derive(Debug, Clone, Default)]
pub struct Velocity {
    slots: Vec<Option<ParamGrad>>,
}

impl Velocity {
    pub fn new() -> Self {
        Velocity::default()
    }
}

/// `v ← momentum·v − lr·g; w ← w + v` for every unfrozen layer with a
/// gradient. Frozen layers are skipped whatever their gradient.
pub fn sgd_step(
    layers: &mut [NetLayer],
    grads: &[Option<ParamGrad>],
    lr: f64,
    momentum: f64,
    velocity: &mut Velocity,
) -> Result<()> {
    if grads.len() != layers.len() {
        return Err(Error::Shape(format!(
            "{} gradient slots for {} layers",
            grads.len(),
            layers.len()
        )));
    }
    if velocity.slots.len() != layers.len() {
        velocity.slots = vec![None; layers.len()];
    }
    for ((layer, grad), slot) in layers.iter_mut().zip(grads).zip(&mut velocity.slots) {
        let (Some(g), false) = (grad, layer.frozen) else { continue };
        let params = layer
            .params
            .as_mut()
            .ok_or_else(|| Error::Shape(format!("gradient supplied for parameterless layer {}", layer.name)))?;
        if g.dw.shape() != params.weights.shape() || g.db.shape() != params.bias.shape() {
            return Err(Error::Shape(format!("gradient shape mismatch for layer {}", layer.name)));
        }
        let v = slot.get_or_insert_with(|| ParamGrad {
            dw: Tensor::zeros(g.dw.shape()).expect("non-empty shape"),
            db: Tensor::zeros(g.db.shape()).expect("non-empty shape"),
        });
        for (w, (vel, gr)) in [
            (params.weights.data_mut(), (v.dw.data_mut(), g.dw.data())),
            (params.bias.data_mut(), (v.db.data_mut(), g.db.data())),
        ] {
            for ((wi, vi), gi) in w.iter_mut().zip(vel.iter_mut()).zip(gr) {
                *vi = momentum * *vi - lr * gi;
                *wi += *vi;
            }
        }
    }
    Ok(())
}

/// Inputs paired with class indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Examples {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Examples {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Shape(format!("{} inputs for {} labels", inputs.len(), labels.len())));
        }
        Ok(Examples { inputs, labels })
    }

    pub fn from_dataset(dataset: &Dataset, scheme: LabelScheme) -> Self {
        Examples {
            inputs: dataset.items().iter().map(|i| i.image.clone()).collect(),
            labels: dataset.labels(scheme),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EpochsExhausted,
    EarlyStop,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EpochsExhausted => "epochs_exhausted",
            StopReason::EarlyStop => "early_stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop: StopReason,
}

impl TrainReport {
    pub fn final_train_acc(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_acc)
    }

    pub fn final_test_acc(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_acc)
    }

    /// `epoch,train_loss,train_acc,test_acc` rows, then `# stop=<reason>`.
    /// A missing test accuracy leaves its field empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,test_acc\n");
        for e in &self.epochs {
            let test = e.test_acc.map_or_else(String::new, |a| format!("{a:.6}"));
            let _ = writeln!(out, "{},{:.6},{:.6},{test}", e.epoch, e.train_loss, e.train_acc);
        }
        let _ = writeln!(out, "# stop={}", self.stop.as_str());
        out
    }
}

struct SamplePass {
    loss: f64,
    correct: bool,
    grads: Vec<Option<ParamGrad>>,
}

fn output_classes(layers: &[NetLayer]) -> Result<usize> {
    if layers.last().map(|l| &l.spec) != Some(&LayerSpec::Softmax) {
        return Err(Error::State("training needs layers ending in softmax".into()));
    }
    layers
        .iter()
        .rev()
        .find_map(|l| match l.spec {
            LayerSpec::Dense { out_units, .. } => Some(out_units),
            _ => None,
        })
        .ok_or_else(|| Error::State("training needs a dense output layer".into()))
}

/// Forward to the logits, fused loss gradient, then backward down to the
/// lowest trainable layer.
fn sample_pass(layers: &[NetLayer], lowest: Option<usize>, x: &Tensor, label: usize) -> Result<SamplePass> {
    let body = &layers[..layers.len() - 1];
    let mut caches: Vec<Option<Cache>> = Vec::with_capacity(body.len());
    let mut act = x.clone();
    for (i, layer) in body.iter().enumerate() {
        let (y, cache) = layers::forward(&layer.spec, layer.params.as_ref(), &act)?;
        caches.push(lowest.is_some_and(|lo| i >= lo).then_some(cache));
        act = y;
    }
    let (loss, probs, mut dy) = softmax_cross_entropy(&act, label)?;
    let correct = argmax(probs.data()) == label;
    let mut grads = vec![None; layers.len()];
    if let Some(lo) = lowest {
        for i in (lo..body.len()).rev() {
            let layer = &body[i];
            let cache = caches[i].take().expect("cache kept for trainable span");
            let g = layers::backward(&layer.spec, layer.params.as_ref(), &cache, &dy, i > lo)?;
            if let (Some(dw), Some(db), false) = (g.dw, g.db, layer.frozen) {
                grads[i] = Some(ParamGrad { dw, db });
            }
            match g.dx {
                Some(dx) => dy = dx,
                None => break,
            }
        }
    }
    Ok(SamplePass { loss, correct, grads })
}

fn predict_with(layers: &[NetLayer], inputs: &[Tensor]) -> Result<Vec<usize>> {
    inputs
        .par_iter()
        .map(|x| forward_layers(layers, x).map(|p| argmax(p.data())))
        .collect()
}

fn accuracy_with(layers: &[NetLayer], examples: &Examples) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("accuracy over no examples".into()));
    }
    let preds = predict_with(layers, &examples.inputs)?;
    let hits = preds.iter().zip(&examples.labels).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / examples.len() as f64)
}

/// Class predictions (argmax, ties to the lowest index) for each input.
pub fn predict(net: &Network, inputs: &[Tensor]) -> Result<Vec<usize>> {
    if let Some(x) = inputs.iter().find(|x| x.shape() != net.input_shape()) {
        return Err(Error::Shape(format!(
            "network expects input {:?}, got {:?}",
            net.input_shape(),
            x.shape()
        )));
    }
    predict_with(&net.layers, inputs)
}

pub fn evaluate(net: &Network, examples: &Examples) -> Result<f64> {
    predict(net, &examples.inputs)?;
    accuracy_with(&net.layers, examples)
}

/// The shared epoch loop over a layer stack ending in softmax.
fn train_layers(
    layers: &mut [NetLayer],
    train: &Examples,
    test: Option<&Examples>,
    config: &TrainConfig,
    lr: f64,
    max_epochs: usize,
    stream: u64,
) -> Result<TrainReport> {
    config.validate()?;
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Range(format!("learning rate must be positive, got {lr}")));
    }
    if train.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let classes = output_classes(layers)?;
    for ex in std::iter::once(train).chain(test) {
        if let Some(&bad) = ex.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Range(format!("label {bad} out of range for {classes} classes")));
        }
    }
    let lowest = layers.iter().position(|l| l.params.is_some() && !l.frozen);
    let n = train.len();
    let mut velocity = Velocity::new();
    let mut epochs = Vec::new();
    let mut stop = StopReason::EpochsExhausted;
    for epoch in 0..max_epochs {
        let order = SeededRng::derive(config.seed, stream + epoch as u64).permutation(n);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let frozen_view: &[NetLayer] = layers;
            let passes: Vec<SamplePass> = batch
                .par_iter()
                .map(|&i| sample_pass(frozen_view, lowest, &train.inputs[i], train.labels[i]))
                .collect::<Result<_>>()?;
            let scale = batch.len() as f64;
            let mut total: Vec<Option<ParamGrad>> = vec![None; layers.len()];
            for pass in passes {
                loss_sum += pass.loss;
                correct += pass.correct as usize;
                for (acc, g) in total.iter_mut().zip(pass.grads) {
                    let Some(g) = g else { continue };
                    match acc {
                        None => *acc = Some(g),
                        Some(a) => {
                            add_into(&mut a.dw, &g.dw);
                            add_into(&mut a.db, &g.db);
                        }
                    }
                }
            }
            for g in total.iter_mut().flatten() {
                g.dw.data_mut().iter_mut().for_each(|v| *v /= scale);
                g.db.data_mut().iter_mut().for_each(|v| *v /= scale);
            }
            sgd_step(layers, &total, lr, config.momentum, &mut velocity)?;
        }
        let train_acc = correct as f64 / n as f64;
        let test_acc = match test {
            Some(t) if !t.is_empty() => Some(accuracy_with(layers, t)?),
            _ => None,
        };
        let train_loss = loss_sum / n as f64;
        if !train_loss.is_finite() {
            return Err(Error::Domain(format!("training diverged at epoch {}", epoch + 1)));
        }
        epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            train_acc,
            test_acc,
        });
        if config.early_stop_train_acc.is_some_and(|t| train_acc >= t) {
            stop = StopReason::EarlyStop;
            break;
        }
    }
    Ok(TrainReport { epochs, stop })
}

fn add_into(acc: &mut Tensor, g: &Tensor) {
    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += b;
    }
}

/// Mini-batch SGD over the whole network, honoring each layer's frozen flag.
/// A network with a head is marked head-trained once an epoch has run with
/// the head unfrozen.
pub fn train_epochs(
    net: &mut Network,
    train: &Examples,
    test: Option<&Examples>,
    config: &TrainConfig,
    lr: f64,
    max_epochs: usize,
) -> Result<TrainReport> {
    for x in train.inputs.iter().chain(test.into_iter().flat_map(|t| &t.inputs)) {
        if x.shape() != net.input_shape() {
            return Err(Error::Shape(format!(
                "network expects input {:?}, got {:?}",
                net.input_shape(),
                x.shape()
            )));
        }
    }
    let report = train_layers(&mut net.layers, train, test, config, lr, max_epochs, STREAM_SHUFFLE)?;
    let head_start = net.flatten_index() + 1;
    if !report.epochs.is_empty() && net.layers[head_start..].iter().all(|l| !l.frozen) {
        net.mark_head_trained();
    }
    Ok(report)
}

pub const FEATURE_CACHE_MAGIC: &[u8; 4] = b"RSCF";
pub const FEATURE_CACHE_VERSION: u32 = 1;

/// Conv-base outputs for a dataset, stored so the head can be trained
/// without re-running the base.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    /// Weights fingerprint of the base that produced the features.
    pub base_fingerprint: String,
    pub width: usize,
    pub ids: Vec<String>,
    pub labels: Vec<FiveClassLabel>,
    pub features: Vec<Tensor>,
}

impl FeatureCache {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn examples(&self, scheme: LabelScheme) -> Examples {
        Examples {
            inputs: self.features.clone(),
            labels: self.labels.iter().map(|&l| map_label(l, scheme)).collect(),
        }
    }

    /// Magic `RSCF`, u32 version, fingerprint, u32 width, u32 count, then per
    /// sample: id, u8 five-class index, `width` f64 values (all LE).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.len() * (self.width * 8 + 16));
        out.extend_from_slice(FEATURE_CACHE_MAGIC);
        out.extend_from_slice(&FEATURE_CACHE_VERSION.to_le_bytes());
        put_str(&mut out, &self.base_fingerprint);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for ((id, label), f) in self.ids.iter().zip(&self.labels).zip(&self.features) {
            put_str(&mut out, id);
            out.push(label.index() as u8);
            for v in f.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != FEATURE_CACHE_MAGIC {
            return Err(Error::Format("not a feature cache (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FEATURE_CACHE_VERSION {
            return Err(Error::Format(format!("unsupported feature cache version {version}")));
        }
        let base_fingerprint = r.string()?;
        let width = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut cache = FeatureCache {
            base_fingerprint,
            width,
            ids: Vec::with_capacity(count),
            labels: Vec::with_capacity(count),
            features: Vec::with_capacity(count),
        };
        for _ in 0..count {
            cache.ids.push(r.string()?);
            let label = r.u8()? as usize;
            cache.labels.push(
                *FiveClassLabel::ALL
                    .get(label)
                    .ok_or_else(|| Error::Format(format!("bad label index {label}")))?,
            );
            let values = (0..width).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            cache.features.push(Tensor::vector(values)?);
        }
        if r.remaining() != 0 {
            return Err(Error::Format("trailing bytes after feature cache".into()));
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        FeatureCache::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn extract_features(base: &Network, dataset: &Dataset) -> Result<FeatureCache> {
    extract_features_with(base, dataset, true)
}

/// Runs a headless base over every image, in parallel or serially. Both
/// produce the same cache.
pub fn extract_features_with(base: &Network, dataset: &Dataset, parallel: bool) -> Result<FeatureCache> {
    if !base.profile().is_headless() {
        return Err(Error::State("feature extraction needs a headless conv base".into()));
    }
    let run = |item: &crate::data::Item| base.forward(&item.image);
    let features = if parallel {
        dataset.items().par_iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        dataset.items().iter().map(run).collect::<Result<Vec<_>>>()?
    };
    Ok(FeatureCache {
        base_fingerprint: base.weights_fingerprint(),
        width: base.profile().flatten_width(),
        ids: dataset.items().iter().map(|i| i.id.clone()).collect(),
        labels: dataset.items().iter().map(|i| i.label).collect(),
        features,
    })
}

/// The randomly initialized head [`train_head_on_cache`] starts from.
pub fn initial_head(cache: &FeatureCache, widths: &[usize], num_classes: usize, config: &TrainConfig) -> Result<Head> {
    let mut rng = SeededRng::derive(config.seed, STREAM_HEAD_INIT);
    Head::build(cache.width, widths, num_classes, &cache.base_fingerprint, &mut rng)
}

/// Trains a fresh dense head on cached features at `lr_pretrain` for
/// `epochs_pretrain` epochs. Batches match [`train_epochs`] with the same
/// seed, so the result equals training the head on top of the frozen base.
pub fn train_head_on_cache(
    cache: &FeatureCache,
    test: Option<&FeatureCache>,
    widths: &[usize],
    scheme: LabelScheme,
    config: &TrainConfig,
) -> Result<(Head, TrainReport)> {
    if cache.is_empty() {
        return Err(Error::Empty("feature cache is empty".into()));
    }
    for c in std::iter::once(cache).chain(test) {
        if c.features.iter().any(|f| f.shape() != [cache.width]) || c.width != cache.width {
            return Err(Error::Shape(format!("features do not all have width {}", cache.width)));
        }
    }
    let mut head = initial_head(cache, widths, scheme.num_classes(), config)?;
    let test = test.map(|t| t.examples(scheme));
    let report = train_layers(
        &mut head.layers,
        &cache.examples(scheme),
        test.as_ref(),
        config,
        config.lr_pretrain,
        config.epochs_pretrain,
        STREAM_SHUFFLE,
    )?;
    head.trained = !report.epochs.is_empty();
    Ok((head, report))
}

/// Slow-rate training of everything above the first
/// `frozen_blocks_finetune` conv blocks.
///
/// Frozen-prefix activations are computed once up front; they are exactly
/// what every epoch would recompute.
pub fn fine_tune(net: &mut Network, train: &Examples, test: Option<&Examples>, config: &TrainConfig) -> Result<TrainReport> {
    if !net.is_head_trained() {
        return Err(Error::State(
            "fine-tuning needs a trained head; train it on cached features and assemble first".into(),
        ));
    }
    net.set_freeze_by_blocks(config.frozen_blocks_finetune)?;
    for x in train.inputs.iter().chain(test.into_iter().flat_map(|t| &t.inputs)) {
        if x.shape() != net.input_shape() {
            return Err(Error::Shape(format!(
                "network expects input {:?}, got {:?}",
                net.input_shape(),
                x.shape()
            )));
        }
    }
    let start = net.layers.iter().position(|l| !l.frozen).unwrap_or(net.layers.len());
    let prefix = &net.layers[..start];
    let lift = |ex: &Examples| -> Result<Examples> {
        let inputs = ex
            .inputs
            .par_iter()
            .map(|x| forward_layers(prefix, x))
            .collect::<Result<Vec<_>>>()?;
        Examples::new(inputs, ex.labels.clone())
    };
    let train_lifted = lift(train)?;
    let test_lifted = test.map(lift).transpose()?;
    train_layers(
        &mut net.layers[start..],
        &train_lifted,
        test_lifted.as_ref(),
        config,
        config.lr_finetune,
        config.epochs_finetune,
        STREAM_FINETUNE_SHUFFLE,
    )
}

#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub network: Network,
    pub head_report: TrainReport,
    pub finetune_report: TrainReport,
    /// Test accuracy of the head on frozen features, before fine-tuning.
    pub head_only_acc: f64,
    pub fine_tuned_acc: f64,
}

/// Caches base features, trains a head on them, installs it and fine-tunes.
/// Both reports carry per-epoch test accuracy.
pub fn transfer_pipeline(
    base: &Network,
    train: &Dataset,
    test: &Dataset,
    scheme: LabelScheme,
    head_widths: &[usize],
    config: &TrainConfig,
) -> Result<TransferOutcome> {
    config.validate()?;
    if test.is_empty() {
        return Err(Error::Empty("test set is empty".into()));
    }
    let base = base.truncate_to_conv_base();
    let train_cache = extract_features(&base, train)?;
    let test_cache = extract_features(&base, test)?;
    let (head, head_report) = train_head_on_cache(&train_cache, Some(&test_cache), head_widths, scheme, config)?;
    let mut network = Network::assemble(&base, head)?;
    let test_examples = Examples::from_dataset(test, scheme);
    let head_only_acc = accuracy_with(
        &network.layers[network.flatten_index() + 1..],
        &test_cache.examples(scheme),
    )?;
    let finetune_report = fine_tune(
        &mut network,
        &Examples::from_dataset(train, scheme),
        Some(&test_examples),
        config,
    )?;
    let fine_tuned_acc = evaluate(&network, &test_examples)?;
    Ok(TransferOutcome {
        network,
        head_report,
        finetune_report,
        head_only_acc,
        fine_tuned_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Params;

    fn dense_layer(w: f64, frozen: bool) -> NetLayer {
        NetLayer {
            name: "fc".into(),
            spec: LayerSpec::Dense { in_units: 1, out_units: 1 },
            params: Some(Params {
                weights: Tensor::matrix(1, 1, vec![w]).unwrap(),
                bias: Tensor::vector(vec![0.0]).unwrap(),
            }),
            block: None,
            frozen,
        }
    }

    fn unit_grad(g: f64) -> Vec<Option<ParamGrad>> {
        vec![Some(ParamGrad {
            dw: Tensor::matrix(1, 1, vec![g]).unwrap(),
            db: Tensor::vector(vec![0.0]).unwrap(),
        })]
    }

    #[test]
    fn cross_entropy_examples() {
        let perfect = Tensor::vector(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(cross_entropy(&perfect, 0).unwrap(), 0.0);
        let uniform = Tensor::vector(vec![1.0 / 3.0; 3]).unwrap();
        assert!((cross_entropy(&uniform, 2).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&perfect, 1).unwrap().is_finite());
        assert!(matches!(cross_entropy(&perfect, 3), Err(Error::Range(_))));
    }

    #[test]
    fn fused_gradient_matches_differences() {
        let mut rng = SeededRng::new(8);
        for _ in 0..20 {
            let logits = Tensor::uniform_init(&[4], -3.0, 3.0, &mut rng).unwrap();
            assert!(softmax_cross_entropy_check(&logits, rng.below(4), 1e-5).unwrap() < 1e-6);
        }
    }

    #[test]
    fn sgd_plain_step() {
        let mut layers = vec![dense_layer(1.0, false)];
        sgd_step(&mut layers, &unit_grad(2.0), 0.1, 0.0, &mut Velocity::new()).unwrap();
        assert!((layers[0].params.as_ref().unwrap().weights.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_recursion() {
        let mut layers = vec![dense_layer(0.0, false)];
        let mut v = Velocity::new();
        sgd_step(&mut layers, &unit_grad(1.0), 0.1, 0.5, &mut v).unwrap();
        assert!((v.slots[0].as_ref().unwrap().dw.data()[0] + 0.1).abs() < 1e-15);
        sgd_step(&mut layers, &unit_grad(1.0), 0.1, 0.5, &mut v).unwrap();
        assert!((v.slots[0].as_ref().unwrap().dw.data()[0] + 0.15).abs() < 1e-15);
    }

    #[test]
    fn sgd_skips_frozen_layers() {
        let mut layers = vec![dense_layer(0.37, true)];
        sgd_step(&mut layers, &unit_grad(5.0), 0.1, 0.0, &mut Velocity::new()).unwrap();
        assert_eq!(layers[0].params.as_ref().unwrap().weights.data()[0].to_bits(), 0.37f64.to_bits());
    }

    #[test]
    fn sgd_rejects_misshapen_gradients() {
        let mut layers = vec![dense_layer(1.0, false)];
        let bad = vec![Some(ParamGrad {
            dw: Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap(),
            db: Tensor::vector(vec![0.0]).unwrap(),
        })];
        assert!(matches!(
            sgd_step(&mut layers, &bad, 0.1, 0.0, &mut Velocity::new()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn report_csv_layout() {
        let r = TrainReport {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 1.0986123,
                train_acc: 0.5,
                test_acc: Some(1.0 / 3.0),
            }],
            stop: StopReason::EarlyStop,
        };
        assert_eq!(
            r.to_csv(),
            "epoch,train_loss,train_acc,test_acc\n1,1.098612,0.500000,0.333333\n# stop=early_stop\n"
        );
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { lr_pretrain: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { early_stop_train_acc: Some(1.5), ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Range(_))));
        }
    }
}
