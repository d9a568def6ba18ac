//! Sensitivity sweeps, label-granularity comparison and the data-size
//! bootstrap, run as seeded, independently reproducible trials.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::data::{bootstrap_subsample, split_train_test, Dataset, LabelScheme};
use crate::error::{Error, Result};
use crate::metrics::{self, box_stats, ConfusionMatrix};
use crate::network::Network;
use crate::tensor::SeededRng;
use crate::training::{self, extract_features, Examples, FeatureCache, TrainConfig, TrainReport};

/// Fraction of a dataset used for training in every experiment split.
pub const TRAIN_FRACTION: f64 = 0.70;
pub const DATASIZE_FRACTIONS: [f64; 3] = [0.10, 0.50, 1.00];
pub const DEFAULT_REPEATS: usize = 5;

const STREAM_SPLIT: u64 = 7 << 20;
const STREAM_SUBSAMPLE: u64 = 8 << 20;

/// Accuracies reported on the field dataset. The synthetic task cannot
/// reproduce them; they are printed next to synthetic results for context.
pub const FIELD_REFERENCE: [(&str, f64); 5] = [
    ("two-class overall accuracy", 0.9072),
    ("three-class overall accuracy", 0.873),
    ("five-class overall accuracy", 0.785),
    ("fine-tune last block only", 0.882),
    ("five-class with bare and <25 merged", 0.8416),
];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub fc_structures: Vec<(usize, usize)>,
    pub pretrain_lrs: Vec<f64>,
    pub finetune_lrs: Vec<f64>,
    /// Numbers of frozen conv blocks.
    pub freeze_depths: Vec<usize>,
}

impl GridSpec {
    /// Every head structure, learning rate and freeze depth under study.
    pub fn standard() -> Self {
        GridSpec {
            fc_structures: vec![(256, 256), (512, 256), (1024, 512), (2048, 2048)],
            pretrain_lrs: vec![0.0001, 0.0005, 0.001, 0.005, 0.01],
            finetune_lrs: vec![0.0001, 0.0005, 0.001],
            freeze_depths: vec![4, 3, 2, 1],
        }
    }

    /// Every knob fixed at one value.
    pub fn single(head: (usize, usize), config: &TrainConfig) -> Self {
        GridSpec {
            fc_structures: vec![head],
            pretrain_lrs: vec![config.lr_pretrain],
            finetune_lrs: vec![config.lr_finetune],
            freeze_depths: vec![config.frozen_blocks_finetune],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fc_structures.is_empty()
            || self.pretrain_lrs.is_empty()
            || self.finetune_lrs.is_empty()
            || self.freeze_depths.is_empty()
        {
            return Err(Error::Range("every grid axis needs at least one value".into()));
        }
        if self.fc_structures.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(Error::Range("head widths must be positive".into()));
        }
        if self.pretrain_lrs.iter().chain(&self.finetune_lrs).any(|&lr| !(lr > 0.0)) {
            return Err(Error::Range("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Everything that defines one trial apart from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub experiment: String,
    pub scheme: LabelScheme,
    pub fraction: f64,
    pub head: (usize, usize),
    pub config: TrainConfig,
}

impl TrialSpec {
    /// First 16 hex digits of a hash over every setting except the seed.
    pub fn fingerprint(&self) -> String {
        let unseeded = TrainConfig { seed: 0, ..self.config.clone() };
        let text = format!(
            "{};scheme={};fraction={};head={}x{};{}",
            self.experiment,
            self.scheme,
            self.fraction,
            self.head.0,
            self.head.1,
            unseeded.describe()
        );
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub spec: TrialSpec,
    pub config_fingerprint: String,
    pub seed: u64,
    pub test_acc: f64,
    pub head_only_acc: f64,
    pub wall_secs: f64,
    pub confusion: ConfusionMatrix,
    pub head_report: TrainReport,
    pub finetune_report: TrainReport,
}

/// A fixed split of a dataset with base features cached for both halves.
pub struct Prepared {
    pub base: Network,
    pub train: Dataset,
    pub test: Dataset,
    train_cache: FeatureCache,
    test_cache: FeatureCache,
}

impl Prepared {
    /// Splits `dataset` 70/30 with `split_seed` and caches base features.
    pub fn new(base: &Network, dataset: &Dataset, split_seed: u64) -> Result<Self> {
        let (train, test) = split_train_test(dataset, TRAIN_FRACTION, &mut SeededRng::derive(split_seed, STREAM_SPLIT))?;
        Prepared::from_split(base, train, test)
    }

    pub fn from_split(base: &Network, train: Dataset, test: Dataset) -> Result<Self> {
        if train.is_empty() || test.is_empty() {
            return Err(Error::Empty("both halves of the split need samples".into()));
        }
        let base = base.truncate_to_conv_base();
        let train_cache = extract_features(&base, &train)?;
        let test_cache = extract_features(&base, &test)?;
        Ok(Prepared {
            base,
            train,
            test,
            train_cache,
            test_cache,
        })
    }
}

/// Head on cached features, then fine-tuning, timed end to end.
fn run_trial(prep: &Prepared, train: &Dataset, train_cache: &FeatureCache, spec: &TrialSpec) -> Result<TrialResult> {
    let start = Instant::now();
    let config = &spec.config;
    let (head, head_report) =
        training::train_head_on_cache(train_cache, None, &[spec.head.0, spec.head.1], spec.scheme, config)?;
    let mut net = Network::assemble(&prep.base, head)?;
    let head_only_acc = {
        let head_layers = &net.layers[net.flatten_index() + 1..];
        let probs: Vec<usize> = prep
            .test_cache
            .features
            .iter()
            .map(|f| crate::network::forward_layers(head_layers, f).map(|p| metrics::argmax(p.data())))
            .collect::<Result<_>>()?;
        let truth = prep.test.labels(spec.scheme);
        probs.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
    };
    let finetune_report = training::fine_tune(&mut net, &Examples::from_dataset(train, spec.scheme), None, config)?;
    let test = Examples::from_dataset(&prep.test, spec.scheme);
    let preds = training::predict(&net, &test.inputs)?;
    let wall_secs = start.elapsed().as_secs_f64();
    let confusion = metrics::confusion(&preds, &test.labels, spec.scheme.class_names())?;
    Ok(TrialResult {
        config_fingerprint: spec.fingerprint(),
        seed: config.seed,
        test_acc: metrics::accuracy(&confusion)?,
        head_only_acc,
        wall_secs,
        confusion,
        head_report,
        finetune_report,
        spec: spec.clone(),
    })
}

/// Runs independent jobs on `workers` threads, returning results in job order.
fn run_jobs<J: Sync, T: Send>(jobs: &[J], workers: usize, f: impl Fn(&J) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if workers <= 1 {
        return jobs.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(f).collect())
}

fn median_acc(results: &[&TrialResult]) -> f64 {
    let accs: Vec<f64> = results.iter().map(|r| r.test_acc).collect();
    box_stats(&accs).map(|b| b.0).unwrap_or(0.0)
}

/// Greedy stage-wise sweep: head structure, then pre-training rate, then
/// fine-tuning rate, then freeze depth. Each stage keeps the best value so
/// far by median test accuracy (first listed wins ties). Every trial uses
/// the same split, a fixed epoch budget (early stopping off) and each seed
/// in `seeds`. Trials repeated across stages are run once.
pub fn run_sensitivity(
    grid: &GridSpec,
    prep: &Prepared,
    scheme: LabelScheme,
    config: &TrainConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<TrialResult>> {
    grid.validate()?;
    if seeds.is_empty() {
        return Err(Error::Range("at least one seed is required".into()));
    }
    let mut current = TrialSpec {
        experiment: "sensitivity".into(),
        scheme,
        fraction: 1.0,
        head: grid.fc_structures[0],
        config: TrainConfig {
            early_stop_train_acc: None,
            lr_pretrain: grid.pretrain_lrs[0],
            lr_finetune: grid.finetune_lrs[0],
            frozen_blocks_finetune: grid.freeze_depths[0],
            ..config.clone()
        },
    };
    let mut done: HashMap<String, Vec<TrialResult>> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    type Setter = fn(&mut TrialSpec, &GridSpec, usize);
    let stages: [(usize, Setter); 4] = [
        (grid.fc_structures.len(), |s, g, i| s.head = g.fc_structures[i]),
        (grid.pretrain_lrs.len(), |s, g, i| s.config.lr_pretrain = g.pretrain_lrs[i]),
        (grid.finetune_lrs.len(), |s, g, i| s.config.lr_finetune = g.finetune_lrs[i]),
        (grid.freeze_depths.len(), |s, g, i| s.config.frozen_blocks_finetune = g.freeze_depths[i]),
    ];
    for (len, set) in stages {
        let candidates: Vec<TrialSpec> = (0..len)
            .map(|i| {
                let mut s = current.clone();
                set(&mut s, grid, i);
                s
            })
            .collect();
        let jobs: Vec<TrialSpec> = candidates
            .iter()
            .filter(|c| !done.contains_key(&c.fingerprint()))
            .flat_map(|c| {
                seeds.iter().map(move |&seed| TrialSpec {
                    config: TrainConfig { seed, ..c.config.clone() },
                    ..c.clone()
                })
            })
            .collect();
        for r in run_jobs(&jobs, workers, |spec| run_trial(prep, &prep.train, &prep.train_cache, spec))? {
            let fp = r.config_fingerprint.clone();
            if !done.contains_key(&fp) {
                order.push(fp.clone());
            }
            done.entry(fp).or_default().push(r);
        }
        let mut best: Option<(f64, &TrialSpec)> = None;
        for c in &candidates {
            let runs: Vec<&TrialResult> = done[&c.fingerprint()].iter().collect();
            let m = median_acc(&runs);
            if best.is_none_or(|(b, _)| m > b) {
                best = Some((m, c));
            }
        }
        current = best.expect("non-empty stage").1.clone();
    }
    Ok(order.into_iter().flat_map(|fp| done.remove(&fp).unwrap()).collect())
}

/// One transfer run per scheme and seed on a shared split.
pub fn run_granularity(
    prep: &Prepared,
    schemes: &[LabelScheme],
    head: (usize, usize),
    config: &TrainConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<TrialResult>> {
    let jobs: Vec<TrialSpec> = schemes
        .iter()
        .flat_map(|&scheme| {
            seeds.iter().map(move |&seed| TrialSpec {
                experiment: "granularity".into(),
                scheme,
                fraction: 1.0,
                head,
                config: TrainConfig { seed, ..config.clone() },
            })
        })
        .collect();
    run_jobs(&jobs, workers, |spec| run_trial(prep, &prep.train, &prep.train_cache, spec))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRow {
    pub fraction: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub n: usize,
}

/// For each fraction and seed, draws that share of the fixed training half
/// and runs a full transfer trial; summarizes each fraction's accuracies.
pub fn run_datasize(
    prep: &Prepared,
    fractions: &[f64],
    scheme: LabelScheme,
    head: (usize, usize),
    config: &TrainConfig,
    seeds: &[u64],
    workers: usize,
) -> Result<(Vec<TrialResult>, Vec<BoxRow>)> {
    if seeds.is_empty() {
        return Err(Error::Range("at least one repeat is required".into()));
    }
    let mut jobs = Vec::new();
    for (fi, &fraction) in fractions.iter().enumerate() {
        for &seed in seeds {
            let mut rng = SeededRng::derive(seed, STREAM_SUBSAMPLE + fi as u64);
            let subset = bootstrap_subsample(&prep.train, fraction, &mut rng)?;
            if subset.is_empty() {
                return Err(Error::Empty(format!("fraction {fraction} leaves no training samples")));
            }
            jobs.push((
                TrialSpec {
                    experiment: "datasize".into(),
                    scheme,
                    fraction,
                    head,
                    config: TrainConfig { seed, ..config.clone() },
                },
                subset,
            ));
        }
    }
    let results = run_jobs(&jobs, workers, |(spec, subset)| {
        let cache = extract_features(&prep.base, subset)?;
        run_trial(prep, subset, &cache, spec)
    })?;
    let rows = fractions
        .iter()
        .map(|&fraction| {
            let accs: Vec<f64> = results
                .iter()
                .filter(|r| r.spec.fraction == fraction)
                .map(|r| r.test_acc)
                .collect();
            let (median, q25, q75) = box_stats(&accs)?;
            Ok(BoxRow {
                fraction,
                median,
                q25,
                q75,
                n: accs.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((results, rows))
}

pub const RESULTS_HEADER: &str =
    "experiment,config_fingerprint,seed,fraction,scheme,h1,h2,lr_pre,lr_fine,frozen_blocks,test_acc,wall_secs";

/// One row per trial, sorted by configuration fingerprint then seed.
/// Without `timing` the wall_secs field is left empty so that reruns
/// produce identical files.
pub fn results_csv(results: &[TrialResult], timing: bool) -> String {
    let mut sorted: Vec<&TrialResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        a.config_fingerprint
            .cmp(&b.config_fingerprint)
            .then(a.seed.cmp(&b.seed))
    });
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in sorted {
        let s = &r.spec;
        let secs = if timing { format!("{:.3}", r.wall_secs) } else { String::new() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{:.6},{secs}",
            s.experiment,
            r.config_fingerprint,
            r.seed,
            s.fraction,
            s.scheme,
            s.head.0,
            s.head.1,
            s.config.lr_pretrain,
            s.config.lr_finetune,
            s.config.frozen_blocks_finetune,
            r.test_acc
        );
    }
    out
}

pub fn box_csv(rows: &[BoxRow]) -> String {
    let mut out = String::from("fraction,median,q25,q75,n\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6},{}", r.fraction, r.median, r.q25, r.q75, r.n);
    }
    out
}

pub fn emit_csv(results: &[TrialResult], timing: bool, path: &Path) -> Result<()> {
    fs::write(path, results_csv(results, timing)).map_err(|e| Error::io(path, e))
}
