use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rsc_core::data::{self, Dataset, LabelScheme, SyntheticConfig};
use rsc_core::experiments::{self, GridSpec, Prepared, TrialResult};
use rsc_core::metrics;
use rsc_core::network::{ArchitectureProfile, Network};
use rsc_core::training::{self, Examples, FeatureCache, TrainConfig, TrainReport};
use rsc_core::{Error, SeededRng};

/// Winter road surface condition classification with transfer learning.
#[derive(Parser, Debug)]
#[command(name = "rsc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic labeled road-image dataset.
    GenData(GenDataArgs),
    /// Train a whole network on a source dataset to serve as the pre-trained base.
    Pretrain(PretrainArgs),
    /// Cache features, train a head on them, then fine-tune the upper blocks.
    Transfer(TransferArgs),
    /// Confusion-matrix metrics of a trained model on a dataset.
    Eval(EvalArgs),
    /// Sensitivity, label-granularity or data-size study.
    Experiment(ExperimentArgs),
    /// Run a conv base over a dataset and store the flattened features.
    ExtractFeatures(ExtractArgs),
    /// Train a head on a feature cache and install it on its base.
    TrainHead(TrainHeadArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Task {
    /// Daylight highway scenes.
    Road,
    /// Overcast gravel-road scenes, for pre-training.
    Source,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileName {
    #[value(name = "vgg16_150")]
    Vgg16_150,
    #[value(name = "mini_32")]
    Mini32,
}

impl ProfileName {
    fn profile(self, classes: usize) -> ArchitectureProfile {
        match self {
            ProfileName::Vgg16_150 => ArchitectureProfile::vgg16_150(classes),
            ProfileName::Mini32 => ArchitectureProfile::mini_32(classes),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scheme {
    Five,
    Three,
    Two,
}

impl From<Scheme> for LabelScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Five => LabelScheme::Five,
            Scheme::Three => LabelScheme::Three,
            Scheme::Two => LabelScheme::Two,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Sensitivity,
    Granularity,
    Datasize,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    per_class: u32,
    #[arg(long, default_value = "32", value_parser = ["150", "32"])]
    size: String,
    #[arg(long, value_enum, default_value = "road")]
    task: Task,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "mini_32")]
    profile: ProfileName,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001, value_parser = positive)]
    lr: f64,
    #[arg(long, value_enum, default_value = "five")]
    scheme: Scheme,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..))]
    batch_size: u32,
    #[arg(long, default_value_t = 0.0, value_parser = momentum)]
    momentum: f64,
    /// Per-epoch training curve.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Hyper-parameters shared by the transfer-style commands.
#[derive(Args, Debug, Clone)]
struct TrainArgs {
    #[arg(long, default_value_t = 0.001, value_parser = positive)]
    lr_pre: f64,
    #[arg(long, default_value_t = 0.0005, value_parser = positive)]
    lr_fine: f64,
    #[arg(long, default_value_t = 50)]
    epochs_pre: usize,
    #[arg(long, default_value_t = 100)]
    epochs_fine: usize,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=5))]
    frozen_blocks: u8,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..))]
    batch_size: u32,
    #[arg(long, default_value_t = 0.0, value_parser = momentum)]
    momentum: f64,
    /// Training accuracy that ends a phase early; 0 disables early stopping.
    #[arg(long, default_value_t = 0.99, value_parser = unit_interval)]
    early_stop: f64,
    /// Hidden widths of the dense head, e.g. `512,256`; defaults to the profile's.
    #[arg(long, value_delimiter = ',')]
    head: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            lr_pretrain: self.lr_pre,
            lr_finetune: self.lr_fine,
            epochs_pretrain: self.epochs_pre,
            epochs_finetune: self.epochs_fine,
            batch_size: self.batch_size as usize,
            momentum: self.momentum,
            early_stop_train_acc: (self.early_stop > 0.0).then_some(self.early_stop),
            frozen_blocks_finetune: self.frozen_blocks as usize,
            seed: self.seed,
        }
    }

    fn head_widths(&self, base: &Network) -> Vec<usize> {
        self.head
            .clone()
            .unwrap_or_else(|| family_of(base).fc_head.clone())
    }
}

#[derive(Args, Debug)]
struct TransferArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "three")]
    scheme: Scheme,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "three")]
    scheme: Scheme,
    #[arg(long)]
    metrics: PathBuf,
    /// Also write the raw confusion matrix.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    base: PathBuf,
    /// Number of trial seeds, counted up from `--seed`.
    #[arg(long, default_value_t = experiments::DEFAULT_REPEATS as u32, value_parser = clap::value_parser!(u32).range(1..))]
    seeds: u32,
    #[arg(long)]
    out: PathBuf,
    /// Box statistics for `datasize`; defaults to `<out>` with a `.box.csv` suffix.
    #[arg(long)]
    box_out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = experiments::DATASIZE_FRACTIONS)]
    fractions: Vec<f64>,
    #[arg(long, value_enum, default_value = "three")]
    scheme: Scheme,
    /// Sensitivity grid: every structure, rate and depth, or only the freeze depths.
    #[arg(long, default_value = "full", value_parser = ["full", "depth"])]
    grid: String,
    #[arg(long, env = "RSC_WORKERS", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    workers: u32,
    /// Fill the wall_secs column. Timings differ between runs, so output
    /// files are no longer byte-identical.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainHeadArgs {
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    base: PathBuf,
    #[arg(long, value_enum, default_value = "three")]
    scheme: Scheme,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' is not a positive number")),
    }
}

fn momentum(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..1.0).contains(&v) => Ok(v),
        _ => Err(format!("'{s}' is not in [0, 1)")),
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("'{s}' is not in [0, 1]")),
    }
}

type CliResult<T = ()> = Result<T, Error>;

fn families() -> [ArchitectureProfile; 2] {
    [ArchitectureProfile::vgg16_150(0), ArchitectureProfile::mini_32(0)]
}

fn family_of(net: &Network) -> ArchitectureProfile {
    families()
        .into_iter()
        .find(|f| f.name == net.profile().name)
        .unwrap_or_else(|| net.profile().conv_base())
}

/// Loads a weight archive written for any known profile, with or without a head.
fn load_model(path: &Path) -> CliResult<Network> {
    let mut last = None;
    for family in families() {
        match Network::load_inferring_head(path, &family) {
            Ok(net) => return Ok(net),
            Err(e @ Error::Compatibility(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one family"))
}

fn load_data(dir: &Path, net: &Network) -> CliResult<Dataset> {
    let [_, h, w] = net.input_shape();
    data::preprocess_dataset(&data::load_dataset_dir(dir)?, (h, w))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn config_line(command: &str, fields: &[(&str, String)]) {
    let rendered: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("config: command={command} {}", rendered.join(" "));
}

fn gen_data(a: &GenDataArgs) -> CliResult {
    let size: usize = a.size.parse().expect("validated by clap");
    config_line(
        "gen-data",
        &[
            ("out", a.out.display().to_string()),
            ("per_class", a.per_class.to_string()),
            ("size", a.size.clone()),
            ("task", format!("{:?}", a.task).to_lowercase()),
            ("seed", a.seed.to_string()),
        ],
    );
    let cfg = match a.task {
        Task::Road => SyntheticConfig::road(size, a.seed),
        Task::Source => SyntheticConfig::source(size, a.seed),
    };
    let ds = data::generate_synthetic(&cfg, a.per_class as usize)?;
    data::save_dataset_dir(&a.out, &ds)?;
    println!("wrote {} images to {}", ds.len(), a.out.display());
    Ok(())
}

fn pretrain(a: &PretrainArgs) -> CliResult {
    let scheme = LabelScheme::from(a.scheme);
    let config = TrainConfig {
        lr_pretrain: a.lr,
        epochs_pretrain: a.epochs,
        batch_size: a.batch_size as usize,
        momentum: a.momentum,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let profile = a.profile.profile(scheme.num_classes());
    config_line(
        "pretrain",
        &[
            ("data", a.data.display().to_string()),
            ("profile", profile.canonical_text()),
            ("out", a.out.display().to_string()),
            ("epochs", a.epochs.to_string()),
            ("lr", a.lr.to_string()),
            ("scheme", scheme.to_string()),
            ("batch_size", a.batch_size.to_string()),
            ("momentum", a.momentum.to_string()),
            ("seed", a.seed.to_string()),
        ],
    );
    let mut net = Network::build(&profile, &mut SeededRng::new(a.seed))?;
    let ds = load_data(&a.data, &net)?;
    let report = training::train_epochs(&mut net, &Examples::from_dataset(&ds, scheme), None, &config, a.lr, a.epochs)?;
    net.save_weights(&a.out)?;
    if let Some(path) = &a.report {
        write(path, report.to_csv())?;
    }
    println!(
        "trained {} epochs ({}), final train accuracy {:.4}; weights fingerprint {}",
        report.epochs.len(),
        report.stop.as_str(),
        report.final_train_acc().unwrap_or(0.0),
        net.to_archive().fingerprint
    );
    Ok(())
}

fn train_fields(t: &TrainArgs, head: &[usize]) -> Vec<(&'static str, String)> {
    let cfg = t.config();
    vec![
        ("lr_pre", cfg.lr_pretrain.to_string()),
        ("lr_fine", cfg.lr_finetune.to_string()),
        ("epochs_pre", cfg.epochs_pretrain.to_string()),
        ("epochs_fine", cfg.epochs_finetune.to_string()),
        ("frozen_blocks", cfg.frozen_blocks_finetune.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("momentum", cfg.momentum.to_string()),
        ("early_stop", t.early_stop.to_string()),
        ("head", head.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")),
        ("seed", cfg.seed.to_string()),
    ]
}

/// Both phases in one file: rows numbered within each phase, each phase
/// closed by its own `# stop=` line.
fn two_phase_report(head: &TrainReport, fine: &TrainReport) -> String {
    let fine_csv = fine.to_csv();
    let fine_rows = fine_csv.split_once('\n').map_or("", |(_, rest)| rest);
    format!("{}{fine_rows}", head.to_csv())
}

fn transfer(a: &TransferArgs) -> CliResult {
    let base = load_model(&a.base)?;
    let scheme = LabelScheme::from(a.scheme);
    let widths = a.train.head_widths(&base);
    let mut fields = vec![
        ("base", a.base.display().to_string()),
        ("data", a.data.display().to_string()),
        ("scheme", scheme.to_string()),
    ];
    fields.extend(train_fields(&a.train, &widths));
    fields.push(("out", a.out.display().to_string()));
    config_line("transfer", &fields);
    let config = a.train.config();
    let ds = load_data(&a.data, &base)?;
    let (train, test) = data::split_train_test(&ds, experiments::TRAIN_FRACTION, &mut SeededRng::new(config.seed))?;
    let out = training::transfer_pipeline(&base, &train, &test, scheme, &widths, &config)?;
    out.network.save_weights(&a.out)?;
    write(&a.report, two_phase_report(&out.head_report, &out.finetune_report))?;
    println!(
        "head-only test accuracy {:.4}; fine-tuned test accuracy {:.4} ({} + {} epochs)",
        out.head_only_acc,
        out.fine_tuned_acc,
        out.head_report.epochs.len(),
        out.finetune_report.epochs.len()
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult {
    let scheme = LabelScheme::from(a.scheme);
    config_line(
        "eval",
        &[
            ("model", a.model.display().to_string()),
            ("data", a.data.display().to_string()),
            ("scheme", scheme.to_string()),
            ("metrics", a.metrics.display().to_string()),
        ],
    );
    let net = load_model(&a.model)?;
    if net.profile().num_classes != scheme.num_classes() {
        return Err(Error::Compatibility(format!(
            "model predicts {} classes but scheme '{scheme}' has {}",
            net.profile().num_classes,
            scheme.num_classes()
        )));
    }
    let ds = load_data(&a.data, &net)?;
    let ex = Examples::from_dataset(&ds, scheme);
    let preds = training::predict(&net, &ex.inputs)?;
    let cm = metrics::confusion(&preds, &ex.labels, scheme.class_names())?;
    write(&a.metrics, metrics::metrics_csv(&cm)?)?;
    if let Some(path) = &a.confusion {
        write(path, metrics::confusion_csv(&cm))?;
    }
    println!("accuracy {:.4} over {} images", metrics::accuracy(&cm)?, cm.total());
    Ok(())
}

fn print_medians(results: &[TrialResult], label: impl Fn(&TrialResult) -> String) {
    let mut keys: Vec<String> = Vec::new();
    for r in results {
        let k = label(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for k in keys {
        let accs: Vec<f64> = results.iter().filter(|r| label(r) == k).map(|r| r.test_acc).collect();
        let (median, q25, q75) = metrics::box_stats(&accs).expect("non-empty group");
        println!("{k}: median test accuracy {median:.4} (q25 {q25:.4}, q75 {q75:.4}, n={})", accs.len());
    }
}

fn experiment(a: &ExperimentArgs) -> CliResult {
    let base = load_model(&a.base)?;
    let scheme = LabelScheme::from(a.scheme);
    let widths = a.train.head_widths(&base);
    let head = match widths[..] {
        [h1, h2] => (h1, h2),
        _ => return Err(Error::Profile(format!("experiments need a two-layer head, got {widths:?}"))),
    };
    let kind = format!("{:?}", a.kind).to_lowercase();
    let mut fields = vec![
        ("kind", kind.clone()),
        ("base", a.base.display().to_string()),
        ("data", a.data.display().to_string()),
        ("scheme", scheme.to_string()),
        ("seeds", a.seeds.to_string()),
        ("workers", a.workers.to_string()),
    ];
    if matches!(a.kind, Kind::Datasize) {
        fields.push(("fractions", format!("{:?}", a.fractions)));
    }
    if matches!(a.kind, Kind::Sensitivity) {
        fields.push(("grid", a.grid.clone()));
    }
    fields.extend(train_fields(&a.train, &widths));
    config_line("experiment", &fields);

    let config = a.train.config();
    let seeds: Vec<u64> = (0..a.seeds as u64).map(|i| config.seed + i).collect();
    let workers = a.workers as usize;
    let ds = load_data(&a.data, &base)?;
    let prep = Prepared::new(&base, &ds, config.seed)?;
    let results = match a.kind {
        Kind::Sensitivity => {
            let grid = if a.grid == "depth" {
                GridSpec {
                    freeze_depths: GridSpec::standard().freeze_depths,
                    ..GridSpec::single(head, &config)
                }
            } else {
                GridSpec::standard()
            };
            let results = experiments::run_sensitivity(&grid, &prep, scheme, &config, &seeds, workers)?;
            print_medians(&results, |r| {
                let c = &r.spec.config;
                format!(
                    "head {}-{} lr_pre {} lr_fine {} frozen {}",
                    r.spec.head.0, r.spec.head.1, c.lr_pretrain, c.lr_finetune, c.frozen_blocks_finetune
                )
            });
            results
        }
        Kind::Granularity => {
            let results = experiments::run_granularity(&prep, &LabelScheme::ALL, head, &config, &seeds, workers)?;
            print_medians(&results, |r| format!("{} classes", r.spec.scheme));
            let merged: Vec<f64> = results
                .iter()
                .filter(|r| r.spec.scheme == LabelScheme::Five)
                .map(|r| {
                    metrics::merge_classes(&r.confusion, &[vec![0, 1], vec![2], vec![3], vec![4]])
                        .and_then(|m| metrics::accuracy(&m))
                })
                .collect::<Result<_, _>>()?;
            let (m, _, _) = metrics::box_stats(&merged)?;
            println!("five classes with bare and lt25 merged: median test accuracy {m:.4}");
            results
        }
        Kind::Datasize => {
            let (results, rows) =
                experiments::run_datasize(&prep, &a.fractions, scheme, head, &config, &seeds, workers)?;
            let box_path = a.box_out.clone().unwrap_or_else(|| a.out.with_extension("box.csv"));
            write(&box_path, experiments::box_csv(&rows))?;
            for r in &rows {
                println!(
                    "fraction {}: median {:.4} (q25 {:.4}, q75 {:.4}, n={})",
                    r.fraction, r.median, r.q25, r.q75, r.n
                );
            }
            results
        }
    };
    experiments::emit_csv(&results, a.timing, &a.out)?;
    println!("reference accuracies on the field dataset (not reproducible here):");
    for (name, acc) in experiments::FIELD_REFERENCE {
        println!("  {name}: {acc:.4}");
    }
    Ok(())
}

fn extract(a: &ExtractArgs) -> CliResult {
    config_line(
        "extract-features",
        &[
            ("base", a.base.display().to_string()),
            ("data", a.data.display().to_string()),
            ("out", a.out.display().to_string()),
        ],
    );
    let base = load_model(&a.base)?.truncate_to_conv_base();
    let ds = load_data(&a.data, &base)?;
    let cache = training::extract_features(&base, &ds)?;
    cache.save(&a.out)?;
    println!("cached {} feature vectors of width {}", cache.len(), cache.width);
    Ok(())
}

fn train_head(a: &TrainHeadArgs) -> CliResult {
    let base = load_model(&a.base)?.truncate_to_conv_base();
    let scheme = LabelScheme::from(a.scheme);
    let widths = a.train.head_widths(&base);
    let mut fields = vec![
        ("cache", a.cache.display().to_string()),
        ("base", a.base.display().to_string()),
        ("scheme", scheme.to_string()),
    ];
    fields.extend(train_fields(&a.train, &widths));
    config_line("train-head", &fields);
    let cache = FeatureCache::load(&a.cache)?;
    if cache.base_fingerprint != base.weights_fingerprint() {
        return Err(Error::Compatibility("feature cache was produced by a different base".into()));
    }
    let (head, report) = training::train_head_on_cache(&cache, None, &widths, scheme, &a.train.config())?;
    let net = Network::assemble(&base, head)?;
    net.save_weights(&a.out)?;
    if let Some(path) = &a.report {
        write(path, report.to_csv())?;
    }
    println!(
        "trained head for {} epochs, final train accuracy {:.4}",
        report.epochs.len(),
        report.final_train_acc().unwrap_or(0.0)
    );
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Transfer(a) => transfer(a),
        Command::Eval(a) => eval(a),
        Command::Experiment(a) => experiment(a),
        Command::ExtractFeatures(a) => extract(a),
        Command::TrainHead(a) => train_head(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let mut lines = msg.lines();
            let first = lines.next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error:usage: {first}");
            for line in lines {
                eprintln!("{line}");
            }
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error:{}: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
