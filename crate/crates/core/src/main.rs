use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sitgrid::classifiers::{fit, ClassifierError, ClassifierModel, ClassifierSpec, Family};
use sitgrid::data::{load_dataset, save_dataset, PostureLabel, Variant};
use sitgrid::evaluation::{
    classification_report, cross_validate, kfold_split, ClassificationReport, EvalError,
};
use sitgrid::experiment::{
    load_matrix_dir, posture_plot_csv, run_experiment, run_matrix, ExperimentError, ExperimentSpec,
};
use sitgrid::features::{
    build_feature_matrix, select_recurrent, FeatureError, FeatureMatrix, FeatureSpec, MatSelection,
    RecurrentSelector,
};
use sitgrid::preprocess::{
    preprocess_pipeline, BaselineSource, OutlierPolicy, PreprocessConfig, PreprocessError,
};
use sitgrid::synth::{self, GeneratorConfig, SynthError};

#[derive(Parser)]
#[command(
    name = "sitgrid",
    version,
    about = "Sitting-posture classification from smart-chair pressure mats"
)]
struct Cli {
    /// Root seed; overrides any seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV (config: generator overrides).
    Synth {
        #[arg(long, default_value = "controlled")]
        variant: Variant,
    },
    /// Outlier replacement and still-baseline normalization (config: preprocess options).
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// `sigma:K` or `cap:VALUE`.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        no_normalize: bool,
        /// `still` or `all`; defaults per variant.
        #[arg(long)]
        baseline: Option<BaselineSource>,
    },
    /// Build a feature matrix CSV (config: feature spec).
    Featurize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "full")]
        recurrent: RecurrentSelector,
        #[arg(long)]
        mats: Option<MatSelection>,
        /// Comma list of raw, com, quadrants, edges.
        #[arg(long)]
        groups: Option<String>,
        /// Comma list of labels to keep.
        #[arg(long)]
        classes: Option<String>,
    },
    /// Fit one classifier on every row (config: classifier spec).
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        family: Option<Family>,
    },
    /// Cross-validate a classifier, or score a saved model with `--model`.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, conflicts_with = "family")]
        model: Option<PathBuf>,
        #[arg(long)]
        family: Option<Family>,
        #[command(flatten)]
        folds: FoldArgs,
    },
    /// Run one experiment spec (config: experiment spec).
    Experiment,
    /// Run a directory or JSON array of experiment specs (config: that path).
    Matrix,
    /// Write `class,com_row,com_col` from a feature CSV.
    Plot {
        #[arg(long)]
        features: PathBuf,
    },
}

#[derive(Args)]
struct FoldArgs {
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    no_stratify: bool,
    #[arg(long)]
    group_aware: bool,
}

enum Failure {
    Usage(String),
    Data(String),
    Stage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Stage(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Stage(m) => m,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn stage(e: impl std::fmt::Display) -> Failure {
    Failure::Stage(e.to_string())
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Spec(_) | ExperimentError::EmptyMatrix => {
                Failure::Usage(e.to_string())
            }
            ExperimentError::Data(_) | ExperimentError::Io { .. } => data(e),
            ExperimentError::Stage { .. } => stage(e),
        }
    }
}

fn feature_failure(e: FeatureError) -> Failure {
    match e {
        FeatureError::Data(_) => data(e),
        FeatureError::Spec(_) => Failure::Usage(e.to_string()),
        _ => stage(e),
    }
}

fn model_failure(e: ClassifierError) -> Failure {
    match e {
        ClassifierError::InvalidSpec(_) => Failure::Usage(e.to_string()),
        ClassifierError::Io(_)
        | ClassifierError::CorruptModel(_)
        | ClassifierError::FormatVersionMismatch { .. } => data(e),
        _ => stage(e),
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Failure::Usage(format!("--{flag} is required for this command")))
}

fn read_config(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))
}

fn write_out(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| data(format!("cannot write {}: {e}", path.display())))
}

fn parse_policy(s: &str) -> CliResult<OutlierPolicy> {
    let bad = || Failure::Usage(format!("bad --policy `{s}` (sigma:K or cap:VALUE)"));
    let (kind, value) = s.split_once(':').ok_or_else(bad)?;
    let v: f64 = value.parse().map_err(|_| bad())?;
    match kind {
        "sigma" => Ok(OutlierPolicy::SigmaMultiple { k: v }),
        "cap" => Ok(OutlierPolicy::AbsoluteCap { cap: v }),
        _ => Err(bad()),
    }
}

fn parse_classes(s: &str) -> CliResult<Vec<PostureLabel>> {
    s.split(',')
        .map(|l| l.trim().parse::<PostureLabel>().map_err(Failure::Usage))
        .collect()
}

fn classifier_spec(cli: &Cli, family: Option<Family>) -> CliResult<ClassifierSpec> {
    let mut spec = match (&cli.config, family) {
        (Some(path), _) => serde_json::from_str::<ClassifierSpec>(&read_config(path)?)
            .map_err(|e| Failure::Usage(format!("classifier config: {e}")))?,
        (None, Some(f)) => ClassifierSpec::new(f, 0),
        (None, None) => {
            return Err(Failure::Usage(
                "pass --family or a classifier --config".into(),
            ))
        }
    };
    if let Some(f) = family {
        if f != spec.family() {
            return Err(Failure::Usage(format!(
                "--family {} disagrees with config family {}",
                f.as_str(),
                spec.family().as_str()
            )));
        }
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn write_report(dir: &Path, report: &ClassificationReport) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(data)?;
    write_out(&dir.join("report.txt"), report.to_text())?;
    write_out(
        &dir.join("report.json"),
        serde_json::to_string_pretty(report).expect("report serializes") + "\n",
    )?;
    write_out(&dir.join("confusion.csv"), report.confusion_csv())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Synth { variant } => {
            let out = required(&cli.out, "out")?;
            let mut cfg = match &cli.config {
                Some(p) => GeneratorConfig::from_json_with_defaults(&read_config(p)?, *variant)
                    .map_err(|e| Failure::Usage(e.to_string()))?,
                None => GeneratorConfig::default_for(*variant),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let ds = synth::generate(*variant, &cfg)
                .map_err(|e: SynthError| Failure::Usage(e.to_string()))?;
            save_dataset(&ds, out).map_err(data)?;
            println!(
                "wrote {} {} records to {}",
                ds.len(),
                variant.as_str(),
                out.display()
            );
        }
        Command::Preprocess {
            input,
            policy,
            no_normalize,
            baseline,
        } => {
            let out = required(&cli.out, "out")?;
            let mut cfg = match &cli.config {
                Some(p) => serde_json::from_str::<PreprocessConfig>(&read_config(p)?)
                    .map_err(|e| Failure::Usage(format!("preprocess config: {e}")))?,
                None => PreprocessConfig::default(),
            };
            if let Some(p) = policy {
                cfg.policy = parse_policy(p)?;
            }
            if *no_normalize {
                cfg.normalize = false;
            }
            if baseline.is_some() {
                cfg.baseline_source = *baseline;
            }
            let ds = load_dataset(input).map_err(data)?;
            let clean = preprocess_pipeline(&ds, &cfg).map_err(|e: PreprocessError| match e {
                PreprocessError::Policy(_) => Failure::Usage(e.to_string()),
                _ => stage(e),
            })?;
            save_dataset(&clean, out).map_err(data)?;
            println!("wrote {} records to {}", clean.len(), out.display());
        }
        Command::Featurize {
            input,
            recurrent,
            mats,
            groups,
            classes,
        } => {
            let out = required(&cli.out, "out")?;
            let mut spec = match &cli.config {
                Some(p) => serde_json::from_str::<FeatureSpec>(&read_config(p)?)
                    .map_err(|e| Failure::Usage(format!("feature config: {e}")))?,
                None => FeatureSpec::default(),
            };
            if let Some(g) = groups {
                spec = FeatureSpec::from_groups(g, spec.mats).map_err(feature_failure)?;
            }
            if let Some(m) = mats {
                spec.mats = *m;
            }
            let mut ds = load_dataset(input).map_err(data)?;
            if let Some(c) = classes {
                let keep = parse_classes(c)?;
                ds = ds.filter(|r| keep.contains(&r.posture));
            }
            let ds = select_recurrent(&ds, *recurrent).map_err(feature_failure)?;
            let fm = build_feature_matrix(&ds, &spec).map_err(feature_failure)?;
            fm.save(out).map_err(feature_failure)?;
            println!(
                "wrote {} rows x {} features to {}",
                fm.n_rows(),
                fm.n_cols(),
                out.display()
            );
        }
        Command::Train { features, family } => {
            let out = required(&cli.out, "out")?;
            let spec = classifier_spec(cli, *family)?;
            let fm = FeatureMatrix::load(features).map_err(feature_failure)?;
            let model = fit(&spec, &fm).map_err(model_failure)?;
            model.save(out).map_err(model_failure)?;
            for w in &model.warnings {
                eprintln!("warning: {w:?}");
            }
            println!(
                "wrote {} model to {}",
                spec.family().display_name(),
                out.display()
            );
        }
        Command::Evaluate {
            features,
            model,
            family,
            folds,
        } => {
            let out = required(&cli.out, "out")?;
            let fm = FeatureMatrix::load(features).map_err(feature_failure)?;
            let report = if let Some(path) = model {
                let model = ClassifierModel::load(path).map_err(model_failure)?;
                let preds = model.predict(&fm).map_err(model_failure)?;
                let mut classes = model.classes.clone();
                classes.extend(fm.labels().iter().copied());
                classes.sort();
                classes.dedup();
                classification_report(fm.labels(), &preds, &classes).map_err(stage)?
            } else {
                let spec = classifier_spec(cli, *family)?;
                let plan = kfold_split(
                    fm.labels(),
                    Some(fm.groups()),
                    folds.k,
                    !folds.no_stratify,
                    folds.group_aware,
                    spec.seed,
                )
                .map_err(|e: EvalError| match e {
                    EvalError::TooFewRows { .. } => Failure::Usage(e.to_string()),
                    _ => stage(e),
                })?;
                let cv = cross_validate(&fm, &spec, &plan).map_err(stage)?;
                fs::create_dir_all(out).map_err(data)?;
                write_out(
                    &out.join("folds.json"),
                    serde_json::to_string_pretty(&serde_json::json!({
                        "family": cv.family,
                        "accuracy": cv.accuracy,
                        "mean_fold_accuracy": cv.mean_accuracy,
                        "sd_fold_accuracy": cv.sd_accuracy,
                        "fold_accuracies": cv.fold_accuracies,
                        "fold_sizes": cv.fold_sizes,
                    }))
                    .expect("serializes")
                        + "\n",
                )?;
                cv.report
            };
            write_report(out, &report)?;
            print!("{}", report.to_text());
        }
        Command::Experiment => {
            let path = required(&cli.config, "config")?;
            let mut spec = ExperimentSpec::from_json(&read_config(path)?)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let result = run_experiment(&spec, cli.out.as_deref())?;
            print!("{}", result.report_text());
            for (name, secs) in &result.timing {
                eprintln!("timing {name}: {secs:.3}s");
            }
        }
        Command::Matrix => {
            let path = required(&cli.config, "config")?;
            let mut specs = if path.is_dir() {
                load_matrix_dir(path)?
            } else {
                serde_json::from_str::<Vec<ExperimentSpec>>(&read_config(path)?)
                    .map_err(|e| Failure::Usage(format!("matrix config: {e}")))?
            };
            if let Some(seed) = cli.seed {
                for s in &mut specs {
                    s.seed = seed;
                }
            }
            let summary = run_matrix(&specs, cli.out.as_deref())?;
            print!("{}", summary.to_text());
            if !summary.failures.is_empty() {
                return Err(Failure::Stage(format!(
                    "{} experiment(s) failed",
                    summary.failures.len()
                )));
            }
        }
        Command::Plot { features } => {
            let out = required(&cli.out, "out")?;
            let fm = FeatureMatrix::load(features).map_err(feature_failure)?;
            let csv = posture_plot_csv(&fm).map_err(|e| match e {
                FeatureError::MissingFeature(_) => data(e),
                _ => stage(e),
            })?;
            write_out(out, csv)?;
            println!("wrote {} points to {}", fm.n_rows(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
