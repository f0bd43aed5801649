use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use conceptdet::gradcheck::{self, GradCheckConfig};
use conceptdet::label_space::{build_vocabulary, ConceptId, LabelVocabulary};
use conceptdet::model::{init_model, stack_features};
use conceptdet::pipeline::reports::{history_csv, StatsReport};
use conceptdet::pipeline::{
    load_checkpoint, load_dataset, load_dataset_with, load_inputs, parse_config, read_concepts,
    records_from_scores, save_checkpoint, validate_submission, write_concepts, write_submission,
    Checkpoint, ConceptsFile, CONCEPTS_FILE,
};
use conceptdet::training::{split_validation, train};
use conceptdet::{mean_f1, Error, LossKind, MultiHotVector};

/// Failure with the exit status it maps to.
enum Failure {
    Usage(anyhow::Error),
    Failed(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        // bad configuration and missing inputs are usage problems
        let usage = e.chain().any(|c| match c.downcast_ref::<Error>() {
            Some(Error::Config(_)) => true,
            Some(Error::Io { source, .. }) => source.kind() == std::io::ErrorKind::NotFound,
            _ => false,
        });
        if usage {
            Failure::Usage(e)
        } else {
            Failure::Failed(e)
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "conceptdet", version, about = "Multi-label concept detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label cardinality, density and histograms of a dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30)]
        top: usize,
        #[arg(long, default_value_t = 50)]
        max_count: usize,
        /// Write summary.csv, concept_frequency.csv and concept_count.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded halving of a dataset into val1.tsv and val2.tsv.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a head and write model.ckpt and history.csv.
    Train {
        #[arg(long)]
        train: PathBuf,
        /// Concepts file selecting the training samples (default: <train>/concepts.tsv).
        #[arg(long)]
        train_manifest: Option<PathBuf>,
        #[arg(long)]
        val: PathBuf,
        /// Concepts file selecting the validation samples (default: <val>/concepts.tsv).
        #[arg(long)]
        val_manifest: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        /// Override a config entry, e.g. --set learning_rate=1e-3.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a submission file for every sample under --data.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the threshold stored in the checkpoint.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean per-sample F1 of a prediction file against ground truth.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Check a submission file; exits 1 when any rule is broken.
    ValidateSubmission {
        #[arg(long)]
        file: PathBuf,
        /// Concepts file whose labels form the allowed vocabulary.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients for every loss.
    Gradcheck {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stats {
            data,
            top,
            max_count,
            out,
        } => stats(&data, top, max_count, out.as_deref()),
        Command::Split { data, seed, out } => split(&data, seed, &out),
        Command::Train {
            train,
            train_manifest,
            val,
            val_manifest,
            config,
            overrides,
            seed,
            out,
        } => train_cmd(
            (&train, train_manifest.as_deref()),
            (&val, val_manifest.as_deref()),
            &config,
            &overrides,
            seed,
            &out,
        ),
        Command::Predict {
            model,
            data,
            threshold,
            out,
        } => predict(&model, &data, threshold, &out),
        Command::Evaluate { truth, pred } => evaluate(&truth, &pred),
        Command::ValidateSubmission { file, vocab } => validate(&file, vocab.as_deref()),
        Command::Gradcheck { seed, instances } => gradcheck_cmd(seed, instances),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Failed(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn stats(data: &Path, top: usize, max_count: usize, out: Option<&Path>) -> CmdResult {
    let d = load_dataset(data, None)?;
    let report = StatsReport::compute(&d, top, max_count)?;
    print!("{}", report.summary_csv());
    if let Some(out) = out {
        create_dir(out)?;
        write_file(&out.join("summary.csv"), &report.summary_csv())?;
        write_file(&out.join("concept_frequency.csv"), &report.frequency_csv())?;
        write_file(&out.join("concept_count.csv"), &report.count_csv())?;
    }
    Ok(())
}

fn split(data: &Path, seed: u64, out: &Path) -> CmdResult {
    let d = load_dataset(data, None)?;
    let (val1, val2) = split_validation(&d, seed)?;
    create_dir(out)?;
    write_concepts(out.join("val1.tsv"), &ConceptsFile::from_dataset(&val1))?;
    write_concepts(out.join("val2.tsv"), &ConceptsFile::from_dataset(&val2))?;
    println!("val1: {} samples\nval2: {} samples", val1.len(), val2.len());
    Ok(())
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Failure> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .ok_or_else(|| Failure::Usage(anyhow!("--set expects KEY=VALUE, got {s:?}")))
        })
        .collect()
}

/// `(directory, optional manifest)` of one split.
type Split<'a> = (&'a Path, Option<&'a Path>);

fn manifest_path((dir, manifest): Split) -> PathBuf {
    manifest
        .map(Path::to_owned)
        .unwrap_or_else(|| dir.join(CONCEPTS_FILE))
}

fn train_cmd(
    train_split: Split,
    val_split: Split,
    config: &Path,
    overrides: &[String],
    seed: u64,
    out: &Path,
) -> CmdResult {
    let mut overrides = parse_overrides(overrides)?;
    overrides.push(("seed".into(), seed.to_string()));
    let text = fs::read_to_string(config)
        .map_err(|e| Failure::Usage(anyhow!("reading {}: {e}", config.display())))?;
    let settings =
        parse_config(&text, &overrides).with_context(|| format!("in {}", config.display()))?;

    let train_concepts = manifest_path(train_split);
    let val_concepts = manifest_path(val_split);
    // the model scores every concept seen in either split
    let mut label_sets = read_concepts(&train_concepts)?.label_sets();
    label_sets.extend(read_concepts(&val_concepts)?.label_sets());
    let vocab = build_vocabulary(&label_sets)?;
    let train_set = load_dataset_with(train_split.0, &train_concepts, Some(&vocab))?;
    let val_set = load_dataset_with(val_split.0, &val_concepts, Some(&vocab))?;
    let input_dim = train_set
        .feature_dim()
        .ok_or_else(|| anyhow!("training set is empty"))?;

    let params = init_model(&settings.head(vocab.len()), input_dim)?;
    let outcome = train(params, &train_set, &val_set, &settings.training)?;

    create_dir(out)?;
    save_checkpoint(
        out.join("model.ckpt"),
        &Checkpoint {
            params: outcome.params,
            vocabulary: vocab,
            threshold: settings.training.threshold,
        },
    )?;
    write_file(&out.join("history.csv"), &history_csv(&outcome.history))?;
    match outcome.best_epoch {
        Some(e) => println!(
            "best epoch {e}: val F1 {:?} ({} epochs run)",
            outcome.history[e].val_f1,
            outcome.history.len()
        ),
        None => println!("no epochs run"),
    }
    Ok(())
}

fn predict(model: &Path, data: &Path, threshold: Option<f64>, out: &Path) -> CmdResult {
    let ckpt = load_checkpoint(model)?;
    let inputs = load_inputs(data)?;
    if inputs.is_empty() {
        return Err(Failure::Usage(anyhow!(
            "no samples under {}",
            data.display()
        )));
    }
    let x = stack_features(inputs.iter().map(|s| &s.features))?;
    let scores = ckpt.params.forward_eval(x.view())?;
    let ids: Vec<String> = inputs.into_iter().map(|s| s.sample_id).collect();
    let threshold = threshold.unwrap_or(ckpt.threshold);
    let records = records_from_scores(&ids, scores.view(), &ckpt.vocabulary, threshold)?;
    write_submission(out, &records)?;
    println!("{} records written to {}", records.len(), out.display());
    Ok(())
}

fn evaluate(truth: &Path, pred: &Path) -> CmdResult {
    let truth = read_concepts(truth)?;
    let pred = read_concepts(pred)?;
    let extra = pred
        .sample_ids()
        .filter(|id| truth.get(id).is_none())
        .count();
    if extra > 0 {
        eprintln!("note: ignoring {extra} prediction(s) for samples without ground truth");
    }
    let mut label_sets = truth.label_sets();
    label_sets.extend(pred.label_sets());
    let vocab = build_vocabulary(&label_sets)?;
    let encode = |labels: Option<&[ConceptId]>| -> Result<MultiHotVector, Error> {
        vocab.encode(labels.unwrap_or_default())
    };
    let mut truths = Vec::with_capacity(truth.len());
    let mut preds = Vec::with_capacity(truth.len());
    for (id, labels) in truth.rows() {
        truths.push(encode(Some(labels))?);
        // a sample without a prediction counts as an empty prediction
        preds.push(encode(pred.get(id))?);
    }
    println!("{:?}", mean_f1(&truths, &preds)?);
    Ok(())
}

fn validate(file: &Path, vocab: Option<&Path>) -> CmdResult {
    let vocab: Option<LabelVocabulary> = match vocab {
        Some(p) => Some(read_concepts(p)?.vocabulary()?),
        None => None,
    };
    let violations = validate_submission(file, vocab.as_ref())?;
    if violations.is_empty() {
        println!("ok");
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure::Failed(anyhow!(
        "{} violation(s)",
        violations.len()
    )))
}

fn gradcheck_cmd(seed: u64, instances: usize) -> CmdResult {
    let cfg = GradCheckConfig {
        instances,
        seed,
        ..GradCheckConfig::default()
    };
    let mut worst = 0.0f64;
    for kind in LossKind::ALL {
        let r = gradcheck::run(kind, &cfg)?;
        println!(
            "{kind}: max relative error {:e} over {} parameters",
            r.max_relative_error, r.parameters_checked
        );
        worst = worst.max(r.max_relative_error);
    }
    if worst >= 1e-4 {
        return Err(Failure::Failed(anyhow!(
            "gradient mismatch: {worst:e} >= 1e-4"
        )));
    }
    Ok(())
}
