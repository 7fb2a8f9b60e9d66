//! Command-line front end: generate, train, verify, report, validate.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 I/O failure.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use medverify_core::corpus::{ingest_labels, ingest_posts, ingest_profiles, IngestIssue};
use medverify_core::lexicon::LexiconError;
use medverify_core::pipeline::{self, PipelineError, TrainParams};
use medverify_core::report::{
    emit_verdicts, parse_verdicts, render_text, ReportError, VerdictFormat,
};
use medverify_core::synthgen::{generate, CommunitySpec, SynthError};
use medverify_core::verifier::{AliasTable, ReferenceModel, Thresholds, VerifyError};
use medverify_core::weighting::{DEFAULT_CAP, DEFAULT_EPSILON};
use medverify_core::{build_tracks, load_lexicon, summarize, Corpus, MarkerLexicon};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Io(_) => 2,
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self::Io(format!("{}: {e}", path.display()))
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(io) => Self::Io(io.to_string()),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io(io) => Self::Io(io.to_string()),
            other => Self::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "medverify",
    version,
    about = "Verify claimed medical specialties from post language"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VerdictFormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormatArg {
    Text,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct ThresholdArgs {
    /// Minimum tokens for a user to be classified.
    #[arg(long, default_value_t = Thresholds::default().min_tokens)]
    pub min_tokens: usize,
    /// Minimum posts for a user to be classified.
    #[arg(long, default_value_t = Thresholds::default().min_posts)]
    pub min_posts: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic community from a spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a reference model from labeled users.
    Train {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "community")]
        community_id: String,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: f64,
        /// Acceptance radius = mean + k * std of training distances.
        #[arg(long, default_value_t = Thresholds::default().radius_multiplier)]
        radius_multiplier: f64,
        #[arg(long, default_value = "1")]
        model_version: String,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Assign a verification outcome to every user.
    Verify {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// JSON object mapping claim text to specialty id.
        #[arg(long)]
        aliases: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: VerdictFormatArg,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Summarize verdicts into an outcome distribution.
    Report {
        #[arg(long)]
        verdicts: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormatArg,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Model file, to record its version in the report.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Timestamp recorded in JSON reports. Falls back to
        /// SOURCE_DATE_EPOCH, then the current time.
        #[arg(long)]
        generated_at: Option<String>,
    },
    /// Check corpus files and a lexicon without training.
    Validate {
        #[arg(long)]
        posts: Option<PathBuf>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen {
            spec,
            lexicon,
            out_dir,
        } => cmd_gen(&spec, &lexicon, &out_dir),
        Command::Train {
            posts,
            profiles,
            labels,
            lexicon,
            out,
            community_id,
            epsilon,
            cap,
            radius_multiplier,
            model_version,
            thresholds,
        } => {
            let params = TrainParams {
                thresholds: Thresholds {
                    min_tokens: thresholds.min_tokens,
                    min_posts: thresholds.min_posts,
                    radius_multiplier,
                },
                epsilon,
                cap,
                model_version,
            };
            cmd_train(
                &posts,
                &profiles,
                &labels,
                &lexicon,
                &out,
                &community_id,
                &params,
            )
        }
        Command::Verify {
            posts,
            profiles,
            model,
            lexicon,
            aliases,
            out,
            format,
            thresholds,
        } => {
            let format = match format {
                VerdictFormatArg::Csv => VerdictFormat::Csv,
                VerdictFormatArg::Json => VerdictFormat::Json,
            };
            let thresholds = Thresholds {
                min_tokens: thresholds.min_tokens,
                min_posts: thresholds.min_posts,
                ..Thresholds::default()
            };
            cmd_verify(
                &posts,
                &profiles,
                &model,
                &lexicon,
                aliases.as_deref(),
                &out,
                format,
                &thresholds,
            )
        }
        Command::Report {
            verdicts,
            format,
            out,
            model,
            generated_at,
        } => cmd_report(
            &verdicts,
            format,
            out.as_deref(),
            model.as_deref(),
            generated_at,
        ),
        Command::Validate {
            posts,
            profiles,
            labels,
            lexicon,
        } => cmd_validate(
            posts.as_deref(),
            profiles.as_deref(),
            labels.as_deref(),
            lexicon.as_deref(),
        ),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let mut w = File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))?;
    w.write_all(contents)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn read_lexicon(path: &Path) -> Result<MarkerLexicon, CliError> {
    load_lexicon(&read_bytes(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<ReferenceModel, CliError> {
    ReferenceModel::from_json(&read_bytes(path)?)
        .map_err(|e: VerifyError| CliError::Validation(format!("{}: {e}", path.display())))
}

fn report_issues(path: &Path, issues: &[IngestIssue]) {
    for issue in issues {
        warn!("{}: {issue}", path.display());
    }
}

fn load_corpus(community_id: &str, posts: &Path, profiles: &Path) -> Result<Corpus, CliError> {
    let (post_records, post_issues) = ingest_posts(open(posts)?)
        .map_err(|e| CliError::Io(format!("{}: {e}", posts.display())))?;
    report_issues(posts, &post_issues);
    let (profile_records, profile_issues) = ingest_profiles(open(profiles)?)
        .map_err(|e| CliError::Io(format!("{}: {e}", profiles.display())))?;
    report_issues(profiles, &profile_issues);
    let corpus = build_tracks(community_id, post_records, profile_records);
    info!(
        "loaded {} posts and {} profiles for {} users",
        corpus.posts.len(),
        corpus.profiles.len(),
        corpus.tracks.len()
    );
    Ok(corpus)
}

fn cmd_gen(spec: &Path, lexicon: &Path, out_dir: &Path) -> Result<(), CliError> {
    let lexicon = read_lexicon(lexicon)?;
    let spec = CommunitySpec::from_json(&read_bytes(spec)?)?;
    let community = generate(&spec, &lexicon)?;
    community
        .write_to_dir(out_dir)
        .map_err(|e| CliError::io(out_dir, e))?;
    info!(
        "wrote {} users and {} posts to {}",
        community.profiles.len(),
        community.posts.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_train(
    posts: &Path,
    profiles: &Path,
    labels: &Path,
    lexicon: &Path,
    out: &Path,
    community_id: &str,
    params: &TrainParams,
) -> Result<(), CliError> {
    let lexicon = read_lexicon(lexicon)?;
    let corpus = load_corpus(community_id, posts, profiles)?;
    let (label_records, label_issues) = ingest_labels(open(labels)?)
        .map_err(|e| CliError::Io(format!("{}: {e}", labels.display())))?;
    report_issues(labels, &label_issues);
    let output = pipeline::train(&corpus, &label_records, &lexicon, params)?;
    for user in &output.excluded {
        warn!("labeled user '{user}' has too little content and was left out of training");
    }
    info!(
        "trained on {} users across {} specialties",
        output.training.len(),
        output.model.specialty_ids().len()
    );
    write_file(out, output.model.to_json().as_bytes())
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    posts: &Path,
    profiles: &Path,
    model: &Path,
    lexicon: &Path,
    aliases: Option<&Path>,
    out: &Path,
    format: VerdictFormat,
    thresholds: &Thresholds,
) -> Result<(), CliError> {
    let model = read_model(model)?;
    let lexicon = read_lexicon(lexicon)?;
    pipeline::check_compatibility(&model, &lexicon)?;
    let aliases = match aliases {
        Some(path) => AliasTable::from_json(&read_bytes(path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?,
        None => AliasTable::default(),
    };
    for target in aliases.unknown_targets(&model) {
        warn!("alias target '{target}' is not a specialty of the model");
    }
    let corpus = load_corpus(&model.community_id, posts, profiles)?;
    let verdicts = pipeline::verify(&corpus, &model, &lexicon, &aliases, thresholds)?;
    let mut buf = Vec::new();
    emit_verdicts(&verdicts, format, &mut buf)?;
    write_file(out, &buf)
}

fn generated_at(explicit: Option<String>) -> Result<String, CliError> {
    if let Some(value) = explicit {
        return Ok(value);
    }
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        let secs: i64 = epoch.trim().parse().map_err(|_| {
            CliError::Validation(format!("SOURCE_DATE_EPOCH is not an integer: '{epoch}'"))
        })?;
        let instant = chrono::DateTime::from_timestamp(secs, 0).ok_or_else(|| {
            CliError::Validation(format!("SOURCE_DATE_EPOCH out of range: {secs}"))
        })?;
        return Ok(instant.to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    Ok(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn cmd_report(
    verdicts: &Path,
    format: ReportFormatArg,
    out: Option<&Path>,
    model: Option<&Path>,
    explicit_time: Option<String>,
) -> Result<(), CliError> {
    let parsed = parse_verdicts(&read_bytes(verdicts)?).map_err(|e| match e {
        ReportError::Malformed(m) => CliError::Validation(format!("{}: {m}", verdicts.display())),
        other => other.into(),
    })?;
    let mut report = summarize(&parsed);
    if let Some(path) = model {
        report = report.with_model_version(read_model(path)?.model_version);
    }
    let rendered = match format {
        ReportFormatArg::Text => render_text(&report),
        ReportFormatArg::Json => report
            .with_generated_at(generated_at(explicit_time)?)
            .to_json(),
    };
    match out {
        Some(path) => write_file(path, rendered.as_bytes()),
        None => io::stdout()
            .write_all(rendered.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn cmd_validate(
    posts: Option<&Path>,
    profiles: Option<&Path>,
    labels: Option<&Path>,
    lexicon: Option<&Path>,
) -> Result<(), CliError> {
    let mut problems = 0usize;
    let mut tally = |path: &Path, issues: &[IngestIssue]| {
        for issue in issues {
            println!("{}: {issue}", path.display());
        }
        problems += issues.len();
    };
    if let Some(path) = posts {
        let (_, issues) =
            ingest_posts(open(path)?).map_err(|e| CliError::io(path, io::Error::other(e)))?;
        tally(path, &issues);
    }
    if let Some(path) = profiles {
        let (_, issues) =
            ingest_profiles(open(path)?).map_err(|e| CliError::io(path, io::Error::other(e)))?;
        tally(path, &issues);
    }
    if let Some(path) = labels {
        let (_, issues) =
            ingest_labels(open(path)?).map_err(|e| CliError::io(path, io::Error::other(e)))?;
        tally(path, &issues);
    }
    if let Some(path) = lexicon {
        match load_lexicon(&read_bytes(path)?) {
            Ok(lex) => println!(
                "{}: lexicon '{}' with {} groups and {} markers",
                path.display(),
                lex.lexicon_version,
                lex.groups.len(),
                lex.markers.len()
            ),
            Err(LexiconError::Invalid(violations)) => {
                for v in &violations {
                    println!("{}: {v}", path.display());
                }
                problems += violations.len();
            }
            Err(e) => {
                println!("{}: {e}", path.display());
                problems += 1;
            }
        }
    }
    if problems > 0 {
        return Err(CliError::Validation(format!("{problems} problem(s) found")));
    }
    println!("no problems found");
    Ok(())
}
