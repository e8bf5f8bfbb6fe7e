//! `lexgap` command-line verbs. Each verb reads its inputs, calls the
//! library and prints the result.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use lexgap_core::agreement::{krippendorff_alpha, krippendorff_alpha_exact, Alpha, ReliabilityMatrix};
use lexgap_core::ids::{CampaignId, LanguageCode};
use lexgap_core::ingestion::{
    field_centroid, load_embeddings, parse_dataset, semantic_filter, write_dataset, SemanticFieldSpec,
};
use lexgap_core::lexicon::{EntryProvenance, Lexicon, LexiconDocument};
use lexgap_core::sim::{simulate, SimConfig};
use lexgap_service::{ServiceConfig, Store};

#[derive(Debug, Parser)]
#[command(name = "lexgap", version, about = "Lexical gap discovery toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Parse word,gloss datasets and load them into a lexicon document.
    Ingest {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, default_value = "eng")]
        source_language: String,
        #[arg(long, default_value = "arb")]
        target_language: String,
        /// Lexicon document to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep the dataset rows that are close to a semantic field.
    Filter {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// JSON object with name, definition and seed_terms.
        #[arg(long)]
        field_spec: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Krippendorff's alpha of a reliability matrix CSV.
    Alpha {
        #[arg(long)]
        matrix: PathBuf,
        /// Also print the exact rational value.
        #[arg(long)]
        exact: bool,
    },
    /// Run a synthetic campaign end to end with seeded workers.
    Simulate {
        #[arg(long, default_value_t = 3)]
        workers: usize,
        #[arg(long, default_value_t = 1.0)]
        accuracy: f64,
        /// Accuracy of reserve workers; defaults to --accuracy.
        #[arg(long)]
        reserve_accuracy: Option<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        entries: usize,
        #[arg(long, default_value_t = 35)]
        questions_per_task: usize,
        /// Directory for the event log, report and lexicon.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-task report of a finalized campaign in a data directory.
    Report {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        campaign: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the lexicon document of one language.
    Export {
        /// Service data directory to read the lexicon from.
        #[arg(long, conflicts_with = "lexicon", required_unless_present = "lexicon")]
        data_dir: Option<PathBuf>,
        /// Lexicon document written by `ingest`.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        language: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the HTTP service. Flags override the environment.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Domain(String),
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn lang(code: &str) -> Result<LanguageCode, CliError> {
    LanguageCode::new(code).map_err(domain)
}

/// Writes to `--out` when given, otherwise returns the text for stdout.
fn emit(out: Option<&Path>, text: String) -> Result<String, CliError> {
    match out {
        Some(p) => {
            write_file(p, &text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn ingest(
    source: &Path,
    target: Option<&Path>,
    source_language: &str,
    target_language: &str,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let mut lexicon = Lexicon::new();
    let mut summary = String::new();
    let mut inputs = vec![(source, lang(source_language)?)];
    if let Some(t) = target {
        inputs.push((t, lang(target_language)?));
    }
    for (path, language) in inputs {
        let rows = parse_dataset(&read(path)?).map_err(domain)?;
        let mut added = 0;
        for row in &rows {
            let gloss = row
                .gloss
                .as_deref()
                .ok_or_else(|| CliError::Domain(format!("{}: {} has no gloss", path.display(), row.word)))?;
            lexicon
                .find_or_add_entry(&language, &row.word, gloss, EntryProvenance::Imported)
                .map_err(domain)?;
            added += 1;
        }
        summary.push_str(&format!("{language}: {added} entries\n"));
    }
    if let Some(p) = out {
        write_file(p, &lexicon.export_all().to_json())?;
    }
    Ok(summary)
}

fn filter(
    source: &Path,
    embeddings: &Path,
    field_spec: &Path,
    threshold: f64,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let rows = parse_dataset(&read(source)?).map_err(domain)?;
    let table = load_embeddings(&read(embeddings)?).map_err(domain)?;
    let field: SemanticFieldSpec = serde_json::from_str(&read(field_spec)?).map_err(domain)?;
    field.validate().map_err(domain)?;
    let centroid = field_centroid(&field, &table).map_err(domain)?;
    let outcome = semantic_filter(&rows, &centroid, &table, threshold).map_err(domain)?;
    emit(out, write_dataset(&outcome.retained))
}

fn alpha(matrix: &Path, exact: bool) -> Result<String, CliError> {
    let m = ReliabilityMatrix::from_csv(&read(matrix)?).map_err(domain)?;
    let mut text = match krippendorff_alpha(&m).map_err(domain)? {
        Alpha::Value(v) => format!("{v:.4}\n"),
        Alpha::Indeterminate => "indeterminate\n".to_string(),
    };
    if exact {
        if let Some(r) = krippendorff_alpha_exact(&m).map_err(domain)? {
            text.push_str(&format!("{r}\n"));
        }
    }
    Ok(text)
}

fn run_simulation(config: &SimConfig, out: Option<&Path>) -> Result<String, CliError> {
    let sim = simulate(config).map_err(domain)?;
    let report = sim.report().to_csv();
    let diffs = sim.truth_diffs();
    let mut text = report.clone();
    text.push_str(&format!(
        "events,{}\nexpert_queue,{}\ntruth_diffs,{}\n",
        sim.log.len(),
        sim.expert_queue().len(),
        diffs.len()
    ));
    for d in &diffs {
        text.push_str(&format!("diff,{d}\n"));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let (mut store, _) = Store::open(dir).map_err(domain)?;
        if store.last_seq() > 0 {
            return Err(CliError::Domain(format!("{} already holds an event log", dir.display())));
        }
        for (i, c) in sim.log.iter().enumerate() {
            store.execute(c.clone(), i as u64).map_err(domain)?;
        }
        write_file(&dir.join("report.csv"), &report)?;
        let doc = sim.platform.lexicon.export_all();
        write_file(&dir.join("lexicon.json"), &doc.to_json())?;
    }
    Ok(text)
}

fn report(data_dir: &Path, campaign: &str, out: Option<&Path>) -> Result<String, CliError> {
    let (store, _) = Store::open(data_dir).map_err(domain)?;
    let r = store.platform().report(&CampaignId::new(campaign)).map_err(domain)?;
    emit(out, r.to_csv())
}

fn export(
    data_dir: Option<&Path>,
    lexicon: Option<&Path>,
    language: &str,
    out: Option<&Path>,
) -> Result<String, CliError> {
    let language = lang(language)?;
    let lex = match (data_dir, lexicon) {
        (Some(d), _) => Store::open(d).map_err(domain)?.0.platform().lexicon.clone(),
        (None, Some(p)) => {
            let doc = LexiconDocument::from_json(&read(p)?).map_err(domain)?;
            Lexicon::from_document(&doc).map_err(domain)?
        }
        (None, None) => return Err(CliError::Domain("need --data-dir or --lexicon".into())),
    };
    let doc = lex.export_lexicon(&language).map_err(domain)?;
    emit(out, doc.to_json() + "\n")
}

fn serve(port: Option<u16>, data_dir: Option<PathBuf>) -> Result<String, CliError> {
    let mut config = ServiceConfig::from_env().map_err(domain)?;
    if let Some(p) = port {
        config.port = p;
    }
    if let Some(d) = data_dir {
        config.data_dir = d;
    }
    let rt = tokio::runtime::Runtime::new().map_err(domain)?;
    rt.block_on(lexgap_service::serve(config)).map_err(domain)?;
    Ok(String::new())
}

pub fn execute(verb: Verb) -> Result<String, CliError> {
    match verb {
        Verb::Ingest {
            source,
            target,
            source_language,
            target_language,
            out,
        } => ingest(&source, target.as_deref(), &source_language, &target_language, out.as_deref()),
        Verb::Filter {
            source,
            embeddings,
            field_spec,
            threshold,
            out,
        } => filter(&source, &embeddings, &field_spec, threshold, out.as_deref()),
        Verb::Alpha { matrix, exact } => alpha(&matrix, exact),
        Verb::Simulate {
            workers,
            accuracy,
            reserve_accuracy,
            seed,
            entries,
            questions_per_task,
            out,
        } => {
            let config = SimConfig {
                seed,
                entries,
                workers,
                accuracy,
                reserve_accuracy: reserve_accuracy.unwrap_or(accuracy),
                questions_per_task,
                ..SimConfig::default()
            };
            run_simulation(&config, out.as_deref())
        }
        Verb::Report { data_dir, campaign, out } => report(&data_dir, &campaign, out.as_deref()),
        Verb::Export {
            data_dir,
            lexicon,
            language,
            out,
        } => export(data_dir.as_deref(), lexicon.as_deref(), &language, out.as_deref()),
        Verb::Serve { port, data_dir } => serve(port, data_dir),
    }
}

/// Parses `args` (program name first) and runs the verb. Returns the
/// process exit code: 0 on success, 1 on a domain error, 2 on a usage
/// error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return if code == 0 { 0 } else { 2 };
        }
    };
    match execute(cli.command) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
