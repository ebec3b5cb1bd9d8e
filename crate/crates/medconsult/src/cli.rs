//! Command-line entry points. Every command is a thin wrapper over library
//! calls; `run` returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use medconsult_core::corpus::{split_corpus, ConsultationRecord, KnowledgeDocument, DEFAULT_TEST_FRACTION};
use medconsult_core::genbackend::{Generator, ScriptedBackend};
use medconsult_core::pipeline::{KnowledgeBase, TurnResult};
use medconsult_core::retrieval::{generate_enhanced_query, retrieve};
use medconsult_core::sentiment::{classify, predict_feedback};
use medconsult_core::terminology::{link_documents, session_memory_update, AliasTable, TermDetector, TermSet};
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::formats;
use crate::http::{self, AppState};
use crate::index_store;
use crate::pii::PiiFilter;
use crate::remote::{RemoteBackend, RemoteConfig};
use crate::service::{load_demonstrations, Service, ServiceParts};

pub const DEMO_DOCS: &str = include_str!("../../../fixtures/demo_docs.jsonl");
pub const DEMO_ALIASES: &str = include_str!("../../../fixtures/aliases.tsv");
pub const DEMO_DEMOS: &str = include_str!("../../../fixtures/demos.jsonl");
pub const CASE_STUDY_SCRIPT: &str = include_str!("../../../fixtures/case_study.jsonl");

#[derive(Debug, Parser)]
#[command(name = "medconsult", version, about = "Terminology-aware retrieval and feedback-gated consultation engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Consultation corpus tools
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Terminology tools
    #[command(subcommand)]
    Terms(TermsCmd),
    /// Index build and query
    #[command(subcommand)]
    Retrieval(RetrievalCmd),
    /// Lexicon sentiment
    #[command(subcommand)]
    Sentiment(SentimentCmd),
    /// Generation metrics
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run the HTTP service
    Serve(ServeArgs),
    /// Headless chat loop over stdin or --message
    Chat(ChatArgs),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Check a consultation corpus for format errors and duplicate ids
    Validate {
        path: PathBuf,
        /// Reject lines matching any regex in this file
        #[arg(long)]
        pii: Option<PathBuf>,
    },
    /// Seeded train/test split
    Split {
        path: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pii: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum TermsCmd {
    /// Link alias-table terms to the documents mentioning them
    BuildLinks {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        aliases: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum RetrievalCmd {
    /// Build an index artifact from documents and a link table
    Build {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        links: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query an index artifact; prints JSONL rows {doc_id, p, p_hat}
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        q: String,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum SentimentCmd {
    /// Classify text; prints one JSONL row with label, score and evidence
    Classify {
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        negators: Option<PathBuf>,
        #[arg(long)]
        text: String,
        /// Score as predicted patient feedback to this query
        #[arg(long)]
        query: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Score predictions against references, joined on id
    Run {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Scripted,
    Remote,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long, value_enum, default_value_t = BackendChoice::Scripted)]
    pub backend: BackendChoice,
    /// Scripted responses, JSONL {"text": ...}; defaults to the bundled case study
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long, requires = "aliases")]
    pub docs: Option<PathBuf>,
    #[arg(long, requires = "docs")]
    pub aliases: Option<PathBuf>,
    /// Labeled consultation records used as demonstrations
    #[arg(long)]
    pub demos: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Append each turn's regeneration trace here as JSONL
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Patient message; repeatable. Reads stdin lines when absent.
    #[arg(long = "message", short = 'm')]
    pub messages: Vec<String>,
    /// Print each TurnResult as JSON instead of a summary
    #[arg(long)]
    pub json: bool,
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::Storage(e.to_string()))?;
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn parse_embedded<T: serde::de::DeserializeOwned>(name: &str, text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(name, i + 1, e.to_string())))
        .collect()
}

/// The bundled demo knowledge base.
pub fn demo_knowledge_base() -> Result<KnowledgeBase> {
    let docs: Vec<KnowledgeDocument> = parse_embedded("demo_docs.jsonl", DEMO_DOCS)?;
    let aliases = AliasTable::parse_tsv(DEMO_ALIASES)?;
    Ok(KnowledgeBase::build(docs, &aliases)?)
}

pub fn demo_demonstrations() -> Result<Vec<medconsult_core::eicl::Demonstration>> {
    let recs: Vec<ConsultationRecord> = parse_embedded("demos.jsonl", DEMO_DEMOS)?;
    Ok(recs
        .into_iter()
        .filter_map(|r| r.feedback_sentiment.map(|s| medconsult_core::eicl::Demonstration::new(r.query, r.response, s)))
        .collect())
}

pub fn case_study_backend() -> Result<ScriptedBackend> {
    let rows: Vec<formats::ScriptLine> = parse_embedded("case_study.jsonl", CASE_STUDY_SCRIPT)?;
    Ok(ScriptedBackend::new(rows.into_iter().map(|r| r.text))?)
}

fn corpus(cmd: CorpusCmd, out: &mut dyn Write) -> Result<()> {
    match cmd {
        CorpusCmd::Validate { path, pii } => {
            let filter = pii.as_deref().map(PiiFilter::load).transpose()?;
            let recs = formats::load_corpus_with(&path, filter.as_ref())?;
            let labeled = recs.iter().filter(|r| r.feedback_sentiment.is_some()).count();
            emit(out, &serde_json::json!({"records": recs.len(), "labeled": labeled}))
        }
        CorpusCmd::Split { path, test_fraction, seed, out: dir, pii } => {
            let filter = pii.as_deref().map(PiiFilter::load).transpose()?;
            let recs = formats::load_corpus_with(&path, filter.as_ref())?;
            let split = split_corpus(&recs, test_fraction, seed)?;
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let by_id: std::collections::HashMap<&str, &ConsultationRecord> = recs.iter().map(|r| (r.id.as_str(), r)).collect();
            formats::write_jsonl(&dir.join("train.jsonl"), split.train.iter().map(|id| by_id[id.as_str()]))?;
            formats::write_jsonl(&dir.join("test.jsonl"), split.test.iter().map(|id| by_id[id.as_str()]))?;
            let manifest = dir.join("split.json");
            fs::write(&manifest, serde_json::to_string_pretty(&split).map_err(|e| Error::Storage(e.to_string()))?)
                .map_err(|e| Error::io(&manifest, e))?;
            emit(out, &serde_json::json!({"train": split.train.len(), "test": split.test.len(), "seed": seed}))
        }
    }
}

fn build_links(docs: &Path, aliases: &Path) -> Result<(TermSet, usize)> {
    let mut docs = formats::load_documents(docs)?;
    let mut terms = formats::load_alias_table(aliases)?.to_term_set();
    let links = link_documents(&mut terms, &mut docs);
    Ok((terms, links))
}

fn retrieval(cmd: RetrievalCmd, out: &mut dyn Write) -> Result<()> {
    match cmd {
        RetrievalCmd::Build { docs, links, out: path } => {
            let kb = index_store::build_from_links(formats::load_documents(&docs)?, formats::load_links(&links)?)?;
            let summary = index_store::save(&path, &kb)?;
            emit(out, &summary)
        }
        RetrievalCmd::Query { index, q, top_k } => {
            let (kb, _) = index_store::load(&index)?;
            let mut memory = TermSet::new();
            session_memory_update(&mut memory, &kb.matcher().detect(&q), kb.dictionary());
            let eq = generate_enhanced_query(&q, &memory);
            let r = retrieve(&eq, &memory, kb.index())?;
            for d in r.top(top_k) {
                emit(out, d)?;
            }
            Ok(())
        }
    }
}

fn sentiment(cmd: SentimentCmd, out: &mut dyn Write) -> Result<()> {
    let SentimentCmd::Classify { lexicon, negators, text, query } = cmd;
    let model = formats::load_feedback_model(lexicon.as_deref(), negators.as_deref(), None)?;
    let pred = match query {
        Some(q) => predict_feedback(&q, &text, &model),
        None => classify(&text, &model.lexicon, model.thresholds),
    };
    emit(out, &pred)
}

fn eval(cmd: EvalCmd, out: &mut dyn Write) -> Result<()> {
    let EvalCmd::Run { pred, reference, out: path } = cmd;
    let report = crate::eval::evaluate_files(&pred, &reference)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Storage(e.to_string()))?;
    if let Some(p) = path {
        fs::write(&p, format!("{text}\n")).map_err(|e| Error::io(&p, e))?;
    }
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn serve(args: ServeArgs, err: &mut dyn Write) -> Result<()> {
    let mut cfg = Config::load(&args.config)?;
    if let Some(port) = args.port {
        cfg.service.port = port;
    }
    let service = Arc::new(Service::from_config(&cfg)?);
    let state = AppState {
        service,
        admin_token: cfg.service.admin_token.clone(),
        default_docs: cfg.paths.docs.clone(),
        default_aliases: cfg.paths.aliases.clone(),
    };
    let addr = format!("{}:{}", cfg.service.bind, cfg.service.port);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("<runtime>", e))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| Error::io(&addr, e))?;
        let local = listener.local_addr().map_err(|e| Error::io(&addr, e))?;
        let _ = writeln!(err, "listening on http://{local}");
        http::serve(listener, state).await.map_err(|e| Error::io(&addr, e))
    })
}

fn summary_line(r: &TurnResult) -> String {
    let docs: Vec<String> = r.retrieved.iter().map(|d| format!("{} ({:.3})", d.doc_id, d.p_hat)).collect();
    format!(
        "[terms: {}] [docs: {}] [sentiment: {} {:.2}] [rounds: {}]",
        if r.terms.is_empty() { "-".to_string() } else { r.terms.join(", ") },
        if docs.is_empty() { "-".to_string() } else { docs.join(", ") },
        r.feedback.label,
        r.feedback.score,
        r.rounds
    )
}

fn chat(args: ChatArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let kb = match (&args.docs, &args.aliases) {
        (Some(d), Some(a)) => index_store::build_from_files(d, a)?,
        _ => demo_knowledge_base()?,
    };
    let backend: Arc<dyn Generator> = match args.backend {
        BackendChoice::Scripted => match &args.script {
            Some(p) => Arc::new(ScriptedBackend::new(formats::load_script(p)?)?),
            None => Arc::new(case_study_backend()?),
        },
        BackendChoice::Remote => Arc::new(RemoteBackend::new(RemoteConfig::default().apply_env())?),
    };
    let mut parts = ServiceParts::new(kb, backend);
    parts.model = formats::load_feedback_model(args.lexicon.as_deref(), None, None)?;
    parts.shared_demos = match &args.demos {
        Some(p) => load_demonstrations(p, None)?,
        None => demo_demonstrations()?,
    };
    if let Some(r) = args.max_rounds {
        parts.engine.generation.max_rounds = r;
    }
    parts.ids = Arc::new(crate::clock::SequentialIds::new("chat"));
    let svc = Service::new(parts)?;
    let sid = svc.create_session()?;

    let mut messages = args.messages.clone();
    if messages.is_empty() {
        for line in input.lines() {
            let line = line.map_err(|e| Error::io("<stdin>", e))?;
            if !line.trim().is_empty() {
                messages.push(line);
            }
        }
    }
    for text in &messages {
        let r = svc.post_message(&sid, text)?;
        if args.json {
            emit(out, &r)?;
        } else {
            writeln!(out, "patient: {text}\ndoctor: {}\n{}", r.response, summary_line(&r)).map_err(|e| Error::io("<stdout>", e))?;
        }
        if let Some(path) = &args.trace_out {
            let trace = svc.get_trace(&r.trace_id)?;
            let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
            let rec = crate::store::TraceRecord { trace_id: r.trace_id.clone(), trace };
            emit(&mut f, &rec)?;
        }
    }
    Ok(())
}

fn dispatch(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Corpus(c) => corpus(c, out),
        Command::Terms(TermsCmd::BuildLinks { docs, aliases, out: path }) => {
            let (terms, links) = build_links(&docs, &aliases)?;
            formats::write_links(&path, &terms)?;
            emit(out, &serde_json::json!({"terms": terms.len(), "links": links}))
        }
        Command::Retrieval(c) => retrieval(c, out),
        Command::Sentiment(c) => sentiment(c, out),
        Command::Eval(c) => eval(c, out),
        Command::Serve(a) => serve(a, err),
        Command::Chat(a) => chat(a, input, out),
    }
}

/// Parses `args` (including the program name) and runs the command. Usage
/// errors return 2, runtime errors 1.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    match dispatch(cli, input, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
