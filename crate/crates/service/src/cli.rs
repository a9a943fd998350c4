//! `relabel` subcommands.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use relabel_core::active_loop::{make_folds, run_active_loop, FlagConfig, GapMode, LoopConfig};
use relabel_core::corpus::{Split, ValidationMode};
use relabel_core::distill::{pseudo_label, two_stage_train, DEFAULT_CONFIDENCE_FLOOR};
use relabel_core::metrics::entity_f1;
use relabel_core::noise_lab::{f1_recovery_experiment, generate, inject_noise, ConfusionRule, NoiseSpec, SynthConfig};
use relabel_core::tagger::{self, Capacity, ModelWeights, TrainConfig};
use relabel_core::{Corpus, TagSet};

use crate::store::{self, DataDir, QueueMeta};

#[derive(Debug, Parser)]
#[command(name = "relabel", version, about = "Find, review and fix annotation errors in BIO-tagged corpora")]
pub struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "RELABEL_DATA_DIR", default_value = "relabel-data")]
    pub data_dir: PathBuf,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated entity types; defaults to the store's tag set, then PER,PROD,ORG,GPE.
    #[arg(long, global = true, value_delimiter = ',')]
    pub types: Option<Vec<String>>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a CoNLL file into the store.
    Ingest {
        input: PathBuf,
        /// Reject orphan I- tags instead of repairing them.
        #[arg(long)]
        strict: bool,
    },
    /// Write the fold plan for the stored corpus.
    Folds {
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Run the fold loop, score gaps and write the review queue.
    Flag {
        #[command(flatten)]
        flag: FlagArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Start the review service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory with the built review UI.
        #[arg(long, env = "RELABEL_UI_DIR")]
        ui_dir: Option<PathBuf>,
    },
    /// Apply the decision log to the stored corpus.
    Merge {
        /// Defaults to merged.conll in the store.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a tagger.
    Train {
        #[arg(long, value_enum, default_value_t = CapacityArg::Student)]
        capacity: CapacityArg,
        /// Defaults to the stored corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Pseudo-label a pool with a teacher, then train a student in two stages.
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        unlabeled: PathBuf,
        /// Gold corpus for the second stage; defaults to the stored corpus.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CONFIDENCE_FLOOR)]
        floor: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also save the pseudo-labeled set (with a .meta.json sidecar).
        #[arg(long)]
        pseudo_out: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score a model against a gold corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Write the tab-separated report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inject synthetic label errors and write the ledger.
    Corrupt {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Corrupt, flag, restore from the ledger and compare retrained students.
    Recover {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Held-out gold corpus.
        #[arg(long)]
        eval: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        flag: FlagArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Generate a synthetic business-call corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value = "syn-")]
        prefix: String,
        /// Replace every tag with O.
        #[arg(long)]
        unlabeled: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CapacityArg {
    Teacher,
    Student,
}

impl From<CapacityArg> for Capacity {
    fn from(c: CapacityArg) -> Self {
        match c {
            CapacityArg::Teacher => Capacity::Teacher,
            CapacityArg::Student => Capacity::Student,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GapModeArg {
    Log,
    Prob,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 200)]
    max_len: usize,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            l2: self.l2,
            max_sequence_length: self.max_len,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct FlagArgs {
    #[arg(long, default_value_t = 2.0)]
    threshold: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Entity types that may trigger a flag; `all` for every type.
    #[arg(long, value_delimiter = ',', default_value = "ORG")]
    focus: Vec<String>,
    /// Cap on the flagged fraction of the training set.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long, value_enum, default_value_t = GapModeArg::Log)]
    gap_mode: GapModeArg,
}

impl FlagArgs {
    fn loop_config(&self, train: TrainConfig, seed: u64) -> LoopConfig {
        let focus_types = if self.focus.iter().any(|f| f == "all") { None } else { Some(self.focus.iter().cloned().collect::<BTreeSet<_>>()) };
        LoopConfig {
            folds: self.folds,
            fold_seed: seed,
            train,
            capacity: Capacity::Teacher,
            flag: FlagConfig {
                threshold: self.threshold,
                focus_types,
                budget: self.budget,
                gap_mode: match self.gap_mode {
                    GapModeArg::Log => GapMode::LogMarginal,
                    GapModeArg::Prob => GapMode::Probability,
                },
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long, default_value_t = 0.1)]
    rate: f64,
    /// Confusion rules as FROM:TO pairs.
    #[arg(long, value_delimiter = ',', default_value = "ORG:PROD,PROD:ORG")]
    confusion: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    drop_prob: f64,
}

impl NoiseArgs {
    fn spec(&self, seed: u64) -> anyhow::Result<NoiseSpec> {
        let confusion = self
            .confusion
            .iter()
            .map(|r| match r.split_once(':') {
                Some((from, to)) => Ok(ConfusionRule::new(from, to)),
                None => bail!("confusion rule `{r}` is not FROM:TO"),
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(NoiseSpec { rate: self.rate, confusion, drop_prob: self.drop_prob, seed })
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status: 0 on success, 1 on usage errors, 2 on data errors.
pub fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn tag_set(cli: &Cli, dir: &DataDir) -> anyhow::Result<TagSet> {
    if let Some(types) = &cli.types {
        return Ok(TagSet::new(types.iter().cloned())?);
    }
    if dir.tag_set().exists() {
        return Ok(dir.load_tag_set()?);
    }
    Ok(TagSet::business_default())
}

fn load(path: &Path, ts: &TagSet, split: Split) -> anyhow::Result<Corpus> {
    Ok(store::read_corpus(path, ts, ValidationMode::Strict, split)?)
}

fn load_or_store(path: &Option<PathBuf>, ts: &TagSet, dir: &DataDir) -> anyhow::Result<Corpus> {
    match path {
        Some(p) => load(p, ts, Split::Train),
        None => Ok(dir.load_corpus().context("no corpus in the store; run `relabel ingest` first")?),
    }
}

fn save_model(model: &ModelWeights, path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    model.save(path).with_context(|| format!("writing {}", path.display()))
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let dir = DataDir::new(&cli.data_dir);
    let ts = tag_set(cli, &dir)?;
    match &cli.command {
        Command::Ingest { input, strict } => {
            let mode = if *strict { ValidationMode::Strict } else { ValidationMode::Repair };
            let corpus = store::read_corpus(input, &ts, mode, Split::Train)?;
            dir.create()?;
            store::write_json(&dir.tag_set(), &ts)?;
            store::write_corpus(&dir.corpus(), &corpus)?;
            println!("ingested {} utterances into {}", corpus.len(), dir.root().display());
        }
        Command::Folds { folds } => {
            let corpus = dir.load_corpus()?;
            let plan = make_folds(&corpus, *folds, cli.seed)?;
            store::write_json(&dir.folds(), &plan)?;
            let sizes: Vec<String> = plan.fold_sizes().iter().map(usize::to_string).collect();
            println!("{} folds, sizes {}", plan.k, sizes.join(" "));
        }
        Command::Flag { flag, train } => {
            let corpus = dir.load_corpus()?;
            let cfg = flag.loop_config(train.config(cli.seed), cli.seed);
            let outcome = run_active_loop(&corpus, &cfg)?;
            let queue = store::build_queue(&outcome.selected, &outcome.gaps, |g| {
                g.gap > cfg.flag.threshold && cfg.flag.focus_types.as_ref().is_none_or(|f| f.contains(&g.span.entity_type))
            });
            store::write_json(&dir.folds(), &outcome.plan)?;
            store::write_jsonl(&dir.gaps(), &outcome.gaps)?;
            store::write_jsonl(&dir.queue(), &queue)?;
            let meta = QueueMeta {
                train_size: corpus.len(),
                threshold: cfg.flag.threshold,
                folds: cfg.folds,
                seed: cli.seed,
                focus_types: cfg.flag.focus_types.as_ref().map(|f| f.iter().cloned().collect()),
                budget: cfg.flag.budget,
            };
            store::write_json(&dir.queue_meta(), &meta)?;
            println!("flagged {} of {} utterances", queue.len(), corpus.len());
        }
        Command::Serve { addr, ui_dir } => {
            let state = crate::http::AppState::open(dir.clone())?;
            let app = crate::http::router(state, ui_dir.clone());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
                log::info!("serving {} on http://{}", dir.root().display(), listener.local_addr()?);
                println!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
        Command::Merge { out } => {
            let out = out.clone().unwrap_or_else(|| dir.merged());
            let ts = dir.load_tag_set()?;
            let s = store::merge_files(&ts, &dir.corpus(), &dir.decisions(), &out)?;
            println!("applied {} decisions, {} utterances re-annotated, wrote {}", s.decisions, s.reannotated, s.output);
        }
        Command::Train { capacity, corpus, out, train } => {
            let corpus = load_or_store(corpus, &ts, &dir)?;
            let (model, report) = tagger::train_with_report(&corpus, &train.config(cli.seed), (*capacity).into(), None)?;
            save_model(&model, out)?;
            let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
            println!("trained {} on {} utterances, final loss {last:.4}, wrote {}", model.capacity(), corpus.len(), out.display());
        }
        Command::Distill { teacher, unlabeled, gold, floor, out, pseudo_out, train } => {
            let teacher = ModelWeights::load(teacher).with_context(|| format!("loading {}", teacher.display()))?;
            let pool = store::read_corpus(unlabeled, teacher.tag_set(), ValidationMode::Repair, Split::Train)?.strip_labels();
            let gold = load_or_store(gold, teacher.tag_set(), &dir)?;
            let set = pseudo_label(&teacher, &pool, *floor)?;
            if let Some(p) = pseudo_out {
                set.save(p)?;
            }
            let student = two_stage_train(&set, &gold, &train.config(cli.seed))?;
            save_model(&student, out)?;
            println!("kept {} of {} pseudo-labeled utterances, wrote {}", set.corpus.len(), pool.len(), out.display());
        }
        Command::Eval { model, gold, out } => {
            let model = ModelWeights::load(model).with_context(|| format!("loading {}", model.display()))?;
            let gold = load(gold, model.tag_set(), Split::Test)?;
            let report = entity_f1(&model.predict(&gold), &gold)?;
            print!("{report}");
            if let Some(p) = out {
                fs::write(p, report.to_tsv())?;
            }
        }
        Command::Corrupt { corpus, out, ledger, noise } => {
            let corpus = load_or_store(corpus, &ts, &dir)?;
            let (noisy, l) = inject_noise(&corpus, &noise.spec(cli.seed)?)?;
            store::write_corpus(out, &noisy)?;
            store::write_jsonl(ledger, &l.records().cloned().collect::<Vec<_>>())?;
            println!("corrupted {} of {} utterances", l.len(), corpus.len());
        }
        Command::Recover { corpus, eval, report, noise, flag, train } => {
            let corpus = load_or_store(corpus, &ts, &dir)?;
            let eval = load(eval, &ts, Split::Test)?;
            let cfg = flag.loop_config(train.config(cli.seed), cli.seed);
            let r = f1_recovery_experiment(&corpus, &noise.spec(cli.seed)?, &cfg, &eval)?;
            println!("{r}");
            if let Some(p) = report {
                store::write_json(p, &r)?;
            }
        }
        Command::Synth { out, n, prefix, unlabeled } => {
            let cfg = SynthConfig { num_utterances: *n, seed: cli.seed, id_prefix: prefix.clone(), ..Default::default() };
            let mut corpus = generate(&cfg, &ts)?;
            if *unlabeled {
                corpus = corpus.strip_labels();
            }
            store::write_corpus(out, &corpus)?;
            println!("wrote {} synthetic utterances to {}", corpus.len(), out.display());
        }
    }
    Ok(())
}
