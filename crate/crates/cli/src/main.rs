use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use modecheck_core::bayes::{
    fit_length_test, fit_length_train, fit_lexical_test, fit_lexical_train, predictive_check_length,
    predictive_check_lexical, LexicalCounts, PairKind, PosteriorExport,
};
use modecheck_core::decoding::{beam_search, draw_sample_set, exact_mode, SampleSet, ScoredSentence};
use modecheck_core::error::Error;
use modecheck_core::pipeline::{generate_corpus, run_pipeline, run_pipeline_to_dir, split_heldout, RunConfig};
use modecheck_core::rules::{mbr_decode, oracle_select, UtilityKind};
use modecheck_core::seqmodel::{fit_tabular, ParallelCorpus, Sentence, SequenceModel, TabularConditionalModel};
use modecheck_core::stats::{
    all_unique_rate, beam_in_samples, empty_string_stats, extract_group_statistics, mass_curve, Group,
};

#[derive(Parser)]
#[command(name = "modecheck", version, about = "Decoding rules and distribution diagnostics for small sequence models")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Overrides the seed of the run configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration (TOML or JSON); missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic parallel corpus.
    GenCorpus,
    /// Deduplicate and split a corpus into training and held-out parts.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        /// Held-out size; defaults to the configured value.
        #[arg(long)]
        heldout: Option<usize>,
    },
    /// Fit the tabular model on a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Draw ancestral samples for each source of a corpus.
    Sample {
        #[command(flatten)]
        io: ModelSources,
        /// Samples per source; defaults to the configured value.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Beam search for each source.
    Beam {
        #[command(flatten)]
        io: ModelSources,
        #[arg(long)]
        width: Option<usize>,
    },
    /// Exact mode search for each source.
    ExactMode {
        #[command(flatten)]
        io: ModelSources,
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Sampling-based minimum Bayes risk decoding.
    Mbr {
        #[command(flatten)]
        io: ModelSources,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        utility: Option<UtilityKind>,
        /// Include the expected utility of every candidate.
        #[arg(long)]
        dump_eu: bool,
    },
    /// Select the sample closest to each reference.
    Oracle {
        #[command(flatten)]
        io: ModelSources,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        utility: Option<UtilityKind>,
    },
    /// Sample diagnostics: mass curves, beam membership, empty strings.
    Stats {
        #[command(flatten)]
        io: ModelSources,
        #[arg(long)]
        samples: PathBuf,
    },
    /// Fit the length and lexical models on training targets and test groups.
    Bayes {
        /// Corpus whose targets form the training group.
        #[arg(long)]
        train: PathBuf,
        /// Test group as GROUP=FILE, one whitespace-tokenised sentence per line.
        #[arg(long = "group", value_parser = parse_group)]
        groups: Vec<(Group, PathBuf)>,
    },
    /// Full pipeline from corpus generation to the report.
    Run,
}

#[derive(Args)]
struct ModelSources {
    #[arg(long)]
    model: PathBuf,
    /// Corpus in JSON lines; sources are decoded, targets serve as references.
    #[arg(long)]
    sources: PathBuf,
}

fn parse_group(s: &str) -> Result<(Group, PathBuf), String> {
    let (g, path) = s.split_once('=').ok_or("expected GROUP=FILE")?;
    let g: Group = g.parse().map_err(|e: Error| e.to_string())?;
    if g == Group::Training {
        return Err("the training group comes from --train".into());
    }
    Ok((g, PathBuf::from(path)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<Error>().map_or(2, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let mut config = match &g.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        config = config.with_seed(seed);
    }
    config.validate()?;
    let out = Output::new(g.out.as_deref(), g.format)?;

    match cli.command {
        Command::GenCorpus => {
            let corpus = generate_corpus(&config.corpus)?;
            out.corpus("corpus", &corpus)?;
        }
        Command::Split { corpus, heldout } => {
            let corpus = read_corpus(&corpus)?;
            let split = split_heldout(&corpus, heldout.unwrap_or(config.heldout), config.seed)?;
            out.corpus("train", &split.train)?;
            out.corpus("heldout", &split.heldout)?;
            out.json("split_summary", &split.summary)?;
        }
        Command::Train { corpus } => {
            let model = fit_tabular(&read_corpus(&corpus)?, &config.model)?;
            out.text("model.json", &model.to_json()?)?;
        }
        Command::Sample { io, samples } => {
            let (model, sources, _) = load(&io)?;
            let n = samples.unwrap_or(config.samples);
            let sets = draw_all(&model, &sources, n, config.seed)?;
            out.samples(&model, &sets)?;
        }
        Command::Beam { io, width } => {
            let (model, sources, _) = load(&io)?;
            let mut beam = config.beam.clone();
            if let Some(w) = width {
                beam.width = w;
            }
            let rows = sources
                .iter()
                .enumerate()
                .map(|(i, s)| Ok(Decoded::new(&model, i, &beam_search(&model, s, &beam)?, None)))
                .collect::<Result<Vec<_>>>()?;
            out.table("beam", &rows)?;
        }
        Command::ExactMode { io, budget } => {
            let (model, sources, _) = load(&io)?;
            let budget = budget.unwrap_or(config.exact_budget);
            let rows = sources
                .iter()
                .enumerate()
                .map(|(i, s)| Ok(Decoded::new(&model, i, &exact_mode(&model, s, budget)?, None)))
                .collect::<Result<Vec<_>>>()?;
            out.table("exact_mode", &rows)?;
        }
        Command::Mbr { io, samples, utility, dump_eu } => {
            let (model, sources, _) = load(&io)?;
            let utility = utility.unwrap_or(config.utility).build(config.meteor)?;
            let sets = read_samples(&model, &samples, &sources)?;
            let vocab = model.target_vocab();
            let mut rows = Vec::new();
            for set in &sets {
                let result = mbr_decode(set, &*utility)?;
                rows.push(MbrRow {
                    src_id: set.source_index,
                    record: result.record(vocab, dump_eu),
                });
            }
            if g.format == Format::Csv {
                let flat: Vec<_> = rows
                    .iter()
                    .map(|r| MbrCsvRow {
                        src_id: r.src_id,
                        chosen: r.record.chosen.join(" "),
                        expected_utility: r.record.expected_utility,
                    })
                    .collect();
                out.table("mbr", &flat)?;
                if dump_eu {
                    let eu: Vec<_> = rows
                        .iter()
                        .flat_map(|r| {
                            r.record.candidates.iter().flatten().map(|c| CandidateCsvRow {
                                src_id: r.src_id,
                                tokens: c.tokens.join(" "),
                                expected_utility: c.expected_utility,
                            })
                        })
                        .collect();
                    out.table("mbr_candidates", &eu)?;
                }
            } else {
                out.json("mbr", &rows)?;
            }
        }
        Command::Oracle { io, samples, utility } => {
            let (model, sources, references) = load(&io)?;
            let utility = utility.unwrap_or(config.utility).build(config.meteor)?;
            let sets = read_samples(&model, &samples, &sources)?;
            let mut rows = Vec::new();
            for set in &sets {
                let reference = &references[set.source_index as usize];
                let best = oracle_select(set, reference, &*utility)?;
                let u = utility.score(reference.ids(), best.sentence.ids());
                rows.push(Decoded::new(&model, set.source_index as usize, &best, Some(u)));
            }
            out.table("oracle", &rows)?;
        }
        Command::Stats { io, samples } => {
            let (model, sources, _) = load(&io)?;
            let sets = read_samples(&model, &samples, &sources)?;
            let mut rows = Vec::new();
            let mut curves = Vec::new();
            for set in &sets {
                let curve = mass_curve(&model, &set.source, set)?;
                let beam = beam_search(&model, &set.source, &config.beam)?;
                rows.push(SourceStats {
                    src_id: set.source_index,
                    samples: set.len(),
                    unique: curve.unique,
                    coverage: curve.coverage(),
                    beam_in_samples: beam_in_samples(&beam.sentence, set),
                    empty_samples: empty_string_stats(set).count,
                });
                for (t, c) in curve.curve.iter().enumerate() {
                    curves.push(CurvePoint {
                        src_id: set.source_index,
                        t: t + 1,
                        coverage: *c,
                    });
                }
            }
            if g.format == Format::Csv {
                out.table("stats", &rows)?;
                out.table("mass_curves", &curves)?;
            } else {
                out.json(
                    "stats",
                    &StatsDocument {
                        all_unique_rate: all_unique_rate(&sets),
                        sources: rows,
                    },
                )?;
            }
        }
        Command::Bayes { train, groups } => {
            if groups.is_empty() {
                return Err(Error::config("at least one --group is needed").into());
            }
            let doc = bayes(&config, &train, &groups)?;
            if g.format == Format::Csv {
                out.with_file("posterior_samples.csv", |w| Ok(doc.posteriors.write_csv(w)?))?;
            } else {
                out.json("bayes", &doc)?;
            }
        }
        Command::Run => match &g.out {
            Some(dir) => {
                run_pipeline_to_dir(&config, dir)?;
                eprintln!("report written to {}", dir.display());
            }
            None => {
                let report = run_pipeline(&config)?;
                println!("{}", report.to_json()?);
            }
        },
    }
    Ok(())
}

fn read_corpus(path: &Path) -> Result<ParallelCorpus> {
    Ok(ParallelCorpus::read_jsonl(path)?)
}

/// Model, encoded sources and encoded references.
fn load(io: &ModelSources) -> Result<(TabularConditionalModel, Vec<Sentence>, Vec<Sentence>)> {
    let text = std::fs::read_to_string(&io.model).map_err(|e| Error::io(&io.model, e))?;
    let model = TabularConditionalModel::from_json(&text)?;
    let corpus = read_corpus(&io.sources)?;
    let sources = corpus.iter().map(|p| model.source_vocab().encode_lossy(&p.src)).collect();
    let references = corpus.iter().map(|p| model.target_vocab().encode_lossy(&p.tgt)).collect();
    Ok((model, sources, references))
}

fn draw_all(model: &TabularConditionalModel, sources: &[Sentence], n: usize, seed: u64) -> Result<Vec<SampleSet>> {
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| Ok(draw_sample_set(model, s, i as u64, n, seed)?))
        .collect()
}

fn read_samples(model: &TabularConditionalModel, path: &Path, sources: &[Sentence]) -> Result<Vec<SampleSet>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let sets = SampleSet::read_jsonl(BufReader::new(file), model.target_vocab(), Some(sources))?;
    if sets.is_empty() {
        return Err(Error::EmptySampleSet.into());
    }
    Ok(sets)
}

#[derive(Serialize)]
struct Decoded {
    src_id: u64,
    tokens: String,
    log_prob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    utility: Option<f64>,
}

impl Decoded {
    fn new(model: &TabularConditionalModel, src_id: usize, s: &ScoredSentence, utility: Option<f64>) -> Self {
        Decoded {
            src_id: src_id as u64,
            tokens: model.target_vocab().decode_joined(&s.sentence),
            log_prob: s.log_prob,
            utility,
        }
    }
}

#[derive(Serialize)]
struct MbrRow {
    src_id: u64,
    #[serde(flatten)]
    record: modecheck_core::rules::DecisionRecord,
}

#[derive(Serialize)]
struct MbrCsvRow {
    src_id: u64,
    chosen: String,
    expected_utility: f64,
}

#[derive(Serialize)]
struct CandidateCsvRow {
    src_id: u64,
    tokens: String,
    expected_utility: f64,
}

#[derive(Serialize)]
struct SourceStats {
    src_id: u64,
    samples: usize,
    unique: usize,
    coverage: f64,
    beam_in_samples: bool,
    empty_samples: usize,
}

#[derive(Serialize)]
struct CurvePoint {
    src_id: u64,
    t: usize,
    coverage: f64,
}

#[derive(Serialize)]
struct StatsDocument {
    all_unique_rate: f64,
    sources: Vec<SourceStats>,
}

#[derive(Serialize)]
struct BayesDocument {
    length: modecheck_core::bayes::LengthTestPosterior,
    length_train: modecheck_core::bayes::LengthTrainPosterior,
    length_check: modecheck_core::bayes::LengthCheckReport,
    lexical: BTreeMap<String, LexicalDocument>,
    posteriors: PosteriorExport,
}

#[derive(Serialize)]
struct LexicalDocument {
    alpha: modecheck_core::bayes::GammaParams,
    beta: modecheck_core::bayes::GammaParams,
    test: modecheck_core::bayes::LexicalTestPosterior,
    check: modecheck_core::bayes::LexicalCheckReport,
}

fn read_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

fn bayes(config: &RunConfig, train: &Path, groups: &[(Group, PathBuf)]) -> Result<BayesDocument> {
    let bayes = config.bayes.clone().with_seed(config.seed);
    let corpus = read_corpus(train)?;
    let vocab = modecheck_core::seqmodel::Vocabulary::from_observed(
        corpus.iter().flat_map(|p| p.tgt.iter().map(String::as_str)),
    )?;
    let encode = |sentences: &[Vec<String>]| -> Result<Vec<Sentence>> {
        sentences
            .iter()
            .map(|s| vocab.encode(s).map_err(|e| anyhow!(e).context("test sentences must use the training vocabulary")))
            .collect()
    };
    let training: Vec<Vec<String>> = corpus.iter().map(|p| p.tgt.clone()).collect();
    let training = extract_group_statistics(&encode(&training)?, Group::Training);
    let mut tests = BTreeMap::new();
    for (g, path) in groups {
        let sentences = read_sentences(path)?;
        if sentences.is_empty() {
            bail!("group file {} has no sentences", path.display());
        }
        let stats = extract_group_statistics(&encode(&sentences).with_context(|| path.display().to_string())?, *g);
        tests.insert(*g, stats);
    }

    let length_train = fit_length_train(&training.lengths, &bayes)?;
    let lengths = tests.iter().map(|(g, s)| (*g, s.lengths.clone())).collect();
    let length = fit_length_test(&length_train, &lengths, &bayes)?;
    let length_check = predictive_check_length(&length_train, &training.lengths, bayes.predictive_draws, config.seed)?;
    let mut variables = length_train.variables();
    variables.extend(length.variables());
    let mut lexical = BTreeMap::new();
    for (kind, name) in [(PairKind::Bigram, "bigram"), (PairKind::SkipBigram, "skip_bigram")] {
        let counts = LexicalCounts::from_statistics(&training, kind);
        let fit = fit_lexical_train(&counts, &bayes)?;
        let test_counts = tests
            .iter()
            .map(|(g, s)| Ok((*g, LexicalCounts::with_vocabulary(s, kind, &counts.vocabulary)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let test = fit_lexical_test(&fit, &test_counts, &bayes)?;
        let check = predictive_check_lexical(&fit, &counts, bayes.predictive_draws, config.seed)?;
        variables.extend(fit.variables(name));
        variables.extend(test.variables(name));
        lexical.insert(
            name.to_string(),
            LexicalDocument {
                alpha: fit.alpha,
                beta: fit.beta,
                test,
                check,
            },
        );
    }
    Ok(BayesDocument {
        length,
        length_train,
        length_check,
        lexical,
        posteriors: PosteriorExport::draw(variables, bayes.posterior_samples, config.seed),
    })
}

/// Writes named results into the output directory, or to stdout.
struct Output<'a> {
    dir: Option<&'a Path>,
    format: Format,
}

impl<'a> Output<'a> {
    fn new(dir: Option<&'a Path>, format: Format) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        Ok(Self { dir, format })
    }

    fn with_file<F>(&self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        match self.dir {
            Some(d) => {
                let path = d.join(name);
                let mut file = std::io::BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
                write(&mut file)?;
                file.flush().map_err(|e| Error::io(&path, e))?;
            }
            None => {
                let stdout = std::io::stdout();
                let mut lock = stdout.lock();
                write(&mut lock)?;
                lock.flush()?;
            }
        }
        Ok(())
    }

    fn text(&self, name: &str, text: &str) -> Result<()> {
        self.with_file(name, |w| Ok(writeln!(w, "{text}")?))
    }

    fn json<T: Serialize + ?Sized>(&self, stem: &str, value: &T) -> Result<()> {
        self.text(&format!("{stem}.json"), &serde_json::to_string_pretty(value)?)
    }

    /// Rows as a JSON array or a CSV table, by the selected format.
    fn table<T: Serialize>(&self, stem: &str, rows: &[T]) -> Result<()> {
        match self.format {
            Format::Json => self.json(stem, rows),
            Format::Csv => self.with_file(&format!("{stem}.csv"), |w| {
                let mut csv = csv::Writer::from_writer(w);
                for row in rows {
                    csv.serialize(row)?;
                }
                csv.flush()?;
                Ok(())
            }),
        }
    }

    fn corpus(&self, stem: &str, corpus: &ParallelCorpus) -> Result<()> {
        match self.format {
            Format::Json => self.with_file(&format!("{stem}.jsonl"), |w| {
                let mut w = w;
                Ok(corpus.to_jsonl_writer(&mut w)?)
            }),
            Format::Csv => {
                let rows: Vec<_> = corpus.iter().map(|p| (p.src.join(" "), p.tgt.join(" "))).collect();
                self.with_file(&format!("{stem}.csv"), |w| {
                    let mut csv = csv::Writer::from_writer(w);
                    csv.write_record(["src", "tgt"])?;
                    for row in &rows {
                        csv.serialize(row)?;
                    }
                    csv.flush()?;
                    Ok(())
                })
            }
        }
    }

    fn samples(&self, model: &TabularConditionalModel, sets: &[SampleSet]) -> Result<()> {
        let vocab = model.target_vocab();
        match self.format {
            Format::Json => self.with_file("samples.jsonl", |w| {
                let mut w = w;
                Ok(SampleSet::write_jsonl(sets, vocab, &mut w)?)
            }),
            Format::Csv => {
                let rows: Vec<_> = sets
                    .iter()
                    .flat_map(|s| s.records(vocab))
                    .map(|r| (r.src_id, r.replicate, r.tokens.join(" "), r.log_prob))
                    .collect();
                self.with_file("samples.csv", |w| {
                    let mut csv = csv::Writer::from_writer(w);
                    csv.write_record(["src_id", "replicate", "tokens", "log_prob"])?;
                    for row in &rows {
                        csv.serialize(row)?;
                    }
                    csv.flush()?;
                    Ok(())
                })
            }
        }
    }
}
