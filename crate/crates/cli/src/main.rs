use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use cfnt::decoder::{
    cfnt_beam_search, cfnt_greedy, fnt_beam_search, fnt_greedy, DecodeConfig, Hypothesis,
};
use cfnt::eval::{evaluate, EntityMode};
use cfnt::io::{
    load_hyps, load_refs, refs_to_string, BlankSpec, DecodeLine, ModelBundle, ScoresFile,
};
use cfnt::lattice::{fnt_loss_terms, LossConfig};
use cfnt::name_trie::NameTrie;
use cfnt::scoring::{AnyLm, LanguageModel};
use cfnt::toygen::{gen_instance, oracle_trial, oracle_trial_with, GenSpec, Instance};
use cfnt::vocab::{content_hash, NameList, Vocabulary};
use cfnt::Error;

#[derive(Parser)]
#[command(
    name = "cfnt",
    version,
    about = "Factorized transducer decoding with a name class"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy instance into a directory.
    Gen(GenArgs),
    /// Decode precomputed scores.
    Decode(DecodeArgs),
    /// Score decode output against references.
    Eval(EvalArgs),
    /// Compare the forward recursion with alignment enumeration.
    Oracle(OracleArgs),
    /// Per-utterance transducer and factorized losses.
    Loss(LossArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Number of surface tokens.
    #[arg(long = "v")]
    vocab_size: Option<usize>,
    /// Number of names in the name list.
    #[arg(long)]
    names: Option<usize>,
    /// Maximum name length in tokens.
    #[arg(long)]
    name_len: Option<usize>,
    #[arg(long)]
    name_len_min: Option<usize>,
    #[arg(long)]
    u_min: Option<usize>,
    #[arg(long)]
    u_max: Option<usize>,
    #[arg(long)]
    t_min: Option<usize>,
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    class_bias: Option<f64>,
    #[arg(long)]
    utts: Option<usize>,
    #[arg(long)]
    lm_sentences: Option<usize>,
    /// Weight of untagged text relative to tagged text in the class model.
    #[arg(long)]
    mix_ratio: Option<f64>,
    #[arg(long)]
    name_rate: Option<f64>,
}

impl GenArgs {
    fn spec(&self) -> GenSpec {
        let d = GenSpec::default();
        let name_max = self.name_len.unwrap_or(d.name_len.1);
        let name_min = self.name_len_min.unwrap_or(d.name_len.0.min(name_max));
        GenSpec {
            vocab_size: self.vocab_size.unwrap_or(d.vocab_size),
            t_range: (
                self.t_min.unwrap_or(d.t_range.0),
                self.t_max.unwrap_or(d.t_range.1),
            ),
            u_range: (
                self.u_min.unwrap_or(d.u_range.0),
                self.u_max.unwrap_or(d.u_range.1),
            ),
            n_names: self.names.unwrap_or(d.n_names),
            name_len: (name_min, name_max),
            class_bias: self.class_bias.unwrap_or(d.class_bias),
            utterances: self.utts.unwrap_or(d.utterances),
            lm_sentences: self.lm_sentences.unwrap_or(d.lm_sentences),
            mix_ratio: self.mix_ratio.unwrap_or(d.mix_ratio),
            name_rate: self.name_rate.unwrap_or(d.name_rate),
            ..d
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Fnt,
    Cfnt,
    GreedyFnt,
    GreedyCfnt,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    #[arg(long)]
    dynamic_beam: bool,
    /// In-class slots under the dynamic beam (defaults to the beam size).
    #[arg(long)]
    in_class_budget: Option<usize>,
    #[arg(long, default_value_t = 8)]
    max_symbols: usize,
    #[arg(long, conflicts_with = "empty_name_list")]
    name_list: Option<PathBuf>,
    #[arg(long)]
    empty_name_list: bool,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    /// Defaults to vocab.txt next to the model.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EntityModeArg {
    Spans,
    Match,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    hyps: PathBuf,
    #[arg(long)]
    name_list: Option<PathBuf>,
    /// Defaults to vocab.txt next to the name list.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EntityModeArg::Spans)]
    entity_mode: EntityModeArg,
    #[arg(long)]
    per_utt: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 4)]
    max_t: usize,
    #[arg(long, default_value_t = 3)]
    max_u: usize,
    #[arg(long, default_value_t = 4)]
    max_v: usize,
    #[arg(long, default_value_t = 500)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
    /// Use this model's language model instead of a random one.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    lambda_f: f64,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Check(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Loss(a) => cmd_loss(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sibling_vocab(explicit: Option<&PathBuf>, anchor: &Path) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| {
        anchor
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("vocab.txt")
    })
}

fn load_vocab(path: &Path) -> Result<Vocabulary, Failure> {
    Vocabulary::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn instance_files(inst: &Instance) -> Result<Vec<(&'static str, String)>, Error> {
    let vocab = &inst.vocab;
    let mut names = String::new();
    for n in inst.names.names() {
        names.push_str(&vocab.surface(n)?);
        names.push('\n');
    }
    let class_model = ModelBundle {
        vocab_hash: Some(vocab.content_hash()),
        lm: AnyLm::Ngram(inst.class_lm.clone()),
        blank: BlankSpec::Table { context: 0 },
    };
    let word_model = ModelBundle {
        lm: AnyLm::Ngram(inst.word_lm.clone()),
        ..class_model.clone()
    };
    let mut tagged = String::new();
    let mut original = String::new();
    for pair in &inst.lm_text {
        let line: Vec<&str> = pair
            .tagged
            .iter()
            .map(|&t| {
                if t == vocab.class_id() {
                    Ok(cfnt::vocab::CLASS_TAG)
                } else {
                    vocab.token(t)
                }
            })
            .collect::<Result<_, _>>()?;
        tagged.push_str(&cfnt::vocab::join_surface(&line));
        tagged.push('\n');
        original.push_str(&vocab.surface(&pair.original.tokens)?);
        original.push('\n');
    }
    Ok(vec![
        ("vocab.txt", vocab.to_file_string()),
        ("names.txt", names),
        ("model.json", class_model.to_json_string(vocab)?),
        ("word_model.json", word_model.to_json_string(vocab)?),
        (
            "scores.jsonl",
            ScoresFile::to_file_string(vocab, &inst.scores)?,
        ),
        ("refs.jsonl", refs_to_string(vocab, &inst.corpus)?),
        ("lm_tagged.txt", tagged),
        ("lm_original.txt", original),
    ])
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let spec = a.spec();
    let inst = gen_instance(a.seed, &spec)?;
    let files = instance_files(&inst)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::Input(format!("{}: {e}", a.out.display())))?;
    let mut hashes = serde_json::Map::new();
    for (name, text) in &files {
        let path = a.out.join(name);
        fs::write(&path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        hashes.insert(name.to_string(), json!(content_hash(text.as_bytes())));
    }
    let manifest = json!({
        "seed": a.seed,
        "vocab_hash": inst.vocab.content_hash(),
        "spec": spec,
        "utterances": inst.corpus.len(),
        "names": inst.names.len(),
        "files": hashes,
    });
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(a.out.join("manifest.json"), &text)?;
    write_output(None, &text)
}

fn cmd_decode(a: DecodeArgs) -> CmdResult {
    let vocab = load_vocab(&sibling_vocab(a.vocab.as_ref(), &a.model))?;
    let model = ModelBundle::load(&a.model, &vocab)?;
    let scores = ScoresFile::load(&a.scores)?;
    scores.check(&vocab)?;
    let class_mode = matches!(a.mode, Mode::Cfnt | Mode::GreedyCfnt);
    let trie = if class_mode {
        if !model.lm.has_class() {
            return Err(Failure::Input(format!(
                "{} has no @name class; class decoding needs a class model",
                a.model.display()
            )));
        }
        match (&a.name_list, a.empty_name_list) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
                Some(NameTrie::build(&NameList::parse(&text, &vocab)?)?)
            }
            (None, true) => Some(NameTrie::empty()),
            (None, false) => {
                return Err(Failure::Input(
                    "class decoding needs --name-list or --empty-name-list".into(),
                ))
            }
        }
    } else {
        None
    };
    let mut cfg = DecodeConfig::new(a.beam).with_dynamic_beam(a.dynamic_beam);
    cfg.max_symbols_per_frame = a.max_symbols;
    if let Some(b) = a.in_class_budget {
        cfg.in_class_budget = b;
    }
    cfg.validate()?;

    let decoded: Vec<Result<Vec<Hypothesis>, Error>> = scores
        .utterances
        .par_iter()
        .map(|utt| {
            let blank = model.blank_for(utt)?;
            let lm = &model.lm;
            match (a.mode, &trie) {
                (Mode::Fnt, _) => fnt_beam_search(&utt.enc, &blank, lm, &cfg),
                (Mode::GreedyFnt, _) => Ok(vec![fnt_greedy(
                    &utt.enc,
                    &blank,
                    lm,
                    cfg.max_symbols_per_frame,
                )?]),
                (Mode::Cfnt, Some(trie)) => cfnt_beam_search(&utt.enc, &blank, lm, trie, &cfg),
                (Mode::GreedyCfnt, Some(trie)) => Ok(vec![cfnt_greedy(
                    &utt.enc,
                    &blank,
                    lm,
                    trie,
                    cfg.max_symbols_per_frame,
                )?]),
                _ => unreachable!("class modes always carry a trie"),
            }
        })
        .collect();

    let mut text = String::new();
    for (i, hyps) in decoded.into_iter().enumerate() {
        for (rank, h) in hyps?.iter().enumerate() {
            text.push_str(&serde_json::to_string(&DecodeLine::new(
                i, rank, h, &vocab,
            )?)?);
            text.push('\n');
        }
    }
    write_output(a.out.as_deref(), &text)
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let refs = load_refs(&a.refs)?;
    let hyps = load_hyps(&a.hyps)?;
    let names: Vec<Vec<String>> = match &a.name_list {
        Some(path) => {
            let vocab = load_vocab(&sibling_vocab(a.vocab.as_ref(), path))?;
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            NameList::parse(&text, &vocab)?
                .names()
                .iter()
                .map(|n| vocab.strings(n))
                .collect::<Result<_, _>>()?
        }
        None => Vec::new(),
    };
    let mode = match a.entity_mode {
        EntityModeArg::Spans => EntityMode::Spans,
        EntityModeArg::Match => {
            if a.name_list.is_none() {
                return Err(Failure::Input(
                    "--entity-mode match needs --name-list".into(),
                ));
            }
            EntityMode::Match
        }
    };
    let report = evaluate(&refs, &hyps, &names, mode, a.per_utt)?;
    write_output(
        a.out.as_deref(),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )
}

fn cmd_oracle(a: OracleArgs) -> CmdResult {
    let lm = match &a.model {
        Some(path) => {
            let vocab = load_vocab(&sibling_vocab(a.vocab.as_ref(), path))?;
            Some(ModelBundle::load(path, &vocab)?.lm)
        }
        None => None,
    };
    let mut worst: f64 = 0.0;
    for k in 0..a.trials {
        let seed = a.seed.wrapping_add(k);
        let trial = match &lm {
            Some(lm) => oracle_trial_with(seed, a.max_t, a.max_u, lm)?,
            None => oracle_trial(seed, a.max_t, a.max_u, a.max_v)?,
        };
        let diff = trial.abs_diff();
        if !(diff <= a.tolerance) {
            return Err(Failure::Check(format!(
                "seed {seed}: forward {} vs enumeration {} (T={}, U={}, V={})",
                trial.forward, trial.brute_force, trial.frames, trial.labels, trial.vocab
            )));
        }
        worst = worst.max(diff);
    }
    let summary = json!({
        "trials": a.trials,
        "passed": a.trials,
        "max_abs_diff": worst,
        "tolerance": a.tolerance,
    });
    write_output(None, &(summary.to_string() + "\n"))
}

fn cmd_loss(a: LossArgs) -> CmdResult {
    let cfg = LossConfig::new(a.lambda_f)?;
    let vocab = load_vocab(&sibling_vocab(a.vocab.as_ref(), &a.model))?;
    let model = ModelBundle::load(&a.model, &vocab)?;
    let scores = ScoresFile::load(&a.scores)?;
    scores.check(&vocab)?;
    let refs = load_refs(&a.refs)?;
    if refs.len() != scores.utterances.len() {
        return Err(Error::Pairing {
            refs: refs.len(),
            hyps: scores.utterances.len(),
        }
        .into());
    }
    let rows: Vec<Result<String, Error>> = scores
        .utterances
        .par_iter()
        .zip(&refs)
        .enumerate()
        .map(|(i, (utt, r))| {
            let labels = vocab.ids(&r.tokens)?;
            let blank = model.blank_for(utt)?;
            let t = fnt_loss_terms(&utt.enc, &blank, &model.lm, &labels, &cfg)?;
            Ok(json!({
                "utt": i,
                "log_prob": -t.transducer,
                "lm_log_prob": t.lm_logprob,
                "j_t": t.transducer,
                "j_f": t.total,
            })
            .to_string())
        })
        .collect();
    let mut text = String::new();
    for row in rows {
        text.push_str(&row?);
        text.push('\n');
    }
    eprintln!("lambda_f = {}", cfg.lambda_f);
    write_output(a.out.as_deref(), &text)
}
