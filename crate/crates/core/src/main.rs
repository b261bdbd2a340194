use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spkeval::audio::{read_wav, write_fbank, AudioBuffer, Frontend};
use spkeval::checkpoint::Checkpoint;
use spkeval::io::cnceleb::convert_cnceleb;
use spkeval::io::{
    parse_enrollment, parse_trials, read_scores, write_atomic, write_scores, Config, EmbeddingStore, ScoreLine,
};
use spkeval::metrics::{det_sweep, format_det, mean_average_precision, DcfParams, EvalReport};
use spkeval::net::proxy::{ProxyEmbedder, PROXY_SPEC_CODE};
use spkeval::net::{Embedder, NetSpec, Network};
use spkeval::pipeline::{embed_all, embed_enrollment_concat, relevant_ids, retrieve_topk, run_verification, VerifyOptions};
use spkeval::scoring::{build_cohort, fuse_scores, fuse_with_weights, AsNorm, Cohort, ScoreSet};
use spkeval::train::{format_trace, labelled_examples, train_two_stage, SgdConfig, StagePlan};
use spkeval::Error;

#[derive(Parser)]
#[command(name = "spkeval", version, about = "Speaker-verification evaluation toolkit")]
struct Cli {
    /// Log progress at debug level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute 80-dim log mel-filterbank features with mean normalization.
    Fbank {
        wav: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Embed utterances into an embedding store.
    Embed(EmbedArgs),
    /// Train an AAM-softmax classifier head on stored embeddings.
    TrainHead(TrainHeadArgs),
    /// Build an imposter cohort of per-speaker mean embeddings.
    Cohort {
        #[arg(long)]
        train: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score a trial list.
    Score(ScoreArgs),
    /// Compute minDCF, EER and the operating point of a score file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        p_target: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the DET curve as `threshold fnr fpr` lines.
        #[arg(long)]
        det: Option<PathBuf>,
    },
    /// Rank a pool of utterances for each query embedding.
    Retrieve(RetrieveArgs),
    /// Fuse aligned score files.
    Fuse(FuseArgs),
    /// Convert CN-Celeb style eval lists to trial, enrollment and wav lists.
    ConvertCnceleb {
        root: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct EmbedArgs {
    /// WAV files; the utterance id is the file stem and the speaker id the
    /// parent directory name.
    wavs: Vec<PathBuf>,
    /// List of `utterance_id path [speaker_id]` lines.
    #[arg(long)]
    list: Option<PathBuf>,
    /// Network preset: 34, 152, 221 or 293.
    #[arg(long, default_value_t = 34)]
    spec: u32,
    /// Load weights (network or proxy embedder) instead of seeding them.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Write the weights used to this checkpoint.
    #[arg(long)]
    save_checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embed each enrollment speaker's concatenated audio instead, keyed by
    /// speaker.
    #[arg(long)]
    enrollment: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainHeadArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value_t = 165)]
    stage_one_epochs: usize,
    #[arg(long, default_value_t = 5)]
    stage_two_epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-epoch `epoch<TAB>lr<TAB>mean_loss` trace of both stages.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set top_k=300`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        cfg.apply_overrides(&self.overrides).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    trials: PathBuf,
    /// `enroll_speaker utterance_id` lines.
    #[arg(long)]
    enrollment: Option<PathBuf>,
    #[arg(long)]
    store: PathBuf,
    /// Concatenated-enrollment store, needed by the utt-concat strategy.
    #[arg(long)]
    concat: Option<PathBuf>,
    #[arg(long)]
    cohort: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Write the evaluation report here when trials are labelled.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    #[arg(short, default_value_t = 10)]
    k: usize,
    /// Apply AS-norm against this cohort.
    #[arg(long)]
    cohort: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Score files, all over the same trials in the same order.
    #[arg(long, required = true)]
    scores: Vec<PathBuf>,
    /// minDCF of each system; weights are proportional to the inverse.
    #[arg(long = "min-dcf")]
    min_dcf: Vec<f64>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(short, long)]
    output: PathBuf,
}

enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Fbank { wav, output } => {
            let frontend = Frontend::default();
            let feats = frontend.extract(&read_wav(&wav, frontend.working_rate)?)?;
            let mut bytes = Vec::new();
            write_fbank(&mut bytes, &feats)?;
            write_atomic(&output, &bytes)?;
            println!("{} frames x {} dims", feats.frames, feats.dims);
            Ok(())
        }
        Command::Embed(a) => embed(a),
        Command::TrainHead(a) => train_head(a),
        Command::Cohort { train, output } => {
            let cohort = build_cohort(&EmbeddingStore::load(&train)?)?;
            cohort.to_store()?.save(&output)?;
            println!("cohort of {} speakers ({} excluded)", cohort.len(), cohort.excluded.len());
            Ok(())
        }
        Command::Score(a) => score(a),
        Command::Evaluate { scores, trials, p_target, output, det } => {
            let lines = read_scores(&scores)?;
            let trials = parse_trials(&trials)?;
            let labels: HashMap<(&str, &str), bool> = trials
                .trials
                .iter()
                .filter_map(|t| Some(((t.enroll_speaker.as_str(), t.test_utterance.as_str()), t.label?.is_target())))
                .collect();
            let mut missing = Vec::new();
            let mut is_target = Vec::with_capacity(lines.len());
            for l in &lines {
                match labels.get(&(l.enroll_speaker.as_str(), l.test_utterance.as_str())) {
                    Some(&t) => is_target.push(t),
                    None => missing.push(format!("{} {}", l.enroll_speaker, l.test_utterance)),
                }
            }
            if !missing.is_empty() {
                return Err(Error::MissingIds(missing).into());
            }
            let s: Vec<f64> = lines.iter().map(|l| l.score).collect();
            let params = DcfParams { p_target, ..DcfParams::default() };
            let report = EvalReport::compute(&s, &is_target, &params)?;
            print!("{report}");
            if let Some(p) = output {
                write_atomic(p, report.to_string().as_bytes())?;
            }
            if let Some(p) = det {
                write_atomic(p, format_det(&det_sweep(&s, &is_target)?).as_bytes())?;
            }
            Ok(())
        }
        Command::Retrieve(a) => retrieve(a),
        Command::Fuse(a) => fuse(a),
        Command::ConvertCnceleb { root, output } => {
            let c = convert_cnceleb(&root)?;
            std::fs::create_dir_all(&output)?;
            write_atomic(output.join("wavs.lst"), c.wav_list().as_bytes())?;
            write_atomic(output.join("enroll.txt"), c.enrollment_list().as_bytes())?;
            write_atomic(output.join("trials.txt"), c.trial_list().as_bytes())?;
            println!("{} utterances, {} enrollment speakers, {} trials", c.wavs.len(), c.trials.enrollment.len(), c.trials.len());
            Ok(())
        }
    }
}

fn load_embedder(a: &EmbedArgs) -> Result<(Box<dyn Embedder>, Checkpoint), CliError> {
    match &a.checkpoint {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let e: Box<dyn Embedder> = if ck.spec_code == PROXY_SPEC_CODE {
                Box::new(ProxyEmbedder::from_checkpoint(&ck)?)
            } else {
                Box::new(Network::from_checkpoint(&ck)?)
            };
            Ok((e, ck))
        }
        None => {
            let spec = NetSpec::from_code(a.spec).map_err(|e| CliError::Usage(e.to_string()))?;
            let net = Network::build(spec, a.seed)?;
            let ck = net.to_checkpoint();
            Ok((Box::new(net), ck))
        }
    }
}

fn read_audio(a: &EmbedArgs, rate: u32) -> Result<Vec<AudioBuffer>, CliError> {
    let mut out = Vec::new();
    if let Some(list) = &a.list {
        let text = std::fs::read_to_string(list)?;
        for (i, line) in text.lines().enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            if toks.len() < 2 {
                return Err(Error::Parse { path: list.clone(), line: i + 1, msg: "expected `id path [speaker]`".into() }.into());
            }
            let mut audio = read_wav(toks[1], rate)?;
            audio.utterance_id = toks[0].to_string();
            audio.speaker_id = toks.get(2).unwrap_or(&"").to_string();
            out.push(audio);
        }
    }
    for p in &a.wavs {
        let mut audio = read_wav(p, rate)?;
        audio.speaker_id = p
            .parent()
            .and_then(Path::file_name)
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.push(audio);
    }
    if out.is_empty() {
        return Err(CliError::Usage("no input audio; pass WAV files or --list".into()));
    }
    Ok(out)
}

fn embed(a: EmbedArgs) -> CliResult {
    let (embedder, ck) = load_embedder(&a)?;
    let audio = read_audio(&a, Frontend::default().working_rate)?;
    let store = match &a.enrollment {
        Some(p) => {
            let enrollment = parse_enrollment(p)?;
            let by_id: HashMap<String, AudioBuffer> = audio.into_iter().map(|u| (u.utterance_id.clone(), u)).collect();
            embed_enrollment_concat(embedder.as_ref(), &enrollment, &by_id)?
        }
        None => embed_all(embedder.as_ref(), &audio)?,
    };
    store.save(&a.output)?;
    if let Some(p) = &a.save_checkpoint {
        ck.save(p)?;
    }
    println!("{} embeddings of dim {}", store.len(), store.dim());
    Ok(())
}

fn train_head(a: TrainHeadArgs) -> CliResult {
    let store = EmbeddingStore::load(&a.store)?;
    let (examples, bases, speed) = labelled_examples(&store)?;
    let one = StagePlan { speed_perturb_enabled: speed, ..StagePlan::stage_one().with_epochs(a.stage_one_epochs) };
    let two = StagePlan::stage_two().with_epochs(a.stage_two_epochs);
    let sgd = SgdConfig { batch_size: a.batch_size, ..SgdConfig::default() };
    let out = train_two_stage(&examples, bases.len(), (&one, &two), sgd, a.seed)?;
    out.stage_two.head.to_checkpoint().save(&a.output)?;
    if let Some(p) = &a.trace {
        let offset = out.stage_one.trace.len();
        let mut two = out.stage_two.trace.clone();
        two.iter_mut().for_each(|e| e.epoch += offset);
        let text = format_trace(&out.stage_one.trace) + &format_trace(&two);
        write_atomic(p, text.as_bytes())?;
    }
    println!(
        "stage I: {} classes, stage II: {} classes",
        out.stage_one_classes, out.stage_two_classes
    );
    Ok(())
}

fn load_cohort(path: &Option<PathBuf>) -> Result<Option<Cohort>, CliError> {
    Ok(match path {
        Some(p) => Some(Cohort::from_store(&EmbeddingStore::load(p)?)),
        None => None,
    })
}

fn score(a: ScoreArgs) -> CliResult {
    let cfg = a.config.load()?;
    let mut trials = parse_trials(&a.trials)?;
    if let Some(p) = &a.enrollment {
        trials = trials.with_enrollment(parse_enrollment(p)?);
    }
    let store = EmbeddingStore::load(&a.store)?;
    let concat = a.concat.as_ref().map(EmbeddingStore::load).transpose()?;
    let cohort = load_cohort(&a.cohort)?;
    if cfg.asnorm && cohort.is_none() {
        return Err(CliError::Usage("AS-norm is on; pass --cohort or --set asnorm=off".into()));
    }
    let run = run_verification(&trials, &store, concat.as_ref(), cohort.as_ref(), &VerifyOptions::from(&cfg))?;
    write_scores(&a.output, &trials, &run.scores.scores)?;
    if let Some(report) = &run.report {
        print!("{report}");
        if let Some(p) = &a.report {
            write_atomic(p, report.to_string().as_bytes())?;
        }
    }
    Ok(())
}

fn retrieve(a: RetrieveArgs) -> CliResult {
    let cfg = a.config.load()?;
    let queries = EmbeddingStore::load(&a.queries)?;
    let pool = EmbeddingStore::load(&a.pool)?;
    let cohort = load_cohort(&a.cohort)?;
    let norm = cohort.as_ref().map(|c| AsNorm::new(c, cfg.selection())).transpose()?;
    let q: Vec<&[f32]> = queries.iter().map(|r| r.vector.as_slice()).collect();
    let result = retrieve_topk(&q, &pool, a.k, norm.as_ref())?;
    let mut text = String::new();
    for (rec, list) in queries.iter().zip(&result.lists) {
        for (rank, hit) in list.iter().enumerate() {
            let _ = writeln!(text, "{} {} {} {}", rec.utterance_id, rank + 1, hit.utterance_id, hit.score);
        }
    }
    write_atomic(&a.output, text.as_bytes())?;
    let relevant: Vec<HashSet<String>> = queries.iter().map(|r| relevant_ids(&pool, &r.speaker_id)).collect();
    if relevant.iter().all(|r| !r.is_empty()) {
        let rankings: Vec<Vec<&str>> =
            result.lists.iter().map(|l| l.iter().map(|h| h.utterance_id.as_str()).collect()).collect();
        println!("mAP={}", mean_average_precision(&rankings, &relevant)?);
    }
    Ok(())
}

fn fuse(a: FuseArgs) -> CliResult {
    let cfg = a.config.load()?;
    let files: Vec<Vec<ScoreLine>> = a.scores.iter().map(read_scores).collect::<Result<_, _>>()?;
    let first = &files[0];
    for (path, f) in a.scores.iter().zip(&files) {
        let aligned = f.len() == first.len()
            && f.iter().zip(first).all(|(x, y)| x.enroll_speaker == y.enroll_speaker && x.test_utterance == y.test_utterance);
        if !aligned {
            return Err(Error::Misaligned(format!("{} does not list the same trials as {}", path.display(), a.scores[0].display())).into());
        }
    }
    let sets: Vec<ScoreSet> = a
        .scores
        .iter()
        .zip(&files)
        .map(|(p, f)| ScoreSet::new(f.iter().map(|l| l.score).collect(), p.display().to_string(), ""))
        .collect();
    let fused = match (&cfg.fusion_weights, a.min_dcf.is_empty()) {
        (_, false) => fuse_scores(&sets, &a.min_dcf)?,
        (Some(w), true) => fuse_with_weights(&sets, w)?,
        (None, true) => return Err(CliError::Usage("pass --min-dcf per system or set fusion_weights".into())),
    };
    let mut text = String::new();
    for (l, s) in first.iter().zip(&fused.scores) {
        let _ = writeln!(text, "{} {} {}", l.enroll_speaker, l.test_utterance, s);
    }
    write_atomic(&a.output, text.as_bytes())?;
    log::debug!("fused {} systems: {}", sets.len(), fused.chain);
    Ok(())
}
