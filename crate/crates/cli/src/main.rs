use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dialearn::corpus::synth::{generate_babi, generate_wikimovies};
use dialearn::harness::{
    checkpoint_of, desk_babi, desk_model, evaluate, format_table1, learner_from_checkpoint, load_corpus, run_figure_sweep,
    run_human_feedback_experiment, run_on_corpus, run_second_iteration, run_table1, write_sweep_summary, DataSource,
    DatasetConfig, ExperimentConfig, HumanExperiment, SecondIteration, Sweep, Table1, DATA_ROOT_ENV,
};
use dialearn::memnet::Checkpoint;
use dialearn::policies::{Algorithm, BatchMode};
use dialearn::simulator::TemplateSet;
use teach_service::{ServiceConfig, TeachService};

#[derive(Parser)]
#[command(name = "dialearn", version, about = "Train and evaluate dialogue learners that learn from teacher feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one bot and write its metrics file.
    Train(TrainArgs),
    /// Accuracy of a saved snapshot.
    Evaluate(EvaluateArgs),
    /// Dataset-batch comparison of all learning methods.
    Table1(Table1Args),
    /// Online runs varying one setting.
    Sweep(SweepArgs),
    /// Feedback on a deployed bot with partially revealed rewards.
    HumanExp(HumanArgs),
    /// A second round of feedback collected by the best first-round bot.
    SecondIter(HumanArgs),
    /// Run the teaching service.
    Serve(ServeArgs),
    /// Write generated datasets in the bAbI or WikiMovies file formats.
    GenData(GenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetArg {
    /// train.txt, valid.txt (optional) and test.txt under the data root.
    Babi,
    /// kb.txt, train.txt, valid.txt and test.txt under the data root.
    Wikimovies,
    SynthBabi,
    SynthWikimovies,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Online,
    DatasetBatch,
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long, value_enum)]
    dataset: Option<DatasetArg>,
    #[arg(long, env = DATA_ROOT_ENV)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    max_questions: Option<usize>,
    #[arg(long)]
    max_facts: Option<usize>,
    #[arg(long)]
    memory_cap: Option<usize>,
}

impl DataArgs {
    fn apply(&self, d: &mut DatasetConfig) {
        match self.dataset {
            Some(DatasetArg::Babi) => {
                let valid = self.data_root.as_ref().is_some_and(|r| r.join("valid.txt").exists());
                d.source = DataSource::Babi {
                    train: "train.txt".into(),
                    valid: valid.then(|| "valid.txt".into()),
                    test: "test.txt".into(),
                };
            }
            Some(DatasetArg::Wikimovies) => {
                d.source = DataSource::Wikimovies {
                    kb: "kb.txt".into(),
                    train: "train.txt".into(),
                    valid: "valid.txt".into(),
                    test: "test.txt".into(),
                };
                d.max_candidates.get_or_insert(1000);
            }
            Some(DatasetArg::SynthBabi) => d.source = desk_babi().source,
            Some(DatasetArg::SynthWikimovies) => *d = DatasetConfig::synth_wikimovies(300, 3000, 300, 600),
            None => {}
        }
        if self.max_questions.is_some() {
            d.max_questions = self.max_questions;
        }
        if self.max_facts.is_some() {
            d.max_facts = self.max_facts;
        }
        if let Some(c) = self.memory_cap {
            d.memory_cap = c;
        }
    }

    fn root(&self) -> Option<&Path> {
        self.data_root.as_deref()
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<u8>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    balanced: bool,
    /// Online batch size.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Template fixtures file replacing the built-in teacher templates.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::desk(6, Algorithm::Rbi),
        };
        if let Some(t) = self.task {
            cfg.task = t;
        }
        if let Some(a) = self.algorithm {
            cfg.policy.algorithm = a;
        }
        if let Some(e) = self.epsilon {
            cfg.policy.epsilon = e;
        }
        if self.balanced {
            cfg.policy.balanced = true;
        }
        match (self.mode, self.batch) {
            (Some(ModeArg::DatasetBatch), _) => cfg.policy.batch = BatchMode::Dataset,
            (Some(ModeArg::Online), b) => cfg.policy.batch = BatchMode::Online(b.unwrap_or(32)),
            (None, Some(b)) => cfg.policy.batch = BatchMode::Online(b),
            (None, None) => {}
        }
        if let Some(lr) = self.lr {
            cfg.policy.update.lr = lr;
        }
        if let Some(i) = self.iterations {
            cfg.run.iterations = i;
        }
        if let Some(e) = self.epochs {
            cfg.run.epochs = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        self.data.apply(&mut cfg.dataset);
        cfg.validate()?;
        Ok(cfg)
    }

    fn templates(&self) -> Result<TemplateSet> {
        Ok(match &self.templates {
            Some(p) => TemplateSet::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => TemplateSet::builtin(),
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Directory for the metrics file.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Save the trained model here.
    #[arg(long)]
    save: Option<PathBuf>,
    /// Record elapsed seconds in the metrics file.
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, value_parser = ["train", "valid", "test"], default_value = "test")]
    split: String,
}

#[derive(Args)]
struct Table1Args {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Directory for per-run metrics files and table1.txt / table1.json.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Epsilon,
    BatchSize,
    Algorithm,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    axis: AxisArg,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Directory for per-run metrics files and summary.csv.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct HumanArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    data: DataArgs,
    /// Write the result as JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// TOML service config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Defaults to ./teach-state without a config file.
    #[arg(long)]
    state_dir: Option<PathBuf>,
    /// Snapshot served on first start.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long, env = "DIALEARN_TOKEN")]
    token: Option<String>,
    #[arg(long)]
    hide_gold: bool,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "synth-babi")]
    dataset: DatasetArg,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// bAbI: stories in the training split.
    #[arg(long, default_value_t = 400)]
    stories: usize,
    #[arg(long, default_value_t = 20)]
    statements: usize,
    /// WikiMovies: movies in the KB.
    #[arg(long, default_value_t = 300)]
    movies: usize,
    /// WikiMovies: training questions.
    #[arg(long, default_value_t = 3000)]
    questions: usize,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = a.run.config()?;
    cfg.output_dir = a.output;
    cfg.wall_clock = a.wall_clock;
    let templates = a.run.templates()?;
    let corpus = load_corpus(&cfg.dataset, a.run.data.root(), &templates)?;
    let out = run_on_corpus(&cfg, &corpus, &templates)?;
    println!("run {}", out.run_id);
    for r in &out.records {
        println!("iter {:>3} epoch {:>3} episodes {:>8} accuracy {:.4}", r.iter, r.epoch, r.episodes, r.accuracy);
    }
    if let Some(p) = a.save {
        checkpoint_of(&out.learner, &corpus).save(&p)?;
        println!("saved {}", p.display());
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let cfg = a.run.config()?;
    let templates = a.run.templates()?;
    let corpus = load_corpus(&cfg.dataset, a.run.data.root(), &templates)?;
    let learner = learner_from_checkpoint(Checkpoint::load(&a.snapshot)?, &corpus, cfg.model.response_pool)?;
    let split = match a.split.as_str() {
        "train" => &corpus.train,
        "valid" => &corpus.valid,
        _ => &corpus.test,
    };
    println!("{} accuracy {:.4} ({} questions)", a.split, evaluate(&learner, split)?, split.len());
    Ok(())
}

fn table1(a: Table1Args) -> Result<()> {
    let mut base = a.run.config()?;
    base.output_dir = a.output.clone();
    let rows = run_table1(&Table1 { base, seeds: a.seeds }, a.run.data.root())?;
    let text = format_table1(&rows);
    println!("{text}");
    if let Some(dir) = a.output {
        write(&dir.join("table1.txt"), &text)?;
        write(&dir.join("table1.json"), &serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut base = a.run.config()?;
    if base.policy.batch == BatchMode::Dataset {
        base.policy.batch = BatchMode::Online(32);
    }
    base.output_dir = a.output.clone();
    let sweep = match a.axis {
        AxisArg::Epsilon => Sweep::default_epsilon(),
        AxisArg::BatchSize => Sweep::default_batch_size(),
        AxisArg::Algorithm => Sweep::default_algorithm(),
    };
    let runs = run_figure_sweep(&base, &sweep, &a.seeds, a.run.data.root())?;
    for r in &runs {
        println!("{:<24} seed {:>3} final {:.4}  ({})", r.label, r.seed, r.final_accuracy(), r.run_id);
    }
    if let Some(dir) = a.output {
        write_sweep_summary(&dir.join("summary.csv"), &runs)?;
    }
    Ok(())
}

fn human_config(a: &HumanArgs) -> Result<HumanExperiment> {
    let mut h = match &a.config {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => HumanExperiment::desk(),
    };
    if let Some(s) = a.seed {
        h.seed = s;
    }
    a.data.apply(&mut h.dataset);
    Ok(h)
}

fn human(a: HumanArgs) -> Result<()> {
    let h = human_config(&a)?;
    let res = run_human_feedback_experiment(&h, a.data.root())?;
    println!("pretrained {:.4}", res.pretrained);
    println!("{:<8} {:>8} {:>8} {:>8}", "r", "RBI", "FP", "RBI+FP");
    for (i, r) in res.r_values.iter().enumerate() {
        println!("{:<8} {:>8.4} {:>8.4} {:>8.4}", r, res.rbi[i], res.fp[i], res.rbi_fp[i]);
    }
    if let Some(p) = a.output {
        write(&p, &serde_json::to_string_pretty(&res)?)?;
    }
    Ok(())
}

fn second(a: HumanArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => {
            let mut s = SecondIteration::desk();
            s.first = human_config(&a)?;
            s
        }
    };
    let res = run_second_iteration(&cfg, a.data.root())?;
    println!("first iteration {:.4}", res.first_iteration);
    for (i, eps) in res.epsilons.iter().enumerate() {
        let cells: Vec<String> =
            res.r_values.iter().zip(&res.grid[i]).map(|(r, acc)| format!("r={r}: {acc:.4}")).collect();
        println!("eps={eps:<5} {}", cells.join("  "));
    }
    println!("best {:.4}", res.best());
    if let Some(p) = a.output {
        write(&p, &serde_json::to_string_pretty(&res)?)?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => toml::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => {
            let mut c = ServiceConfig::new("teach-state", desk_babi());
            c.model = desk_model();
            c
        }
    };
    if let Some(d) = &a.state_dir {
        cfg.state_dir = d.clone();
    }
    a.data.apply(&mut cfg.dataset);
    if a.data.data_root.is_some() {
        cfg.data_root = a.data.data_root.clone();
    }
    if a.snapshot.is_some() {
        cfg.initial_snapshot = a.snapshot.clone();
    }
    if a.token.is_some() {
        cfg.token = a.token.clone();
    }
    if a.hide_gold {
        cfg.show_gold = false;
    }
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("bad --host/--port")?;
    let service = Arc::new(TeachService::open(cfg)?);
    println!("serving snapshot {} on http://{addr}", service.snapshot());
    tokio::runtime::Runtime::new()?.block_on(teach_service::serve(service, addr))?;
    Ok(())
}

fn gen_data(a: GenArgs) -> Result<()> {
    fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    match a.dataset {
        DatasetArg::SynthBabi | DatasetArg::Babi => {
            for (name, n, k) in [("train", a.stories, 1), ("valid", a.stories / 5, 2), ("test", a.stories / 2, 3)] {
                let text = generate_babi(n, a.statements, a.seed.wrapping_mul(31).wrapping_add(k));
                write(&a.output.join(format!("{name}.txt")), &text)?;
            }
        }
        DatasetArg::SynthWikimovies | DatasetArg::Wikimovies => {
            let (valid, test) = (a.questions / 10, a.questions / 5);
            let s = generate_wikimovies(a.movies, a.questions + valid + test, a.seed);
            write(&a.output.join("kb.txt"), &s.kb)?;
            let lines: Vec<&str> = s.qa.lines().collect();
            if lines.len() < a.questions + valid + test {
                bail!("generator produced only {} questions", lines.len());
            }
            let (train, rest) = lines.split_at(a.questions);
            let (va, te) = rest.split_at(valid);
            for (name, part) in [("train", train), ("valid", va), ("test", te)] {
                write(&a.output.join(format!("{name}.txt")), &(part.join("\n") + "\n"))?;
            }
        }
    }
    println!("wrote {}", a.output.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Table1(a) => table1(a),
        Command::Sweep(a) => sweep(a),
        Command::HumanExp(a) => human(a),
        Command::SecondIter(a) => second(a),
        Command::Serve(a) => serve(a),
        Command::GenData(a) => gen_data(a),
    }
}
