use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mplnet::baseline::chordal_log_ml;
use mplnet::data::{load_dataset, Dataset, HeaderMode};
use mplnet::graph::{confusion, Combine, UGraph};
use mplnet::pipeline::{learn, run_bench, BenchConfig, BenchRow, LearnConfig, Phase2};
use mplnet::score::{mpl_global, pic_global, GraphPrior, ScoreParams};
use mplnet::synth::{
    draw_factors, moralize, read_model, replicate, sample, sample_dag, ComponentKind, ModelFile,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_CAPACITY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mplnet",
    version,
    about = "Markov network structure learning with the marginal pseudo-likelihood"
)]
struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a graph from data.
    Learn(LearnArgs),
    /// Score one or more graphs against data.
    Score(ScoreArgs),
    /// Compare a learned graph with the true one.
    Eval { learned: PathBuf, truth: PathBuf },
    /// Draw samples from a model file.
    Sample(SampleArgs),
    /// Generate a random model over replicated synthetic components.
    GenModel(GenModelArgs),
    /// Print the moral graph of a DAG file.
    Moralize { dag: PathBuf },
    /// Run the synthetic benchmark and print a CSV report.
    Bench(BenchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Cardinalities, comma separated; overrides any header line.
    #[arg(long, value_delimiter = ',')]
    cards: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    header: HeaderArg,
}

#[derive(Args)]
struct ScoreOpts {
    /// Equivalent sample size.
    #[arg(long, default_value_t = 1.0)]
    ess: f64,
    #[arg(long, value_enum, default_value_t = PriorArg::Uniform)]
    prior: PriorArg,
}

impl ScoreOpts {
    fn params(&self) -> Result<ScoreParams, CliError> {
        ScoreParams::new(self.ess, self.prior.into()).map_err(CliError::usage)
    }
}

#[derive(Args)]
struct LearnArgs {
    data: PathBuf,
    #[command(flatten)]
    data_opts: DataArgs,
    #[command(flatten)]
    score: ScoreOpts,
    #[arg(long, value_enum, default_value_t = CombineArg::And)]
    combine: CombineArg,
    #[arg(long, value_enum, default_value_t = Phase2Arg::Hc)]
    phase2: Phase2Arg,
    /// Worker threads for blanket discovery.
    #[arg(long, env = "MPLNET_THREADS", default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = mplnet::pbo::DEFAULT_SCALE)]
    pbo_scale: i64,
    /// Largest total number of blanket candidates the exact phase accepts.
    #[arg(long, default_value_t = mplnet::pbo::DEFAULT_CANDIDATE_LIMIT)]
    pbo_limit: u64,
    /// Accepted for interface uniformity; learning is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write `<prefix>.blankets`, `.and.graph`, `.or.graph`, `.graph` and, for opb-export, `.opb`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    data: PathBuf,
    #[arg(required = true)]
    graphs: Vec<PathBuf>,
    #[command(flatten)]
    data_opts: DataArgs,
    #[command(flatten)]
    score: ScoreOpts,
    #[arg(long, value_enum, default_value_t = Method::Mpl)]
    method: Method,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenModelArgs {
    #[arg(long, value_delimiter = ',', default_value = "grid,hub,loop,clique")]
    components: Vec<ComponentKind>,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    /// Cardinality of every variable.
    #[arg(long, default_value_t = 2)]
    card: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "grid,hub,loop,clique")]
    components: Vec<ComponentKind>,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "250,500,1000,2000,4000,8000,16000,32000"
    )]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    dists: usize,
    #[arg(long, default_value_t = 10)]
    sets: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    ess_list: Vec<f64>,
    #[arg(long, value_enum, default_value_t = PriorArg::Uniform)]
    prior: PriorArg,
    #[arg(long, value_enum, default_value_t = Phase2Arg::Hc)]
    phase2: Phase2Arg,
    #[arg(long, value_enum, default_value_t = CombineArg::And)]
    combine: CombineArg,
    #[arg(long, env = "MPLNET_THREADS", default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeaderArg {
    Auto,
    Present,
    Absent,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Uniform,
    Sparsity,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombineArg {
    And,
    Or,
}

#[derive(Clone, Copy, ValueEnum)]
enum Phase2Arg {
    None,
    Hc,
    Exact,
    OpbExport,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Mpl,
    Pic,
    Bdeu,
}

impl From<HeaderArg> for HeaderMode {
    fn from(h: HeaderArg) -> Self {
        match h {
            HeaderArg::Auto => HeaderMode::Auto,
            HeaderArg::Present => HeaderMode::Present,
            HeaderArg::Absent => HeaderMode::Absent,
        }
    }
}

impl From<PriorArg> for GraphPrior {
    fn from(p: PriorArg) -> Self {
        match p {
            PriorArg::Uniform => GraphPrior::Uniform,
            PriorArg::Sparsity => GraphPrior::Sparsity,
        }
    }
}

impl From<CombineArg> for Combine {
    fn from(c: CombineArg) -> Self {
        match c {
            CombineArg::And => Combine::And,
            CombineArg::Or => Combine::Or,
        }
    }
}

impl From<Phase2Arg> for Phase2 {
    fn from(p: Phase2Arg) -> Self {
        match p {
            Phase2Arg::None => Phase2::None,
            Phase2Arg::Hc => Phase2::Hc,
            Phase2Arg::Exact => Phase2::Exact,
            Phase2Arg::OpbExport => Phase2::OpbExport,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Capacity(String),
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    fn in_file(path: &Path, e: mplnet::Error) -> Self {
        match e {
            mplnet::Error::CapacityExceeded { .. } => CliError::Capacity(format!(
                "{}: {e}; try `--phase2 hc` or a larger `--pbo-limit`",
                path.display()
            )),
            other => CliError::Data(format!("{}: {other}", path.display())),
        }
    }
}

impl From<mplnet::Error> for CliError {
    fn from(e: mplnet::Error) -> Self {
        match e {
            mplnet::Error::CapacityExceeded { .. } => {
                CliError::Capacity(format!("{e}; try `--phase2 hc` or a larger `--pbo-limit`"))
            }
            mplnet::Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Output file, or standard output when no path is given.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_data(path: &Path, opts: &DataArgs) -> Result<Dataset, CliError> {
    load_dataset(open(path)?, opts.cards.as_deref(), opts.header.into())
        .map_err(|e| CliError::in_file(path, e))
}

fn read_graph(path: &Path) -> Result<UGraph, CliError> {
    UGraph::read(open(path)?).map_err(|e| CliError::in_file(path, e))
}

fn cmd_learn(args: &LearnArgs) -> Result<(), CliError> {
    let data = read_data(&args.data, &args.data_opts)?;
    let phase2: Phase2 = args.phase2.into();
    if phase2 == Phase2::OpbExport && args.out.is_none() {
        return Err(CliError::Usage(
            "`--phase2 opb-export` needs `--out`".into(),
        ));
    }
    if args.threads == 0 {
        return Err(CliError::Usage("`--threads` must be at least 1".into()));
    }
    let config = LearnConfig {
        params: args.score.params()?,
        combine: args.combine.into(),
        phase2,
        threads: args.threads,
        pbo_scale: args.pbo_scale,
        pbo_limit: args.pbo_limit,
        ..Default::default()
    };
    let out = learn(&data, &config)?;
    log::info!(
        "final graph: {} edges, log-MPL {:.6}",
        out.graph.edge_count(),
        out.score
    );

    if let Some(prefix) = &args.out {
        let mut w = create(&with_suffix(prefix, ".blankets"))?;
        out.family.write(&mut w)?;
        w.flush()?;
        for (suffix, g) in [
            (".and.graph", &out.and_graph),
            (".or.graph", &out.or_graph),
            (".graph", &out.graph),
        ] {
            let mut w = create(&with_suffix(prefix, suffix))?;
            g.write(&mut w)?;
            w.flush()?;
        }
        if phase2 == Phase2::OpbExport {
            let problem = out.problem.as_ref().expect("export encodes a problem");
            let mut w = create(&with_suffix(prefix, ".opb"))?;
            problem.write_opb(&mut w)?;
            w.flush()?;
        }
    }

    let mut stdout = io::stdout().lock();
    writeln!(stdout, "# log-mpl {}", out.score)?;
    out.graph.write(&mut stdout)?;
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> Result<(), CliError> {
    let data = read_data(&args.data, &args.data_opts)?;
    let params = args.score.params()?;
    let mut stdout = io::stdout().lock();
    for path in &args.graphs {
        let g = read_graph(path)?;
        let value = match args.method {
            Method::Mpl => mpl_global(&data, &g, &params, None),
            Method::Pic => pic_global(&data, &g),
            Method::Bdeu => chordal_log_ml(&data, &g, params.ess),
        }
        .map_err(|e| CliError::in_file(path, e))?;
        writeln!(stdout, "{value:.9}")?;
    }
    Ok(())
}

fn cmd_eval(learned: &Path, truth: &Path) -> Result<(), CliError> {
    let c = confusion(&read_graph(learned)?, &read_graph(truth)?)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "tp,fp,fn,hamming")?;
    writeln!(stdout, "{},{},{},{}", c.tp, c.fp, c.fn_, c.hamming())?;
    Ok(())
}

fn cmd_sample(args: &SampleArgs) -> Result<(), CliError> {
    let model = read_model(open(&args.model)?).map_err(|e| CliError::in_file(&args.model, e))?;
    let data = match model {
        ModelFile::Markov(m) => sample(&m, args.n, args.seed),
        ModelFile::Dag { model: Some(m), .. } => sample_dag(&m, args.n, args.seed),
        ModelFile::Dag { model: None, .. } => {
            return Err(CliError::Data(format!(
                "{}: DAG file has no CPT blocks",
                args.model.display()
            )))
        }
    };
    let mut w = sink(args.out.as_deref())?;
    data.write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_gen_model(args: &GenModelArgs) -> Result<(), CliError> {
    if args.card < 2 {
        return Err(CliError::Usage("`--card` must be at least 2".into()));
    }
    let g = replicate(&args.components, args.replicas)?;
    let cards = vec![args.card; g.d()];
    let model = draw_factors(&g, &cards, args.seed)?;
    let mut w = sink(args.out.as_deref())?;
    model.write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_moralize(path: &Path) -> Result<(), CliError> {
    let parents = match read_model(open(path)?).map_err(|e| CliError::in_file(path, e))? {
        ModelFile::Dag { parents, .. } => parents,
        ModelFile::Markov(_) => {
            return Err(CliError::Data(format!(
                "{}: not a DAG file",
                path.display()
            )))
        }
    };
    let g = moralize(&parents)?;
    let mut stdout = io::stdout().lock();
    g.write(&mut stdout)?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.threads == 0 {
        return Err(CliError::Usage("`--threads` must be at least 1".into()));
    }
    let config = BenchConfig {
        kinds: args.components.clone(),
        replicas: args.replicas,
        sizes: args.sizes.clone(),
        dists: args.dists,
        sets: args.sets,
        ess_list: args.ess_list.clone(),
        seed: args.seed,
        threads: args.threads,
        learn: LearnConfig {
            params: ScoreParams::new(1.0, args.prior.into())?,
            combine: args.combine.into(),
            phase2: args.phase2.into(),
            ..Default::default()
        },
    };
    let rows = run_bench(&config)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{}", BenchRow::CSV_HEADER)?;
    for r in rows {
        writeln!(stdout, "{}", r.to_csv())?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Learn(a) => cmd_learn(a),
        Command::Score(a) => cmd_score(a),
        Command::Eval { learned, truth } => cmd_eval(learned, truth),
        Command::Sample(a) => cmd_sample(a),
        Command::GenModel(a) => cmd_gen_model(a),
        Command::Moralize { dag } => cmd_moralize(dag),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, msg) = match e {
                CliError::Usage(m) => (EXIT_USAGE, m),
                CliError::Data(m) => (EXIT_DATA, m),
                CliError::Capacity(m) => (EXIT_CAPACITY, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
