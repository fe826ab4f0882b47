use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use glad_core::active::write_trace_csv;
use glad_core::bench::{run_benchmark, BenchConfig, Method};
use glad_core::data::{load_csv, make_toy, CsvOptions, Dataset};
use glad_core::demo::{run_toy_demo, ToyDemoConfig};
use glad_core::explain::{explain_instance, ExplainContext, SurrogateConfig, TreeConfig};
use glad_core::objective::{ranking, LossConfig};
use glad_core::snapshot::SessionSnapshot;

mod seeds;

#[derive(Debug, Parser)]
#[command(name = "glad", version, about = "Glocalized anomaly detection with analyst feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Discovery curves for several methods over seeded runs.
    Bench(BenchArgs),
    /// Toy walkthrough: grids before and after priming and after feedback.
    Toy(ToyArgs),
    /// Explain one instance of a saved session.
    Explain(ExplainArgs),
    /// Run the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct LossArgs {
    /// Quantile for the score anchor.
    #[arg(long, default_value_t = LossConfig::default().tau)]
    tau: f64,
    /// Prior relevance the network is primed to.
    #[arg(long, default_value_t = LossConfig::default().b)]
    bias: f64,
    /// Weight of the prior loss.
    #[arg(long, default_value_t = LossConfig::default().lambda)]
    lambda: f64,
}

impl LossArgs {
    fn config(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            tau: self.tau,
            b: self.bias,
        }
    }
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// CSV file to benchmark, or `toy`. Repeatable.
    #[arg(long = "dataset", required = true)]
    datasets: Vec<String>,
    /// Comma-separated subset of glad, loda, loda-aad, random.
    #[arg(long, value_delimiter = ',', default_value = "glad,loda,loda-aad,random")]
    methods: Vec<Method>,
    /// Ensemble size.
    #[arg(long, default_value_t = 15)]
    projections: usize,
    #[arg(long, default_value_t = 60)]
    budget: usize,
    #[command(flatten)]
    loss: LossArgs,
    /// A count `N` (seeds 0..N), a range `a-b` or a list `1,5,9`.
    #[arg(long, default_value = "10", value_parser = seeds::parse)]
    seeds: seeds::Seeds,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Name of the label column in the CSV files.
    #[arg(long)]
    label_column: Option<String>,
    /// Use raw features instead of z-scored ones.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Debug, Args)]
struct ToyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    budget: usize,
    #[arg(long, default_value_t = 4)]
    projections: usize,
    #[command(flatten)]
    loss: LossArgs,
    /// Grid points per axis.
    #[arg(long, default_value_t = glad_core::grid::DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    /// Session snapshot written by `toy` or the server.
    snapshot: PathBuf,
    /// Instance to explain; defaults to the current top-ranked instance.
    index: Option<usize>,
    /// Number of surrogate terms.
    #[arg(long, default_value_t = SurrogateConfig::default().top_k)]
    k: usize,
    /// Print the payload as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    serve_addr: SocketAddr,
    #[arg(long, default_value = "snapshots")]
    snapshot_dir: PathBuf,
    /// Directory of CSV datasets offered by the server.
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,glad_service=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(a) => cmd_bench(&a),
        Command::Toy(a) => cmd_toy(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_dataset(source: &str, opts: &CsvOptions) -> Result<Dataset> {
    let path = Path::new(source);
    if !path.exists() && source == "toy" {
        let mut ds = make_toy(0, 500, 15)?;
        ds.name = "toy".into();
        return Ok(ds);
    }
    load_csv(path, opts).with_context(|| format!("loading {source}"))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_bench(a: &BenchArgs) -> Result<ExitCode> {
    let cfg = BenchConfig {
        methods: a.methods.clone(),
        members: a.projections,
        budget: a.budget,
        loss: a.loss.config(),
        seeds: a.seeds.0.clone(),
        standardize: !a.no_standardize,
        ..BenchConfig::default()
    };
    cfg.validate()?;
    let mut opts = CsvOptions::default();
    if let Some(c) = &a.label_column {
        opts = opts.with_label_column(c.clone());
    }
    let datasets = a
        .datasets
        .iter()
        .map(|s| load_dataset(s, &opts))
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<&str> = datasets.iter().map(|d| d.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        bail!("datasets must have distinct names");
    }

    let mut failed = 0;
    let mut summary = String::new();
    for ds in &datasets {
        let report = run_benchmark(ds, &cfg)?;
        let dir = a.out.join(&ds.name);
        report.write(&dir)?;
        for r in report.failures() {
            if let Err(msg) = &r.outcome {
                eprintln!("{}: {} seed {} failed: {msg}", ds.name, r.method, r.seed);
            }
            failed += 1;
        }
        for (m, seed, msg) in report.invariant_violations() {
            eprintln!("{}: {m} seed {seed} produced an invalid trace: {msg}", ds.name);
            failed += 1;
        }
        let text = report.summary();
        print!("{text}");
        summary.push_str(&text);
        write_file(&dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    }
    write_file(&a.out.join("summary.txt"), summary)?;
    Ok(if failed > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_toy(a: &ToyArgs) -> Result<ExitCode> {
    let cfg = ToyDemoConfig {
        seed: a.seed,
        members: a.projections,
        budget: a.budget,
        loss: a.loss.config(),
        resolution: a.resolution,
        ..ToyDemoConfig::default()
    };
    let demo = run_toy_demo(&cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (stage, grid) in [("initial", &demo.initial), ("primed", &demo.primed), ("feedback", &demo.feedback)] {
        let path = a.out.join(format!("grid_{stage}.csv"));
        grid.write_csv(fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    let trace_path = a.out.join(format!("trace_glad_{}.csv", a.seed));
    write_trace_csv(demo.trace(), fs::File::create(&trace_path)?)?;

    let names = &demo.dataset.feature_names;
    let mut text = String::new();
    for r in &demo.regions {
        text.push_str(&format!(
            "member {} ({} instances, tree accuracy {:.3})\n",
            r.member, r.n_assigned, r.accuracy
        ));
        for rule in &r.rules {
            text.push_str(&format!("  {}  [support {}, purity {:.2}]\n", rule.render(names), rule.support, rule.purity));
        }
    }
    write_file(&a.out.join("regions.txt"), &text)?;
    write_file(&a.out.join("regions.json"), serde_json::to_string_pretty(&demo.regions)?)?;

    let snap = SessionSnapshot::new(
        format!("toy-{}", a.seed),
        demo.dataset.name.clone(),
        names.clone(),
        Some(demo.stats.clone()),
        demo.session.clone(),
    );
    snap.save(a.out.join("snapshot.json"))?;

    let found = demo.trace().last().map_or(0, |r| r.cumulative_anomalies);
    println!(
        "toy seed {}: {found} of {} anomalies in {} queries",
        a.seed,
        demo.dataset.n_anomalies(),
        demo.trace().len()
    );
    let (pm, ps) = demo.primed.max_relevance_spread();
    let (fm, fs_) = demo.feedback.max_relevance_spread();
    println!("max relevance spread: primed {ps:.3} (member {pm}), after feedback {fs_:.3} (member {fm})");
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_explain(a: &ExplainArgs) -> Result<ExitCode> {
    let snap = SessionSnapshot::load(&a.snapshot).with_context(|| format!("loading {}", a.snapshot.display()))?;
    let s = &snap.session;
    let index = match a.index {
        Some(i) => i,
        None => ranking(&s.scores()?)[0],
    };
    let ctx = ExplainContext {
        ensemble: s.ensemble(),
        params: s.params(),
        features: s.features(),
        feature_names: &snap.feature_names,
        stats: snap.stats.as_ref(),
    };
    let surrogate = SurrogateConfig {
        top_k: a.k,
        seed: s.config().seed,
        ..SurrogateConfig::default()
    };
    let explanation = explain_instance(&ctx, index, &TreeConfig::default(), &surrogate)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&explanation)?);
    } else {
        println!("{explanation}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve(a: ServeArgs) -> Result<ExitCode> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(glad_service::serve(glad_service::ServiceConfig {
        addr: a.serve_addr,
        snapshot_dir: a.snapshot_dir,
        dataset_dir: a.dataset_dir,
    }))
    .context("server stopped")?;
    Ok(ExitCode::SUCCESS)
}
