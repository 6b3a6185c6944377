use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mrflift::bench::{
    self, export_uai, gen_to_dir, landscape, load_instance, BenchError, Checkpoint, RunConfig,
    Solver,
};
use mrflift::gen::{EnergyMode, GenSpec, Order, Topology};
use mrflift::lift::{Backbone, LiftConfig};
use mrflift::message_passing::MinSumConfig;
use mrflift::pci::parse_pci;
use mrflift::uai::{from_energies, write_uai};

#[derive(Parser)]
#[command(
    name = "mrflift",
    version,
    about = "MAP inference for discrete Markov random fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a solver on instance files or directories and write a CSV report.
    Run(RunArgs),
    /// Generate synthetic instances.
    Gen(GenArgs),
    /// Convert a PCI problem (JSON) to a UAI file.
    ConvertPci { input: PathBuf, output: PathBuf },
    /// Re-emit an instance (.uai or PCI .json) as a UAI file.
    Export {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        clamp: Option<f64>,
    },
    /// Train on an instance and sample the loss around the trained weights.
    Landscape(LandscapeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Neurolift,
    Lbp,
    Trbp,
    Brute,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackboneArg {
    Graphsage,
    Gcn,
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long, default_value_t = 1024)]
    lift_dim: usize,
    #[arg(long, default_value_t = 5)]
    layers: usize,
    #[arg(long, default_value_t = 128)]
    jk_dim: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 150)]
    iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 5.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.95)]
    anneal: f64,
    #[arg(long, value_enum, default_value = "graphsage")]
    backbone: BackboneArg,
}

impl LiftArgs {
    fn config(&self, seed: u64) -> LiftConfig {
        LiftConfig {
            lift_dim: self.lift_dim,
            layers: self.layers,
            jk_dim: self.jk_dim,
            lr: self.lr,
            max_iters: self.iters,
            tol: self.tol,
            patience: self.patience,
            t0: self.t0,
            anneal: self.anneal,
            seed,
            backbone: match self.backbone {
                BackboneArg::Graphsage => Backbone::GraphSage,
                BackboneArg::Gcn => Backbone::Gcn,
            },
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    solver: SolverArg,
    #[arg(required = true)]
    instances: Vec<PathBuf>,
    #[arg(long)]
    time_limit: Option<f64>,
    /// Wall-clock seconds between checkpoint rows.
    #[arg(long, default_value_t = 200.0)]
    checkpoint_secs: f64,
    /// Checkpoint every N iterations instead of by wall clock.
    #[arg(long)]
    checkpoint_iters: Option<usize>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, env = "MRFLIFT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// CSV output path; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Directory for assignment sidecars; defaults to `<output>.assignments`.
    #[arg(long)]
    assignments: Option<PathBuf>,
    #[arg(long)]
    clamp: Option<f64>,
    /// Message-passing iterations (lbp, trbp).
    #[arg(long, default_value_t = 60)]
    mp_iters: usize,
    #[arg(long, default_value_t = 0.1)]
    damping: f64,
    #[command(flatten)]
    lift: LiftArgs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    nodes: usize,
    /// Target mean degree; ignored when --edge-prob is given.
    #[arg(long, default_value_t = 8.0)]
    degree: f64,
    #[arg(long)]
    edge_prob: Option<f64>,
    /// Potts energies instead of uniform random potentials.
    #[arg(long)]
    potts: bool,
    /// Number of extra cliques of size 3 or 4.
    #[arg(long)]
    high_order: Option<usize>,
    #[arg(long, default_value_t = 2)]
    min_states: usize,
    #[arg(long, default_value_t = 6)]
    max_states: usize,
    #[arg(long, env = "MRFLIFT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value = "instance")]
    name: String,
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct LandscapeArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long, env = "MRFLIFT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[command(flatten)]
    lift: LiftArgs,
}

fn write_to(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn io::Write) -> Result<(), BenchError>,
) -> Result<(), BenchError> {
    match path {
        Some(p) => {
            let mut file = fs::File::create(p).map_err(|source| BenchError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            f(&mut file)
        }
        None => f(&mut io::stdout().lock()),
    }
}

fn run(args: RunArgs) -> Result<bool, BenchError> {
    let cfg = RunConfig {
        solver: match args.solver {
            SolverArg::Neurolift => Solver::Neurolift,
            SolverArg::Lbp => Solver::Lbp,
            SolverArg::Trbp => Solver::Trbp,
            SolverArg::Brute => Solver::Brute,
        },
        instances: args.instances,
        time_limit: args.time_limit,
        checkpoint: args.checkpoint_iters.map_or(
            Checkpoint::Seconds(args.checkpoint_secs),
            Checkpoint::Iterations,
        ),
        lift: args.lift.config(args.seed),
        minsum: MinSumConfig {
            max_iters: args.mp_iters,
            damping: args.damping,
            ..MinSumConfig::default()
        },
        trials: args.trials,
        seed: args.seed,
        threads: args.threads,
        clamp: args.clamp,
        ..RunConfig::default()
    };
    let out = bench::run(&cfg)?;
    for (what, err) in &out.failures {
        eprintln!("error: {what}: {err}");
    }
    write_to(args.output.as_deref(), |w| bench::write_csv(&out.rows, w))?;
    let sidecars = args
        .assignments
        .or_else(|| args.output.map(|o| o.with_extension("assignments")));
    if let Some(dir) = sidecars {
        bench::write_sidecars(&out.rows, &dir)?;
    }
    Ok(out.ok())
}

fn gen(args: GenArgs) -> Result<(), BenchError> {
    let spec = GenSpec {
        n_vars: args.nodes,
        topology: args
            .edge_prob
            .map_or(Topology::MeanDegree(args.degree), Topology::EdgeProb),
        order: args.high_order.map_or(Order::Pairwise, Order::high_order),
        states: (args.min_states, args.max_states),
        unary: (0.2, 3.0),
        energy: if args.potts {
            EnergyMode::potts()
        } else {
            EnergyMode::random()
        },
        seed: args.seed,
    };
    for p in gen_to_dir(&spec, args.count, &args.out, &args.name)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn convert_pci(input: &Path, output: &Path) -> Result<(), BenchError> {
    let text = fs::read_to_string(input).map_err(|source| BenchError::Io {
        path: input.to_path_buf(),
        source,
    })?;
    let problem = parse_pci(&text).map_err(|source| BenchError::Pci {
        path: input.to_path_buf(),
        source,
    })?;
    let raw =
        from_energies(&mrflift::pci::pci_to_mrf(&problem)).map_err(|source| BenchError::Uai {
            path: input.to_path_buf(),
            source,
        })?;
    fs::write(output, write_uai(&raw)).map_err(|source| BenchError::Io {
        path: output.to_path_buf(),
        source,
    })
}

fn sample_landscape(args: LandscapeArgs) -> Result<(), BenchError> {
    let inst = load_instance(&args.instance, None)?;
    let cfg = args.lift.config(args.seed);
    let l = landscape(&inst, &cfg, args.radius, args.grid, args.seed)?;
    eprintln!("center loss {}", l.center_loss);
    write_to(args.output.as_deref(), |w| l.write_csv(w))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Gen(a) => gen(a).map(|_| true),
        Command::ConvertPci { input, output } => convert_pci(&input, &output).map(|_| true),
        Command::Export {
            input,
            output,
            clamp,
        } => export_uai(&input, &output, clamp).map(|_| true),
        Command::Landscape(a) => sample_landscape(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
