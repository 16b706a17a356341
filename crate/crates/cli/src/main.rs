use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use legtrunc_cli::{
    cross_card, emit_surface, run_experiment, run_rate_study, CliError, ExperimentConfig, Result,
    OUTPUT_ENV,
};

#[derive(Parser)]
#[command(name = "legtrunc", version, about = "Truncation-method experiments for noisy Legendre coefficients")]
struct Cli {
    /// Root directory for run outputs.
    #[arg(long, global = true, env = OUTPUT_ENV)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Random,
    Trapezoid,
}

#[derive(Subcommand)]
enum Command {
    /// Piecewise-polynomial example, random or quadrature noise.
    Example1 {
        #[arg(long, value_enum, default_value = "random")]
        noise: NoiseArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Piecewise polynomial times cosine, quadrature noise by default.
    Example2 {
        #[arg(long, value_enum, default_value = "trapezoid")]
        noise: NoiseArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Convergence rate in delta with the a-priori parameter choice.
    RateStudy {
        /// L2 or C.
        #[arg(long)]
        metric: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Hyperbolic-cross cardinality against n and n ln n.
    CrossCard {
        #[arg(long, value_delimiter = ',', required = true)]
        gamma: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        r: usize,
        /// Also write the table to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Exact and approximate derivative on a uniform grid for a finished run.
    EmitSurface {
        #[arg(long)]
        run: String,
        /// Table row; defaults to the last.
        #[arg(long)]
        row: Option<usize>,
        #[arg(long, default_value_t = 101)]
        grid_points: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; keys override the command preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    h: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Pick n from delta instead of the listed values.
    #[arg(long)]
    choose_n: bool,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    axis: Option<String>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// rescaled or raw_gaussian.
    #[arg(long)]
    noise_mode: Option<String>,
    #[arg(long)]
    noise_norm: Option<f64>,
    #[arg(long)]
    run_id: Option<String>,
}

impl RunArgs {
    fn apply(self, preset: ExperimentConfig, out: Option<PathBuf>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::overlay_file(&preset, path)?,
            None => preset,
        };
        if let Some(v) = self.delta {
            cfg.noise.delta = v;
        }
        if let Some(v) = self.h {
            cfg.noise.h = v;
        }
        if let Some(v) = self.n {
            cfg.method.n = Some(v);
            cfg.method.choose_n = false;
        }
        if self.choose_n {
            cfg.method.n = None;
            cfg.method.choose_n = true;
        }
        if let Some(v) = self.c {
            cfg.method.c = v;
        }
        if let Some(v) = self.gamma {
            cfg.method.gamma = Some(v);
        }
        if let Some(v) = self.r {
            cfg.method.r = v;
        }
        if let Some(v) = self.axis {
            cfg.method.axis = v;
        }
        if let Some(v) = self.seeds {
            cfg.noise.seeds = v;
        }
        if let Some(v) = self.base_seed {
            cfg.noise.base_seed = v;
        }
        if let Some(v) = self.noise_mode {
            cfg.noise.mode = v;
        }
        if let Some(v) = self.noise_norm {
            cfg.noise.norm = Some(v);
        }
        if let Some(v) = self.run_id {
            cfg.output.run_id = Some(v);
        }
        if let Some(dir) = out {
            cfg.output.dir = Some(dir.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }
}

fn print_table(dir: &std::path::Path, table: &legtrunc_cli::ResultsTable) -> Result<()> {
    table.write_csv(std::io::stdout().lock())?;
    eprintln!("results written to {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out;
    match cli.command {
        Command::Example1 { noise, run } => {
            let (preset, id) = match noise {
                NoiseArg::Random => (ExperimentConfig::example1_random(), "example1_random"),
                NoiseArg::Trapezoid => (ExperimentConfig::example1_trapezoid(), "example1_trapezoid"),
            };
            let cfg = run.apply(preset, out)?;
            let res = run_experiment(&cfg, id)?;
            print_table(&res.dir, &res.table)
        }
        Command::Example2 { noise, run } => {
            let mut preset = ExperimentConfig::example2();
            let mut id = "example2_trapezoid";
            if let NoiseArg::Random = noise {
                preset.noise.mode = "rescaled".into();
                preset.noise.h.clear();
                preset.noise.norm = Some(f64::INFINITY);
                id = "example2_random";
            }
            let cfg = run.apply(preset, out)?;
            let res = run_experiment(&cfg, id)?;
            print_table(&res.dir, &res.table)
        }
        Command::RateStudy { metric, run } => {
            if run.config.is_none() {
                return Err(CliError::Config("rate-study requires --config <file>".into()));
            }
            let mut cfg = run.apply(ExperimentConfig::rate_study(), out)?;
            if let Some(m) = metric {
                cfg.evaluation.metric = m;
            }
            let (dir, result) = run_rate_study(&cfg)?;
            result.write_csv(std::io::stdout().lock())?;
            eprintln!("results written to {}", dir.display());
            Ok(())
        }
        Command::CrossCard { gamma, n, r, output } => {
            let report = cross_card(&gamma, r, &n)?;
            report.write_csv(std::io::stdout().lock())?;
            if let Some(path) = output {
                report.write_csv(std::fs::File::create(path)?)?;
            }
            for (g, verdict) in &report.verdicts {
                println!("gamma={g}: {verdict}");
            }
            Ok(())
        }
        Command::EmitSurface {
            run,
            row,
            grid_points,
        } => {
            let root = out.unwrap_or_else(|| PathBuf::from("results"));
            let path = emit_surface(&root, &run, row, grid_points)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("legtrunc: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
