//! `fmapkit`: batch front end for functional-map matching experiments.

mod cache;
mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fmapkit::eval::ErrorSource;
use fmapkit::p2p::DEFAULT_ICP_ITERATIONS;

use crate::commands::{CorrelateArgs, EvalArgs, SweepParam};
use crate::config::{resolve, RunFlags};
use crate::errors::CliError;

#[derive(Parser)]
#[command(name = "fmapkit", version, about = "Functional-map shape correspondence with resolvent masks")]
struct Cli {
    /// Worker threads; independent pairs and sweep points run in parallel when N > 1.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigendecomposition of one mesh (cached by content hash and k).
    Spectrum {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value_t = 50)]
        k: usize,
        /// Binary spectrum file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Match the target mesh onto the source mesh.
    Match(RunFlags),
    /// ICP refinement of an existing functional map.
    Refine {
        #[command(flatten)]
        run: RunFlags,
        /// Text matrix with the k2 × k1 functional map.
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ICP_ITERATIONS)]
        iterations: usize,
    },
    /// Geodesic error of a pointwise map against ground truth.
    Eval {
        /// Shape 1, on which errors are measured.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        gt_sym: Option<PathBuf>,
        #[arg(long)]
        one_based: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a penalty mask as PGM, SVG and text.
    Mask {
        #[command(flatten)]
        run: RunFlags,
        /// Eigenvalues for the columns: sphere, torus, weyl, a mesh or a .fmspec file.
        #[arg(long)]
        l1: String,
        /// Eigenvalues for the rows; defaults to --l1.
        #[arg(long)]
        l2: Option<String>,
        /// Scale the mask to unit Frobenius norm.
        #[arg(long)]
        normalize: bool,
    },
    /// Run the matcher once per parameter value.
    Sweep {
        #[command(flatten)]
        run: RunFlags,
        /// gamma, w, T, eta, alpha4 or k.
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty.
        #[arg(long, allow_hyphen_values = true, default_value = "")]
        values: String,
    },
    /// Analytic sphere/torus spectra and commutator energies of the identity map.
    DemoSphereTorus {
        #[arg(long, default_value_t = 100)]
        k_max: usize,
        #[arg(long, default_value = "demo-sphere-torus")]
        out: PathBuf,
    },
    /// Mask penalty versus geodesic error over noisy ground-truth maps.
    Correlate {
        #[command(flatten)]
        run: RunFlags,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Fractions of rewired correspondences, cycled over samples.
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45")]
        noise: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "resolvent,standard,slanted,heat")]
        masks: Vec<String>,
        /// Measure the recovered map (recovered) or the rewired map itself (sampled).
        #[arg(long, default_value = "recovered")]
        error_source: String,
    },
}

fn parse_values(list: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| CliError::config(format!("sweep value {v:?} is not a number"))))
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let parallel = cli.jobs.is_some_and(|j| j > 1);
    match cli.command {
        Command::Spectrum { mesh, k, out } => commands::spectrum(&mesh, k, out.as_deref()),
        Command::Match(flags) => commands::run_match(&resolve(&flags)?),
        Command::Refine { run, map, iterations } => commands::refine(&resolve(&run)?, &map, iterations),
        Command::Eval { source, map, gt, gt_sym, one_based, out } => commands::eval(&EvalArgs {
            source: &source,
            map: &map,
            gt: &gt,
            gt_sym: gt_sym.as_deref(),
            one_based,
            out: out.as_deref(),
        }),
        Command::Mask { run, l1, l2, normalize } => {
            let l2 = l2.unwrap_or_else(|| l1.clone());
            commands::render_mask(&resolve(&run)?, &l1, &l2, normalize)
        }
        Command::Sweep { run, param, values } => {
            let param = SweepParam::parse(&param)?;
            let values = parse_values(&values)?;
            let table = commands::sweep(&resolve(&run)?, param, &values, parallel)?;
            print!("{table}");
            Ok(())
        }
        Command::DemoSphereTorus { k_max, out } => commands::demo_sphere_torus(k_max, &out),
        Command::Correlate { run, samples, noise, masks, error_source } => {
            let error_source = match error_source.as_str() {
                "recovered" => ErrorSource::Recovered,
                "sampled" => ErrorSource::Sampled,
                other => return Err(CliError::config(format!("unknown error source {other:?}; expected recovered or sampled"))),
            };
            commands::correlate(&resolve(&run)?, &CorrelateArgs { samples, noise, masks, error_source }).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            e.exit();
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::config(e.kind().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code);
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(CliError::config(format!("cannot start {n} worker threads: {e}"))),
        },
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code)
        }
    }
}
