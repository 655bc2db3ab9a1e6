use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use toricgw::cycles;
use toricgw::error::Error;
use toricgw::integrate::IntegrateOptions;
use toricgw::job::Job;
use toricgw::rat::format_ratio;

/// Gromov-Witten invariants of smooth projective toric varieties by
/// torus localization.
#[derive(Parser)]
#[command(name = "toricgw", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct JobArg {
    /// Path to a JSON job file.
    #[arg(long)]
    job: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the invariant described by a job file.
    Integrate {
        #[command(flatten)]
        job: JobArg,
        /// Override the weight seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (1 forces the sequential path).
        #[arg(long)]
        workers: Option<usize>,
        /// Run twice under independent seeds and require exact agreement.
        #[arg(long)]
        verify: bool,
    },
    /// Print the moment graph: one line per fixed point and per invariant
    /// curve with its class.
    MomentGraph {
        #[command(flatten)]
        job: JobArg,
    },
    /// Print the nef generators and their pairings with the wall classes.
    Nef {
        #[command(flatten)]
        job: JobArg,
    },
    /// Enumerate the decorated graphs of (beta, m).
    Graphs {
        #[command(flatten)]
        job: JobArg,
        /// Print only the count.
        #[arg(long)]
        count: bool,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {e}", e.name());
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<(), Error> {
    match Cli::parse().command {
        Command::Integrate {
            job,
            seed,
            workers,
            verify,
        } => {
            let mut job = Job::from_path(&job.job)?;
            job.verify |= verify;
            let mut opts = IntegrateOptions::default();
            if let Some(seed) = seed {
                job.seed = Some(seed);
            }
            opts.workers = workers;
            let res = job.run(&opts)?;
            if res.dimension_mismatch {
                eprintln!(
                    "WARNING DimensionMismatch: integrand codimension differs from the virtual dimension; the invariant vanishes"
                );
            }
            eprintln!(
                "GRAPHS {}  RETRIES {}  ELAPSED {:.3}s",
                res.graph_count,
                res.retries,
                res.elapsed.as_secs_f64()
            );
            println!("RESULT {}", format_ratio(&res.value));
        }
        Command::MomentGraph { job } => {
            let job = Job::from_path(&job.job)?;
            let fan = &job.fan;
            for (i, cone) in fan.cones().iter().enumerate() {
                let rays: Vec<String> = cone.iter().map(|&k| format!("{}", k + 1)).collect();
                println!("CONE {} rays [{}]", i + 1, rays.join(", "));
            }
            let mg = cycles::moment_graph(fan);
            for (&(a, b), (_, class)) in mg.edges() {
                println!("mg[{},{}] = {:?}", a + 1, b + 1, class.0);
            }
        }
        Command::Nef { job } => {
            let job = Job::from_path(&job.job)?;
            let fan = &job.fan;
            let nef = cycles::nef_generators(fan)?;
            let mori = cycles::mori_generators(fan);
            for (i, g) in nef.iter().enumerate() {
                println!("NEF {} = {:?}", i + 1, g.0);
            }
            for (j, c) in mori.iter().enumerate() {
                let pairings: Vec<String> = nef
                    .iter()
                    .map(|g| cycles::pair(g, c).map(|p| p.to_string()))
                    .collect::<Result<_, _>>()?;
                println!("MORI {} = {:?}  pairings [{}]", j + 1, c.0, pairings.join(", "));
            }
        }
        Command::Graphs { job, count } => {
            let job = Job::from_path(&job.job)?;
            let graphs = toricgw::graphs::decorated_graphs(&job.fan, &job.beta, job.m)?;
            if count {
                println!("GRAPHS {}", graphs.len());
            } else {
                for g in &graphs {
                    let edges: Vec<String> = g
                        .tree
                        .edges
                        .iter()
                        .zip(&g.weights)
                        .map(|(&(u, v), w)| format!("{}-{}:{w}", u + 1, v + 1))
                        .collect();
                    let colors: Vec<String> =
                        g.coloring.iter().map(|c| (c + 1).to_string()).collect();
                    let marks: Vec<String> =
                        g.marking.iter().map(|v| (v + 1).to_string()).collect();
                    println!(
                        "GRAPH edges [{}] colors [{}] marks [{}] aut {}",
                        edges.join(" "),
                        colors.join(" "),
                        marks.join(" "),
                        g.aut_c
                    );
                }
                println!("GRAPHS {}", graphs.len());
            }
        }
    }
    Ok(())
}
