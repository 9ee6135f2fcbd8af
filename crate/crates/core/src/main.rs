use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nhimpact::io::{cmd_impact_map, cmd_simulate, cmd_validate, SimulateOverrides};

#[derive(Parser)]
#[command(
    name = "nhimpact",
    version,
    about = "Impacts of nonholonomic mechanical systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scene and write trajectory and event tables.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Print the projector and impact matrix for given G, A, B.
    ImpactMap {
        #[arg(long)]
        metric: PathBuf,
        #[arg(long)]
        constraint_a: PathBuf,
        #[arg(long)]
        constraint_b: PathBuf,
        #[arg(long)]
        mu: f64,
    },
    /// Run the invariant suite on a scene.
    Validate {
        #[arg(long)]
        scene: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let result = match cli.command {
        Command::Simulate {
            scene,
            out,
            events,
            t_max,
            dt,
        } => cmd_simulate(
            &scene,
            &out,
            &events,
            SimulateOverrides { t_max, dt },
            &mut stdout,
        ),
        Command::ImpactMap {
            metric,
            constraint_a,
            constraint_b,
            mu,
        } => cmd_impact_map(&metric, &constraint_a, &constraint_b, mu, &mut stdout),
        Command::Validate { scene } => cmd_validate(&scene, &mut stdout),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
