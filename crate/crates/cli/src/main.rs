use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ablatesim::config::{preset, SimConfig};
use ablatesim::coupler::{CouplerError, SimState, Simulation};
use ablatesim::mesh::{generate_channel_mesh, mesh_quality_report, GeometrySpec};
use ablatesim::output::{atomic_write, evaluate_probes, write_probes, write_state_vtk, ProbeRow};
use ablatesim::verify::{
    convergence_study, convergence_study_on, heat_case, invariant_suite, oseen_case, perturbed_levels, potential_case,
    temporal_study, RateReport, SuiteOptions, HEAT_TEMPORAL_DTS, OSEEN_JITTER, OSEEN_LEVELS, POTENTIAL_LEVELS,
};
use clap::{Args, Parser, Subcommand};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_BLOWUP: u8 = 4;

#[derive(Parser)]
#[command(name = "ablatesim", version, about = "Radiofrequency ablation in a perfused channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML configuration file.
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in case: test1, test2 or test3.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<SimConfig, Failure> {
        let c = match (&self.config, &self.preset) {
            (Some(path), _) => SimConfig::load(path),
            (None, Some(name)) => preset(name),
            (None, None) => return Err(Failure::config("either --config or --preset is required")),
        };
        c.map_err(|e| Failure::config(e.to_string()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the channel mesh in the plain-text mesh format.
    Mesh {
        #[command(flatten)]
        source: Source,
        /// Geometry given directly as L H r nx ny; overrides the config.
        #[arg(long, num_args = 5, value_names = ["L", "H", "R", "NX", "NY"], allow_negative_numbers = true)]
        geometry: Option<Vec<f64>>,
        /// Output file.
        #[arg(long, short, default_value = "mesh.txt")]
        out: PathBuf,
    },
    /// Run a simulation.
    Run {
        #[command(flatten)]
        source: Source,
        /// Output directory; defaults to `output.directory` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of steps to take at the configured time step.
        #[arg(long, value_name = "M")]
        steps_override: Option<usize>,
    },
    /// Run the invariant suite and the convergence studies.
    Verify {
        #[command(flatten)]
        source: Source,
        /// Cap on the trajectory length of the invariant checks.
        #[arg(long)]
        steps: Option<usize>,
        /// Skip the manufactured-solution rate studies.
        #[arg(long)]
        skip_rates: bool,
        /// Directory for the CSV reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: format!("cannot write {}: {e}", path.display()),
        }
    }
}

impl From<CouplerError> for Failure {
    fn from(e: CouplerError) -> Self {
        let code = match e {
            CouplerError::Config(_) => EXIT_CONFIG,
            CouplerError::BlowUp { .. } => EXIT_BLOWUP,
            CouplerError::Stage { .. } | CouplerError::NonFiniteField { .. } => EXIT_SOLVER,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn configure_threads() {
    let Ok(v) = std::env::var("ABLATESIM_THREADS") else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring ABLATESIM_THREADS={v:?}"),
    }
}

fn mesh_command(source: &Source, geometry: Option<&[f64]>, out: &Path) -> Result<(), Failure> {
    let spec = match geometry {
        Some(g) => GeometrySpec::new(g[0], g[1], g[2], g[3] as usize, g[4] as usize),
        None => source
            .load()?
            .geometry
            .spec()
            .map_err(|e| Failure::config(e.to_string()))?,
    };
    let mesh = generate_channel_mesh(&spec).map_err(|e| Failure::config(e.to_string()))?;
    let mut buf = Vec::new();
    mesh.write_text(&mut buf).map_err(|e| Failure::io(out, e))?;
    atomic_write(out, &buf).map_err(|e| Failure::io(out, e))?;
    let q = mesh_quality_report(&mesh);
    println!(
        "{}: {} vertices, {} triangles, h in [{:.4}, {:.4}], min angle {:.1} deg",
        out.display(),
        mesh.num_vertices(),
        mesh.num_triangles(),
        q.h_min,
        q.h_max,
        q.min_angle
    );
    Ok(())
}

fn snapshot(dir: &Path, sim: &Simulation, state: &SimState) -> Result<(), Failure> {
    let path = dir.join(format!("state_{:05}.vtk", state.step));
    write_state_vtk(&path, sim.mesh(), state).map_err(|e| Failure::io(&path, e))
}

fn run_command(source: &Source, out: Option<&Path>, steps_override: Option<usize>) -> Result<(), Failure> {
    let mut config = source.load()?;
    if let Some(m) = steps_override {
        let dt = config.dt();
        config.time.steps = m;
        config.time.total = dt * m as f64;
    }
    let dir = out.map_or_else(|| PathBuf::from(&config.output.directory), Path::to_path_buf);
    fs::create_dir_all(&dir).map_err(|e| Failure::io(&dir, e))?;
    let sim = Simulation::new(config)?;
    let config = sim.config().clone();
    let resolved = dir.join("config.toml");
    atomic_write(&resolved, config.to_toml_string().as_bytes()).map_err(|e| Failure::io(&resolved, e))?;

    let specs = &config.output.probes;
    let stride = config.output.stride;
    let probes = dir.join("probes.csv");
    let mut rows = Vec::with_capacity(config.time.steps);

    let mut state = sim.initialize()?;
    if stride > 0 {
        snapshot(&dir, &sim, &state)?;
    }
    let mut outcome = Ok(());
    for n in 1..=config.time.steps {
        match sim.advance(&state) {
            Ok(next) => state = next,
            Err(e) => {
                outcome = Err(Failure::from(e));
                break;
            }
        }
        rows.push(ProbeRow {
            diagnostics: state.diagnostics,
            extra: evaluate_probes(sim.mesh(), &state, specs),
        });
        if stride > 0 && (n % stride == 0 || n == config.time.steps) {
            snapshot(&dir, &sim, &state)?;
        }
        log::info!("step {n}: max theta {:.4}", state.diagnostics.max_theta);
    }
    write_probes(&probes, specs, &rows).map_err(|e| Failure::io(&probes, e))?;
    if outcome.is_err() && stride > 0 {
        snapshot(&dir, &sim, &state)?;
    }
    outcome?;
    let d = &state.diagnostics;
    println!(
        "{} steps to t = {:.4}: max theta {:.4} at ({:.3}, {:.3}), probes in {}",
        rows.len(),
        d.time,
        d.max_theta,
        d.argmax[0],
        d.argmax[1],
        probes.display()
    );
    Ok(())
}

fn rate_reports() -> Vec<RateReport> {
    let oseen = oseen_case();
    vec![
        convergence_study(&potential_case(), &POTENTIAL_LEVELS),
        convergence_study_on(&oseen, &perturbed_levels(&oseen, &OSEEN_LEVELS, OSEEN_JITTER, 1)),
        convergence_study(&heat_case(), &POTENTIAL_LEVELS),
        temporal_study(&heat_case(), (128, 64), &HEAT_TEMPORAL_DTS, 1.0),
    ]
}

fn verify_command(source: &Source, steps: Option<usize>, skip_rates: bool, out: Option<&Path>) -> Result<(), Failure> {
    let config = source.load()?;
    config.validate().map_err(|e| Failure::config(e.to_string()))?;
    let report = invariant_suite(&config, &SuiteOptions { steps });
    print!("{}", report.to_text());
    let rates = if skip_rates { Vec::new() } else { rate_reports() };
    for r in &rates {
        println!("{}", r.summary());
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        let p = dir.join("invariants.csv");
        atomic_write(&p, report.to_csv().as_bytes()).map_err(|e| Failure::io(&p, e))?;
        for r in &rates {
            let p = dir.join(format!("{}.csv", r.name.replace(' ', "_")));
            atomic_write(&p, r.to_csv().as_bytes()).map_err(|e| Failure::io(&p, e))?;
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_FAILURE,
            message: "invariant suite failed".into(),
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    let result = match &cli.command {
        Command::Mesh { source, geometry, out } => mesh_command(source, geometry.as_deref(), out),
        Command::Run {
            source,
            out,
            steps_override,
        } => run_command(source, out.as_deref(), *steps_override),
        Command::Verify {
            source,
            steps,
            skip_rates,
            out,
        } => verify_command(source, *steps, *skip_rates, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
