mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use noreg::graph;
use noreg::io;
use noreg::model::{self, EstimatorInit, Scenario};
use noreg::numerics::{self, Spectrum};
use noreg::observer::ControllerGains;
use noreg::sim::{self, SignStatus, DEFAULT_TOL_REL};
use noreg::{mupal, pipeline, Error};

use report::{sig, spectrum};

/// Nonovershooting cooperative output regulation of linear multi-agent systems.
#[derive(Parser)]
#[command(name = "noreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural assumptions of a scenario.
    Check { scenario: PathBuf },
    /// Synthesize controller gains and write them as JSON.
    Synthesize {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Simulate the networked closed loop and report overshoot.
    Simulate {
        scenario: PathBuf,
        #[arg(short, long)]
        gains: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Trace CSV destination.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Start estimators at this multiple of the true state, overriding the scenario.
        #[arg(long)]
        estimator_factor: Option<f64>,
    },
    /// Run a bundled example end to end.
    Demo {
        example: Example,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        estimator_factor: Option<f64>,
        /// Also write the example scenario as JSON.
        #[arg(long)]
        write_scenario: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Example {
    Mupal,
}

/// A failed command: exit code 1 for domain failures, 2 for I/O and parsing.
struct Failure {
    code: u8,
    message: Option<String>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_io() { 2 } else { 1 },
            message: Some(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

/// Domain failure already explained by the printed report.
fn reported() -> Failure {
    Failure { code: 1, message: None }
}

fn parse_failure(path: &Path, e: Error) -> Failure {
    Failure {
        code: 2,
        message: Some(format!("{}: {e}", path.display())),
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    io::load_scenario(path).map_err(|e| parse_failure(path, e))
}

fn load_gains(path: &Path) -> Result<ControllerGains, Failure> {
    io::load_gains(path).map_err(|e| parse_failure(path, e))
}

fn configure_threads() {
    let n = std::env::var("NOREG_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if n > 0 {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Check { scenario } => load_scenario(&scenario).and_then(|s| check(&s)),
        Command::Synthesize { scenario, output } => {
            load_scenario(&scenario).and_then(|s| {
                let g = synthesize(&s)?;
                io::save_gains(&output, &g)?;
                println!("gains written to {}", output.display());
                Ok(())
            })
        }
        Command::Simulate {
            scenario,
            gains,
            t_end,
            dt,
            output,
            estimator_factor,
        } => load_scenario(&scenario).and_then(|s| {
            let g = load_gains(&gains)?;
            io::check_gains(&s, &g).map_err(|e| parse_failure(&gains, e))?;
            simulate(&s, &g, t_end, dt, output.as_deref(), estimator_factor)
        }),
        Command::Demo {
            example: Example::Mupal,
            seed,
            estimator_factor,
            write_scenario,
        } => demo_mupal(seed, estimator_factor, write_scenario.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if let Some(m) = f.message {
                eprintln!("error: {m}");
            }
            ExitCode::from(f.code)
        }
    }
}

fn check(s: &Scenario) -> Result<(), Failure> {
    let report = model::check_assumptions(s)?;
    println!("assumptions");
    print!("{report}");

    let part = graph::partition(&graph::laplacian(&s.graph), s.informed)?;
    let lemma = graph::check_lemma1(&part, &s.graph)?;
    println!("\nfollower Laplacian block");
    println!("  rho(L33)        {}", spectrum(&numerics::spectrum(&part.l33)?));
    println!("  nonsingular     {}", lemma.l33_nonsingular);
    println!("  reachable       {}", lemma.reachable);
    if let Some(w) = &lemma.warning {
        println!("  warning: {w}");
    }

    println!("\nsearch feasibility (advisory)");
    for (i, p) in s.agents.iter().enumerate() {
        let f = model::feasibility_heuristic(p)?;
        println!("  agent {}: {}", i + 1, f.note);
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(reported())
    }
}

fn synthesize(s: &Scenario) -> Result<ControllerGains, Failure> {
    let outcome = pipeline::synthesize(s)?;
    let g = &outcome.gains;
    for (i, (p, a)) in s.agents.iter().zip(&g.agents).enumerate() {
        let spec = numerics::spectrum(&(&p.a + &p.b * &a.f))?;
        println!(
            "agent {}: rho(A + BF) = {}  (candidate {})",
            i + 1,
            spectrum(&spec),
            outcome.feedbacks[i].candidate
        );
    }
    println!("lambda0 = {}", sig(g.lambda0));
    println!("mu0 = {}", sig(g.mu0));
    println!("gamma_min = {}", sig(g.gamma_min));
    println!("gamma = {}", sig(g.gamma));
    Ok(outcome.gains)
}

fn simulate(
    s: &Scenario,
    g: &ControllerGains,
    t_end: f64,
    dt: f64,
    csv: Option<&Path>,
    factor: Option<f64>,
) -> Result<(), Failure> {
    let cls = sim::assemble_closed_loop(s, g)?;
    let policy = match factor {
        Some(r) => EstimatorInit::RelativePerturbation(r),
        None => s.estimator_init.clone(),
    };
    let init = sim::estimator_init(s, &policy)?;
    let trace = sim::simulate(&cls, &init, t_end, dt)?;
    if let Some(path) = csv {
        let mut w = BufWriter::new(File::create(path)?);
        sim::write_csv(&trace, &cls.layout, &mut w)?;
        w.flush()?;
    }
    let verdict = sim::overshoot_verdict(&trace, &cls.layout, DEFAULT_TOL_REL);
    println!("{:<8} {:<10} {:<24} {:>12} {:>12}", "output", "flagged", "verdict", "peak", "settling");
    let mut ok = true;
    for ((i, j), v) in &verdict.components {
        let (i, j) = (*i, *j);
        let agent = &s.agents[i - 1];
        let flagged = s.synthesis.flags_for(i - 1, agent.outputs())[j - 1];
        let status = match v.status {
            SignStatus::Nonovershooting => "nonovershooting".to_string(),
            SignStatus::SignChange(t) => format!("sign change at t = {}", sig(t)),
        };
        if flagged && !v.is_nonovershooting() {
            ok = false;
        }
        let settle = v.settling_time.map_or("-".to_string(), sig);
        println!(
            "{:<8} {:<10} {:<24} {:>12} {:>12}",
            format!("e_{i}_{j}"),
            if flagged { "yes" } else { "no" },
            status,
            sig(v.peak),
            settle
        );
    }
    if let Some(path) = csv {
        println!("trace written to {}", path.display());
    }
    if ok {
        Ok(())
    } else {
        println!("overshoot detected in a flagged output");
        Err(reported())
    }
}

fn demo_mupal(seed: u64, factor: Option<f64>, write: Option<&Path>) -> Result<(), Failure> {
    let mut s = mupal::scenario();
    s.synthesis.seed = seed;
    if let Some(r) = factor {
        s.estimator_init = EstimatorInit::RelativePerturbation(r);
    }
    if let Some(path) = write {
        io::save_scenario(path, &s)?;
        println!("scenario written to {}\n", path.display());
    }

    println!("== check");
    check(&s)?;
    let p = &s.agents[0];
    let zeros = model::invariant_zeros(&p.a, &p.b, &p.c_y, &p.d_y)?;
    println!("  invariant zeros {}", spectrum(&Spectrum::new(zeros)));

    println!("\n== synthesize");
    let gains = synthesize(&s)?;

    let label = match &s.estimator_init {
        EstimatorInit::RelativePerturbation(r) => format!("estimator factor {}", sig(*r)),
        EstimatorInit::Exact => "exact estimator start".into(),
        EstimatorInit::Explicit { .. } => "explicit estimator start".into(),
    };
    println!("\n== simulate (30 s, dt 1e-3, {label})");
    simulate(&s, &gains, 30.0, 1e-3, None, None)
}
