//! `nonlocal-lab`: command-line driver for the nonlocal corner experiments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nonlocal_core::error::Error;
use nonlocal_core::experiment::{fit_rows, rows_csv, run_experiment, write_outputs, ExperimentConfig};
use nonlocal_core::fem::mesh::cached_mesh;
use nonlocal_core::fem::sweep::{index_proxy_sweep, SweepRow, SweepSpec};
use nonlocal_core::fem::ExampleId;
use nonlocal_core::spectral::{eigenvalues_in_strip, ModelProblem, ProblemKind, Strip};
use nonlocal_core::C64;

const EXIT_CRITERION: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "nonlocal-lab", version, about = "Nonlocal elliptic problems with two conjugation points")]
struct Cli {
    /// Experiment configuration (JSON). Defaults depend on the example.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Mesh cache directory.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Seed recorded in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write SVG charts.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Example {
    Ex1,
    Ex2,
    Ex3,
}

impl From<Example> for ExampleId {
    fn from(e: Example) -> Self {
        match e {
            Example::Ex1 => ExampleId::Ex1,
            Example::Ex2 => ExampleId::Ex2,
            Example::Ex3 => ExampleId::Ex3,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues of the model pencil in the config's window (spectrum.csv).
    Spectrum {
        #[arg(long, value_enum)]
        example: Option<Example>,
    },
    /// Generate (or load from cache) the graded meshes and write them as JSON.
    Mesh {
        #[arg(long, value_enum)]
        example: Option<Example>,
    },
    /// Solve the example load for each (t, h) (solve.csv).
    Solve {
        #[arg(long, value_enum)]
        example: Option<Example>,
    },
    /// Numerical kernel dimension for each (t, h) (kernel.csv).
    Kernel {
        #[arg(long, value_enum)]
        example: Option<Example>,
    },
    /// Corner singular fits of kernel vectors or solutions (sweep.csv).
    FitSingular {
        #[arg(long, value_enum)]
        example: Option<Example>,
    },
    /// Full experiment with criteria: sweep.csv, report.json, optional SVG.
    Experiment {
        #[arg(value_enum)]
        example: Example,
    },
    /// Summarize report.json files; exits 2 if any criterion failed.
    Report {
        /// Report files; defaults to `<out>/report.json`.
        paths: Vec<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
    Criteria,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => Failure::Config(e.to_string()),
            e => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("io: {e}"))
    }
}

fn load_config(cli: &Cli, example: Option<Example>) -> Result<ExperimentConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            let config = ExperimentConfig::from_json(&text)?;
            if let Some(ex) = example {
                let id = ExampleId::from(ex);
                if config.example != id {
                    return Err(Failure::Config(format!(
                        "config is for {} but {} was requested",
                        config.example.as_str(),
                        id.as_str()
                    )));
                }
            }
            config
        }
        None => ExperimentConfig::default_for(example.map_or(ExampleId::Ex1, ExampleId::from)),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = Some(out.display().to_string());
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .output_dir
        .as_ref()
        .map_or_else(|| PathBuf::from("out").join(config.example.as_str()), PathBuf::from)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn sweep(cli: &Cli, config: &ExperimentConfig) -> Result<Vec<SweepRow>, Failure> {
    let domain = config.domain()?;
    let family = config.family(&domain)?;
    let meshes = config
        .h_values
        .iter()
        .map(|&h| cached_mesh(cli.cache.as_deref(), &domain, h, config.beta))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Error::from)?;
    let rows = index_proxy_sweep(
        &SweepSpec {
            example: config.example,
            domain: &domain,
            family: &family,
            t_values: &config.t_values,
            lambda_shift: config.lambda_shift,
        },
        &meshes,
    );
    Ok(rows)
}

fn check_aborted(rows: &[SweepRow]) -> Result<(), Failure> {
    let aborted: Vec<String> = rows
        .iter()
        .filter_map(|r| r.aborted.as_ref().map(|e| format!("t={} h={}: {e}", r.t, r.h)))
        .collect();
    if aborted.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("aborted rows: {}", aborted.join("; "))))
    }
}

fn spectrum(cli: &Cli, example: Option<Example>) -> Result<(), Failure> {
    let config = load_config(cli, example)?;
    let problems: Vec<(C64, ModelProblem)> = match config.example {
        ExampleId::Ex3 => vec![(C64::new(0.0, 0.0), ModelProblem::dirichlet(config.omega0))],
        _ => config
            .t_values
            .iter()
            .map(|&t| (t, ModelProblem::nonlocal(config.omega0, t)))
            .collect(),
    };
    let w = config.spectral_window;
    let strip = Strip::with_default_bound(-w, w, config.omega0).map_err(Error::from)?;
    let mut csv = String::from("kind,omega0,t_re,t_im,lambda_re,lambda_im,det_zero_order,residual\n");
    for (t, problem) in &problems {
        let kind = match problem.kind {
            ProblemKind::Nonlocal => "nonlocal",
            ProblemKind::Dirichlet => "dirichlet",
        };
        for e in eigenvalues_in_strip(problem, &strip).map_err(Error::from)? {
            let _ = writeln!(
                csv,
                "{kind},{},{},{},{:e},{:e},{},{:e}",
                config.omega0, t.re, t.im, e.lambda.re, e.lambda.im, e.det_zero_order, e.residual
            );
        }
    }
    write(&out_dir(&config), "spectrum.csv", &csv)
}

fn mesh(cli: &Cli, example: Option<Example>) -> Result<(), Failure> {
    let config = load_config(cli, example)?;
    let domain = config.domain()?;
    let dir = out_dir(&config);
    let doc = serde_json::to_string_pretty(&domain.document()).map_err(Error::from)?;
    write(&dir, "domain.json", &doc)?;
    for &h in &config.h_values {
        let m = cached_mesh(cli.cache.as_deref(), &domain, h, config.beta).map_err(Error::from)?;
        println!(
            "h={h}: {} vertices, {} triangles, min angle {:.2} deg",
            m.n_vertices(),
            m.triangles.len(),
            m.min_angle_deg()
        );
        write(&dir, &format!("mesh_h{h}.json"), &m.to_json())?;
    }
    Ok(())
}

fn solve(cli: &Cli, example: Option<Example>) -> Result<(), Failure> {
    let config = load_config(cli, example)?;
    let rows = sweep(cli, &config)?;
    let mut csv = String::from("example,t_re,t_im,h,n_unknowns,n_rows,residual,rank_deficient,u_at_Omega_g1\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{:e},{},{}",
            r.example.as_str(),
            r.t.re,
            r.t.im,
            r.h,
            r.n_unknowns,
            r.n_rows,
            r.residual,
            r.rank_deficient,
            r.u_at_omega_g1.map(|u| format!("{:e}", u.re)).unwrap_or_default()
        );
    }
    write(&out_dir(&config), "solve.csv", &csv)?;
    check_aborted(&rows)
}

fn kernel(cli: &Cli, example: Option<Example>) -> Result<(), Failure> {
    let config = load_config(cli, example)?;
    let rows = sweep(cli, &config)?;
    let mut csv = String::from("example,t_re,t_im,h,n_unknowns,n_rows,ker_dim,sigma_min,sigma_max,kernel_cosine\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{:e},{:e},{}",
            r.example.as_str(),
            r.t.re,
            r.t.im,
            r.h,
            r.n_unknowns,
            r.n_rows,
            r.ker_dim,
            r.sigma_min,
            r.sigma_max,
            r.kernel_cosine.map(|c| c.to_string()).unwrap_or_default()
        );
    }
    write(&out_dir(&config), "kernel.csv", &csv)?;
    check_aborted(&rows)
}

fn fit_singular(cli: &Cli, example: Option<Example>) -> Result<(), Failure> {
    let config = load_config(cli, example)?;
    if config.example == ExampleId::Ex3 {
        return Err(Failure::Config("singular fits are defined for ex1 and ex2 only".into()));
    }
    let domain = config.domain()?;
    let meshes = config
        .h_values
        .iter()
        .map(|&h| cached_mesh(cli.cache.as_deref(), &domain, h, config.beta))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Error::from)?;
    let rows = fit_rows(&config, &domain, &meshes, sweep(cli, &config)?);
    for r in &rows {
        if let Some(e) = &r.fit_error {
            eprintln!("t={} h={}: fit failed: {e}", r.sweep.t, r.sweep.h);
        }
    }
    write(&out_dir(&config), "sweep.csv", &rows_csv(&rows))
}

fn experiment(cli: &Cli, example: Example) -> Result<(), Failure> {
    let config = load_config(cli, Some(example))?;
    let report = run_experiment(&config, cli.cache.as_deref())?;
    let dir = out_dir(&config);
    write_outputs(&report, &dir, cli.svg)?;
    println!("wrote {}", dir.display());
    for c in &report.criteria {
        println!("{} {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.name, c.detail);
    }
    if report.rows.iter().any(|r| r.sweep.aborted.is_some()) {
        return Err(Failure::Numerical("one or more rows aborted".into()));
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Criteria)
    }
}

fn report(cli: &Cli, paths: &[PathBuf]) -> Result<(), Failure> {
    let paths = if paths.is_empty() {
        vec![cli.out.clone().unwrap_or_else(|| PathBuf::from("out")).join("report.json")]
    } else {
        paths.to_vec()
    };
    let mut all = true;
    for path in &paths {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let hash = doc["config_hash"].as_str().unwrap_or("?");
        println!("{} (config {})", path.display(), &hash[..hash.len().min(12)]);
        let criteria = doc["criteria"]
            .as_array()
            .ok_or_else(|| Failure::Config(format!("{}: no criteria array", path.display())))?;
        for c in criteria {
            let passed = c["passed"].as_bool().unwrap_or(false);
            all &= passed;
            println!(
                "  {} {} {}",
                if passed { "PASS" } else { "FAIL" },
                c["id"].as_str().unwrap_or("?"),
                c["name"].as_str().unwrap_or("")
            );
        }
    }
    if all {
        Ok(())
    } else {
        Err(Failure::Criteria)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Spectrum { example } => spectrum(&cli, *example),
        Command::Mesh { example } => mesh(&cli, *example),
        Command::Solve { example } => solve(&cli, *example),
        Command::Kernel { example } => kernel(&cli, *example),
        Command::FitSingular { example } => fit_singular(&cli, *example),
        Command::Experiment { example } => experiment(&cli, *example),
        Command::Report { paths } => report(&cli, paths),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Criteria) => ExitCode::from(EXIT_CRITERION),
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical abort: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
