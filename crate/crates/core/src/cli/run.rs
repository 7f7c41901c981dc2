use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{exit, load_config, to_toml, Cli, Command};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::reflected_forward::{simulate_reflected_bundle, validate_invariance};
use crate::scenarios;
use crate::solver::penalization_sweep;
use crate::spdie_bridge::{estimate_surface, example_poisson, PoissonExample};
use crate::verification::{property_suite, PropertyReport, PropertyTolerances};

#[derive(Debug, Serialize)]
struct Versions {
    levy_rbdsde: &'static str,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    status: &'a str,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    versions: Versions,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a ExperimentConfig>,
}

/// Outcome of a subcommand that ran to completion.
struct Finished {
    outputs: Vec<String>,
    exit_code: i32,
    message: Option<String>,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::validation("outputs.dir", format!("{}: {e}", dir.display())))?;
        Ok(Outputs { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let fail = |e: std::io::Error| Error::validation("outputs", format!("{}: {e}", path.display()));
        let mut out = BufWriter::new(File::create(&path).map_err(fail)?);
        body(&mut out).map_err(fail)?;
        out.flush().map_err(fail)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        self.write(name, |w| {
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")
        })
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Basis => "basis",
        Command::Simulate => "simulate",
        Command::Reflect => "reflect",
        Command::Solve => "solve",
        Command::Sweep => "sweep",
        Command::Verify { .. } => "verify",
        Command::Surface => "surface",
        Command::ExamplePoisson => "example-poisson",
        Command::Scenarios { .. } => "scenarios",
    }
}

fn exit_code_for(err: &Error) -> i32 {
    if err.is_validation() {
        exit::VALIDATION
    } else {
        exit::SOLVER
    }
}

/// Runs a parsed command line and returns the process exit code. A
/// manifest is written to the output directory whatever the outcome.
pub fn run(cli: Cli) -> i32 {
    if let Command::Scenarios { show } = &cli.command {
        return list_scenarios(show.as_deref());
    }
    if let Some(n) = cli.common.threads {
        #[cfg(feature = "parallel")]
        {
            // a second initialization in the same process is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
        #[cfg(not(feature = "parallel"))]
        let _ = n;
    }
    let name = command_name(&cli.command);
    let cfg = load_config(&cli.common);
    let out_dir = match (&cfg, &cli.common.out) {
        (Ok(c), _) => PathBuf::from(&c.outputs.dir),
        (Err(_), Some(o)) => o.clone(),
        (Err(_), None) => PathBuf::from("out"),
    };
    let result = cfg
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|c| Outputs::new(out_dir.clone()).and_then(|mut out| execute(&cli.command, c, &mut out).map(|f| (f, out))));
    let (finished, status) = match result {
        Ok((mut f, out)) => {
            f.outputs = out.written;
            let status = if f.exit_code == exit::OK { "ok" } else { "failed" };
            (f, status)
        }
        Err(e) => (
            Finished {
                outputs: Vec::new(),
                exit_code: exit_code_for(&e),
                message: Some(e.to_string()),
            },
            "error",
        ),
    };
    if let Some(msg) = &finished.message {
        eprintln!("{name}: {msg}");
    }
    let manifest = Manifest {
        command: name,
        status,
        exit_code: finished.exit_code,
        message: finished.message.clone(),
        seed: cfg.as_ref().ok().map(|c| c.monte_carlo.seed),
        versions: Versions {
            levy_rbdsde: env!("CARGO_PKG_VERSION"),
        },
        outputs: finished.outputs.clone(),
        config: cfg.as_ref().ok(),
    };
    if let Err(e) = write_manifest(&out_dir, &manifest) {
        eprintln!("{name}: could not write manifest: {e}");
    }
    finished.exit_code
}

fn write_manifest(dir: &Path, manifest: &Manifest<'_>) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let text = toml::to_string(manifest).map_err(std::io::Error::other)?;
    fs::write(dir.join("manifest.toml"), text)
}

fn list_scenarios(show: Option<&str>) -> i32 {
    match show {
        None => {
            for s in scenarios::catalogue() {
                println!("{:<24} {}", s.name, s.description);
            }
            exit::OK
        }
        Some(name) => match scenarios::default_config(name) {
            Ok(cfg) => {
                print!("{}", to_toml(&cfg));
                exit::OK
            }
            Err(e) => {
                eprintln!("scenarios: {e}");
                exit::VALIDATION
            }
        },
    }
}

fn ok(message: impl Into<String>) -> Finished {
    Finished {
        outputs: Vec::new(),
        exit_code: exit::OK,
        message: None,
    }
    .with_summary(message)
}

impl Finished {
    fn with_summary(self, summary: impl Into<String>) -> Self {
        println!("{}", summary.into());
        self
    }
}

fn property_outcome(report: &PropertyReport) -> Finished {
    if report.all_pass() {
        ok("all properties hold")
    } else {
        Finished {
            outputs: Vec::new(),
            exit_code: exit::PROPERTIES,
            message: Some(format!("property suite failed: {}", report.failures().join(", "))),
        }
    }
}

fn execute(cmd: &Command, cfg: &ExperimentConfig, out: &mut Outputs) -> Result<Finished> {
    match cmd {
        Command::Basis => {
            let basis = cfg.basis()?;
            out.write("basis.csv", |w| io::write_basis(w, &basis))?;
            let err = basis.orthonormality_error(&cfg.levy_model()?);
            Ok(ok(format!(
                "m = {}, effective_dim = {}, orthonormality error = {err:.3e}",
                basis.m(),
                basis.effective_dim()
            )))
        }
        Command::Simulate => {
            let bundle = cfg.simulate()?;
            out.write("paths.csv", |w| io::write_paths(w, &bundle))?;
            let n = bundle.grid.n_steps();
            let mean_h: Vec<f64> = (0..bundle.m)
                .map(|j| bundle.paths.iter().map(|p| p.teugels[j][n]).sum::<f64>() / bundle.n_paths() as f64)
                .collect();
            Ok(ok(format!("{} paths, mean H_T = {mean_h:?}", bundle.n_paths())))
        }
        Command::Reflect => {
            let forward = cfg
                .forward()?
                .ok_or_else(|| Error::validation("reflect", "section required"))?;
            let bundle = cfg.simulate()?;
            let x0 = cfg.reflect.map_or(0.0, |r| r.x0);
            let paths = simulate_reflected_bundle(&forward, &bundle, x0)?;
            out.write("reflected.csv", |w| io::write_reflected(w, &bundle.grid, &paths))?;
            let report = validate_invariance(&forward, &cfg.levy_model()?);
            out.json("invariance.json", &report)?;
            let mean_local_time =
                paths.iter().map(|p| *p.abs_eta.last().unwrap()).sum::<f64>() / paths.len() as f64;
            Ok(ok(format!(
                "invariance holds: {}, mean |eta|_T = {mean_local_time:.6}",
                report.holds()
            )))
        }
        Command::Solve => {
            let sol = cfg.solve()?;
            out.write("solution_summary.csv", |w| io::write_solution_summary(w, &sol))?;
            out.write("solution.csv", |w| io::write_solution(w, &sol))?;
            let props = property_suite(&sol, &PropertyTolerances::for_scheme(sol.scheme));
            out.json("properties.json", &props)?;
            out.json(
                "report.json",
                &serde_json::json!({
                    "scheme": sol.scheme.to_string(),
                    "y0": sol.y0(),
                    "sd_y0": sol.sd_y(0),
                    "k_terminal": sol.k_terminal(),
                    "skorokhod_residual": sol.skorokhod_residual(),
                    "a_priori": sol.a_priori_functional(),
                    "iterations": sol.iterations,
                    "contraction_ratios": sol.contraction_ratios,
                    "final_delta": sol.final_delta,
                }),
            )?;
            Ok(ok(format!(
                "Y_0 = {:.10}, K_T = {:.6}, iterations = {}",
                sol.y0(),
                sol.k_terminal(),
                sol.iterations
            )))
        }
        Command::Sweep => {
            if cfg.solver.n_list.is_empty() {
                return Err(Error::validation("solver.n_list", "required for sweep"));
            }
            let input = cfg.solver_input()?;
            let table = penalization_sweep(
                &cfg.problem()?,
                &input,
                &cfg.regression_basis()?,
                &cfg.solver.n_list,
                &cfg.fixed_point(),
            )?;
            out.write("sweep.csv", |w| io::write_sweep(w, &table))?;
            out.json("sweep.json", &table)?;
            Ok(ok(format!(
                "{} rows, monotone Y_0: {}, direct Y_0 = {:.10}",
                table.rows.len(),
                table.monotone_y0,
                table.direct_y0
            )))
        }
        Command::Verify { solution } => {
            let sol = match solution {
                Some(path) => {
                    let file = File::open(path)
                        .map_err(|e| Error::validation("--solution", format!("{}: {e}", path.display())))?;
                    io::read_solution(BufReader::new(file), cfg.scheme())?
                }
                None => cfg.solve()?,
            };
            let report = property_suite(&sol, &PropertyTolerances::for_scheme(sol.scheme));
            out.json("properties.json", &report)?;
            for (name, p) in &report.properties {
                println!(
                    "{name:<18} {} worst = {:.3e}",
                    if p.pass { "pass" } else { "FAIL" },
                    p.worst
                );
            }
            Ok(property_outcome(&report))
        }
        Command::Surface => {
            let problem = cfg.markovian()?;
            let (t, x) = cfg.surface_axes()?;
            let surface = estimate_surface(&problem, &t, &x, &cfg.surface_config()?)?;
            out.write("surface.csv", |w| io::write_surface(w, &surface))?;
            Ok(ok(format!(
                "{}x{} surface, min(u - h) = {:.3e}",
                t.len(),
                x.len(),
                surface.min_obstacle_gap()
            )))
        }
        Command::ExamplePoisson => {
            let [[beta, alpha]] = cfg.model.atoms[..] else {
                return Err(Error::validation("model.atoms", "the Poisson example needs exactly one atom"));
            };
            let example = PoissonExample {
                alpha,
                beta,
                a: cfg.model.drift + alpha * beta,
                m: cfg.model.m,
                theta: cfg.reflect.map_or(1.0, |r| r.theta),
                t_end: cfg.grid.t_end,
                n_steps: cfg.grid.n_steps,
                n_paths: cfg.monte_carlo.n_paths,
                seed: cfg.monte_carlo.seed,
                x0: cfg.reflect.map_or(0.0, |r| r.x0),
                scheme: cfg.scheme(),
            };
            let (_, report) = example_poisson(&example)?;
            out.json("example_poisson.json", &report)?;
            Ok(ok(format!(
                "effective_dim = {}, H^(i>=2) zero: {}, generic vs scalar max |dY| = {:.3e}",
                report.effective_dim, report.higher_teugels_zero, report.max_y_gap
            )))
        }
        Command::Scenarios { .. } => unreachable!("handled before configuration loading"),
    }
}
