//! Built-in problems with known answers or known qualitative behaviour.

use std::sync::Arc;

use serde::Serialize;

use crate::config::{
    BrownianMode, CoefficientTable, ExperimentConfig, GridSection, ModelSection, MonteCarloSection, OutputSection,
    ProblemSection, ReflectSection, SchemeKind, SolverSection, SurfaceSection,
};
use crate::error::{Error, Result};
use crate::solver::{BsdeProblem, CoefficientSpec, ObstacleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
}

const CATALOGUE: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "constant-terminal",
        description: "f = g = phi = 0, terminal 1, no active obstacle; Y is identically 1",
    },
    ScenarioInfo {
        name: "linear-ode",
        description: "f = -y, terminal 1, no obstacle; Y_0 = exp(-T)",
    },
    ScenarioInfo {
        name: "deterministic-obstacle",
        description: "terminal 0 under the obstacle S(t) = 1 - t/T; Y sits on S and K_T = 1",
    },
    ScenarioInfo {
        name: "poisson-example",
        description: "single-atom Lévy measure, reflected state in [-theta, theta], active obstacle",
    },
    ScenarioInfo {
        name: "two-atom-demo",
        description: "jumps of size +1 and -1, two martingales, driver depending on both Z components",
    },
    ScenarioInfo {
        name: "fixed-point",
        description: "f = -y with backward noise g = y/2; solved by Picard iteration",
    },
    ScenarioInfo {
        name: "frozen-obstacle",
        description: "sigma = 0 so the state never moves; u(t, x) = 1 - t/T",
    },
    ScenarioInfo {
        name: "table",
        description: "affine coefficients read from the [problem.table] section",
    },
];

pub fn catalogue() -> &'static [ScenarioInfo] {
    CATALOGUE
}

pub fn names() -> Vec<&'static str> {
    CATALOGUE.iter().map(|s| s.name).collect()
}

/// The problem data of a scenario on the horizon `t_end`. `theta` is the
/// half-width of the reflection interval when one is configured.
pub fn problem(name: &str, t_end: f64, theta: Option<f64>, table: Option<&CoefficientTable>) -> Result<BsdeProblem> {
    let zero = CoefficientSpec::default();
    let p = match name {
        "constant-terminal" => BsdeProblem::new(zero, ObstacleSpec::inactive(|_| 1.0)),
        "linear-ode" => BsdeProblem::new(zero.with_f(|_, _, y, _| -y), ObstacleSpec::inactive(|_| 1.0)),
        "deterministic-obstacle" | "frozen-obstacle" => {
            BsdeProblem::new(zero, ObstacleSpec::new(move |t, _| 1.0 - t / t_end, |_| 0.0))
        }
        "poisson-example" => {
            let theta = theta.unwrap_or(1.0);
            let l = move |x: f64| 0.5 * (1.0 - (x / theta).powi(2));
            let coefficients = zero
                .with_f(|_, _, y, z| -0.5 * y + 0.2 * z.first().copied().unwrap_or(0.0))
                .with_phi(|_, _, y| -y)
                .with_g(|_, x, _, _| 0.2 * x.cos(), false)
                .with_constants(1.0, -1.0, 0.5);
            BsdeProblem::new(coefficients, ObstacleSpec::new(move |t, x| l(x) - 0.2 * (t_end - t), l))
        }
        "two-atom-demo" => {
            let coefficients = zero
                .with_f(|_, _, y, z| {
                    -0.5 * y + 0.2 * z.first().copied().unwrap_or(0.0) - 0.1 * z.get(1).copied().unwrap_or(0.0)
                })
                .with_g(|_, x, _, _| 0.1 * x.sin(), false);
            BsdeProblem::new(
                coefficients,
                ObstacleSpec::new(
                    move |t, x| 0.9 / (1.0 + x * x) - 0.1 * (t_end - t),
                    |x| 1.0 / (1.0 + x * x),
                ),
            )
        }
        "fixed-point" => BsdeProblem::new(
            zero.with_f(|_, _, y, _| -y).with_g(|_, _, y, _| 0.5 * y, true),
            ObstacleSpec::inactive(|_| 1.0),
        ),
        "table" => {
            let t = table
                .cloned()
                .ok_or_else(|| Error::validation("problem.table", "required for the table scenario"))?;
            table_problem(t)
        }
        other => return Err(Error::validation("problem.scenario", format!("unknown scenario '{other}'"))),
    };
    Ok(p)
}

fn table_problem(t: CoefficientTable) -> BsdeProblem {
    let fz2: f64 = t.f_z.iter().map(|v| v * v).sum();
    let c = [2.0 * t.f_y * t.f_y, 2.0 * fz2, t.phi_y.abs(), 2.0 * t.g_y * t.g_y, 1e-9]
        .into_iter()
        .fold(0.0, f64::max);
    let alpha = if t.g_z != 0.0 { 2.0 * t.g_z * t.g_z } else { 0.5 };
    let depends = t.g_y != 0.0 || t.g_z != 0.0;
    let beta = t.phi_y;
    let t = Arc::new(t);
    let (tf, tp, tg, ts) = (t.clone(), t.clone(), t.clone(), t.clone());
    let coefficients = CoefficientSpec::default()
        .with_f(move |_, x, y, z| tf.f0 + tf.f_x * x + tf.f_y * y + tf.f_z.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
        .with_phi(move |_, _, y| tp.phi0 + tp.phi_y * y)
        .with_g(
            move |_, x, y, z| tg.g0 + tg.g_x * x + tg.g_y * y + tg.g_z * z.first().copied().unwrap_or(0.0),
            depends,
        )
        .with_constants(c, beta, alpha);
    BsdeProblem::new(
        coefficients,
        ObstacleSpec::new(
            move |time, x| ts.s0 + ts.s_t * time + ts.s_x * x,
            move |x| t.xi0 + t.xi1 * x + t.xi2 * x * x,
        ),
    )
}

fn solver(scheme: SchemeKind, n_penalty: f64, n_list: Vec<f64>) -> SolverSection {
    SolverSection {
        scheme,
        n_penalty,
        n_list,
        degree: 2,
        ridge: crate::regression::DEFAULT_RIDGE,
        tol: 1e-10,
        max_iter: 25,
        alpha_prime: None,
    }
}

/// A complete configuration that runs the scenario with sensible sizes.
pub fn default_config(name: &str) -> Result<ExperimentConfig> {
    let poisson_atom = || ModelSection {
        atoms: vec![[1.0, 1.0]],
        sigma0: 0.0,
        drift: 0.0,
        m: 1,
    };
    let doubling: Vec<f64> = (0..9).map(|k| f64::from(1u32 << k)).collect();
    let mc = |n_paths| MonteCarloSection {
        n_paths,
        seed: 20240601,
        brownian: BrownianMode::Common,
    };
    let problem = ProblemSection {
        scenario: name.to_string(),
        increasing_rate: 0.0,
        table: None,
    };
    let mut cfg = ExperimentConfig {
        model: poisson_atom(),
        grid: GridSection {
            t0: 0.0,
            t_end: 1.0,
            n_steps: 100,
        },
        monte_carlo: mc(1000),
        solver: solver(SchemeKind::Direct, 100.0, Vec::new()),
        problem,
        reflect: None,
        surface: None,
        outputs: OutputSection::default(),
    };
    match name {
        "constant-terminal" => {}
        "linear-ode" => {
            cfg.grid.n_steps = 1000;
            cfg.monte_carlo = mc(200);
        }
        "deterministic-obstacle" => {
            cfg.grid = GridSection {
                t0: 0.0,
                t_end: 2.0,
                n_steps: 2000,
            };
            cfg.monte_carlo = mc(16);
            cfg.solver = solver(SchemeKind::Penalized, 256.0, doubling);
        }
        "poisson-example" => {
            cfg.model = ModelSection {
                atoms: vec![[0.5, 2.0]],
                sigma0: 0.0,
                drift: 0.2 - 2.0 * 0.5,
                m: 3,
            };
            cfg.grid.n_steps = 200;
            cfg.monte_carlo = mc(2000);
            cfg.solver = solver(SchemeKind::Penalized, 50.0, vec![1.0, 10.0, 100.0, 1000.0]);
            cfg.reflect = Some(ReflectSection {
                theta: 1.0,
                sigma_const: 0.0,
                sigma_hat: 0.5,
                x0: 0.0,
            });
            cfg.surface = Some(SurfaceSection {
                t_points: 5,
                x_points: 11,
                dt: 0.01,
                n_paths: 400,
                se_batches: 4,
            });
        }
        "two-atom-demo" => {
            cfg.model = ModelSection {
                atoms: vec![[1.0, 1.0], [-1.0, 1.0]],
                sigma0: 0.0,
                drift: 0.0,
                m: 2,
            };
            cfg.grid.n_steps = 200;
            cfg.monte_carlo = mc(4000);
            cfg.solver = solver(SchemeKind::Penalized, 100.0, vec![1.0, 10.0, 100.0, 1000.0]);
        }
        "fixed-point" => {
            cfg.grid.n_steps = 200;
            cfg.monte_carlo = mc(500);
            cfg.solver.tol = 1e-8;
        }
        "frozen-obstacle" => {
            cfg.grid.n_steps = 1000;
            cfg.monte_carlo = mc(16);
            cfg.reflect = Some(ReflectSection {
                theta: 1.0,
                sigma_const: 0.0,
                sigma_hat: 0.0,
                x0: 0.0,
            });
            cfg.surface = Some(SurfaceSection {
                t_points: 11,
                x_points: 11,
                dt: 1e-3,
                n_paths: 16,
                se_batches: 4,
            });
        }
        "table" => {
            cfg.problem.table = Some(CoefficientTable {
                f_y: -1.0,
                xi0: 1.0,
                s0: -1e6,
                ..Default::default()
            });
        }
        other => return Err(Error::validation("problem.scenario", format!("unknown scenario '{other}'"))),
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_lists_poisson_example() {
        assert!(names().contains(&"poisson-example"));
        assert!(!catalogue().is_empty());
    }

    #[test]
    fn every_default_config_validates_and_builds() {
        for name in names() {
            let cfg = default_config(name).unwrap();
            cfg.validate().unwrap();
            cfg.problem().unwrap();
            cfg.basis().unwrap();
            if cfg.surface.is_some() {
                cfg.markovian().unwrap();
            }
        }
    }
}
