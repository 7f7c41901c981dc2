//! Experiment configuration shared by the command line and the scenario
//! catalogue. Parsing lives with the caller; this module only describes and
//! validates the values and turns them into model objects.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_basis::{orthonormal_basis, JumpAtom, LevyMeasureModel, PolynomialBasis};
use crate::path_engine::{attach_increasing_process, simulate_bundle, BrownianSource, IncreasingSpec, PathBundle, TimeGrid};
use crate::reflected_forward::{simulate_reflected_bundle, ReflectedCoefficients};
use crate::regression::RegressionBasis;
use crate::scenarios;
use crate::solver::{fixed_point_solve, BsdeProblem, DiscreteSolution, FixedPointConfig, Scheme, SolverInput};
use crate::spdie_bridge::{MarkovianProblem, SurfaceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `[size, rate]` pairs.
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub sigma0: f64,
    #[serde(default)]
    pub drift: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrownianMode {
    Common,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_brownian")]
    pub brownian: BrownianMode,
}

fn default_brownian() -> BrownianMode {
    BrownianMode::Common
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Penalized,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub scheme: SchemeKind,
    #[serde(default = "default_penalty")]
    pub n_penalty: f64,
    #[serde(default)]
    pub n_list: Vec<f64>,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_prime: Option<f64>,
}

fn default_penalty() -> f64 {
    100.0
}
fn default_degree() -> usize {
    2
}
fn default_ridge() -> f64 {
    crate::regression::DEFAULT_RIDGE
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    25
}

/// Coefficients of the `table` family, all affine:
/// `f = f0 + f_x x + f_y y + Σ f_z[j] z_j`, `φ = phi0 + phi_y y`,
/// `g = g0 + g_x x + g_y y + g_z z_1`, `ξ = xi0 + xi1 x + xi2 x²`,
/// `S = s0 + s_t t + s_x x`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientTable {
    #[serde(default)]
    pub f0: f64,
    #[serde(default)]
    pub f_x: f64,
    #[serde(default)]
    pub f_y: f64,
    #[serde(default)]
    pub f_z: Vec<f64>,
    #[serde(default)]
    pub phi0: f64,
    #[serde(default)]
    pub phi_y: f64,
    #[serde(default)]
    pub g0: f64,
    #[serde(default)]
    pub g_x: f64,
    #[serde(default)]
    pub g_y: f64,
    #[serde(default)]
    pub g_z: f64,
    #[serde(default)]
    pub xi0: f64,
    #[serde(default)]
    pub xi1: f64,
    #[serde(default)]
    pub xi2: f64,
    #[serde(default = "inactive_level")]
    pub s0: f64,
    #[serde(default)]
    pub s_t: f64,
    #[serde(default)]
    pub s_x: f64,
}

fn inactive_level() -> f64 {
    -1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub scenario: String,
    /// `A_t = increasing_rate · t` when no reflection is configured.
    #[serde(default)]
    pub increasing_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<CoefficientTable>,
}

/// `σ(x) = sigma_const + sigma_hat (1 - |x|/θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectSection {
    pub theta: f64,
    #[serde(default)]
    pub sigma_const: f64,
    #[serde(default)]
    pub sigma_hat: f64,
    #[serde(default)]
    pub x0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    pub t_points: usize,
    pub x_points: usize,
    pub dt: f64,
    pub n_paths: usize,
    #[serde(default = "default_batches")]
    pub se_batches: usize,
}

fn default_batches() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_formats() -> Vec<String> {
    vec!["csv".to_string(), "json".to_string()]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: "out".to_string(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub monte_carlo: MonteCarloSection,
    pub solver: SolverSection,
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflect: Option<ReflectSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSection>,
    #[serde(default)]
    pub outputs: OutputSection,
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(what, format!("must be finite and > 0, got {v}")))
    }
}

impl ExperimentConfig {
    /// Range checks on every numeric field; runs before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.model.m == 0 || self.model.m > 12 {
            return Err(Error::validation("model.m", "must lie in 1..=12"));
        }
        for (k, [size, rate]) in self.model.atoms.iter().enumerate() {
            if !size.is_finite() || !rate.is_finite() {
                return Err(Error::validation(format!("model.atoms[{k}]"), "must be finite"));
            }
        }
        if !(self.model.sigma0.is_finite() && self.model.sigma0 >= 0.0) {
            return Err(Error::validation("model.sigma0", "must be finite and >= 0"));
        }
        if !self.model.drift.is_finite() {
            return Err(Error::validation("model.drift", "must be finite"));
        }
        if !(self.grid.t_end > self.grid.t0) || !self.grid.t0.is_finite() || !self.grid.t_end.is_finite() {
            return Err(Error::validation("grid.t_end", "must exceed grid.t0"));
        }
        if self.grid.n_steps == 0 || self.grid.n_steps > 1_000_000 {
            return Err(Error::validation("grid.n_steps", "must lie in 1..=1000000"));
        }
        if self.monte_carlo.n_paths == 0 || self.monte_carlo.n_paths > 10_000_000 {
            return Err(Error::validation("monte_carlo.n_paths", "must lie in 1..=10000000"));
        }
        let s = &self.solver;
        if !(s.n_penalty.is_finite() && s.n_penalty >= 0.0) {
            return Err(Error::validation("solver.n_penalty", "must be finite and >= 0"));
        }
        if s.n_list.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return Err(Error::validation("solver.n_list", "entries must be finite and >= 0"));
        }
        if s.n_list.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("solver.n_list", "must be strictly increasing"));
        }
        if s.degree > 8 {
            return Err(Error::validation("solver.degree", "must be <= 8"));
        }
        if !(s.ridge.is_finite() && s.ridge >= 0.0) {
            return Err(Error::validation("solver.ridge", "must be finite and >= 0"));
        }
        positive("solver.tol", s.tol)?;
        if s.max_iter == 0 {
            return Err(Error::validation("solver.max_iter", "must be >= 1"));
        }
        if let Some(a) = s.alpha_prime {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::validation("solver.alpha_prime", "must lie in (0, 1)"));
            }
        }
        if !self.problem.increasing_rate.is_finite() || self.problem.increasing_rate < 0.0 {
            return Err(Error::validation("problem.increasing_rate", "must be finite and >= 0"));
        }
        if !scenarios::names().contains(&self.problem.scenario.as_str()) {
            return Err(Error::validation(
                "problem.scenario",
                format!("unknown scenario '{}'", self.problem.scenario),
            ));
        }
        if self.problem.scenario == "table" && self.problem.table.is_none() {
            return Err(Error::validation("problem.table", "required for the table scenario"));
        }
        if let Some(r) = &self.reflect {
            positive("reflect.theta", r.theta)?;
            if !(r.sigma_const.is_finite() && r.sigma_hat.is_finite()) {
                return Err(Error::validation("reflect.sigma", "must be finite"));
            }
            if !(r.x0.abs() <= r.theta) {
                return Err(Error::validation("reflect.x0", "must lie in [-theta, theta]"));
            }
        }
        if let Some(sf) = &self.surface {
            if sf.t_points < 1 || sf.x_points < 3 {
                return Err(Error::validation("surface", "need t_points >= 1 and x_points >= 3"));
            }
            positive("surface.dt", sf.dt)?;
            if sf.n_paths == 0 {
                return Err(Error::validation("surface.n_paths", "must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn levy_model(&self) -> Result<LevyMeasureModel> {
        let atoms = self.model.atoms.iter().map(|[s, r]| JumpAtom::new(*s, *r)).collect();
        LevyMeasureModel::new(atoms, self.model.sigma0, self.model.drift)
    }

    pub fn basis(&self) -> Result<PolynomialBasis> {
        orthonormal_basis(&self.levy_model()?, self.model.m)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.t0, self.grid.t_end, self.grid.n_steps)
    }

    pub fn brownian(&self) -> BrownianSource {
        match self.monte_carlo.brownian {
            BrownianMode::Common => BrownianSource::Common,
            BrownianMode::Independent => BrownianSource::Independent,
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self.solver.scheme {
            SchemeKind::Penalized => Scheme::Penalized {
                n: self.solver.n_penalty,
            },
            SchemeKind::Direct => Scheme::Direct,
        }
    }

    pub fn regression_basis(&self) -> Result<RegressionBasis> {
        RegressionBasis::new(self.solver.degree, self.solver.ridge)
    }

    pub fn fixed_point(&self) -> FixedPointConfig {
        FixedPointConfig {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            alpha_prime: self.solver.alpha_prime,
        }
    }

    pub fn forward(&self) -> Result<Option<ReflectedCoefficients>> {
        let Some(r) = self.reflect else { return Ok(None) };
        let (c, h, theta) = (r.sigma_const, r.sigma_hat, r.theta);
        let sigma = Arc::new(move |x: f64| c + h * (1.0 - x.abs() / theta));
        ReflectedCoefficients::new(theta, sigma, h.abs() / theta).map(Some)
    }

    pub fn problem(&self) -> Result<BsdeProblem> {
        let theta = self.reflect.map(|r| r.theta);
        scenarios::problem(&self.problem.scenario, self.grid.t_end, theta, self.problem.table.as_ref())
    }

    /// Simulates the configured bundle.
    pub fn simulate(&self) -> Result<PathBundle> {
        simulate_bundle(
            &self.levy_model()?,
            &self.basis()?,
            &self.time_grid()?,
            self.monte_carlo.n_paths,
            self.monte_carlo.seed,
            &self.brownian(),
        )
    }

    /// Paths plus the solver's view of them: reflected states with `A = |η|`
    /// when a `[reflect]` section is present, `L` itself with
    /// `A_t = problem.increasing_rate · t` otherwise.
    pub fn solver_input(&self) -> Result<SolverInput> {
        let bundle = self.simulate()?;
        match self.forward()? {
            Some(forward) => {
                let x0 = self.reflect.map_or(0.0, |r| r.x0);
                let reflected = simulate_reflected_bundle(&forward, &bundle, x0)?;
                let local_time = reflected.iter().map(|r| r.abs_eta.clone()).collect();
                let bundle = attach_increasing_process(bundle, IncreasingSpec::PerPath(local_time))?;
                SolverInput::from_reflected(&bundle, &reflected, forward.theta())
            }
            None => {
                let rate = self.problem.increasing_rate;
                let bundle = if rate > 0.0 {
                    attach_increasing_process(bundle, IncreasingSpec::Deterministic(Arc::new(move |t| rate * t)))?
                } else {
                    bundle
                };
                Ok(SolverInput::from_levy(&bundle))
            }
        }
    }

    /// Simulates and solves with the configured scheme.
    pub fn solve(&self) -> Result<DiscreteSolution> {
        let input = self.solver_input()?;
        fixed_point_solve(
            &self.problem()?,
            &input,
            &self.regression_basis()?,
            self.scheme(),
            &self.fixed_point(),
        )
    }

    pub fn markovian(&self) -> Result<MarkovianProblem> {
        let forward = self
            .forward()?
            .ok_or_else(|| Error::validation("reflect", "section required for surface runs"))?;
        let bsde = self.problem()?;
        MarkovianProblem::new(
            bsde.obstacle.terminal,
            bsde.coefficients,
            bsde.obstacle.obstacle,
            forward,
            self.levy_model()?,
            self.model.m,
            self.grid.t_end,
        )
    }

    pub fn surface_config(&self) -> Result<SurfaceConfig> {
        let sf = self
            .surface
            .ok_or_else(|| Error::validation("surface", "section required for surface runs"))?;
        Ok(SurfaceConfig {
            dt: sf.dt,
            n_paths: sf.n_paths,
            seed: self.monte_carlo.seed,
            scheme: self.scheme(),
            basis: self.regression_basis()?,
            fixed_point: self.fixed_point(),
            se_batches: sf.se_batches,
        })
    }

    /// Evenly spaced `t` and `x` axes of the surface.
    pub fn surface_axes(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let sf = self
            .surface
            .ok_or_else(|| Error::validation("surface", "section required for surface runs"))?;
        let theta = self
            .reflect
            .ok_or_else(|| Error::validation("reflect", "section required for surface runs"))?
            .theta;
        let (t0, t1) = (self.grid.t0, self.grid.t_end);
        let t = if sf.t_points == 1 {
            vec![t0]
        } else {
            (0..sf.t_points)
                .map(|i| t0 + (t1 - t0) * i as f64 / (sf.t_points - 1) as f64)
                .collect()
        };
        let x = (0..sf.x_points)
            .map(|i| -theta + 2.0 * theta * i as f64 / (sf.x_points - 1) as f64)
            .collect();
        Ok((t, x))
    }
}
