//! Backward regression Monte Carlo for reflected generalized BDSDEs driven by
//! Teugels martingales.
//!
//! One backward pass, for `i = N-1, …, 0`:
//!
//! 1. `Z^(j)_i = E_i[(Y_{i+1} - E_i Y_{i+1}) ΔH^(j)_i] / Δt`
//! 2. `ŷ = E_i[Y_{i+1} + f Δt + φ ΔA_i + g(t_{i+1}, ·, Y_{i+1}, Z_{i+1}) ΔB_i]`
//! 3. reflection: either the implicit penalty resolvent or `max(ŷ, S_i)`.
//!
//! `E_i` is least-squares projection on features of the state `X_i`. The
//! `g ΔB` term uses right-endpoint values, the discrete form of a backward
//! Itô integral. For `g` depending on `(y, z)` the pass can be run with `g`'s
//! arguments frozen at a previous iterate, which is the map whose fixed point
//! [`fixed_point_solve`] looks for.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::path_engine::{backward_increments, PathBundle, TimeGrid};
use crate::reflected_forward::{ReflectedPath, ScalarFn};
use crate::regression::{Projector, RegressionBasis};

/// `(t, x, y, z) -> R`.
pub type DriverFn = Arc<dyn Fn(f64, f64, f64, &[f64]) -> f64 + Send + Sync>;
/// `(t, x, y) -> R`.
pub type BoundaryFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// `(t, x) -> R`.
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

const PROBES: usize = 256;
const PROBE_SEED: u64 = 0x5eed_c0ef;

/// Driver `f`, generalized coefficient `φ`, backward-noise coefficient `g`,
/// and the constants they are declared to satisfy.
#[derive(Clone)]
pub struct CoefficientSpec {
    pub f: DriverFn,
    pub phi: BoundaryFn,
    pub g: DriverFn,
    /// `c` in the Lipschitz conditions on `f`, `φ` and `g`.
    pub lipschitz_c: f64,
    /// `β` in `(y1 - y2)(φ(y1) - φ(y2)) ≤ β |y1 - y2|²`.
    pub phi_monotone_beta: f64,
    /// `α` in `|g(y1,z1) - g(y2,z2)|² ≤ c|Δy|² + α‖Δz‖²`.
    pub g_z_alpha: f64,
    pub growth_k: f64,
    /// Whether `g` reads its `(y, z)` arguments.
    pub g_depends_on_solution: bool,
}

impl fmt::Debug for CoefficientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSpec")
            .field("lipschitz_c", &self.lipschitz_c)
            .field("phi_monotone_beta", &self.phi_monotone_beta)
            .field("g_z_alpha", &self.g_z_alpha)
            .field("growth_k", &self.growth_k)
            .field("g_depends_on_solution", &self.g_depends_on_solution)
            .finish_non_exhaustive()
    }
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec {
            f: Arc::new(|_, _, _, _| 0.0),
            phi: Arc::new(|_, _, _| 0.0),
            g: Arc::new(|_, _, _, _| 0.0),
            lipschitz_c: 1.0,
            phi_monotone_beta: 0.0,
            g_z_alpha: 0.5,
            growth_k: 1.0,
            g_depends_on_solution: false,
        }
    }
}

impl CoefficientSpec {
    pub fn with_f(mut self, f: impl Fn(f64, f64, f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.f = Arc::new(f);
        self
    }

    pub fn with_phi(mut self, phi: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.phi = Arc::new(phi);
        self
    }

    pub fn with_g(
        mut self,
        g: impl Fn(f64, f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
        depends_on_solution: bool,
    ) -> Self {
        self.g = Arc::new(g);
        self.g_depends_on_solution = depends_on_solution;
        self
    }

    pub fn with_constants(mut self, lipschitz_c: f64, phi_monotone_beta: f64, g_z_alpha: f64) -> Self {
        self.lipschitz_c = lipschitz_c;
        self.phi_monotone_beta = phi_monotone_beta;
        self.g_z_alpha = g_z_alpha;
        self
    }

    /// Checks the declared constants and probes the Lipschitz, monotonicity
    /// and `g`-contraction inequalities at random points.
    pub fn validate(&self, m: usize, t_range: (f64, f64), x_range: (f64, f64)) -> Result<()> {
        if !(self.lipschitz_c.is_finite() && self.lipschitz_c > 0.0) {
            return Err(Error::validation("lipschitz_c", "must be > 0"));
        }
        if !(self.phi_monotone_beta <= 0.0) {
            return Err(Error::validation("phi_monotone_beta", "must be <= 0"));
        }
        if !(self.g_z_alpha > 0.0 && self.g_z_alpha < 1.0) {
            return Err(Error::validation("g_z_alpha", format!("must lie in (0, 1), got {}", self.g_z_alpha)));
        }
        let c = self.lipschitz_c;
        let slack = |bound: f64| bound * (1.0 + 1e-9) + 1e-12;
        let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
        let mut z1 = vec![0.0; m];
        let mut z2 = vec![0.0; m];
        for _ in 0..PROBES {
            let t = t_range.0 + (t_range.1 - t_range.0) * rng.random::<f64>();
            let x = x_range.0 + (x_range.1 - x_range.0) * rng.random::<f64>();
            let y1 = rng.random_range(-10.0..10.0);
            let y2 = rng.random_range(-10.0..10.0);
            z1.iter_mut().for_each(|z| *z = rng.random_range(-10.0..10.0));
            z2.iter_mut().for_each(|z| *z = rng.random_range(-10.0..10.0));
            let dy2 = (y1 - y2) * (y1 - y2);
            let dz2: f64 = z1.iter().zip(&z2).map(|(a, b)| (a - b) * (a - b)).sum();

            let df = (self.f)(t, x, y1, &z1) - (self.f)(t, x, y2, &z2);
            if !(df * df <= slack(c * (dy2 + dz2))) {
                return Err(Error::validation("f", format!("Lipschitz constant {c} violated at t={t}, x={x}")));
            }
            let dphi = (self.phi)(t, x, y1) - (self.phi)(t, x, y2);
            if !((y1 - y2) * dphi <= slack(self.phi_monotone_beta * dy2).max(self.phi_monotone_beta * dy2 + 1e-12)) {
                return Err(Error::validation("phi", format!("monotonicity β = {} violated", self.phi_monotone_beta)));
            }
            if !(dphi.abs() <= slack(c * dy2.sqrt())) {
                return Err(Error::validation("phi", format!("Lipschitz constant {c} violated")));
            }
            let dg = (self.g)(t, x, y1, &z1) - (self.g)(t, x, y2, &z2);
            if !(dg * dg <= slack(c * dy2 + self.g_z_alpha * dz2)) {
                return Err(Error::validation(
                    "g",
                    format!("|Δg|² ≤ c|Δy|² + α‖Δz‖² violated (c = {c}, α = {})", self.g_z_alpha),
                ));
            }
            if !self.g_depends_on_solution && dg != 0.0 {
                return Err(Error::validation("g", "declared independent of (y, z) but is not"));
            }
        }
        Ok(())
    }
}

/// Obstacle `S(t, x)` and terminal condition `ξ = terminal(X_T)`.
#[derive(Clone)]
pub struct ObstacleSpec {
    pub obstacle: FieldFn,
    pub terminal: ScalarFn,
}

impl fmt::Debug for ObstacleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ObstacleSpec { .. }")
    }
}

impl ObstacleSpec {
    pub fn new(
        obstacle: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ObstacleSpec {
            obstacle: Arc::new(obstacle),
            terminal: Arc::new(terminal),
        }
    }

    /// A constant obstacle far below any value the solution takes.
    pub fn inactive(terminal: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(|_, _| -1e6, terminal)
    }
}

#[derive(Clone, Debug)]
pub struct BsdeProblem {
    pub coefficients: CoefficientSpec,
    pub obstacle: ObstacleSpec,
}

impl BsdeProblem {
    pub fn new(coefficients: CoefficientSpec, obstacle: ObstacleSpec) -> Self {
        BsdeProblem { coefficients, obstacle }
    }
}

/// How the reflection step is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scheme {
    /// Implicit penalty `n (y - S)^-` with its closed-form resolvent.
    Penalized { n: f64 },
    /// `Y_i = max(ŷ, S_i)`.
    Direct,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Penalized { n } => write!(f, "penalized(n={n})"),
            Scheme::Direct => write!(f, "direct"),
        }
    }
}

/// Node-major view of a bundle prepared for the backward pass.
#[derive(Debug, Clone)]
pub struct SolverInput {
    pub grid: TimeGrid,
    /// `states[node][path]`.
    pub states: Vec<Vec<f64>>,
    /// `dh[j][step][path]`.
    pub dh: Vec<Vec<Vec<f64>>>,
    /// `da[step][path]`.
    pub da: Vec<Vec<f64>>,
    /// `db[step][path]`.
    pub db: Vec<Vec<f64>>,
    pub boundary_theta: Option<f64>,
}

fn transpose(per_path: Vec<Vec<f64>>, len: usize) -> Vec<Vec<f64>> {
    (0..len).map(|i| per_path.iter().map(|row| row[i]).collect()).collect()
}

impl SolverInput {
    /// Uses `L` itself as the state.
    pub fn from_levy(bundle: &PathBundle) -> Self {
        let states = bundle.paths.iter().map(|p| p.levy.clone()).collect();
        Self::build(bundle, states, None)
    }

    /// Uses the reflected paths as the state; the bundle's `A` should already
    /// hold their local time.
    pub fn from_reflected(bundle: &PathBundle, reflected: &[ReflectedPath], theta: f64) -> Result<Self> {
        if reflected.len() != bundle.n_paths() {
            return Err(Error::validation("reflected paths", "one per bundle path required"));
        }
        let states = reflected.iter().map(|r| r.x.clone()).collect();
        Ok(Self::build(bundle, states, Some(theta)))
    }

    /// Arbitrary per-path states, `states[path][node]`.
    pub fn from_states(bundle: &PathBundle, states: Vec<Vec<f64>>) -> Result<Self> {
        if states.len() != bundle.n_paths() || states.iter().any(|s| s.len() != bundle.grid.n_nodes()) {
            return Err(Error::validation("states", "shape does not match the bundle"));
        }
        Ok(Self::build(bundle, states, None))
    }

    fn build(bundle: &PathBundle, states: Vec<Vec<f64>>, boundary_theta: Option<f64>) -> Self {
        let n_nodes = bundle.grid.n_nodes();
        let n_steps = bundle.grid.n_steps();
        let dh = (1..=bundle.m)
            .map(|j| {
                (0..n_steps)
                    .map(|s| bundle.paths.iter().map(|p| p.teugels_increment(j, s)).collect())
                    .collect()
            })
            .collect();
        let da = (0..n_steps)
            .map(|s| bundle.paths.iter().map(|p| p.increasing[s + 1] - p.increasing[s]).collect())
            .collect();
        let db = transpose(backward_increments(bundle), n_steps);
        SolverInput {
            grid: bundle.grid,
            states: transpose(states, n_nodes),
            dh,
            da,
            db,
            boundary_theta,
        }
    }

    /// Keeps only the first `k` martingales.
    pub fn with_martingales(mut self, k: usize) -> Self {
        self.dh.truncate(k);
        self
    }

    pub fn m(&self) -> usize {
        self.dh.len()
    }

    pub fn n_paths(&self) -> usize {
        self.states[0].len()
    }

    /// Restriction to a subset of paths.
    pub fn select_paths(&self, paths: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| paths.iter().map(|&p| v[p]).collect::<Vec<f64>>();
        SolverInput {
            grid: self.grid,
            states: self.states.iter().map(pick).collect(),
            dh: self.dh.iter().map(|d| d.iter().map(pick).collect()).collect(),
            da: self.da.iter().map(pick).collect(),
            db: self.db.iter().map(pick).collect(),
            boundary_theta: self.boundary_theta,
        }
    }

    pub fn state_range(&self) -> (f64, f64) {
        self.states
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }

    fn regression_basis(&self, basis: &RegressionBasis) -> RegressionBasis {
        match self.boundary_theta {
            Some(theta) if basis.boundary_theta.is_none() => basis.with_boundary(theta),
            _ => *basis,
        }
    }
}

/// Grid solution `(Y, Z, K)` with the obstacle values it was solved against.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub grid: TimeGrid,
    pub scheme: Scheme,
    pub iterations: usize,
    pub contraction_ratios: Vec<f64>,
    pub final_delta: Option<f64>,
    /// `y[node][path]`.
    pub y: Vec<Vec<f64>>,
    /// `z[node][j][path]`; the terminal node is all zeros.
    pub z: Vec<Vec<Vec<f64>>>,
    /// `k[node][path]`, `k[0] = 0`.
    pub k: Vec<Vec<f64>>,
    /// `obstacle[node][path]` = `S(t_i, X_i)`.
    pub obstacle: Vec<Vec<f64>>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

impl DiscreteSolution {
    fn zeros(grid: TimeGrid, m: usize, n_paths: usize) -> Self {
        let nodes = grid.n_nodes();
        DiscreteSolution {
            grid,
            scheme: Scheme::Direct,
            iterations: 0,
            contraction_ratios: Vec::new(),
            final_delta: None,
            y: vec![vec![0.0; n_paths]; nodes],
            z: vec![vec![vec![0.0; n_paths]; m]; nodes],
            k: vec![vec![0.0; n_paths]; nodes],
            obstacle: vec![vec![0.0; n_paths]; nodes],
        }
    }

    pub fn n_paths(&self) -> usize {
        self.y[0].len()
    }

    pub fn n_nodes(&self) -> usize {
        self.y.len()
    }

    pub fn m(&self) -> usize {
        self.z[0].len()
    }

    pub fn mean_y(&self, node: usize) -> f64 {
        mean(&self.y[node])
    }

    pub fn sd_y(&self, node: usize) -> f64 {
        sd(&self.y[node])
    }

    pub fn mean_k(&self, node: usize) -> f64 {
        mean(&self.k[node])
    }

    pub fn y0(&self) -> f64 {
        self.mean_y(0)
    }

    pub fn k_terminal(&self) -> f64 {
        self.mean_k(self.n_nodes() - 1)
    }

    fn dk(&self, step: usize, path: usize) -> f64 {
        self.k[step + 1][path] - self.k[step][path]
    }

    /// `(Y_i - S_i) ΔK_i` averaged over paths, per step.
    pub fn skorokhod_terms(&self) -> Vec<f64> {
        (0..self.n_nodes() - 1)
            .map(|i| {
                let total: f64 = (0..self.n_paths()).map(|p| self.skorokhod_term(i, p)).sum();
                total / self.n_paths() as f64
            })
            .collect()
    }

    fn skorokhod_term(&self, step: usize, path: usize) -> f64 {
        let dk = self.dk(step, path);
        if dk == 0.0 {
            0.0
        } else {
            (self.y[step][path] - self.obstacle[step][path]) * dk
        }
    }

    /// `Σ_i (Y_i - S_i) ΔK_i` for each path.
    pub fn skorokhod_residual_per_path(&self) -> Vec<f64> {
        (0..self.n_paths())
            .map(|p| (0..self.n_nodes() - 1).map(|i| self.skorokhod_term(i, p)).sum())
            .collect()
    }

    pub fn skorokhod_residual(&self) -> f64 {
        mean(&self.skorokhod_residual_per_path())
    }

    /// Sample mean of `sup_i |Y_i|² + Σ_i ‖Z_i‖² Δt + K_N²`.
    pub fn a_priori_functional(&self) -> f64 {
        let dt = self.grid.dt();
        let last = self.n_nodes() - 1;
        let per_path: Vec<f64> = (0..self.n_paths())
            .map(|p| {
                let sup = self.y.iter().map(|row| row[p] * row[p]).fold(0.0, f64::max);
                let zz: f64 = self.z[..last]
                    .iter()
                    .map(|zs| zs.iter().map(|zj| zj[p] * zj[p]).sum::<f64>() * dt)
                    .sum();
                sup + zz + self.k[last][p] * self.k[last][p]
            })
            .collect();
        mean(&per_path)
    }

    pub fn path_y(&self, path: usize) -> Vec<f64> {
        self.y.iter().map(|row| row[path]).collect()
    }
}

/// `(Y, Z)` frozen inside `g`.
fn g_arguments<'a>(own: &'a DiscreteSolution, frozen: Option<&'a DiscreteSolution>) -> &'a DiscreteSolution {
    frozen.unwrap_or(own)
}

/// One backward pass. With `frozen = Some(prev)` the arguments of `g` are
/// taken from `prev`; otherwise from the pass's own right-endpoint values.
pub fn backward_pass(
    problem: &BsdeProblem,
    input: &SolverInput,
    basis: &RegressionBasis,
    scheme: Scheme,
    frozen: Option<&DiscreteSolution>,
) -> Result<DiscreteSolution> {
    if let Scheme::Penalized { n } = scheme {
        if !(n.is_finite() && n >= 0.0) {
            return Err(Error::validation("n_penalty", "must be finite and >= 0"));
        }
    }
    let grid = input.grid;
    let n_steps = grid.n_steps();
    let n_paths = input.n_paths();
    let m = input.m();
    let dt = grid.dt();
    let basis = input.regression_basis(basis);
    let coeffs = &problem.coefficients;
    let obstacle = &problem.obstacle.obstacle;

    let mut sol = DiscreteSolution::zeros(grid, m, n_paths);
    sol.scheme = scheme;

    let t_end = grid.t_end();
    for p in 0..n_paths {
        let x = input.states[n_steps][p];
        let xi = (problem.obstacle.terminal)(x);
        let s = obstacle(t_end, x);
        if !xi.is_finite() {
            return Err(Error::NonFinite {
                node: n_steps,
                quantity: "terminal value",
            });
        }
        if s > xi + 1e-12 * (1.0 + xi.abs()) {
            return Err(Error::validation(
                "obstacle",
                format!("S_T = {s} exceeds terminal value {xi} at x = {x}"),
            ));
        }
        sol.y[n_steps][p] = xi;
        sol.obstacle[n_steps][p] = s;
    }

    let mut dk = vec![vec![0.0; n_paths]; n_steps];
    let mut z_buf = vec![0.0; m];
    let mut gz_buf = vec![0.0; m];
    let mut response = vec![0.0; n_paths];

    for i in (0..n_steps).rev() {
        let t = grid.node(i);
        let t_next = grid.node(i + 1);
        let states = &input.states[i];
        let states_next = &input.states[i + 1];
        let projector = Projector::new(&basis, states, i)?;

        let y_next = &sol.y[i + 1];
        let fitted_next = projector.project(y_next);
        for j in 0..m {
            for p in 0..n_paths {
                response[p] = (y_next[p] - fitted_next[p]) * input.dh[j][i][p];
            }
            let zj = projector.project(&response);
            sol.z[i][j] = zj.into_iter().map(|v| v / dt).collect();
        }

        let g_src = g_arguments(&sol, frozen);
        for p in 0..n_paths {
            for j in 0..m {
                z_buf[j] = sol.z[i][j][p];
                gz_buf[j] = g_src.z[i + 1][j][p];
            }
            let y1 = sol.y[i + 1][p];
            let x = states[p];
            let mut r = y1 + (coeffs.f)(t, x, y1, &z_buf) * dt;
            let da = input.da[i][p];
            if da != 0.0 {
                r += (coeffs.phi)(t, x, y1) * da;
            }
            let db = input.db[i][p];
            if db != 0.0 {
                r += (coeffs.g)(t_next, states_next[p], g_src.y[i + 1][p], &gz_buf) * db;
            }
            response[p] = r;
        }
        if let Some(p) = response.iter().position(|v| !v.is_finite()) {
            let _ = p;
            return Err(Error::NonFinite {
                node: i,
                quantity: "regression response",
            });
        }
        let y_hat = projector.project(&response);

        for p in 0..n_paths {
            let s = obstacle(t, states[p]);
            sol.obstacle[i][p] = s;
            let yh = y_hat[p];
            let (y, push) = match scheme {
                Scheme::Direct => {
                    if yh >= s {
                        (yh, 0.0)
                    } else {
                        (s, s - yh)
                    }
                }
                Scheme::Penalized { n } => {
                    if yh >= s {
                        (yh, 0.0)
                    } else {
                        let w = n * dt;
                        let y = (yh + w * s) / (1.0 + w);
                        (y, w * (s - y))
                    }
                }
            };
            if !y.is_finite() {
                return Err(Error::NonFinite { node: i, quantity: "Y" });
            }
            sol.y[i][p] = y;
            dk[i][p] = push;
        }
    }

    for (i, step) in dk.iter().enumerate() {
        for (p, d) in step.iter().enumerate() {
            sol.k[i + 1][p] = sol.k[i][p] + d;
        }
    }
    sol.iterations = 1;
    Ok(sol)
}

fn validate_for(problem: &BsdeProblem, input: &SolverInput) -> Result<()> {
    let grid = input.grid;
    problem
        .coefficients
        .validate(input.m(), (grid.t0(), grid.t_end()), input.state_range())
}

/// Penalized scheme with penalty `n`.
pub fn solve_penalized(
    problem: &BsdeProblem,
    input: &SolverInput,
    basis: &RegressionBasis,
    n_penalty: f64,
) -> Result<DiscreteSolution> {
    validate_for(problem, input)?;
    backward_pass(problem, input, basis, Scheme::Penalized { n: n_penalty }, None)
}

/// Direct reflection `Y_i = max(ŷ, S_i)`.
pub fn solve_reflected_direct(problem: &BsdeProblem, input: &SolverInput, basis: &RegressionBasis) -> Result<DiscreteSolution> {
    validate_for(problem, input)?;
    backward_pass(problem, input, basis, Scheme::Direct, None)
}

/// Weights of the norm under which the fixed-point map contracts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionWeights {
    pub alpha_prime: f64,
    pub gamma: f64,
    pub mu: f64,
    pub c_bar: f64,
}

impl ContractionWeights {
    /// `γ = c/(1-α') - 1 + α`, `μ = γ + α'c/α`, `c̄ = α'c/α`; `α'` defaults
    /// to `(1+α)/2`.
    pub fn new(c: f64, alpha: f64, alpha_prime: Option<f64>) -> Result<Self> {
        let alpha_prime = alpha_prime.unwrap_or((1.0 + alpha) / 2.0);
        if !(alpha_prime > alpha && alpha_prime < 1.0) {
            return Err(Error::validation(
                "alpha_prime",
                format!("must lie in (α, 1) = ({alpha}, 1), got {alpha_prime}"),
            ));
        }
        let gamma = c / (1.0 - alpha_prime) - 1.0 + alpha;
        let c_bar = alpha_prime * c / alpha;
        Ok(ContractionWeights {
            alpha_prime,
            gamma,
            mu: gamma + c_bar,
            c_bar,
        })
    }

    /// Path mean of `Σ_i e^{-μ t_i} (c̄|ΔY_i|² + α'‖ΔZ_i‖²) Δt`.
    pub fn distance(&self, a: &DiscreteSolution, b: &DiscreteSolution) -> f64 {
        let grid = a.grid;
        let dt = grid.dt();
        let n_paths = a.n_paths();
        let mut total = 0.0;
        for i in 0..grid.n_steps() {
            let w = (-self.mu * grid.elapsed(i)).exp() * dt;
            let mut node = 0.0;
            for p in 0..n_paths {
                let dy = a.y[i][p] - b.y[i][p];
                let dz: f64 = a.z[i].iter().zip(&b.z[i]).map(|(za, zb)| (za[p] - zb[p]).powi(2)).sum();
                node += self.c_bar * dy * dy + self.alpha_prime * dz;
            }
            total += w * node;
        }
        total / n_paths as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub alpha_prime: Option<f64>,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            tol: 1e-10,
            max_iter: 25,
            alpha_prime: None,
        }
    }
}

/// Picard iteration on `(Ȳ, Z̄) ↦ Ψ(Ȳ, Z̄)` where `Ψ` solves the reflected
/// equation with `g(Ȳ, Z̄)` frozen. Starts from zero; stops once the
/// weighted squared distance between iterates is below `tol`.
///
/// When `g` ignores `(y, z)`, `Ψ` is constant and one application is exact.
pub fn fixed_point_solve(
    problem: &BsdeProblem,
    input: &SolverInput,
    basis: &RegressionBasis,
    scheme: Scheme,
    config: &FixedPointConfig,
) -> Result<DiscreteSolution> {
    if !(config.tol > 0.0) || config.max_iter == 0 {
        return Err(Error::validation("fixed point", "need tol > 0 and max_iter >= 1"));
    }
    validate_for(problem, input)?;
    let coeffs = &problem.coefficients;
    if !coeffs.g_depends_on_solution {
        let mut sol = backward_pass(problem, input, basis, scheme, None)?;
        sol.iterations = 1;
        sol.final_delta = Some(0.0);
        return Ok(sol);
    }

    let weights = ContractionWeights::new(coeffs.lipschitz_c, coeffs.g_z_alpha, config.alpha_prime)?;
    let mut prev = DiscreteSolution::zeros(input.grid, input.m(), input.n_paths());
    let mut ratios = Vec::new();
    let mut last_delta: Option<f64> = None;
    for iteration in 1..=config.max_iter {
        let mut next = backward_pass(problem, input, basis, scheme, Some(&prev))?;
        let delta = weights.distance(&next, &prev);
        if let Some(d) = last_delta {
            ratios.push(delta / d);
        }
        last_delta = Some(delta);
        if delta < config.tol {
            next.iterations = iteration;
            next.contraction_ratios = ratios;
            next.final_delta = Some(delta);
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NoConvergence {
        iterations: config.max_iter,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: f64,
    pub y0: f64,
    pub k_terminal: f64,
    pub skorokhod: f64,
    pub a_priori: f64,
    pub gap_to_direct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub direct_y0: f64,
    /// `Y_0^n` nondecreasing along the list.
    pub monotone_y0: bool,
    /// Largest `(Y^{n_k}_i - Y^{n_{k+1}}_i)^+` over nodes and paths.
    pub node_monotonicity_violation: f64,
    /// `|Y_0^{n_{k+1}} - Y_0^{n_k}|`.
    pub cauchy_gaps: Vec<f64>,
    /// Successive ratios of `|Y_0^direct - Y_0^n|`.
    pub gap_ratios: Vec<f64>,
}

/// One penalized solve per `n`, all on the same paths, plus the direct
/// scheme as the reference limit.
pub fn penalization_sweep(
    problem: &BsdeProblem,
    input: &SolverInput,
    basis: &RegressionBasis,
    n_list: &[f64],
    config: &FixedPointConfig,
) -> Result<SweepTable> {
    if n_list.is_empty() {
        return Err(Error::validation("n_list", "empty"));
    }
    if n_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("n_list", "must be strictly increasing"));
    }
    let direct = fixed_point_solve(problem, input, basis, Scheme::Direct, config)?;
    let sols = par::map_indexed(n_list.len(), |k| {
        fixed_point_solve(problem, input, basis, Scheme::Penalized { n: n_list[k] }, config)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let direct_y0 = direct.y0();
    let rows: Vec<SweepRow> = n_list
        .iter()
        .zip(&sols)
        .map(|(&n, s)| SweepRow {
            n,
            y0: s.y0(),
            k_terminal: s.k_terminal(),
            skorokhod: s.skorokhod_residual(),
            a_priori: s.a_priori_functional(),
            gap_to_direct: (direct_y0 - s.y0()).abs(),
        })
        .collect();
    let mut violation: f64 = 0.0;
    for pair in sols.windows(2) {
        for (row_a, row_b) in pair[0].y.iter().zip(&pair[1].y) {
            for (a, b) in row_a.iter().zip(row_b) {
                violation = violation.max(a - b);
            }
        }
    }
    Ok(SweepTable {
        monotone_y0: rows.windows(2).all(|w| w[1].y0 >= w[0].y0),
        node_monotonicity_violation: violation,
        cauchy_gaps: rows.windows(2).map(|w| (w[1].y0 - w[0].y0).abs()).collect(),
        gap_ratios: rows.windows(2).map(|w| w[1].gap_to_direct / w[0].gap_to_direct).collect(),
        direct_y0,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_basis::{orthonormal_basis, JumpAtom, LevyMeasureModel};
    use crate::path_engine::{simulate_bundle, BrownianSource};

    fn input(n_paths: usize, n_steps: usize, t_end: f64) -> SolverInput {
        let model = LevyMeasureModel::new(vec![JumpAtom::new(1.0, 1.0)], 0.0, 0.0).unwrap();
        let basis = orthonormal_basis(&model, 1).unwrap();
        let grid = TimeGrid::new(0.0, t_end, n_steps).unwrap();
        let bundle = simulate_bundle(&model, &basis, &grid, n_paths, 3, &BrownianSource::Common).unwrap();
        SolverInput::from_levy(&bundle)
    }

    #[test]
    fn constant_terminal_is_exact() {
        let inp = input(200, 50, 1.0);
        let problem = BsdeProblem::new(CoefficientSpec::default(), ObstacleSpec::inactive(|_| 1.0));
        let sol = solve_penalized(&problem, &inp, &RegressionBasis::default(), 10.0).unwrap();
        assert!(sol.y.iter().flatten().all(|&y| y == 1.0));
        assert!(sol.z.iter().flatten().flatten().all(|&z| z == 0.0));
        assert!(sol.k.iter().flatten().all(|&k| k == 0.0));
    }

    #[test]
    fn inactive_obstacle_direct_matches_zero_penalty() {
        let inp = input(100, 20, 1.0);
        let coeffs = CoefficientSpec::default().with_f(|_, x, y, _| -y + 0.1 * x.sin());
        let problem = BsdeProblem::new(coeffs, ObstacleSpec::inactive(|x| x.cos()));
        let basis = RegressionBasis::default();
        let a = solve_penalized(&problem, &inp, &basis, 0.0).unwrap();
        let b = solve_reflected_direct(&problem, &inp, &basis).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn direct_scheme_sits_on_deterministic_obstacle() {
        let inp = input(20, 100, 1.0);
        let problem = BsdeProblem::new(CoefficientSpec::default(), ObstacleSpec::new(|t, _| 1.0 - t, |_| 0.0));
        let sol = solve_reflected_direct(&problem, &inp, &RegressionBasis::default()).unwrap();
        for i in 0..100 {
            assert!((sol.y[i][0] - (1.0 - inp.grid.node(i))).abs() < 1e-12);
        }
        assert!((sol.k_terminal() - 1.0).abs() < 1e-12);
        assert_eq!(sol.skorokhod_residual(), 0.0);
    }

    #[test]
    fn penalized_approaches_obstacle_from_below() {
        let inp = input(10, 200, 2.0);
        let problem = BsdeProblem::new(CoefficientSpec::default(), ObstacleSpec::new(|t, _| 1.0 - t / 2.0, |_| 0.0));
        let table = penalization_sweep(
            &problem,
            &inp,
            &RegressionBasis::default(),
            &[1.0, 2.0, 4.0, 8.0],
            &FixedPointConfig::default(),
        )
        .unwrap();
        assert!(table.monotone_y0);
        assert!(table.rows.iter().all(|r| r.y0 <= table.direct_y0));
        assert!(table.node_monotonicity_violation <= 1e-12);
    }

    #[test]
    fn terminal_below_obstacle_is_rejected() {
        let inp = input(5, 5, 1.0);
        let problem = BsdeProblem::new(CoefficientSpec::default(), ObstacleSpec::new(|_, _| 2.0, |_| 1.0));
        let err = solve_reflected_direct(&problem, &inp, &RegressionBasis::default()).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn coefficient_probes_reject_bad_constants() {
        let g_in_z = CoefficientSpec::default().with_g(|_, _, _, z| z[0], true);
        assert!(g_in_z.validate(1, (0.0, 1.0), (-1.0, 1.0)).is_err());
        let g_in_y = CoefficientSpec::default()
            .with_g(|_, _, y, _| y, true)
            .with_constants(0.5, 0.0, 0.5);
        assert!(g_in_y.validate(1, (0.0, 1.0), (-1.0, 1.0)).is_err());
        let ok = CoefficientSpec::default().with_g(|_, _, y, _| 0.5 * y, true);
        assert!(ok.validate(1, (0.0, 1.0), (-1.0, 1.0)).is_ok());
        let positive_beta = CoefficientSpec::default().with_phi(|_, _, y| y).with_constants(1.0, 1.0, 0.5);
        assert!(positive_beta.validate(1, (0.0, 1.0), (-1.0, 1.0)).is_err());
    }

    #[test]
    fn fixed_point_contracts() {
        let inp = input(200, 100, 1.0);
        let coeffs = CoefficientSpec::default()
            .with_f(|_, _, y, _| -y)
            .with_g(|_, _, y, _| 0.5 * y, true);
        let problem = BsdeProblem::new(coeffs, ObstacleSpec::inactive(|_| 1.0));
        let sol = fixed_point_solve(
            &problem,
            &inp,
            &RegressionBasis::default(),
            Scheme::Direct,
            &FixedPointConfig {
                tol: 1e-8,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(sol.final_delta.unwrap() < 1e-8);
        assert!(sol.contraction_ratios.iter().all(|&r| r < 1.0));

        let indep = BsdeProblem::new(
            CoefficientSpec::default().with_f(|_, _, y, _| -y),
            ObstacleSpec::inactive(|_| 1.0),
        );
        let one = fixed_point_solve(&indep, &inp, &RegressionBasis::default(), Scheme::Direct, &FixedPointConfig::default())
            .unwrap();
        assert_eq!(one.iterations, 1);
    }
}
