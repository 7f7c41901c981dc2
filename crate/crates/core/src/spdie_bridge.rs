//! Markovian data for the reflected equation, the pathwise estimate of the
//! obstacle SPDIE solution `u(t, x) = Y^{t,x}_t`, the jump operators applied
//! to a gridded `u`, and the single-atom Poisson reduction.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_basis::{orthonormal_basis, JumpAtom, LevyMeasureModel, PolynomialBasis};
use crate::par;
use crate::path_engine::{
    attach_increasing_process, common_brownian_increments, simulate_bundle, BrownianSource, IncreasingSpec, PathBundle,
    TimeGrid,
};
use crate::reflected_forward::{simulate_reflected_bundle, ReflectedCoefficients, ScalarFn};
use crate::regression::{Projector, RegressionBasis};
use crate::rng::derive_seed;
use crate::scenarios;
use crate::solver::{
    fixed_point_solve, BsdeProblem, CoefficientSpec, DiscreteSolution, FieldFn, FixedPointConfig, ObstacleSpec, Scheme,
    SolverInput,
};

/// Terminal `l`, coefficients `(f, φ, g)`, obstacle `h`, forward data
/// `(θ, σ)` and the Lévy model, on the horizon `[.., t_end]`.
#[derive(Clone)]
pub struct MarkovianProblem {
    pub terminal: ScalarFn,
    pub coefficients: CoefficientSpec,
    pub obstacle: FieldFn,
    pub forward: ReflectedCoefficients,
    pub model: LevyMeasureModel,
    pub m: usize,
    pub t_end: f64,
}

impl fmt::Debug for MarkovianProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MarkovianProblem")
            .field("coefficients", &self.coefficients)
            .field("forward", &self.forward)
            .field("model", &self.model)
            .field("m", &self.m)
            .field("t_end", &self.t_end)
            .finish_non_exhaustive()
    }
}

impl MarkovianProblem {
    /// Checks `h(T, x) = l(x)` on 101 points of `[-θ, θ]`.
    pub fn new(
        terminal: ScalarFn,
        coefficients: CoefficientSpec,
        obstacle: FieldFn,
        forward: ReflectedCoefficients,
        model: LevyMeasureModel,
        m: usize,
        t_end: f64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::validation("m", "must be >= 1"));
        }
        let theta = forward.theta();
        for k in 0..=100 {
            let x = -theta + 2.0 * theta * k as f64 / 100.0;
            let (h, l) = (obstacle(t_end, x), terminal(x));
            if (h - l).abs() > 1e-12 * (1.0 + l.abs()) {
                return Err(Error::validation(
                    "obstacle",
                    format!("h(T, {x}) = {h} differs from l({x}) = {l}"),
                ));
            }
        }
        Ok(MarkovianProblem {
            terminal,
            coefficients,
            obstacle,
            forward,
            model,
            m,
            t_end,
        })
    }

    pub fn bsde(&self) -> BsdeProblem {
        BsdeProblem {
            coefficients: self.coefficients.clone(),
            obstacle: ObstacleSpec {
                obstacle: self.obstacle.clone(),
                terminal: self.terminal.clone(),
            },
        }
    }

    pub fn basis(&self) -> Result<PolynomialBasis> {
        orthonormal_basis(&self.model, self.m)
    }

    /// `a' = a + Σ_{|y| ≥ 1} y ν({y})`.
    pub fn a_prime(&self) -> f64 {
        self.model.a_prime()
    }

    /// Reflected forward paths from `x` on `bundle`, with `A = |η|`
    /// attached, ready for the backward solver.
    pub fn solver_input(&self, bundle: PathBundle, x: f64) -> Result<SolverInput> {
        let reflected = simulate_reflected_bundle(&self.forward, &bundle, x)?;
        let local_time = reflected.iter().map(|r| r.abs_eta.clone()).collect();
        let bundle = attach_increasing_process(bundle, IncreasingSpec::PerPath(local_time))?;
        SolverInput::from_reflected(&bundle, &reflected, self.forward.theta())
    }
}

/// Monte Carlo settings for the surface estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub basis: RegressionBasis,
    pub fixed_point: FixedPointConfig,
    /// Batches for the batch-means standard error; below 2 disables it.
    pub se_batches: usize,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            dt: 1e-2,
            n_paths: 256,
            seed: 1,
            scheme: Scheme::Direct,
            basis: RegressionBasis::default(),
            fixed_point: FixedPointConfig::default(),
            se_batches: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub stderr: f64,
    pub u_minus_h: f64,
    /// `e(x) ∂u/∂x + φ(t, x, u)` at `x = ±θ`, NaN elsewhere.
    pub neumann_residual: f64,
}

/// `u` on a `(t, x)` grid, rows indexed by `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceEstimate {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub points: Vec<Vec<SurfacePoint>>,
}

impl SurfaceEstimate {
    pub fn u_row(&self, row: usize) -> Vec<f64> {
        self.points[row].iter().map(|p| p.u).collect()
    }

    pub fn min_obstacle_gap(&self) -> f64 {
        self.points.iter().flatten().map(|p| p.u_minus_h).fold(f64::INFINITY, f64::min)
    }

    pub fn row_function(&self, row: usize) -> Result<GridFunction> {
        GridFunction::new(self.x_grid.clone(), self.u_row(row))
    }
}

fn validate_axis(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::validation(name, "empty"));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation(name, "must be strictly increasing"));
    }
    Ok(())
}

/// Estimates `u(t, x)` by one solve per grid point. All points share one
/// Brownian path on the finest grid; the Lévy paths of a row are shared
/// across `x`. The `t = T` row is `l(x)` exactly.
pub fn estimate_surface(
    problem: &MarkovianProblem,
    t_grid: &[f64],
    x_grid: &[f64],
    config: &SurfaceConfig,
) -> Result<SurfaceEstimate> {
    validate_axis("t_grid", t_grid)?;
    validate_axis("x_grid", x_grid)?;
    let theta = problem.forward.theta();
    if x_grid.iter().any(|x| x.abs() > theta) {
        return Err(Error::validation("x_grid", format!("must lie in [-{theta}, {theta}]")));
    }
    let t_end = problem.t_end;
    if *t_grid.last().unwrap() > t_end {
        return Err(Error::validation("t_grid", "extends past the horizon"));
    }
    if !(config.dt > 0.0) || config.n_paths == 0 {
        return Err(Error::validation("surface", "need dt > 0 and n_paths >= 1"));
    }
    let t_min = t_grid[0];
    let n_total = ((t_end - t_min) / config.dt).round() as usize;
    let global = if n_total == 0 { None } else { Some(TimeGrid::new(t_min, t_end, n_total)?) };
    let basis = problem.basis()?;
    let common_b = global.map(|g| common_brownian_increments(&g, config.seed));

    // one Lévy bundle per row, on the tail of the global grid
    let bundles: Vec<Option<PathBundle>> = par::map_indexed(t_grid.len(), |row| {
        let t = t_grid[row];
        let Some(global) = global else { return Ok(None) };
        let start = global.index_of(t).ok_or_else(|| {
            Error::GridTooCoarse(format!("t = {t} is not a multiple of dt = {} from {t_min}", config.dt))
        })?;
        if start == global.n_steps() {
            return Ok(None);
        }
        let grid = global.tail(start)?;
        let db = common_b.as_ref().unwrap()[start..].to_vec();
        let seed = derive_seed(config.seed, &[row as u64]);
        simulate_bundle(&problem.model, &basis, &grid, config.n_paths, seed, &BrownianSource::Fixed(Arc::new(db))).map(Some)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let bsde = problem.bsde();
    let n_x = x_grid.len();
    let values: Vec<(f64, f64)> = par::map_indexed(t_grid.len() * n_x, |k| {
        let (row, col) = (k / n_x, k % n_x);
        let (t, x) = (t_grid[row], x_grid[col]);
        let Some(bundle) = &bundles[row] else {
            return Ok(((problem.terminal)(x), 0.0));
        };
        let annotate = |e: Error| Error::AtGridPoint { t, x, source: Box::new(e) };
        let input = problem.solver_input(bundle.clone(), x).map_err(annotate)?;
        let sol = fixed_point_solve(&bsde, &input, &config.basis, config.scheme, &config.fixed_point).map_err(annotate)?;
        let u = sol.y0();
        let stderr = batch_stderr(&bsde, &input, config).map_err(annotate)?;
        Ok((u, stderr))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(t_grid.len());
    for (row, &t) in t_grid.iter().enumerate() {
        let u_row: Vec<f64> = values[row * n_x..(row + 1) * n_x].iter().map(|v| v.0).collect();
        let mut pts = Vec::with_capacity(n_x);
        for (col, &x) in x_grid.iter().enumerate() {
            let (u, stderr) = values[row * n_x + col];
            pts.push(SurfacePoint {
                t,
                x,
                u,
                stderr,
                u_minus_h: u - (problem.obstacle)(t, x),
                neumann_residual: neumann_residual(problem, t, x_grid, &u_row, col),
            });
        }
        points.push(pts);
    }
    Ok(SurfaceEstimate {
        t_grid: t_grid.to_vec(),
        x_grid: x_grid.to_vec(),
        points,
    })
}

fn batch_stderr(bsde: &BsdeProblem, input: &SolverInput, config: &SurfaceConfig) -> Result<f64> {
    let b = config.se_batches;
    let n = input.n_paths();
    if b < 2 || n < 2 * b {
        return Ok(f64::NAN);
    }
    let size = n / b;
    let mut means = Vec::with_capacity(b);
    for k in 0..b {
        let idx: Vec<usize> = (k * size..(k + 1) * size).collect();
        let sub = input.select_paths(&idx);
        means.push(fixed_point_solve(bsde, &sub, &config.basis, config.scheme, &config.fixed_point)?.y0());
    }
    let mean = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    Ok((var / b as f64).sqrt())
}

fn neumann_residual(problem: &MarkovianProblem, t: f64, x_grid: &[f64], u: &[f64], col: usize) -> f64 {
    let theta = problem.forward.theta();
    let n = x_grid.len();
    if n < 2 {
        return f64::NAN;
    }
    let x = x_grid[col];
    let du = if col == 0 && x == -theta {
        (u[1] - u[0]) / (x_grid[1] - x_grid[0])
    } else if col == n - 1 && x == theta {
        (u[n - 1] - u[n - 2]) / (x_grid[n - 1] - x_grid[n - 2])
    } else {
        return f64::NAN;
    };
    problem.forward.boundary_direction(x) * du + (problem.coefficients.phi)(t, x, u[col])
}

/// Values on a uniform, increasing `x` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    x: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    /// Needs at least three nodes for the derivative stencils.
    pub fn new(x: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if x.len() != values.len() {
            return Err(Error::validation("grid function", "x and values differ in length"));
        }
        if x.len() < 3 {
            return Err(Error::GridTooCoarse(format!("{} nodes, need at least 3", x.len())));
        }
        validate_axis("x grid", &x)?;
        let h = x[1] - x[0];
        if x.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
            return Err(Error::validation("x grid", "must be uniform"));
        }
        Ok(GridFunction { x, values })
    }

    pub fn from_fn(x: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = x.iter().map(|&v| f(v)).collect();
        Self::new(x, values)
    }

    pub fn lower(&self) -> f64 {
        self.x[0]
    }

    pub fn upper(&self) -> f64 {
        *self.x.last().unwrap()
    }

    fn spacing(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// Central difference inside, second-order one-sided at the ends.
    pub fn nodal_derivative(&self, i: usize) -> f64 {
        let h = self.spacing();
        let v = &self.values;
        let n = v.len();
        if i == 0 {
            (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
        } else if i == n - 1 {
            (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * h)
        }
    }

    fn cell(&self, x: f64) -> (usize, f64) {
        let h = self.spacing();
        let n = self.x.len();
        let s = ((x - self.x[0]) / h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n - 2);
        (i, s - i as f64)
    }

    /// Cubic Lagrange interpolation on the four nearest nodes (three at
    /// the ends); exact for polynomials of that degree.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        let (i, _) = self.cell(x);
        let lo = if n >= 4 { i.saturating_sub(1).min(n - 4) } else { 0 };
        let hi = (lo + 4).min(n);
        let mut total = 0.0;
        for a in lo..hi {
            let mut w = 1.0;
            for b in lo..hi {
                if a != b {
                    w *= (x - self.x[b]) / (self.x[a] - self.x[b]);
                }
            }
            total += w * self.values[a];
        }
        total
    }

    /// Linear interpolation of the nodal derivatives.
    pub fn derivative(&self, x: f64) -> f64 {
        let (i, frac) = self.cell(x);
        (1.0 - frac) * self.nodal_derivative(i) + frac * self.nodal_derivative(i + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpOperators {
    /// `(y, u¹(x, y))` per atom.
    pub u1: Vec<(f64, f64)>,
    /// `u^(i)` for `i = 1..=m`.
    pub u_i: Vec<f64>,
    /// Atoms whose landing point `x + σ(x) y` was projected onto the grid.
    pub projected: Vec<f64>,
}

/// `u¹(x, y) = u(x + σ(x) y) - u(x) - ∂u/∂x(x) σ(x) y` per atom and
/// `u^(i) = Σ_y u¹(x, y) p_i(y) ν({y})`, plus `σ(x) ∂u/∂x (∫y²ν)^{1/2}`
/// for `i = 1`.
pub fn apply_jump_operators(
    u: &GridFunction,
    model: &LevyMeasureModel,
    basis: &PolynomialBasis,
    sigma: &ReflectedCoefficients,
    x: f64,
) -> Result<JumpOperators> {
    if !basis.matches(model) {
        return Err(Error::BasisMismatch);
    }
    let s = sigma.sigma(x);
    let ux = u.eval(x);
    let dux = u.derivative(x);
    let mut u1 = Vec::with_capacity(model.atoms().len());
    let mut projected = Vec::new();
    for atom in model.atoms() {
        let land = x + s * atom.size;
        let clipped = land.clamp(u.lower(), u.upper());
        if clipped != land {
            projected.push(atom.size);
        }
        u1.push((atom.size, u.eval(clipped) - ux - dux * s * atom.size));
    }
    let mut u_i = Vec::with_capacity(basis.m());
    for i in 1..=basis.m() {
        let mut total = 0.0;
        for (atom, (_, v)) in model.atoms().iter().zip(&u1) {
            total += v * basis.eval_p(i, atom.size)? * atom.rate;
        }
        if i == 1 {
            total += s * dux * model.jump_l2_norm();
        }
        u_i.push(total);
    }
    Ok(JumpOperators { u1, u_i, projected })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZConsistencyReport {
    /// `‖Z_reg - Z_op‖ / ‖Z_op‖` per martingale, over all compared points.
    pub relative_rms: Vec<f64>,
    pub absolute_rms: Vec<f64>,
    pub points: usize,
    /// Compared points whose state sat on `±θ`.
    pub boundary_points: usize,
}

/// Compares regression `Z` along `solution` with the jump operators applied
/// to the surface row at the same time. Only nodes whose time is a surface
/// row are compared, and never the terminal node.
pub fn z_consistency_check(
    problem: &MarkovianProblem,
    surface: &SurfaceEstimate,
    solution: &DiscreteSolution,
    input: &SolverInput,
) -> Result<ZConsistencyReport> {
    let basis = problem.basis()?;
    let grid = solution.grid;
    let m = solution.m().min(basis.m());
    let mut diff2 = vec![0.0; m];
    let mut ref2 = vec![0.0; m];
    let mut points = 0;
    let mut boundary_points = 0;
    for i in 0..grid.n_steps() {
        let t = grid.node(i);
        let Some(row) = surface.t_grid.iter().position(|&s| (s - t).abs() <= 0.5 * grid.dt()) else {
            continue;
        };
        let u = surface.row_function(row)?;
        for p in 0..solution.n_paths() {
            let x = input.states[i][p];
            if problem.forward.on_boundary(x) {
                boundary_points += 1;
            }
            let ops = apply_jump_operators(&u, &problem.model, &basis, &problem.forward, x)?;
            for j in 0..m {
                let d = solution.z[i][j][p] - ops.u_i[j];
                diff2[j] += d * d;
                ref2[j] += ops.u_i[j] * ops.u_i[j];
            }
            points += 1;
        }
    }
    let count = points.max(1) as f64;
    Ok(ZConsistencyReport {
        relative_rms: diff2
            .iter()
            .zip(&ref2)
            .map(|(d, r)| if *r > 0.0 { (d / r).sqrt() } else { (d / count).sqrt() })
            .collect(),
        absolute_rms: diff2.iter().map(|d| (d / count).sqrt()).collect(),
        points,
        boundary_points,
    })
}

/// Settings of the single-atom Poisson example: `ν = α δ_β`, drift `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonExample {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub m: usize,
    pub theta: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub scheme: Scheme,
}

impl Default for PoissonExample {
    fn default() -> Self {
        PoissonExample {
            alpha: 2.0,
            beta: 0.5,
            a: 0.2,
            m: 3,
            theta: 1.0,
            t_end: 1.0,
            n_steps: 200,
            n_paths: 2000,
            seed: 7,
            x0: 0.0,
            scheme: Scheme::Penalized { n: 50.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonExampleReport {
    pub effective_dim: usize,
    /// `H^(i) ≡ 0` for `i ≥ 2` on every path, compared exactly.
    pub higher_teugels_zero: bool,
    /// `max |H^(1) - sign(β)(N - αt)/√α|`.
    pub h1_gap: f64,
    /// `max |H^(1) - β(N - αt)/√α|`; zero only when `|β| = 1`.
    pub h1_gap_beta_scaled: f64,
    pub a_prime: f64,
    pub generic_y0: f64,
    pub specialized_y0: f64,
    /// Largest `|Y_generic - Y_specialized|` over nodes and paths.
    pub max_y_gap: f64,
    pub max_z_gap: f64,
}

impl MarkovianProblem {
    /// The data used with the Poisson example: `σ(x) = (1 - |x|/θ)/2`,
    /// `l(x) = (1 - (x/θ)²)/2`, `h(t, x) = l(x) - 0.2 (T - t)`,
    /// `f = -y/2 + z_1/5`, `φ = -y`, `g = cos(x)/5`.
    pub fn poisson_example(alpha: f64, beta: f64, a: f64, m: usize, theta: f64, t_end: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::validation("alpha", "must be > 0"));
        }
        let model = LevyMeasureModel::new(vec![JumpAtom::new(beta, alpha)], 0.0, a - alpha * beta)?;
        let forward = ReflectedCoefficients::new(
            theta,
            Arc::new(move |x: f64| 0.5 * (1.0 - x.abs() / theta)),
            0.5 / theta,
        )?;
        let bsde = scenarios::problem("poisson-example", t_end, Some(theta), None)?;
        MarkovianProblem::new(
            bsde.obstacle.terminal,
            bsde.coefficients,
            bsde.obstacle.obstacle,
            forward,
            model,
            m,
            t_end,
        )
    }
}

/// Builds the Poisson example, checks its martingales against the
/// compensated counting process, and solves it with the generic solver and
/// with [`solve_single_martingale`] on the same paths.
pub fn example_poisson(cfg: &PoissonExample) -> Result<(MarkovianProblem, PoissonExampleReport)> {
    let problem = MarkovianProblem::poisson_example(cfg.alpha, cfg.beta, cfg.a, cfg.m, cfg.theta, cfg.t_end)?;
    let basis = problem.basis()?;
    let grid = TimeGrid::new(0.0, cfg.t_end, cfg.n_steps)?;
    let bundle = simulate_bundle(&problem.model, &basis, &grid, cfg.n_paths, cfg.seed, &BrownianSource::Common)?;

    let scale = 1.0 / cfg.alpha.sqrt();
    let mut higher_teugels_zero = true;
    let mut h1_gap: f64 = 0.0;
    let mut h1_gap_beta_scaled: f64 = 0.0;
    for path in &bundle.paths {
        higher_teugels_zero &= path.teugels[1..].iter().flatten().all(|&h| h == 0.0);
        for node in 0..grid.n_nodes() {
            let comp = path.jump_count(node) as f64 - cfg.alpha * grid.elapsed(node);
            let h1 = path.teugels[0][node];
            h1_gap = h1_gap.max((h1 - cfg.beta.signum() * scale * comp).abs());
            h1_gap_beta_scaled = h1_gap_beta_scaled.max((h1 - cfg.beta * scale * comp).abs());
        }
    }

    let input = problem.solver_input(bundle.clone(), cfg.x0)?;
    let basis_reg = RegressionBasis::default();
    let generic = fixed_point_solve(&problem.bsde(), &input, &basis_reg, cfg.scheme, &FixedPointConfig::default())?;

    // compensated counts straight from the jump records
    let dn: Vec<Vec<f64>> = (0..grid.n_steps())
        .map(|s| {
            bundle
                .paths
                .iter()
                .map(|p| cfg.beta.signum() * scale * (p.jumps[s].len() as f64 - cfg.alpha * grid.dt()))
                .collect()
        })
        .collect();
    let special = solve_single_martingale(&problem.bsde(), &input, &dn, &basis_reg, cfg.scheme)?;

    let mut max_y_gap: f64 = 0.0;
    let mut max_z_gap: f64 = 0.0;
    for i in 0..grid.n_nodes() {
        for p in 0..cfg.n_paths {
            max_y_gap = max_y_gap.max((generic.y[i][p] - special.y[i][p]).abs());
            max_z_gap = max_z_gap.max((generic.z[i][0][p] - special.z[i][0][p]).abs());
        }
    }
    let report = PoissonExampleReport {
        effective_dim: basis.effective_dim(),
        higher_teugels_zero,
        h1_gap,
        h1_gap_beta_scaled,
        a_prime: problem.a_prime(),
        generic_y0: generic.y0(),
        specialized_y0: special.y0(),
        max_y_gap,
        max_z_gap,
    };
    Ok((problem, report))
}

/// Scalar recursion with one martingale whose increments are given
/// directly, `dn[step][path]`. `g` is evaluated on the pass's own values.
pub fn solve_single_martingale(
    problem: &BsdeProblem,
    input: &SolverInput,
    dn: &[Vec<f64>],
    basis: &RegressionBasis,
    scheme: Scheme,
) -> Result<DiscreteSolution> {
    let grid = input.grid;
    let n = grid.n_steps();
    let paths = input.n_paths();
    let dt = grid.dt();
    let basis = match input.boundary_theta {
        Some(theta) if basis.boundary_theta.is_none() => basis.with_boundary(theta),
        _ => *basis,
    };
    let c = &problem.coefficients;
    let mut y = vec![vec![0.0; paths]; n + 1];
    let mut z = vec![vec![vec![0.0; paths]; 1]; n + 1];
    let mut k = vec![vec![0.0; paths]; n + 1];
    let mut s = vec![vec![0.0; paths]; n + 1];
    for p in 0..paths {
        let x = input.states[n][p];
        y[n][p] = (problem.obstacle.terminal)(x);
        s[n][p] = (problem.obstacle.obstacle)(grid.t_end(), x);
    }
    let mut push = vec![vec![0.0; paths]; n];
    for i in (0..n).rev() {
        let t = grid.node(i);
        let proj = Projector::new(&basis, &input.states[i], i)?;
        let fitted = proj.project(&y[i + 1]);
        let w: Vec<f64> = (0..paths).map(|p| (y[i + 1][p] - fitted[p]) * dn[i][p]).collect();
        z[i][0] = proj.project(&w).into_iter().map(|v| v / dt).collect();
        let r: Vec<f64> = (0..paths)
            .map(|p| {
                let x = input.states[i][p];
                let y1 = y[i + 1][p];
                let mut r = y1 + (c.f)(t, x, y1, &[z[i][0][p]]) * dt;
                if input.da[i][p] != 0.0 {
                    r += (c.phi)(t, x, y1) * input.da[i][p];
                }
                if input.db[i][p] != 0.0 {
                    r += (c.g)(grid.node(i + 1), input.states[i + 1][p], y1, &[z[i + 1][0][p]]) * input.db[i][p];
                }
                r
            })
            .collect();
        let y_hat = proj.project(&r);
        for p in 0..paths {
            let obstacle = (problem.obstacle.obstacle)(t, input.states[i][p]);
            s[i][p] = obstacle;
            let yh = y_hat[p];
            if yh >= obstacle {
                y[i][p] = yh;
            } else {
                match scheme {
                    Scheme::Direct => {
                        y[i][p] = obstacle;
                        push[i][p] = obstacle - yh;
                    }
                    Scheme::Penalized { n: pen } => {
                        let wgt = pen * dt;
                        y[i][p] = (yh + wgt * obstacle) / (1.0 + wgt);
                        push[i][p] = wgt * (obstacle - y[i][p]);
                    }
                }
            }
        }
    }
    for i in 0..n {
        for p in 0..paths {
            k[i + 1][p] = k[i][p] + push[i][p];
        }
    }
    Ok(DiscreteSolution {
        grid,
        scheme,
        iterations: 1,
        contraction_ratios: Vec::new(),
        final_delta: None,
        y,
        z,
        k,
        obstacle: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn linear_function_has_zero_remainder() {
        let model = LevyMeasureModel::new(vec![JumpAtom::new(0.3, 1.0), JumpAtom::new(-0.2, 2.0)], 0.0, 0.0).unwrap();
        let basis = orthonormal_basis(&model, 2).unwrap();
        let u = GridFunction::from_fn(uniform(21, -1.0, 1.0), |x| 3.0 * x).unwrap();
        let sigma = ReflectedCoefficients::constant(1.0, 1.0).unwrap();
        let ops = apply_jump_operators(&u, &model, &basis, &sigma, 0.1).unwrap();
        assert!(ops.u1.iter().all(|(_, v)| v.abs() < 1e-12));
    }

    #[test]
    fn quadratic_remainder_is_jump_squared() {
        let model = LevyMeasureModel::new(vec![JumpAtom::new(0.5, 2.0)], 0.0, 0.0).unwrap();
        let basis = orthonormal_basis(&model, 1).unwrap();
        let u = GridFunction::from_fn(uniform(41, -2.0, 2.0), |x| x * x).unwrap();
        let sigma = ReflectedCoefficients::constant(2.0, 1.0).unwrap();
        let x = 0.3;
        let ops = apply_jump_operators(&u, &model, &basis, &sigma, x).unwrap();
        assert!((ops.u1[0].1 - 0.25).abs() < 1e-12);
        let p1 = basis.eval_p(1, 0.5).unwrap();
        let expected = 0.25 * p1 * 2.0 + 2.0 * x * model.jump_l2_norm();
        assert!((ops.u_i[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        assert!(matches!(
            GridFunction::new(vec![0.0, 1.0], vec![0.0, 1.0]),
            Err(Error::GridTooCoarse(_))
        ));
    }

    #[test]
    fn terminal_mismatch_is_rejected() {
        let model = LevyMeasureModel::new(vec![JumpAtom::new(0.5, 1.0)], 0.0, 0.0).unwrap();
        let r = MarkovianProblem::new(
            Arc::new(|_| 0.0),
            CoefficientSpec::default(),
            Arc::new(|_, _| 1.0),
            ReflectedCoefficients::constant(1.0, 0.0).unwrap(),
            model,
            1,
            1.0,
        );
        assert!(r.unwrap_err().is_validation());
    }

    #[test]
    fn poisson_example_reduces_to_scalar_solver() {
        let cfg = PoissonExample {
            n_paths: 300,
            n_steps: 50,
            ..Default::default()
        };
        let (_, report) = example_poisson(&cfg).unwrap();
        assert_eq!(report.effective_dim, 1);
        assert!(report.higher_teugels_zero);
        assert!(report.h1_gap < 1e-12);
        assert!(report.max_y_gap < 1e-10, "{}", report.max_y_gap);
    }
}
