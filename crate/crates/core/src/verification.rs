//! Numerical checks of the structural results: the comparison theorem and
//! its multiplicative kernel, the compensation identity for jump sums, and
//! the defining properties of a discrete reflected solution.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_basis::{LevyMeasureModel, PolynomialBasis};
use crate::path_engine::{PathBundle, SamplePath, TimeGrid};
use crate::regression::RegressionBasis;
use crate::solver::{fixed_point_solve, BsdeProblem, DiscreteSolution, FixedPointConfig, Scheme, SolverInput};

/// Discrete stochastic exponential `Γ_{i+1} = Γ_i (1 + ΔX_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelPath {
    pub gamma: Vec<f64>,
    /// Steps whose factor `1 + ΔX_i` is not positive.
    pub nonpositive_steps: Vec<usize>,
}

impl KernelPath {
    pub fn is_positive(&self) -> bool {
        self.nonpositive_steps.is_empty()
    }
}

/// `ΔX_i = a_i Δt + b_i ΔA_i + Σ_j β^j_i ΔH^(j)_i` from raw increments.
/// `beta[j][step]` and `dh[j][step]`.
pub fn doleans_dade_increments(a: &[f64], b: &[f64], beta: &[Vec<f64>], da: &[f64], dh: &[Vec<f64>], dt: f64) -> KernelPath {
    let n = a.len();
    let mut gamma = Vec::with_capacity(n + 1);
    gamma.push(1.0);
    let mut nonpositive_steps = Vec::new();
    for i in 0..n {
        let mut dx = a[i] * dt + b[i] * da[i];
        for (bj, hj) in beta.iter().zip(dh) {
            dx += bj[i] * hj[i];
        }
        let factor = 1.0 + dx;
        if factor <= 0.0 {
            nonpositive_steps.push(i);
        }
        gamma.push(gamma[i] * factor);
    }
    KernelPath { gamma, nonpositive_steps }
}

/// Kernel along one simulated path; coefficient series are per step.
pub fn doleans_dade(a: &[f64], b: &[f64], beta: &[Vec<f64>], path: &SamplePath, grid: &TimeGrid) -> Result<KernelPath> {
    let n = grid.n_steps();
    if a.len() != n || b.len() != n || beta.iter().any(|bj| bj.len() != n) {
        return Err(Error::validation("kernel coefficients", format!("need {n} values per series")));
    }
    if beta.len() > path.teugels.len() {
        return Err(Error::IndexOutOfRange {
            index: beta.len(),
            max: path.teugels.len(),
        });
    }
    let da: Vec<f64> = path.increasing.windows(2).map(|w| w[1] - w[0]).collect();
    let dh: Vec<Vec<f64>> = (1..=beta.len())
        .map(|j| (0..n).map(|s| path.teugels_increment(j, s)).collect())
        .collect();
    Ok(doleans_dade_increments(a, b, beta, &da, &dh, grid.dt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `min_p (Y¹ - Y²)` per node.
    pub node_min: Vec<f64>,
    pub min_difference: f64,
    /// Largest shift of `Y¹ - Y²` over nodes and paths when the regression
    /// basis is doubled.
    pub eps_reg: f64,
    pub violations: usize,
    pub worst_violation: f64,
    pub kernel_positive: bool,
    pub hypotheses_verified: bool,
    pub y0_difference: f64,
}

impl ComparisonReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den != 0.0 {
        num / den
    } else {
        0.0
    }
}

fn comparison_hypotheses(first: &BsdeProblem, second: &BsdeProblem, input: &SolverInput) -> bool {
    let last = input.grid.n_steps();
    let terminal_ok = input.states[last]
        .iter()
        .all(|&x| (first.obstacle.terminal)(x) >= (second.obstacle.terminal)(x));
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0a1);
    let m = input.m();
    let mut z = vec![0.0; m];
    let mut driver_ok = true;
    for _ in 0..256 {
        let node = rng.random_range(0..input.grid.n_nodes());
        let x = input.states[node][rng.random_range(0..input.n_paths())];
        let t = input.grid.node(node);
        let y = rng.random_range(-10.0..10.0);
        z.iter_mut().for_each(|v| *v = rng.random_range(-10.0..10.0));
        if (first.coefficients.f)(t, x, y, &z) < (second.coefficients.f)(t, x, y, &z) {
            driver_ok = false;
            break;
        }
    }
    terminal_ok && driver_ok
}

/// Solves both problems on the same input and checks `Y¹ ≥ Y²`.
pub fn check_comparison(
    first: &BsdeProblem,
    second: &BsdeProblem,
    input: &SolverInput,
    basis: &RegressionBasis,
    scheme: Scheme,
    config: &FixedPointConfig,
) -> Result<ComparisonReport> {
    let hypotheses_verified = comparison_hypotheses(first, second, input);
    let y1 = fixed_point_solve(first, input, basis, scheme, config)?;
    let y2 = fixed_point_solve(second, input, basis, scheme, config)?;
    let doubled = basis.doubled();
    let y1d = fixed_point_solve(first, input, &doubled, scheme, config)?;
    let y2d = fixed_point_solve(second, input, &doubled, scheme, config)?;

    let n_nodes = input.grid.n_nodes();
    let n_paths = input.n_paths();
    let mut eps_reg: f64 = 0.0;
    let mut node_min = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let mut lo = f64::INFINITY;
        for p in 0..n_paths {
            let d = y1.y[i][p] - y2.y[i][p];
            let dd = y1d.y[i][p] - y2d.y[i][p];
            eps_reg = eps_reg.max((d - dd).abs());
            lo = lo.min(d);
        }
        node_min.push(lo);
    }
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for row in y1.y.iter().zip(&y2.y) {
        for (a, b) in row.0.iter().zip(row.1) {
            let d = a - b;
            if d < -eps_reg - 1e-12 {
                violations += 1;
                worst = worst.max(-d);
            }
        }
    }
    let kernel_positive = comparison_kernels(first, input, &y1, &y2).iter().all(KernelPath::is_positive);
    Ok(ComparisonReport {
        min_difference: node_min.iter().cloned().fold(f64::INFINITY, f64::min),
        node_min,
        eps_reg,
        violations,
        worst_violation: worst,
        kernel_positive,
        hypotheses_verified,
        y0_difference: y1.y0() - y2.y0(),
    })
}

/// Linearization kernels of the comparison argument, one per path: `a` and
/// `b` are difference quotients of `f¹` and `φ` in `y`, `β^j` swaps one `z`
/// component at a time.
pub fn comparison_kernels(
    first: &BsdeProblem,
    input: &SolverInput,
    y1: &DiscreteSolution,
    y2: &DiscreteSolution,
) -> Vec<KernelPath> {
    let grid = input.grid;
    let n = grid.n_steps();
    let m = input.m();
    let f = &first.coefficients.f;
    let phi = &first.coefficients.phi;
    (0..input.n_paths())
        .map(|p| {
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            let mut beta = vec![vec![0.0; n]; m];
            let mut z_tilde = vec![0.0; m];
            let mut z_one = vec![0.0; m];
            for i in 0..n {
                let t = grid.node(i);
                let x = input.states[i][p];
                let (ya, yb) = (y1.y[i + 1][p], y2.y[i + 1][p]);
                for (zj, col) in z_one.iter_mut().zip(&y1.z[i]) {
                    *zj = col[p];
                }
                a[i] = ratio(f(t, x, ya, &z_one) - f(t, x, yb, &z_one), ya - yb);
                b[i] = ratio(phi(t, x, ya) - phi(t, x, yb), ya - yb);
                z_tilde.copy_from_slice(&z_one);
                for j in 0..m {
                    let before = f(t, x, yb, &z_tilde);
                    z_tilde[j] = y2.z[i][j][p];
                    let after = f(t, x, yb, &z_tilde);
                    beta[j][i] = ratio(before - after, y1.z[i][j][p] - y2.z[i][j][p]);
                }
            }
            let da: Vec<f64> = input.da.iter().map(|s| s[p]).collect();
            let dh: Vec<Vec<f64>> = input.dh.iter().map(|hj| hj.iter().map(|s| s[p]).collect()).collect();
            doleans_dade_increments(&a, &b, &beta, &da, &dh, grid.dt())
        })
        .collect()
}

/// Weighting of `⟨c(s,·), p_i⟩` in the compensation identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerProductConvention {
    /// Quadrature against `ν`.
    Levy,
    /// Quadrature against `μ = y² ν + σ₀² δ₀`.
    Mu,
}

/// `⟨c, p_i⟩` under `convention`, exact on the atoms.
pub fn jump_coefficient(
    model: &LevyMeasureModel,
    basis: &PolynomialBasis,
    convention: InnerProductConvention,
    i: usize,
    c: impl Fn(f64) -> f64,
) -> Result<f64> {
    let mut total = 0.0;
    for atom in model.atoms() {
        let weight = match convention {
            InnerProductConvention::Levy => atom.rate,
            InnerProductConvention::Mu => atom.rate * atom.size * atom.size,
        };
        total += weight * c(atom.size) * basis.eval_p(i, atom.size)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConventionAudit {
    /// `max_k |Σ_i ⟨c, p_i⟩ p_i(y_k) - c(y_k)|` under each convention.
    pub levy_error: f64,
    pub mu_error: f64,
    pub chosen: InnerProductConvention,
}

const AUDIT_TOL: f64 = 1e-10;

fn reconstruction_error(
    model: &LevyMeasureModel,
    basis: &PolynomialBasis,
    convention: InnerProductConvention,
    c: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    let coeffs = (1..=basis.m())
        .map(|i| jump_coefficient(model, basis, convention, i, c))
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for atom in model.atoms() {
        let mut rebuilt = 0.0;
        for (i, ci) in coeffs.iter().enumerate() {
            rebuilt += ci * basis.eval_p(i + 1, atom.size)?;
        }
        worst = worst.max((rebuilt - c(atom.size)).abs());
    }
    Ok(worst)
}

/// Reconstructs `c` on the atoms from its coefficients under both
/// conventions. The `ν` weighting is preferred when both pass.
pub fn audit_convention(model: &LevyMeasureModel, basis: &PolynomialBasis, c: impl Fn(f64) -> f64) -> Result<ConventionAudit> {
    let levy_error = reconstruction_error(model, basis, InnerProductConvention::Levy, &c)?;
    let mu_error = reconstruction_error(model, basis, InnerProductConvention::Mu, &c)?;
    let chosen = if levy_error <= AUDIT_TOL || levy_error <= mu_error {
        InnerProductConvention::Levy
    } else {
        InnerProductConvention::Mu
    };
    Ok(ConventionAudit {
        levy_error,
        mu_error,
        chosen,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompensationReport {
    pub convention: InnerProductConvention,
    /// Jump sum minus reconstruction, per path.
    pub gaps: Vec<f64>,
    pub mean_gap: f64,
    pub sd_gap: f64,
    pub max_abs_gap: f64,
    pub mean_jump_sum: f64,
    /// `∫∫ c dν ds` averaged over paths (deterministic when `c` is).
    pub compensator: f64,
}

impl CompensationReport {
    /// `|mean| ≤ 3 sd / √n`.
    pub fn mean_zero(&self) -> bool {
        self.mean_gap.abs() <= 3.0 * self.sd_gap / (self.gaps.len() as f64).sqrt() + 1e-15
    }
}

/// Compares `Σ_{t ≤ s ≤ T} c(s, ΔL_s)` from the stored jumps with
/// `Σ_i ∫ ⟨c(s,·), p_i⟩ dH^(i) + ∫∫ c dν ds`, both from node `start` on.
/// Time integrals take `c` at the left end of each step, so the identity is
/// exact per path when `c` does not depend on `s`.
///
/// `bound_b` is the constant in `|c(s, y)| ≤ b (y² ∧ |y|)`, checked on the
/// atoms at every node.
pub fn check_compensation(
    model: &LevyMeasureModel,
    basis: &PolynomialBasis,
    bundle: &PathBundle,
    start: usize,
    c: impl Fn(f64, f64) -> f64 + Sync,
    bound_b: f64,
    convention: InnerProductConvention,
) -> Result<CompensationReport> {
    if !basis.matches(model) {
        return Err(Error::BasisMismatch);
    }
    let grid = bundle.grid;
    let n = grid.n_steps();
    if start > n {
        return Err(Error::IndexOutOfRange { index: start, max: n });
    }
    for i in start..=n {
        let s = grid.node(i);
        for atom in model.atoms() {
            let y = atom.size;
            if c(s, y).abs() > bound_b * (y * y).min(y.abs()) * (1.0 + 1e-12) {
                return Err(Error::validation(
                    "compensation integrand",
                    format!("|c({s}, {y})| exceeds b (y² ∧ |y|) with b = {bound_b}"),
                ));
            }
        }
    }
    let m = basis.m();
    let dt = grid.dt();
    // per-step coefficients and compensator, shared by all paths
    let mut coeffs = vec![vec![0.0; m]; n];
    let mut compensator = 0.0;
    for (step, row) in coeffs.iter_mut().enumerate().skip(start) {
        let s = grid.node(step);
        for (i, v) in row.iter_mut().enumerate() {
            *v = jump_coefficient(model, basis, convention, i + 1, |y| c(s, y))?;
        }
        compensator += dt * model.atoms().iter().map(|a| a.rate * c(s, a.size)).sum::<f64>();
    }
    let t_start = grid.node(start);
    let mut gaps = Vec::with_capacity(bundle.n_paths());
    let mut jump_total = 0.0;
    for path in &bundle.paths {
        let lhs: f64 = path.jumps[start..]
            .iter()
            .flatten()
            .filter(|j| j.time >= t_start)
            .map(|j| c(j.time, j.size))
            .sum();
        let mut rhs = compensator;
        for (step, row) in coeffs.iter().enumerate().skip(start) {
            for (i, ci) in row.iter().enumerate() {
                if *ci != 0.0 {
                    rhs += ci * path.teugels_increment(i + 1, step);
                }
            }
        }
        jump_total += lhs;
        gaps.push(lhs - rhs);
    }
    let n_paths = gaps.len() as f64;
    let mean_gap = gaps.iter().sum::<f64>() / n_paths;
    let sd_gap = if gaps.len() > 1 {
        (gaps.iter().map(|g| (g - mean_gap).powi(2)).sum::<f64>() / (n_paths - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(CompensationReport {
        convention,
        max_abs_gap: gaps.iter().map(|g| g.abs()).fold(0.0, f64::max),
        gaps,
        mean_gap,
        sd_gap,
        mean_jump_sum: jump_total / n_paths,
        compensator,
    })
}

/// Tolerances for [`property_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyTolerances {
    pub obstacle: f64,
    pub skorokhod: f64,
    pub k_monotone: f64,
}

impl PropertyTolerances {
    pub fn for_scheme(scheme: Scheme) -> Self {
        match scheme {
            Scheme::Direct => PropertyTolerances {
                obstacle: 0.0,
                skorokhod: 0.0,
                k_monotone: 0.0,
            },
            Scheme::Penalized { .. } => PropertyTolerances {
                obstacle: 1e-2,
                skorokhod: 1e-2,
                k_monotone: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub pass: bool,
    pub worst: f64,
    /// `None` for purely informational entries.
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub properties: BTreeMap<String, PropertyOutcome>,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.properties.values().all(|p| p.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.properties
            .iter()
            .filter(|(_, p)| !p.pass)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

/// Evaluates the defining properties of a reflected solution on its grid.
pub fn property_suite(solution: &DiscreteSolution, tol: &PropertyTolerances) -> PropertyReport {
    let mut properties = BTreeMap::new();
    let mut put = |name: &str, worst: f64, tolerance: Option<f64>| {
        let pass = worst.is_finite() && tolerance.is_none_or(|t| worst <= t);
        properties.insert(name.to_string(), PropertyOutcome { pass, worst, tolerance });
    };

    let finite = solution
        .y
        .iter()
        .chain(&solution.k)
        .flatten()
        .chain(solution.z.iter().flatten().flatten())
        .all(|v| v.is_finite());
    put("finite", if finite { 0.0 } else { f64::INFINITY }, Some(0.0));

    let k_start = solution.k[0].iter().map(|k| k.abs()).fold(0.0, f64::max);
    put("k_starts_at_zero", k_start, Some(0.0));

    let mut k_drop: f64 = 0.0;
    for w in solution.k.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            k_drop = k_drop.max(a - b);
        }
    }
    put("k_monotone", k_drop, Some(tol.k_monotone));

    let mut below: f64 = 0.0;
    for (ys, ss) in solution.y.iter().zip(&solution.obstacle) {
        for (y, s) in ys.iter().zip(ss) {
            below = below.max(s - y);
        }
    }
    put("obstacle", below, Some(tol.obstacle));

    let skorokhod = solution
        .skorokhod_residual_per_path()
        .iter()
        .map(|r| r.abs())
        .fold(0.0, f64::max);
    put("skorokhod", skorokhod, Some(tol.skorokhod));

    put("a_priori", solution.a_priori_functional(), None);

    PropertyReport { properties }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_basis::{orthonormal_basis, JumpAtom};
    use crate::path_engine::{simulate_bundle, BrownianSource};

    #[test]
    fn zero_coefficients_give_unit_kernel() {
        let k = doleans_dade_increments(&[0.0; 5], &[0.0; 5], &[vec![0.0; 5]], &[0.1; 5], &[vec![0.3; 5]], 0.1);
        assert!(k.gamma.iter().all(|&g| g == 1.0));
        assert!(k.is_positive());
    }

    #[test]
    fn constant_rate_kernel_tends_to_exponential() {
        let n = 10_000;
        let k = doleans_dade_increments(&vec![1.0; n], &vec![0.0; n], &[], &vec![0.0; n], &[], 1.0 / n as f64);
        assert!((k.gamma[n] - std::f64::consts::E).abs() < 2e-4);
    }

    #[test]
    fn large_negative_jump_is_flagged() {
        let k = doleans_dade_increments(&[0.0; 3], &[0.0; 3], &[vec![1.5; 3]], &[0.0; 3], &[vec![0.0, -1.0, 0.0]], 0.1);
        assert_eq!(k.nonpositive_steps, vec![1]);
    }

    #[test]
    fn levy_convention_reconstructs_on_atoms() {
        let model = LevyMeasureModel::new(vec![JumpAtom::new(2.0, 1.5)], 0.0, 0.3).unwrap();
        let basis = orthonormal_basis(&model, 1).unwrap();
        let audit = audit_convention(&model, &basis, |y| y * y).unwrap();
        assert!(audit.levy_error < 1e-12);
        assert!(audit.mu_error > 1.0);
        assert_eq!(audit.chosen, InnerProductConvention::Levy);
    }

    #[test]
    fn zero_integrand_has_zero_gap() {
        let model = LevyMeasureModel::new(vec![JumpAtom::new(1.0, 2.0)], 0.0, 0.0).unwrap();
        let basis = orthonormal_basis(&model, 1).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let bundle = simulate_bundle(&model, &basis, &grid, 50, 4, &BrownianSource::Independent).unwrap();
        let r = check_compensation(&model, &basis, &bundle, 0, |_, _| 0.0, 1.0, InnerProductConvention::Levy).unwrap();
        assert!(r.gaps.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn integrand_bound_is_enforced() {
        let model = LevyMeasureModel::new(vec![JumpAtom::new(2.0, 1.0)], 0.0, 0.0).unwrap();
        let basis = orthonormal_basis(&model, 1).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let bundle = simulate_bundle(&model, &basis, &grid, 2, 4, &BrownianSource::Independent).unwrap();
        let r = check_compensation(&model, &basis, &bundle, 0, |_, y| y * y, 1.0, InnerProductConvention::Levy);
        assert!(r.unwrap_err().is_validation());
    }
}
