//! Reflected forward SDE `X = x + ∫σ(X_{r-}) dL_r + η` on `[-θ, θ]`.
//!
//! In one dimension the Skorokhod reflection on an interval is the
//! projection, so each Euler step is projected back onto `[-θ, θ]` and the
//! distance moved is booked as local time.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy_basis::LevyMeasureModel;
use crate::par;
use crate::path_engine::{PathBundle, SamplePath};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const SPOT_CHECK_POINTS: usize = 1001;

#[derive(Clone)]
pub struct ReflectedCoefficients {
    theta: f64,
    sigma: ScalarFn,
    lipschitz_k: f64,
}

impl fmt::Debug for ReflectedCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReflectedCoefficients")
            .field("theta", &self.theta)
            .field("lipschitz_k", &self.lipschitz_k)
            .finish_non_exhaustive()
    }
}

impl ReflectedCoefficients {
    /// Checks `θ > 0`, boundedness of `σ` and the declared Lipschitz constant
    /// on a 1001-point grid of `[-θ, θ]`.
    pub fn new(theta: f64, sigma: ScalarFn, lipschitz_k: f64) -> Result<Self> {
        if !theta.is_finite() || theta <= 0.0 {
            return Err(Error::validation("theta", format!("must be > 0, got {theta}")));
        }
        if !lipschitz_k.is_finite() || lipschitz_k < 0.0 {
            return Err(Error::validation("lipschitz_k", "must be finite and >= 0"));
        }
        let coeffs = ReflectedCoefficients {
            theta,
            sigma,
            lipschitz_k,
        };
        let xs = coeffs.spot_grid();
        let values: Vec<f64> = xs.iter().map(|&x| (coeffs.sigma)(x)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("sigma", "not finite on [-θ, θ]"));
        }
        let h = xs[1] - xs[0];
        for (i, w) in values.windows(2).enumerate() {
            let slope = (w[1] - w[0]).abs() / h;
            if slope > lipschitz_k * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::validation(
                    "sigma",
                    format!("Lipschitz bound {lipschitz_k} violated near x = {} (slope {slope})", xs[i]),
                ));
            }
        }
        Ok(coeffs)
    }

    pub fn constant(theta: f64, value: f64) -> Result<Self> {
        Self::new(theta, Arc::new(move |_| value), 0.0)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lipschitz_k(&self) -> f64 {
        self.lipschitz_k
    }

    pub fn project(&self, x: f64) -> f64 {
        x.clamp(-self.theta, self.theta)
    }

    /// `σ(pr(x))`, the extension outside the interval.
    pub fn sigma(&self, x: f64) -> f64 {
        (self.sigma)(self.project(x))
    }

    pub fn sigma_fn(&self) -> ScalarFn {
        Arc::clone(&self.sigma)
    }

    /// Inward normal direction: `e(-θ) = 1`, `e(θ) = -1`, linear in between.
    pub fn boundary_direction(&self, x: f64) -> f64 {
        -self.project(x) / self.theta
    }

    pub fn on_boundary(&self, x: f64) -> bool {
        x.abs() >= self.theta
    }

    fn spot_grid(&self) -> Vec<f64> {
        let h = 2.0 * self.theta / (SPOT_CHECK_POINTS - 1) as f64;
        (0..SPOT_CHECK_POINTS).map(|i| -self.theta + i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReflectedPath {
    pub x: Vec<f64>,
    /// Signed reflection term `η`.
    pub eta: Vec<f64>,
    /// Total variation `|η|`, nondecreasing.
    pub abs_eta: Vec<f64>,
    pub boundary_hits: Vec<usize>,
    /// Steps where the projection was triggered by a jump larger than one.
    pub large_jump_projections: Vec<usize>,
}

/// Projected Euler scheme driven by the grid increments of `L`.
pub fn simulate_reflected(coeffs: &ReflectedCoefficients, path: &SamplePath, x0: f64) -> Result<ReflectedPath> {
    if !(x0.abs() <= coeffs.theta) {
        return Err(Error::validation(
            "x0",
            format!("{x0} lies outside [-{}, {}]", coeffs.theta, coeffs.theta),
        ));
    }
    let n = path.n_nodes();
    let mut x = Vec::with_capacity(n);
    let mut eta = Vec::with_capacity(n);
    let mut abs_eta = Vec::with_capacity(n);
    let mut boundary_hits = Vec::new();
    let mut large_jump_projections = Vec::new();
    x.push(x0);
    eta.push(0.0);
    abs_eta.push(0.0);
    if coeffs.on_boundary(x0) {
        boundary_hits.push(0);
    }
    for step in 0..n - 1 {
        let xi = x[step];
        let dl = path.levy[step + 1] - path.levy[step];
        let free = xi + coeffs.sigma(xi) * dl;
        let next = coeffs.project(free);
        let push = next - free;
        x.push(next);
        eta.push(eta[step] + push);
        abs_eta.push(abs_eta[step] + push.abs());
        if coeffs.on_boundary(next) {
            boundary_hits.push(step + 1);
        }
        if push != 0.0 && path.jumps[step].iter().any(|j| j.size.abs() > 1.0) {
            large_jump_projections.push(step);
        }
    }
    Ok(ReflectedPath {
        x,
        eta,
        abs_eta,
        boundary_hits,
        large_jump_projections,
    })
}

/// Reflected paths for every path of a bundle, all started at `x0`.
pub fn simulate_reflected_bundle(coeffs: &ReflectedCoefficients, bundle: &PathBundle, x0: f64) -> Result<Vec<ReflectedPath>> {
    par::map_indexed(bundle.n_paths(), |p| simulate_reflected(coeffs, &bundle.paths[p], x0))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub checked_atoms: usize,
    pub worst_violation: f64,
    pub worst_x: Option<f64>,
    pub worst_jump: Option<f64>,
}

impl InvarianceReport {
    pub fn holds(&self) -> bool {
        self.worst_violation == 0.0
    }
}

/// Checks `x + yσ(x) ∈ [-θ, θ]` for every atom `|y| ≤ 1` over 1001 points.
pub fn validate_invariance(coeffs: &ReflectedCoefficients, model: &LevyMeasureModel) -> InvarianceReport {
    let mut report = InvarianceReport {
        checked_atoms: 0,
        worst_violation: 0.0,
        worst_x: None,
        worst_jump: None,
    };
    let xs = coeffs.spot_grid();
    for atom in model.atoms().iter().filter(|a| a.size.abs() <= 1.0) {
        report.checked_atoms += 1;
        for &x in &xs {
            let landed = x + atom.size * coeffs.sigma(x);
            let violation = (landed.abs() - coeffs.theta).max(0.0);
            if violation > report.worst_violation {
                report.worst_violation = violation;
                report.worst_x = Some(x);
                report.worst_jump = Some(atom.size);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_basis::{orthonormal_basis, JumpAtom};
    use crate::path_engine::{Jump, TimeGrid};

    fn path_from(model: &LevyMeasureModel, grid: &TimeGrid, jumps: Vec<Vec<Jump>>) -> SamplePath {
        let basis = orthonormal_basis(model, 1).unwrap();
        SamplePath::assemble(model, &basis, grid, 0, &vec![0.0; grid.n_steps()], jumps).unwrap()
    }

    #[test]
    fn zero_sigma_freezes_state() {
        let model = LevyMeasureModel::new(vec![JumpAtom::new(1.0, 1.0)], 0.0, 0.7).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let mut jumps = vec![Vec::new(); 10];
        jumps[3].push(Jump { time: 0.35, size: 1.0 });
        let p = path_from(&model, &grid, jumps);
        let r = simulate_reflected(&ReflectedCoefficients::constant(1.0, 0.0).unwrap(), &p, 0.3).unwrap();
        assert!(r.x.iter().all(|&x| x == 0.3));
        assert!(r.abs_eta.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn drift_into_upper_barrier_accumulates_local_time() {
        let theta = 0.5;
        let model = LevyMeasureModel::new(vec![], 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 40).unwrap();
        let p = path_from(&model, &grid, vec![Vec::new(); 40]);
        let r = simulate_reflected(&ReflectedCoefficients::constant(theta, 1.0).unwrap(), &p, theta).unwrap();
        assert!(r.x.iter().all(|&x| x == theta));
        assert!((r.abs_eta[40] - 2.0).abs() < 1e-12);
        // η pushes downward at the upper barrier
        assert!((r.eta[40] + 2.0).abs() < 1e-12);
        assert_eq!(r.boundary_hits.len(), 41);
    }

    #[test]
    fn big_jump_is_projected() {
        let theta = 0.75;
        let model = LevyMeasureModel::new(vec![JumpAtom::new(2.0 * theta, 0.1)], 0.0, 0.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let mut jumps = vec![Vec::new(); 4];
        jumps[2].push(Jump { time: 0.6, size: 2.0 * theta });
        let p = path_from(&model, &grid, jumps);
        let r = simulate_reflected(&ReflectedCoefficients::constant(theta, 1.0).unwrap(), &p, 0.0).unwrap();
        assert_eq!(r.x[3], theta);
        assert!((r.abs_eta[3] - r.abs_eta[2] - theta).abs() < 1e-12);
        assert!(r.large_jump_projections.contains(&2));
    }

    #[test]
    fn start_outside_rejected() {
        let model = LevyMeasureModel::new(vec![], 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let p = path_from(&model, &grid, vec![Vec::new(); 2]);
        let c = ReflectedCoefficients::constant(1.0, 1.0).unwrap();
        assert!(simulate_reflected(&c, &p, 1.5).is_err());
    }

    #[test]
    fn invariance_examples() {
        let unit = LevyMeasureModel::new(vec![JumpAtom::new(1.0, 1.0)], 0.0, 0.0).unwrap();
        let zero = ReflectedCoefficients::constant(1.0, 0.0).unwrap();
        assert!(validate_invariance(&zero, &unit).holds());

        let tent = ReflectedCoefficients::new(1.0, Arc::new(|x: f64| 1.0 - x.abs()), 1.0).unwrap();
        assert!(validate_invariance(&tent, &unit).holds());

        let one = ReflectedCoefficients::constant(1.0, 1.0).unwrap();
        let r = validate_invariance(&one, &unit);
        assert!((r.worst_violation - 1.0).abs() < 1e-12);
        assert_eq!(r.worst_x, Some(1.0));
    }

    #[test]
    fn lipschitz_bound_is_enforced() {
        let steep = ReflectedCoefficients::new(1.0, Arc::new(|x: f64| 3.0 * x), 1.0);
        assert!(steep.is_err());
        assert!(ReflectedCoefficients::constant(0.0, 1.0).is_err());
    }

    #[test]
    fn sigma_extends_by_projection() {
        let c = ReflectedCoefficients::new(1.0, Arc::new(|x: f64| x), 1.0).unwrap();
        assert_eq!(c.sigma(3.0), 1.0);
        assert_eq!(c.sigma(-7.0), -1.0);
        assert_eq!(c.boundary_direction(-1.0), 1.0);
        assert_eq!(c.boundary_direction(1.0), -1.0);
    }
}
