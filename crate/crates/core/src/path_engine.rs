//! Sample paths of the Brownian motion `B`, the Lévy process `L`, its power
//! jumps `L^i`, the Teugels martingales `H^(i)` and the increasing process `A`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::levy_basis::{LevyMeasureModel, PolynomialBasis};
use crate::par;
use crate::rng::{self, Purpose, COMMON_PATH};

/// Uniform grid `t_i = t0 + i (T - t0) / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite()) || t0 >= t_end {
            return Err(Error::validation("grid", format!("need t0 < T, got [{t0}, {t_end}]")));
        }
        if n_steps == 0 {
            return Err(Error::validation("grid", "n_steps must be >= 1"));
        }
        Ok(TimeGrid { t0, t_end, n_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_end
        } else {
            self.t0 + i as f64 * self.dt()
        }
    }

    /// Elapsed time `t_i - t0`.
    pub fn elapsed(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    /// The tail grid starting at node `start`, same spacing.
    pub fn tail(&self, start: usize) -> Result<TimeGrid> {
        if start >= self.n_steps {
            return Err(Error::validation("grid", format!("tail start {start} leaves no steps")));
        }
        Ok(TimeGrid {
            t0: self.node(start),
            t_end: self.t_end,
            n_steps: self.n_steps - start,
        })
    }

    /// Index of the node equal to `t` (within `1e-9·dt`).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = (t - self.t0) / self.dt();
        let idx = pos.round();
        if idx < 0.0 || idx > self.n_steps as f64 || (pos - idx).abs() > 1e-9 {
            None
        } else {
            Some(idx as usize)
        }
    }
}

/// A jump of `L` at an exact time inside a grid step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// Where the Brownian increments of a bundle come from.
#[derive(Debug, Clone, PartialEq)]
pub enum BrownianSource {
    /// Each path draws its own Brownian motion.
    Independent,
    /// One Brownian path shared by every path of the bundle. This is what a
    /// solve conditional on `F^B` needs.
    Common,
    /// Caller-supplied increments, one per step, shared by every path.
    Fixed(Arc<Vec<f64>>),
}

/// Common Brownian increments for `(seed, grid)`; the ones `BrownianSource::Common` uses.
pub fn common_brownian_increments(grid: &TimeGrid, seed: u64) -> Vec<f64> {
    let sd = grid.dt().sqrt();
    (0..grid.n_steps())
        .map(|step| {
            let z: f64 = stream_normal(seed, COMMON_PATH, step);
            sd * z
        })
        .collect()
}

fn stream_normal(seed: u64, path_id: u64, step: usize) -> f64 {
    let mut rng = rng::stream(seed, path_id, Purpose::Brownian, step as u64);
    StandardNormal.sample(&mut rng)
}

/// One simulated path. Node-indexed series have `n_steps + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub path_id: u64,
    pub brownian: Vec<f64>,
    /// `ΔB` per step, as drawn.
    pub brownian_increments: Vec<f64>,
    pub levy: Vec<f64>,
    /// `power_jumps[i-1][node]` is `L^i`; `power_jumps[0]` is `L` itself.
    pub power_jumps: Vec<Vec<f64>>,
    /// `teugels[i-1][node]` is `H^(i)`.
    pub teugels: Vec<Vec<f64>>,
    pub increasing: Vec<f64>,
    /// Jumps falling in each step `[t_i, t_{i+1})`, sorted by time.
    pub jumps: Vec<Vec<Jump>>,
}

impl SamplePath {
    /// Builds every derived series from raw noise: Brownian increments per
    /// step and the jump records per step.
    pub fn assemble(
        model: &LevyMeasureModel,
        basis: &PolynomialBasis,
        grid: &TimeGrid,
        path_id: u64,
        brownian_increments: &[f64],
        jumps: Vec<Vec<Jump>>,
    ) -> Result<Self> {
        let n = grid.n_steps();
        if brownian_increments.len() != n || jumps.len() != n {
            return Err(Error::validation(
                "path noise",
                format!(
                    "expected {n} steps, got {} Brownian increments and {} jump lists",
                    brownian_increments.len(),
                    jumps.len()
                ),
            ));
        }
        if !basis.matches(model) {
            return Err(Error::BasisMismatch);
        }
        let m = basis.m();
        let dt = grid.dt();

        let mut brownian = Vec::with_capacity(n + 1);
        brownian.push(0.0);
        for db in brownian_increments {
            brownian.push(brownian.last().unwrap() + db);
        }

        let mut power_jumps = vec![vec![0.0; n + 1]; m];
        for step in 0..n {
            for (k, series) in power_jumps.iter_mut().enumerate() {
                let power = (k + 1) as i32;
                let mut inc: f64 = jumps[step].iter().map(|j| j.size.powi(power)).sum();
                if k == 0 {
                    inc += model.drift() * dt;
                }
                series[step + 1] = series[step] + inc;
            }
        }

        let means: Vec<f64> = (1..=m).map(|k| model.power_jump_mean(k as u32)).collect();
        let mut teugels = vec![vec![0.0; n + 1]; m];
        for (i, h) in teugels.iter_mut().enumerate() {
            let row = basis.row(i + 1)?;
            if row.iter().all(|&c| c == 0.0) {
                continue;
            }
            for (node, value) in h.iter_mut().enumerate() {
                let elapsed = grid.elapsed(node);
                *value = row
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| c * (power_jumps[k][node] - elapsed * means[k]))
                    .sum();
            }
        }

        Ok(SamplePath {
            path_id,
            levy: power_jumps[0].clone(),
            brownian,
            brownian_increments: brownian_increments.to_vec(),
            power_jumps,
            teugels,
            increasing: vec![0.0; n + 1],
            jumps,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.levy.len()
    }

    /// `H^(j)_{i+1} - H^(j)_i` for martingale `j` (1-based).
    pub fn teugels_increment(&self, j: usize, step: usize) -> f64 {
        let h = &self.teugels[j - 1];
        h[step + 1] - h[step]
    }

    pub fn jump_count(&self, upto_node: usize) -> usize {
        self.jumps[..upto_node].iter().map(Vec::len).sum()
    }
}

/// Draws the exact jump records for one step: a Poisson count per atom and
/// uniform placement inside the step.
fn sample_step_jumps(model: &LevyMeasureModel, grid: &TimeGrid, seed: u64, path_id: u64, step: usize) -> Vec<Jump> {
    let dt = grid.dt();
    let t_left = grid.node(step);
    let mut rng = rng::stream(seed, path_id, Purpose::Jumps, step as u64);
    let mut out = Vec::new();
    for atom in model.atoms() {
        let lambda = atom.rate * dt;
        let count = Poisson::new(lambda).expect("positive intensity").sample(&mut rng) as usize;
        for _ in 0..count {
            let u: f64 = rng.random();
            out.push(Jump {
                time: t_left + u * dt,
                size: atom.size,
            });
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}

/// Simulates a single path; the result depends only on `(seed, path_id)`.
pub fn simulate_path(
    model: &LevyMeasureModel,
    basis: &PolynomialBasis,
    grid: &TimeGrid,
    seed: u64,
    path_id: u64,
    brownian: &BrownianSource,
) -> Result<SamplePath> {
    let n = grid.n_steps();
    let sd = grid.dt().sqrt();
    let db: Vec<f64> = match brownian {
        BrownianSource::Independent => (0..n).map(|s| sd * stream_normal(seed, path_id, s)).collect(),
        BrownianSource::Common => (0..n).map(|s| sd * stream_normal(seed, COMMON_PATH, s)).collect(),
        BrownianSource::Fixed(inc) => inc.as_ref().clone(),
    };
    let jumps = (0..n)
        .map(|s| sample_step_jumps(model, grid, seed, path_id, s))
        .collect();
    SamplePath::assemble(model, basis, grid, path_id, &db, jumps)
}

/// A set of paths on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub m: usize,
    pub seed: u64,
    pub paths: Vec<SamplePath>,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }
}

/// Simulates `n_paths` paths, path ids `0..n_paths`, in parallel.
pub fn simulate_bundle(
    model: &LevyMeasureModel,
    basis: &PolynomialBasis,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    brownian: &BrownianSource,
) -> Result<PathBundle> {
    if n_paths == 0 {
        return Err(Error::validation("n_paths", "must be >= 1"));
    }
    if !basis.matches(model) {
        return Err(Error::BasisMismatch);
    }
    if let BrownianSource::Fixed(inc) = brownian {
        if inc.len() != grid.n_steps() {
            return Err(Error::validation("brownian", "fixed increments do not match the grid"));
        }
    }
    let paths = par::map_indexed(n_paths, |p| simulate_path(model, basis, grid, seed, p as u64, brownian))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(PathBundle {
        grid: *grid,
        m: basis.m(),
        seed,
        paths,
    })
}

/// `ΔB_i = B_{t_{i+1}} - B_{t_i}` per path.
pub fn backward_increments(bundle: &PathBundle) -> Vec<Vec<f64>> {
    bundle
        .paths
        .iter()
        .map(|p| p.brownian_increments.clone())
        .collect()
}

/// How to fill in the increasing process `A`.
#[derive(Clone)]
pub enum IncreasingSpec {
    Zero,
    /// `A_t = a(t) - a(t0)` for a nondecreasing function `a`.
    Deterministic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    /// Per-path node values, e.g. the boundary local time of a reflected path.
    PerPath(Vec<Vec<f64>>),
}

impl fmt::Debug for IncreasingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IncreasingSpec::Zero => write!(f, "Zero"),
            IncreasingSpec::Deterministic(_) => write!(f, "Deterministic(..)"),
            IncreasingSpec::PerPath(v) => write!(f, "PerPath({} paths)", v.len()),
        }
    }
}

fn check_nondecreasing(values: &[f64]) -> Result<()> {
    if values.first().copied() != Some(0.0) {
        return Err(Error::validation("increasing process", "must start at 0"));
    }
    for (i, w) in values.windows(2).enumerate() {
        if !(w[1] >= w[0]) {
            return Err(Error::validation(
                "increasing process",
                format!("decreases between nodes {i} and {}", i + 1),
            ));
        }
    }
    Ok(())
}

/// Replaces `A` on every path.
pub fn attach_increasing_process(mut bundle: PathBundle, spec: IncreasingSpec) -> Result<PathBundle> {
    let grid = bundle.grid;
    match spec {
        IncreasingSpec::Zero => {
            for p in &mut bundle.paths {
                p.increasing.iter_mut().for_each(|a| *a = 0.0);
            }
        }
        IncreasingSpec::Deterministic(a) => {
            let base = a(grid.t0());
            let values: Vec<f64> = (0..grid.n_nodes()).map(|i| a(grid.node(i)) - base).collect();
            check_nondecreasing(&values)?;
            for p in &mut bundle.paths {
                p.increasing.clone_from(&values);
            }
        }
        IncreasingSpec::PerPath(values) => {
            if values.len() != bundle.paths.len() {
                return Err(Error::validation("increasing process", "one series per path required"));
            }
            for (p, v) in bundle.paths.iter_mut().zip(values) {
                if v.len() != grid.n_nodes() {
                    return Err(Error::validation("increasing process", "series length does not match grid"));
                }
                check_nondecreasing(&v)?;
                p.increasing = v;
            }
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_basis::{orthonormal_basis, JumpAtom};

    fn poisson(alpha: f64, beta: f64, drift: f64, m: usize) -> (LevyMeasureModel, PolynomialBasis) {
        let model = LevyMeasureModel::new(vec![JumpAtom::new(beta, alpha)], 0.0, drift).unwrap();
        let basis = orthonormal_basis(&model, m).unwrap();
        (model, basis)
    }

    #[test]
    fn grid_nodes_and_tail() {
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        assert_eq!(g.node(10), 1.0);
        assert_eq!(g.index_of(0.3), Some(3));
        assert_eq!(g.index_of(0.35), None);
        let t = g.tail(4).unwrap();
        assert_eq!(t.n_steps(), 6);
        assert!((t.t0() - 0.4).abs() < 1e-15);
        assert!(TimeGrid::new(1.0, 1.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn no_jumps_no_drift_gives_zero_paths() {
        let model = LevyMeasureModel::new(vec![], 1.0, 0.0).unwrap();
        let basis = orthonormal_basis(&model, 2).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let p = simulate_path(&model, &basis, &grid, 1, 0, &BrownianSource::Independent).unwrap();
        assert!(p.levy.iter().all(|&x| x == 0.0));
        assert!(p.teugels.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn forced_jump_power_increments() {
        let (model, basis) = poisson(1.0, 2.0, 0.0, 3);
        let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let mut jumps = vec![Vec::new(); 4];
        jumps[1].push(Jump { time: 0.3, size: 2.0 });
        let p = SamplePath::assemble(&model, &basis, &grid, 0, &[0.0; 4], jumps).unwrap();
        assert_eq!(p.power_jumps[1][2] - p.power_jumps[1][1], 4.0);
        assert_eq!(p.power_jumps[2][2] - p.power_jumps[2][1], 8.0);
        assert_eq!(p.levy[2] - p.levy[1], 2.0);
        assert!(p.brownian.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn poisson_teugels_is_normalized_compensated_count() {
        let (alpha, beta) = (2.0, -0.5);
        let (model, basis) = poisson(alpha, beta, 0.3, 2);
        let grid = TimeGrid::new(0.0, 2.0, 50).unwrap();
        let p = simulate_path(&model, &basis, &grid, 9, 4, &BrownianSource::Independent).unwrap();
        for node in 0..grid.n_nodes() {
            let n_t = p.jump_count(node) as f64;
            let t = grid.elapsed(node);
            let expected = beta.signum() * (n_t - alpha * t) / alpha.sqrt();
            assert!((p.teugels[0][node] - expected).abs() < 1e-12);
            assert_eq!(p.teugels[1][node], 0.0);
            // L_t = Y^(1)_t + t E[L_1]
            let y1 = p.levy[node] - t * model.power_jump_mean(1);
            assert!((p.levy[node] - (y1 + t * model.power_jump_mean(1))).abs() < 1e-13);
        }
        assert_eq!(p.teugels[0][0], 0.0);
    }

    #[test]
    fn reproducible_and_order_independent() {
        let (model, basis) = poisson(1.0, 1.0, 0.0, 1);
        let grid = TimeGrid::new(0.0, 1.0, 30).unwrap();
        let a = simulate_bundle(&model, &basis, &grid, 16, 5, &BrownianSource::Independent).unwrap();
        let b = simulate_bundle(&model, &basis, &grid, 16, 5, &BrownianSource::Independent).unwrap();
        assert_eq!(a, b);
        let single = simulate_path(&model, &basis, &grid, 5, 11, &BrownianSource::Independent).unwrap();
        assert_eq!(single, a.paths[11]);
    }

    #[test]
    fn jumps_do_not_depend_on_brownian_source() {
        let (model, basis) = poisson(3.0, 1.0, 0.0, 1);
        let grid = TimeGrid::new(0.0, 1.0, 30).unwrap();
        let a = simulate_path(&model, &basis, &grid, 5, 2, &BrownianSource::Independent).unwrap();
        let b = simulate_path(&model, &basis, &grid, 5, 2, &BrownianSource::Common).unwrap();
        assert_eq!(a.jumps, b.jumps);
        assert_eq!(a.teugels, b.teugels);
    }

    #[test]
    fn common_brownian_is_shared() {
        let (model, basis) = poisson(1.0, 1.0, 0.0, 1);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let bundle = simulate_bundle(&model, &basis, &grid, 3, 1, &BrownianSource::Common).unwrap();
        assert_eq!(bundle.paths[0].brownian, bundle.paths[2].brownian);
        let inc = common_brownian_increments(&grid, 1);
        assert_eq!(backward_increments(&bundle)[1], inc);
    }

    #[test]
    fn frozen_brownian_and_telescoping() {
        let (model, basis) = poisson(1.0, 1.0, 0.0, 1);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let zero = BrownianSource::Fixed(Arc::new(vec![0.0; 10]));
        let bundle = simulate_bundle(&model, &basis, &grid, 2, 1, &zero).unwrap();
        assert!(backward_increments(&bundle).iter().flatten().all(|&d| d == 0.0));

        let bundle = simulate_bundle(&model, &basis, &grid, 2, 1, &BrownianSource::Independent).unwrap();
        for (p, inc) in bundle.paths.iter().zip(backward_increments(&bundle)) {
            let sum: f64 = inc.iter().sum();
            assert!((sum - (p.brownian[10] - p.brownian[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn increasing_process_specs() {
        let (model, basis) = poisson(1.0, 1.0, 0.0, 1);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let bundle = simulate_bundle(&model, &basis, &grid, 2, 1, &BrownianSource::Independent).unwrap();

        let linear = attach_increasing_process(bundle.clone(), IncreasingSpec::Deterministic(Arc::new(|t| t))).unwrap();
        for w in linear.paths[0].increasing.windows(2) {
            assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
        }
        let zero = attach_increasing_process(bundle.clone(), IncreasingSpec::Zero).unwrap();
        assert!(zero.paths[1].increasing.iter().all(|&a| a == 0.0));

        let bad = attach_increasing_process(bundle.clone(), IncreasingSpec::Deterministic(Arc::new(|t| -t)));
        assert!(matches!(bad, Err(Error::Validation { .. })));
        let mut series = vec![vec![0.0; 11]; 2];
        series[1][5] = 1.0;
        let bad = attach_increasing_process(bundle, IncreasingSpec::PerPath(series));
        assert!(bad.is_err());
    }

    #[test]
    fn basis_model_mismatch_rejected() {
        let (model, _) = poisson(1.0, 1.0, 0.0, 1);
        let (_, other) = poisson(2.0, 1.0, 0.0, 1);
        let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let r = simulate_bundle(&model, &other, &grid, 2, 1, &BrownianSource::Independent);
        assert!(matches!(r, Err(Error::BasisMismatch)));
    }
}
