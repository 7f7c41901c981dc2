//! Finite-activity Lévy measures and the orthonormal polynomial basis that
//! defines the Teugels martingales.
//!
//! The measure `μ(dx) = x² ν(dx) + σ₀² δ₀(dx)` is always purely atomic here:
//! one atom per jump size plus an optional atom at zero. Inner products in
//! `L²(μ)` are therefore finite sums and can be evaluated exactly up to
//! floating point.

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative residual below which a Gram-Schmidt candidate is treated as
/// lying in the span of the previous basis elements.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// One jump size of the Lévy measure together with its intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpAtom {
    pub size: f64,
    pub rate: f64,
}

impl JumpAtom {
    pub fn new(size: f64, rate: f64) -> Self {
        JumpAtom { size, rate }
    }
}

/// Lévy measure `ν = Σ rate·δ_size`, the mass parameter `σ₀` of the `δ₀`
/// term of `μ`, and the drift of the driving process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevyMeasureModel {
    atoms: Vec<JumpAtom>,
    sigma0: f64,
    drift: f64,
}

impl LevyMeasureModel {
    /// Validates the atoms and builds the model.
    pub fn new(atoms: Vec<JumpAtom>, sigma0: f64, drift: f64) -> Result<Self> {
        if !sigma0.is_finite() || sigma0 < 0.0 {
            return Err(Error::validation("sigma0", format!("must be finite and >= 0, got {sigma0}")));
        }
        if !drift.is_finite() {
            return Err(Error::validation("drift", "must be finite"));
        }
        for (idx, atom) in atoms.iter().enumerate() {
            if !atom.size.is_finite() || atom.size == 0.0 {
                return Err(Error::validation(
                    "jump size",
                    format!("atom {idx} has size {} (must be finite and nonzero)", atom.size),
                ));
            }
            if !atom.rate.is_finite() || atom.rate <= 0.0 {
                return Err(Error::validation(
                    "jump rate",
                    format!("atom {idx} has rate {} (must be finite and > 0)", atom.rate),
                ));
            }
            if atoms[..idx].iter().any(|other| other.size == atom.size) {
                return Err(Error::validation(
                    "jump size",
                    format!("duplicate jump size {}", atom.size),
                ));
            }
        }
        if atoms.is_empty() && sigma0 == 0.0 {
            return Err(Error::validation("measure", "μ is identically zero (no atoms and sigma0 = 0)"));
        }
        Ok(LevyMeasureModel { atoms, sigma0, drift })
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn total_rate(&self) -> f64 {
        self.atoms.iter().map(|a| a.rate).sum()
    }

    /// `Σ rate·size^k`, i.e. `∫ y^k ν(dy)`.
    pub fn jump_moment(&self, k: u32) -> f64 {
        self.atoms.iter().map(|a| a.rate * a.size.powi(k as i32)).sum()
    }

    /// `(∫ y² ν(dy))^{1/2}`.
    pub fn jump_l2_norm(&self) -> f64 {
        self.jump_moment(2).sqrt()
    }

    /// Analytic `E[L^k_1]` for the power-jump processes. `L¹ = L` carries the
    /// drift, higher powers only see the jumps.
    pub fn power_jump_mean(&self, k: u32) -> f64 {
        if k == 1 {
            self.drift + self.jump_moment(1)
        } else {
            self.jump_moment(k)
        }
    }

    /// `a' = a + ∫_{|y|≥1} y ν(dy)`.
    pub fn a_prime(&self) -> f64 {
        self.drift
            + self
                .atoms
                .iter()
                .filter(|a| a.size.abs() >= 1.0)
                .map(|a| a.size * a.rate)
                .sum::<f64>()
    }

    /// Atoms of `μ` as `(location, mass)`: `size²·rate` at every jump size and
    /// `σ₀²` at the origin when `σ₀ > 0`.
    pub fn mu_atoms(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .map(|a| (a.size, a.size * a.size * a.rate))
            .collect();
        if self.sigma0 > 0.0 {
            out.push((0.0, self.sigma0 * self.sigma0));
        }
        out
    }

    /// `∫ x^k μ(dx)`.
    pub fn mu_moment(&self, k: u32) -> f64 {
        self.mu_atoms()
            .iter()
            .map(|&(x, w)| w * if k == 0 { 1.0 } else { x.powi(k as i32) })
            .sum()
    }

    /// Same measure with every rate multiplied by `factor`.
    pub fn with_scaled_rates(&self, factor: f64) -> Result<Self> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| JumpAtom::new(a.size, a.rate * factor))
            .collect();
        LevyMeasureModel::new(atoms, self.sigma0, self.drift)
    }
}

/// Dense polynomial with ascending coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn monomial(degree: usize) -> Self {
        let mut coeffs = vec![0.0; degree + 1];
        coeffs[degree] = 1.0;
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// `Σ_atoms f(x) g(x) μ({x})` for arbitrary real functions.
pub fn inner_product_fn(model: &LevyMeasureModel, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
    model.mu_atoms().iter().map(|&(x, w)| f(x) * g(x) * w).sum()
}

/// `⟨f, g⟩` in `L²(μ)` by exact atomic quadrature.
pub fn inner_product(model: &LevyMeasureModel, f: &Polynomial, g: &Polynomial) -> f64 {
    inner_product_fn(model, |x| f.eval(x), |x| g.eval(x))
}

/// Coefficients `c_{i,k}` of the polynomials `q_{i-1}` orthonormal in `L²(μ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolynomialBasis {
    m: usize,
    /// Row `i-1` holds `c_{i,1}, …, c_{i,i}` (ascending powers of `x`).
    coeffs: Vec<Vec<f64>>,
    effective_dim: usize,
    mu_moments: Vec<f64>,
    mu_atoms: Vec<(f64, f64)>,
}

/// Gram-Schmidt of `1, x, …, x^{m-1}` in `L²(μ)`.
///
/// Works on the vector of values at the atoms of `μ` while carrying the
/// monomial coefficients alongside. Every projection is applied twice
/// (modified Gram-Schmidt with re-orthogonalization). Rows past the number of
/// atoms, or whose residual collapses below [`DEGENERACY_TOL`], are zeroed.
pub fn orthonormal_basis(model: &LevyMeasureModel, m: usize) -> Result<PolynomialBasis> {
    if m == 0 {
        return Err(Error::validation("m", "need at least one martingale"));
    }
    let atoms = model.mu_atoms();
    let weights: Vec<f64> = atoms.iter().map(|&(_, w)| w).collect();
    let dot = |u: &[f64], v: &[f64]| -> f64 {
        u.iter().zip(v).zip(&weights).map(|((a, b), w)| a * b * w).sum()
    };

    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut effective_dim = 0;

    for i in 0..m {
        let mut c = vec![0.0; i + 1];
        c[i] = 1.0;
        let mut v: Vec<f64> = atoms.iter().map(|&(x, _)| x.powi(i as i32)).collect();
        let start_norm = dot(&v, &v).sqrt();

        if effective_dim == i && i < atoms.len() {
            for _pass in 0..2 {
                for (qc, qv) in coeffs.iter().zip(&values) {
                    let proj = dot(&v, qv);
                    for (a, b) in v.iter_mut().zip(qv) {
                        *a -= proj * b;
                    }
                    for (a, b) in c.iter_mut().zip(qc) {
                        *a -= proj * b;
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > DEGENERACY_TOL * start_norm.max(f64::MIN_POSITIVE) {
                c.iter_mut().for_each(|a| *a /= norm);
                v.iter_mut().for_each(|a| *a /= norm);
                coeffs.push(c);
                values.push(v);
                effective_dim += 1;
                continue;
            }
        }
        coeffs.push(vec![0.0; i + 1]);
        values.push(vec![0.0; atoms.len()]);
    }

    let mu_moments = (0..(2 * m).saturating_sub(1) as u32)
        .map(|k| model.mu_moment(k))
        .collect();

    Ok(PolynomialBasis {
        m,
        coeffs,
        effective_dim,
        mu_moments,
        mu_atoms: atoms,
    })
}

impl PolynomialBasis {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn effective_dim(&self) -> usize {
        self.effective_dim
    }

    pub fn mu_moments(&self) -> &[f64] {
        &self.mu_moments
    }

    pub fn is_degenerate(&self, i: usize) -> bool {
        i > self.effective_dim
    }

    /// `c_{i,k}` for `1 ≤ k ≤ i ≤ m`.
    pub fn coefficient(&self, i: usize, k: usize) -> Result<f64> {
        self.check_index(i)?;
        if k == 0 || k > i {
            return Err(Error::IndexOutOfRange { index: k, max: i });
        }
        Ok(self.coeffs[i - 1][k - 1])
    }

    /// Row `i` as `[c_{i,1}, …, c_{i,i}]`.
    pub fn row(&self, i: usize) -> Result<&[f64]> {
        self.check_index(i)?;
        Ok(&self.coeffs[i - 1])
    }

    pub fn q(&self, i: usize) -> Result<Polynomial> {
        Ok(Polynomial::new(self.row(i)?.to_vec()))
    }

    /// `p_i(x) = x q_{i-1}(x)` as a polynomial.
    pub fn p(&self, i: usize) -> Result<Polynomial> {
        let mut c = vec![0.0];
        c.extend_from_slice(self.row(i)?);
        Ok(Polynomial::new(c))
    }

    /// `q_{i-1}(x)`.
    pub fn eval_q(&self, i: usize, x: f64) -> Result<f64> {
        let row = self.row(i)?;
        Ok(row.iter().rev().fold(0.0, |acc, &c| acc * x + c))
    }

    /// `p_i(x) = x q_{i-1}(x)`; zero at the origin for every `i`.
    pub fn eval_p(&self, i: usize, x: f64) -> Result<f64> {
        Ok(x * self.eval_q(i, x)?)
    }

    /// Whether this basis was orthonormalized against `model`'s `μ`.
    pub fn matches(&self, model: &LevyMeasureModel) -> bool {
        self.mu_atoms == model.mu_atoms()
    }

    /// `max_{i,j ≤ effective_dim} |⟨q_{i-1}, q_{j-1}⟩ − δ_ij|`.
    pub fn orthonormality_error(&self, model: &LevyMeasureModel) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..=self.effective_dim {
            for j in 1..=self.effective_dim {
                let qi = self.q(i).expect("in range");
                let qj = self.q(j).expect("in range");
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((inner_product(model, &qi, &qj) - target).abs());
            }
        }
        worst
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.m {
            Err(Error::IndexOutOfRange { index: i, max: self.m })
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model(atoms: &[(f64, f64)], sigma0: f64) -> LevyMeasureModel {
        LevyMeasureModel::new(
            atoms.iter().map(|&(s, r)| JumpAtom::new(s, r)).collect(),
            sigma0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn mu_of_single_unit_jump() {
        assert_eq!(model(&[(1.0, 1.0)], 0.0).mu_atoms(), vec![(1.0, 1.0)]);
    }

    #[test]
    fn mu_of_pure_origin_mass() {
        assert_eq!(model(&[], 1.0).mu_atoms(), vec![(0.0, 1.0)]);
    }

    #[test]
    fn mu_mass_is_size_squared_times_rate() {
        assert_eq!(model(&[(2.0, 3.0)], 0.0).mu_atoms(), vec![(2.0, 12.0)]);
    }

    #[test]
    fn rejects_duplicate_zero_and_empty() {
        let dup = LevyMeasureModel::new(vec![JumpAtom::new(1.0, 1.0), JumpAtom::new(1.0, 2.0)], 0.0, 0.0);
        assert!(matches!(dup, Err(Error::Validation { .. })));
        let zero = LevyMeasureModel::new(vec![JumpAtom::new(0.0, 1.0)], 0.0, 0.0);
        assert!(matches!(zero, Err(Error::Validation { .. })));
        let empty = LevyMeasureModel::new(vec![], 0.0, 0.0);
        assert!(matches!(empty, Err(Error::Validation { .. })));
        let bad_rate = LevyMeasureModel::new(vec![JumpAtom::new(1.0, 0.0)], 0.0, 0.0);
        assert!(bad_rate.is_err());
    }

    #[test]
    fn single_atom_basis_is_degenerate_past_first_row() {
        let m = model(&[(1.0, 1.0)], 0.0);
        let b = orthonormal_basis(&m, 3).unwrap();
        assert_eq!(b.effective_dim(), 1);
        assert_eq!(b.row(1).unwrap(), &[1.0]);
        assert!(b.row(2).unwrap().iter().all(|&c| c == 0.0));
        assert!(b.row(3).unwrap().iter().all(|&c| c == 0.0));
        assert!(b.is_degenerate(2) && b.is_degenerate(3));
        assert_eq!(b.eval_p(3, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_two_atom_basis() {
        let m = model(&[(1.0, 1.0), (-1.0, 1.0)], 0.0);
        let b = orthonormal_basis(&m, 2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(b.effective_dim(), 2);
        assert_abs_diff_eq!(b.coefficient(1, 1).unwrap(), s, epsilon = 1e-15);
        assert_abs_diff_eq!(b.coefficient(2, 1).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.coefficient(2, 2).unwrap(), s, epsilon = 1e-15);
        assert_abs_diff_eq!(b.eval_p(1, 1.0).unwrap(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        let q0 = b.q(1).unwrap();
        let q1 = b.q(2).unwrap();
        assert_abs_diff_eq!(inner_product(&m, &q0, &q1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn origin_atom_only() {
        let m = model(&[], 1.0);
        let b = orthonormal_basis(&m, 2).unwrap();
        assert_eq!(b.effective_dim(), 1);
        assert_eq!(b.eval_q(1, 3.0).unwrap(), 1.0);
        assert_eq!(b.eval_p(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn inner_product_examples() {
        let unit = model(&[(1.0, 1.0)], 0.0);
        let one = Polynomial::new(vec![1.0]);
        assert_eq!(inner_product(&unit, &one, &one), 1.0);
        let sym = model(&[(1.0, 1.0), (-1.0, 1.0)], 0.0);
        assert_eq!(inner_product(&sym, &Polynomial::monomial(1), &one), 0.0);
    }

    #[test]
    fn index_errors() {
        let b = orthonormal_basis(&model(&[(1.0, 1.0)], 0.0), 2).unwrap();
        assert!(matches!(b.eval_p(0, 1.0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(b.eval_q(3, 1.0), Err(Error::IndexOutOfRange { .. })));
        assert!(orthonormal_basis(&model(&[(1.0, 1.0)], 0.0), 0).is_err());
    }

    #[test]
    fn a_prime_counts_only_large_jumps() {
        let m = LevyMeasureModel::new(
            vec![JumpAtom::new(0.5, 2.0), JumpAtom::new(1.5, 1.0), JumpAtom::new(-2.0, 0.5)],
            0.0,
            0.25,
        )
        .unwrap();
        assert_abs_diff_eq!(m.a_prime(), 0.25 + 1.5 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.power_jump_mean(1), 0.25 + 1.0 + 1.5 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.power_jump_mean(2), 0.5 + 2.25 + 2.0, epsilon = 1e-15);
    }
}
