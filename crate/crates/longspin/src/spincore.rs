//! Dense complex linear algebra for multi-spin-1/2 systems.
//!
//! Operators are `2^n x 2^n` complex matrices built by tensor-product
//! embedding of single-spin operators. Time evolution follows
//! `U(H, t) = exp(+iHt)` with states conjugated as `rho -> U^-1 rho U`
//! (for unitary `U`, `U^-1 = U^dagger`), i.e. `rho(t) = e^{-iHt} rho e^{+iHt}`.
//! Matrix exponentials go through a Hermitian eigendecomposition so a single
//! factorization serves every pulse duration in a run.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use std::collections::HashMap;

use crate::{Error, Result};

/// Max elementwise |H - H^dagger| accepted for Hamiltonians.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Max elementwise |U^dagger U - 1| accepted for propagators.
pub const UNITARY_TOL: f64 = 1e-10;

/// Single-spin operator component selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinAxis {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

/// Dense operator on an n-spin-1/2 Hilbert space (dim = 2^n).
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    mat: DMatrix<C64>,
}

impl Operator {
    /// Wraps a square matrix whose dimension must be a power of two.
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        let dim = mat.nrows();
        if dim == 0 || mat.ncols() != dim || !dim.is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "operator must be square with power-of-two dimension, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Operator { mat })
    }

    pub fn identity(dim: usize) -> Self {
        Operator {
            mat: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Operator {
            mat: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            mat: self.mat.adjoint(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Operator {
        Operator {
            mat: &self.mat * C64::new(factor, 0.0),
        }
    }

    /// Max elementwise |self - other|.
    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        (&self.mat - &other.mat)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Max elementwise |H - H^dagger|.
    pub fn hermiticity_deviation(&self) -> f64 {
        let adj = self.mat.adjoint();
        (&self.mat - adj)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Max elementwise |U^dagger U - 1|.
    pub fn unitarity_deviation(&self) -> f64 {
        let prod = self.mat.adjoint() * &self.mat;
        let id = DMatrix::<C64>::identity(self.dim(), self.dim());
        (prod - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl std::ops::Add<&Operator> for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl std::ops::Sub<&Operator> for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl std::ops::Mul<&Operator> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator {
            mat: &self.mat * &rhs.mat,
        }
    }
}

/// Density matrix with an explicit amplitude `scale` factor.
///
/// The stored matrix keeps unit trace; accumulated decoherence attenuation
/// lives in `scale` so repeated blocks only touch a scalar.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: DMatrix<C64>,
    scale: f64,
}

impl DensityMatrix {
    pub fn new(mat: DMatrix<C64>, scale: f64) -> Result<Self> {
        if mat.nrows() != mat.ncols() || !mat.nrows().is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "density matrix must be square with power-of-two dimension, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if !(0.0..=1.0).contains(&scale) {
            return Err(Error::InvalidParams(format!(
                "density matrix scale must lie in [0, 1], got {scale}"
            )));
        }
        Ok(DensityMatrix { mat, scale })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Multiplies the amplitude factor, clamping at zero underflow.
    pub fn attenuate(&mut self, factor: f64) {
        self.scale *= factor;
        if self.scale < 0.0 {
            self.scale = 0.0;
        }
    }

    pub fn trace(&self) -> C64 {
        self.mat.diagonal().sum()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        let adj = self.mat.adjoint();
        (&self.mat - adj)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Single-spin 2x2 operator for the requested component.
fn single_spin(axis: SpinAxis) -> DMatrix<C64> {
    let z = |re: f64, im: f64| C64::new(re, im);
    match axis {
        SpinAxis::X => {
            DMatrix::from_row_slice(2, 2, &[z(0., 0.), z(0.5, 0.), z(0.5, 0.), z(0., 0.)])
        }
        SpinAxis::Y => {
            DMatrix::from_row_slice(2, 2, &[z(0., 0.), z(0., -0.5), z(0., 0.5), z(0., 0.)])
        }
        SpinAxis::Z => {
            DMatrix::from_row_slice(2, 2, &[z(0.5, 0.), z(0., 0.), z(0., 0.), z(-0.5, 0.)])
        }
        SpinAxis::Plus => {
            DMatrix::from_row_slice(2, 2, &[z(0., 0.), z(1., 0.), z(0., 0.), z(0., 0.)])
        }
        SpinAxis::Minus => {
            DMatrix::from_row_slice(2, 2, &[z(0., 0.), z(0., 0.), z(1., 0.), z(0., 0.)])
        }
    }
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Single-spin operator embedded at `index` (0 = leftmost tensor factor)
/// in an `n_spins` register.
pub fn spin_operator(n_spins: usize, index: usize, axis: SpinAxis) -> Result<Operator> {
    if n_spins == 0 {
        return Err(Error::InvalidParams("n_spins must be at least 1".into()));
    }
    if index >= n_spins {
        return Err(Error::SpinIndexOutOfRange { index, n_spins });
    }
    let op = single_spin(axis);
    let left = DMatrix::<C64>::identity(1 << index, 1 << index);
    let right_dim = 1 << (n_spins - 1 - index);
    let right = DMatrix::<C64>::identity(right_dim, right_dim);
    Operator::new(kron(&kron(&left, &op), &right))
}

/// Sum of the single-spin operators over all spins.
pub fn total_spin_operator(n_spins: usize, axis: SpinAxis) -> Result<Operator> {
    let dim = 1usize << n_spins;
    let mut total = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..n_spins {
        total += spin_operator(n_spins, i, axis)?.matrix();
    }
    Operator::new(total)
}

/// Hermitian eigendecomposition of a Hamiltonian, reused to exponentiate at
/// many durations. Propagators are memoized per duration so protocol loops
/// pay one O(dim^3) factorization plus one O(dim^3) build per distinct time.
pub struct HamiltonianEig {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<C64>,
    cache: HashMap<u64, Operator>,
}

impl HamiltonianEig {
    pub fn new(h: &Operator) -> Result<Self> {
        let dev = h.hermiticity_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let eig = h.mat.clone().symmetric_eigen();
        Ok(HamiltonianEig {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            cache: HashMap::new(),
        })
    }

    /// `U = exp(+iHt)`, cached by duration.
    pub fn propagator(&mut self, t: f64) -> Operator {
        let key = t.to_bits();
        if let Some(u) = self.cache.get(&key) {
            return u.clone();
        }
        let u = self.build(t);
        self.cache.insert(key, u.clone());
        u
    }

    fn build(&self, t: f64) -> Operator {
        let phases = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&lambda| {
                let phi = lambda * t;
                C64::new(phi.cos(), phi.sin())
            }),
        );
        // V * diag(e^{i lambda t}) * V^H
        let mut scaled = self.eigenvectors.clone();
        for j in 0..scaled.ncols() {
            let p = phases[j];
            for entry in scaled.column_mut(j).iter_mut() {
                *entry *= p;
            }
        }
        let mat = scaled * self.eigenvectors.adjoint();
        Operator { mat }
    }
}

/// `U = exp(+iHt)` via one-off eigendecomposition.
///
/// Prefer [`HamiltonianEig`] when the same Hamiltonian is exponentiated at
/// several durations.
pub fn propagator(h: &Operator, t: f64) -> Result<Operator> {
    let mut eig = HamiltonianEig::new(h)?;
    Ok(eig.propagator(t))
}

/// `rho -> U^-1 rho U` for unitary `U`; the amplitude scale is untouched.
pub fn evolve(rho: &DensityMatrix, u: &Operator) -> Result<DensityMatrix> {
    if rho.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: u.dim(),
        });
    }
    let dev = u.unitarity_deviation();
    if dev > UNITARY_TOL {
        return Err(Error::NotUnitary { deviation: dev });
    }
    let mat = u.mat.adjoint() * &rho.mat * &u.mat;
    Ok(DensityMatrix {
        mat,
        scale: rho.scale,
    })
}

/// `scale * Re tr(rho O)` for Hermitian `O`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<f64> {
    if rho.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: op.dim(),
        });
    }
    Ok(rho.scale * trace_product(&rho.mat, &op.mat).re)
}

/// `tr(A B)` without forming the product matrix.
pub fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
