//! Smooth test functions on `R^n`.
//!
//! Each function exposes its value, gradient, Hessian and its image under the
//! Ornstein–Uhlenbeck generator `L f = Δf − x·∇f`. Hessians come back as a
//! [`Hessian`], which keeps the softmax Hessian of the free energy in factored
//! form so that Hilbert–Schmidt inner products cost `O(n)`.

use nalgebra::DMatrix;

use crate::gaussian::{free_energy_unchecked, softmax_frobenius_sq, softmax_inner, softmax_into, BetaParam};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Hessian {
    /// The zero matrix of the given size.
    Zero(usize),
    Dense(DMatrix<f64>),
    /// `β(diag p − p pᵀ)`.
    Softmax { weights: Vec<f64>, beta: f64 },
    /// Equal-weight average of the parts.
    Mixture(Vec<Hessian>),
}

impl Hessian {
    pub fn dim(&self) -> usize {
        match self {
            Hessian::Zero(n) => *n,
            Hessian::Dense(m) => m.nrows(),
            Hessian::Softmax { weights, .. } => weights.len(),
            Hessian::Mixture(parts) => parts.first().map_or(0, Hessian::dim),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Hessian::Zero(_) => true,
            Hessian::Mixture(parts) => parts.iter().all(Hessian::is_zero),
            _ => false,
        }
    }

    /// `⟨A, B⟩_HS = Σ_ij A_ij B_ij`.
    pub fn inner(&self, other: &Hessian) -> f64 {
        use Hessian::*;
        match (self, other) {
            (Zero(_), _) | (_, Zero(_)) => 0.0,
            (Mixture(parts), b) => {
                parts.iter().map(|p| p.inner(b)).sum::<f64>() / parts.len() as f64
            }
            (a, Mixture(parts)) => {
                parts.iter().map(|p| a.inner(p)).sum::<f64>() / parts.len() as f64
            }
            (Softmax { weights: p, beta: bp }, Softmax { weights: q, beta: bq }) => {
                softmax_inner(p, *bp, q, *bq)
            }
            (Dense(a), Dense(b)) => a.dot(b),
            (Dense(a), s @ Softmax { .. }) | (s @ Softmax { .. }, Dense(a)) => {
                a.dot(&s.to_dense())
            }
        }
    }

    /// `‖H‖²_HS`.
    pub fn frobenius_sq(&self) -> f64 {
        match self {
            Hessian::Zero(_) => 0.0,
            Hessian::Dense(m) => m.norm_squared(),
            Hessian::Softmax { weights, beta } => softmax_frobenius_sq(weights, *beta),
            Hessian::Mixture(_) => self.inner(self),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            Hessian::Zero(_) => 0.0,
            Hessian::Dense(m) => m.trace(),
            Hessian::Softmax { weights, beta } => {
                beta * weights.iter().map(|p| p - p * p).sum::<f64>()
            }
            Hessian::Mixture(parts) => {
                parts.iter().map(Hessian::trace).sum::<f64>() / parts.len() as f64
            }
        }
    }

    /// `acc += c·H`.
    pub fn add_scaled_to(&self, acc: &mut DMatrix<f64>, c: f64) {
        match self {
            Hessian::Zero(_) => {}
            Hessian::Dense(m) => *acc += m * c,
            Hessian::Softmax { weights: p, beta } => {
                let n = p.len();
                let cb = c * beta;
                for j in 0..n {
                    let pj = cb * p[j];
                    for i in 0..n {
                        acc[(i, j)] -= pj * p[i];
                    }
                    acc[(j, j)] += pj;
                }
            }
            Hessian::Mixture(parts) => {
                let w = c / parts.len() as f64;
                for part in parts {
                    part.add_scaled_to(acc, w);
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        self.add_scaled_to(&mut m, 1.0);
        m
    }
}

/// A twice-differentiable function on `R^n`.
pub trait SmoothFunction: Sync + Send {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇f(x)` into `out`.
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g
    }

    fn hessian(&self, x: &[f64]) -> Hessian;

    /// `L f(x) = Δf(x) − x·∇f(x)`.
    fn generator(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        self.hessian(x).trace() - x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Short identifier used in reports.
    fn label(&self) -> String;
}

fn check_index(i: usize, n: usize) -> Result<()> {
    if i >= n {
        Err(Error::DimensionMismatch { expected: n, got: i })
    } else {
        Ok(())
    }
}

/// `f_β(x) = (1/β) log Σ e^{β x_i}` on `R^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergy {
    pub n: usize,
    pub beta: BetaParam,
}

impl FreeEnergy {
    pub fn new(n: usize, beta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            n,
            beta: BetaParam::new(beta)?,
        })
    }
}

impl SmoothFunction for FreeEnergy {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        free_energy_unchecked(x, self.beta.get())
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        softmax_into(x, self.beta.get(), out);
    }

    fn hessian(&self, x: &[f64]) -> Hessian {
        Hessian::Softmax {
            weights: self.gradient(x),
            beta: self.beta.get(),
        }
    }

    fn generator(&self, x: &[f64]) -> f64 {
        let p = self.gradient(x);
        let sq: f64 = p.iter().map(|v| v * v).sum();
        let xp: f64 = x.iter().zip(&p).map(|(a, b)| a * b).sum();
        self.beta.get() * (1.0 - sq) - xp
    }

    fn label(&self) -> String {
        format!("free_energy(n={}, beta={})", self.n, self.beta.get())
    }
}

/// `f(x) = a·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub a: Vec<f64>,
}

impl Linear {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self { a })
    }

    pub fn norm_sq(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum()
    }
}

impl SmoothFunction for Linear {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    fn gradient_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.a);
    }

    fn hessian(&self, _x: &[f64]) -> Hessian {
        Hessian::Zero(self.a.len())
    }

    fn generator(&self, x: &[f64]) -> f64 {
        -self.value(x)
    }

    fn label(&self) -> String {
        format!("linear(n={})", self.a.len())
    }
}

/// `f(x) = x_i x_j` with `i ≠ j`, a degree-2 Hermite polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Product {
    pub n: usize,
    pub i: usize,
    pub j: usize,
}

impl Product {
    pub fn new(n: usize, i: usize, j: usize) -> Result<Self> {
        check_index(i, n)?;
        check_index(j, n)?;
        if i == j {
            return Err(Error::Precondition("product needs two distinct coordinates".into()));
        }
        Ok(Self { n, i, j })
    }
}

impl SmoothFunction for Product {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        x[self.i] * x[self.j]
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.i] = x[self.j];
        out[self.j] = x[self.i];
    }

    fn hessian(&self, _x: &[f64]) -> Hessian {
        let mut m = DMatrix::zeros(self.n, self.n);
        m[(self.i, self.j)] = 1.0;
        m[(self.j, self.i)] = 1.0;
        Hessian::Dense(m)
    }

    fn generator(&self, x: &[f64]) -> f64 {
        -2.0 * self.value(x)
    }

    fn label(&self) -> String {
        format!("product(n={}, i={}, j={})", self.n, self.i, self.j)
    }
}

/// `f(x) = x_i² − 1`, the other degree-2 Hermite shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteSquare {
    pub n: usize,
    pub i: usize,
}

impl HermiteSquare {
    pub fn new(n: usize, i: usize) -> Result<Self> {
        check_index(i, n)?;
        Ok(Self { n, i })
    }
}

impl SmoothFunction for HermiteSquare {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        x[self.i] * x[self.i] - 1.0
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.i] = 2.0 * x[self.i];
    }

    fn hessian(&self, _x: &[f64]) -> Hessian {
        let mut m = DMatrix::zeros(self.n, self.n);
        m[(self.i, self.i)] = 2.0;
        Hessian::Dense(m)
    }

    fn generator(&self, x: &[f64]) -> f64 {
        -2.0 * self.value(x)
    }

    fn label(&self) -> String {
        format!("hermite_square(n={}, i={})", self.n, self.i)
    }
}

/// `f(x) = max_i x_i`. Lipschitz, differentiable off a null set, where the
/// gradient is the indicator of the maximizing coordinate and the Hessian
/// vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateMax {
    pub n: usize,
}

impl CoordinateMax {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(Self { n })
    }

    pub fn argmax(x: &[f64]) -> usize {
        let mut best = 0;
        for (k, v) in x.iter().enumerate() {
            if *v > x[best] {
                best = k;
            }
        }
        best
    }
}

impl SmoothFunction for CoordinateMax {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        x[Self::argmax(x)]
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[Self::argmax(x)] = 1.0;
    }

    fn hessian(&self, _x: &[f64]) -> Hessian {
        Hessian::Zero(self.n)
    }

    fn generator(&self, x: &[f64]) -> f64 {
        -self.value(x)
    }

    fn label(&self) -> String {
        format!("coordinate_max(n={})", self.n)
    }
}
