//! Semirings for generic belief propagation.
//!
//! The second-order semiring carries four components `(q, φ, ψ, c)` whose
//! product combines `q` multiplicatively and the two middle slots
//! additively, leaving `Σ_y p(y) a(y) b(y)` in the fourth slot after a full
//! tree pass. A vectorized variant accumulates a whole D×D matrix per
//! element; a batched variant runs many scalar instances with `a = b` in
//! lockstep, which is what sampling needs (one instance per eigenvector).
//!
//! Message passing performs millions of element operations, so the trait
//! works in place; the allocating `add`/`mul` wrappers exist for tests and
//! one-off use.

use nalgebra::{DMatrix, DVector};

pub trait Semiring {
    type Elem: Clone;
    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    /// `dst <- src` without reallocating.
    fn assign(&self, dst: &mut Self::Elem, src: &Self::Elem);
    /// `acc <- acc ⊕ x`.
    fn add_assign(&self, acc: &mut Self::Elem, x: &Self::Elem);
    /// `acc <- acc ⊗ x` (all semirings here have commutative products).
    fn mul_assign(&self, acc: &mut Self::Elem, x: &Self::Elem);

    fn add(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem {
        let mut out = a.clone();
        self.add_assign(&mut out, b);
        out
    }

    fn mul(&self, a: &Self::Elem, b: &Self::Elem) -> Self::Elem {
        let mut out = a.clone();
        self.mul_assign(&mut out, b);
        out
    }
}

/// Ordinary sum-product over the reals.
pub struct SumProduct;

impl Semiring for SumProduct {
    type Elem = f64;
    fn zero(&self) -> f64 {
        0.0
    }
    fn one(&self) -> f64 {
        1.0
    }
    fn assign(&self, dst: &mut f64, src: &f64) {
        *dst = *src;
    }
    fn add_assign(&self, acc: &mut f64, x: &f64) {
        *acc += x;
    }
    fn mul_assign(&self, acc: &mut f64, x: &f64) {
        *acc *= x;
    }
}

/// One scalar second-order element.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSecondOrder {
    pub q: f64,
    pub phi: f64,
    pub psi: f64,
    pub c: f64,
}

impl ScalarSecondOrder {
    /// The canonical embedding of a factor weight: `(p, pa, pb, pab)`.
    pub fn weight(p: f64, a: f64, b: f64) -> Self {
        ScalarSecondOrder { q: p, phi: p * a, psi: p * b, c: p * a * b }
    }
}

pub struct SecondOrder;

impl Semiring for SecondOrder {
    type Elem = ScalarSecondOrder;

    fn zero(&self) -> ScalarSecondOrder {
        ScalarSecondOrder { q: 0.0, phi: 0.0, psi: 0.0, c: 0.0 }
    }

    fn one(&self) -> ScalarSecondOrder {
        ScalarSecondOrder { q: 1.0, phi: 0.0, psi: 0.0, c: 0.0 }
    }

    fn assign(&self, dst: &mut ScalarSecondOrder, src: &ScalarSecondOrder) {
        dst.q = src.q;
        dst.phi = src.phi;
        dst.psi = src.psi;
        dst.c = src.c;
    }

    fn add_assign(&self, acc: &mut ScalarSecondOrder, x: &ScalarSecondOrder) {
        acc.q += x.q;
        acc.phi += x.phi;
        acc.psi += x.psi;
        acc.c += x.c;
    }

    fn mul_assign(&self, acc: &mut ScalarSecondOrder, x: &ScalarSecondOrder) {
        // The c slot reads the old q/phi/psi, so update it first.
        acc.c = acc.q * x.c + x.q * acc.c + acc.phi * x.psi + x.phi * acc.psi;
        acc.phi = acc.q * x.phi + x.q * acc.phi;
        acc.psi = acc.q * x.psi + x.q * acc.psi;
        acc.q *= x.q;
    }
}

/// Vectorized second-order element: `φ, ψ ∈ R^D`, `c ∈ R^{D×D}`. A single
/// tree pass accumulates the whole matrix `Σ_y p(y) φ(y) ψ(y)^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSecondOrder {
    pub q: f64,
    pub phi: DVector<f64>,
    pub psi: DVector<f64>,
    pub c: DMatrix<f64>,
}

pub struct VectorizedSemiring {
    pub dim: usize,
}

impl VectorizedSemiring {
    /// Weight embedding with `a = b = φ`: `(p, pφ, pφ, pφφ^T)`.
    pub fn weight(&self, p: f64, phi: &DVector<f64>) -> VectorSecondOrder {
        VectorSecondOrder {
            q: p,
            phi: phi * p,
            psi: phi * p,
            c: phi * phi.transpose() * p,
        }
    }
}

impl Semiring for VectorizedSemiring {
    type Elem = VectorSecondOrder;

    fn zero(&self) -> VectorSecondOrder {
        VectorSecondOrder {
            q: 0.0,
            phi: DVector::zeros(self.dim),
            psi: DVector::zeros(self.dim),
            c: DMatrix::zeros(self.dim, self.dim),
        }
    }

    fn one(&self) -> VectorSecondOrder {
        VectorSecondOrder {
            q: 1.0,
            phi: DVector::zeros(self.dim),
            psi: DVector::zeros(self.dim),
            c: DMatrix::zeros(self.dim, self.dim),
        }
    }

    fn assign(&self, dst: &mut VectorSecondOrder, src: &VectorSecondOrder) {
        dst.q = src.q;
        dst.phi.copy_from(&src.phi);
        dst.psi.copy_from(&src.psi);
        dst.c.copy_from(&src.c);
    }

    fn add_assign(&self, acc: &mut VectorSecondOrder, x: &VectorSecondOrder) {
        acc.q += x.q;
        acc.phi += &x.phi;
        acc.psi += &x.psi;
        acc.c += &x.c;
    }

    fn mul_assign(&self, acc: &mut VectorSecondOrder, x: &VectorSecondOrder) {
        // c before phi/psi before q: later slots read earlier values.
        acc.c *= x.q;
        acc.c.zip_apply(&x.c, |a, b| *a += acc.q * b);
        acc.c.ger(1.0, &acc.phi, &x.psi, 1.0);
        acc.c.ger(1.0, &x.phi, &acc.psi, 1.0);
        let q_old = acc.q;
        acc.phi *= x.q;
        acc.phi.axpy(q_old, &x.phi, 1.0);
        acc.psi *= x.q;
        acc.psi.axpy(q_old, &x.psi, 1.0);
        acc.q *= x.q;
    }
}

/// A batch of scalar second-order instances with `φ = ψ` (so only one
/// additive slot is stored), advanced in lockstep. Sampling uses one
/// instance per eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchQuadratic {
    pub q: f64,
    pub a: DVector<f64>,
    pub c: DVector<f64>,
}

pub struct BatchQuadraticSemiring {
    pub batch: usize,
}

impl BatchQuadraticSemiring {
    /// Weight embedding `(p, pa_j, pa_j^2)` per batch entry.
    pub fn weight(&self, p: f64, a: &DVector<f64>) -> BatchQuadratic {
        BatchQuadratic { q: p, a: a * p, c: a.map(|v| p * v * v) }
    }
}

impl Semiring for BatchQuadraticSemiring {
    type Elem = BatchQuadratic;

    fn zero(&self) -> BatchQuadratic {
        BatchQuadratic { q: 0.0, a: DVector::zeros(self.batch), c: DVector::zeros(self.batch) }
    }

    fn one(&self) -> BatchQuadratic {
        BatchQuadratic { q: 1.0, a: DVector::zeros(self.batch), c: DVector::zeros(self.batch) }
    }

    fn assign(&self, dst: &mut BatchQuadratic, src: &BatchQuadratic) {
        dst.q = src.q;
        dst.a.copy_from(&src.a);
        dst.c.copy_from(&src.c);
    }

    fn add_assign(&self, acc: &mut BatchQuadratic, x: &BatchQuadratic) {
        acc.q += x.q;
        acc.a += &x.a;
        acc.c += &x.c;
    }

    fn mul_assign(&self, acc: &mut BatchQuadratic, x: &BatchQuadratic) {
        for j in 0..self.batch {
            acc.c[j] = acc.q * x.c[j] + x.q * acc.c[j] + 2.0 * acc.a[j] * x.a[j];
        }
        let q_old = acc.q;
        for j in 0..self.batch {
            acc.a[j] = q_old * x.a[j] + x.q * acc.a[j];
        }
        acc.q *= x.q;
    }
}
