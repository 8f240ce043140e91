//! Reference vector-symbolic kernels.
//!
//! Everything here is written with the direct formulas (the O(d²) circular
//! convolution in particular) so it can serve as the oracle for the
//! simulated datapaths in [`crate::sim`].

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

/// Element type for hypervectors and simulated datapaths.
pub trait Scalar:
    Copy
    + Debug
    + Default
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    /// Whether arithmetic on this type is exact (integers).
    const EXACT: bool;

    fn to_f64(self) -> f64;
    /// Conversion from f64; integer types round to nearest.
    fn from_f64(v: f64) -> Self;
}

macro_rules! impl_scalar_int {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            const ZERO: Self = 0;
            const ONE: Self = 1;
            const EXACT: bool = true;
            fn to_f64(self) -> f64 { self as f64 }
            fn from_f64(v: f64) -> Self { v.round() as $t }
        }
    )*};
}

macro_rules! impl_scalar_float {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const EXACT: bool = false;
            fn to_f64(self) -> f64 { self as f64 }
            fn from_f64(v: f64) -> Self { v as $t }
        }
    )*};
}

impl_scalar_int!(i32, i64);
impl_scalar_float!(f32, f64);

/// Value class of a hypervector's elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueClass {
    Bipolar,
    Real,
    Quantized,
}

/// A fixed-dimension vector of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypervector<T = i32> {
    elems: Vec<T>,
    class: ValueClass,
}

impl<T: Scalar> Hypervector<T> {
    pub fn real(elems: Vec<T>) -> Result<Self> {
        Self::with_class(elems, ValueClass::Real)
    }

    /// Builds a bipolar vector, rejecting any element outside {-1, +1}.
    pub fn bipolar(elems: Vec<T>) -> Result<Self> {
        if let Some(pos) = elems.iter().position(|&x| x != T::ONE && x != -T::ONE) {
            return Err(Error::InvalidInput(format!(
                "bipolar vector has {:?} at index {pos}",
                elems[pos]
            )));
        }
        Self::with_class(elems, ValueClass::Bipolar)
    }

    pub fn with_class(elems: Vec<T>, class: ValueClass) -> Result<Self> {
        if elems.is_empty() {
            return Err(Error::InvalidInput("hypervector dimension must be >= 1".into()));
        }
        if class == ValueClass::Bipolar && elems.iter().any(|&x| x != T::ONE && x != -T::ONE) {
            return Err(Error::InvalidInput("bipolar tag on non-bipolar data".into()));
        }
        Ok(Self { elems, class })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::real(vec![T::ZERO; dim])
    }

    /// `[1, 0, ..., 0]`, the identity of circular convolution.
    pub fn unit_impulse(dim: usize) -> Result<Self> {
        let mut v = vec![T::ZERO; dim];
        if let Some(first) = v.first_mut() {
            *first = T::ONE;
        }
        Self::real(v)
    }

    pub fn dim(&self) -> usize {
        self.elems.len()
    }

    pub fn class(&self) -> ValueClass {
        self.class
    }

    pub fn as_slice(&self) -> &[T] {
        &self.elems
    }

    pub fn into_vec(self) -> Vec<T> {
        self.elems
    }

    pub fn is_bipolar(&self) -> bool {
        self.elems.iter().all(|&x| x == T::ONE || x == -T::ONE)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Hypervector<U> {
        let elems: Vec<U> = self.elems.iter().map(|&x| f(x)).collect();
        let class = if self.class == ValueClass::Bipolar
            && elems.iter().all(|&x| x == U::ONE || x == -U::ONE)
        {
            ValueClass::Bipolar
        } else if self.class == ValueClass::Bipolar {
            ValueClass::Real
        } else {
            self.class
        };
        Hypervector { elems, class }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.elems.iter().map(|x| x.to_f64()).collect()
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self
            .elems
            .iter()
            .zip(&other.elems)
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum())
    }
}

impl<T: Scalar> std::ops::Index<usize> for Hypervector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.elems[i]
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine<T: Scalar>(a: &Hypervector<T>, b: &Hypervector<T>) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(cosine_slices(&a.to_f64(), &b.to_f64()))
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// Circular convolution by the direct formula:
/// `c[n] = Σ_k a[k] · b[(n - k) mod d]`.
pub fn circ_conv<T: Scalar>(a: &Hypervector<T>, b: &Hypervector<T>) -> Result<Hypervector<T>> {
    check_dims(a.dim(), b.dim())?;
    let d = a.dim();
    let (a, b) = (a.as_slice(), b.as_slice());
    let out = (0..d)
        .map(|n| {
            let mut acc = T::ZERO;
            for (k, &ak) in a.iter().enumerate() {
                acc = acc + ak * b[(n + d - k) % d];
            }
            acc
        })
        .collect();
    Hypervector::real(out)
}

/// Circular correlation: `c[n] = Σ_k a[k] · b[(n + k) mod d]`.
pub fn circ_corr<T: Scalar>(a: &Hypervector<T>, b: &Hypervector<T>) -> Result<Hypervector<T>> {
    check_dims(a.dim(), b.dim())?;
    let d = a.dim();
    let (a, b) = (a.as_slice(), b.as_slice());
    let out = (0..d)
        .map(|n| {
            let mut acc = T::ZERO;
            for (k, &ak) in a.iter().enumerate() {
                acc = acc + ak * b[(n + k) % d];
            }
            acc
        })
        .collect();
    Hypervector::real(out)
}

/// Keeps index 0 in place and reverses indices `1..d`, i.e. `out[i] = v[(d - i) mod d]`.
pub fn reverse_circular<T: Scalar>(v: &Hypervector<T>) -> Hypervector<T> {
    let d = v.dim();
    let elems = (0..d).map(|i| v.elems[(d - i) % d]).collect();
    Hypervector { elems, class: v.class }
}

/// Element-wise product binding.
pub fn elem_bind<T: Scalar>(a: &Hypervector<T>, b: &Hypervector<T>) -> Result<Hypervector<T>> {
    check_dims(a.dim(), b.dim())?;
    let elems = a.elems.iter().zip(&b.elems).map(|(&x, &y)| x * y).collect();
    let class = if a.class == ValueClass::Bipolar && b.class == ValueClass::Bipolar {
        ValueClass::Bipolar
    } else {
        ValueClass::Real
    };
    Ok(Hypervector { elems, class })
}

/// Unbinds every vector in `others` from `q`. Bipolar binding is
/// self-inverse, so this is the element-wise product of `q` with all of them.
pub fn elem_unbind<T: Scalar>(q: &Hypervector<T>, others: &[&Hypervector<T>]) -> Result<Hypervector<T>> {
    if others.is_empty() {
        return Err(Error::InvalidInput("unbind needs at least one vector to remove".into()));
    }
    others.iter().try_fold(q.clone(), |acc, o| elem_bind(&acc, o))
}

/// One factor's candidate codevectors, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    factor_index: usize,
    num_codes: usize,
    dim: usize,
    codes: Vec<i32>,
}

impl Codebook {
    pub fn new(factor_index: usize, rows: Vec<Hypervector<i32>>) -> Result<Self> {
        let dim = rows
            .first()
            .map(Hypervector::dim)
            .ok_or_else(|| Error::InvalidInput("codebook needs at least one code".into()))?;
        let mut codes = Vec::with_capacity(rows.len() * dim);
        for (j, row) in rows.iter().enumerate() {
            check_dims(dim, row.dim())?;
            if !row.is_bipolar() {
                return Err(Error::InvalidInput(format!("codebook row {j} is not bipolar")));
            }
            codes.extend_from_slice(row.as_slice());
        }
        let cb = Self { factor_index, num_codes: rows.len(), dim, codes };
        for j in 0..cb.num_codes {
            for i in 0..j {
                if cb.row(i) == cb.row(j) {
                    return Err(Error::InvalidInput(format!("codebook rows {i} and {j} are identical")));
                }
            }
        }
        Ok(cb)
    }

    /// Draws `num_codes` random bipolar rows (redrawing any duplicate).
    pub fn random<R: Rng + ?Sized>(factor_index: usize, num_codes: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if num_codes == 0 {
            return Err(Error::InvalidInput("codebook needs at least one code".into()));
        }
        if dim < 64 && (num_codes as f64) > 2f64.powi(dim as i32) {
            return Err(Error::InvalidInput(format!("cannot draw {num_codes} distinct codes of dimension {dim}")));
        }
        let mut rows: Vec<Hypervector<i32>> = Vec::with_capacity(num_codes);
        while rows.len() < num_codes {
            let candidate = random_bipolar(dim, rng)?;
            if !rows.contains(&candidate) {
                rows.push(candidate);
            }
        }
        Self::new(factor_index, rows)
    }

    pub fn factor_index(&self) -> usize {
        self.factor_index
    }

    pub fn num_codes(&self) -> usize {
        self.num_codes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, j: usize) -> &[i32] {
        &self.codes[j * self.dim..(j + 1) * self.dim]
    }

    pub fn row_vector(&self, j: usize) -> Result<Hypervector<i32>> {
        if j >= self.num_codes {
            return Err(Error::IndexOutOfRange { index: j, len: self.num_codes });
        }
        Ok(Hypervector { elems: self.row(j).to_vec(), class: ValueClass::Bipolar })
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i32]> {
        self.codes.chunks_exact(self.dim)
    }

    pub fn storage_elems(&self) -> usize {
        self.codes.len()
    }
}

/// Similarity of one vector against every code of a codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityVector {
    pub factor_index: usize,
    pub values: Vec<f64>,
}

impl SimilarityVector {
    /// Index of the largest value; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = j;
            }
        }
        best
    }
}

/// `values[j] = dot(x, codevector[j])`.
pub fn similarity<T: Scalar>(x: &Hypervector<T>, cb: &Codebook) -> Result<SimilarityVector> {
    check_dims(cb.dim, x.dim())?;
    let values = cb
        .rows()
        .map(|row| row.iter().zip(&x.elems).map(|(&c, &v)| c as f64 * v.to_f64()).sum())
        .collect();
    Ok(SimilarityVector { factor_index: cb.factor_index, values })
}

/// `sign(Σ_j alpha[j] · codevector[j])`, with sign(0) = +1.
pub fn project(alpha: &SimilarityVector, cb: &Codebook) -> Result<Hypervector<i32>> {
    project_weights(&alpha.values, cb)
}

pub(crate) fn project_weights(weights: &[f64], cb: &Codebook) -> Result<Hypervector<i32>> {
    check_dims(cb.num_codes, weights.len())?;
    let mut acc = vec![0.0f64; cb.dim];
    for (row, &w) in cb.rows().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (a, &c) in acc.iter_mut().zip(row) {
            *a += w * c as f64;
        }
    }
    Ok(Hypervector { elems: acc.into_iter().map(sign).collect(), class: ValueClass::Bipolar })
}

/// Bipolar sign with the tie at zero resolved to +1.
pub fn sign(x: f64) -> i32 {
    if x < 0.0 {
        -1
    } else {
        1
    }
}

/// I.i.d. uniform {-1, +1} elements.
pub fn random_bipolar<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Hypervector<i32>> {
    if dim == 0 {
        return Err(Error::InvalidInput("hypervector dimension must be >= 1".into()));
    }
    let mut elems = Vec::with_capacity(dim);
    while elems.len() < dim {
        let mut bits: u64 = rng.random();
        for _ in 0..64.min(dim - elems.len()) {
            elems.push(if bits & 1 == 1 { 1 } else { -1 });
            bits >>= 1;
        }
    }
    Ok(Hypervector { elems, class: ValueClass::Bipolar })
}
