//! The linear-estimator calculus.
//!
//! Every announcement an agent makes is an unbiased linear combination of
//! the private signals, represented as a [`CoefVector`] over nodes. Because
//! the signals are independent with unit variance, the covariance between
//! two such estimators is the dot product of their coefficient vectors; the
//! covariance matrix of a memory of estimators is its [`GramMatrix`].
//!
//! Fusing a memory into the minimum-variance unbiased estimator reduces to:
//! pick a maximal independent subset ([`select_basis`]), form its Gram
//! matrix ([`gram`]), solve `C·y = 1` and normalize to sum one
//! ([`solve_gamma`]), and push the weights back onto signal coordinates
//! ([`combine`]). [`bayes_update`] is that composition.
//!
//! All operations are pure and generic over the [`Scalar`] backend, so the
//! same code path produces exact fractions or floats.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is singular or not positive definite")]
    NotPositiveDefinite,
}

/// An estimator written as coefficients over the private signals: entry `v`
/// is the weight on agent `v`'s signal.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefVector<S: Scalar> {
    coeffs: Vec<S>,
}

impl<S: Scalar> CoefVector<S> {
    pub fn new(coeffs: Vec<S>) -> Self {
        CoefVector { coeffs }
    }

    /// The standard basis vector `e_v`: weight one on `v`'s own signal.
    pub fn basis(n: usize, v: usize) -> Self {
        assert!(v < n, "basis index out of range");
        let mut coeffs = vec![S::zero(); n];
        coeffs[v] = S::one();
        CoefVector { coeffs }
    }

    /// The simple average `(1/n, ..., 1/n)`.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        CoefVector {
            coeffs: vec![S::ratio(1, n as i64); n],
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn get(&self, v: usize) -> &S {
        &self.coeffs[v]
    }

    pub fn sum(&self) -> S {
        self.coeffs
            .iter()
            .fold(S::zero(), |acc, c| acc + c.clone())
    }

    pub fn dot(&self, other: &Self) -> S {
        assert_eq!(self.len(), other.len(), "coefficient length mismatch");
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(S::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
    }

    /// Squared norm, i.e. the variance of the estimator under unit-variance
    /// independent signals.
    pub fn norm_sq(&self) -> S {
        self.dot(self)
    }

    /// Coefficient sum equals one (exactly, or within the backend tolerance).
    pub fn is_unbiased(&self) -> bool {
        self.sum().eq_scalar(&S::one())
    }

    /// Componentwise equality under the backend's change-detection
    /// tolerance; this is the "did this estimator move" comparison.
    pub fn approx_eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .all(|(a, b)| a.eq_scalar(b))
    }

    /// Whether two agents' estimators coincide: exact on the rational
    /// backend, within the cross-agent agreement tolerance on floats
    /// (independent solve roundoff keeps distinct agents' fixed points a
    /// hair apart even once they all sit on the common limit).
    pub fn coincides(&self, other: &Self) -> bool {
        match S::BACKEND {
            crate::scalar::Backend::Rational => self == other,
            crate::scalar::Backend::Float => {
                self.len() == other.len()
                    && self.max_abs_diff_f64(other) <= crate::scalar::FLOAT_AGREE_TOL
            }
        }
    }

    pub fn max_abs_diff_f64(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_float(&self) -> CoefVector<f64> {
        CoefVector {
            coeffs: self.coeffs.iter().map(Scalar::to_f64).collect(),
        }
    }
}

/// Covariance matrix of a set of estimators: entry `(i, j)` is the dot
/// product of coefficient vectors `i` and `j`. Symmetric by construction;
/// positive definite exactly when the generating vectors are independent.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix<S: Scalar> {
    size: usize,
    // row-major, size*size entries
    data: Vec<S>,
}

impl<S: Scalar> GramMatrix<S> {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.size + j]
    }

    /// Builds a matrix from explicit rows, enforcing squareness and symmetry.
    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self, AlgebraError> {
        let size = rows.len();
        if size == 0 {
            return Err(AlgebraError::EmptyInput("rows"));
        }
        if rows.iter().any(|r| r.len() != size) {
            return Err(AlgebraError::DimensionMismatch(format!(
                "expected {size}x{size} matrix"
            )));
        }
        let data: Vec<S> = rows.into_iter().flatten().collect();
        let m = GramMatrix { size, data };
        for i in 0..size {
            for j in 0..i {
                if m.get(i, j) != m.get(j, i) {
                    return Err(AlgebraError::NotSymmetric);
                }
            }
        }
        Ok(m)
    }

    /// Entrywise scaling, e.g. by a common signal variance.
    pub fn scaled(&self, factor: &S) -> Self {
        GramMatrix {
            size: self.size,
            data: self
                .data
                .iter()
                .map(|x| x.clone() * factor.clone())
                .collect(),
        }
    }
}

/// The minimum-variance fusion weights over a memory basis, together with
/// the variance of the fused estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaWeights<S: Scalar> {
    pub gamma: Vec<S>,
    pub tau_sq: S,
}

/// Result of [`bayes_update`]: the fused estimator, its variance, and the
/// dimension of the memory's span.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate<S: Scalar> {
    pub beta: CoefVector<S>,
    pub tau_sq: S,
    pub dim: usize,
}

/// Covariance (Gram) matrix of `vectors`.
pub fn gram<S: Scalar>(vectors: &[CoefVector<S>]) -> Result<GramMatrix<S>, AlgebraError> {
    let refs: Vec<&CoefVector<S>> = vectors.iter().collect();
    gram_of(&refs)
}

fn gram_of<S: Scalar>(vectors: &[&CoefVector<S>]) -> Result<GramMatrix<S>, AlgebraError> {
    let k = vectors.len();
    if k == 0 {
        return Err(AlgebraError::EmptyInput("vectors"));
    }
    let n = vectors[0].len();
    if let Some(bad) = vectors.iter().find(|v| v.len() != n) {
        return Err(AlgebraError::DimensionMismatch(format!(
            "vector of length {} among vectors of length {n}",
            bad.len()
        )));
    }
    let mut data = vec![S::zero(); k * k];
    for i in 0..k {
        for j in 0..=i {
            let entry = vectors[i].dot(vectors[j]);
            data[i * k + j] = entry.clone();
            data[j * k + i] = entry;
        }
    }
    Ok(GramMatrix { size: k, data })
}

/// Indices of a maximal linearly independent subset of `vectors`, chosen
/// greedily in list order (earliest vector wins). The Gram matrix restricted
/// to these indices is positive definite.
///
/// Dependence is decided by the squared residual a candidate keeps after
/// projection onto the span of the kept vectors. That residual is computed
/// as the candidate's pivot in an incrementally grown LDLᵀ factorization of
/// the kept set's Gram matrix, with the same arithmetic [`solve_gamma`]
/// uses, so on the float backend a selected basis can never be rejected by
/// the downstream factorization: both compute bit-identical pivots.
pub fn select_basis<S: Scalar>(vectors: &[CoefVector<S>]) -> Vec<usize> {
    let Some(first) = vectors.first() else {
        return Vec::new();
    };
    let n = first.len();
    assert!(
        vectors.iter().all(|v| v.len() == n),
        "coefficient length mismatch"
    );

    let mut selected: Vec<usize> = Vec::new();
    let mut kept: Vec<&CoefVector<S>> = Vec::new();
    // factor of the kept set's Gram: row s holds L[s][0..s], pivots[s] = D[s]
    let mut factor: Vec<Vec<S>> = Vec::new();
    let mut pivots: Vec<S> = Vec::new();

    for (i, v) in vectors.iter().enumerate() {
        if selected.len() == n {
            break; // the span is already full
        }
        let norm_sq = v.norm_sq();
        // forward-substitute the candidate's Gram row through the factor
        let mut row: Vec<S> = Vec::with_capacity(kept.len());
        for (s, b) in kept.iter().enumerate() {
            let mut acc = v.dot(b);
            for t in 0..s {
                acc = acc - row[t].clone() * factor[s][t].clone() * pivots[t].clone();
            }
            row.push(acc / pivots[s].clone());
        }
        let mut pivot = norm_sq.clone();
        for (l, d) in row.iter().zip(&pivots) {
            pivot = pivot - l.clone() * l.clone() * d.clone();
        }
        if !S::residual_dependent(&pivot, &norm_sq) {
            selected.push(i);
            kept.push(v);
            factor.push(row);
            pivots.push(pivot);
        }
    }
    selected
}

/// Solves for the minimum-variance unbiased weights over a positive-definite
/// covariance matrix: `gamma` solves `C·gamma ∝ 1` normalized to sum one, and
/// `tau_sq` is the variance `1 / (1'C⁻¹1)` of the combination.
///
/// The system is solved through a square-root-free LDLᵀ factorization
/// (never an explicit inverse), which is exact on the rational backend and
/// is the standard stable factorization for symmetric positive-definite
/// matrices on the float backend. A non-positive pivot means the matrix is singular or
/// indefinite (typically: the caller skipped basis selection).
pub fn solve_gamma<S: Scalar>(c: &GramMatrix<S>) -> Result<GammaWeights<S>, AlgebraError> {
    let y = ldlt_solve_ones(c)?;
    let sum = y.iter().fold(S::zero(), |acc, x| acc + x.clone());
    if !sum.valid_pivot() {
        return Err(AlgebraError::NotPositiveDefinite);
    }
    let tau_sq = S::one() / sum.clone();
    let gamma = y.into_iter().map(|x| x / sum.clone()).collect();
    Ok(GammaWeights { gamma, tau_sq })
}

/// Solves `C·y = 1` via `C = L·D·Lᵀ` with unit lower-triangular `L`.
fn ldlt_solve_ones<S: Scalar>(c: &GramMatrix<S>) -> Result<Vec<S>, AlgebraError> {
    let k = c.size();
    let mut l = vec![S::zero(); k * k];
    let mut d = vec![S::zero(); k];
    for j in 0..k {
        let mut dj = c.get(j, j).clone();
        for s in 0..j {
            dj = dj - l[j * k + s].clone() * l[j * k + s].clone() * d[s].clone();
        }
        if !dj.valid_pivot() {
            return Err(AlgebraError::NotPositiveDefinite);
        }
        for i in j + 1..k {
            let mut lij = c.get(i, j).clone();
            for s in 0..j {
                lij = lij - l[i * k + s].clone() * l[j * k + s].clone() * d[s].clone();
            }
            l[i * k + j] = lij / dj.clone();
        }
        d[j] = dj;
    }
    // forward: L z = 1
    let mut z = vec![S::one(); k];
    for i in 0..k {
        for s in 0..i {
            z[i] = z[i].clone() - l[i * k + s].clone() * z[s].clone();
        }
    }
    // diagonal and backward: Lᵀ y = D⁻¹ z
    let mut y: Vec<S> = z.into_iter().zip(&d).map(|(zi, di)| zi / di.clone()).collect();
    for i in (0..k).rev() {
        for s in i + 1..k {
            y[i] = y[i].clone() - l[s * k + i].clone() * y[s].clone();
        }
    }
    Ok(y)
}

/// The weighted combination `Σ_i gamma_i · basis_i` in signal coordinates.
/// With sum-one weights over unbiased vectors the result is unbiased again.
pub fn combine<S: Scalar>(
    gamma: &GammaWeights<S>,
    basis: &[CoefVector<S>],
) -> Result<CoefVector<S>, AlgebraError> {
    let refs: Vec<&CoefVector<S>> = basis.iter().collect();
    combine_of(gamma, &refs)
}

fn combine_of<S: Scalar>(
    gamma: &GammaWeights<S>,
    basis: &[&CoefVector<S>],
) -> Result<CoefVector<S>, AlgebraError> {
    if basis.is_empty() {
        return Err(AlgebraError::EmptyInput("basis"));
    }
    if gamma.gamma.len() != basis.len() {
        return Err(AlgebraError::DimensionMismatch(format!(
            "{} weights over {} basis vectors",
            gamma.gamma.len(),
            basis.len()
        )));
    }
    let n = basis[0].len();
    if basis.iter().any(|b| b.len() != n) {
        return Err(AlgebraError::DimensionMismatch(
            "basis vectors of unequal length".into(),
        ));
    }
    let mut coeffs = vec![S::zero(); n];
    for (g, b) in gamma.gamma.iter().zip(basis) {
        for (acc, c) in coeffs.iter_mut().zip(b.coeffs()) {
            *acc = acc.clone() + g.clone() * c.clone();
        }
    }
    Ok(CoefVector::new(coeffs))
}

/// Fuses a memory of unbiased estimators into the minimum-variance unbiased
/// estimator in its span: basis selection, Gram matrix, weight solve, and
/// combination, in that order.
pub fn bayes_update<S: Scalar>(memory: &[CoefVector<S>]) -> Result<Estimate<S>, AlgebraError> {
    if memory.is_empty() {
        return Err(AlgebraError::EmptyInput("memory"));
    }
    let idx = select_basis(memory);
    let basis: Vec<&CoefVector<S>> = idx.iter().map(|&i| &memory[i]).collect();
    let c = gram_of(&basis)?;
    let weights = solve_gamma(&c)?;
    let beta = combine_of(&weights, &basis)?;
    Ok(Estimate {
        beta,
        tau_sq: weights.tau_sq,
        dim: idx.len(),
    })
}
