//! Counted black-box matrix-vector access.
//!
//! Algorithms in this crate may touch a matrix only through [`MatVecOracle`],
//! which meters every forward and adjoint application. Three backings are
//! provided: an explicit dense matrix, a rotated diagonal `U D U^T` whose
//! rotation is applied implicitly, and a lazy Haar-random orthogonal matrix
//! that materializes itself one query at a time while keeping the unobserved
//! block exactly Haar-distributed on the orthogonal complement.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, dot, nrm2, scale, Mat};
use crate::rng::{gaussian_vector, seeded_rng, Prng};

/// Relative tolerance below which a query counts as linearly dependent on
/// the transcript and is answered without new randomness.
pub const DEFLATION_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("dimension must be positive")]
    InvalidDimension,
    #[error("query/vector length {got} does not match oracle dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("one-sided oracle rejects adjoint applications")]
    AdjointUnsupported,
    #[error("zero vector is not a valid query")]
    InvalidQuery,
    #[error("oracle exhausted: {0} independent queries already recorded")]
    Exhausted(usize),
    #[error("transcript deserialization failed: {0}")]
    BadTranscript(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    OneSided,
    TwoSided,
}

/// Haar-random orthogonal matrix via QR of an i.i.d. standard-normal matrix,
/// with the sign of each diagonal entry of the triangular factor forced
/// positive. Deterministic given the seed.
pub fn haar_orthogonal(n: usize, seed: u64) -> Result<Mat, OracleError> {
    if n == 0 {
        return Err(OracleError::InvalidDimension);
    }
    let mut rng = seeded_rng(seed);
    haar_orthogonal_with(n, &mut rng)
}

pub fn haar_orthogonal_with(n: usize, rng: &mut impl Rng) -> Result<Mat, OracleError> {
    if n == 0 {
        return Err(OracleError::InvalidDimension);
    }
    let g = Mat::from_fn(n, n, |_, _| rng.sample(rand_distr::StandardNormal));
    let (mut q, r) = crate::linalg::householder_qr(&g);
    // Without the sign correction the factor is not Haar.
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}

/// Haar rotation stored as a product of Householder reflectors plus a sign
/// diagonal: sampling costs O(n^2) and each application costs ~2n^2 flops,
/// so large rotated-diagonal instances never materialize an n x n matrix.
///
/// This performs the same arithmetic as Householder QR of a Gaussian matrix
/// with the positive-diagonal convention, sampling the reduced columns
/// directly (each is conditionally standard normal).
#[derive(Clone, Debug)]
pub struct HouseholderProduct {
    n: usize,
    /// Reflector k occupies `data[offset(k)..offset(k) + (n - k)]`, acts on
    /// coordinates `k..`, and is scaled so H = I - u u^T. Contiguous storage
    /// keeps the apply loops memory-streaming.
    data: Vec<f64>,
    signs: Vec<f64>,
}

impl HouseholderProduct {
    pub fn sample(n: usize, rng: &mut impl Rng) -> Self {
        assert!(n >= 1, "dimension must be positive");
        let mut data = Vec::with_capacity(n * (n + 1) / 2);
        let mut signs = Vec::with_capacity(n);
        for k in 0..n - 1 {
            let mut x = gaussian_vector(n - k, rng);
            let norm = nrm2(&x);
            // The reflector maps x to -sign(x_0)*||x|| e_0; the sign diagonal
            // restores the positive-diagonal convention.
            let s = if x[0] >= 0.0 { 1.0 } else { -1.0 };
            signs.push(-s);
            x[0] += s * norm;
            let vnorm = nrm2(&x);
            if vnorm > 0.0 {
                scale(2.0f64.sqrt() / vnorm, &mut x);
            }
            data.extend_from_slice(&x);
        }
        let last: f64 = rng.sample(rand_distr::StandardNormal);
        signs.push(if last >= 0.0 { 1.0 } else { -1.0 });
        HouseholderProduct { n, data, signs }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn offset(&self, k: usize) -> usize {
        k * (2 * self.n - k + 1) / 2
    }

    #[inline]
    fn reflect(u: &[f64], w: &mut [f64]) {
        let t = dot(u, w);
        axpy(-t, u, w);
    }

    /// `Q v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut w: Vec<f64> = v.iter().zip(&self.signs).map(|(x, s)| x * s).collect();
        for k in (0..self.n.saturating_sub(1)).rev() {
            let off = self.offset(k);
            Self::reflect(&self.data[off..off + self.n - k], &mut w[k..]);
        }
        w
    }

    /// `Q^T v`
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut w = v.to_vec();
        for k in 0..self.n.saturating_sub(1) {
            let off = self.offset(k);
            Self::reflect(&self.data[off..off + self.n - k], &mut w[k..]);
        }
        for (wi, s) in w.iter_mut().zip(&self.signs) {
            *wi *= *s;
        }
        w
    }

    pub fn to_dense(&self) -> Mat {
        let cols: Vec<Vec<f64>> = (0..self.n)
            .map(|j| self.apply(&crate::linalg::unit_vector(self.n, j)))
            .collect();
        Mat::from_columns(&cols)
    }
}

/// Twice-iterated Gram-Schmidt. Returns an orthonormal basis for the span of
/// the inputs and the number of inputs rejected as dependent (deflations).
pub fn orthonormalize(vectors: &[Vec<f64>], tol: f64) -> (Vec<Vec<f64>>, usize) {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut deflations = 0;
    for v in vectors {
        match orthonormal_residual(&basis, v, tol) {
            Some((_, residual, _)) => basis.push(residual),
            None => deflations += 1,
        }
    }
    (basis, deflations)
}

/// Two-pass projection of `v` against an orthonormal `basis`. Returns the
/// coefficients, the normalized residual, and the residual norm `gamma`, or
/// `None` when `v` lies in the span to within `tol * ||v||`.
fn orthonormal_residual(
    basis: &[Vec<f64>],
    v: &[f64],
    tol: f64,
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let norm_v = nrm2(v);
    let mut w = v.to_vec();
    let mut coeffs = vec![0.0; basis.len()];
    for _pass in 0..2 {
        for (c, b) in coeffs.iter_mut().zip(basis) {
            let proj = dot(b, &w);
            axpy(-proj, b, &mut w);
            *c += proj;
        }
    }
    let gamma = nrm2(&w);
    if gamma <= tol * norm_v {
        None
    } else {
        scale(1.0 / gamma, &mut w);
        Some((coeffs, w, gamma))
    }
}

/// Deterministic orthonormal basis of the orthogonal complement of the span
/// of `basis` (columns assumed orthonormal), via full Householder QR.
pub fn orthonormal_complement(basis: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let r = basis.len();
    if r == 0 {
        return (0..n).map(|j| crate::linalg::unit_vector(n, j)).collect();
    }
    if r >= n {
        return Vec::new();
    }
    let padded = Mat::from_fn(n, n, |i, j| if j < r { basis[j][i] } else { 0.0 });
    let (q, _) = crate::linalg::householder_qr(&padded);
    (r..n).map(|j| q.column(j)).collect()
}

/// Ordered query/response record of a one-sided algorithm, together with the
/// orthonormalized query and response bases it induces.
#[derive(Clone, Debug)]
pub struct Transcript {
    n: usize,
    seed: u64,
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    z_basis: Vec<Vec<f64>>,
    v_basis: Vec<Vec<f64>>,
    deflations: usize,
}

#[derive(Serialize, Deserialize)]
struct TranscriptPairJson {
    z: Vec<f64>,
    r: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TranscriptJson {
    n: usize,
    pairs: Vec<TranscriptPairJson>,
    seed: u64,
}

impl Transcript {
    fn new(n: usize, seed: u64) -> Self {
        Transcript {
            n,
            seed,
            pairs: Vec::new(),
            z_basis: Vec::new(),
            v_basis: Vec::new(),
            deflations: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of raw queries recorded.
    pub fn num_queries(&self) -> usize {
        self.pairs.len()
    }

    /// Number of linearly independent queries (columns of Z and V).
    pub fn rank(&self) -> usize {
        self.z_basis.len()
    }

    pub fn deflations(&self) -> usize {
        self.deflations
    }

    pub fn pairs(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.pairs
    }

    pub fn query_basis(&self) -> &[Vec<f64>] {
        &self.z_basis
    }

    pub fn response_basis(&self) -> &[Vec<f64>] {
        &self.v_basis
    }

    pub fn to_json(&self) -> String {
        let shadow = TranscriptJson {
            n: self.n,
            seed: self.seed,
            pairs: self
                .pairs
                .iter()
                .map(|(z, r)| TranscriptPairJson {
                    z: z.clone(),
                    r: r.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&shadow).expect("transcript serialization cannot fail")
    }

    /// Rebuild a transcript from its JSON form, replaying the recorded pairs
    /// through the same incremental orthonormalization.
    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let shadow: TranscriptJson =
            serde_json::from_str(text).map_err(|e| OracleError::BadTranscript(e.to_string()))?;
        let mut t = Transcript::new(shadow.n, shadow.seed);
        for pair in shadow.pairs {
            if pair.z.len() != shadow.n || pair.r.len() != shadow.n {
                return Err(OracleError::BadTranscript(
                    "pair length does not match dimension".into(),
                ));
            }
            t.record(pair.z, pair.r);
        }
        Ok(t)
    }

    fn record(&mut self, z: Vec<f64>, r: Vec<f64>) {
        match orthonormal_residual(&self.z_basis, &z, DEFLATION_TOL) {
            Some((_, z_residual, _)) => {
                let (_, v_residual, _) = orthonormal_residual(&self.v_basis, &r, DEFLATION_TOL)
                    .expect("response of an independent query extends the response basis");
                self.z_basis.push(z_residual);
                self.v_basis.push(v_residual);
            }
            None => self.deflations += 1,
        }
        self.pairs.push((z, r));
    }
}

/// Lazy Haar-random orthogonal matrix.
///
/// Each independent query consumes fresh randomness for the component of the
/// response orthogonal to everything already revealed; dependent queries are
/// answered deterministically from the transcript. The joint law of all
/// responses equals that of `Q z_i` for a single Haar-random `Q`.
#[derive(Clone, Debug)]
pub struct LazyHaar {
    transcript: Transcript,
    rng: Prng,
}

impl LazyHaar {
    pub fn new(n: usize, seed: u64) -> Result<Self, OracleError> {
        if n == 0 {
            return Err(OracleError::InvalidDimension);
        }
        Ok(LazyHaar {
            transcript: Transcript::new(n, seed),
            rng: seeded_rng(seed),
        })
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn dim(&self) -> usize {
        self.transcript.n
    }

    /// Answer one query, recording it in the transcript.
    pub fn query(&mut self, z: &[f64]) -> Result<Vec<f64>, OracleError> {
        let n = self.transcript.n;
        if z.len() != n {
            return Err(OracleError::DimensionMismatch {
                expected: n,
                got: z.len(),
            });
        }
        if nrm2(z) == 0.0 {
            return Err(OracleError::InvalidQuery);
        }
        // Extend the bases first when the query is independent, then answer
        // every query through the same span arithmetic: reissuing a query
        // reproduces its response bit for bit.
        match orthonormal_residual(&self.transcript.z_basis, z, DEFLATION_TOL) {
            None => self.transcript.deflations += 1,
            Some((_, z_residual, _)) => {
                if self.transcript.rank() == n {
                    return Err(OracleError::Exhausted(n));
                }
                let v_new = self.fresh_complement_direction();
                self.transcript.z_basis.push(z_residual);
                self.transcript.v_basis.push(v_new);
            }
        }
        let coeffs = self.span_coefficients(z);
        let response = self.combine_responses(&coeffs);
        self.transcript.pairs.push((z.to_vec(), response.clone()));
        Ok(response)
    }

    /// `V c` for span coefficients `c` of a query.
    fn combine_responses(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.transcript.n];
        for (c, v) in coeffs.iter().zip(&self.transcript.v_basis) {
            axpy(*c, v, &mut out);
        }
        out
    }

    fn span_coefficients(&self, z: &[f64]) -> Vec<f64> {
        let mut w = z.to_vec();
        let mut coeffs = vec![0.0; self.transcript.rank()];
        for _pass in 0..2 {
            for (c, b) in coeffs.iter_mut().zip(&self.transcript.z_basis) {
                let proj = dot(b, &w);
                axpy(-proj, b, &mut w);
                *c += proj;
            }
        }
        coeffs
    }

    /// Uniformly random unit vector in the orthogonal complement of the
    /// response basis.
    fn fresh_complement_direction(&mut self) -> Vec<f64> {
        let n = self.transcript.n;
        loop {
            let mut g = gaussian_vector(n, &mut self.rng);
            for _pass in 0..2 {
                for v in &self.transcript.v_basis {
                    let proj = dot(v, &g);
                    axpy(-proj, v, &mut g);
                }
            }
            let norm = nrm2(&g);
            if norm > 1e-8 {
                scale(1.0 / norm, &mut g);
                return g;
            }
        }
    }

    /// Sample a dense orthogonal matrix consistent with every recorded pair.
    /// The hidden block is uniform over orthonormal bases of the complement
    /// of the revealed response span; with a full-rank transcript the unique
    /// completion is returned and no randomness is consumed.
    pub fn complete(&mut self) -> Mat {
        let n = self.transcript.n;
        let rank = self.transcript.rank();
        // Q = V Z^T on the revealed span.
        let mut q = Mat::zeros(n, n);
        for (z, v) in self.transcript.z_basis.iter().zip(&self.transcript.v_basis) {
            for i in 0..n {
                if v[i] != 0.0 {
                    for j in 0..n {
                        q[(i, j)] += v[i] * z[j];
                    }
                }
            }
        }
        if rank == n {
            return q;
        }
        let b_z = orthonormal_complement(&self.transcript.z_basis, n);
        let b_v = orthonormal_complement(&self.transcript.v_basis, n);
        let m = rank;
        let hidden = HouseholderProduct::sample(n - m, &mut self.rng);
        // W = B_V * M, then Q += W B_Z^T.
        let w: Vec<Vec<f64>> = (0..n - m)
            .map(|j| {
                let col = hidden.apply(&crate::linalg::unit_vector(n - m, j));
                let mut out = vec![0.0; n];
                for (ck, bk) in col.iter().zip(&b_v) {
                    axpy(*ck, bk, &mut out);
                }
                out
            })
            .collect();
        for (wcol, zcol) in w.iter().zip(&b_z) {
            for i in 0..n {
                if wcol[i] != 0.0 {
                    for j in 0..n {
                        q[(i, j)] += wcol[i] * zcol[j];
                    }
                }
            }
        }
        q
    }
}

/// Backing representation of an oracle.
#[derive(Clone, Debug)]
pub enum Backing {
    /// Explicit dense matrix, not necessarily symmetric.
    Dense(Arc<Mat>),
    /// Symmetric `U D U^T` with the rotation applied implicitly.
    RotatedDiagonal {
        rotation: Arc<HouseholderProduct>,
        eigenvalues: Arc<Vec<f64>>,
    },
    /// Diagonal matrix (rotation is the identity).
    Diagonal(Arc<Vec<f64>>),
    /// Hidden Haar-random orthogonal matrix, materialized lazily.
    LazyHaar(LazyHaar),
}

/// Counted black-box access to a matrix.
#[derive(Clone, Debug)]
pub struct MatVecOracle {
    n: usize,
    mode: Mode,
    forward_count: u64,
    adjoint_count: u64,
    backing: Backing,
}

impl MatVecOracle {
    pub fn dense(matrix: Mat, mode: Mode) -> Self {
        Self::dense_shared(Arc::new(matrix), mode)
    }

    pub fn dense_shared(matrix: Arc<Mat>, mode: Mode) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "square matrix required");
        let n = matrix.nrows();
        MatVecOracle {
            n,
            mode,
            forward_count: 0,
            adjoint_count: 0,
            backing: Backing::Dense(matrix),
        }
    }

    pub fn rotated_diagonal(rotation: Arc<HouseholderProduct>, eigenvalues: Vec<f64>) -> Self {
        assert_eq!(rotation.dim(), eigenvalues.len());
        MatVecOracle {
            n: eigenvalues.len(),
            mode: Mode::TwoSided,
            forward_count: 0,
            adjoint_count: 0,
            backing: Backing::RotatedDiagonal {
                rotation,
                eigenvalues: Arc::new(eigenvalues),
            },
        }
    }

    pub fn diagonal(eigenvalues: Vec<f64>) -> Self {
        MatVecOracle {
            n: eigenvalues.len(),
            mode: Mode::TwoSided,
            forward_count: 0,
            adjoint_count: 0,
            backing: Backing::Diagonal(Arc::new(eigenvalues)),
        }
    }

    pub fn lazy_haar(n: usize, seed: u64) -> Result<Self, OracleError> {
        Ok(MatVecOracle {
            n,
            mode: Mode::OneSided,
            forward_count: 0,
            adjoint_count: 0,
            backing: Backing::LazyHaar(LazyHaar::new(n, seed)?),
        })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// `(forward, adjoint)` application counts.
    pub fn counts(&self) -> (u64, u64) {
        (self.forward_count, self.adjoint_count)
    }

    pub fn backing(&self) -> &Backing {
        &self.backing
    }

    /// Access to the lazy-Haar state, when that is the backing.
    pub fn lazy_haar_state(&mut self) -> Option<&mut LazyHaar> {
        match &mut self.backing {
            Backing::LazyHaar(l) => Some(l),
            _ => None,
        }
    }

    pub fn transcript(&self) -> Option<&Transcript> {
        match &self.backing {
            Backing::LazyHaar(l) => Some(l.transcript()),
            _ => None,
        }
    }

    fn check_len(&self, v: &[f64]) -> Result<(), OracleError> {
        if v.len() != self.n {
            Err(OracleError::DimensionMismatch {
                expected: self.n,
                got: v.len(),
            })
        } else {
            Ok(())
        }
    }

    /// `A v`; increments the forward counter on success.
    pub fn forward(&mut self, v: &[f64]) -> Result<Vec<f64>, OracleError> {
        self.check_len(v)?;
        let out = match &mut self.backing {
            Backing::Dense(m) => m.matvec(v),
            Backing::RotatedDiagonal {
                rotation,
                eigenvalues,
            } => {
                let mut w = rotation.apply_transpose(v);
                for (wi, d) in w.iter_mut().zip(eigenvalues.iter()) {
                    *wi *= *d;
                }
                rotation.apply(&w)
            }
            Backing::Diagonal(d) => v.iter().zip(d.iter()).map(|(x, di)| x * di).collect(),
            Backing::LazyHaar(l) => l.query(v)?,
        };
        self.forward_count += 1;
        Ok(out)
    }

    /// `A^T v`; increments the adjoint counter on success. Rejected by
    /// one-sided oracles.
    pub fn adjoint(&mut self, v: &[f64]) -> Result<Vec<f64>, OracleError> {
        if self.mode == Mode::OneSided {
            return Err(OracleError::AdjointUnsupported);
        }
        self.check_len(v)?;
        let out = match &mut self.backing {
            Backing::Dense(m) => m.matvec_transpose(v),
            Backing::RotatedDiagonal {
                rotation,
                eigenvalues,
            } => {
                // symmetric by construction
                let mut w = rotation.apply_transpose(v);
                for (wi, d) in w.iter_mut().zip(eigenvalues.iter()) {
                    *wi *= *d;
                }
                rotation.apply(&w)
            }
            Backing::Diagonal(d) => v.iter().zip(d.iter()).map(|(x, di)| x * di).collect(),
            Backing::LazyHaar(_) => unreachable!("lazy Haar oracles are one-sided"),
        };
        self.adjoint_count += 1;
        Ok(out)
    }
}
