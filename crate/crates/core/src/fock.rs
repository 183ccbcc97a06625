// SPDX-License-Identifier: Apache-2.0

//! Fermionic Fock space of `L` Hubbard sites.
//!
//! Modes are ordered site-major with spin up before spin down, so mode
//! `m = 2r + s` (`s = 0` up, `s = 1` down). A basis state is the little-endian
//! bitstring of mode occupations, and the Jordan-Wigner string of mode `m`
//! covers all modes `< m`:
//!
//! `c_m |n⟩ = (−1)^{popcount(n & (2^m − 1))} |n ⊕ 2^m⟩` when bit `m` of `n` is set.
//!
//! Operators are stored as CSR matrices; density matrices are dense.
//! Vectorization is row-major, `vec(ρ)[i·d + j] = ρ_ij`, which gives
//! `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::opspec::{LadderKind, OperatorExpr, Spin, MAX_SITES};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerances a [`DensityMatrix`] must meet on construction.
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FockError {
    #[error("capacity exceeded: {sites} site(s), at most {max} supported")]
    CapacityExceeded { sites: usize, max: usize },
    #[error("site index {site} out of range for {num_sites} site(s)")]
    IndexOutOfRange { site: usize, num_sites: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
}

/// Sparse complex operator on a Fock space (or its doubled copy).
#[derive(Debug, Clone, PartialEq)]
pub struct FockOp {
    mat: CsrMatrix<C64>,
}

impl FockOp {
    pub fn from_csr(mat: CsrMatrix<C64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "operators are square");
        FockOp { mat }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(dim: usize, entries: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut coo = CooMatrix::new(dim, dim);
        for (i, j, v) in entries {
            coo.push(i, j, v);
        }
        FockOp::from_csr(CsrMatrix::from(&coo)).pruned()
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let d = m.nrows();
        let entries = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter_map(|(i, j)| (m[(i, j)] != ZERO).then_some((i, j, m[(i, j)])));
        FockOp::from_triplets(d, entries)
    }

    pub fn zeros(dim: usize) -> Self {
        FockOp::from_csr(CsrMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        FockOp::from_csr(CsrMatrix::identity(dim))
    }

    pub fn diagonal(values: &[C64]) -> Self {
        FockOp::from_triplets(values.len(), values.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.mat.nnz()
    }

    pub fn csr(&self) -> &CsrMatrix<C64> {
        &self.mat
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.mat.triplet_iter().map(|(i, j, v)| (i, j, *v))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.mat.get_entry(i, j).map_or(ZERO, |e| e.into_value())
    }

    fn pruned(self) -> Self {
        if self.mat.values().iter().all(|v| *v != ZERO) {
            return self;
        }
        let d = self.dim();
        let mut coo = CooMatrix::new(d, d);
        for (i, j, v) in self.mat.triplet_iter() {
            if *v != ZERO {
                coo.push(i, j, *v);
            }
        }
        FockOp { mat: CsrMatrix::from(&coo) }
    }

    fn map_values(&self, f: impl Fn(C64) -> C64) -> Self {
        let mut mat = self.mat.clone();
        for v in mat.values_mut() {
            *v = f(*v);
        }
        FockOp { mat }.pruned()
    }

    pub fn scale(&self, z: C64) -> Self {
        self.map_values(|v| v * z)
    }

    pub fn conj(&self) -> Self {
        self.map_values(|v| v.conj())
    }

    pub fn transpose(&self) -> Self {
        FockOp { mat: self.mat.transpose() }
    }

    pub fn adjoint(&self) -> Self {
        self.transpose().conj()
    }

    pub fn kron(&self, other: &FockOp) -> Self {
        let (da, db) = (self.dim(), other.dim());
        let mut coo = CooMatrix::new(da * db, da * db);
        for (i, j, a) in self.mat.triplet_iter() {
            for (k, l, b) in other.mat.triplet_iter() {
                coo.push(i * db + k, j * db + l, *a * *b);
            }
        }
        FockOp { mat: CsrMatrix::from(&coo) }.pruned()
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (i, j, v) in self.mat.triplet_iter() {
            m[(i, j)] += *v;
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.values().iter().fold(0.0, |acc, v| acc + v.norm_sqr()).sqrt()
    }

    pub fn is_diagonal(&self) -> bool {
        self.mat.triplet_iter().all(|(i, j, _)| i == j)
    }

    pub fn diagonal_values(&self) -> Vec<C64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        let offs = self.mat.row_offsets();
        let cols = self.mat.col_indices();
        let vals = self.mat.values();
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in offs[r]..offs[r + 1] {
                acc += vals[k] * x[cols[k]];
            }
            *out = acc;
        }
    }

    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = DVector::zeros(self.dim());
        self.matvec(x.as_slice(), y.as_mut_slice());
        y
    }

    /// `A·M` for a dense `M`.
    pub fn mul_dense(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim(), m.ncols());
        for (i, k, a) in self.mat.triplet_iter() {
            for j in 0..m.ncols() {
                out[(i, j)] += *a * m[(k, j)];
            }
        }
        out
    }

    /// `M·A` for a dense `M`.
    pub fn dense_mul(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(m.nrows(), self.dim());
        for (k, j, a) in self.mat.triplet_iter() {
            for i in 0..m.nrows() {
                out[(i, j)] += m[(i, k)] * *a;
            }
        }
        out
    }

    /// `Tr[A ρ]`.
    pub fn expectation(&self, rho: &DMatrix<C64>) -> C64 {
        self.mat.triplet_iter().map(|(i, j, a)| *a * rho[(j, i)]).sum()
    }

    pub fn trace(&self) -> C64 {
        self.mat.triplet_iter().filter(|(i, j, _)| i == j).map(|(_, _, v)| *v).sum()
    }
}

impl<'a> Add<&'a FockOp> for &'a FockOp {
    type Output = FockOp;
    fn add(self, rhs: &FockOp) -> FockOp {
        FockOp { mat: &self.mat + &rhs.mat }.pruned()
    }
}

impl<'a> Sub<&'a FockOp> for &'a FockOp {
    type Output = FockOp;
    fn sub(self, rhs: &FockOp) -> FockOp {
        FockOp { mat: &self.mat - &rhs.mat }.pruned()
    }
}

impl<'a> Mul<&'a FockOp> for &'a FockOp {
    type Output = FockOp;
    fn mul(self, rhs: &FockOp) -> FockOp {
        FockOp { mat: &self.mat * &rhs.mat }.pruned()
    }
}

pub fn commutator(a: &FockOp, b: &FockOp) -> FockOp {
    &(a * b) - &(b * a)
}

pub fn anticommutator(a: &FockOp, b: &FockOp) -> FockOp {
    &(a * b) + &(b * a)
}

pub fn kron(a: &FockOp, b: &FockOp) -> FockOp {
    a.kron(b)
}

pub fn mode_index(site: usize, spin: Spin) -> usize {
    2 * site + spin.index()
}

/// Fermionic parity sign of the Jordan-Wigner string below `mode`.
pub fn jw_sign(state: usize, mode: usize) -> f64 {
    if (state & ((1 << mode) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Number of particles in basis state `state`.
pub fn particle_count(state: usize) -> usize {
    state.count_ones() as usize
}

/// `c`, `c†` and `n` for every mode of an `L`-site lattice.
#[derive(Debug, Clone)]
pub struct SiteOps {
    num_sites: usize,
    ann: Vec<FockOp>,
    cre: Vec<FockOp>,
    num: Vec<FockOp>,
}

pub fn build_site_ops(num_sites: usize) -> Result<SiteOps, FockError> {
    if num_sites == 0 || num_sites > MAX_SITES {
        return Err(FockError::CapacityExceeded { sites: num_sites, max: MAX_SITES });
    }
    let modes = 2 * num_sites;
    let dim = 1usize << modes;
    let mut ann = Vec::with_capacity(modes);
    let mut cre = Vec::with_capacity(modes);
    let mut num = Vec::with_capacity(modes);
    for m in 0..modes {
        let bit = 1usize << m;
        let c = FockOp::from_triplets(
            dim,
            (0..dim).filter(|n| n & bit != 0).map(|n| (n ^ bit, n, C64::new(jw_sign(n, m), 0.0))),
        );
        cre.push(c.adjoint());
        ann.push(c);
        num.push(FockOp::from_triplets(dim, (0..dim).filter(|n| n & bit != 0).map(|n| (n, n, ONE))));
    }
    Ok(SiteOps { num_sites, ann, cre, num })
}

impl SiteOps {
    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn dim(&self) -> usize {
        1 << (2 * self.num_sites)
    }

    pub fn c(&self, site: usize, spin: Spin) -> &FockOp {
        &self.ann[mode_index(site, spin)]
    }

    pub fn cdag(&self, site: usize, spin: Spin) -> &FockOp {
        &self.cre[mode_index(site, spin)]
    }

    pub fn n(&self, site: usize, spin: Spin) -> &FockOp {
        &self.num[mode_index(site, spin)]
    }

    pub fn identity(&self) -> FockOp {
        FockOp::identity(self.dim())
    }

    /// `n_r↑ + n_r↓`.
    pub fn site_density(&self, site: usize) -> FockOp {
        self.n(site, Spin::Up) + self.n(site, Spin::Dn)
    }

    /// Total particle number `N = Σ n_rσ` (diagonal).
    pub fn total_number(&self) -> FockOp {
        let d = self.dim();
        FockOp::from_triplets(d, (0..d).map(|s| (s, s, C64::new(particle_count(s) as f64, 0.0))))
    }

    /// Particle number of each basis state.
    pub fn sectors(&self) -> Vec<usize> {
        (0..self.dim()).map(particle_count).collect()
    }
}

/// Evaluates an expression tree with the given site operators.
pub fn compile(expr: &OperatorExpr, ops: &SiteOps) -> Result<FockOp, FockError> {
    match expr {
        OperatorExpr::Scalar(z) => Ok(ops.identity().scale(*z)),
        OperatorExpr::Ladder { kind, site, spin } => {
            if *site >= ops.num_sites() {
                return Err(FockError::IndexOutOfRange { site: *site, num_sites: ops.num_sites() });
            }
            Ok(match kind {
                LadderKind::Annihilate => ops.c(*site, *spin).clone(),
                LadderKind::Create => ops.cdag(*site, *spin).clone(),
                LadderKind::Number => ops.n(*site, *spin).clone(),
            })
        }
        OperatorExpr::Product(fs) => {
            let mut acc: Option<FockOp> = None;
            for f in fs {
                let m = compile(f, ops)?;
                acc = Some(match acc {
                    None => m,
                    Some(a) => &a * &m,
                });
            }
            Ok(acc.unwrap_or_else(|| ops.identity()))
        }
        OperatorExpr::Sum(ts) => {
            let mut acc = FockOp::zeros(ops.dim());
            for t in ts {
                acc = &acc + &compile(t, ops)?;
            }
            Ok(acc)
        }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<C64>,
}

fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

impl DensityMatrix {
    /// Validates against [`HERMITIAN_TOL`], [`TRACE_TOL`] and [`EIGEN_TOL`].
    pub fn new(mat: DMatrix<C64>) -> Result<Self, FockError> {
        let rho = DensityMatrix { mat };
        rho.check(HERMITIAN_TOL, TRACE_TOL, EIGEN_TOL)?;
        Ok(rho)
    }

    pub fn from_matrix_unchecked(mat: DMatrix<C64>) -> Self {
        DensityMatrix { mat }
    }

    pub fn check(&self, herm_tol: f64, trace_tol: f64, eig_tol: f64) -> Result<(), FockError> {
        let m = &self.mat;
        if m.nrows() != m.ncols() {
            return Err(FockError::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let h = hermitian_deviation(m);
        if h > herm_tol {
            return Err(FockError::InvalidState(format!("not Hermitian (deviation {h:e})")));
        }
        let t = m.trace();
        if (t - ONE).norm() > trace_tol {
            return Err(FockError::InvalidState(format!("trace {t} differs from 1")));
        }
        let e = min_eigenvalue(m);
        if e < -eig_tol {
            return Err(FockError::InvalidState(format!("negative eigenvalue {e:e}")));
        }
        Ok(())
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn pure(psi: &DVector<C64>) -> Self {
        let n = psi.norm_squared();
        DensityMatrix { mat: psi * psi.adjoint() / C64::new(n, 0.0) }
    }

    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(index, index)] = ONE;
        DensityMatrix { mat: m }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix { mat: DMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0) }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.mat)
    }
}

/// `vec(M)[i·d + j] = M_ij`.
pub fn vectorize_matrix(m: &DMatrix<C64>) -> DVector<C64> {
    let d = m.nrows();
    DVector::from_fn(d * d, |k, _| m[(k / d, k % d)])
}

pub fn devectorize_matrix(v: &[C64]) -> Result<DMatrix<C64>, FockError> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() {
        return Err(FockError::DimensionMismatch { expected: d * d, got: v.len() });
    }
    Ok(DMatrix::from_fn(d, d, |i, j| v[i * d + j]))
}

pub fn vectorize(rho: &DensityMatrix) -> DVector<C64> {
    vectorize_matrix(rho.matrix())
}

/// Inverse of [`vectorize`]. Only the length is checked; positivity is the
/// caller's concern.
pub fn devectorize(v: &DVector<C64>) -> Result<DensityMatrix, FockError> {
    devectorize_matrix(v.as_slice()).map(DensityMatrix::from_matrix_unchecked)
}

/// `S = Σ_ij |i⟩⟨j| ⊗ |j⟩⟨i|` on the doubled space.
pub fn swap_operator(dim: usize) -> FockOp {
    FockOp::from_triplets(dim * dim, (0..dim).flat_map(|i| (0..dim).map(move |j| (j * dim + i, i * dim + j, ONE))))
}

/// Random states and matrices for tests and sweeps.
pub mod random {
    use super::*;

    pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    pub fn ginibre<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<C64> {
        DMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng))
    }

    pub fn hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<C64> {
        let g = ginibre(dim, rng);
        (&g + g.adjoint()) * C64::new(0.5, 0.0)
    }

    fn normalize(m: DMatrix<C64>) -> DensityMatrix {
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let t = h.trace().re;
        DensityMatrix::from_matrix_unchecked(h / C64::new(t, 0.0))
    }

    /// Full-rank mixed state `G G† / Tr`.
    pub fn density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
        let g = ginibre(dim, rng);
        normalize(&g * g.adjoint())
    }

    pub fn pure<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
        let psi = DVector::from_fn(dim, |_, _| complex_gaussian(rng));
        DensityMatrix::pure(&psi)
    }

    /// Random state with no coherence between different `sectors` labels.
    pub fn block_diagonal<R: Rng + ?Sized>(sectors: &[usize], rng: &mut R) -> DensityMatrix {
        let mut rho = density(sectors.len(), rng).into_matrix();
        for i in 0..sectors.len() {
            for j in 0..sectors.len() {
                if sectors[i] != sectors[j] {
                    rho[(i, j)] = ZERO;
                }
            }
        }
        normalize(rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opspec::parse_expr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn single_site_pair_annihilation() {
        let ops = build_site_ops(1).unwrap();
        let p = ops.c(0, Spin::Up) * ops.c(0, Spin::Dn);
        let d = p.to_dense();
        // |↑↓⟩ = index 3, vacuum = 0
        assert_eq!(p.nnz(), 1);
        assert_eq!(d[(0, 3)].norm(), 1.0);
        for s in 0..3 {
            assert!(d.column(s).iter().all(|z| *z == ZERO));
        }
    }

    #[test]
    fn cross_site_anticommutator_vanishes() {
        let ops = build_site_ops(2).unwrap();
        let a = anticommutator(ops.c(0, Spin::Up), ops.cdag(1, Spin::Up));
        assert_eq!(a.frobenius_norm(), 0.0);
    }

    #[test]
    fn number_spectrum_two_sites() {
        let ops = build_site_ops(2).unwrap();
        let n = ops.total_number();
        assert!(n.is_diagonal());
        let mut counts = [0usize; 5];
        for v in n.diagonal_values() {
            assert_eq!(v.im, 0.0);
            counts[v.re as usize] += 1;
        }
        assert_eq!(counts, [1, 4, 6, 4, 1]);
    }

    #[test]
    fn car_all_modes() {
        for l in 1..=3 {
            let ops = build_site_ops(l).unwrap();
            let id = ops.identity();
            let modes: Vec<(usize, Spin)> = (0..l).flat_map(|r| [(r, Spin::Up), (r, Spin::Dn)]).collect();
            for &(r, s) in &modes {
                assert_eq!((ops.c(r, s) * ops.c(r, s)).frobenius_norm(), 0.0);
                assert_eq!((ops.cdag(r, s) * ops.cdag(r, s)).frobenius_norm(), 0.0);
                for &(r2, s2) in &modes {
                    let ac = anticommutator(ops.c(r, s), ops.cdag(r2, s2));
                    let want = if (r, s) == (r2, s2) { id.clone() } else { FockOp::zeros(ops.dim()) };
                    assert!((&ac - &want).frobenius_norm() < 1e-15);
                    assert!(anticommutator(ops.c(r, s), ops.c(r2, s2)).frobenius_norm() < 1e-15);
                }
                assert_eq!(commutator(&ops.total_number(), ops.n(r, s)).frobenius_norm(), 0.0);
            }
        }
    }

    #[test]
    fn capacity() {
        assert!(matches!(build_site_ops(0), Err(FockError::CapacityExceeded { .. })));
        assert!(matches!(build_site_ops(7), Err(FockError::CapacityExceeded { .. })));
    }

    #[test]
    fn compile_density_and_pair() {
        let ops = build_site_ops(1).unwrap();
        let n = compile(&parse_expr("n(0,up)+n(0,dn)").unwrap(), &ops).unwrap();
        let diag: Vec<f64> = n.diagonal_values().iter().map(|z| z.re).collect();
        assert_eq!(diag, vec![0.0, 1.0, 1.0, 2.0]);
        assert!(n.is_diagonal());

        // c_dn c_up |↑↓⟩: c_up removes mode 0 with no string, c_dn then acts on |↓⟩.
        let p = compile(&parse_expr("c(0,dn)*c(0,up)").unwrap(), &ops).unwrap();
        assert_eq!(p.nnz(), 1);
        assert_eq!(p.get(0, 3), ONE);

        let bad = compile(&OperatorExpr::c(3, Spin::Up), &ops);
        assert!(matches!(bad, Err(FockError::IndexOutOfRange { site: 3, .. })));
    }

    #[test]
    fn vectorize_basis_state() {
        let v = vectorize(&DensityMatrix::basis_state(4, 0));
        assert_eq!(v[0], ONE);
        assert_eq!(v.iter().filter(|z| **z != ZERO).count(), 1);
    }

    #[test]
    fn vec_sandwich_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random::ginibre(4, &mut rng);
            let b = random::ginibre(4, &mut rng);
            let rho = random::density(4, &mut rng);
            let lhs = vectorize_matrix(&(&a * rho.matrix() * &b));
            let sup = FockOp::from_dense(&a).kron(&FockOp::from_dense(&b.transpose()));
            let rhs = sup.apply(&vectorize(&rho));
            assert!((lhs - rhs).camax() < 1e-13);
            let back = devectorize(&vectorize(&rho)).unwrap();
            assert_eq!(back, rho);
        }
        assert!(devectorize(&DVector::zeros(5)).is_err());
    }

    #[test]
    fn swap_properties() {
        let s2 = swap_operator(2).to_dense();
        let want = DMatrix::from_row_slice(4, 4, &[1.0, 0., 0., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 0., 0., 1.])
            .map(|x| C64::new(x, 0.0));
        assert_eq!(s2, want);

        let s = swap_operator(16);
        let sq = &s * &s;
        assert_eq!(sq, FockOp::identity(256));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random::ginibre(4, &mut rng);
        let b = random::ginibre(4, &mut rng);
        let ab = FockOp::from_dense(&a).kron(&FockOp::from_dense(&b));
        let lhs = (&ab * &swap_operator(4)).trace();
        let rhs = (&a * &b).trace();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn density_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random::density(8, &mut rng);
        assert!(DensityMatrix::new(rho.matrix().clone()).is_ok());
        let mut bad = rho.matrix().clone();
        bad[(0, 1)] += C64::new(1e-6, 0.0);
        assert!(DensityMatrix::new(bad).is_err());
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.5, 0.0), C64::new(-0.5, 0.0)]));
        assert!(DensityMatrix::new(neg).is_err());
        assert!(max_abs(&(rho.matrix() - rho.matrix().adjoint())) == 0.0);
    }

    #[test]
    fn block_diagonal_has_no_cross_sector_coherence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ops = build_site_ops(1).unwrap();
        let sec = ops.sectors();
        let rho = random::block_diagonal(&sec, &mut rng);
        assert!(commutator(&ops.total_number(), &FockOp::from_dense(rho.matrix())).frobenius_norm() < 1e-15);
        assert!(rho.check(1e-12, 1e-12, 1e-10).is_ok());
    }
}
