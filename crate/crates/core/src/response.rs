// SPDX-License-Identifier: Apache-2.0

//! Nambu Green's functions of a BCS superconductor with a one-body-loss width
//! `g = γn`, the retarded vertex identity, and the transverse response kernel.
//!
//! With `E² = ε² + Δ²` (real `Δ ≥ 0`, phase absorbed in the gauge field):
//!
//! ```text
//! G^R = [[ω+ε+ig/2, Δ], [Δ, ω−ε+ig/2]] / (ω² − E² + iωg − g²/4)
//! G^A = [[ω+ε−ig/2, Δ], [Δ, ω−ε−ig/2]] / (ω² − E² − iωg − g²/4)
//! G^< = ig [[Δ², Δ(ε−ω)], [Δ(ε−ω), (ε−ω)²]] / A
//! G^T = [[(ω+ε−ig/2)B, Δ(igε − (ω²−E²))], [Δ(igε − (ω²−E²)), (ω−ε+ig/2)B]] / A
//! A   = (ω² − E² − g²/4)² + ω²g²,   B = ω² − E² − igε
//! ```
//!
//! `G^A = (G^R)†` holds exactly. `G^T − G^<` reproduces the diagonal of `G^R`
//! only to first order in `g`, and its off-diagonal carries the opposite sign
//! of `Δ`, leaving `−2Δ/(ω² − E²)` at `g = 0`; [`keldysh_residual_parts`]
//! separates the two.

use nalgebra::{Matrix2, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::meanfield::MomentumGrid;

pub type C64 = Complex64;
pub type M2 = Matrix2<C64>;

/// Denominators below this modulus are treated as poles.
pub const POLE_GUARD: f64 = 1e-14;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResponseError {
    #[error("singular point: denominator {0:e} at the pole guard")]
    Singular(f64),
    #[error("wavevector q = 0 leaves the transverse projector undefined")]
    ZeroWavevector,
    #[error("invalid parameters: {0}")]
    InvalidInput(String),
}

pub fn tau0() -> M2 {
    M2::identity()
}

pub fn tau1() -> M2 {
    M2::new(ZERO, ONE, ONE, ZERO)
}

pub fn tau2() -> M2 {
    M2::new(ZERO, -I, I, ZERO)
}

pub fn tau3() -> M2 {
    M2::new(ONE, ZERO, ZERO, -ONE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GreensKind {
    Retarded,
    Advanced,
    Lesser,
    TimeOrdered,
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn guarded(den: C64) -> Result<C64, ResponseError> {
    if den.norm() < POLE_GUARD {
        Err(ResponseError::Singular(den.norm()))
    } else {
        Ok(den)
    }
}

/// 2×2 Nambu Green's function of the given kind at frequency `omega` and
/// band energy `eps`.
pub fn greens(omega: f64, eps: f64, delta: f64, gamma_n: f64, kind: GreensKind) -> Result<M2, ResponseError> {
    if ![omega, eps, delta, gamma_n].iter().all(|x| x.is_finite()) {
        return Err(ResponseError::InvalidInput("non-finite argument".into()));
    }
    let (w, e, d, g) = (omega, eps, delta, gamma_n);
    let e2 = e * e + d * d;
    let a = (w * w - e2 - g * g / 4.0).powi(2) + w * w * g * g;
    match kind {
        GreensKind::Retarded => {
            let den = guarded(C64::new(w * w - e2 - g * g / 4.0, w * g))?;
            Ok(M2::new(C64::new(w + e, g / 2.0), c(d), c(d), C64::new(w - e, g / 2.0)) / den)
        }
        GreensKind::Advanced => {
            let den = guarded(C64::new(w * w - e2 - g * g / 4.0, -w * g))?;
            Ok(M2::new(C64::new(w + e, -g / 2.0), c(d), c(d), C64::new(w - e, -g / 2.0)) / den)
        }
        GreensKind::Lesser => {
            let den = guarded(c(a))?;
            let ig = C64::new(0.0, g);
            Ok(M2::new(ig * d * d, ig * d * (e - w), ig * d * (e - w), ig * (e - w) * (e - w)) / den)
        }
        GreensKind::TimeOrdered => {
            let den = guarded(c(a))?;
            let b = C64::new(w * w - e2, -g * e);
            let off = c(d) * C64::new(-(w * w - e2), g * e);
            Ok(M2::new(C64::new(w + e, -g / 2.0) * b, off, off, C64::new(w - e, g / 2.0) * b) / den)
        }
    }
}

/// Evaluator bound to `(Δ, γn)` and the parabolic band `ε = k²/2m − μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NambuGreens {
    pub delta: f64,
    pub gamma_n: f64,
    pub mass: f64,
    pub mu: f64,
}

impl NambuGreens {
    pub fn new(delta: f64, gamma_n: f64) -> Self {
        NambuGreens { delta, gamma_n, mass: 1.0, mu: 0.5 }
    }

    pub fn eps(&self, k: &Vector3<f64>) -> f64 {
        k.norm_squared() / (2.0 * self.mass) - self.mu
    }

    pub fn eval(&self, omega: f64, k: &Vector3<f64>, kind: GreensKind) -> Result<M2, ResponseError> {
        greens(omega, self.eps(k), self.delta, self.gamma_n, kind)
    }
}

fn frob(m: &M2) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖G^A − (G^R)†‖`.
pub fn adjoint_residual(omega: f64, eps: f64, delta: f64, gamma_n: f64) -> Result<f64, ResponseError> {
    let r = greens(omega, eps, delta, gamma_n, GreensKind::Retarded)?;
    let a = greens(omega, eps, delta, gamma_n, GreensKind::Advanced)?;
    Ok(frob(&(a - r.adjoint())))
}

/// `‖G^T − G^< − G^R‖`.
pub fn keldysh_residual(omega: f64, eps: f64, delta: f64, gamma_n: f64) -> Result<f64, ResponseError> {
    let r = greens(omega, eps, delta, gamma_n, GreensKind::Retarded)?;
    let l = greens(omega, eps, delta, gamma_n, GreensKind::Lesser)?;
    let t = greens(omega, eps, delta, gamma_n, GreensKind::TimeOrdered)?;
    Ok(frob(&(t - l - r)))
}

/// Diagonal and off-diagonal norms of `G^T − G^< − G^R`.
pub fn keldysh_residual_parts(omega: f64, eps: f64, delta: f64, gamma_n: f64) -> Result<(f64, f64), ResponseError> {
    let r = greens(omega, eps, delta, gamma_n, GreensKind::Retarded)?;
    let l = greens(omega, eps, delta, gamma_n, GreensKind::Lesser)?;
    let t = greens(omega, eps, delta, gamma_n, GreensKind::TimeOrdered)?;
    let d = t - l - r;
    let diag = (d[(0, 0)].norm_sqr() + d[(1, 1)].norm_sqr()).sqrt();
    let off = (d[(0, 1)].norm_sqr() + d[(1, 0)].norm_sqr()).sqrt();
    Ok((diag, off))
}

/// One evaluation point of the vertex identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WtSample {
    pub k: [f64; 3],
    pub q: [f64; 3],
    pub omega: f64,
    pub q0: f64,
    pub delta: f64,
    pub gamma_n: f64,
}

/// Closed form of `(G^R(k))⁻¹τ3 − τ3(G^R(k+q))⁻¹`:
/// `−q⁰τ3 + (ε_{k+q} − ε_k)τ0 + 2iΔτ2`.
pub fn wt_closed_form(q0: f64, eps_k: f64, eps_kq: f64, delta: f64) -> M2 {
    tau3() * c(-q0) + tau0() * c(eps_kq - eps_k) + tau2() * C64::new(0.0, 2.0 * delta)
}

/// Left-hand side from numerically inverted retarded functions.
pub fn wt_lhs(s: &WtSample, g: &NambuGreens) -> Result<M2, ResponseError> {
    let k = Vector3::from(s.k);
    let kq = k + Vector3::from(s.q);
    let gk = greens(s.omega, g.eps(&k), s.delta, s.gamma_n, GreensKind::Retarded)?;
    let gkq = greens(s.omega + s.q0, g.eps(&kq), s.delta, s.gamma_n, GreensKind::Retarded)?;
    let inv = |m: M2| m.try_inverse().ok_or(ResponseError::Singular(0.0));
    Ok(inv(gk)? * tau3() - tau3() * inv(gkq)?)
}

/// `‖LHS − RHS‖` of the retarded vertex identity at one sample, with the band
/// of `band` (its `Δ`, `γn` are taken from the sample).
pub fn wt_vertex_check(s: &WtSample, band: &NambuGreens) -> Result<f64, ResponseError> {
    let lhs = wt_lhs(s, band)?;
    let k = Vector3::from(s.k);
    let kq = k + Vector3::from(s.q);
    let rhs = wt_closed_form(s.q0, band.eps(&k), band.eps(&kq), s.delta);
    Ok(frob(&(lhs - rhs)))
}

/// Sampling box for randomized sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRanges {
    pub k_max: f64,
    pub q_max: f64,
    pub omega_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    /// `γn` is drawn from `[0, gamma_ratio_max·Δ]`.
    pub gamma_ratio_max: f64,
}

impl Default for SweepRanges {
    fn default() -> Self {
        SweepRanges { k_max: 2.0, q_max: 0.5, omega_max: 3.0, delta_min: 0.01, delta_max: 1.0, gamma_ratio_max: 10.0 }
    }
}

fn sym<R: Rng>(rng: &mut R, x: f64) -> f64 {
    rng.gen_range(-x..=x)
}

fn sample_wt<R: Rng>(rng: &mut R, r: &SweepRanges) -> WtSample {
    let delta = rng.gen_range(r.delta_min..=r.delta_max);
    WtSample {
        k: [sym(rng, r.k_max), sym(rng, r.k_max), sym(rng, r.k_max)],
        q: [sym(rng, r.q_max), sym(rng, r.q_max), sym(rng, r.q_max)],
        omega: sym(rng, r.omega_max),
        q0: sym(rng, r.q_max),
        delta,
        gamma_n: rng.gen_range(0.0..=r.gamma_ratio_max * delta),
    }
}

fn task_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, Serialize)]
pub struct WtSweep {
    pub samples: usize,
    pub max_residual: f64,
    pub worst: Option<WtSample>,
    /// Draws discarded because a retarded function was singular there.
    pub resampled: usize,
}

/// Vertex identity on `samples` random points; each point has its own
/// deterministic stream derived from `seed`.
pub fn wt_sweep(samples: usize, seed: u64, ranges: &SweepRanges) -> WtSweep {
    let results: Vec<(f64, WtSample, usize)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i);
            let mut rejected = 0;
            loop {
                let s = sample_wt(&mut rng, ranges);
                let band = NambuGreens::new(s.delta, s.gamma_n);
                match wt_vertex_check(&s, &band) {
                    Ok(r) => return (r, s, rejected),
                    Err(_) => rejected += 1,
                }
            }
        })
        .collect();
    let mut out = WtSweep { samples, max_residual: 0.0, worst: None, resampled: 0 };
    for (r, s, rej) in results {
        out.resampled += rej;
        if r > out.max_residual || out.worst.is_none() {
            out.max_residual = out.max_residual.max(r);
            out.worst = Some(s);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct GreensSweep {
    pub samples: usize,
    pub max_adjoint_residual: f64,
    pub max_keldysh_residual: f64,
    /// `max ‖diag(G^T − G^< − G^R)‖ / (γn)²` over samples with `γn > 0`.
    pub max_diagonal_over_g2: f64,
    /// `max ‖offdiag(G^T − G^< − G^R)‖`
    pub max_off_diagonal: f64,
}

pub fn greens_sweep(samples: usize, seed: u64, ranges: &SweepRanges) -> GreensSweep {
    let results: Vec<(f64, f64, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i);
            loop {
                let delta = rng.gen_range(ranges.delta_min..=ranges.delta_max);
                let g = rng.gen_range(0.0..=ranges.gamma_ratio_max * delta);
                let w = sym(&mut rng, ranges.omega_max);
                let e = sym(&mut rng, ranges.omega_max);
                if let (Ok(a), Ok(k), Ok((dg, off))) = (
                    adjoint_residual(w, e, delta, g),
                    keldysh_residual(w, e, delta, g),
                    keldysh_residual_parts(w, e, delta, g),
                ) {
                    let ratio = if g > 0.0 { dg / (g * g) } else { 0.0 };
                    return (a, k, ratio, off);
                }
            }
        })
        .collect();
    GreensSweep {
        samples,
        max_adjoint_residual: results.iter().map(|r| r.0).fold(0.0, f64::max),
        max_keldysh_residual: results.iter().map(|r| r.1).fold(0.0, f64::max),
        max_diagonal_over_g2: results.iter().map(|r| r.2).fold(0.0, f64::max),
        max_off_diagonal: results.iter().map(|r| r.3).fold(0.0, f64::max),
    }
}

/// Induced current `(δJ⁰, δJ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseCurrent {
    pub temporal: C64,
    pub spatial: Vector3<C64>,
}

/// Static transverse kernel `K^{jl} = −(n/m)(δ^{jl} − q^j q^l/|q|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResponseKernel {
    pub density: f64,
    pub mass: f64,
}

impl ResponseKernel {
    pub fn new(density: f64, mass: f64) -> Result<Self, ResponseError> {
        if !(density >= 0.0 && mass > 0.0 && density.is_finite() && mass.is_finite()) {
            return Err(ResponseError::InvalidInput(format!("n = {density}, m = {mass}")));
        }
        Ok(ResponseKernel { density, mass })
    }

    pub fn matrix(&self, q: &Vector3<f64>) -> Result<nalgebra::Matrix3<f64>, ResponseError> {
        let q2 = q.norm_squared();
        if q2 == 0.0 || !q2.is_finite() {
            return Err(ResponseError::ZeroWavevector);
        }
        let proj = nalgebra::Matrix3::identity() - q * q.transpose() / q2;
        Ok(proj * (-self.density / self.mass))
    }

    pub fn current(&self, q: &Vector3<f64>, a: &Vector3<C64>) -> Result<ResponseCurrent, ResponseError> {
        let q2 = q.norm_squared();
        if q2 == 0.0 || !q2.is_finite() {
            return Err(ResponseError::ZeroWavevector);
        }
        let qc: Vector3<C64> = q.map(c);
        let qa: C64 = qc.dot(a);
        let transverse = a - qc * (qa / q2);
        Ok(ResponseCurrent { temporal: ZERO, spatial: transverse * c(-self.density / self.mass) })
    }
}

/// `δJ = −(n/m)(A − q(q·A)/|q|²)`, `δJ⁰ = 0`.
pub fn response_current(
    q: &Vector3<f64>,
    a: &Vector3<C64>,
    density: f64,
    mass: f64,
) -> Result<ResponseCurrent, ResponseError> {
    ResponseKernel::new(density, mass)?.current(q, a)
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeSweep {
    pub samples: usize,
    /// `max |δJ(A + iqφ) − δJ(A)|`
    pub max_gauge_delta: f64,
    /// `max |q·δJ|`
    pub max_transversality: f64,
}

pub fn gauge_sweep(samples: usize, seed: u64) -> GaugeSweep {
    let results: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i);
            let q = loop {
                let q = Vector3::new(sym(&mut rng, 1.0), sym(&mut rng, 1.0), sym(&mut rng, 1.0));
                if q.norm() > 1e-3 {
                    break q;
                }
            };
            let a = Vector3::from_fn(|_, _| C64::new(sym(&mut rng, 1.0), sym(&mut rng, 1.0)));
            let phi = C64::new(sym(&mut rng, 1.0), sym(&mut rng, 1.0));
            let n = rng.gen_range(0.0..=1.0);
            let m = rng.gen_range(0.5..=2.0);
            let kernel = ResponseKernel::new(n, m).expect("valid");
            let j0 = kernel.current(&q, &a).expect("q ≠ 0");
            let shifted = a + q.map(c) * (I * phi);
            let j1 = kernel.current(&q, &shifted).expect("q ≠ 0");
            let gauge = (j1.spatial - j0.spatial).iter().map(|z| z.norm()).fold(0.0, f64::max);
            let trans = q.map(c).dot(&j0.spatial).norm();
            (gauge, trans)
        })
        .collect();
    GaugeSweep {
        samples,
        max_gauge_delta: results.iter().map(|r| r.0).fold(0.0, f64::max),
        max_transversality: results.iter().map(|r| r.1).fold(0.0, f64::max),
    }
}

/// Simple pole `residue / (ω − at ∓ i0)` with the infinitesimal shift on the
/// side given by `above` (`true` for `+i0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub at: f64,
    pub above: bool,
    pub residue: M2,
}

/// Time-ordered function at zero width, `P₊/(ω − E + i0) + P₋/(ω + E − i0)`
/// with `P± = ½(1 ± (ετ3 + Δτ1)/E)`.
pub fn time_ordered_poles(eps: f64, delta: f64) -> [Pole; 2] {
    let e = (eps * eps + delta * delta).sqrt();
    let h = (tau3() * c(eps) + tau1() * c(delta)) / c(e);
    let p_plus = (tau0() + h) * c(0.5);
    let p_minus = (tau0() - h) * c(0.5);
    [Pole { at: e, above: false, residue: p_plus }, Pole { at: -e, above: true, residue: p_minus }]
}

/// Retarded function at zero width: both poles below the real axis.
pub fn retarded_poles(eps: f64, delta: f64) -> [Pole; 2] {
    let [p, m] = time_ordered_poles(eps, delta);
    [Pole { above: false, ..p }, Pole { above: false, ..m }]
}

/// Advanced function at zero width: both poles above the real axis.
pub fn advanced_poles(eps: f64, delta: f64) -> [Pole; 2] {
    let [p, m] = time_ordered_poles(eps, delta);
    [Pole { above: true, ..p }, Pole { above: true, ..m }]
}

/// `∫ dω/2π G_ij(ω) e^{±iω0⁺}` by closing the contour in the upper half-plane
/// for `close_upper` and the lower one otherwise.
pub fn contour_integral(poles: &[Pole], i: usize, j: usize, close_upper: bool) -> C64 {
    let mut acc = ZERO;
    for p in poles {
        if p.above == close_upper {
            let sign = if close_upper { 1.0 } else { -1.0 };
            acc += I * sign * p.residue[(i, j)];
        }
    }
    acc
}

/// `−i ∫ dω/2π Tr[τ3 G(ω)]` with the Nambu convergence factors: `e^{+iω0⁺}` on
/// the particle entry and `e^{−iω0⁺}` on the hole entry.
pub fn nambu_density(poles: &[Pole]) -> f64 {
    let tr = contour_integral(poles, 0, 0, true) - contour_integral(poles, 1, 1, false);
    (-I * tr).re
}

/// Occupation per mode from the time-ordered function, `1 − ε/E`.
pub fn mode_density(eps: f64, delta: f64) -> f64 {
    nambu_density(&time_ordered_poles(eps, delta))
}

/// `n = Σ w_k n_k` with the frequency integral done by residues.
pub fn density_from_greens(delta: f64, grid: &MomentumGrid) -> Result<f64, ResponseError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ResponseError::InvalidInput(format!("Δ = {delta} must be positive")));
    }
    Ok(grid.eps.iter().zip(&grid.weights).map(|(e, w)| w * mode_density(*e, delta)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{init_bcs, particle_number};

    #[test]
    fn free_limit_is_diagonal() {
        let g = greens(0.3, 0.7, 0.0, 1e-9, GreensKind::Retarded).unwrap();
        assert_eq!(g[(0, 1)], ZERO);
        assert!((g[(0, 0)] - c(1.0 / (0.3 - 0.7))).norm() < 1e-6);
        assert!((g[(1, 1)] - c(1.0 / (0.3 + 0.7))).norm() < 1e-6);
        assert!(matches!(greens(0.7, 0.7, 0.0, 0.0, GreensKind::Retarded), Err(ResponseError::Singular(_))));
    }

    #[test]
    fn retarded_inverse_is_linear() {
        let (w, e, d, g) = (0.4, -0.3, 0.2, 0.5);
        let gr = greens(w, e, d, g, GreensKind::Retarded).unwrap();
        let want = tau0() * C64::new(w, g / 2.0) - tau3() * c(e) - tau1() * c(d);
        assert!(frob(&(gr.try_inverse().unwrap() - want)) < 1e-14);
    }

    #[test]
    fn advanced_is_adjoint() {
        for (w, e, d, g) in [(0.1, 0.2, 0.3, 0.4), (-2.0, 1.0, 0.05, 0.5), (1.0, -1.0, 1.0, 0.0)] {
            assert!(adjoint_residual(w, e, d, g).unwrap() < 1e-15);
        }
    }

    #[test]
    fn keldysh_diagonal_is_second_order() {
        let (w, e, d) = (0.9, -0.21, 0.3);
        let (r1, _) = keldysh_residual_parts(w, e, d, 1e-3).unwrap();
        let (r2, _) = keldysh_residual_parts(w, e, d, 2e-3).unwrap();
        assert!((r2 / r1 - 4.0).abs() < 0.05, "{r1} {r2}");
        assert!(keldysh_residual_parts(w, e, d, 0.0).unwrap().0 < 1e-15);
    }

    #[test]
    fn keldysh_off_diagonal_keeps_sign_flip() {
        let (w, e, d) = (0.9, -0.21, 0.3);
        let (_, off) = keldysh_residual_parts(w, e, d, 0.0).unwrap();
        let want = 2.0_f64.sqrt() * 2.0 * d / (w * w - e * e - d * d).abs();
        assert!((off - want).abs() < 1e-12, "{off} {want}");
    }

    #[test]
    fn wt_zero_gap_and_zero_q() {
        let band = NambuGreens::new(0.0, 0.3);
        let s = WtSample { k: [0.3, 0.1, -0.2], q: [0.1, 0.0, 0.05], omega: 0.4, q0: 0.0, delta: 0.0, gamma_n: 0.3 };
        let lhs = wt_lhs(&s, &band).unwrap();
        let k = Vector3::from(s.k);
        let de = band.eps(&(k + Vector3::from(s.q))) - band.eps(&k);
        assert!(frob(&(lhs - tau0() * c(de))) < 1e-14);

        let band = NambuGreens::new(0.4, 0.2);
        let s = WtSample { k: [0.3, 0.1, -0.2], q: [0.0; 3], omega: 0.9, q0: 0.0, delta: 0.4, gamma_n: 0.2 };
        let lhs = wt_lhs(&s, &band).unwrap();
        assert!(frob(&(lhs - tau2() * C64::new(0.0, 0.8))) < 1e-14);
    }

    #[test]
    fn wt_small_sweep() {
        let r = wt_sweep(200, 7, &SweepRanges::default());
        assert!(r.max_residual < 1e-12, "{:?}", r);
    }

    #[test]
    fn sweeps_are_deterministic() {
        let a = wt_sweep(50, 3, &SweepRanges::default());
        let b = wt_sweep(50, 3, &SweepRanges::default());
        assert_eq!(a.max_residual, b.max_residual);
        assert_eq!(a.worst, b.worst);
    }

    #[test]
    fn response_examples() {
        let q = Vector3::new(1.0, 0.0, 0.0);
        let a = Vector3::new(ZERO, ONE, ZERO);
        let j = response_current(&q, &a, 0.8, 2.0).unwrap();
        assert_eq!(j.temporal, ZERO);
        assert_eq!(j.spatial, Vector3::new(ZERO, c(-0.4), ZERO));

        let par = Vector3::new(c(2.0), ZERO, ZERO);
        let j = response_current(&q, &par, 0.8, 2.0).unwrap();
        assert!(j.spatial.iter().all(|z| z.norm() < 1e-16));

        assert_eq!(response_current(&Vector3::zeros(), &a, 1.0, 1.0), Err(ResponseError::ZeroWavevector));
    }

    #[test]
    fn kernel_is_symmetric_and_transverse() {
        let k = ResponseKernel::new(0.6, 1.0).unwrap();
        let q = Vector3::new(0.3, -0.7, 0.2);
        let m = k.matrix(&q).unwrap();
        assert!((m - m.transpose()).amax() < 1e-16);
        assert!((m * q).amax() < 1e-15);
    }

    #[test]
    fn gauge_sweep_small() {
        let g = gauge_sweep(100, 1);
        assert!(g.max_gauge_delta < 1e-14 && g.max_transversality < 1e-14, "{g:?}");
    }

    #[test]
    fn residue_density_matches_amplitudes() {
        let grid = MomentumGrid::fermi_units(128);
        for d in [0.01, 0.05, 0.3] {
            let s = init_bcs(d, &grid).unwrap();
            let n1 = density_from_greens(d, &grid).unwrap();
            assert!((n1 - particle_number(&s, &grid)).abs() < 1e-12);
        }
    }

    #[test]
    fn density_limits() {
        let grid = MomentumGrid::fermi_units(512);
        let sea: f64 = grid.eps.iter().zip(&grid.weights).filter(|(e, _)| **e < 0.0).map(|(_, w)| 2.0 * w).sum();
        let n = density_from_greens(1e-9, &grid).unwrap();
        assert!((n - sea).abs() < 1e-6);
        let empty = MomentumGrid::uniform_3d(256, 3.0, -0.5, 1.0).unwrap();
        assert!(density_from_greens(1e-9, &empty).unwrap() < 1e-12);
    }

    #[test]
    fn retarded_plus_advanced_is_occupation_blind() {
        for (e, d) in [(-1.0, 0.1), (0.0, 0.1), (2.0, 0.3)] {
            let mut poles = retarded_poles(e, d).to_vec();
            poles.extend(advanced_poles(e, d));
            // −½ ∫ Tr[τ3 (iG^R + iG^A)] = ½ · nambu_density(R ∪ A)
            let per_mode = 0.5 * nambu_density(&poles);
            assert!((per_mode - 1.0).abs() < 1e-15);
        }
    }
}
