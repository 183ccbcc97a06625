// SPDX-License-Identifier: Apache-2.0

//! Phase (Nambu-Goldstone) mode of the lossy BCS state.
//!
//! The zeroth-order condition, with the gap equation substituted, is
//!
//! ```text
//! R(q⁰, q) = ¼ Σ_k w_k ⟨ (E + E')/(E E') · ((q⁰)² − (k q c/m)²) / ((q⁰)² − (E + E')²) ⟩_c
//! ```
//!
//! where `E' = E_{k+q}`, `c` is the cosine between `k` and `q`, and `⟨·⟩_c`
//! is the average over `c ∈ [−1, 1]` by Gauss-Legendre quadrature. Its root
//! below the pair-breaking edge gives the sound velocity. The first-order
//! correction in the loss width `γn` gives `q⁰ = v_s q + iγn f(q)` with
//! `f(q) = D q² / γn` diffusive.

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::meanfield::MomentumGrid;

pub type C64 = Complex64;

/// Default angular quadrature order.
pub const ANGLE_ORDER: usize = 64;
/// Number of scan points below the continuum edge.
pub const SCAN_POINTS: usize = 32;
/// Fraction of the continuum edge covered by the scan.
pub const SCAN_FRACTION: f64 = 0.95;
/// Largest `γn/Δ` treated as perturbative.
pub const REGIME_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CollectiveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("q0 = {q0} lies in the pair-breaking continuum (edge {edge})")]
    ContinuumCollision { q0: f64, edge: f64 },
    #[error("no sign change of the residual below the continuum for q = {q}")]
    NoRoot { q: f64 },
    #[error("gap Δ = {0} must be positive")]
    ZeroGap(f64),
    #[error("quadrature did not converge at q = {q}: {coarse:e} vs {fine:e} after refinement")]
    QuadratureNonConvergence { q: f64, coarse: f64, fine: f64 },
}

fn rule(order: usize) -> Result<GaussLegendre, CollectiveError> {
    GaussLegendre::new(order).map_err(|_| CollectiveError::InvalidInput(format!("quadrature order {order} < 2")))
}

fn check_q(q: f64, delta: f64) -> Result<(), CollectiveError> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(CollectiveError::InvalidInput(format!("q = {q} must be positive")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(CollectiveError::ZeroGap(delta));
    }
    Ok(())
}

/// Band quantities at `k` and `k + q` for one angle.
#[derive(Debug, Clone, Copy)]
struct Pair {
    eps: f64,
    e: f64,
    eps_q: f64,
    e_q: f64,
}

fn pair(grid: &MomentumGrid, i: usize, q: f64, cos: f64, delta: f64) -> Pair {
    let k = grid.k[i];
    let eps = grid.eps[i];
    let kq2 = k * k + q * q + 2.0 * k * q * cos;
    let eps_q = kq2 / (2.0 * grid.mass) - grid.mu;
    Pair { eps, e: eps.hypot(delta), eps_q, e_q: eps_q.hypot(delta) }
}

/// `min_k (E_k + E_{k+q})` over the grid and the angular nodes of `order`.
pub fn continuum_edge(q: f64, delta: f64, grid: &MomentumGrid, order: usize) -> Result<f64, CollectiveError> {
    check_q(q, delta)?;
    let gl = rule(order)?;
    let mut edge = f64::INFINITY;
    for i in 0..grid.len() {
        for (c, _) in gl.iter() {
            let p = pair(grid, i, q, *c, delta);
            edge = edge.min(p.e + p.e_q);
        }
    }
    Ok(edge)
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NgOptions {
    pub angle_order: usize,
    pub scan_points: usize,
    pub scan_fraction: f64,
}

impl Default for NgOptions {
    fn default() -> Self {
        NgOptions { angle_order: ANGLE_ORDER, scan_points: SCAN_POINTS, scan_fraction: SCAN_FRACTION }
    }
}

struct Residual<'a> {
    grid: &'a MomentumGrid,
    q: f64,
    delta: f64,
    gl: GaussLegendre,
    edge: f64,
}

impl<'a> Residual<'a> {
    fn new(q: f64, delta: f64, grid: &'a MomentumGrid, order: usize) -> Result<Self, CollectiveError> {
        let edge = continuum_edge(q, delta, grid, order)?;
        Ok(Residual { grid, q, delta, gl: rule(order)?, edge })
    }

    fn eval(&self, q0: f64) -> Result<f64, CollectiveError> {
        if !q0.is_finite() || q0.abs() >= self.edge {
            return Err(CollectiveError::ContinuumCollision { q0, edge: self.edge });
        }
        let g = self.grid;
        let q02 = q0 * q0;
        let mut acc = 0.0;
        for i in 0..g.len() {
            let kq = g.k[i] * self.q / g.mass;
            let avg = 0.5
                * self.gl.integrate(-1.0, 1.0, |c| {
                    let p = pair(g, i, self.q, c, self.delta);
                    let s = p.e + p.e_q;
                    s / (p.e * p.e_q) * (q02 - (kq * c).powi(2)) / (q02 - s * s)
                });
            acc += g.weights[i] * avg;
        }
        Ok(0.25 * acc)
    }
}

/// Zeroth-order residual `R(q⁰, q)`; fails inside the continuum.
pub fn zeroth_order_residual(
    q0: f64,
    q: f64,
    delta: f64,
    grid: &MomentumGrid,
    order: usize,
) -> Result<f64, CollectiveError> {
    Residual::new(q, delta, grid, order)?.eval(q0)
}

/// Positive root of `R(·, q)`: scan up to a fraction of the continuum edge,
/// then bisect the first sign change.
pub fn sound_root(q: f64, delta: f64, grid: &MomentumGrid, opts: &NgOptions) -> Result<f64, CollectiveError> {
    let r = Residual::new(q, delta, grid, opts.angle_order)?;
    let top = opts.scan_fraction * r.edge;
    let n = opts.scan_points.max(1);
    let mut lo = 0.0;
    let mut f_lo = r.eval(lo)?;
    if f_lo == 0.0 {
        return Ok(0.0);
    }
    for j in 1..=n {
        let hi = top * j as f64 / n as f64;
        let f_hi = r.eval(hi)?;
        if f_hi == 0.0 {
            return Ok(hi);
        }
        if f_lo.signum() != f_hi.signum() {
            let (mut a, mut b, mut fa) = (lo, hi, f_lo);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                let fm = r.eval(m)?;
                if fm == 0.0 {
                    return Ok(m);
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        lo = hi;
        f_lo = f_hi;
    }
    Err(CollectiveError::NoRoot { q })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoundFit {
    /// `(q, q⁰)` pairs.
    pub roots: Vec<(f64, f64)>,
    /// Least-squares slope of `q⁰` against `q` through the origin.
    pub slope: f64,
}

/// Fits the sound velocity over `qs`; root finds run in parallel.
pub fn solve_sound_velocity(
    qs: &[f64],
    delta: f64,
    grid: &MomentumGrid,
    opts: &NgOptions,
) -> Result<SoundFit, CollectiveError> {
    if qs.is_empty() {
        return Err(CollectiveError::InvalidInput("empty q list".into()));
    }
    let roots =
        qs.par_iter().map(|&q| sound_root(q, delta, grid, opts).map(|r| (q, r))).collect::<Result<Vec<_>, _>>()?;
    Ok(SoundFit { slope: slope_through_origin(&roots), roots })
}

fn slope_through_origin(points: &[(f64, f64)]) -> f64 {
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    sxy / sxx
}

/// `v_F/√3`.
pub fn sound_velocity_analytic(v_fermi: f64) -> f64 {
    v_fermi / 3f64.sqrt()
}

/// `D = 3√3 γ n v_F² / (8Δ²)`.
pub fn diffusion_analytic(gamma: f64, n: f64, v_fermi: f64, delta: f64) -> Result<f64, CollectiveError> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(CollectiveError::ZeroGap(delta));
    }
    Ok(3.0 * 3f64.sqrt() * gamma * n * v_fermi * v_fermi / (8.0 * delta * delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// Simplified first-order integrand at one `(k, angle)` point.
fn first_order_integrand(p: &Pair, q0: f64, delta: f64) -> f64 {
    let d2 = delta * delta;
    let (e, ep) = (p.eps, p.eps_q);
    let num = -(q0 * q0 * (d2 * (e + ep) + 2.0 * e.powi(3))) + 4.0 * q0 * e * p.e * (ep - e).powi(2)
        - (e - ep).powi(2) * (d2 * (e - ep) + 2.0 * e.powi(3));
    let den = 4.0 * p.e.powi(3) * (q0 + p.e - p.e_q).powi(2) * (q0 + p.e + p.e_q).powi(2);
    num / den
}

/// `f(q)` from one quadrature resolution: the angle-averaged first-order
/// integral divided by `Σ w · v_F q / (4√3 Δ³)`.
pub fn first_order_f(
    q: f64,
    branch: Branch,
    delta: f64,
    grid: &MomentumGrid,
    order: usize,
) -> Result<f64, CollectiveError> {
    check_q(q, delta)?;
    let gl = rule(order)?;
    let vf = grid.v_fermi();
    let q0 = branch.sign() * vf * q / 3f64.sqrt();
    let rhs: f64 = (0..grid.len())
        .map(|i| {
            let avg = 0.5 * gl.integrate(-1.0, 1.0, |c| first_order_integrand(&pair(grid, i, q, c, delta), q0, delta));
            grid.weights[i] * avg
        })
        .sum();
    let lhs = grid.total_weight() * vf * q / (4.0 * 3f64.sqrt() * delta.powi(3));
    Ok(rhs / lhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionOptions {
    pub angle_order: usize,
    /// Relative change allowed between the base and the doubled resolution.
    pub rel_tol: f64,
}

impl Default for DiffusionOptions {
    fn default() -> Self {
        DiffusionOptions { angle_order: ANGLE_ORDER, rel_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstOrderPoint {
    pub q: f64,
    pub q0: f64,
    /// `f(q)` at the base resolution.
    pub f_coarse: f64,
    /// `f(q)` with the radial grid and angular order doubled.
    pub f_fine: f64,
}

impl FirstOrderPoint {
    pub fn rel_change(&self) -> f64 {
        (self.f_fine - self.f_coarse).abs() / self.f_fine.abs().max(f64::MIN_POSITIVE)
    }
}

/// Evaluates `f(q)` at two resolutions for every `q`.
pub fn first_order_points(
    qs: &[f64],
    branch: Branch,
    delta: f64,
    grid: &MomentumGrid,
    opts: &DiffusionOptions,
) -> Result<Vec<FirstOrderPoint>, CollectiveError> {
    let fine = MomentumGrid::uniform_3d(2 * grid.len(), grid.cutoff, grid.mu, grid.mass)
        .map_err(|e| CollectiveError::InvalidInput(e.to_string()))?;
    let q0_scale = branch.sign() * grid.v_fermi() / 3f64.sqrt();
    qs.par_iter()
        .map(|&q| {
            Ok(FirstOrderPoint {
                q,
                q0: q0_scale * q,
                f_coarse: first_order_f(q, branch, delta, grid, opts.angle_order)?,
                f_fine: first_order_f(q, branch, delta, &fine, 2 * opts.angle_order)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionFit {
    pub branch: Branch,
    pub points: Vec<FirstOrderPoint>,
    /// Least-squares `f(q)/q²` through the origin in `q²`.
    pub f_over_q2: f64,
    pub d: f64,
    /// `γn > 0.1Δ`
    pub regime_warning: bool,
}

fn fit_diffusion(branch: Branch, points: Vec<FirstOrderPoint>, gamma_n: f64, delta: f64) -> DiffusionFit {
    let sq: Vec<(f64, f64)> = points.iter().map(|p| (p.q * p.q, p.f_fine)).collect();
    let f_over_q2 = slope_through_origin(&sq);
    DiffusionFit { branch, points, f_over_q2, d: gamma_n * f_over_q2, regime_warning: gamma_n > REGIME_LIMIT * delta }
}

/// First-order diffusion coefficient on one branch. Fails when a doubled
/// resolution changes any `f(q)` by more than `rel_tol`.
pub fn diffusion_numeric(
    qs: &[f64],
    gamma_n: f64,
    delta: f64,
    grid: &MomentumGrid,
    branch: Branch,
    opts: &DiffusionOptions,
) -> Result<DiffusionFit, CollectiveError> {
    let fit = diffusion_unchecked(qs, gamma_n, delta, grid, branch, opts)?;
    if let Some(p) = fit.points.iter().find(|p| !p.rel_change().is_finite() || p.rel_change() > opts.rel_tol) {
        return Err(CollectiveError::QuadratureNonConvergence { q: p.q, coarse: p.f_coarse, fine: p.f_fine });
    }
    Ok(fit)
}

/// As [`diffusion_numeric`] without the convergence gate.
pub fn diffusion_unchecked(
    qs: &[f64],
    gamma_n: f64,
    delta: f64,
    grid: &MomentumGrid,
    branch: Branch,
    opts: &DiffusionOptions,
) -> Result<DiffusionFit, CollectiveError> {
    if qs.is_empty() {
        return Err(CollectiveError::InvalidInput("empty q list".into()));
    }
    if !(gamma_n >= 0.0 && gamma_n.is_finite()) {
        return Err(CollectiveError::InvalidInput(format!("γn = {gamma_n}")));
    }
    let fit = fit_diffusion(branch, first_order_points(qs, branch, delta, grid, opts)?, gamma_n, delta);
    if fit.regime_warning {
        log::warn!("γn = {gamma_n:e} exceeds {REGIME_LIMIT}·Δ; first-order expansion outside its regime");
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionSample {
    pub q: f64,
    pub q0: C64,
}

/// `q⁰ = ±v_s q + iDq²`, reported on the `+` branch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dispersion {
    pub samples: Vec<DispersionSample>,
    pub v_s_fit: f64,
    pub d_fit: Option<f64>,
    pub v_s_analytic: f64,
    pub d_analytic: f64,
}

impl Dispersion {
    pub fn new(qs: &[f64], v_s_fit: f64, d_fit: Option<f64>, v_s_analytic: f64, d_analytic: f64) -> Self {
        let d = d_fit.unwrap_or(d_analytic);
        let samples = qs.iter().map(|&q| DispersionSample { q, q0: C64::new(v_s_fit * q, d * q * q) }).collect();
        Dispersion { samples, v_s_fit, d_fit, v_s_analytic, d_analytic }
    }

    /// Mirrored branch `−v_s q + iDq²`.
    pub fn mirrored(&self) -> Vec<DispersionSample> {
        self.samples.iter().map(|s| DispersionSample { q: s.q, q0: C64::new(-s.q0.re, s.q0.im) }).collect()
    }
}

/// `n` points evenly spaced on `[qmin, qmax]`.
pub fn q_window(qmin: f64, qmax: f64, n: usize) -> Result<Vec<f64>, CollectiveError> {
    if !(qmin > 0.0 && qmax >= qmin && n >= 1) {
        return Err(CollectiveError::InvalidInput(format!("q window [{qmin}, {qmax}] with {n} points")));
    }
    if n == 1 {
        return Ok(vec![qmin]);
    }
    Ok((0..n).map(|i| qmin + (qmax - qmin) * i as f64 / (n - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> MomentumGrid {
        MomentumGrid::fermi_units(128)
    }

    #[test]
    fn residual_positive_at_zero_frequency() {
        let r = zeroth_order_residual(0.0, 0.01, 0.05, &grid(), 32).unwrap();
        assert!(r > 0.0, "{r}");
    }

    #[test]
    fn residual_even_in_frequency() {
        let g = grid();
        let a = zeroth_order_residual(0.004, 0.01, 0.05, &g, 32).unwrap();
        let b = zeroth_order_residual(-0.004, 0.01, 0.05, &g, 32).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn continuum_collision() {
        let g = grid();
        let edge = continuum_edge(0.01, 0.05, &g, 32).unwrap();
        assert!((0.1..0.105).contains(&edge), "{edge}");
        assert!(matches!(
            zeroth_order_residual(edge, 0.01, 0.05, &g, 32),
            Err(CollectiveError::ContinuumCollision { .. })
        ));
    }

    #[test]
    fn root_near_sound_velocity() {
        let g = MomentumGrid::fermi_units(256);
        let q = 0.01;
        let root = sound_root(q, 0.05, &g, &NgOptions::default()).unwrap();
        let want = sound_velocity_analytic(g.v_fermi()) * q;
        assert!((root / want - 1.0).abs() < 0.02, "{root} {want}");
        let at = zeroth_order_residual(root, q, 0.05, &g, ANGLE_ORDER).unwrap();
        assert!(at.abs() < 1e-8, "{at}");
    }

    #[test]
    fn analytic_diffusion() {
        assert_eq!(diffusion_analytic(0.0, 1.0, 1.0, 0.1).unwrap(), 0.0);
        let d = 0.07;
        let gn = 8.0 * d * d / (3.0 * 3f64.sqrt());
        assert!((diffusion_analytic(gn, 1.0, 1.0, d).unwrap() - 1.0).abs() < 1e-14);
        let r = diffusion_analytic(0.1, 1.0, 1.0, 0.2).unwrap() / diffusion_analytic(0.1, 1.0, 1.0, 0.1).unwrap();
        assert!((r - 0.25).abs() < 1e-14);
        assert_eq!(diffusion_analytic(0.1, 1.0, 1.0, 0.0), Err(CollectiveError::ZeroGap(0.0)));
    }

    #[test]
    fn numeric_diffusion_linear_in_width() {
        let g = MomentumGrid::fermi_units(64);
        let qs = [0.005, 0.01];
        let o = DiffusionOptions { angle_order: 16, rel_tol: 1e-3 };
        let a = diffusion_unchecked(&qs, 1e-4, 0.05, &g, Branch::Plus, &o).unwrap();
        let b = diffusion_unchecked(&qs, 2e-4, 0.05, &g, Branch::Plus, &o).unwrap();
        assert!((b.d / a.d - 2.0).abs() < 1e-12);
        assert_eq!(diffusion_unchecked(&qs, 0.0, 0.05, &g, Branch::Plus, &o).unwrap().d, 0.0);
    }

    #[test]
    fn regime_flag() {
        let g = MomentumGrid::fermi_units(32);
        let o = DiffusionOptions { angle_order: 8, rel_tol: 1e-3 };
        assert!(diffusion_unchecked(&[0.01], 0.02, 0.05, &g, Branch::Plus, &o).unwrap().regime_warning);
        assert!(!diffusion_unchecked(&[0.01], 0.001, 0.05, &g, Branch::Plus, &o).unwrap().regime_warning);
    }

    #[test]
    fn dispersion_branches() {
        let d = Dispersion::new(&[0.01, 0.02], 0.5, Some(2.0), 0.577, 1.9);
        assert_eq!(d.samples[1].q0, C64::new(0.01, 0.0008));
        assert_eq!(d.mirrored()[1].q0, C64::new(-0.01, 0.0008));
        assert!(d.samples.iter().all(|s| s.q0.im >= 0.0));
    }

    #[test]
    fn window() {
        assert_eq!(q_window(0.001, 0.003, 3).unwrap(), vec![0.001, 0.002, 0.003]);
        assert!(q_window(0.0, 0.1, 3).is_err());
    }
}
