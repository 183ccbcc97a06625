// SPDX-License-Identifier: Apache-2.0

//! Mean-field dynamics of a BCS superconductor with two-body loss.
//!
//! Each momentum mode carries Bogoliubov amplitudes `(u_k, v_k)` obeying
//!
//! ```text
//! i d/dt (u, v) = [[−ε_k, Δ*], [Δ, ε_k]] (u, v)
//! Δ = −(U_c / Σw) Σ_k w_k u*_k v_k,      U_c = U + iγ/2
//! ```
//!
//! The mode matrix is Hermitian for any complex `Δ`, so `|u|² + |v|²` is
//! conserved per mode while the loss enters only through the complex
//! coupling. All sums over modes are weighted by the grid measure `w_k` and
//! normalized by `Σ w_k`.
//!
//! Units: `ħ = m = k_F = 1`, so `v_F = 1`, `μ = E_F = ½` and
//! `ε_k = k²/2 − μ`.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeanFieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("gap equation has no solution for U = {coupling} on this grid (no sign change)")]
    NoSolution { coupling: f64 },
    #[error("gap equation residual {residual:e} above tolerance")]
    GapResidual { residual: f64 },
    #[error("per-mode norm drift {drift:e} after {halvings} step halvings")]
    NormDrift { drift: f64, halvings: u32 },
    #[error("O_N forms disagree by {0:e}")]
    OnMismatch(f64),
}

/// Quadrature nodes `(ε_k, w_k)` with strictly increasing `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumGrid {
    pub k: Vec<f64>,
    pub eps: Vec<f64>,
    pub weights: Vec<f64>,
    pub mass: f64,
    pub mu: f64,
    pub cutoff: f64,
}

impl MomentumGrid {
    /// Midpoint rule in `|k|` on `[0, cutoff]` with the isotropic 3D measure
    /// `w = k² Δk / (2π²)`.
    pub fn uniform_3d(n: usize, cutoff: f64, mu: f64, mass: f64) -> Result<Self, MeanFieldError> {
        if n == 0 {
            return Err(MeanFieldError::InvalidGrid("grid needs at least one point".into()));
        }
        if !(cutoff > 0.0 && mass > 0.0 && cutoff.is_finite() && mu.is_finite()) {
            return Err(MeanFieldError::InvalidGrid(format!("cutoff {cutoff}, mass {mass}")));
        }
        let dk = cutoff / n as f64;
        let k: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dk).collect();
        let eps = k.iter().map(|k| k * k / (2.0 * mass) - mu).collect();
        let weights = k.iter().map(|k| k * k * dk / (2.0 * std::f64::consts::PI.powi(2))).collect();
        Ok(MomentumGrid { k, eps, weights, mass, mu, cutoff })
    }

    /// Default Fermi-unit grid: `m = 1`, `μ = ½`, `Λ = 3 k_F`.
    pub fn fermi_units(n: usize) -> Self {
        Self::uniform_3d(n, 3.0, 0.5, 1.0).expect("valid defaults")
    }

    /// Grid of bare levels; `k` is left empty.
    pub fn from_levels(eps: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeanFieldError> {
        if eps.is_empty() || eps.len() != weights.len() {
            return Err(MeanFieldError::InvalidGrid("levels and weights must be non-empty and of equal length".into()));
        }
        if eps.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(MeanFieldError::InvalidGrid("energies must be strictly increasing".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || eps.iter().any(|e| !e.is_finite()) {
            return Err(MeanFieldError::InvalidGrid("weights must be finite and non-negative".into()));
        }
        let cutoff = eps.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        Ok(MomentumGrid { k: Vec::new(), eps, weights, mass: 1.0, mu: 0.0, cutoff })
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn k_fermi(&self) -> f64 {
        (2.0 * self.mass * self.mu.max(0.0)).sqrt()
    }

    pub fn v_fermi(&self) -> f64 {
        self.k_fermi() / self.mass
    }

    /// Largest `|ε|` on the grid.
    pub fn energy_span(&self) -> f64 {
        self.eps.iter().fold(0.0f64, |a, e| a.max(e.abs()))
    }
}

/// `1 − (U/Σw) Σ w / (2E)`; increasing in `Δ`.
pub fn gap_residual(delta: f64, coupling: f64, grid: &MomentumGrid) -> f64 {
    let s: f64 = grid.eps.iter().zip(&grid.weights).map(|(e, w)| w / (2.0 * (e * e + delta * delta).sqrt())).sum();
    1.0 - coupling * s / grid.total_weight()
}

/// Positive root of the gap equation by bracketing and bisection.
pub fn solve_gap(coupling: f64, grid: &MomentumGrid) -> Result<f64, MeanFieldError> {
    if !(coupling > 0.0 && coupling.is_finite()) {
        return Err(MeanFieldError::InvalidInput(format!("U = {coupling} must be positive")));
    }
    if grid.is_empty() || grid.total_weight() <= 0.0 {
        return Err(MeanFieldError::InvalidGrid("empty grid".into()));
    }
    let mut lo = 1e-12;
    let mut hi = grid.energy_span().max(coupling);
    let f_lo = gap_residual(lo, coupling, grid);
    let f_hi = gap_residual(hi, coupling, grid);
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(MeanFieldError::NoSolution { coupling });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap_residual(mid, coupling, grid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = if gap_residual(lo, coupling, grid).abs() < gap_residual(hi, coupling, grid).abs() { lo } else { hi };
    let residual = gap_residual(root, coupling, grid).abs();
    if residual >= 1e-10 {
        return Err(MeanFieldError::GapResidual { residual });
    }
    Ok(root)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BcsState {
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    pub delta: C64,
    pub t: f64,
}

/// Ground state for gap `delta0`: `u = √((E+ε)/2E)`, `v = √((E−ε)/2E)`.
///
/// With both amplitudes non-negative the self-consistent order parameter of
/// the mode equation is `Δ = −Δ0`, which is what is stored.
pub fn init_bcs(delta0: f64, grid: &MomentumGrid) -> Result<BcsState, MeanFieldError> {
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(MeanFieldError::InvalidInput(format!("Δ0 = {delta0} must be positive")));
    }
    let mut u = Vec::with_capacity(grid.len());
    let mut v = Vec::with_capacity(grid.len());
    for &e in &grid.eps {
        let big_e = (e * e + delta0 * delta0).sqrt();
        u.push(C64::new(((big_e + e) / (2.0 * big_e)).sqrt(), 0.0));
        v.push(C64::new(((big_e - e) / (2.0 * big_e)).sqrt(), 0.0));
    }
    Ok(BcsState { u, v, delta: C64::new(-delta0, 0.0), t: 0.0 })
}

/// `Δ = −(U_c/Σw) Σ w u* v`.
pub fn order_parameter(u: &[C64], v: &[C64], coupling: C64, grid: &MomentumGrid) -> C64 {
    let s: C64 = grid.weights.iter().zip(u.iter().zip(v)).map(|(w, (u, v))| u.conj() * v * *w).sum();
    -coupling * s / grid.total_weight()
}

/// `N = 2 Σ w |v|²`.
pub fn particle_number(state: &BcsState, grid: &MomentumGrid) -> f64 {
    2.0 * grid.weights.iter().zip(&state.v).map(|(w, v)| w * v.norm_sqr()).sum::<f64>()
}

/// `O_N = −4 Σ w |u|² |v|²`.
pub fn mf_on(state: &BcsState, grid: &MomentumGrid) -> f64 {
    -4.0 * grid
        .weights
        .iter()
        .zip(state.u.iter().zip(&state.v))
        .map(|(w, (u, v))| w * u.norm_sqr() * v.norm_sqr())
        .sum::<f64>()
}

/// `O_N = −2N + Σ w n_k²` with `n_k = 2|v_k|²`.
pub fn mf_on_occupation(state: &BcsState, grid: &MomentumGrid) -> f64 {
    let sq: f64 = grid.weights.iter().zip(&state.v).map(|(w, v)| w * (2.0 * v.norm_sqr()).powi(2)).sum();
    -2.0 * particle_number(state, grid) + sq
}

/// [`mf_on`] after checking it against [`mf_on_occupation`] to `1e-10`.
pub fn mf_on_checked(state: &BcsState, grid: &MomentumGrid) -> Result<f64, MeanFieldError> {
    let a = mf_on(state, grid);
    let b = mf_on_occupation(state, grid);
    if (a - b).abs() > 1e-10 {
        return Err(MeanFieldError::OnMismatch((a - b).abs()));
    }
    Ok(a)
}

/// Largest `||u|² + |v|² − 1|` over modes.
pub fn norm_deviation(state: &BcsState) -> f64 {
    state.u.iter().zip(&state.v).map(|(u, v)| (u.norm_sqr() + v.norm_sqr() - 1.0).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaMode {
    /// Recompute `Δ` from the amplitudes at every RK4 stage.
    SelfConsistent,
    /// Hold `Δ` fixed.
    External(C64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcsParams {
    pub coupling: f64,
    pub gamma: f64,
    pub dt: f64,
    pub t_final: f64,
    pub mode: DeltaMode,
    pub norm_tol: f64,
    pub max_halvings: u32,
}

impl BcsParams {
    pub fn new(coupling: f64, gamma: f64, dt: f64, t_final: f64) -> Self {
        BcsParams { coupling, gamma, dt, t_final, mode: DeltaMode::SelfConsistent, norm_tol: 1e-8, max_halvings: 8 }
    }

    /// `U + iγ/2`.
    pub fn complex_coupling(&self) -> C64 {
        C64::new(self.coupling, self.gamma / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BcsRecord {
    pub t: f64,
    pub delta: C64,
    pub n: f64,
    pub on: f64,
    pub norm_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct BcsTrajectory {
    pub dt: f64,
    pub substeps: usize,
    pub records: Vec<BcsRecord>,
    /// About a hundred evenly spaced states, always including both ends.
    pub snapshots: Vec<BcsState>,
}

impl BcsTrajectory {
    pub fn final_state(&self) -> &BcsState {
        self.snapshots.last().expect("initial state is always stored")
    }

    pub fn max_norm_deviation(&self) -> f64 {
        self.records.iter().map(|r| r.norm_deviation).fold(0.0, f64::max)
    }

    /// Writes `t,Re(Delta),Im(Delta),absDelta,N,ON_mf`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "Re(Delta)", "Im(Delta)", "absDelta", "N", "ON_mf"])?;
        for r in &self.records {
            w.write_record([
                r.t.to_string(),
                r.delta.re.to_string(),
                r.delta.im.to_string(),
                r.delta.norm().to_string(),
                r.n.to_string(),
                r.on.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct ModeRhs<'a> {
    grid: &'a MomentumGrid,
    coupling: C64,
    mode: DeltaMode,
}

impl ModeRhs<'_> {
    fn delta(&self, u: &[C64], v: &[C64]) -> C64 {
        match self.mode {
            DeltaMode::SelfConsistent => order_parameter(u, v, self.coupling, self.grid),
            DeltaMode::External(d) => d,
        }
    }

    fn eval(&self, u: &[C64], v: &[C64], du: &mut [C64], dv: &mut [C64]) {
        let d = self.delta(u, v);
        let mi = C64::new(0.0, -1.0);
        for k in 0..u.len() {
            let e = self.grid.eps[k];
            du[k] = mi * (u[k] * (-e) + d.conj() * v[k]);
            dv[k] = mi * (d * u[k] + v[k] * e);
        }
    }
}

fn rk4_step(rhs: &ModeRhs<'_>, u: &mut [C64], v: &mut [C64], h: f64, scratch: &mut [Vec<C64>; 10]) {
    let n = u.len();
    let [ku1, kv1, ku2, kv2, ku3, kv3, ku4, kv4, tu, tv] = scratch;
    rhs.eval(u, v, ku1, kv1);
    for k in 0..n {
        tu[k] = u[k] + ku1[k] * (0.5 * h);
        tv[k] = v[k] + kv1[k] * (0.5 * h);
    }
    rhs.eval(tu, tv, ku2, kv2);
    for k in 0..n {
        tu[k] = u[k] + ku2[k] * (0.5 * h);
        tv[k] = v[k] + kv2[k] * (0.5 * h);
    }
    rhs.eval(tu, tv, ku3, kv3);
    for k in 0..n {
        tu[k] = u[k] + ku3[k] * h;
        tv[k] = v[k] + kv3[k] * h;
    }
    rhs.eval(tu, tv, ku4, kv4);
    for k in 0..n {
        u[k] += (ku1[k] + (ku2[k] + ku3[k]) * 2.0 + ku4[k]) * (h / 6.0);
        v[k] += (kv1[k] + (kv2[k] + kv3[k]) * 2.0 + kv4[k]) * (h / 6.0);
    }
}

fn run_bcs(
    state: &BcsState,
    grid: &MomentumGrid,
    p: &BcsParams,
    steps: usize,
    dt: f64,
    substeps: usize,
) -> BcsTrajectory {
    let rhs = ModeRhs { grid, coupling: p.complex_coupling(), mode: p.mode };
    let n = state.u.len();
    let mut scratch: [Vec<C64>; 10] = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n]);
    let mut u = state.u.clone();
    let mut v = state.v.clone();
    let stride = (steps / 100).max(1);
    let record = |t: f64, u: &[C64], v: &[C64]| {
        let s = BcsState { u: u.to_vec(), v: v.to_vec(), delta: rhs.delta(u, v), t };
        let r = BcsRecord {
            t,
            delta: s.delta,
            n: particle_number(&s, grid),
            on: mf_on(&s, grid),
            norm_deviation: norm_deviation(&s),
        };
        (r, s)
    };
    let (r0, s0) = record(state.t, &u, &v);
    let mut records = vec![r0];
    let mut snapshots = vec![s0];
    let h = dt / substeps as f64;
    for step in 1..=steps {
        for _ in 0..substeps {
            rk4_step(&rhs, &mut u, &mut v, h, &mut scratch);
        }
        let (r, s) = record(state.t + step as f64 * dt, &u, &v);
        records.push(r);
        if step % stride == 0 || step == steps {
            snapshots.push(s);
        }
    }
    BcsTrajectory { dt, substeps, records, snapshots }
}

/// Integrates the mode equations with RK4, halving the internal step until
/// the per-mode norm stays within `params.norm_tol`.
pub fn evolve_bcs(state: &BcsState, grid: &MomentumGrid, params: &BcsParams) -> Result<BcsTrajectory, MeanFieldError> {
    if state.u.len() != grid.len() || state.v.len() != grid.len() {
        return Err(MeanFieldError::InvalidInput("state and grid sizes differ".into()));
    }
    if !(params.dt > 0.0 && params.dt.is_finite() && params.t_final >= 0.0 && params.t_final.is_finite()) {
        return Err(MeanFieldError::InvalidInput(format!("dt = {}, T = {}", params.dt, params.t_final)));
    }
    let steps = (params.t_final / params.dt - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps == 0 { params.dt } else { params.t_final / steps as f64 };
    let mut substeps = 1;
    for halvings in 0..=params.max_halvings {
        let traj = run_bcs(state, grid, params, steps, dt, substeps);
        let drift = traj.max_norm_deviation();
        if drift < params.norm_tol {
            return Ok(traj);
        }
        log::debug!("evolve_bcs: substeps {substeps}, norm drift {drift:e}");
        if halvings == params.max_halvings {
            return Err(MeanFieldError::NormDrift { drift, halvings });
        }
        substeps *= 2;
    }
    unreachable!()
}
