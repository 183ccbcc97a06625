// SPDX-License-Identifier: Apache-2.0

//! Exact Lindblad dynamics on the Fock space of a small Hubbard chain.
//!
//! The Hamiltonian is
//! `H = −J Σ_⟨ab⟩σ (c†_aσ c_bσ + h.c.) − U Σ_r n_r↑ n_r↓ − μ N`
//! (attractive for `U > 0`), and every dissipator contributes
//! `γ (L ρ L† − ½{L†L, ρ})`. In the row-major vectorization of [`crate::fock`]
//! the generator is
//!
//! `ℒ = −i(H⊗I − I⊗Hᵀ) + Σ γ [L⊗L̄ − ½(L†L⊗I + I⊗(L†L)ᵀ)]`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::fock::{self, build_site_ops, commutator, compile, DensityMatrix, FockError, FockOp, SiteOps, C64};
use crate::opspec::{validate, Issue, ModelSpec, Spin};

/// Largest lattice for which the superoperator is built (`(4^L)² ≤ 4096`).
pub const MAX_LIOUVILLIAN_SITES: usize = 3;

/// Largest doubled-space dimension for the SWAP evaluation of `O_N`.
pub const MAX_SWAP_DIM: usize = 4096;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LindbladError {
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error("capacity exceeded: {sites} site(s), at most {max} supported here")]
    CapacityExceeded { sites: usize, max: usize },
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("invalid time grid: {0}")]
    InvalidTimes(String),
    #[error("no convergence after {halvings} step halvings (observable change {change:e})")]
    NonConvergence { halvings: u32, change: f64 },
    #[error("trace drift {rate:e} per unit time exceeds {limit:e}")]
    TraceDrift { rate: f64, limit: f64 },
    #[error("snapshot at t = {t} has eigenvalue {min_eig:e}")]
    Positivity { t: f64, min_eig: f64 },
    #[error("trajectory too coarse: {0}")]
    TooCoarse(String),
    #[error("dissipator `{0}` acts on more than one site; the lattice dissipative current is defined for on-site jumps only")]
    UnsupportedDissipator(String),
}

#[derive(Debug, Clone)]
pub struct Jump {
    pub label: String,
    pub rate: f64,
    pub op: FockOp,
    /// Sites the jump operator acts on.
    pub sites: Vec<usize>,
}

/// Hubbard Hamiltonian of `spec` on the given operator family.
pub fn hubbard_hamiltonian(spec: &ModelSpec, ops: &SiteOps) -> FockOp {
    let d = ops.dim();
    let mut h = FockOp::zeros(d);
    for (a, b) in spec.bonds() {
        for s in [Spin::Up, Spin::Dn] {
            let hop = &(ops.cdag(a, s) * ops.c(b, s)) + &(ops.cdag(b, s) * ops.c(a, s));
            h = &h + &hop.scale(C64::new(-spec.hopping, 0.0));
        }
    }
    for r in 0..spec.num_sites {
        let d = ops.n(r, Spin::Up) * ops.n(r, Spin::Dn);
        h = &h + &d.scale(C64::new(-spec.interaction, 0.0));
    }
    &h + &ops.total_number().scale(C64::new(-spec.chemical_potential, 0.0))
}

/// Particle current `j_{a→b} = iJ Σ_σ (c†_bσ c_aσ − c†_aσ c_bσ)` across a bond.
pub fn bond_current(ops: &SiteOps, hopping: f64, a: usize, b: usize) -> FockOp {
    let mut j = FockOp::zeros(ops.dim());
    for s in [Spin::Up, Spin::Dn] {
        let t = &(ops.cdag(b, s) * ops.c(a, s)) - &(ops.cdag(a, s) * ops.c(b, s));
        j = &j + &t;
    }
    j.scale(I * hopping)
}

/// `∂B/∂θ_r = i[n_r, B]`.
pub fn phase_derivative(ops: &SiteOps, site: usize, b: &FockOp) -> FockOp {
    commutator(&ops.site_density(site), b).scale(I)
}

/// Local dissipative divergence `(iγ/2)(L† ∂L/∂θ_r − ∂L†/∂θ_r L)` at `site`.
pub fn dissipative_divergence(ops: &SiteOps, site: usize, rate: f64, l: &FockOp) -> FockOp {
    let ld = l.adjoint();
    let a = &ld * &phase_derivative(ops, site, l);
    let b = &phase_derivative(ops, site, &ld) * l;
    (&a - &b).scale(I * (rate / 2.0))
}

fn superoperator(h: &FockOp, jumps: &[Jump]) -> FockOp {
    let d = h.dim();
    let id = FockOp::identity(d);
    let mut sup = (&h.kron(&id) - &id.kron(&h.transpose())).scale(-I);
    for j in jumps {
        if j.rate == 0.0 {
            continue;
        }
        let l = &j.op;
        let ldl = &l.adjoint() * l;
        let hop = l.kron(&l.conj());
        let anti = &ldl.kron(&id) + &id.kron(&ldl.transpose());
        let term = &hop - &anti.scale(C64::new(0.5, 0.0));
        sup = &sup + &term.scale(C64::new(j.rate, 0.0));
    }
    sup
}

/// Vectorized Lindblad generator together with the operators it was built from.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    spec: Option<ModelSpec>,
    ops: SiteOps,
    hamiltonian: FockOp,
    jumps: Vec<Jump>,
    superop: FockOp,
}

/// Builds the Liouvillian of a validated model with at most
/// [`MAX_LIOUVILLIAN_SITES`] sites.
pub fn build_liouvillian(spec: &ModelSpec) -> Result<Liouvillian, LindbladError> {
    let report = validate(spec);
    if let Some(Issue::CapacityExceeded { num_sites, .. }) =
        report.issues.iter().find(|i| matches!(i, Issue::CapacityExceeded { .. }))
    {
        return Err(LindbladError::CapacityExceeded { sites: *num_sites, max: MAX_LIOUVILLIAN_SITES });
    }
    if !report.is_empty() {
        return Err(LindbladError::InvalidSpec(report.to_string()));
    }
    if spec.num_sites > MAX_LIOUVILLIAN_SITES {
        return Err(LindbladError::CapacityExceeded { sites: spec.num_sites, max: MAX_LIOUVILLIAN_SITES });
    }
    let ops = build_site_ops(spec.num_sites)?;
    let hamiltonian = hubbard_hamiltonian(spec, &ops);
    let mut jumps = Vec::with_capacity(spec.dissipators.len());
    for d in &spec.dissipators {
        jumps.push(Jump { label: d.label.clone(), rate: d.rate, op: compile(&d.expr, &ops)?, sites: d.expr.sites() });
    }
    let superop = superoperator(&hamiltonian, &jumps);
    Ok(Liouvillian { spec: Some(spec.clone()), ops, hamiltonian, jumps, superop })
}

impl Liouvillian {
    /// Builds from explicit operators on an `num_sites`-site Fock space. The
    /// support of each jump is the set of sites whose density it changes.
    pub fn from_operators(
        num_sites: usize,
        hamiltonian: FockOp,
        jumps: Vec<(String, f64, FockOp)>,
    ) -> Result<Self, LindbladError> {
        if num_sites == 0 || num_sites > MAX_LIOUVILLIAN_SITES {
            return Err(LindbladError::CapacityExceeded { sites: num_sites, max: MAX_LIOUVILLIAN_SITES });
        }
        let ops = build_site_ops(num_sites)?;
        let d = ops.dim();
        for op in std::iter::once(&hamiltonian).chain(jumps.iter().map(|j| &j.2)) {
            if op.dim() != d {
                return Err(FockError::DimensionMismatch { expected: d, got: op.dim() }.into());
            }
        }
        let jumps: Vec<Jump> = jumps
            .into_iter()
            .map(|(label, rate, op)| {
                let sites = (0..num_sites)
                    .filter(|&r| commutator(&ops.site_density(r), &op).frobenius_norm() > 1e-12)
                    .collect();
                Jump { label, rate, op, sites }
            })
            .collect();
        let superop = superoperator(&hamiltonian, &jumps);
        Ok(Liouvillian { spec: None, ops, hamiltonian, jumps, superop })
    }

    pub fn spec(&self) -> Option<&ModelSpec> {
        self.spec.as_ref()
    }

    pub fn site_ops(&self) -> &SiteOps {
        &self.ops
    }

    pub fn num_sites(&self) -> usize {
        self.ops.num_sites()
    }

    /// Hilbert-space dimension `4^L`.
    pub fn dim(&self) -> usize {
        self.ops.dim()
    }

    pub fn hamiltonian(&self) -> &FockOp {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// The superoperator on vectorized states.
    pub fn matrix(&self) -> &FockOp {
        &self.superop
    }

    /// `ℒ(ρ)` for a dense matrix.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let v = fock::vectorize_matrix(rho);
        let w = self.superop.apply(&v);
        fock::devectorize_matrix(w.as_slice()).expect("square by construction")
    }

    /// Heisenberg-picture generator `ℒ†(X) = i[H,X] + Σ γ(L†XL − ½{L†L,X})`.
    pub fn adjoint_action(&self, x: &FockOp) -> FockOp {
        let mut out = commutator(&self.hamiltonian, x).scale(I);
        for j in &self.jumps {
            let l = &j.op;
            let ld = l.adjoint();
            let ldl = &ld * l;
            let sandwich = &(&ld * x) * l;
            let anti = &(&ldl * x) + &(x * &ldl);
            let term = &sandwich - &anti.scale(C64::new(0.5, 0.0));
            out = &out + &term.scale(C64::new(j.rate, 0.0));
        }
        out
    }

    /// Whether every jump acts on at most one site.
    pub fn onsite_dissipators(&self) -> Result<(), LindbladError> {
        match self.jumps.iter().find(|j| j.sites.len() > 1) {
            Some(j) => Err(LindbladError::UnsupportedDissipator(j.label.clone())),
            None => Ok(()),
        }
    }
}

/// Phase-rotation generator `𝒩 = N⊗I − I⊗Nᵀ` on vectorized states.
pub fn phase_generator(number: &FockOp) -> FockOp {
    let id = FockOp::identity(number.dim());
    &number.kron(&id) - &id.kron(&number.transpose())
}

/// Total particle number operator for a Fock space of dimension `dim`.
pub fn number_operator(dim: usize) -> FockOp {
    FockOp::from_triplets(dim, (0..dim).map(|s| (s, s, C64::new(fock::particle_count(s) as f64, 0.0))))
}

/// Precomputed operators for the three evaluations of `O_N`.
#[derive(Debug, Clone)]
pub struct OnEvaluator {
    number: FockOp,
    number_sq: FockOp,
    generator: FockOp,
    doubled: Option<(FockOp, FockOp, FockOp)>,
}

impl OnEvaluator {
    pub fn new(dim: usize) -> Self {
        let number = number_operator(dim);
        let number_sq = &number * &number;
        let generator = phase_generator(&number);
        let doubled = (dim * dim <= MAX_SWAP_DIM).then(|| {
            let id = FockOp::identity(dim);
            (number.kron(&number), number_sq.kron(&id), fock::swap_operator(dim))
        });
        OnEvaluator { number, number_sq, generator, doubled }
    }

    pub fn dim(&self) -> usize {
        self.number.dim()
    }

    pub fn number(&self, rho: &DMatrix<C64>) -> f64 {
        self.number.expectation(rho).re
    }

    /// `Tr[NρNρ] − Tr[N²ρ²]`.
    pub fn direct(&self, rho: &DMatrix<C64>) -> f64 {
        let a = self.number.mul_dense(rho);
        let b = self.number_sq.mul_dense(rho);
        let d = rho.nrows();
        let mut t1 = C64::new(0.0, 0.0);
        let mut t2 = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                t1 += a[(i, j)] * a[(j, i)];
                t2 += b[(i, j)] * rho[(j, i)];
            }
        }
        (t1 - t2).re
    }

    /// `−½ ⟨⟨ρ|𝒩²|ρ⟩⟩`.
    pub fn vectorized(&self, rho: &DMatrix<C64>) -> f64 {
        let v = fock::vectorize_matrix(rho);
        let w = self.generator.apply(&self.generator.apply(&v));
        0.0 - 0.5 * v.dotc(&w).re
    }

    /// `Tr[(N⊗N) S (ρ⊗ρ)] − Tr[(N²⊗I) S (ρ⊗ρ)]`, evaluated entry by entry on
    /// the doubled space without storing `ρ⊗ρ`. `None` above [`MAX_SWAP_DIM`].
    pub fn swap(&self, rho: &DMatrix<C64>) -> Option<f64> {
        let (nn, n2i, s) = self.doubled.as_ref()?;
        let d = rho.nrows();
        let r = |c: usize, a: usize| rho[(c / d, a / d)] * rho[(c % d, a % d)];
        // Tr[M S R] = Σ M_ab S_bc R_ca
        let trace_msr = |m: &FockOp| -> C64 {
            let mut acc = C64::new(0.0, 0.0);
            for (a, b, mv) in m.triplets() {
                let row = s.csr().row(b);
                for (&c, &sv) in row.col_indices().iter().zip(row.values()) {
                    acc += mv * sv * r(c, a);
                }
            }
            acc
        };
        Some((trace_msr(nn) - trace_msr(n2i)).re)
    }
}

pub fn observable_n(rho: &DensityMatrix) -> f64 {
    number_operator(rho.dim()).expectation(rho.matrix()).re
}

pub fn observable_on_direct(rho: &DensityMatrix) -> f64 {
    OnEvaluator::new(rho.dim()).direct(rho.matrix())
}

pub fn observable_on_vectorized(rho: &DensityMatrix) -> f64 {
    OnEvaluator::new(rho.dim()).vectorized(rho.matrix())
}

pub fn observable_on_swap(rho: &DensityMatrix) -> Result<f64, LindbladError> {
    let d = rho.dim();
    OnEvaluator::new(d)
        .swap(rho.matrix())
        .ok_or(LindbladError::CapacityExceeded { sites: (d.trailing_zeros() / 2) as usize, max: MAX_LIOUVILLIAN_SITES })
}

/// Observables recorded at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub n: f64,
    pub on_direct: f64,
    pub on_vec: f64,
    pub on_swap: Option<f64>,
    pub trace: f64,
    pub energy: f64,
    /// `⟨n_r⟩` per site.
    pub density: Vec<f64>,
    /// `⟨div j_c⟩_r` per site.
    pub div_kinetic: Vec<f64>,
    /// `⟨∇·j_d⟩_r` per site; `None` when some jump spans several sites.
    pub div_dissipative: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Output step.
    pub dt: f64,
    /// RK4 steps per output step after halving.
    pub substeps: usize,
    pub records: Vec<StepRecord>,
    /// `(record index, state)` pairs.
    pub snapshots: Vec<(usize, DensityMatrix)>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn final_state(&self) -> &DensityMatrix {
        &self.snapshots.last().expect("at least the initial state").1
    }

    /// `max_t |N(t) − N(0)|`.
    pub fn n_drift(&self) -> f64 {
        let n0 = self.records[0].n;
        self.records.iter().map(|r| (r.n - n0).abs()).fold(0.0, f64::max)
    }

    /// `max_t |O_N(t) − O_N(0)|` using the direct form.
    pub fn on_drift(&self) -> f64 {
        let o0 = self.records[0].on_direct;
        self.records.iter().map(|r| (r.on_direct - o0).abs()).fold(0.0, f64::max)
    }

    /// Largest pairwise disagreement among the `O_N` evaluations.
    pub fn on_disagreement(&self) -> f64 {
        self.records
            .iter()
            .map(|r| {
                let mut w = (r.on_direct - r.on_vec).abs();
                if let Some(s) = r.on_swap {
                    w = w.max((r.on_direct - s).abs()).max((r.on_vec - s).abs());
                }
                w
            })
            .fold(0.0, f64::max)
    }

    /// Writes `t,N,ON_direct,ON_vec,ON_swap,trace,residual_max`; the residual
    /// column is blank where it is undefined.
    pub fn write_csv<W: Write>(&self, out: W, continuity: Option<&ContinuityReport>) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "N", "ON_direct", "ON_vec", "ON_swap", "trace", "residual_max"])?;
        for (k, r) in self.records.iter().enumerate() {
            let residual = continuity.and_then(|c| c.row_max(k)).map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                r.t.to_string(),
                r.n.to_string(),
                r.on_direct.to_string(),
                r.on_vec.to_string(),
                r.on_swap.map(|x| x.to_string()).unwrap_or_default(),
                r.trace.to_string(),
                residual,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    /// Halve the RK4 step until `N` and `O_N` change by less than this.
    pub tol: f64,
    pub max_halvings: u32,
    /// Keep every `k`-th state; `0` keeps about a hundred evenly spaced.
    pub snapshot_stride: usize,
    pub positivity_tol: f64,
    pub trace_drift_limit: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            tol: 1e-9,
            max_halvings: 10,
            snapshot_stride: 0,
            positivity_tol: 1e-8,
            trace_drift_limit: 1e-10,
        }
    }
}

struct SiteObservables {
    density: Vec<FockOp>,
    div_kinetic: Vec<FockOp>,
    div_dissipative: Option<Vec<FockOp>>,
}

impl SiteObservables {
    fn new(l: &Liouvillian) -> Self {
        let ops = l.site_ops();
        let nsites = ops.num_sites();
        let hopping = l.spec().map_or(0.0, |s| s.hopping);
        let bonds = l.spec().map(|s| s.bonds()).unwrap_or_default();
        let mut div_kinetic = vec![FockOp::zeros(ops.dim()); nsites];
        for (a, b) in bonds {
            let j = bond_current(ops, hopping, a, b);
            div_kinetic[a] = &div_kinetic[a] + &j;
            div_kinetic[b] = &div_kinetic[b] - &j;
        }
        let div_dissipative = l.onsite_dissipators().ok().map(|_| {
            (0..nsites)
                .map(|r| {
                    l.jumps()
                        .iter()
                        .filter(|j| j.sites.contains(&r))
                        .fold(FockOp::zeros(ops.dim()), |acc, j| &acc + &dissipative_divergence(ops, r, j.rate, &j.op))
                })
                .collect()
        });
        SiteObservables { density: (0..nsites).map(|r| ops.site_density(r)).collect(), div_kinetic, div_dissipative }
    }
}

struct Recorder<'a> {
    on: OnEvaluator,
    sites: SiteObservables,
    hamiltonian: &'a FockOp,
}

impl Recorder<'_> {
    fn record(&self, t: f64, rho: &DMatrix<C64>) -> StepRecord {
        let ex = |o: &FockOp| o.expectation(rho).re;
        StepRecord {
            t,
            n: self.on.number(rho),
            on_direct: self.on.direct(rho),
            on_vec: self.on.vectorized(rho),
            on_swap: self.on.swap(rho),
            trace: rho.trace().re,
            energy: ex(self.hamiltonian),
            density: self.sites.density.iter().map(ex).collect(),
            div_kinetic: self.sites.div_kinetic.iter().map(ex).collect(),
            div_dissipative: self.sites.div_dissipative.as_ref().map(|v| v.iter().map(ex).collect()),
        }
    }
}

struct Rk4<'a> {
    op: &'a FockOp,
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl<'a> Rk4<'a> {
    fn new(op: &'a FockOp) -> Self {
        let n = op.dim();
        Rk4 { op, k: std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n]), tmp: vec![C64::new(0.0, 0.0); n] }
    }

    fn step(&mut self, y: &mut [C64], h: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        self.op.matvec(y, k1);
        for (t, (a, b)) in self.tmp.iter_mut().zip(y.iter().zip(k1.iter())) {
            *t = a + b * (0.5 * h);
        }
        self.op.matvec(&self.tmp, k2);
        for (t, (a, b)) in self.tmp.iter_mut().zip(y.iter().zip(k2.iter())) {
            *t = a + b * (0.5 * h);
        }
        self.op.matvec(&self.tmp, k3);
        for (t, (a, b)) in self.tmp.iter_mut().zip(y.iter().zip(k3.iter())) {
            *t = a + b * h;
        }
        self.op.matvec(&self.tmp, k4);
        for i in 0..y.len() {
            y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }
}

fn run_fixed(
    l: &Liouvillian,
    rec: &Recorder<'_>,
    rho0: &DMatrix<C64>,
    steps: usize,
    dt: f64,
    substeps: usize,
    stride: usize,
) -> (Vec<StepRecord>, Vec<(usize, DensityMatrix)>) {
    let mut y = fock::vectorize_matrix(rho0);
    let mut rk = Rk4::new(l.matrix());
    let h = dt / substeps as f64;
    let mut records = Vec::with_capacity(steps + 1);
    let mut snaps = Vec::new();
    records.push(rec.record(0.0, rho0));
    snaps.push((0, DensityMatrix::from_matrix_unchecked(rho0.clone())));
    for k in 1..=steps {
        for _ in 0..substeps {
            rk.step(y.as_mut_slice(), h);
        }
        let rho = fock::devectorize_matrix(y.as_slice()).expect("square");
        records.push(rec.record(k as f64 * dt, &rho));
        if k % stride == 0 || k == steps {
            snaps.push((k, DensityMatrix::from_matrix_unchecked(rho)));
        }
    }
    (records, snaps)
}

fn max_change(a: &[StepRecord], b: &[StepRecord]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.n - y.n).abs().max((x.on_direct - y.on_direct).abs())).fold(0.0, f64::max)
}

/// Integrates `dρ/dt = ℒρ` on `[0, T]` with output step `dt` using the
/// default [`EvolveOptions`].
pub fn evolve(l: &Liouvillian, rho0: &DensityMatrix, t_final: f64, dt: f64) -> Result<Trajectory, LindbladError> {
    evolve_with(l, rho0, t_final, dt, &EvolveOptions::default())
}

/// Classical RK4 with `substeps` internal steps per output step; `substeps`
/// doubles until two successive runs agree to `opts.tol`.
pub fn evolve_with(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<Trajectory, LindbladError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(LindbladError::InvalidTimes(format!("dt = {dt} must be positive")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(LindbladError::InvalidTimes(format!("T = {t_final} must be non-negative")));
    }
    if rho0.dim() != l.dim() {
        return Err(FockError::DimensionMismatch { expected: l.dim(), got: rho0.dim() }.into());
    }
    let steps = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps == 0 { dt } else { t_final / steps as f64 };
    let stride = match opts.snapshot_stride {
        0 => (steps / 100).max(1),
        s => s,
    };
    let rec = Recorder { on: OnEvaluator::new(l.dim()), sites: SiteObservables::new(l), hamiltonian: l.hamiltonian() };
    let rho0m = rho0.matrix();

    if steps == 0 {
        return Ok(Trajectory {
            dt,
            substeps: 1,
            records: vec![rec.record(0.0, rho0m)],
            snapshots: vec![(0, rho0.clone())],
        });
    }

    let mut substeps = 1usize;
    let (mut records, _) = run_fixed(l, &rec, rho0m, steps, dt, substeps, stride);
    let mut snaps;
    let mut halvings = 0u32;
    loop {
        let (r2, s2) = run_fixed(l, &rec, rho0m, steps, dt, 2 * substeps, stride);
        let change = max_change(&records, &r2);
        substeps *= 2;
        records = r2;
        snaps = s2;
        halvings += 1;
        log::debug!("evolve: substeps {substeps}, change {change:e}");
        if change < opts.tol && change.is_finite() {
            break;
        }
        if halvings >= opts.max_halvings {
            return Err(LindbladError::NonConvergence { halvings, change });
        }
    }

    let tr0 = records[0].trace;
    let rate = (records.last().unwrap().trace - tr0).abs() / t_final;
    if rate > opts.trace_drift_limit {
        return Err(LindbladError::TraceDrift { rate, limit: opts.trace_drift_limit });
    }
    for (k, s) in &snaps {
        let e = s.min_eigenvalue();
        if e < -opts.positivity_tol {
            return Err(LindbladError::Positivity { t: records[*k].t, min_eig: e });
        }
    }
    Ok(Trajectory { dt, substeps, records, snapshots: snaps })
}

/// Residual of `d⟨n_r⟩/dt + ⟨div j_c⟩_r + ⟨∇·j_d⟩_r` at interior times.
#[derive(Debug, Clone)]
pub struct ContinuityReport {
    /// Record index of each row of `residuals`.
    pub indices: Vec<usize>,
    /// `residuals[k][r]`.
    pub residuals: Vec<Vec<f64>>,
    pub per_site_max: Vec<f64>,
    pub max: f64,
    /// Estimated centered-difference truncation error.
    pub truncation_estimate: f64,
    pub coarse: bool,
}

impl ContinuityReport {
    pub fn row_max(&self, record: usize) -> Option<f64> {
        let k = self.indices.binary_search(&record).ok()?;
        Some(self.residuals[k].iter().fold(0.0, |a, b| a.max(b.abs())))
    }
}

/// Threshold above which [`continuity_residual`] flags a trajectory as coarse.
pub const COARSE_WARNING: f64 = 1e-6;

/// Lattice continuity check on a recorded trajectory, with the time
/// derivative taken by centered differences.
pub fn continuity_residual(traj: &Trajectory, spec: &ModelSpec) -> Result<ContinuityReport, LindbladError> {
    if let Some(d) = spec.dissipators.iter().find(|d| d.expr.sites().len() > 1) {
        return Err(LindbladError::UnsupportedDissipator(d.label.clone()));
    }
    let recs = &traj.records;
    if recs.len() < 3 {
        return Err(LindbladError::TooCoarse(format!("{} record(s); need at least 3", recs.len())));
    }
    let nsites = recs[0].density.len();
    let dt = traj.dt;
    let mut indices = Vec::new();
    let mut residuals = Vec::new();
    let mut per_site_max = vec![0.0f64; nsites];
    let mut third = 0.0f64;
    for k in 1..recs.len() - 1 {
        let divd = recs[k]
            .div_dissipative
            .as_ref()
            .ok_or_else(|| LindbladError::UnsupportedDissipator("<trajectory>".into()))?;
        let row: Vec<f64> = (0..nsites)
            .map(|r| {
                let dn = (recs[k + 1].density[r] - recs[k - 1].density[r]) / (2.0 * dt);
                dn + recs[k].div_kinetic[r] + divd[r]
            })
            .collect();
        for r in 0..nsites {
            per_site_max[r] = per_site_max[r].max(row[r].abs());
            if k >= 2 && k + 2 < recs.len() {
                let d3 = (recs[k + 2].density[r] - 2.0 * recs[k + 1].density[r] + 2.0 * recs[k - 1].density[r]
                    - recs[k - 2].density[r])
                    / (2.0 * dt.powi(3));
                third = third.max(d3.abs());
            }
        }
        indices.push(k);
        residuals.push(row);
    }
    let truncation_estimate = dt * dt / 6.0 * third;
    let coarse = truncation_estimate > COARSE_WARNING;
    if coarse {
        log::warn!("continuity: dt = {dt} gives truncation error ~{truncation_estimate:e}");
    }
    let max = per_site_max.iter().cloned().fold(0.0, f64::max);
    Ok(ContinuityReport { indices, residuals, per_site_max, max, truncation_estimate, coarse })
}

/// Halves the output step until the continuity residual falls below `tol`.
pub fn converge_continuity(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    t_final: f64,
    dt0: f64,
    tol: f64,
    max_halvings: u32,
) -> Result<(Trajectory, ContinuityReport), LindbladError> {
    let spec =
        l.spec().ok_or_else(|| LindbladError::InvalidSpec("continuity check needs a model specification".into()))?;
    let mut dt = dt0;
    let mut best = f64::INFINITY;
    for _ in 0..=max_halvings {
        let traj = evolve(l, rho0, t_final, dt)?;
        let report = continuity_residual(&traj, spec)?;
        log::debug!("continuity: dt {dt}, residual {:e}", report.max);
        if report.max < tol {
            return Ok((traj, report));
        }
        best = report.max;
        dt /= 2.0;
    }
    Err(LindbladError::NonConvergence { halvings: max_halvings, change: best })
}

/// Vectorized state as a column, for callers working with superoperators.
pub fn state_vector(rho: &DensityMatrix) -> DVector<C64> {
    fock::vectorize(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::random;
    use crate::opspec::{parse_model, OperatorExpr};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loss(r: usize) -> OperatorExpr {
        OperatorExpr::product(vec![OperatorExpr::c(r, Spin::Dn), OperatorExpr::c(r, Spin::Up)])
    }

    fn hubbard_loss(l: usize, gamma: f64) -> ModelSpec {
        ModelSpec::hubbard(l, 1.0, 4.0, 2.0).with_site_dissipators("loss", gamma, loss)
    }

    #[test]
    fn trace_preserving_and_hermiticity_preserving() {
        let lv = build_liouvillian(&hubbard_loss(2, 0.3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let g = random::ginibre(16, &mut rng);
            let out = lv.apply(&g);
            assert!(out.trace().norm() < 1e-12);
            let lhs = lv.apply(&g.adjoint()).adjoint();
            assert!((lhs - lv.apply(&g)).camax() < 1e-12);
        }
    }

    #[test]
    fn closed_system_is_commutator() {
        let spec = ModelSpec::hubbard(2, 1.0, 4.0, 2.0);
        let lv = build_liouvillian(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random::density(16, &mut rng).into_matrix();
        let h = lv.hamiltonian().to_dense();
        let want = (&h * &rho - &rho * &h) * C64::new(0.0, -1.0);
        assert!((lv.apply(&rho) - want).camax() < 1e-12);
    }

    #[test]
    fn single_site_pair_loss_decay() {
        let gamma = 0.3;
        let spec = ModelSpec::hubbard(1, 0.0, 0.0, 0.0).with_dissipator("loss", gamma, loss(0));
        let lv = build_liouvillian(&spec).unwrap();
        let rho0 = DensityMatrix::basis_state(4, 3);
        let tr = evolve(&lv, &rho0, 5.0, 0.05).unwrap();
        for r in &tr.records {
            assert!((r.n - 2.0 * (-gamma * r.t).exp()).abs() < 1e-9, "t={} n={}", r.t, r.n);
        }
    }

    #[test]
    fn t_zero_returns_initial_state() {
        let lv = build_liouvillian(&hubbard_loss(1, 0.1)).unwrap();
        let rho0 = DensityMatrix::basis_state(4, 3);
        let tr = evolve(&lv, &rho0, 0.0, 0.1).unwrap();
        assert_eq!(tr.records.len(), 1);
        assert_eq!(tr.snapshots.len(), 1);
        assert_eq!(tr.final_state(), &rho0);
    }

    #[test]
    fn unitary_energy_and_purity() {
        let lv = build_liouvillian(&ModelSpec::hubbard(2, 1.0, 4.0, 2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho0 = random::pure(16, &mut rng);
        let tr = evolve(&lv, &rho0, 3.0, 0.02).unwrap();
        let e0 = tr.records[0].energy;
        assert!(tr.records.iter().all(|r| (r.energy - e0).abs() < 1e-9));
        for (_, s) in &tr.snapshots {
            assert!((s.purity() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_matrix_exponential() {
        let lv = build_liouvillian(&hubbard_loss(1, 0.4).with_dissipator("deph", 0.2, OperatorExpr::n(0, Spin::Up)))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho0 = random::density(4, &mut rng);
        let t = 2.0;
        let tr = evolve(&lv, &rho0, t, 0.05).unwrap();
        let gen = lv.matrix().to_dense() * C64::new(t, 0.0);
        let exact = gen.exp() * fock::vectorize(&rho0);
        let got = fock::vectorize(tr.final_state());
        assert!((exact - got).camax() < 1e-8);
    }

    #[test]
    fn on_examples() {
        let mut psi = DVector::zeros(4);
        psi[0] = C64::new(1.0, 0.0);
        psi[3] = C64::new(1.0, 0.0);
        let cat = DensityMatrix::pure(&psi);
        assert!((observable_on_direct(&cat) + 1.0).abs() < 1e-14);
        assert!((observable_on_vectorized(&cat) + 1.0).abs() < 1e-14);
        assert!((observable_on_swap(&cat).unwrap() + 1.0).abs() < 1e-14);

        let vac = DensityMatrix::basis_state(16, 0);
        assert_eq!(observable_n(&vac), 0.0);
        assert_eq!(observable_on_direct(&vac), 0.0);

        let eig = DensityMatrix::basis_state(16, 0b0110);
        assert_eq!(observable_on_direct(&eig), 0.0);
        assert_eq!(observable_on_vectorized(&eig), 0.0);
        assert_eq!(observable_on_swap(&eig).unwrap(), 0.0);
    }

    #[test]
    fn swap_capacity() {
        let big = DensityMatrix::basis_state(256, 0);
        assert!(matches!(observable_on_swap(&big), Err(LindbladError::CapacityExceeded { .. })));
    }

    #[test]
    fn capacity_limits() {
        let spec = ModelSpec::hubbard(4, 1.0, 1.0, 0.0);
        assert!(matches!(build_liouvillian(&spec), Err(LindbladError::CapacityExceeded { sites: 4, .. })));
        let spec = ModelSpec::hubbard(12, 1.0, 1.0, 0.0);
        assert!(matches!(build_liouvillian(&spec), Err(LindbladError::CapacityExceeded { .. })));
        let spec = hubbard_loss(1, -1.0);
        assert!(matches!(build_liouvillian(&spec), Err(LindbladError::InvalidSpec(_))));
    }

    #[test]
    fn dissipative_divergence_of_pair_loss() {
        let ops = build_site_ops(2).unwrap();
        let gamma = 0.7;
        for r in 0..2 {
            let l = compile(&loss(r), &ops).unwrap();
            let dj = dissipative_divergence(&ops, r, gamma, &l);
            let want = (ops.n(r, Spin::Up) * ops.n(r, Spin::Dn)).scale(C64::new(2.0 * gamma, 0.0));
            assert!((&dj - &want).frobenius_norm() < 1e-14);
        }
    }

    #[test]
    fn heisenberg_density_balance() {
        let spec = hubbard_loss(2, 0.3);
        let lv = build_liouvillian(&spec).unwrap();
        let ops = lv.site_ops();
        let so = SiteObservables::new(&lv);
        for r in 0..2 {
            let lhs = lv.adjoint_action(&ops.site_density(r));
            let rhs = &so.div_kinetic[r] + &so.div_dissipative.as_ref().unwrap()[r];
            assert!((&lhs + &rhs).frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn single_site_density_rate() {
        let gamma = 0.25;
        let spec = ModelSpec::hubbard(1, 0.0, 0.0, 0.0).with_dissipator("loss", gamma, loss(0));
        let lv = build_liouvillian(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = random::density(4, &mut rng).into_matrix();
        let ops = lv.site_ops();
        let dn = lv.adjoint_action(&ops.site_density(0)).expectation(&rho).re;
        let d = (ops.n(0, Spin::Up) * ops.n(0, Spin::Dn)).expectation(&rho).re;
        assert!((dn + 2.0 * gamma * d).abs() < 1e-14);
    }

    #[test]
    fn closed_chain_continuity() {
        let spec = ModelSpec::hubbard(2, 1.0, 4.0, 2.0);
        let lv = build_liouvillian(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rho0 = random::density(16, &mut rng);
        let tr = evolve(&lv, &rho0, 1.0, 1e-4).unwrap();
        let rep = continuity_residual(&tr, &spec).unwrap();
        assert!(rep.max < 1e-8, "{}", rep.max);
    }

    #[test]
    fn multi_site_dissipator_rejected() {
        let spec = ModelSpec::hubbard(2, 1.0, 0.0, 0.0).with_dissipator(
            "hop",
            0.1,
            OperatorExpr::product(vec![OperatorExpr::cdag(0, Spin::Up), OperatorExpr::c(1, Spin::Up)]),
        );
        let lv = build_liouvillian(&spec).unwrap();
        let tr = evolve(&lv, &DensityMatrix::basis_state(16, 0b0100), 0.2, 0.05).unwrap();
        assert!(tr.records[0].div_dissipative.is_none());
        assert!(matches!(continuity_residual(&tr, &spec), Err(LindbladError::UnsupportedDissipator(_))));
    }

    #[test]
    fn csv_header() {
        let spec = parse_model("[lattice]\nsites = 1\n[dissipators]\nloss: 0.1 * c(0,dn)*c(0,up)\n").unwrap();
        let lv = build_liouvillian(&spec).unwrap();
        let tr = evolve(&lv, &DensityMatrix::basis_state(4, 3), 0.3, 0.1).unwrap();
        let rep = continuity_residual(&tr, &spec).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, Some(&rep)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,N,ON_direct,ON_vec,ON_swap,trace,residual_max");
        assert_eq!(text.lines().count(), tr.records.len() + 1);
        assert!(lines.next().unwrap().ends_with(','));
    }
}
