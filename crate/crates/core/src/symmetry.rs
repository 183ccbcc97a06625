// SPDX-License-Identifier: Apache-2.0

//! U(1) symmetry classification of a Lindbladian.
//!
//! * **Strong**: `[H, N] = 0` and `[L_k, N] = 0` for every jump, so `N` itself
//!   is conserved.
//! * **Weak**: the generator commutes with the phase rotation
//!   `𝒩 = N⊗I − I⊗Nᵀ`; populations may leak but coherences between particle
//!   number sectors evolve independently of the diagonal blocks.
//! * **None**: neither.
//!
//! Each class comes with a prediction for `N`, `O_N` and gauge invariance,
//! which [`verify_by_simulation`] checks against an exact trajectory.

use serde::Serialize;

use crate::fock::{commutator, DensityMatrix, FockOp};
use crate::lindblad::{self, build_liouvillian, number_operator, phase_generator, LindbladError, Liouvillian};
use crate::opspec::ModelSpec;

/// Commutator norm below which a symmetry counts as exact.
pub const SYMMETRIC_TOL: f64 = 1e-10;
/// Drift below which a quantity counts as conserved in simulation.
pub const CONSERVED_DRIFT: f64 = 1e-7;
/// Drift above which a quantity counts as not conserved in simulation.
pub const BROKEN_DRIFT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SymmetryClass {
    Strong,
    Weak,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpNorm {
    pub label: String,
    pub norm: f64,
}

/// Frobenius norms of the commutators behind the classification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutatorNorms {
    /// `‖[H, N]‖`
    pub hamiltonian: f64,
    /// `‖[L_k, N]‖`
    pub jumps: Vec<JumpNorm>,
    /// `‖[𝒩, ℒ]‖`
    pub superoperator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub class: SymmetryClass,
    pub commutator_norms: CommutatorNorms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Prediction {
    #[serde(rename = "N_conserved")]
    pub n_conserved: bool,
    #[serde(rename = "ON_conserved")]
    pub on_conserved: bool,
    pub gauge_invariant: bool,
}

pub fn predict(class: SymmetryClass) -> Prediction {
    match class {
        SymmetryClass::Strong => Prediction { n_conserved: true, on_conserved: true, gauge_invariant: true },
        SymmetryClass::Weak => Prediction { n_conserved: false, on_conserved: true, gauge_invariant: true },
        SymmetryClass::None => Prediction { n_conserved: false, on_conserved: false, gauge_invariant: false },
    }
}

/// Classifies a model; fails above the Liouvillian capacity.
pub fn classify(spec: &ModelSpec) -> Result<SymmetryReport, LindbladError> {
    Ok(classify_liouvillian(&build_liouvillian(spec)?))
}

/// Classifies explicit Hamiltonian and jump operators on `num_sites` sites.
pub fn classify_operators(
    num_sites: usize,
    hamiltonian: FockOp,
    jumps: Vec<(String, f64, FockOp)>,
) -> Result<SymmetryReport, LindbladError> {
    Ok(classify_liouvillian(&Liouvillian::from_operators(num_sites, hamiltonian, jumps)?))
}

pub fn classify_liouvillian(l: &Liouvillian) -> SymmetryReport {
    let n = number_operator(l.dim());
    let hamiltonian = commutator(l.hamiltonian(), &n).frobenius_norm();
    let jumps: Vec<JumpNorm> = l
        .jumps()
        .iter()
        .map(|j| JumpNorm { label: j.label.clone(), norm: commutator(&j.op, &n).frobenius_norm() })
        .collect();
    let superoperator = commutator(&phase_generator(&n), l.matrix()).frobenius_norm();
    // Jumps with zero rate drop out of the generator and do not break anything.
    let strong_ops = hamiltonian < SYMMETRIC_TOL
        && l.jumps().iter().zip(&jumps).all(|(j, c)| j.rate == 0.0 || c.norm < SYMMETRIC_TOL);
    let weak = superoperator < SYMMETRIC_TOL;
    let class = match (strong_ops, weak) {
        (true, true) => SymmetryClass::Strong,
        (_, true) => SymmetryClass::Weak,
        _ => SymmetryClass::None,
    };
    SymmetryReport { class, commutator_norms: CommutatorNorms { hamiltonian, jumps, superoperator } }
}

/// Norm of the superoperator entries coupling different eigenspaces of `𝒩`,
/// i.e. between vectorized indices `(i,j)`, `(k,l)` with
/// `N_i − N_j ≠ N_k − N_l`.
pub fn off_block_norm(l: &Liouvillian) -> f64 {
    let d = l.dim();
    let charge = |a: usize| {
        let (i, j) = (a / d, a % d);
        i.count_ones() as i64 - j.count_ones() as i64
    };
    l.matrix()
        .triplets()
        .filter(|(a, b, _)| charge(*a) != charge(*b))
        .fold(0.0, |acc, (_, _, v)| acc + v.norm_sqr())
        .sqrt()
}

/// `‖ℒ†(N)‖`; zero for strongly symmetric generators.
pub fn adjoint_number_norm(l: &Liouvillian) -> f64 {
    l.adjoint_action(&number_operator(l.dim())).frobenius_norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Observation {
    Conserved,
    NotConserved,
    Inconclusive,
}

pub fn observe(drift: f64) -> Observation {
    if drift < CONSERVED_DRIFT {
        Observation::Conserved
    } else if drift > BROKEN_DRIFT {
        Observation::NotConserved
    } else {
        Observation::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Consistent,
    Mismatch,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    #[serde(rename = "N_drift")]
    pub n_drift: f64,
    #[serde(rename = "ON_drift")]
    pub on_drift: f64,
    #[serde(rename = "N_observed")]
    pub n_observed: Observation,
    #[serde(rename = "ON_observed")]
    pub on_observed: Observation,
    pub verdict: Verdict,
    pub mismatches: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    #[serde(flatten)]
    pub symmetry: SymmetryReport,
    pub prediction: Prediction,
    pub simulation: SimulationSummary,
}

fn compare(name: &str, predicted: bool, seen: Observation, mismatches: &mut Vec<String>) -> bool {
    match (predicted, seen) {
        (_, Observation::Inconclusive) => false,
        (true, Observation::Conserved) | (false, Observation::NotConserved) => true,
        (true, _) => {
            mismatches.push(format!("{name} predicted conserved but drifted"));
            true
        }
        (false, _) => {
            mismatches.push(format!("{name} predicted not conserved but stayed constant"));
            true
        }
    }
}

/// Evolves `rho0` for time `t_final` and compares the drifts of `N` and
/// `O_N` with [`predict`].
pub fn verify_by_simulation(
    spec: &ModelSpec,
    rho0: &DensityMatrix,
    t_final: f64,
    dt: f64,
) -> Result<VerificationReport, LindbladError> {
    let l = build_liouvillian(spec)?;
    let symmetry = classify_liouvillian(&l);
    let prediction = predict(symmetry.class);
    let traj = lindblad::evolve(&l, rho0, t_final, dt)?;
    let n_drift = traj.n_drift();
    let on_drift = traj.on_drift();
    let n_observed = observe(n_drift);
    let on_observed = observe(on_drift);
    let mut mismatches = Vec::new();
    let n_decided = compare("N", prediction.n_conserved, n_observed, &mut mismatches);
    let on_decided = compare("O_N", prediction.on_conserved, on_observed, &mut mismatches);
    let verdict = if !mismatches.is_empty() {
        Verdict::Mismatch
    } else if n_decided && on_decided {
        Verdict::Consistent
    } else {
        Verdict::Inconclusive
    };
    Ok(VerificationReport {
        symmetry,
        prediction,
        simulation: SimulationSummary { n_drift, on_drift, n_observed, on_observed, verdict, mismatches },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opspec::{OperatorExpr, Spin};

    fn loss(r: usize) -> OperatorExpr {
        OperatorExpr::product(vec![OperatorExpr::c(r, Spin::Dn), OperatorExpr::c(r, Spin::Up)])
    }

    fn dephasing(r: usize) -> OperatorExpr {
        OperatorExpr::sum(vec![OperatorExpr::n(r, Spin::Up), OperatorExpr::n(r, Spin::Dn)])
    }

    fn pairing(r: usize) -> OperatorExpr {
        OperatorExpr::sum(vec![
            OperatorExpr::product(vec![OperatorExpr::c(r, Spin::Up), OperatorExpr::c(r, Spin::Dn)]),
            OperatorExpr::product(vec![OperatorExpr::cdag(r, Spin::Up), OperatorExpr::cdag(r, Spin::Dn)]),
        ])
    }

    fn hubbard() -> ModelSpec {
        ModelSpec::hubbard(2, 1.0, 4.0, 2.0)
    }

    #[test]
    fn table_of_classes() {
        let s = classify(&hubbard().with_site_dissipators("deph", 0.2, dephasing)).unwrap();
        assert_eq!(s.class, SymmetryClass::Strong);
        let w = classify(&hubbard().with_site_dissipators("loss", 0.2, loss)).unwrap();
        assert_eq!(w.class, SymmetryClass::Weak);
        assert!(w.commutator_norms.jumps.iter().all(|j| j.norm > 1.0));
        let n = classify(&hubbard().with_site_dissipators("pair", 0.2, pairing)).unwrap();
        assert_eq!(n.class, SymmetryClass::None);
        assert!(n.commutator_norms.superoperator > 1e-3);
    }

    #[test]
    fn predictions() {
        assert_eq!(
            predict(SymmetryClass::Strong),
            Prediction { n_conserved: true, on_conserved: true, gauge_invariant: true }
        );
        assert_eq!(
            predict(SymmetryClass::Weak),
            Prediction { n_conserved: false, on_conserved: true, gauge_invariant: true }
        );
        assert_eq!(
            predict(SymmetryClass::None),
            Prediction { n_conserved: false, on_conserved: false, gauge_invariant: false }
        );
    }

    #[test]
    fn weak_iff_block_diagonal() {
        for (spec, weak) in [
            (hubbard().with_site_dissipators("loss", 0.2, loss), true),
            (hubbard().with_site_dissipators("deph", 0.2, dephasing), true),
            (hubbard().with_site_dissipators("pair", 0.2, pairing), false),
        ] {
            let l = build_liouvillian(&spec).unwrap();
            let off = off_block_norm(&l);
            assert_eq!(off < SYMMETRIC_TOL, weak, "off-block norm {off}");
        }
    }

    #[test]
    fn strong_kills_adjoint_number() {
        let l = build_liouvillian(&hubbard().with_site_dissipators("deph", 0.2, dephasing)).unwrap();
        assert!(adjoint_number_norm(&l) < 1e-10);
        let l = build_liouvillian(&hubbard().with_site_dissipators("loss", 0.2, loss)).unwrap();
        assert!(adjoint_number_norm(&l) > 0.1);
    }

    #[test]
    fn observation_bands() {
        assert_eq!(observe(1e-9), Observation::Conserved);
        assert_eq!(observe(1e-2), Observation::NotConserved);
        assert_eq!(observe(1e-5), Observation::Inconclusive);
    }

    #[test]
    fn report_serializes() {
        let r = classify(&hubbard().with_site_dissipators("loss", 0.2, loss)).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["class"], "Weak");
        assert!(v["commutator_norms"]["superoperator"].as_f64().unwrap() < 1e-10);
    }
}
