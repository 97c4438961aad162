//! Continuous-time evolution under a Hamiltonian and comparison with the emulator.

use crate::device::{iteration_matrix, EmulationMode, StateVector};
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::lattice::LatticeGraph;
use crate::linalg::{expm_hermitian, hermitian_eigen, inner, vec_norm, CMatrix, CVector, C64, I};
use crate::ops::{build_hamiltonian, power_norm, SparseOperator};
use crate::schedule::compile_schedule;
use crate::trajectory::{Provenance, Snapshot, TimeTag, Trajectory};

pub const HERMITIAN_CHECK_TOL: f64 = 1e-10;
/// Largest dimension handled by full diagonalization in `Auto` mode.
pub const DENSE_LIMIT: usize = 2048;
pub const KRYLOV_DIM: usize = 30;
/// Local error allowed per Krylov step.
pub const KRYLOV_TOL: f64 = 1e-10;
/// Largest dimension for dense one-iteration comparisons.
pub const TROTTER_DENSE_LIMIT: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Auto,
    Dense,
    Krylov,
}

fn check_inputs(h: &SparseOperator, state: &StateVector) -> Result<()> {
    if h.dim() != state.amplitudes().len() {
        return Err(Error::DimensionMismatch(format!(
            "operator of dimension {} on a state of dimension {}",
            h.dim(),
            state.amplitudes().len()
        )));
    }
    let deviation = h.hermitian_deviation();
    if deviation > HERMITIAN_CHECK_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// `exp(-i H t) |state>`.
pub fn exact_propagate(h: &SparseOperator, state: &StateVector, t: f64, method: Method) -> Result<StateVector> {
    check_inputs(h, state)?;
    let dense = match method {
        Method::Auto => h.dim() <= DENSE_LIMIT,
        Method::Dense => true,
        Method::Krylov => false,
    };
    let amps = if t == 0.0 {
        state.amplitudes().to_vec()
    } else if dense {
        DensePropagator::new(h)?.apply(state.amplitudes(), t)
    } else {
        krylov_propagate(h, state.amplitudes(), t)?
    };
    StateVector::new(state.basis().clone(), amps)
}

/// Eigen-decomposition of `H`, reusable for many times.
pub struct DensePropagator {
    values: Vec<f64>,
    vectors: CMatrix,
}

impl DensePropagator {
    pub fn new(h: &SparseOperator) -> Result<Self> {
        let deviation = h.hermitian_deviation();
        if deviation > HERMITIAN_CHECK_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let (values, vectors) = hermitian_eigen(&h.to_dense());
        Ok(DensePropagator { values, vectors })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn apply(&self, psi: &[C64], t: f64) -> Vec<C64> {
        let v = CVector::from_column_slice(psi);
        let mut coeffs = self.vectors.adjoint() * v;
        for (c, &lam) in coeffs.iter_mut().zip(&self.values) {
            *c *= (-I * lam * t).exp();
        }
        (&self.vectors * coeffs).iter().copied().collect()
    }
}

/// Lanczos basis of the Krylov space of `h` started from `v0`.
struct Lanczos {
    basis: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Norm of the residual after the last vector, 0 on an invariant subspace.
    residual: f64,
}

fn lanczos(h: &SparseOperator, v0: &[C64], m: usize) -> Lanczos {
    let beta0 = vec_norm(v0);
    let mut basis: Vec<Vec<C64>> = vec![v0.iter().map(|z| z / beta0).collect()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut residual = 0.0;
    for j in 0..m {
        let mut w = h.matvec(&basis[j]);
        let a = inner(&basis[j], &w).re;
        alpha.push(a);
        // full reorthogonalization, applied twice for stability
        for _ in 0..2 {
            for q in &basis {
                let c = inner(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = vec_norm(&w);
        residual = b;
        if b <= 1e-13 * (1.0 + a.abs()) || j + 1 == m {
            break;
        }
        beta.push(b);
        basis.push(w.into_iter().map(|z| z / b).collect());
    }
    Lanczos {
        basis,
        alpha,
        beta,
        residual,
    }
}

fn krylov_propagate(h: &SparseOperator, psi: &[C64], t: f64) -> Result<Vec<C64>> {
    let mut state = psi.to_vec();
    let mut done = 0.0;
    let mut tau = t;
    let min_step = t.abs() * 1e-12;
    while (t - done).abs() > 0.0 {
        let remaining = t - done;
        if tau.abs() > remaining.abs() {
            tau = remaining;
        }
        let norm = vec_norm(&state);
        if norm == 0.0 {
            return Ok(state);
        }
        let lz = lanczos(h, &state, KRYLOV_DIM);
        let k = lz.alpha.len();
        let mut tri = CMatrix::zeros(k, k);
        for i in 0..k {
            tri[(i, i)] = C64::new(lz.alpha[i], 0.0);
            if i + 1 < k {
                tri[(i, i + 1)] = C64::new(lz.beta[i], 0.0);
                tri[(i + 1, i)] = C64::new(lz.beta[i], 0.0);
            }
        }
        let (vals, vecs) = hermitian_eigen(&tri);
        loop {
            // y = exp(-i tau T) e1
            let y: Vec<C64> = (0..k)
                .map(|r| {
                    (0..k)
                        .map(|j| vecs[(r, j)] * (-I * vals[j] * tau).exp() * vecs[(0, j)].conj())
                        .sum()
                })
                .collect();
            let err = norm * lz.residual * y[k - 1].norm();
            if err <= KRYLOV_TOL {
                let mut next = vec![C64::default(); state.len()];
                for (q, c) in lz.basis.iter().zip(&y) {
                    let c = c * norm;
                    for (ni, qi) in next.iter_mut().zip(q) {
                        *ni += c * qi;
                    }
                }
                state = next;
                done += tau;
                // the residual test passed; try a longer step next time
                tau *= 2.0;
                break;
            }
            tau /= 2.0;
            if tau.abs() < min_step {
                return Err(Error::KrylovBreakdown {
                    residual: err,
                    step: tau,
                });
            }
        }
    }
    Ok(state)
}

pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    if a.amplitudes().len() != b.amplitudes().len() {
        return Err(Error::DimensionMismatch(format!(
            "states of dimension {} and {}",
            a.amplitudes().len(),
            b.amplitudes().len()
        )));
    }
    Ok(inner(a.amplitudes(), b.amplitudes()).norm_sqr().min(1.0))
}

/// Exact snapshots at `times`, tagged by position in the list (1-based after the start).
pub fn exact_trajectory(
    h: &SparseOperator,
    initial: &StateVector,
    times: &[f64],
    method: Method,
    record_states: bool,
) -> Result<Trajectory> {
    check_inputs(h, initial)?;
    let mut traj = Trajectory::new(Provenance::Exact);
    let dense = match method {
        Method::Auto => h.dim() <= DENSE_LIMIT,
        Method::Dense => true,
        Method::Krylov => false,
    };
    let snap = |amps: Vec<C64>, k: u64, t: f64| -> Result<Snapshot> {
        let sv = StateVector::new(initial.basis().clone(), amps)?;
        Ok(Snapshot {
            tag: TimeTag::iteration(k),
            time: t,
            occupations: sv.occupations(),
            state: record_states.then(|| sv.into_amplitudes()),
        })
    };
    traj.push(snap(initial.amplitudes().to_vec(), 0, 0.0)?);
    if dense {
        let prop = DensePropagator::new(h)?;
        for (k, &t) in times.iter().enumerate() {
            traj.push(snap(prop.apply(initial.amplitudes(), t), k as u64 + 1, t)?);
        }
    } else {
        let mut psi = initial.amplitudes().to_vec();
        let mut now = 0.0;
        for (k, &t) in times.iter().enumerate() {
            psi = krylov_propagate(h, &psi, t - now)?;
            now = t;
            traj.push(snap(psi.clone(), k as u64 + 1, t)?);
        }
    }
    Ok(traj)
}

/// `<psi|H|psi>`.
pub fn expectation(h: &SparseOperator, psi: &[C64]) -> f64 {
    inner(psi, &h.matvec(psi)).re
}

/// Spectral norm of the difference between one emulator iteration and `exp(-i H)`.
pub fn trotter_error_norm(graph: &LatticeGraph, mu: f64, u: f64, basis: &FockBasis) -> Result<f64> {
    if basis.dim() > TROTTER_DENSE_LIMIT {
        return Err(Error::TooLarge {
            what: "dense iteration comparison",
            dim: basis.dim(),
            limit: TROTTER_DENSE_LIMIT,
        });
    }
    let schedule = compile_schedule(graph, None)?;
    let g_emu = iteration_matrix(basis, &schedule, EmulationMode::Fast, mu, u)?;
    let h = build_hamiltonian(basis, graph, mu, u)?;
    let g_exact = expm_hermitian(&h.to_dense(), 1.0);
    let diff = g_emu - g_exact;
    let adj = diff.adjoint();
    let apply = |m: &CMatrix, x: &[C64]| -> Vec<C64> {
        (m * CVector::from_column_slice(x)).iter().copied().collect()
    };
    Ok(power_norm(basis.dim(), |x| apply(&diff, x), |x| apply(&adj, x)))
}
