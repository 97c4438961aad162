//! Discrete-time simulation of the emulator: MZI two-mode unitaries applied pass by
//! pass (tick mode) or edge by edge (fast mode), interleaved with the diagonal
//! chemical-potential and interaction phases.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockOccupancy};
use crate::lattice::LatticeGraph;
use crate::linalg::{hermitian_eigen, hermitian_function, vec_norm, CMatrix, C64, I};
use crate::ops::{hop_target, onsite_energies, SparseOperator};
use crate::schedule::{active_override, compile_schedule, AlphaSchedule, PassSchedule, Role};
use crate::trajectory::{Provenance, Snapshot, TimeTag, Trajectory};

/// Tolerance on the norm of an initial state.
pub const NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct StateVector {
    basis: Arc<FockBasis>,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(basis: Arc<FockBasis>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for a basis of dimension {}",
                amps.len(),
                basis.dim()
            )));
        }
        Ok(StateVector { basis, amps })
    }

    pub fn fock(basis: Arc<FockBasis>, occ: &FockOccupancy) -> Result<Self> {
        let g = basis.index_of(occ)?.global;
        let mut amps = vec![C64::default(); basis.dim()];
        amps[g] = C64::new(1.0, 0.0);
        Ok(StateVector { basis, amps })
    }

    /// Fock state with the listed `(site, count)` pairs.
    pub fn from_pairs(basis: Arc<FockBasis>, pairs: &[(usize, u32)]) -> Result<Self> {
        let occ = FockOccupancy::from_pairs(basis.num_sites(), pairs)?;
        Self::fock(basis, &occ)
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.amps)
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::NotNormalized { norm: 0.0 });
        }
        self.amps.iter_mut().for_each(|z| *z /= n);
        Ok(())
    }

    /// `<n_i>` for every site.
    pub fn occupations(&self) -> Vec<f64> {
        let mut occ = vec![0.0; self.basis.num_sites()];
        for (g, z) in self.amps.iter().enumerate() {
            let p = z.norm_sqr();
            if p == 0.0 {
                continue;
            }
            for &s in self.basis.sites_of(g) {
                occ[s as usize] += p;
            }
        }
        occ
    }

    /// Same amplitudes on a basis with extra (empty) trailing sites.
    pub fn embed(&self, target: Arc<FockBasis>) -> Result<Self> {
        if target.num_sites() < self.basis.num_sites() || target.max_bosons() < self.basis.max_bosons() {
            return Err(Error::DimensionMismatch("target basis is smaller".into()));
        }
        let mut amps = vec![C64::default(); target.dim()];
        for (g, z) in self.amps.iter().enumerate() {
            amps[target.rank_sites(self.basis.sites_of(g))] = *z;
        }
        Ok(StateVector { basis: target, amps })
    }

    /// Projects onto states with the trailing sites empty. Returns the state and the
    /// probability that was discarded.
    pub fn restrict(&self, target: Arc<FockBasis>) -> Result<(Self, f64)> {
        let keep = target.num_sites();
        let mut amps = vec![C64::default(); target.dim()];
        let mut lost = 0.0;
        for (g, z) in self.amps.iter().enumerate() {
            let sites = self.basis.sites_of(g);
            if sites.iter().all(|&s| (s as usize) < keep) && sites.len() <= target.max_bosons() {
                amps[target.rank_sites(sites)] = *z;
            } else {
                lost += z.norm_sqr();
            }
        }
        Ok((StateVector { basis: target, amps }, lost))
    }
}

/// Basis-state groups coupled by a two-mode gate on modes `(a, b)`. Each group fixes
/// every other occupation and the pair total `s`; members are ordered by `k_a = 0..=s`.
#[derive(Debug)]
struct PairGroups {
    members: Vec<usize>,
    /// `(start, s)` for every group with `s >= 1`.
    spans: Vec<(usize, usize)>,
    max_pair: usize,
}

impl PairGroups {
    fn new(basis: &FockBasis, a: usize, b: usize) -> Self {
        let mut members = Vec::new();
        let mut spans = Vec::new();
        let mut max_pair = 0;
        for g in 0..basis.dim() {
            let sites = basis.sites_of(g);
            if sites.iter().any(|&x| x as usize == a) {
                continue;
            }
            let s = sites.iter().filter(|&&x| x as usize == b).count();
            if s == 0 {
                continue;
            }
            max_pair = max_pair.max(s);
            spans.push((members.len(), s));
            members.push(g);
            let mut cur = g;
            for _ in 0..s {
                cur = hop_target(basis, cur, b, a).expect("boson on b").0;
                members.push(cur);
            }
        }
        PairGroups {
            members,
            spans,
            max_pair,
        }
    }
}

/// `exp[i (theta/2)(e^{i phi} a_a^dagger a_b + h.c.)]` restricted to each pair-total block.
#[derive(Clone, Debug)]
pub struct TwoModeGate {
    pub a: usize,
    pub b: usize,
    pub theta: f64,
    pub phi: f64,
    groups: Arc<PairGroups>,
    /// Block unitary for each pair total `s` (index 0 unused).
    blocks: Vec<CMatrix>,
}

fn pair_block(s: usize, theta: f64, phi: f64) -> CMatrix {
    let mut k = CMatrix::zeros(s + 1, s + 1);
    for j in 0..s {
        let amp = (((j + 1) * (s - j)) as f64).sqrt();
        k[(j + 1, j)] = C64::from_polar(amp, phi);
        k[(j, j + 1)] = C64::from_polar(amp, -phi);
    }
    let (vals, vecs) = hermitian_eigen(&k);
    hermitian_function(&vals, &vecs, |lam| (I * (theta / 2.0) * lam).exp())
}

impl TwoModeGate {
    fn with_groups(groups: Arc<PairGroups>, a: usize, b: usize, theta: f64, phi: f64) -> Self {
        let blocks = (0..=groups.max_pair)
            .map(|s| {
                if s == 0 {
                    CMatrix::identity(1, 1)
                } else {
                    pair_block(s, theta, phi)
                }
            })
            .collect();
        TwoModeGate {
            a,
            b,
            theta,
            phi,
            groups,
            blocks,
        }
    }

    pub fn new(basis: &FockBasis, a: usize, b: usize, theta: f64, phi: f64) -> Result<Self> {
        let l = basis.num_sites();
        for x in [a, b] {
            if x >= l {
                return Err(Error::IndexOutOfRange {
                    what: "bin",
                    index: x,
                    limit: l,
                });
            }
        }
        if a == b {
            return Err(Error::InvalidParameter(format!("gate bins must differ, both are {a}")));
        }
        Ok(Self::with_groups(Arc::new(PairGroups::new(basis, a, b)), a, b, theta, phi))
    }

    pub fn apply(&self, amps: &mut [C64]) {
        let mut buf = [C64::default(); 16];
        let mut heap = Vec::new();
        for &(start, s) in &self.groups.spans {
            let idx = &self.groups.members[start..start + s + 1];
            let u = &self.blocks[s];
            if s == 1 {
                let (x0, x1) = (amps[idx[0]], amps[idx[1]]);
                amps[idx[0]] = u[(0, 0)] * x0 + u[(0, 1)] * x1;
                amps[idx[1]] = u[(1, 0)] * x0 + u[(1, 1)] * x1;
                continue;
            }
            let x: &mut [C64] = if s < 16 {
                &mut buf[..=s]
            } else {
                heap.resize(s + 1, C64::default());
                &mut heap[..]
            };
            for (j, &g) in idx.iter().enumerate() {
                x[j] = amps[g];
            }
            for (r, &g) in idx.iter().enumerate() {
                let mut acc = C64::default();
                for (c, xc) in x.iter().enumerate() {
                    acc += u[(r, c)] * xc;
                }
                amps[g] = acc;
            }
        }
    }

    pub fn to_sparse(&self, dim: usize) -> Result<SparseOperator> {
        let mut touched = vec![false; dim];
        let mut t = Vec::new();
        for &(start, s) in &self.groups.spans {
            let idx = &self.groups.members[start..start + s + 1];
            for (r, &gr) in idx.iter().enumerate() {
                touched[gr] = true;
                for (c, &gc) in idx.iter().enumerate() {
                    t.push((gr, gc, self.blocks[s][(r, c)]));
                }
            }
        }
        for (g, seen) in touched.iter().enumerate() {
            if !seen {
                t.push((g, g, C64::new(1.0, 0.0)));
            }
        }
        SparseOperator::from_triplets(dim, t)
    }
}

/// MZI unitary `M(theta, phi)` between bins `a` and `b`.
pub fn mzi_pass_unitary(basis: &FockBasis, a: usize, b: usize, theta: f64, phi: f64) -> Result<SparseOperator> {
    TwoModeGate::new(basis, a, b, theta, phi)?.to_sparse(basis.dim())
}

/// Target two-site propagator `T_mn(kappa, alpha)`.
pub fn hopping_unitary(basis: &FockBasis, m: usize, n: usize, kappa: f64, alpha: f64) -> Result<SparseOperator> {
    mzi_pass_unitary(basis, m, n, 2.0 * kappa, alpha)
}

fn apply_diagonal(amps: &mut [C64], energies: &[f64], dt: f64) {
    for (z, &e) in amps.iter_mut().zip(energies) {
        if e != 0.0 {
            *z *= (-I * (e * dt)).exp();
        }
    }
}

/// Multiplies every Fock component by `exp[-i dt sum_m (mu k_m + U k_m (k_m - 1))]`.
pub fn diagonal_phase_step(state: &StateVector, mu: f64, u: f64, dt: f64) -> StateVector {
    let mut out = state.clone();
    let e = onsite_energies(&state.basis, mu, u);
    apply_diagonal(&mut out.amps, &e, dt);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmulationMode {
    /// Every MZI pass, register included.
    Tick,
    /// One two-site unitary per edge on the storage bins only.
    Fast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotPolicy {
    PerPass,
    PerCycle,
    PerIteration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagonalPlacement {
    PerIteration,
    PerCycle,
}

#[derive(Clone, Debug)]
pub struct EmulationConfig {
    pub mu: f64,
    pub u: f64,
    pub iterations: u64,
    pub mode: EmulationMode,
    pub snapshots: SnapshotPolicy,
    pub diagonal: DiagonalPlacement,
    pub record_states: bool,
    /// Keep every `stride`-th iteration snapshot (the last one is always kept).
    pub stride: u64,
}

impl Default for EmulationConfig {
    fn default() -> Self {
        EmulationConfig {
            mu: 0.0,
            u: 0.0,
            iterations: 0,
            mode: EmulationMode::Fast,
            snapshots: SnapshotPolicy::PerIteration,
            diagonal: DiagonalPlacement::PerIteration,
            record_states: false,
            stride: 1,
        }
    }
}

struct Pass {
    gate: Option<TwoModeGate>,
}

/// Gates for one iteration, grouped by clock cycle.
struct Program {
    cycles: Vec<Vec<Pass>>,
}

struct GateCache<'a> {
    basis: &'a FockBasis,
    groups: HashMap<(usize, usize), Arc<PairGroups>>,
}

impl<'a> GateCache<'a> {
    fn gate(&mut self, a: usize, b: usize, theta: f64, phi: f64) -> TwoModeGate {
        let basis = self.basis;
        let groups = self
            .groups
            .entry((a, b))
            .or_insert_with(|| Arc::new(PairGroups::new(basis, a, b)))
            .clone();
        TwoModeGate::with_groups(groups, a, b, theta, phi)
    }

    fn program(&mut self, schedule: &PassSchedule, mode: EmulationMode) -> Program {
        let mut cycles: Vec<Vec<Pass>> = (0..schedule.cycles_per_iteration).map(|_| Vec::new()).collect();
        match mode {
            EmulationMode::Tick => {
                let reg = schedule.register();
                for s in &schedule.settings {
                    let gate = (s.role != Role::Idle).then(|| self.gate(reg, s.bin, s.theta, s.phi));
                    cycles[s.cycle as usize].push(Pass { gate });
                }
            }
            EmulationMode::Fast => {
                for (c, e) in schedule.edges.iter().enumerate() {
                    cycles[c].push(Pass {
                        gate: Some(self.gate(e.m, e.n, 2.0 * e.kappa, e.alpha)),
                    });
                }
            }
        }
        Program { cycles }
    }
}

fn check_initial(initial: &StateVector, num_bins: usize, mode: EmulationMode) -> Result<()> {
    let expected = match mode {
        EmulationMode::Tick => num_bins + 1,
        EmulationMode::Fast => num_bins,
    };
    if initial.basis.num_sites() != expected {
        return Err(Error::DimensionMismatch(format!(
            "state has {} bins, {:?} mode on {} storage bins needs {}",
            initial.basis.num_sites(),
            mode,
            num_bins,
            expected
        )));
    }
    let norm = initial.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm });
    }
    if mode == EmulationMode::Tick {
        let reg = initial.occupations()[num_bins];
        if reg > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "register bin must start empty, holds {reg:.3e}"
            )));
        }
    }
    Ok(())
}

struct Runner<'a> {
    config: &'a EmulationConfig,
    energies: Vec<f64>,
    traj: Trajectory,
}

impl Runner<'_> {
    fn snap(&mut self, amps: &[C64], basis: &FockBasis, tag: TimeTag, time: f64) {
        let occupations = {
            let mut occ = vec![0.0; basis.num_sites()];
            for (g, z) in amps.iter().enumerate() {
                let p = z.norm_sqr();
                if p != 0.0 {
                    for &s in basis.sites_of(g) {
                        occ[s as usize] += p;
                    }
                }
            }
            occ
        };
        self.traj.push(Snapshot {
            tag,
            time,
            occupations,
            state: self.config.record_states.then(|| amps.to_vec()),
        });
    }

    fn iteration(&mut self, amps: &mut [C64], basis: &FockBasis, program: &Program, t: u64) {
        let policy = self.config.snapshots;
        let n_cycles = program.cycles.len();
        let per_cycle_dt = match self.config.diagonal {
            DiagonalPlacement::PerCycle => Some(1.0 / n_cycles as f64),
            DiagonalPlacement::PerIteration => None,
        };
        for (c, passes) in program.cycles.iter().enumerate() {
            let n_passes = passes.len().max(1);
            for (p, pass) in passes.iter().enumerate() {
                if let Some(g) = &pass.gate {
                    g.apply(amps);
                }
                if policy == SnapshotPolicy::PerPass && p + 1 < passes.len() {
                    let time = t as f64 + (c as f64 + (p + 1) as f64 / n_passes as f64) / n_cycles as f64;
                    let tag = TimeTag {
                        iteration: t,
                        cycle: c as u32,
                        pass: (p + 1) as u32,
                    };
                    self.snap(amps, basis, tag, time);
                }
            }
            if let Some(dt) = per_cycle_dt {
                apply_diagonal(amps, &self.energies, dt);
            }
            if policy != SnapshotPolicy::PerIteration && c + 1 < n_cycles {
                let time = t as f64 + (c + 1) as f64 / n_cycles as f64;
                let tag = TimeTag {
                    iteration: t,
                    cycle: (c + 1) as u32,
                    pass: 0,
                };
                self.snap(amps, basis, tag, time);
            }
        }
        if per_cycle_dt.is_none() {
            apply_diagonal(amps, &self.energies, 1.0);
        }
        let done = t + 1;
        if done.is_multiple_of(self.config.stride.max(1)) || done == self.config.iterations {
            self.snap(amps, basis, TimeTag::iteration(done), done as f64);
        }
    }
}

/// Runs `config.iterations` iterations of a fixed schedule.
pub fn run_emulation(initial: &StateVector, schedule: &PassSchedule, config: &EmulationConfig) -> Result<Trajectory> {
    check_initial(initial, schedule.num_bins, config.mode)?;
    let basis = initial.basis.clone();
    let mut cache = GateCache {
        basis: &basis,
        groups: HashMap::new(),
    };
    let program = cache.program(schedule, config.mode);
    let mut runner = Runner {
        config,
        energies: onsite_energies(&basis, config.mu, config.u),
        traj: Trajectory::new(Provenance::Emulated),
    };
    let mut amps = initial.amps.clone();
    runner.snap(&amps, &basis, TimeTag::default(), 0.0);
    for t in 0..config.iterations {
        runner.iteration(&mut amps, &basis, &program, t);
    }
    Ok(runner.traj)
}

/// Like [`run_emulation`], recompiling the schedule whenever the phase table changes.
pub fn run_emulation_stepped(
    initial: &StateVector,
    graph: &LatticeGraph,
    alphas: &AlphaSchedule,
    config: &EmulationConfig,
) -> Result<Trajectory> {
    check_initial(initial, graph.num_sites(), config.mode)?;
    // validate every entry up front
    for o in alphas.values() {
        o.apply(graph)?;
    }
    let basis = initial.basis.clone();
    let mut cache = GateCache {
        basis: &basis,
        groups: HashMap::new(),
    };
    let mut runner = Runner {
        config,
        energies: onsite_energies(&basis, config.mu, config.u),
        traj: Trajectory::new(Provenance::Emulated),
    };
    let mut amps = initial.amps.clone();
    runner.snap(&amps, &basis, TimeTag::default(), 0.0);
    let mut current: Option<Option<u64>> = None;
    let mut program = None;
    for t in 0..config.iterations {
        let active = active_override(alphas, t);
        let key = active.map(|(k, _)| k);
        if current != Some(key) {
            let schedule = compile_schedule(graph, active.map(|(_, o)| o))?;
            program = Some(cache.program(&schedule, config.mode));
            current = Some(key);
        }
        runner.iteration(&mut amps, &basis, program.as_ref().unwrap(), t);
    }
    Ok(runner.traj)
}

/// Dense matrix of one full iteration (gates then diagonal), built column by column.
pub fn iteration_matrix(basis: &FockBasis, schedule: &PassSchedule, mode: EmulationMode, mu: f64, u: f64) -> Result<CMatrix> {
    let expected = match mode {
        EmulationMode::Tick => schedule.num_bins + 1,
        EmulationMode::Fast => schedule.num_bins,
    };
    if basis.num_sites() != expected {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} bins, expected {expected}",
            basis.num_sites()
        )));
    }
    let mut cache = GateCache {
        basis,
        groups: HashMap::new(),
    };
    let program = cache.program(schedule, mode);
    let energies = onsite_energies(basis, mu, u);
    let dim = basis.dim();
    let columns: Vec<Vec<C64>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut v = vec![C64::default(); dim];
            v[j] = C64::new(1.0, 0.0);
            for pass in program.cycles.iter().flatten() {
                if let Some(g) = &pass.gate {
                    g.apply(&mut v);
                }
            }
            apply_diagonal(&mut v, &energies, 1.0);
            v
        })
        .collect();
    Ok(CMatrix::from_fn(dim, dim, |r, c| columns[c][r]))
}
