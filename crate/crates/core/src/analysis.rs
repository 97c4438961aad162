//! Observables: effective Hamiltonians, band structures, occupations, two-photon
//! correlations and wavepacket motion.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::Schur;
use rustfft::FftPlanner;

use crate::device::StateVector;
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{hermitian_eigen, unitary_deviation, CMatrix, CVector, C64};
use crate::ops::SparseOperator;
use crate::trajectory::Trajectory;

pub const UNITARY_TOL: f64 = 1e-8;
/// Eigenphases closer than this to the branch cut are rejected.
pub const BRANCH_GUARD: f64 = 1e-6;

/// `H` with `exp(-i H) = G`, eigenvalues in `(-pi, pi)`.
pub fn effective_hamiltonian(g: &CMatrix) -> Result<CMatrix> {
    if g.nrows() != g.ncols() {
        return Err(Error::DimensionMismatch("matrix is not square".into()));
    }
    let deviation = unitary_deviation(g);
    if deviation > UNITARY_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    // G is normal, so its Schur form is diagonal and Q holds the eigenvectors.
    let (q, t) = Schur::new(g.clone()).unpack();
    let n = g.nrows();
    let mut phases = Vec::with_capacity(n);
    for i in 0..n {
        let e = -t[(i, i)].arg();
        if e.abs() > PI - BRANCH_GUARD {
            return Err(Error::BranchCut { phase: e });
        }
        phases.push(e);
    }
    let mut scaled = q.clone();
    for (j, &e) in phases.iter().enumerate() {
        for r in 0..n {
            scaled[(r, j)] *= e;
        }
    }
    let h = &scaled * q.adjoint();
    Ok((&h + h.adjoint()) * C64::new(0.5, 0.0))
}

/// The one-boson block of an operator, rows and columns in site order.
pub fn single_particle_block(h: &SparseOperator, basis: &FockBasis) -> Result<CMatrix> {
    if basis.max_bosons() < 1 {
        return Err(Error::Analysis("basis has no one-boson sector".into()));
    }
    if h.dim() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator dimension {} vs basis {}",
            h.dim(),
            basis.dim()
        )));
    }
    let l = basis.num_sites();
    let global = |site: usize| basis.rank_sites(&[site as u32]);
    Ok(CMatrix::from_fn(l, l, |r, c| h.get(global(r), global(c))))
}

/// Dense counterpart of [`single_particle_block`].
pub fn single_particle_block_dense(m: &CMatrix, basis: &FockBasis) -> Result<CMatrix> {
    if basis.max_bosons() < 1 {
        return Err(Error::Analysis("basis has no one-boson sector".into()));
    }
    if m.nrows() != basis.dim() || m.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, basis dimension {}",
            m.nrows(),
            m.ncols(),
            basis.dim()
        )));
    }
    let l = basis.num_sites();
    let idx: Vec<usize> = (0..l).map(|s| basis.rank_sites(&[s as u32])).collect();
    Ok(CMatrix::from_fn(l, l, |r, c| m[(idx[r], idx[c])]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandPoint {
    pub band_index: usize,
    pub k: f64,
    pub energy: f64,
    pub leg_weight: f64,
    pub quality: f64,
}

#[derive(Clone, Debug)]
pub struct BandConfig {
    /// Sites sampled along the periodic direction, in order; also the set whose
    /// weight is reported. `None` means every site.
    pub partition: Option<Vec<usize>>,
    /// Sites per unit cell, used by the translation operator.
    pub cell_size: usize,
    pub prune_threshold: f64,
    /// Split degenerate eigenspaces into translation eigenstates.
    pub resolve_degenerate: bool,
    pub degeneracy_tol: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig {
            partition: None,
            cell_size: 1,
            prune_threshold: 0.5,
            resolve_degenerate: false,
            degeneracy_tol: 1e-9,
        }
    }
}

impl BandConfig {
    /// Two-leg ladder with even sites on the left leg.
    pub fn ladder(rungs: usize) -> Self {
        BandConfig {
            partition: Some((0..rungs).map(|r| 2 * r).collect()),
            cell_size: 2,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct BandStructure {
    pub points: Vec<BandPoint>,
    pub retained: usize,
    pub pruned: usize,
}

fn wrap_k(k: f64) -> f64 {
    let mut k = (k + PI).rem_euclid(2.0 * PI) - PI;
    if k <= -PI {
        k += 2.0 * PI;
    }
    k
}

/// `|sum_r x_r e^{-ikr}|^2`.
fn dtft_power(x: &[C64], k: f64) -> f64 {
    x.iter()
        .enumerate()
        .map(|(r, z)| z * C64::from_polar(1.0, -k * r as f64))
        .sum::<C64>()
        .norm_sqr()
}

/// Golden-section search for the spectral peak inside `[lo, hi]`.
fn refine_peak(x: &[C64], lo: f64, hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (dtft_power(x, c), dtft_power(x, d));
    while b - a > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = dtft_power(x, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = dtft_power(x, d);
        }
    }
    (a + b) / 2.0
}

/// Rotates each degenerate cluster of eigenvectors onto eigenstates of the lattice
/// translation by one cell.
fn resolve_with_translation(values: &[f64], vectors: &mut CMatrix, cell: usize, tol: f64) -> Result<()> {
    let n = vectors.nrows();
    if cell == 0 || !n.is_multiple_of(cell) {
        return Err(Error::Analysis(format!(
            "cell size {cell} does not divide {n} sites"
        )));
    }
    let c = 2f64.sqrt() - 1.0;
    let mut start = 0;
    while start < values.len() {
        let mut end = start + 1;
        while end < values.len() && values[end] - values[end - 1] <= tol {
            end += 1;
        }
        if end - start > 1 {
            let block = vectors.columns(start, end - start).into_owned();
            // (T v)_{s + cell} = v_s
            let shifted = CMatrix::from_fn(n, end - start, |r, j| block[((r + n - cell) % n, j)]);
            let t = block.adjoint() * shifted;
            let a = (&t + t.adjoint()) * C64::new(0.5, 0.0)
                + (&t - t.adjoint()) * C64::new(0.0, -0.5 * c);
            let (_, w) = hermitian_eigen(&((&a + a.adjoint()) * C64::new(0.5, 0.0)));
            let rotated = block * w;
            vectors.columns_mut(start, end - start).copy_from(&rotated);
        }
        start = end;
    }
    Ok(())
}

/// Band points from a single-particle Hamiltonian in site order.
pub fn extract_band_structure(h: &CMatrix, config: &BandConfig) -> Result<BandStructure> {
    let n = h.nrows();
    let partition: Vec<usize> = match &config.partition {
        Some(p) => p.clone(),
        None => (0..n).collect(),
    };
    if partition.is_empty() {
        return Err(Error::Analysis("empty partition".into()));
    }
    if let Some(&bad) = partition.iter().find(|&&s| s >= n) {
        return Err(Error::IndexOutOfRange {
            what: "partition site",
            index: bad,
            limit: n,
        });
    }
    let cells = partition.len();
    let (values, mut vectors) = hermitian_eigen(h);
    if config.resolve_degenerate {
        resolve_with_translation(&values, &mut vectors, config.cell_size, config.degeneracy_tol)?;
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cells);
    let step = 2.0 * PI / cells as f64;
    let mut raw = Vec::new();
    let mut pruned = 0;
    for (j, &energy) in values.iter().enumerate() {
        let col = vectors.column(j);
        let x: Vec<C64> = partition.iter().map(|&s| col[s]).collect();
        let leg_weight: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let mut spec = x.clone();
        fft.process(&mut spec);
        let power: Vec<f64> = spec.iter().map(|z| z.norm_sqr()).collect();
        let total: f64 = power.iter().sum();
        if total == 0.0 {
            pruned += 1;
            continue;
        }
        let peak = (0..cells)
            .max_by(|&a, &b| power[a].total_cmp(&power[b]))
            .unwrap();
        let mirror = (cells - peak) % cells;
        let standing = mirror != peak && power[mirror] >= 0.5 * power[peak];
        let dominance = if standing {
            (power[peak] + power[mirror]) / total
        } else {
            power[peak] / total
        };
        if dominance < config.prune_threshold {
            pruned += 1;
            continue;
        }
        let k0 = step * peak as f64;
        // Signals that sit exactly on the grid leave the neighbouring bins empty;
        // refining those would only pick up leakage from the mirror peak.
        let leak = [(peak + 1) % cells, (peak + cells - 1) % cells]
            .into_iter()
            .filter(|&b| b != peak && b != mirror)
            .map(|b| power[b])
            .fold(0.0, f64::max);
        let k = if leak <= 1e-20 * total {
            wrap_k(k0)
        } else {
            wrap_k(refine_peak(&x, k0 - step, k0 + step))
        };
        if standing {
            for kk in [k, wrap_k(-k)] {
                raw.push((kk, energy, leg_weight, dominance / 2.0));
            }
        } else {
            raw.push((k, energy, leg_weight, dominance));
        }
    }
    let retained = values.len() - pruned;
    // Band index: rank in energy among the points sharing the nearest grid momentum.
    let grid = |k: f64| ((k / step).round() as i64).rem_euclid(cells as i64);
    let mut points: Vec<BandPoint> = Vec::with_capacity(raw.len());
    let mut seen: std::collections::HashMap<i64, usize> = std::collections::HashMap::new();
    for (k, energy, leg_weight, quality) in raw {
        // values are ascending, so the running count is the rank
        let slot = seen.entry(grid(k)).or_insert(0);
        points.push(BandPoint {
            band_index: *slot,
            k,
            energy,
            leg_weight,
            quality,
        });
        *slot += 1;
    }
    points.sort_by(|a, b| {
        (a.band_index, a.k)
            .partial_cmp(&(b.band_index, b.k))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(BandStructure {
        points,
        retained,
        pruned,
    })
}

/// Bands of the one-boson sector of `h`.
pub fn extract_band_structure_from(h: &SparseOperator, basis: &FockBasis, config: &BandConfig) -> Result<BandStructure> {
    if basis.max_bosons() != 1 {
        return Err(Error::Analysis(format!(
            "band extraction needs the one-boson sector, basis cap is {}",
            basis.max_bosons()
        )));
    }
    extract_band_structure(&single_particle_block(h, basis)?, config)
}

pub fn bands_csv(points: &[BandPoint]) -> String {
    let mut out = String::from("band_index,k,E,leg_weight,quality\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{:.12},{:.12e},{:.12},{:.6}",
            p.band_index, p.k, p.energy, p.leg_weight, p.quality
        );
    }
    out
}

/// `Gamma_ij = <a_i^dagger a_j^dagger a_j a_i>`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub size: usize,
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size + j]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

pub fn occupations_and_correlations(state: &StateVector) -> (Vec<f64>, CorrelationMatrix) {
    let basis = state.basis();
    let l = basis.num_sites();
    let mut occ = vec![0.0; l];
    let mut gamma = vec![0.0; l * l];
    let mut counts: Vec<(usize, f64)> = Vec::new();
    for (g, z) in state.amplitudes().iter().enumerate() {
        let p = z.norm_sqr();
        if p == 0.0 {
            continue;
        }
        counts.clear();
        for &s in basis.sites_of(g) {
            match counts.last_mut() {
                Some((site, k)) if *site == s as usize => *k += 1.0,
                _ => counts.push((s as usize, 1.0)),
            }
        }
        for &(i, ki) in &counts {
            occ[i] += p * ki;
            for &(j, kj) in &counts {
                gamma[i * l + j] += p * if i == j { ki * (ki - 1.0) } else { ki * kj };
            }
        }
    }
    (occ, CorrelationMatrix { size: l, values: gamma })
}

pub fn correlations_csv(frames: &[(usize, CorrelationMatrix)]) -> String {
    let mut out = String::from("snapshot,i,j,gamma\n");
    for (snap, m) in frames {
        for i in 0..m.size {
            for j in 0..m.size {
                let _ = writeln!(out, "{snap},{i},{j},{:.12e}", m.get(i, j));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketStats {
    pub time: f64,
    pub center: f64,
    pub variance: f64,
    pub velocity: f64,
}

/// Moments of the occupation profile along `axis` (position `i` for site `axis[i]`).
pub fn profile_moments(occupations: &[f64], axis: &[usize]) -> (f64, f64) {
    let w: Vec<f64> = axis.iter().map(|&s| occupations[s]).collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let center = w.iter().enumerate().map(|(i, p)| i as f64 * p).sum::<f64>() / total;
    let variance = w
        .iter()
        .enumerate()
        .map(|(i, p)| (i as f64 - center).powi(2) * p)
        .sum::<f64>()
        / total;
    (center, variance)
}

pub fn wavepacket_stats(trajectory: &Trajectory, axis: &[usize]) -> Result<Vec<PacketStats>> {
    let snaps = &trajectory.snapshots;
    if snaps.len() < 2 {
        return Err(Error::Analysis(format!(
            "velocity needs at least 2 snapshots, got {}",
            snaps.len()
        )));
    }
    if axis.is_empty() {
        return Err(Error::Analysis("empty axis".into()));
    }
    let width = snaps[0].occupations.len();
    if let Some(&bad) = axis.iter().find(|&&s| s >= width) {
        return Err(Error::IndexOutOfRange {
            what: "axis site",
            index: bad,
            limit: width,
        });
    }
    let moments: Vec<(f64, f64)> = snaps.iter().map(|s| profile_moments(&s.occupations, axis)).collect();
    let n = snaps.len();
    Ok((0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            let velocity = (moments[b].0 - moments[a].0) / (snaps[b].time - snaps[a].time);
            PacketStats {
                time: snaps[i].time,
                center: moments[i].0,
                variance: moments[i].1,
                velocity,
            }
        })
        .collect())
}

pub fn wavepacket_csv(stats: &[PacketStats]) -> String {
    let mut out = String::from("time,center,variance,velocity\n");
    for s in stats {
        let _ = writeln!(out, "{},{:.12},{:.12},{:.12e}", s.time, s.center, s.variance, s.velocity);
    }
    out
}

/// One-boson Gaussian packet along `axis`: amplitude `exp(-(x - x0)^2 / 4 sigma^2) e^{ikx}`.
pub fn gaussian_packet(basis: Arc<FockBasis>, axis: &[usize], x0: f64, sigma: f64, k: f64) -> Result<StateVector> {
    if basis.max_bosons() < 1 {
        return Err(Error::InvalidParameter("basis cannot hold a boson".into()));
    }
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("packet width must be positive, got {sigma}")));
    }
    let mut amps = vec![C64::default(); basis.dim()];
    for (x, &site) in axis.iter().enumerate() {
        if site >= basis.num_sites() {
            return Err(Error::IndexOutOfRange {
                what: "axis site",
                index: site,
                limit: basis.num_sites(),
            });
        }
        let x = x as f64;
        let env = (-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp();
        amps[basis.rank_sites(&[site as u32])] = C64::from_polar(env, k * x);
    }
    let mut psi = StateVector::new(basis, amps)?;
    psi.normalize()?;
    Ok(psi)
}

/// Applies a dense matrix to a state.
pub fn apply_dense(m: &CMatrix, psi: &[C64]) -> Vec<C64> {
    (m * CVector::from_column_slice(psi)).iter().copied().collect()
}
