//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest harness so
//! the lines always reach the output.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use timebin::analysis::{
    effective_hamiltonian, extract_band_structure, gaussian_packet, profile_moments, single_particle_block_dense,
    BandConfig,
};
use timebin::device::{
    iteration_matrix, mzi_pass_unitary, run_emulation, EmulationConfig, EmulationMode, StateVector,
};
use timebin::exact::{exact_propagate, expectation, trotter_error_norm, Method};
use timebin::fock::{dimension, DimensionMode, FockBasis, FockOccupancy};
use timebin::lattice::{build_lattice, LatticeGraph, LatticeSpec, HALL_ALPHA};
use timebin::linalg::{expm_hermitian, hermitian_eigen, spectral_norm, CMatrix, C64};
use timebin::ops::{build_hamiltonian, creation_operator, annihilation_operator, kappa_u_error_operator};
use timebin::scenario::{demo_scenarios, run_scenario, Demo, DemoOptions};
use timebin::schedule::{compile_schedule, MziSetting};

/// Criteria that cannot hold for this model; they still run and print FAIL.
const UNATTAINABLE: &[usize] = &[6];

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn criterion(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> (usize, bool) {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let ok = out.ok && took <= limit;
    println!(
        "{} {id:>2} {name}: {} [{:.3} s, limit {} s]",
        if ok { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        limit.as_secs_f64()
    );
    (id, ok)
}

// ---------------------------------------------------------------------------
// 1, 2: labels and dimensions

fn choose(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Multisets of size `n` drawn from `l` sites.
fn multisets(l: u64, n: u64) -> u64 {
    if n == 0 {
        return 1;
    }
    if l == 0 {
        return 0;
    }
    choose(l + n - 1, n)
}

/// Label from the cumulative-count formula over 1-based site numbers in descending order.
fn oracle_label(occ: &[u32]) -> u64 {
    let l = occ.len() as u64;
    let mut desc = Vec::new();
    for (site, &k) in occ.iter().enumerate().rev() {
        for _ in 0..k {
            desc.push(site as u64 + 1);
        }
    }
    1 + desc
        .iter()
        .enumerate()
        .map(|(i, &ell)| multisets(l - ell, i as u64 + 1))
        .sum::<u64>()
}

fn all_occupancies(l: usize, n: u32) -> Vec<Vec<u32>> {
    if l == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in 0..=n {
        for mut rest in all_occupancies(l - 1, n - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn labels() -> Outcome {
    let basis = FockBasis::new(8, 4).unwrap();
    let worked = basis
        .index_of(&FockOccupancy::new(vec![0, 0, 2, 0, 1, 0, 0, 1]))
        .unwrap()
        .label;
    let mut bad = 0usize;
    let mut checked = 0usize;
    for l in 1..=8usize {
        let basis = FockBasis::new(l, 4).unwrap();
        for n in 0..=4u32 {
            let occs = all_occupancies(l, n);
            let mut seen = vec![false; occs.len()];
            for occ in &occs {
                let idx = basis.index_of(&FockOccupancy::new(occ.clone())).unwrap();
                let label = idx.label;
                let back = basis.occupancy_of(n as usize, label).unwrap();
                let fresh = label >= 1 && (label as usize) <= occs.len() && !seen[label as usize - 1];
                if fresh {
                    seen[label as usize - 1] = true;
                }
                if label != oracle_label(occ) || back.counts() != occ.as_slice() || !fresh {
                    bad += 1;
                }
                checked += 1;
            }
            if !seen.iter().all(|&s| s) {
                bad += 1;
            }
        }
    }
    outcome(
        worked == 112 && bad == 0,
        format!("worked example label {worked} (want 112); {checked} states checked, {bad} mismatches"),
    )
}

fn compression() -> Outcome {
    let sector = dimension(100, 2, DimensionMode::Sector).unwrap();
    let sum = dimension(100, 2, DimensionMode::DirectSum).unwrap();
    let want = choose(101, 2) as u128;
    outcome(
        sector == 5050 && sum == 5151 && sector == want,
        format!("sector {sector} (want 5050), direct sum {sum} (want 5151)"),
    )
}

// ---------------------------------------------------------------------------
// 3: three passes through the register reproduce a direct coupling

/// `exp[i theta/2 (e^{i phi} a_m^dagger a_n + h.c.)]` from ladder operators.
fn oracle_coupling(basis: &FockBasis, m: usize, n: usize, theta: f64, phi: f64) -> CMatrix {
    let ad = creation_operator(basis, m).unwrap().to_dense();
    let an = annihilation_operator(basis, n).unwrap().to_dense();
    let hop = ad * an * C64::from_polar(1.0, phi);
    let g = &hop + hop.adjoint();
    // exp(-i H t) with H = -g, t = theta / 2
    expm_hermitian(&(g * C64::new(-1.0, 0.0)), theta / 2.0)
}

fn sandwich() -> Outcome {
    let basis = FockBasis::new(4, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (ti, pi) = MziSetting::swap_in();
    let (to, po) = MziSetting::swap_out();
    let reg = 0;
    let mut worst = 0.0f64;
    let mut literal = 0.0f64;
    for trial in 0..100 {
        let theta = rng.gen_range(-2.0 * PI..2.0 * PI);
        let phi = rng.gen_range(-PI..PI);
        let (m, n) = [(1, 2), (1, 3), (2, 3), (2, 1), (3, 1), (3, 2)][trial % 6];
        let a = mzi_pass_unitary(&basis, reg, m, ti, pi).unwrap().to_dense();
        let b = mzi_pass_unitary(&basis, reg, n, theta, phi).unwrap().to_dense();
        let c = mzi_pass_unitary(&basis, reg, m, to, po).unwrap().to_dense();
        let want = oracle_coupling(&basis, m, n, theta, phi);
        // swap_in acts first
        worst = worst.max(spectral_norm(&(&c * &b * &a - &want)));
        literal = literal.max(spectral_norm(&(&a * &b * &c - &want)));
    }
    outcome(
        worst < 1e-10,
        format!(
            "max norm {worst:.2e} over 100 draws with passes in listed order (right-to-left product differs by {literal:.2})"
        ),
    )
}

// ---------------------------------------------------------------------------
// 4: tick-level and fast emulation agree

fn tick_fast() -> Outcome {
    let graph = build_lattice(LatticeSpec::Grid2d { rows: 3, cols: 3 }, 0.2, 0.0, false).unwrap();
    let schedule = compile_schedule(&graph, None).unwrap();
    let storage = Arc::new(FockBasis::new(9, 1).unwrap());
    let with_reg = Arc::new(FockBasis::new(10, 1).unwrap());
    let fast0 = StateVector::from_pairs(storage.clone(), &[(4, 1)]).unwrap();
    let tick0 = fast0.embed(with_reg).unwrap();
    let config = |mode| EmulationConfig {
        iterations: 40,
        mode,
        record_states: true,
        ..Default::default()
    };
    let fast = run_emulation(&fast0, &schedule, &config(EmulationMode::Fast)).unwrap();
    let tick = run_emulation(&tick0, &schedule, &config(EmulationMode::Tick)).unwrap();
    let mut worst = 1.0f64;
    for (a, b) in fast.snapshots.iter().zip(&tick.snapshots) {
        let sa = StateVector::new(storage.clone(), a.state.clone().unwrap()).unwrap();
        let sb = StateVector::new(tick0.basis().clone(), b.state.clone().unwrap()).unwrap();
        let (restricted, _) = sb.restrict(storage.clone()).unwrap();
        let f: f64 = sa
            .amplitudes()
            .iter()
            .zip(restricted.amplitudes())
            .map(|(x, y)| x.conj() * y)
            .sum::<C64>()
            .norm_sqr();
        worst = worst.min(f);
    }
    let count = fast.snapshots.len();
    outcome(
        worst >= 1.0 - 1e-9 && count == 41 && tick.snapshots.len() == 41,
        format!("minimum fidelity 1 - {:.2e} over {} iterations", 1.0 - worst, count - 1),
    )
}

// ---------------------------------------------------------------------------
// 5: second-order scaling of the one-iteration error

fn trotter_scaling() -> Outcome {
    let basis = FockBasis::new(6, 2).unwrap();
    let kappas = [0.2, 0.1, 0.05, 0.025];
    let errs: Vec<f64> = kappas
        .iter()
        .map(|&k| {
            let g = build_lattice(LatticeSpec::Chain { sites: 6 }, k, 0.0, false).unwrap();
            trotter_error_norm(&g, 0.0, 0.0, &basis).unwrap()
        })
        .collect();
    let xs: Vec<f64> = kappas.iter().map(|k: &f64| k.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let g = build_lattice(LatticeSpec::Chain { sites: 6 }, 0.1, 0.0, false).unwrap();
    let e0 = trotter_error_norm(&g, 0.0, 0.0, &basis).unwrap();
    let e1 = trotter_error_norm(&g, 0.37, 0.0, &basis).unwrap();
    let mu_shift = (e0 - e1).abs();
    outcome(
        (slope - 2.0).abs() <= 0.2 && mu_shift < 1e-10,
        format!(
            "slope {slope:.4}, errors {:?}, mu dependence {mu_shift:.1e}",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()
        ),
    )
}

// ---------------------------------------------------------------------------
// 6: hopping-phase dependence of the interaction cross term

fn cross_term() -> Outcome {
    let basis = FockBasis::new(2, 2).unwrap();
    let (kappa, u) = (0.05, 1.0);
    let edge = |alpha| {
        let mut g = LatticeGraph::new(2).unwrap();
        g.add_edge(0, 1, kappa, alpha).unwrap();
        g
    };
    let err0 = trotter_error_norm(&edge(0.0), 0.0, u, &basis).unwrap();
    let err90 = trotter_error_norm(&edge(FRAC_PI_2), 0.0, u, &basis).unwrap();
    // leading correction of a two-factor split is half the cross term
    let eps0 = kappa_u_error_operator(&basis, &edge(0.0), u).unwrap().spectral_norm();
    let eps90 = kappa_u_error_operator(&basis, &edge(FRAC_PI_2), u).unwrap().spectral_norm();
    let predicted = 0.5 * (eps0 - eps90);
    let drop = err0 - err90;
    outcome(
        err90 < err0 && drop >= 0.5 * predicted && drop <= 2.0 * predicted,
        format!(
            "error {err0:.6e} at alpha=0, {err90:.6e} at alpha=pi/2; drop {drop:.2e} vs predicted {predicted:.2e} (a single edge's phase is a gauge choice)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 7: emulated ladder bands against the periodic-drive Bloch solution

fn t2(kappa: f64, a: f64) -> [[C64; 2]; 2] {
    let (c, s) = (kappa.cos(), kappa.sin());
    [
        [C64::new(c, 0.0), C64::new(0.0, 1.0) * C64::from_polar(s, a)],
        [C64::new(0.0, 1.0) * C64::from_polar(s, -a), C64::new(c, 0.0)],
    ]
}

type M2 = [[C64; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[C64::default(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn inv(a: &M2) -> M2 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}

fn diag(x: C64, y: C64) -> M2 {
    [[x, C64::default()], [C64::default(), y]]
}

/// One-iteration Bloch unitary of the ladder whose rung and leg couplings are
/// applied cell by cell in site order. A carried amplitude `g` on the cell ahead
/// satisfies `z g = P10 R g + P11 z u` for momentum `k`, `z = e^{ik}`.
fn floquet_bloch(k: f64, kappa: f64, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let r = t2(kappa, 0.0);
    let tl = t2(kappa, alpha / 2.0);
    let tr = t2(kappa, -alpha / 2.0);
    let p = |i: usize, j: usize| diag(tl[i][j], tr[i][j]);
    let z = C64::from_polar(1.0, k);
    let zi = diag(z, z);
    let p10r = mul(&p(1, 0), &r);
    let lhs = [[zi[0][0] - p10r[0][0], -p10r[0][1]], [-p10r[1][0], zi[1][1] - p10r[1][1]]];
    let g = mul(&inv(&lhs), &mul(&p(1, 1), &zi));
    let a = mul(&mul(&p(0, 0), &r), &g);
    let b = mul(&p(0, 1), &zi);
    let u = [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]];
    // eigenpairs of the 2x2 block
    let tr_ = u[0][0] + u[1][1];
    let det = u[0][0] * u[1][1] - u[0][1] * u[1][0];
    let disc = (tr_ * tr_ - det * 4.0).sqrt();
    let mut energies = Vec::new();
    let mut weights = Vec::new();
    for lam in [(tr_ + disc) / 2.0, (tr_ - disc) / 2.0] {
        energies.push(-lam.arg());
        // (u - lam) v = 0
        let (v0, v1) = if u[0][1].norm() > 1e-14 {
            (u[0][1], lam - u[0][0])
        } else if u[1][0].norm() > 1e-14 {
            (lam - u[1][1], u[1][0])
        } else if (lam - u[0][0]).norm() < (lam - u[1][1]).norm() {
            (C64::new(1.0, 0.0), C64::default())
        } else {
            (C64::default(), C64::new(1.0, 0.0))
        };
        weights.push(v0.norm_sqr() / (v0.norm_sqr() + v1.norm_sqr()));
    }
    (energies, weights)
}

fn ladder_bands_vs_oracle(rungs: usize, kappa: f64, alpha: f64) -> (f64, f64, usize, bool) {
    let graph = build_lattice(LatticeSpec::HallLadder { rungs }, kappa, alpha, true).unwrap();
    let basis = FockBasis::new(2 * rungs, 1).unwrap();
    let schedule = compile_schedule(&graph, None).unwrap();
    let g = iteration_matrix(&basis, &schedule, EmulationMode::Fast, 0.0, 0.0).unwrap();
    let h = effective_hamiltonian(&g).unwrap();
    let block = single_particle_block_dense(&h, &basis).unwrap();
    let cfg = BandConfig {
        resolve_degenerate: true,
        ..BandConfig::ladder(rungs)
    };
    let bands = extract_band_structure(&block, &cfg).unwrap();
    let (mut de, mut dw) = (0.0f64, 0.0f64);
    for p in &bands.points {
        let (e, w) = floquet_bloch(p.k, kappa, alpha);
        let b = if (e[0] - p.energy).abs() < (e[1] - p.energy).abs() { 0 } else { 1 };
        de = de.max((e[b] - p.energy).abs());
        dw = dw.max((w[b] - p.leg_weight).abs());
    }
    // chirality: lower-band weight on the left leg changes side across k = 0
    let lower: Vec<_> = bands.points.iter().filter(|p| p.band_index == 0).collect();
    let side = |lo: f64, hi: f64| {
        let pts: Vec<f64> = lower.iter().filter(|p| p.k > lo && p.k < hi).map(|p| p.leg_weight).collect();
        pts.iter().sum::<f64>() / pts.len().max(1) as f64
    };
    let (left, right) = (side(-1.0, -0.2), side(0.2, 1.0));
    let chiral = (left - 0.5) * (right - 0.5) < 0.0 && (left - right).abs() > 0.2;
    (de, dw, bands.retained, chiral)
}

fn bands() -> Outcome {
    let kappa = 0.1;
    let (de0, dw0, r0, chiral0) = ladder_bands_vs_oracle(64, kappa, 0.0);
    let (de1, dw1, r1, chiral1) = ladder_bands_vs_oracle(64, kappa, HALL_ALPHA);
    let tol = 5e-3 * kappa;
    let desk = de0 < tol && de1 < tol && dw0 < 0.05 && dw1 < 0.05 && chiral1 && !chiral0;

    // full-length ladder, one photon, Krylov propagation
    let start = Instant::now();
    let rungs = 1000;
    let graph = build_lattice(LatticeSpec::HallLadder { rungs }, kappa, HALL_ALPHA, true).unwrap();
    let basis = Arc::new(FockBasis::new(2 * rungs, 1).unwrap());
    let h = build_hamiltonian(&basis, &graph, 0.0, 0.0).unwrap();
    let axis: Vec<usize> = (0..rungs).map(|r| 2 * r).collect();
    let psi = gaussian_packet(basis.clone(), &axis, 500.0, 4.0, 0.1).unwrap();
    let e0 = expectation(&h, psi.amplitudes());
    let out = exact_propagate(&h, &psi, 100.0, Method::Krylov).unwrap();
    let drift_e = (expectation(&h, out.amplitudes()) - e0).abs();
    let norm_err = (out.norm() - 1.0).abs();
    let full = start.elapsed();
    let full_ok = norm_err < 1e-9 && drift_e < 1e-8 && full < Duration::from_secs(300);
    outcome(
        desk && full_ok,
        format!(
            "alpha=0: dE {de0:.2e} dw {dw0:.2e} ({r0} kept); alpha=2pi/3: dE {de1:.2e} dw {dw1:.2e} ({r1} kept), chiral {chiral1}; tol dE {tol:.1e}; 1000 rungs Krylov t=100 in {:.1} s, energy drift {drift_e:.1e}",
            full.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 8: one-way motion of ladder packets

fn packet_drift(alpha: f64, k: f64, kappa: f64, iterations: u64) -> f64 {
    let rungs = 64;
    let graph = build_lattice(LatticeSpec::HallLadder { rungs }, kappa, alpha, false).unwrap();
    let basis = Arc::new(FockBasis::new(2 * rungs, 1).unwrap());
    let axis: Vec<usize> = (0..rungs).map(|r| 2 * r).collect();
    let psi = gaussian_packet(basis, &axis, rungs as f64 / 2.0, 4.0, k).unwrap();
    let schedule = compile_schedule(&graph, None).unwrap();
    let config = EmulationConfig {
        iterations,
        stride: iterations,
        ..Default::default()
    };
    let traj = run_emulation(&psi, &schedule, &config).unwrap();
    let c0 = profile_moments(&traj.snapshots[0].occupations, &axis).0;
    let c1 = profile_moments(&traj.last().unwrap().occupations, &axis).0;
    c1 - c0
}

fn chiral() -> Outcome {
    // coupling 0.1 over time 200, emulated with a 200x smaller coupling per iteration
    let kappa = 0.0005;
    let iterations = (200.0 * 0.1 / kappa) as u64;
    let d = |alpha, k| packet_drift(alpha, k, kappa, iterations);
    let (a_pos, a_neg) = (d(HALL_ALPHA, 0.1), d(HALL_ALPHA, -0.1));
    let (z_pos, z_neg) = (d(0.0, 0.1), d(0.0, -0.1));
    let ratio = a_pos.abs().max(a_neg.abs()) / a_pos.abs().min(a_neg.abs());
    let sym = (z_pos.abs() - z_neg.abs()).abs() / z_pos.abs().max(z_neg.abs());
    outcome(
        ratio >= 2.0 && sym <= 0.05,
        format!(
            "flux: drifts {a_pos:+.3} / {a_neg:+.3} (ratio {ratio:.2}); no flux: {z_pos:+.3} / {z_neg:+.3} (asymmetry {:.2}%)",
            100.0 * sym
        ),
    )
}

// ---------------------------------------------------------------------------
// 9: two photons on the four-dimensional hypercube

fn tesseract() -> Outcome {
    let kappa = 0.01;
    let graph = build_lattice(LatticeSpec::Hypercube { dim: 4 }, kappa, 0.0, false).unwrap();
    let schedule = compile_schedule(&graph, None).unwrap();
    let basis = Arc::new(FockBasis::new(17, 2).unwrap());
    let start = [0usize, 5];
    let psi = StateVector::from_pairs(basis, &[(start[0], 1), (start[1], 1)]).unwrap();
    let iterations = (PI / (2.0 * kappa)).ceil() as u64;
    let config = EmulationConfig {
        iterations,
        mode: EmulationMode::Tick,
        ..Default::default()
    };
    let traj = run_emulation(&psi, &schedule, &config).unwrap();
    let antipodes: Vec<usize> = start.iter().map(|s| s ^ 0b1111).collect();
    let last = &traj.last().unwrap().occupations;
    let moved = antipodes.iter().map(|&a| last[a]).sum::<f64>() / 2.0;
    let reg = traj.snapshots.iter().map(|s| s.occupations[16]).fold(0.0, f64::max);
    // independent photons, each flipping four coordinates
    let expected = (kappa * iterations as f64).sin().powi(8);
    outcome(
        moved >= 0.99 && reg < 1e-9,
        format!(
            "{iterations} iterations: fraction on antipodes {antipodes:?} {moved:.5} (continuous-time value {expected:.5}); max register {reg:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 10: bound-pair tunnelling

/// Best-fit angular frequency of `a cos(wt) + b sin(wt) + c` over `w` in `(lo, hi)`.
fn fit_frequency(xs: &[f64], lo: f64, hi: f64) -> f64 {
    let residual = |w: f64| {
        // normal equations for (a, b, c)
        let mut ata = [[0.0f64; 3]; 3];
        let mut atb = [0.0f64; 3];
        for (t, &x) in xs.iter().enumerate() {
            let row = [(w * t as f64).cos(), (w * t as f64).sin(), 1.0];
            for i in 0..3 {
                atb[i] += row[i] * x;
                for j in 0..3 {
                    ata[i][j] += row[i] * row[j];
                }
            }
        }
        let m = nalgebra::Matrix3::from_fn(|i, j| ata[i][j]);
        let coef = m.lu().solve(&nalgebra::Vector3::from(atb)).unwrap();
        xs.iter()
            .enumerate()
            .map(|(t, &x)| {
                let t = t as f64;
                (x - coef[0] * (w * t).cos() - coef[1] * (w * t).sin() - coef[2]).powi(2)
            })
            .sum::<f64>()
    };
    let steps = 400;
    let grid: Vec<f64> = (1..steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
    let best = grid
        .iter()
        .copied()
        .min_by(|a, b| residual(*a).total_cmp(&residual(*b)))
        .unwrap();
    let h = (hi - lo) / steps as f64;
    let (mut a, mut b) = (best - h, best + h);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 * best {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if residual(c) < residual(d) {
            b = d;
        } else {
            a = c;
        }
    }
    (a + b) / 2.0
}

fn doublon() -> Outcome {
    let (kappa, u) = (0.05, 1.0);
    // three-level problem |2,0>, |1,1>, |0,2> with H_ij from the Bose-Hubbard terms
    let s2 = 2f64.sqrt();
    let h3 = CMatrix::from_fn(3, 3, |i, j| {
        let v = match (i, j) {
            (0, 0) | (2, 2) => 2.0 * u,
            (0, 1) | (1, 0) | (1, 2) | (2, 1) => -kappa * s2,
            _ => 0.0,
        };
        C64::new(v, 0.0)
    });
    let (vals, vecs) = hermitian_eigen(&h3);
    // the two levels carrying |2,0>
    let mut by_overlap: Vec<(f64, f64)> = (0..3).map(|j| (vecs[(0, j)].norm_sqr(), vals[j])).collect();
    by_overlap.sort_by(|a, b| b.0.total_cmp(&a.0));
    let omega_oracle = (by_overlap[0].1 - by_overlap[1].1).abs();

    // emulate with every energy scaled down so each iteration stays small
    let scale = 0.1;
    let mut g = LatticeGraph::new(2).unwrap();
    g.add_edge(0, 1, kappa * scale, 0.0).unwrap();
    let schedule = compile_schedule(&g, None).unwrap();
    let basis = Arc::new(FockBasis::new(2, 2).unwrap());
    let psi = StateVector::from_pairs(basis, &[(0, 2)]).unwrap();
    let periods = 3.0;
    let iterations = (periods * 2.0 * PI / (scale * omega_oracle)).ceil() as u64;
    let config = EmulationConfig {
        iterations,
        u: u * scale,
        ..Default::default()
    };
    let traj = run_emulation(&psi, &schedule, &config).unwrap();
    let n0: Vec<f64> = traj.snapshots.iter().map(|s| s.occupations[0]).collect();
    // search below the single-photon population frequency 2 kappa
    let w = fit_frequency(&n0, 1e-6, 2.0 * kappa * scale) / scale;
    let rel = (w - omega_oracle).abs() / omega_oracle;
    let rabi = 2.0 * kappa;
    outcome(
        rel < 0.01 && w * 10.0 <= rabi,
        format!(
            "pair frequency {w:.6e} vs three-level {omega_oracle:.6e} (rel {rel:.2e}); single-photon {rabi:.3e} is {:.1}x faster",
            rabi / w
        ),
    )
}

// ---------------------------------------------------------------------------
// 11: lensing of bound pairs by a ramped phase

fn lensing() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut late = std::collections::BTreeMap::new();
    for sc in demo_scenarios(Demo::Lensing, &DemoOptions::default()) {
        let r = run_scenario(&sc, std::path::Path::new("."), &dir.path().join(&sc.name)).unwrap();
        let v = r.summary["late_mean_variance"].as_f64().unwrap();
        late.insert(sc.name.clone(), v);
    }
    let pair = late["lensing-doublon-ramp"] / late["lensing-doublon-control"];
    let single = late["lensing-single-ramp"] / late["lensing-single-control"];
    outcome(
        pair <= 0.75 && (single - 1.0).abs() < 0.10,
        format!("variance ratio ramp/control: pair {pair:.3}, single {single:.3}"),
    )
}

fn main() {
    let s = Duration::from_secs;
    let results = [
        criterion(1, "occupation labels", s(1), labels),
        criterion(2, "compressed dimension", Duration::from_millis(1), compression),
        criterion(3, "register sandwich", s(10), sandwich),
        criterion(4, "tick/fast equivalence", s(30), tick_fast),
        criterion(5, "Trotter scaling", s(60), trotter_scaling),
        criterion(6, "kappa-U cross term", s(10), cross_term),
        criterion(7, "ladder bands", s(300), bands),
        criterion(8, "chiral drift", s(120), chiral),
        criterion(9, "tesseract transfer", s(120), tesseract),
        criterion(10, "doublon tunnelling", s(10), doublon),
        criterion(11, "lensing", s(180), lensing),
    ];
    let passed = results.iter().filter(|r| r.1).count();
    println!("{passed}/{} criteria passed", results.len());
    let unexpected: Vec<usize> = results
        .iter()
        .filter(|(id, ok)| !ok && !UNATTAINABLE.contains(id))
        .map(|r| r.0)
        .collect();
    for id in UNATTAINABLE {
        if results.iter().any(|(i, ok)| i == id && !ok) {
            println!("criterion {id} fails as expected for this model; see README");
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
