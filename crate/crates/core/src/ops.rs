//! Sparse complex operators over a [`FockBasis`].

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::lattice::LatticeGraph;
use crate::linalg::{vec_norm, CMatrix, C64};

/// Tolerance used when an operator is flagged Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

const POWER_SEED: u64 = 0x0074_696d_6562_696e;
const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 10_000;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    hermitian: bool,
}

impl SparseOperator {
    /// Assembles from triplets; repeated `(row, col)` pairs are summed and exact zeros dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|t| t.0 >= dim || t.1 >= dim) {
            return Err(Error::IndexOutOfRange {
                what: "operator entry",
                index: r.max(c),
                limit: dim,
            });
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let mut kept = 0;
        for i in 0..vals.len() {
            if vals[i] != C64::new(0.0, 0.0) {
                rows[kept] = rows[i];
                cols[kept] = cols[i];
                vals[kept] = vals[i];
                kept += 1;
            }
        }
        rows.truncate(kept);
        cols.truncate(kept);
        vals.truncate(kept);
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseOperator {
            dim,
            row_ptr,
            cols,
            vals,
            hermitian: false,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseOperator {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![C64::new(1.0, 0.0); dim])
    }

    pub fn diagonal(values: &[C64]) -> Self {
        let t = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        let mut op = Self::from_triplets(values.len(), t).expect("indices in range");
        op.hermitian = values.iter().all(|v| v.im == 0.0);
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Whether the Hermitian check has been run and passed.
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    /// Entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.row(r)
            .find(|&(cc, _)| cc == c)
            .map(|(_, v)| v)
            .unwrap_or_default()
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::default(); self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim, "vector length");
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *out = acc;
        }
    }

    pub fn adjoint(&self) -> Self {
        let t = self.entries().map(|(r, c, v)| (c, r, v.conj())).collect();
        let mut op = Self::from_triplets(self.dim, t).expect("indices in range");
        op.hermitian = self.hermitian;
        op
    }

    fn check_dims(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "operators of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_dims(other)?;
        let mut t = Vec::new();
        for r in 0..self.dim {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.dim, t)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: C64, other: &Self, b: C64) -> Result<Self> {
        self.check_dims(other)?;
        let t = self
            .entries()
            .map(|(r, c, v)| (r, c, a * v))
            .chain(other.entries().map(|(r, c, v)| (r, c, b * v)))
            .collect();
        Self::from_triplets(self.dim, t)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let one = C64::new(1.0, 0.0);
        let mut op = self.combine(one, other, one)?;
        op.hermitian = self.hermitian && other.hermitian;
        Ok(op)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let one = C64::new(1.0, 0.0);
        let mut op = self.combine(one, other, -one)?;
        op.hermitian = self.hermitian && other.hermitian;
        Ok(op)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut op = self.clone();
        for v in &mut op.vals {
            *v *= s;
        }
        op.hermitian = self.hermitian && s.im == 0.0;
        op
    }

    /// Largest `|A_rc - conj(A_cr)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, c, v) in self.entries() {
            worst = worst.max((v - self.get(c, r).conj()).norm());
        }
        worst
    }

    /// Verifies Hermiticity and sets the flag.
    pub fn check_hermitian(&mut self, tol: f64) -> Result<()> {
        let deviation = self.hermitian_deviation();
        if deviation > tol {
            self.hermitian = false;
            return Err(Error::NotHermitian { deviation });
        }
        self.hermitian = true;
        Ok(())
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn from_dense(m: &CMatrix, drop_below: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch("matrix is not square".into()));
        }
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)].norm() > drop_below {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), t)
    }

    /// Text dump, one `row col re im` line per stored entry.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.entries() {
            let _ = writeln!(s, "{r} {c} {} {}", v.re, v.im);
        }
        s
    }

    /// Largest singular value by power iteration on `A^dagger A`.
    pub fn spectral_norm(&self) -> f64 {
        let adj = self.adjoint();
        power_norm(self.dim, |x| self.matvec(x), |x| adj.matvec(x))
    }
}

/// Spectral norm of a linear map given its action and the action of its adjoint.
pub fn power_norm(
    dim: usize,
    apply: impl Fn(&[C64]) -> Vec<C64>,
    apply_adjoint: impl Fn(&[C64]) -> Vec<C64>,
) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let n0 = vec_norm(&v);
    v.iter_mut().for_each(|z| *z /= n0);
    let mut previous = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = apply_adjoint(&apply(&v));
        let lambda = vec_norm(&w);
        if lambda == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|z| z / lambda).collect();
        if (lambda - previous).abs() <= POWER_TOL * lambda {
            previous = lambda;
            break;
        }
        previous = lambda;
    }
    vec_norm(&apply(&v)).max(previous.sqrt())
}

fn validate_site(basis: &FockBasis, site: usize) -> Result<()> {
    if site >= basis.num_sites() {
        return Err(Error::IndexOutOfRange {
            what: "site",
            index: site,
            limit: basis.num_sites(),
        });
    }
    Ok(())
}

/// Basis index reached by moving one boson from `from` to `to` in the state at `g`,
/// together with the bosonic factor `sqrt(k_from * (k_to + 1))`.
pub(crate) fn hop_target(basis: &FockBasis, g: usize, from: usize, to: usize) -> Option<(usize, f64)> {
    let sites = basis.sites_of(g);
    let k_from = sites.iter().filter(|&&s| s as usize == from).count();
    if k_from == 0 {
        return None;
    }
    let k_to = sites.iter().filter(|&&s| s as usize == to).count();
    let mut moved: Vec<u32> = sites.to_vec();
    let pos = moved.iter().position(|&s| s as usize == from).unwrap();
    moved[pos] = to as u32;
    moved.sort_unstable_by(|a, b| b.cmp(a));
    Some((basis.rank_sites(&moved), ((k_from * (k_to + 1)) as f64).sqrt()))
}

pub fn annihilation_operator(basis: &FockBasis, site: usize) -> Result<SparseOperator> {
    validate_site(basis, site)?;
    let mut t = Vec::new();
    for g in 0..basis.dim() {
        let sites = basis.sites_of(g);
        let k = sites.iter().filter(|&&s| s as usize == site).count();
        if k == 0 {
            continue;
        }
        let mut fewer: Vec<u32> = sites.to_vec();
        let pos = fewer.iter().position(|&s| s as usize == site).unwrap();
        fewer.remove(pos);
        t.push((basis.rank_sites(&fewer), g, C64::new((k as f64).sqrt(), 0.0)));
    }
    SparseOperator::from_triplets(basis.dim(), t)
}

/// Truncated creation operator: states already holding the cap have no image.
pub fn creation_operator(basis: &FockBasis, site: usize) -> Result<SparseOperator> {
    Ok(annihilation_operator(basis, site)?.adjoint())
}

pub fn number_operator(basis: &FockBasis, site: usize) -> Result<SparseOperator> {
    validate_site(basis, site)?;
    let d: Vec<C64> = (0..basis.dim())
        .map(|g| C64::new(basis.count_at(g, site) as f64, 0.0))
        .collect();
    Ok(SparseOperator::diagonal(&d))
}

pub fn total_number_operator(basis: &FockBasis) -> SparseOperator {
    let d: Vec<C64> = (0..basis.dim())
        .map(|g| C64::new(basis.bosons_at(g) as f64, 0.0))
        .collect();
    SparseOperator::diagonal(&d)
}

/// `mu * sum_i n_i + U * sum_i n_i (n_i - 1)` on the diagonal.
pub fn onsite_energies(basis: &FockBasis, mu: f64, u: f64) -> Vec<f64> {
    (0..basis.dim())
        .map(|g| {
            let sites = basis.sites_of(g);
            let mut e = mu * sites.len() as f64;
            // sites are sorted, so equal sites are adjacent
            let mut i = 0;
            while i < sites.len() {
                let mut j = i;
                while j < sites.len() && sites[j] == sites[i] {
                    j += 1;
                }
                let k = (j - i) as f64;
                e += u * k * (k - 1.0);
                i = j;
            }
            e
        })
        .collect()
}

pub fn onsite_operator(basis: &FockBasis, mu: f64, u: f64) -> SparseOperator {
    let d: Vec<C64> = onsite_energies(basis, mu, u)
        .into_iter()
        .map(|e| C64::new(e, 0.0))
        .collect();
    SparseOperator::diagonal(&d)
}

fn check_graph(basis: &FockBasis, graph: &LatticeGraph) -> Result<()> {
    if graph.num_sites() != basis.num_sites() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} sites, basis has {}",
            graph.num_sites(),
            basis.num_sites()
        )));
    }
    Ok(())
}

/// Triplets of `c * a_to^dagger a_from`.
fn push_hop(basis: &FockBasis, to: usize, from: usize, c: C64, t: &mut Vec<(usize, usize, C64)>) {
    for g in 0..basis.dim() {
        if let Some((target, amp)) = hop_target(basis, g, from, to) {
            t.push((target, g, c * amp));
        }
    }
}

/// `-sum_edges (kappa e^{i alpha} a_m^dagger a_n + h.c.)`.
pub fn hopping_operator(basis: &FockBasis, graph: &LatticeGraph) -> Result<SparseOperator> {
    check_graph(basis, graph)?;
    let mut t = Vec::new();
    for e in graph.edges() {
        let c = -C64::from_polar(e.kappa, e.alpha);
        push_hop(basis, e.m, e.n, c, &mut t);
        push_hop(basis, e.n, e.m, c.conj(), &mut t);
    }
    let mut op = SparseOperator::from_triplets(basis.dim(), t)?;
    op.check_hermitian(HERMITIAN_TOL)?;
    Ok(op)
}

pub fn build_hamiltonian(basis: &FockBasis, graph: &LatticeGraph, mu: f64, u: f64) -> Result<SparseOperator> {
    if !mu.is_finite() || !u.is_finite() {
        return Err(Error::InvalidParameter(format!("mu = {mu}, U = {u} must be finite")));
    }
    let mut h = hopping_operator(basis, graph)?.add(&onsite_operator(basis, mu, u))?;
    h.check_hermitian(HERMITIAN_TOL)?;
    Ok(h)
}

/// `4U sum_edges kappa cos(alpha) (n_m a_n^dagger a_m - a_m^dagger a_n n_m)`.
pub fn kappa_u_error_operator(basis: &FockBasis, graph: &LatticeGraph, u: f64) -> Result<SparseOperator> {
    check_graph(basis, graph)?;
    let mut total = SparseOperator::zeros(basis.dim());
    for e in graph.edges() {
        let weight = 4.0 * u * e.kappa * e.alpha.cos();
        if weight == 0.0 {
            continue;
        }
        let n_m = number_operator(basis, e.m)?;
        let mut t1 = Vec::new();
        push_hop(basis, e.n, e.m, C64::new(1.0, 0.0), &mut t1);
        let fwd = SparseOperator::from_triplets(basis.dim(), t1)?;
        let mut t2 = Vec::new();
        push_hop(basis, e.m, e.n, C64::new(1.0, 0.0), &mut t2);
        let back = SparseOperator::from_triplets(basis.dim(), t2)?;
        let term = n_m.matmul(&fwd)?.sub(&back.matmul(&n_m)?)?;
        total = total.combine(C64::new(1.0, 0.0), &term, C64::new(weight, 0.0))?;
    }
    Ok(total)
}

/// `AB - BA`.
pub fn commutator(a: &SparseOperator, b: &SparseOperator) -> Result<SparseOperator> {
    a.matmul(b)?.sub(&b.matmul(a)?)
}

pub fn commutator_norm(a: &SparseOperator, b: &SparseOperator) -> Result<f64> {
    Ok(commutator(a, b)?.spectral_norm())
}
