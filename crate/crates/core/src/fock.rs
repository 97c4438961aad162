//! Permutation-invariant bosonic Fock basis.
//!
//! States with `n` bosons on `L` sites are labeled with consecutive integers
//! using cumulative multiset counts. Writing the occupied sites of a state as a
//! descending list `(l_1 >= l_2 >= ... >= l_n)` of 1-based site numbers (each
//! site repeated once per boson), the sector-local label is
//!
//! ```text
//! label = 1 + sum_i count(L - l_i, i),   count(l, n) = C(n + l - 1, n)
//! ```
//!
//! with `count(0, n) = 0` for `n >= 1` and `count(l, 0) = 1`. The direct-sum
//! basis over `n = 0..=N` is laid out sector by sector (vacuum first), labels
//! ascending inside each sector. Labels are 1-based, global indices 0-based.
//!
//! The public API uses 0-based site indices throughout.

use std::fmt;

use crate::error::{Error, Result};

/// Largest basis we are willing to materialize.
pub const MAX_BASIS_DIM: usize = 1 << 26;

/// Per-site boson counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockOccupancy(pub Vec<u32>);

impl FockOccupancy {
    pub fn new(counts: Vec<u32>) -> Self {
        FockOccupancy(counts)
    }

    pub fn vacuum(num_sites: usize) -> Self {
        FockOccupancy(vec![0; num_sites])
    }

    /// Occupancy with the given `(site, count)` pairs set; repeated sites add up.
    pub fn from_pairs(num_sites: usize, pairs: &[(usize, u32)]) -> Result<Self> {
        let mut counts = vec![0; num_sites];
        for &(site, n) in pairs {
            if site >= num_sites {
                return Err(Error::IndexOutOfRange {
                    what: "site",
                    index: site,
                    limit: num_sites,
                });
            }
            counts[site] += n;
        }
        Ok(FockOccupancy(counts))
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn num_sites(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&k| k as usize).sum()
    }
}

impl fmt::Display for FockOccupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ">")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DimensionMode {
    /// Only the sector holding exactly `N` bosons.
    Sector,
    /// Direct sum of the sectors `n = 0..=N`.
    DirectSum,
}

/// Binomial coefficient with overflow detection.
pub fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul(n - k + i)? / i;
    }
    Some(acc)
}

/// Number of ways to place `n` identical bosons on `l` sites.
pub fn multiset_count(l: u128, n: u128) -> Option<u128> {
    if l == 0 {
        return Some(u128::from(n == 0));
    }
    binomial(n + l - 1, n)
}

/// Size of the Fock space for `sites` sites and `bosons` bosons.
pub fn dimension(sites: usize, bosons: usize, mode: DimensionMode) -> Result<u128> {
    if sites == 0 {
        return Err(Error::InvalidParameter("site count must be at least 1".into()));
    }
    let overflow = || Error::Overflow(format!("L = {sites}, N = {bosons}"));
    let (l, n) = (sites as u128, bosons as u128);
    match mode {
        DimensionMode::Sector => multiset_count(l, n).ok_or_else(overflow),
        DimensionMode::DirectSum => {
            let mut total: u128 = 0;
            for k in 0..=n {
                let c = multiset_count(l, k).ok_or_else(overflow)?;
                total = total.checked_add(c).ok_or_else(overflow)?;
            }
            Ok(total)
        }
    }
}

/// Position of a state in the basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisIndex {
    pub bosons: usize,
    /// 1-based label inside the sector.
    pub label: u64,
    /// 0-based index into the direct-sum basis.
    pub global: usize,
}

/// Direct-sum Fock basis over `num_sites` sites holding at most `max_bosons`.
///
/// Immutable after construction. Every state's occupied sites are cached so
/// that operator assembly never scans all `L` sites per state.
#[derive(Clone, Debug)]
pub struct FockBasis {
    num_sites: usize,
    max_bosons: usize,
    /// `counts[l * (N + 1) + n]` for `l = 0..=L`, `n = 0..=N`.
    counts: Vec<u64>,
    /// `N + 2` entries; the last is the total dimension.
    offsets: Vec<usize>,
    /// Occupied sites per state, descending, padded to `N` entries.
    sites: Vec<u32>,
}

const PAD: u32 = u32::MAX;

impl FockBasis {
    pub fn new(num_sites: usize, max_bosons: usize) -> Result<Self> {
        let total = dimension(num_sites, max_bosons, DimensionMode::DirectSum)?;
        let width = max_bosons.max(1) as u128;
        if total > MAX_BASIS_DIM as u128 || total * width > (1u128 << 28) {
            return Err(Error::TooLarge {
                what: "Fock basis",
                dim: usize::try_from(total).unwrap_or(usize::MAX),
                limit: MAX_BASIS_DIM,
            });
        }
        if num_sites > u32::MAX as usize - 1 {
            return Err(Error::InvalidParameter("too many sites".into()));
        }
        let stride = max_bosons + 1;
        let mut counts = vec![0u64; (num_sites + 1) * stride];
        for l in 0..=num_sites {
            for n in 0..=max_bosons {
                // Recursion: count(l, n) = sum_{j<=n} count(l - 1, j).
                counts[l * stride + n] = if l == 0 {
                    u64::from(n == 0)
                } else if n == 0 {
                    1
                } else {
                    counts[l * stride + n - 1] + counts[(l - 1) * stride + n]
                };
            }
        }
        let mut offsets = Vec::with_capacity(max_bosons + 2);
        let mut acc = 0usize;
        for n in 0..=max_bosons {
            offsets.push(acc);
            acc += counts[num_sites * stride + n] as usize;
        }
        offsets.push(acc);

        let mut basis = FockBasis {
            num_sites,
            max_bosons,
            counts,
            offsets,
            sites: Vec::new(),
        };
        let width = max_bosons.max(1);
        let mut sites = vec![PAD; acc * width];
        let mut scratch = Vec::with_capacity(max_bosons);
        for n in 0..=max_bosons {
            for label in 1..=basis.sector_dim(n) as u64 {
                basis.unrank_sites(n, label - 1, &mut scratch);
                let g = basis.offsets[n] + (label - 1) as usize;
                sites[g * width..g * width + n].copy_from_slice(&scratch);
            }
        }
        basis.sites = sites;
        Ok(basis)
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn max_bosons(&self) -> usize {
        self.max_bosons
    }

    /// Total direct-sum dimension.
    pub fn dim(&self) -> usize {
        self.offsets[self.max_bosons + 1]
    }

    /// `count(l, n)` from the cumulative table.
    pub fn count(&self, l: usize, n: usize) -> u64 {
        self.counts[l * (self.max_bosons + 1) + n]
    }

    pub fn sector_dim(&self, n: usize) -> usize {
        self.offsets[n + 1] - self.offsets[n]
    }

    pub fn sector_offset(&self, n: usize) -> usize {
        self.offsets[n]
    }

    pub fn sector_range(&self, n: usize) -> std::ops::Range<usize> {
        self.offsets[n]..self.offsets[n + 1]
    }

    /// Number of bosons held by the state at a global index.
    pub fn bosons_at(&self, global: usize) -> usize {
        // offsets is sorted; the sector is the last offset <= global.
        self.offsets.partition_point(|&o| o <= global) - 1
    }

    /// Occupied sites of a state, descending, with multiplicity.
    pub fn sites_of(&self, global: usize) -> &[u32] {
        let width = self.max_bosons.max(1);
        let n = self.bosons_at(global);
        &self.sites[global * width..global * width + n]
    }

    /// Boson count on one site of the state at `global`.
    pub fn count_at(&self, global: usize, site: usize) -> u32 {
        self.sites_of(global)
            .iter()
            .filter(|&&s| s as usize == site)
            .count() as u32
    }

    pub fn occupancy_at(&self, global: usize) -> FockOccupancy {
        let mut counts = vec![0u32; self.num_sites];
        for &s in self.sites_of(global) {
            counts[s as usize] += 1;
        }
        FockOccupancy(counts)
    }

    /// Global index of the state whose occupied sites (descending) are given.
    pub fn rank_sites(&self, sites_desc: &[u32]) -> usize {
        let n = sites_desc.len();
        let l = self.num_sites;
        let mut r = 0usize;
        for (i, &s) in sites_desc.iter().enumerate() {
            r += self.count(l - 1 - s as usize, i + 1) as usize;
        }
        self.offsets[n] + r
    }

    pub fn index_of(&self, occ: &FockOccupancy) -> Result<BasisIndex> {
        if occ.num_sites() != self.num_sites {
            return Err(Error::OccupancyLength {
                expected: self.num_sites,
                got: occ.num_sites(),
            });
        }
        let n = occ.total();
        if n > self.max_bosons {
            return Err(Error::TooManyBosons {
                cap: self.max_bosons,
                got: n,
            });
        }
        let mut desc = Vec::with_capacity(n);
        for (site, &k) in occ.counts().iter().enumerate().rev() {
            for _ in 0..k {
                desc.push(site as u32);
            }
        }
        let global = self.rank_sites(&desc);
        Ok(BasisIndex {
            bosons: n,
            label: (global - self.offsets[n] + 1) as u64,
            global,
        })
    }

    pub fn occupancy_of(&self, bosons: usize, label: u64) -> Result<FockOccupancy> {
        if bosons > self.max_bosons {
            return Err(Error::TooManyBosons {
                cap: self.max_bosons,
                got: bosons,
            });
        }
        let max = self.sector_dim(bosons) as u64;
        if label == 0 || label > max {
            return Err(Error::LabelOutOfRange { label, max, bosons });
        }
        Ok(self.occupancy_at(self.offsets[bosons] + (label - 1) as usize))
    }

    /// All states of one sector in label order.
    pub fn enumerate(&self, bosons: usize) -> Result<Vec<FockOccupancy>> {
        if bosons > self.max_bosons {
            return Err(Error::TooManyBosons {
                cap: self.max_bosons,
                got: bosons,
            });
        }
        Ok(self.sector_range(bosons).map(|g| self.occupancy_at(g)).collect())
    }

    /// Greedy inverse of the labeling: pick the largest admissible term first.
    fn unrank_sites(&self, n: usize, mut rank: u64, out: &mut Vec<u32>) {
        out.clear();
        out.resize(n, 0);
        let l = self.num_sites;
        let mut upper = l - 1;
        for i in (1..=n).rev() {
            let mut j = upper;
            while self.count(j, i) > rank {
                j -= 1;
            }
            rank -= self.count(j, i);
            out[i - 1] = (l - 1 - j) as u32;
            upper = j;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: every occupancy vector with the given total, no labeling involved.
    fn brute_force(l: usize, n: u32) -> Vec<Vec<u32>> {
        fn rec(l: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if cur.len() == l - 1 {
                cur.push(left);
                out.push(cur.clone());
                cur.pop();
                return;
            }
            for k in 0..=left {
                cur.push(k);
                rec(l, left - k, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(l, n, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn dimension_examples() {
        assert_eq!(dimension(100, 2, DimensionMode::Sector).unwrap(), 5050);
        assert_eq!(dimension(100, 2, DimensionMode::DirectSum).unwrap(), 5151);
        assert_eq!(dimension(17, 0, DimensionMode::Sector).unwrap(), 1);
        let sector = brute_force(8, 4).len() as u128;
        let direct: u128 = (0..=4).map(|n| brute_force(8, n).len() as u128).sum();
        assert_eq!(sector, 330);
        assert_eq!(direct, 495);
        assert_eq!(dimension(8, 4, DimensionMode::Sector).unwrap(), sector);
        assert_eq!(dimension(8, 4, DimensionMode::DirectSum).unwrap(), direct);
    }

    #[test]
    fn dimension_overflow_is_reported() {
        assert!(matches!(
            dimension(1_000_000, 1_000_000, DimensionMode::Sector),
            Err(Error::Overflow(_))
        ));
        assert!(dimension(0, 1, DimensionMode::Sector).is_err());
    }

    #[test]
    fn worked_example_label() {
        let basis = FockBasis::new(8, 4).unwrap();
        let occ = FockOccupancy::new(vec![0, 0, 2, 0, 1, 0, 0, 1]);
        let idx = basis.index_of(&occ).unwrap();
        assert_eq!(idx.label, 112);
        assert_eq!(idx.bosons, 4);
        assert_eq!(idx.global, basis.sector_offset(4) + 111);
        assert_eq!(basis.occupancy_of(4, 112).unwrap(), occ);
    }

    #[test]
    fn vacuum_has_label_one() {
        for l in 1..6 {
            let basis = FockBasis::new(l, 2).unwrap();
            let idx = basis.index_of(&FockOccupancy::vacuum(l)).unwrap();
            assert_eq!((idx.label, idx.global), (1, 0));
        }
        let basis = FockBasis::new(5, 0).unwrap();
        assert_eq!(basis.occupancy_of(0, 1).unwrap().counts(), &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn single_boson_labels_run_backwards() {
        let basis = FockBasis::new(8, 1).unwrap();
        for site in 0..8 {
            let occ = FockOccupancy::from_pairs(8, &[(site, 1)]).unwrap();
            // 1-based site number l = site + 1 gets label 1 + (L - l).
            assert_eq!(basis.index_of(&occ).unwrap().label, (8 - site) as u64);
        }
    }

    #[test]
    fn small_sector_is_a_bijection() {
        let basis = FockBasis::new(3, 2).unwrap();
        let listed = basis.enumerate(2).unwrap();
        assert_eq!(listed.len(), 6);
        let mut got: Vec<Vec<u32>> = listed.iter().map(|o| o.0.clone()).collect();
        got.sort();
        let mut expected = brute_force(3, 2);
        expected.sort();
        assert_eq!(got, expected);
        for (j, occ) in listed.iter().enumerate() {
            assert_eq!(basis.index_of(occ).unwrap().label, j as u64 + 1);
        }
    }

    #[test]
    fn enumerate_examples() {
        let basis = FockBasis::new(2, 2).unwrap();
        assert_eq!(basis.enumerate(2).unwrap().len(), 3);
        let basis = FockBasis::new(1, 5).unwrap();
        assert_eq!(basis.enumerate(5).unwrap(), vec![FockOccupancy::new(vec![5])]);
        let basis = FockBasis::new(8, 4).unwrap();
        assert_eq!(basis.enumerate(4).unwrap().len(), 330);
    }

    #[test]
    fn round_trip_all_small_bases() {
        for l in 1..=10 {
            for cap in 0..=4 {
                let basis = FockBasis::new(l, cap).unwrap();
                for n in 0..=cap {
                    let all = brute_force(l, n as u32);
                    assert_eq!(all.len(), basis.sector_dim(n));
                    let mut seen = vec![false; all.len()];
                    for counts in all {
                        let occ = FockOccupancy::new(counts);
                        let idx = basis.index_of(&occ).unwrap();
                        let slot = (idx.label - 1) as usize;
                        assert!(!seen[slot], "label {} reused", idx.label);
                        seen[slot] = true;
                        assert_eq!(basis.occupancy_of(n, idx.label).unwrap(), occ);
                    }
                }
            }
        }
    }

    #[test]
    fn recursion_and_closed_form_agree() {
        let basis = FockBasis::new(9, 5).unwrap();
        for l in 0..=9usize {
            for n in 0..=5usize {
                let closed = multiset_count(l as u128, n as u128).unwrap() as u64;
                assert_eq!(basis.count(l, n), closed, "l={l} n={n}");
                if l >= 1 {
                    let sum: u64 = (0..=n).map(|j| basis.count(l - 1, j)).sum();
                    assert_eq!(basis.count(l, n), sum);
                }
            }
        }
    }

    #[test]
    fn offsets_increase_and_bosons_lookup() {
        let basis = FockBasis::new(4, 3).unwrap();
        assert_eq!(basis.sector_offset(0), 0);
        for n in 0..3 {
            assert!(basis.sector_offset(n + 1) > basis.sector_offset(n));
        }
        for g in 0..basis.dim() {
            assert_eq!(basis.occupancy_at(g).total(), basis.bosons_at(g));
        }
    }

    #[test]
    fn errors() {
        let basis = FockBasis::new(3, 2).unwrap();
        assert!(matches!(
            basis.index_of(&FockOccupancy::new(vec![1, 1])),
            Err(Error::OccupancyLength { .. })
        ));
        assert!(matches!(
            basis.index_of(&FockOccupancy::new(vec![2, 1, 0])),
            Err(Error::TooManyBosons { .. })
        ));
        assert!(matches!(
            basis.occupancy_of(2, 7),
            Err(Error::LabelOutOfRange { .. })
        ));
        assert!(basis.occupancy_of(2, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn direct_sum_compresses(l in 1usize..12, n in 1usize..6) {
            let d = dimension(l, n, DimensionMode::DirectSum).unwrap();
            let full = (n as u128 + 1).pow(l as u32);
            proptest::prop_assert!(d <= full);
            proptest::prop_assert_eq!(d == full, l == 1);
        }
    }
}
