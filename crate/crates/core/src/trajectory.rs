//! Time series of snapshots produced by the emulator or the exact propagator.

use std::fmt::Write as _;

use crate::linalg::C64;

/// Completed iterations, cycles within the current iteration, and passes within the
/// current cycle. Ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TimeTag {
    pub iteration: u64,
    pub cycle: u32,
    pub pass: u32,
}

impl TimeTag {
    pub fn iteration(t: u64) -> Self {
        TimeTag {
            iteration: t,
            cycle: 0,
            pass: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Emulated,
    Exact,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub tag: TimeTag,
    /// Elapsed Hamiltonian time (one iteration = one unit).
    pub time: f64,
    pub occupations: Vec<f64>,
    pub state: Option<Vec<C64>>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub provenance: Provenance,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn new(provenance: Provenance) -> Self {
        Trajectory {
            provenance,
            snapshots: Vec::new(),
        }
    }

    pub fn push(&mut self, snap: Snapshot) {
        if let Some(last) = self.snapshots.last() {
            debug_assert!(snap.tag > last.tag, "time tags must increase");
        }
        self.snapshots.push(snap);
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    /// Occupation table with a header line.
    pub fn occupations_csv(&self) -> String {
        let bins = self.snapshots.first().map_or(0, |s| s.occupations.len());
        let mut out = String::from("iteration,cycle,pass,time");
        for b in 0..bins {
            let _ = write!(out, ",bin_{b}");
        }
        out.push('\n');
        for s in &self.snapshots {
            let _ = write!(
                out,
                "{},{},{},{}",
                s.tag.iteration, s.tag.cycle, s.tag.pass, s.time
            );
            for x in &s.occupations {
                let _ = write!(out, ",{x:.12e}");
            }
            out.push('\n');
        }
        out
    }

    /// Amplitude dump: per snapshot a `# iteration cycle pass` line, then `index re im` rows.
    pub fn amplitudes_text(&self) -> String {
        let mut out = String::new();
        for s in &self.snapshots {
            if let Some(state) = &s.state {
                let _ = writeln!(out, "# {} {} {}", s.tag.iteration, s.tag.cycle, s.tag.pass);
                for (i, z) in state.iter().enumerate() {
                    let _ = writeln!(out, "{i} {:.17e} {:.17e}", z.re, z.im);
                }
            }
        }
        out
    }
}
