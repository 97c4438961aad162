//! Compiles a lattice graph into the clock-tick sequence of MZI settings for one
//! emulator iteration.
//!
//! Bin `b` sits at the MZI on every tick `t` with `t % L == b`; the register loop is
//! one bin long and meets the MZI on every tick. Each edge `(m, n)` takes three
//! non-idle passes: swap `m` into the register, interact the register with `n`, and
//! swap the register back into `m` one round trip later.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::lattice::{Edge, LatticeGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    SwapIn,
    Interact,
    SwapOut,
    Idle,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::SwapIn => "swap_in",
            Role::Interact => "interact",
            Role::SwapOut => "swap_out",
            Role::Idle => "idle",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MziSetting {
    pub tick: u64,
    /// Storage bin at the MZI on this tick.
    pub bin: usize,
    pub theta: f64,
    pub phi: f64,
    pub role: Role,
    /// Edge being built, absent for idle ticks.
    pub edge: Option<(usize, usize)>,
    /// Clock cycle (0-based) inside the iteration.
    pub cycle: u32,
}

impl MziSetting {
    /// Passes are applied in the order listed, so the three-pass product
    /// `swap_out * interact * swap_in` equals `T_mn(kappa, alpha)`.
    pub fn swap_in() -> (f64, f64) {
        (PI, -FRAC_PI_2)
    }

    pub fn swap_out() -> (f64, f64) {
        (PI, FRAC_PI_2)
    }
}

/// Phase change applied when compiling one iteration.
#[derive(Clone, Debug, PartialEq)]
pub enum PhaseOverride {
    /// Added to every edge phase.
    Additive(f64),
    /// Replaces the phase of the listed edges; keys are `(m, n)` with `m < n`.
    PerEdge(BTreeMap<(usize, usize), f64>),
}

impl PhaseOverride {
    pub fn apply(&self, graph: &LatticeGraph) -> Result<LatticeGraph> {
        let alphas: Vec<f64> = match self {
            PhaseOverride::Additive(d) => graph.edges().iter().map(|e| e.alpha + d).collect(),
            PhaseOverride::PerEdge(map) => {
                for &(m, n) in map.keys() {
                    if graph.find_edge(m, n).is_none() {
                        return Err(Error::Schedule(format!(
                            "phase override names missing edge ({m}, {n})"
                        )));
                    }
                }
                graph
                    .edges()
                    .iter()
                    .map(|e| *map.get(&(e.m, e.n)).unwrap_or(&e.alpha))
                    .collect()
            }
        };
        graph.with_alphas(&alphas)
    }
}

/// Iteration-indexed phase table; the entry with the largest key not above the
/// current iteration is in force.
pub type AlphaSchedule = BTreeMap<u64, PhaseOverride>;

pub fn active_override(table: &AlphaSchedule, iteration: u64) -> Option<(u64, &PhaseOverride)> {
    table.range(..=iteration).next_back().map(|(k, v)| (*k, v))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PassSchedule {
    pub num_bins: usize,
    pub settings: Vec<MziSetting>,
    /// Edges in the order they are built, with the couplings and phases compiled in.
    pub edges: Vec<Edge>,
    pub cycles_per_iteration: usize,
    pub ticks_per_iteration: u64,
}

impl PassSchedule {
    /// Storage bins plus the register.
    pub fn bins_per_cycle(&self) -> usize {
        self.num_bins + 1
    }

    pub fn register(&self) -> usize {
        self.num_bins
    }

    pub fn active(&self) -> impl Iterator<Item = &MziSetting> {
        self.settings.iter().filter(|s| s.role != Role::Idle)
    }

    /// Lines of `tick theta phi role edge_m edge_n`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in &self.settings {
            let (m, n) = match s.edge {
                Some((m, n)) => (m.to_string(), n.to_string()),
                None => ("-".into(), "-".into()),
            };
            let _ = writeln!(out, "{} {} {} {} {m} {n}", s.tick, s.theta, s.phi, s.role);
        }
        out
    }

    /// Structural checks: matched swap pairs with one interaction in between.
    pub fn validate(&self) -> Result<()> {
        let mut open: Option<(usize, usize)> = None;
        let mut interacted = false;
        for s in &self.settings {
            match s.role {
                Role::Idle => {
                    if s.theta != 0.0 {
                        return Err(Error::Schedule(format!("idle tick {} has theta != 0", s.tick)));
                    }
                }
                Role::SwapIn => {
                    if open.is_some() {
                        return Err(Error::Schedule(format!("nested swap_in at tick {}", s.tick)));
                    }
                    open = s.edge;
                    interacted = false;
                }
                Role::Interact => {
                    if open.is_none() || open != s.edge || interacted {
                        return Err(Error::Schedule(format!("stray interact at tick {}", s.tick)));
                    }
                    interacted = true;
                }
                Role::SwapOut => {
                    if open != s.edge || !interacted {
                        return Err(Error::Schedule(format!("unmatched swap_out at tick {}", s.tick)));
                    }
                    open = None;
                }
            }
        }
        if open.is_some() {
            return Err(Error::Schedule("register left occupied at end of iteration".into()));
        }
        Ok(())
    }
}

pub fn compile_schedule(graph: &LatticeGraph, phase_override: Option<&PhaseOverride>) -> Result<PassSchedule> {
    let graph = match phase_override {
        Some(o) => o.apply(graph)?,
        None => graph.clone(),
    };
    let l = graph.num_sites() as u64;
    let edges = graph.canonical_edges();
    let mut settings = Vec::new();
    let idle = |tick: u64, cycle: u32| MziSetting {
        tick,
        bin: (tick % l) as usize,
        theta: 0.0,
        phi: 0.0,
        role: Role::Idle,
        edge: None,
        cycle,
    };
    if edges.is_empty() {
        settings.extend((0..l).map(|t| idle(t, 0)));
        return Ok(PassSchedule {
            num_bins: l as usize,
            settings,
            edges,
            cycles_per_iteration: 1,
            ticks_per_iteration: l,
        });
    }
    let mut cursor = 0u64;
    for (c, e) in edges.iter().enumerate() {
        let c = c as u32;
        let (m, n) = (e.m as u64, e.n as u64);
        let t_in = cursor + (m + l - cursor % l) % l;
        let t_int = t_in + (n + l - m) % l;
        let t_out = t_in + l;
        for t in cursor..=t_out {
            let (role, (theta, phi)) = if t == t_in {
                (Role::SwapIn, MziSetting::swap_in())
            } else if t == t_int {
                (Role::Interact, (2.0 * e.kappa, e.alpha))
            } else if t == t_out {
                (Role::SwapOut, MziSetting::swap_out())
            } else {
                settings.push(idle(t, c));
                continue;
            };
            settings.push(MziSetting {
                tick: t,
                bin: (t % l) as usize,
                theta,
                phi,
                role,
                edge: Some((e.m, e.n)),
                cycle: c,
            });
        }
        cursor = t_out + 1;
    }
    Ok(PassSchedule {
        num_bins: l as usize,
        settings,
        cycles_per_iteration: edges.len(),
        edges,
        ticks_per_iteration: cursor,
    })
}
