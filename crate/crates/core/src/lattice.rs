//! Lattice graphs: sites joined by edges carrying a coupling and a hopping phase.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Largest hypercube dimension the builder accepts.
pub const MAX_HYPERCUBE_DIM: usize = 10;

/// Undirected edge stored with `m < n`; `alpha` is the phase on the `m -> n` orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub m: usize,
    pub n: usize,
    pub kappa: f64,
    pub alpha: f64,
}

impl Edge {
    /// Phase seen when hopping onto `to` from `from`.
    pub fn phase_toward(&self, to: usize) -> f64 {
        if to == self.m {
            self.alpha
        } else {
            -self.alpha
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGraph {
    num_sites: usize,
    edges: Vec<Edge>,
    pub metadata: BTreeMap<String, Value>,
}

impl LatticeGraph {
    pub fn new(num_sites: usize) -> Result<Self> {
        if num_sites == 0 {
            return Err(Error::InvalidLattice("a graph needs at least one site".into()));
        }
        Ok(LatticeGraph {
            num_sites,
            edges: Vec::new(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    /// Edges in insertion order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges sorted by `(m, n)`.
    pub fn canonical_edges(&self) -> Vec<Edge> {
        let mut e = self.edges.clone();
        e.sort_by_key(|e| (e.m, e.n));
        e
    }

    pub fn find_edge(&self, a: usize, b: usize) -> Option<&Edge> {
        let (m, n) = (a.min(b), a.max(b));
        self.edges.iter().find(|e| e.m == m && e.n == n)
    }

    /// Adds the edge `a -- b` whose phase is `alpha` on the `a -> b` orientation.
    pub fn add_edge(&mut self, a: usize, b: usize, kappa: f64, alpha: f64) -> Result<()> {
        for s in [a, b] {
            if s >= self.num_sites {
                return Err(Error::InvalidLattice(format!(
                    "site {s} out of range for {} sites",
                    self.num_sites
                )));
            }
        }
        if a == b {
            return Err(Error::InvalidLattice(format!("self-loop on site {a}")));
        }
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::InvalidLattice(format!(
                "edge ({a}, {b}): kappa must be finite and non-negative, got {kappa}"
            )));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidLattice(format!("edge ({a}, {b}): alpha is not finite")));
        }
        if self.find_edge(a, b).is_some() {
            return Err(Error::InvalidLattice(format!("duplicate edge ({a}, {b})")));
        }
        let (m, n, alpha) = if a < b { (a, b, alpha) } else { (b, a, -alpha) };
        self.edges.push(Edge { m, n, kappa, alpha });
        Ok(())
    }

    /// Copy with every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.kappa *= factor;
        }
        g
    }

    pub fn with_alphas(&self, alphas: &[f64]) -> Result<Self> {
        if alphas.len() != self.edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} phases for {} edges",
                alphas.len(),
                self.edges.len()
            )));
        }
        let mut g = self.clone();
        for (e, &a) in g.edges.iter_mut().zip(alphas) {
            e.alpha = a;
        }
        Ok(g)
    }

    /// Neighbors of every site.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_sites];
        for e in &self.edges {
            adj[e.m].push(e.n);
            adj[e.n].push(e.m);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; self.num_sites];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(s) = queue.pop_front() {
            for &t in &adj[s] {
                if !seen[t] {
                    seen[t] = true;
                    count += 1;
                    queue.push_back(t);
                }
            }
        }
        count == self.num_sites
    }

    /// Canonical document: fixed key order, edges sorted, trailing newline.
    pub fn to_document(&self) -> String {
        let mut root = Map::new();
        root.insert("num_sites".into(), Value::from(self.num_sites));
        let edges = self
            .canonical_edges()
            .iter()
            .map(|e| {
                let mut o = Map::new();
                o.insert("m".into(), Value::from(e.m));
                o.insert("n".into(), Value::from(e.n));
                o.insert("kappa".into(), Value::from(e.kappa));
                o.insert("alpha".into(), Value::from(e.alpha));
                Value::Object(o)
            })
            .collect();
        root.insert("edges".into(), Value::Array(edges));
        let meta: Map<String, Value> = self.metadata.clone().into_iter().collect();
        root.insert("metadata".into(), Value::Object(meta));
        // serde_json sorts object keys, so the layout is already canonical.
        let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_document(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| Error::GraphDocument {
            context: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        Self::from_value(&root)
    }

    pub fn from_value(root: &Value) -> Result<Self> {
        let doc_err = |context: &str, message: String| Error::GraphDocument {
            context: context.to_string(),
            message,
        };
        let obj = root
            .as_object()
            .ok_or_else(|| doc_err("$", "expected an object".into()))?;
        for key in obj.keys() {
            if !matches!(key.as_str(), "num_sites" | "edges" | "metadata") {
                return Err(doc_err(&format!("$.{key}"), "unknown field".into()));
            }
        }
        let num_sites = obj
            .get("num_sites")
            .ok_or_else(|| doc_err("$.num_sites", "missing field".into()))?
            .as_u64()
            .filter(|&n| n >= 1)
            .ok_or_else(|| doc_err("$.num_sites", "expected a positive integer".into()))?
            as usize;
        let mut graph = LatticeGraph::new(num_sites)?;
        let edges = match obj.get("edges") {
            None => &[][..],
            Some(v) => v
                .as_array()
                .ok_or_else(|| doc_err("$.edges", "expected an array".into()))?
                .as_slice(),
        };
        for (i, item) in edges.iter().enumerate() {
            let ctx = format!("$.edges[{i}]");
            let e = item
                .as_object()
                .ok_or_else(|| doc_err(&ctx, "expected an object".into()))?;
            for key in e.keys() {
                if !matches!(key.as_str(), "m" | "n" | "kappa" | "alpha") {
                    return Err(doc_err(&format!("{ctx}.{key}"), "unknown field".into()));
                }
            }
            let site = |k: &str| -> Result<usize> {
                e.get(k)
                    .and_then(Value::as_u64)
                    .map(|v| v as usize)
                    .ok_or_else(|| doc_err(&format!("{ctx}.{k}"), "expected a site index".into()))
            };
            let (m, n) = (site("m")?, site("n")?);
            let kappa = e
                .get("kappa")
                .and_then(Value::as_f64)
                .ok_or_else(|| doc_err(&format!("{ctx}.kappa"), "expected a number".into()))?;
            let alpha = match e.get("alpha") {
                None => 0.0,
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| doc_err(&format!("{ctx}.alpha"), "expected a number".into()))?,
            };
            graph
                .add_edge(m, n, kappa, alpha)
                .map_err(|err| doc_err(&ctx, err.to_string()))?;
        }
        if let Some(meta) = obj.get("metadata") {
            let meta = meta
                .as_object()
                .ok_or_else(|| doc_err("$.metadata", "expected an object".into()))?;
            graph.metadata = meta.clone().into_iter().collect();
        }
        Ok(graph)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::GraphDocument {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_document(&text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatticeKind {
    Chain,
    Grid2d,
    HallLadder,
    Hypercube,
}

impl FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "chain" => Ok(LatticeKind::Chain),
            "grid2d" | "grid" => Ok(LatticeKind::Grid2d),
            "hall_ladder" | "ladder" => Ok(LatticeKind::HallLadder),
            "hypercube" => Ok(LatticeKind::Hypercube),
            other => Err(Error::InvalidLattice(format!("unknown lattice kind '{other}'"))),
        }
    }
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatticeKind::Chain => "chain",
            LatticeKind::Grid2d => "grid2d",
            LatticeKind::HallLadder => "hall_ladder",
            LatticeKind::Hypercube => "hypercube",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatticeSpec {
    Chain { sites: usize },
    Grid2d { rows: usize, cols: usize },
    HallLadder { rungs: usize },
    Hypercube { dim: usize },
}

impl LatticeSpec {
    pub fn kind(&self) -> LatticeKind {
        match self {
            LatticeSpec::Chain { .. } => LatticeKind::Chain,
            LatticeSpec::Grid2d { .. } => LatticeKind::Grid2d,
            LatticeSpec::HallLadder { .. } => LatticeKind::HallLadder,
            LatticeSpec::Hypercube { .. } => LatticeKind::Hypercube,
        }
    }
}

/// Ladder site index for rung `r` on the left (`leg = 0`) or right leg.
pub fn ladder_site(rung: usize, leg: usize) -> usize {
    2 * rung + leg
}

pub fn build_lattice(spec: LatticeSpec, kappa: f64, alpha: f64, periodic: bool) -> Result<LatticeGraph> {
    let wrap_check = |len: usize, what: &str| {
        if periodic && len < 3 && len != 1 {
            Err(Error::InvalidLattice(format!(
                "periodic {what} needs at least 3 sites along the wrapped direction, got {len}"
            )))
        } else {
            Ok(())
        }
    };
    let mut graph = match spec {
        LatticeSpec::Chain { sites } => {
            if sites == 0 {
                return Err(Error::InvalidLattice("chain needs at least one site".into()));
            }
            wrap_check(sites, "chain")?;
            let mut g = LatticeGraph::new(sites)?;
            for i in 0..sites.saturating_sub(1) {
                g.add_edge(i, i + 1, kappa, alpha)?;
            }
            if periodic && sites >= 3 {
                g.add_edge(sites - 1, 0, kappa, alpha)?;
            }
            g.metadata.insert("sites".into(), Value::from(sites));
            g
        }
        LatticeSpec::Grid2d { rows, cols } => {
            if rows == 0 || cols == 0 {
                return Err(Error::InvalidLattice("grid needs positive rows and cols".into()));
            }
            wrap_check(rows, "grid")?;
            wrap_check(cols, "grid")?;
            let mut g = LatticeGraph::new(rows * cols)?;
            let at = |r: usize, c: usize| r * cols + c;
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        g.add_edge(at(r, c), at(r, c + 1), kappa, 0.0)?;
                    } else if periodic && cols >= 3 {
                        g.add_edge(at(r, c), at(r, 0), kappa, 0.0)?;
                    }
                    if r + 1 < rows {
                        g.add_edge(at(r, c), at(r + 1, c), kappa, 0.0)?;
                    } else if periodic && rows >= 3 {
                        g.add_edge(at(r, c), at(0, c), kappa, 0.0)?;
                    }
                }
            }
            g.metadata.insert("rows".into(), Value::from(rows));
            g.metadata.insert("cols".into(), Value::from(cols));
            g
        }
        LatticeSpec::HallLadder { rungs } => {
            if rungs == 0 {
                return Err(Error::InvalidLattice("ladder needs at least one rung".into()));
            }
            wrap_check(rungs, "ladder")?;
            let mut g = LatticeGraph::new(2 * rungs)?;
            for r in 0..rungs {
                g.add_edge(ladder_site(r, 0), ladder_site(r, 1), kappa, 0.0)?;
                let next = if r + 1 < rungs {
                    Some(r + 1)
                } else if periodic && rungs >= 3 {
                    Some(0)
                } else {
                    None
                };
                if let Some(s) = next {
                    // Phase convention: `add_edge(a, b, .., alpha)` puts alpha on a -> b,
                    // and the hopping term e^{i alpha} a_a^dagger a_b moves a boson from b to a.
                    g.add_edge(ladder_site(r, 0), ladder_site(s, 0), kappa, alpha / 2.0)?;
                    g.add_edge(ladder_site(r, 1), ladder_site(s, 1), kappa, -alpha / 2.0)?;
                }
            }
            g.metadata.insert("rungs".into(), Value::from(rungs));
            g.metadata.insert(
                "legs".into(),
                Value::from("even sites form the left leg, odd sites the right leg"),
            );
            g
        }
        LatticeSpec::Hypercube { dim } => {
            if dim > MAX_HYPERCUBE_DIM {
                return Err(Error::InvalidLattice(format!(
                    "hypercube dimension {dim} exceeds the limit {MAX_HYPERCUBE_DIM}"
                )));
            }
            let sites = 1usize << dim;
            let mut g = LatticeGraph::new(sites)?;
            for v in 0..sites {
                for b in 0..dim {
                    let w = v ^ (1 << b);
                    if v < w {
                        g.add_edge(v, w, kappa, 0.0)?;
                    }
                }
            }
            g.metadata.insert("dim".into(), Value::from(dim));
            g
        }
    };
    graph
        .metadata
        .insert("kind".into(), Value::from(spec.kind().to_string()));
    graph.metadata.insert("periodic".into(), Value::from(periodic));
    Ok(graph)
}

/// Default phase used by the chiral ladder demos.
pub const HALL_ALPHA: f64 = 2.0 * PI / 3.0;

/// Edge set as a sorted set of unordered pairs, handy for comparisons.
pub fn edge_pairs(graph: &LatticeGraph) -> BTreeSet<(usize, usize)> {
    graph.edges().iter().map(|e| (e.m, e.n)).collect()
}
