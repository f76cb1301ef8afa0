//! Undirected communication graphs and the built-in topology generators.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::CounterRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("invalid generator spec `{0}`: {1}")]
    BadSpec(String, String),
    #[error("could not draw a connected G({n}, {q}) graph in {attempts} attempts")]
    NoConnectedDraw { n: usize, q: f64, attempts: usize },
}

/// Simple undirected graph on nodes `0..n`.
///
/// Edges are stored once as `(a, b)` with `a < b`, sorted. Neighbor lists are
/// sorted ascending; every fixed-order summation in the crate follows them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    edge_ids: Vec<Option<u32>>,
}

/// On-disk representation: `{"n": 3, "edges": [[0, 1], [1, 2]]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut list = Vec::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::NodeOutOfRange(i, j, n));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            list.push((i.min(j), i.max(j)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge(w[0].0, w[0].1));
        }
        let mut neighbors = vec![Vec::new(); n];
        let mut edge_ids = vec![None; n * n];
        for (id, &(a, b)) in list.iter().enumerate() {
            neighbors[a].push(b);
            neighbors[b].push(a);
            edge_ids[a * n + b] = Some(id as u32);
            edge_ids[b * n + a] = Some(id as u32);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Self {
            n,
            edges: list,
            neighbors,
            edge_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Undirected edges `(a, b)` with `a < b`, in edge-id order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    /// Largest degree, Δ.
    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Id of the undirected edge `{a, b}`, if present.
    #[inline]
    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_ids[a * self.n + b].map(|e| e as usize)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge_id(a, b).is_some()
    }

    /// Dense 0/1 adjacency matrix in row-major order.
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0u8; self.n]; self.n];
        for &(i, j) in &self.edges {
            a[i][j] = 1;
            a[j][i] = 1;
        }
        a
    }

    /// BFS hop distances from `src`; `None` for unreachable nodes.
    pub fn distances_from(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap();
            for &u in &self.neighbors[v] {
                if dist[u].is_none() {
                    dist[u] = Some(d + 1);
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.distances_from(0).iter().all(Option::is_some)
    }

    /// Largest shortest-path distance, or `None` if disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for v in 0..self.n {
            for d in self.distances_from(v) {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            n: self.n,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }

    pub fn from_file(file: &GraphFile) -> Result<Self, GraphError> {
        Self::new(file.n, file.edges.iter().map(|e| (e[0], e[1])))
    }

    pub fn from_json(text: &str) -> Result<Self, GraphLoadError> {
        let file: GraphFile = serde_json::from_str(text)?;
        Ok(Self::from_file(&file)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("graph serializes")
    }

    // Generators ---------------------------------------------------------

    pub fn path(n: usize) -> Result<Self, GraphError> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    /// Cycle on `n` nodes; `n = 2` degenerates to a single edge.
    pub fn cycle(n: usize) -> Result<Self, GraphError> {
        if n < 3 {
            return Self::path(n);
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    /// Star with node 0 at the center.
    pub fn star(n: usize) -> Result<Self, GraphError> {
        Self::new(n, (1..n).map(|i| (0, i)))
    }

    /// `rows x cols` grid, node id `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::new(rows * cols, edges)
    }

    /// Erdős–Rényi G(n, q), redrawn until connected.
    pub fn erdos_renyi(n: usize, q: f64, seed: u64) -> Result<Self, GraphError> {
        const MAX_ATTEMPTS: usize = 10_000;
        if !(0.0..=1.0).contains(&q) {
            return Err(GraphError::BadSpec(format!("er:{n}:{q}"), "q must lie in [0, 1]".into()));
        }
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = CounterRng::new(seed, attempt as u64);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.next_f64() < q {
                        edges.push((i, j));
                    }
                }
            }
            let g = Self::new(n, edges)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(GraphError::NoConnectedDraw {
            n,
            q,
            attempts: MAX_ATTEMPTS,
        })
    }
}

impl TryFrom<GraphFile> for Graph {
    type Error = GraphError;

    fn try_from(file: GraphFile) -> Result<Self, Self::Error> {
        Self::from_file(&file)
    }
}

impl From<Graph> for GraphFile {
    fn from(g: Graph) -> Self {
        g.to_file()
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Graph(n={}, edges={:?})", self.n, self.edges)
    }
}

#[derive(Debug, Error)]
pub enum GraphLoadError {
    #[error("malformed graph JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Named generator with parameters, e.g. `path:5`, `grid:3x4`, `er:8:0.4:7`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Path { n: usize },
    Cycle { n: usize },
    Complete { n: usize },
    Star { n: usize },
    Grid { rows: usize, cols: usize },
    ErdosRenyi { n: usize, q: f64, seed: u64 },
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<Graph, GraphError> {
        match *self {
            Self::Path { n } => Graph::path(n),
            Self::Cycle { n } => Graph::cycle(n),
            Self::Complete { n } => Graph::complete(n),
            Self::Star { n } => Graph::star(n),
            Self::Grid { rows, cols } => Graph::grid(rows, cols),
            Self::ErdosRenyi { n, q, seed } => Graph::erdos_renyi(n, q, seed),
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| GraphError::BadSpec(s.to_string(), why.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let int = |i: usize| -> Result<usize, GraphError> {
            parts
                .get(i)
                .ok_or_else(|| bad("missing parameter"))?
                .parse()
                .map_err(|_| bad("expected an integer"))
        };
        let spec = match parts[0] {
            "path" => Self::Path { n: int(1)? },
            "cycle" => Self::Cycle { n: int(1)? },
            "complete" => Self::Complete { n: int(1)? },
            "star" => Self::Star { n: int(1)? },
            "grid" => {
                let dims = parts.get(1).ok_or_else(|| bad("missing RxC"))?;
                let (r, c) = dims.split_once('x').ok_or_else(|| bad("expected RxC"))?;
                Self::Grid {
                    rows: r.parse().map_err(|_| bad("bad row count"))?,
                    cols: c.parse().map_err(|_| bad("bad column count"))?,
                }
            }
            "er" => Self::ErdosRenyi {
                n: int(1)?,
                q: parts
                    .get(2)
                    .ok_or_else(|| bad("missing q"))?
                    .parse()
                    .map_err(|_| bad("bad q"))?,
                seed: parts.get(3).map(|s| s.parse()).transpose().map_err(|_| bad("bad seed"))?.unwrap_or(0),
            },
            _ => return Err(bad("unknown generator")),
        };
        if parts.len() > 4 {
            return Err(bad("too many parameters"));
        }
        Ok(spec)
    }
}
