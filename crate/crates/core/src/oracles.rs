//! Executable forms of the arguments behind the repetition-protocol bounds,
//! evaluated on recorded runs.
//!
//! * Witnesses: a time-like path of `t` trellis edges ending at `v_t` with
//!   at least `t − n_v(t)` erased edges. The trellis has a copy `v_τ` of
//!   every node per round and edges `(v_τ, u_{τ−1})` whenever `u = v` or
//!   `u ~ v`; the edge is erased when the graph edge `(v, u)` was erased in
//!   round `τ` (self-edges never are).
//! * Wait chains: waits caused by waits never revisit a sender.
//! * Wasted rounds: node `v` wastes round `τ` only if some edge at distance
//!   `i` from `v` was erased in round `τ − i`, for some `i <= δ`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::erasure::ErasureMode;
use crate::graph::Graph;
use crate::protocols::{slot, Protocol, ProtocolRun, Symbol};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle needs a symmetric repetition run")]
    WrongRun,
    #[error("no witness with {needed} erasures at node {v}, round {t} (best {best})")]
    NotFound { v: usize, t: usize, needed: usize, best: usize },
    #[error("wait chain revisits node {node}: {chain:?}")]
    LoopDetected { node: usize, chain: Vec<WaitEvent> },
    #[error("round {round} wasted at node {v} without an erasure in its cone")]
    DominationViolated { v: usize, round: usize },
}

/// Trellis edge `(node_τ, prev_{τ−1})` traversed at round `τ = round`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrellisEdge {
    pub round: usize,
    pub node: usize,
    pub prev: usize,
    pub erased: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub v: usize,
    pub t: usize,
    /// From `v_t` backwards to round 1.
    pub edges: Vec<TrellisEdge>,
    pub erasures: usize,
}

impl Witness {
    /// Consecutive edges share endpoints and every step is a trellis edge.
    pub fn is_time_like(&self, g: &Graph) -> bool {
        if self.edges.len() != self.t {
            return false;
        }
        let mut cur = self.v;
        for (k, e) in self.edges.iter().enumerate() {
            let ok = e.round == self.t - k && e.node == cur && (e.prev == cur || g.has_edge(cur, e.prev));
            if !ok {
                return false;
            }
            cur = e.prev;
        }
        true
    }
}

fn check_run(run: &ProtocolRun) -> Result<(), OracleError> {
    if run.protocol != Protocol::Repetition || run.mode != ErasureMode::Symmetric {
        return Err(OracleError::WrongRun);
    }
    Ok(())
}

/// Whether the graph edge `(a, b)` was erased in round `τ >= 1`.
fn erased(run: &ProtocolRun, a: usize, b: usize, round: usize) -> bool {
    if a == b {
        return false;
    }
    let e = run.graph.edge_id(a, b).expect("not an edge");
    run.erasures[round - 1][0].edge_erased(e)
}

fn edge(run: &ProtocolRun, round: usize, node: usize, prev: usize) -> TrellisEdge {
    TrellisEdge {
        round,
        node,
        prev,
        erased: erased(run, node, prev, round),
    }
}

/// Maximum-erasure time-like path by dynamic programming over the trellis;
/// exact, and the reference for [`find_witness`].
pub fn find_witness_exhaustive(run: &ProtocolRun, v: usize, t: usize) -> Result<Witness, OracleError> {
    check_run(run)?;
    let g = &run.graph;
    let n = g.n();
    // best[τ][u]: most erasures on a time-like path from u_τ down to time 0.
    let mut best = vec![vec![0usize; n]; t + 1];
    let mut choice = vec![vec![0usize; n]; t + 1];
    for tau in 1..=t {
        for u in 0..n {
            let mut top = (best[tau - 1][u], u);
            for &w in g.neighbors(u) {
                let c = best[tau - 1][w] + usize::from(erased(run, u, w, tau));
                if c > top.0 {
                    top = (c, w);
                }
            }
            best[tau][u] = top.0;
            choice[tau][u] = top.1;
        }
    }
    let needed = t - run.n_v[t][v];
    if best[t][v] < needed {
        return Err(OracleError::NotFound {
            v,
            t,
            needed,
            best: best[t][v],
        });
    }
    let mut edges = Vec::with_capacity(t);
    let mut cur = v;
    for tau in (1..=t).rev() {
        let prev = choice[tau][cur];
        edges.push(edge(run, tau, cur, prev));
        cur = prev;
    }
    Ok(Witness {
        v,
        t,
        erasures: best[t][v],
        edges,
    })
}

/// Witness built by following the case analysis of the existence proof:
///
/// 1. round `t` not wasted: extend the witness at `v_{t−1}` by a self-edge;
/// 2. wasted, and a neighbor `u` lags (`n_u(t−1) = n_v(t−1) − 1`): extend
///    the witness at `u_{t−1}`;
/// 3. wasted, otherwise: some bottleneck neighbor's edge was erased in
///    round `t`. If that neighbor is level with `v`, extend the witness at
///    `u_{t−1}` through the erased edge; if it is ahead, step back two
///    rounds through `u_{t−1}` to `v_{t−2}`.
pub fn find_witness(run: &ProtocolRun, v: usize, t: usize) -> Result<Witness, OracleError> {
    check_run(run)?;
    let g = &run.graph;
    let nv = |u: usize, tau: usize| run.n_v[tau][u] as i64;
    let mut edges = Vec::with_capacity(t);
    let (mut cur, mut tau) = (v, t);
    let fail = |best: usize| OracleError::NotFound {
        v,
        t,
        needed: t - run.n_v[t][v],
        best,
    };
    while tau > 0 {
        if nv(cur, tau) == nv(cur, tau - 1) + 1 {
            edges.push(edge(run, tau, cur, cur));
            tau -= 1;
            continue;
        }
        let base = nv(cur, tau - 1);
        if let Some(&u) = g.neighbors(cur).iter().find(|&&u| nv(u, tau - 1) == base - 1) {
            edges.push(edge(run, tau, cur, u));
            tau -= 1;
            cur = u;
            continue;
        }
        let bottlenecks: Vec<usize> = g
            .neighbors(cur)
            .iter()
            .copied()
            .filter(|&u| run.n_vu[tau - 1][slot(g, cur, u)] == base - 1)
            .collect();
        let level = bottlenecks
            .iter()
            .copied()
            .find(|&u| nv(u, tau - 1) == base && erased(run, cur, u, tau));
        if let Some(u) = level {
            edges.push(edge(run, tau, cur, u));
            tau -= 1;
            cur = u;
            continue;
        }
        let ahead = bottlenecks
            .iter()
            .copied()
            .find(|&u| nv(u, tau - 1) == base + 1 && erased(run, cur, u, tau));
        match ahead {
            Some(u) if tau >= 2 => {
                edges.push(edge(run, tau, cur, u));
                edges.push(edge(run, tau - 1, u, cur));
                tau -= 2;
            }
            _ => return Err(fail(edges.iter().filter(|e| e.erased).count())),
        }
    }
    let erasures = edges.iter().filter(|e| e.erased).count();
    if erasures < t - run.n_v[t][v] {
        return Err(fail(erasures));
    }
    Ok(Witness { v, t, edges, erasures })
}

/// `src` sent a wait to `dst` in `round`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaitEvent {
    pub round: usize,
    pub src: usize,
    pub dst: usize,
}

fn wait_events(run: &ProtocolRun, round: usize) -> impl Iterator<Item = WaitEvent> + '_ {
    run.transmissions[round - 1]
        .iter()
        .filter(|tx| tx.symbol == Symbol::Wait)
        .map(move |tx| WaitEvent {
            round,
            src: tx.src,
            dst: tx.dst,
        })
}

/// Whether wait `a` (v → u in round τ) caused wait `b` (u → u' in round
/// τ + 1): `n_u(τ−1) = 1 + n_{uv}(τ−1)` and `n_{u'u}(τ) = n_u(τ)`.
pub fn causes(run: &ProtocolRun, a: &WaitEvent, b: &WaitEvent) -> bool {
    if b.round != a.round + 1 || b.src != a.dst || a.round == 0 {
        return false;
    }
    let (v, u, up, tau) = (a.src, a.dst, b.dst, a.round);
    let bottleneck = run.n_v[tau - 1][u] as i64 == 1 + run.n_vu_at(tau - 1, u, v);
    let informed = run.n_vu_at(tau, up, u) == run.n_v[tau][u] as i64;
    bottleneck && informed
}

/// Every maximal cause-chain of waits; fails if a chain repeats a sender.
pub fn check_no_wait_loops(run: &ProtocolRun) -> Result<Vec<Vec<WaitEvent>>, OracleError> {
    check_run(run)?;
    let mut caused: HashSet<WaitEvent> = HashSet::new();
    for round in 2..=run.rounds {
        for b in wait_events(run, round) {
            if wait_events(run, round - 1).any(|a| causes(run, &a, &b)) {
                caused.insert(b);
            }
        }
    }
    let mut chains = Vec::new();
    for round in 1..=run.rounds {
        for start in wait_events(run, round).filter(|e| !caused.contains(e)) {
            let mut path = vec![start];
            extend_chains(run, &mut path, &mut chains)?;
        }
    }
    Ok(chains)
}

fn extend_chains(run: &ProtocolRun, path: &mut Vec<WaitEvent>, out: &mut Vec<Vec<WaitEvent>>) -> Result<(), OracleError> {
    let last = *path.last().unwrap();
    let mut extended = false;
    if last.round < run.rounds {
        let next: Vec<WaitEvent> = wait_events(run, last.round + 1).filter(|b| causes(run, &last, b)).collect();
        for b in next {
            if path.iter().any(|e| e.src == b.src) {
                let mut chain = path.clone();
                chain.push(b);
                return Err(OracleError::LoopDetected { node: b.src, chain });
            }
            extended = true;
            path.push(b);
            extend_chains(run, path, out)?;
            path.pop();
        }
    }
    if !extended {
        out.push(path.clone());
    }
    Ok(())
}

/// Per round `τ >= δ`: `(τ, X_τ, Y_τ)` with `X_τ` = round wasted at `v` and
/// `Y_τ` = some edge at distance `i <= δ` erased in round `τ − i` (round 0
/// has no erasures). Fails on the first `X_τ > Y_τ`.
pub fn wasted_round_dominator(run: &ProtocolRun, v: usize) -> Result<Vec<(usize, bool, bool)>, OracleError> {
    check_run(run)?;
    let delta = run.graph.diameter().unwrap_or(0);
    let mut out = Vec::new();
    for tau in delta.max(1)..=run.rounds {
        let x = run.n_v[tau][v] == run.n_v[tau - 1][v];
        let y = dominator_support(&run.graph, v, tau)
            .into_iter()
            .any(|(e, round)| run.erasures[round - 1][0].edge_erased(e));
        if x && !y {
            return Err(OracleError::DominationViolated { v, round: tau });
        }
        out.push((tau, x, y));
    }
    Ok(out)
}

/// Distances `(d(v, a), d(v, b))` from `v` to the endpoints of each edge.
/// An edge counts as "at distance `i`" when either endpoint is; an erasure
/// on `{a, b}` can stall `a` and `b` alike, and each stall reaches `v` after
/// its own hop count.
pub fn edge_distances(g: &Graph, v: usize) -> Vec<(usize, usize)> {
    let d = g.distances_from(v);
    g.edges()
        .iter()
        .map(|&(a, b)| (d[a].unwrap_or(usize::MAX), d[b].unwrap_or(usize::MAX)))
        .collect()
}

/// The `(edge, round)` pairs `Y_τ` reads: edges at distance `i` in round
/// `τ − i`, for `0 <= i <= δ` and `τ − i >= 1`.
pub fn dominator_support(g: &Graph, v: usize, tau: usize) -> Vec<(usize, usize)> {
    let delta = g.diameter().unwrap_or(0);
    let mut out = Vec::new();
    for (e, (da, db)) in edge_distances(g, v).into_iter().enumerate() {
        for i in [da.min(db), da.max(db)] {
            if i <= delta && tau > i && out.last() != Some(&(e, tau - i)) {
                out.push((e, tau - i));
            }
        }
    }
    out
}

/// Counter-law violation found by [`check_counter_laws`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterViolation {
    pub round: usize,
    pub law: &'static str,
    pub node: usize,
}

/// Checks, at every round of a symmetric repetition run:
/// `n_vu(t+1) = n_vu(t) + X_{t+1}^{vu} 1{n_u(t) > n_vu(t)}`,
/// `n_v(t) = 1 + min_u n_vu(t)`, `n_v` grows by 0 or 1, and neighbors
/// differ by at most one iteration.
pub fn check_counter_laws(run: &ProtocolRun) -> Result<(), CounterViolation> {
    let g = &run.graph;
    let bad = |round: usize, law: &'static str, node: usize| Err(CounterViolation { round, law, node });
    for t in 0..=run.rounds {
        for v in 0..g.n() {
            let nv = run.n_v[t][v] as i64;
            if let Some(min) = g.neighbors(v).iter().map(|&u| run.n_vu_at(t, v, u)).min() {
                if nv != 1 + min {
                    return bad(t, "n_v = 1 + min n_vu", v);
                }
            }
            if g.neighbors(v).iter().any(|&u| (run.n_v[t][u] as i64 - nv).abs() > 1) {
                return bad(t, "|n_u - n_v| <= 1", v);
            }
            if t > 0 {
                let step = nv - run.n_v[t - 1][v] as i64;
                if !(0..=1).contains(&step) {
                    return bad(t, "n_v step in {0, 1}", v);
                }
                for &u in g.neighbors(v) {
                    let before = run.n_vu_at(t - 1, v, u);
                    let x = run.erasures[t - 1][0].delivered(g, v, u);
                    let gate = run.n_v[t - 1][u] as i64 > before;
                    if run.n_vu_at(t, v, u) != before + i64::from(x && gate) {
                        return bad(t, "n_vu evolution", v);
                    }
                }
            }
        }
    }
    Ok(())
}
