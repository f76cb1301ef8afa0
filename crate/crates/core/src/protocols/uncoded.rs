//! The uncoded recursion: each node averages with whatever arrived.

use crate::erasure::{ErasureModel, ErasureSource, RoundErasures};
use crate::graph::Graph;

use super::{check_dims, node_update, slot, Protocol, ProtocolError, ProtocolRun, Symbol, Transmission};

/// `x_i ← x_i − ε Σ_j a_ij X^{ij} (x_i − x_j)`.
pub fn uncoded_step(x: &[f64], erasures: &RoundErasures, g: &Graph, eps: f64) -> Vec<f64> {
    (0..g.n())
        .map(|i| {
            let heard = g
                .neighbors(i)
                .iter()
                .filter(|&&j| erasures.delivered(g, i, j))
                .map(|&j| x[j]);
            node_update(x[i], heard, eps)
        })
        .collect()
}

pub fn run_uncoded(
    g: &Graph,
    eps: f64,
    source: &dyn ErasureSource,
    x0: &[f64],
    rounds: usize,
) -> Result<ProtocolRun, ProtocolError> {
    check_dims(g, x0)?;
    let n = g.n();
    let mut x = x0.to_vec();
    let mut states = vec![x.clone()];
    let mut iterates: Vec<Vec<f64>> = x0.iter().map(|&v| vec![v]).collect();
    let mut transmissions = Vec::with_capacity(rounds);
    let mut erasures = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let round = source.round(g, t, 0);
        let mut txs = Vec::with_capacity(2 * g.edge_count());
        for v in 0..n {
            for &u in g.neighbors(v) {
                txs.push(Transmission {
                    src: u,
                    dst: v,
                    symbol: Symbol::Data { iter: t - 1 },
                    delivered: u32::from(round.delivered(g, v, u)),
                });
            }
        }
        x = uncoded_step(&x, &round, g, eps);
        for (v, &xv) in x.iter().enumerate() {
            iterates[v].push(xv);
        }
        states.push(x.clone());
        transmissions.push(txs);
        erasures.push(vec![round]);
    }
    // Every round is one (possibly degraded) iteration.
    let n_v = (0..=rounds).map(|t| vec![t; n]).collect();
    let n_vu = (0..=rounds)
        .map(|t| {
            let mut row = vec![0i64; 2 * g.edge_count()];
            for v in 0..n {
                for &u in g.neighbors(v) {
                    row[slot(g, v, u)] = t as i64 - 1;
                }
            }
            row
        })
        .collect();
    Ok(ProtocolRun {
        protocol: Protocol::Uncoded,
        graph: g.clone(),
        mode: source.mode(),
        eps,
        x0: x0.to_vec(),
        rounds,
        n_v,
        n_vu,
        transmissions,
        erasures,
        iterates,
        states,
    })
}

/// `‖x_k − r1‖²` for `k = 0..=rounds`, sampling the channel on the fly.
/// This is the Monte Carlo workhorse; it allocates only the state vectors.
pub fn uncoded_error_trajectory(g: &Graph, eps: f64, model: &ErasureModel, seed: u64, x0: &[f64], rounds: usize) -> Vec<f64> {
    let n = g.n();
    let r = x0.iter().sum::<f64>() / n as f64;
    let sq = |x: &[f64]| x.iter().map(|v| (v - r) * (v - r)).sum::<f64>();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut out = Vec::with_capacity(rounds + 1);
    out.push(sq(&x));
    for t in 1..=rounds {
        for i in 0..n {
            let heard = g.neighbors(i).iter().filter_map(|&j| {
                let e = g.edge_id(i, j).unwrap();
                model.delivered(seed, e, usize::from(i > j), t, 0).then_some(x[j])
            });
            next[i] = node_update(x[i], heard, eps);
        }
        std::mem::swap(&mut x, &mut next);
        out.push(sq(&x));
    }
    out
}
