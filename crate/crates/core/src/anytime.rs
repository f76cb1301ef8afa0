//! Causal linear tree codes over GF(2) and their erasure decoder.
//!
//! The encoder emits `c_t = G_1 b_t + G_2 b_{t-1} + ... + G_t b_1`, where
//! each `b_s` is a `Λ`-bit information packet and each `G_i` is an
//! `nΛ × Λ` matrix of fair coin flips. `c_t` is cut into `n` packets of `Λ`
//! bits that cross the channel independently. The decoder solves the
//! linear system given by the packets it did receive and reports the
//! longest prefix `b_1..b_τ` that is uniquely determined.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{BitMatrix, BitVector, Gf2Error, IncrementalSolver};
use crate::rng::{hash_counters, unit_f64};

/// Default decoder horizon cap (time steps per edge).
pub const DEFAULT_HORIZON_CAP: usize = 512;
/// Redraws allowed when `G_1` is column-rank deficient.
pub const MAX_REGENERATIONS: u32 = 64;

const REGEN_TAG: u64 = 0x7265_6765_6e00_0000;
const CHANNEL_TAG: u64 = 0x6368_616e_0000_0000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeError {
    #[error("invalid code parameters: {0}")]
    InvalidParams(String),
    #[error("horizon {requested} exceeds the decoder cap {cap}")]
    HorizonExceeded { requested: usize, cap: usize },
    #[error("rate {rate} is outside (0, {limit}]")]
    RateOutOfRange { rate: f64, limit: f64 },
    #[error("G_1 stayed rank deficient after {0} redraws")]
    SingularLeadingBlock(u32),
    #[error(transparent)]
    Gf2(#[from] Gf2Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeParams {
    /// Packet length `Λ` in bits.
    pub lambda_bits: usize,
    /// Coded packets per time step.
    pub n: usize,
    pub seed: u64,
}

impl CodeParams {
    pub fn new(lambda_bits: usize, n: usize, seed: u64) -> Result<Self, CodeError> {
        let p = Self { lambda_bits, n, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CodeError> {
        if self.lambda_bits == 0 {
            return Err(CodeError::InvalidParams("lambda_bits must be positive".into()));
        }
        if self.n < 2 {
            return Err(CodeError::InvalidParams(format!("n = {} but at least 2 is needed", self.n)));
        }
        Ok(())
    }

    /// `R = 1/n`: one information packet per step.
    pub fn rate(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `p' = p^{1/Λ}`.
    pub fn p_prime(&self, p: f64) -> f64 {
        p.powf(1.0 / self.lambda_bits as f64)
    }
}

/// Generator blocks `G_1..G_H` of one code from the ensemble.
#[derive(Debug, Clone)]
pub struct TreeCode {
    params: CodeParams,
    /// Seed actually used after any redraws.
    effective_seed: u64,
    blocks: Vec<BitMatrix>,
    /// `G_iᵀ`, so `G_i b` is an XOR of the rows selected by `b`.
    transposed: Vec<BitMatrix>,
}

impl TreeCode {
    pub fn new(params: CodeParams, horizon: usize) -> Result<Self, CodeError> {
        Self::with_cap(params, horizon, DEFAULT_HORIZON_CAP)
    }

    pub fn with_cap(params: CodeParams, horizon: usize, cap: usize) -> Result<Self, CodeError> {
        params.validate()?;
        if horizon > cap {
            return Err(CodeError::HorizonExceeded { requested: horizon, cap });
        }
        let mut seed = params.seed;
        for attempt in 0..=MAX_REGENERATIONS {
            let g1 = Self::generate_block(&params, seed, 1);
            if g1.rank() == params.lambda_bits {
                let mut blocks = Vec::with_capacity(horizon.max(1));
                blocks.push(g1);
                for i in 2..=horizon {
                    blocks.push(Self::generate_block(&params, seed, i));
                }
                let transposed = blocks.iter().map(BitMatrix::transpose).collect();
                return Ok(Self {
                    params,
                    effective_seed: seed,
                    blocks,
                    transposed,
                });
            }
            log::warn!(
                "G_1 has column rank below {} for seed {seed:#x}; redrawing (attempt {})",
                params.lambda_bits,
                attempt + 1
            );
            seed = hash_counters(params.seed, &[REGEN_TAG, u64::from(attempt)]);
        }
        Err(CodeError::SingularLeadingBlock(MAX_REGENERATIONS))
    }

    fn generate_block(params: &CodeParams, seed: u64, i: usize) -> BitMatrix {
        BitMatrix::from_word_fn(params.n * params.lambda_bits, params.lambda_bits, |r, w| {
            hash_counters(seed, &[i as u64, r as u64, w as u64])
        })
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn effective_seed(&self) -> u64 {
        self.effective_seed
    }

    pub fn horizon(&self) -> usize {
        self.blocks.len()
    }

    /// `G_i`, `1 <= i <= horizon`.
    pub fn block(&self, i: usize) -> &BitMatrix {
        &self.blocks[i - 1]
    }

    /// `acc ^= G_i b`.
    #[inline]
    pub fn apply_block(&self, i: usize, b: &BitVector, acc: &mut BitVector) {
        self.transposed[i - 1].xor_selected_rows_into(b, acc);
    }

    /// `c_t` for history `b_1..b_t`, as `n` packets.
    pub fn encode_step(&self, history: &[BitVector]) -> Result<Vec<BitVector>, CodeError> {
        let t = history.len();
        if t == 0 {
            return Err(CodeError::InvalidParams("encode_step needs t >= 1".into()));
        }
        if t > self.horizon() {
            return Err(CodeError::HorizonExceeded {
                requested: t,
                cap: self.horizon(),
            });
        }
        let lambda = self.params.lambda_bits;
        let mut c = BitVector::zeros(self.params.n * lambda);
        for (s, b) in history.iter().enumerate() {
            if b.len() != lambda {
                return Err(Gf2Error::DimensionMismatch {
                    expected: lambda,
                    got: b.len(),
                }
                .into());
            }
            // b_{s+1} is multiplied by G_{t-s}.
            self.apply_block(t - s, b, &mut c);
        }
        Ok(split_packets(&c, self.params.n, lambda))
    }
}

fn split_packets(c: &BitVector, n: usize, lambda: usize) -> Vec<BitVector> {
    (0..n).map(|j| c.slice(j * lambda, lambda)).collect()
}

/// Streaming encoder that owns its message history.
#[derive(Debug, Clone)]
pub struct Encoder {
    code: Arc<TreeCode>,
    history: Vec<BitVector>,
}

impl Encoder {
    pub fn new(code: Arc<TreeCode>) -> Self {
        Self {
            code,
            history: Vec::new(),
        }
    }

    /// Push `b_t` and return the `n` packets of `c_t`.
    pub fn push(&mut self, b: BitVector) -> Result<Vec<BitVector>, CodeError> {
        self.history.push(b);
        let out = self.code.encode_step(&self.history);
        if out.is_err() {
            self.history.pop();
        }
        out
    }

    pub fn history(&self) -> &[BitVector] {
        &self.history
    }
}

/// Erasure decoder for one directed link.
#[derive(Debug, Clone)]
pub struct AnytimeDecoder {
    code: Arc<TreeCode>,
    solver: IncrementalSolver,
    t: usize,
    /// Which of the `n` packets arrived, per time step.
    received_log: Vec<Vec<bool>>,
    /// Decoded blocks, copied out of the solver once.
    cache: Vec<BitVector>,
}

impl AnytimeDecoder {
    pub fn new(code: Arc<TreeCode>) -> Self {
        let lambda = code.params().lambda_bits;
        Self {
            code,
            solver: IncrementalSolver::new(lambda),
            t: 0,
            received_log: Vec::new(),
            cache: Vec::new(),
        }
    }

    /// Time steps seen so far.
    pub fn time(&self) -> usize {
        self.t
    }

    pub fn received_log(&self) -> &[Vec<bool>] {
        &self.received_log
    }

    /// Decoded prefix length `τ`.
    pub fn prefix(&self) -> usize {
        self.solver.decoded_prefix()
    }

    /// Decoded `b_{i+1}` (0-based index `i < prefix()`).
    pub fn decoded(&self, i: usize) -> BitVector {
        self.solver.prefix_block(i)
    }

    pub fn decoded_blocks(&self) -> Vec<BitVector> {
        self.solver.decoded_blocks()
    }

    /// Individually determined bits, including ones past the prefix.
    pub fn determined_columns(&self) -> Vec<usize> {
        self.solver.determined_columns()
    }

    /// Feed step `t = time() + 1` with the packets that survived the channel.
    pub fn receive(&mut self, received: &[(usize, BitVector)]) -> Result<(), CodeError> {
        let params = *self.code.params();
        let (lambda, n) = (params.lambda_bits, params.n);
        let t = self.t + 1;
        if t > self.code.horizon() {
            return Err(CodeError::HorizonExceeded {
                requested: t,
                cap: self.code.horizon(),
            });
        }
        let mut arrived = vec![false; n];
        for (j, bits) in received {
            if *j >= n {
                return Err(CodeError::InvalidParams(format!("packet index {j} >= n = {n}")));
            }
            if bits.len() != lambda {
                return Err(Gf2Error::DimensionMismatch {
                    expected: lambda,
                    got: bits.len(),
                }
                .into());
            }
            arrived[*j] = true;
        }
        self.t = t;
        self.solver.append_block();
        self.received_log.push(arrived);
        if received.is_empty() {
            return Ok(());
        }

        // Contribution of decoded blocks, updated as the prefix grows.
        let mut known = BitVector::zeros(n * lambda);
        let mut tau = 0;
        for (j, bits) in received {
            for r in 0..lambda {
                let row = j * lambda + r;
                let now = self.solver.decoded_prefix();
                if now == t {
                    // Everything is decoded; the remaining equations are implied.
                    return Ok(());
                }
                for s in tau..now {
                    if s == self.cache.len() {
                        self.cache.push(self.solver.prefix_block(s));
                    }
                    self.code.apply_block(t - s, &self.cache[s], &mut known);
                }
                tau = now;
                let mut window = BitVector::zeros(0);
                for s in tau..t {
                    // Block b_{s+1} enters c_t through G_{t-s}.
                    window.extend(&self.code.block(t - s).row(row));
                }
                let rhs = bits.get(r) ^ known.get(row);
                self.solver.add_window_equation(&window, rhs)?;
            }
        }
        Ok(())
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Inverse of the binary entropy restricted to `[0, 1/2]`, by bisection to
/// `1e-12`.
pub fn inverse_binary_entropy(y: f64) -> f64 {
    let y = y.clamp(0.0, 1.0);
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Breakpoints `(γ₁, γ₂)` of the erasure exponent.
pub fn exponent_breakpoints(p_prime: f64) -> (f64, f64) {
    let g1 = 1.0 - binary_entropy(p_prime / (1.0 + p_prime));
    let g2 = (1.0 - p_prime) / (1.0 + p_prime);
    (g1, g2)
}

/// Error exponent `E(R)` of the random tree-code ensemble on the bit-level
/// erasure channel with erasure probability `p'`.
pub fn exponent_e(rate: f64, p_prime: f64) -> Result<f64, CodeError> {
    if !(p_prime > 0.0 && p_prime < 1.0) {
        return Err(CodeError::InvalidParams(format!("p' = {p_prime} is outside (0, 1)")));
    }
    let limit = 1.0 - p_prime;
    if !(rate > 0.0 && rate <= limit) {
        return Err(CodeError::RateOutOfRange { rate, limit });
    }
    let (g1, g2) = exponent_breakpoints(p_prime);
    let e = if rate <= g1 {
        inverse_binary_entropy(1.0 - rate) * (1.0 / p_prime).log2()
    } else if rate <= g2 {
        1.0 - (1.0 + p_prime).log2() - rate
    } else if rate == limit {
        0.0
    } else {
        rate * (rate / limit).log2() + (1.0 - rate) * ((1.0 - rate) / p_prime).log2()
    };
    Ok(e.max(0.0))
}

/// One row of the empirical delay table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayRow {
    pub delay: usize,
    /// `(trial, t)` pairs with `t >= delay`.
    pub trials: u64,
    /// Pairs where `b_{t-delay+1}` was not yet in the decoded prefix.
    pub failures: u64,
    pub p_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaMeasurement {
    pub p: f64,
    pub horizon: usize,
    pub trials: usize,
    pub table: Vec<DelayRow>,
    /// Fitted decay exponent (bits per step of delay).
    pub beta_hat: Option<f64>,
    /// Delays used for the fit.
    pub fit_range: Option<(usize, usize)>,
    /// Coefficient of determination of the fit.
    pub r_squared: Option<f64>,
    /// Smallest `d₀` with `P̂(d) <= 2^{-β̂(d-d₀)}` on every resolved row.
    pub d0: Option<f64>,
    /// The same over every row with `P̂ > 0`, including unresolved ones.
    pub d0_all: Option<f64>,
}

impl BetaMeasurement {
    /// `P̂(delay >= d)` is non-increasing over the fit range.
    pub fn monotone_on_fit(&self) -> bool {
        let Some((a, b)) = self.fit_range else {
            return false;
        };
        self.table
            .iter()
            .filter(|r| r.delay >= a && r.delay <= b)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1].p_hat <= w[0].p_hat)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delay", "trials", "failures", "p_hat"])?;
        for r in &self.table {
            w.write_record(&[
                r.delay.to_string(),
                r.trials.to_string(),
                r.failures.to_string(),
                format!("{:.12e}", r.p_hat),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Delay `t - τ(t)` after every step of one simulated link.
pub fn simulate_link_delays(code: &Arc<TreeCode>, p: f64, horizon: usize, seed: u64) -> Result<Vec<usize>, CodeError> {
    let params = *code.params();
    let zero = BitVector::zeros(params.lambda_bits);
    let mut dec = AnytimeDecoder::new(Arc::clone(code));
    let mut delays = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        // Linear code + all-zero message: every received packet is zero.
        let received: Vec<(usize, BitVector)> = (0..params.n)
            .filter(|&j| unit_f64(seed, &[CHANNEL_TAG, t as u64, j as u64]) >= p)
            .map(|j| (j, zero.clone()))
            .collect();
        dec.receive(&received)?;
        delays.push(t - dec.prefix());
    }
    Ok(delays)
}

/// Monte Carlo estimate of the anytime decay `P(delay >= d)` on a single
/// link with i.i.d. packet erasures.
pub fn measure_beta(code: &Arc<TreeCode>, p: f64, horizon: usize, trials: usize, seed: u64) -> Result<BetaMeasurement, CodeError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CodeError::InvalidParams(format!("p = {p} is outside [0, 1]")));
    }
    let rate = code.params().rate();
    if p > 0.0 && rate >= 1.0 - p {
        return Err(CodeError::RateOutOfRange { rate, limit: 1.0 - p });
    }
    if horizon > code.horizon() {
        return Err(CodeError::HorizonExceeded {
            requested: horizon,
            cap: code.horizon(),
        });
    }
    let per_trial: Vec<Vec<usize>> = (0..trials)
        .into_par_iter()
        .map(|i| simulate_link_delays(code, p, horizon, hash_counters(seed, &[i as u64])))
        .collect::<Result<_, _>>()?;

    let mut failures = vec![0u64; horizon + 1];
    for delays in &per_trial {
        for &d in delays {
            // D_t >= d for every d in 1..=D_t.
            for slot in failures.iter_mut().take(d + 1).skip(1) {
                *slot += 1;
            }
        }
    }
    let table: Vec<DelayRow> = (1..=horizon)
        .map(|d| {
            let pairs = (trials * (horizon - d + 1)) as u64;
            DelayRow {
                delay: d,
                trials: pairs,
                failures: failures[d],
                p_hat: if pairs > 0 { failures[d] as f64 / pairs as f64 } else { 0.0 },
            }
        })
        .collect();

    let mut m = BetaMeasurement {
        p,
        horizon,
        trials,
        table,
        beta_hat: None,
        fit_range: None,
        r_squared: None,
        d0: None,
        d0_all: None,
    };
    fit_decay(&mut m);
    Ok(m)
}

/// A row is resolved when it holds at least this many failures, i.e.
/// `P̂ >= 10 / trials` with the row's own sample count.
pub const MIN_FAILURES: u64 = 10;

fn fit_decay(m: &mut BetaMeasurement) {
    let resolved = |r: &DelayRow| r.failures >= MIN_FAILURES;
    let pts: Vec<(f64, f64)> = m
        .table
        .iter()
        .take_while(|r| resolved(r))
        .map(|r| (r.delay as f64, r.p_hat.log2()))
        .collect();
    if pts.len() < 2 {
        return;
    }
    let (slope, r2) = least_squares(&pts);
    let beta = -slope;
    m.beta_hat = Some(beta);
    m.fit_range = Some((pts[0].0 as usize, pts[pts.len() - 1].0 as usize));
    m.r_squared = Some(r2);
    if beta > 0.0 {
        let offset = |r: &DelayRow| r.delay as f64 + r.p_hat.log2() / beta;
        m.d0 = m.table.iter().filter(|r| resolved(r)).map(offset).reduce(f64::max);
        m.d0_all = m.table.iter().filter(|r| r.p_hat > 0.0).map(offset).reduce(f64::max);
    }
}

/// Slope and R² of the ordinary least-squares line through `pts`.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}
