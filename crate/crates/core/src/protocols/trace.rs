//! Queue views and trace serialization for recorded runs.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{ProtocolRun, Symbol, Transmission};

/// Entry of an input or output queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueSymbol {
    /// `x_node(iter)`.
    Data { node: usize, iter: usize },
    Wait,
    Erasure,
}

impl ProtocolRun {
    /// `Q_in^{dst,src}`: what `src` transmitted to `dst`, round by round.
    pub fn queue_in(&self, dst: usize, src: usize) -> Vec<QueueSymbol> {
        (1..=self.rounds)
            .map(|t| match self.transmission(t, src, dst).symbol {
                Symbol::Data { iter } => QueueSymbol::Data { node: src, iter },
                Symbol::Wait => QueueSymbol::Wait,
            })
            .collect()
    }

    /// `Q_out^{dst,src}`: what `dst` received from `src`, with erasures.
    pub fn queue_out(&self, dst: usize, src: usize) -> Vec<QueueSymbol> {
        (1..=self.rounds)
            .map(|t| {
                let tx = self.transmission(t, src, dst);
                if tx.delivered == 0 {
                    return QueueSymbol::Erasure;
                }
                match tx.symbol {
                    Symbol::Data { iter } => QueueSymbol::Data { node: src, iter },
                    Symbol::Wait => QueueSymbol::Wait,
                }
            })
            .collect()
    }

    pub fn write_trace_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for t in 0..=self.rounds {
            let rec = RoundTrace {
                round: t,
                n_v: self.n_v[t].clone(),
                transmissions: if t == 0 { Vec::new() } else { self.transmissions[t - 1].clone() },
                erasures: if t == 0 {
                    Vec::new()
                } else {
                    self.erasures[t - 1].iter().map(|x| x.bits().to_vec()).collect()
                },
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// `round,min_n_v,max_abs_err,sq_err` per round.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let r = self.average();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "min_n_v", "max_abs_err", "sq_err"])?;
        for t in 0..=self.rounds {
            let st = &self.states[t];
            let max = st.iter().fold(0.0f64, |m, x| m.max((x - r).abs()));
            let sq: f64 = st.iter().map(|x| (x - r) * (x - r)).sum();
            w.write_record(&[
                t.to_string(),
                self.min_n_v(t).to_string(),
                format!("{max:.17e}"),
                format!("{sq:.17e}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One line of the JSONL trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub n_v: Vec<usize>,
    pub transmissions: Vec<Transmission>,
    /// Delivery bits per packet slot, in directed-slot order.
    pub erasures: Vec<Vec<bool>>,
}
