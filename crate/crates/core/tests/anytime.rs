use std::sync::Arc;

use consensus_core::anytime::{
    binary_entropy, exponent_breakpoints, exponent_e, inverse_binary_entropy, measure_beta, AnytimeDecoder, CodeParams,
    Encoder, TreeCode,
};
use consensus_core::gf2::BitVector;
use proptest::prelude::*;

fn code(lambda: usize, n: usize, seed: u64, horizon: usize) -> Arc<TreeCode> {
    Arc::new(TreeCode::new(CodeParams::new(lambda, n, seed).unwrap(), horizon).unwrap())
}

/// `c_t = Σ_s G_{t-s+1} b_s`, one bit at a time.
fn naive_codeword(code: &TreeCode, history: &[BitVector]) -> Vec<bool> {
    let t = history.len();
    let p = code.params();
    let mut c = vec![false; p.n * p.lambda_bits];
    for (s, b) in history.iter().enumerate() {
        let g = code.block(t - s);
        for (r, bit) in c.iter_mut().enumerate() {
            for k in 0..p.lambda_bits {
                *bit ^= g.get(r, k) & b.get(k);
            }
        }
    }
    c
}

fn concat(packets: &[BitVector]) -> Vec<bool> {
    packets.iter().flat_map(|p| p.to_bools()).collect()
}

#[test]
fn encoder_is_the_causal_convolution() {
    let code = code(8, 2, 3, 16);
    let mut enc = Encoder::new(Arc::clone(&code));
    let msgs = [BitVector::from_u64(0x01, 8), BitVector::from_u64(0x02, 8)];
    let c1 = enc.push(msgs[0].clone()).unwrap();
    assert_eq!(c1.len(), 2);
    assert_eq!(concat(&c1), naive_codeword(&code, &msgs[..1]));
    let c2 = enc.push(msgs[1].clone()).unwrap();
    assert_eq!(concat(&c2), naive_codeword(&code, &msgs));
    // c_2 = G_2 b_1 + G_1 b_2.
    let mut want = code.block(2).mat_vec(&msgs[0]).unwrap();
    want.xor_assign(&code.block(1).mat_vec(&msgs[1]).unwrap());
    assert_eq!(concat(&c2), want.to_bools());
}

#[test]
fn first_block_has_full_column_rank() {
    for seed in 0..20 {
        let c = code(16, 3, seed, 4);
        assert_eq!(c.block(1).rank(), 16);
    }
}

/// Decodable prefix of the received equations, by dense elimination over
/// every unknown seen so far.
fn oracle_prefix(code: &TreeCode, log: &[Vec<bool>], t: usize) -> usize {
    let (lambda, n) = (code.params().lambda_bits, code.params().n);
    let width = t * lambda;
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (step, arrived) in log.iter().enumerate().take(t) {
        let tt = step + 1;
        for j in (0..n).filter(|&j| arrived[j]) {
            for r in 0..lambda {
                let mut row = vec![false; width];
                for s in 0..tt {
                    let g = code.block(tt - s);
                    for k in 0..lambda {
                        row[s * lambda + k] = g.get(j * lambda + r, k);
                    }
                }
                rows.push(row);
            }
        }
    }
    // Reduced row echelon form; column c is determined iff some row is e_c.
    let mut lead = 0;
    for c in 0..width {
        let Some(p) = (lead..rows.len()).find(|&i| rows[i][c]) else { continue };
        rows.swap(lead, p);
        let pivot = rows[lead].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != lead && row[c] {
                row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
            }
        }
        lead += 1;
    }
    let determined: Vec<bool> = (0..width)
        .map(|c| rows[..lead].iter().any(|r| r[c] && r.iter().filter(|&&b| b).count() == 1))
        .collect();
    (0..t).take_while(|&s| determined[s * lambda..(s + 1) * lambda].iter().all(|&d| d)).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoder_is_linear(a in prop::collection::vec(any::<u8>(), 1..10), b in prop::collection::vec(any::<u8>(), 10)) {
        let code = code(8, 2, 9, 16);
        let (mut ea, mut eb, mut es) = (Encoder::new(Arc::clone(&code)), Encoder::new(Arc::clone(&code)), Encoder::new(Arc::clone(&code)));
        for (x, y) in a.iter().zip(&b) {
            let (bx, by) = (BitVector::from_u64(*x as u64, 8), BitVector::from_u64(*y as u64, 8));
            let mut sum = bx.clone();
            sum.xor_assign(&by);
            let (ca, cb, cs) = (ea.push(bx).unwrap(), eb.push(by).unwrap(), es.push(sum).unwrap());
            for j in 0..2 {
                let mut want = ca[j].clone();
                want.xor_assign(&cb[j]);
                prop_assert_eq!(&cs[j], &want);
            }
        }
    }

    #[test]
    fn decoder_prefix_matches_dense_oracle(
        msgs in prop::collection::vec(any::<u8>(), 1..=8),
        erased in prop::collection::vec(prop::collection::vec(prop::bool::weighted(0.4), 2), 8),
        seed in 0u64..4,
    ) {
        let code = code(8, 2, seed, 8);
        let mut enc = Encoder::new(Arc::clone(&code));
        let mut dec = AnytimeDecoder::new(Arc::clone(&code));
        for (i, m) in msgs.iter().enumerate() {
            let packets = enc.push(BitVector::from_u64(*m as u64, 8)).unwrap();
            let rx: Vec<(usize, BitVector)> = packets.into_iter().enumerate().filter(|(j, _)| !erased[i][*j]).collect();
            dec.receive(&rx).unwrap();
            let t = i + 1;
            prop_assert_eq!(dec.prefix(), oracle_prefix(&code, dec.received_log(), t), "t = {}", t);
            for s in 0..dec.prefix() {
                prop_assert_eq!(&dec.decoded(s), &enc.history()[s]);
            }
        }
    }

    #[test]
    fn entropy_inverse_round_trips(y in 0.0f64..=1.0) {
        let x = inverse_binary_entropy(y);
        prop_assert!((0.0..=0.5).contains(&x));
        prop_assert!((binary_entropy(x) - y).abs() < 1e-9);
    }

    #[test]
    fn exponent_is_non_increasing_in_rate(pp in 0.05f64..0.95, a in 0.001f64..1.0, b in 0.001f64..1.0) {
        let limit = 1.0 - pp;
        let (lo, hi) = if a < b { (a * limit, b * limit) } else { (b * limit, a * limit) };
        prop_assert!(exponent_e(lo, pp).unwrap() >= exponent_e(hi, pp).unwrap() - 1e-12);
    }
}

#[test]
fn exponent_at_half_erasure() {
    let (g1, g2) = exponent_breakpoints(0.5);
    assert!((g1 - (1.0 - (3f64.log2() - 2.0 / 3.0))).abs() < 1e-12);
    assert!((g1 - 0.081_704_5).abs() < 1e-6);
    assert!((g2 - 1.0 / 3.0).abs() < 1e-15);
    // Middle branch: 1 - log(1 + p') - R.
    assert!((exponent_e(0.2, 0.5).unwrap() - (1.0 - 1.5f64.log2() - 0.2)).abs() < 1e-12);
    // Low branch: H⁻¹(1 - R) log(1/p').
    let r = 0.05;
    assert!((exponent_e(r, 0.5).unwrap() - inverse_binary_entropy(1.0 - r)).abs() < 1e-12);
    // Continuity at both breakpoints.
    for g in [g1, g2] {
        let (a, b) = (exponent_e(g - 1e-9, 0.5).unwrap(), exponent_e(g + 1e-9, 0.5).unwrap());
        assert!((a - b).abs() < 1e-7, "jump at {g}: {a} vs {b}");
    }
    assert_eq!(exponent_e(0.5, 0.5).unwrap(), 0.0);
}

#[test]
fn delay_table_is_nested_and_clean_channel_has_no_delay() {
    let c = code(8, 3, 1, 30);
    let m = measure_beta(&c, 0.3, 30, 200, 4).unwrap();
    assert_eq!(m.table.len(), 30);
    assert!(m.table.windows(2).all(|w| w[1].failures <= w[0].failures));
    assert_eq!(m.table[0].trials, 200 * 30);
    let clean = measure_beta(&c, 0.0, 30, 20, 4).unwrap();
    assert!(clean.table.iter().all(|r| r.failures == 0));
    assert_eq!(clean.beta_hat, None);
}
