use consensus_core::gf2::{BitMatrix, BitVector, Gf2Error, IncrementalSolver, Insertion};
use proptest::prelude::*;

/// Dense reduced row echelon form over GF(2), kept as plain bool rows.
#[derive(Default)]
struct DenseSystem {
    rows: Vec<(Vec<bool>, bool)>,
}

impl DenseSystem {
    fn add(&mut self, coeffs: &[bool], rhs: bool, width: usize) {
        let mut r: Vec<bool> = coeffs.to_vec();
        r.resize(width, false);
        for row in &mut self.rows {
            row.0.resize(width, false);
        }
        self.rows.push((r, rhs));
    }

    fn rref(&self, width: usize) -> Vec<(Vec<bool>, bool)> {
        let mut m: Vec<(Vec<bool>, bool)> = self
            .rows
            .iter()
            .map(|(r, b)| {
                let mut r = r.clone();
                r.resize(width, false);
                (r, *b)
            })
            .collect();
        let mut lead = 0;
        for c in 0..width {
            let Some(p) = (lead..m.len()).find(|&i| m[i].0[c]) else { continue };
            m.swap(lead, p);
            let pivot = m[lead].clone();
            for (i, row) in m.iter_mut().enumerate() {
                if i != lead && row.0[c] {
                    for (a, b) in row.0.iter_mut().zip(&pivot.0) {
                        *a ^= b;
                    }
                    row.1 ^= pivot.1;
                }
            }
            lead += 1;
        }
        m.truncate(lead);
        m
    }

    fn rank(&self, width: usize) -> usize {
        self.rref(width).len()
    }

    /// Columns whose unit vector lies in the row space.
    fn determined(&self, width: usize) -> Vec<(usize, bool)> {
        self.rref(width)
            .into_iter()
            .filter(|(r, _)| r.iter().filter(|&&b| b).count() == 1)
            .map(|(r, b)| (r.iter().position(|&x| x).unwrap(), b))
            .collect()
    }
}

/// All assignments of `width <= 16` unknowns satisfying the system.
fn solutions(eqs: &[(Vec<bool>, bool)], width: usize) -> Vec<u32> {
    (0..1u32 << width)
        .filter(|&x| {
            eqs.iter().all(|(r, b)| {
                let dot = r.iter().enumerate().filter(|&(i, &c)| c && x >> i & 1 == 1).count() % 2 == 1;
                dot == *b
            })
        })
        .collect()
}

fn planted_system() -> impl Strategy<Value = (usize, usize, Vec<bool>, Vec<Vec<Vec<bool>>>)> {
    (1usize..=4, 1usize..=6)
        .prop_filter("at most 24 unknowns", |(b, t)| b * t <= 24)
        .prop_flat_map(|(b, t)| {
            let per_step = (1..=t).map(move |s| prop::collection::vec(prop::collection::vec(any::<bool>(), s * b), 0..=b + 1));
            (Just(b), Just(t), prop::collection::vec(any::<bool>(), b * t), per_step.collect::<Vec<_>>())
        })
}

fn dot(coeffs: &[bool], x: &[bool]) -> bool {
    coeffs.iter().zip(x).filter(|(c, v)| **c && **v).count() % 2 == 1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn solver_matches_dense_elimination((b, t, x, steps) in planted_system()) {
        let mut solver = IncrementalSolver::new(b);
        let mut dense = DenseSystem::default();
        let mut all = Vec::new();
        let mut determined_before: Vec<usize> = Vec::new();
        let mut prefix_before = 0;
        for (s, eqs) in steps.iter().enumerate() {
            solver.append_block();
            let width = (s + 1) * b;
            for coeffs in eqs {
                let rhs = dot(coeffs, &x);
                solver.add_equation(&BitVector::from_bools(coeffs), rhs).unwrap();
                dense.add(coeffs, rhs, width);
                all.push((coeffs.clone(), rhs));
            }
            prop_assert_eq!(solver.rank(), dense.rank(width));
            let want = dense.determined(width);
            let got: Vec<usize> = solver.determined_columns();
            prop_assert_eq!(&got, &want.iter().map(|&(c, _)| c).collect::<Vec<_>>());
            for &(c, v) in &want {
                prop_assert_eq!(solver.value(c), Some(v));
                prop_assert_eq!(v, x[c]);
            }
            // Monotone: nothing determined is ever forgotten.
            prop_assert!(determined_before.iter().all(|c| got.contains(c)));
            prop_assert!(solver.decoded_prefix() >= prefix_before);
            determined_before = got;
            prefix_before = solver.decoded_prefix();
            let full = (0..solver.decoded_prefix() * b).all(|c| solver.is_determined(c));
            prop_assert!(full);
            if solver.decoded_prefix() < s + 1 {
                let first_open = solver.decoded_prefix() * b;
                prop_assert!((first_open..first_open + b).any(|c| !solver.is_determined(c)));
            }
        }
        let width = t * b;
        if width <= 14 {
            let sols = solutions(&all.iter().map(|(r, v)| {
                let mut r = r.clone();
                r.resize(width, false);
                (r, *v)
            }).collect::<Vec<_>>(), width);
            let determined = solver.determined_columns();
            for c in 0..width {
                let agree = sols.iter().all(|s| (s >> c & 1 == 1) == (sols[0] >> c & 1 == 1));
                prop_assert_eq!(agree, determined.contains(&c), "column {}", c);
            }
        }
    }

    #[test]
    fn repeated_equations_are_redundant((b, _t, x, steps) in planted_system()) {
        let mut solver = IncrementalSolver::new(b);
        for eqs in &steps {
            solver.append_block();
            for coeffs in eqs {
                let rhs = dot(coeffs, &x);
                let v = BitVector::from_bools(coeffs);
                solver.add_equation(&v, rhs).unwrap();
                let (rank, det) = (solver.rank(), solver.determined_columns());
                prop_assert_eq!(solver.add_equation(&v, rhs).unwrap(), Insertion::Redundant);
                prop_assert_eq!(solver.rank(), rank);
                prop_assert_eq!(solver.determined_columns(), det);
                if coeffs.iter().any(|&c| c) {
                    prop_assert_eq!(solver.add_equation(&v, !rhs), Err(Gf2Error::InconsistentSystem));
                }
            }
        }
    }

    #[test]
    fn transpose_is_an_involution(rows in 1usize..80, cols in 1usize..80, seed in any::<u64>()) {
        let m = BitMatrix::from_word_fn(rows, cols, |r, w| seed.wrapping_mul(r as u64 + 1) ^ (w as u64).rotate_left(17));
        let t = m.transpose();
        prop_assert_eq!(t.rows(), cols);
        prop_assert_eq!(t.transpose(), m.clone());
        for r in 0..rows {
            for c in 0..cols {
                prop_assert_eq!(m.get(r, c), t.get(c, r));
            }
        }
    }
}

#[test]
fn rank_of_small_matrices() {
    let m = BitMatrix::from_rows(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]]);
    assert_eq!(m.rank(), 2);
    assert_eq!(BitMatrix::identity(70).rank(), 70);
    let v = BitVector::from_bools(&[true, false, true]);
    assert_eq!(m.mat_vec(&v).unwrap().to_bools(), vec![true, true, false]);
}

#[test]
fn wrong_width_is_rejected() {
    let mut s = IncrementalSolver::new(4);
    s.append_block();
    assert!(matches!(
        s.add_equation(&BitVector::zeros(3), false),
        Err(Gf2Error::DimensionMismatch { expected: 4, got: 3 })
    ));
}
