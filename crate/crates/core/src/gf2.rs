//! Linear algebra over GF(2) with 64-bit packed rows.
//!
//! [`IncrementalSolver`] is the erasure decoder's engine: equations arrive
//! one at a time and are kept in fully reduced row-echelon form with the
//! lowest set column as pivot. A variable is determined exactly when its
//! pivot row has weight one, and a determined value never changes.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Gf2Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inconsistent system: an equation reduced to 0 = 1")]
    InconsistentSystem,
}

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

/// Fixed-length bit vector. Bits past `len` in the last word are zero.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    /// The low `len` bits of `value`, bit `i` of the vector = bit `i` of the
    /// integer.
    pub fn from_u64(value: u64, len: usize) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len.min(64) {
            v.set(i, (value >> i) & 1 == 1);
        }
        v
    }

    pub fn from_words(words: Vec<u64>, len: usize) -> Self {
        assert_eq!(words.len(), words_for(len));
        let mut v = Self { len, words };
        v.clear_tail();
        v
    }

    fn clear_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn xor_assign(&mut self, other: &BitVector) {
        assert_eq!(self.len, other.len, "xor of unequal lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitVector) -> bool {
        assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
            & 1
            == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Bits `start..start + len` as a new vector.
    pub fn slice(&self, start: usize, len: usize) -> BitVector {
        let mut out = BitVector::zeros(len);
        for i in 0..len {
            if self.get(start + i) {
                out.set(i, true);
            }
        }
        out
    }

    /// Append `other` at the end.
    pub fn extend(&mut self, other: &BitVector) {
        let shift = self.len % 64;
        let first = self.len / 64;
        self.len += other.len;
        self.words.resize(words_for(self.len), 0);
        let total = self.words.len();
        for (i, &w) in other.words.iter().enumerate() {
            if first + i < total {
                self.words[first + i] |= w << shift;
            }
            if shift != 0 && first + i + 1 < total {
                self.words[first + i + 1] |= w >> (64 - shift);
            }
        }
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect();
        write!(f, "BitVector[{s}]")
    }
}

/// Dense bit matrix, row-major, each row padded to whole words.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Build from 0/1 rows.
    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged rows");
            for (j, &b) in r.iter().enumerate() {
                m.set(i, j, b & 1 == 1);
            }
        }
        m
    }

    /// Fill from a generator of 64-bit words, one row at a time; tail bits
    /// beyond `cols` are masked off.
    pub fn from_word_fn(rows: usize, cols: usize, mut word: impl FnMut(usize, usize) -> u64) -> Self {
        let mut m = Self::zeros(rows, cols);
        let tail = cols % 64;
        for r in 0..rows {
            for w in 0..m.stride {
                let mut x = word(r, w);
                if tail != 0 && w + 1 == m.stride {
                    x &= (1u64 << tail) - 1;
                }
                m.data[r * m.stride + w] = x;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.data[r * self.stride + c / 64] >> (c % 64)) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, bit: bool) {
        let w = &mut self.data[r * self.stride + c / 64];
        let mask = 1u64 << (c % 64);
        if bit {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row(&self, r: usize) -> BitVector {
        BitVector::from_words(self.row_words(r).to_vec(), self.cols)
    }

    /// `M v` over GF(2).
    pub fn mat_vec(&self, v: &BitVector) -> Result<BitVector, Gf2Error> {
        if v.len() != self.cols {
            return Err(Gf2Error::DimensionMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        let mut out = BitVector::zeros(self.rows);
        self.mat_vec_xor_into(v, &mut out);
        Ok(out)
    }

    /// `acc ^= M v`; dimensions are the caller's responsibility.
    #[inline]
    pub fn mat_vec_xor_into(&self, v: &BitVector, acc: &mut BitVector) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(acc.len(), self.rows);
        let vw = v.words();
        for r in 0..self.rows {
            let row = self.row_words(r);
            let folded = row.iter().zip(vw).fold(0u64, |p, (a, b)| p ^ (a & b));
            if folded.count_ones() & 1 == 1 {
                acc.words[r / 64] ^= 1u64 << (r % 64);
            }
        }
    }

    /// `acc ^= Mᵀ v`: XOR of the rows picked out by the set bits of `v`.
    /// Equals `mat_vec_xor_into` on the transpose, and is much cheaper when
    /// `v` is sparse.
    #[inline]
    pub fn xor_selected_rows_into(&self, v: &BitVector, acc: &mut BitVector) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(acc.len(), self.cols);
        for (w, &word) in v.words().iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let r = w * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                for (a, b) in acc.words.iter_mut().zip(self.row_words(r)) {
                    *a ^= b;
                }
            }
        }
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    t.set(c, r, true);
                }
            }
        }
        t
    }

    /// Rank by Gaussian elimination on a copy.
    pub fn rank(&self) -> usize {
        let mut rows: Vec<Vec<u64>> = (0..self.rows).map(|r| self.row_words(r).to_vec()).collect();
        let mut rank = 0;
        for c in 0..self.cols {
            let (w, bit) = (c / 64, 1u64 << (c % 64));
            let Some(p) = (rank..rows.len()).find(|&i| rows[i][w] & bit != 0) else {
                continue;
            };
            rows.swap(rank, p);
            let pivot = rows[rank].clone();
            for (i, row) in rows.iter_mut().enumerate() {
                if i != rank && row[w] & bit != 0 {
                    for (a, b) in row.iter_mut().zip(&pivot) {
                        *a ^= b;
                    }
                }
            }
            rank += 1;
        }
        rank
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let s: String = (0..self.cols).map(|c| if self.get(r, c) { '1' } else { '0' }).collect();
            writeln!(f, "  {s}")?;
        }
        Ok(())
    }
}

/// Row of the reduced system; `words[0]` holds columns starting at the
/// solver's `base_word * 64`.
#[derive(Debug, Clone)]
struct Row {
    pivot: usize,
    words: Vec<u64>,
    rhs: bool,
}

impl Row {
    fn weight(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    fn has(&self, rel_col: usize) -> bool {
        self.words.get(rel_col / 64).is_some_and(|w| (w >> (rel_col % 64)) & 1 == 1)
    }

    fn xor_from(&mut self, other: &Row) {
        if self.words.len() < other.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
        self.rhs ^= other.rhs;
    }
}

/// Outcome of adding one equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    /// Increased the rank; new pivot column.
    NewPivot(usize),
    /// Linear combination of earlier equations.
    Redundant,
}

/// Incremental Gaussian elimination over unknowns that arrive in blocks
/// (one block per time step).
///
/// Columns are ordered by time. The decoded prefix is the largest `τ` such
/// that every unknown of blocks `1..=τ` is determined; its values are moved
/// out of the active system, so elimination cost scales with the undecoded
/// window rather than the full history.
#[derive(Debug, Clone)]
pub struct IncrementalSolver {
    block_len: usize,
    unknowns: usize,
    prefix_blocks: usize,
    prefix_values: BitVector,
    /// Active rows store columns from `base_word * 64`.
    base_word: usize,
    rows: Vec<Row>,
    /// `pivot_of[c - base_word * 64]` = index into `rows`.
    pivot_of: Vec<u32>,
}

const NO_ROW: u32 = u32::MAX;

impl IncrementalSolver {
    pub fn new(block_len: usize) -> Self {
        assert!(block_len > 0, "block length must be positive");
        Self {
            block_len,
            unknowns: 0,
            prefix_blocks: 0,
            prefix_values: BitVector::zeros(0),
            base_word: 0,
            rows: Vec::new(),
            pivot_of: Vec::new(),
        }
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn unknown_count(&self) -> usize {
        self.unknowns
    }

    /// First column not covered by the decoded prefix.
    pub fn window_start(&self) -> usize {
        self.prefix_blocks * self.block_len
    }

    /// Rank of the accumulated system (prefix included).
    pub fn rank(&self) -> usize {
        self.window_start() + self.rows.iter().filter(|r| r.pivot >= self.window_start()).count()
    }

    /// Append `count` unknowns at the end of the time order.
    pub fn append_unknowns(&mut self, count: usize) {
        self.unknowns += count;
        self.pivot_of.resize(self.unknowns - self.base_word * 64, NO_ROW);
    }

    pub fn append_block(&mut self) {
        self.append_unknowns(self.block_len);
    }

    /// Add `coeffs · x = rhs`, with `coeffs` spanning all current unknowns.
    pub fn add_equation(&mut self, coeffs: &BitVector, rhs: bool) -> Result<Insertion, Gf2Error> {
        if coeffs.len() != self.unknowns {
            return Err(Gf2Error::DimensionMismatch {
                expected: self.unknowns,
                got: coeffs.len(),
            });
        }
        // Substitute the decoded prefix.
        let start = self.window_start();
        let mut rhs = rhs;
        let mut parity = 0u32;
        let full = start / 64;
        for w in 0..full {
            parity ^= (coeffs.words()[w] & self.prefix_values.words()[w]).count_ones();
        }
        if start % 64 != 0 {
            let mask = (1u64 << (start % 64)) - 1;
            parity ^= (coeffs.words()[full] & self.prefix_values.words()[full] & mask).count_ones();
        }
        rhs ^= parity & 1 == 1;
        let mut words = coeffs.words()[self.base_word..].to_vec();
        let skip = start - self.base_word * 64;
        clear_low_bits(&mut words, skip);
        self.insert(words, rhs)
    }

    /// Add an equation whose coefficients are given only on the undecoded
    /// window, i.e. `window[i]` is the coefficient of column
    /// `window_start() + i`. Decoded-prefix contributions must already be
    /// folded into `rhs`.
    pub fn add_window_equation(&mut self, window: &BitVector, rhs: bool) -> Result<Insertion, Gf2Error> {
        let expected = self.unknowns - self.window_start();
        if window.len() != expected {
            return Err(Gf2Error::DimensionMismatch {
                expected,
                got: window.len(),
            });
        }
        let shift = self.window_start() - self.base_word * 64;
        let words = shift_left(window.words(), shift, words_for(self.unknowns - self.base_word * 64));
        self.insert(words, rhs)
    }

    /// Add every row of `coeffs` with the matching bit of `rhs`.
    pub fn add_equations(&mut self, coeffs: &BitMatrix, rhs: &BitVector) -> Result<(), Gf2Error> {
        if rhs.len() != coeffs.rows() {
            return Err(Gf2Error::DimensionMismatch {
                expected: coeffs.rows(),
                got: rhs.len(),
            });
        }
        for r in 0..coeffs.rows() {
            self.add_equation(&coeffs.row(r), rhs.get(r))?;
        }
        Ok(())
    }

    fn insert(&mut self, mut words: Vec<u64>, mut rhs: bool) -> Result<Insertion, Gf2Error> {
        let base = self.base_word * 64;
        let mut pivot: Option<usize> = None;
        let mut cursor = 0usize;
        while let Some(c) = next_set_bit(&words, cursor) {
            let r = self.pivot_of[c];
            if r != NO_ROW {
                let row = &self.rows[r as usize];
                for (a, b) in words.iter_mut().zip(&row.words) {
                    *a ^= b;
                }
                rhs ^= row.rhs;
            } else if pivot.is_none() {
                pivot = Some(c);
            }
            cursor = c + 1;
        }
        let Some(p) = pivot else {
            return if rhs {
                Err(Gf2Error::InconsistentSystem)
            } else {
                Ok(Insertion::Redundant)
            };
        };
        while words.last() == Some(&0) {
            words.pop();
        }
        let new_row = Row {
            pivot: p + base,
            words,
            rhs,
        };
        // Keep the system fully reduced: clear column p from earlier rows.
        for row in &mut self.rows {
            if row.has(p) {
                row.xor_from(&new_row);
            }
        }
        self.pivot_of[p] = self.rows.len() as u32;
        self.rows.push(new_row);
        self.advance_prefix();
        Ok(Insertion::NewPivot(p + base))
    }

    fn row_for(&self, col: usize) -> Option<&Row> {
        let base = self.base_word * 64;
        if col < base || col >= self.unknowns {
            return None;
        }
        match self.pivot_of[col - base] {
            NO_ROW => None,
            r => Some(&self.rows[r as usize]),
        }
    }

    /// Value of unknown `col` if it is uniquely determined.
    pub fn value(&self, col: usize) -> Option<bool> {
        if col < self.window_start() {
            return Some(self.prefix_values.get(col));
        }
        let row = self.row_for(col)?;
        (row.weight() == 1).then_some(row.rhs)
    }

    pub fn is_determined(&self, col: usize) -> bool {
        self.value(col).is_some()
    }

    /// All determined unknowns, ascending.
    pub fn determined_columns(&self) -> Vec<usize> {
        (0..self.unknowns).filter(|&c| self.is_determined(c)).collect()
    }

    /// Number of leading blocks that are fully determined.
    pub fn decoded_prefix(&self) -> usize {
        self.prefix_blocks
    }

    /// Values of block `i` (0-based), which must lie in the decoded prefix.
    pub fn prefix_block(&self, i: usize) -> BitVector {
        assert!(i < self.prefix_blocks, "block {i} is not decoded");
        self.prefix_values.slice(i * self.block_len, self.block_len)
    }

    /// All decoded blocks in time order.
    pub fn decoded_blocks(&self) -> Vec<BitVector> {
        (0..self.prefix_blocks).map(|i| self.prefix_block(i)).collect()
    }

    fn advance_prefix(&mut self) {
        let mut advanced = false;
        loop {
            let start = self.window_start();
            let end = start + self.block_len;
            if end > self.unknowns {
                break;
            }
            let mut block = BitVector::zeros(self.block_len);
            let mut complete = true;
            for c in start..end {
                match self.value(c) {
                    Some(v) => block.set(c - start, v),
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if !complete {
                break;
            }
            self.prefix_values.extend(&block);
            self.prefix_blocks += 1;
            advanced = true;
        }
        if advanced {
            self.compact();
        }
    }

    /// Drop unit rows inside the prefix and rebase the remaining rows.
    fn compact(&mut self) {
        let start = self.window_start();
        self.rows.retain(|r| r.pivot >= start);
        let new_base = start / 64;
        let shift = new_base - self.base_word;
        if shift > 0 {
            for row in &mut self.rows {
                debug_assert!(row.words.iter().take(shift).all(|&w| w == 0));
                row.words.drain(..shift.min(row.words.len()));
            }
            self.base_word = new_base;
        }
        self.pivot_of.clear();
        self.pivot_of.resize(self.unknowns - self.base_word * 64, NO_ROW);
        for (i, row) in self.rows.iter().enumerate() {
            self.pivot_of[row.pivot - self.base_word * 64] = i as u32;
        }
    }
}

fn clear_low_bits(words: &mut [u64], bits: usize) {
    for w in words.iter_mut().take(bits / 64) {
        *w = 0;
    }
    if bits % 64 != 0 {
        if let Some(w) = words.get_mut(bits / 64) {
            *w &= !((1u64 << (bits % 64)) - 1);
        }
    }
}

/// Shift a packed bit string towards higher columns by `shift < 64`,
/// producing exactly `out_words` words.
fn shift_left(src: &[u64], shift: usize, out_words: usize) -> Vec<u64> {
    debug_assert!(shift < 64);
    let mut out = vec![0u64; out_words];
    if shift == 0 {
        for (o, s) in out.iter_mut().zip(src) {
            *o = *s;
        }
        return out;
    }
    for (i, &w) in src.iter().enumerate() {
        if i < out_words {
            out[i] |= w << shift;
        }
        if i + 1 < out_words {
            out[i + 1] |= w >> (64 - shift);
        }
    }
    out
}

fn next_set_bit(words: &[u64], from: usize) -> Option<usize> {
    let mut wi = from / 64;
    if wi >= words.len() {
        return None;
    }
    let mut w = words[wi] & (!0u64 << (from % 64));
    loop {
        if w != 0 {
            return Some(wi * 64 + w.trailing_zeros() as usize);
        }
        wi += 1;
        if wi >= words.len() {
            return None;
        }
        w = words[wi];
    }
}
