//! Dense linear algebra over the two-element field.
//!
//! [`BitVec`] packs coordinates into 64-bit words; coordinate `k` lives in bit
//! `k % 64` of word `k / 64`, and the textual form writes coordinate 0 first.
//! Everything above the vector length is kept zero, so equality, hashing and
//! parity can work word-at-a-time.
//!
//! Elimination uses the highest set bit of each vector as its pivot. Null
//! spaces and row-space images are walked in Gray-code order over a basis, so
//! consecutive elements differ by one basis vector and callers can update
//! running sums incrementally.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{check_dim, Error, Result};

/// Default enumeration cap, as a power of two.
pub const DEFAULT_CAP: u32 = 24;

/// A vector in `F_2^n`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVec {
    n: usize,
    words: Vec<u64>,
}

fn word_count(n: usize) -> usize {
    n.div_ceil(64)
}

impl BitVec {
    pub fn zeros(n: usize) -> Self {
        BitVec {
            n,
            words: vec![0; word_count(n)],
        }
    }

    /// The standard basis vector `e_k`.
    pub fn unit(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.set(k, true);
        v
    }

    pub fn from_indices(n: usize, ones: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(n);
        for k in ones {
            v.set(k, true);
        }
        v
    }

    /// Builds a vector from the low `n` bits of `x` (bit `k` is coordinate `k`).
    pub fn from_u64(n: usize, x: u64) -> Self {
        assert!(n <= 64, "from_u64 needs n <= 64, got {n}");
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut v = Self::zeros(n);
        if n > 0 {
            v.words[0] = x & mask;
        }
        v
    }

    /// The vector as an integer index, if it fits.
    pub fn to_u64(&self) -> Option<u64> {
        match self.words.as_slice() {
            [] => Some(0),
            [w] => Some(*w),
            _ => None,
        }
    }

    /// Uniformly random vector.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut v = Self::zeros(n);
        for w in v.words.iter_mut() {
            *w = rng.random();
        }
        v.trim();
        v
    }

    fn trim(&mut self) {
        let r = self.n % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, k: usize) -> bool {
        assert!(k < self.n, "coordinate {k} out of range (n = {})", self.n);
        (self.words[k / 64] >> (k % 64)) & 1 == 1
    }

    pub fn set(&mut self, k: usize, value: bool) {
        assert!(k < self.n, "coordinate {k} out of range (n = {})", self.n);
        let bit = 1u64 << (k % 64);
        if value {
            self.words[k / 64] |= bit;
        } else {
            self.words[k / 64] &= !bit;
        }
    }

    pub fn flip(&mut self, k: usize) {
        assert!(k < self.n, "coordinate {k} out of range (n = {})", self.n);
        self.words[k / 64] ^= 1u64 << (k % 64);
    }

    /// Hamming weight.
    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn highest_bit(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .rev()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * 64 + 63 - w.leading_zeros() as usize)
    }

    /// Indices of the nonzero coordinates, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let t = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(i * 64 + t)
                }
            })
        })
    }

    /// In-place addition. Panics on length mismatch.
    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.n, other.n, "xor of vectors with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= *b;
        }
    }

    pub fn xor(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// Inner product mod 2.
    pub fn dot(&self, other: &BitVec) -> Result<bool> {
        check_dim(self.n, other.n)?;
        Ok(self.parity_with(other))
    }

    /// Inner product mod 2 without the length check; lengths must agree.
    #[inline]
    pub fn parity_with(&self, other: &BitVec) -> bool {
        debug_assert_eq!(self.n, other.n);
        let mut acc = 0u64;
        for (a, b) in self.words.iter().zip(&other.words) {
            acc ^= a & b;
        }
        acc.count_ones() & 1 == 1
    }
}

/// Inner product mod 2 of two vectors of equal length.
pub fn dot(u: &BitVec, v: &BitVec) -> Result<bool> {
    u.dot(v)
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.n {
            f.write_str(if self.get(k) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({self})")
    }
}

impl FromStr for BitVec {
    type Err = Error;

    /// Parses a `0`/`1` string, coordinate 0 first.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut v = BitVec::zeros(s.len());
        for (k, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(k, true),
                _ => return Err(Error::parse(format!("bad character {c:?} in bit string {s:?}"))),
            }
        }
        Ok(v)
    }
}

impl serde::Serialize for BitVec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for BitVec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A basis in reduced row-echelon form; each row's pivot is its highest set
/// bit and that column is zero in every other row.
#[derive(Clone, Debug)]
pub struct Gf2Basis {
    n: usize,
    rows: Vec<BitVec>,
    pivots: Vec<usize>,
}

impl Gf2Basis {
    pub fn new(n: usize) -> Self {
        Gf2Basis {
            n,
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn from_vectors<'a>(n: usize, vectors: impl IntoIterator<Item = &'a BitVec>) -> Result<Self> {
        let mut basis = Self::new(n);
        for v in vectors {
            basis.insert(v)?;
        }
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[BitVec] {
        &self.rows
    }

    /// Reduces `v` modulo the span; the result is zero iff `v` is in the span.
    pub fn reduce(&self, v: &BitVec) -> Result<BitVec> {
        check_dim(self.n, v.len())?;
        let mut r = v.clone();
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            if r.get(p) {
                r.xor_assign(row);
            }
        }
        Ok(r)
    }

    pub fn contains(&self, v: &BitVec) -> Result<bool> {
        Ok(self.reduce(v)?.is_zero())
    }

    /// Adds `v` to the span. Returns whether the rank grew.
    pub fn insert(&mut self, v: &BitVec) -> Result<bool> {
        let r = self.reduce(v)?;
        let Some(p) = r.highest_bit() else {
            return Ok(false);
        };
        for row in self.rows.iter_mut() {
            if row.get(p) {
                row.xor_assign(&r);
            }
        }
        self.rows.push(r);
        self.pivots.push(p);
        Ok(true)
    }
}

/// Dimension of the span of `vectors`. Duplicates and zeros are harmless.
pub fn rank(vectors: &[BitVec]) -> Result<usize> {
    let Some(first) = vectors.first() else {
        return Ok(0);
    };
    Ok(Gf2Basis::from_vectors(first.len(), vectors)?.rank())
}

/// Rank of vectors packed into single words (`n <= 64`). Consumes the input.
pub fn rank_u64(vectors: impl IntoIterator<Item = u64>) -> usize {
    let mut by_pivot = [0u64; 64];
    let mut r = 0;
    for mut v in vectors {
        while v != 0 {
            let p = 63 - v.leading_zeros() as usize;
            if by_pivot[p] == 0 {
                by_pivot[p] = v;
                r += 1;
                break;
            }
            v ^= by_pivot[p];
        }
    }
    r
}

fn check_cap(what: &'static str, dim: usize, cap: u32) -> Result<()> {
    if dim > cap as usize {
        Err(Error::Capacity {
            what,
            required: dim,
            cap,
        })
    } else {
        Ok(())
    }
}

/// Visits the `2^k` elements of a `k`-dimensional space in Gray-code order.
///
/// The callback receives `None` for the zero combination, then for every later
/// element the index of the single basis vector toggled to reach it.
pub fn gray_walk(k: usize, mut visit: impl FnMut(Option<usize>)) {
    assert!(k < 64, "gray walk over 2^{k} elements");
    visit(None);
    for i in 1u64..(1u64 << k) {
        visit(Some(i.trailing_zeros() as usize));
    }
}

/// Null space of the matrix whose columns are `columns`: the subsets
/// `J ⊆ [m]` whose selected columns XOR to zero, as indicator vectors in
/// `F_2^m`.
#[derive(Clone, Debug)]
pub struct NullSpace {
    m: usize,
    rank: usize,
    basis: Vec<BitVec>,
}

impl NullSpace {
    pub fn new(columns: &[BitVec]) -> Result<Self> {
        let m = columns.len();
        let Some(first) = columns.first() else {
            return Ok(NullSpace {
                m: 0,
                rank: 0,
                basis: Vec::new(),
            });
        };
        let n = first.len();
        let mut pivot_row: Vec<Option<usize>> = vec![None; n];
        let mut rows: Vec<(BitVec, BitVec)> = Vec::new();
        let mut basis = Vec::new();
        for (i, c) in columns.iter().enumerate() {
            check_dim(n, c.len())?;
            let mut v = c.clone();
            let mut comb = BitVec::unit(m, i);
            loop {
                match v.highest_bit() {
                    None => {
                        basis.push(comb);
                        break;
                    }
                    Some(p) => match pivot_row[p] {
                        Some(k) => {
                            v.xor_assign(&rows[k].0);
                            comb.xor_assign(&rows[k].1);
                        }
                        None => {
                            pivot_row[p] = Some(rows.len());
                            rows.push((v, comb));
                            break;
                        }
                    },
                }
            }
        }
        Ok(NullSpace {
            m,
            rank: rows.len(),
            basis,
        })
    }

    /// Number of columns.
    pub fn columns(&self) -> usize {
        self.m
    }

    /// Rank of the column set.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nullity(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[BitVec] {
        &self.basis
    }

    /// Visits every null vector (the empty subset first) in Gray-code order.
    pub fn for_each(&self, cap: u32, mut visit: impl FnMut(&BitVec)) -> Result<()> {
        check_cap("null-space enumeration", self.nullity(), cap)?;
        let mut cur = BitVec::zeros(self.m);
        gray_walk(self.nullity(), |flip| {
            if let Some(b) = flip {
                cur.xor_assign(&self.basis[b]);
            }
            visit(&cur);
        });
        Ok(())
    }

    pub fn enumerate(&self, cap: u32) -> Result<Vec<BitVec>> {
        let mut out = Vec::with_capacity(1usize << self.nullity().min(cap as usize));
        self.for_each(cap, |j| out.push(j.clone()))?;
        Ok(out)
    }
}

/// All subsets of `columns` that XOR to zero, including the empty one.
pub fn nullspace_enumerate(columns: &[BitVec], cap: u32) -> Result<Vec<BitVec>> {
    NullSpace::new(columns)?.enumerate(cap)
}

/// Image of `z ↦ (row_j · z)_j` for a list of `m` rows in `F_2^n`.
///
/// The image is the span of the matrix columns; the basis kept here consists
/// of actual columns, recorded by their coordinate in `pivot_coords`.
#[derive(Clone, Debug)]
pub struct RowSpace {
    m: usize,
    basis: Vec<BitVec>,
    pivot_coords: Vec<usize>,
}

impl RowSpace {
    pub fn new(rows: &[BitVec]) -> Result<Self> {
        let m = rows.len();
        let Some(first) = rows.first() else {
            return Ok(RowSpace {
                m: 0,
                basis: Vec::new(),
                pivot_coords: Vec::new(),
            });
        };
        let n = first.len();
        for r in rows {
            check_dim(n, r.len())?;
        }
        let mut echelon = Gf2Basis::new(m);
        let mut basis = Vec::new();
        let mut pivot_coords = Vec::new();
        for k in 0..n {
            let col = BitVec::from_indices(m, (0..m).filter(|&j| rows[j].get(k)));
            if echelon.insert(&col)? {
                basis.push(col);
                pivot_coords.push(k);
            }
            if basis.len() == m {
                break;
            }
        }
        Ok(RowSpace {
            m,
            basis,
            pivot_coords,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Independent image vectors in `F_2^m` spanning the image.
    pub fn basis(&self) -> &[BitVec] {
        &self.basis
    }

    /// Coordinates `k` such that `basis[i]` is the image of `e_k`.
    pub fn pivot_coords(&self) -> &[usize] {
        &self.pivot_coords
    }

    pub fn iter(&self, cap: u32) -> Result<RowSpaceIter<'_>> {
        check_cap("row-space enumeration", self.rank(), cap)?;
        Ok(RowSpaceIter {
            space: self,
            current: BitVec::zeros(self.m),
            step: 0,
            total: 1u64 << self.rank(),
        })
    }
}

/// Gray-code iterator over a [`RowSpace`] image.
pub struct RowSpaceIter<'a> {
    space: &'a RowSpace,
    current: BitVec,
    step: u64,
    total: u64,
}

impl Iterator for RowSpaceIter<'_> {
    type Item = BitVec;

    fn next(&mut self) -> Option<BitVec> {
        if self.step >= self.total {
            return None;
        }
        if self.step > 0 {
            let b = self.step.trailing_zeros() as usize;
            self.current.xor_assign(&self.space.basis[b]);
        }
        self.step += 1;
        Some(self.current.clone())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.total - self.step) as usize;
        (left, Some(left))
    }
}

/// Every distinct sign pattern `(row_j · z)_j`, each exactly once.
pub fn rowspace_enumerate(rows: &[BitVec], cap: u32) -> Result<Vec<BitVec>> {
    let space = RowSpace::new(rows)?;
    Ok(space.iter(cap)?.collect())
}
