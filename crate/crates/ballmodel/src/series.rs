//! Truncated matrix-valued power series in commuting variables (keyed by
//! multi-indices) and in noncommuting indeterminates (keyed by words).
//!
//! Words are stored in written order: the word `w = w_0 w_1 ... w_m` stands
//! for the monomial `z_{w_0} z_{w_1} ... z_{w_m}` and its coefficient in
//! `(I - sum z_j M_j)^{-1}` is the product `M_{w_0} M_{w_1} ... M_{w_m}`.
//! Letters are zero-based internally and printed one-based.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::matcore::{fro, identity, inclusion, zeros, CMat};
use crate::scalar::{lift, re, Real};

/// Exponent tuple `n = (n_1, ..., n_d)`.
///
/// Ordered by total degree, then lexicographically with larger leading
/// exponents first, so `1 < z_1 < z_2 < z_1^2 < z_1 z_2 < z_2^2 < ...`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(exponents: Vec<usize>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    pub fn unit(d: usize, k: usize) -> Self {
        let mut v = vec![0; d];
        v[k] = 1;
        MultiIndex(v)
    }

    pub fn exponents(&self) -> &[usize] {
        &self.0
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().sum()
    }

    /// `n - e_k`, if nonnegative.
    pub fn minus(&self, k: usize) -> Option<Self> {
        if self.0[k] == 0 {
            return None;
        }
        let mut v = self.0.clone();
        v[k] -= 1;
        Some(MultiIndex(v))
    }

    pub fn plus(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v[k] += 1;
        MultiIndex(v)
    }

    /// Drury-Arveson weight `n! / |n|!`.
    pub fn da_weight(&self) -> f64 {
        let mut w = 1.0;
        let mut total = 0usize;
        for &e in &self.0 {
            for i in 1..=e {
                total += 1;
                w *= i as f64 / total as f64;
            }
        }
        w
    }

    /// Multinomial coefficient `|n|! / n!`.
    pub fn multinomial(&self) -> f64 {
        1.0 / self.da_weight()
    }

    /// `z^n` at a point.
    pub fn monomial<T: Real>(&self, z: &[Complex<T>]) -> Complex<T> {
        let mut acc = lift(T::one());
        for (k, &e) in self.0.iter().enumerate() {
            for _ in 0..e {
                acc *= z[k];
            }
        }
        acc
    }

    /// Comma-separated exponents, used as a serialization key.
    pub fn key(&self) -> String {
        self.0
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_key(s: &str) -> Option<Self> {
        if s.is_empty() {
            return Some(MultiIndex(Vec::new()));
        }
        s.split(',')
            .map(|t| t.trim().parse::<usize>().ok())
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    /// All multi-indices with `d` entries and total degree at most `order`,
    /// in canonical order.
    pub fn up_to(d: usize, order: usize) -> Vec<Self> {
        let mut out = Vec::new();
        for deg in 0..=order {
            out.extend(Self::of_degree(d, deg));
        }
        out
    }

    pub fn of_degree(d: usize, deg: usize) -> Vec<Self> {
        fn rec(d: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if prefix.len() + 1 == d {
                prefix.push(left);
                out.push(MultiIndex(prefix.clone()));
                prefix.pop();
                return;
            }
            for e in (0..=left).rev() {
                prefix.push(e);
                rec(d, left - e, prefix, out);
                prefix.pop();
            }
        }
        if d == 0 {
            return if deg == 0 {
                vec![MultiIndex(Vec::new())]
            } else {
                Vec::new()
            };
        }
        let mut out = Vec::new();
        rec(d, deg, &mut Vec::new(), &mut out);
        out
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.key())
    }
}

/// Word over the alphabet `{0, ..., d-1}`, ordered by length then
/// lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(letters: Vec<usize>) -> Self {
        Word(letters)
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn letter(j: usize) -> Self {
        Word(vec![j])
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Letters of `self` followed by letters of `other`.
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// Letter reversal.
    pub fn transpose(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    /// Splits off the last letter.
    pub fn split_last(&self) -> Option<(Word, usize)> {
        let (&last, rest) = self.0.split_last()?;
        Some((Word(rest.to_vec()), last))
    }

    /// Splits off the first letter.
    pub fn split_first(&self) -> Option<(usize, Word)> {
        let (&first, rest) = self.0.split_first()?;
        Some((first, Word(rest.to_vec())))
    }

    pub fn abelianize(&self, d: usize) -> MultiIndex {
        let mut v = vec![0; d];
        for &l in &self.0 {
            v[l] += 1;
        }
        MultiIndex(v)
    }

    /// One-based letters, dot-separated; the empty word is `""`.
    pub fn key(&self) -> String {
        self.0
            .iter()
            .map(|l| (l + 1).to_string())
            .collect::<Vec<_>>()
            .join(".")
    }

    pub fn parse_key(s: &str) -> Option<Self> {
        if s.is_empty() {
            return Some(Word::empty());
        }
        s.split('.')
            .map(|t| t.trim().parse::<usize>().ok().and_then(|x| x.checked_sub(1)))
            .collect::<Option<Vec<_>>>()
            .map(Word)
    }

    /// Ordered product `M_{w_0} ... M_{w_m}` applied to nothing (identity
    /// of size `n` for the empty word).
    pub fn product<T: Real>(&self, blocks: &[CMat<T>], n: usize) -> CMat<T> {
        let mut acc = identity::<T>(n);
        for &l in &self.0 {
            acc *= &blocks[l];
        }
        acc
    }

    /// All words of length at most `max_len`, in canonical order.
    pub fn up_to(d: usize, max_len: usize) -> Vec<Word> {
        let mut out = vec![Word::empty()];
        let mut layer = vec![Word::empty()];
        for _ in 0..max_len {
            let mut next = Vec::with_capacity(layer.len() * d);
            for w in &layer {
                for j in 0..d {
                    let mut v = w.0.clone();
                    v.push(j);
                    next.push(Word(v));
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            write!(f, "\u{2205}")
        } else {
            write!(f, "{}", self.key())
        }
    }
}

/// Truncated power series in `d` commuting variables with `rows x cols`
/// matrix coefficients. Missing coefficients are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CommSeries<T: Real> {
    d: usize,
    rows: usize,
    cols: usize,
    order: usize,
    coeffs: BTreeMap<MultiIndex, CMat<T>>,
}

impl<T: Real> CommSeries<T> {
    pub fn zero(d: usize, rows: usize, cols: usize, order: usize) -> Self {
        CommSeries {
            d,
            rows,
            cols,
            order,
            coeffs: BTreeMap::new(),
        }
    }

    /// Constant series.
    pub fn constant(d: usize, c: CMat<T>, order: usize) -> Self {
        let mut s = Self::zero(d, c.nrows(), c.ncols(), order);
        s.set(MultiIndex::zero(d), c);
        s
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &BTreeMap<MultiIndex, CMat<T>> {
        &self.coeffs
    }

    /// Stores a coefficient; indices beyond the order are dropped.
    pub fn set(&mut self, n: MultiIndex, c: CMat<T>) {
        assert_eq!(n.d(), self.d, "multi-index length");
        assert_eq!(c.shape(), (self.rows, self.cols), "coefficient shape");
        if n.degree() <= self.order {
            self.coeffs.insert(n, c);
        }
    }

    pub fn get(&self, n: &MultiIndex) -> CMat<T> {
        self.coeffs
            .get(n)
            .cloned()
            .unwrap_or_else(|| zeros(self.rows, self.cols))
    }

    /// Truncated sum at a point.
    pub fn eval(&self, z: &[Complex<T>]) -> CMat<T> {
        let mut acc = zeros(self.rows, self.cols);
        for (n, c) in &self.coeffs {
            acc += c * n.monomial(z);
        }
        acc
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.d, self.rows, self.cols), (other.d, other.rows, other.cols));
        let order = self.order.min(other.order);
        let mut out = Self::zero(self.d, self.rows, self.cols, order);
        for n in MultiIndex::up_to(self.d, order) {
            let s = self.coeffs.get(&n);
            let o = other.coeffs.get(&n);
            match (s, o) {
                (Some(a), Some(b)) => out.set(n, a + b),
                (Some(a), None) => out.set(n, a.clone()),
                (None, Some(b)) => out.set(n, b.clone()),
                (None, None) => {}
            }
        }
        out
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c *= s;
        }
        out
    }

    /// Cauchy product, truncated at the smaller order.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d, "variable count");
        assert_eq!(self.cols, other.rows, "inner dimension");
        let order = self.order.min(other.order);
        let mut out = Self::zero(self.d, self.rows, other.cols, order);
        let mut acc: BTreeMap<MultiIndex, CMat<T>> = BTreeMap::new();
        for (a, ca) in &self.coeffs {
            for (b, cb) in &other.coeffs {
                if a.degree() + b.degree() > order {
                    continue;
                }
                let n = MultiIndex(a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect());
                let p = ca * cb;
                acc.entry(n)
                    .and_modify(|m| *m += &p)
                    .or_insert(p);
            }
        }
        for (n, c) in acc {
            out.set(n, c);
        }
        out
    }

    /// Multiplication by `z_j`; the order grows by one.
    pub fn times_variable(&self, j: usize) -> Self {
        let mut out = Self::zero(self.d, self.rows, self.cols, self.order + 1);
        for (n, c) in &self.coeffs {
            out.set(n.plus(j), c.clone());
        }
        out
    }

    /// Drury-Arveson inner product `sum (n!/|n|!) tr(g_n^* f_n)`.
    pub fn da_inner(&self, g: &Self) -> Complex<T> {
        let mut acc = lift(T::zero());
        for (n, f) in &self.coeffs {
            if let Some(gn) = g.coeffs.get(n) {
                let w = lift(re::<T>(n.da_weight()));
                acc += (gn.adjoint() * f).trace() * w;
            }
        }
        acc
    }

    /// Largest coefficient difference against another series.
    pub fn max_diff(&self, other: &Self) -> T {
        let order = self.order.min(other.order);
        MultiIndex::up_to(self.d, order)
            .into_iter()
            .map(|n| fro(&(self.get(&n) - other.get(&n))))
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Truncated series in noncommuting indeterminates with matrix
/// coefficients keyed by words.
#[derive(Clone, Debug, PartialEq)]
pub struct NcSeries<T: Real> {
    d: usize,
    rows: usize,
    cols: usize,
    order: usize,
    coeffs: BTreeMap<Word, CMat<T>>,
}

impl<T: Real> NcSeries<T> {
    pub fn zero(d: usize, rows: usize, cols: usize, order: usize) -> Self {
        NcSeries {
            d,
            rows,
            cols,
            order,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &BTreeMap<Word, CMat<T>> {
        &self.coeffs
    }

    pub fn set(&mut self, w: Word, c: CMat<T>) {
        assert_eq!(c.shape(), (self.rows, self.cols), "coefficient shape");
        if w.len() <= self.order {
            self.coeffs.insert(w, c);
        }
    }

    pub fn get(&self, w: &Word) -> CMat<T> {
        self.coeffs
            .get(w)
            .cloned()
            .unwrap_or_else(|| zeros(self.rows, self.cols))
    }

    /// Sums coefficients over words with equal letter counts.
    pub fn abelianize(&self) -> CommSeries<T> {
        let mut out = CommSeries::zero(self.d, self.rows, self.cols, self.order);
        let mut acc: BTreeMap<MultiIndex, CMat<T>> = BTreeMap::new();
        for (w, c) in &self.coeffs {
            acc.entry(w.abelianize(self.d))
                .and_modify(|m| *m += c)
                .or_insert_with(|| c.clone());
        }
        for (n, c) in acc {
            out.set(n, c);
        }
        out
    }

    pub fn max_diff(&self, other: &Self) -> T {
        let order = self.order.min(other.order);
        Word::up_to(self.d, order)
            .into_iter()
            .map(|w| fro(&(self.get(&w) - other.get(&w))))
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Which side the recursion multiplies the blocks on. Both give the same
/// coefficients; the choice only changes the order of floating-point work.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Side {
    /// `F_n = sum_j M_j F_{n - e_j}`.
    #[default]
    Left,
    /// `F_n = sum_j F_{n - e_j} M_j`.
    Right,
}

/// Optional constant factors applied to every coefficient: `L F_n R`.
#[derive(Clone, Debug, Default)]
pub struct Caps<T: Real> {
    pub left: Option<CMat<T>>,
    pub right: Option<CMat<T>>,
}

impl<T: Real> Caps<T> {
    pub fn none() -> Self {
        Caps {
            left: None,
            right: None,
        }
    }

    pub fn new(left: Option<CMat<T>>, right: Option<CMat<T>>) -> Self {
        Caps { left, right }
    }

    fn apply(&self, f: &CMat<T>) -> CMat<T> {
        let mut out = match &self.left {
            Some(l) => l * f,
            None => f.clone(),
        };
        if let Some(r) = &self.right {
            out *= r;
        }
        out
    }

    fn shape(&self, n: usize) -> Result<(usize, usize)> {
        let rows = match &self.left {
            Some(l) if l.ncols() != n => {
                return Err(Error::DimensionMismatch(format!(
                    "left cap has {} columns, blocks are {}x{}",
                    l.ncols(),
                    n,
                    n
                )))
            }
            Some(l) => l.nrows(),
            None => n,
        };
        let cols = match &self.right {
            Some(r) if r.nrows() != n => {
                return Err(Error::DimensionMismatch(format!(
                    "right cap has {} rows, blocks are {}x{}",
                    r.nrows(),
                    n,
                    n
                )))
            }
            Some(r) => r.ncols(),
            None => n,
        };
        Ok((rows, cols))
    }
}

fn block_size<T: Real>(blocks: &[CMat<T>]) -> Result<usize> {
    let n = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    for (i, b) in blocks.iter().enumerate() {
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "block {} is {}x{}, expected {}x{}",
                i,
                b.nrows(),
                b.ncols(),
                n,
                n
            )));
        }
    }
    Ok(n)
}

/// Raw coefficients `F_n` of `(I - sum z_j M_j)^{-1}` up to total degree
/// `order`, with `n x n` identity for `d = 0` blocks.
fn resolvent_coefficients<T: Real>(
    blocks: &[CMat<T>],
    n: usize,
    order: usize,
    side: Side,
) -> BTreeMap<MultiIndex, CMat<T>> {
    let d = blocks.len();
    let mut f: BTreeMap<MultiIndex, CMat<T>> = BTreeMap::new();
    f.insert(MultiIndex::zero(d), identity(n));
    for deg in 1..=order {
        for idx in MultiIndex::of_degree(d, deg) {
            let mut acc = zeros::<T>(n, n);
            for (j, m) in blocks.iter().enumerate() {
                if let Some(prev) = idx.minus(j) {
                    let p = &f[&prev];
                    match side {
                        Side::Left => acc += m * p,
                        Side::Right => acc += p * m,
                    }
                }
            }
            f.insert(idx, acc);
        }
    }
    f
}

/// Taylor coefficients of `L (I - sum_j z_j M_j)^{-1} R` to total degree
/// `order`.
pub fn resolvent_taylor_comm<T: Real>(
    blocks: &[CMat<T>],
    order: usize,
    side: Side,
    caps: &Caps<T>,
) -> Result<CommSeries<T>> {
    let n = block_size(blocks)?;
    let (rows, cols) = caps.shape(n)?;
    let d = blocks.len();
    let mut out = CommSeries::zero(d, rows, cols, order);
    for (idx, f) in resolvent_coefficients(blocks, n, order, side) {
        out.set(idx, caps.apply(&f));
    }
    Ok(out)
}

/// Word coefficients `L M_{w_0} ... M_{w_m} R` of the noncommutative
/// resolvent, for all words of length at most `max_len`.
pub fn nc_resolvent_series<T: Real>(
    blocks: &[CMat<T>],
    max_len: usize,
    caps: &Caps<T>,
) -> Result<NcSeries<T>> {
    let n = block_size(blocks)?;
    let (rows, cols) = caps.shape(n)?;
    let d = blocks.len();
    let mut out = NcSeries::zero(d, rows, cols, max_len);
    // Left-capped prefixes L M_{w_0} ... M_{w_m}, extended one letter at a time.
    let start = match &caps.left {
        Some(l) => l.clone(),
        None => identity(n),
    };
    let mut layer = vec![(Word::empty(), start)];
    for len in 0..=max_len {
        let mut next = Vec::new();
        for (w, p) in &layer {
            let c = match &caps.right {
                Some(r) => p * r,
                None => p.clone(),
            };
            out.set(w.clone(), c);
            if len < max_len {
                for (j, m) in blocks.iter().enumerate() {
                    next.push((w.concat(&Word::letter(j)), p * m));
                }
            }
        }
        layer = next;
    }
    Ok(out)
}

/// Coefficients `X_n` of `(I - T^* Z(z))^{-1}` on `C^(dn)` for the block row
/// `T = [T_1 ... T_d]`, by the recursion
/// `X_n = sum_{j: n_j >= 1} T^* I_j^* X_{n - e_j}`.
pub fn xn_coefficients<T: Real>(t: &[CMat<T>], max_degree: usize) -> Result<BTreeMap<MultiIndex, CMat<T>>> {
    let n = block_size(t)?;
    let d = t.len();
    let tstar = crate::matcore::vstack(n, &t.iter().map(|b| b.adjoint()).collect::<Vec<_>>());
    let steps: Vec<CMat<T>> = (0..d)
        .map(|j| &tstar * inclusion::<T>(d, n, j).adjoint())
        .collect();
    Ok(resolvent_coefficients(&steps, d * n, max_degree, Side::Left))
}

/// Adjoint of multiplication by `z_j` in the Drury-Arveson metric:
/// `(M_j^* f)_n = ((n_j + 1) / (|n| + 1)) f_{n + e_j}`.
pub fn da_backward_shift<T: Real>(f: &CommSeries<T>, j: usize) -> Result<CommSeries<T>> {
    if j >= f.d() {
        return Err(Error::VariableIndex { index: j, d: f.d() });
    }
    if f.order() == 0 {
        return Err(Error::OrderZero);
    }
    let (rows, cols) = f.shape();
    let mut out = CommSeries::zero(f.d(), rows, cols, f.order() - 1);
    for idx in MultiIndex::up_to(f.d(), f.order() - 1) {
        if let Some(c) = f.coeffs().get(&idx.plus(j)) {
            let w = (idx.exponents()[j] + 1) as f64 / (idx.degree() + 1) as f64;
            out.set(idx, c * lift(re::<T>(w)));
        }
    }
    Ok(out)
}
