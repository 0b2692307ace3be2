//! Seeded generators for matrices, points and test objects.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matcore::{identity, op_norm, polar_unitary, zeros, CMat};
use crate::scalar::{lift, re, Real};

pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard complex Gaussian scalar (unit variance).
pub fn gaussian<T: Real>(r: &mut Rng64) -> Complex<T> {
    let a: f64 = r.sample(StandardNormal);
    let b: f64 = r.sample(StandardNormal);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex::new(re(a * s), re(b * s))
}

pub fn random_matrix<T: Real>(r: &mut Rng64, rows: usize, cols: usize) -> CMat<T> {
    let mut m = zeros(rows, cols);
    for c in 0..cols {
        for row in 0..rows {
            m[(row, c)] = gaussian(r);
        }
    }
    m
}

/// Haar-distributed unitary.
pub fn random_unitary<T: Real>(r: &mut Rng64, n: usize) -> CMat<T> {
    polar_unitary(&random_matrix(r, n, n))
}

/// Matrix with orthonormal columns.
pub fn random_isometry<T: Real>(r: &mut Rng64, rows: usize, cols: usize) -> CMat<T> {
    assert!(cols <= rows);
    let u = random_unitary::<T>(r, rows);
    u.columns(0, cols).into_owned()
}

/// Uniformly distributed point in the ball of the given radius.
pub fn ball_point<T: Real>(r: &mut Rng64, d: usize, radius: f64) -> Vec<Complex<T>> {
    let g: Vec<Complex<f64>> = (0..d).map(|_| gaussian(r)).collect();
    let nrm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    let u: f64 = r.random::<f64>();
    let rad = radius * u.powf(1.0 / (2 * d).max(1) as f64);
    g.iter()
        .map(|z| Complex::new(re(z.re * rad / nrm), re(z.im * rad / nrm)))
        .collect()
}

/// Point on the unit sphere of `C^d`.
pub fn sphere_point(r: &mut Rng64, d: usize) -> Vec<Complex<f64>> {
    let g: Vec<Complex<f64>> = (0..d).map(|_| gaussian(r)).collect();
    let nrm = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    g.iter().map(|z| z / nrm).collect()
}

/// `count` seeded pairs of points in the ball of the given radius.
pub fn sample_pairs<T: Real>(
    seed: u64,
    d: usize,
    count: usize,
    radius: f64,
) -> Vec<(Vec<Complex<T>>, Vec<Complex<T>>)> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| (ball_point(&mut r, d, radius), ball_point(&mut r, d, radius)))
        .collect()
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut x = 0.0;
    while i > 0 {
        f /= base as f64;
        x += f * (i % base) as f64;
        i /= base;
    }
    x
}

const PRIMES: [usize; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Fixed Halton grid of `count` points in the ball of radius `radius`.
///
/// Each point comes from a Halton vector in `[-1, 1)^(2d)`, pulled inside the
/// unit ball when it lies outside and then scaled by `radius`.
pub fn halton_ball_grid<T: Real>(d: usize, count: usize, radius: f64) -> Vec<Vec<Complex<T>>> {
    (1..=count)
        .map(|i| {
            let v: Vec<f64> = (0..2 * d)
                .map(|k| 2.0 * radical_inverse(i, PRIMES[k % PRIMES.len()]) - 1.0)
                .collect();
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = radius / nrm.max(1.0);
            (0..d)
                .map(|k| Complex::new(re(v[2 * k] * s), re(v[2 * k + 1] * s)))
                .collect()
        })
        .collect()
}

/// Random matrix scaled to the given operator norm.
pub fn random_with_norm<T: Real>(r: &mut Rng64, rows: usize, cols: usize, norm: f64) -> CMat<T> {
    let m = random_matrix::<T>(r, rows, cols);
    let s = op_norm(&m);
    if s > T::zero() {
        m * lift(re::<T>(norm) / s)
    } else {
        m
    }
}

/// Block row `[T_1 ... T_d]` with prescribed singular values.
///
/// Some singular values equal one, so the defect `I - T T*` is rank
/// deficient; the remaining ones are drawn below one.
pub fn row_with_unit_singular_values<T: Real>(
    r: &mut Rng64,
    d: usize,
    n: usize,
    ones: usize,
) -> CMat<T> {
    let w = random_unitary::<T>(r, n);
    let v = random_isometry::<T>(r, d * n, n);
    let mut s = zeros::<T>(n, n);
    for i in 0..n {
        let val = if i < ones { 1.0 } else { 0.9 * r.random::<f64>() };
        s[(i, i)] = lift(re(val));
    }
    w * s * v.adjoint()
}

/// Unitary matrix acting on `C^size` split as requested by the caller.
pub fn unitary_of_size<T: Real>(r: &mut Rng64, size: usize) -> CMat<T> {
    if size == 0 {
        identity(0)
    } else {
        random_unitary(r, size)
    }
}

/// Commuting block row `[T_1 ... T_d]` built from polynomials of degree at
/// most two in one random matrix, scaled to row norm `norm`.
pub fn commuting_row<T: Real>(r: &mut Rng64, d: usize, n: usize, norm: f64) -> Vec<CMat<T>> {
    let m = random_matrix::<T>(r, n, n);
    let m2 = &m * &m;
    let blocks: Vec<CMat<T>> = (0..d)
        .map(|_| {
            let (c0, c1, c2) = (gaussian::<T>(r), gaussian::<T>(r), gaussian::<T>(r));
            identity::<T>(n) * c0 + &m * c1 + &m2 * c2
        })
        .collect();
    let row = crate::matcore::hstack(n, &blocks);
    let s = op_norm(&row);
    if s == T::zero() {
        return blocks;
    }
    let f = lift(re::<T>(norm) / s);
    blocks.into_iter().map(|b| b * f).collect()
}
