//! Search for tuples of unitaries satisfying a system of linear equations.
//!
//! The equations `L(W_1, ..., W_r) = R` are linear in the unknown blocks.
//! Their solution set is an affine subspace; the search alternates between
//! projecting onto that subspace and replacing each block by its polar
//! unitary factor. Every candidate is judged only by a caller-supplied
//! certificate, so a returned witness is always genuine. Failure to find one
//! says nothing definite.

use rand::Rng;

use crate::matcore::{lstsq, nullspace, polar_unitary, unvec, vec_of, vstack, zeros, CMat};
use crate::random::{gaussian, rng};
use crate::scalar::{re, Real};

const MAX_ITERATIONS: usize = 200;
const SEED: u64 = 0x5eed_0f_0a11;

/// Outcome of a search: the witness blocks if the certificate passed, and
/// the smallest certificate value seen either way.
#[derive(Clone, Debug)]
pub(crate) struct SearchOutcome<T: Real> {
    pub witness: Option<Vec<CMat<T>>>,
    pub best_residual: T,
}

fn flatten<T: Real>(blocks: &[CMat<T>]) -> CMat<T> {
    let parts: Vec<CMat<T>> = blocks.iter().map(vec_of).collect();
    vstack(1, &parts)
}

fn split<T: Real>(w: &CMat<T>, sizes: &[usize]) -> Vec<CMat<T>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &s in sizes {
        let part: Vec<_> = w.as_slice()[at..at + s * s].to_vec();
        out.push(unvec(&part, s, s));
        at += s * s;
    }
    out
}

fn identities<T: Real>(sizes: &[usize]) -> Vec<CMat<T>> {
    sizes.iter().map(|&s| crate::matcore::identity(s)).collect()
}

/// Finds unitary blocks of the given sizes.
///
/// `equations` must be affine in the blocks and return all residual
/// entries as one matrix (any shape, fixed across calls). `certificate`
/// scores a unitary candidate; values below `accept` are accepted.
pub(crate) fn find_unitaries<T, E, C>(
    sizes: &[usize],
    equations: E,
    certificate: C,
    accept: T,
    rank_tol: T,
    restarts: usize,
) -> SearchOutcome<T>
where
    T: Real,
    E: Fn(&[CMat<T>]) -> CMat<T>,
    C: Fn(&[CMat<T>]) -> T,
{
    let unknowns: usize = sizes.iter().map(|s| s * s).sum();
    let zero_blocks: Vec<CMat<T>> = sizes.iter().map(|&s| zeros(s, s)).collect();
    let offset = vec_of(&equations(&zero_blocks));
    let rows = offset.nrows();

    // Columns of the linear part, one per unknown entry.
    let mut lin = zeros::<T>(rows, unknowns);
    for col in 0..unknowns {
        let mut e = zeros::<T>(unknowns, 1);
        e[(col, 0)] = crate::scalar::lift(T::one());
        let image = vec_of(&equations(&split(&e, sizes))) - &offset;
        lin.set_column(col, &image.column(0));
    }
    let rhs = -offset;
    let particular = lstsq(&lin, &rhs, rank_tol);
    let null = nullspace(&lin, rank_tol).into_basis();
    let project = |w: &CMat<T>| -> CMat<T> {
        let delta = w - &particular;
        &particular + &null * (null.adjoint() * delta)
    };

    let mut best = T::max_value().unwrap_or_else(T::one);
    let mut r = rng(SEED);
    for attempt in 0..restarts.max(1) {
        let start = if attempt == 0 {
            project(&flatten(&identities::<T>(sizes)))
        } else {
            // A random point of the affine solution set.
            let mut g = zeros::<T>(null.ncols(), 1);
            for i in 0..null.ncols() {
                g[(i, 0)] = gaussian(&mut r);
            }
            let scale = re::<T>(0.5 + r.random::<f64>());
            &particular + &null * g * crate::scalar::lift(scale)
        };
        let mut w = start;
        let mut last = T::max_value().unwrap_or_else(T::one);
        for _ in 0..MAX_ITERATIONS {
            let blocks: Vec<CMat<T>> = split(&w, sizes).iter().map(polar_unitary).collect();
            let score = certificate(&blocks);
            if score < best {
                best = score;
            }
            if score < accept {
                return SearchOutcome {
                    witness: Some(blocks),
                    best_residual: score,
                };
            }
            let flat = flatten(&blocks);
            let next = project(&flat);
            let moved = crate::matcore::fro(&(&next - &flat));
            if moved >= last * re::<T>(0.999_999) && moved > T::zero() {
                // Stalled away from the unitary set.
                break;
            }
            last = moved;
            w = next;
        }
    }
    SearchOutcome {
        witness: None,
        best_residual: best,
    }
}
