//! Structured colligations `U = [A B; C D] : X + U -> X^d + Y` and their
//! transfer functions `S(z) = D + C (I - Z(z) A)^{-1} Z(z) B`.
//!
//! `A` and `B` are stored as their `d` blocks `A_k : X -> X` and
//! `B_k : U -> X`, so `Z(z) A = sum z_k A_k` and `Z(z) B = sum z_k B_k`.

use std::collections::BTreeMap;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::matcore::{
    at_least_one, check_finite, check_in_ball, fro, hstack, identity, inclusion, op_norm,
    orthonormal_range, solve, span_closure, block_diag, vstack, zeros, CMat, Subspace,
};
use crate::random::halton_ball_grid;
use crate::scalar::{to_f64, Real, Tolerances};
use crate::series::{resolvent_taylor_comm, Caps, CommSeries, MultiIndex, Side};
use crate::unitary_search::find_unitaries;

#[derive(Clone, Debug, PartialEq)]
pub struct Colligation<T: Real> {
    n: usize,
    p: usize,
    q: usize,
    a: Vec<CMat<T>>,
    b: Vec<CMat<T>>,
    c: CMat<T>,
    dmat: CMat<T>,
}

impl<T: Real> Colligation<T> {
    /// Builds a colligation from its blocks, checking every shape.
    pub fn new(a: Vec<CMat<T>>, b: Vec<CMat<T>>, c: CMat<T>, dmat: CMat<T>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "need d >= 1 blocks of A and B, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        let n = c.ncols();
        let (q, p) = dmat.shape();
        if c.nrows() != q {
            return Err(Error::DimensionMismatch(format!(
                "C has {} rows but D has {}",
                c.nrows(),
                q
            )));
        }
        for (k, ak) in a.iter().enumerate() {
            if ak.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "A_{} is {:?}, expected ({}, {})",
                    k + 1,
                    ak.shape(),
                    n,
                    n
                )));
            }
        }
        for (k, bk) in b.iter().enumerate() {
            if bk.shape() != (n, p) {
                return Err(Error::DimensionMismatch(format!(
                    "B_{} is {:?}, expected ({}, {})",
                    k + 1,
                    bk.shape(),
                    n,
                    p
                )));
            }
        }
        for m in a.iter().chain(b.iter()).chain([&c, &dmat]) {
            check_finite(m)?;
        }
        Ok(Colligation {
            n,
            p,
            q,
            a,
            b,
            c,
            dmat,
        })
    }

    /// Splits a `(dn + q) x (n + p)` block matrix.
    pub fn from_matrix(u: &CMat<T>, d: usize, n: usize, p: usize, q: usize) -> Result<Self> {
        if d == 0 || u.shape() != (d * n + q, n + p) {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {:?}, expected ({}, {}) for d={}",
                u.shape(),
                d * n + q,
                n + p,
                d
            )));
        }
        let a = (0..d).map(|k| u.view((k * n, 0), (n, n)).into_owned()).collect();
        let b = (0..d).map(|k| u.view((k * n, n), (n, p)).into_owned()).collect();
        let c = u.view((d * n, 0), (q, n)).into_owned();
        let dm = u.view((d * n, n), (q, p)).into_owned();
        Colligation::new(a, b, c, dm)
    }

    pub fn d(&self) -> usize {
        self.a.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn a_blocks(&self) -> &[CMat<T>] {
        &self.a
    }

    pub fn b_blocks(&self) -> &[CMat<T>] {
        &self.b
    }

    pub fn c(&self) -> &CMat<T> {
        &self.c
    }

    pub fn dmat(&self) -> &CMat<T> {
        &self.dmat
    }

    /// `A : X -> X^d` as a `dn x n` matrix.
    pub fn a_stacked(&self) -> CMat<T> {
        vstack(self.n, &self.a)
    }

    /// `B : U -> X^d` as a `dn x p` matrix.
    pub fn b_stacked(&self) -> CMat<T> {
        vstack(self.p, &self.b)
    }

    /// The full `(dn + q) x (n + p)` connecting operator.
    pub fn matrix(&self) -> CMat<T> {
        let top = hstack(self.d() * self.n, &[self.a_stacked(), self.b_stacked()]);
        let bottom = hstack(self.q, &[self.c.clone(), self.dmat.clone()]);
        vstack(self.n + self.p, &[top, bottom])
    }

    /// `sum z_k A_k`.
    pub fn za(&self, z: &[Complex<T>]) -> CMat<T> {
        let mut acc = zeros(self.n, self.n);
        for (ak, zk) in self.a.iter().zip(z) {
            acc += ak * *zk;
        }
        acc
    }

    /// `sum z_k B_k`.
    pub fn zb(&self, z: &[Complex<T>]) -> CMat<T> {
        let mut acc = zeros(self.n, self.p);
        for (bk, zk) in self.b.iter().zip(z) {
            acc += bk * *zk;
        }
        acc
    }

    fn check_point(&self, z: &[Complex<T>]) -> Result<()> {
        if z.len() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, colligation has d = {}",
                z.len(),
                self.d()
            )));
        }
        check_in_ball(z)
    }

    /// `(I - Z(z) A)^{-1} rhs`.
    pub fn solve_state(&self, z: &[Complex<T>], rhs: &CMat<T>) -> Result<CMat<T>> {
        let m = identity::<T>(self.n) - self.za(z);
        solve(&m, rhs).ok_or(Error::SingularResolvent)
    }

    /// `(I - A^* Z(z)^*)^{-1} rhs`.
    pub fn solve_state_adjoint(&self, z: &[Complex<T>], rhs: &CMat<T>) -> Result<CMat<T>> {
        let m = identity::<T>(self.n) - self.za(z).adjoint();
        solve(&m, rhs).ok_or(Error::SingularResolvent)
    }

    /// Transfer function value by a direct linear solve.
    pub fn transfer_eval(&self, z: &[Complex<T>]) -> Result<CMat<T>> {
        self.check_point(z)?;
        let x = self.solve_state(z, &self.zb(z))?;
        Ok(&self.dmat + &self.c * x)
    }

    /// Taylor coefficients of the transfer function to total degree `order`:
    /// `S_0 = D` and `S_m = C sum_{k: m_k >= 1} F_{m - e_k} B_k`, where `F`
    /// are the coefficients of `(I - sum z_k A_k)^{-1}`.
    pub fn transfer_taylor(&self, order: usize) -> CommSeries<T> {
        let d = self.d();
        let f = resolvent_taylor_comm(&self.a, order.saturating_sub(1), Side::Left, &Caps::new(Some(self.c.clone()), None))
            .expect("blocks validated on construction");
        let mut out = CommSeries::zero(d, self.q, self.p, order);
        out.set(MultiIndex::zero(d), self.dmat.clone());
        if self.n == 0 {
            return out;
        }
        for m in MultiIndex::up_to(d, order).into_iter().skip(1) {
            let mut acc = zeros(self.q, self.p);
            for k in 0..d {
                if let Some(prev) = m.minus(k) {
                    acc += f.get(&prev) * &self.b[k];
                }
            }
            out.set(m, acc);
        }
        out
    }

    /// Krylov closure of `Ran C^*` under `A_1^*, ..., A_d^*`.
    pub fn observability_space(&self, tol: T) -> Subspace<T> {
        let seed = orthonormal_range(&self.c.adjoint(), tol);
        let ops: Vec<CMat<T>> = self.a.iter().map(|a| a.adjoint()).collect();
        span_closure(&seed, &ops, tol).expect("blocks validated on construction")
    }

    /// Krylov closure of `sum_k Ran B_k` under `A_1, ..., A_d`.
    pub fn controllability_space(&self, tol: T) -> Subspace<T> {
        let seed = orthonormal_range(&hstack(self.n, &self.b), tol);
        span_closure(&seed, &self.a, tol).expect("blocks validated on construction")
    }

    /// Default truncation degree for coefficient-based spans.
    pub fn default_order(&self) -> usize {
        2 * self.n.max(1)
    }

    /// `D_{C,A} = span { Z(z)^* (I - A^* Z(z)^*)^{-1} C^* y } in X^d`.
    ///
    /// The coefficient of `conj(z)^m` is `sum_{k: m_k >= 1} I_k G_{m - e_k} C^*`
    /// with `G` the resolvent coefficients of `(A_1^*, ..., A_d^*)`.
    pub fn dca_space(&self, tol: T) -> WeakSpace<T> {
        let d = self.d();
        let n = self.n;
        let grid = halton_ball_grid::<T>(d, 4 * n.max(1) * d, 0.9);
        let mut sampled = Vec::with_capacity(grid.len());
        for z in &grid {
            let x = self
                .solve_state_adjoint(z, &self.c.adjoint())
                .expect("contractive resolvent on the grid");
            let blocks: Vec<CMat<T>> = z.iter().map(|zk| &x * zk.conj()).collect();
            sampled.push(vstack(self.q, &blocks));
        }
        let order = self.default_order();
        let astar: Vec<CMat<T>> = self.a.iter().map(|a| a.adjoint()).collect();
        let g = resolvent_taylor_comm(&astar, order - 1, Side::Left, &Caps::new(None, Some(self.c.adjoint())))
            .expect("blocks validated on construction");
        let mut coeffs = Vec::new();
        for m in MultiIndex::up_to(d, order).into_iter().skip(1) {
            let mut acc = zeros(d * n, self.q);
            for k in 0..d {
                if let Some(prev) = m.minus(k) {
                    acc += inclusion::<T>(d, n, k) * g.get(&prev);
                }
            }
            coeffs.push(acc);
        }
        WeakSpace::from_generators(d * n, &sampled, &coeffs, tol)
    }

    /// `D~_{A,B} = span { Z(z) (I - A Z(z))^{-1} B u } in X`.
    ///
    /// The coefficient of `z^m` is `sum_{k: m_k >= 1} F_{m - e_k} B_k`.
    pub fn dtilde_space(&self, tol: T) -> WeakSpace<T> {
        let d = self.d();
        let n = self.n;
        let grid = halton_ball_grid::<T>(d, 4 * n.max(1) * d, 0.9);
        let mut sampled = Vec::with_capacity(grid.len());
        for z in &grid {
            sampled.push(
                self.solve_state(z, &self.zb(z))
                    .expect("contractive resolvent on the grid"),
            );
        }
        let order = self.default_order();
        let f = resolvent_taylor_comm(&self.a, order - 1, Side::Left, &Caps::none())
            .expect("blocks validated on construction");
        let mut coeffs = Vec::new();
        for m in MultiIndex::up_to(d, order).into_iter().skip(1) {
            let mut acc = zeros(n, self.p);
            for k in 0..d {
                if let Some(prev) = m.minus(k) {
                    acc += f.get(&prev) * &self.b[k];
                }
            }
            coeffs.push(acc);
        }
        WeakSpace::from_generators(n, &sampled, &coeffs, tol)
    }

    /// Metric, structural and weak-metric flags with their residuals.
    pub fn classify(&self, tol: &Tolerances<T>) -> ColligationFlags {
        let u = self.matrix();
        let (rows, cols) = u.shape();
        let mut residuals = BTreeMap::new();
        let norm = op_norm(&u);
        let iso = fro(&(u.adjoint() * &u - identity::<T>(cols)));
        let coiso = fro(&(&u * u.adjoint() - identity::<T>(rows)));
        residuals.insert("norm_excess".to_string(), to_f64(norm - T::one()).max(0.0));
        residuals.insert("isometry".to_string(), to_f64(iso));
        residuals.insert("coisometry".to_string(), to_f64(coiso));

        let contraction = norm <= T::one() + tol.residual;
        let isometry = iso <= tol.residual;
        let coisometry = coiso <= tol.residual;

        let obs = self.observability_space(tol.rank);
        let ctr = self.controllability_space(tol.rank);
        let joint = obs.join(&ctr, tol.rank);

        let dca = self.dca_space(tol.rank);
        let dtilde = self.dtilde_space(tol.rank);
        let qo = block_diag(&[dca.space.basis().clone(), identity(self.q)]);
        let qi = block_diag(&[dtilde.space.basis().clone(), identity(self.p)]);
        let weak_co = op_norm(&(qo.adjoint() * (identity::<T>(rows) - &u * u.adjoint()) * &qo));
        let weak_iso = op_norm(&(qi.adjoint() * (identity::<T>(cols) - u.adjoint() * &u) * &qi));
        residuals.insert("weak_coisometry".to_string(), to_f64(weak_co));
        residuals.insert("weak_isometry".to_string(), to_f64(weak_iso));

        let weakly_coisometric = contraction && weak_co <= tol.residual;
        let weakly_isometric = contraction && weak_iso <= tol.residual;
        ColligationFlags {
            contraction,
            isometry,
            coisometry,
            unitary: isometry && coisometry,
            observable: obs.is_full(),
            controllable: ctr.is_full(),
            closely_connected: joint.is_full(),
            weakly_isometric,
            weakly_coisometric,
            weakly_unitary: weakly_isometric && weakly_coisometric,
            weak_spaces_stabilized: dca.stabilized && dtilde.stabilized,
            observability_dim: obs.dim(),
            controllability_dim: ctr.dim(),
            dca_dim: dca.space.dim(),
            dtilde_dim: dtilde.space.dim(),
            residuals,
        }
    }

    /// Applies a unitary change of state coordinates `x -> W x`.
    pub fn conjugate_state(&self, w: &CMat<T>) -> Result<Self> {
        if w.shape() != (self.n, self.n) {
            return Err(Error::DimensionMismatch(format!(
                "state unitary is {:?}, state dimension is {}",
                w.shape(),
                self.n
            )));
        }
        let a = self.a.iter().map(|ak| w * ak * w.adjoint()).collect();
        let b = self.b.iter().map(|bk| w * bk).collect();
        Colligation::new(a, b, &self.c * w.adjoint(), self.dmat.clone())
    }
}

/// A span computed both from sampled values on a fixed grid and from
/// Taylor coefficients, together with whether the two agree.
#[derive(Clone, Debug)]
pub struct WeakSpace<T: Real> {
    pub space: Subspace<T>,
    pub sampled_rank: usize,
    pub coefficient_rank: usize,
    /// The sampled, coefficient and joined ranks all coincide.
    pub stabilized: bool,
}

impl<T: Real> WeakSpace<T> {
    pub(crate) fn from_generators(ambient: usize, sampled: &[CMat<T>], coeffs: &[CMat<T>], tol: T) -> Self {
        let s = orthonormal_range(&hstack(ambient, sampled), tol);
        let c = orthonormal_range(&hstack(ambient, coeffs), tol);
        let space = s.join(&c, tol);
        WeakSpace {
            sampled_rank: s.dim(),
            coefficient_rank: c.dim(),
            stabilized: s.dim() == space.dim() && c.dim() == space.dim(),
            space,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColligationFlags {
    pub contraction: bool,
    pub isometry: bool,
    pub coisometry: bool,
    pub unitary: bool,
    pub observable: bool,
    pub controllable: bool,
    pub closely_connected: bool,
    pub weakly_isometric: bool,
    pub weakly_coisometric: bool,
    pub weakly_unitary: bool,
    /// Sampled and coefficient spans of both weak spaces agree.
    pub weak_spaces_stabilized: bool,
    pub observability_dim: usize,
    pub controllability_dim: usize,
    pub dca_dim: usize,
    pub dtilde_dim: usize,
    pub residuals: BTreeMap<String, f64>,
}

/// Result of an equivalence search.
#[derive(Clone, Debug)]
pub struct EquivSearch<T: Real> {
    pub witness: Option<CMat<T>>,
    /// Certificate residual of the witness, or the best one seen.
    pub residual: T,
}

/// Relative residual of the three intertwining relations for a candidate
/// state unitary `W : X_1 -> X_2`.
pub fn equivalence_residual<T: Real>(u1: &Colligation<T>, u2: &Colligation<T>, w: &CMat<T>) -> T {
    let mut worst = T::zero();
    for k in 0..u1.d() {
        worst = worst.max(fro(&(w * &u1.a[k] - &u2.a[k] * w)));
        worst = worst.max(fro(&(w * &u1.b[k] - &u2.b[k])));
    }
    worst = worst.max(fro(&(&u1.c - &u2.c * w)));
    worst = worst.max(fro(&(&u1.dmat - &u2.dmat)));
    worst / at_least_one(op_norm(&u1.matrix()))
}

/// Searches for a unitary `W` with `W A_k = A~_k W`, `W B_k = B~_k` and
/// `C = C~ W`. A returned witness passes the certificate
/// `equivalence_residual < tol`; `None` only means the search failed.
pub fn colligation_equiv<T: Real>(
    u1: &Colligation<T>,
    u2: &Colligation<T>,
    tol: &Tolerances<T>,
    restarts: usize,
) -> Result<EquivSearch<T>> {
    if (u1.d(), u1.n, u1.p, u1.q) != (u2.d(), u2.n, u2.p, u2.q) {
        return Err(Error::ShapeMismatch(format!(
            "(d, n, p, q) = {:?} vs {:?}",
            (u1.d(), u1.n, u1.p, u1.q),
            (u2.d(), u2.n, u2.p, u2.q)
        )));
    }
    let n = u1.n;
    let equations = |w: &[CMat<T>]| {
        let w = &w[0];
        let mut parts = Vec::new();
        for k in 0..u1.d() {
            parts.push(crate::matcore::vec_of(&(w * &u1.a[k] - &u2.a[k] * w)));
            parts.push(crate::matcore::vec_of(&(w * u1.a[k].adjoint() - u2.a[k].adjoint() * w)));
            parts.push(crate::matcore::vec_of(&(w * &u1.b[k] - &u2.b[k])));
        }
        parts.push(crate::matcore::vec_of(&(w * u1.c.adjoint() - u2.c.adjoint())));
        vstack(1, &parts)
    };
    let certificate = |w: &[CMat<T>]| equivalence_residual(u1, u2, &w[0]);
    let out = find_unitaries(&[n], equations, certificate, tol.residual, tol.rank, restarts);
    Ok(EquivSearch {
        witness: out.witness.map(|mut v| v.remove(0)),
        residual: out.best_residual,
    })
}
