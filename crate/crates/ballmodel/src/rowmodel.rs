//! Row contractions `T = [T_1 ... T_d]`: defects, the Halmos unitary
//! colligation, characteristic functions and moments, the c.n.c. / strongly
//! c.c. / c.c. classification, and unitary-equivalence tests.
//!
//! Words are written left to right. `T^v` for `v = v_0 v_1 ... v_m` is the
//! product `T_{v_0} T_{v_1} ... T_{v_m}`, and the coefficient of `z^v` in a
//! noncommutative resolvent `(I - sum z_k M_k)^{-1}` is `M_{v_0} ... M_{v_m}`.
//! Kernel coefficients are indexed by a pair of words `(a, b)` for the
//! monomial `z^a w^b`, the two sets of indeterminates commuting with each
//! other.

use std::collections::BTreeMap;

use nalgebra::ComplexField;
use num_complex::Complex;

use crate::agler::{big_kernel_eval, model_subspaces, BigKernelFactor, ModelGeometry};
use crate::colligation::{Colligation, EquivSearch};
use crate::error::{Error, Result};
use crate::matcore::{
    at_least_one, check_finite, check_in_ball, fro, hstack, identity, inclusion, kron, lstsq,
    nullspace, op_norm, orthonormal_range, procrustes, singular_values, solve, span_closure,
    sqrtm_psd, vec_of, vstack, z_row, zeros, CMat, Subspace,
};
use crate::random::{ball_point, random_unitary, rng};
use crate::scalar::{lift, re, to_f64, Real, Tolerances};
use crate::series::{
    nc_resolvent_series, resolvent_taylor_comm, xn_coefficients, Caps, CommSeries, MultiIndex,
    NcSeries, Side, Word,
};
use crate::unitary_search::find_unitaries;

/// A `d`-tuple of `n x n` matrices whose block row has norm at most one.
#[derive(Clone, Debug, PartialEq)]
pub struct RowContraction<T: Real> {
    blocks: Vec<CMat<T>>,
    n: usize,
}

impl<T: Real> RowContraction<T> {
    pub fn new(blocks: Vec<CMat<T>>, tol: T) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::DimensionMismatch("a row contraction needs d >= 1".into()));
        };
        let n = first.nrows();
        for (k, b) in blocks.iter().enumerate() {
            if b.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "T_{} is {}x{}, expected {}x{}",
                    k + 1,
                    b.nrows(),
                    b.ncols(),
                    n,
                    n
                )));
            }
            check_finite(b)?;
        }
        let t = RowContraction { blocks, n };
        let norm = op_norm(&t.row());
        if norm > T::one() + tol {
            return Err(Error::NotRowContraction { norm: to_f64(norm) });
        }
        Ok(t)
    }

    pub fn d(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[CMat<T>] {
        &self.blocks
    }

    /// `[T_1 ... T_d]`, `n x dn`.
    pub fn row(&self) -> CMat<T> {
        hstack(self.n, &self.blocks)
    }

    pub fn adjoints(&self) -> Vec<CMat<T>> {
        self.blocks.iter().map(|b| b.adjoint()).collect()
    }

    pub fn max_commutator(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.d() {
            for j in i + 1..self.d() {
                let c = &self.blocks[i] * &self.blocks[j] - &self.blocks[j] * &self.blocks[i];
                worst = worst.max(op_norm(&c));
            }
        }
        worst
    }

    pub fn is_commutative(&self, tol: T) -> bool {
        self.max_commutator() < tol
    }

    /// `(Q T_1 Q^*, ..., Q T_d Q^*)`.
    pub fn conjugate(&self, q: &CMat<T>) -> Self {
        let blocks = self.blocks.iter().map(|b| q * b * q.adjoint()).collect();
        RowContraction { blocks, n: self.n }
    }
}

/// Defect operators and orthonormal bases of their ranges.
#[derive(Clone, Debug)]
pub struct DefectData<T: Real> {
    /// `(I - T^* T)^{1/2}` on `C^(dn)`.
    pub d_t: CMat<T>,
    /// `(I - T T^*)^{1/2}` on `C^n`.
    pub d_tstar: CMat<T>,
    pub basis_dt: Subspace<T>,
    pub basis_dtstar: Subspace<T>,
}

impl<T: Real> DefectData<T> {
    /// `I_j^* D_T Q`, the `j`-th `n x p` block of the compressed defect.
    fn input_block(&self, j: usize, n: usize) -> CMat<T> {
        let b = &self.d_t * self.basis_dt.basis();
        b.rows(j * n, n).into_owned()
    }
}

pub fn defects<T: Real>(t: &RowContraction<T>, tol: &Tolerances<T>) -> Result<DefectData<T>> {
    let row = t.row();
    let n = t.n();
    let dn = t.d() * n;
    let d_t = sqrtm_psd(&(identity::<T>(dn) - row.adjoint() * &row), tol.rank)?;
    let d_tstar = sqrtm_psd(&(identity::<T>(n) - &row * row.adjoint()), tol.rank)?;
    let basis_dt = orthonormal_range(&d_t, tol.rank);
    let basis_dtstar = orthonormal_range(&d_tstar, tol.rank);
    Ok(DefectData {
        d_t,
        d_tstar,
        basis_dt,
        basis_dtstar,
    })
}

/// The unitary colligation `[T^*, D_T; D_{T^*}, -T]` compressed to the
/// defect spaces.
pub fn halmos<T: Real>(t: &RowContraction<T>, tol: &Tolerances<T>) -> Result<Colligation<T>> {
    let df = defects(t, tol)?;
    halmos_from(t, &df)
}

fn halmos_from<T: Real>(t: &RowContraction<T>, df: &DefectData<T>) -> Result<Colligation<T>> {
    let n = t.n();
    let qs = df.basis_dtstar.basis();
    let qt = df.basis_dt.basis();
    let b = (0..t.d()).map(|j| df.input_block(j, n)).collect();
    let c = qs.adjoint() * &df.d_tstar;
    let dmat = -(qs.adjoint() * t.row() * qt);
    Colligation::new(t.adjoints(), b, c, dmat)
}

/// `theta_T(z) = -T + D_{T^*} (I - Z(z) T^*)^{-1} Z(z) D_T`, restricted to
/// the defect spaces.
pub fn char_eval<T: Real>(t: &RowContraction<T>, z: &[Complex<T>], tol: &Tolerances<T>) -> Result<CMat<T>> {
    if z.len() != t.d() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} coordinates, row has d = {}",
            z.len(),
            t.d()
        )));
    }
    check_in_ball(z)?;
    let df = defects(t, tol)?;
    let n = t.n();
    let zr = z_row(z, n);
    let tstar = vstack(n, &t.adjoints());
    let m = identity::<T>(n) - &zr * &tstar;
    let qt = df.basis_dt.basis();
    let qs = df.basis_dtstar.basis();
    let x = solve(&m, &(&zr * &df.d_t * qt)).ok_or(Error::SingularResolvent)?;
    Ok(qs.adjoint() * (-(t.row() * qt) + &df.d_tstar * x))
}

pub fn char_series<T: Real>(t: &RowContraction<T>, order: usize, tol: &Tolerances<T>) -> Result<CommSeries<T>> {
    Ok(halmos(t, tol)?.transfer_taylor(order))
}

/// True when no singular value of `s0` reaches `1 - tol`.
pub fn purity_check<T: Real>(s0: &CMat<T>, tol: T) -> bool {
    singular_values(s0).iter().all(|&s| s < T::one() - tol)
}

/// Moments `[theta]_0 = -T|D_T` and `[theta]_{u j} = D_{T^*} (T^*)^u I_j^* D_T`
/// in the defect bases, for words of length at most `order`.
pub fn nc_char_moments<T: Real>(t: &RowContraction<T>, order: usize, tol: &Tolerances<T>) -> Result<NcSeries<T>> {
    let df = defects(t, tol)?;
    Ok(moments_from(t, &df, order))
}

fn moments_from<T: Real>(t: &RowContraction<T>, df: &DefectData<T>, order: usize) -> NcSeries<T> {
    let (d, n) = (t.d(), t.n());
    let qs = df.basis_dtstar.basis();
    let qt = df.basis_dt.basis();
    let mut out = NcSeries::zero(d, qs.ncols(), qt.ncols(), order);
    out.set(Word::empty(), -(qs.adjoint() * t.row() * qt));
    if order == 0 {
        return out;
    }
    let left = qs.adjoint() * &df.d_tstar;
    let inputs: Vec<CMat<T>> = (0..d).map(|j| df.input_block(j, n)).collect();
    let adj = t.adjoints();
    for u in Word::up_to(d, order - 1) {
        let prefix = &left * u.product(&adj, n);
        for (j, b) in inputs.iter().enumerate() {
            out.set(u.concat(&Word::letter(j)), &prefix * b);
        }
    }
    out
}

/// Key `(v, v', k, j)` of the moment `D_T I_k T^v T^{*v'} I_j^* D_T`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExpandedKey {
    pub v: Word,
    pub vp: Word,
    pub k: usize,
    pub j: usize,
}

/// Both moment families in the defect bases.
#[derive(Clone, Debug)]
pub struct MomentTable<T: Real> {
    pub order: usize,
    pub nc_moments: NcSeries<T>,
    /// Entries with `|v| + |v'| <= order`.
    pub expanded: BTreeMap<ExpandedKey, CMat<T>>,
    /// Largest `|| E(v, v', k, j)^* - E(v'^T, v^T, j, k) ||`.
    pub symmetry_residual: T,
    /// Largest difference against the `Phi_ij` coefficients of the
    /// noncommutative kernel of the Halmos colligation.
    pub kernel_residual: T,
}

pub fn expanded_moments<T: Real>(t: &RowContraction<T>, order: usize, tol: &Tolerances<T>) -> Result<MomentTable<T>> {
    let df = defects(t, tol)?;
    let (d, n) = (t.d(), t.n());
    let nc_moments = moments_from(t, &df, order);
    let inputs: Vec<CMat<T>> = (0..d).map(|j| df.input_block(j, n)).collect();
    let words = Word::up_to(d, order);
    let adj = t.adjoints();
    let pow: BTreeMap<Word, CMat<T>> = words.iter().map(|w| (w.clone(), w.product(t.blocks(), n))).collect();
    let pow_star: BTreeMap<Word, CMat<T>> = words.iter().map(|w| (w.clone(), w.product(&adj, n))).collect();

    let mut expanded = BTreeMap::new();
    for v in &words {
        for vp in words.iter().filter(|vp| v.len() + vp.len() <= order) {
            let middle = &pow[v] * &pow_star[vp];
            for (k, bk) in inputs.iter().enumerate() {
                let left = bk.adjoint() * &middle;
                for (j, bj) in inputs.iter().enumerate() {
                    let key = ExpandedKey {
                        v: v.clone(),
                        vp: vp.clone(),
                        k,
                        j,
                    };
                    expanded.insert(key, &left * bj);
                }
            }
        }
    }

    let mut symmetry_residual = T::zero();
    for (key, m) in &expanded {
        let mirror = ExpandedKey {
            v: key.vp.transpose(),
            vp: key.v.transpose(),
            k: key.j,
            j: key.k,
        };
        symmetry_residual = symmetry_residual.max(fro(&(m.adjoint() - &expanded[&mirror])));
    }

    let u = halmos_from(t, &df)?;
    let (p_left, r_right) = phi_factors(&u, order)?;
    let mut kernel_residual = T::zero();
    for (a, pa) in p_left.coeffs() {
        for (b, rb) in r_right.coeffs().iter().filter(|(b, _)| a.len() + b.len() <= order) {
            for i in 0..d {
                for j in 0..d {
                    let phi = pa.columns(i * n, n) * rb.rows(j * n, n);
                    let (k, v) = a.concat(&Word::letter(i)).split_first().expect("nonempty");
                    let (vp, last) = Word::letter(j).concat(b).split_last().expect("nonempty");
                    let key = ExpandedKey { v, vp, k, j: last };
                    kernel_residual = kernel_residual.max(fro(&(phi - &expanded[&key])));
                }
            }
        }
    }
    Ok(MomentTable {
        order,
        nc_moments,
        expanded,
        symmetry_residual,
        kernel_residual,
    })
}

/// Word coefficients of `B^* (I - Z^* A^*)^{-1}` and `(I - A Z)^{-1} B`, so
/// that `Phi_ij[a, b] = P_a I_i I_j^* R_b`.
fn phi_factors<T: Real>(u: &Colligation<T>, order: usize) -> Result<(NcSeries<T>, NcSeries<T>)> {
    let (d, n) = (u.d(), u.n());
    let a = u.a_stacked();
    let b = u.b_stacked();
    let left_blocks: Vec<CMat<T>> = (0..d).map(|k| inclusion::<T>(d, n, k) * a.adjoint()).collect();
    let right_blocks: Vec<CMat<T>> = (0..d).map(|k| &a * inclusion::<T>(d, n, k).adjoint()).collect();
    let p = nc_resolvent_series(&left_blocks, order, &Caps::new(Some(b.adjoint()), None))?;
    let r = nc_resolvent_series(&right_blocks, order, &Caps::new(None, Some(b)))?;
    Ok((p, r))
}

/// Word coefficients of the transfer function `D + C (I - Z A)^{-1} Z B`.
pub fn nc_transfer_coefficients<T: Real>(u: &Colligation<T>, order: usize) -> Result<NcSeries<T>> {
    let d = u.d();
    let mut out = NcSeries::zero(d, u.q(), u.p(), order);
    out.set(Word::empty(), u.dmat().clone());
    if order == 0 {
        return Ok(out);
    }
    let ca = nc_resolvent_series(u.a_blocks(), order - 1, &Caps::new(Some(u.c().clone()), None))?;
    for (w, c) in ca.coeffs() {
        for (k, bk) in u.b_blocks().iter().enumerate() {
            out.set(w.concat(&Word::letter(k)), c * bk);
        }
    }
    Ok(out)
}

/// Coefficient residuals of the three noncommutative kernel identities for
/// a unitary colligation, over all word pairs with both lengths at most
/// `order`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NcAglerResiduals<T> {
    /// `K_S = k I - S k S^*` with `k` the formal Szego kernel.
    pub k_s: T,
    /// `S(z) - S(w) = sum (Psi_k z_k - w_k Psi_k)`.
    pub psi: T,
    /// `I - S(z)^* S(w) = sum Phi_kk - sum w_j Phi_ij z_i`.
    pub phi: T,
}

pub fn nc_agler_residuals<T: Real>(u: &Colligation<T>, order: usize) -> Result<NcAglerResiduals<T>> {
    let (d, n, p, q) = (u.d(), u.n(), u.p(), u.q());
    let s = nc_transfer_coefficients(u, order)?;
    let ca = nc_resolvent_series(u.a_blocks(), order, &Caps::new(Some(u.c().clone()), None))?;
    let astar: Vec<CMat<T>> = u.a_blocks().iter().map(|a| a.adjoint()).collect();
    let ac = nc_resolvent_series(&astar, order, &Caps::new(None, Some(u.c().adjoint())))?;
    let (pl, rr) = phi_factors(u, order)?;
    let words = Word::up_to(d, order);

    let mut res = NcAglerResiduals {
        k_s: T::zero(),
        psi: T::zero(),
        phi: T::zero(),
    };
    for a in &words {
        for b in &words {
            // K_S block.
            let mut lhs = ca.get(a) * ac.get(b);
            if *a == b.transpose() {
                lhs -= identity::<T>(q);
            }
            for split in 0..=a.len() {
                let u_word = Word::new(a.letters()[..split].to_vec());
                let gamma = Word::new(a.letters()[split..].to_vec());
                let gt = gamma.transpose();
                if b.len() < gt.len() || b.letters()[..gt.len()] != *gt.letters() {
                    continue;
                }
                let w = Word::new(b.letters()[gt.len()..].to_vec()).transpose();
                lhs += s.get(&u_word) * s.get(&w).adjoint();
            }
            res.k_s = res.k_s.max(fro(&lhs));

            // Psi blocks.
            let mut lhs = zeros::<T>(q, p);
            if b.is_empty() {
                lhs += s.get(a);
            }
            if a.is_empty() {
                lhs -= s.get(b);
            }
            if let Some((a0, k)) = a.split_last() {
                lhs -= ca.get(&a0).columns(0, n) * rr.get(b).rows(k * n, n);
            }
            if let Some((k, b0)) = b.split_first() {
                lhs += ca.get(a) * rr.get(&b0).rows(k * n, n);
            }
            res.psi = res.psi.max(fro(&lhs));

            // Phi blocks.
            let mut lhs = -(s.get(&a.transpose()).adjoint() * s.get(b)) - pl.get(a) * rr.get(b);
            if a.is_empty() && b.is_empty() {
                lhs += identity::<T>(p);
            }
            if let (Some((a0, i)), Some((j, b0))) = (a.split_last(), b.split_first()) {
                lhs += pl.get(&a0).columns(i * n, n) * rr.get(&b0).rows(j * n, n);
            }
            res.phi = res.phi.max(fro(&lhs));
        }
    }
    Ok(res)
}

/// Degree caps for the closely-connected computations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowCaps {
    pub cc_degree: usize,
    pub strong_degree: usize,
}

impl RowCaps {
    /// `2n` for the c.c. test and `2n + d` for the strongly c.c. test.
    pub fn for_size(n: usize, d: usize) -> Self {
        RowCaps {
            cc_degree: 2 * n,
            strong_degree: 2 * n + d,
        }
    }
}

/// Outcome of [`classify_row`].
#[derive(Clone, Debug, PartialEq)]
pub struct RowClassification {
    pub pure: bool,
    pub cnc: bool,
    pub strongly_cc: bool,
    pub cc: bool,
    pub commutative: bool,
    /// Word-indexed coefficients were used because the tuple does not
    /// commute.
    pub word_based: bool,
    pub cnc_span_dim: usize,
    /// `dim M1` from the joint kernel of the coefficient operators.
    pub m1_dim: usize,
    /// `dim M2` from the joint kernel.
    pub m2_dim: usize,
    /// `n - dim` of the span formulation of `M1^perp`.
    pub m1_span_dim: usize,
    pub m2_span_dim: usize,
    pub m1_stabilized: bool,
    pub m2_stabilized: bool,
    /// Kernel and span formulations give the same subspaces.
    pub forms_agree: bool,
}

/// Joint kernel of coefficient blocks added one degree at a time.
struct KernelGrowth<T: Real> {
    basis: CMat<T>,
    dims: Vec<usize>,
}

impl<T: Real> KernelGrowth<T> {
    fn new(n: usize) -> Self {
        KernelGrowth {
            basis: identity(n),
            dims: Vec::new(),
        }
    }

    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn absorb(&mut self, rows: &[CMat<T>], tol: T) {
        let parts: Vec<CMat<T>> = rows.iter().map(|r| normalized(r) * &self.basis).collect();
        if !parts.is_empty() && self.dim() > 0 {
            let stacked = vstack(self.dim(), &parts);
            let null = nullspace(&stacked, tol);
            self.basis = &self.basis * null.basis();
        }
        self.dims.push(self.dim());
    }

    /// Unchanged over the last `window` steps, or already zero.
    fn settled(&self, window: usize) -> bool {
        let k = self.dims.len();
        if self.dims.last() == Some(&0) {
            return true;
        }
        k > window && self.dims[k - 1] == self.dims[k - 1 - window]
    }
}

fn normalized<T: Real>(m: &CMat<T>) -> CMat<T> {
    let f = fro(m);
    if f > T::zero() {
        m * lift(T::one() / f)
    } else {
        m.clone()
    }
}

fn span_of<T: Real>(n: usize, parts: &[CMat<T>], tol: T) -> Subspace<T> {
    let cols: Vec<CMat<T>> = parts.iter().map(normalized).collect();
    orthonormal_range(&hstack(n, &cols), tol)
}

/// Subspaces agree when dimensions match and kernel is orthogonal to span.
fn agree<T: Real>(kernel: &CMat<T>, span: &Subspace<T>, n: usize) -> bool {
    kernel.ncols() + span.dim() == n && (kernel.ncols() == 0 || fro(&(kernel.adjoint() * span.basis())) < re(1e-6))
}

pub fn classify_row<T: Real>(t: &RowContraction<T>, tol: &Tolerances<T>, caps: RowCaps) -> Result<RowClassification> {
    let df = defects(t, tol)?;
    let (d, n) = (t.d(), t.n());
    let commutative = t.is_commutative(tol.residual);
    let s0 = char_eval(t, &vec![lift(T::zero()); d], tol)?;
    let pure = purity_check(&s0, tol.residual);
    let seed = orthonormal_range(&df.d_tstar, tol.rank);
    let cnc_span = span_closure(&seed, t.blocks(), tol.rank)?;

    let (m1, m2, span1, span2) = if commutative {
        commutative_spaces(t, &df, tol, caps)?
    } else {
        word_spaces(t, &df, tol, caps.cc_degree.max(caps.strong_degree))?
    };
    let forms_agree = agree(&m1.basis, &span1, n) && agree(&m2.basis, &span2, n);
    let m1_stabilized = m1.settled(d.min(caps.cc_degree).max(1)) || !commutative && m1.settled(1);
    let m2_stabilized = m2.settled(d.min(caps.strong_degree).max(1)) || !commutative && m2.settled(1);
    Ok(RowClassification {
        pure,
        cnc: cnc_span.dim() == n,
        strongly_cc: m2.dim() == 0,
        cc: m1.dim() == 0,
        commutative,
        word_based: !commutative,
        cnc_span_dim: cnc_span.dim(),
        m1_dim: m1.dim(),
        m2_dim: m2.dim(),
        m1_span_dim: n - span1.dim(),
        m2_span_dim: n - span2.dim(),
        m1_stabilized,
        m2_stabilized,
        forms_agree,
    })
}

type Spaces<T> = (KernelGrowth<T>, KernelGrowth<T>, Subspace<T>, Subspace<T>);

/// Commuting tuples: coefficients of the commutative series, with the span
/// side built from powers `T^m` and the `X_m` recursion.
fn commutative_spaces<T: Real>(t: &RowContraction<T>, df: &DefectData<T>, tol: &Tolerances<T>, caps: RowCaps) -> Result<Spaces<T>> {
    let (d, n) = (t.d(), t.n());
    let top = caps.cc_degree.max(caps.strong_degree);
    let adj = t.adjoints();
    let row = t.row();
    let w = resolvent_taylor_comm(&adj, top, Side::Left, &Caps::new(Some(df.d_tstar.clone()), None))?;
    let y_blocks: Vec<CMat<T>> = (0..d).map(|k| inclusion::<T>(d, n, k) * &row).collect();
    let y = resolvent_taylor_comm(&y_blocks, top, Side::Left, &Caps::new(Some(df.d_t.clone()), None))?;
    let incl: Vec<CMat<T>> = (0..d).map(|k| inclusion::<T>(d, n, k)).collect();

    let mut m1 = KernelGrowth::new(n);
    let mut m2 = KernelGrowth::new(n);
    for deg in 0..=top {
        let idx = MultiIndex::of_degree(d, deg);
        if deg <= caps.cc_degree && !m1.settled(d.min(caps.cc_degree).max(1)) {
            let mut rows: Vec<CMat<T>> = idx.iter().map(|m| w.get(m)).collect();
            for m in &idx {
                let ym = y.get(m);
                rows.extend(incl.iter().map(|e| &ym * e));
            }
            m1.absorb(&rows, tol.rank);
        }
        if deg <= caps.strong_degree && !m2.settled(d.min(caps.strong_degree).max(1)) {
            let mut rows: Vec<CMat<T>> = idx.iter().map(|m| w.get(m)).collect();
            for m in idx.iter().filter(|m| m.degree() >= 1) {
                let mut acc = zeros::<T>(d * n, n);
                for (k, e) in incl.iter().enumerate() {
                    if let Some(prev) = m.minus(k) {
                        acc += y.get(&prev) * e;
                    }
                }
                rows.push(acc);
            }
            m2.absorb(&rows, tol.rank);
        }
    }

    // Span side.
    let xn = xn_coefficients(t.blocks(), top)?;
    let power = |m: &MultiIndex| -> CMat<T> {
        let mut acc = identity::<T>(n);
        for (k, &e) in m.exponents().iter().enumerate() {
            for _ in 0..e {
                acc = &acc * &t.blocks()[k];
            }
        }
        acc
    };
    let span_for = |cap: usize, strong: bool| -> Subspace<T> {
        let mut parts = Vec::new();
        for m in MultiIndex::up_to(d, cap) {
            parts.push(power(&m) * &df.d_tstar);
            if strong {
                if m.degree() == 0 {
                    continue;
                }
                let mut acc = zeros::<T>(n, d * n);
                for (k, e) in incl.iter().enumerate() {
                    if let Some(prev) = m.minus(k) {
                        acc += e.adjoint() * &xn[&prev];
                    }
                }
                parts.push(acc * &df.d_t);
            } else {
                for e in &incl {
                    parts.push(e.adjoint() * &xn[&m] * &df.d_t);
                }
            }
        }
        span_of(n, &parts, tol.rank)
    };
    let span1 = span_for(caps.cc_degree, false);
    let span2 = span_for(caps.strong_degree, true);
    Ok((m1, m2, span1, span2))
}

/// Noncommuting tuples: word-indexed coefficients. The joint kernels follow
/// the recursion `K_g = ker D ∩ {x : M_k x ∈ K_{g-1}}`; the spans are
/// Krylov closures. For words the two `M` spaces coincide, since each
/// coefficient of `D_T (I - Z^* T)^{-1} Z^*` is a single term
/// `D_T (I T)^u I_k`.
fn word_spaces<T: Real>(t: &RowContraction<T>, df: &DefectData<T>, tol: &Tolerances<T>, cap: usize) -> Result<Spaces<T>> {
    let (d, n) = (t.d(), t.n());
    let adj = t.adjoints();
    let row = t.row();
    let ops_dn: Vec<CMat<T>> = (0..d).map(|k| inclusion::<T>(d, n, k) * &row).collect();
    let incl: Vec<CMat<T>> = (0..d).map(|k| inclusion::<T>(d, n, k)).collect();

    let mut x_ker = identity::<T>(n);
    let mut y_ker = identity::<T>(d * n);
    let mut m1 = KernelGrowth::new(n);
    for _ in 0..=cap {
        let prev_x = x_ker.clone();
        let prev_y = y_ker.clone();
        x_ker = constrained_kernel(&df.d_tstar, &adj, &prev_x, tol.rank);
        y_ker = constrained_kernel(&df.d_t, &ops_dn, &prev_y, tol.rank);
        // x with D_{T*}-family zero and every I_i x inside the y-kernel.
        let out_y = complement_projector(&y_ker);
        let mut rows = vec![complement_projector(&x_ker)];
        rows.extend(incl.iter().map(|e| &out_y * e));
        let mut g = KernelGrowth::new(n);
        g.absorb(&rows, tol.rank);
        m1.basis = g.basis;
        m1.dims.push(m1.basis.ncols());
        if x_ker.ncols() == prev_x.ncols() && y_ker.ncols() == prev_y.ncols() {
            m1.dims.push(m1.basis.ncols());
            break;
        }
    }
    let m2 = KernelGrowth {
        basis: m1.basis.clone(),
        dims: m1.dims.clone(),
    };

    let seed_x = orthonormal_range(&df.d_tstar, tol.rank);
    let obs = span_closure(&seed_x, t.blocks(), tol.rank)?;
    let seed_y = orthonormal_range(&df.d_t, tol.rank);
    let xops: Vec<CMat<T>> = incl.iter().map(|e| vstack(n, &adj) * e.adjoint()).collect();
    let ctr = span_closure(&seed_y, &xops, tol.rank)?;
    let mut parts = vec![obs.basis().clone()];
    parts.extend(incl.iter().map(|e| e.adjoint() * ctr.basis()));
    let span = span_of(n, &parts, tol.rank);
    Ok((m1, m2, span.clone(), span))
}

/// `{x : D x = 0, M_k x ∈ Ran(prev)}` as an orthonormal basis.
fn constrained_kernel<T: Real>(dmat: &CMat<T>, ops: &[CMat<T>], prev: &CMat<T>, tol: T) -> CMat<T> {
    let out = complement_projector(prev);
    let mut rows = vec![normalized(dmat)];
    rows.extend(ops.iter().map(|m| &out * m));
    let cols = dmat.ncols();
    nullspace(&vstack(cols, &rows), tol).into_basis()
}

fn complement_projector<T: Real>(basis: &CMat<T>) -> CMat<T> {
    identity::<T>(basis.nrows()) - basis * basis.adjoint()
}

/// Searches for a unitary `W` with `W T_i W^* = R_i` for every `i`.
pub fn equiv_intertwiner<T: Real>(
    t: &RowContraction<T>,
    r: &RowContraction<T>,
    tol: &Tolerances<T>,
    restarts: usize,
) -> Result<EquivSearch<T>> {
    if (t.d(), t.n()) != (r.d(), r.n()) {
        return Err(Error::ShapeMismatch(format!(
            "(d, n) = {:?} vs {:?}",
            (t.d(), t.n()),
            (r.d(), r.n())
        )));
    }
    let scale = at_least_one(op_norm(&t.row()));
    let equations = |w: &[CMat<T>]| {
        let w = &w[0];
        let mut parts = Vec::new();
        for (a, b) in t.blocks().iter().zip(r.blocks()) {
            parts.push(vec_of(&(w * a - b * w)));
            parts.push(vec_of(&(w * a.adjoint() - b.adjoint() * w)));
        }
        vstack(1, &parts)
    };
    let certificate = |w: &[CMat<T>]| intertwining_residual(t, r, &w[0]) / scale;
    let out = find_unitaries(&[t.n()], equations, certificate, tol.residual, tol.rank, restarts);
    Ok(EquivSearch {
        witness: out.witness.map(|mut v| v.remove(0)),
        residual: out.best_residual,
    })
}

/// `max_i || W T_i W^* - R_i ||_F`.
pub fn intertwining_residual<T: Real>(t: &RowContraction<T>, r: &RowContraction<T>, w: &CMat<T>) -> T {
    t.blocks()
        .iter()
        .zip(r.blocks())
        .fold(T::zero(), |acc, (a, b)| acc.max(fro(&(w * a * w.adjoint() - b))))
}

/// Defect-space unitaries induced by a state unitary `W` with
/// `R = W T W^*`: `alpha` on the output defect, `beta` on the input defect,
/// so that `theta_R = alpha theta_T beta^*`.
pub fn defect_alignment<T: Real>(
    t: &RowContraction<T>,
    r: &RowContraction<T>,
    w: &CMat<T>,
    tol: &Tolerances<T>,
) -> Result<(CMat<T>, CMat<T>)> {
    let dt = defects(t, tol)?;
    let dr = defects(r, tol)?;
    let wd = kron(&identity::<T>(t.d()), w);
    let alpha = dr.basis_dtstar.basis().adjoint() * w * dt.basis_dtstar.basis();
    let beta = dr.basis_dt.basis().adjoint() * wd * dt.basis_dt.basis();
    Ok((alpha, beta))
}

/// `max_v || M_R[v] - alpha M_T[v] beta^* ||`.
pub fn moment_alignment_residual<T: Real>(mt: &NcSeries<T>, mr: &NcSeries<T>, alpha: &CMat<T>, beta: &CMat<T>) -> T {
    let mut worst = T::zero();
    for (w, c) in mt.coeffs() {
        worst = worst.max(fro(&(mr.get(w) - alpha * c * beta.adjoint())));
    }
    for (w, c) in mr.coeffs() {
        if !mt.coeffs().contains_key(w) {
            worst = worst.max(fro(c));
        }
    }
    worst
}

/// Witness pair `(alpha, beta)` with `a_i = alpha b_i beta^*`, or the best
/// residual seen.
#[derive(Clone, Debug)]
pub struct CoincidenceSearch<T: Real> {
    pub witness: Option<(CMat<T>, CMat<T>)>,
    pub residual: T,
}

/// Coincidence of sampled values `a_i = alpha b_i beta^*`.
pub fn coincidence<T: Real>(a: &[CMat<T>], b: &[CMat<T>], tol: &Tolerances<T>, restarts: usize) -> Result<CoincidenceSearch<T>> {
    coincidence_search(a, b, &[], &[], 0, tol, restarts)
}

/// Joint coincidence: values as in [`coincidence`] plus kernel samples with
/// `K_a = U K_b U^*`, `U = alpha ⊕ beta ⊕ ... ⊕ beta` (`d` copies of beta).
pub fn joint_coincidence<T: Real>(
    a: &[CMat<T>],
    b: &[CMat<T>],
    ka: &[CMat<T>],
    kb: &[CMat<T>],
    d: usize,
    tol: &Tolerances<T>,
    restarts: usize,
) -> Result<CoincidenceSearch<T>> {
    coincidence_search(a, b, ka, kb, d, tol, restarts)
}

fn kernel_unitary<T: Real>(alpha: &CMat<T>, beta: &CMat<T>, d: usize) -> CMat<T> {
    let mut blocks = vec![alpha.clone()];
    blocks.extend((0..d).map(|_| beta.clone()));
    crate::matcore::block_diag(&blocks)
}

fn coincidence_search<T: Real>(
    a: &[CMat<T>],
    b: &[CMat<T>],
    ka: &[CMat<T>],
    kb: &[CMat<T>],
    d: usize,
    tol: &Tolerances<T>,
    restarts: usize,
) -> Result<CoincidenceSearch<T>> {
    if a.len() != b.len() || ka.len() != kb.len() || (a.is_empty() && ka.is_empty()) {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} value samples, {} vs {} kernel samples",
            a.len(),
            b.len(),
            ka.len(),
            kb.len()
        )));
    }
    let (q, p) = match a.first() {
        Some(m) => m.shape(),
        None => {
            let size = ka[0].nrows();
            return Err(Error::DimensionMismatch(format!("kernel samples of size {size} need value samples")));
        }
    };
    for m in a.iter().chain(b) {
        if m.shape() != (q, p) {
            return Err(Error::DimensionMismatch(format!("sample is {:?}, expected {:?}", m.shape(), (q, p))));
        }
    }
    for m in ka.iter().chain(kb) {
        if m.shape() != (q + d * p, q + d * p) {
            return Err(Error::DimensionMismatch(format!(
                "kernel sample is {:?}, expected size {}",
                m.shape(),
                q + d * p
            )));
        }
    }
    let scale = at_least_one(a.iter().chain(ka).fold(T::zero(), |acc, m| acc.max(fro(m))));
    let residual = |alpha: &CMat<T>, beta: &CMat<T>| -> T {
        let mut worst = T::zero();
        for (x, y) in a.iter().zip(b) {
            worst = worst.max(fro(&(x - alpha * y * beta.adjoint())));
        }
        if !ka.is_empty() {
            let u = kernel_unitary(alpha, beta, d);
            for (x, y) in ka.iter().zip(kb) {
                worst = worst.max(fro(&(x - &u * y * u.adjoint())));
            }
        }
        worst / scale
    };

    // Linear seed: the equations are linear in (alpha, beta) and their
    // solution set is closed under the polar projection.
    let equations = |w: &[CMat<T>]| {
        let (alpha, beta) = (&w[0], &w[1]);
        let mut parts = Vec::new();
        for (x, y) in a.iter().zip(b) {
            parts.push(vec_of(&(x * beta - alpha * y)));
            parts.push(vec_of(&(x.adjoint() * alpha - beta * y.adjoint())));
        }
        if !ka.is_empty() {
            let u = kernel_unitary(alpha, beta, d);
            for (x, y) in ka.iter().zip(kb) {
                parts.push(vec_of(&(x * &u - &u * y)));
            }
        }
        vstack(1, &parts)
    };
    let certificate = |w: &[CMat<T>]| residual(&w[0], &w[1]);
    let seeded = find_unitaries(&[q, p], equations, certificate, tol.residual, tol.rank, restarts);
    if let Some(mut w) = seeded.witness {
        let beta = w.pop().expect("two blocks");
        let alpha = w.pop().expect("two blocks");
        return Ok(CoincidenceSearch {
            residual: seeded.best_residual,
            witness: Some((alpha, beta)),
        });
    }

    // Alternating unitary Procrustes from identity and random starts.
    let mut best = seeded.best_residual;
    let mut r = rng(0xc011_1de);
    for attempt in 0..restarts.max(1) {
        let mut alpha = identity::<T>(q);
        let mut beta = if attempt == 0 || p == 0 { identity(p) } else { random_unitary(&mut r, p) };
        let mut last = T::max_value().unwrap_or_else(T::one);
        for _ in 0..200 {
            alpha = procrustes_step(a, b, ka, kb, d, &alpha, &beta, true)?;
            beta = procrustes_step(a, b, ka, kb, d, &alpha, &beta, false)?;
            let res = residual(&alpha, &beta);
            best = best.min(res);
            if res < tol.residual {
                return Ok(CoincidenceSearch {
                    witness: Some((alpha, beta)),
                    residual: res,
                });
            }
            if last - res < re::<T>(1e-14) * at_least_one(last) {
                break;
            }
            last = res;
        }
    }
    Ok(CoincidenceSearch {
        witness: None,
        residual: best,
    })
}

/// One Procrustes update of `alpha` (`left = true`) or `beta`, with the
/// other factor and the lagged copy on the same side held fixed.
#[allow(clippy::too_many_arguments)]
fn procrustes_step<T: Real>(
    a: &[CMat<T>],
    b: &[CMat<T>],
    ka: &[CMat<T>],
    kb: &[CMat<T>],
    d: usize,
    alpha: &CMat<T>,
    beta: &CMat<T>,
    left: bool,
) -> Result<CMat<T>> {
    let (q, p) = a[0].shape();
    let size = if left { q } else { p };
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    for (x, y) in a.iter().zip(b) {
        if left {
            lhs.push(x * beta);
            rhs.push(y.clone());
        } else {
            lhs.push(x.adjoint() * alpha);
            rhs.push(y.adjoint());
        }
    }
    for (x, y) in ka.iter().zip(kb) {
        let ks = |m: &CMat<T>| m.view((0, 0), (q, q)).into_owned();
        let psi = |m: &CMat<T>, k: usize| m.view((0, q + k * p), (q, p)).into_owned();
        let phi = |m: &CMat<T>, i: usize, j: usize| m.view((q + i * p, q + j * p), (p, p)).into_owned();
        if left {
            lhs.push(ks(x) * alpha);
            rhs.push(ks(y));
            for k in 0..d {
                lhs.push(psi(x, k) * beta);
                rhs.push(psi(y, k));
            }
        } else {
            for k in 0..d {
                lhs.push(psi(x, k).adjoint() * alpha);
                rhs.push(psi(y, k).adjoint());
                for j in 0..d {
                    lhs.push(phi(x, k, j) * beta);
                    rhs.push(phi(y, k, j));
                }
            }
        }
    }
    procrustes(&hstack(size, &lhs), &hstack(size, &rhs))
}

/// `(theta_T, K_T, X_T)` with the model geometry it came from.
#[derive(Clone, Debug)]
pub struct CharTriple<T: Real> {
    pub theta: Colligation<T>,
    pub big_k: BigKernelFactor<T>,
    pub geometry: ModelGeometry<T>,
    pub classification: RowClassification,
}

impl<T: Real> CharTriple<T> {
    pub fn x(&self) -> &CMat<T> {
        &self.geometry.x
    }
}

pub fn characteristic_triple<T: Real>(t: &RowContraction<T>, tol: &Tolerances<T>) -> Result<CharTriple<T>> {
    let classification = classify_row(t, tol, RowCaps::for_size(t.n(), t.d()))?;
    if !classification.cc {
        return Err(Error::NotCloselyConnected);
    }
    let theta = halmos(t, tol)?;
    let geometry = model_subspaces(&theta, tol)?;
    Ok(CharTriple {
        big_k: BigKernelFactor::new(theta.clone()),
        theta,
        geometry,
        classification,
    })
}

/// Outcome of [`triple_equiv`].
#[derive(Clone, Debug)]
pub struct TripleEquiv<T: Real> {
    pub equivalent: bool,
    pub alpha: Option<CMat<T>>,
    pub beta: Option<CMat<T>>,
    /// State unitary `W : X_T -> X_R` induced by the kernel factors.
    pub w: Option<CMat<T>>,
    pub residuals: BTreeMap<String, f64>,
    pub reason: String,
}

const TRIPLE_POINTS: usize = 8;
const TRIPLE_SEED: u64 = 0x7219_1e;

fn sample_points<T: Real>(d: usize, count: usize, seed: u64) -> Vec<Vec<Complex<T>>> {
    let mut r = rng(seed);
    let mut pts = vec![vec![lift(T::zero()); d]];
    pts.extend((1..count).map(|_| ball_point(&mut r, d, 0.8)));
    pts
}

/// Samples `theta(z_i)` at fixed points.
pub fn theta_samples<T: Real>(u: &Colligation<T>, count: usize) -> Result<Vec<CMat<T>>> {
    sample_points::<T>(u.d(), count, TRIPLE_SEED)
        .iter()
        .map(|z| u.transfer_eval(z))
        .collect()
}

/// Coincidence of characteristic functions alone.
pub fn theta_coincidence<T: Real>(
    t: &RowContraction<T>,
    r: &RowContraction<T>,
    tol: &Tolerances<T>,
    restarts: usize,
) -> Result<CoincidenceSearch<T>> {
    let ut = halmos(t, tol)?;
    let ur = halmos(r, tol)?;
    if (ut.d(), ut.p(), ut.q()) != (ur.d(), ur.p(), ur.q()) {
        return Ok(CoincidenceSearch {
            witness: None,
            residual: T::max_value().unwrap_or_else(T::one),
        });
    }
    let a = theta_samples(&ut, TRIPLE_POINTS)?;
    let b = theta_samples(&ur, TRIPLE_POINTS)?;
    coincidence(&a, &b, tol, restarts)
}

/// Tests `(theta, K, X)` equivalence. The coincidence witnesses fix a state
/// unitary `W` through `G_T(z) = U G_R(z) W`; the triples are equivalent
/// when `W` is unitary, `I ⊗ W` and `W` carry the defect complements of
/// `T` onto those of `R`, and `X_R P_D = P_R X_T` for the induced maps.
pub fn triple_equiv<T: Real>(
    t: &RowContraction<T>,
    r: &RowContraction<T>,
    tol: &Tolerances<T>,
    restarts: usize,
) -> Result<TripleEquiv<T>> {
    let tt = characteristic_triple(t, tol)?;
    let tr = characteristic_triple(r, tol)?;
    let mut out = TripleEquiv {
        equivalent: false,
        alpha: None,
        beta: None,
        w: None,
        residuals: BTreeMap::new(),
        reason: String::new(),
    };
    let (ut, ur) = (&tt.theta, &tr.theta);
    if (ut.d(), ut.n(), ut.p(), ut.q()) != (ur.d(), ur.n(), ur.p(), ur.q())
        || tt.x().shape() != tr.x().shape()
    {
        out.reason = "not equivalent: dimensions differ".into();
        return Ok(out);
    }
    let d = ut.d();
    let pts = sample_points::<T>(d, TRIPLE_POINTS, TRIPLE_SEED);
    let a: Vec<CMat<T>> = pts.iter().map(|z| ut.transfer_eval(z)).collect::<Result<_>>()?;
    let b: Vec<CMat<T>> = pts.iter().map(|z| ur.transfer_eval(z)).collect::<Result<_>>()?;
    let mut ka = Vec::new();
    let mut kb = Vec::new();
    for i in 0..pts.len() {
        let j = (i + 1) % pts.len();
        for (z, w) in [(&pts[i], &pts[j]), (&pts[i], &pts[i])] {
            ka.push(big_kernel_eval(&tt.big_k, z, w)?.matrix().clone());
            kb.push(big_kernel_eval(&tr.big_k, z, w)?.matrix().clone());
        }
    }
    let found = joint_coincidence(&a, &b, &ka, &kb, d, tol, restarts)?;
    out.residuals.insert("coincidence".into(), to_f64(found.residual));
    let Some((alpha, beta)) = found.witness else {
        out.reason = "not found (heuristic): no joint coincidence of theta and K".into();
        return Ok(out);
    };

    let u = kernel_unitary(&alpha, &beta, d);
    let gt: Vec<CMat<T>> = pts.iter().map(|z| tt.big_k.eval(z)).collect::<Result<_>>()?;
    let gr: Vec<CMat<T>> = pts.iter().map(|z| tr.big_k.eval(z).map(|g| &u * g)).collect::<Result<_>>()?;
    let gt = vstack(ut.n(), &gt);
    let gr = vstack(ur.n(), &gr);
    let w = lstsq(&gr, &gt, tol.rank);
    let fit = fro(&(&gr * &w - &gt)) / at_least_one(fro(&gt));
    let cct = tt.geometry.cc_space.basis();
    let ccr = tr.geometry.cc_space.basis();
    let wcc = ccr.adjoint() * &w * cct;
    let unit = if wcc.nrows() == wcc.ncols() {
        fro(&(wcc.adjoint() * &wcc - identity::<T>(wcc.ncols())))
    } else {
        T::max_value().unwrap_or_else(T::one)
    };
    let gt_ = &tt.geometry;
    let gr_ = &tr.geometry;
    let wd = kron(&identity::<T>(d), &w);
    let pd = gr_.d_perp.basis().adjoint() * &wd * gt_.d_perp.basis();
    let pr = gr_.r_perp.basis().adjoint() * &w * gt_.r_perp.basis();
    let defect_unit = fro(&(pd.adjoint() * &pd - identity::<T>(pd.ncols())))
        .max(fro(&(pr.adjoint() * &pr - identity::<T>(pr.ncols()))));
    let compat = fro(&(tr.x() * &pd - &pr * tt.x()));
    let inter = intertwining_residual(t, r, &w);
    out.residuals.insert("w_fit".into(), to_f64(fit));
    out.residuals.insert("w_unitary".into(), to_f64(unit));
    out.residuals.insert("defect_maps".into(), to_f64(defect_unit));
    out.residuals.insert("x_compatibility".into(), to_f64(compat));
    out.residuals.insert("state_intertwining".into(), to_f64(inter));
    let limit = tol.residual;
    out.equivalent = fit < limit && unit < limit && defect_unit < limit && compat < limit;
    out.reason = if out.equivalent {
        "equivalent".into()
    } else {
        "not found (heuristic): coincidence witnesses are not compatible with X".into()
    };
    out.alpha = Some(alpha);
    out.beta = Some(beta);
    out.w = Some(w);
    Ok(out)
}

/// `T = [l1 l2]` on `C`, its Halmos colligation and the agreement of the
/// closed-form kernel with the realized one.
#[derive(Clone, Debug)]
pub struct SphericalExample<T: Real> {
    pub lambda: [Complex<T>; 2],
    pub row: RowContraction<T>,
    pub colligation: Colligation<T>,
    /// Largest difference between [`spherical_kernel`] and the realized
    /// kernel over 50 seeded pairs.
    pub agreement: T,
}

const SPHERE_PAIRS_SEED: u64 = 0x5be7e;

pub fn spherical_example<T: Real>(l1: Complex<T>, l2: Complex<T>, tol: &Tolerances<T>) -> Result<SphericalExample<T>> {
    let norm_sq = l1.norm_sqr() + l2.norm_sqr();
    if (norm_sq - T::one()).abs() > tol.residual {
        return Err(Error::NotOnSphere { norm_sq: to_f64(norm_sq) });
    }
    let one = |z: Complex<T>| CMat::from_element(1, 1, z);
    let row = RowContraction::new(vec![one(l1), one(l2)], tol.residual)?;
    let colligation = halmos(&row, tol)?;
    let factor = BigKernelFactor::new(colligation.clone());
    let lambda = [l1, l2];
    let mut agreement = T::zero();
    for (z, w) in crate::random::sample_pairs::<T>(SPHERE_PAIRS_SEED, 2, 50, 0.95) {
        let realized = big_kernel_eval(&factor, &z, &w)?;
        agreement = agreement.max(fro(&(realized.matrix() - spherical_kernel(&lambda, &z, &w))));
    }
    Ok(SphericalExample {
        lambda,
        row,
        colligation,
        agreement,
    })
}

/// `d(z, l) = 1 - conj(z_1) l_1 - conj(z_2) l_2`.
fn sphere_denominator<T: Real>(l: &[Complex<T>; 2], z: &[Complex<T>]) -> Complex<T> {
    lift::<T>(T::one()) - z[0].conj() * l[0] - z[1].conj() * l[1]
}

/// `G(z) = [conj(z_2 - l_2); -conj(z_1 - l_1)] / d(z, l)`.
pub fn spherical_factor<T: Real>(l: &[Complex<T>; 2], z: &[Complex<T>]) -> CMat<T> {
    let den = sphere_denominator(l, z);
    let mut g = zeros::<T>(2, 1);
    g[(0, 0)] = (z[1] - l[1]).conj() / den;
    g[(1, 0)] = -(z[0] - l[0]).conj() / den;
    g
}

/// Closed-form rank-one kernel `G(z) G(w)^*`.
pub fn spherical_kernel<T: Real>(l: &[Complex<T>; 2], z: &[Complex<T>], w: &[Complex<T>]) -> CMat<T> {
    spherical_factor(l, z) * spherical_factor(l, w).adjoint()
}

/// Modulus of the difference between the two sides of the polynomial
/// identity satisfied by the numerators of the rank-one kernel.
pub fn spherical_identity_residual<T: Real>(l: &[Complex<T>; 2], z: &[Complex<T>], w: &[Complex<T>]) -> T {
    let one = lift::<T>(T::one());
    let (z1, z2) = (z[0].conj(), z[1].conj());
    let (w1, w2) = (w[0], w[1]);
    let (l1, l2) = (l[0], l[1]);
    let lhs = (one - z1 * l1 - z2 * l2) * (one - w1 * l1.conj() - w2 * l2.conj());
    let a1 = z1 - l1.conj();
    let a2 = z2 - l2.conj();
    let b1 = w1 - l1;
    let b2 = w2 - l2;
    let rhs = a2 * b2 + a1 * b1 - z1 * w1 * a2 * b2 + z1 * w2 * a2 * b1 + z2 * w1 * a1 * b2 - z2 * w2 * a1 * b1;
    (lhs - rhs).modulus()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::from_real_rows;
    use crate::random::{commuting_row, random_matrix, row_with_unit_singular_values, sphere_point};
    use crate::scalar::cx;
    use proptest::prelude::*;

    type Row = RowContraction<f64>;

    fn tol() -> Tolerances<f64> {
        Tolerances::default()
    }

    fn scalar_row(t: f64) -> Row {
        Row::new(vec![from_real_rows(1, 1, &[t])], 1e-12).unwrap()
    }

    fn split_row(row: &CMat<f64>, d: usize) -> Vec<CMat<f64>> {
        let n = row.nrows();
        (0..d).map(|k| row.columns(k * n, n).into_owned()).collect()
    }

    fn random_row(seed: u64, d: usize, n: usize, ones: usize) -> Row {
        let mut r = rng(seed);
        let row = row_with_unit_singular_values::<f64>(&mut r, d, n, ones);
        Row::new(split_row(&row, d), 1e-9).unwrap()
    }

    fn lambda_row(l1: Complex<f64>, l2: Complex<f64>) -> Row {
        Row::new(vec![CMat::from_element(1, 1, l1), CMat::from_element(1, 1, l2)], 1e-12).unwrap()
    }

    #[test]
    fn rejects_bad_rows() {
        let m = from_real_rows::<f64>(1, 1, &[1.5]);
        assert!(matches!(Row::new(vec![m], 1e-9), Err(Error::NotRowContraction { .. })));
        assert!(matches!(Row::new(vec![], 1e-9), Err(Error::DimensionMismatch(_))));
        let a = zeros::<f64>(2, 2);
        let b = zeros::<f64>(1, 1);
        assert!(matches!(Row::new(vec![a, b], 1e-9), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn defect_examples() {
        let z = Row::new(vec![zeros(2, 2), zeros(2, 2)], 1e-12).unwrap();
        let df = defects(&z, &tol()).unwrap();
        assert!(fro(&(df.d_t - identity::<f64>(4))) < 1e-14);
        assert!(fro(&(df.d_tstar - identity::<f64>(2))) < 1e-14);

        let df = defects(&scalar_row(0.6), &tol()).unwrap();
        assert!((df.d_t[(0, 0)].re - 0.8).abs() < 1e-14);
        assert!((df.d_tstar[(0, 0)].re - 0.8).abs() < 1e-14);

        let mut r = rng(1);
        let l = sphere_point(&mut r, 2);
        let df = defects(&lambda_row(l[0], l[1]), &tol()).unwrap();
        assert_eq!(df.basis_dtstar.dim(), 0);
        assert_eq!(df.basis_dt.dim(), 1);
        let v = df.basis_dt.basis();
        // Parallel to (-l2, l1).
        let expected = from_rows_c(&[-l[1], l[0]]);
        assert!((v.adjoint() * &expected)[(0, 0)].norm() > 1.0 - 1e-12);
    }

    fn from_rows_c(v: &[Complex<f64>]) -> CMat<f64> {
        crate::matcore::from_rows(v.len(), 1, v)
    }

    #[test]
    fn halmos_examples() {
        let u = halmos(&scalar_row(0.6), &tol()).unwrap();
        let expect = from_real_rows::<f64>(2, 2, &[0.6, 0.8, 0.8, -0.6]);
        assert!(fro(&(u.matrix() - expect)) < 1e-14);

        let u = halmos(&lambda_row(cx(1.0, 0.0), cx(0.0, 0.0)), &tol()).unwrap();
        assert_eq!(u.matrix().shape(), (2, 2));
        assert!(fro(&(u.matrix() - identity::<f64>(2))) < 1e-14);
        assert_eq!(u.q(), 0);

        for seed in 0..5 {
            let t = random_row(seed, 2, 3, 1);
            let u = halmos(&t, &tol()).unwrap();
            let m = u.matrix();
            assert!(fro(&(m.adjoint() * &m - identity::<f64>(m.ncols()))) < 1e-10);
            assert!(u.classify(&tol()).unitary);
        }
    }

    #[test]
    fn characteristic_function_examples() {
        let t = scalar_row(0.6);
        let v = char_eval(&t, &[cx(0.5, 0.0)], &tol()).unwrap();
        assert!((v[(0, 0)] - cx(-1.0 / 7.0, 0.0)).norm() < 1e-14);
        let v0 = char_eval(&t, &[cx(0.0, 0.0)], &tol()).unwrap();
        assert!((v0[(0, 0)] - cx(-0.6, 0.0)).norm() < 1e-15);
        let l = lambda_row(cx(1.0, 0.0), cx(0.0, 0.0));
        assert_eq!(char_eval(&l, &[cx(0.3, 0.0), cx(0.1, 0.0)], &tol()).unwrap().shape(), (0, 1));
        assert!(matches!(
            char_eval(&t, &[cx(1.0, 0.0)], &tol()),
            Err(Error::PointOutsideBall { .. })
        ));
        let s = char_series(&t, 3, &tol()).unwrap();
        assert!((s.get(&MultiIndex::new(vec![2]))[(0, 0)] - cx(0.384, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn char_eval_matches_realization() {
        let mut r = rng(3);
        for seed in 0..5 {
            let t = random_row(seed + 10, 3, 2, 1);
            let u = halmos(&t, &tol()).unwrap();
            for _ in 0..10 {
                let z = ball_point::<f64>(&mut r, 3, 0.9);
                let a = char_eval(&t, &z, &tol()).unwrap();
                let b = u.transfer_eval(&z).unwrap();
                assert!(fro(&(a - b)) < 1e-11);
            }
        }
    }

    #[test]
    fn purity_examples() {
        assert!(!purity_check(&from_real_rows::<f64>(1, 1, &[1.0]), 1e-9));
        assert!(purity_check(&from_real_rows::<f64>(1, 1, &[-0.6]), 1e-9));
        for seed in 0..10 {
            let t = random_row(seed + 20, 2, 3, 2);
            let s0 = char_eval(&t, &[cx(0.0, 0.0); 2], &tol()).unwrap();
            assert!(purity_check(&s0, 1e-9));
        }
    }

    #[test]
    fn moment_examples() {
        let z = Row::new(vec![zeros(1, 1), zeros(1, 1)], 1e-12).unwrap();
        let m = nc_char_moments(&z, 3, &tol()).unwrap();
        assert!(fro(&m.get(&Word::empty())) < 1e-15);
        for j in 0..2 {
            let c = m.get(&Word::letter(j));
            let mut e = zeros::<f64>(1, 2);
            e[(0, j)] = cx(1.0, 0.0);
            assert!(fro(&(c - e)) < 1e-15);
        }
        for w in Word::up_to(2, 3).into_iter().filter(|w| w.len() >= 2) {
            assert!(fro(&m.get(&w)) < 1e-15);
        }

        let m = nc_char_moments(&scalar_row(0.6), 2, &tol()).unwrap();
        for (w, e) in [(Word::empty(), -0.6), (Word::new(vec![0]), 0.64), (Word::new(vec![0, 0]), 0.384)] {
            assert!((m.get(&w)[(0, 0)] - cx(e, 0.0)).norm() < 1e-14);
        }

        let mut r = rng(5);
        let blocks = commuting_row::<f64>(&mut r, 2, 3, 0.9);
        let t = Row::new(blocks, 1e-9).unwrap();
        let m = nc_char_moments(&t, 4, &tol()).unwrap();
        for a in Word::up_to(2, 4) {
            for b in Word::up_to(2, 4) {
                if !a.is_empty() && a.abelianize(2) == b.abelianize(2) && a.split_last().unwrap().1 == b.split_last().map(|x| x.1).unwrap_or(9) {
                    assert!(fro(&(m.get(&a) - m.get(&b))) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn moments_match_resolvent_words() {
        for seed in 0..5 {
            let t = random_row(seed + 30, 2, 2, 1);
            let m = nc_char_moments(&t, 4, &tol()).unwrap();
            let u = halmos(&t, &tol()).unwrap();
            let s = nc_transfer_coefficients(&u, 4).unwrap();
            assert!(m.max_diff(&s) < 1e-12);
            assert!(m.abelianize().max_diff(&u.transfer_taylor(4)) < 1e-12);
        }
    }

    #[test]
    fn expanded_moment_examples() {
        let z = Row::new(vec![zeros(1, 1), zeros(1, 1)], 1e-12).unwrap();
        let mt = expanded_moments(&z, 2, &tol()).unwrap();
        let q = defects(&z, &tol()).unwrap().basis_dt.basis().clone();
        for k in 0..2 {
            for j in 0..2 {
                let key = ExpandedKey { v: Word::empty(), vp: Word::empty(), k, j };
                let expect = q.adjoint() * inclusion::<f64>(2, 1, k) * inclusion::<f64>(2, 1, j).adjoint() * &q;
                assert!(fro(&(&mt.expanded[&key] - expect)) < 1e-14);
            }
        }
        assert!(mt.expanded.iter().filter(|(k, _)| !k.v.is_empty() || !k.vp.is_empty()).all(|(_, m)| fro(m) < 1e-15));
        let mt = expanded_moments(&scalar_row(0.6), 3, &tol()).unwrap();
        for (key, m) in &mt.expanded {
            let expect = 0.64 * 0.6f64.powi((key.v.len() + key.vp.len()) as i32);
            assert!((m[(0, 0)] - cx(expect, 0.0)).norm() < 1e-14);
        }
        let l = lambda_row(cx(0.6, 0.0), cx(0.0, 0.8));
        let mt = expanded_moments(&l, 3, &tol()).unwrap();
        assert!(mt.nc_moments.coeffs().values().all(|c| c.shape() == (0, 1)));
        assert!(mt.symmetry_residual < 1e-13);
        for seed in 0..4 {
            let t = random_row(seed + 40, 3, 2, 1);
            let mt = expanded_moments(&t, 3, &tol()).unwrap();
            assert!(mt.symmetry_residual < 1e-12);
            assert!(mt.kernel_residual < 1e-12);
        }
    }

    #[test]
    fn nc_agler_identities_hold_for_halmos() {
        for seed in 0..4 {
            let t = random_row(seed + 50, 2, 2, 1);
            let u = halmos(&t, &tol()).unwrap();
            let res = nc_agler_residuals(&u, 3).unwrap();
            assert!(res.k_s < 1e-12 && res.psi < 1e-12 && res.phi < 1e-12, "{res:?}");
        }
        let m = from_real_rows::<f64>(1, 1, &[0.5]);
        let c = Colligation::new(vec![m.clone()], vec![m.clone()], m.clone(), m).unwrap();
        let res = nc_agler_residuals(&c, 2).unwrap();
        assert!(res.phi > 0.1);
        assert!(res.psi < 1e-14);
    }

    #[test]
    fn classification_examples() {
        let c = classify_row(&lambda_row(cx(1.0, 0.0), cx(0.0, 0.0)), &tol(), RowCaps::for_size(1, 2)).unwrap();
        assert!(!c.cnc && c.strongly_cc && c.cc && c.pure && c.forms_agree);
        let c = classify_row(&scalar_row(0.6), &tol(), RowCaps::for_size(1, 1)).unwrap();
        assert!(c.cnc && c.strongly_cc && c.cc);
        let z = Row::new(vec![zeros(1, 1), zeros(1, 1)], 1e-12).unwrap();
        assert!(classify_row(&z, &tol(), RowCaps::for_size(1, 2)).unwrap().cnc);
        // A unitary scalar is coisometric on all of C.
        let u = classify_row(&scalar_row(1.0), &tol(), RowCaps::for_size(1, 1)).unwrap();
        assert!(!u.cnc && !u.cc && !u.strongly_cc);
        assert!(u.m1_stabilized && u.forms_agree);
    }

    #[test]
    fn chain_on_mixed_rows() {
        let mut r = rng(60);
        for i in 0..30 {
            let d = 1 + i % 3;
            let n = 1 + i % 4;
            let blocks = if i % 2 == 0 {
                commuting_row::<f64>(&mut r, d, n, 1.0)
            } else {
                split_row(&row_with_unit_singular_values::<f64>(&mut r, d, n, 1 + i % 2), d)
            };
            let t = Row::new(blocks, 1e-9).unwrap();
            let c = classify_row(&t, &tol(), RowCaps::for_size(n, d)).unwrap();
            assert!(!c.cnc || c.strongly_cc, "{c:?}");
            assert!(!c.strongly_cc || c.cc, "{c:?}");
            assert!(c.forms_agree, "{c:?}");
        }
    }

    #[test]
    fn intertwiner_examples() {
        let t = random_row(70, 2, 3, 1);
        let w = equiv_intertwiner(&t, &t, &tol(), 4).unwrap().witness.unwrap();
        assert!(intertwining_residual(&t, &t, &w) < 1e-12);
        let mut r = rng(71);
        let q = random_unitary::<f64>(&mut r, 3);
        let rr = t.conjugate(&q);
        let found = equiv_intertwiner(&t, &rr, &tol(), 8).unwrap();
        assert!(found.residual < 1e-9);
        assert!(found.witness.is_some());
        let none = equiv_intertwiner(&scalar_row(0.6), &scalar_row(0.7), &tol(), 4).unwrap();
        assert!(none.witness.is_none());
        let other = random_row(72, 2, 2, 1);
        assert!(matches!(equiv_intertwiner(&t, &other, &tol(), 1), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn coincidence_examples() {
        let mut r = rng(80);
        let a: Vec<CMat<f64>> = (0..5).map(|_| random_matrix(&mut r, 2, 3)).collect();
        let same = coincidence(&a, &a, &tol(), 4).unwrap();
        let (al, be) = same.witness.unwrap();
        assert!(fro(&(al - identity::<f64>(2))) < 1e-9 && fro(&(be - identity::<f64>(3))) < 1e-9);

        let a0 = random_unitary::<f64>(&mut r, 2);
        let b0 = random_unitary::<f64>(&mut r, 3);
        let b: Vec<CMat<f64>> = a.iter().map(|x| a0.adjoint() * x * &b0).collect();
        let found = coincidence(&a, &b, &tol(), 8).unwrap();
        let (al, be) = found.witness.unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(fro(&(x - &al * y * be.adjoint())) < 1e-8);
        }

        let t6 = halmos(&scalar_row(0.6), &tol()).unwrap();
        let t7 = halmos(&scalar_row(0.7), &tol()).unwrap();
        let s6 = theta_samples(&t6, 6).unwrap();
        let s7 = theta_samples(&t7, 6).unwrap();
        let none = coincidence(&s6, &s7, &tol(), 4).unwrap();
        assert!(none.witness.is_none());
        assert!(none.residual > 1e-3);
        assert!(coincidence(&s6, &s7[..3], &tol(), 1).is_err());
    }

    #[test]
    fn triples() {
        let t = random_row(90, 2, 2, 0);
        let tr = characteristic_triple(&t, &tol()).unwrap();
        assert!(tr.classification.cnc);
        assert_eq!(tr.x().shape(), (0, 0));

        let l = lambda_row(cx(1.0, 0.0), cx(0.0, 0.0));
        let tl = characteristic_triple(&l, &tol()).unwrap();
        assert_eq!(tl.theta.q(), 0);
        assert_eq!(tl.x().shape(), (0, 0));

        let u = scalar_row(1.0);
        assert!(matches!(characteristic_triple(&u, &tol()), Err(Error::NotCloselyConnected)));

        let same = triple_equiv(&t, &t, &tol(), 4).unwrap();
        assert!(same.equivalent, "{same:?}");
        let mut r = rng(91);
        let q = random_unitary::<f64>(&mut r, 2);
        let rt = triple_equiv(&t, &t.conjugate(&q), &tol(), 8).unwrap();
        assert!(rt.equivalent, "{rt:?}");
        assert!(rt.residuals["state_intertwining"] < 1e-8);

        let mut r = rng(92);
        let m = sphere_point(&mut r, 2);
        let m2 = sphere_point(&mut r, 2);
        let a = lambda_row(m[0], m[1]);
        let b = lambda_row(m2[0], m2[1]);
        let ab = triple_equiv(&a, &b, &tol(), 4).unwrap();
        assert!(!ab.equivalent);
        let fa = BigKernelFactor::new(halmos(&a, &tol()).unwrap());
        let fb = BigKernelFactor::new(halmos(&b, &tol()).unwrap());
        let z = vec![cx(0.1, 0.2), cx(-0.3, 0.1)];
        let ka = big_kernel_eval(&fa, &z, &z).unwrap();
        let kb = big_kernel_eval(&fb, &z, &z).unwrap();
        assert!(fro(&(ka.matrix() - kb.matrix())) > 1e-3);
    }

    #[test]
    fn spherical() {
        let e = spherical_example(cx(1.0, 0.0), cx(0.0, 0.0), &tol()).unwrap();
        assert!(e.agreement < 1e-10);
        let k = spherical_kernel(&e.lambda, &[cx(0.0, 0.0); 2], &[cx(0.0, 0.0); 2]);
        let expect = from_real_rows::<f64>(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(fro(&(k - expect)) < 1e-15);
        assert!(matches!(
            spherical_example(cx(0.5, 0.0), cx(0.5, 0.0), &tol()),
            Err(Error::NotOnSphere { .. })
        ));
        let mut r = rng(100);
        for _ in 0..5 {
            let l = sphere_point(&mut r, 2);
            let e = spherical_example(l[0], l[1], &tol()).unwrap();
            assert!(e.agreement < 1e-10);
            let z = ball_point::<f64>(&mut r, 2, 0.9);
            let w = ball_point::<f64>(&mut r, 2, 0.9);
            assert!(spherical_identity_residual(&e.lambda, &z, &w) < 1e-12);
            let c = classify_row(&e.row, &tol(), RowCaps::for_size(1, 2)).unwrap();
            assert!(!c.cnc && c.strongly_cc && c.cc);
        }
    }

    #[test]
    fn moments_align_under_conjugation() {
        let t = random_row(110, 2, 3, 1);
        let mut r = rng(111);
        let q = random_unitary::<f64>(&mut r, 3);
        let rr = t.conjugate(&q);
        let (alpha, beta) = defect_alignment(&t, &rr, &q, &tol()).unwrap();
        let mt = nc_char_moments(&t, 3, &tol()).unwrap();
        let mr = nc_char_moments(&rr, 3, &tol()).unwrap();
        assert!(moment_alignment_residual(&mt, &mr, &alpha, &beta) < 1e-12);
        let et = expanded_moments(&t, 2, &tol()).unwrap();
        let er = expanded_moments(&rr, 2, &tol()).unwrap();
        for (key, m) in &et.expanded {
            assert!(fro(&(&er.expanded[key] - &beta * m * beta.adjoint())) < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn theta_zero_is_pure(seed in 0u64..10_000, d in 1usize..4, n in 1usize..4, ones in 0usize..3) {
            let t = random_row(seed, d, n, ones.min(n));
            let s0 = char_eval(&t, &vec![cx(0.0, 0.0); d], &tol()).unwrap();
            prop_assert!(purity_check(&s0, 1e-9));
        }

        #[test]
        fn chain_holds(seed in 0u64..10_000, d in 1usize..4, n in 1usize..4, commuting in any::<bool>()) {
            let mut r = rng(seed);
            let blocks = if commuting {
                commuting_row::<f64>(&mut r, d, n, 1.0)
            } else {
                split_row(&row_with_unit_singular_values::<f64>(&mut r, d, n, 1), d)
            };
            let t = Row::new(blocks, 1e-9).unwrap();
            let c = classify_row(&t, &tol(), RowCaps::for_size(n, d)).unwrap();
            prop_assert!(!c.cnc || c.strongly_cc);
            prop_assert!(!c.strongly_cc || c.cc);
            prop_assert!(c.forms_agree);
        }
    }
}
