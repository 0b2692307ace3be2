//! Dense complex linear algebra: square roots, ranges, Krylov closures and
//! the unitary Procrustes step.
//!
//! Zero-sized matrices are valid everywhere. Bases returned by
//! [`orthonormal_range`] and friends are normalised so that the entry of
//! largest modulus in each column is real and positive, which makes the
//! output reproducible for a fixed input.

use faer::Mat;
use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{lift, re, to_f64, Real};

pub type CMat<T> = DMatrix<Complex<T>>;

pub fn zeros<T: Real>(rows: usize, cols: usize) -> CMat<T> {
    CMat::zeros(rows, cols)
}

pub fn identity<T: Real>(n: usize) -> CMat<T> {
    CMat::identity(n, n)
}

/// Builds a matrix from row-major complex entries.
pub fn from_rows<T: Real>(rows: usize, cols: usize, data: &[Complex<T>]) -> CMat<T> {
    assert_eq!(data.len(), rows * cols, "data length");
    CMat::from_row_slice(rows, cols, data)
}

/// Builds a matrix from row-major real entries.
pub fn from_real_rows<T: Real>(rows: usize, cols: usize, data: &[f64]) -> CMat<T> {
    let v: Vec<Complex<T>> = data.iter().map(|&x| lift(re(x))).collect();
    from_rows(rows, cols, &v)
}

/// Rejects NaN and infinite entries.
pub fn check_finite<T: Real>(m: &CMat<T>) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let z = m[(r, c)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

fn to_faer<T: Real>(m: &CMat<T>) -> Mat<Complex<f64>> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        Complex::new(to_f64(z.re), to_f64(z.im))
    })
}

fn from_faer<T: Real>(m: faer::MatRef<'_, Complex<f64>>) -> CMat<T> {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        Complex::new(re(z.re), re(z.im))
    })
}

/// Thin SVD `M = U diag(s) V*` with `s` descending.
/// Decompositions run in `f64` whatever the scalar type.
struct Svd<T: Real> {
    u: CMat<T>,
    s: Vec<T>,
    v: CMat<T>,
}

fn svd_thin<T: Real>(m: &CMat<T>) -> Svd<T> {
    let f = to_faer(m);
    let svd = f.thin_svd().expect("SVD did not converge");
    let s = svd.S().column_vector();
    Svd {
        u: from_faer(svd.U()),
        s: (0..s.nrows()).map(|i| re(s[i].re)).collect(),
        v: from_faer(svd.V()),
    }
}

/// Frobenius norm.
pub fn fro<T: Real>(m: &CMat<T>) -> T {
    m.norm()
}

/// Largest entry modulus.
pub fn max_abs<T: Real>(m: &CMat<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(z.modulus()))
}

/// Singular values in descending order.
pub fn singular_values<T: Real>(m: &CMat<T>) -> Vec<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let f = to_faer(m);
    let s = f.singular_values().expect("SVD did not converge");
    let mut out: Vec<T> = s.into_iter().map(re).collect();
    out.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    out
}

/// Spectral norm; zero for empty matrices.
pub fn op_norm<T: Real>(m: &CMat<T>) -> T {
    singular_values(m).first().copied().unwrap_or_else(T::zero)
}

/// `max(1, x)`.
pub fn at_least_one<T: Real>(x: T) -> T {
    x.max(T::one())
}

pub fn hstack<T: Real>(rows: usize, blocks: &[CMat<T>]) -> CMat<T> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row count");
        out.view_mut((0, c0), (rows, b.ncols())).copy_from(b);
        c0 += b.ncols();
    }
    out
}

pub fn vstack<T: Real>(cols: usize, blocks: &[CMat<T>]) -> CMat<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column count");
        out.view_mut((r0, 0), (b.nrows(), cols)).copy_from(b);
        r0 += b.nrows();
    }
    out
}

pub fn block_diag<T: Real>(blocks: &[CMat<T>]) -> CMat<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Kronecker product.
pub fn kron<T: Real>(a: &CMat<T>, b: &CMat<T>) -> CMat<T> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    let mut out = zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == Complex::new(T::zero(), T::zero()) {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
        }
    }
    out
}

/// Column-major vectorisation.
pub fn vec_of<T: Real>(m: &CMat<T>) -> CMat<T> {
    CMat::from_column_slice(m.nrows() * m.ncols(), 1, m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec<T: Real>(v: &[Complex<T>], rows: usize, cols: usize) -> CMat<T> {
    CMat::from_column_slice(rows, cols, v)
}

/// Rotates a column so that its largest-modulus entry is real and positive.
fn fix_column_phase<T: Real>(m: &mut CMat<T>, col: usize) {
    let mut best = 0;
    let mut best_abs = T::zero();
    for r in 0..m.nrows() {
        let a = m[(r, col)].modulus();
        if a > best_abs {
            best_abs = a;
            best = r;
        }
    }
    if best_abs > T::zero() {
        let z = m[(best, col)];
        let phase = z.conj() / lift(best_abs);
        for r in 0..m.nrows() {
            m[(r, col)] *= phase;
        }
        m[(best, col)] = lift(m[(best, col)].re);
    }
}

/// Applies the phase convention to every column.
pub fn fix_phases<T: Real>(m: &mut CMat<T>) {
    for c in 0..m.ncols() {
        fix_column_phase(m, c);
    }
}

/// Hermitian eigendecomposition with eigenvalues ascending and
/// phase-normalised eigenvectors.
pub fn hermitian_eigen<T: Real>(h: &CMat<T>) -> (Vec<T>, CMat<T>) {
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let sym = (h + h.adjoint()) * lift(re::<T>(0.5));
    let eig = to_faer(&sym)
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("eigensolver did not converge");
    let ev = eig.S().column_vector();
    // faer returns eigenvalues in ascending order
    let vals: Vec<T> = (0..n).map(|i| re(ev[i].re)).collect();
    let mut vecs: CMat<T> = from_faer(eig.U());
    fix_phases(&mut vecs);
    (vals, vecs)
}

/// Relative Hermitian defect `||H - H*|| / max(1, ||H||)`.
pub fn hermitian_defect<T: Real>(h: &CMat<T>) -> T {
    if h.nrows() != h.ncols() {
        return T::max_value().unwrap_or_else(T::one);
    }
    fro(&(h - h.adjoint())) / at_least_one(fro(h))
}

/// Hermitian positive square root.
///
/// Eigenvalues within `tol * max(1, ||H||)` of zero (on either side) are
/// set to zero, so numerically singular inputs give exactly singular roots.
pub fn sqrtm_psd<T: Real>(h: &CMat<T>, tol: T) -> Result<CMat<T>> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "square root of a {}x{} matrix",
            h.nrows(),
            h.ncols()
        )));
    }
    let n = h.nrows();
    if n == 0 {
        return Ok(zeros(0, 0));
    }
    let defect = hermitian_defect(h);
    if defect > tol {
        return Err(Error::NotHermitian {
            defect: to_f64(defect),
        });
    }
    let (vals, vecs) = hermitian_eigen(h);
    let scale = at_least_one(vals.iter().fold(T::zero(), |a, v| a.max(v.abs())));
    let floor = tol * scale;
    let mut roots = Vec::with_capacity(n);
    for &v in &vals {
        if v < -floor {
            return Err(Error::IndefiniteBeyondTolerance {
                min_eigenvalue: to_f64(v),
            });
        }
        roots.push(if v <= floor { T::zero() } else { v.sqrt() });
    }
    let mut scaled = vecs.clone();
    for (c, r) in roots.iter().enumerate() {
        let f = lift(*r);
        for x in scaled.column_mut(c).iter_mut() {
            *x *= f;
        }
    }
    let s = &scaled * vecs.adjoint();
    Ok((&s + s.adjoint()) * lift(re::<T>(0.5)))
}

/// A subspace of `C^ambient` carried by an orthonormal basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace<T: Real> {
    ambient: usize,
    basis: CMat<T>,
}

impl<T: Real> Subspace<T> {
    /// Wraps a basis that is already orthonormal.
    pub fn from_orthonormal(basis: CMat<T>) -> Self {
        Subspace {
            ambient: basis.nrows(),
            basis,
        }
    }

    pub fn zero(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: zeros(ambient, 0),
        }
    }

    pub fn full(ambient: usize) -> Self {
        Subspace {
            ambient,
            basis: identity(ambient),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &CMat<T> {
        &self.basis
    }

    pub fn into_basis(self) -> CMat<T> {
        self.basis
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient
    }

    pub fn is_zero(&self) -> bool {
        self.dim() == 0
    }

    pub fn projector(&self) -> CMat<T> {
        &self.basis * self.basis.adjoint()
    }

    /// `||Q*Q - I||_F`.
    pub fn orthonormality_defect(&self) -> T {
        fro(&(self.basis.adjoint() * &self.basis - identity::<T>(self.dim())))
    }

    /// Orthogonal complement in the ambient space.
    pub fn complement(&self) -> Self {
        if self.dim() == 0 {
            return Subspace::full(self.ambient);
        }
        if self.dim() >= self.ambient {
            return Subspace::zero(self.ambient);
        }
        let p = identity::<T>(self.ambient) - self.projector();
        // The singular values of a projector are 0 or 1.
        range_above(&p, re(0.5))
    }

    /// Smallest subspace containing both.
    pub fn join(&self, other: &Self, tol: T) -> Self {
        assert_eq!(self.ambient, other.ambient, "join ambient dims");
        orthonormal_range(&hstack(self.ambient, &[self.basis.clone(), other.basis.clone()]), tol)
    }

    pub fn intersection(&self, other: &Self, tol: T) -> Self {
        self.complement()
            .join(&other.complement(), tol)
            .complement()
    }

    /// Norm of the component of `v` orthogonal to the subspace.
    pub fn distance(&self, v: &CMat<T>) -> T {
        fro(&(v - &self.basis * (self.basis.adjoint() * v)))
    }

    /// `||P_self - P_other||_F`; zero iff the subspaces coincide.
    pub fn gap(&self, other: &Self) -> T {
        fro(&(self.projector() - other.projector()))
    }

    /// Subspace of `C^(ambient * k)` given by the `k`-fold direct sum.
    pub fn direct_sum_power(&self, k: usize) -> Self {
        let blocks: Vec<CMat<T>> = (0..k).map(|_| self.basis.clone()).collect();
        Subspace {
            ambient: self.ambient * k,
            basis: block_diag(&blocks),
        }
    }
}

/// Orthonormal basis of the range of `m`.
///
/// The rank counts singular values above `tol * sigma_max`.
pub fn orthonormal_range<T: Real>(m: &CMat<T>, tol: T) -> Subspace<T> {
    let smax = op_norm(m);
    range_above(m, tol * smax)
}

/// Orthonormal basis of the span of left singular vectors whose singular
/// value exceeds the absolute threshold `cut`.
pub fn range_above<T: Real>(m: &CMat<T>, cut: T) -> Subspace<T> {
    let rows = m.nrows();
    if rows == 0 || m.ncols() == 0 {
        return Subspace::zero(rows);
    }
    let svd = svd_thin(m);
    let idx: Vec<usize> = (0..svd.s.len())
        .filter(|&i| svd.s[i] > cut && svd.s[i] > T::zero())
        .collect();
    let mut basis = zeros(rows, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        basis.set_column(k, &svd.u.column(i));
    }
    fix_phases(&mut basis);
    Subspace {
        ambient: rows,
        basis,
    }
}

/// Right null space of `m`, as the complement of the range of `m*`.
pub fn nullspace<T: Real>(m: &CMat<T>, tol: T) -> Subspace<T> {
    if m.nrows() == 0 {
        return Subspace::full(m.ncols());
    }
    orthonormal_range(&m.adjoint(), tol).complement()
}

/// Smallest subspace containing `seed` and invariant under every operator.
///
/// New directions are accepted when their component orthogonal to the
/// current span exceeds `tol * max(1, max ||O||)`.
pub fn span_closure<T: Real>(seed: &Subspace<T>, ops: &[CMat<T>], tol: T) -> Result<Subspace<T>> {
    let n = seed.ambient_dim();
    for (i, o) in ops.iter().enumerate() {
        if o.nrows() != n || o.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "operator {} is {}x{}, ambient dimension is {}",
                i,
                o.nrows(),
                o.ncols(),
                n
            )));
        }
    }
    let scale = at_least_one(ops.iter().fold(T::zero(), |a, o| a.max(fro(o))));
    let mut q = seed.basis().clone();
    let mut frontier = q.clone();
    while q.ncols() < n && frontier.ncols() > 0 && !ops.is_empty() {
        let images: Vec<CMat<T>> = ops.iter().map(|o| o * &frontier).collect();
        let mut cand = hstack(n, &images);
        for _ in 0..2 {
            let coef = q.adjoint() * &cand;
            cand -= &q * coef;
        }
        let fresh = range_above(&cand, tol * scale);
        if fresh.dim() == 0 {
            break;
        }
        frontier = fresh.into_basis();
        q = hstack(n, &[q, frontier.clone()]);
    }
    Ok(range_above(&q, re(0.5)))
}

/// Unitary factor of the polar decomposition of a square matrix.
pub fn polar_unitary<T: Real>(m: &CMat<T>) -> CMat<T> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "polar factor of a non-square matrix");
    if n == 0 {
        return zeros(0, 0);
    }
    let svd = svd_thin(m);
    svd.u * svd.v.adjoint()
}

/// Unitary `W` minimising `||A - W B||_F`.
///
/// On the part of the space where `A B*` is rank deficient the result is
/// the unitary closest to the identity, so `procrustes(B, B)` is `I`.
pub fn procrustes<T: Real>(a: &CMat<T>, b: &CMat<T>) -> Result<CMat<T>> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "procrustes operands {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let m = a.nrows();
    if m == 0 {
        return Ok(zeros(0, 0));
    }
    let cross = a * b.adjoint();
    let Svd { u, s, v } = svd_thin(&cross);
    let smax = s.first().copied().unwrap_or_else(T::zero);
    let cut = re::<T>(1e-12) * at_least_one(smax);
    let keep: Vec<usize> = (0..s.len())
        .filter(|&i| s[i] > cut)
        .collect();
    let mut ur = zeros(m, keep.len());
    let mut vr = zeros(m, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        ur.set_column(k, &u.column(i));
        vr.set_column(k, &v.column(i));
    }
    let mut w = &ur * vr.adjoint();
    if keep.len() < m {
        let nu = Subspace::from_orthonormal(ur).complement().into_basis();
        let nv = Subspace::from_orthonormal(vr).complement().into_basis();
        let inner = polar_unitary(&(nu.adjoint() * &nv));
        w += &nu * inner * nv.adjoint();
    }
    Ok(w)
}

/// Solves `A X = B` for square nonsingular `A`.
pub fn solve<T: Real>(a: &CMat<T>, b: &CMat<T>) -> Option<CMat<T>> {
    if a.nrows() == 0 {
        return Some(zeros(0, b.ncols()));
    }
    let x = a.clone().lu().solve(b)?;
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Minimum-norm least-squares solution of `A X = B`.
pub fn lstsq<T: Real>(a: &CMat<T>, b: &CMat<T>, tol: T) -> CMat<T> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return zeros(a.ncols(), b.ncols());
    }
    let svd = svd_thin(a);
    let smax = svd.s.first().copied().unwrap_or_else(T::zero);
    let cut = tol * smax;
    let mut out = zeros(a.ncols(), b.ncols());
    for (i, &s) in svd.s.iter().enumerate() {
        if s > cut && s > T::zero() {
            let coef = svd.u.column(i).adjoint() * b / lift(s);
            out += svd.v.column(i) * coef;
        }
    }
    out
}

/// Inclusion of the `k`-th summand `C^n -> C^(d n)`.
pub fn inclusion<T: Real>(d: usize, n: usize, k: usize) -> CMat<T> {
    let mut m = zeros(d * n, n);
    for i in 0..n {
        m[(k * n + i, i)] = lift(T::one());
    }
    m
}

/// `Z(z) = [z_1 I ... z_d I]`, an `n x dn` matrix.
pub fn z_row<T: Real>(z: &[Complex<T>], n: usize) -> CMat<T> {
    let d = z.len();
    let mut m = zeros(n, d * n);
    for (k, zk) in z.iter().enumerate() {
        for i in 0..n {
            m[(i, k * n + i)] = *zk;
        }
    }
    m
}

/// Euclidean norm of a point.
pub fn point_norm<T: Real>(z: &[Complex<T>]) -> T {
    z.iter().fold(T::zero(), |a, w| a + w.norm_sqr()).sqrt()
}

/// Fails unless `||z|| < 1`.
pub fn check_in_ball<T: Real>(z: &[Complex<T>]) -> Result<()> {
    let nz = point_norm(z);
    if nz < T::one() {
        Ok(())
    } else {
        Err(Error::PointOutsideBall { norm: to_f64(nz) })
    }
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue<T: Real>(h: &CMat<T>) -> T {
    hermitian_eigen(h).0.first().copied().unwrap_or_else(T::zero)
}
