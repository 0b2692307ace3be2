//! The two-component kernel `K(z, w) = G(z) G(w)^*` of a colligation, the
//! Agler identity it satisfies, the isometry `V` it induces, and the model
//! colligations assembled from it.
//!
//! State-space coordinates stand in for the reproducing kernel space: the
//! element `K(., w) v` is represented by `G(w)^* v` in `X`, and inner
//! products agree on the span of those vectors.

use std::collections::BTreeMap;

use num_complex::Complex;

use crate::colligation::{Colligation, WeakSpace};
use crate::error::{Error, Result};
use crate::matcore::{
    at_least_one, block_diag, fro, hstack, identity, inclusion, lstsq, min_eigenvalue, op_norm,
    range_above, vstack, zeros, CMat, Subspace,
};
use crate::random::{gaussian, halton_ball_grid, rng, Rng64};
use crate::scalar::{lift, re, to_f64, Real, Tolerances};
use crate::series::{da_backward_shift, resolvent_taylor_comm, Caps, CommSeries, MultiIndex, Side};

/// Named residuals, flags and dimensions from a verification run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub residuals: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub dims: BTreeMap<String, usize>,
    pub passed: bool,
}

impl Report {
    fn residual(&mut self, name: &str, value: f64) {
        let slot = self.residuals.entry(name.to_string()).or_insert(0.0);
        if value > *slot || value.is_nan() {
            *slot = value;
        }
    }

    fn flag(&mut self, name: &str, value: bool) {
        self.flags.insert(name.to_string(), value);
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().fold(0.0, |a, &b| a.max(b))
    }
}

/// `G(z)`, a `(q + dp) x n` matrix: `C (I - Z(z) A)^{-1}` on top, then
/// `B^* (I - Z(z)^* A^*)^{-1} I_k` for `k = 1..d`.
#[derive(Clone, Debug)]
pub struct BigKernelFactor<T: Real> {
    source: Colligation<T>,
}

impl<T: Real> BigKernelFactor<T> {
    pub fn new(source: Colligation<T>) -> Self {
        BigKernelFactor { source }
    }

    pub fn source(&self) -> &Colligation<T> {
        &self.source
    }

    /// Holomorphic top rows `C (I - Z(z) A)^{-1}`.
    pub fn top(&self, z: &[Complex<T>]) -> Result<CMat<T>> {
        let u = &self.source;
        Ok(u.solve_state_adjoint(z, &u.c().adjoint())?.adjoint())
    }

    /// `(I - A Z(z))^{-1} B`, a `dn x p` matrix.
    pub fn state_input(&self, z: &[Complex<T>]) -> Result<CMat<T>> {
        let u = &self.source;
        let x = u.solve_state(z, &u.zb(z))?;
        Ok(u.b_stacked() + u.a_stacked() * x)
    }

    pub fn eval(&self, z: &[Complex<T>]) -> Result<CMat<T>> {
        let u = &self.source;
        if z.len() != u.d() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, colligation has d = {}",
                z.len(),
                u.d()
            )));
        }
        crate::matcore::check_in_ball(z)?;
        let n = u.n();
        let top = self.top(z)?;
        let w = self.state_input(z)?;
        let mut blocks = vec![top];
        for k in 0..u.d() {
            blocks.push(w.view((k * n, 0), (n, u.p())).adjoint());
        }
        Ok(vstack(n, &blocks))
    }
}

/// A value of `K(z, w)` with block accessors.
#[derive(Clone, Debug, PartialEq)]
pub struct BigKernel<T: Real> {
    d: usize,
    p: usize,
    q: usize,
    mat: CMat<T>,
}

impl<T: Real> BigKernel<T> {
    pub fn new(mat: CMat<T>, d: usize, p: usize, q: usize) -> Self {
        assert_eq!(mat.shape(), (q + d * p, q + d * p), "kernel shape");
        BigKernel { d, p, q, mat }
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.mat
    }

    fn off(&self, k: usize) -> usize {
        self.q + k * self.p
    }

    pub fn k_s(&self) -> CMat<T> {
        self.mat.view((0, 0), (self.q, self.q)).into_owned()
    }

    pub fn psi(&self, k: usize) -> CMat<T> {
        self.mat.view((0, self.off(k)), (self.q, self.p)).into_owned()
    }

    pub fn phi(&self, i: usize, j: usize) -> CMat<T> {
        self.mat.view((self.off(i), self.off(j)), (self.p, self.p)).into_owned()
    }

    /// First block column.
    pub fn k0(&self) -> CMat<T> {
        self.mat.columns(0, self.q).into_owned()
    }

    /// Block column `j`, the one holding `Psi_j` and `Phi_{., j}`.
    pub fn kj(&self, j: usize) -> CMat<T> {
        self.mat.columns(self.off(j), self.p).into_owned()
    }

    /// The block columns `K_1, ..., K_d` stacked vertically.
    pub fn t_kernel(&self) -> CMat<T> {
        let cols: Vec<CMat<T>> = (0..self.d).map(|j| self.kj(j)).collect();
        vstack(self.p, &cols)
    }
}

pub fn big_kernel_eval<T: Real>(f: &BigKernelFactor<T>, z: &[Complex<T>], w: &[Complex<T>]) -> Result<BigKernel<T>> {
    let gz = f.eval(z)?;
    let gw = f.eval(w)?;
    let u = f.source();
    Ok(BigKernel::new(gz * gw.adjoint(), u.d(), u.p(), u.q()))
}

/// `M(z) = diag(I_q, col(z_j I_p))`.
pub fn m_struct<T: Real>(z: &[Complex<T>], p: usize, q: usize) -> CMat<T> {
    let col: Vec<CMat<T>> = z.iter().map(|zj| identity::<T>(p) * *zj).collect();
    block_diag(&[identity(q), vstack(p, &col)])
}

/// `N_j(z) = diag(conj(z_j) I_q, e_j (x) I_p)`.
pub fn n_struct<T: Real>(z: &[Complex<T>], j: usize, p: usize, q: usize) -> CMat<T> {
    block_diag(&[identity::<T>(q) * z[j].conj(), inclusion(z.len(), p, j)])
}

fn inner<T: Real>(z: &[Complex<T>], w: &[Complex<T>]) -> Complex<T> {
    z.iter().zip(w).fold(lift(T::zero()), |a, (x, y)| a + *x * y.conj())
}

/// Both sides of the Agler identity at one pair, plus the three block
/// identities, as absolute Frobenius residuals.
pub fn agler_residuals<T: Real>(
    u: &Colligation<T>,
    kernel: &BigKernel<T>,
    z: &[Complex<T>],
    w: &[Complex<T>],
) -> Result<[T; 4]> {
    let (p, q, d) = (u.p(), u.q(), u.d());
    let sz = u.transfer_eval(z)?;
    let sw = u.transfer_eval(w)?;
    let left = vstack(q, &[identity(q), sz.adjoint()]) * hstack(q, &[identity(q), sw.clone()])
        - vstack(p, &[sz.clone(), identity(p)]) * hstack(p, &[sw.adjoint(), identity(p)]);
    let k = kernel.matrix();
    let mut right = m_struct(z, p, q).adjoint() * k * m_struct(w, p, q);
    for j in 0..d {
        right -= n_struct(z, j, p, q).adjoint() * k * n_struct(w, j, p, q);
    }
    let total = fro(&(left - right));

    let one = lift(T::one());
    let ks = identity::<T>(q) - &sz * sw.adjoint() - kernel.k_s() * (one - inner(z, w));
    let mut psi = &sz - &sw;
    for l in 0..d {
        psi -= kernel.psi(l) * (z[l] - w[l]);
    }
    let mut phi = identity::<T>(p) - sz.adjoint() * &sw;
    for i in 0..d {
        phi -= kernel.phi(i, i);
        for l in 0..d {
            phi += kernel.phi(i, l) * (z[i].conj() * w[l]);
        }
    }
    Ok([total, fro(&ks), fro(&psi), fro(&phi)])
}

/// Checks the Agler identity at every sample pair.
///
/// Residual names: `total`, `k_s` (the `I - S S^*` block), `psi` (the
/// `S(z) - S(w)` block) and `phi` (the `I - S^* S` block).
pub fn agler_verify<T: Real>(
    u: &Colligation<T>,
    pairs: &[(Vec<Complex<T>>, Vec<Complex<T>>)],
    tol: T,
) -> Result<Report> {
    let f = BigKernelFactor::new(u.clone());
    let mut report = Report::default();
    for name in ["total", "k_s", "psi", "phi"] {
        report.residual(name, 0.0);
    }
    for (z, w) in pairs {
        let k = big_kernel_eval(&f, z, w)?;
        let r = agler_residuals(u, &k, z, w)?;
        for (name, v) in ["total", "k_s", "psi", "phi"].iter().zip(r) {
            report.residual(name, to_f64(v));
        }
    }
    let tol = to_f64(tol);
    for name in ["k_s", "psi", "phi"] {
        let ok = report.residuals[name] < tol;
        report.flag(name, ok);
    }
    report.passed = report.residuals["total"] < tol;
    report.dims.insert("pairs".to_string(), pairs.len());
    Ok(report)
}

/// One generator `(w, y, u)` of the domain of `V`.
#[derive(Clone, Debug)]
pub struct VGenerator<T: Real> {
    pub point: Vec<Complex<T>>,
    pub y: CMat<T>,
    pub u: CMat<T>,
}

/// Seeded generators with points in the ball of radius `radius`.
pub fn random_generators<T: Real>(r: &mut Rng64, d: usize, p: usize, q: usize, count: usize, radius: f64) -> Vec<VGenerator<T>> {
    (0..count)
        .map(|_| VGenerator {
            point: crate::random::ball_point(r, d, radius),
            y: crate::random::random_matrix(r, q, 1),
            u: crate::random::random_matrix(r, p, 1),
        })
        .collect()
}

/// `||G_domain - G_range||_F` for the Gram matrices of the images of the
/// generators before and after `V`, with `kernel(z, w)` supplying `K`.
pub fn v_gram_residual<T, K>(u: &Colligation<T>, kernel: K, gens: &[VGenerator<T>]) -> Result<T>
where
    T: Real,
    K: Fn(&[Complex<T>], &[Complex<T>]) -> Result<CMat<T>>,
{
    let (p, q, d) = (u.p(), u.q(), u.d());
    let m = gens.len();
    let values: Vec<CMat<T>> = gens.iter().map(|g| u.transfer_eval(&g.point)).collect::<Result<_>>()?;
    let mut dom = zeros::<T>(m, m);
    let mut ran = zeros::<T>(m, m);
    for (a, ga) in gens.iter().enumerate() {
        let va = vstack(1, &[ga.y.clone(), ga.u.clone()]);
        for (b, gb) in gens.iter().enumerate() {
            let vb = vstack(1, &[gb.y.clone(), gb.u.clone()]);
            let k = kernel(&gb.point, &ga.point)?;
            let mut dk = zeros::<T>(1, 1);
            for j in 0..d {
                dk += vb.adjoint() * n_struct(&gb.point, j, p, q).adjoint() * &k * n_struct(&ga.point, j, p, q) * &va;
            }
            let ya = &ga.y + &values[a] * &ga.u;
            let yb = &gb.y + &values[b] * &gb.u;
            dk += yb.adjoint() * ya;
            let mut rk = vb.adjoint() * m_struct(&gb.point, p, q).adjoint() * &k * m_struct(&ga.point, p, q) * &va;
            let ua = values[a].adjoint() * &ga.y + &ga.u;
            let ub = values[b].adjoint() * &gb.y + &gb.u;
            rk += ub.adjoint() * ua;
            dom[(b, a)] = dk[(0, 0)];
            ran[(b, a)] = rk[(0, 0)];
        }
    }
    Ok(fro(&(dom - ran)))
}

/// Gram check of the isometry `V` with the realized kernel.
pub fn v_isometry_check<T: Real>(u: &Colligation<T>, gens: &[VGenerator<T>], tol: T) -> Result<(T, bool)> {
    let f = BigKernelFactor::new(u.clone());
    let r = v_gram_residual(u, |z, w| Ok(big_kernel_eval(&f, z, w)?.mat), gens)?;
    Ok((r, r < tol))
}

/// Sampled values and Taylor coefficients of one vector-valued family.
struct Family<T: Real> {
    sampled: Vec<CMat<T>>,
    coeffs: Vec<CMat<T>>,
}

impl<T: Real> Family<T> {
    fn span(&self, ambient: usize, tol: T) -> WeakSpace<T> {
        WeakSpace::from_generators(ambient, &self.sampled, &self.coeffs, tol)
    }
}

fn grid<T: Real>(u: &Colligation<T>) -> Vec<Vec<Complex<T>>> {
    halton_ball_grid(u.d(), 4 * u.n().max(1) * u.d(), 0.9)
}

/// `(I - A^* Z(z)^*)^{-1} C^*`, in `X`.
fn observation_family<T: Real>(u: &Colligation<T>, order: usize) -> Family<T> {
    let sampled = grid(u)
        .iter()
        .map(|z| u.solve_state_adjoint(z, &u.c().adjoint()).expect("resolvent on the grid"))
        .collect();
    let astar: Vec<CMat<T>> = u.a_blocks().iter().map(|a| a.adjoint()).collect();
    let g = resolvent_taylor_comm(&astar, order, Side::Left, &Caps::new(None, Some(u.c().adjoint())))
        .expect("validated blocks");
    Family {
        sampled,
        coeffs: g.coeffs().values().cloned().collect(),
    }
}

/// Blocks `A I_k^*` of `A Z(z) = sum z_k A I_k^*` on `X^d`.
fn az_blocks<T: Real>(u: &Colligation<T>) -> Vec<CMat<T>> {
    let a = u.a_stacked();
    (0..u.d()).map(|k| &a * inclusion::<T>(u.d(), u.n(), k).adjoint()).collect()
}

/// `(I - A Z(z))^{-1} B`, in `X^d`.
fn input_family<T: Real>(u: &Colligation<T>, order: usize) -> Family<T> {
    let f = BigKernelFactor::new(u.clone());
    let sampled = grid(u).iter().map(|z| f.state_input(z).expect("resolvent on the grid")).collect();
    let h = resolvent_taylor_comm(&az_blocks(u), order, Side::Left, &Caps::new(None, Some(u.b_stacked())))
        .expect("validated blocks");
    Family {
        sampled,
        coeffs: h.coeffs().values().cloned().collect(),
    }
}

/// Splits every `dn x p` member into its `d` blocks in `X`.
fn blockwise<T: Real>(fam: &Family<T>, d: usize, n: usize) -> Family<T> {
    let split = |ms: &[CMat<T>]| -> Vec<CMat<T>> {
        ms.iter()
            .flat_map(|m| (0..d).map(move |k| m.view((k * n, 0), (n, m.ncols())).into_owned()))
            .collect()
    };
    Family {
        sampled: split(&fam.sampled),
        coeffs: split(&fam.coeffs),
    }
}

fn join_spaces<T: Real>(a: &WeakSpace<T>, b: &WeakSpace<T>, tol: T) -> WeakSpace<T> {
    let space = a.space.join(&b.space, tol);
    WeakSpace {
        sampled_rank: a.sampled_rank + b.sampled_rank,
        coefficient_rank: a.coefficient_rank + b.coefficient_rank,
        stabilized: a.stabilized && b.stabilized,
        space,
    }
}

/// Defect geometry of `V` in state coordinates.
#[derive(Clone, Debug)]
pub struct ModelGeometry<T: Real> {
    pub source: Colligation<T>,
    /// Span of the values `G(w)^* v`; the part of `X` seen by the kernel.
    pub cc_space: Subspace<T>,
    pub d_sub: Subspace<T>,
    pub r_sub: Subspace<T>,
    pub d_perp: Subspace<T>,
    pub r_perp: Subspace<T>,
    /// Compression of `A^*` from `D^perp` to `R^perp` in the two bases.
    pub x: CMat<T>,
    /// How far `U^*` is from mapping `D^perp` into `R^perp` and
    /// `D + Y` into `R + U`.
    pub offdiag_residual: T,
    /// The source is unitary and closely connected, so `x` is the model's
    /// defect unitary rather than only a compression.
    pub canonical: bool,
}

/// Computes `D`, `R`, their complements inside the kernel's state span,
/// and the compression `X`.
pub fn model_subspaces<T: Real>(u: &Colligation<T>, tol: &Tolerances<T>) -> Result<ModelGeometry<T>> {
    let (d, n, p, q) = (u.d(), u.n(), u.p(), u.q());
    let order = u.default_order();
    let obs = observation_family(u, order).span(n, tol.rank);
    let inputs = input_family(u, order);
    let ctr = blockwise(&inputs, d, n).span(n, tol.rank);
    let dca = u.dca_space(tol.rank);
    let dtilde = u.dtilde_space(tol.rank);
    let d_input = inputs.span(d * n, tol.rank);

    let cc = join_spaces(&obs, &ctr, tol.rank);
    let d_sub = join_spaces(&dca, &d_input, tol.rank);
    let r_sub = join_spaces(&obs, &dtilde, tol.rank);
    for (name, s) in [("kernel state span", &cc), ("D", &d_sub), ("R", &r_sub)] {
        if !s.stabilized {
            return Err(Error::NotStabilized(format!(
                "{}: sampled rank {} vs coefficient rank {} (joined {})",
                name,
                s.sampled_rank,
                s.coefficient_rank,
                s.space.dim()
            )));
        }
    }
    let cc_space = cc.space;
    let cc_d = cc_space.direct_sum_power(d);
    let d_perp = range_above(&(cc_d.projector() - d_sub.space.projector()), re(0.5));
    let r_perp = range_above(&(cc_space.projector() - r_sub.space.projector()), re(0.5));

    let ustar = u.matrix().adjoint();
    let astar = u.a_stacked().adjoint();
    let x = r_perp.basis().adjoint() * &astar * d_perp.basis();

    // U^* [h; 0] for h in D^perp should be [R^perp X; 0].
    let dp_in = vstack(d_perp.dim(), &[d_perp.basis().clone(), zeros(q, d_perp.dim())]);
    let expect = vstack(d_perp.dim(), &[r_perp.basis() * &x, zeros(p, d_perp.dim())]);
    let mut off = fro(&(&ustar * dp_in - expect));
    // U^* (D + Y) should avoid R^perp.
    let dv = block_diag(&[d_sub.space.basis().clone(), identity(q)]);
    let rp_out = vstack(r_perp.dim(), &[r_perp.basis().clone(), zeros(p, r_perp.dim())]);
    off = off.max(fro(&(rp_out.adjoint() * &ustar * dv)));

    let flags = u.classify(tol);
    Ok(ModelGeometry {
        source: u.clone(),
        cc_space,
        d_sub: d_sub.space,
        r_sub: r_sub.space,
        d_perp,
        r_perp,
        x,
        offdiag_residual: off,
        canonical: flags.unitary && flags.closely_connected,
    })
}

/// Residuals of the two defect characterizations on Taylor coefficients:
/// every `h` in `D^perp` gives `sum_i z_i C (I - Z A)^{-1} h_i = 0` and
/// `B^* (I - Z^* A^*)^{-1} h = 0`.
pub fn defect_characterization_residual<T: Real>(geom: &ModelGeometry<T>, order: usize) -> T {
    let u = &geom.source;
    let (d, n) = (u.d(), u.n());
    if geom.d_perp.dim() == 0 {
        return T::zero();
    }
    let h = geom.d_perp.basis();
    let f = resolvent_taylor_comm(u.a_blocks(), order, Side::Left, &Caps::new(Some(u.c().clone()), None))
        .expect("validated blocks");
    let mut worst = T::zero();
    for m in MultiIndex::up_to(d, order + 1).into_iter().skip(1) {
        let mut acc = zeros::<T>(u.q(), h.ncols());
        for i in 0..d {
            if let Some(prev) = m.minus(i) {
                acc += f.get(&prev) * h.view((i * n, 0), (n, h.ncols()));
            }
        }
        worst = worst.max(fro(&acc));
    }
    let e = dual_resolvent(u, order);
    for c in e.coeffs().values() {
        worst = worst.max(fro(&(c * h)));
    }
    worst
}

/// Coefficients `B^* E_m` of `B^* (I - Z(z)^* A^*)^{-1}` in `conj(z)`.
fn dual_resolvent<T: Real>(u: &Colligation<T>, order: usize) -> CommSeries<T> {
    let (d, n) = (u.d(), u.n());
    let astar = u.a_stacked().adjoint();
    let blocks: Vec<CMat<T>> = (0..d).map(|k| inclusion::<T>(d, n, k) * &astar).collect();
    resolvent_taylor_comm(&blocks, order, Side::Left, &Caps::new(Some(u.b_stacked().adjoint()), None))
        .expect("validated blocks")
}

/// Assembles the model colligation whose adjoint is `V` on `D + Y` and `X`
/// on `D^perp`, in the coordinates of the kernel's state span.
pub fn tcfm_from_x<T: Real>(geom: &ModelGeometry<T>, x: &CMat<T>, tol: T) -> Result<Colligation<T>> {
    let u = &geom.source;
    let (d, p, q) = (u.d(), u.p(), u.q());
    if x.shape() != (geom.r_perp.dim(), geom.d_perp.dim()) {
        return Err(Error::DimensionMismatch(format!(
            "X is {:?}, defect spaces need ({}, {})",
            x.shape(),
            geom.r_perp.dim(),
            geom.d_perp.dim()
        )));
    }
    let xn = op_norm(x);
    if xn > T::one() + tol {
        return Err(Error::NotAContraction { norm: to_f64(xn) });
    }
    let pcc = geom.cc_space.basis();
    let m = pcc.ncols();
    let proj = block_diag(&[geom.d_sub.projector(), identity(q)]);
    let mut ustar = u.matrix().adjoint() * proj;
    let insert = geom.r_perp.basis() * x * geom.d_perp.basis().adjoint();
    let mut view = ustar.view_mut((0, 0), (u.n(), d * u.n()));
    view += insert;
    let left = block_diag(&[pcc.clone(), identity(p)]);
    let rights: Vec<CMat<T>> = (0..d).map(|_| pcc.clone()).collect();
    let right = block_diag(&[block_diag(&rights), identity(q)]);
    let model_star = left.adjoint() * ustar * right;
    Colligation::from_matrix(&model_star.adjoint(), d, m, p, q)
}

/// Which functional model a colligation is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Observable, weakly coisometric.
    Cfm,
    /// Controllable, weakly isometric.
    Dcfm,
    /// Closely connected, weakly unitary.
    Tcfm,
}

/// Coefficient-level checks of the Gleason identities, boundary operators
/// and metric relations, plus the structural flags each model requires.
pub fn functional_model_verify<T: Real>(
    u: &Colligation<T>,
    kind: ModelKind,
    order: usize,
    tol: &Tolerances<T>,
) -> Result<Report> {
    let (d, n, p, q) = (u.d(), u.n(), u.p(), u.q());
    let mut report = Report::default();
    let scale = to_f64(at_least_one(op_norm(&u.matrix())));
    let primal = matches!(kind, ModelKind::Cfm | ModelKind::Tcfm);
    let dual = matches!(kind, ModelKind::Dcfm | ModelKind::Tcfm);
    let zero = vec![lift(T::zero()); d];
    let f = BigKernelFactor::new(u.clone());
    let g0 = f.eval(&zero)?;

    if primal {
        // C F_m = sum_k C F_{m - e_k} A_k, with F built by the left recursion.
        let cf = resolvent_taylor_comm(u.a_blocks(), order, Side::Left, &Caps::new(Some(u.c().clone()), None))?;
        let mut worst = 0.0f64;
        for m in MultiIndex::up_to(d, order).into_iter().skip(1) {
            let mut acc = zeros::<T>(q, n);
            for k in 0..d {
                if let Some(prev) = m.minus(k) {
                    acc += cf.get(&prev) * &u.a_blocks()[k];
                }
            }
            worst = worst.max(to_f64(fro(&(cf.get(&m) - acc))));
        }
        report.residual("gleason", worst / scale);
        report.residual("boundary_c", to_f64(fro(&(g0.rows(0, q).into_owned() - u.c()))));
        let cc = u.c() * u.c().adjoint() + u.dmat() * u.dmat().adjoint() - identity::<T>(q);
        report.residual("output_isometry", to_f64(fro(&cc)));
        if d == 1 {
            report.residual("difference_quotient", difference_quotient_residual(u, order) / scale);
        }
    }
    if dual {
        // B^* E_m = sum_k B^* E_{m - e_k} I_k A^*.
        let e = dual_resolvent(u, order);
        let astar = u.a_stacked().adjoint();
        let mut worst = 0.0f64;
        for m in MultiIndex::up_to(d, order).into_iter().skip(1) {
            let mut acc = zeros::<T>(p, d * n);
            for k in 0..d {
                if let Some(prev) = m.minus(k) {
                    acc += e.get(&prev) * inclusion::<T>(d, n, k) * &astar;
                }
            }
            worst = worst.max(to_f64(fro(&(e.get(&m) - acc))));
        }
        report.residual("dual_gleason", worst / scale);
        let mut bworst = 0.0f64;
        for k in 0..d {
            let gk = g0.rows(q + k * p, p).into_owned();
            bworst = bworst.max(to_f64(fro(&(gk - u.b_blocks()[k].adjoint()))));
        }
        report.residual("boundary_b", bworst);
        let bb = u.b_stacked().adjoint() * u.b_stacked() + u.dmat().adjoint() * u.dmat() - identity::<T>(p);
        report.residual("input_isometry", to_f64(fro(&bb)));
        // B^* H_m B = -D^* S_m for |m| >= 1.
        let h = resolvent_taylor_comm(&az_blocks(u), order, Side::Left, &Caps::new(Some(u.b_stacked().adjoint()), Some(u.b_stacked())))?;
        let s = u.transfer_taylor(order);
        let mut cworst = 0.0f64;
        for m in MultiIndex::up_to(d, order).into_iter().skip(1) {
            let diff = h.get(&m) + u.dmat().adjoint() * s.get(&m);
            cworst = cworst.max(to_f64(fro(&diff)));
        }
        report.residual("input_kernel", cworst);
    }
    let s0 = u.transfer_eval(&zero)?;
    report.residual("boundary_d", to_f64(fro(&(s0 - u.dmat()))));

    let flags = u.classify(tol);
    let (structural, weak) = match kind {
        ModelKind::Cfm => (flags.observable, flags.weakly_coisometric),
        ModelKind::Dcfm => (flags.controllable, flags.weakly_isometric),
        ModelKind::Tcfm => (flags.closely_connected, flags.weakly_unitary),
    };
    report.flag("structural", structural);
    report.flag("weak_metric", weak);
    report.flag("contraction", flags.contraction);
    let limit = to_f64(tol.residual);
    report.passed = structural && weak && flags.contraction && report.max_residual() < limit;
    report.dims.insert("order".to_string(), order);
    Ok(report)
}

/// One variable: the Taylor series of `C (I - zA)^{-1}` shifted back one
/// step equals the series of `C (I - zA)^{-1} A`.
fn difference_quotient_residual<T: Real>(u: &Colligation<T>, order: usize) -> f64 {
    let caps = Caps::new(Some(u.c().clone()), None);
    let f = resolvent_taylor_comm(u.a_blocks(), order, Side::Left, &caps).expect("validated blocks");
    let shifted = da_backward_shift(&f, 0).expect("order >= 1");
    let caps_a = Caps::new(Some(u.c().clone()), Some(u.a_blocks()[0].clone()));
    let g = resolvent_taylor_comm(u.a_blocks(), order - 1, Side::Left, &caps_a).expect("validated blocks");
    to_f64(shifted.max_diff(&g))
}

/// Outcome of the commutative-realization checks.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutativeCheck {
    pub commutative: bool,
    pub gleason_contractive: bool,
    pub max_commutator: f64,
    pub min_eigenvalue: f64,
    /// The coefficient space of `C (I - Z A)^{-1} x` is closed under every
    /// backward shift, checked up to the recorded order only.
    pub shift_invariant_up_to_order: bool,
    pub shift_residual: f64,
    pub order: usize,
}

pub fn commutative_model_check<T: Real>(u: &Colligation<T>, order: usize, tol: &Tolerances<T>) -> CommutativeCheck {
    let (d, n) = (u.d(), u.n());
    let a = u.a_blocks();
    let mut comm = T::zero();
    for i in 0..d {
        for j in i + 1..d {
            comm = comm.max(op_norm(&(&a[i] * &a[j] - &a[j] * &a[i])));
        }
    }
    let ast = u.a_stacked();
    let gram = identity::<T>(n) - ast.adjoint() * &ast - u.c().adjoint() * u.c();
    let lam = min_eigenvalue(&gram);

    let order = order.max(1);
    let f = resolvent_taylor_comm(a, order, Side::Left, &Caps::new(Some(u.c().clone()), None))
        .expect("validated blocks");
    let low: Vec<MultiIndex> = MultiIndex::up_to(d, order - 1);
    let stack = |s: &CommSeries<T>| -> CMat<T> {
        let parts: Vec<CMat<T>> = low.iter().map(|m| s.get(m)).collect();
        vstack(n, &parts)
    };
    let base = stack(&f);
    let mut worst = T::zero();
    for j in 0..d {
        let g = stack(&da_backward_shift(&f, j).expect("order >= 1"));
        let coef = lstsq(&base, &g, tol.rank);
        let miss = fro(&(&base * coef - &g)) / at_least_one(fro(&g));
        worst = worst.max(miss);
    }
    CommutativeCheck {
        commutative: comm < tol.residual,
        gleason_contractive: lam > -tol.residual,
        max_commutator: to_f64(comm),
        min_eigenvalue: to_f64(lam),
        shift_invariant_up_to_order: worst < tol.residual,
        shift_residual: to_f64(worst),
        order,
    }
}

/// Seeded random vectors, for callers that need extra generators.
pub fn random_vectors<T: Real>(seed: u64, rows: usize, count: usize) -> CMat<T> {
    let mut r = rng(seed);
    let mut m = zeros(rows, count);
    for c in 0..count {
        for i in 0..rows {
            m[(i, c)] = gaussian(&mut r);
        }
    }
    m
}
