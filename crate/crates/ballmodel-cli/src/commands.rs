//! One function per subcommand. Each fills a [`Report`]; library errors
//! that reflect bad input become exit code 2, the rest fail the report.

use std::path::Path;

use ballmodel::agler::{
    agler_verify as verify_identity, commutative_model_check, defect_characterization_residual,
    functional_model_verify, model_subspaces, random_generators, v_isometry_check, BigKernelFactor, ModelKind,
};
use ballmodel::colligation::ColligationFlags;
use ballmodel::matcore::{fro, identity, singular_values};
use ballmodel::random::{rng, sample_pairs};
use ballmodel::rowmodel::{
    char_eval, char_series, classify_row, defect_alignment, equiv_intertwiner, expanded_moments, halmos,
    moment_alignment_residual, nc_agler_residuals, nc_char_moments, spherical_example, spherical_identity_residual,
    spherical_kernel, theta_coincidence, triple_equiv, ExpandedKey, RowCaps,
};
use ballmodel::{agler::big_kernel_eval, Colligation, CommSeries, Error, Matrix, NcSeries, RowContraction, Tolerances, C64};
use serde_json::{json, Map, Value};

use crate::io::{
    matrix_json, parse_point, parse_points, point_json, read_json, ColligationFile, InputError, RowContractionFile,
};
use crate::report::Report;
use crate::{Common, FileArgs, Kind, ModelArgs, OrderArgs, PairArgs, PointArgs, SampleArgs, SphericalArgs};

/// Radius of the ball the sample points are drawn from.
const SAMPLE_RADIUS: f64 = 0.9;

enum Step {
    Input(InputError),
    Lib(Error),
}

impl From<InputError> for Step {
    fn from(e: InputError) -> Self {
        Step::Input(e)
    }
}

impl From<Error> for Step {
    fn from(e: Error) -> Self {
        Step::Lib(e)
    }
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::DimensionMismatch(_)
            | Error::ShapeMismatch(_)
            | Error::PointOutsideBall { .. }
            | Error::NotRowContraction { .. }
            | Error::NotOnSphere { .. }
            | Error::NonFinite { .. }
            | Error::VariableIndex { .. }
    )
}

type StepResult = Result<(), Step>;

fn finish(mut rep: Report, res: StepResult) -> Result<Report, InputError> {
    match res {
        Ok(()) => Ok(rep),
        Err(Step::Input(e)) => Err(e),
        Err(Step::Lib(e)) if is_input_error(&e) => Err(InputError(e.to_string())),
        Err(Step::Lib(e)) => {
            rep.fail(format!("computation failed: {e}"));
            Ok(rep)
        }
    }
}

fn tolerances(c: &Common) -> Result<Tolerances<f64>, InputError> {
    for (name, v) in [("--tol", c.tol), ("--rank-tol", c.rank_tol)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(InputError(format!("{name} must be a positive number, got {v}")));
        }
    }
    Ok(Tolerances::new(c.rank_tol, c.tol))
}

fn start(command: &str, c: &Common) -> Result<(Report, Tolerances<f64>), InputError> {
    let tol = tolerances(c)?;
    Ok((Report::new(command, tol.rank, tol.residual), tol))
}

fn load_colligation(path: &Path, rep: &mut Report, key: &str) -> Result<Colligation, InputError> {
    let file: ColligationFile = read_json(path)?;
    let u = file.to_colligation(&path.display().to_string())?;
    rep.input(key, path.display().to_string());
    rep.input(&format!("{key}_contents"), &file);
    Ok(u)
}

fn load_row(path: &Path, rep: &mut Report, key: &str, tol: f64) -> Result<RowContraction, InputError> {
    let file: RowContractionFile = read_json(path)?;
    let t = file.to_row(&path.display().to_string(), tol)?;
    rep.input(key, path.display().to_string());
    rep.input(&format!("{key}_contents"), &file);
    Ok(t)
}

fn load_points(arg: &str, d: usize, rep: &mut Report) -> Result<Vec<Vec<C64>>, InputError> {
    let pts = parse_points(arg)?;
    if pts.is_empty() {
        return Err(InputError("--points: no points given".into()));
    }
    for (i, p) in pts.iter().enumerate() {
        if p.len() != d {
            return Err(InputError(format!("--points: point {i} has {} coordinates, expected d = {d}", p.len())));
        }
    }
    rep.input("points", pts.iter().map(|p| point_json(p)).collect::<Vec<_>>());
    Ok(pts)
}

fn comm_series_json(s: &CommSeries) -> Value {
    let m: Map<String, Value> = s.coeffs().iter().map(|(k, c)| (k.key(), matrix_json(c))).collect();
    Value::Object(m)
}

fn nc_series_json(s: &NcSeries) -> Value {
    let m: Map<String, Value> = s.coeffs().iter().map(|(k, c)| (k.key(), matrix_json(c))).collect();
    Value::Object(m)
}

fn expanded_key(k: &ExpandedKey) -> String {
    format!("v={};vp={};k={};j={}", k.v.key(), k.vp.key(), k.k + 1, k.j + 1)
}

fn unitarity(m: &Matrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    fro(&(m.adjoint() * m - identity::<f64>(m.ncols())))
}

fn record_flags(rep: &mut Report, f: &ColligationFlags) {
    for (name, v) in [
        ("contraction", f.contraction),
        ("isometry", f.isometry),
        ("coisometry", f.coisometry),
        ("unitary", f.unitary),
        ("observable", f.observable),
        ("controllable", f.controllable),
        ("closely_connected", f.closely_connected),
        ("weakly_isometric", f.weakly_isometric),
        ("weakly_coisometric", f.weakly_coisometric),
        ("weakly_unitary", f.weakly_unitary),
        ("weak_spaces_stabilized", f.weak_spaces_stabilized),
    ] {
        rep.flag(name, v);
    }
    rep.dim("observability", f.observability_dim);
    rep.dim("controllability", f.controllability_dim);
    rep.dim("dca", f.dca_dim);
    rep.dim("dtilde", f.dtilde_dim);
    for (k, v) in &f.residuals {
        rep.residual(k, *v);
    }
}

fn shape_dims(rep: &mut Report, d: usize, n: usize, p: usize, q: usize) {
    rep.dim("d", d);
    rep.dim("n", n);
    rep.dim("p", p);
    rep.dim("q", q);
}

pub fn realize_eval(a: &PointArgs) -> Result<Report, InputError> {
    let (mut rep, _) = start("realize eval", &a.common)?;
    let res = (|| -> StepResult {
        let u = load_colligation(&a.file, &mut rep, "file")?;
        shape_dims(&mut rep, u.d(), u.n(), u.p(), u.q());
        let pts = load_points(&a.points, u.d(), &mut rep)?;
        let mut values = Vec::new();
        for z in &pts {
            values.push(json!({"point": point_json(z), "value": matrix_json(&u.transfer_eval(z)?)}));
        }
        rep.value("transfer", values);
        if let Some(order) = a.order {
            rep.input("order", order);
            rep.value("taylor", comm_series_json(&u.transfer_taylor(order)));
        }
        Ok(())
    })();
    finish(rep, res)
}

pub fn check_colligation(a: &FileArgs) -> Result<Report, InputError> {
    let (mut rep, tol) = start("check colligation", &a.common)?;
    let res = (|| -> StepResult {
        let u = load_colligation(&a.file, &mut rep, "file")?;
        shape_dims(&mut rep, u.d(), u.n(), u.p(), u.q());
        let f = u.classify(&tol);
        record_flags(&mut rep, &f);
        if !f.contraction {
            rep.fail("colligation is not a contraction");
        }
        Ok(())
    })();
    finish(rep, res)
}

pub fn agler_verify(a: &SampleArgs) -> Result<Report, InputError> {
    let (mut rep, tol) = start("agler verify", &a.common)?;
    rep.seed = Some(a.seed);
    let res = (|| -> StepResult {
        let u = load_colligation(&a.file, &mut rep, "file")?;
        rep.input("samples", a.samples);
        shape_dims(&mut rep, u.d(), u.n(), u.p(), u.q());
        let pairs = sample_pairs::<f64>(a.seed, u.d(), a.samples, SAMPLE_RADIUS);
        let r = verify_identity(&u, &pairs, tol.residual)?;
        rep.residuals.extend(r.residuals.clone());
        rep.flags.extend(r.flags.clone());
        rep.dims.extend(r.dims.clone());

        let mut g = rng(a.seed);
        let gens = random_generators::<f64>(&mut g, u.d(), u.p(), u.q(), a.samples.min(30), SAMPLE_RADIUS);
        let (gram, iso) = v_isometry_check(&u, &gens, tol.residual)?;
        rep.residual("v_gram", gram);
        rep.flag("v_isometric", iso);
        rep.dim("v_generators", gens.len());
        rep.require_below("total", tol.residual);
        rep.require_below("v_gram", tol.residual);
        Ok(())
    })();
    finish(rep, res)
}

pub fn agler_defects(a: &OrderArgs) -> Result<Report, InputError> {
    let (mut rep, tol) = start("agler defects", &a.common)?;
    let res = (|| -> StepResult {
        let u = load_colligation(&a.file, &mut rep, "file")?;
        shape_dims(&mut rep, u.d(), u.n(), u.p(), u.q());
        let order = a.order.unwrap_or_else(|| u.default_order());
        rep.input("order", order);
        let geom = model_subspaces(&u, &tol)?;
        rep.dim("cc_space", geom.cc_space.dim());
        rep.dim("d_sub", geom.d_sub.dim());
        rep.dim("r_sub", geom.r_sub.dim());
        rep.dim("d_perp", geom.d_perp.dim());
        rep.dim("r_perp", geom.r_perp.dim());
        rep.flag("canonical", geom.canonical);
        rep.witness("x", &geom.x);
        rep.residual("offdiag", geom.offdiag_residual);
        rep.residual("defect_characterization", defect_characterization_residual(&geom, order));
        let x_unit = unitarity(&geom.x);
        rep.residual("x_unitarity", x_unit);
        rep.flag("x_unitary", x_unit < tol.residual);
        rep.require_below("offdiag", tol.residual);
        rep.require_below("defect_characterization", tol.residual);
        if geom.canonical {
            rep.require_below("x_unitarity", tol.residual);
        }
        Ok(())
    })();
    finish(rep, res)
}

pub fn model_verify(a: &ModelArgs) -> Result<Report, InputError> {
    let (mut rep, tol) = start("model verify", &a.common)?;
    let res = (|| -> StepResult {
        let u = load_colligation(&a.file, &mut rep, "file")?;
        shape_dims(&mut rep, u.d(), u.n(), u.p(), u.q());
        let order = a.order.unwrap_or_else(|| u.default_order());
        rep.input("order", order);
        let kind = match a.kind {
            Kind::Cfm => ModelKind::Cfm,
            Kind::Dcfm => ModelKind::Dcfm,
            Kind::Tcfm => ModelKind::Tcfm,
        };
        rep.input("kind", format!("{:?}", a.kind).to_lowercase());
        let r = functional_model_verify(&u, kind, order, &tol)?;
        rep.residuals.extend(r.residuals.clone());
        rep.flags.extend(r.flags.clone());
        rep.dims.extend(r.dims.clone());
        let c = commutative_model_check(&u, order, &tol);
        rep.flag("commutative", c.commutative);
        rep.flag("gleason_contractive", c.gleason_contractive);
        rep.flag("shift_invariant_up_to_order", c.shift_invariant_up_to_order);
        rep.value("max_commutator", c.max_commutator);
        rep.value("gleason_min_eigenvalue", c.min_eigenvalue);
        rep.value("shift_residual", c.shift_residual);
        if !r.passed {
            let worst = r
                .residuals
                .iter()
                .filter(|(_, v)| !(**v < tol.residual))
                .map(|(k, _)| k.clone())
                .chain(r.flags.iter().filter(|(_, v)| !**v).map(|(k, _)| format!("flag {k}")))
                .collect::<Vec<_>>();
            rep.fail(format!("model checks failed: {}", worst.join(", ")));
        }
        Ok(())
    })();
    finish(rep, res)
}

pub fn rowc_charfunc(a: &PointArgs) -> Result<Report, InputError> {
    let (mut rep, tol) = start("rowc charfunc", &a.common)?;
    let res = (|| -> StepResult {
        let t = load_row(&a.file, &mut rep, "file", tol.residual)?;
        let pts = load_points(&a.points, t.d(), &mut rep)?;
        let u = halmos(&t, &tol)?;
        shape_dims(&mut rep, t.d(), t.n(), u.p(), u.q());
        let mut values = Vec::new();
        for z in &pts {
            values.push(json!({"point": point_json(z), "value": matrix_json(&char_eval(&t, z, &tol)?)}));
        }
        rep.value("theta", values);
        if let Some(order) = a.order {
            rep.input("order", order);
            rep.value("taylor", comm_series_json(&char_series(&t, order, &tol)?));
        }
        Ok(())
    })();
    finish(rep, res)
}

pub fn rowc_classify(a: &FileArgs) -> Result<Report, InputError> {
    let (mut rep, tol) = start("rowc classify", &a.common)?;
    let res = (|| -> StepResult {
        let t = load_row(&a.file, &mut rep, "file", tol.residual)?;
        rep.dim("d", t.d());
        rep.dim("n", t.n());
        let caps = RowCaps::for_size(t.n(), t.d());
        rep.input("caps", json!({"cc_degree": caps.cc_degree, "strong_degree": caps.strong_degree}));
        let c = classify_row(&t, &tol, caps)?;
        for (name, v) in [
            ("pure", c.pure),
            ("cnc", c.cnc),
            ("strongly_cc", c.strongly_cc),
            ("cc", c.cc),
            ("commutative", c.commutative),
            ("word_based", c.word_based),
            ("m1_stabilized", c.m1_stabilized),
            ("m2_stabilized", c.m2_stabilized),
            ("forms_agree", c.forms_agree),
        ] {
            rep.flag(name, v);
        }
        rep.dim("cnc_span", c.cnc_span_dim);
        rep.dim("m1", c.m1_dim);
        rep.dim("m2", c.m2_dim);
        rep.dim("m1_span_form", c.m1_span_dim);
        rep.dim("m2_span_form", c.m2_span_dim);
        rep.residual("max_commutator", t.max_commutator());
        if !c.forms_agree {
            rep.fail("kernel and span computations of M1/M2 disagree");
        } else if !(c.m1_stabilized && c.m2_stabilized) {
            rep.fail("M1/M2 did not stabilize within the degree caps");
        }
        Ok(())
    })();
    finish(rep, res)
}

pub fn rowc_moments(a: &OrderArgs) -> Result<Report, InputError> {
    let (mut rep, tol) = start("rowc moments", &a.common)?;
    let res = (|| -> StepResult {
        let t = load_row(&a.file, &mut rep, "file", tol.residual)?;
        let order = a.order.unwrap_or(4);
        rep.input("order", order);
        let mt = expanded_moments(&t, order, &tol)?;
        rep.dim("d", t.d());
        rep.dim("n", t.n());
        rep.value("nc_moments", nc_series_json(&mt.nc_moments));
        let expanded: Map<String, Value> = mt.expanded.iter().map(|(k, m)| (expanded_key(k), matrix_json(m))).collect();
        rep.value("expanded_moments", Value::Object(expanded));
        rep.residual("expanded_symmetry", mt.symmetry_residual);
        rep.residual("expanded_vs_kernel", mt.kernel_residual);
        let nc = nc_agler_residuals(&halmos(&t, &tol)?, order)?;
        rep.residual("nc_k_s", nc.k_s);
        rep.residual("nc_psi", nc.psi);
        rep.residual("nc_phi", nc.phi);
        for k in ["expanded_symmetry", "expanded_vs_kernel", "nc_k_s", "nc_psi", "nc_phi"] {
            rep.require_below(k, tol.residual);
        }
        Ok(())
    })();
    finish(rep, res)
}

/// Gap between the singular values of `theta(0)`, a unitary invariant.
fn theta0_gap(t: &RowContraction, r: &RowContraction, tol: &Tolerances<f64>) -> Result<f64, Error> {
    let zero = vec![C64::new(0.0, 0.0); t.d()];
    let st = singular_values(&char_eval(t, &zero, tol)?);
    let sr = singular_values(&char_eval(r, &zero, tol)?);
    if st.len() != sr.len() {
        return Ok(f64::INFINITY);
    }
    Ok(st.iter().zip(&sr).fold(0.0, |acc, (x, y)| acc.max((x - y).abs())))
}

fn load_pair(a: &PairArgs, rep: &mut Report, tol: f64) -> Result<(RowContraction, RowContraction), Step> {
    let t = load_row(&a.a, rep, "a", tol)?;
    let r = load_row(&a.b, rep, "b", tol)?;
    rep.input("restarts", a.restarts);
    Ok((t, r))
}

pub fn rowc_equiv(a: &PairArgs) -> Result<Report, InputError> {
    let (mut rep, tol) = start("rowc equiv", &a.common)?;
    let res = (|| -> StepResult {
        let (t, r) = load_pair(a, &mut rep, tol.residual)?;
        if (t.d(), t.n()) != (r.d(), r.n()) {
            rep.flag("equivalent", false);
            rep.fail("not equivalent: (d, n) differ");
            return Ok(());
        }
        rep.input("order", a.order);
        let gap = theta0_gap(&t, &r, &tol)?;
        rep.residual("theta0_singular_values", gap);
        let found = equiv_intertwiner(&t, &r, &tol, a.restarts)?;
        rep.residual("intertwining", found.residual);
        rep.flag("equivalent", found.witness.is_some());
        let theta = theta_coincidence(&t, &r, &tol, a.restarts)?;
        rep.residual("theta_coincidence", theta.residual);
        rep.flag("theta_coincide", theta.witness.is_some());
        match found.witness {
            Some(w) => {
                let (alpha, beta) = defect_alignment(&t, &r, &w, &tol)?;
                let mt = nc_char_moments(&t, a.order, &tol)?;
                let mr = nc_char_moments(&r, a.order, &tol)?;
                rep.residual("moment_alignment", moment_alignment_residual(&mt, &mr, &alpha, &beta));
                rep.witness("w", &w);
                rep.witness("alpha", &alpha);
                rep.witness("beta", &beta);
                rep.require_below("moment_alignment", tol.residual);
            }
            None if !(gap < tol.residual) => rep.fail("not equivalent: singular values of theta(0) differ"),
            None => rep.fail("not found (heuristic): no intertwining unitary"),
        }
        Ok(())
    })();
    finish(rep, res)
}

pub fn rowc_triple_equiv(a: &PairArgs) -> Result<Report, InputError> {
    let (mut rep, tol) = start("rowc triple-equiv", &a.common)?;
    let res = (|| -> StepResult {
        let (t, r) = load_pair(a, &mut rep, tol.residual)?;
        if (t.d(), t.n()) != (r.d(), r.n()) {
            rep.flag("equivalent", false);
            rep.fail("not equivalent: (d, n) differ");
            return Ok(());
        }
        let out = triple_equiv(&t, &r, &tol, a.restarts)?;
        rep.residuals.extend(out.residuals.clone());
        rep.flag("equivalent", out.equivalent);
        for (key, m) in [("alpha", &out.alpha), ("beta", &out.beta), ("w", &out.w)] {
            if let Some(m) = m {
                rep.witness(key, m);
            }
        }
        let caps = RowCaps::for_size(t.n(), t.d());
        let both_cnc = classify_row(&t, &tol, caps)?.cnc && classify_row(&r, &tol, caps)?.cnc;
        rep.flag("both_cnc", both_cnc);
        if both_cnc {
            let theta = theta_coincidence(&t, &r, &tol, a.restarts)?;
            rep.residual("theta_coincidence", theta.residual);
            rep.flag("theta_coincide", theta.witness.is_some());
        }
        if !out.equivalent {
            rep.fail(out.reason.clone());
        }
        Ok(())
    })();
    finish(rep, res)
}

pub fn example_spherical(a: &SphericalArgs) -> Result<Report, InputError> {
    let (mut rep, tol) = start("example spherical", &a.common)?;
    rep.seed = Some(a.seed);
    let res = (|| -> StepResult {
        let l = parse_point(&a.lambda)?;
        if l.len() != 2 {
            return Err(InputError(format!("--lambda needs two coordinates, got {}", l.len())).into());
        }
        rep.input("lambda", point_json(&l));
        rep.input("samples", a.samples);
        let e = spherical_example(l[0], l[1], &tol)?;
        rep.matrix("colligation", &e.colligation.matrix());
        shape_dims(&mut rep, 2, 1, e.colligation.p(), e.colligation.q());
        let origin = vec![C64::new(0.0, 0.0); 2];
        rep.matrix("kernel_at_origin", &spherical_kernel(&e.lambda, &origin, &origin));
        let factor = BigKernelFactor::new(e.colligation.clone());
        rep.matrix("realized_kernel_at_origin", big_kernel_eval(&factor, &origin, &origin)?.matrix());
        rep.residual("kernel_agreement", e.agreement);
        let mut identity_res: f64 = 0.0;
        for (z, w) in sample_pairs::<f64>(a.seed, 2, a.samples, SAMPLE_RADIUS) {
            identity_res = identity_res.max(spherical_identity_residual(&e.lambda, &z, &w));
        }
        rep.residual("polynomial_identity", identity_res);
        let c = classify_row(&e.row, &tol, RowCaps::for_size(1, 2))?;
        rep.value("classification", json!({"cnc": c.cnc, "strongly_cc": c.strongly_cc, "cc": c.cc, "pure": c.pure}));
        rep.flag("cnc", c.cnc);
        rep.flag("strongly_cc", c.strongly_cc);
        rep.flag("cc", c.cc);
        rep.require_below("kernel_agreement", tol.residual);
        rep.require_below("polynomial_identity", tol.residual);
        Ok(())
    })();
    finish(rep, res)
}
