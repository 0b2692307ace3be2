//! Acceptance suite: one PASS/FAIL line per criterion, written straight to
//! stderr so it shows up even when test output is captured.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ballmodel::agler::{
    agler_verify, functional_model_verify, model_subspaces, random_generators, tcfm_from_x, v_isometry_check,
    ModelKind,
};
use ballmodel::colligation::colligation_equiv;
use ballmodel::matcore::{fro, hstack, identity, inclusion, op_norm, singular_values, vstack};
use ballmodel::random::{
    ball_point, commuting_row, random_matrix, random_unitary, random_with_norm, rng, row_with_unit_singular_values,
    sample_pairs, sphere_point, unitary_of_size,
};
use ballmodel::rowmodel::{
    char_eval, classify_row, defect_alignment, defects, equiv_intertwiner, halmos, moment_alignment_residual,
    nc_agler_residuals, nc_char_moments, spherical_example, spherical_identity_residual, theta_coincidence,
    triple_equiv, RowCaps,
};
use ballmodel::series::{
    da_backward_shift, nc_resolvent_series, resolvent_taylor_comm, xn_coefficients, Caps, MultiIndex, Side, Word,
};
use ballmodel::{Colligation, CommSeries, Matrix, NcSeries, RowContraction, Tolerances, C64};
use ballmodel_cli::io::{ColligationFile, RowContractionFile};

type Outcome = Result<String, String>;

fn tol() -> Tolerances<f64> {
    Tolerances::default()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn split_row(row: &Matrix, d: usize) -> Vec<Matrix> {
    let n = row.nrows();
    (0..d).map(|k| row.columns(k * n, n).into_owned()).collect()
}

fn unitary_colligation(seed: u64, d: usize, n: usize, q: usize) -> Colligation {
    let mut r = rng(seed);
    let p = (d - 1) * n + q;
    Colligation::from_matrix(&unitary_of_size::<f64>(&mut r, d * n + q), d, n, p, q).unwrap()
}

/// Unitary shapes `(d, n, q)` with `p = (d - 1) n + q <= 3`.
fn small_unitary_shapes() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for d in 1..=3 {
        for n in 1..=6 {
            for q in 1..=3 {
                if (d - 1) * n + q <= 3 {
                    out.push((d, n, q));
                }
            }
        }
    }
    out
}

fn unitary_set() -> Vec<Colligation> {
    let shapes = small_unitary_shapes();
    (0..50)
        .map(|i| {
            let (d, n, q) = shapes[i % shapes.len()];
            unitary_colligation(1000 + i as u64, d, n, q)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2024);
    let (mut agreement, mut identity_res) = (0.0f64, 0.0f64);
    let mut bad_class = 0;
    for i in 0..20 {
        let l = sphere_point(&mut r, 2);
        let e = spherical_example(l[0], l[1], &tol()).map_err(|e| e.to_string())?;
        agreement = agreement.max(e.agreement);
        for (z, w) in sample_pairs::<f64>(500 + i, 2, 50, 0.95) {
            identity_res = identity_res.max(spherical_identity_residual(&e.lambda, &z, &w));
        }
        let c = classify_row(&e.row, &tol(), RowCaps::for_size(1, 2)).map_err(|e| e.to_string())?;
        if c.cnc || !c.strongly_cc || !c.cc {
            bad_class += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        agreement < 1e-10 && identity_res < 1e-12 && bad_class == 0 && secs < 5.0,
        format!(
            "kernel agreement {agreement:.2e}, identity {identity_res:.2e}, {bad_class} misclassified, {secs:.2}s"
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_block = 0.0f64;
    for (i, u) in unitary_set().iter().enumerate() {
        let pairs = sample_pairs::<f64>(i as u64, u.d(), 100, 0.9);
        let rep = agler_verify(u, &pairs, 1e-9).map_err(|e| e.to_string())?;
        worst = worst.max(rep.residuals["total"]);
        for k in ["k_s", "psi", "phi"] {
            worst_block = worst_block.max(rep.residuals[k]);
        }
    }
    let mut detected = 0;
    let mut r = rng(77);
    for i in 0..20 {
        let (d, n, p, q) = (1 + i % 3, 1 + i % 4, 1 + i % 3, 1 + (i / 3) % 3);
        let m = random_with_norm::<f64>(&mut r, d * n + q, n + p, 0.9);
        let u = Colligation::from_matrix(&m, d, n, p, q).unwrap();
        let rep = agler_verify(&u, &sample_pairs::<f64>(i as u64, d, 100, 0.9), 1e-9).map_err(|e| e.to_string())?;
        if !rep.flags["k_s"] && rep.residuals["k_s"] > 1e-9 {
            detected += 1;
        }
    }
    check(
        worst < 1e-9 && worst_block < 1e-9 && detected == 20,
        format!("unitary total {worst:.2e}, blocks {worst_block:.2e}; contractive failures detected {detected}/20"),
    )
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for (i, u) in unitary_set().iter().enumerate() {
        let mut r = rng(300 + i as u64);
        let gens = random_generators::<f64>(&mut r, u.d(), u.p(), u.q(), 20, 0.9);
        let (res, _) = v_isometry_check(u, &gens, 1e-9).map_err(|e| e.to_string())?;
        worst = worst.max(res);
    }
    check(worst < 1e-9, format!("max Gram residual {worst:.2e} over 50 colligations"))
}

fn criterion_4() -> Outcome {
    let shapes = [(2, 2, 1), (1, 3, 2), (2, 3, 1), (3, 2, 1), (1, 4, 1)];
    let (mut x_res, mut w_res) = (0.0f64, 0.0f64);
    let (mut used, mut nontrivial) = (0, 0);
    let mut seed = 4000;
    while used < 25 {
        let (d, n, q) = shapes[used % shapes.len()];
        seed += 1;
        let u = unitary_colligation(seed, d, n, q);
        if !u.classify(&tol()).closely_connected {
            continue;
        }
        used += 1;
        let g = model_subspaces(&u, &tol()).map_err(|e| e.to_string())?;
        let x = &g.x;
        nontrivial += (x.nrows() > 0) as usize;
        let unit = if x.nrows() == x.ncols() {
            fro(&(x.adjoint() * x - identity::<f64>(x.ncols())))
        } else {
            f64::INFINITY
        };
        x_res = x_res.max(unit);
        let back = tcfm_from_x(&g, x, 1e-9).map_err(|e| e.to_string())?;
        let found = colligation_equiv(&u, &back, &tol(), 8).map_err(|e| e.to_string())?;
        w_res = w_res.max(if found.witness.is_some() { found.residual } else { f64::INFINITY });
    }
    check(
        x_res < 1e-9 && w_res < 1e-8,
        format!("max ||X*X - I|| {x_res:.2e}, max witness residual {w_res:.2e}, X nonempty in {nontrivial}/25"),
    )
}

/// Principal square root of a positive definite matrix.
fn denman_beavers(h: &Matrix) -> Matrix {
    let mut y = h.clone();
    let mut z = identity::<f64>(h.nrows());
    for _ in 0..60 {
        let yi = y.clone().try_inverse().expect("invertible");
        let zi = z.clone().try_inverse().expect("invertible");
        y = (&y + zi) * C64::new(0.5, 0.0);
        z = (&z + yi) * C64::new(0.5, 0.0);
    }
    y
}

fn criterion_5() -> Outcome {
    let mut r = rng(55);
    let mut worst = 0.0f64;
    let mut dq = 0.0f64;
    for i in 0..20 {
        let n = if i < 10 { 1 } else { 2 + i % 3 };
        let m = random_with_norm::<f64>(&mut r, n, n, 0.3 + 0.6 * (i as f64 / 20.0));
        let t = RowContraction::new(vec![m.clone()], 1e-12).unwrap();
        let df = defects(&t, &tol()).map_err(|e| e.to_string())?;
        let u = halmos(&t, &tol()).map_err(|e| e.to_string())?;
        let d_t = denman_beavers(&(identity::<f64>(n) - m.adjoint() * &m));
        let d_ts = denman_beavers(&(identity::<f64>(n) - &m * m.adjoint()));
        for _ in 0..10 {
            let z = ball_point::<f64>(&mut r, 1, 0.95)[0];
            let oracle = if n == 1 {
                let t0 = m[(0, 0)];
                Matrix::from_element(1, 1, -t0 + z * (1.0 - t0.norm_sqr()) / (C64::new(1.0, 0.0) - z * t0.conj()))
            } else {
                let res = (identity::<f64>(n) - m.adjoint() * z).try_inverse().unwrap();
                -&m + &d_ts * res * &d_t * z
            };
            let got = df.basis_dtstar.basis() * u.transfer_eval(&[z]).unwrap() * df.basis_dt.basis().adjoint();
            worst = worst.max(fro(&(got - oracle)));
        }
        let rep = functional_model_verify(&u, ModelKind::Cfm, 8, &tol()).map_err(|e| e.to_string())?;
        dq = dq.max(rep.residuals["difference_quotient"]).max(rep.residuals["gleason"]);
    }
    let mut implication_violations = 0;
    for i in 0..20 {
        let (n, q) = (1 + i % 3, 1 + i % 2);
        let m = if i % 2 == 0 {
            random_unitary::<f64>(&mut r, n + q)
        } else {
            random_with_norm::<f64>(&mut r, n + q, n + q, 0.9)
        };
        let f = Colligation::from_matrix(&m, 1, n, q, q).unwrap().classify(&tol());
        if f.weakly_coisometric && f.observable && !f.coisometry {
            implication_violations += 1;
        }
    }
    check(
        worst < 1e-10 && dq < 1e-9 && implication_violations == 0,
        format!(
            "theta vs Moebius/Sz.-Nagy-Foias {worst:.2e}, difference quotients to order 8 {dq:.2e}, {implication_violations} flag violations"
        ),
    )
}

fn random_row(i: usize, r: &mut ballmodel::random::Rng64) -> RowContraction {
    let d = 1 + i % 3;
    let n = 1 + (i / 3) % 5;
    let blocks = match i % 4 {
        0 => commuting_row::<f64>(r, d, n, 1.0),
        1 => commuting_row::<f64>(r, d, n, 0.8),
        _ => {
            let ones = (i / 15) % (n + 1);
            split_row(&row_with_unit_singular_values::<f64>(r, d, n, ones), d)
        }
    };
    RowContraction::new(blocks, 1e-9).unwrap()
}

fn criterion_6() -> Outcome {
    let mut r = rng(66);
    let (mut chain, mut disagree, mut counts) = (0, 0, [0usize; 3]);
    for i in 0..200 {
        let t = random_row(i, &mut r);
        let c = classify_row(&t, &tol(), RowCaps::for_size(t.n(), t.d())).map_err(|e| e.to_string())?;
        if (c.cnc && !c.strongly_cc) || (c.strongly_cc && !c.cc) {
            chain += 1;
        }
        if !c.forms_agree {
            disagree += 1;
        }
        counts[0] += c.cnc as usize;
        counts[1] += c.strongly_cc as usize;
        counts[2] += c.cc as usize;
    }
    check(
        chain == 0 && disagree == 0,
        format!(
            "{chain} chain violations, {disagree} kernel/span disagreements (cnc {}, strongly cc {}, cc {} of 200)",
            counts[0], counts[1], counts[2]
        ),
    )
}

/// Largest gap between singular values of matching moments.
fn moment_invariant_gap(a: &NcSeries, b: &NcSeries) -> f64 {
    let mut gap = 0.0f64;
    for (w, c) in a.coeffs() {
        let sa = singular_values(c);
        let sb = singular_values(&b.get(w));
        if sa.len() != sb.len() {
            return f64::INFINITY;
        }
        for (x, y) in sa.iter().zip(&sb) {
            gap = gap.max((x - y).abs());
        }
    }
    gap
}

fn criterion_7() -> Outcome {
    let mut r = rng(777);
    let (mut inter, mut align) = (0.0f64, 0.0f64);
    let (mut triple_fail, mut cnc_disagree, mut missed) = (0, 0, 0);
    for i in 0..30 {
        let (d, n) = (1 + i % 3, 2 + i % 2);
        let t = RowContraction::new(split_row(&row_with_unit_singular_values::<f64>(&mut r, d, n, i % 2), d), 1e-9).unwrap();
        let q = random_unitary::<f64>(&mut r, n);
        let s = t.conjugate(&q);
        let found = equiv_intertwiner(&t, &s, &tol(), 8).map_err(|e| e.to_string())?;
        let Some(w) = found.witness else {
            inter = f64::INFINITY;
            continue;
        };
        inter = inter.max(found.residual);
        let (alpha, beta) = defect_alignment(&t, &s, &w, &tol()).map_err(|e| e.to_string())?;
        let mt = nc_char_moments(&t, 3, &tol()).map_err(|e| e.to_string())?;
        let ms = nc_char_moments(&s, 3, &tol()).map_err(|e| e.to_string())?;
        align = align.max(moment_alignment_residual(&mt, &ms, &alpha, &beta));
        let tr = triple_equiv(&t, &s, &tol(), 8).map_err(|e| e.to_string())?;
        if !tr.equivalent {
            triple_fail += 1;
        }
        let c = classify_row(&t, &tol(), RowCaps::for_size(n, d)).map_err(|e| e.to_string())?;
        if c.cnc && theta_coincidence(&t, &s, &tol(), 8).map_err(|e| e.to_string())?.witness.is_some() != tr.equivalent {
            cnc_disagree += 1;
        }
    }
    for i in 0..30 {
        let (d, n) = (1 + i % 3, 2 + i % 2);
        let row = row_with_unit_singular_values::<f64>(&mut r, d, n, i % 2);
        let mut bumped = &row + random_matrix::<f64>(&mut r, n, d * n) * C64::new(0.05, 0.0);
        let norm = op_norm(&bumped);
        if norm > 1.0 {
            bumped *= C64::new(1.0 / norm, 0.0);
        }
        let t = RowContraction::new(split_row(&row, d), 1e-9).unwrap();
        let q = random_unitary::<f64>(&mut r, n);
        let s = RowContraction::new(split_row(&bumped, d), 1e-9).unwrap().conjugate(&q);
        let zero = vec![C64::new(0.0, 0.0); d];
        let st = singular_values(&char_eval(&t, &zero, &tol()).map_err(|e| e.to_string())?);
        let ss = singular_values(&char_eval(&s, &zero, &tol()).map_err(|e| e.to_string())?);
        let theta0_gap = if st.len() == ss.len() {
            st.iter().zip(&ss).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
        } else {
            f64::INFINITY
        };
        let mt = nc_char_moments(&t, 3, &tol()).map_err(|e| e.to_string())?;
        let ms = nc_char_moments(&s, 3, &tol()).map_err(|e| e.to_string())?;
        let declared_distinct = theta0_gap > 1e-6 || moment_invariant_gap(&mt, &ms) > 1e-6;
        if !declared_distinct {
            missed += 1;
        }
        let c = classify_row(&t, &tol(), RowCaps::for_size(n, d)).map_err(|e| e.to_string())?;
        let cs = classify_row(&s, &tol(), RowCaps::for_size(n, d)).map_err(|e| e.to_string())?;
        if c.cnc && cs.cnc {
            let tr = triple_equiv(&t, &s, &tol(), 4).map_err(|e| e.to_string())?;
            let th = theta_coincidence(&t, &s, &tol(), 4).map_err(|e| e.to_string())?;
            if tr.equivalent || th.witness.is_some() {
                cnc_disagree += 1;
            }
        }
    }
    check(
        inter < 1e-8 && align < 1e-9 && triple_fail == 0 && missed == 0 && cnc_disagree == 0,
        format!(
            "intertwiner {inter:.2e}, moment alignment {align:.2e}, {triple_fail} triple failures, {missed} missed non-equivalent pairs, {cnc_disagree} theta/triple disagreements"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut r = rng(88);
    let (mut moments, mut nc) = (0.0f64, 0.0f64);
    let mut noncommuting = 0;
    for i in 0..20 {
        let (d, n) = (1 + i % 3, 1 + i % 4);
        let blocks = if i % 2 == 0 {
            commuting_row::<f64>(&mut r, d, n, 0.95)
        } else {
            split_row(&row_with_unit_singular_values::<f64>(&mut r, d, n, 1), d)
        };
        let t = RowContraction::new(blocks, 1e-9).unwrap();
        if !t.is_commutative(1e-9) {
            noncommuting += 1;
        }
        let df = defects(&t, &tol()).map_err(|e| e.to_string())?;
        let m = nc_char_moments(&t, 4, &tol()).map_err(|e| e.to_string())?;
        let (qs, qt) = (df.basis_dtstar.basis(), df.basis_dt.basis());
        let empty = -(qs.adjoint() * t.row() * qt);
        moments = moments.max(fro(&(m.get(&Word::empty()) - empty)));
        for w in Word::up_to(d, 4).into_iter().filter(|w| !w.is_empty()) {
            let (u, j) = w.split_last().unwrap();
            let mut acc = qs.adjoint() * &df.d_tstar;
            for &letter in u.letters() {
                acc *= t.blocks()[letter].adjoint();
            }
            let oracle = acc * (&df.d_t * qt).rows(j * n, n);
            moments = moments.max(fro(&(m.get(&w) - oracle)));
        }
        let u = halmos(&t, &tol()).map_err(|e| e.to_string())?;
        let res = nc_agler_residuals(&u, 4).map_err(|e| e.to_string())?;
        nc = nc.max(res.k_s).max(res.psi).max(res.phi);
    }
    check(
        moments < 1e-10 && nc < 1e-9 && noncommuting >= 5,
        format!("moments vs word products {moments:.2e}, nc kernel identities {nc:.2e} ({noncommuting} non-commuting tuples)"),
    )
}

fn criterion_9() -> Outcome {
    let mut r = rng(99);
    let mut abel = 0.0f64;
    for i in 0..20 {
        let (d, n, order) = (2 + i % 2, 1 + i % 3, 1 + i % 4);
        let blocks: Vec<Matrix> = (0..d).map(|_| random_matrix(&mut r, n, n)).collect();
        let ncs = nc_resolvent_series(&blocks, order, &Caps::none()).map_err(|e| e.to_string())?;
        let cm = resolvent_taylor_comm(&blocks, order, Side::Left, &Caps::none()).map_err(|e| e.to_string())?;
        let scale = cm.coeffs().values().fold(1.0f64, |a, c| a.max(fro(c)));
        abel = abel.max(ncs.abelianize().max_diff(&cm) / scale);
    }
    let mut shift = 0.0f64;
    for i in 0..50 {
        let (d, order) = (1 + i % 3, 1 + i % 5);
        let j = i % d;
        let mut f = CommSeries::zero(d, 2, 1, order);
        let mut g = CommSeries::zero(d, 2, 1, order - 1);
        for idx in MultiIndex::up_to(d, order) {
            f.set(idx.clone(), random_matrix(&mut r, 2, 1));
            if idx.degree() < order {
                g.set(idx, random_matrix(&mut r, 2, 1));
            }
        }
        let lhs = da_backward_shift(&f, j).map_err(|e| e.to_string())?.da_inner(&g);
        let rhs = f.da_inner(&g.times_variable(j));
        shift = shift.max((lhs - rhs).norm());
    }
    let mut xn = 0.0f64;
    for i in 0..10 {
        let (d, n) = (1 + i % 3, 1 + i % 2);
        let t: Vec<Matrix> = (0..d).map(|_| random_matrix(&mut r, n, n)).collect();
        let x = xn_coefficients(&t, 6).map_err(|e| e.to_string())?;
        let mut xs = CommSeries::zero(d, d * n, d * n, 6);
        for (k, c) in x {
            xs.set(k, c);
        }
        let tstar = vstack(n, &t.iter().map(|b| b.adjoint()).collect::<Vec<_>>());
        let mut p = CommSeries::constant(d, identity(d * n), 6);
        for j in 0..d {
            p.set(MultiIndex::unit(d, j), -(&tstar * inclusion::<f64>(d, n, j).adjoint()));
        }
        let one = CommSeries::constant(d, identity(d * n), 6);
        let scale = xs.coeffs().values().fold(1.0f64, |a, c| a.max(fro(c)));
        xn = xn.max(p.mul(&xs).max_diff(&one) / scale);
    }
    check(
        abel < 1e-12 && shift < 1e-12 && xn < 1e-12,
        format!("abelianization {abel:.2e}, backward-shift adjoint {shift:.2e}, X_n recursion {xn:.2e}"),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(1010);
    let u = unitary_colligation(1011, 2, 2, 1);
    let up = dir.path().join("u.json");
    std::fs::write(&up, serde_json::to_string(&ColligationFile::from_colligation(&u)).unwrap()).unwrap();
    let t = RowContraction::new(split_row(&row_with_unit_singular_values::<f64>(&mut r, 2, 3, 1), 2), 1e-9).unwrap();
    let s = t.conjugate(&random_unitary::<f64>(&mut r, 3));
    let tp = dir.path().join("t.json");
    let sp = dir.path().join("s.json");
    std::fs::write(&tp, serde_json::to_string(&RowContractionFile::from_row(&t)).unwrap()).unwrap();
    std::fs::write(&sp, serde_json::to_string(&RowContractionFile::from_row(&s)).unwrap()).unwrap();
    let p = |x: &Path| x.display().to_string();
    let cases: Vec<Vec<String>> = vec![
        vec!["agler".into(), "verify".into(), "--file".into(), p(&up), "--samples".into(), "40".into(), "--seed".into(), "3".into()],
        vec!["agler".into(), "defects".into(), "--file".into(), p(&up)],
        vec!["model".into(), "verify".into(), "--file".into(), p(&up)],
        vec!["realize".into(), "eval".into(), "--file".into(), p(&up), "--points".into(), "0.1,0.2i".into(), "--order".into(), "3".into()],
        vec!["rowc".into(), "classify".into(), "--file".into(), p(&tp)],
        vec!["rowc".into(), "moments".into(), "--file".into(), p(&tp), "--order".into(), "3".into()],
        vec!["rowc".into(), "equiv".into(), "--a".into(), p(&tp), "--b".into(), p(&sp)],
        vec!["rowc".into(), "triple-equiv".into(), "--a".into(), p(&tp), "--b".into(), p(&sp)],
        vec!["example".into(), "spherical".into(), "--lambda".into(), "0.6,0.8i".into()],
    ];
    let mut differing = Vec::new();
    for args in &cases {
        let run = || Command::new(env!("CARGO_BIN_EXE_ballmodel")).args(args).output().expect("binary runs");
        let (a, b) = (run(), run());
        if a.stdout != b.stdout || a.status != b.status || a.stdout.is_empty() {
            differing.push(args[..2].join(" "));
        }
    }
    check(
        differing.is_empty(),
        format!("{} commands run twice, differing: {:?}", cases.len(), differing),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("spherical example", criterion_1),
        ("Agler identity", criterion_2),
        ("isometry V", criterion_3),
        ("functional-model round trip", criterion_4),
        ("one-variable reduction", criterion_5),
        ("classification chain", criterion_6),
        ("unitary equivalence", criterion_7),
        ("noncommutative moments", criterion_8),
        ("series layer", criterion_9),
        ("CLI determinism", criterion_10),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        writeln!(err, "acceptance criterion {:>2} [{tag}] {name}: {detail} ({secs:.1}s)", k + 1).unwrap();
        if outcome.is_err() {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn unit_row_helper_shapes() {
    let row = hstack(2, &[Matrix::zeros(2, 2), Matrix::identity(2, 2)]);
    assert_eq!(split_row(&row, 2)[1], Matrix::identity(2, 2));
    assert!(small_unitary_shapes().iter().all(|&(d, n, q)| (d - 1) * n + q <= 3));
}
