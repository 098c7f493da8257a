//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semicert::analysis::{moser_chain, verify_h1_bound};
use semicert::conditions::{
    epsilon_split, falsify_condition, h1_constant, lmax, moser_params, q_double_star, ConditionKind, FalsifyOptions,
    MOSER_TERMS,
};
use semicert::counterexample::{blowup_study, BlowupVerdict, CaseTag, StripGeometry, SymbolProblem};
use semicert::discrete::{smallest_eigenvalue, Elliptic, Field};
use semicert::domain::{build_domain, BoundingBox, DomainSpec};
use semicert::expr::parse_expr;
use semicert::harness::{certificate_section, run_config, Overrides};
use semicert::sandwich::{solve_linear_gradient, solve_linear_gradient_with, weighted_norm, SandwichOptions, Side};
use semicert::semilinear::{
    compute_lambda1, data_field, solve_semilinear, solve_truncated, uniqueness_probe, SemilinearOptions,
    TruncatedProblem,
};

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn constants_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let lambda1: f64 = 10f64.powf(rng.gen_range(-2.0..3.0));
        let eps: f64 = lambda1 * 10f64.powf(rng.gen_range(-2.0..1.5));
        let l_max = lmax(eps, lambda1);
        let oracle = if eps <= 2.0 * lambda1 { eps / lambda1.sqrt() } else { 2.0 * (eps - lambda1).sqrt() };
        worst = worst.max(rel(l_max, oracle));
        let split = epsilon_split(eps, lambda1);
        let eps1 = if eps / 2.0 < lambda1 { eps / 2.0 } else { lambda1 };
        worst = worst.max(rel(split.eps1, eps1));
        worst = worst.max(rel(split.eps2, eps - eps1));
        worst = worst.max(rel(split.delta1, eps1 / lambda1));
        worst = worst.max(rel(4.0 * split.delta1 * split.eps2, l_max * l_max));

        let d_hat: f64 = rng.gen_range(2.5..12.0);
        let q: f64 = rng.gen_range(2.0..10.0);
        if (2.0 * q - d_hat).abs() < 1e-6 {
            continue;
        }
        let qss = q_double_star(q, d_hat).map_err(|e| e.to_string())?;
        if 2.0 * q < d_hat {
            worst = worst.max(rel(qss, q * d_hat / (d_hat - 2.0 * q)));
        } else {
            ensure(qss.is_infinite(), || format!("q** finite for q = {q}, d = {d_hat}"))?;
            let mp = moser_params(q, d_hat).map_err(|e| e.to_string())?;
            let two_star = 2.0 * d_hat / (d_hat - 2.0);
            let q_prime = q / (q - 1.0);
            let chi = two_star / (2.0 * q_prime);
            worst = worst.max(rel(mp.two_star, two_star));
            worst = worst.max(rel(mp.q_prime, q_prime));
            worst = worst.max(rel(mp.chi, chi));
            worst = worst.max(rel(mp.theta, (2.0 * mp.chi - 2.0) / (2.0 * mp.chi - 1.0)));
            worst = worst.max(rel(mp.theta, (2.0 * chi - 2.0) / (2.0 * chi - 1.0)));
            ensure(mp.beta.len() == MOSER_TERMS, || "beta length".into())?;
            let mut beta = 1.0;
            for (n, &b) in mp.beta.iter().enumerate() {
                if n > 0 {
                    beta = 0.5 + chi * beta;
                }
                worst = worst.max(rel(b, beta));
            }
        }
    }
    ensure(worst <= 1e-12, || format!("worst relative error {worst:e}"))?;
    Ok(format!("worst relative error {worst:e}"))
}

fn eigenvalue_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for h in [0.25, 0.125, 0.0625] {
        let op = Elliptic::dirichlet(interval(0.0, 1.0, h));
        let (lam, _) = smallest_eigenvalue(op.stiffness(), op.domain(), 1e-13).map_err(|e| e.to_string())?;
        let exact = (2.0 - 2.0 * (std::f64::consts::PI * h).cos()) / (h * h);
        worst = worst.max(rel(lam, exact));
        let sq = build_domain(
            &DomainSpec::Box {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 1.0],
            },
            h,
            &BoundingBox::unit(2),
        )
        .map_err(|e| e.to_string())?;
        let op = Elliptic::dirichlet(Arc::new(sq));
        let (lam2, _) = smallest_eigenvalue(op.stiffness(), op.domain(), 1e-13).map_err(|e| e.to_string())?;
        worst = worst.max(rel(lam2, 2.0 * exact));
    }
    ensure(worst <= 1e-10, || format!("worst relative error {worst:e}"))?;
    Ok(format!("worst relative error {worst:e}"))
}

fn sandwich_contraction() -> Outcome {
    let tol = 1e-10;
    let mut count = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_restart = 0.0f64;
    let problems: Vec<(Arc<semicert::domain::GridDomain<f64>>, f64, &str)> = vec![
        (interval(0.0, 1.0, 1.0 / 16.0), 0.5, "1 + x1"),
        (interval(0.0, 2.0, 1.0 / 16.0), 3.0, "1"),
        (interval(0.0, 1.0, 1.0 / 32.0), 1.0, "x1*(1 - x1) + 0.1"),
        (
            Arc::new(
                build_domain(&DomainSpec::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }, 0.125, &BoundingBox::unit(2))
                    .unwrap(),
            ),
            0.5,
            "1 + x1*x2",
        ),
        (
            Arc::new(
                build_domain(
                    &DomainSpec::Disk { center: vec![0.5, 0.5], radius: 0.5 },
                    0.1,
                    &BoundingBox::unit(2),
                )
                .unwrap(),
            ),
            2.5,
            "1",
        ),
    ];
    for (dom, eps_ratio, data) in problems {
        let op = Elliptic::dirichlet(dom);
        let lambda1 = compute_lambda1(&op).map_err(|e| e.to_string())?;
        let eps = eps_ratio * lambda1;
        let h = data_field(&op, &parse_expr(data, op.domain().dim()).unwrap()).map_err(|e| e.to_string())?;
        for ratio in [0.0, 0.3, 0.6, 0.9] {
            let l = ratio * lmax(eps, lambda1);
            let up = solve_linear_gradient(&op, Side::Upper, lambda1, eps, l, &h, tol).map_err(|e| e.to_string())?;
            let lo = solve_linear_gradient(&op, Side::Lower, lambda1, eps, l, &h, tol).map_err(|e| e.to_string())?;
            let bound = ((1.0 + ratio * ratio) / 2.0).sqrt();
            worst_excess = worst_excess.max(up.max_ratio() - bound).max(lo.max_ratio() - bound);
            ensure(up.v.values().iter().all(|&v| v >= -1e-10), || "v_upper negative".into())?;
            ensure(lo.v.values().iter().all(|&v| v <= 1e-10), || "v_lower positive".into())?;
            let start = Field::from_fn(op.domain(), |x| 3.0 * x[0].sin() - 1.0);
            let again = solve_linear_gradient_with(
                &op,
                Side::Upper,
                lambda1,
                eps,
                l,
                &h,
                tol,
                &SandwichOptions {
                    start: Some(start),
                    ..SandwichOptions::default()
                },
            )
            .map_err(|e| e.to_string())?;
            let d = weighted_norm(&op, &again.v.sub(&up.v), up.delta1, up.eps_prime);
            worst_restart = worst_restart.max(d);
            count += 1;
        }
    }
    ensure(count == 20, || format!("{count} problems"))?;
    ensure(worst_excess <= 1e-8, || format!("ratio exceeds sqrt(alpha) by {worst_excess:e}"))?;
    ensure(worst_restart <= 10.0 * tol, || format!("restart distance {worst_restart:e}"))?;
    Ok(format!(
        "{count} problems, max ratio - sqrt(alpha) = {worst_excess:e}, restart distance {worst_restart:e}"
    ))
}

fn suite_reports() -> Result<Vec<(Problem, semicert::SolveReport64)>, String> {
    suite()
        .into_iter()
        .map(|p| {
            let opts = SemilinearOptions {
                lambda1: Some(p.lambda1),
                ..SemilinearOptions::default()
            };
            let r = solve_semilinear(&p.op, &p.spec, 1e-10, &opts).map_err(|e| format!("{}: {e}", p.name))?;
            Ok((p, r))
        })
        .collect()
}

fn domination(reports: &[(Problem, semicert::SolveReport64)]) -> Outcome {
    let mut worst = f64::INFINITY;
    for (p, r) in reports {
        for lvl in &r.levels {
            ensure(lvl.domination_margin >= -1e-8, || {
                format!("{} level {}: margin {:e}", p.name, lvl.k, lvl.domination_margin)
            })?;
            worst = worst.min(lvl.domination_margin);
        }
        let direct = r
            .u
            .values()
            .iter()
            .zip(r.lower.v.values().iter().zip(r.upper.v.values()))
            .map(|(&u, (&lo, &hi))| (u - lo).min(hi - u))
            .fold(f64::INFINITY, f64::min);
        ensure(direct >= -1e-8, || format!("{}: final margin {direct:e}", p.name))?;
    }
    Ok(format!("{} problems, worst level margin {worst:e}", reports.len()))
}

fn h1_bound(reports: &[(Problem, semicert::SolveReport64)]) -> Outcome {
    let mut worst = f64::INFINITY;
    for (p, r) in reports {
        let c = h1_constant(p.lambda1, p.spec.epsilon, p.spec.l).map_err(|e| e.to_string())?.c;
        let check = verify_h1_bound(&p.op, &r.u, &r.h, c);
        ensure(check.margin >= 0.0, || format!("{}: margin {:e}", p.name, check.margin))?;
        worst = worst.min(check.margin / (c * r.h.norm()));
        let bound = p.spec.bind_params(p.lambda1);
        let dom = p.op.domain();
        let level = Arc::clone(dom);
        let problem = TruncatedProblem::new(&p.op, level, r.mu, &r.lower.v, &r.upper.v, &bound.f).map_err(|e| e.to_string())?;
        for t in [0.25, 0.5, 1.0] {
            let (u, _) = solve_truncated(&problem, t, &Field::zeros(dom), 1e-10).map_err(|e| format!("{} t={t}: {e}", p.name))?;
            let check = verify_h1_bound(&p.op, &u, &r.h, c);
            ensure(check.margin >= 0.0, || format!("{} t={t}: margin {:e}", p.name, check.margin))?;
            worst = worst.min(check.margin / (c * r.h.norm()));
        }
    }
    let grid = Grid1d::new(0.0, 1.0, 1.0 / 17.0);
    let op = Elliptic::dirichlet(interval(0.0, 1.0, 1.0 / 17.0));
    ensure(op.domain().len() == 16, || "worst-case grid must have 16 nodes".into())?;
    let lambda1 = compute_lambda1(&op).map_err(|e| e.to_string())?;
    let mut worst_oracle = 0.0f64;
    for (eps_ratio, l_ratio) in [(0.5, 0.0), (0.5, 0.6), (1.0, 0.9), (3.0, 0.5), (0.2, 0.95)] {
        let eps = eps_ratio * lambda1;
        let l = l_ratio * lmax(eps, lambda1);
        let c = h1_constant(lambda1, eps, l).map_err(|e| e.to_string())?.c;
        let w = worst_case_h1(&grid, lambda1, eps, l, 12, 3);
        ensure(w <= c, || format!("worst case {w:e} exceeds C = {c:e} at eps/lambda1 = {eps_ratio}, L/Lmax = {l_ratio}"))?;
        worst_oracle = worst_oracle.max(w / c);
    }
    Ok(format!(
        "min relative margin {worst:.3e}; worst-case oracle reaches {worst_oracle:.3} of C"
    ))
}

fn oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut probes = 0;
    for def in oracle_defs() {
        let p = build(&def);
        ensure(p.op.domain().len() <= 64, || format!("{}: too many nodes", def.name))?;
        let opts = SemilinearOptions {
            lambda1: Some(p.lambda1),
            ..SemilinearOptions::default()
        };
        let r = solve_semilinear(&p.op, &p.spec, 1e-11, &opts).map_err(|e| format!("{}: {e}", def.name))?;
        let DomainSpec::Interval { a, b } = def.domain else { unreachable!() };
        let grid = Grid1d::new(a, b, def.h);
        let f = p.spec.bind_params(p.lambda1).f;
        let oracle = newton_oracle(&grid, &f);
        let d = r.u.values().iter().zip(&oracle).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        ensure(d <= 1e-7, || format!("{}: max difference {d:e}", def.name))?;
        worst = worst.max(d);
        let mono = falsify_condition(ConditionKind::Monotone, &p.spec, p.op.domain(), p.lambda1, 2000, &FalsifyOptions::default())
            .map_err(|e| e.to_string())?;
        if mono.is_pass() {
            let u = uniqueness_probe(&p.op, &p.spec, 3, 1e-10, 11, &opts).map_err(|e| format!("{}: {e}", def.name))?;
            ensure(u.passed, || format!("{}: uniqueness distance {:e}", def.name, u.max_distance))?;
            probes += 1;
        }
    }
    Ok(format!("max difference {worst:e}; uniqueness probe passed for {probes} monotone members"))
}

fn moser(reports: &[(Problem, semicert::SolveReport64)]) -> Outcome {
    let mut worst_drift = 0.0f64;
    let mut scaled = 0;
    for (p, r) in reports {
        let chain = moser_chain(&r.u, &r.h, p.spec.q, p.spec.d_hat).map_err(|e| format!("{}: {e}", p.name))?;
        ensure(chain.c1.is_some_and(|c| c >= 1.0), || format!("{}: C1 {:?}", p.name, chain.c1))?;
        ensure(chain.norms.iter().all(|v| v.is_finite()), || format!("{}: non-finite norm", p.name))?;
        ensure(chain.norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)), || {
            format!("{}: chain not monotone {:?}", p.name, chain.norms)
        })?;
        if p.linear {
            let mut ratios = Vec::new();
            for k in [1.0, 2.0, 4.0, 8.0] {
                let scale = |t: &str| format!("{k}*({t})");
                let dim = p.op.domain().dim();
                let def = suite_defs().into_iter().find(|d| d.name == p.name).unwrap();
                let f = def.f.replace(&format!(" + {}", def.data), &format!(" + {}", scale(def.data)));
                let e = |t: &str| parse_expr(t, dim).unwrap();
                let spec = semicert::conditions::SemilinearitySpec::new(
                    e(&f),
                    e(&scale(def.data)),
                    e(&scale(def.h0)),
                    e(def.gamma),
                    p.spec.epsilon,
                    p.spec.l,
                    p.spec.l0,
                    p.spec.q,
                    p.spec.d_hat,
                )
                .map_err(|e| e.to_string())?;
                let opts = SemilinearOptions {
                    lambda1: Some(p.lambda1),
                    ..SemilinearOptions::default()
                };
                let rk = solve_semilinear(&p.op, &spec, 1e-11 * k, &opts).map_err(|e| e.to_string())?;
                let ck = moser_chain(&rk.u, &rk.h, spec.q, spec.d_hat).map_err(|e| e.to_string())?;
                ratios.push(ck.ratio);
            }
            for &x in &ratios[1..] {
                worst_drift = worst_drift.max(rel(x, ratios[0]));
            }
            scaled += 1;
        }
    }
    ensure(scaled > 0, || "no linear-homogeneous member".into())?;
    ensure(worst_drift < 1e-6, || format!("ratio drift {worst_drift:e}"))?;
    Ok(format!("{} chains; ratio drift {worst_drift:e} over {scaled} scaled problems", reports.len()))
}

fn counterexample() -> Outcome {
    let geom = StripGeometry::strip(std::f64::consts::PI, std::f64::consts::PI / 16.0);
    let lambda1 = geom.lambda1();
    let eps = 3.0 * lambda1;
    let sp = SymbolProblem::new(CaseTag::Iii, lambda1, eps, lmax(eps, lambda1), 2).map_err(|e| e.to_string())?;
    let study = blowup_study(&sp, &[10.0, 20.0, 40.0, 80.0], geom.h, std::f64::consts::PI).map_err(|e| e.to_string())?;
    let growth = study.min_growth().unwrap_or(f64::NAN);
    let spread = study.control_spread().unwrap_or(f64::NAN);
    let resonant: Vec<String> = study.rows.iter().map(|r| format!("{:.4}", r.resonant_ratio)).collect();
    let detail = format!(
        "verdict {}, resonant ratios [{}], min growth per doubling {growth:.4}, control spread {spread:.4}",
        study.verdict,
        resonant.join(", ")
    );
    ensure(study.rows.len() == 4 && growth >= 1.5 && spread <= 2.0 && study.verdict == BlowupVerdict::Blowup, || {
        detail.clone()
    })?;
    Ok(detail)
}

fn robin_mode() -> Outcome {
    let stiff = parse_expr("1e12", 1).unwrap();
    let mut worst = 0.0f64;
    let sq_spec = DomainSpec::Box {
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    };
    for (spec, dim, h) in [(DomainSpec::Interval { a: 0.0, b: 1.0 }, 1, 1.0 / 16.0), (sq_spec, 2, 0.125)] {
        let dom = build_domain(&spec, h, &BoundingBox::unit(dim)).unwrap();
        let beta = if dim == 1 { stiff.clone() } else { parse_expr("1e12", 2).unwrap() };
        let robin = Elliptic::robin(&dom, &beta).map_err(|e| e.to_string())?;
        let dir = Elliptic::dirichlet(Arc::new(dom));
        let (lr, ld) = (compute_lambda1(&robin).unwrap(), compute_lambda1(&dir).unwrap());
        worst = worst.max(rel(lr, ld));
        let def = Def {
            name: "robin",
            domain: spec.clone(),
            bbox: (vec![0.0; dim], vec![1.0; dim]),
            h,
            f: "-s^3 + 1",
            data: "1",
            h0: "1",
            gamma: "s^3",
            eps_ratio: 1.0,
            l_ratio: 0.3,
            q: 4.0,
            linear: false,
        };
        let pr = problem_on(&Def { f: "-s^3 + 0.3*Lmax*gnorm + 1", ..def }, robin, lr, dim);
        let pd = problem_on(
            &Def {
                name: "dirichlet",
                domain: spec,
                bbox: (vec![0.0; dim], vec![1.0; dim]),
                h,
                f: "-s^3 + 0.3*Lmax*gnorm + 1",
                data: "1",
                h0: "1",
                gamma: "s^3",
                eps_ratio: 1.0,
                l_ratio: 0.3,
                q: 4.0,
                linear: false,
            },
            dir,
            ld,
            dim,
        );
        let opts = |l| SemilinearOptions {
            lambda1: Some(l),
            ..SemilinearOptions::default()
        };
        let ur = solve_semilinear(&pr.op, &pr.spec, 1e-10, &opts(lr)).map_err(|e| format!("robin: {e}"))?;
        let ud = solve_semilinear(&pd.op, &pd.spec, 1e-10, &opts(ld)).map_err(|e| format!("dirichlet: {e}"))?;
        let rows = pr.op.domain().embedding_of(pd.op.domain()).ok_or("embedding")?;
        let scale = ud.u.max_abs();
        for (i, &r) in rows.iter().enumerate() {
            worst = worst.max((ur.u.values()[r] - ud.u.values()[i]).abs() / scale);
        }
    }
    ensure(worst <= 1e-5, || format!("stiff Robin differs from Dirichlet by {worst:e}"))?;

    let dom = build_domain(&DomainSpec::Interval { a: 0.0, b: 1.0 }, 1.0 / 16.0, &BoundingBox::unit(1)).unwrap();
    let robin = Elliptic::robin(&dom, &parse_expr("1", 1).unwrap()).map_err(|e| e.to_string())?;
    let lambda1 = compute_lambda1(&robin).map_err(|e| e.to_string())?;
    let def = Def {
        name: "robin_unit",
        domain: DomainSpec::Interval { a: 0.0, b: 1.0 },
        bbox: (vec![0.0], vec![1.0]),
        h: 1.0 / 16.0,
        f: "-s^3 + 0.5*Lmax*xi1 + 1",
        data: "1",
        h0: "1",
        gamma: "s^3",
        eps_ratio: 0.5,
        l_ratio: 0.5,
        q: 4.0,
        linear: false,
    };
    let p = problem_on(&def, robin, lambda1, 1);
    let h = data_field(&p.op, &parse_expr("1", 1).unwrap()).unwrap();
    let l_max = lmax(p.spec.epsilon, lambda1);
    let bound = ((1.0 + (p.spec.l / l_max).powi(2)) / 2.0).sqrt() + 1e-8;
    for side in [Side::Upper, Side::Lower] {
        let s = solve_linear_gradient(&p.op, side, lambda1, p.spec.epsilon, p.spec.l, &h, 1e-10).map_err(|e| e.to_string())?;
        ensure(s.max_ratio() <= bound, || format!("robin contraction ratio {:e}", s.max_ratio()))?;
    }
    let r = solve_semilinear(
        &p.op,
        &p.spec,
        1e-10,
        &SemilinearOptions {
            lambda1: Some(lambda1),
            ..SemilinearOptions::default()
        },
    )
    .map_err(|e| format!("robin beta = 1: {e}"))?;
    ensure(r.all_pass(), || format!("robin beta = 1 checks: {:?}", r.checks.iter().filter(|c| !c.passed()).map(|c| &c.name).collect::<Vec<_>>()))?;
    ensure(r.levels.iter().all(|l| l.domination_margin >= -1e-8), || "robin level domination".into())?;
    Ok(format!("stiff Robin vs Dirichlet relative difference {worst:e}; beta = 1 pipeline passes with lambda1 = {lambda1:.6}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut first = Vec::new();
    let defs = suite_defs();
    for pass in 0..2 {
        let mut sections = Vec::new();
        for def in &defs {
            let text = config_for(def, &dir.path().join(def.name));
            let path = dir.path().join(format!("{}.toml", def.name));
            std::fs::write(&path, text).map_err(|e| e.to_string())?;
            let overrides = Overrides {
                out: Some(dir.path().join(format!("{}_{pass}", def.name))),
                ..Overrides::default()
            };
            let out = run_config(&path, &overrides, None).map_err(|e| format!("{}: {e}", def.name))?;
            ensure(out.exit_code() == 0, || format!("{}: exit {} ({:?})", def.name, out.exit_code(), out.error))?;
            let report = std::fs::read_to_string(&out.report_path).map_err(|e| e.to_string())?;
            sections.push(certificate_section(&report).ok_or("missing certificate")?.to_string());
        }
        if pass == 0 {
            first = sections;
        } else {
            for (d, (a, b)) in defs.iter().zip(first.iter().zip(&sections)) {
                ensure(a == b, || format!("{}: certificates differ", d.name))?;
            }
        }
    }
    Ok(format!("{} certificates byte-identical across two runs", defs.len()))
}

fn toml_list(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "))
}

fn config_for(def: &Def, out: &std::path::Path) -> String {
    let domain = match &def.domain {
        DomainSpec::Interval { a, b } => format!("shape = \"interval\"\na = {a:?}\nb = {b:?}"),
        DomainSpec::Box { lo, hi } => format!("shape = \"box\"\nlo = {}\nhi = {}", toml_list(lo), toml_list(hi)),
        DomainSpec::LShape { lo, hi } => format!("shape = \"lshape\"\nlo = {}\nhi = {}", toml_list(lo), toml_list(hi)),
        DomainSpec::Disk { center, radius } => format!("shape = \"disk\"\ncenter = {}\nradius = {radius:?}", toml_list(center)),
        DomainSpec::Annulus { center, inner, outer } => {
            format!("shape = \"annulus\"\ncenter = {}\ninner = {inner:?}\nouter = {outer:?}", toml_list(center))
        }
        DomainSpec::UnionOfBoxes(boxes) => {
            let items: Vec<String> = boxes.iter().map(|(lo, hi)| toml_list(&[lo.clone(), hi.clone()].concat())).collect();
            format!("shape = \"union\"\nboxes = [{}]", items.join(", "))
        }
        DomainSpec::Indicator(_) => unreachable!(),
    };
    format!(
        "mode = \"solve\"\nseed = 42\noutput = {out:?}\n[domain]\n{domain}\nh = {h:?}\nbbox_lo = {lo}\nbbox_hi = {hi}\n\
         [semilinearity]\nf = {f:?}\nh = {data:?}\nh0 = {h0:?}\ngamma = {gamma:?}\nepsilon = \"{er:?}*lambda1\"\n\
         L = \"{lr:?}*Lmax\"\nq = {q:?}\n",
        h = def.h,
        lo = toml_list(&def.bbox.0),
        hi = toml_list(&def.bbox.1),
        f = def.f,
        data = def.data,
        h0 = def.h0,
        gamma = def.gamma,
        er = def.eps_ratio,
        lr = def.l_ratio,
        q = def.q,
    )
}

fn run(n: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    let (ok, detail) = match result {
        Ok(d) if elapsed <= limit => (true, d),
        Ok(d) => (false, format!("{d}; runtime {elapsed:.1?} over {limit:?}")),
        Err(e) => (false, e),
    };
    println!(
        "criterion {n:>2} {name:<22} {} ({:.2}s) {detail}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    ok
}

fn main() {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= run(1, "constants", secs(1), constants_suite);
    ok &= run(2, "eigenvalue", secs(5), eigenvalue_oracle);
    ok &= run(3, "sandwich_contraction", secs(30), sandwich_contraction);
    let start = Instant::now();
    let reports = suite_reports();
    let solve_time = start.elapsed();
    let with_reports = |n, name, limit: Duration, f: fn(&[(Problem, semicert::SolveReport64)]) -> Outcome| match &reports {
        Ok(r) => run(n, name, limit.saturating_sub(solve_time), || f(r)),
        Err(e) => run(n, name, limit, || Err(e.clone())),
    };
    ok &= with_reports(4, "domination", secs(60), domination);
    ok &= with_reports(5, "h1_bound", secs(120), h1_bound);
    ok &= run(6, "oracle_equivalence", secs(60), oracle_equivalence);
    ok &= with_reports(7, "moser_chain", secs(60), moser);
    ok &= run(8, "counterexample_blowup", secs(300), counterexample);
    ok &= run(9, "robin_mode", secs(60), robin_mode);
    ok &= run(10, "determinism", secs(600), determinism);
    if !ok {
        std::process::exit(1);
    }
}
