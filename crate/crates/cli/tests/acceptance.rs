use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmcvt::gaussian_ot::{gmm_geodesic, interpolate, solve_transport, w2, wg_distance};
use swarmcvt::gcvt::{lloyd_cvt, seed_means};
use swarmcvt::sim::cloud_moments;
use swarmcvt::{
    build_gcvt, plan, simulate, Gaussian2, GcvtVariant, Gmm, Mat2, PlanMethod, PlanResult, RunMetrics, Tessellation,
    Vec2, Workspace,
};
use swarmcvt_cli::run;
use swarmcvt_cli::Scenario;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

fn random_gaussian(rng: &mut ChaCha8Rng) -> Gaussian2 {
    let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (l1, l2): (f64, f64) = (rng.random_range(0.05..3.0), rng.random_range(0.05..3.0));
    let (c, s) = (th.cos(), th.sin());
    let r = Mat2::new(c, -s, s, c);
    let cov = r * Mat2::new(l1, 0.0, 0.0, l2) * r.transpose();
    let mean = Vec2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
    Gaussian2::new(mean, (cov + cov.transpose()) * 0.5).unwrap()
}

fn random_gmm(rng: &mut ChaCha8Rng, n: usize) -> Gmm {
    let comps = (0..n).map(|_| random_gaussian(rng)).collect();
    let weights = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    Gmm::normalized(comps, weights).unwrap()
}

fn random_marginal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn metric_suite() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_triangle = f64::NEG_INFINITY;
    let mut worst_identity = 0.0f64;
    for _ in 0..1000 {
        let (a, b, c) = (random_gaussian(&mut rng), random_gaussian(&mut rng), random_gaussian(&mut rng));
        worst_identity = worst_identity.max(w2(&a, &a));
        ensure(w2(&a, &b) == w2(&b, &a), || "asymmetric W2".into())?;
        worst_triangle = worst_triangle.max(w2(&a, &c) - w2(&a, &b) - w2(&b, &c));
    }
    ensure(worst_identity < 1e-6, || format!("d(a, a) = {worst_identity:.2e}"))?;
    ensure(worst_triangle <= 1e-9, || format!("triangle violated by {worst_triangle:.2e}"))?;
    let mut worst_exact = 0.0f64;
    for _ in 0..1000 {
        let a = random_gaussian(&mut rng);
        let d = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let b = Gaussian2::new(a.mean() + d, a.cov()).unwrap();
        worst_exact = worst_exact.max((w2(&a, &b) - d.norm()).abs());
        let l: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.01..4.0));
        let a = Gaussian2::from_parts([0.0, 0.0], [l[0], 0.0, l[1]]).unwrap();
        let b = Gaussian2::from_parts([d.x, d.y], [l[2], 0.0, l[3]]).unwrap();
        let expect = (d.norm_squared() + (l[0].sqrt() - l[2].sqrt()).powi(2) + (l[1].sqrt() - l[3].sqrt()).powi(2)).sqrt();
        worst_exact = worst_exact.max((w2(&a, &b) - expect).abs());
    }
    ensure(worst_exact < 1e-9, || format!("analytic case off by {worst_exact:.2e}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "identity {worst_identity:.1e}, triangle slack {:.1e}, analytic {worst_exact:.1e}, {:.2} s",
        -worst_triangle,
        start.elapsed().as_secs_f64()
    ))
}

fn geodesic_linearity() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let rel = |got: f64, want: f64| (got - want).abs() / want.max(1e-12);
    for _ in 0..100 {
        let (a, b) = (random_gaussian(&mut rng), random_gaussian(&mut rng));
        let (t1, t2) = ordered(&mut rng);
        let d = w2(&interpolate(&a, &b, t1).unwrap(), &interpolate(&a, &b, t2).unwrap());
        worst = worst.max(rel(d, (t2 - t1) * w2(&a, &b)));
    }
    for _ in 0..20 {
        let (p, q) = (random_gmm(&mut rng, 2), random_gmm(&mut rng, 3));
        let (d, opt) = wg_distance(&p, &q).unwrap();
        let (t1, t2) = ordered(&mut rng);
        let a = gmm_geodesic(&p, &q, &opt.coupling, t1).unwrap();
        let b = gmm_geodesic(&p, &q, &opt.coupling, t2).unwrap();
        worst = worst.max(rel(wg_distance(&a, &b).unwrap().0, (t2 - t1) * d));
    }
    ensure(worst < 1e-6, || format!("relative error {worst:.2e}"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("worst relative error {worst:.1e}, {:.2} s", start.elapsed().as_secs_f64()))
}

fn ordered(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (a, b): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let (a, b) = (a.min(b), a.max(b));
    if b - a < 0.05 {
        (0.1, 0.9)
    } else {
        (a, b)
    }
}

/// Minimum over all basic feasible solutions of the transportation polytope.
fn vertex_enumeration(cost: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells = m * n;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << cells) {
        if mask.count_ones() as usize != m + n - 1 {
            continue;
        }
        let mut open: Vec<usize> = (0..cells).filter(|c| mask & (1 << c) != 0).collect();
        let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
        let mut x = vec![0.0; cells];
        let mut stuck = false;
        while !open.is_empty() {
            let leaf = open.iter().position(|&c| {
                open.iter().filter(|&&d| d / n == c / n).count() == 1 || open.iter().filter(|&&d| d % n == c % n).count() == 1
            });
            let Some(k) = leaf else {
                stuck = true;
                break;
            };
            let c = open.remove(k);
            let (i, j) = (c / n, c % n);
            let v = if open.iter().any(|&d| d / n == i) { rb[j] } else { ra[i] };
            x[c] = v;
            ra[i] -= v;
            rb[j] -= v;
        }
        if stuck || x.iter().any(|&v| v < -1e-12) || ra.iter().chain(&rb).any(|r| r.abs() > 1e-9) {
            continue;
        }
        best = best.min(x.iter().zip(cost).map(|(x, c)| x * c).sum());
    }
    best
}

fn lp_vs_enumeration() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (m, n) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let (p, q) = (random_gmm(&mut rng, m), random_gmm(&mut rng, n));
        let cost = swarmcvt::gaussian_ot::w2_cost_matrix(&p, &q);
        let a = random_marginal(&mut rng, m);
        let b = random_marginal(&mut rng, n);
        let lp = solve_transport(&cost, &a, &b).map_err(|e| e.to_string())?.objective;
        worst = worst.max((lp - vertex_enumeration(&cost, &a, &b)).abs());
    }
    ensure(worst < 1e-8, || format!("gap {worst:.2e}"))?;
    Ok(format!("50 instances, worst gap {worst:.1e}"))
}

struct Desk {
    scenario: Scenario,
    w: Workspace,
    p0: Gmm,
    pf: Gmm,
}

impl Desk {
    fn new() -> Self {
        let mut scenario = Scenario::bundled();
        scenario.params.robots = Some(100);
        let w = scenario.workspace().unwrap();
        let p0 = scenario.initial_gmm().unwrap();
        let pf = scenario.target_gmm().unwrap();
        Self { scenario, w, p0, pf }
    }
}

/// Constraint values measured by direct quadrature over the grid.
fn measure(g: &Gaussian2, cell: &[usize], w: &Workspace) -> (f64, f64, f64) {
    let a = w.cell_area();
    let p_b: f64 = w.obstacle_cells().iter().map(|&c| g.pdf(&w.cell_center(c))).sum::<f64>() * a;
    let mass: f64 = cell.iter().map(|&c| g.pdf(&w.cell_center(c))).sum::<f64>() * a;
    let peak = cell.iter().map(|&c| g.pdf(&w.cell_center(c))).fold(0.0, f64::max);
    (p_b, mass, peak)
}

fn gcvt_constraints(desk: &Desk, tess: &mut HashMap<(usize, GcvtVariant), Tessellation>) -> Check {
    let start = Instant::now();
    let mut retained = 0;
    let mut dropped = 0;
    for k in [50, 100] {
        let params = desk.scenario.resolve(Some(k), 0).plan.gcvt;
        for v in [GcvtVariant::I, GcvtVariant::II] {
            let t = build_gcvt(&desk.w, &params, v).map_err(|e| format!("K={k} GCVT-{v}: {e}"))?;
            let mut owner = vec![0u32; desk.w.num_cells()];
            for (i, (g, cell)) in t.generators().iter().enumerate() {
                let (p_b, mass, peak) = measure(g, cell.cells(), &desk.w);
                ensure(p_b < params.eta_b && mass >= params.eta_v && peak <= params.rho_max, || {
                    format!("K={k} GCVT-{v} cell {i}: p_B {p_b:.4}, mass {mass:.4}, peak {peak:.4}")
                })?;
                for &c in cell.cells() {
                    owner[c] += 1;
                }
            }
            let partition = (0..desk.w.num_cells()).all(|c| owner[c] == u32::from(desk.w.is_free(c)));
            ensure(partition, || format!("K={k} GCVT-{v}: cells do not partition free space"))?;
            retained += t.len();
            dropped += t.dropped().len();
            tess.insert((k, v), t);
        }
    }
    within(start.elapsed(), 120.0)?;
    Ok(format!("{retained} generators checked, {dropped} dropped, {:.1} s", start.elapsed().as_secs_f64()))
}

fn gcvt_dominance(tess: &HashMap<(usize, GcvtVariant), Tessellation>) -> Check {
    let mut compared = 0;
    let mut worst = f64::NEG_INFINITY;
    for k in [50, 100] {
        let (Some(one), Some(two)) = (tess.get(&(k, GcvtVariant::I)), tess.get(&(k, GcvtVariant::II))) else {
            return Err(format!("K={k}: tessellations missing"));
        };
        for (g1, c1) in one.generators() {
            if let Some((g2, _)) = two.generators().iter().find(|(_, c2)| c2 == c1) {
                compared += 1;
                worst = worst.max(g1.det() - g2.det());
            }
        }
    }
    ensure(compared > 0, || "no common cells".into())?;
    ensure(worst <= 1e-9, || format!("|Σ_I| exceeds |Σ_II| by {worst:.2e}"))?;
    Ok(format!("{compared} shared cells, max |Σ_I| - |Σ_II| = {worst:.2e}"))
}

fn lloyd_monotone(desk: &Desk) -> Check {
    let mut iters = 0;
    for seed in desk.scenario.seeds.iter().copied() {
        let params = desk.scenario.resolve(Some(100), seed).plan.gcvt;
        let r = lloyd_cvt(&desk.w, &seed_means(&desk.w, params.k, seed).unwrap(), &params).map_err(|e| e.to_string())?;
        for (i, p) in r.objective_trace.windows(2).enumerate() {
            ensure(p[1] <= p[0] + 1e-9, || format!("seed {seed} step {i}: {} -> {}", p[0], p[1]))?;
        }
        iters += r.iterations;
    }
    Ok(format!("{} seeds, {iters} iterations", desk.scenario.seeds.len()))
}

struct DeskRun {
    method: PlanMethod,
    seed: u64,
    metrics: RunMetrics,
    plan: PlanResult,
}

fn desk_runs(desk: &Desk, dir: &Path) -> Result<(Vec<DeskRun>, Duration), String> {
    let start = Instant::now();
    let mut out = Vec::new();
    for method in [PlanMethod::Cvt1, PlanMethod::Cvt2, PlanMethod::Grid] {
        for seed in 0..5 {
            let d = dir.join(format!("{method}_{seed}"));
            let rec = run::run(&desk.scenario, method, Some(100), seed, &d).map_err(|e| format!("{method} seed {seed}: {e}"))?;
            out.push(DeskRun { method, seed, metrics: rec.metrics, plan: rec.plan });
        }
    }
    Ok((out, start.elapsed()))
}

fn plan_feasibility(desk: &Desk, runs: &[DeskRun]) -> Check {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for r in runs.iter().filter(|r| r.method != PlanMethod::Grid) {
        for m in &r.plan.gmm_sequence {
            let p_b: f64 = m.iter().map(|(g, wt)| wt * measure(g, &[], &desk.w).0).sum();
            worst = worst.max(p_b);
            checked += 1;
        }
    }
    ensure(worst < 0.05, || format!("p_B reached {worst:.4}"))?;
    Ok(format!("{checked} mixtures, max p_B {worst:.4}"))
}

fn upper_bound(desk: &Desk, runs: &[DeskRun]) -> Check {
    let mut n = 0;
    let mut slack = f64::INFINITY;
    for r in runs.iter().filter(|r| r.method != PlanMethod::Grid) {
        let j = r.plan.wg_objective(&desk.pf).map_err(|e| e.to_string())?;
        let bound = r.plan.upper_bound_cost;
        ensure(j <= bound + 1e-6, || format!("{} seed {}: J {j:.6} > bound {bound:.6}", r.method, r.seed))?;
        slack = slack.min(bound - j);
        n += 1;
    }
    ensure(n == 10, || format!("{n} plans"))?;
    Ok(format!("{n} plans, smallest slack {slack:.2e} km²"))
}

fn directional(runs: &[DeskRun], elapsed: Duration) -> Check {
    let mean = |m: PlanMethod, f: fn(&RunMetrics) -> f64| {
        let xs: Vec<f64> = runs.iter().filter(|r| r.method == m).map(|r| f(&r.metrics)).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let energy = |m| mean(m, |x| x.energy_per_mass);
    let dist = |m| mean(m, |x| x.avg_distance_km);
    let (e1, e2, eg) = (energy(PlanMethod::Cvt1), energy(PlanMethod::Cvt2), energy(PlanMethod::Grid));
    let worst_final = runs.iter().map(|r| r.metrics.final_wg_error_km).fold(0.0, f64::max);
    ensure(e1 < eg && e2 < eg, || format!("energy cvt1 {e1:.3}, cvt2 {e2:.3}, grid {eg:.3}"))?;
    ensure(worst_final < 0.5, || format!("final WG error {worst_final:.3} km"))?;
    within(elapsed, 600.0)?;
    Ok(format!(
        "energy cvt1 {e1:.2}, cvt2 {e2:.2}, grid {eg:.2} (grid/cvt1 {:.3}); distance cvt1 {:.2}, cvt2 {:.2}, grid {:.2} km; max final error {worst_final:.1e} km; {:.1} s",
        eg / e1,
        dist(PlanMethod::Cvt1),
        dist(PlanMethod::Cvt2),
        dist(PlanMethod::Grid),
        elapsed.as_secs_f64()
    ))
}

fn rel_frobenius(cov: &Mat2, target: &Mat2) -> f64 {
    (cov - target).norm() / target.norm()
}

fn pushforward(desk: &Desk, runs: &[DeskRun]) -> Check {
    let params = desk.scenario.resolve(Some(100), 0).plan;
    let single0 = Gmm::single(desk.p0.components()[0]);
    let singlef = Gmm::single(desk.pf.components()[0]);
    let p = plan(&single0, &singlef, &desk.w, &params, PlanMethod::Cvt1).map_err(|e| e.to_string())?;
    let out = simulate(&p, &single0, &desk.w, 10_000, 0, params.dt, params.nu).map_err(|e| e.to_string())?;
    let pts: Vec<Vec2> = out.robots.iter().map(|r| r.position).collect();
    let (mean, cov) = cloud_moments(&pts).unwrap();
    let goal = singlef.components()[0];
    let single_err = rel_frobenius(&cov, &goal.cov());
    ensure(single_err < 0.1 && (mean - goal.mean()).norm() < 0.1, || {
        format!("single pair: covariance off by {single_err:.3}, mean by {:.3} km", (mean - goal.mean()).norm())
    })?;

    let full = runs.iter().find(|r| r.method == PlanMethod::Cvt1).ok_or("no desk run")?;
    let out = simulate(&full.plan, &desk.p0, &desk.w, 10_000, 0, params.dt, params.nu).map_err(|e| e.to_string())?;
    let mut pairs: BTreeMap<(usize, usize), Vec<Vec2>> = BTreeMap::new();
    for r in &out.robots {
        pairs.entry((r.source, r.target)).or_default().push(r.position);
    }
    let mut worst = 0.0f64;
    let mut checked = 0;
    for ((i, j), pts) in pairs.iter().filter(|(_, p)| p.len() >= 1000) {
        let terminal = full.plan.trajectory(*i, *j).ok_or("unreachable pair")?.gcs.last().copied().unwrap();
        let (_, cov) = cloud_moments(pts).unwrap();
        worst = worst.max(rel_frobenius(&cov, &terminal.cov()));
        checked += 1;
    }
    ensure(checked > 0 && worst < 0.1, || format!("{checked} pairs, worst covariance error {worst:.3}"))?;
    Ok(format!("single pair {single_err:.3}; {checked} pairs of a full run, worst {worst:.3}"))
}

fn determinism(desk: &Desk, dir: &Path) -> Check {
    for method in [PlanMethod::Cvt1, PlanMethod::Grid] {
        let a = dir.join(format!("{method}_a"));
        let b = dir.join(format!("{method}_b"));
        run::run(&desk.scenario, method, Some(100), 1, &a).map_err(|e| e.to_string())?;
        run::run(&desk.scenario, method, Some(100), 1, &b).map_err(|e| e.to_string())?;
        let read = |d: &Path| fs::read(d.join(run::METRICS_FILE)).unwrap();
        ensure(read(&a) == read(&b), || format!("{method}: metrics differ"))?;
    }
    Ok("cvt1 and grid metrics byte-identical".into())
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    match r {
        Ok(detail) => {
            println!("criterion {n:>2} PASS  {name}: {detail}");
            true
        }
        Err(why) => {
            println!("criterion {n:>2} FAIL  {name}: {why}");
            false
        }
    }
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let desk = Desk::new();
    let mut tess = HashMap::new();
    let mut ok = Vec::new();
    ok.push(report(1, "W2 metric suite", metric_suite));
    ok.push(report(2, "geodesic linearity", geodesic_linearity));
    ok.push(report(3, "transport LP vs vertex enumeration", lp_vs_enumeration));
    ok.push(report(4, "GCVT constraint satisfaction", || gcvt_constraints(&desk, &mut tess)));
    ok.push(report(5, "GCVT-I determinant dominance", || gcvt_dominance(&tess)));
    ok.push(report(6, "Lloyd monotonicity", || lloyd_monotone(&desk)));
    let runs = desk_runs(&desk, dir.path());
    let with_runs = |f: &dyn Fn(&[DeskRun], Duration) -> Check| match &runs {
        Ok((r, t)) => f(r, *t),
        Err(e) => Err(format!("desk runs failed: {e}")),
    };
    ok.push(report(7, "plan obstacle feasibility", || with_runs(&|r, _| plan_feasibility(&desk, r))));
    ok.push(report(8, "objective below trajectory bound", || with_runs(&|r, _| upper_bound(&desk, r))));
    ok.push(report(9, "directional energy ordering", || with_runs(&|r, t| directional(r, t))));
    ok.push(report(10, "robot cloud pushforward", || with_runs(&|r, _| pushforward(&desk, r))));
    ok.push(report(11, "determinism", || determinism(&desk, dir.path())));
    let failed = ok.iter().filter(|&&x| !x).count();
    println!("acceptance: {} passed, {failed} failed", ok.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
