use swarmcvt::gaussian_ot::{transport_map, w2, wg_distance};
use swarmcvt::sim::{cloud_moments, sample_gmm};
use swarmcvt::workspace::p_obstacle;
use swarmcvt::{compute_metrics, plan, simulate, Gaussian2, GcvtParams, Gmm, PlanMethod, PlanParams, Polygon, Workspace};

fn iso(x: f64, y: f64, var: f64) -> Gaussian2 {
    Gaussian2::from_parts([x, y], [var, 0.0, var]).unwrap()
}

fn wall() -> Workspace {
    Workspace::new(10.0, 8.0, vec![Polygon::rect(4.0, 0.0, 6.0, 5.0)], 0.1).unwrap()
}

fn ends() -> (Gmm, Gmm) {
    let p0 = Gmm::new(vec![iso(1.5, 1.5, 0.2), iso(2.0, 3.0, 0.15)], vec![0.6, 0.4]).unwrap();
    let pf = Gmm::new(vec![iso(8.5, 1.5, 0.2), iso(8.0, 3.5, 0.15)], vec![0.5, 0.5]).unwrap();
    (p0, pf)
}

fn params(k: usize, seed: u64) -> PlanParams {
    PlanParams { gcvt: GcvtParams { k, seed, ..GcvtParams::default() }, ..PlanParams::default() }
}

#[test]
fn safe_plans_keep_every_step_off_the_obstacles() {
    let w = wall();
    let (p0, pf) = ends();
    for method in [PlanMethod::Cvt1, PlanMethod::Cvt2] {
        let r = plan(&p0, &pf, &w, &params(20, 2), method).unwrap();
        for g in r.gmm_sequence.iter().flat_map(|m| m.components()) {
            assert!(p_obstacle(g, &w) < 0.05, "{method}");
        }
        let step = params(20, 2).max_step();
        for (_, _, _, t) in r.weighted_pairs() {
            assert!(t.step_lengths().iter().all(|&s| s <= step + 1e-9));
        }
        assert!(r.weights.marginal_error(p0.weights(), pf.weights()) < 1e-9);
    }
}

#[test]
fn mixture_objective_is_below_the_trajectory_bound() {
    let w = wall();
    let (p0, pf) = ends();
    for seed in 0..3 {
        let r = plan(&p0, &pf, &w, &params(20, seed), PlanMethod::Cvt2).unwrap();
        let j = r.wg_objective(&pf).unwrap();
        assert!(j <= r.upper_bound_cost + 1e-6, "{j} > {}", r.upper_bound_cost);
        assert!(wg_distance(&r.gmm_sequence[0], &p0).unwrap().0 < 1e-9);
        assert!(wg_distance(r.gmm_sequence.last().unwrap(), &pf).unwrap().0 < 1e-6);
    }
}

#[test]
fn grid_baseline_reaches_the_goal() {
    let w = wall();
    let (p0, pf) = ends();
    let r = plan(&p0, &pf, &w, &params(40, 0), PlanMethod::Grid).unwrap();
    assert!(r.tessellation.is_none());
    assert!(wg_distance(r.gmm_sequence.last().unwrap(), &pf).unwrap().0 < 1e-6);
}

#[test]
fn robots_move_with_their_components() {
    let w = wall();
    let (p0, pf) = ends();
    let pp = params(20, 1);
    let r = plan(&p0, &pf, &w, &pp, PlanMethod::Cvt1).unwrap();
    let out = simulate(&r, &p0, &w, 300, 4, pp.dt, pp.nu).unwrap();
    assert_eq!(out, simulate(&r, &p0, &w, 300, 4, pp.dt, pp.nu).unwrap());
    let horizon_h = r.horizon() as f64 * pp.dt;
    for robot in &out.robots {
        assert!(robot.energy + 1e-12 >= 0.5 * robot.path_length.powi(2) / horizon_h);
    }
    let m = compute_metrics(&out, &r, &pf, pp.dt).unwrap();
    assert_eq!(m.n_robots, 300);
    assert!(m.avg_distance_km >= 5.0);
    assert!(m.final_wg_error_km < 1e-6);
}

#[test]
fn identical_ends_need_no_motion() {
    let w = wall();
    let (p0, _) = ends();
    let pp = params(20, 0);
    let r = plan(&p0, &p0, &w, &pp, PlanMethod::Cvt2).unwrap();
    let out = simulate(&r, &p0, &w, 100, 0, pp.dt, pp.nu).unwrap();
    let m = compute_metrics(&out, &r, &p0, pp.dt).unwrap();
    assert_eq!(m.energy_per_mass, 0.0);
    assert_eq!(m.avg_distance_km, 0.0);
}

#[test]
fn equal_covariances_translate_every_robot() {
    let a = iso(1.0, 1.0, 0.3);
    let b = iso(4.0, 5.0, 0.3);
    for (x, _) in sample_gmm(&Gmm::single(a), 50, 0).unwrap() {
        let y = transport_map(&a, &b, &x);
        assert!((y - x - (b.mean() - a.mean())).norm() < 1e-12);
    }
    assert!((w2(&a, &b) - 5.0).abs() < 1e-12);
}

#[test]
fn mapped_samples_match_the_target_moments() {
    let a = Gaussian2::from_parts([0.0, 0.0], [0.4, 0.1, 0.2]).unwrap();
    let b = Gaussian2::from_parts([3.0, -1.0], [0.1, -0.05, 0.6]).unwrap();
    let pts: Vec<_> = sample_gmm(&Gmm::single(a), 10_000, 9)
        .unwrap()
        .into_iter()
        .map(|(x, _)| transport_map(&a, &b, &x))
        .collect();
    let (mean, cov) = cloud_moments(&pts).unwrap();
    assert!((mean - b.mean()).norm() < 0.05);
    assert!((cov - b.cov()).norm() / b.cov().norm() < 0.1);
}
