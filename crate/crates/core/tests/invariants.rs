mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use scpg::analysis::{
    alignment_count_bound, convex_rate_bound, kl_rate_bound, recurrence_rate_bound, sublinear_tail_bound,
    gradient_rate_bound, BoundParams, KlMode, KlParams, RecurrenceSpec,
};
use scpg::cubic::{solve_quartic_real_roots, QuarticCoefficients};
use scpg::experiment::{descent_violations, gradient_bound_violations, generate_instance, telescoping_excess, InstanceSpec};
use scpg::problems::vector::{dot, norm, norm_sq};
use scpg::problems::{check_lipschitz_along_subspace, spectral_norm, CompositeProblem, CubicQuadraticInstance, SparseMatrix, Vector};
use scpg::sketch::{sample, Sketch, SketchKind};
use scpg::solver::{run, CurvatureMode, SolverConfig, StepRule};
use scpg::stream_rng;

fn random_symmetric(n: usize, seed: u64) -> SparseMatrix {
    let mut rng = stream_rng(seed, 11);
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.sample(StandardNormal);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    SparseMatrix::from_dense(&d)
}

fn random_instance(n: usize, m: f64, seed: u64) -> CubicQuadraticInstance {
    let mut rng = stream_rng(seed, 12);
    let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    CubicQuadraticInstance::new(random_symmetric(n, seed), Vector::new(b).unwrap(), m).unwrap()
}

fn gaussian(n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn any_kind() -> impl Strategy<Value = SketchKind> {
    prop_oneof![
        Just(SketchKind::CoordinateBlock),
        Just(SketchKind::RandomOrthonormal),
        Just(SketchKind::GaussianJlt),
        (1usize..3).prop_map(SketchKind::SHashing),
    ]
}

/// s-hashing needs `s ≤ p`.
fn fit(kind: SketchKind, p: usize) -> SketchKind {
    match kind {
        SketchKind::SHashing(s) => SketchKind::SHashing(s.min(p)),
        other => other,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_central_differences(n in 2usize..12, m in 0.01f64..5.0, seed in any::<u64>()) {
        let inst = random_instance(n, m, seed);
        let x = gaussian(n, seed, 1);
        let g = inst.gradient(&x).unwrap();
        let h = 1e-6;
        for i in 0..n {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (inst.objective(&xp).unwrap() - inst.objective(&xm).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "coordinate {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn objective_matches_dense_reference(n in 2usize..12, m in 0.01f64..5.0, seed in any::<u64>()) {
        let inst = random_instance(n, m, seed);
        let x = gaussian(n, seed, 1);
        let a = common::dense(inst.a());
        let f = common::dense_objective(&a, inst.b(), m, &x);
        prop_assert!((inst.objective(&x).unwrap() - f).abs() <= 1e-12 * f.abs().max(1.0));
        let g = common::dense_gradient(&a, inst.b(), m, &x);
        for (u, v) in inst.gradient(&x).unwrap().iter().zip(&g) {
            prop_assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn subspace_curvature_is_a_tight_lipschitz_constant(
        n in 3usize..10, p in 1usize..3, kind in any_kind(), seed in any::<u64>(),
    ) {
        let p = p.min(n);
        let kind = fit(kind, p);
        let inst = random_instance(n, 1.0, seed);
        let u = sample(kind, n, p, seed).unwrap();
        let l_u = inst.smooth_curvature(&u).unwrap();
        let f = |x: &[f64]| inst.smooth_value(x);
        let gf = |x: &[f64]| inst.smooth_gradient(x);
        // The extreme eigenvector of UᵀAU is where a smaller constant fails.
        let sand = u.sandwich(inst.a()).unwrap();
        let eig = sand.clone().symmetric_eigen();
        let top = (0..p).max_by(|&i, &j| eig.eigenvalues[i].abs().total_cmp(&eig.eigenvalues[j].abs())).unwrap();
        let v: Vec<f64> = eig.eigenvectors.column(top).iter().map(|c| 10.0 * c).collect();
        let probes = vec![v];
        prop_assert!(check_lipschitz_along_subspace(f, gf, &u, l_u, 20, &probes, seed));
        prop_assume!(l_u > 1e-6);
        prop_assert!(!check_lipschitz_along_subspace(f, gf, &u, 0.5 * l_u, 0, &probes, seed));
    }

    #[test]
    fn spectral_norm_matches_eigen_oracle_and_scales(n in 2usize..15, c in -4.0f64..4.0, seed in any::<u64>()) {
        prop_assume!(c.abs() > 1e-3);
        let a = random_symmetric(n, seed);
        let est = spectral_norm(&a, 1e-10, 100_000).unwrap();
        let exact = common::dense_eigen_norm(&a);
        prop_assert!(est <= exact * (1.0 + 1e-12));
        prop_assert!((est - exact).abs() <= 1e-6 * exact, "{est} vs {exact}");
        let scaled = spectral_norm(&a.scaled(c), 1e-10, 100_000).unwrap();
        prop_assert!((scaled - c.abs() * est).abs() <= 1e-6 * c.abs() * exact);
    }

    // Bregman distance of (M/6)‖x‖³ dominates (M/12)‖y − x‖³.
    #[test]
    fn cubic_term_is_uniformly_convex(
        n in 1usize..8, m in 0.01f64..10.0, seed in any::<u64>(), scale in 1e-3f64..10.0,
    ) {
        let inst = CubicQuadraticInstance::new(SparseMatrix::zeros(n, n), Vector::zeros(n), m).unwrap();
        let x: Vec<f64> = gaussian(n, seed, 1).iter().map(|v| v * scale).collect();
        let y = gaussian(n, seed, 2);
        let gx = inst.psi_gradient(&x);
        let diff: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let bregman = inst.psi_value(&y) - inst.psi_value(&x) - dot(&gx, &diff);
        let floor = m / 12.0 * norm(&diff).powi(3);
        prop_assert!(bregman >= floor - 1e-12 * bregman.abs().max(1.0), "{bregman} < {floor}");
    }

    // For orthonormal U the curvature of ψ along the subspace is convex in x,
    // so its largest value on a segment sits at an endpoint.
    #[test]
    fn psi_curvature_peaks_at_segment_endpoints(n in 2usize..10, p in 1usize..4, seed in any::<u64>()) {
        let p = p.min(n);
        let inst = CubicQuadraticInstance::new(SparseMatrix::zeros(n, n), Vector::zeros(n), 1.0).unwrap();
        let u = sample(SketchKind::RandomOrthonormal, n, p, seed).unwrap();
        let x = gaussian(n, seed, 1);
        let y = gaussian(n, seed, 2);
        let ends = inst.psi_curvature(&x, &u).unwrap().max(inst.psi_curvature(&y, &u).unwrap());
        for i in 1..20 {
            let t = i as f64 / 20.0;
            let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            prop_assert!(inst.psi_curvature(&z, &u).unwrap() <= ends * (1.0 + 1e-12));
        }
    }

    #[test]
    fn subproblem_quartic_has_one_positive_root(
        h in 1e-3f64..1e3, m in 1e-3f64..1e2, w_sq in 1e-6f64..1e4, xc_sq in 0.0f64..1e2,
    ) {
        let q = QuarticCoefficients::cubic_subproblem(h, m, w_sq, xc_sq);
        let roots = solve_quartic_real_roots(&q).unwrap();
        let pos: Vec<f64> = roots.iter().copied().filter(|r| *r > 0.0).collect();
        prop_assert_eq!(pos.len(), 1, "roots {:?}", roots);
        prop_assert!(pos[0] >= xc_sq.sqrt() * (1.0 - 1e-12));
    }

    // Roots of arbitrarily scaled quartics are accurate up to the rounding
    // floor of evaluating the polynomial there.
    #[test]
    fn quartic_roots_reach_the_rounding_floor(
        c in proptest::array::uniform5(-1e3f64..1e3), scale in -6i32..6,
    ) {
        prop_assume!(c[0].abs() > 1e-9);
        let c4 = c[0] * 10f64.powi(scale);
        let q = QuarticCoefficients::new(c4, c[1], c[2], c[3], c[4]);
        if let Ok(roots) = solve_quartic_real_roots(&q) {
            for r in roots {
                let terms: f64 = q.as_array().iter().rev().enumerate().map(|(k, a)| (a * r.powi(k as i32)).abs()).sum();
                let floor = 64.0 * f64::EPSILON * terms;
                prop_assert!(q.eval(r).abs() <= q.residual_tolerance().max(floor), "root {r} of {:?}", q.as_array());
            }
        }
    }

    #[test]
    fn sketches_are_deterministic_per_seed(n in 2usize..30, p in 1usize..6, kind in any_kind(), seed in any::<u64>()) {
        let p = p.min(n);
        let kind = fit(kind, p);
        let a = sample(kind, n, p, seed).unwrap();
        let b = sample(kind, n, p, seed).unwrap();
        prop_assert_eq!(a.to_dense(), b.to_dense());
    }

    #[test]
    fn sketch_products_match_dense_matrix(n in 2usize..20, p in 1usize..6, kind in any_kind(), seed in any::<u64>()) {
        let p = p.min(n);
        let kind = fit(kind, p);
        let u = sample(kind, n, p, seed).unwrap();
        let ud = u.to_dense();
        let v = gaussian(n, seed, 3);
        let d = gaussian(p, seed, 4);
        let ut_v = ud.transpose() * nalgebra::DVector::from_column_slice(&v);
        let u_d = &ud * nalgebra::DVector::from_column_slice(&d);
        for (a, b) in u.apply_transpose(&v).unwrap().iter().zip(ut_v.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        for (a, b) in u.apply(&d).unwrap().iter().zip(u_d.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        if kind.is_orthonormal() {
            let gram = ud.transpose() * &ud;
            prop_assert!((gram - DMatrix::identity(p, p)).amax() <= 1e-12);
        }
    }

    #[test]
    fn generated_convex_instances_are_psd(n in 5usize..40, m in 1usize..40, seed in any::<u64>()) {
        let mut spec = InstanceSpec::convex(n, m, 1.0, seed);
        spec.density = Some(0.3);
        let inst = generate_instance(&spec).unwrap();
        prop_assert!(inst.a().is_symmetric());
        for t in 0..100 {
            let x = gaussian(n, seed, 100 + t);
            prop_assert!(inst.a().quadratic_form(&x) >= -1e-10 * norm_sq(&x));
        }
    }

    #[test]
    fn gradient_rate_bound_decreases_in_k(
        alpha in 0.01f64..0.99, beta in 0.01f64..0.99, delta in 0.01f64..0.99,
        eta in 1e-4f64..1.0, hf in 0.1f64..100.0, hp in 0.0f64..100.0, gap in 1e-3f64..1e3, k in 0usize..10_000,
    ) {
        let params = BoundParams::new(alpha, beta, delta, eta, hf, hp).unwrap();
        prop_assert!(gradient_rate_bound(&params, gap, k + 1) < gradient_rate_bound(&params, gap, k));
        let a = alignment_count_bound(beta, delta, k);
        let b = alignment_count_bound(beta, delta, k + 1);
        prop_assert!(b.prob_floor >= a.prob_floor && b.threshold > a.threshold);
    }

    #[test]
    fn convex_rate_scales_with_radius_and_decreases(
        beta in 0.01f64..0.9, delta in 0.01f64..0.9, eta in 1e-4f64..1.0, hf in 0.1f64..10.0,
        r in 0.1f64..10.0, extra in 1usize..1000,
    ) {
        let params = BoundParams::new(0.5, beta, delta, eta, hf, 1.0).unwrap();
        let k0 = (1.0 / params.aligned_fraction()).ceil() as usize;
        let k = k0 + extra;
        let b1 = convex_rate_bound(&params, r, k).unwrap();
        let b2 = convex_rate_bound(&params, 2.0 * r, k).unwrap();
        prop_assert!((b2 - 4.0 * b1).abs() <= 1e-12 * b2);
        prop_assert!(convex_rate_bound(&params, r, k + 1).unwrap() < b1);
        prop_assert!(convex_rate_bound(&params, r, k0.saturating_sub(2)).is_err());
    }

    #[test]
    fn kl_rates_decrease_in_k(
        q in 1.05f64..1.95, sigma in 0.1f64..10.0, c in 1e-4f64..0.05, gap in 1e-3f64..10.0, extra in 1usize..500,
    ) {
        for mode in [KlMode::Kl, KlMode::UniformlyConvex] {
            let params = KlParams::new(q, sigma, mode, c, 0.5, 0.1).unwrap();
            let k = 2 + extra;
            let a = kl_rate_bound(&params, gap, k).unwrap();
            prop_assert!(kl_rate_bound(&params, gap, k + 1).unwrap() < a);
            prop_assert!(a < gap);
            let linear = KlParams::new(2.0, sigma.min(1.0), mode, c, 0.5, 0.1).unwrap();
            prop_assert!(kl_rate_bound(&linear, gap, k + 1).unwrap() <= kl_rate_bound(&linear, gap, k).unwrap());
        }
    }

    #[test]
    fn sublinear_recurrence_bound_sits_below_its_tail(zeta in 0.05f64..3.0, d0 in 0.01f64..50.0, k in 1usize..100_000) {
        let spec = RecurrenceSpec { zeta, c: 1.0, delta0: d0 };
        let b = recurrence_rate_bound(&spec, k).unwrap();
        prop_assert!(b <= sublinear_tail_bound(zeta, k) * (1.0 + 1e-12));
        prop_assert!(recurrence_rate_bound(&spec, k + 1).unwrap() <= b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // Theory-mode runs on small dense instances: descent per step, the
    // telescoped sum and the gradient bound at aligned steps.
    #[test]
    fn theory_runs_descend(
        n in 4usize..16, p in 1usize..4, kind in any_kind(), convex in any::<bool>(), seed in any::<u64>(),
    ) {
        let p = p.min(n);
        let kind = fit(kind, p);
        let inst = if convex {
            let b = random_symmetric(n, seed);
            let a = b.gram();
            CubicQuadraticInstance::new(a, Vector::new(gaussian(n, seed, 5)).unwrap(), 1.0).unwrap()
        } else {
            random_instance(n, 1.0, seed)
        };
        let mode = if convex { CurvatureMode::ConvexAlongSubspaces } else { CurvatureMode::General };
        let mut config = SolverConfig::new(kind, p, StepRule::theory(mode));
        config.max_iter = 300;
        config.tol = 1e-8;
        config.align_period = 1;
        config.alpha = 0.3;
        config.seed = seed;
        let x0 = gaussian(n, seed, 6);
        let trace = run(&inst, &x0, &config).unwrap();
        prop_assert_eq!(descent_violations(&trace), 0);
        prop_assert!(telescoping_excess(&trace).unwrap() <= 1e-9);
        if kind.is_orthonormal() {
            prop_assert_eq!(gradient_bound_violations(&trace, config.alpha, 2), 0);
        }
    }
}

#[test]
fn gaussian_sketch_entries_have_variance_one_over_p() {
    let (n, p, draws) = (40, 8, 400);
    let (mut sum, mut sum_sq, mut count) = (0.0, 0.0, 0.0);
    for s in 0..draws {
        let u = sample(SketchKind::GaussianJlt, n, p, s).unwrap().to_dense();
        for v in u.iter() {
            sum += v;
            sum_sq += v * v;
            count += 1.0;
        }
    }
    let mean = sum / count;
    let var = sum_sq / count - mean * mean;
    // 128k entries: the standard error of the variance is about 0.004/p.
    assert!(mean.abs() < 5e-3 / (p as f64).sqrt(), "mean {mean}");
    assert!((var * p as f64 - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn block_sketch_hits_each_coordinate_with_probability_p_over_n() {
    let (n, p, draws) = (20, 5, 20_000);
    let mut hits = vec![0usize; n];
    for s in 0..draws {
        let u = sample(SketchKind::CoordinateBlock, n, p, s).unwrap();
        let idx = u.block_indices().unwrap();
        assert_eq!(idx.len(), p);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        for &i in idx {
            hits[i] += 1;
        }
    }
    let expected = draws as f64 * p as f64 / n as f64;
    let sd = (expected * (1.0 - p as f64 / n as f64)).sqrt();
    for (i, &h) in hits.iter().enumerate() {
        assert!((h as f64 - expected).abs() < 5.0 * sd, "coordinate {i}: {h} vs {expected}");
    }
}

#[test]
fn s_hashing_rows_have_exactly_s_entries() {
    for s in 1..=4 {
        let u = sample(SketchKind::SHashing(s), 50, 6, s as u64).unwrap().to_dense();
        let mag = 1.0 / (s as f64).sqrt();
        for row in u.row_iter() {
            let nz: Vec<f64> = row.iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), s);
            assert!(nz.iter().all(|v| (v.abs() - mag).abs() < 1e-15));
        }
    }
}

#[test]
fn explicit_block_sketch_rejects_bad_indices() {
    assert!(Sketch::block(4, vec![0, 4]).is_err());
    assert!(Sketch::block(4, vec![1, 1]).is_err());
}
