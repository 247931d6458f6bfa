use super::*;
use crate::params::NormalSpec;
use crate::series::RubenExpansion;
use crate::special::norm_sf;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn par(w: &[f64], k: &[u32], l: &[f64], s: f64, m: f64) -> Gx2Params {
    Gx2Params::new(w.to_vec(), k.to_vec(), l.to_vec(), s, m).unwrap()
}

fn within(v: &LogProb, truth: f64, k: f64) -> bool {
    (v.value() - truth).abs() <= k * v.sem() + 1e-15
}

#[test]
fn roots_examples() {
    let rq = RayQuadratic {
        q2: 1.0,
        q1: 0.0,
        q0: 0.0,
        c: 4.0,
    };
    assert_eq!(
        ray_roots(&rq),
        RayRoots::Two {
            z: [-2.0, 2.0],
            slope: 4.0
        }
    );
    let rq = RayQuadratic {
        q2: 0.0,
        q1: 2.0,
        q0: 1.0,
        c: 5.0,
    };
    assert_eq!(ray_roots(&rq), RayRoots::One { z: 2.0, slope: 2.0 });
    let rq = RayQuadratic {
        q2: 1.0,
        q1: -2.0,
        q0: 2.0,
        c: 1.0,
    };
    assert_eq!(rq.discriminant(), 0.0);
    assert_eq!(ray_roots(&rq), RayRoots::None);
    // a dense scan finds no sign change either
    let g = |z: f64| z * z - 2.0 * z + 1.0;
    assert!((0..20001).all(|i| g(-10.0 + i as f64 * 1e-3) >= 0.0));
    let rq = RayQuadratic {
        q2: 0.0,
        q1: 0.0,
        q0: 1.0,
        c: 0.0,
    };
    assert_eq!(ray_roots(&rq), RayRoots::None);
}

#[test]
fn roots_are_stable_under_cancellation() {
    let rq = RayQuadratic {
        q2: 1e-10,
        q1: 1.0,
        q0: -1.0,
        c: 0.0,
    };
    match ray_roots(&rq) {
        RayRoots::Two { z, slope } => {
            assert!((z[1] - 1.0).abs() < 1e-9, "{z:?}");
            for r in z {
                assert!(((2.0 * rq.q2 * r + rq.q1).abs() - slope).abs() < 1e-9 * slope);
            }
        }
        r => panic!("{r:?}"),
    }
}

#[test]
fn chi_tail_examples() {
    for z in [3.0, 10.0, 50.0] {
        let up = chi_tail_log10(2, z, Side::Upper);
        assert!((up + z * z / (2.0 * LN_10)).abs() < 1e-12 * up.abs().max(1.0));
    }
    let z: f64 = 1e-3;
    assert!((chi_tail_log10(2, z, Side::Lower) - (2.0 * z.log10() - 2f64.log10())).abs() < 1e-12);
    // extended-precision oracle for the chi_3 survival at 40
    let oracle = -345.931_314_289_748_65;
    let v = chi_tail_log10(3, 40.0, Side::Upper);
    assert!((v - oracle).abs() < 1e-3 * oracle.abs(), "{v}");
}

#[test]
fn log_sum_exp10_examples() {
    assert!((log_sum_exp10(&[-400.0, -400.0]) + 399.698_970_004_336).abs() < 1e-9);
    assert!((log_sum_exp10(&[-400.0, -10000.0]) + 400.0).abs() < 1e-12);
    assert!((log_sum_exp10(&[-1.0, -2.0, -3.0]) + 0.954_677_021_213_341_9).abs() < 1e-9);
    assert_eq!(log_sum_exp10(&[]), f64::NEG_INFINITY);
}

#[test]
fn line_mass_matches_chi_square() {
    // mass of |z| < r on a line is the chi cdf at r
    for d in [1.0, 3.0, 7.0] {
        let r: f64 = 1.7;
        let m = ln_line_mass(d, -r, r).exp();
        assert!((m - crate::special::chi2_cdf(d, r * r)).abs() < 1e-13);
        let half = ln_line_mass(d, 0.0, f64::INFINITY).exp();
        assert!((half - 0.5).abs() < 1e-15);
    }
}

#[test]
fn published_upper_tail_by_quadrature() {
    let p = par(&[0.7, 0.3], &[1, 1], &[6.0, 2.0], 0.0, 0.0);
    let v = ray_cdf(
        &p,
        15.0,
        Side::Upper,
        &RayIntegrator::quadrature(1e-10),
        Precision::Basic,
    )
    .unwrap();
    assert!((v.value() - 0.022343).abs() <= 1e-6, "{}", v.value());
}

#[test]
fn normal_median_and_density() {
    let p = Gx2Params::normal(1.0, 0.0).unwrap();
    let mc = RayIntegrator::monte_carlo(10_000, 3);
    let c = ray_cdf(&p, 0.0, Side::Lower, &mc, Precision::Basic).unwrap();
    assert!(within(&c, 0.5, 3.0) || (c.value() - 0.5).abs() < 1e-12);
    let q = ray_cdf(
        &p,
        0.0,
        Side::Lower,
        &RayIntegrator::quadrature(1e-10),
        Precision::Basic,
    )
    .unwrap();
    assert!((q.value() - 0.5).abs() < 1e-12);
    let f = ray_pdf(&p, 0.0, &mc, Precision::Basic).unwrap();
    assert!((f.value() - 0.398_942_280_401_432_7).abs() < 1e-12 + 3.0 * f.sem());
}

#[test]
fn far_tail_density_in_log_mode() {
    let p = par(&[0.7, 0.3], &[1, 1], &[6.0, 2.0], 0.0, 0.0);
    let mc = RayIntegrator::monte_carlo(1_000_000, 11);
    let f = ray_pdf(&p, 4e3, &mc, Precision::Log).unwrap();
    assert_eq!(f.mode, LogMode::LogFallback);
    assert!((f.log10_value + 1163.7).abs() < 0.05, "{}", f.log10_value);
    let q = ray_pdf(&p, 4e3, &RayIntegrator::quadrature(1e-8), Precision::Log).unwrap();
    assert!((q.log10_value + 1163.7).abs() < 0.05, "{}", q.log10_value);
}

#[test]
fn density_matches_ruben() {
    let p = par(&[0.5, 0.4, 0.1], &[1, 2, 1], &[1.0, 0.6, 0.8], 0.0, 0.0);
    let truth = RubenExpansion::new(&p, 500, None).unwrap().pdf(6.0).value;
    let mc = ray_pdf(
        &p,
        6.0,
        &RayIntegrator::monte_carlo(10_000_000, 5),
        Precision::Basic,
    )
    .unwrap();
    assert!(
        within(&mc, truth, 3.0),
        "{} ± {} vs {truth}",
        mc.value(),
        mc.sem()
    );
    let q = ray_pdf(&p, 6.0, &RayIntegrator::quadrature(1e-9), Precision::Basic).unwrap();
    assert!((q.value() - truth).abs() < 1e-7 * truth);
}

#[test]
fn lower_plus_upper_is_one() {
    let p = par(&[1.0, -2.0], &[1, 1], &[0.5, 1.0], 0.7, 0.3);
    let q = RayIntegrator::quadrature(1e-8);
    for x in [-3.0, 0.0, 2.5] {
        let lo = ray_cdf(&p, x, Side::Lower, &q, Precision::Basic)
            .unwrap()
            .value();
        let up = ray_cdf(&p, x, Side::Upper, &q, Precision::Basic)
            .unwrap()
            .value();
        assert!((lo + up - 1.0).abs() < 1e-9, "{x}: {lo} + {up}");
    }
    let mc = RayIntegrator::monte_carlo(20_000, 9);
    let p7 = par(
        &[1.0, -2.0, 0.5, 0.3],
        &[2, 2, 1, 3],
        &[0.5, 0.0, 1.0, 0.0],
        0.0,
        0.3,
    );
    let lo = ray_cdf(&p7, 1.0, Side::Lower, &mc, Precision::Basic)
        .unwrap()
        .value();
    let up = ray_cdf(&p7, 1.0, Side::Upper, &mc, Precision::Basic)
        .unwrap()
        .value();
    assert!((lo + up - 1.0).abs() < 1e-12);
}

#[test]
fn dense_form_agrees_with_diagonal() {
    let p = par(&[1.0, -0.5], &[1, 1], &[1.0, 0.5], 0.4, -0.2);
    let q = gx2_to_quad(&p);
    let qi = RayIntegrator::monte_carlo(100_000, 6);
    let a = ray_cdf_many(&p, &[0.5], Side::Lower, &qi, Precision::Basic).unwrap()[0].value();
    let b = quad_ray_cdf(&q, &[0.5], Side::Lower, &qi, Precision::Basic).unwrap()[0].value();
    assert!((a - b).abs() < 1e-12);
    let a = ray_pdf(&p, 0.5, &qi, Precision::Basic).unwrap().value();
    let b = quad_ray_pdf(&q, &[0.5], &qi, Precision::Basic).unwrap()[0].value();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn mc_is_deterministic_across_thread_counts() {
    let p = par(&[0.2, 0.1, -0.4], &[3, 2, 2], &[0.0, 1.0, 0.5], 0.0, 0.0);
    let mc = RayIntegrator::monte_carlo(50_000, 42);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                (
                    ray_cdf_many(&p, &[-1.0, 0.5, 2.0], Side::Upper, &mc, Precision::Log).unwrap(),
                    ray_pdf_many(&p, &[0.5], &mc, Precision::Basic).unwrap(),
                )
            })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn sem_scales_with_rays() {
    let p = par(&[0.6, 0.3, 0.1], &[2, 2, 2], &[0.0; 3], 0.0, 0.0);
    let sem = |n: usize| {
        ray_cdf(
            &p,
            2.0,
            Side::Upper,
            &RayIntegrator::monte_carlo(n, 7),
            Precision::Basic,
        )
        .unwrap()
        .sem()
    };
    let (a, b, c) = (sem(10_000), sem(100_000), sem(1_000_000));
    for r in [a / b, b / c] {
        let ratio = r / 10f64.sqrt();
        assert!((0.5..=2.0).contains(&ratio), "{a} {b} {c}");
    }
}

#[test]
fn integrator_checks() {
    let p = par(&[1.0], &[5], &[0.0], 0.0, 0.0);
    assert!(ray_cdf(
        &p,
        1.0,
        Side::Lower,
        &RayIntegrator::quadrature(1e-8),
        Precision::Basic
    )
    .is_err());
    assert!(ray_cdf(
        &p,
        1.0,
        Side::Lower,
        &RayIntegrator::monte_carlo(50, 1),
        Precision::Basic
    )
    .is_err());
}

#[test]
fn norm_fun_half_space_and_tail() {
    let normal = NormalSpec::standard(3);
    let f = |x: &[f64]| x[0];
    let qi = RayIntegrator::quadrature(1e-9);
    let cfg = RootConfig::default();
    let c = norm_fun_cdf(&f, &normal, 0.0, Side::Lower, &qi, Precision::Basic, &cfg).unwrap();
    assert!((c.value() - 0.5).abs() < 1e-9);
    let t = norm_fun_cdf(&f, &normal, 5.0, Side::Upper, &qi, Precision::Basic, &cfg).unwrap();
    assert!(
        (t.value() - norm_sf(5.0)).abs() < 1e-6 * norm_sf(5.0),
        "{}",
        t.value()
    );
    let mc = RayIntegrator::monte_carlo(100_000, 2);
    let t = norm_fun_cdf(&f, &normal, 5.0, Side::Upper, &mc, Precision::Basic, &cfg).unwrap();
    assert!(within(&t, 2.8665e-7, 3.0) || (t.value() - 2.8665e-7).abs() < 1e-10);
}

#[test]
fn norm_fun_density_of_a_coordinate() {
    let normal = NormalSpec::standard(3);
    let f = |x: &[f64]| x[0];
    let grad = |_: &[f64], g: &mut [f64]| {
        g.fill(0.0);
        g[0] = 1.0;
    };
    // at c = f(μ) every root sits at the origin, where the line density vanishes
    let truth = crate::special::norm_pdf(0.5);
    let qi = RayIntegrator::quadrature(1e-6);
    let mc = RayIntegrator::monte_carlo(20_000, 4);
    let cfg = RootConfig::default();
    for gr in [None, Some(&grad as GradFnRef)] {
        let v = norm_fun_pdf(&f, gr, &normal, 0.5, &qi, Precision::Basic, &cfg).unwrap();
        assert!((v.value() - truth).abs() < 1e-5, "{}", v.value());
        let v = norm_fun_pdf(&f, gr, &normal, 0.5, &mc, Precision::Basic, &cfg).unwrap();
        assert!(within(&v, truth, 3.0), "{} ± {}", v.value(), v.sem());
    }
}

type GradFnRef<'a> = &'a (dyn Fn(&[f64], &mut [f64]) + Sync);

#[test]
fn norm_fun_reproduces_the_quadratic() {
    let p = par(&[1.0, -0.6], &[2, 1], &[0.8, 0.3], 0.5, 0.2);
    let q = gx2_to_quad(&p);
    let f = |x: &[f64]| q.eval(&DVector::from_column_slice(x));
    let grad = |x: &[f64], g: &mut [f64]| {
        let v = DVector::from_column_slice(x);
        let gv = 2.0 * &q.q2 * v + &q.q1;
        g.copy_from_slice(gv.as_slice());
    };
    let normal = NormalSpec::standard(q.dim());
    // identical directions; near-tangent rays whose roots share a scan cell differ
    let qi = RayIntegrator::monte_carlo(20_000, 12);
    let cfg = RootConfig::default();
    for x in [-1.0, 1.5] {
        let a = norm_fun_cdf(&f, &normal, x, Side::Lower, &qi, Precision::Basic, &cfg).unwrap();
        let b = ray_cdf(&p, x, Side::Lower, &qi, Precision::Basic).unwrap();
        assert!(
            (a.value() - b.value()).abs() <= 3.0 * b.sem(),
            "{a:?} {b:?}"
        );
        let a = norm_fun_pdf(&f, Some(&grad), &normal, x, &qi, Precision::Basic, &cfg).unwrap();
        let b = ray_pdf(&p, x, &qi, Precision::Basic).unwrap();
        assert!(
            (a.value() - b.value()).abs() <= 3.0 * b.sem(),
            "{a:?} {b:?}"
        );
    }
}

#[test]
fn norm_fun_cubic_against_histogram() {
    let mu = DVector::from_vec(vec![4.0, -2.0, 3.0, 2.0]);
    let sigma = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, -1.0, 0.0, 0.0, 8.0, 4.0, 0.0, -1.0, 4.0, 8.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        ],
    );
    let normal = NormalSpec::new(mu, sigma).unwrap();
    let f = |x: &[f64]| x[0].powi(3) + x[1] * x[1] - x[2] * x[3];
    let grad = |x: &[f64], g: &mut [f64]| {
        g[0] = 3.0 * x[0] * x[0];
        g[1] = 2.0 * x[1];
        g[2] = -x[3];
        g[3] = -x[2];
    };

    let n = 5_000_000;
    let (lo, width, bins) = (-100.0, 2.0, 300);
    let mut hist = vec![0u32; bins];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut z = [0.0; 4];
    let mut x = [0.0; 4];
    for _ in 0..n {
        z.iter_mut()
            .for_each(|v| *v = StandardNormal.sample(&mut rng));
        for i in 0..4 {
            x[i] = normal.mu[i]
                + (0..4)
                    .map(|j| normal.sqrt_sigma[(i, j)] * z[j])
                    .sum::<f64>();
        }
        let b = ((f(&x) - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            hist[b as usize] += 1;
        }
    }

    let mc = RayIntegrator::monte_carlo(20_000, 8);
    let cfg = RootConfig::default();
    let mut checked = 0;
    for b in (0..bins).step_by(15) {
        if hist[b] < 1000 {
            continue;
        }
        let c = lo + (b as f64 + 0.5) * width;
        let h = hist[b] as f64 / (n as f64 * width);
        let v = norm_fun_pdf(&f, Some(&grad), &normal, c, &mc, Precision::Basic, &cfg).unwrap();
        assert!(v.value() > 0.0);
        assert!(
            (v.value() - h).abs() <= 0.05 * h + 3.0 * v.sem(),
            "c={c}: {} ± {} vs {h}",
            v.value(),
            v.sem()
        );
        checked += 1;
    }
    assert!(checked >= 5);
}
