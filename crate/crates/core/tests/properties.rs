use gx2::approx::{
    ellipse_cdf_log10, ellipse_inv_log10, ellipse_valid_range, pearson_cdf, pearson_pdf,
    tail_cdf_log10, tail_dominant, tail_pdf_log10,
};
use gx2::series::{imhof_cdf, imhof_pdf, ruben_cdf, ruben_coeffs, QuadratureSpec};
use gx2::{
    charfun, gx2_to_quad, gx2inv, moments, quad_to_gx2, EvalSettings, Gx2Params, Method,
    NormalSpec, Prob, Side,
};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

prop_compose! {
    fn any_params()(n in 1usize..4)(
        w in prop::collection::vec(prop_oneof![-3.0..-0.1f64, 0.1..3.0f64], n),
        k in prop::collection::vec(1u32..4, n),
        lambda in prop::collection::vec(0.0..4.0f64, n),
        s in prop_oneof![Just(0.0), -1.0..1.0f64],
        m in -2.0..2.0f64,
    ) -> Gx2Params {
        Gx2Params::new(w, k, lambda, s, m).unwrap()
    }
}

prop_compose! {
    fn elliptical()(n in 1usize..4)(
        w in prop::collection::vec(0.1..3.0f64, n),
        k in prop::collection::vec(1u32..4, n),
        lambda in prop::collection::vec(0.0..4.0f64, n),
        m in -2.0..2.0f64,
        neg in any::<bool>(),
    ) -> Gx2Params {
        let sign = if neg { -1.0 } else { 1.0 };
        Gx2Params::new(w.iter().map(|v| sign * v).collect(), k, lambda, 0.0, m).unwrap()
    }
}

/// Weight-sorted (w, k, λ) blocks after merging equal weights.
fn blocks(p: &Gx2Params) -> Vec<(f64, u32, f64)> {
    let q = p.merged();
    let mut b: Vec<_> = (0..q.w.len())
        .map(|i| (q.w[i], q.k[i], q.lambda[i]))
        .collect();
    b.sort_by(|a, c| a.0.total_cmp(&c.0));
    b
}

/// x at body probabilities, found by bisection on the Imhof cdf.
fn body_points(p: &Gx2Params) -> Vec<f64> {
    let mo = moments(p);
    let sd = mo.m2.sqrt();
    let spec = QuadratureSpec::default();
    [0.01, 0.2, 0.5, 0.8, 0.99]
        .iter()
        .map(|&q| {
            let (mut a, mut b) = (mo.m1 - 20.0 * sd, mo.m1 + 20.0 * sd);
            for _ in 0..60 {
                let c = 0.5 * (a + b);
                if imhof_cdf(p, c, &spec).unwrap().value < q {
                    a = c;
                } else {
                    b = c;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn quadratic_form_roundtrip(p in any_params()) {
        let q = quad_to_gx2(&gx2_to_quad(&p), &NormalSpec::standard(p.dim())).unwrap();
        let (a, b) = (blocks(&p), blocks(&q));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.0 - y.0).abs() < 1e-9 && x.1 == y.1 && (x.2 - y.2).abs() < 1e-9, "{:?} {:?}", a, b);
        }
        prop_assert!((p.s.abs() - q.s.abs()).abs() < 1e-9 && (p.m - q.m).abs() < 1e-9);
    }

    #[test]
    fn charfun_is_hermitian_and_bounded(p in any_params(), t in -50.0..50.0f64) {
        let (a, b) = (charfun(&p, t), charfun(&p, -t));
        prop_assert!((a - b.conj()).norm() <= 1e-12 * a.norm().max(1e-300));
        prop_assert!(a.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn moments_follow_the_offset(p in any_params(), delta in -10.0..10.0f64) {
        let mut q = p.clone();
        q.m += delta;
        let (a, b) = (moments(&p), moments(&q));
        prop_assert!((b.m1 - a.m1 - delta).abs() < 1e-12 * (1.0 + a.m1.abs() + delta.abs()));
        prop_assert_eq!(a.m2, b.m2);
        prop_assert_eq!(a.m3, b.m3);
        prop_assert!(a.m2 > 0.0);
    }

    #[test]
    fn ruben_coefficients_are_a_subprobability(p in elliptical()) {
        let r = ruben_coeffs(&p, 1000, None).unwrap();
        prop_assert!(r.a.iter().all(|&a| a >= 0.0));
        prop_assert!(r.partial_sum <= 1.0 + 1e-12);
        let short = ruben_coeffs(&p, 10, None).unwrap();
        prop_assert!(short.partial_sum <= r.partial_sum + 1e-15);
    }

    #[test]
    fn flip_symmetry(p in any_params(), z in -2.0..2.0f64) {
        let spec = QuadratureSpec::default();
        let mo = moments(&p);
        let x = mo.m1 + z * mo.m2.sqrt();
        let a = imhof_cdf(&p, x, &spec).unwrap();
        let b = imhof_cdf(&p.flipped(), -x, &spec).unwrap();
        prop_assert!((a.value + b.value - 1.0).abs() <= 1e-9 + a.error + b.error, "{} {}", a.value, b.value);
    }

    #[test]
    fn pearson_exact_on_one_central_term(c in prop_oneof![-5.0..-0.05f64, 0.05..5.0f64], k in 1u32..12, m in -3.0..3.0f64, u in 0.02..0.98f64) {
        let p = Gx2Params::new(vec![c], vec![k], vec![0.0], 0.0, m).unwrap();
        let chi = ChiSquared::new(k as f64).unwrap();
        let y = chi.inverse_cdf(u);
        let x = m + c * y;
        let f = if c > 0.0 { chi.cdf(y) } else { chi.sf(y) };
        let got = pearson_cdf(&p, x).unwrap();
        prop_assert!((got - f).abs() <= 1e-12 * f, "{} {}", got, f);
        let dens = chi.pdf(y) / c.abs();
        let gotd = pearson_pdf(&p, x).unwrap();
        prop_assert!((gotd - dens).abs() <= 1e-12 * dens, "{} {}", gotd, dens);
    }

    #[test]
    fn ellipse_is_log_linear_and_invertible(p in elliptical(), a in -30.0..-2.0f64, b in -30.0..-2.0f64) {
        let (fa, fb) = (ellipse_cdf_log10(&p, a).unwrap(), ellipse_cdf_log10(&p, b).unwrap());
        let d = p.dof() as f64;
        prop_assert!((fa.log10_value - fb.log10_value - 0.5 * d * (a - b)).abs() < 1e-9);
        let back = ellipse_inv_log10(&p, fa.log10_value).unwrap();
        let again = ellipse_cdf_log10(&p, back).unwrap().log10_value;
        prop_assert!((again - fa.log10_value).abs() <= 1e-12 * fa.log10_value.abs());
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn ruben_sides_sum_to_one(p in elliptical(), z in -1.5..3.0f64) {
        let mo = moments(&p);
        let x = mo.m1 + z * mo.m2.sqrt();
        let lo = ruben_cdf(&p, x, 1000, Side::Lower).unwrap();
        let up = ruben_cdf(&p, x, 1000, Side::Upper).unwrap();
        if lo > 1e-10 && up > 1e-10 {
            prop_assert!((lo + up - 1.0).abs() < 1e-12, "{} {}", lo, up);
        }
    }

    #[test]
    fn ruben_is_monotone(p in elliptical()) {
        let mo = moments(&p);
        let sd = mo.m2.sqrt();
        let mut prev = 0.0;
        for i in 0..1000 {
            let x = mo.m1 - 3.0 * sd + 12.0 * sd * i as f64 / 999.0;
            let v = ruben_cdf(&p, x, 1000, Side::Lower).unwrap();
            prop_assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn imhof_agrees_with_ruben_in_the_body(p in elliptical()) {
        let spec = QuadratureSpec::default();
        for x in body_points(&p) {
            let a = imhof_cdf(&p, x, &spec).unwrap().value;
            let b = ruben_cdf(&p, x, 1000, Side::Lower).unwrap();
            prop_assert!((a - b).abs() < 1e-8, "{} {} {}", x, a, b);
        }
    }

    #[test]
    fn imhof_density_is_the_derivative(p in any_params()) {
        let spec = QuadratureSpec::default();
        let sd = moments(&p).m2.sqrt();
        for x in body_points(&p) {
            // keep the stencil clear of a singular support end
            let room = if p.finite_tail_side().is_some() { (x - p.m).abs() } else { sd };
            let h = 1e-4 * sd.min(room);
            let f = imhof_pdf(&p, x, &spec).unwrap().value;
            let d = (imhof_cdf(&p, x + h, &spec).unwrap().value - imhof_cdf(&p, x - h, &spec).unwrap().value) / (2.0 * h);
            prop_assert!((f - d).abs() <= 1e-6f64.max(1e-4 * f), "{} {} {}", x, f, d);
        }
    }

    #[test]
    fn ellipse_bound_contains_ruben(p in elliptical()) {
        let q = if p.w[0] < 0.0 { p.flipped() } else { p.clone() };
        let xmax = ellipse_valid_range(&q, 0.05).unwrap();
        for i in 0..8 {
            let off = xmax * 10f64.powf(-0.5 * i as f64);
            let e = ellipse_cdf_log10(&q, off.log10()).unwrap();
            let r = ruben_cdf(&q, q.m + off, 1000, Side::Lower).unwrap();
            if r > 1e-300 {
                let f = 10f64.powf(e.log10_value);
                let b = e.rel_err() * (1.0 + 1e-9) + 1e-9;
                prop_assert!(r >= f * (1.0 - b) && r <= f * (1.0 + b), "{} {} {}", off, r, f);
            }
        }
    }

    #[test]
    fn tail_pdf_and_cdf_meet_far_out(p in any_params()) {
        let mo = moments(&p);
        let x = 10.0 * mo.m1.abs() + 100.0 * mo.m2.sqrt();
        for (side, x) in [(Side::Upper, x), (Side::Lower, -x)] {
            if tail_dominant(&p, side).is_err() {
                continue;
            }
            let c = tail_cdf_log10(&p, x, side).unwrap().log10_value;
            let f = tail_pdf_log10(&p, x).unwrap().log10_value;
            prop_assert!((c - f).abs() < 1.0, "{:?} {} {}", side, c, f);
        }
    }

    #[test]
    fn inverse_is_monotone(p in any_params(), a in 0.01..0.99f64, b in 0.01..0.99f64) {
        let st = EvalSettings::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let xa = gx2inv(&p, Prob::Linear(lo), Side::Lower, Method::Imhof, &st).unwrap();
        let xb = gx2inv(&p, Prob::Linear(hi), Side::Lower, Method::Imhof, &st).unwrap();
        prop_assert!(xa <= xb, "{} {}", xa, xb);
    }
}

#[test]
fn ellipse_tail_tracks_ruben_towards_the_end() {
    // the asymptote's error shrinks geometrically on the infinite side
    let p = Gx2Params::new(
        vec![3.0, 1.0, 2.0],
        vec![4, 2, 3],
        vec![7.0, 0.0, 2.0],
        0.0,
        0.0,
    )
    .unwrap();
    let mut prev = f64::INFINITY;
    for x in [50.0, 100.0, 200.0, 400.0, 800.0] {
        let t = tail_cdf_log10(&p, x, Side::Upper).unwrap().log10_value;
        let r = ruben_cdf(&p, x, 4000, Side::Upper).unwrap().log10();
        let gap = (t - r).abs();
        assert!(gap < prev, "{x} {gap}");
        prev = gap;
    }
}
