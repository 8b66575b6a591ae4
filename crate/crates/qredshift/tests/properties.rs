use num_complex::Complex64;
use proptest::prelude::*;
use qredshift::overlap::{overlap_exact, overlap_perturbative, SpectralFunctionals};
use qredshift::quad::{inner_product, integrate, l2_distance, QuadratureSettings, Window};
use qredshift::spectra::{RedshiftFactor, SpectralMode};

fn settings() -> QuadratureSettings {
    QuadratureSettings::default()
}

fn mode_strategy() -> impl Strategy<Value = SpectralMode> {
    (6.0..25.0_f64, 0.5..2.0_f64, -2.0..2.0_f64, -0.05..0.05_f64)
        .prop_filter_map("support guard", |(x0, sg, phi, beta)| {
            SpectralMode::gaussian_chirp(x0 * sg, sg, phi, beta).ok()
        })
}

fn synthetic_functionals() -> impl Strategy<Value = SpectralFunctionals> {
    (-20.0..20.0_f64, 0.26..2000.0_f64).prop_map(|(kappa, excess)| {
        let mu_squared = kappa * kappa + excess;
        SpectralFunctionals {
            k: Complex64::new(-0.5, kappa),
            kappa,
            mu_squared,
            kappa_opt: (mu_squared - 0.25).max(0.0).sqrt(),
            omega_bar: 10.0,
            variance_term: 0.0,
            gradient_term: mu_squared - kappa * kappa,
            kappa_polar: None,
            mu_squared_polar: None,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    // The two second-order forms differ only at third order, with a uniform
    // coefficient bound.
    #[test]
    fn perturbative_forms_agree(f in synthetic_functionals(), eps in -0.1..0.1_f64) {
        let p = overlap_perturbative(&f, eps);
        let bound = 10.0 * eps.abs().powi(3) * (1.0 + f.kappa.abs() + f.mu_squared).powi(2);
        prop_assert!((p.delta_poly - p.delta_exp).norm() <= bound.max(1e-300));
    }

    #[test]
    fn perturbative_magnitude_never_exceeds_one(f in synthetic_functionals(), eps in -0.15..0.15_f64) {
        let p = overlap_perturbative(&f, eps);
        prop_assert!(p.delta_exp.norm() <= 1.0 + 1e-12);
        prop_assert!(p.magnitude_second_order_coefficient >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadrature_is_linear(a in -3.0..3.0_f64, b in -3.0..3.0_f64, k in 1.0..6.0_f64) {
        let s = settings();
        let w = Window::Interval { lo: -8.0, hi: 8.0 };
        let f = |x: f64| Complex64::new((-x * x / 2.0).exp(), 0.0);
        let g = move |x: f64| Complex64::new(0.0, (k * x).cos() * (-x * x / 3.0).exp());
        let fv = integrate(f, w, &s).unwrap().value;
        let gv = integrate(g, w, &s).unwrap().value;
        let combo = integrate(|x| f(x) * a + g(x) * b, w, &s).unwrap().value;
        let scale = fv.norm() * a.abs() + gv.norm() * b.abs() + 1.0;
        prop_assert!((combo - (fv * a + gv * b)).norm() < 1e-9 * scale);
    }

    #[test]
    fn inner_products_conjugate_under_swap(f in mode_strategy(), g in mode_strategy()) {
        let s = settings();
        let fg = inner_product(&f, &g, &s).unwrap().value;
        let gf = inner_product(&g, &f, &s).unwrap().value;
        prop_assert!((fg - gf.conj()).norm() < 1e-9);
    }

    #[test]
    fn redshift_round_trip_returns_the_mode(f in mode_strategy(), chi in 0.4..2.5_f64) {
        let s = settings();
        let c = RedshiftFactor::new(chi).unwrap();
        let back = f.redshift(c).redshift(c.inverse());
        prop_assert!(l2_distance(&f, &back, &s).unwrap() <= 1e-9);
    }

    #[test]
    fn overlap_magnitude_is_bounded_by_one(f in mode_strategy(), chi in 0.5..2.0_f64) {
        let s = settings();
        let r = overlap_exact(&f, RedshiftFactor::new(chi).unwrap(), &s).unwrap();
        prop_assert!(r.magnitude <= 1.0 + 1e-8);
    }

    // Both directions of the link see the same distinguishability.
    #[test]
    fn overlap_magnitude_is_symmetric_in_direction(f in mode_strategy(), chi in 1.05..2.0_f64) {
        let s = settings();
        let fwd = overlap_exact(&f, RedshiftFactor::new(chi).unwrap(), &s).unwrap();
        let rev = overlap_exact(&f, RedshiftFactor::new(1.0 / chi).unwrap(), &s).unwrap();
        prop_assert!((fwd.magnitude - rev.magnitude).abs() < 1e-8);
    }

    #[test]
    fn redshift_preserves_the_norm(f in mode_strategy(), chi in 0.4..2.5_f64) {
        let s = settings();
        let g = f.redshift(RedshiftFactor::new(chi).unwrap());
        let n = qredshift::quad::l2_norm_sq(&g, &s).unwrap().value.re;
        prop_assert!((n - 1.0).abs() < 1e-9);
    }
}
