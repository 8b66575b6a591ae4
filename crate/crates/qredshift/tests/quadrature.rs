use num_complex::Complex64;
use qredshift::quad::{
    inner_product, integrate, integrate_with_breakpoints, l2_norm_sq, mode_window, QuadratureError,
    QuadratureSettings, Window, WindowPolicy,
};
use qredshift::spectra::SpectralMode;

fn settings() -> QuadratureSettings {
    QuadratureSettings::default()
}

fn re(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> Complex64 {
    move |x| Complex64::new(f(x), 0.0)
}

#[test]
fn gaussian_integral_matches_sqrt_pi() {
    let r = integrate(
        re(|x| (-x * x).exp()),
        Window::Interval {
            lo: -10.0,
            hi: 10.0,
        },
        &settings(),
    )
    .unwrap();
    assert!(r.converged);
    assert!((r.value.re - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    assert!(r.value.im.abs() < 1e-14);
}

#[test]
fn complex_exponential_has_exact_antiderivative() {
    // ∫₀¹ e^{ix} dx = sin 1 + i(1 − cos 1)
    let r = integrate(
        |x| Complex64::new(0.0, x).exp(),
        Window::Interval { lo: 0.0, hi: 1.0 },
        &settings(),
    )
    .unwrap();
    assert!((r.value.re - 1.0_f64.sin()).abs() < 1e-13);
    assert!((r.value.im - (1.0 - 1.0_f64.cos())).abs() < 1e-13);
}

#[test]
fn error_estimate_bounds_true_error() {
    let exact = std::f64::consts::PI.sqrt();
    let r = integrate(
        re(|x| (-x * x).exp()),
        Window::Interval {
            lo: -10.0,
            hi: 10.0,
        },
        &settings(),
    )
    .unwrap();
    let actual = (r.value.re - exact).abs();
    assert!(actual <= r.error_estimate.max(1e-13) * 10.0);
}

#[test]
fn oscillatory_integrand_cancels() {
    // ∫₀^{2π} e^{i·8x} dx = 0. A pure-cancellation integral can never meet a
    // relative tolerance, so convergence is judged against abs_tol; the
    // conservative error rescaling keeps the estimate above ~1e-13 here.
    let s = QuadratureSettings {
        abs_tol: 1e-12,
        ..settings()
    };
    let r = integrate(
        |x| Complex64::new(0.0, 8.0 * x).exp(),
        Window::Interval {
            lo: 0.0,
            hi: 2.0 * std::f64::consts::PI,
        },
        &s,
    )
    .unwrap();
    assert!(r.value.norm() < 1e-12);
    assert!(
        r.converged,
        "value={:?} err={} evals={}",
        r.value, r.error_estimate, r.evaluations
    );
}

#[test]
fn breakpoint_seeds_resolve_narrow_feature() {
    // A spike of width 1e-3 at x = 900 inside [0, 1000] is invisible to the
    // first few bisections unless seeded.
    let spike = re(|x| (-((x - 900.0) / 1e-3).powi(2)).exp());
    let window = Window::Interval {
        lo: 0.0,
        hi: 1000.0,
    };
    let exact = std::f64::consts::PI.sqrt() * 1e-3;
    // Marks bracket the feature the way mode landmarks do (center, ±3w,
    // ±12w); a lone mark at the center would put the spike on panel edges
    // that the interior nodes of the rule cannot see, and without the ±12w
    // ring the mass between 3 and 12 widths goes unnoticed.
    let w = 1e-3;
    let marks = [
        900.0 - 12.0 * w,
        900.0 - 3.0 * w,
        900.0,
        900.0 + 3.0 * w,
        900.0 + 12.0 * w,
    ];
    let r = integrate_with_breakpoints(&spike, window, &marks, &settings()).unwrap();
    assert!(r.converged);
    assert!(
        (r.value.re - exact).abs() < 1e-12 * exact.max(1.0),
        "value={} exact={} err={}",
        r.value.re,
        exact,
        r.error_estimate
    );
}

#[test]
fn kinked_integrand_converges_with_breakpoint() {
    let r = integrate_with_breakpoints(
        re(|x| x.abs()),
        Window::Interval { lo: -1.0, hi: 1.0 },
        &[0.0],
        &settings(),
    )
    .unwrap();
    assert!((r.value.re - 1.0).abs() < 1e-12);
}

#[test]
fn non_finite_integrand_is_reported_with_location() {
    let err = integrate(
        |x| {
            if x > 0.5 {
                Complex64::new(f64::NAN, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        },
        Window::Interval { lo: 0.0, hi: 1.0 },
        &settings(),
    )
    .unwrap_err();
    match err {
        QuadratureError::NonFiniteIntegrand { omega } => assert!(omega > 0.5),
    }
}

#[test]
fn half_line_window_integrates_decaying_tail() {
    // ∫₀^∞ e^{-ω} dω = 1, under the rational map with unit scale.
    let r = integrate(
        re(|w| (-w).exp()),
        Window::HalfLine { scale: 1.0 },
        &settings(),
    )
    .unwrap();
    assert!(r.converged);
    assert!((r.value.re - 1.0).abs() < 1e-10);
}

#[test]
fn half_line_scale_handles_remote_features() {
    // Mass concentrated near ω = 1e6; the scale hint recenters the map.
    let exact = std::f64::consts::PI.sqrt() * 1e3;
    let r = integrate(
        re(|w| (-((w - 1e6) / 1e3).powi(2)).exp()),
        Window::HalfLine { scale: 1e6 },
        &settings(),
    )
    .unwrap();
    assert!(
        (r.value.re - exact).abs() < 1e-9 * exact,
        "value={} exact={} err={} converged={}",
        r.value.re,
        exact,
        r.error_estimate,
        r.converged
    );
}

#[test]
fn subdivision_exhaustion_is_flagged_not_fatal() {
    let tight = QuadratureSettings {
        rel_tol: 1e-14,
        abs_tol: 1e-300,
        max_subdivisions: 2,
        window_policy: WindowPolicy::Truncate,
    };
    let r = integrate(
        |x| Complex64::new((50.0 * x).cos() * (-x * x / 100.0).exp(), 0.0),
        Window::Interval {
            lo: -30.0,
            hi: 30.0,
        },
        &tight,
    )
    .unwrap();
    assert!(!r.converged);
    assert!(r.value.re.is_finite());
}

#[test]
fn empty_interval_integrates_to_zero() {
    let r = integrate(
        re(|_| 1.0),
        Window::Interval { lo: 3.0, hi: 3.0 },
        &settings(),
    )
    .unwrap();
    assert_eq!(r.value, Complex64::new(0.0, 0.0));
    assert_eq!(r.evaluations, 0);
}

#[test]
fn inner_product_conjugate_symmetry() {
    let s = settings();
    let f = SpectralMode::gaussian_chirp(10.0, 1.0, 0.7, 0.0).unwrap();
    let g = SpectralMode::gaussian_chirp(12.0, 1.5, -0.3, 0.01).unwrap();
    let fg = inner_product(&f, &g, &s).unwrap().value;
    let gf = inner_product(&g, &f, &s).unwrap().value;
    assert!((fg - gf.conj()).norm() < 1e-12);
}

#[test]
fn normalized_mode_has_unit_l2_norm() {
    let s = settings();
    for mode in [
        SpectralMode::gaussian(10.0, 1.0).unwrap(),
        SpectralMode::gaussian_chirp(8.0, 1.2, 2.0, 0.05).unwrap(),
    ] {
        let n = l2_norm_sq(&mode, &s).unwrap();
        assert!((n.value.re - 1.0).abs() < 1e-10);
    }
}

#[test]
fn window_covers_every_mode_in_the_set() {
    let s = settings();
    let a = SpectralMode::gaussian(10.0, 1.0).unwrap();
    let b = SpectralMode::gaussian(200.0, 2.0).unwrap();
    let (window, marks) = mode_window(&[&a, &b], &s);
    match window {
        Window::Interval { lo, hi } => {
            assert!(lo <= 10.0 - 11.0 && hi >= 200.0 + 23.0);
        }
        Window::HalfLine { .. } => panic!("guarded gaussians use a finite window"),
    }
    assert!(marks.iter().any(|&m| (m - 10.0).abs() < 1e-9));
    assert!(marks.iter().any(|&m| (m - 200.0).abs() < 1e-9));
}

#[test]
fn half_line_policy_is_forced_for_truncated_modes() {
    let s = settings();
    let t = SpectralMode::gaussian_chirp_with_override(3.0, 1.0, 0.0, 0.0).unwrap();
    let (window, _) = mode_window(&[&t], &s);
    assert!(matches!(window, Window::HalfLine { .. }));
}
