use qredshift::mixer::gram_schmidt;
use qredshift::quad::QuadratureSettings;
use qredshift::spectra::{RedshiftFactor, SpectralMode};
use qredshift::validity::{
    find_boundary, frequency_energy_report, params_csv, scan_chi, scan_csv, scan_parameters,
    ParamAxis, ParameterGrid, ScanError, TwoModeTemplate,
};

fn settings() -> QuadratureSettings {
    QuadratureSettings::default()
}

fn pair_basis(width: f64) -> qredshift::mixer::BasisSet {
    let modes = vec![
        SpectralMode::gaussian(10.0, width).unwrap(),
        SpectralMode::gaussian(30.0, width).unwrap(),
    ];
    gram_schmidt(modes, &settings()).unwrap()
}

#[test]
fn scan_is_identical_serial_and_parallel() {
    let s = settings();
    let basis = pair_basis(1.0);
    let grid: Vec<f64> = (0..8).map(|i| 1.0 + 0.1 * i as f64).collect();
    let serial = scan_chi(&basis, &grid, 1e-3, 1, &s).unwrap();
    let parallel = scan_chi(&basis, &grid, 1e-3, 4, &s).unwrap();
    assert_eq!(serial.len(), parallel.len());
    for (a, b) in serial.iter().zip(&parallel) {
        assert_eq!(a.chi, b.chi);
        assert_eq!(a.residual.to_bits(), b.residual.to_bits());
        assert_eq!(a.deficit.to_bits(), b.deficit.to_bits());
        assert_eq!(a.min_eigenvalue.to_bits(), b.min_eigenvalue.to_bits());
        assert_eq!(a.pair_magnitudes, b.pair_magnitudes);
        assert_eq!(a.converged, b.converged);
    }
}

#[test]
fn scan_records_carry_pair_magnitudes_row_major() {
    let s = settings();
    let basis = pair_basis(1.0);
    let records = scan_chi(&basis, &[3.0_f64.sqrt()], 1e-3, 1, &s).unwrap();
    let r = &records[0];
    assert_eq!(r.pair_magnitudes.len(), 4);
    // |A₀₁| = √0.6 sits at the row-major (0,1) slot.
    assert!((r.pair_magnitudes[1] - 0.6_f64.sqrt()).abs() < 1e-8);
    assert!(r.pair_magnitudes[3] < 1e-10);
    assert!((r.residual - 2.0 / 7.0).abs() < 1e-7);
    assert!(r.converged);
}

#[test]
fn scan_grid_is_validated() {
    let s = settings();
    let basis = pair_basis(1.0);
    assert!(matches!(
        scan_chi(&basis, &[], 1e-3, 1, &s),
        Err(ScanError::Parameter(_))
    ));
    assert!(scan_chi(&basis, &[1.2, 1.1], 1e-3, 1, &s).is_err());
    assert!(scan_chi(&basis, &[-0.5, 1.1], 1e-3, 1, &s).is_err());
    assert!(scan_chi(&basis, &[1.1, 1.1], 1e-3, 1, &s).is_err());
}

#[test]
fn starved_quadrature_marks_records_unconverged() {
    let basis = pair_basis(1.0);
    let starved = QuadratureSettings {
        rel_tol: 1e-15,
        abs_tol: 1e-300,
        max_subdivisions: 1,
        ..settings()
    };
    let records = scan_chi(&basis, &[1.3], 1e-3, 1, &starved).unwrap();
    assert!(!records[0].converged);
    assert_eq!(records[0].residual, 0.0);
}

#[test]
fn boundary_bisects_to_the_floor_crossing() {
    let s = settings();
    let basis = pair_basis(1.0);
    let b = find_boundary(&basis, 1e-3, (1.0, 3.0), &s).unwrap();
    // r jumps from 0 to ~0.10 where the second eigenvalue clears the noise
    // floor: ε* = √(1e-9/102).
    let expected = 1.0 + (1e-9_f64 / 102.0).sqrt();
    assert!(
        (b.chi_star - expected).abs() < 1e-7,
        "chi* = {}, expected {expected}",
        b.chi_star
    );
    assert!(b.bracket.1 - b.bracket.0 <= 1e-8 * b.chi_star);
    assert!(b.iterations <= 100);
    assert_eq!(b.threshold, 1e-3);
    assert!(!b.monotone_in_bracket);
}

#[test]
fn boundary_is_threshold_insensitive_on_the_jump() {
    let s = settings();
    let basis = pair_basis(1.0);
    let a = find_boundary(&basis, 1e-3, (1.0, 3.0), &s).unwrap();
    let b = find_boundary(&basis, 5e-4, (1.0, 3.0), &s).unwrap();
    assert!(
        (a.chi_star - b.chi_star).abs() < 1e-8,
        "{} vs {}",
        a.chi_star,
        b.chi_star
    );
}

#[test]
fn narrower_modes_tighten_the_boundary() {
    let s = settings();
    let wide = find_boundary(&pair_basis(1.0), 1e-3, (1.0, 3.0), &s).unwrap();
    let narrow = find_boundary(&pair_basis(0.5), 1e-3, (1.0, 3.0), &s).unwrap();
    assert!(
        narrow.chi_star < wide.chi_star,
        "narrow {} !< wide {}",
        narrow.chi_star,
        wide.chi_star
    );
    // Halving σ doubles both dimensionless centers; the second eigenvalue
    // coefficient grows 102 → 402, pulling ε* in by √(102/402).
    let expected = 1.0 + (1e-9_f64 / 402.0).sqrt();
    assert!((narrow.chi_star - expected).abs() < 1e-7);
}

#[test]
fn invalid_brackets_are_rejected() {
    let s = settings();
    let basis = pair_basis(1.0);
    // Residual already above threshold at the left end.
    assert!(matches!(
        find_boundary(&basis, 1e-3, (1.5, 3.0), &s),
        Err(ScanError::BracketInvalid { .. })
    ));
    // Residual never reaches a huge threshold.
    assert!(matches!(
        find_boundary(&basis, 0.9, (1.0, 3.0), &s),
        Err(ScanError::BracketInvalid { .. })
    ));
    // Malformed bracket and threshold.
    assert!(find_boundary(&basis, 1e-3, (3.0, 1.0), &s).is_err());
    assert!(find_boundary(&basis, -0.1, (1.0, 3.0), &s).is_err());
}

#[test]
fn frequency_report_tracks_chi_squared() {
    let s = settings();
    let f = SpectralMode::gaussian(10.0, 1.0).unwrap();
    for c2 in [0.5, 2.0, 4.0] {
        let chi = RedshiftFactor::from_chi_squared(c2).unwrap();
        let r = frequency_energy_report(&f, chi, &s).unwrap();
        assert!(
            (r.ratio - c2).abs() < 1e-6 * c2,
            "ratio {} vs {c2}",
            r.ratio
        );
        assert!((r.z - (c2 - 1.0)).abs() < 1e-12);
        assert!((r.delta_energy_ratio - r.z).abs() < 1e-6 * c2);
        assert!((r.mean_in - 10.0).abs() < 1e-7);
    }
}

fn template() -> TwoModeTemplate {
    TwoModeTemplate {
        omega0_over_sigma: 10.0,
        sigma_phi: 0.0,
        separation_over_sigma: 20.0,
        sigma: 1.0,
    }
}

#[test]
fn parameter_map_scans_the_template_plane() {
    let s = settings();
    let grid = ParameterGrid {
        axis1: ParamAxis::Omega0OverSigma,
        values1: vec![8.0, 10.0],
        axis2: ParamAxis::SigmaPhi,
        values2: vec![0.0, 1.0],
    };
    let chi = RedshiftFactor::new(1.001).unwrap();
    let records = scan_parameters(template(), &grid, chi, 1e-3, 1, &s).unwrap();
    assert_eq!(records.len(), 4);
    // Row-major: values1 outer, values2 inner.
    assert_eq!((records[0].p1, records[0].p2), (8.0, 0.0));
    assert_eq!((records[1].p1, records[1].p2), (8.0, 1.0));
    assert_eq!((records[3].p1, records[3].p2), (10.0, 1.0));
    for r in &records {
        assert!(r.converged);
        assert!(!r.pass, "plateau residual {} is above 1e-3", r.residual);
        assert!(r.delta11_magnitude > 0.9);
    }
    // The plateau residual at x₀ = 10, σφ = 0 is 102ε²/(902+102)ε² ≈ 0.1016.
    let base = records[2].residual;
    assert!((base - 102.0 / 1004.0).abs() < 1e-3, "residual {base}");
    // Chirp raises the leak rate of both modes.
    assert!(records[3].residual > records[2].residual);
}

#[test]
fn parameter_map_is_deterministic_across_workers() {
    let s = settings();
    let grid = ParameterGrid {
        axis1: ParamAxis::SeparationOverSigma,
        values1: vec![15.0, 20.0, 25.0],
        axis2: ParamAxis::SigmaPhi,
        values2: vec![0.0, 0.5],
    };
    let chi = RedshiftFactor::new(1.001).unwrap();
    let a = scan_parameters(template(), &grid, chi, 1e-3, 1, &s).unwrap();
    let b = scan_parameters(template(), &grid, chi, 1e-3, 3, &s).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.residual.to_bits(), y.residual.to_bits());
        assert_eq!(x.delta11_magnitude.to_bits(), y.delta11_magnitude.to_bits());
    }
}

#[test]
fn parameter_grid_is_validated() {
    let s = settings();
    let chi = RedshiftFactor::new(1.001).unwrap();
    // Same axis twice.
    let dup = ParameterGrid {
        axis1: ParamAxis::SigmaPhi,
        values1: vec![0.0],
        axis2: ParamAxis::SigmaPhi,
        values2: vec![1.0],
    };
    assert!(scan_parameters(template(), &dup, chi, 1e-3, 1, &s).is_err());
    // A grid point pushing the first center below the support guard.
    let low = ParameterGrid {
        axis1: ParamAxis::Omega0OverSigma,
        values1: vec![4.0],
        axis2: ParamAxis::SigmaPhi,
        values2: vec![0.0],
    };
    assert!(scan_parameters(template(), &low, chi, 1e-3, 1, &s).is_err());
    // Empty axis.
    let empty = ParameterGrid {
        axis1: ParamAxis::Omega0OverSigma,
        values1: vec![],
        axis2: ParamAxis::SigmaPhi,
        values2: vec![0.0],
    };
    assert!(scan_parameters(template(), &empty, chi, 1e-3, 1, &s).is_err());
}

#[test]
fn csv_serializations_round_trip() {
    let s = settings();
    let basis = pair_basis(1.0);
    let records = scan_chi(&basis, &[1.1, 1.7], 1e-3, 1, &s).unwrap();
    let csv = scan_csv(&records);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "chi,residual,deficit,min_eig,converged"
    );
    for (line, rec) in lines.zip(&records) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 5);
        assert_eq!(cols[0].parse::<f64>().unwrap(), rec.chi);
        assert_eq!(cols[1].parse::<f64>().unwrap(), rec.residual);
        assert_eq!(cols[4], if rec.converged { "true" } else { "false" });
    }
    assert!(csv.ends_with('\n'));

    let grid = ParameterGrid {
        axis1: ParamAxis::Omega0OverSigma,
        values1: vec![10.0],
        axis2: ParamAxis::SigmaPhi,
        values2: vec![0.0],
    };
    let chi = RedshiftFactor::new(1.001).unwrap();
    let precs = scan_parameters(template(), &grid, chi, 1e-3, 1, &s).unwrap();
    let pcsv = params_csv(&precs);
    assert!(pcsv.starts_with("p1,p2,chi,residual,pass\n"));
    let row: Vec<&str> = pcsv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0].parse::<f64>().unwrap(), 10.0);
    assert_eq!(row[4], "false");
}
