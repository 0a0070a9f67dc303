use microscale_core::homogenizer::{extract_length_scale, homogenize, Homogenizer, Ingredients, Tangents};
use microscale_core::micro_fem::{average_moment_stress, build_micro_mesh, MacroStrainState, RveSystem};
use microscale_core::rve::{generate, RveSpec};
use microscale_core::voigt::{isotropic_c, IsotropicModuli};
use nalgebra::{Matrix6, Vector3, Vector6};

fn aluminium() -> IsotropicModuli {
    IsotropicModuli { lambda: 40.38, mu: 26.92 }
}

fn porous(spec: &RveSpec) -> Tangents {
    homogenize(spec, aluminium(), aluminium().scaled(1e-6)).unwrap()
}

#[test]
fn empty_rve_reproduces_matrix_and_taylor_moment() {
    // φ = 0.3 mm, size factor 10: a = 3 mm, so D = (9/12)·blockdiag(C, C)
    let t = porous(&RveSpec::new(0.3, 0.0, 1));
    assert_eq!(t.circle_count, 0);
    let c = isotropic_c(&aluminium()).0;
    assert!((t.c.0 - c).norm() <= 1e-9 * c.norm());
    let mut taylor = Matrix6::zeros();
    taylor.fixed_view_mut::<3, 3>(0, 0).copy_from(&(c * 0.75));
    taylor.fixed_view_mut::<3, 3>(3, 3).copy_from(&(c * 0.75));
    assert!((t.d.0 - taylor).norm() <= 1e-9 * taylor.norm());
    assert!(t.coupling.norm() <= 1e-9 * t.c.frobenius() * t.edge_length);
    let (l, r) = extract_length_scale(&t);
    assert!((l - 3.0 / 12f64.sqrt()).abs() < 1e-9);
    assert!(r < 1e-9);
}

#[test]
fn tiny_fraction_has_no_circles() {
    let t = porous(&RveSpec { raster_n: 50, ..RveSpec::new(0.3, 0.001, 4) });
    assert_eq!(t.circle_count, 0);
    let c = isotropic_c(&aluminium()).0;
    assert!((t.c.0 - c).norm() <= 1e-6 * c.norm());
}

#[test]
fn zero_contrast_is_homogeneous() {
    let spec = RveSpec { raster_n: 100, ..RveSpec::new(0.3, 0.15, 3) };
    let flat = homogenize(&spec, aluminium(), aluminium()).unwrap();
    let reference = porous(&RveSpec { raster_n: 100, ..RveSpec::new(0.3, 0.0, 3) });
    assert!((flat.c.0 - reference.c.0).norm() <= 1e-8 * reference.c.frobenius());
    assert!((flat.d.0 - reference.d.0).norm() <= 1e-8 * reference.d.frobenius());
}

#[test]
fn pore_scale_invariance() {
    let base = RveSpec { raster_n: 100, ..RveSpec::new(0.3, 0.15, 11) };
    let t = porous(&base);
    for s in [0.5, 2.0, 3.7] {
        let ts = porous(&RveSpec { phi: base.phi * s, ..base });
        assert!((ts.c.0 - t.c.0).norm() <= 1e-10 * t.c.frobenius());
        assert!((ts.d.0 - t.d.0 * (s * s)).norm() <= 1e-10 * ts.d.frobenius());
        let r = t.rescaled(s);
        assert!((r.d.0 - ts.d.0).norm() <= 1e-10 * ts.d.frobenius());
    }
}

#[test]
fn porous_rve_softens_and_stays_isotropic_enough() {
    let spec = RveSpec::new(0.3, 0.15, 1);
    let t = porous(&spec);
    assert_eq!(t.circle_count, 19);
    assert!(t.c.0[(0, 0)] < 94.22);
    assert!(t.c.0[(2, 2)] < 26.92);
    assert!(t.c.asymmetry() <= 1e-8);
    assert!(t.d.asymmetry() <= 1e-8);
    assert!(t.coupling.norm() <= 0.05 * t.c.frobenius() * t.edge_length);
    let (l, _) = extract_length_scale(&t);
    assert!((0.1..=2.0).contains(&l), "l = {l}");
}

#[test]
fn moment_stress_matches_d_column() {
    let spec = RveSpec { raster_n: 80, ..RveSpec::new(0.3, 0.0, 1) };
    let t = porous(&spec);
    let (_, grid) = generate(&spec).unwrap();
    let mesh = build_micro_mesh(&grid, aluminium(), aluminium().scaled(1e-6));
    let sys = RveSystem::new(mesh).unwrap();
    for m in 0..6 {
        let mut h = Vector6::zeros();
        h[m] = 1.0;
        let field = sys.solve(&MacroStrainState::from_voigt(&Vector3::zeros(), &h)).unwrap();
        let tau = average_moment_stress(&field, sys.mesh());
        assert!((tau - t.d.0.column(m)).norm() <= 1e-12 * t.d.frobenius());
    }
}

#[test]
fn probing_reuses_one_factorization() {
    let spec = RveSpec { raster_n: 80, ..RveSpec::new(0.3, 0.15, 5) };
    let h = Homogenizer::new(&spec, &Ingredients::porous(aluminium())).unwrap();
    let fp = h.system().fingerprint();
    let _ = h.tangents().unwrap();
    assert_eq!(h.system().fingerprint(), fp);
    let again = Homogenizer::new(&spec, &Ingredients::porous(aluminium())).unwrap();
    assert_eq!(again.system().fingerprint(), fp);
}
