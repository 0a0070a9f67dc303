mod support;

use microscale_core::macro_solver::{tip_deflection, CantileverSetup};
use microscale_core::voigt::{gradient_d, isotropic_c, lame_from_engineering, DMatrix, GradientModuli};
use support::classical_q9::Q9Cantilever;

#[test]
fn classical_limit_matches_q9_oracle() {
    let m = lame_from_engineering(70.0, 0.3).unwrap();
    let setup = CantileverSetup::default();
    let (mesh, field) = setup.solve(isotropic_c(&m), DMatrix::zeros()).unwrap();
    let bell = tip_deflection(&mesh, &field);
    let q9 = Q9Cantilever { length: 30.0, depth: 10.0, nx: 75, ny: 25, lambda: m.lambda, mu: m.mu, load: 1.0 }
        .tip_deflection();
    println!("bell {bell:.6} q9 {q9:.6}");
    assert!((bell - q9).abs() <= 0.01 * q9.abs());
    assert!(bell < -1.4 && bell > -1.6);
}

#[test]
fn classical_tip_deflection_is_mesh_converged() {
    let c = isotropic_c(&lame_from_engineering(70.0, 0.3).unwrap());
    let tip = |nx, ny| {
        let (mesh, field) = CantileverSetup { nx, ny, ..Default::default() }.solve(c.clone(), DMatrix::zeros()).unwrap();
        tip_deflection(&mesh, &field)
    };
    let (coarse, fine) = (tip(75, 25), tip(150, 50));
    assert!((coarse - fine).abs() < 0.005 * fine.abs(), "{coarse} vs {fine}");
}

#[test]
fn gradient_stiffening_grows_with_l() {
    let setup = CantileverSetup::default();
    let mut last = f64::INFINITY;
    for l in [0.0, 0.1, 0.5, 1.0, 2.0] {
        let m = GradientModuli { lambda: 24.22, mu: 17.09, l };
        let (mesh, field) = setup.solve(isotropic_c(&m.classical()), gradient_d(&m)).unwrap();
        let tip = tip_deflection(&mesh, &field).abs();
        assert!(tip < last, "l = {l}: {tip} vs {last}");
        last = tip;
    }
}
