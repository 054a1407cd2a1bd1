use isingcx::fkfield::magnetization_bc;
use isingcx::oracle::{self, fixture, standard_fixtures, Fixture};
use isingcx::{BoundaryCondition, ModelParams};

fn committed() -> Vec<Fixture> {
    serde_json::from_str(include_str!("fixtures/oracle.json")).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

#[test]
fn recomputed_values_match_the_committed_table() {
    let old = committed();
    let new = standard_fixtures().unwrap();
    assert_eq!(old.len(), new.len());
    for (a, b) in old.iter().zip(&new) {
        assert_eq!((&a.instance, a.beta, a.h, &a.quantity), (&b.instance, b.beta, b.h, &b.quantity));
        assert!(close(a.value, b.value), "{} {} at ({}, {}): {} vs {}", a.instance, a.quantity, a.beta, a.h, a.value, b.value);
    }
}

#[test]
fn zero_field_rings_have_closed_forms() {
    let fx = committed();
    for beta in [0.0, 0.2, 0.35] {
        let t = f64::tanh(beta);
        for n in [4i32, 8] {
            let name = format!("ring-{n}");
            let log_z = ((2.0 * beta.cosh()).powi(n) + (2.0 * beta.sinh()).powi(n)).ln();
            let s0s1 = (t + t.powi(n - 1)) / (1.0 + t.powi(n));
            assert!(close(fixture(&fx, &name, beta, 0.0, "log_z").unwrap().value, log_z));
            assert!(close(fixture(&fx, &name, beta, 0.0, "s0s1").unwrap().value, s0s1));
            assert_eq!(fixture(&fx, &name, beta, 0.0, "s0").unwrap().value, 0.0);
        }
        let pressure = fixture(&fx, "chain", beta, 0.0, "pressure").unwrap().value;
        assert!(close(pressure, (2.0 * beta.cosh()).ln()));
    }
}

#[test]
fn zero_coupling_is_a_product_measure() {
    let fx = committed();
    for f in fx.iter().filter(|f| f.beta == 0.0) {
        match f.quantity.as_str() {
            "s0" => assert!(close(f.value, f.h.tanh()), "{}", f.instance),
            "s0s1" => assert!(close(f.value, f.h.tanh().powi(2)), "{}", f.instance),
            _ => {}
        }
    }
}

#[test]
fn box_fixtures_agree_with_fixed_boundary_enumeration() {
    let fx = committed();
    for (beta, h) in [(0.2, 0.0), (0.2, 0.2), (0.35, 0.0), (0.35, 0.2), (0.5, 0.3)] {
        let p = ModelParams::new(beta, h).unwrap();
        for (bc, name) in [(BoundaryCondition::Plus, "box-3x3-plus"), (BoundaryCondition::Free, "box-3x3-free"), (BoundaryCondition::Minus, "box-3x3-minus")] {
            let m = magnetization_bc(2, 1, &p, bc).unwrap();
            assert!(close(m, fixture(&fx, name, beta, h, "s0").unwrap().value), "{name} at ({beta}, {h})");
        }
        let plus = fixture(&fx, "box-3x3-plus", beta, h, "s0").unwrap().value;
        let free = fixture(&fx, "box-3x3-free", beta, h, "s0").unwrap().value;
        let minus = fixture(&fx, "box-3x3-minus", beta, h, "s0").unwrap().value;
        assert!(plus >= free && free >= minus);
    }
}

#[test]
fn torus_log_z_matches_a_direct_sum() {
    let fx = committed();
    let g = oracle::Geometry::Torus(isingcx::TorusGeom::new(2, 2).unwrap()).spin_graph().unwrap();
    let p = ModelParams::new(0.35, 0.2).unwrap();
    let mut z = 0.0;
    for bits in 0u32..1 << 16 {
        let s: Vec<f64> = (0..16).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let e: f64 = g.edges().iter().map(|&(a, b)| p.beta * s[a] * s[b]).sum::<f64>() + p.h * s.iter().sum::<f64>();
        z += e.exp();
    }
    assert!(close(z.ln(), fixture(&fx, "torus-4x4", 0.35, 0.2, "log_z").unwrap().value));
}
