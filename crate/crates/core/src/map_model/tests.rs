use num_complex::Complex64;

use super::*;
use crate::catalog;
use crate::poly::Term;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn p1(re: f64) -> ProjectivePoint {
    ProjectivePoint::p1(c(re, 0.0))
}

fn term(re: f64, pow: &[u32]) -> Term {
    Term {
        coef: [re, 0.0],
        pow: pow.to_vec(),
    }
}

fn p1_def(id: &str, degree: u32, p: Vec<Term>, q: Vec<Term>) -> MapDefinition {
    MapDefinition {
        id: id.into(),
        description: String::new(),
        kind: MapKind::RationalP1,
        dimension: 1,
        degree,
        components: vec![p, q],
        topological_degree: None,
        dynamical_degrees: None,
        exceptional: None,
        default_seed: None,
    }
}

#[test]
fn evaluate_examples() {
    let z2 = catalog::load("z2").unwrap();
    assert_eq!(z2.evaluate(&p1(1.0)).unwrap(), p1(1.0));
    let y = z2.evaluate(&p1(2.0)).unwrap();
    assert_eq!(y.coords(), &[c(1.0, 0.0), c(0.25, 0.0)]);
    let cheb = catalog::load("chebyshev").unwrap();
    assert!(cheb.evaluate(&p1(2.0)).unwrap().chordal(&p1(2.0)) < 1e-15);
}

#[test]
fn differential_of_square_on_circle() {
    let z2 = catalog::load("z2").unwrap();
    let t = z2.differential(&p1(1.0)).unwrap();
    assert!((t.op_norm - 2.0).abs() < 1e-14);
    // |f'(z)| (1 + |z|^2) / (1 + |f(z)|^2) at z = 0.5 + 0.5i
    let z = c(0.5, 0.5);
    let expect = 2.0 * z.norm() * (1.0 + z.norm_sqr()) / (1.0 + z.norm_sqr().powi(2));
    let t = z2.differential(&ProjectivePoint::p1(z)).unwrap();
    assert!((t.op_norm - expect).abs() < 1e-13);
}

#[test]
fn critical_point_of_square() {
    let z2 = catalog::load("z2").unwrap();
    let t = z2.differential(&p1(0.0)).unwrap();
    assert_eq!(t.fs_jacobian, 0.0);
    assert!(t.inv_norm.is_infinite());
    assert_eq!(z2.fs_jacobian(&p1(0.0)), 0.0);
}

#[test]
fn power_map_differential_at_center() {
    let m = catalog::load("power_p2").unwrap();
    let x = ProjectivePoint::new(&[c(1.0, 0.0); 3]).unwrap();
    let t = m.differential(&x).unwrap();
    assert!((t.op_norm - 2.0).abs() < 1e-13);
    assert!((t.fs_jacobian - 16.0).abs() < 1e-12);
    assert!((m.fs_jacobian(&x) - 16.0).abs() < 1e-12);
}

#[test]
fn jacobian_on_unit_circle_is_four() {
    let z2 = catalog::load("z2").unwrap();
    for k in 0..12 {
        let z = Complex64::from_polar(1.0, 0.5 * k as f64);
        let x = ProjectivePoint::p1(z);
        assert!((z2.fs_jacobian(&x) - 4.0).abs() < 1e-12);
        assert!((z2.differential(&x).unwrap().fs_jacobian - 4.0).abs() < 1e-12);
    }
}

#[test]
fn preimage_examples() {
    let z2 = catalog::load("z2").unwrap();
    let pre = z2.preimages(&p1(1.0)).unwrap();
    assert_eq!(pre.len(), 2);
    for target in [1.0, -1.0] {
        assert!(pre.iter().any(|(p, m)| *m == 1 && p.chordal(&p1(target)) < 1e-14));
    }
    let pre = z2.preimages(&p1(0.0)).unwrap();
    assert_eq!(pre.len(), 1);
    assert_eq!(pre[0].1, 2);
    assert!(pre[0].0.chordal(&p1(0.0)) < 1e-14);

    let power = catalog::load("power_p2").unwrap();
    let pre = power.preimages(&ProjectivePoint::new(&[c(1.0, 0.0); 3]).unwrap()).unwrap();
    assert_eq!(pre.len(), 4);
    for (p, m) in &pre {
        assert_eq!(*m, 1);
        assert!(p.coords().iter().all(|z| (z.norm() - 1.0).abs() < 1e-14 && z.im.abs() < 1e-14));
    }
}

#[test]
fn skew_preimages_at_infinity() {
    let m = catalog::load("skew_p2").unwrap();
    let y = ProjectivePoint::new(&[c(0.3, 0.1), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
    let pre = m.preimages(&y).unwrap();
    assert_eq!(pre.iter().map(|(_, k)| k).sum::<u32>(), 4);
    for (p, _) in &pre {
        assert!(m.evaluate(p).unwrap().chordal(&y) < 1e-12);
    }
}

#[test]
fn distance_to_j_examples() {
    let z2 = catalog::load("z2").unwrap();
    assert!((z2.distance_to_j(&p1(1.0)) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert_eq!(z2.distance_to_j(&p1(0.0)), 0.0);
    assert_eq!(z2.distance_to_j(&ProjectivePoint::p1_infinity()), 0.0);

    let power = catalog::load("power_p2").unwrap();
    let x = ProjectivePoint::new(&[c(1.0, 0.0); 3]).unwrap();
    let d = power.distance_to_j(&x);
    // true distance to {zwt = 0} from [1:1:1] is 1/sqrt(3)
    assert!(d > 0.0 && d <= (1.0 / 3f64.sqrt()) * (1.0 + 1e-12));
}

#[test]
fn known_exceptional_sets() {
    let cheb = catalog::load("chebyshev").unwrap();
    let pts = cheb.exceptional().points().unwrap();
    assert_eq!(pts.len(), 3);
    for z in [p1(-2.0), p1(0.0), ProjectivePoint::p1_infinity()] {
        assert!(pts.iter().any(|p| p.chordal(&z) < 1e-9));
    }
    let lattes = catalog::load("lattes4").unwrap();
    let pts = lattes.exceptional().points().unwrap();
    let s2 = 2f64.sqrt();
    // critical values 0, 1, -1 and their preimages ±i, 1 ± √2, -1 ± √2
    let expected = [
        p1(0.0),
        p1(1.0),
        p1(-1.0),
        ProjectivePoint::p1(c(0.0, 1.0)),
        ProjectivePoint::p1(c(0.0, -1.0)),
        p1(1.0 + s2),
        p1(1.0 - s2),
        p1(-1.0 + s2),
        p1(-1.0 - s2),
    ];
    assert_eq!(pts.len(), expected.len());
    for z in expected {
        assert!(pts.iter().any(|p| p.chordal(&z) < 1e-8), "missing {z:?}");
    }
}

#[test]
fn degree_report() {
    let z2 = catalog::load("z2").unwrap();
    let r = z2.check_degrees().unwrap();
    assert_eq!(r.d_t_numeric, 2);
    assert!(r.hypothesis_ok);
    let power = catalog::load("power_p2").unwrap();
    let r = power.check_degrees().unwrap();
    assert_eq!(r.d_t_numeric, 4);
    assert_eq!(power.dynamical_degrees(), &[2, 4]);
    assert_eq!(r.lambda_below_top, 2);
    assert!(r.hypothesis_ok);
}

#[test]
fn shared_factor_is_a_degree_mismatch() {
    // [z^2 (z - t) : t^2 (z - t)]
    let def = p1_def(
        "shared",
        3,
        vec![term(1.0, &[3, 0]), term(-1.0, &[2, 1])],
        vec![term(1.0, &[1, 2]), term(-1.0, &[0, 3])],
    );
    match MapModel::new(def) {
        Err(Error::DegreeMismatch { declared, numeric }) => {
            assert_eq!(declared, 3);
            assert_eq!(numeric, 2);
        }
        other => panic!("expected DegreeMismatch, got {other:?}"),
    }
}

#[test]
fn identity_violates_hypothesis() {
    let def = p1_def("id", 1, vec![term(1.0, &[1, 0])], vec![term(1.0, &[0, 1])]);
    assert!(matches!(MapModel::new(def), Err(Error::HypothesisViolation(_))));
}

#[test]
fn rejects_inconsistent_declared_degree() {
    let mut def = catalog::definition("power_p2").unwrap();
    def.topological_degree = Some(2);
    assert!(matches!(MapModel::new(def), Err(Error::InvalidDefinition(_))));
}

#[test]
fn vanishing_components_are_reported() {
    let z2 = catalog::load("z2").unwrap();
    let comps = vec![HomPoly::monomial(2, c(1.0, 0.0), [1, 1, 0]), HomPoly::monomial(2, c(1.0, 0.0), [2, 0, 0])];
    let f = PolyMap::new(comps).unwrap();
    assert!(matches!(f.evaluate(&p1(0.0)), Err(Error::AllComponentsVanish)));
    assert!(z2.evaluate(&p1(0.0)).is_ok());
}

#[test]
fn iterate_composes() {
    let cheb = catalog::load("chebyshev").unwrap();
    let f2 = cheb.iterate(2).unwrap();
    assert_eq!(f2.degree(), 4);
    assert_eq!(f2.topological_degree(), 4);
    let x = ProjectivePoint::p1(c(0.4, -1.1));
    let once = cheb.evaluate(&cheb.evaluate(&x).unwrap()).unwrap();
    assert!(f2.evaluate(&x).unwrap().chordal(&once) < 1e-13);
}

#[test]
fn general_p2_map_needs_exceptional_block() {
    let mut def = catalog::definition("power_p2").unwrap();
    // add a cross term so the map is no longer diagonal
    def.components[0].push(term(0.5, &[1, 1, 0]));
    match MapModel::new(def.clone()) {
        Err(Error::InvalidDefinition(msg)) => assert!(msg.contains("exceptional")),
        other => panic!("unexpected {other:?}"),
    }
    def.exceptional = Some(ExceptionalDefinition {
        polynomials: vec![vec![term(1.0, &[0, 0, 1])]],
        totally_invariant: false,
    });
    let m = MapModel::new(def).unwrap();
    assert!(!m.supports_preimages());
    assert!(matches!(m.preimages(&ProjectivePoint::random(2, &mut ChaCha8Rng::seed_from_u64(1))), Err(Error::UnsupportedPreimages(_))));
}

#[test]
fn common_zero_on_p2_is_detected() {
    // [z^2 : zw + t^2 : t^2 + zt] vanishes at [0:1:0]
    let mut def = catalog::definition("power_p2").unwrap();
    def.components = vec![
        vec![term(1.0, &[2, 0, 0])],
        vec![term(1.0, &[1, 1, 0]), term(1.0, &[0, 0, 2])],
        vec![term(1.0, &[0, 0, 2]), term(1.0, &[1, 0, 1])],
    ];
    def.exceptional = Some(ExceptionalDefinition {
        polynomials: vec![vec![term(1.0, &[1, 0, 0])]],
        totally_invariant: false,
    });
    assert!(matches!(MapModel::new(def), Err(Error::NotHolomorphic)));
}
