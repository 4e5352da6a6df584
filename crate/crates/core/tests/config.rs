use std::f64::consts::PI;

use nonlocal_core::experiment::{CutoffParams, ExperimentConfig};
use nonlocal_core::fem::ExampleId;
use nonlocal_core::geometry::Shape;
use nonlocal_core::C64;
use proptest::prelude::*;

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        prop_oneof![Just(ExampleId::Ex1), Just(ExampleId::Ex2), Just(ExampleId::Ex3)],
        0.1f64..1.5,
        prop::collection::vec((-0.7f64..0.7, -0.7f64..0.7), 1..6),
        prop::collection::vec(0.01f64..0.2, 1..4),
        1.0f64..3.0,
        any::<u64>(),
        prop::option::of(-2.0f64..2.0),
        prop::bool::ANY,
    )
        .prop_map(|(example, omega0, ts, hs, beta, seed, shift, lens)| {
            let mut c = ExperimentConfig::default_for(example);
            c.omega0 = omega0;
            c.t_values = ts.into_iter().map(|(a, b)| C64::new(a, b)).collect();
            c.h_values = hs;
            c.beta = beta;
            c.seed = seed;
            c.lambda_shift = shift.map(|x| C64::new(x, 0.0));
            if lens {
                c.shape = Shape::LensSpline;
            }
            c
        })
}

proptest! {
    #[test]
    fn serialize_parse_serialize_is_identity(c in arb_config()) {
        let text = c.to_json();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_json(), text);
        prop_assert_eq!(back.hash(), c.hash());
    }
}

#[test]
fn defaults_are_valid() {
    for ex in [ExampleId::Ex1, ExampleId::Ex2, ExampleId::Ex3] {
        ExperimentConfig::default_for(ex).validate().unwrap();
    }
}

#[test]
fn rejects_wide_angle_for_ex3() {
    let mut c = ExperimentConfig::default_for(ExampleId::Ex3);
    c.omega0 = PI / 2.0;
    assert!(c.validate().is_err());
}

#[test]
fn rejects_large_t() {
    let mut c = ExperimentConfig::default_for(ExampleId::Ex1);
    c.t_values.push(C64::new(0.8, 0.8));
    assert!(c.validate().is_err());
}

#[test]
fn rejects_narrow_plateau() {
    let mut c = ExperimentConfig::default_for(ExampleId::Ex2);
    c.cutoff = Some(CutoffParams {
        delta_fraction: 0.3,
        plateau: 0.5 * c.eps,
    });
    assert!(c.validate().is_err());
}

#[test]
fn unknown_fields_are_rejected() {
    let text = ExperimentConfig::default_for(ExampleId::Ex1)
        .to_json()
        .replacen('{', "{\n  \"colour\": 1,", 1);
    assert!(ExperimentConfig::from_json(&text).is_err());
}

#[test]
fn hash_tracks_content() {
    let a = ExperimentConfig::default_for(ExampleId::Ex1);
    let mut b = a.clone();
    b.seed += 1;
    assert_ne!(a.hash(), b.hash());
}
