use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use flatpoint::dynamics::{billiard_map, flow_advance, next_collision_from, reflect, time_reverse};
use flatpoint::{build_table, MCoord, Model, Table, TableSpec};
use proptest::prelude::*;

fn tables() -> &'static [Table; 2] {
    static T: OnceLock<[Table; 2]> = OnceLock::new();
    T.get_or_init(|| {
        [
            build_table(TableSpec::new(4.0, Model::Symmetric)).unwrap(),
            build_table(TableSpec::new(6.0, Model::Folded)).unwrap(),
        ]
    })
}

/// A state with `s` and `u` in `[0, 1)`, mapped like the invariant sampler.
fn state(table: &Table, s: f64, u: f64) -> MCoord {
    let (piece, r) = table.at_global(s * table.total_length);
    table.mcoord(piece, r, (2.0 * u - 1.0).asin()).unwrap()
}

fn arb() -> impl Strategy<Value = (usize, f64, f64)> {
    (0usize..2, 0.0..1.0f64, 0.001..0.999f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn reflection_is_specular((t, s, u) in arb()) {
        let table = &tables()[t];
        let m = state(table, s, u);
        let c = next_collision_from(table, &m);
        prop_assume!(c.is_ok());
        let c = c.unwrap();
        prop_assume!(!c.grazing);
        let out = reflect(&c).unwrap();
        let frame = table.boundary_point(out.piece, out.r).unwrap();
        let d = table.outgoing_dir(&out);
        prop_assert!((d.dot(frame.tangent) - c.dir_in.dot(frame.tangent)).abs() < 1e-12);
        prop_assert!((d.dot(frame.normal) + c.dir_in.dot(frame.normal)).abs() < 1e-12);
        // The incoming angle is read off the reversed incoming direction and
        // the outgoing one is its negative.
        let incoming = frame.normal.angle_to(-c.dir_in);
        prop_assert!((incoming - c.m.phi).abs() < 1e-12);
        prop_assert_eq!(out.phi, -c.m.phi);
        prop_assert!(out.phi.abs() <= FRAC_PI_2);
    }

    #[test]
    fn time_reversal_is_an_involution((t, s, u) in arb()) {
        let m = state(&tables()[t], s, u);
        prop_assert_eq!(time_reverse(&time_reverse(&m)), m);
    }

    #[test]
    fn map_is_reversible((t, s, u) in arb()) {
        let table = &tables()[t];
        let m = state(table, s, u);
        let back = billiard_map(table, &m)
            .and_then(|(a, _)| billiard_map(table, &time_reverse(&a)));
        prop_assume!(back.is_ok());
        let (b, _) = back.unwrap();
        prop_assert!(table.distance_m(&time_reverse(&b), &m) < 1e-9);
    }

    #[test]
    fn flow_is_a_semigroup((t, s, u) in arb(), split in 0.05..0.95f64) {
        let table = &tables()[t];
        let start = table.m_to_flow(&state(table, s, u));
        let total = 3.0;
        let whole = flow_advance(table, &start, total);
        let parts = flow_advance(table, &start, split * total)
            .and_then(|mid| flow_advance(table, &mid, (1.0 - split) * total));
        prop_assume!(whole.is_ok() && parts.is_ok());
        let (a, b) = (whole.unwrap(), parts.unwrap());
        prop_assert!((a.pos - b.pos).norm() < 1e-9);
        prop_assert!((a.dir() - b.dir()).norm() < 1e-9);
    }

    #[test]
    fn map_preserves_the_table((t, s, u) in arb()) {
        let table = &tables()[t];
        let m = state(table, s, u);
        if let Ok((next, tau)) = billiard_map(table, &m) {
            prop_assert!(tau > 0.0 && tau <= table.diameter + 1e-9);
            prop_assert!(next.phi.abs() <= FRAC_PI_2);
            let bp = table.boundary_point(next.piece, next.r).unwrap();
            prop_assert!((bp.pos - next.pos).norm() < 1e-9);
        }
    }
}

#[test]
fn flight_time_matches_flow_time() {
    let table = &tables()[0];
    let m = state(table, 0.1, 0.3);
    let (next, tau) = billiard_map(table, &m).unwrap();
    let s = flow_advance(table, &table.m_to_flow(&m), tau * (1.0 - 1e-12)).unwrap();
    assert!((s.pos - next.pos).norm() < 1e-9);
}
