mod common;

use common::*;

#[test]
fn elastic_modes_match_finite_differences() {
    for (k, mode) in ELASTIC_MODES.iter().enumerate() {
        let e = elastic_errors(mode, CONFIGS, k as u64);
        assert!(e.ok(), "{mode}: {e:?}");
    }
}

#[test]
fn contact_kinds_match_finite_differences() {
    for (k, kind) in CONTACT_KINDS.iter().enumerate() {
        for mu in [0.0, 0.4] {
            let e = contact_errors(*kind, mu, CONFIGS, 10 + k as u64);
            assert_eq!(e.samples, CONFIGS, "{kind:?}");
            assert!(e.ok(), "{kind:?} mu {mu}: {e:?}");
        }
    }
}

#[test]
fn external_forces_match_finite_differences() {
    let e = external_errors(CONFIGS, 20);
    assert!(e.ok(), "drag and damping: {e:?}");
    let g = gravity_errors(CONFIGS, 21);
    assert!(g.ok(), "gravity: {g:?}");
}
