mod common;

use vffix::gtfix::{brute_fixed_oracle, build_gt_automaton, gt_fixed_language, gt_fixed_language_upto, GtConfig};

#[test]
fn hand_built_corpus_matches_brute_force() {
    for (name, t, z) in common::hand_built_transducers() {
        let b = build_gt_automaton(&t, &z, &GtConfig::new(&t, &z)).unwrap();
        assert!(b.partial.is_none(), "{name}");
        assert_eq!(gt_fixed_language(&b, 7).unwrap(), brute_fixed_oracle(&t, &z, 7), "{name}");
    }
}

/// `a ↦ a², b ↦ b²` on F₂ moves `gT̃` like a queue (`p ↦ x⁻¹ p x²`), which
/// no escape certificate covers; the automaton is flagged partial but
/// stays exact within its radius.
#[test]
fn free_doubling_is_partial_but_exact_nearby() {
    let t = common::transducer(1, 2, &[(0, 0, 0, &[0, 0]), (0, 2, 0, &[2, 2])]);
    let b = build_gt_automaton(&t, &[], &GtConfig::new(&t, &[])).unwrap();
    assert!(b.partial.is_some());
    assert!(gt_fixed_language(&b, 8).is_err());
    assert!(b.exact_radius().unwrap() >= 8);
    let got = gt_fixed_language_upto(&b, 8).unwrap();
    assert_eq!(got, brute_fixed_oracle(&t, &[], 8));
    assert_eq!(got.len(), 1);
}
