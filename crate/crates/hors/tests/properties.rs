//! Randomized property suites at a moderate case count; the acceptance
//! suite re-runs them at 1000 cases each.

use hors::props;

#[test]
fn match_instantiate_roundtrip() {
    props::match_instantiate_roundtrip(300, 11).unwrap();
}

#[test]
fn weak_omission_iff_absence() {
    props::weak_omission_iff_absence(300, 12).unwrap();
}

#[test]
fn substitution_invariants() {
    props::substitution_invariants(300, 13).unwrap();
}

#[test]
fn fresh_uid_disjointness() {
    props::fresh_uid_disjointness(300, 14).unwrap();
}

#[test]
fn normalize_determinism() {
    props::normalize_determinism(300, 15).unwrap();
}

#[test]
fn free_match_consistency() {
    props::free_match_consistency(300, 16).unwrap();
}

#[test]
fn alpha_equivalence_is_an_equivalence_relation() {
    use hors::gen::{self, GenConfig};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..200 {
        let pool = gen::free_pool();
        let t = gen::plain_term(&mut rng, &GenConfig::default(), &pool);
        let u = gen::plain_term(&mut rng, &GenConfig::default(), &pool);
        let v = gen::plain_term(&mut rng, &GenConfig { max_depth: 3, envs: false }, &pool);
        assert!(t.alpha_eq(&t), "reflexivity");
        assert_eq!(t.alpha_eq(&u), u.alpha_eq(&t), "symmetry");
        if t.alpha_eq(&u) && u.alpha_eq(&v) {
            assert!(t.alpha_eq(&v), "transitivity");
        }
    }
}

#[test]
fn parse_render_roundtrip() {
    use hors::gen::{self, GenConfig};
    use hors::parse_term;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    let mut rng = StdRng::seed_from_u64(18);
    for _ in 0..300 {
        let pool = gen::free_pool();
        let t = gen::plain_term(&mut rng, &GenConfig { max_depth: 5, envs: true }, &pool);
        let rendered = t.render();
        let parsed = parse_term(&rendered).unwrap_or_else(|e| {
            panic!("render output failed to parse: {rendered}\n  error: {e}")
        });
        assert!(
            parsed.alpha_eq_by_name(&t),
            "round trip differs:\n  term:   {}\n  parsed: {}",
            rendered,
            parsed.render()
        );
    }
}
