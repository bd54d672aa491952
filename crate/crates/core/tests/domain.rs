mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trustlab::domain::Validate;
use trustlab::{Interaction, Session, TrustLevel};

use common::*;

proptest! {
    #[test]
    fn sessions_round_trip_through_json(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in random_log(&mut rng, 40) {
            let text = serde_json::to_string(&s).unwrap();
            let back: Session = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, &s);
            for it in &s.interactions {
                let back: Interaction = serde_json::from_str(&serde_json::to_string(it).unwrap()).unwrap();
                prop_assert_eq!(&back, it);
            }
        }
    }

    #[test]
    fn trust_accepts_exactly_zero_to_ten(v in -50i64..50) {
        prop_assert_eq!(TrustLevel::new(v).is_ok(), (0..=10).contains(&v));
        let parsed: Result<TrustLevel, _> = serde_json::from_str(&v.to_string());
        prop_assert_eq!(parsed.is_ok(), (0..=10).contains(&v));
    }
}

#[test]
fn bad_problem_lists_every_violation() {
    let mut p = two_option_problem("x");
    p.options.push("alpha".into());
    p.correct_index = 7;
    let errs = p.validate().unwrap_err();
    assert!(errs.len() >= 2, "{errs:?}");
}
