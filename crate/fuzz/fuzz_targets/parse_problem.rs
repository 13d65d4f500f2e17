#![no_main]

use std::sync::OnceLock;

use gabar::generate::BLOCKSWORLD_DOMAIN;
use gabar::pddl::{ground_actions, parse_domain, parse_problem, Domain};
use libfuzzer_sys::fuzz_target;

fn domain() -> &'static Domain {
    static D: OnceLock<Domain> = OnceLock::new();
    D.get_or_init(|| parse_domain(BLOCKSWORLD_DOMAIN).unwrap())
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let d = domain();
    if let Ok(i) = parse_problem(text, d) {
        let again = parse_problem(&i.to_pddl(d), d).expect("printed problem parses");
        assert_eq!(again, i);
        if i.objects.len() <= 12 {
            let _ = ground_actions(d, &i);
        }
    }
});
