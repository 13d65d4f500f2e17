#![no_main]

use std::sync::OnceLock;

use gabar::generate::BLOCKSWORLD_DOMAIN;
use gabar::pddl::{parse_domain, Domain};
use gabar::train::{Dataset, Split};
use libfuzzer_sys::fuzz_target;

fn domain() -> &'static Domain {
    static D: OnceLock<Domain> = OnceLock::new();
    D.get_or_init(|| parse_domain(BLOCKSWORLD_DOMAIN).unwrap())
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let d = domain();
    if let Ok(ds) = Dataset::from_jsonl(text, d, Split::Train) {
        let back = Dataset::from_jsonl(&ds.to_jsonl(d), d, Split::Train).expect("written records parse");
        assert_eq!(back.examples, ds.examples);
    }
});
