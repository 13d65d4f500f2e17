#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(d) = gabar::pddl::parse_domain(text) {
            // Printing and re-reading must succeed and be stable.
            let again = gabar::pddl::parse_domain(&d.to_pddl()).expect("printed domain parses");
            assert_eq!(again, d);
        }
    }
});
