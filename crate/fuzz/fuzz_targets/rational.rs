#![no_main]

use libfuzzer_sys::fuzz_target;
use rahier::Rational;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(q) = s.parse::<Rational>() {
        // Canonical form survives a print/parse cycle.
        assert_eq!(q.to_string().parse::<Rational>().unwrap(), q);
    }
    let _ = rahier::formats::parse_rational_token(s);
});
