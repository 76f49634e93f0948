#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = rahier::formats::parse_polynomial(text) {
        let _ = p.degree();
        let _ = p.derivative();
    }
    let _ = rahier::formats::parse_polynomial_lines(text);
});
