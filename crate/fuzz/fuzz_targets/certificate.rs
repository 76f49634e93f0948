#![no_main]

use libfuzzer_sys::fuzz_target;
use rahier::adversary::Certificate;

fuzz_target!(|data: &[u8]| {
    // Only decoding is fuzzed: verification replays machines and may spawn
    // the external command a certificate names.
    if let Ok(cert) = serde_json::from_slice::<Certificate>(data) {
        let text = serde_json::to_string(&cert).expect("certificate serializes");
        let back: Certificate = serde_json::from_str(&text).expect("round trip");
        assert_eq!(back, cert);
    }
});
