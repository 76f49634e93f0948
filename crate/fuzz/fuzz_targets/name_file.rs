#![no_main]

use libfuzzer_sys::fuzz_target;
use rahier::formats::{parse_name_file, write_name_file};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(f) = parse_name_file(text) {
        let again = parse_name_file(&write_name_file(&f.header, &f.values)).expect("written file parses");
        assert_eq!(again, f);
    }
});
