#![no_main]

use libfuzzer_sys::fuzz_target;
use pixel_miso::format::{matrix_to_string, parse_matrix};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = parse_matrix(text) {
            let again = parse_matrix(&matrix_to_string(&m)).expect("printed matrix parses");
            assert_eq!(again, m);
        }
    }
});
