#![no_main]

use libfuzzer_sys::fuzz_target;
use pixel_miso::codebook::FlatCodebook;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cb) = FlatCodebook::parse(text) {
            assert_eq!(FlatCodebook::parse(&cb.to_text()).unwrap(), cb);
        }
    }
});
