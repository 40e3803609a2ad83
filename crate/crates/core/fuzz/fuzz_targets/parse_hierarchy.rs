#![no_main]

use libfuzzer_sys::fuzz_target;
use pixel_miso::hierarchy::HierarchicalCodebook;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(hc) = HierarchicalCodebook::parse(text) {
            assert_eq!(HierarchicalCodebook::parse(&hc.to_text()).unwrap(), hc);
        }
    }
});
