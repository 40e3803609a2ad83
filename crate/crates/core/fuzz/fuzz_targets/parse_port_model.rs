#![no_main]

use libfuzzer_sys::fuzz_target;
use pixel_miso::port_model::PortModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(model) = PortModel::parse(text) {
            let again = PortModel::parse(&model.to_text()).expect("printed model parses");
            assert_eq!(again, model);
        }
    }
});
