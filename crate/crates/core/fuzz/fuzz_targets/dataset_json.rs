#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ds) = rsic::corpus::parse_dataset_json(text, "images") {
            let again = rsic::corpus::parse_dataset_json(&rsic::corpus::dataset_to_json(&ds), "images")
                .expect("own output parses");
            assert_eq!(again.items, ds.items);
        }
    }
});
