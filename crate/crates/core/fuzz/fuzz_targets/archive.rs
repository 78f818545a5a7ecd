#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(archive) = rsic::search::decode_archive(data) {
        let _ = rsic::search::encode_archive(&archive);
    }
});
