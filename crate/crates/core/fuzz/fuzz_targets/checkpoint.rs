#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = rsic::captioner::decode_checkpoint(data) {
        assert_eq!(rsic::captioner::encode_checkpoint(&model), data);
    }
});
