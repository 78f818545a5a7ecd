#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = rsic::imagecore::load_netpbm(data) {
        let bytes = match img.channels() {
            1 => rsic::imagecore::encode_pgm(&img),
            _ => rsic::imagecore::encode_ppm(&img),
        };
        let back = rsic::imagecore::load_netpbm(&bytes).expect("own output decodes");
        assert_eq!((back.width(), back.height()), (img.width(), img.height()));
    }
});
