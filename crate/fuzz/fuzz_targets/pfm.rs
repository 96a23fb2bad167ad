#![no_main]
use libfuzzer_sys::fuzz_target;
use relit_core::io::{decode_pfm, encode_pfm};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_pfm(data) {
        assert_eq!(img.data.len(), img.width * img.height * img.channels);
        // decoded values are f32, so re-encoding is lossless
        let bytes = encode_pfm(&img).unwrap();
        let again = decode_pfm(&bytes).unwrap();
        assert_eq!(encode_pfm(&again).unwrap(), bytes);
    }
});
