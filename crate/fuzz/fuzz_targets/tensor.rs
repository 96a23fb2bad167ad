#![no_main]
use libfuzzer_sys::fuzz_target;
use relit_core::io::TensorContainer;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = TensorContainer::decode(data) {
        let bytes = t.encode();
        let again = TensorContainer::decode(&bytes).unwrap();
        assert_eq!(again.dims, t.dims);
        assert_eq!(again.encode(), bytes);
    }
});
