#![no_main]
use libfuzzer_sys::fuzz_target;
use relit_core::scene::SceneSpec;

fuzz_target!(|text: &str| {
    if let Ok(spec) = SceneSpec::parse(text) {
        assert_eq!(SceneSpec::parse(&spec.to_json()).unwrap(), spec);
    }
});
