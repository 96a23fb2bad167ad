#![no_main]
use libfuzzer_sys::fuzz_target;
use relit_core::io::RigFile;

fuzz_target!(|text: &str| {
    if let Ok(rig) = RigFile::parse(text) {
        assert_eq!(RigFile::parse(&rig.to_json()).unwrap(), rig);
    }
});
