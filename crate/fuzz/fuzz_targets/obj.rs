#![no_main]
use libfuzzer_sys::fuzz_target;
use relit_core::io::{parse_obj, write_obj};

fuzz_target!(|text: &str| {
    let Ok(mesh) = parse_obj(text) else { return };
    let faces = mesh.vertex_faces();
    let uvs = mesh.face_uvs();
    assert_eq!(faces.len(), uvs.len());
    assert!(faces.iter().flatten().all(|i| *i < mesh.positions.len()));
    let again = parse_obj(&write_obj(&mesh.positions, &faces, &uvs)).unwrap();
    assert_eq!(again.vertex_faces(), faces);
});
