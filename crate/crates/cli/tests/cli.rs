use std::path::Path;
use std::process::{Command, Output};

use relit_core::image::Image;
use relit_core::io::{read_pfm, write_pfm, TensorContainer};
use relit_core::scene::{default_cameras, SceneSpec};

fn relit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stdout);
    let line = text.lines().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON in {text:?}"));
    serde_json::from_str(line).unwrap()
}

fn tiny_spec(dir: &Path) -> String {
    let mut s = SceneSpec::default();
    s.uv_resolution = 16;
    s.rig.leds = 8;
    s.lighting.env_rows = 16;
    s.lighting.env_cols = 32;
    s.lighting.token_rows = 4;
    s.lighting.token_cols = 8;
    s.lighting.train_envs = 1;
    s.lighting.heldout_envs = 1;
    s.cameras = default_cameras(24).unwrap();
    let p = dir.join("scene.json");
    std::fs::write(&p, s.to_json()).unwrap();
    p.to_str().unwrap().to_string()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(relit(&["relight", "--help"]).status.code(), Some(0));
    assert_eq!(relit(&["--version"]).status.code(), Some(0));
    assert_eq!(relit(&["explode"]).status.code(), Some(2));
    assert_eq!(relit(&["metrics", "only-one.pfm"]).status.code(), Some(2));
}

#[test]
fn metrics_on_identical_and_shifted_images() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = Image::new(16, 12, 3);
    for (i, v) in img.data.iter_mut().enumerate() {
        *v = (i % 17) as f64 / 17.0;
    }
    write_pfm(&dir.path().join("a.pfm"), &img).unwrap();
    let o = relit(&["metrics", &p(dir.path(), "a.pfm"), &p(dir.path(), "a.pfm")]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!(v["psnr_capped"], true);
    assert!((v["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    // a uniform 0.1 offset on peak 1 is exactly 20 dB
    let flat = Image::filled(16, 12, &[0.5; 3]);
    let shifted = Image::filled(16, 12, &[0.6; 3]);
    write_pfm(&dir.path().join("f.pfm"), &flat).unwrap();
    write_pfm(&dir.path().join("g.pfm"), &shifted).unwrap();
    let v = stdout_json(&relit(&["metrics", &p(dir.path(), "f.pfm"), &p(dir.path(), "g.pfm")]));
    assert!((v["psnr_db"].as_f64().unwrap() - 20.0).abs() < 1e-4);

    let small = Image::new(4, 4, 3);
    write_pfm(&dir.path().join("s.pfm"), &small).unwrap();
    assert_eq!(relit(&["metrics", &p(dir.path(), "a.pfm"), &p(dir.path(), "s.pfm")]).status.code(), Some(2));
    assert_eq!(relit(&["metrics", &p(dir.path(), "a.pfm"), &p(dir.path(), "missing.pfm")]).status.code(), Some(1));
}

#[test]
fn olat_check_on_small_rig() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    let o = relit(&["--config", &spec, "olat-check", "--leds", "8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["leds"], 8);
    assert!(v["max_rel_error"].as_f64().unwrap() <= 1e-4);
    assert_eq!(relit(&["--config", &spec, "olat-check", "--camera", "999"]).status.code(), Some(2));
    assert_eq!(relit(&["--config", &spec, "olat-check", "--env", "50"]).status.code(), Some(2));
}

#[test]
fn bad_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"uv_resolution": 3}"#).unwrap();
    let o = relit(&["--config", &p(dir.path(), "bad.json"), "olat-check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn scene_commands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    let o = relit(&["--config", &spec, "features", "--frame", "1", "--out", &p(dir.path(), "f.rhtc"), "--target", &p(dir.path(), "t.rhtc")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f = TensorContainer::read(&dir.path().join("f.rhtc")).unwrap();
    assert_eq!(f.dims, vec![16, 16, 24]);
    assert_eq!(TensorContainer::read(&dir.path().join("t.rhtc")).unwrap().dims, vec![16, 16, 3]);

    let o = relit(&["--config", &spec, "shade", "--frame", "0", "--out", &p(dir.path(), "d.pfm")]);
    assert!(o.status.success());
    let d = read_pfm(&dir.path().join("d.pfm")).unwrap();
    assert_eq!((d.width, d.height), (16, 16));
    assert!(d.data.iter().any(|v| *v > 0.0));

    let o = relit(&["--config", &spec, "oracle", "--frame", "1", "--env", "1", "--out", &p(dir.path(), "o.pfm")]);
    assert!(o.status.success());
    assert_eq!(read_pfm(&dir.path().join("o.pfm")).unwrap().width, 24);
    assert_eq!(relit(&["--config", &spec, "shade", "--frame", "400", "--out", &p(dir.path(), "x.pfm")]).status.code(), Some(2));
}

#[test]
fn gen_train_relight_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    let ds = p(dir.path(), "ds");
    let o = relit(&["--config", &spec, "--threads", "1", "gen", "--out", &ds]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["frames"], 4);

    let exp = dir.path().join("exp.json");
    std::fs::write(
        &exp,
        r#"{"net": {"uv_resolution": 16, "token_rows": 4, "token_cols": 8},
            "train": {"iterations": 4, "warmup_start": 1, "warmup_end": 3}}"#,
    )
    .unwrap();
    let ck = p(dir.path(), "ck");
    let o = relit(&["--config", exp.to_str().unwrap(), "train", "--dataset", &ds, "--out", &ck]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["iterations"], 4);
    assert!(v["ratio"].as_f64().unwrap().is_finite());

    let o = relit(&[
        "relight", "--dataset", &ds, "--checkpoint", &ck, "--frame", "3", "--env", "0", "--out", &p(dir.path(), "r.pfm"), "--reference",
        &p(dir.path(), "ref.pfm"),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!(v["ssim"].as_f64().unwrap().is_finite());
    let r = read_pfm(&dir.path().join("r.pfm")).unwrap();
    assert_eq!((r.width, r.height), (24, 24));

    // a network built for another UV size is refused
    std::fs::write(&exp, r#"{"net": {"uv_resolution": 32, "token_rows": 4, "token_cols": 8}, "train": {"iterations": 1}}"#).unwrap();
    let o = relit(&["--config", exp.to_str().unwrap(), "train", "--dataset", &ds, "--out", &p(dir.path(), "ck2")]);
    assert_eq!(o.status.code(), Some(2));
}
