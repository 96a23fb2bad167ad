use std::path::PathBuf;

use relit_core::io::read_pfm;
use relit_core::metrics::{psnr, ssim};

fn fixture(name: &str) -> relit_core::image::Image {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    read_pfm(&p).unwrap()
}

// Reference values from an independent Gaussian-window SSIM implementation
// (population covariance, float64 inputs, channel mean).
const REFERENCE: [(&str, f64, f64); 3] = [
    ("gray", 1.0, 0.4120156226464691),
    ("blur", 1.0, 0.2559716363508863),
    ("stripes", 2.0, 0.664012445992761),
];

#[test]
fn ssim_matches_reference_fixtures() {
    for (name, range, expected) in REFERENCE {
        let a = fixture(&format!("{name}_a.pfm"));
        let b = fixture(&format!("{name}_b.pfm"));
        let got = ssim(&a, &b, range).unwrap();
        assert!((got - expected).abs() <= 1e-4, "{name}: {got} vs {expected}");
        assert!((ssim(&b, &a, range).unwrap() - got).abs() < 1e-12);
    }
}

#[test]
fn psnr_on_fixtures_is_finite_and_symmetric() {
    for (name, range, _) in REFERENCE {
        let a = fixture(&format!("{name}_a.pfm"));
        let b = fixture(&format!("{name}_b.pfm"));
        let p = psnr(&a, &b, range).unwrap();
        assert!(p.db.is_finite() && !p.capped);
        assert_eq!(p, psnr(&b, &a, range).unwrap());
    }
}
