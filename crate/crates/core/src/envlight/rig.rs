use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::EnvironmentMap;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::image::Image;

pub const DEFAULT_LED_COUNT: usize = 331;

/// Point emitters on a stage around the capture volume, each with a
/// solid-angle weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedRig {
    pub positions: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl LedRig {
    pub fn new(positions: Vec<[f64; 3]>, weights: Vec<f64>) -> Result<Self> {
        let rig = Self { positions, weights };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::invalid("LED rig is empty"));
        }
        if self.positions.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                what: "LED weights",
                expected: self.positions.len(),
                got: self.weights.len(),
            });
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("LED weight {w} must be positive")));
        }
        if self.positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("LED position is not finite"));
        }
        let mut sorted = self.positions.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("LED positions must be distinct"));
        }
        Ok(())
    }

    /// Fibonacci-sphere layout of `count` LEDs, each weighted `4π / count`.
    pub fn fibonacci(count: usize, radius: f64, center: Vec3) -> Result<Self> {
        let dirs = fibonacci_directions(count);
        Self::new(
            dirs.iter().map(|d| (center + d * radius).into()).collect(),
            vec![4.0 * PI / count as f64; count],
        )
    }

    /// `count` LEDs over the upper (+Z) hemisphere, each weighted `2π / count`.
    pub fn hemisphere(count: usize, radius: f64, center: Vec3) -> Result<Self> {
        let golden = PI * (3.0 - 5f64.sqrt());
        let positions = (0..count)
            .map(|i| {
                let z = 1.0 - (i as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                (center + Vec3::new(r * phi.cos(), r * phi.sin(), z) * radius).into()
            })
            .collect();
        Self::new(positions, vec![2.0 * PI / count as f64; count])
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> Vec3 {
        Vec3::from(self.positions[i])
    }

    pub fn center(&self) -> Vec3 {
        self.positions.iter().map(|p| Vec3::from(*p)).sum::<Vec3>() / self.len() as f64
    }
}

pub fn fibonacci_directions(count: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

/// Per-LED linear RGB intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigLighting {
    pub intensities: Vec<[f64; 3]>,
}

impl RigLighting {
    pub fn zeros(n: usize) -> Self {
        Self {
            intensities: vec![[0.0; 3]; n],
        }
    }

    pub fn uniform(n: usize, intensity: f64) -> Self {
        Self {
            intensities: vec![[intensity; 3]; n],
        }
    }

    pub fn validate(&self, rig: &LedRig) -> Result<()> {
        if self.intensities.len() != rig.len() {
            return Err(Error::DimensionMismatch {
                what: "rig lighting",
                expected: rig.len(),
                got: self.intensities.len(),
            });
        }
        if self.intensities.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("LED intensities must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn max_channel(&self) -> f64 {
        self.intensities.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// `Σ wᵢ · basisᵢ`, componentwise.
    pub fn combine(basis: &[RigLighting], weights: &[[f64; 3]]) -> Result<Self> {
        let n = basis.first().map_or(0, |b| b.intensities.len());
        if basis.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                what: "basis weights",
                expected: basis.len(),
                got: weights.len(),
            });
        }
        let mut out = Self::zeros(n);
        for (b, w) in basis.iter().zip(weights) {
            for (o, v) in out.intensities.iter_mut().zip(&b.intensities) {
                for c in 0..3 {
                    o[c] += w[c] * v[c];
                }
            }
        }
        Ok(out)
    }
}

/// One lighting per LED with only that LED lit.
pub fn olat_basis(rig: &LedRig, intensity: f64) -> Result<Vec<RigLighting>> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(Error::invalid(format!("OLAT intensity {intensity} must be positive")));
    }
    Ok((0..rig.len())
        .map(|i| {
            let mut l = RigLighting::zeros(rig.len());
            l.intensities[i] = [intensity; 3];
            l
        })
        .collect())
}

/// Precomputed nearest-LED assignment for an environment resolution.
#[derive(Debug, Clone)]
pub struct RigQuantizer {
    rows: usize,
    cols: usize,
    assignment: Vec<u32>,
    counts: Vec<u32>,
}

impl RigQuantizer {
    /// Assigns every pixel to the LED with the smallest angle between the
    /// pixel direction and the LED direction as seen from the rig center.
    /// Ties go to the lower LED index.
    pub fn new(rows: usize, cols: usize, rig: &LedRig) -> Self {
        let center = rig.center();
        let dirs: Vec<Vec3> = (0..rig.len()).map(|i| (rig.position(i) - center).normalize()).collect();
        let mut assignment = vec![0u32; rows * cols];
        let mut counts = vec![0u32; rig.len()];
        for row in 0..rows {
            for col in 0..cols {
                let d = EnvironmentMap::direction(rows, cols, row, col);
                let mut best = (f64::NEG_INFINITY, 0usize);
                for (i, l) in dirs.iter().enumerate() {
                    let c = d.dot(l);
                    if c > best.0 {
                        best = (c, i);
                    }
                }
                assignment[row * cols + col] = best.1 as u32;
                counts[best.1] += 1;
            }
        }
        Self {
            rows,
            cols,
            assignment,
            counts,
        }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn led_of(&self, row: usize, col: usize) -> usize {
        self.assignment[row * self.cols + col] as usize
    }

    /// Mean of assigned pixels per LED, then (when `cap` is set) scaled so the
    /// brightest channel equals `cap`. LEDs with no pixels stay dark.
    pub fn quantize(&self, env: &EnvironmentMap, cap: Option<f64>) -> Result<RigLighting> {
        if env.rows() != self.rows || env.cols() != self.cols {
            return Err(Error::invalid(format!(
                "quantizer built for {}x{}, environment is {}x{}",
                self.rows,
                self.cols,
                env.rows(),
                env.cols()
            )));
        }
        let mut sums = vec![[0.0; 3]; self.counts.len()];
        for (px, &led) in env.image().data.chunks_exact(3).zip(&self.assignment) {
            let s = &mut sums[led as usize];
            s[0] += px[0];
            s[1] += px[1];
            s[2] += px[2];
        }
        let mut out = RigLighting {
            intensities: sums
                .iter()
                .zip(&self.counts)
                .map(|(s, &n)| if n == 0 { [0.0; 3] } else { s.map(|v| v / n as f64) })
                .collect(),
        };
        if let Some(cap) = cap {
            let max = out.max_channel();
            if max > 0.0 {
                let k = cap / max;
                for v in out.intensities.iter_mut().flatten() {
                    *v *= k;
                }
            }
        }
        Ok(out)
    }

    /// The environment map as the rig reproduces it: every pixel takes the
    /// intensity of its LED.
    pub fn expand(&self, lighting: &RigLighting) -> Result<EnvironmentMap> {
        if lighting.intensities.len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                what: "rig lighting",
                expected: self.counts.len(),
                got: lighting.intensities.len(),
            });
        }
        let mut img = Image::new(self.cols, self.rows, 3);
        for (px, &led) in img.data.chunks_exact_mut(3).zip(&self.assignment) {
            px.copy_from_slice(&lighting.intensities[led as usize]);
        }
        EnvironmentMap::new(img)
    }
}

pub fn quantize_to_rig(env: &EnvironmentMap, rig: &LedRig, cap: Option<f64>) -> Result<RigLighting> {
    RigQuantizer::new(env.rows(), env.cols(), rig).quantize(env, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn octa_rig() -> LedRig {
        let mut pos = Vec::new();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    pos.push([sx, sy, sz]);
                }
            }
        }
        LedRig::new(pos, vec![0.5 * PI; 8]).unwrap()
    }

    #[test]
    fn constant_env_hits_cap() {
        let rig = LedRig::fibonacci(40, 2.0, Vec3::zeros()).unwrap();
        let env = EnvironmentMap::constant(32, 64, [0.7; 3]);
        let q = RigQuantizer::new(32, 64, &rig);
        let l = q.quantize(&env, Some(0.7)).unwrap();
        for (i, v) in l.intensities.iter().enumerate() {
            if q.counts()[i] > 0 {
                for c in v {
                    assert!((c - 0.7).abs() < 1e-12);
                }
            } else {
                assert_eq!(*v, [0.0; 3]);
            }
        }
    }

    #[test]
    fn zero_env_gives_dark_rig() {
        let rig = octa_rig();
        let l = quantize_to_rig(&EnvironmentMap::constant(16, 32, [0.0; 3]), &rig, Some(1.0)).unwrap();
        assert!(l.intensities.iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn single_hot_pixel_lights_its_nearest_led_only() {
        let rig = octa_rig();
        let (rows, cols) = (16, 32);
        let (hr, hc) = (3, 5);
        let mut img = Image::new(cols, rows, 3);
        img.pixel_mut(hr, hc).copy_from_slice(&[8.0, 4.0, 2.0]);
        let env = EnvironmentMap::new(img).unwrap();
        let l = quantize_to_rig(&env, &rig, None).unwrap();

        // exhaustive assignment: count pixels whose nearest LED is the hot pixel's LED
        let d = EnvironmentMap::direction(rows, cols, hr, hc);
        let nearest = |d: &Vec3| {
            (0..8)
                .max_by(|&a, &b| {
                    let da = d.dot(&rig.position(a).normalize());
                    let db = d.dot(&rig.position(b).normalize());
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .unwrap()
        };
        let hot = nearest(&d);
        let count = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .filter(|&(r, c)| nearest(&EnvironmentMap::direction(rows, cols, r, c)) == hot)
            .count() as f64;
        for (i, v) in l.intensities.iter().enumerate() {
            if i == hot {
                assert!((v[0] - 8.0 / count).abs() < 1e-12);
                assert!((v[2] - 2.0 / count).abs() < 1e-12);
            } else {
                assert_eq!(*v, [0.0; 3]);
            }
        }
    }

    #[test]
    fn olat_basis_properties() {
        let rig = LedRig::fibonacci(DEFAULT_LED_COUNT, 3.0, Vec3::zeros()).unwrap();
        let basis = olat_basis(&rig, 2.0).unwrap();
        assert_eq!(basis.len(), 331);
        for b in &basis {
            assert_eq!(b.intensities.iter().filter(|v| **v != [0.0; 3]).count(), 1);
        }
        let sum = RigLighting::combine(&basis, &vec![[1.0; 3]; 331]).unwrap();
        assert_eq!(sum, RigLighting::uniform(331, 2.0));
        assert!(olat_basis(&rig, 0.0).is_err());
    }

    #[test]
    fn rig_validation() {
        assert!(LedRig::new(vec![[0.0; 3], [0.0; 3]], vec![1.0, 1.0]).is_err());
        assert!(LedRig::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], vec![1.0, 0.0]).is_err());
        assert!(LedRig::new(vec![[0.0; 3]], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn expand_reproduces_rig_values() {
        let rig = octa_rig();
        let q = RigQuantizer::new(16, 32, &rig);
        let l = RigLighting {
            intensities: (0..8).map(|i| [i as f64; 3]).collect(),
        };
        let env = q.expand(&l).unwrap();
        assert_eq!(q.quantize(&env, None).unwrap(), l);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn quantize_is_linear_without_normalization(s1 in 0u64..1000, s2 in 0u64..1000, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let rig = LedRig::fibonacci(20, 1.0, Vec3::zeros()).unwrap();
            let q = RigQuantizer::new(16, 32, &rig);
            let e1 = EnvironmentMap::procedural(16, 32, s1);
            let e2 = EnvironmentMap::procedural(16, 32, s2);
            let lhs = q.quantize(&e1.combine(a, &e2, b).unwrap(), None).unwrap();
            let l1 = q.quantize(&e1, None).unwrap();
            let l2 = q.quantize(&e2, None).unwrap();
            for ((x, y), z) in lhs.intensities.iter().zip(&l1.intensities).zip(&l2.intensities) {
                for c in 0..3 {
                    prop_assert!((x[c] - (a * y[c] + b * z[c])).abs() <= 1e-9 * (1.0 + x[c].abs()));
                }
            }
        }

        #[test]
        fn olat_combination_reproduces_any_lighting(vals in proptest::collection::vec(0.0f64..5.0, 8 * 3)) {
            let rig = octa_rig();
            let basis = olat_basis(&rig, 1.0).unwrap();
            let target: Vec<[f64; 3]> = vals.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            let got = RigLighting::combine(&basis, &target).unwrap();
            prop_assert_eq!(got.intensities, target);
        }
    }
}
