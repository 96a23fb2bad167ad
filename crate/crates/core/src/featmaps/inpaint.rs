use crate::error::{Error, Result};
use crate::image::Image;

/// Pull-push hole filling. Known entries are kept exactly; unknown entries
/// receive the bilinearly upsampled weighted mean of coarser pyramid levels.
pub fn pull_push(img: &Image, known: &[bool]) -> Result<Image> {
    if known.len() != img.width * img.height {
        return Err(Error::DimensionMismatch {
            what: "pull-push weights",
            expected: img.width * img.height,
            got: known.len(),
        });
    }
    let ch = img.channels;
    let mut levels = vec![(img.clone(), known.iter().map(|k| if *k { 1.0 } else { 0.0 }).collect::<Vec<f64>>())];
    // pull
    while levels.last().map_or(false, |(l, _)| l.width > 1 || l.height > 1) {
        let (prev, pw) = levels.last().unwrap();
        let (w, h) = (prev.width.div_ceil(2), prev.height.div_ceil(2));
        let mut next = Image::new(w, h, ch);
        let mut nw = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                let mut acc = vec![0.0; ch];
                let mut wsum = 0.0;
                for rr in 2 * r..(2 * r + 2).min(prev.height) {
                    for cc in 2 * c..(2 * c + 2).min(prev.width) {
                        let wt = pw[rr * prev.width + cc];
                        if wt > 0.0 {
                            for (a, v) in acc.iter_mut().zip(prev.pixel(rr, cc)) {
                                *a += wt * v;
                            }
                            wsum += wt;
                        }
                    }
                }
                if wsum > 0.0 {
                    for (o, a) in next.pixel_mut(r, c).iter_mut().zip(&acc) {
                        *o = a / wsum;
                    }
                }
                nw[r * w + c] = wsum.min(1.0);
            }
        }
        levels.push((next, nw));
    }
    if levels.last().unwrap().1[0] <= 0.0 {
        return Err(Error::AllHoles);
    }
    // push
    for k in (0..levels.len() - 1).rev() {
        let parent = levels[k + 1].0.clone();
        let (child, cw) = &mut levels[k];
        let mut sample = vec![0.0; ch];
        for r in 0..child.height {
            for c in 0..child.width {
                let wt = cw[r * child.width + c];
                if wt >= 1.0 {
                    continue;
                }
                parent.sample_bilinear((c as f64 + 0.5) / 2.0, (r as f64 + 0.5) / 2.0, &mut sample);
                for (o, s) in child.pixel_mut(r, c).iter_mut().zip(&sample) {
                    *o = wt * *o + (1.0 - wt) * s;
                }
                cw[r * child.width + c] = 1.0;
            }
        }
    }
    Ok(levels.swap_remove(0).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values_are_kept() {
        let mut img = Image::new(5, 3, 1);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = i as f64;
        }
        let known: Vec<bool> = (0..15).map(|i| i % 3 != 0).collect();
        let out = pull_push(&img, &known).unwrap();
        for i in 0..15 {
            if known[i] {
                assert_eq!(out.data[i], img.data[i]);
            }
        }
    }

    #[test]
    fn single_known_value_fills_everything() {
        let mut img = Image::new(7, 6, 2);
        img.pixel_mut(4, 5).copy_from_slice(&[0.25, 3.0]);
        let mut known = vec![false; 42];
        known[4 * 7 + 5] = true;
        let out = pull_push(&img, &known).unwrap();
        for px in out.data.chunks(2) {
            assert!((px[0] - 0.25).abs() < 1e-12 && (px[1] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nothing_known_is_an_error() {
        let img = Image::new(4, 4, 3);
        assert!(matches!(pull_push(&img, &[false; 16]), Err(Error::AllHoles)));
    }
}
