//! Image stack ingestion: 8-bit RGB PNG/PPM frames to a dense tensor with
//! values scaled to [0,1]. One frame gives H×W×3; several give H×W×3×F.

use anyhow::{bail, Context, Result};
use std::path::Path;
use tr_core::tensor::DenseTensor;

pub fn ingest_image_stack(paths: &[impl AsRef<Path>]) -> Result<DenseTensor> {
    if paths.is_empty() {
        bail!("no input images given");
    }
    let mut frames = Vec::with_capacity(paths.len());
    let mut dims = None;
    for p in paths {
        let p = p.as_ref();
        let img = image::open(p)
            .with_context(|| format!("reading image {}", p.display()))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        match dims {
            None => dims = Some((h, w)),
            Some(d) if d != (h, w) => {
                bail!(
                    "frame {} is {}x{}, expected {}x{}",
                    p.display(),
                    h,
                    w,
                    d.0,
                    d.1
                )
            }
            _ => {}
        }
        frames.push(img);
    }
    let (h, w) = dims.unwrap();
    let f = frames.len();
    let shape = if f == 1 {
        vec![h, w, 3]
    } else {
        vec![h, w, 3, f]
    };
    let mut out = DenseTensor::zeros(shape)?;
    for (fi, img) in frames.iter().enumerate() {
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3usize {
                let v = px.0[c] as f64 / 255.0;
                let idx = if f == 1 {
                    vec![y as usize, x as usize, c]
                } else {
                    vec![y as usize, x as usize, c, fi]
                };
                out.set(&idx, v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn checker(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            if (x + y) % 2 == 0 {
                Rgb([255, 0, 128])
            } else {
                Rgb([0, 255, 32])
            }
        })
    }

    #[test]
    fn single_image_is_three_way() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        checker(5, 4).save(&path).unwrap();
        let t = ingest_image_stack(&[&path]).unwrap();
        assert_eq!(t.shape(), &[4, 5, 3]);
        assert_eq!(t.get(&[0, 0, 0]), 1.0);
        assert_eq!(t.get(&[0, 0, 2]), 128.0 / 255.0);
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn stack_adds_frame_mode() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for i in 0..3 {
            let p = dir.path().join(format!("f{i}.png"));
            checker(3, 2).save(&p).unwrap();
            paths.push(p);
        }
        let t = ingest_image_stack(&paths).unwrap();
        assert_eq!(t.shape(), &[2, 3, 3, 3]);
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        checker(3, 2).save(&a).unwrap();
        checker(4, 2).save(&b).unwrap();
        assert!(ingest_image_stack(&[a, b]).is_err());
    }
}
