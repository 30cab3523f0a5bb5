//! Tiny deterministic corpus of digit-like rasters for demos and tests.
//!
//! Label 0 draws a ring, 8 two stacked rings, 6 and 9 a ring with a tail,
//! every other label an open stroke. Variants shift the strokes and vary
//! their intensity.

use std::path::Path;

use crate::ingest::LabeledRaster;

pub const SIDE: usize = 12;

fn paint(pixels: &mut [u8], r: usize, c: usize, v: u8) {
    if r < SIDE && c < SIDE {
        let p = &mut pixels[r * SIDE + c];
        *p = (*p).max(v);
    }
}

fn ring(pixels: &mut [u8], top: usize, left: usize, h: usize, w: usize, v: u8) {
    for c in left..left + w {
        paint(pixels, top, c, v);
        paint(pixels, top + h - 1, c, v);
    }
    for r in top..top + h {
        paint(pixels, r, left, v);
        paint(pixels, r, left + w - 1, v);
    }
}

fn vline(pixels: &mut [u8], col: usize, from: usize, to: usize, v: u8) {
    for r in from..to {
        paint(pixels, r, col, v);
    }
}

fn hline(pixels: &mut [u8], row: usize, from: usize, to: usize, v: u8) {
    for c in from..to {
        paint(pixels, row, c, v);
    }
}

/// One raster of `label` (taken modulo 10); `variant` shifts and dims it.
pub fn digit(label: u8, variant: usize) -> LabeledRaster {
    let label = label % 10;
    let mut px = vec![0u8; SIDE * SIDE];
    let dx = variant % 2;
    let v = 255 - (variant % 4) as u8 * 20;
    match label {
        0 => ring(&mut px, 2, 3 + dx, 8, 5, v),
        8 => {
            ring(&mut px, 1, 3 + dx, 5, 5, v);
            ring(&mut px, 5, 3 + dx, 6, 5, v);
        }
        6 => {
            ring(&mut px, 6, 3 + dx, 5, 5, v);
            vline(&mut px, 3 + dx, 1, 6, v);
        }
        9 => {
            ring(&mut px, 1, 3 + dx, 5, 5, v);
            vline(&mut px, 7 + dx, 6, 11, v);
        }
        1 => vline(&mut px, 5 + dx, 1, 11, v),
        7 => {
            hline(&mut px, 2, 3 + dx, 9 + dx, v);
            vline(&mut px, 8 + dx, 2, 11, v);
        }
        4 => {
            vline(&mut px, 3 + dx, 1, 7, v);
            hline(&mut px, 6, 3 + dx, 9 + dx, v);
            vline(&mut px, 7 + dx, 1, 11, v);
        }
        _ => {
            // 2, 3, 5: a zig-zag that never closes
            hline(&mut px, 2, 3 + dx, 8 + dx, v);
            vline(&mut px, 8 + dx, 2, 6, v);
            hline(&mut px, 6, 3 + dx, 9 + dx, v);
            vline(&mut px, 3 + dx, 6, 10, v);
            hline(&mut px, 10, 3 + dx, 9 + dx - usize::from(label) % 3, v);
        }
    }
    LabeledRaster::new(format!("{label}_{variant}"), label, SIDE, SIDE, px)
        .expect("synthetic rasters are valid")
}

/// `per_label` variants of every label 0..=9, ordered by label.
pub fn corpus(per_label: usize) -> Vec<LabeledRaster> {
    (0..10u8)
        .flat_map(|label| (0..per_label).map(move |v| digit(label, v)))
        .collect()
}

/// Writes rasters as `<id>.png` grayscale files.
pub fn write_png_dir(items: &[LabeledRaster], dir: &Path) -> Result<(), image::ImageError> {
    std::fs::create_dir_all(dir).map_err(image::ImageError::IoError)?;
    for item in items {
        let img =
            image::GrayImage::from_raw(item.width as u32, item.height as u32, item.pixels.clone())
                .expect("pixel count matches");
        img.save(dir.join(format!("{}.png", item.id)))?;
    }
    Ok(())
}
