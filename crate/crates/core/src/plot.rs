//! Minimal PNG charts. No text rendering; the numbers travel alongside in
//! CSV/JSON files written next to each image.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const BAR: Rgb<u8> = Rgb([52, 101, 164]);
const CELL: u32 = 48;
const MARGIN: u32 = 16;

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path)
        .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

fn fill(img: &mut RgbImage, x0: u32, y0: u32, w: u32, h: u32, c: Rgb<u8>) {
    for y in y0..(y0 + h).min(img.height()) {
        for x in x0..(x0 + w).min(img.width()) {
            img.put_pixel(x, y, c);
        }
    }
}

/// Vertical bars scaled to the largest value; negative values draw as zero.
pub fn bar_chart(path: &Path, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidInput(
            "bar chart needs at least one value".into(),
        ));
    }
    let height = 200;
    let width = 2 * MARGIN + values.len() as u32 * CELL;
    let mut img = RgbImage::from_pixel(width, height + 2 * MARGIN, BG);
    let top = values.iter().cloned().fold(0.0_f64, f64::max);
    for (i, &v) in values.iter().enumerate() {
        let h = if top > 0.0 && v > 0.0 {
            (v / top * height as f64).round() as u32
        } else {
            0
        };
        fill(
            &mut img,
            MARGIN + i as u32 * CELL + 6,
            MARGIN + height - h,
            CELL - 12,
            h,
            BAR,
        );
    }
    fill(
        &mut img,
        MARGIN,
        MARGIN + height,
        width - 2 * MARGIN,
        1,
        AXIS,
    );
    save(&img, path)
}

/// Blue (low) to red (high) colour ramp over `[lo, hi]`.
fn ramp(v: f64, lo: f64, hi: f64) -> Rgb<u8> {
    let t = if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    Rgb([lerp(49.0, 215.0), lerp(54.0, 48.0), lerp(149.0, 39.0)])
}

/// Row-major `rows × cols` grid; NaN cells are left grey.
pub fn heatmap(path: &Path, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    if rows == 0 || cols == 0 || values.len() != rows * cols {
        return Err(Error::Shape(format!(
            "heatmap {rows}x{cols} with {} values",
            values.len()
        )));
    }
    let finite = values.iter().filter(|v| v.is_finite());
    let lo = finite.clone().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut img = RgbImage::from_pixel(
        2 * MARGIN + cols as u32 * CELL,
        2 * MARGIN + rows as u32 * CELL,
        BG,
    );
    for r in 0..rows {
        for c in 0..cols {
            let v = values[r * cols + c];
            let color = if v.is_finite() {
                ramp(v, lo, hi)
            } else {
                Rgb([160, 160, 160])
            };
            fill(
                &mut img,
                MARGIN + c as u32 * CELL + 1,
                MARGIN + r as u32 * CELL + 1,
                CELL - 2,
                CELL - 2,
                color,
            );
        }
    }
    save(&img, path)
}
