//! Side-by-side comparison grids: ground-truth Cryosection, input MRI and colorized
//! output as rows, one column per sample.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::Array3;

use crate::data::TripletSample;
use crate::error::{Error, Result};

pub const ROW_LABELS: [&str; 3] = ["GT CRYO.", "INPUT MRI", "OUTPUT"];

const PAD: u32 = 4;
const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([0, 0, 0]);

/// 5x7 bitmap glyphs, one byte per row, bit 4 = leftmost column.
fn glyph(ch: char) -> [u8; 7] {
    match ch.to_ascii_uppercase() {
        'A' => [0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11],
        'B' => [0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e],
        'C' => [0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e],
        'D' => [0x1e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1e],
        'E' => [0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f],
        'F' => [0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10],
        'G' => [0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f],
        'H' => [0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11],
        'I' => [0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f],
        'M' => [0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e],
        'P' => [0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10],
        'Q' => [0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d],
        'R' => [0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11],
        'S' => [0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e],
        'T' => [0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0a, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0a],
        'X' => [0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0a, 0x04, 0x04, 0x04],
        'Z' => [0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f],
        '0' => [0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e],
        '1' => [0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e],
        '2' => [0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f],
        '3' => [0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e],
        '4' => [0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02],
        '5' => [0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e],
        '6' => [0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e],
        '7' => [0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e],
        '9' => [0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c],
        '#' => [0x0a, 0x0a, 0x1f, 0x0a, 0x1f, 0x0a, 0x0a],
        '-' => [0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00],
        _ => [0; 7],
    }
}

fn text_width(text: &str) -> u32 {
    text.chars().count() as u32 * (GLYPH_W + 1)
}

fn draw_text(img: &mut RgbImage, x0: u32, y0: u32, text: &str) {
    for (i, ch) in text.chars().enumerate() {
        let rows = glyph(ch);
        let gx = x0 + i as u32 * (GLYPH_W + 1);
        for (dy, bits) in rows.iter().enumerate() {
            for dx in 0..GLYPH_W {
                if bits & (0x10 >> dx) != 0 {
                    let (x, y) = (gx + dx, y0 + dy as u32);
                    if x < img.width() && y < img.height() {
                        img.put_pixel(x, y, INK);
                    }
                }
            }
        }
    }
}

fn blit(img: &mut RgbImage, x0: u32, y0: u32, plane: &Array3<f32>) -> Result<()> {
    let (ch, h, w) = plane.dim();
    if ch != 1 && ch != 3 {
        return Err(Error::shape(format!("grid cells need 1 or 3 channels, got {ch}")));
    }
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for y in 0..h {
        for x in 0..w {
            let px = if ch == 1 {
                let g = q(plane[[0, y, x]]);
                Rgb([g, g, g])
            } else {
                Rgb([q(plane[[0, y, x]]), q(plane[[1, y, x]]), q(plane[[2, y, x]])])
            };
            img.put_pixel(x0 + x as u32, y0 + y as u32, px);
        }
    }
    Ok(())
}

/// Renders the grid in memory. Every image must share one spatial size.
pub fn render_comparison_grid(samples: &[TripletSample], outputs: &[Array3<f32>]) -> Result<RgbImage> {
    if samples.is_empty() {
        return Err(Error::shape("comparison grid needs at least one sample"));
    }
    if samples.len() != outputs.len() {
        return Err(Error::shape(format!(
            "{} samples but {} outputs for the comparison grid",
            samples.len(),
            outputs.len()
        )));
    }
    let (h, w) = samples[0].size();
    for (s, o) in samples.iter().zip(outputs) {
        let (_, oh, ow) = o.dim();
        if s.size() != (h, w) || (oh, ow) != (h, w) {
            return Err(Error::shape("all grid images must share one size"));
        }
    }
    let (h, w) = (h as u32, w as u32);
    let n = samples.len() as u32;
    let label_w = ROW_LABELS.iter().map(|l| text_width(l)).max().unwrap_or(0) + 2 * PAD;
    let header_h = GLYPH_H + 2 * PAD;
    let width = label_w + n * (w + PAD);
    let height = header_h + 3 * (h + PAD);
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    for (j, (s, out)) in samples.iter().zip(outputs).enumerate() {
        let x0 = label_w + j as u32 * (w + PAD);
        let tag = format!("#{}", j + 1);
        draw_text(&mut img, x0 + w.saturating_sub(text_width(&tag)) / 2, PAD, &tag);
        for (r, cell) in [&s.c, &s.m, out].into_iter().enumerate() {
            blit(&mut img, x0, header_h + r as u32 * (h + PAD), cell)?;
        }
    }
    for (r, label) in ROW_LABELS.iter().enumerate() {
        let y = header_h + r as u32 * (h + PAD) + h.saturating_sub(GLYPH_H) / 2;
        draw_text(&mut img, PAD, y, label);
    }
    Ok(img)
}

/// Writes the grid as PNG; nothing is written when the inputs are invalid.
pub fn emit_comparison_grid(samples: &[TripletSample], outputs: &[Array3<f32>], path: &Path) -> Result<()> {
    let img = render_comparison_grid(samples, outputs)?;
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| Error::shape(format!("PNG encoding failed: {e}")))?;
    crate::nn::checkpoint::write_atomic(path, &bytes.into_inner())
}

/// Cell rectangle `(x, y, w, h)` of `(row, column)` in a grid built from `n`
/// samples of size `h x w`.
pub fn cell_rect(row: usize, col: usize, h: usize, w: usize) -> (u32, u32, u32, u32) {
    let label_w = ROW_LABELS.iter().map(|l| text_width(l)).max().unwrap_or(0) + 2 * PAD;
    let header_h = GLYPH_H + 2 * PAD;
    let (h, w) = (h as u32, w as u32);
    (label_w + col as u32 * (w + PAD), header_h + row as u32 * (h + PAD), w, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_phantom, PhantomSpec};

    fn samples(n: usize) -> Vec<TripletSample> {
        let spec = PhantomSpec::new(32, 3, 2);
        (0..n as u64).map(|i| generate_phantom(&spec, i).unwrap()).collect()
    }

    #[test]
    fn three_by_three_layout() {
        let s = samples(3);
        let outs: Vec<_> = s.iter().map(|t| t.c.mapv(|v| 1.0 - v)).collect();
        let img = render_comparison_grid(&s, &outs).unwrap();
        for (col, t) in s.iter().enumerate() {
            for (row, cell) in [&t.c, &t.m, &outs[col]].into_iter().enumerate() {
                let (x, y, _, _) = cell_rect(row, col, 32, 32);
                let px = img.get_pixel(x + 5, y + 7);
                let ch = cell.dim().0;
                let expect = (cell[[0, 7, 5]].clamp(0.0, 1.0) * 255.0).round() as u8;
                assert_eq!(px[0], expect, "row {row} col {col}");
                if ch == 1 {
                    assert_eq!(px[0], px[2]);
                }
            }
        }
        let (x, y, w, h) = cell_rect(2, 2, 32, 32);
        assert_eq!(img.width(), x + w + PAD);
        assert_eq!(img.height(), y + h + PAD);
    }

    #[test]
    fn labels_are_drawn() {
        let s = samples(1);
        let img = render_comparison_grid(&s, &[s[0].c.clone()]).unwrap();
        let ink = (0..img.height()).filter(|&y| (0..PAD + 40).any(|x| img.get_pixel(x, y) == &INK)).count();
        assert!(ink > 3 * GLYPH_H as usize - 1);
    }

    #[test]
    fn invalid_inputs_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.png");
        assert!(emit_comparison_grid(&[], &[], &path).is_err());
        let s = samples(2);
        assert!(emit_comparison_grid(&s, &[s[0].c.clone()], &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn deterministic_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let s = samples(2);
        let outs: Vec<_> = s.iter().map(|t| t.c.clone()).collect();
        let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
        emit_comparison_grid(&s, &outs, &a).unwrap();
        emit_comparison_grid(&s, &outs, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }
}
