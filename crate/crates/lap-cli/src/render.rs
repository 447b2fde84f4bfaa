//! Static output rendering: per-joint heatmap graymaps and the skeleton
//! overlay pixmap.

use lap_core::heatmap::{DecodedKeypoint, KeypointSchema};
use lap_core::tensor::Tensor;

use crate::netpbm::{unit_to_byte, Image};

/// Fixed joint/limb palette.
const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
    [170, 110, 40],
];

/// One heatmap plane as an 8-bit graymap, normalized by its own peak.
pub fn heatmap_image(maps: &Tensor, n: usize, j: usize) -> Image {
    let s = maps.shape();
    let plane = maps.plane(n, j);
    let peak = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if peak > 1e-12 { 1.0 / peak } else { 0.0 };
    let data = plane
        .iter()
        .map(|&v| unit_to_byte((v * scale).max(0.0)))
        .collect();
    Image::gray(s.w, s.h, data)
}

/// Input tensor (3 x H x W in [0,1]) back to an RGB byte image.
pub fn tensor_to_rgb(image: &Tensor) -> Image {
    let s = image.shape();
    let mut data = Vec::with_capacity(s.h * s.w * 3);
    for y in 0..s.h {
        for x in 0..s.w {
            for c in 0..3 {
                data.push(unit_to_byte(image.at(0, c, y, x)));
            }
        }
    }
    Image::rgb(s.w, s.h, data)
}

fn put(img: &mut Image, x: i64, y: i64, color: [u8; 3]) {
    if x < 0 || y < 0 || x >= img.width as i64 || y >= img.height as i64 {
        return;
    }
    let i = (y as usize * img.width + x as usize) * 3;
    img.data[i..i + 3].copy_from_slice(&color);
}

fn draw_line(img: &mut Image, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_marker(img: &mut Image, x: i64, y: i64, color: [u8; 3]) {
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, x + dx, y + dy, color);
        }
    }
}

/// Draws limbs and joint markers over the input image. `joints` are in
/// heatmap coordinates; `scale` maps them to image pixels (4 for the
/// quarter-resolution heatmaps).
pub fn render_overlay(
    image: &Tensor,
    joints: &[DecodedKeypoint],
    schema: &KeypointSchema,
    scale: f64,
) -> Image {
    let mut img = tensor_to_rgb(image);
    for (li, &(a, b)) in schema.limbs.iter().enumerate() {
        if a >= joints.len() || b >= joints.len() {
            continue;
        }
        let color = PALETTE[li % PALETTE.len()];
        let (ja, jb) = (&joints[a], &joints[b]);
        draw_line(
            &mut img,
            (ja.x * scale).round() as i64,
            (ja.y * scale).round() as i64,
            (jb.x * scale).round() as i64,
            (jb.y * scale).round() as i64,
            color,
        );
    }
    for (ji, j) in joints.iter().enumerate() {
        draw_marker(
            &mut img,
            (j.x * scale).round() as i64,
            (j.y * scale).round() as i64,
            PALETTE[ji % PALETTE.len()],
        );
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use lap_core::tensor::Shape;

    #[test]
    fn heatmap_normalizes_to_peak() {
        let mut maps = Tensor::zeros(Shape::new(1, 1, 4, 4));
        maps.set(0, 0, 1, 2, 0.5);
        let img = heatmap_image(&maps, 0, 0);
        assert_eq!(img.data[1 * 4 + 2], 255);
        assert_eq!(img.data[0], 0);
    }

    #[test]
    fn overlay_is_deterministic_and_in_bounds() {
        let image = Tensor::filled(Shape::new(1, 3, 16, 16), 0.25);
        let schema = KeypointSchema::toy(3);
        let joints = vec![
            DecodedKeypoint {
                x: 1.0,
                y: 1.0,
                confidence: 1.0,
            },
            DecodedKeypoint {
                x: 3.0,
                y: 2.0,
                confidence: 1.0,
            },
            // off-frame joint must not panic
            DecodedKeypoint {
                x: 100.0,
                y: -5.0,
                confidence: 0.1,
            },
        ];
        let a = render_overlay(&image, &joints, &schema, 4.0);
        let b = render_overlay(&image, &joints, &schema, 4.0);
        assert_eq!(a, b);
        assert_eq!(a.data.len(), 16 * 16 * 3);
    }
}
