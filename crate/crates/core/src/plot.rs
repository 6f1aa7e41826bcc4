//! Minimal PNG line charts: axes, polylines and point markers, no text.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

const W: u32 = 640;
const H: u32 = 400;
const MARGIN: u32 = 40;
const PALETTE: [[u8; 3]; 4] = [[31, 119, 180], [214, 39, 40], [44, 160, 44], [148, 103, 189]];

pub struct Series {
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> Option<(f64, f64, f64, f64)> {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let mut b: Option<(f64, f64, f64, f64)> = None;
    for &(x, y) in pts {
        b = Some(match b {
            None => (x, x, y, y),
            Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
        });
    }
    b.map(|(x0, x1, y0, y1)| {
        let pad = |lo: f64, hi: f64| if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        (x0, x1, y0, y1)
    })
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for s in 0..=steps {
        let x = x0 + (x1 - x0) * s / steps;
        let y = y0 + (y1 - y0) * s / steps;
        if x >= 0 && y >= 0 && (x as u32) < W && (y as u32) < H {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

/// Renders one chart. Series are drawn in palette order.
pub fn render(series: &[Series]) -> RgbImage {
    let mut img: RgbImage = ImageBuffer::from_pixel(W, H, Rgb([255, 255, 255]));
    let axis = Rgb([0, 0, 0]);
    let (l, r, t, b) = (MARGIN as i64, (W - MARGIN) as i64, MARGIN as i64, (H - MARGIN) as i64);
    line(&mut img, (l, b), (r, b), axis);
    line(&mut img, (l, b), (l, t), axis);
    let Some((x0, x1, y0, y1)) = bounds(series) else {
        return img;
    };
    let px = |x: f64| l + ((x - x0) / (x1 - x0) * (r - l) as f64).round() as i64;
    let py = |y: f64| b - ((y - y0) / (y1 - y0) * (b - t) as f64).round() as i64;
    for (i, s) in series.iter().enumerate() {
        let c = Rgb(PALETTE[i % PALETTE.len()]);
        let pts: Vec<(i64, i64)> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| (px(x), py(y)))
            .collect();
        for w in pts.windows(2) {
            line(&mut img, w[0], w[1], c);
        }
        for &(x, y) in &pts {
            for dx in -2..=2 {
                line(&mut img, (x + dx, y - 2), (x + dx, y + 2), c);
            }
        }
    }
    img
}

pub fn write_png(path: &Path, series: &[Series]) -> image::ImageResult<()> {
    render(series).save(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_series_pixels() {
        let img = render(&[Series {
            points: vec![(0.0, 0.0), (1.0, 1.0)],
        }]);
        let blue = Rgb(PALETTE[0]);
        assert!(img.pixels().any(|p| *p == blue));
        assert_eq!(img.dimensions(), (W, H));
    }

    #[test]
    fn empty_chart_has_axes_only() {
        let img = render(&[]);
        assert!(img.pixels().all(|p| *p == Rgb([255, 255, 255]) || *p == Rgb([0, 0, 0])));
    }
}
