//! Minimal dependency-free line/bar plot renderer for trajectory and
//! spectrum figures. White background, gray axes, colored series, 5x7
//! bitmap digits for tick labels.

use framestab::error::{Error, Result};
use std::path::Path;

pub struct Series<'a> {
    pub values: &'a [f64],
    pub color: [u8; 3],
}

const W: usize = 900;
const H: usize = 480;
const ML: usize = 70; // left margin
const MR: usize = 20;
const MT: usize = 20;
const MB: usize = 40;

struct Canvas {
    px: Vec<u8>,
}

impl Canvas {
    fn new() -> Canvas {
        Canvas {
            px: vec![255u8; W * H * 3],
        }
    }

    fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x >= W as i64 || y >= H as i64 {
            return;
        }
        let i = (y as usize * W + x as usize) * 3;
        self.px[i..i + 3].copy_from_slice(&c);
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, c: [u8; 3]) {
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            self.set(
                (x0 + (x1 - x0) * t).round() as i64,
                (y0 + (y1 - y0) * t).round() as i64,
                c,
            );
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(W as u32, H as u32, self.px.clone())
            .expect("canvas buffer size");
        img.save(path)
            .map_err(|e| Error::Format(format!("plot encode {}: {e}", path.display())))
    }
}

// 5x7 glyphs for digits, minus, dot, 'e'.
const GLYPHS: [(char, [u8; 7]); 13] = [
    ('0', [0x1E, 0x21, 0x25, 0x29, 0x31, 0x21, 0x1E]),
    ('1', [0x08, 0x18, 0x08, 0x08, 0x08, 0x08, 0x1C]),
    ('2', [0x1E, 0x21, 0x01, 0x0E, 0x10, 0x20, 0x3F]),
    ('3', [0x1E, 0x21, 0x01, 0x0E, 0x01, 0x21, 0x1E]),
    ('4', [0x02, 0x06, 0x0A, 0x12, 0x3F, 0x02, 0x02]),
    ('5', [0x3F, 0x20, 0x3E, 0x01, 0x01, 0x21, 0x1E]),
    ('6', [0x1E, 0x20, 0x3E, 0x21, 0x21, 0x21, 0x1E]),
    ('7', [0x3F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08]),
    ('8', [0x1E, 0x21, 0x21, 0x1E, 0x21, 0x21, 0x1E]),
    ('9', [0x1E, 0x21, 0x21, 0x1F, 0x01, 0x01, 0x1E]),
    ('-', [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00]),
    ('.', [0x00, 0x00, 0x00, 0x00, 0x00, 0x18, 0x18]),
    ('e', [0x00, 0x00, 0x1E, 0x21, 0x3F, 0x20, 0x1E]),
];

fn draw_text(canvas: &mut Canvas, x: usize, y: usize, text: &str) {
    let mut cx = x;
    for ch in text.chars() {
        if let Some((_, glyph)) = GLYPHS.iter().find(|(g, _)| *g == ch) {
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..6 {
                    if bits & (1 << (5 - col)) != 0 {
                        canvas.set((cx + col) as i64, (y + row) as i64, [60, 60, 60]);
                    }
                }
            }
        }
        cx += 7;
    }
}

fn nice_label(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

/// Renders one or more series as polylines over a shared index axis.
pub fn line_plot(path: &Path, series: &[Series<'_>]) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.values.is_empty()) {
        return Err(Error::Validation("nothing to plot".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut max_len = 0usize;
    for s in series {
        for v in s.values {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        max_len = max_len.max(s.values.len());
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Validation("non-finite plot values".into()));
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let mut canvas = Canvas::new();
    let plot_w = (W - ML - MR) as f64;
    let plot_h = (H - MT - MB) as f64;
    let to_x = |i: f64| ML as f64 + plot_w * i / (max_len.max(2) - 1) as f64;
    let to_y = |v: f64| MT as f64 + plot_h * (1.0 - (v - lo) / (hi - lo));

    // Axes and horizontal gridlines with labels.
    let axis = [150u8, 150, 150];
    canvas.line(ML as f64, MT as f64, ML as f64, (H - MB) as f64, axis);
    canvas.line(ML as f64, (H - MB) as f64, (W - MR) as f64, (H - MB) as f64, axis);
    for g in 0..=4 {
        let v = lo + (hi - lo) * g as f64 / 4.0;
        let y = to_y(v);
        canvas.line(ML as f64, y, (W - MR) as f64, y, [230, 230, 230]);
        draw_text(&mut canvas, 4, (y as usize).saturating_sub(3), &nice_label(v));
    }
    for g in 0..=4 {
        let i = (max_len.saturating_sub(1)) * g / 4;
        let x = to_x(i as f64);
        draw_text(&mut canvas, x as usize, H - MB + 8, &format!("{i}"));
    }

    for s in series {
        for w in s.values.windows(2).enumerate() {
            let (i, pair) = w;
            canvas.line(
                to_x(i as f64),
                to_y(pair[0]),
                to_x((i + 1) as f64),
                to_y(pair[1]),
                s.color,
            );
        }
    }
    canvas.save(path)
}

/// Renders magnitude-per-bin spectra as grouped bars.
pub fn spectrum_plot(path: &Path, series: &[Series<'_>]) -> Result<()> {
    if series.is_empty() {
        return Err(Error::Validation("nothing to plot".into()));
    }
    let bins = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let hi = series
        .iter()
        .flat_map(|s| s.values.iter().cloned())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let mut canvas = Canvas::new();
    let plot_w = (W - ML - MR) as f64;
    let plot_h = (H - MT - MB) as f64;
    let group_w = plot_w / bins.max(1) as f64;
    let bar_w = (group_w / (series.len() as f64 + 0.5)).max(1.0);

    let axis = [150u8, 150, 150];
    canvas.line(ML as f64, MT as f64, ML as f64, (H - MB) as f64, axis);
    canvas.line(ML as f64, (H - MB) as f64, (W - MR) as f64, (H - MB) as f64, axis);
    draw_text(&mut canvas, 4, MT, &nice_label(hi));

    for (si, s) in series.iter().enumerate() {
        for (bin, v) in s.values.iter().enumerate() {
            let x0 = ML as f64 + group_w * bin as f64 + bar_w * si as f64;
            let height = plot_h * (v / hi);
            let y0 = (H - MB) as f64 - height;
            for dx in 0..bar_w as usize {
                canvas.line(x0 + dx as f64, y0, x0 + dx as f64, (H - MB) as f64, s.color);
            }
        }
    }
    for g in 0..=6 {
        let bin = bins.saturating_sub(1) * g / 6;
        let x = ML as f64 + group_w * bin as f64;
        draw_text(&mut canvas, x as usize, H - MB + 8, &format!("{bin}"));
    }
    canvas.save(path)
}

pub const COLOR_TX: [u8; 3] = [200, 60, 50];
pub const COLOR_TY: [u8; 3] = [40, 120, 200];
pub const COLOR_THETA: [u8; 3] = [50, 160, 70];
pub const COLOR_ALT: [u8; 3] = [150, 90, 190];
