//! Grouped bar charts rendered straight to PNG with a built-in 3x5 pixel font.

use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const GUIDE: Rgb<u8> = Rgb([200, 30, 30]);
const PALETTE: [Rgb<u8>; 8] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
    Rgb([227, 119, 194]),
    Rgb([127, 127, 127]),
];

const SCALE: u32 = 2;
const GLYPH_W: u32 = 4 * SCALE;

/// Rows of a 3-wide glyph, most significant of the three bits on the left.
fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_uppercase() {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        'A' => [2, 5, 7, 5, 5],
        'B' => [6, 5, 6, 5, 6],
        'C' => [3, 4, 4, 4, 3],
        'D' => [6, 5, 5, 5, 6],
        'E' => [7, 4, 6, 4, 7],
        'F' => [7, 4, 6, 4, 4],
        'G' => [3, 4, 5, 5, 3],
        'H' => [5, 5, 7, 5, 5],
        'I' => [7, 2, 2, 2, 7],
        'J' => [1, 1, 1, 5, 2],
        'K' => [5, 5, 6, 5, 5],
        'L' => [4, 4, 4, 4, 7],
        'M' => [5, 7, 7, 5, 5],
        'N' => [6, 5, 5, 5, 5],
        'O' => [2, 5, 5, 5, 2],
        'P' => [6, 5, 6, 4, 4],
        'Q' => [2, 5, 5, 6, 3],
        'R' => [6, 5, 6, 5, 5],
        'S' => [3, 4, 2, 1, 6],
        'T' => [7, 2, 2, 2, 2],
        'U' => [5, 5, 5, 5, 7],
        'V' => [5, 5, 5, 5, 2],
        'W' => [5, 5, 7, 7, 5],
        'X' => [5, 5, 2, 5, 5],
        'Y' => [5, 5, 2, 2, 2],
        'Z' => [7, 1, 2, 4, 7],
        '.' => [0, 0, 0, 0, 2],
        '-' => [0, 0, 7, 0, 0],
        '+' => [0, 2, 7, 2, 0],
        ':' => [0, 2, 0, 2, 0],
        '_' => [0, 0, 0, 0, 7],
        '/' => [1, 1, 2, 4, 4],
        _ => [0; 5],
    }
}

fn text(img: &mut RgbImage, x: u32, y: u32, s: &str, color: Rgb<u8>) {
    for (i, c) in s.chars().enumerate() {
        let gx = x + i as u32 * GLYPH_W;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..3u32 {
                if bits & (4 >> col) != 0 {
                    fill(img, gx + col * SCALE, y + row as u32 * SCALE, SCALE, SCALE, color);
                }
            }
        }
    }
}

fn fill(img: &mut RgbImage, x: u32, y: u32, w: u32, h: u32, color: Rgb<u8>) {
    for yy in y..(y + h).min(img.height()) {
        for xx in x..(x + w).min(img.width()) {
            img.put_pixel(xx, yy, color);
        }
    }
}

fn text_width(s: &str) -> u32 {
    s.chars().count() as u32 * GLYPH_W
}

/// One bar group per category, one bar per series. `None` values leave a gap.
pub struct BarChart<'a> {
    pub title: &'a str,
    pub categories: Vec<String>,
    pub series: Vec<(String, Vec<Option<f64>>)>,
    /// Optional horizontal reference line.
    pub guide: Option<f64>,
}

fn nice_max(v: f64) -> f64 {
    if v <= 0.0 || !v.is_finite() {
        return 1.0;
    }
    // Two significant digits, rounded up; the slack absorbs representation error.
    let scale = 10f64.powi(1 - v.log10().floor() as i32);
    (v * scale - 1e-9).ceil() / scale
}

impl BarChart<'_> {
    pub fn render(&self) -> RgbImage {
        let bar_w = 10u32;
        let n_series = self.series.len().max(1) as u32;
        let group_w = (n_series * bar_w + 12).max(text_width("XXXXXX"));
        let left = 72u32;
        let top = 40 + 14 * n_series;
        let plot_h = 240u32;
        let label_h = 16u32;
        let width = left + 20 + group_w * self.categories.len().max(1) as u32;
        let height = top + plot_h + label_h + 10;
        let mut img = RgbImage::from_pixel(width, height, WHITE);

        let peak = self
            .series
            .iter()
            .flat_map(|(_, v)| v.iter().flatten().copied())
            .chain(self.guide)
            .fold(0.0, f64::max);
        let y_max = nice_max(peak);
        let y_of = |v: f64| top + plot_h - ((v.clamp(0.0, y_max) / y_max) * plot_h as f64).round() as u32;

        text(&mut img, left, 8, self.title, INK);
        for (i, (name, _)) in self.series.iter().enumerate() {
            let y = 26 + 14 * i as u32;
            fill(&mut img, left, y, 10, 10, PALETTE[i % PALETTE.len()]);
            text(&mut img, left + 16, y, name, INK);
        }
        for t in 0..=4 {
            let v = y_max * f64::from(t) / 4.0;
            let y = y_of(v);
            fill(&mut img, left, y, width - left - 10, 1, GRID);
            let label = format!("{v:.3}");
            text(&mut img, left - 6 - text_width(&label), y.saturating_sub(5), &label, INK);
        }
        fill(&mut img, left, top, 1, plot_h + 1, INK);
        fill(&mut img, left, top + plot_h, width - left - 10, 1, INK);

        for (g, cat) in self.categories.iter().enumerate() {
            let gx = left + 8 + g as u32 * group_w;
            for (s, (_, values)) in self.series.iter().enumerate() {
                if let Some(Some(v)) = values.get(g) {
                    let y = y_of(*v);
                    let x = gx + s as u32 * bar_w;
                    fill(&mut img, x, y, bar_w - 2, top + plot_h - y, PALETTE[s % PALETTE.len()]);
                }
            }
            let max_chars = (group_w / GLYPH_W).saturating_sub(1).max(1) as usize;
            let label: String = cat.chars().take(max_chars).collect();
            text(&mut img, gx, top + plot_h + 6, &label, INK);
        }
        if let Some(g) = self.guide {
            fill(&mut img, left, y_of(g), width - left - 10, 1, GUIDE);
        }
        img
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.render()
            .save(path)
            .with_context(|| format!("writing plot {}", path.display()))
    }
}
