//! Minimal SVG writer: rectangles, circles, paths and text in world
//! coordinates.

use std::fmt::Write;

pub struct Canvas {
    width: f64,
    height: f64,
    lower: [f64; 2],
    upper: [f64; 2],
    margin: f64,
    body: String,
}

impl Canvas {
    /// A canvas showing `[lower, upper]` with equal axis scaling.
    pub fn new(lower: [f64; 2], upper: [f64; 2], width: f64) -> Self {
        let margin = 30.0;
        let span_x = (upper[0] - lower[0]).max(1e-12);
        let span_y = (upper[1] - lower[1]).max(1e-12);
        let height = (width - 2.0 * margin) * span_y / span_x + 2.0 * margin;
        let mut c = Self {
            width,
            height,
            lower,
            upper,
            margin,
            body: String::new(),
        };
        c.raw(format!(
            r#"<rect x="0" y="0" width="{width:.2}" height="{height:.2}" fill="white"/>"#
        ));
        c
    }

    fn scale(&self) -> f64 {
        (self.width - 2.0 * self.margin) / (self.upper[0] - self.lower[0]).max(1e-12)
    }

    /// World to pixel coordinates (y axis pointing up).
    pub fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.scale();
        (
            self.margin + (x - self.lower[0]) * s,
            self.height - self.margin - (y - self.lower[1]) * s,
        )
    }

    fn raw(&mut self, element: String) {
        self.body.push_str(&element);
        self.body.push('\n');
    }

    pub fn rect(&mut self, lo: [f64; 2], hi: [f64; 2], fill: &str) {
        let (x0, y0) = self.px(lo[0], hi[1]);
        let (x1, y1) = self.px(hi[0], lo[1]);
        self.raw(format!(
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            x1 - x0,
            y1 - y0
        ));
    }

    /// A circle with a radius in world units.
    pub fn circle(&mut self, center: [f64; 2], radius: f64, fill: &str, stroke: &str) {
        let (cx, cy) = self.px(center[0], center[1]);
        let r = radius * self.scale();
        self.raw(format!(
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" fill="{fill}" stroke="{stroke}"/>"#
        ));
    }

    /// A marker with a radius in pixels.
    pub fn dot(&mut self, at: [f64; 2], radius_px: f64, fill: &str) {
        let (cx, cy) = self.px(at[0], at[1]);
        self.raw(format!(
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{radius_px:.2}" fill="{fill}"/>"#
        ));
    }

    pub fn polyline(&mut self, points: &[[f64; 2]], stroke: &str, width: f64) {
        if points.is_empty() {
            return;
        }
        let mut d = String::new();
        for (i, p) in points.iter().enumerate() {
            let (x, y) = self.px(p[0], p[1]);
            let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
        }
        self.raw(format!(
            r#"<path d="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            d.trim_end()
        ));
    }

    fn polygon(&mut self, corners: &[(f64, f64)], fill: &str) {
        let mut d = String::new();
        for (i, (x, y)) in corners.iter().enumerate() {
            let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
        }
        self.raw(format!(r#"<path d="{}Z" fill="{fill}"/>"#, d));
    }

    pub fn triangle(&mut self, at: [f64; 2], size_px: f64, fill: &str) {
        let (x, y) = self.px(at[0], at[1]);
        let h = size_px;
        self.polygon(&[(x, y - h), (x - h, y + h), (x + h, y + h)], fill);
    }

    pub fn star(&mut self, at: [f64; 2], size_px: f64, fill: &str) {
        let (x, y) = self.px(at[0], at[1]);
        let corners: Vec<(f64, f64)> = (0..10)
            .map(|k| {
                let r = if k % 2 == 0 { size_px } else { 0.45 * size_px };
                let a = std::f64::consts::PI * (k as f64 / 5.0 - 0.5);
                (x + r * a.cos(), y + r * a.sin())
            })
            .collect();
        self.polygon(&corners, fill);
    }

    pub fn text(&mut self, at: [f64; 2], content: &str) {
        let (x, y) = self.px(at[0], at[1]);
        self.label_px(x, y, content);
    }

    /// Text at pixel coordinates.
    pub fn label_px(&mut self, x: f64, y: f64, content: &str) {
        let escaped = content
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        self.raw(format!(
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="12">{escaped}</text>"#
        ));
    }

    /// A small legend swatch at pixel coordinates.
    pub fn rect_px_legend(&mut self, fill: &str, x: f64, y: f64) {
        self.raw(format!(
            r#"<rect x="{x:.2}" y="{y:.2}" width="10" height="10" fill="{fill}"/>"#
        ));
    }

    #[cfg(test)]
    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// A fixed palette for overlaid runs.
pub fn color(i: usize) -> &'static str {
    const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    PALETTE[i % PALETTE.len()]
}
