//! PPM rendering of basin rasters with optional overlays.

use serde::{Deserialize, Serialize};

use crate::exec::Executor;
use crate::orbits::{BasinRaster, Label};
use crate::polyalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    /// Multiply colors by `1/(1 + 0.02 count)`.
    pub shading: bool,
}

impl Default for Palette {
    fn default() -> Self {
        Palette { shading: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overlays {
    pub fixed_points: Vec<C64>,
    pub critical_points: Vec<C64>,
    pub rays: Vec<Vec<C64>>,
    /// Directions at ∞, marked where they leave the viewport.
    pub petal_directions: Vec<C64>,
}

pub fn ppm_header(width: usize, height: usize) -> String {
    format!("P6\n{width} {height}\n255\n")
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as usize % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

/// Roots get evenly spaced hues away from yellow, petals a yellow ramp,
/// cycles gray and undecided points black.
pub fn label_color(label: Label, roots: usize, petals: usize) -> [u8; 3] {
    match label {
        Label::Root(i) => hsv(0.22 + 0.7 * i as f64 / roots.max(1) as f64, 0.75, 0.9),
        Label::Petal(j) => {
            let t = j as f64 / petals.max(1) as f64;
            [255, (235.0 - 60.0 * t).round() as u8, (40.0 * t).round() as u8]
        }
        Label::Cycle => [128, 128, 128],
        Label::Undecided => [0, 0, 0],
    }
}

fn shade(c: [u8; 3], count: u32) -> [u8; 3] {
    let f = 1.0 / (1.0 + 0.02 * count as f64);
    c.map(|x| (x as f64 * f).round() as u8)
}

/// P6 bytes for the raster with overlays drawn on top.
pub fn render(raster: &BasinRaster, palette: &Palette, overlays: &Overlays) -> Vec<u8> {
    let (w, h) = (raster.width, raster.height);
    let rows = Executor::from_env().map_rows(h, |row| {
        let mut line = Vec::with_capacity(3 * w);
        for col in 0..w {
            let i = row * w + col;
            let base = label_color(raster.labels[i], raster.roots.len(), raster.petals);
            let c = if palette.shading { shade(base, raster.iterations[i]) } else { base };
            line.extend_from_slice(&c);
        }
        line
    });
    let mut pixels: Vec<u8> = rows.into_iter().flatten().collect();
    draw_overlays(raster, overlays, &mut pixels);
    let mut out = ppm_header(w, h).into_bytes();
    out.extend_from_slice(&pixels);
    out
}

fn put(raster: &BasinRaster, pixels: &mut [u8], row: isize, col: isize, c: [u8; 3]) {
    if row >= 0 && col >= 0 && (row as usize) < raster.height && (col as usize) < raster.width {
        let i = 3 * (row as usize * raster.width + col as usize);
        pixels[i..i + 3].copy_from_slice(&c);
    }
}

fn disk(raster: &BasinRaster, pixels: &mut [u8], z: C64, radius: isize, c: [u8; 3], ring: Option<[u8; 3]>) {
    let Some((r0, c0)) = raster.viewport.pixel_of(raster.width, raster.height, z) else { return };
    let (r0, c0) = (r0 as isize, c0 as isize);
    let outer = radius + ring.map_or(0, |_| 1);
    for dr in -outer..=outer {
        for dc in -outer..=outer {
            let d2 = dr * dr + dc * dc;
            if d2 <= radius * radius {
                put(raster, pixels, r0 + dr, c0 + dc, c);
            } else if let Some(rc) = ring.filter(|_| d2 <= outer * outer) {
                put(raster, pixels, r0 + dr, c0 + dc, rc);
            }
        }
    }
}

fn draw_overlays(raster: &BasinRaster, o: &Overlays, pixels: &mut [u8]) {
    let vp = raster.viewport;
    let px = ((vp.re_max - vp.re_min) / raster.width as f64).min((vp.im_max - vp.im_min) / raster.height as f64);
    for ray in &o.rays {
        for seg in ray.windows(2) {
            let n = ((seg[1] - seg[0]).norm() / (0.5 * px)).ceil().clamp(1.0, 1e5) as usize;
            for s in 0..=n {
                let z = seg[0] + (seg[1] - seg[0]) * (s as f64 / n as f64);
                if let Some((r, c)) = vp.pixel_of(raster.width, raster.height, z) {
                    put(raster, pixels, r as isize, c as isize, [255, 255, 255]);
                }
            }
        }
    }
    let center = C64::new(0.5 * (vp.re_min + vp.re_max), 0.5 * (vp.im_min + vp.im_max));
    let half = 0.5 * (vp.re_max - vp.re_min).min(vp.im_max - vp.im_min);
    for v in &o.petal_directions {
        let u = v / v.norm();
        let t = 0.97 * half / u.re.abs().max(u.im.abs());
        disk(raster, pixels, center + u * t, 3, [0, 200, 255], None);
    }
    for &z in &o.critical_points {
        disk(raster, pixels, z, 2, [220, 0, 160], None);
    }
    for &z in &o.fixed_points {
        disk(raster, pixels, z, 3, [255, 255, 255], Some([0, 0, 0]));
    }
}

/// Checks the P6 grammar: magic, dimensions, maxval 255, exactly
/// `3 w h` payload bytes.
pub fn validate_ppm(bytes: &[u8]) -> Option<(usize, usize)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    if fields[0] != "P6" || fields[3] != "255" || pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return None;
    }
    let w: usize = fields[1].parse().ok()?;
    let h: usize = fields[2].parse().ok()?;
    (bytes.len() - pos - 1 == 3 * w * h).then_some((w, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::Viewport;

    fn raster(labels: Vec<Label>, w: usize, h: usize) -> BasinRaster {
        BasinRaster {
            width: w,
            height: h,
            viewport: Viewport::square(C64::new(0.0, 0.0), 1.0),
            iterations: vec![0; labels.len()],
            labels,
            roots: vec![C64::new(0.0, 0.0)],
            petals: 0,
        }
    }

    #[test]
    fn single_pixel() {
        let bytes = render(&raster(vec![Label::Root(0)], 1, 1), &Palette::default(), &Overlays::default());
        assert_eq!(ppm_header(1, 1).len(), 11);
        assert_eq!(bytes.len(), 14);
        assert_eq!(validate_ppm(&bytes), Some((1, 1)));
    }

    #[test]
    fn header_format() {
        assert_eq!(ppm_header(1024, 1024), "P6\n1024 1024\n255\n");
    }

    #[test]
    fn validation_rejects_bad_files() {
        assert_eq!(validate_ppm(b"P3\n1 1\n255\n\0\0\0"), None);
        assert_eq!(validate_ppm(b"P6\n1 1\n255\n\0\0\0\0"), None);
        assert_eq!(validate_ppm(b"P6\n1 1\n65535\n\0\0\0"), None);
        assert_eq!(validate_ppm(b"P6\n2 1\n255\n\0\0\0"), None);
    }

    #[test]
    fn palette_conventions() {
        assert_eq!(label_color(Label::Undecided, 3, 1), [0, 0, 0]);
        let y = label_color(Label::Petal(0), 3, 5);
        assert!(y[0] == 255 && y[1] > 150 && y[2] < 60);
        let roots: Vec<[u8; 3]> = (0..3).map(|i| label_color(Label::Root(i), 3, 0)).collect();
        assert!(roots[0] != roots[1] && roots[1] != roots[2]);
        assert_eq!(shade([200, 100, 50], 50), [100, 50, 25]);
    }

    #[test]
    fn fixed_point_overlay_has_black_ring() {
        let r = raster(vec![Label::Root(0); 21 * 21], 21, 21);
        let o = Overlays { fixed_points: vec![C64::new(0.0, 0.0)], ..Default::default() };
        let bytes = render(&r, &Palette { shading: false }, &o);
        let px = &bytes[ppm_header(21, 21).len()..];
        let at = |row: usize, col: usize| &px[3 * (row * 21 + col)..3 * (row * 21 + col) + 3];
        assert_eq!(at(10, 10), [255, 255, 255]);
        assert_eq!(at(10, 14), [0, 0, 0]);
        assert_ne!(at(10, 18), [0, 0, 0]);
    }
}
