//! Rasterization and encoding.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt::Write as _;

use promptsteer_core::Chromosome;
use tiny_skia::{
    Color, FillRule, LineCap, LineJoin, Paint, PathBuilder, Pixmap, Stroke, Transform,
};

use crate::compose::{compose, Composition, Element, ElementKind};
use crate::palette::Rgb;
use crate::RenderError;

/// Packed 8-bit RGB pixels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

pub fn render(c: &Chromosome, width: u32, height: u32) -> Result<RgbImage, RenderError> {
    rasterize(&compose(c, width, height)?)
}

pub fn render_png(c: &Chromosome, width: u32, height: u32) -> Result<Vec<u8>, RenderError> {
    encode_png(&render(c, width, height)?)
}

fn points(e: &Element) -> Vec<(f64, f64)> {
    let (x, y, s, o) = (e.x, e.y, e.scale, e.orientation);
    let at = |along: f64, across: f64| {
        (
            x + along * o.cos() - across * o.sin(),
            y + along * o.sin() + across * o.cos(),
        )
    };
    match e.kind {
        ElementKind::StraightLine => vec![at(-s / 2.0, 0.0), at(s / 2.0, 0.0)],
        ElementKind::AngularLine => {
            let depth = s * (0.15 + 0.25 * e.variant);
            (0..=4)
                .map(|k| {
                    let across = if k % 2 == 0 { 0.0 } else { depth };
                    at(-s / 2.0 + s * k as f64 / 4.0, across)
                })
                .collect()
        }
        ElementKind::Triangle => (0..3)
            .map(|k| {
                let t = o - FRAC_PI_2 + k as f64 * TAU / 3.0;
                (x + s * t.cos(), y + s * t.sin())
            })
            .collect(),
        ElementKind::Square => {
            let h = 0.7 * s;
            vec![at(-h, -h), at(h, -h), at(h, h), at(-h, h)]
        }
        _ => Vec::new(),
    }
}

fn curve(e: &Element) -> [(f64, f64); 3] {
    let (s, o) = (e.scale, e.orientation);
    let bend = s * (0.4 + 0.8 * e.variant) / 2.0;
    let at = |along: f64, across: f64| {
        (
            e.x + along * o.cos() - across * o.sin(),
            e.y + along * o.sin() + across * o.cos(),
        )
    };
    [at(-s / 2.0, 0.0), at(0.0, bend), at(s / 2.0, 0.0)]
}

fn line_width(e: &Element, side: f64) -> f64 {
    (0.006 * side).max(1.0) + 0.01 * e.scale
}

fn paint(c: Rgb) -> Paint<'static> {
    let mut p = Paint::default();
    p.set_color_rgba8(c[0], c[1], c[2], 255);
    p.anti_alias = true;
    p
}

/// Draws a composition onto an opaque RGB8 canvas.
pub fn rasterize(comp: &Composition) -> Result<RgbImage, RenderError> {
    let mut pixmap = Pixmap::new(comp.width, comp.height).ok_or(RenderError::DegenerateCanvas {
        width: comp.width,
        height: comp.height,
    })?;
    let [r, g, b] = comp.background;
    pixmap.fill(Color::from_rgba8(r, g, b, 255));
    let side = comp.width.min(comp.height) as f64;

    for e in &comp.elements {
        let paint = paint(e.color);
        let mut pb = PathBuilder::new();
        let filled = match e.kind {
            ElementKind::Point => {
                pb.push_circle(e.x as f32, e.y as f32, e.scale as f32);
                true
            }
            ElementKind::Circle => {
                pb.push_circle(e.x as f32, e.y as f32, (0.6 * e.scale) as f32);
                true
            }
            ElementKind::CurvedLine => {
                let [a, m, z] = curve(e);
                pb.move_to(a.0 as f32, a.1 as f32);
                pb.quad_to(m.0 as f32, m.1 as f32, z.0 as f32, z.1 as f32);
                false
            }
            kind => {
                let pts = points(e);
                pb.move_to(pts[0].0 as f32, pts[0].1 as f32);
                for p in &pts[1..] {
                    pb.line_to(p.0 as f32, p.1 as f32);
                }
                if !kind.is_line() {
                    pb.close();
                }
                !kind.is_line()
            }
        };
        let Some(path) = pb.finish() else { continue };
        if filled {
            pixmap.fill_path(
                &path,
                &paint,
                FillRule::Winding,
                Transform::identity(),
                None,
            );
        } else {
            let stroke = Stroke {
                width: line_width(e, side) as f32,
                line_cap: LineCap::Round,
                line_join: LineJoin::Round,
                ..Stroke::default()
            };
            pixmap.stroke_path(&path, &paint, &stroke, Transform::identity(), None);
        }
    }

    // Opaque background means premultiplied and straight alpha coincide.
    let pixels = pixmap
        .data()
        .chunks_exact(4)
        .flat_map(|px| [px[0], px[1], px[2]])
        .collect();
    Ok(RgbImage {
        width: comp.width,
        height: comp.height,
        pixels,
    })
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, RenderError> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, img.width, img.height);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc
        .write_header()
        .map_err(|e| RenderError::Encode(e.to_string()))?;
    w.write_image_data(&img.pixels)
        .map_err(|e| RenderError::Encode(e.to_string()))?;
    w.finish().map_err(|e| RenderError::Encode(e.to_string()))?;
    Ok(out)
}

/// Mean Rec. 709 luma over all pixels, in `[0, 255]`.
pub fn mean_luminance(img: &RgbImage) -> f64 {
    let n = (img.pixels.len() / 3) as f64;
    img.pixels
        .chunks_exact(3)
        .map(|p| 0.2126 * p[0] as f64 + 0.7152 * p[1] as f64 + 0.0722 * p[2] as f64)
        .sum::<f64>()
        / n
}

fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Vector form of a composition, for inspection.
pub fn to_svg(comp: &Composition) -> String {
    let side = comp.width.min(comp.height) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = comp.width,
        h = comp.height
    );
    let _ = writeln!(
        s,
        r#"<rect width="100%" height="100%" fill="{}"/>"#,
        hex(comp.background)
    );
    for e in &comp.elements {
        let fill = hex(e.color);
        let sw = line_width(e, side);
        let list = |pts: &[(f64, f64)]| {
            pts.iter()
                .map(|(x, y)| format!("{x:.2},{y:.2}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = match e.kind {
            ElementKind::Point => writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{fill}"/>"#,
                e.x, e.y, e.scale
            ),
            ElementKind::Circle => writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{fill}"/>"#,
                e.x,
                e.y,
                0.6 * e.scale
            ),
            ElementKind::CurvedLine => {
                let [a, m, z] = curve(e);
                writeln!(
                    s,
                    r#"<path d="M{:.2},{:.2} Q{:.2},{:.2} {:.2},{:.2}" stroke="{fill}" stroke-width="{sw:.2}" stroke-linecap="round" fill="none"/>"#,
                    a.0, a.1, m.0, m.1, z.0, z.1
                )
            }
            kind if kind.is_line() => writeln!(
                s,
                r#"<polyline points="{}" stroke="{fill}" stroke-width="{sw:.2}" stroke-linecap="round" stroke-linejoin="round" fill="none"/>"#,
                list(&points(e))
            ),
            _ => writeln!(
                s,
                r#"<polygon points="{}" fill="{fill}"/>"#,
                list(&points(e))
            ),
        };
    }
    s.push_str("</svg>\n");
    s
}
