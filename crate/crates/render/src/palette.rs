//! Fixed colour tables.

pub type Rgb = [u8; 3];

/// Six shades per hue token, all inside that hue's family.
pub const PALETTE: [(&str, [Rgb; 6]); 6] = [
    (
        "red",
        [
            [0xC1, 0x12, 0x1F],
            [0xD6, 0x28, 0x28],
            [0xE5, 0x38, 0x3B],
            [0xA4, 0x16, 0x1A],
            [0x9B, 0x22, 0x26],
            [0xB7, 0x31, 0x2C],
        ],
    ),
    (
        "orange",
        [
            [0xF7, 0x7F, 0x00],
            [0xFB, 0x85, 0x00],
            [0xE8, 0x5D, 0x04],
            [0xF4, 0x8C, 0x06],
            [0xDC, 0x6B, 0x19],
            [0xFF, 0x9F, 0x1C],
        ],
    ),
    (
        "yellow",
        [
            [0xFF, 0xC3, 0x00],
            [0xFF, 0xD6, 0x0A],
            [0xF4, 0xD3, 0x5E],
            [0xEE, 0xC6, 0x43],
            [0xFF, 0xBA, 0x08],
            [0xE9, 0xC4, 0x6A],
        ],
    ),
    (
        "green",
        [
            [0x2D, 0x6A, 0x4F],
            [0x40, 0x91, 0x6C],
            [0x52, 0xB7, 0x88],
            [0x6A, 0x99, 0x4E],
            [0x38, 0x66, 0x41],
            [0x58, 0x81, 0x57],
        ],
    ),
    (
        "blue",
        [
            [0x1D, 0x35, 0x57],
            [0x27, 0x4C, 0x77],
            [0x00, 0x77, 0xB6],
            [0x02, 0x3E, 0x8A],
            [0x1E, 0x60, 0x91],
            [0x14, 0x21, 0x3D],
        ],
    ),
    (
        "violet",
        [
            [0x5A, 0x18, 0x9A],
            [0x7B, 0x2C, 0xBF],
            [0x3C, 0x09, 0x6C],
            [0x9D, 0x4E, 0xDD],
            [0x6A, 0x4C, 0x93],
            [0x72, 0x09, 0xB7],
        ],
    ),
];

/// Used when a chromosome carries no known hue.
pub const NEUTRAL: [Rgb; 6] = [
    [0x33, 0x33, 0x33],
    [0x55, 0x55, 0x55],
    [0x77, 0x77, 0x77],
    [0x44, 0x44, 0x44],
    [0x66, 0x66, 0x66],
    [0x22, 0x22, 0x22],
];

pub const WARM_HUES: [&str; 3] = ["red", "yellow", "orange"];
pub const COLD_HUES: [&str; 3] = ["green", "blue", "violet"];

/// Background tint by colour temperature of the hues present.
pub const BACKGROUND_WARM: Rgb = [0xF4, 0xEB, 0xD9];
pub const BACKGROUND_COLD: Rgb = [0xE4, 0xE9, 0xEE];
pub const BACKGROUND_MIXED: Rgb = [0xEC, 0xEA, 0xE4];

pub fn shades(hue: &str) -> Option<&'static [Rgb; 6]> {
    PALETTE.iter().find(|(h, _)| *h == hue).map(|(_, s)| s)
}

pub fn background(hues: &[&str]) -> Rgb {
    let warm = hues.iter().any(|h| WARM_HUES.contains(h));
    let cold = hues.iter().any(|h| COLD_HUES.contains(h));
    match (warm, cold) {
        (true, false) => BACKGROUND_WARM,
        (false, true) => BACKGROUND_COLD,
        _ => BACKGROUND_MIXED,
    }
}

/// HSV hue angle in degrees, `None` for greys.
pub fn hue_angle(c: Rgb) -> Option<f64> {
    let [r, g, b] = c.map(|x| x as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d == 0.0 {
        return None;
    }
    let h = if max == r {
        60.0 * (((g - b) / d).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    Some(h)
}

/// Hue angle band `(from, to)` in degrees, wrapping through 0 when `from > to`.
pub fn family_band(hue: &str) -> Option<(f64, f64)> {
    Some(match hue {
        "red" => (340.0, 15.0),
        "orange" => (18.0, 40.0),
        "yellow" => (40.0, 65.0),
        "green" => (80.0, 170.0),
        "blue" => (195.0, 235.0),
        "violet" => (255.0, 290.0),
        _ => return None,
    })
}

pub fn in_family(c: Rgb, hue: &str) -> bool {
    let (Some(angle), Some((from, to))) = (hue_angle(c), family_band(hue)) else {
        return false;
    };
    if from <= to {
        (from..=to).contains(&angle)
    } else {
        angle >= from || angle <= to
    }
}

/// Multiplies every channel by `factor`.
pub fn scale(c: Rgb, factor: f64) -> Rgb {
    c.map(|x| (x as f64 * factor).round().clamp(0.0, 255.0) as u8)
}
