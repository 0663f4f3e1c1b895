//! Chromosome to geometric scene.
//!
//! Every random choice comes from a ChaCha8 stream seeded with the chromosome's
//! seed gene, and the number of draws per element is fixed, so sweeping one
//! continuous gene moves the scene continuously while everything else stays put.
//!
//! Gene mapping:
//! - hue values pick the element palette; colour temperature tints the background
//! - brightness scales all luminance linearly (0 light, 1 dark)
//! - form values choose the element kinds, each chosen kind at least twice
//! - structure moves every element radially from a ring around the centre
//!   (0, acentric) into a Gaussian cluster at the centre (1, centric)
//! - parallel rotates orientations from the diagonals (0, inner) to the
//!   canvas edges (1, external)

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use promptsteer_core::{Chromosome, SEED_BOUND};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::palette::{self, Rgb};
use crate::RenderError;

pub const MIN_CANVAS: u32 = 64;
pub const MIN_ELEMENTS: usize = 12;
pub const MAX_ELEMENTS: usize = 24;

/// Darkest luminance multiplier, reached at brightness 1.
const DARKEST: f64 = 0.15;
/// Acentric ring, as fractions of the shorter canvas side.
const RING_INNER: f64 = 0.28;
const RING_OUTER: f64 = 0.42;
/// Centric cluster spread and cutoff.
const CLUSTER_SIGMA: f64 = 0.07;
const CLUSTER_MAX: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Point,
    StraightLine,
    CurvedLine,
    AngularLine,
    Triangle,
    Square,
    Circle,
}

impl ElementKind {
    pub const ALL: [ElementKind; 7] = [
        ElementKind::Point,
        ElementKind::StraightLine,
        ElementKind::CurvedLine,
        ElementKind::AngularLine,
        ElementKind::Triangle,
        ElementKind::Square,
        ElementKind::Circle,
    ];

    pub fn from_token(token: &str) -> Option<Self> {
        Some(match token {
            "point" => ElementKind::Point,
            "straight_line" => ElementKind::StraightLine,
            "curved_line" => ElementKind::CurvedLine,
            "angular_line" => ElementKind::AngularLine,
            "triangle" => ElementKind::Triangle,
            "square" => ElementKind::Square,
            "circle" => ElementKind::Circle,
            _ => return None,
        })
    }

    pub fn is_line(self) -> bool {
        matches!(
            self,
            ElementKind::StraightLine | ElementKind::CurvedLine | ElementKind::AngularLine
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub kind: ElementKind,
    pub x: f64,
    pub y: f64,
    /// Radians.
    pub orientation: f64,
    /// Characteristic size in pixels.
    pub scale: f64,
    pub color: Rgb,
    /// Hue token the colour was taken from; empty for the neutral palette.
    pub hue: String,
    /// Shape detail in `[0, 1)` (line bend, zigzag depth).
    pub variant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub width: u32,
    pub height: u32,
    pub background: Rgb,
    pub elements: Vec<Element>,
}

impl Composition {
    pub fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Mean Euclidean distance of element anchors from the canvas centre.
    pub fn mean_distance_to_center(&self) -> f64 {
        let (cx, cy) = self.center();
        self.elements
            .iter()
            .map(|e| ((e.x - cx).powi(2) + (e.y - cy).powi(2)).sqrt())
            .sum::<f64>()
            / self.elements.len() as f64
    }

    /// Mean of `cos(4 * orientation)`: 1 when everything is parallel to the
    /// edges, -1 when everything follows the diagonals.
    pub fn edge_alignment(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| (4.0 * e.orientation).cos())
            .sum::<f64>()
            / self.elements.len() as f64
    }
}

pub(crate) fn check(c: &Chromosome, width: u32, height: u32) -> Result<(), RenderError> {
    if width < MIN_CANVAS || height < MIN_CANVAS {
        return Err(RenderError::DegenerateCanvas { width, height });
    }
    if c.seed >= SEED_BOUND {
        return Err(RenderError::InvalidChromosome(format!(
            "seed {} out of range",
            c.seed
        )));
    }
    if let Some((attr, v)) = c.continuous.iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(RenderError::InvalidChromosome(format!(
            "continuous gene `{attr}` = {v} outside [0, 1]"
        )));
    }
    Ok(())
}

fn gene(c: &Chromosome, id: &str) -> f64 {
    c.gene(id).unwrap_or(0.5)
}

pub fn brightness_factor(brightness: f64) -> f64 {
    1.0 - (1.0 - DARKEST) * brightness
}

/// The scene for a chromosome. `render` is `rasterize(compose(..))`.
pub fn compose(c: &Chromosome, width: u32, height: u32) -> Result<Composition, RenderError> {
    check(c, width, height)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed as u64);

    let hues: Vec<&str> = c
        .discrete_values()
        .filter(|v| palette::shades(v).is_some())
        .collect();
    let mut forms: Vec<ElementKind> = Vec::new();
    for kind in ElementKind::ALL {
        if c.discrete_values()
            .any(|v| ElementKind::from_token(v) == Some(kind))
        {
            forms.push(kind);
        }
    }
    if forms.is_empty() {
        forms.push(ElementKind::Point);
    }

    let count = rng.random_range(MIN_ELEMENTS..=MAX_ELEMENTS);
    let mut kinds: Vec<ElementKind> = forms.iter().flat_map(|k| [*k, *k]).collect();
    while kinds.len() < count {
        kinds.push(forms[rng.random_range(0..forms.len())]);
    }
    kinds.shuffle(&mut rng);

    let factor = brightness_factor(gene(c, "brightness"));
    let structure = gene(c, "structure");
    let parallel = gene(c, "parallel");
    let side = width.min(height) as f64;
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);

    let elements = kinds
        .into_iter()
        .map(|kind| {
            let angle = rng.random::<f64>() * TAU;
            let ring = RING_INNER + (RING_OUTER - RING_INNER) * rng.random::<f64>();
            let gx: f64 = rng.sample(StandardNormal);
            let gy: f64 = rng.sample(StandardNormal);
            let cluster = (CLUSTER_SIGMA * (gx * gx + gy * gy).sqrt()).min(CLUSTER_MAX);
            let axis = rng.random_range(0..2u8) as f64;
            let size = rng.random::<f64>();
            let shade = rng.random_range(0..6usize);
            let hue_pick = rng.random::<f64>();
            let variant = rng.random::<f64>();

            let radius = ((1.0 - structure) * ring + structure * cluster) * side;
            let x = (cx + radius * angle.cos()).clamp(0.0, width as f64 - 1.0);
            let y = (cy + radius * angle.sin()).clamp(0.0, height as f64 - 1.0);
            let (hue, base) = if hues.is_empty() {
                (String::new(), palette::NEUTRAL[shade])
            } else {
                let h = hues[((hue_pick * hues.len() as f64) as usize).min(hues.len() - 1)];
                (h.to_string(), palette::shades(h).expect("known hue")[shade])
            };
            let scale = match kind {
                ElementKind::Point => 0.012 + 0.018 * size,
                k if k.is_line() => 0.08 + 0.10 * size,
                _ => 0.04 + 0.07 * size,
            } * side;
            Element {
                kind,
                x,
                y,
                orientation: axis * FRAC_PI_2 + (1.0 - parallel) * FRAC_PI_4,
                scale,
                color: palette::scale(base, factor),
                hue,
                variant,
            }
        })
        .collect();

    Ok(Composition {
        width,
        height,
        background: palette::scale(palette::background(&hues), factor),
        elements,
    })
}
