//! Procedural street scenes with pixel-exact ground truth.
//!
//! A [`SceneSpec`] is the structured form of a caption "a photo of X in Z":
//! a set of subject classes plus a lighting/weather condition. [`render`]
//! turns it into an image and a label map drawn from the same geometry, so
//! the labels are exact by construction. Appearance is produced in three
//! layers: per-class base colors, the condition Z, and finally a
//! [`DomainStyle`]. Only geometry writes labels.
//!
//! Domains ([`DomainPreset`]) differ either in style (how pixels look), in
//! content (layouts, scales and which classes co-occur), or both.

use std::f64::consts::TAU;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;
use crate::types::{ClassCatalog, ClassId, ImageBuf, LabelMap};

pub const BACKGROUND: ClassId = 0;
pub const ROAD: ClassId = 1;
pub const BUILDING: ClassId = 2;
pub const CAR: ClassId = 3;
pub const PERSON: ClassId = 4;
pub const POLE: ClassId = 5;
pub const VEGETATION: ClassId = 6;
pub const SIGN: ClassId = 7;
pub const CLASS_COUNT: usize = 8;

/// Pole bar width in pixels.
pub const POLE_WIDTH: usize = 2;
/// Pole height range as a fraction of image height, before content scaling.
pub const POLE_HEIGHT_RANGE: (f64, f64) = (0.30, 0.50);

pub const MIN_DIM: usize = 32;
const MAX_SUBJECTS: usize = 4;
const SYNONYM_RATE: f64 = 0.3;

/// Draw order; later classes occlude earlier ones.
const PAINT_ORDER: [ClassId; 7] = [ROAD, BUILDING, VEGETATION, CAR, PERSON, POLE, SIGN];

const BASE_COLORS: [[f64; 3]; CLASS_COUNT] = [
    [0.55, 0.70, 0.88], // background
    [0.36, 0.36, 0.38], // road
    [0.62, 0.42, 0.30], // building
    [0.82, 0.14, 0.16], // car
    [0.88, 0.66, 0.48], // person
    [0.12, 0.12, 0.16], // pole
    [0.20, 0.58, 0.20], // vegetation
    [0.95, 0.84, 0.10], // sign
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene dimensions {0}x{1} below minimum {MIN_DIM}x{MIN_DIM}")]
    TooSmall(usize, usize),
    #[error("subject class {0} has no renderer")]
    UnknownClass(ClassId),
    #[error("invalid style: {0}")]
    InvalidStyle(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lighting {
    Day,
    Dusk,
    Night,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weather {
    Clear,
    Rain,
    Snow,
    Fog,
}

impl Lighting {
    pub const ALL: [Lighting; 3] = [Lighting::Day, Lighting::Dusk, Lighting::Night];

    fn word(self) -> &'static str {
        match self {
            Lighting::Day => "day",
            Lighting::Dusk => "dusk",
            Lighting::Night => "night",
        }
    }
}

impl Weather {
    pub const ALL: [Weather; 4] = [Weather::Clear, Weather::Rain, Weather::Snow, Weather::Fog];

    fn word(self) -> &'static str {
        match self {
            Weather::Clear => "clear",
            Weather::Rain => "rainy",
            Weather::Snow => "snowy",
            Weather::Fog => "foggy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub lighting: Lighting,
    pub weather: Weather,
}

impl Condition {
    pub const CLEAR_DAY: Condition = Condition {
        lighting: Lighting::Day,
        weather: Weather::Clear,
    };
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub class: ClassId,
    /// Class name or one of its synonyms, as it appears in the caption.
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub subjects: Vec<Subject>,
    pub condition: Condition,
    pub layout_seed: u64,
}

impl SceneSpec {
    /// Spec naming each class by its catalog name.
    pub fn new(classes: &[ClassId], condition: Condition, layout_seed: u64, catalog: &ClassCatalog) -> Self {
        let subjects = classes
            .iter()
            .map(|&class| Subject {
                class,
                name: catalog.name(class).to_string(),
            })
            .collect();
        Self {
            subjects,
            condition,
            layout_seed,
        }
    }

    pub fn has(&self, class: ClassId) -> bool {
        self.subjects.iter().any(|s| s.class == class)
    }

    /// "a photo of X in Z".
    pub fn caption(&self) -> String {
        let names: Vec<&str> = self.subjects.iter().map(|s| s.name.as_str()).collect();
        let x = match names.as_slice() {
            [] => String::new(),
            [one] => one.to_string(),
            [init @ .., last] => format!("{} and {}", init.join(", "), last),
        };
        let z = format!("{} {}", self.condition.weather.word(), self.condition.lighting.word());
        format!("a photo of {x} in {z}")
    }
}

/// Appearance-only transform applied after the scene is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainStyle {
    /// Hue rotation in turns.
    pub hue_shift: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub noise_sigma: f64,
    pub texture_seed: u64,
}

impl Default for DomainStyle {
    fn default() -> Self {
        Self {
            hue_shift: 0.0,
            brightness: 1.0,
            contrast: 1.0,
            noise_sigma: 0.0,
            texture_seed: 0,
        }
    }
}

impl DomainStyle {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.brightness > 0.0 && self.contrast > 0.0) {
            return Err(SceneError::InvalidStyle(format!(
                "brightness {} and contrast {} must be > 0",
                self.brightness, self.contrast
            )));
        }
        if !(self.noise_sigma >= 0.0) || !self.hue_shift.is_finite() {
            return Err(SceneError::InvalidStyle(format!(
                "noise sigma {} must be >= 0 and hue shift finite",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Layout distribution: where things go and how big they are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentProfile {
    /// Road top edge as a fraction of image height.
    pub horizon: (f64, f64),
    /// Multiplier on object sizes.
    pub scale: (f64, f64),
    /// Whether persons and poles may share a scene.
    pub person_with_pole: bool,
}

impl Default for ContentProfile {
    fn default() -> Self {
        Self {
            horizon: (0.55, 0.65),
            scale: (0.9, 1.1),
            person_with_pole: false,
        }
    }
}

impl ContentProfile {
    /// Layouts the source domain never shows.
    pub fn shifted() -> Self {
        Self {
            horizon: (0.35, 0.50),
            scale: (1.2, 1.6),
            person_with_pole: true,
        }
    }

    /// The broad layout range of generated data.
    pub fn diverse() -> Self {
        Self {
            horizon: (0.30, 0.70),
            scale: (0.8, 1.7),
            person_with_pole: true,
        }
    }
}

fn uniform_subset(candidates: &[ClassId], max_size: usize, rng: &mut RngStream) -> Vec<ClassId> {
    let n = candidates.len();
    let max_size = max_size.min(n);
    // Pick the size with probability proportional to the number of subsets of that size.
    let counts: Vec<f64> = (1..=max_size).map(|s| binomial(n, s)).collect();
    let total: f64 = counts.iter().sum();
    let mut u = rng.uniform() * total;
    let mut size = max_size;
    for (i, c) in counts.iter().enumerate() {
        if u < *c {
            size = i + 1;
            break;
        }
        u -= c;
    }
    let mut picked: Vec<ClassId> = rng
        .sample_distinct(n, size)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Grammar-based prompt sampler: a uniform non-empty subject set of at most
/// four non-background classes, names swapped for synonyms at rate 0.3, and a
/// uniform lighting/weather condition.
pub fn sample_prompt(catalog: &ClassCatalog, rng: &mut RngStream) -> SceneSpec {
    let candidates: Vec<ClassId> = (1..catalog.class_count() as ClassId).collect();
    let classes = uniform_subset(&candidates, MAX_SUBJECTS, rng);
    let subjects = classes
        .into_iter()
        .map(|class| {
            let synonyms = catalog.synonyms(class);
            let name = if !synonyms.is_empty() && rng.bernoulli(SYNONYM_RATE) {
                synonyms[rng.below(synonyms.len())].clone()
            } else {
                catalog.name(class).to_string()
            };
            Subject { class, name }
        })
        .collect();
    let condition = Condition {
        lighting: Lighting::ALL[rng.below(3)],
        weather: Weather::ALL[rng.below(4)],
    };
    SceneSpec {
        subjects,
        condition,
        layout_seed: rng.next_u64(),
    }
}

/// Geometry and colors of a scene, shared by the label and pixel writers.
struct Canvas {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    colors: Vec<[f64; 3]>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![BACKGROUND; width * height],
            colors: vec![BASE_COLORS[BACKGROUND as usize]; width * height],
        }
    }

    fn paint(&mut self, class: ClassId, color: [f64; 3], inside: impl Fn(f64, f64) -> bool) {
        for y in 0..self.height {
            for x in 0..self.width {
                if inside(x as f64 + 0.5, y as f64 + 0.5) {
                    let i = y * self.width + x;
                    self.labels[i] = class;
                    self.colors[i] = color;
                }
            }
        }
    }
}

fn object_color(class: ClassId, rng: &mut RngStream) -> [f64; 3] {
    let base = BASE_COLORS[class as usize];
    let k = 1.0 + rng.uniform_range(-0.08, 0.08);
    base.map(|v| v * k + rng.uniform_range(-0.03, 0.03))
}

fn draw_geometry(spec: &SceneSpec, content: &ContentProfile, width: usize, height: usize) -> Result<Canvas, SceneError> {
    for s in &spec.subjects {
        if s.class as usize >= CLASS_COUNT || s.class == BACKGROUND {
            return Err(SceneError::UnknownClass(s.class));
        }
    }
    let mut rng = RngStream::new(spec.layout_seed).fork("layout");
    let (w, h) = (width as f64, height as f64);
    let unit = w.min(h);
    let horizon = h * rng.uniform_range(content.horizon.0, content.horizon.1);
    let scale = rng.uniform_range(content.scale.0, content.scale.1);
    let mut canvas = Canvas::new(width, height);
    let mut pole_top: Option<(f64, f64)> = None;
    let skip_pole = !content.person_with_pole && spec.has(PERSON);

    for class in PAINT_ORDER {
        if !spec.has(class) {
            continue;
        }
        let color = object_color(class, &mut rng);
        match class {
            ROAD => canvas.paint(ROAD, color, |_, y| y >= horizon),
            BUILDING => {
                let bw = w * rng.uniform_range(0.22, 0.40) * scale;
                let bh = h * rng.uniform_range(0.25, 0.42) * scale;
                let x0 = rng.uniform_range(0.0, (w - bw).max(1.0));
                let bottom = horizon + 1.0;
                canvas.paint(BUILDING, color, |x, y| x >= x0 && x < x0 + bw && y < bottom && y >= bottom - bh);
            }
            VEGETATION => {
                let r0 = unit * rng.uniform_range(0.10, 0.16) * scale;
                let cx = rng.uniform_range(r0, w - r0);
                let cy = (horizon - 0.4 * r0).max(r0);
                let (p1, p2) = (rng.uniform_range(0.0, TAU), rng.uniform_range(0.0, TAU));
                canvas.paint(VEGETATION, color, |x, y| {
                    let (dx, dy) = (x - cx, y - cy);
                    let theta = dy.atan2(dx);
                    let r = r0 * (1.0 + 0.25 * (3.0 * theta + p1).sin() + 0.15 * (5.0 * theta + p2).sin());
                    dx * dx + dy * dy <= r * r
                });
            }
            CAR => {
                let r = unit * rng.uniform_range(0.10, 0.15) * scale;
                let cx = rng.uniform_range(r, w - r);
                let cy = (horizon + rng.uniform_range(0.3, 1.0) * r).min(h - r);
                canvas.paint(CAR, color, |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r);
            }
            PERSON => {
                let a = unit * rng.uniform_range(0.05, 0.075) * scale;
                let b = unit * rng.uniform_range(0.14, 0.19) * scale;
                let cx = rng.uniform_range(a, w - a);
                let cy = (horizon + rng.uniform_range(-0.6, 0.2) * b).clamp(b, h - b);
                canvas.paint(PERSON, color, |x, y| ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) <= 1.0);
            }
            POLE => {
                let ph = (h * rng.uniform_range(POLE_HEIGHT_RANGE.0, POLE_HEIGHT_RANGE.1) * scale)
                    .round()
                    .min(h);
                let x0 = rng.below(width - POLE_WIDTH + 1) as f64;
                let bottom = (horizon + rng.uniform_range(0.0, 0.1) * h).round().clamp(ph, h);
                if !skip_pole {
                    canvas.paint(POLE, color, |x, y| x >= x0 && x < x0 + POLE_WIDTH as f64 && y < bottom && y >= bottom - ph);
                    pole_top = Some((x0 + 1.0, bottom - ph));
                }
            }
            SIGN => {
                let side = unit * rng.uniform_range(0.12, 0.18) * scale;
                let (cx, top) = match pole_top {
                    Some((px, py)) => (px, (py - 0.5 * side).max(0.0)),
                    None => (rng.uniform_range(side, w - side), rng.uniform_range(0.05, 0.35) * h),
                };
                // Point-up triangle with apex at (cx, top).
                canvas.paint(SIGN, color, |x, y| {
                    let t = y - top;
                    t >= 0.0 && t <= side && (x - cx).abs() <= 0.5 * t * 1.15
                });
            }
            _ => unreachable!(),
        }
    }
    Ok(canvas)
}

/// Luminance-preserving hue rotation by `turns` of a full circle.
pub fn rotate_hue(c: [f64; 3], turns: f64) -> [f64; 3] {
    HueRotation::new(turns).apply(c)
}

/// Hue rotation as a fixed 3x3 color matrix (YIQ chroma rotation).
#[derive(Clone, Copy, Debug)]
pub struct HueRotation {
    m: Option<[[f64; 3]; 3]>,
}

impl HueRotation {
    pub fn new(turns: f64) -> Self {
        if turns == 0.0 {
            return Self { m: None };
        }
        const TO_YIQ: [[f64; 3]; 3] = [[0.299, 0.587, 0.114], [0.596, -0.274, -0.322], [0.211, -0.523, 0.312]];
        const FROM_YIQ: [[f64; 3]; 3] = [[1.0, 0.956, 0.621], [1.0, -0.272, -0.647], [1.0, -1.106, 1.703]];
        let (s, c) = (turns * TAU).sin_cos();
        let rot = [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]];
        let mul = |a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]| {
            let mut out = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                }
            }
            out
        };
        Self {
            m: Some(mul(&FROM_YIQ, &mul(&rot, &TO_YIQ))),
        }
    }

    #[inline]
    pub fn apply(&self, c: [f64; 3]) -> [f64; 3] {
        match &self.m {
            None => c,
            Some(m) => [0, 1, 2].map(|i| m[i][0] * c[0] + m[i][1] * c[1] + m[i][2] * c[2]),
        }
    }
}

fn apply_condition(canvas: &mut [[f64; 3]], cond: Condition, width: usize, rng: &mut RngStream) {
    let (gain, tint) = match cond.lighting {
        Lighting::Day => (1.0, [1.0, 1.0, 1.0]),
        Lighting::Dusk => (0.75, [1.12, 0.9, 0.72]),
        Lighting::Night => (0.6, [0.85, 0.9, 1.15]),
    };
    for (i, c) in canvas.iter_mut().enumerate() {
        let mut v = [c[0] * gain * tint[0], c[1] * gain * tint[1], c[2] * gain * tint[2]];
        match cond.weather {
            Weather::Clear => {}
            Weather::Rain => {
                let streak = if (i % width + i / width * 3) % 7 == 0 { 0.08 } else { 0.0 };
                v = v.map(|t| t * 0.85 + streak + 0.03 * rng.normal());
            }
            Weather::Snow => {
                let flake = if rng.bernoulli(0.04) { 0.5 } else { 0.0 };
                v = v.map(|t| t * 0.85 + 0.12 + flake);
            }
            Weather::Fog => {
                v = [
                    v[0] * 0.7 + 0.2,
                    v[1] * 0.7 + 0.2,
                    v[2] * 0.7 + 0.21,
                ];
            }
        }
        *c = v;
    }
}

/// Applies `style` to an already-rendered image in place.
pub fn apply_style(image: &mut ImageBuf, style: &DomainStyle) {
    let mut rng = RngStream::new(style.texture_seed).fork("style-noise");
    let hue = HueRotation::new(style.hue_shift);
    image.map_rgb(|_, _, rgb| {
        let c = hue.apply(rgb.map(f64::from));
        let c = c.map(|v| (v * style.brightness - 0.5) * style.contrast + 0.5);
        let c = if style.noise_sigma > 0.0 {
            c.map(|v| v + style.noise_sigma * rng.normal())
        } else {
            c
        };
        c.map(|v| v as f32)
    });
}

/// Renders with the default layout profile.
pub fn render(spec: &SceneSpec, style: &DomainStyle, width: usize, height: usize) -> Result<(ImageBuf, LabelMap), SceneError> {
    render_with(spec, style, &ContentProfile::default(), width, height)
}

pub fn render_with(
    spec: &SceneSpec,
    style: &DomainStyle,
    content: &ContentProfile,
    width: usize,
    height: usize,
) -> Result<(ImageBuf, LabelMap), SceneError> {
    if width < MIN_DIM || height < MIN_DIM {
        return Err(SceneError::TooSmall(width, height));
    }
    style.validate()?;
    let canvas = draw_geometry(spec, content, width, height)?;
    let mut colors = canvas.colors;

    // Surface texture belongs to the scene; it depends on the layout only.
    let mut texture = RngStream::new(spec.layout_seed).fork("texture");
    for c in colors.iter_mut() {
        let n = 0.025 * texture.normal();
        *c = c.map(|v| v + n);
    }
    let mut weather_rng = RngStream::new(spec.layout_seed).fork("weather");
    apply_condition(&mut colors, spec.condition, width, &mut weather_rng);

    let data = colors
        .iter()
        .flat_map(|c| c.map(|v| v.clamp(0.0, 1.0) as f32))
        .collect();
    let mut image = ImageBuf::new(width, height, 3, data).expect("clamped canvas");
    apply_style(&mut image, style);
    let labels = LabelMap::new(width, height, canvas.labels).expect("canvas dims");
    Ok((image, labels))
}

/// A rendered scene with its spec. The label map is the hidden ground truth.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image: ImageBuf,
    pub labels: LabelMap,
    pub spec: SceneSpec,
    pub style: DomainStyle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainPreset {
    /// Clear daylight, near-identity style, standard layouts.
    Source,
    /// Source layouts under shifted appearance.
    TargetStyle,
    /// Source appearance with unseen layouts, scales and co-occurrences.
    TargetContent,
    TargetBoth,
    /// Prompt-driven diversified data used for self-training.
    Generated,
}

impl DomainPreset {
    pub const ALL: [DomainPreset; 5] = [
        DomainPreset::Source,
        DomainPreset::TargetStyle,
        DomainPreset::TargetContent,
        DomainPreset::TargetBoth,
        DomainPreset::Generated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DomainPreset::Source => "source",
            DomainPreset::TargetStyle => "target-style",
            DomainPreset::TargetContent => "target-content",
            DomainPreset::TargetBoth => "target-both",
            DomainPreset::Generated => "generated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    fn content(self) -> ContentProfile {
        match self {
            DomainPreset::Source | DomainPreset::TargetStyle => ContentProfile::default(),
            DomainPreset::TargetContent | DomainPreset::TargetBoth => ContentProfile::shifted(),
            DomainPreset::Generated => ContentProfile::diverse(),
        }
    }
}

/// Endless sample stream for one domain.
///
/// Content (subjects, layout seed) and appearance (condition, style) come from
/// separate forks of the caller's stream, so two presets built from the same
/// stream that share a content profile produce identical label maps.
pub struct DomainGenerator {
    preset: DomainPreset,
    catalog: ClassCatalog,
    content: ContentProfile,
    content_rng: RngStream,
    style_rng: RngStream,
    width: usize,
    height: usize,
}

pub fn make_domain(preset: DomainPreset, rng: &RngStream, width: usize, height: usize) -> Result<DomainGenerator, SceneError> {
    if width < MIN_DIM || height < MIN_DIM {
        return Err(SceneError::TooSmall(width, height));
    }
    Ok(DomainGenerator {
        preset,
        catalog: ClassCatalog::urban(),
        content: preset.content(),
        content_rng: rng.fork("domain-content"),
        style_rng: rng.fork("domain-style"),
        width,
        height,
    })
}

impl DomainGenerator {
    pub fn preset(&self) -> DomainPreset {
        self.preset
    }

    fn draw_spec(&mut self) -> SceneSpec {
        match self.preset {
            DomainPreset::Generated => sample_prompt(&self.catalog, &mut self.content_rng),
            _ => {
                let candidates: Vec<ClassId> = (1..CLASS_COUNT as ClassId).collect();
                let rng = &mut self.content_rng;
                // Street scenes: the road is almost always there.
                let mut classes = uniform_subset(&candidates[1..], 3, rng);
                if rng.bernoulli(0.9) {
                    classes.insert(0, ROAD);
                }
                SceneSpec::new(&classes, Condition::CLEAR_DAY, rng.next_u64(), &self.catalog)
            }
        }
    }

    fn draw_appearance(&mut self) -> (Condition, DomainStyle) {
        let rng = &mut self.style_rng;
        let texture_seed = rng.next_u64();
        match self.preset {
            DomainPreset::Source | DomainPreset::TargetContent => (
                Condition::CLEAR_DAY,
                DomainStyle {
                    hue_shift: rng.uniform_range(-0.01, 0.01),
                    brightness: rng.uniform_range(0.95, 1.05),
                    contrast: rng.uniform_range(0.95, 1.05),
                    noise_sigma: 0.01,
                    texture_seed,
                },
            ),
            DomainPreset::TargetStyle | DomainPreset::TargetBoth => {
                let condition = Condition {
                    lighting: [Lighting::Day, Lighting::Dusk][rng.below(2)],
                    weather: [Weather::Clear, Weather::Rain, Weather::Fog][rng.below(3)],
                };
                (
                    condition,
                    DomainStyle {
                        hue_shift: rng.uniform_range(0.02, 0.05),
                        brightness: rng.uniform_range(0.85, 0.95),
                        contrast: rng.uniform_range(0.8, 0.9),
                        noise_sigma: 0.03,
                        texture_seed,
                    },
                )
            }
            DomainPreset::Generated => (
                Condition::CLEAR_DAY,
                DomainStyle {
                    hue_shift: rng.uniform_range(-0.06, 0.06),
                    brightness: rng.uniform_range(0.8, 1.1),
                    contrast: rng.uniform_range(0.8, 1.05),
                    noise_sigma: rng.uniform_range(0.0, 0.03),
                    texture_seed,
                },
            ),
        }
    }

    pub fn next_sample(&mut self) -> Sample {
        let mut spec = self.draw_spec();
        let (condition, style) = self.draw_appearance();
        if self.preset != DomainPreset::Generated {
            spec.condition = condition;
        }
        let (image, labels) = render_with(&spec, &style, &self.content, self.width, self.height)
            .expect("generator specs and styles are valid");
        Sample {
            image,
            labels,
            spec,
            style,
        }
    }

    pub fn take(&mut self, n: usize) -> Vec<Sample> {
        (0..n).map(|_| self.next_sample()).collect()
    }
}

impl Iterator for DomainGenerator {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        Some(self.next_sample())
    }
}
