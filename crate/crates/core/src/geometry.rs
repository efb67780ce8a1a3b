//! Box arithmetic, anchor-prior selection and grid decoding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phoc::PhocVector;

/// Axis-aligned box in pixels, `(x, y)` being the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !x.is_finite() || !y.is_finite() || !w.is_finite() || !h.is_finite() {
            return Err(Error::InvalidValue(format!(
                "box ({x}, {y}, {w}, {h}) needs finite coordinates and positive size"
            )));
        }
        Ok(BoundingBox { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn shape(&self) -> Shape {
        Shape { w: self.w, h: self.h }
    }
}

/// Width/height pair, used for anchors and ground-truth box sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub w: f64,
    pub h: f64,
}

impl Shape {
    pub fn new(w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidValue(format!("shape ({w}, {h}) must be positive")));
        }
        Ok(Shape { w, h })
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    // edge differences like (y + h) - y round, so identity is checked directly
    if a == b {
        return 1.0;
    }
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    (inter / (a.area() + b.area() - inter)).min(1.0)
}

/// IoU of two shapes placed with coincident centers.
pub fn shape_iou(a: Shape, b: Shape) -> f64 {
    let inter = a.w.min(b.w) * a.h.min(b.h);
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Width/height priors for box prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    shapes: Vec<Shape>,
}

impl AnchorSet {
    pub fn new(shapes: Vec<Shape>) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::InvalidValue("anchor set is empty".into()));
        }
        if let Some(s) = shapes.iter().find(|s| !(s.w > 0.0 && s.h > 0.0)) {
            return Err(Error::InvalidValue(format!(
                "anchor ({}, {}) must be positive",
                s.w, s.h
            )));
        }
        Ok(AnchorSet { shapes })
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }
}

impl Default for AnchorSet {
    /// Thirteen wide text priors in pixels, small to large.
    fn default() -> Self {
        const PRIORS: [(f64, f64); 13] = [
            (24.0, 12.0),
            (40.0, 14.0),
            (64.0, 18.0),
            (48.0, 28.0),
            (96.0, 24.0),
            (140.0, 30.0),
            (90.0, 48.0),
            (200.0, 40.0),
            (150.0, 70.0),
            (280.0, 56.0),
            (240.0, 110.0),
            (400.0, 80.0),
            (480.0, 160.0),
        ];
        AnchorSet {
            shapes: PRIORS.iter().map(|&(w, h)| Shape { w, h }).collect(),
        }
    }
}

/// Fraction of `gt` shapes matched by some anchor at `shape_iou >= min_iou`.
pub fn coverage(gt: &[Shape], anchors: &AnchorSet, min_iou: f64) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    let covered = gt
        .iter()
        .filter(|&&g| anchors.shapes.iter().any(|&a| shape_iou(g, a) >= min_iou))
        .count();
    covered as f64 / gt.len() as f64
}

/// Index of the anchor with the highest shape IoU; ties go to the lower index.
pub fn assign_best_anchor(gt: Shape, anchors: &AnchorSet) -> usize {
    let mut best = 0;
    let mut best_iou = f64::NEG_INFINITY;
    for (i, &a) in anchors.shapes.iter().enumerate() {
        let v = shape_iou(gt, a);
        if v > best_iou {
            best = i;
            best_iou = v;
        }
    }
    best
}

const MEDOID_ITERATIONS: usize = 50;
const MEDOID_CANDIDATES: usize = 32;

/// Smallest k-medoid anchor set (distance `1 - shape_iou`) giving full coverage.
///
/// `k` grows from 1 until every ground-truth shape has an anchor with
/// `shape_iou >= min_iou`. Each `k` is clustered from a seeded k-means++
/// initialization, so equal inputs give equal anchors.
pub fn select_anchors(gt: &[Shape], min_iou: f64, max_k: usize, seed: u64) -> Result<AnchorSet> {
    if gt.is_empty() {
        return Err(Error::InvalidValue("no ground-truth shapes".into()));
    }
    if !(min_iou > 0.0 && min_iou < 1.0) {
        return Err(Error::InvalidValue(format!("min_iou {min_iou} outside (0, 1)")));
    }
    if let Some(s) = gt.iter().find(|s| !(s.w > 0.0 && s.h > 0.0)) {
        return Err(Error::InvalidValue(format!("shape ({}, {}) must be positive", s.w, s.h)));
    }
    let (points, weights) = dedup_shapes(gt);

    for k in 1..=max_k {
        let medoids = if k >= points.len() {
            (0..points.len()).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            cluster(&points, &weights, k, &mut rng)
        };
        let mut shapes: Vec<Shape> = medoids.iter().map(|&i| points[i]).collect();
        shapes.sort_by(|a, b| (a.w * a.h).total_cmp(&(b.w * b.h)).then(a.w.total_cmp(&b.w)));
        let anchors = AnchorSet { shapes };
        if coverage(&points, &anchors, min_iou) == 1.0 {
            return Ok(anchors);
        }
        if k >= points.len() {
            break;
        }
    }
    Err(Error::CoverageUnreachable { max_k, min_iou })
}

fn dedup_shapes(gt: &[Shape]) -> (Vec<Shape>, Vec<f64>) {
    let mut sorted: Vec<Shape> = gt.to_vec();
    sorted.sort_by(|a, b| a.w.total_cmp(&b.w).then(a.h.total_cmp(&b.h)));
    let mut points: Vec<Shape> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for s in sorted {
        match points.last() {
            Some(&p) if p == s => *weights.last_mut().expect("paired with points") += 1.0,
            _ => {
                points.push(s);
                weights.push(1.0);
            }
        }
    }
    (points, weights)
}

fn distance(a: Shape, b: Shape) -> f64 {
    1.0 - shape_iou(a, b)
}

fn nearest(p: Shape, points: &[Shape], medoids: &[usize]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, &m) in medoids.iter().enumerate() {
        let d = distance(p, points[m]);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn cluster(points: &[Shape], weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut medoids = init_plus_plus(points, weights, k, rng);
    let mut assignment = vec![0usize; points.len()];
    for _ in 0..MEDOID_ITERATIONS {
        for (i, &p) in points.iter().enumerate() {
            assignment[i] = nearest(p, points, &medoids).0;
        }
        let mut changed = false;
        for (c, medoid) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..points.len()).filter(|&i| assignment[i] == c).collect();
            let next = best_medoid(points, weights, &members, *medoid);
            if next != *medoid {
                *medoid = next;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    medoids
}

fn init_plus_plus(points: &[Shape], weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut medoids = vec![sample_weighted(weights, rng)];
    let mut dist: Vec<f64> = points.iter().map(|&p| distance(p, points[medoids[0]])).collect();
    while medoids.len() < k {
        let scores: Vec<f64> = dist.iter().zip(weights).map(|(d, w)| d * d * w).collect();
        let next = if scores.iter().sum::<f64>() > 0.0 {
            sample_weighted(&scores, rng)
        } else {
            // every point coincides with a medoid already
            (0..points.len()).find(|i| !medoids.contains(i)).expect("k < point count")
        };
        medoids.push(next);
        for (d, &p) in dist.iter_mut().zip(points) {
            *d = d.min(distance(p, points[next]));
        }
    }
    medoids
}

fn sample_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if target < w {
            return i;
        }
        target -= w;
    }
    weights.len() - 1
}

/// Member minimizing the weighted distance sum over its cluster.
///
/// Candidates are the current medoid plus the members closest to the
/// cluster's weighted mean in log-size space.
fn best_medoid(points: &[Shape], weights: &[f64], members: &[usize], current: usize) -> usize {
    if members.is_empty() {
        return current;
    }
    let total: f64 = members.iter().map(|&i| weights[i]).sum();
    let (mut lw, mut lh) = (0.0, 0.0);
    for &i in members {
        lw += weights[i] * points[i].w.ln();
        lh += weights[i] * points[i].h.ln();
    }
    let (lw, lh) = (lw / total, lh / total);
    let mut ranked: Vec<(f64, usize)> = members
        .iter()
        .map(|&i| ((points[i].w.ln() - lw).powi(2) + (points[i].h.ln() - lh).powi(2), i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut candidates: Vec<usize> = ranked.iter().take(MEDOID_CANDIDATES).map(|r| r.1).collect();
    if !candidates.contains(&current) {
        candidates.push(current);
    }
    let cost = |c: usize| -> f64 {
        members
            .iter()
            .map(|&i| weights[i] * distance(points[i], points[c]))
            .sum()
    };
    let mut best = current;
    let mut best_cost = cost(current);
    for c in candidates {
        let v = cost(c);
        if v < best_cost {
            best = c;
            best_cost = v;
        }
    }
    best
}

/// Parameters for turning a raw output tensor into detections.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDecodeConfig {
    pub input_width: usize,
    pub input_height: usize,
    pub stride: usize,
    pub anchors: AnchorSet,
    pub objectness_threshold: f32,
    pub apply_nms: bool,
}

pub const DEFAULT_STRIDE: usize = 32;
pub const DEFAULT_OBJECTNESS_THRESHOLD: f32 = 0.0025;

impl GridDecodeConfig {
    pub fn new(input_width: usize, input_height: usize, anchors: AnchorSet) -> Result<Self> {
        let config = GridDecodeConfig {
            input_width,
            input_height,
            stride: DEFAULT_STRIDE,
            anchors,
            objectness_threshold: DEFAULT_OBJECTNESS_THRESHOLD,
            apply_nms: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_threshold(mut self, tau: f32) -> Result<Self> {
        self.objectness_threshold = tau;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0
            || self.input_width == 0
            || self.input_height == 0
            || !self.input_width.is_multiple_of(self.stride)
            || !self.input_height.is_multiple_of(self.stride)
        {
            return Err(Error::InvalidValue(format!(
                "input {}x{} is not a positive multiple of stride {}",
                self.input_width, self.input_height, self.stride
            )));
        }
        if !(0.0..1.0).contains(&self.objectness_threshold) {
            return Err(Error::InvalidValue(format!(
                "objectness threshold {} outside [0, 1)",
                self.objectness_threshold
            )));
        }
        if self.apply_nms {
            return Err(Error::InvalidValue(
                "non-maximal suppression is not part of this pipeline".into(),
            ));
        }
        Ok(())
    }

    pub fn grid_width(&self) -> usize {
        self.input_width / self.stride
    }

    pub fn grid_height(&self) -> usize {
        self.input_height / self.stride
    }

    pub fn proposal_count(&self) -> usize {
        self.grid_width() * self.grid_height() * self.anchors.len()
    }
}

/// Raw activations laid out as `[cell_x][cell_y][anchor][4 + 1 + phoc_dim]`.
#[derive(Debug, Clone)]
pub struct RawGrid {
    grid_width: usize,
    grid_height: usize,
    anchors: usize,
    phoc_dim: usize,
    data: Vec<f32>,
}

impl RawGrid {
    pub fn new(
        grid_width: usize,
        grid_height: usize,
        anchors: usize,
        phoc_dim: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let expected = grid_width * grid_height * anchors * (5 + phoc_dim);
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(RawGrid {
            grid_width,
            grid_height,
            anchors,
            phoc_dim,
            data,
        })
    }

    pub fn filled(grid_width: usize, grid_height: usize, anchors: usize, phoc_dim: usize, value: f32) -> Self {
        let len = grid_width * grid_height * anchors * (5 + phoc_dim);
        RawGrid {
            grid_width,
            grid_height,
            anchors,
            phoc_dim,
            data: vec![value; len],
        }
    }

    pub fn channels(&self) -> usize {
        5 + self.phoc_dim
    }

    pub fn phoc_dim(&self) -> usize {
        self.phoc_dim
    }

    fn offset(&self, cx: usize, cy: usize, anchor: usize) -> usize {
        ((cx * self.grid_height + cy) * self.anchors + anchor) * self.channels()
    }

    /// Activations `(tx, ty, tw, th, tc, tphoc...)` of one proposal.
    pub fn proposal(&self, cx: usize, cy: usize, anchor: usize) -> &[f32] {
        let o = self.offset(cx, cy, anchor);
        &self.data[o..o + self.channels()]
    }

    pub fn proposal_mut(&mut self, cx: usize, cy: usize, anchor: usize) -> &mut [f32] {
        let o = self.offset(cx, cy, anchor);
        let c = self.channels();
        &mut self.data[o..o + c]
    }
}

/// One model output: box, objectness and predicted PHOC.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub objectness: f32,
    pub phoc: PhocVector,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, bbox: BoundingBox, objectness: f32, phoc: PhocVector) -> Result<Self> {
        if !(0.0..=1.0).contains(&objectness) {
            return Err(Error::InvalidValue(format!("objectness {objectness} outside [0, 1]")));
        }
        Ok(Detection {
            image_id: image_id.into(),
            bbox,
            objectness,
            phoc: phoc.into_prediction(),
        })
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Decodes every proposal whose objectness reaches the threshold. No NMS.
pub fn decode_grid(raw: &RawGrid, config: &GridDecodeConfig, image_id: &str) -> Result<Vec<Detection>> {
    config.validate()?;
    if raw.grid_width != config.grid_width()
        || raw.grid_height != config.grid_height()
        || raw.anchors != config.anchors.len()
    {
        return Err(Error::ShapeMismatch {
            expected: config.proposal_count() * raw.channels(),
            actual: raw.data.len(),
        });
    }
    let stride = config.stride as f64;
    let mut out = Vec::new();
    for cx in 0..raw.grid_width {
        for cy in 0..raw.grid_height {
            for (a, prior) in config.anchors.shapes().iter().enumerate() {
                let p = raw.proposal(cx, cy, a);
                let objectness = sigmoid(p[4]);
                if objectness < config.objectness_threshold {
                    continue;
                }
                let center_x = (sigmoid(p[0]) as f64 + cx as f64) * stride;
                let center_y = (sigmoid(p[1]) as f64 + cy as f64) * stride;
                let w = prior.w * (p[2] as f64).exp();
                let h = prior.h * (p[3] as f64).exp();
                let phoc: Vec<f32> = p[5..].iter().map(|&v| sigmoid(v)).collect();
                out.push(Detection {
                    image_id: image_id.to_string(),
                    bbox: BoundingBox {
                        x: center_x - w / 2.0,
                        y: center_y - h / 2.0,
                        w,
                        h,
                    },
                    objectness,
                    phoc: PhocVector::prediction(phoc)?,
                });
            }
        }
    }
    Ok(out)
}
