//! Table family: the region between `y = -(|x|^beta + 1)` and either its mirror
//! image (symmetric model) or the x-axis (folded model), closed by two
//! dispersing circular caps whose centers sit on the x-axis.
//!
//! Boundary pieces are listed counterclockwise. Each piece carries its own
//! arc-length coordinate `r`, starting at the piece's counterclockwise-first
//! endpoint. Angles `phi` on the cross-section are measured from the inward
//! normal, positive counterclockwise.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for endpoint adjacency when checking that the pieces close up.
pub const CLOSURE_TOL: f64 = 1e-12;
/// Interior corner angles below this are treated as cusps.
pub const CUSP_ANGLE_TOL: f64 = 1e-9;
/// Distance from the boundary tolerated by [`Table::locate`].
pub const LOCATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { x: c, y: s }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Counterclockwise rotation by `angle`.
    #[inline]
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(self.x * c - self.y * s, self.x * s + self.y * c)
    }

    /// Counterclockwise rotation by a quarter turn.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Signed angle from `self` to `o`, in (-pi, pi].
    pub fn angle_to(self, o: Vec2) -> f64 {
        self.cross(o).atan2(self.dot(o))
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Symmetric,
    Folded,
}

fn default_half_width() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    0.3
}

fn default_model() -> Model {
    Model::Symmetric
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub beta: f64,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_model")]
    pub model: Model,
    /// Distance from `x = half_width` to the right cap's center. Defaults to
    /// `2 g(x_c) g'(x_c)`, twice the offset at which the cap meets the power
    /// curve tangentially.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_center_offset: Option<f64>,
    /// Overrides the cap radius. Any value other than the distance from the
    /// cap center to the power-curve endpoint leaves the boundary open.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_radius: Option<f64>,
}

impl TableSpec {
    pub fn new(beta: f64, model: Model) -> Self {
        Self {
            beta,
            half_width: default_half_width(),
            epsilon: default_epsilon(),
            model,
            cap_center_offset: None,
            cap_radius: None,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 2.0) || !self.beta.is_finite() {
            return Err(Error::InvalidSpec(format!("beta must exceed 2, got {}", self.beta)));
        }
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "half_width must be positive, got {}",
                self.half_width
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.half_width / 2.0) {
            return Err(Error::InvalidSpec(format!(
                "epsilon must lie in (0, half_width/2), got {}",
                self.epsilon
            )));
        }
        if let Some(r) = self.cap_radius {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidSpec(format!("cap_radius must be positive, got {r}")));
            }
        }
        if let Some(c) = self.cap_center_offset {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "cap_center_offset must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }

    /// Mixing exponent `a = (beta + 2) / (beta - 2)`.
    pub fn mixing_exponent(&self) -> f64 {
        (self.beta + 2.0) / (self.beta - 2.0)
    }
}

/// `g(x) = |x|^beta + 1` and its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct PowerLaw {
    beta: f64,
    int_beta: Option<i32>,
}

impl PowerLaw {
    pub fn new(beta: f64) -> Self {
        let int_beta = (beta.fract() == 0.0 && beta < 64.0).then_some(beta as i32);
        Self { beta, int_beta }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `|x|^(beta - k)`.
    #[inline]
    fn abs_pow(&self, x: f64, k: i32) -> f64 {
        let a = x.abs();
        match self.int_beta {
            Some(b) => a.powi(b - k),
            None => a.powf(self.beta - k as f64),
        }
    }

    #[inline]
    pub fn g(&self, x: f64) -> f64 {
        self.abs_pow(x, 0) + 1.0
    }

    #[inline]
    pub fn dg(&self, x: f64) -> f64 {
        self.beta * self.abs_pow(x, 1).copysign(x)
    }

    #[inline]
    pub fn d2g(&self, x: f64) -> f64 {
        self.beta * (self.beta - 1.0) * self.abs_pow(x, 2)
    }

    /// Curvature of the graph of `g`, nonnegative.
    pub fn curvature(&self, x: f64) -> f64 {
        let d = self.dg(x);
        self.d2g(x) / (1.0 + d * d).powf(1.5)
    }
}

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Eight-point Gauss-Legendre rule on `[a, b]`.
pub(crate) fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        acc += w * (f(mid - half * node) + f(mid + half * node));
    }
    acc * half
}

const ARC_PANELS: usize = 128;

/// Signed arc length of the graph of `g` measured from `x = 0`.
#[derive(Debug, Clone)]
struct ArcLength {
    power: PowerLaw,
    half_width: f64,
    panel: f64,
    cumulative: Vec<f64>,
}

impl ArcLength {
    fn new(power: PowerLaw, half_width: f64) -> Self {
        let panel = half_width / ARC_PANELS as f64;
        let mut cumulative = Vec::with_capacity(ARC_PANELS + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for k in 0..ARC_PANELS {
            acc += gauss_legendre(|u| speed(&power, u), k as f64 * panel, (k + 1) as f64 * panel);
            cumulative.push(acc);
        }
        Self {
            power,
            half_width,
            panel,
            cumulative,
        }
    }

    fn half_length(&self) -> f64 {
        self.cumulative[ARC_PANELS]
    }

    fn s(&self, x: f64) -> f64 {
        let a = x.abs().min(self.half_width);
        let k = ((a / self.panel) as usize).min(ARC_PANELS - 1);
        let lo = k as f64 * self.panel;
        let part = if a > lo {
            gauss_legendre(|u| speed(&self.power, u), lo, a)
        } else {
            0.0
        };
        (self.cumulative[k] + part).copysign(x)
    }

    fn x_of(&self, s: f64) -> f64 {
        let target = s.abs();
        // s is at least |x| and at most |x| sqrt(1 + g'(x_c)^2), so Newton from
        // the chord guess converges quickly.
        let mut x = target * self.half_width / self.half_length();
        for _ in 0..60 {
            let f = self.s(x) - target;
            let step = f / speed(&self.power, x);
            x -= step;
            x = x.clamp(0.0, self.half_width);
            if step.abs() < 1e-16 * (1.0 + x) {
                break;
            }
        }
        x.copysign(s)
    }
}

#[inline]
fn speed(power: &PowerLaw, x: f64) -> f64 {
    let d = power.dg(x);
    (1.0 + d * d).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PieceKind {
    PowerBottom,
    PowerTop,
    Axis,
    CapLeft,
    CapRight,
}

impl PieceKind {
    pub fn name(self) -> &'static str {
        match self {
            PieceKind::PowerBottom => "PowerBottom",
            PieceKind::PowerTop => "PowerTop",
            PieceKind::Axis => "Axis",
            PieceKind::CapLeft => "CapLeft",
            PieceKind::CapRight => "CapRight",
        }
    }

    pub fn is_power(self) -> bool {
        matches!(self, PieceKind::PowerBottom | PieceKind::PowerTop)
    }

    pub fn is_cap(self) -> bool {
        matches!(self, PieceKind::CapLeft | PieceKind::CapRight)
    }
}

/// Circular arc traversed clockwise about its center, from `theta_start`
/// down to `theta_end`; the table lies outside the circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub center: Vec2,
    pub radius: f64,
    pub theta_start: f64,
    pub theta_end: f64,
}

impl Arc {
    fn point(&self, theta: f64) -> Vec2 {
        self.center + Vec2::from_angle(theta) * self.radius
    }

    fn unwrap(&self, theta: f64) -> f64 {
        let mut t = theta;
        while t < self.theta_end - PI {
            t += TAU;
        }
        while t > self.theta_end + PI {
            t -= TAU;
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPiece {
    pub kind: PieceKind,
    pub length: f64,
    pub start: Vec2,
    pub end: Vec2,
    /// Largest curvature on the piece.
    pub kappa_max: f64,
    /// Present for caps.
    pub arc: Option<Arc>,
}

/// Point on the boundary with its Frenet frame. `curvature` is positive where
/// the boundary is dispersing (convex towards the interior).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub pos: Vec2,
    pub tangent: Vec2,
    pub normal: Vec2,
    pub curvature: f64,
}

/// Post-collision state on the cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCoord {
    pub piece: usize,
    pub r: f64,
    pub phi: f64,
    pub pos: Vec2,
}

/// Phase point of the flow: position plus direction angle in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub pos: Vec2,
    pub theta: f64,
}

impl FlowState {
    pub fn new(pos: Vec2, theta: f64) -> Self {
        Self {
            pos,
            theta: theta.rem_euclid(TAU),
        }
    }

    pub fn from_dir(pos: Vec2, dir: Vec2) -> Self {
        Self::new(pos, dir.angle())
    }

    pub fn dir(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub spec: TableSpec,
    pub pieces: Vec<BoundaryPiece>,
    /// Global boundary coordinate at which each piece starts.
    pub offsets: Vec<f64>,
    pub total_length: f64,
    pub diameter: f64,
    pub power: PowerLaw,
    /// `g(x_c)`, the height of the power curve at its ends.
    pub g_end: f64,
    arc_len: ArcLength,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSummary {
    pub spec: TableSpec,
    pub piece_kinds: Vec<PieceKind>,
    pub piece_lengths: Vec<f64>,
    pub total_length: f64,
    pub diameter: f64,
    pub cap_radius: f64,
    pub cap_center_x: f64,
    pub area: f64,
}

pub fn build_table(spec: TableSpec) -> Result<Table> {
    spec.validate()?;
    let power = PowerLaw::new(spec.beta);
    let xc = spec.half_width;
    let g_end = power.g(xc);
    let slope_end = power.dg(xc);
    let offset = spec.cap_center_offset.unwrap_or(2.0 * g_end * slope_end);
    let exact_radius = offset.hypot(g_end);
    let radius = spec.cap_radius.unwrap_or(exact_radius);
    let right_center = Vec2::new(xc + offset, 0.0);
    let left_center = Vec2::new(-xc - offset, 0.0);
    let axis_end = xc + offset - radius;
    if axis_end <= 0.0 {
        return Err(Error::InvalidSpec(format!(
            "caps overlap on the axis (radius {radius} reaches past x = 0)"
        )));
    }

    let arc_len = ArcLength::new(power, xc);
    let power_length = 2.0 * arc_len.half_length();
    let kappa_power = max_power_curvature(&power, xc);

    let power_piece = |kind: PieceKind, start: Vec2, end: Vec2| BoundaryPiece {
        kind,
        length: power_length,
        start,
        end,
        kappa_max: kappa_power,
        arc: None,
    };
    let cap_piece = |kind: PieceKind, arc: Arc| BoundaryPiece {
        kind,
        length: radius * (arc.theta_start - arc.theta_end),
        start: arc.point(arc.theta_start),
        end: arc.point(arc.theta_end),
        kappa_max: 1.0 / radius,
        arc: Some(arc),
    };

    let right_start = (-g_end).atan2(-offset) + TAU;
    let left_end = (-g_end).atan2(offset);
    let pieces = match spec.model {
        Model::Symmetric => vec![
            power_piece(PieceKind::PowerBottom, Vec2::new(-xc, -g_end), Vec2::new(xc, -g_end)),
            cap_piece(
                PieceKind::CapRight,
                Arc {
                    center: right_center,
                    radius,
                    theta_start: right_start,
                    theta_end: g_end.atan2(-offset),
                },
            ),
            power_piece(PieceKind::PowerTop, Vec2::new(xc, g_end), Vec2::new(-xc, g_end)),
            cap_piece(
                PieceKind::CapLeft,
                Arc {
                    center: left_center,
                    radius,
                    theta_start: g_end.atan2(offset),
                    theta_end: left_end,
                },
            ),
        ],
        Model::Folded => {
            let right = Arc {
                center: right_center,
                radius,
                theta_start: right_start,
                theta_end: PI,
            };
            let left = Arc {
                center: left_center,
                radius,
                theta_start: 0.0,
                theta_end: left_end,
            };
            let axis_from = right.point(PI);
            let axis_to = left.point(0.0);
            vec![
                power_piece(PieceKind::PowerBottom, Vec2::new(-xc, -g_end), Vec2::new(xc, -g_end)),
                cap_piece(PieceKind::CapRight, right),
                BoundaryPiece {
                    kind: PieceKind::Axis,
                    length: (axis_from - axis_to).norm(),
                    start: axis_from,
                    end: axis_to,
                    kappa_max: 0.0,
                    arc: None,
                },
                cap_piece(PieceKind::CapLeft, left),
            ]
        }
    };

    let mut offsets = Vec::with_capacity(pieces.len());
    let mut acc = 0.0;
    for p in &pieces {
        offsets.push(acc);
        acc += p.length;
    }

    let mut table = Table {
        spec,
        pieces,
        offsets,
        total_length: acc,
        diameter: 0.0,
        power,
        g_end,
        arc_len,
    };
    table.check_closure()?;
    table.check_corners()?;
    table.diameter = table.compute_diameter();
    Ok(table)
}

fn max_power_curvature(power: &PowerLaw, xc: f64) -> f64 {
    (0..=2000)
        .map(|k| power.curvature(xc * k as f64 / 2000.0))
        .fold(0.0, f64::max)
}

impl Table {
    pub fn model(&self) -> Model {
        self.spec.model
    }

    pub fn half_width(&self) -> f64 {
        self.spec.half_width
    }

    pub fn piece(&self, id: usize) -> &BoundaryPiece {
        &self.pieces[id]
    }

    pub fn cap_radius(&self) -> f64 {
        self.pieces
            .iter()
            .find_map(|p| p.arc.map(|a| a.radius))
            .unwrap_or(f64::NAN)
    }

    /// Largest gap between consecutive piece endpoints.
    pub fn closure_gap(&self) -> (usize, f64) {
        let n = self.pieces.len();
        (0..n)
            .map(|i| (i, (self.pieces[i].end - self.pieces[(i + 1) % n].start).norm()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
    }

    fn check_closure(&self) -> Result<()> {
        let (piece, gap) = self.closure_gap();
        if gap > CLOSURE_TOL {
            return Err(Error::NotClosed { piece, gap });
        }
        Ok(())
    }

    /// Interior angle at the junction after piece `i`.
    pub fn corner_angle(&self, i: usize) -> f64 {
        let n = self.pieces.len();
        let a = self.point_unchecked(i, self.pieces[i].length).tangent;
        let b = self.point_unchecked((i + 1) % n, 0.0).tangent;
        PI - a.angle_to(b)
    }

    fn check_corners(&self) -> Result<()> {
        for i in 0..self.pieces.len() {
            let angle = self.corner_angle(i);
            if angle <= CUSP_ANGLE_TOL || angle >= PI {
                return Err(Error::DegenerateCap { angle });
            }
        }
        Ok(())
    }

    /// Maximum distance between boundary points: coarse scan over all pairs
    /// of sample points followed by coordinate-wise golden-section refinement.
    fn compute_diameter(&self) -> f64 {
        const SAMPLES: usize = 200;
        let mut pts = Vec::new();
        for (id, piece) in self.pieces.iter().enumerate() {
            for k in 0..=SAMPLES {
                let r = piece.length * k as f64 / SAMPLES as f64;
                pts.push((id, r, self.point_unchecked(id, r).pos));
            }
        }
        let mut best = (0, 0, 0.0);
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let d = (pts[i].2 - pts[j].2).norm();
                if d > best.2 {
                    best = (i, j, d);
                }
            }
        }
        let (mut a, mut b) = ((pts[best.0].0, pts[best.0].1), (pts[best.1].0, pts[best.1].1));
        let dist = |a: (usize, f64), b: (usize, f64)| {
            (self.point_unchecked(a.0, a.1).pos - self.point_unchecked(b.0, b.1).pos).norm()
        };
        for _ in 0..40 {
            let len_a = self.pieces[a.0].length;
            let h = 2.0 * len_a / SAMPLES as f64;
            a.1 = golden_max(|r| dist((a.0, r), b), (a.1 - h).max(0.0), (a.1 + h).min(len_a));
            let len_b = self.pieces[b.0].length;
            let h = 2.0 * len_b / SAMPLES as f64;
            b.1 = golden_max(|r| dist(a, (b.0, r)), (b.1 - h).max(0.0), (b.1 + h).min(len_b));
        }
        dist(a, b).max(best.2)
    }

    pub fn global_s(&self, piece: usize, r: f64) -> f64 {
        self.offsets[piece] + r
    }

    /// Inverse of [`Table::global_s`]; `s` is wrapped onto the boundary loop.
    pub fn at_global(&self, s: f64) -> (usize, f64) {
        let s = s.rem_euclid(self.total_length);
        let id = self
            .offsets
            .iter()
            .rposition(|&o| o <= s)
            .unwrap_or(0);
        (id, (s - self.offsets[id]).min(self.pieces[id].length))
    }

    pub fn boundary_point(&self, piece: usize, r: f64) -> Result<BoundaryPoint> {
        let p = self.pieces.get(piece).ok_or(Error::OutOfRange {
            piece,
            r,
            length: f64::NAN,
        })?;
        let slack = 1e-12 * (1.0 + p.length);
        if !(r >= -slack && r <= p.length + slack) {
            return Err(Error::OutOfRange {
                piece,
                r,
                length: p.length,
            });
        }
        Ok(self.point_unchecked(piece, r.clamp(0.0, p.length)))
    }

    pub(crate) fn point_unchecked(&self, piece: usize, r: f64) -> BoundaryPoint {
        let p = &self.pieces[piece];
        match p.kind {
            PieceKind::PowerBottom => {
                let x = self.arc_len.x_of(r - self.arc_len.half_length());
                self.power_frame(PieceKind::PowerBottom, x)
            }
            PieceKind::PowerTop => {
                let x = self.arc_len.x_of(self.arc_len.half_length() - r);
                self.power_frame(PieceKind::PowerTop, x)
            }
            PieceKind::Axis => BoundaryPoint {
                pos: Vec2::new(p.start.x - r, 0.0),
                tangent: Vec2::new(-1.0, 0.0),
                normal: Vec2::new(0.0, -1.0),
                curvature: 0.0,
            },
            PieceKind::CapLeft | PieceKind::CapRight => {
                let arc = p.arc.expect("caps carry an arc");
                let theta = arc.theta_start - r / arc.radius;
                let (s, c) = theta.sin_cos();
                BoundaryPoint {
                    pos: arc.point(theta),
                    tangent: Vec2::new(s, -c),
                    normal: Vec2::new(c, s),
                    curvature: 1.0 / arc.radius,
                }
            }
        }
    }

    /// Frame of a power-curve piece at abscissa `x`, without going through `r`.
    #[inline]
    pub(crate) fn power_frame(&self, kind: PieceKind, x: f64) -> BoundaryPoint {
        let d = self.power.dg(x);
        let inv = 1.0 / (1.0 + d * d).sqrt();
        let curvature = self.power.d2g(x) * inv * inv * inv;
        match kind {
            PieceKind::PowerBottom => BoundaryPoint {
                pos: Vec2::new(x, -self.power.g(x)),
                tangent: Vec2::new(inv, -d * inv),
                normal: Vec2::new(d * inv, inv),
                curvature,
            },
            _ => BoundaryPoint {
                pos: Vec2::new(x, self.power.g(x)),
                tangent: Vec2::new(-inv, -d * inv),
                normal: Vec2::new(d * inv, -inv),
                curvature,
            },
        }
    }

    /// Arc length on a power-curve piece of the point with abscissa `x`.
    pub(crate) fn power_r(&self, kind: PieceKind, x: f64) -> f64 {
        let half = self.arc_len.half_length();
        match kind {
            PieceKind::PowerBottom => half + self.arc_len.s(x),
            _ => half - self.arc_len.s(x),
        }
    }

    /// Arc length of an arbitrary point known to lie on `piece`.
    pub(crate) fn r_on_piece(&self, piece: usize, pos: Vec2) -> f64 {
        let p = &self.pieces[piece];
        let r = match p.kind {
            PieceKind::PowerBottom | PieceKind::PowerTop => self.power_r(p.kind, pos.x),
            PieceKind::Axis => p.start.x - pos.x,
            PieceKind::CapLeft | PieceKind::CapRight => {
                let arc = p.arc.expect("caps carry an arc");
                let theta = arc.unwrap((pos - arc.center).angle());
                arc.radius * (arc.theta_start - theta)
            }
        };
        r.clamp(0.0, p.length)
    }

    pub fn mcoord(&self, piece: usize, r: f64, phi: f64) -> Result<MCoord> {
        if !(phi.abs() <= FRAC_PI_2) {
            return Err(Error::BadArgument(format!("|phi| > pi/2: {phi}")));
        }
        let bp = self.boundary_point(piece, r)?;
        Ok(MCoord {
            piece,
            r: r.clamp(0.0, self.pieces[piece].length),
            phi,
            pos: bp.pos,
        })
    }

    /// Inward normal at the cached position of `m`.
    pub fn normal_at(&self, m: &MCoord) -> Vec2 {
        self.frame_at(m.piece, m.pos, m.r).normal
    }

    #[inline]
    pub(crate) fn frame_at(&self, piece: usize, pos: Vec2, r: f64) -> BoundaryPoint {
        let kind = self.pieces[piece].kind;
        if kind.is_power() {
            self.power_frame(kind, pos.x)
        } else {
            self.point_unchecked(piece, r)
        }
    }

    /// Outgoing direction of a post-collision state.
    #[inline]
    pub fn outgoing_dir(&self, m: &MCoord) -> Vec2 {
        self.normal_at(m).rotate(m.phi)
    }

    pub fn m_to_flow(&self, m: &MCoord) -> FlowState {
        FlowState::from_dir(m.pos, self.outgoing_dir(m))
    }

    /// Recovers the cross-section coordinates of a boundary state whose
    /// direction points into the table.
    pub fn flow_to_m(&self, s: &FlowState) -> Result<MCoord> {
        let (piece, r) = self.locate(s.pos)?;
        let normal = self.frame_at(piece, s.pos, r).normal;
        let phi = normal.angle_to(s.dir());
        if phi.abs() > FRAC_PI_2 + 1e-12 {
            return Err(Error::BadArgument(format!(
                "direction points out of the table (phi = {phi})"
            )));
        }
        let bp = self.point_unchecked(piece, r);
        Ok(MCoord {
            piece,
            r,
            phi: phi.clamp(-FRAC_PI_2, FRAC_PI_2),
            pos: bp.pos,
        })
    }

    /// Finds the piece and arc length of a boundary point.
    pub fn locate(&self, pos: Vec2) -> Result<(usize, f64)> {
        let xc = self.half_width();
        let mut best = (usize::MAX, f64::INFINITY);
        for (id, p) in self.pieces.iter().enumerate() {
            let dist = match p.kind {
                PieceKind::PowerBottom | PieceKind::PowerTop => {
                    if pos.x.abs() > xc + LOCATE_TOL {
                        continue;
                    }
                    let y = if p.kind == PieceKind::PowerBottom {
                        -self.power.g(pos.x)
                    } else {
                        self.power.g(pos.x)
                    };
                    (pos.y - y).abs() / speed(&self.power, pos.x)
                }
                PieceKind::Axis => {
                    if pos.x > p.start.x + LOCATE_TOL || pos.x < p.end.x - LOCATE_TOL {
                        continue;
                    }
                    pos.y.abs()
                }
                PieceKind::CapLeft | PieceKind::CapRight => {
                    let arc = p.arc.expect("caps carry an arc");
                    let theta = arc.unwrap((pos - arc.center).angle());
                    let slack = LOCATE_TOL / arc.radius;
                    if theta > arc.theta_start + slack || theta < arc.theta_end - slack {
                        continue;
                    }
                    ((pos - arc.center).norm() - arc.radius).abs()
                }
            };
            if dist < best.1 {
                best = (id, dist);
            }
        }
        if best.1 > LOCATE_TOL {
            return Err(Error::OffBoundary(best.1));
        }
        Ok((best.0, self.r_on_piece(best.0, pos)))
    }

    /// Angle between the outgoing trajectory and the vertical direction that
    /// points into the table, positive counterclockwise.
    pub fn vertical_angle(&self, m: &MCoord) -> Result<f64> {
        let kind = self.pieces[m.piece].kind;
        if kind.is_cap() {
            return Err(Error::UnsupportedPiece(kind.name()));
        }
        let normal = self.normal_at(m);
        let dir = normal.rotate(m.phi);
        Ok(vertical_angle_of(normal, dir))
    }

    /// Approximate signed distance to the boundary, positive inside.
    pub fn signed_margin(&self, p: Vec2) -> f64 {
        let xc = self.half_width();
        let g = self.power.g(p.x);
        let sp = speed(&self.power, p.x);
        let mut m = (p.y + g) / sp;
        m = m.min(match self.model() {
            Model::Symmetric => (g - p.y) / sp,
            Model::Folded => -p.y,
        });
        m = m.min(xc - p.x.abs());
        for piece in &self.pieces {
            if let Some(arc) = piece.arc {
                m = m.min((p - arc.center).norm() - arc.radius);
            }
        }
        m
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.signed_margin(p) >= -1e-10
    }

    /// Bounding box `(min, max)` of the table.
    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let xc = self.half_width();
        match self.model() {
            Model::Symmetric => (Vec2::new(-xc, -self.g_end), Vec2::new(xc, self.g_end)),
            Model::Folded => (Vec2::new(-xc, -self.g_end), Vec2::new(xc, 0.0)),
        }
    }

    /// Enclosed area, from the boundary integral of `x dy - y dx`.
    pub fn area(&self) -> f64 {
        const PANELS: usize = 64;
        let mut acc = 0.0;
        for (id, p) in self.pieces.iter().enumerate() {
            let h = p.length / PANELS as f64;
            for k in 0..PANELS {
                acc += gauss_legendre(
                    |r| {
                        let bp = self.point_unchecked(id, r);
                        bp.pos.cross(bp.tangent)
                    },
                    k as f64 * h,
                    (k + 1) as f64 * h,
                );
            }
        }
        0.5 * acc
    }

    pub fn summary(&self) -> TableSummary {
        let cap_center_x = self
            .pieces
            .iter()
            .find_map(|p| (p.kind == PieceKind::CapRight).then(|| p.arc.map(|a| a.center.x)))
            .flatten()
            .unwrap_or(f64::NAN);
        TableSummary {
            spec: self.spec.clone(),
            piece_kinds: self.pieces.iter().map(|p| p.kind).collect(),
            piece_lengths: self.pieces.iter().map(|p| p.length).collect(),
            total_length: self.total_length,
            diameter: self.diameter,
            cap_radius: self.cap_radius(),
            cap_center_x,
            area: self.area(),
        }
    }

    /// Euclidean distance on the cross-section in `(s, phi)`, with `s` the
    /// global boundary coordinate taken modulo the boundary length.
    pub fn distance_m(&self, a: &MCoord, b: &MCoord) -> f64 {
        let ds = self.signed_ds(a, b);
        ds.hypot(b.phi - a.phi)
    }

    /// `s(b) - s(a)` wrapped into `(-L/2, L/2]`.
    pub fn signed_ds(&self, a: &MCoord, b: &MCoord) -> f64 {
        let l = self.total_length;
        let mut ds = self.global_s(b.piece, b.r) - self.global_s(a.piece, a.r);
        ds = ds.rem_euclid(l);
        if ds > 0.5 * l {
            ds -= l;
        }
        ds
    }

    /// Arc-length distance from `m` to the nearest end of its piece.
    pub fn junction_distance(&self, piece: usize, r: f64) -> f64 {
        r.min(self.pieces[piece].length - r)
    }
}

/// Signed angle from the inward-pointing vertical to `dir`, where the inward
/// vertical is the one on the same side as `normal`.
#[inline]
pub(crate) fn vertical_angle_of(normal: Vec2, dir: Vec2) -> f64 {
    if normal.y >= 0.0 {
        (-dir.x).atan2(dir.y)
    } else {
        dir.x.atan2(-dir.y)
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // endpoints matter when the maximum sits on a corner
    [a, b, mid]
        .into_iter()
        .max_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap_or(mid)
}
