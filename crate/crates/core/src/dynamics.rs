//! Free flight, specular reflection, the billiard map and the billiard flow.
//!
//! Every boundary piece is dispersing or flat, so along a ray the signed
//! "height above the piece" is a convex function of time. Newton's method
//! started on the interior side therefore approaches the first root
//! monotonically from the left and never overshoots it; if the derivative
//! turns nonnegative before a root is reached, the ray misses the piece.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::geometry::{vertical_angle_of, FlowState, MCoord, PieceKind, Table, Vec2};

/// Flights shorter than this are the collision we are leaving.
pub const T_MIN: f64 = 1e-10;
/// Collisions closer than this (in arc length) to a piece junction are discarded.
pub const CORNER_TOL: f64 = 1e-9;
/// `|cos phi|` below this marks a grazing collision.
pub const GRAZING_COS: f64 = 1e-8;
/// Residual required of a ray/curve intersection.
pub const RESIDUAL_TOL: f64 = 1e-12;
pub const MAX_SOLVER_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionResult {
    /// Collision point; `phi` is the angle from the inward normal to the
    /// reversed incoming direction.
    pub m: MCoord,
    pub tau: f64,
    pub grazing: bool,
    /// Incoming unit direction.
    pub dir_in: Vec2,
}

/// Where a ray first meets the boundary.
#[derive(Debug, Clone, Copy)]
struct Hit {
    piece: usize,
    t: f64,
}

fn power_hit(table: &Table, kind: PieceKind, p: Vec2, d: Vec2, t_max: f64) -> Result<Option<f64>> {
    let power = &table.power;
    let bottom = kind == PieceKind::PowerBottom;
    let eval = |t: f64| {
        let x = p.x + t * d.x;
        let y = p.y + t * d.y;
        if bottom {
            (y + power.g(x), d.y + power.dg(x) * d.x)
        } else {
            (power.g(x) - y, power.dg(x) * d.x - d.y)
        }
    };
    let mut t = 0.0;
    for _ in 0..MAX_SOLVER_ITERS {
        let (h, dh) = eval(t);
        if h.abs() <= 1e-14 * (1.0 + (p.y + t * d.y).abs()) {
            if dh >= 0.0 && t <= T_MIN {
                // sitting on this piece and moving inward
                return Ok(None);
            }
            return Ok((t > T_MIN).then_some(t));
        }
        if dh >= 0.0 {
            return Ok(None);
        }
        t -= h / dh;
        if t > t_max {
            return Ok(None);
        }
    }
    let (h, _) = eval(t);
    if h.abs() < RESIDUAL_TOL {
        return Ok((t > T_MIN).then_some(t));
    }
    Err(Error::SolverStall { residual: h.abs() })
}

fn cast(table: &Table, p: Vec2, d: Vec2, skip: Option<usize>) -> Result<Hit> {
    let t_max = 2.0 * table.diameter + 1.0;
    let xc = table.half_width();
    let mut best: Option<Hit> = None;
    let mut consider = |piece: usize, t: f64| {
        if best.map_or(true, |b| t < b.t) {
            best = Some(Hit { piece, t });
        }
    };
    for (id, piece) in table.pieces.iter().enumerate() {
        if Some(id) == skip {
            continue;
        }
        match piece.kind {
            PieceKind::PowerBottom | PieceKind::PowerTop => {
                if let Some(t) = power_hit(table, piece.kind, p, d, t_max)? {
                    if (p.x + t * d.x).abs() <= xc + 1e-12 {
                        consider(id, t);
                    }
                }
            }
            PieceKind::Axis => {
                if d.y > 0.0 {
                    let t = -p.y / d.y;
                    let x = p.x + t * d.x;
                    if t > T_MIN && x <= piece.start.x + 1e-12 && x >= piece.end.x - 1e-12 {
                        consider(id, t);
                    }
                }
            }
            PieceKind::CapLeft | PieceKind::CapRight => {
                let arc = piece.arc.expect("caps carry an arc");
                let q = p - arc.center;
                let b = d.dot(q);
                if b >= 0.0 {
                    continue;
                }
                let c = q.dot(q) - arc.radius * arc.radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    continue;
                }
                let t = c / (-b + disc.sqrt());
                if t <= T_MIN {
                    continue;
                }
                let hit = p + d * t;
                let theta = (hit - arc.center).angle();
                let theta = unwrap_near(theta, arc.theta_end);
                let slack = 1e-12 / arc.radius;
                if theta <= arc.theta_start + slack && theta >= arc.theta_end - slack {
                    consider(id, t);
                }
            }
        }
    }
    best.ok_or(Error::NoCollision)
}

fn unwrap_near(theta: f64, reference: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut t = theta;
    while t < reference - PI {
        t += TAU;
    }
    while t > reference + PI {
        t -= TAU;
    }
    t
}

/// Resolves a hit into a collision record, snapping the point onto the piece.
fn resolve(table: &Table, p: Vec2, d: Vec2, hit: Hit) -> Result<CollisionResult> {
    let piece = &table.pieces[hit.piece];
    let raw = p + d * hit.t;
    let (pos, normal, r) = match piece.kind {
        PieceKind::PowerBottom | PieceKind::PowerTop => {
            let frame = table.power_frame(piece.kind, raw.x);
            let residual = (frame.pos.y - raw.y).abs();
            if residual >= RESIDUAL_TOL {
                return Err(Error::SolverStall { residual });
            }
            (frame.pos, frame.normal, table.power_r(piece.kind, raw.x))
        }
        PieceKind::Axis => {
            let pos = Vec2::new(raw.x, 0.0);
            (pos, Vec2::new(0.0, -1.0), table.r_on_piece(hit.piece, pos))
        }
        PieceKind::CapLeft | PieceKind::CapRight => {
            let arc = piece.arc.expect("caps carry an arc");
            let radial = (raw - arc.center).normalized();
            let pos = arc.center + radial * arc.radius;
            (pos, radial, table.r_on_piece(hit.piece, pos))
        }
    };
    let corner = table.junction_distance(hit.piece, r);
    if corner < CORNER_TOL {
        return Err(Error::CornerHit { distance: corner });
    }
    let phi = normal.angle_to(-d).clamp(-FRAC_PI_2, FRAC_PI_2);
    let tau = (pos - p).norm();
    Ok(CollisionResult {
        m: MCoord {
            piece: hit.piece,
            r,
            phi,
            pos,
        },
        tau,
        grazing: phi.cos().abs() < GRAZING_COS,
        dir_in: d,
    })
}

/// First boundary collision along the ray of `s`, at time greater than [`T_MIN`].
pub fn next_collision(table: &Table, s: &FlowState) -> Result<CollisionResult> {
    let d = s.dir();
    let hit = cast(table, s.pos, d, None)?;
    resolve(table, s.pos, d, hit)
}

/// Collision reached from a post-collision state; the state's own piece is
/// skipped since a dispersing or flat piece cannot be hit twice in a row.
pub fn next_collision_from(table: &Table, m: &MCoord) -> Result<CollisionResult> {
    let d = table.outgoing_dir(m);
    let hit = cast(table, m.pos, d, Some(m.piece))?;
    resolve(table, m.pos, d, hit)
}

/// Specular reflection: the outgoing angle is the negated incoming one.
pub fn reflect(c: &CollisionResult) -> Result<MCoord> {
    if c.grazing {
        return Err(Error::GrazingDiscard {
            cos_phi: c.m.phi.cos().abs(),
        });
    }
    Ok(MCoord { phi: -c.m.phi, ..c.m })
}

/// One step of the billiard map, returning the next post-collision state and
/// the flight time.
pub fn billiard_map(table: &Table, m: &MCoord) -> Result<(MCoord, f64)> {
    let c = next_collision_from(table, m)?;
    Ok((reflect(&c)?, c.tau))
}

/// Same boundary point with the direction reflected across the normal.
pub fn time_reverse(m: &MCoord) -> MCoord {
    MCoord { phi: -m.phi, ..*m }
}

/// Advances the flow by time `t`, reflecting specularly at the boundary.
/// A collision landing exactly at the end time is applied.
pub fn flow_advance(table: &Table, s: &FlowState, t: f64) -> Result<FlowState> {
    if !(t >= 0.0) {
        return Err(Error::BadArgument(format!("negative flow time {t}")));
    }
    let mut pos = s.pos;
    let mut dir = s.dir();
    let mut remaining = t;
    let mut skip = None;
    loop {
        if remaining == 0.0 {
            return Ok(FlowState::from_dir(pos, dir));
        }
        let hit = cast(table, pos, dir, skip)?;
        let c = resolve(table, pos, dir, hit)?;
        if c.tau > remaining {
            return Ok(FlowState::from_dir(pos + dir * remaining, dir));
        }
        let out = reflect(&c)?;
        remaining -= c.tau;
        pos = out.pos;
        dir = table.outgoing_dir(&out);
        skip = Some(out.piece);
    }
}

/// Flight time between consecutive window collisions written in terms of the
/// abscissas and the (common) vertical angle of the chord.
pub fn free_flight_formula(table: &Table, x: f64, phi_vertical: f64, x_next: f64) -> Result<f64> {
    let c = phi_vertical.cos();
    if !(phi_vertical.abs() < FRAC_PI_2) || c < 1e-12 {
        return Err(Error::AngleTooFlat(c));
    }
    let p = &table.power;
    Ok((p.g(x) + p.g(x_next)) / c)
}

/// Vertical angle of a post-collision state, if it sits on a power curve or the axis.
pub fn vertical_angle(table: &Table, m: &MCoord) -> Result<f64> {
    table.vertical_angle(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub m: MCoord,
    pub phi_vertical: Option<f64>,
    /// Flight time into this collision (0 for the initial state).
    pub tau: f64,
}

/// Iterates the billiard map, stopping early on a discarded collision.
pub fn trajectory(table: &Table, m: &MCoord, steps: usize) -> (Vec<TrajectoryRow>, Option<Error>) {
    let row = |step, m: MCoord, tau| TrajectoryRow {
        step,
        m,
        phi_vertical: if table.pieces[m.piece].kind.is_cap() {
            None
        } else {
            let n = table.normal_at(&m);
            Some(vertical_angle_of(n, n.rotate(m.phi)))
        },
        tau,
    };
    let mut rows = vec![row(0, *m, 0.0)];
    let mut cur = *m;
    for step in 1..=steps {
        match billiard_map(table, &cur) {
            Ok((next, tau)) => {
                rows.push(row(step, next, tau));
                cur = next;
            }
            Err(e) => return (rows, Some(e)),
        }
    }
    (rows, None)
}
