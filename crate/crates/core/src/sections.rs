//! The hyperbolic section, its return map and the window excursions between
//! consecutive returns.
//!
//! Σ is the part of the cross-section whose base point is away from the flat
//! points: `|x| >= epsilon` on the power curves, plus both caps. A trajectory
//! leaving Σ either returns immediately or bounces a number of times inside
//! the window `|x| < epsilon` first; those window bounces define the cell
//! index of the excursion.

use crate::dynamics::{billiard_map, time_reverse};
use crate::error::{Error, Result};
use crate::geometry::{vertical_angle_of, MCoord, PieceKind, Table, Vec2};

/// Default cap on collisions in a single excursion.
pub const MAX_EXCURSION_LEN: usize = 1_000_000;

pub fn in_sigma(table: &Table, m: &MCoord, epsilon: f64) -> bool {
    match table.pieces[m.piece].kind {
        PieceKind::CapLeft | PieceKind::CapRight => true,
        PieceKind::Axis => false,
        PieceKind::PowerBottom | PieceKind::PowerTop => m.pos.x.abs() >= epsilon,
    }
}

/// A window collision on a power curve: abscissa and outgoing vertical angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounce {
    pub x: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Excursion {
    pub entry: MCoord,
    pub exit: MCoord,
    pub bounces: Vec<Bounce>,
    /// Signed cell index; 0 when the window is never entered.
    pub n: i64,
    pub n_prime: Option<usize>,
    pub n_dprime: Option<usize>,
    /// Flow time from `entry` to `exit`.
    pub theta: f64,
    /// Collisions after `entry` up to and including `exit`.
    pub r_count: usize,
    /// Reflections off the axis (folded model); never counted in `n`.
    pub axis_hits: usize,
    /// Horizontal advances `w_m = x_m - x_{m+1}`, `m = 0..=|n|`, over the
    /// abscissas oriented so that the entry side is positive, with `x_0` the
    /// entry point and `x_{|n|+1}` the exit point.
    pub w: Vec<f64>,
}

impl Excursion {
    /// `+1` when the excursion starts on the `x > 0` side.
    pub fn orientation(&self) -> f64 {
        if self.entry.pos.x >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Oriented abscissas `x_0, x_1, ..., x_{|n|+1}`.
    pub fn oriented_abscissas(&self) -> Vec<f64> {
        let o = self.orientation();
        std::iter::once(self.entry.pos.x)
            .chain(self.bounces.iter().map(|b| b.x))
            .chain(std::iter::once(self.exit.pos.x))
            .map(|x| o * x)
            .collect()
    }

    /// `sum |x_m|^(beta - 1)` over the window bounces.
    pub fn power_sum(&self, beta: f64) -> f64 {
        self.bounces.iter().map(|b| b.x.abs().powf(beta - 1.0)).sum()
    }
}

/// Runs the billiard map from `m ∈ Σ` until the first return to Σ.
pub fn next_excursion(table: &Table, m: &MCoord) -> Result<Excursion> {
    next_excursion_capped(table, m, table.spec.epsilon, MAX_EXCURSION_LEN)
}

pub fn next_excursion_capped(
    table: &Table,
    m: &MCoord,
    epsilon: f64,
    max_len: usize,
) -> Result<Excursion> {
    if !in_sigma(table, m, epsilon) {
        return Err(Error::BadArgument("excursion must start in the section".into()));
    }
    let mut bounces = Vec::new();
    let mut theta = 0.0;
    let mut axis_hits = 0;
    let mut cur = *m;
    for count in 1..=max_len {
        let (next, tau) = billiard_map(table, &cur)?;
        theta += tau;
        if in_sigma(table, &next, epsilon) {
            return Ok(finish(*m, next, bounces, theta, count, axis_hits));
        }
        let kind = table.pieces[next.piece].kind;
        if kind == PieceKind::Axis {
            axis_hits += 1;
        } else {
            let frame = table.power_frame(kind, next.pos.x);
            let dir = frame.normal.rotate(next.phi);
            bounces.push(Bounce {
                x: next.pos.x,
                phi: vertical_angle_of(frame.normal, dir),
            });
        }
        cur = next;
    }
    Err(Error::ExcursionTooLong(max_len))
}

fn finish(
    entry: MCoord,
    exit: MCoord,
    bounces: Vec<Bounce>,
    theta: f64,
    r_count: usize,
    axis_hits: usize,
) -> Excursion {
    let mut e = Excursion {
        entry,
        exit,
        bounces,
        n: 0,
        n_prime: None,
        n_dprime: None,
        theta,
        r_count,
        axis_hits,
        w: Vec::new(),
    };
    if let Ok(n) = classify_cell(&e) {
        e.n = n;
        let xs = e.oriented_abscissas();
        e.w = xs.windows(2).map(|p| p[0] - p[1]).collect();
        if let Ok((a, b)) = split_indices(&e) {
            e.n_prime = Some(a);
            e.n_dprime = Some(b);
        }
    }
    e
}

/// `+k` for a pass-through excursion with `k` power-curve bounces in the
/// window, `-k` when it leaves on the side it came from.
pub fn classify_cell(e: &Excursion) -> Result<i64> {
    if e.bounces.is_empty() {
        return Err(Error::NotAWindowExcursion);
    }
    let k = e.bounces.len() as i64;
    let same_side = (e.entry.pos.x >= 0.0) == (e.exit.pos.x >= 0.0);
    Ok(if same_side { -k } else { k })
}

/// Split indices `(n', n'')` of a window excursion.
///
/// For a pass-through, `n'` is the bounce after which the oriented abscissa
/// changes sign; for a turn-back it is the bounce of smallest abscissa. `n''`
/// is the first index in `[1, n']` with `w_{n''-1} > 2|w_{n'}| > w_{n''}`, or
/// failing that the first with `w_m <= 2|w_{n'}|`.
pub fn split_indices(e: &Excursion) -> Result<(usize, usize)> {
    let n = classify_cell(e)?;
    let k = n.unsigned_abs() as usize;
    let xs = e.oriented_abscissas();
    let n_prime = if n > 0 {
        if k == 1 {
            return Ok((1, 1));
        }
        if xs.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::Undefined("pass-through abscissas are not decreasing"));
        }
        (1..=k)
            .rev()
            .find(|&m| xs[m] >= 0.0 && xs[m + 1] <= 0.0)
            .ok_or(Error::Undefined("sign change precedes the first bounce"))?
    } else {
        let turn = (1..=k)
            .min_by(|&a, &b| xs[a].total_cmp(&xs[b]))
            .expect("k >= 1");
        let down = xs[..=turn].windows(2).all(|p| p[1] < p[0]);
        let up = xs[turn..].windows(2).all(|p| p[1] > p[0]);
        if !(down && up) {
            return Err(Error::Undefined("turn-back abscissas are not unimodal"));
        }
        if k == 1 {
            return Ok((1, 1));
        }
        turn
    };
    let w = |m: usize| xs[m] - xs[m + 1];
    let reference = 2.0 * w(n_prime).abs();
    let n_dprime = (1..=n_prime)
        .find(|&m| w(m - 1) > reference && reference > w(m))
        .or_else(|| (1..=n_prime).find(|&m| w(m) <= reference))
        .unwrap_or(n_prime);
    Ok((n_prime, n_dprime))
}

/// The excursion whose window part contains the window state `m`: the orbit
/// is run backwards to its last Σ collision and then forwards from there.
pub fn excursion_through(table: &Table, m: &MCoord) -> Result<Excursion> {
    let eps = table.spec.epsilon;
    if in_sigma(table, m, eps) {
        return Err(Error::BadArgument("state is already in the section".into()));
    }
    let mut cur = time_reverse(m);
    for _ in 0..MAX_EXCURSION_LEN {
        let (next, _) = billiard_map(table, &cur)?;
        if in_sigma(table, &next, eps) {
            return next_excursion(table, &time_reverse(&next));
        }
        cur = next;
    }
    Err(Error::ExcursionTooLong(MAX_EXCURSION_LEN))
}

/// Post-collision state on the bottom power curve at abscissa `x`, leaving at
/// the signed angle `vertical_angle` from the upward vertical.
pub fn window_state(table: &Table, x: f64, vertical_angle: f64) -> Result<MCoord> {
    let piece = table
        .pieces
        .iter()
        .position(|p| p.kind == PieceKind::PowerBottom)
        .expect("every model has a bottom curve");
    let frame = table.power_frame(PieceKind::PowerBottom, x);
    let dir = Vec2::new(0.0, 1.0).rotate(vertical_angle);
    let r = table.power_r(PieceKind::PowerBottom, x);
    table.mcoord(piece, r, frame.normal.angle_to(dir))
}

/// Moves `m` by `(ds, dphi)` in the global boundary chart.
pub fn displaced(table: &Table, m: &MCoord, ds: f64, dphi: f64) -> Result<MCoord> {
    let (piece, r) = table.at_global(table.global_s(m.piece, m.r) + ds);
    table.mcoord(piece, r, m.phi + dphi)
}

/// Displacement from `a` to `b` in the global `(s, phi)` chart.
pub fn chart_delta(table: &Table, a: &MCoord, b: &MCoord) -> [f64; 2] {
    [table.signed_ds(a, b), b.phi - a.phi]
}

const JACOBIAN_STEP: f64 = 1e-7;

/// Derivative of the billiard map at `m` in the `(s, phi)` chart, by central
/// differences.
pub fn map_jacobian(table: &Table, m: &MCoord) -> Result<[[f64; 2]; 2]> {
    let (image, _) = billiard_map(table, m)?;
    let h = JACOBIAN_STEP;
    let mut jac = [[0.0; 2]; 2];
    for (col, (ds, dphi)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
        let plus = billiard_map(table, &displaced(table, m, ds, dphi)?)?.0;
        let minus = billiard_map(table, &displaced(table, m, -ds, -dphi)?)?.0;
        let dp = chart_delta(table, &image, &plus);
        let dm = chart_delta(table, &image, &minus);
        jac[0][col] = (dp[0] - dm[0]) / (2.0 * h);
        jac[1][col] = (dp[1] - dm[1]) / (2.0 * h);
    }
    Ok(jac)
}

fn apply(j: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [j[0][0] * v[0] + j[0][1] * v[1], j[1][0] * v[0] + j[1][1] * v[1]]
}

fn solve(j: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    [
        (j[1][1] * v[0] - j[0][1] * v[1]) / det,
        (j[0][0] * v[1] - j[1][0] * v[0]) / det,
    ]
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Orbit of `m` through `k` returns to Σ with, at every collision, the
/// backward-propagated stable and forward-propagated unstable directions.
struct HyperbolicOrbit {
    states: Vec<MCoord>,
    stable: Vec<[f64; 2]>,
    unstable: Vec<[f64; 2]>,
}

fn hyperbolic_orbit(table: &Table, m: &MCoord, returns: usize) -> Result<HyperbolicOrbit> {
    let eps = table.spec.epsilon;
    let mut states = vec![*m];
    let mut jacobians = Vec::new();
    let mut seen = 0;
    while seen < returns {
        let cur = *states.last().expect("nonempty");
        jacobians.push(map_jacobian(table, &cur)?);
        let (next, _) = billiard_map(table, &cur)?;
        if in_sigma(table, &next, eps) {
            seen += 1;
        }
        states.push(next);
        if states.len() > MAX_EXCURSION_LEN {
            return Err(Error::ExcursionTooLong(MAX_EXCURSION_LEN));
        }
    }
    let len = states.len();
    let mut stable = vec![[0.0; 2]; len];
    stable[len - 1] = unit([1.0, 0.37]);
    for i in (0..len - 1).rev() {
        stable[i] = unit(solve(&jacobians[i], stable[i + 1]));
    }
    let mut unstable = vec![[0.0; 2]; len];
    unstable[0] = unit([0.37, 1.0]);
    for i in 1..len {
        unstable[i] = unit(apply(&jacobians[i - 1], unstable[i - 1]));
    }
    Ok(HyperbolicOrbit {
        states,
        stable,
        unstable,
    })
}

/// A same-cell pair on (approximately) a common stable manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct StablePair {
    pub p: MCoord,
    pub q: MCoord,
    /// `d(p, q)` in the `(s, phi)` chart.
    pub separation: f64,
    /// `d(T_Σ^k p, T_Σ^k q)` for `k = 0..=K`.
    pub separations: Vec<f64>,
    pub cell: i64,
    pub excursion_p: Excursion,
    pub excursion_q: Excursion,
}

impl StablePair {
    /// Geometric-mean contraction factor per return to Σ.
    pub fn mean_contraction(&self) -> f64 {
        let k = self.separations.len() - 1;
        (self.separations[k] / self.separations[0]).powf(1.0 / k as f64)
    }
}

pub const DEFAULT_PAIR_RETURNS: usize = 3;
/// Every later separation must be at most this fraction of the initial one.
/// Round-off in a long window excursion is amplified by its expansion rate,
/// which leaves an absolute floor near `1e-7` on the separation after one
/// return for `|n|` around 100; generic (non-stable) pairs instead grow by
/// orders of magnitude, so a fixed factor separates the two cleanly.
pub const CONTRACTION_FACTOR: f64 = 0.5;
const BISECTION_STEPS: usize = 60;
/// Displacements beyond this are past the linear regime.
const LINEAR_LIMIT: f64 = 1e-4;

/// Finds `q` at distance `separation` from `m` whose orbit under the return
/// map to Σ contracts towards that of `m`. The direction of `q - m` is
/// bisected at fixed separation on the sign of the unstable component of the
/// displacement, measured along the orbit of `m` as long as it stays linear.
///
/// The pair is accepted when both members start excursions in the same cell
/// and the separation after each of the next `returns` returns to Σ is at most
/// `CONTRACTION_FACTOR * separation`.
pub fn approximate_stable_pair(
    table: &Table,
    m: &MCoord,
    separation: f64,
    returns: usize,
) -> Result<StablePair> {
    if !(1e-9..=1e-4).contains(&separation) {
        return Err(Error::BadArgument(format!(
            "separation {separation:e} outside [1e-9, 1e-4]"
        )));
    }
    if returns == 0 {
        return Err(Error::BadArgument("need at least one return".into()));
    }
    let orbit = hyperbolic_orbit(table, m, returns)?;
    let s0 = orbit.stable[0];
    let alpha0 = s0[1].atan2(s0[0]);

    // Sign of the unstable component of the displacement of q(alpha).
    let sign_at = |alpha: f64| -> Result<f64> {
        let mut q = displaced(table, m, separation * alpha.cos(), separation * alpha.sin())?;
        let mut last = 0.0;
        for i in 1..orbit.states.len() {
            q = billiard_map(table, &q)?.0;
            let d = chart_delta(table, &orbit.states[i], &q);
            let a = cross(d, orbit.stable[i]) / cross(orbit.unstable[i], orbit.stable[i]);
            last = a;
            if d[0].hypot(d[1]) > LINEAR_LIMIT {
                break;
            }
        }
        Ok(last.signum())
    };

    let (mut lo, mut hi) = (alpha0 - std::f64::consts::FRAC_PI_2, alpha0 + std::f64::consts::FRAC_PI_2);
    let (s_lo, s_hi) = (sign_at(lo)?, sign_at(hi)?);
    if s_lo == s_hi {
        return Err(Error::NoContractionFound(
            "unstable component does not change sign across the bracket".into(),
        ));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if sign_at(mid)? == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let q = displaced(table, m, separation * alpha.cos(), separation * alpha.sin())?;

    let excursion_p = next_excursion(table, m)?;
    let excursion_q = next_excursion(table, &q)?;
    if excursion_p.n != excursion_q.n {
        return Err(Error::CellMismatch(excursion_p.n, excursion_q.n));
    }
    let mut separations = vec![table.distance_m(m, &q)];
    let (mut a, mut b) = (excursion_p.exit, excursion_q.exit);
    separations.push(table.distance_m(&a, &b));
    for _ in 1..returns {
        a = next_excursion(table, &a)?.exit;
        b = next_excursion(table, &b)?.exit;
        separations.push(table.distance_m(&a, &b));
    }
    let limit = separations[0] * CONTRACTION_FACTOR;
    let worst = separations[1..].iter().cloned().fold(0.0, f64::max);
    if !(worst <= limit) {
        return Err(Error::NoContractionFound(format!(
            "separation grew to {worst:e}, limit {limit:e}"
        )));
    }
    Ok(StablePair {
        p: *m,
        q,
        separation: separations[0],
        separations,
        cell: excursion_p.n,
        excursion_p,
        excursion_q,
    })
}

/// A same-cell pair on (approximately) a common unstable manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct UnstablePair {
    pub p: MCoord,
    pub q: MCoord,
    /// `d(T_Σ p, T_Σ q)`.
    pub image_separation: f64,
    pub cell: i64,
    pub excursion_p: Excursion,
    pub excursion_q: Excursion,
}

/// Unstable partner of `m`, obtained by reversing time: the stable pair of
/// the reversed exit state, pulled back through the reversed excursion.
pub fn approximate_unstable_pair(
    table: &Table,
    m: &MCoord,
    separation: f64,
    returns: usize,
) -> Result<UnstablePair> {
    let excursion_p = next_excursion(table, m)?;
    let reversed = time_reverse(&excursion_p.exit);
    let pair = approximate_stable_pair(table, &reversed, separation, returns)?;
    let q = time_reverse(&pair.excursion_q.exit);
    let excursion_q = next_excursion(table, &q)?;
    if excursion_q.n != excursion_p.n {
        return Err(Error::CellMismatch(excursion_p.n, excursion_q.n));
    }
    Ok(UnstablePair {
        p: *m,
        q,
        image_separation: table.distance_m(&excursion_p.exit, &excursion_q.exit),
        cell: excursion_p.n,
        excursion_p,
        excursion_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_table, Model, TableSpec};

    fn sym4() -> Table {
        build_table(TableSpec::new(4.0, Model::Symmetric)).unwrap()
    }

    fn at_x(t: &Table, piece: usize, x: f64, phi: f64) -> MCoord {
        let r = t.power_r(t.pieces[piece].kind, x);
        t.mcoord(piece, r, phi).unwrap()
    }

    fn synthetic(entry_x: f64, xs: &[f64], exit_x: f64) -> Excursion {
        let m = |x: f64| MCoord {
            piece: 0,
            r: 0.0,
            phi: 0.0,
            pos: Vec2::new(x, -1.0),
        };
        finish(
            m(entry_x),
            m(exit_x),
            xs.iter().map(|&x| Bounce { x, phi: 0.1 }).collect(),
            1.0,
            xs.len() + 1,
            0,
        )
    }

    #[test]
    fn sigma_membership() {
        let t = sym4();
        assert!(in_sigma(&t, &at_x(&t, 0, 0.5, 0.0), 0.3));
        assert!(!in_sigma(&t, &at_x(&t, 0, 0.1, 0.0), 0.3));
        assert!(in_sigma(&t, &t.mcoord(1, 0.5, 0.0).unwrap(), 0.3));
        let f = build_table(TableSpec::new(4.0, Model::Folded)).unwrap();
        assert!(!in_sigma(&f, &f.mcoord(2, 0.5, 0.0).unwrap(), 0.3));
    }

    #[test]
    fn direct_return_has_no_window_bounces() {
        let t = sym4();
        // from x = 0.6 on the bottom straight up lands at x = 0.6 on the top
        let m = at_x(&t, 0, 0.6, 0.0);
        let phi = -t.vertical_angle(&m).unwrap();
        let m = at_x(&t, 0, 0.6, phi);
        let e = next_excursion(&t, &m).unwrap();
        assert_eq!(e.n, 0);
        assert_eq!(e.r_count, 1);
        assert!(e.bounces.is_empty());
        assert!(matches!(classify_cell(&e), Err(Error::NotAWindowExcursion)));
    }

    #[test]
    fn classify_by_sides() {
        let e = synthetic(-0.5, &[-0.2, -0.1, 0.0, 0.1, 0.2, 0.25, 0.28], 0.6);
        assert_eq!(classify_cell(&e).unwrap(), 7);
        let e = synthetic(0.5, &[0.2, 0.1, 0.1, 0.2], 0.6);
        assert_eq!(classify_cell(&e).unwrap(), -4);
    }

    #[test]
    fn n_prime_from_sign_change() {
        let e = synthetic(0.4, &[0.25, 0.09, 0.01, -0.07, -0.2], -0.5);
        let (np, _) = split_indices(&e).unwrap();
        assert_eq!(np, 3);
        // orientation normalizes entries from the left
        let e = synthetic(-0.4, &[-0.25, -0.09, -0.01, 0.07, 0.2], 0.5);
        assert_eq!(split_indices(&e).unwrap().0, 3);
    }

    #[test]
    fn n_dprime_tie_breaking() {
        // w = (0.30, 0.16, 0.08, 0.08, ...) with w_{n'} = 0.08: the strict
        // double inequality fails at the tie w_1 = 2 w_{n'}, so the fallback
        // picks the first m with w_m <= 2 w_{n'}
        let xs = [0.6, 0.3, 0.14, 0.06, -0.02, -0.3];
        let e = synthetic(xs[0], &xs[1..5], xs[5]);
        let w = &e.w;
        assert!((w[0] - 0.3).abs() < 1e-12 && (w[1] - 0.16).abs() < 1e-12);
        let (np, ndp) = split_indices(&e).unwrap();
        assert_eq!(np, 3);
        assert!((w[3] - 0.08).abs() < 1e-12);
        assert_eq!(ndp, 1);
        // strict case: w = (0.30, 0.20, 0.10, 0.04, ...)
        let xs = [0.64, 0.34, 0.14, 0.04, -0.02, -0.3];
        let e = synthetic(xs[0], &xs[1..5], xs[5]);
        let (np, ndp) = split_indices(&e).unwrap();
        assert_eq!(np, 3);
        // 2 w_3 = 0.12: w_1 = 0.20 > 0.12 > w_2 = 0.10
        assert_eq!(ndp, 2);
    }

    #[test]
    fn single_bounce_split() {
        let e = synthetic(0.4, &[0.1], -0.5);
        assert_eq!(split_indices(&e).unwrap(), (1, 1));
    }

    #[test]
    fn turn_back_split() {
        let e = synthetic(0.5, &[0.2, 0.08, 0.05, 0.09, 0.2], 0.5);
        assert_eq!(e.n, -5);
        assert_eq!(split_indices(&e).unwrap().0, 3);
        let e = synthetic(0.5, &[0.2, 0.08, 0.1, 0.05, 0.2], 0.5);
        assert!(matches!(split_indices(&e), Err(Error::Undefined(_))));
    }

    #[test]
    fn non_monotone_pass_through_is_undefined() {
        let e = synthetic(0.4, &[0.2, 0.22, -0.1], -0.5);
        assert!(matches!(split_indices(&e), Err(Error::Undefined(_))));
        assert!(e.n_prime.is_none());
    }

    #[test]
    fn near_vertical_orbit_gives_long_excursion() {
        let t = sym4();
        let m = at_x(&t, 0, 0.0, 1e-4);
        let e = excursion_through(&t, &m).unwrap();
        assert!(e.n.abs() > 20, "n = {}", e.n);
        // each window flight is close to 2 long
        assert!((e.theta / (2.0 * e.r_count as f64) - 1.0).abs() < 0.2);
        assert!(e.n.unsigned_abs() as usize <= e.r_count);
        assert!(e.theta <= e.r_count as f64 * t.diameter);
    }

    #[test]
    fn folded_model_ignores_axis_reflections() {
        let t = build_table(TableSpec::new(4.0, Model::Folded)).unwrap();
        let m = at_x(&t, 0, 0.0, 1e-3);
        let e = excursion_through(&t, &m).unwrap();
        assert!(e.axis_hits > 0);
        assert_eq!(e.n.unsigned_abs() as usize, e.bounces.len());
        // bottom and axis alternate inside the window
        assert!((e.axis_hits as i64 - e.bounces.len() as i64).abs() <= 1);
    }

    #[test]
    fn jacobian_has_unit_determinant_in_measure_coordinates() {
        // T preserves cos(phi) ds dphi, so det J = cos(phi0) / cos(phi1)
        let t = sym4();
        let m = t.mcoord(1, 1.3, 0.2).unwrap();
        let j = map_jacobian(&t, &m).unwrap();
        let (img, _) = billiard_map(&t, &m).unwrap();
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        assert!((det - m.phi.cos() / img.phi.cos()).abs() < 1e-6, "det {det}");
    }
}
