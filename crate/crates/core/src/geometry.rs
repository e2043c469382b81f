//! Box projections, the polar arc through `u` and `v`, and the single-step
//! search that walks it.
//!
//! Arc points are `anchor + d cos(t) (u cos(t) + v sin(t))`. With `v` bounded
//! only by `anchor +- d v` in the box, the arc can leave a box whose anchor is
//! off-centre (take `d u = (s, s)`, `d v = (t, -t)` at the centre: one
//! component peaks near 1.2 times the slack). [`project_v`] therefore also
//! bounds each `v` component by the arc maximum, which keeps every arc point
//! inside the box for all angles.

use crate::boundary::{is_gamma_success, Gamma, Side};
use crate::directions::{sample_u_hat, Direction, LowFrequencySampler, TextureBank};
use crate::error::{Error, Result};
use crate::imageops::{check_shape, BinaryMask, Image};
use crate::jnd::JndBox;
use crate::oracle::OracleHandle;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Below this Euclidean length the projected `u` step counts as collapsed.
pub const COLLAPSE_EPS: f64 = 1e-9;

/// Clamps `u_hat` into the box around `anchor`; returns the unit direction
/// and the step length.
pub fn project_u(anchor: &Image, u_hat: &Direction, bounds: &JndBox) -> Result<(Direction, f64)> {
    check_shape(anchor.shape(), u_hat.shape())?;
    check_shape(anchor.shape(), bounds.shape())?;
    let clamped: Vec<f64> = u_hat
        .data()
        .iter()
        .zip(anchor.data())
        .zip(bounds.lo().iter().zip(bounds.hi()))
        .map(|((u, a), (lo, hi))| u.clamp((lo - a).min(0.0), (hi - a).max(0.0)))
        .collect();
    let step = Direction::new(anchor.shape(), clamped)?;
    let d = step.norm();
    if !(d >= COLLAPSE_EPS) {
        return Err(Error::ProjectionCollapsed);
    }
    let u = step.normalized(COLLAPSE_EPS).ok_or(Error::ProjectionCollapsed)?;
    Ok((u, d))
}

/// Output of [`project_v`]; `clamped` is false when `v == v_hat` exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedV {
    pub v: Direction,
    pub clamped: bool,
}

/// Per-component half-width allowed for `d v` so that the arc stays in the
/// box: `min(P, Q, 2 sqrt(P (P - U)), 2 sqrt(Q (Q + U)))` with `P`, `Q` the
/// slack above and below the anchor and `U = d u_k`.
pub fn v_bound(slack_hi: f64, slack_lo: f64, du: f64) -> f64 {
    let p = slack_hi.max(0.0);
    let q = slack_lo.max(0.0);
    let arc_hi = 2.0 * (p * (p - du)).max(0.0).sqrt();
    let arc_lo = 2.0 * (q * (q + du)).max(0.0).sqrt();
    p.min(q).min(arc_hi).min(arc_lo)
}

/// Clamps `d v_hat` componentwise to [`v_bound`] and rescales by `1 / d`.
pub fn project_v(anchor: &Image, v_hat: &Direction, u: &Direction, d: f64, bounds: &JndBox) -> Result<ProjectedV> {
    check_shape(anchor.shape(), v_hat.shape())?;
    check_shape(anchor.shape(), u.shape())?;
    check_shape(anchor.shape(), bounds.shape())?;
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidParameter(format!("step length {d} must be positive")));
    }
    let mut clamped = false;
    let mut data = Vec::with_capacity(v_hat.data().len());
    for k in 0..v_hat.data().len() {
        let a = anchor.data()[k];
        let b = v_bound(bounds.hi()[k] - a, a - bounds.lo()[k], d * u.data()[k]);
        let vk = v_hat.data()[k];
        let w = d * vk;
        if w.abs() <= b {
            data.push(vk);
        } else {
            clamped = true;
            data.push(b.copysign(w) / d);
        }
    }
    if data.iter().all(|v| *v == 0.0) {
        return Err(Error::VCollapsed);
    }
    Ok(ProjectedV {
        v: Direction::new(anchor.shape(), data)?,
        clamped,
    })
}

/// The search frame for one step: anchor, box, orthogonal pair and radius.
#[derive(Clone, Debug)]
pub struct ProjectedFrame<'a> {
    pub anchor: &'a Image,
    pub bounds: &'a JndBox,
    pub u: Direction,
    pub v: Direction,
    pub d: f64,
}

impl<'a> ProjectedFrame<'a> {
    pub fn new(anchor: &'a Image, bounds: &'a JndBox, u: Direction, v: Direction, d: f64) -> Result<Self> {
        check_shape(anchor.shape(), bounds.shape())?;
        check_shape(anchor.shape(), u.shape())?;
        check_shape(anchor.shape(), v.shape())?;
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!("step length {d} must be positive")));
        }
        Ok(Self { anchor, bounds, u, v, d })
    }

    /// A frame with `v = 0`, whose arc degenerates to the segment along `u`.
    pub fn along_u(anchor: &'a Image, bounds: &'a JndBox, u: Direction, d: f64) -> Result<Self> {
        let v = Direction::zeros(anchor.shape());
        Self::new(anchor, bounds, u, v, d)
    }

    /// The unclamped arc point at angle `theta`.
    pub fn candidate_raw(&self, theta: f64) -> Vec<f64> {
        let (s, c) = theta.sin_cos();
        let dc = self.d * c;
        self.anchor
            .data()
            .iter()
            .zip(self.u.data().iter().zip(self.v.data()))
            .map(|(a, (u, v))| a + dc * (u * c + v * s))
            .collect()
    }

    /// The arc point clamped into the box, which absorbs rounding at the faces.
    pub fn candidate(&self, theta: f64) -> Image {
        let mut data = self.candidate_raw(theta);
        self.bounds.clamp_in_place(&mut data);
        let s = self.anchor.shape();
        Image::new(s.height, s.width, s.channels, data).expect("box values lie in [0, 1]")
    }
}

pub fn candidate(frame: &ProjectedFrame<'_>, theta: f64) -> Image {
    frame.candidate(theta)
}

/// Coarse grid size and bisection count of the angle search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThetaSchedule {
    pub coarse_steps: u32,
    pub refinements: u32,
}

impl Default for ThetaSchedule {
    fn default() -> Self {
        Self {
            coarse_steps: 8,
            refinements: 4,
        }
    }
}

impl ThetaSchedule {
    /// Coarse probe angles, largest magnitude first, signs alternating `+ - + ...`.
    pub fn coarse_angles(&self) -> Vec<f64> {
        let t_max = self.coarse_steps as f64;
        (1..self.coarse_steps)
            .map(|t| {
                let mag = FRAC_PI_2 * (t_max - t as f64) / t_max;
                if t % 2 == 1 {
                    mag
                } else {
                    -mag
                }
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct ThetaOutcome {
    pub theta_star: f64,
    pub probes: u64,
    pub interrupted: Option<Error>,
}

/// Finds the successful angle of largest magnitude on the schedule, then
/// bisects between it and the next larger failed magnitude (`pi / 2` counts
/// as failed). Angle 0 is the fallback and is never probed.
pub fn theta_search<F>(frame: &ProjectedFrame<'_>, mut success: F, schedule: &ThetaSchedule) -> ThetaOutcome
where
    F: FnMut(&Image) -> Result<bool>,
{
    let mut probes = 0;
    let mut best = 0.0f64;
    let mut failed_above = FRAC_PI_2;
    let mut sign = 1.0;
    for theta in schedule.coarse_angles() {
        probes += 1;
        sign = theta.signum();
        match success(&frame.candidate(theta)) {
            Ok(true) => {
                best = theta.abs();
                break;
            }
            Ok(false) => failed_above = theta.abs(),
            Err(e) => {
                return ThetaOutcome {
                    theta_star: 0.0,
                    probes,
                    interrupted: Some(e),
                }
            }
        }
    }
    let (mut lo, mut hi) = (best, failed_above);
    for _ in 0..schedule.refinements {
        let mid = 0.5 * (lo + hi);
        probes += 1;
        match success(&frame.candidate(sign * mid)) {
            Ok(true) => lo = mid,
            Ok(false) => hi = mid,
            Err(e) => {
                return ThetaOutcome {
                    theta_star: if lo == 0.0 { 0.0 } else { sign * lo },
                    probes,
                    interrupted: Some(e),
                }
            }
        }
    }
    ThetaOutcome {
        theta_star: if lo == 0.0 { 0.0 } else { sign * lo },
        probes,
        interrupted: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Success,
    /// Budget or oracle exhausted, or no direction with room left.
    Exhausted,
    /// A Decrease left the ladder gap below the early-stop threshold.
    EarlyStopped,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub x_next: Image,
    pub gamma_final: Gamma,
    pub queries_used: u64,
    pub theta_star: Option<f64>,
    pub status: StepStatus,
    /// Whether `x_next` is a `gamma_final`-success point.
    pub achieved: bool,
    pub score: Option<f64>,
    pub decreases: u32,
    pub increases: u32,
    pub u_attempts: u32,
    pub stop_error: Option<String>,
}

/// Everything a single step reads or advances besides the anchor and the
/// two ladder values.
pub struct StepContext<'a, R: Rng + ?Sized> {
    pub oracle: &'a mut OracleHandle,
    pub bank: &'a TextureBank,
    pub mask: &'a BinaryMask,
    pub bounds: &'a JndBox,
    pub v_sampler: &'a LowFrequencySampler,
    pub score0: f64,
    pub side: Side,
    pub t_max: u32,
    pub theta: ThetaSchedule,
    /// Ends the step once a Decrease leaves `gamma_i - gamma_prev` below this.
    pub early_stop_eps: Option<Gamma>,
    pub rng: &'a mut R,
}

/// One step of the iterative attack: retry texture directions until one
/// crosses the `gamma_i` boundary (adapting `gamma_i` on the way), then walk
/// the arc toward the anchor while staying successful.
pub fn single_step_attack<R: Rng + ?Sized>(
    x_prev: &Image,
    gamma_i: Gamma,
    gamma_prev: Gamma,
    ctx: &mut StepContext<'_, R>,
) -> Result<StepResult> {
    if gamma_i <= gamma_prev {
        return Err(Error::InvalidParameter(format!(
            "gamma {gamma_i} must exceed previous gamma {gamma_prev}"
        )));
    }
    let start = ctx.oracle.used();
    let mut gamma = gamma_i;
    let mut failures = 0u32;
    let mut decreases = 0;
    let mut increases = 0;
    let mut u_attempts = 0;

    macro_rules! finish {
        ($x:expr, $g:expr, $status:expr, $achieved:expr, $score:expr, $theta:expr, $err:expr) => {
            StepResult {
                x_next: $x,
                gamma_final: $g,
                queries_used: ctx.oracle.used() - start,
                theta_star: $theta,
                status: $status,
                achieved: $achieved,
                score: $score,
                decreases,
                increases,
                u_attempts,
                stop_error: $err.map(|e: Error| e.to_string()),
            }
        };
    }

    let (u, d) = loop {
        let sample = sample_u_hat(ctx.bank, ctx.mask, ctx.rng)?;
        u_attempts += 1;
        let (u, d) = match project_u(x_prev, &sample.direction, ctx.bounds) {
            Ok(p) => p,
            Err(e @ Error::ProjectionCollapsed) => {
                return Ok(finish!(x_prev.clone(), gamma, StepStatus::Exhausted, false, None, None, Some(e)))
            }
            Err(e) => return Err(e),
        };
        let probe = ProjectedFrame::along_u(x_prev, ctx.bounds, u.clone(), d)?.candidate(0.0);
        let score = match ctx.oracle.score(&probe) {
            Ok(s) => s,
            Err(e) if e.is_oracle_stop() => {
                return Ok(finish!(x_prev.clone(), gamma, StepStatus::Exhausted, false, None, None, Some(e)))
            }
            Err(e) => return Err(e),
        };
        if is_gamma_success(ctx.score0, score, gamma.value(), ctx.side) {
            if is_gamma_success(ctx.score0, score, gamma.overshoot(gamma_prev).value(), ctx.side) {
                gamma = gamma.increase(gamma_prev);
                increases += 1;
            }
            break (u, d);
        }
        failures += 1;
        if failures > ctx.t_max {
            gamma = gamma.decrease(gamma_prev);
            decreases += 1;
            failures = 0;
            if let Some(eps) = ctx.early_stop_eps {
                if gamma.gap(gamma_prev) < eps {
                    return Ok(finish!(x_prev.clone(), gamma, StepStatus::EarlyStopped, false, None, None, None));
                }
            }
        }
    };

    let along = ProjectedFrame::along_u(x_prev, ctx.bounds, u.clone(), d)?;
    let fallback = along.candidate(0.0);
    let fallback_score = ctx.oracle.score(&fallback)?; // cached
    let v_hat = match ctx.v_sampler.sample(&u, ctx.rng) {
        Ok(v) => v,
        Err(Error::DegenerateDirection) => {
            return Ok(finish!(fallback, gamma, StepStatus::Success, true, Some(fallback_score), None, None))
        }
        Err(e) => return Err(e),
    };
    let v = match project_v(x_prev, &v_hat, &u, d, ctx.bounds) {
        Ok(p) => p.v,
        Err(Error::VCollapsed) => {
            return Ok(finish!(fallback, gamma, StepStatus::Success, true, Some(fallback_score), None, None))
        }
        Err(e) => return Err(e),
    };
    let frame = ProjectedFrame::new(x_prev, ctx.bounds, u, v, d)?;
    let (score0, side, g) = (ctx.score0, ctx.side, gamma.value());
    let schedule = ctx.theta;
    let oracle = &mut *ctx.oracle;
    let outcome = theta_search(
        &frame,
        |img| oracle.score(img).map(|s| is_gamma_success(score0, s, g, side)),
        &schedule,
    );
    if let Some(e) = &outcome.interrupted {
        if !e.is_oracle_stop() {
            return Err(outcome.interrupted.unwrap());
        }
    }
    let x_next = frame.candidate(outcome.theta_star);
    // every accepted angle was scored already, so this is a cache hit
    let score = ctx.oracle.score(&x_next)?;
    let status = if outcome.interrupted.is_some() {
        StepStatus::Exhausted
    } else {
        StepStatus::Success
    };
    Ok(finish!(x_next, gamma, status, true, Some(score), Some(outcome.theta_star), outcome.interrupted))
}
