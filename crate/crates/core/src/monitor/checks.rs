use std::collections::BTreeMap;

use super::{CollisionEvent, Side, Thresholds, Violation};
use crate::geometry::{Polygon, Polyline, Vec2};
use crate::sim::trace::{ActorState, TraceLog};

const EPS: f64 = 1e-9;

/// Result of one check. `exercised` is false when the trigger was never
/// reached and the check holds only vacuously.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub violation: Option<Violation>,
    pub exercised: bool,
}

impl CheckOutcome {
    fn pass(exercised: bool) -> Self {
        CheckOutcome { violation: None, exercised }
    }

    fn fail(token: &str, first: usize, last: usize, measured: Vec<f64>, message: String) -> Self {
        CheckOutcome {
            violation: Some(Violation { token: token.into(), first_frame: first, last_frame: last, measured, message }),
            exercised: true,
        }
    }
}

/// Ego states in frame order, skipping frames without the ego.
fn ego_frames(trace: &TraceLog) -> impl Iterator<Item = (usize, f64, &ActorState)> {
    let ego = trace.ego_id();
    trace.frames.iter().filter_map(move |f| f.actor(ego).map(|e| (f.index, f.time, e)))
}

/// First maximal run of consecutive flagged frames of at least `min_len`.
fn first_run(flags: &[(usize, bool)], min_len: usize) -> Option<(usize, usize)> {
    let mut start: Option<(usize, usize)> = None; // (position in flags, frame index)
    for (pos, &(frame, flagged)) in flags.iter().enumerate() {
        match (flagged, start) {
            (true, None) => start = Some((pos, frame)),
            (false, Some((p0, f0))) => {
                if pos - p0 >= min_len {
                    return Some((f0, flags[pos - 1].0));
                }
                start = None;
            }
            _ => {}
        }
    }
    match start {
        Some((p0, f0)) if flags.len() - p0 >= min_len => Some((f0, flags[flags.len() - 1].0)),
        _ => None,
    }
}

/// Stop check: a dwell of at least `stop_dwell` below `stop_speed` inside
/// the zone `[line_s - stop_zone, line_s]` before the ego first passes the line.
pub fn check_stop(trace: &TraceLog, path: &Polyline, line_s: f64, th: &Thresholds) -> CheckOutcome {
    let mut entered = false;
    let mut run_start: Option<f64> = None;
    let mut min_speed = f64::INFINITY;
    for (idx, time, e) in ego_frames(trace) {
        let s = path.project(e.position()).s;
        if s > line_s + EPS {
            return CheckOutcome::fail(
                "stop",
                idx,
                idx,
                vec![if entered { min_speed } else { e.speed }],
                format!("passed the stop line at t={time:.2} s without a full stop"),
            );
        }
        if s >= line_s - th.stop_zone - EPS {
            entered = true;
            min_speed = min_speed.min(e.speed);
            if e.speed < th.stop_speed {
                let t0 = *run_start.get_or_insert(time);
                if time - t0 >= th.stop_dwell - EPS {
                    return CheckOutcome::pass(true);
                }
                continue;
            }
        }
        run_start = None;
    }
    CheckOutcome::pass(entered)
}

/// Yield check against each privileged actor: no co-occupancy of the
/// conflict region and no ego entry within `yield_horizon` before the
/// actor's own entry.
pub fn check_yield(trace: &TraceLog, region: &Polygon, privileged: &[String], th: &Thresholds) -> CheckOutcome {
    let ego = trace.ego_id();
    let inside = |id: &str| -> Vec<(usize, f64, bool)> {
        trace.frames.iter().map(|f| (f.index, f.time, f.actor(id).is_some_and(|a| region.contains(a.position())))).collect()
    };
    let entries = |flags: &[(usize, f64, bool)]| -> Vec<(usize, f64)> {
        flags
            .iter()
            .enumerate()
            .filter(|(k, (_, _, inn))| *inn && (*k == 0 || !flags[k - 1].2))
            .map(|(_, (i, t, _))| (*i, *t))
            .collect()
    };
    let ego_in = inside(ego);
    let ego_entries = entries(&ego_in);
    let mut exercised = !ego_entries.is_empty();
    for id in privileged {
        let npc_in = inside(id);
        let npc_entries = entries(&npc_in);
        exercised |= !npc_entries.is_empty();
        let both: Vec<(usize, bool)> = ego_in.iter().zip(&npc_in).map(|(a, b)| (a.0, a.2 && b.2)).collect();
        if let Some((first, last)) = first_run(&both, 1) {
            return CheckOutcome::fail(
                "yield",
                first,
                last,
                vec![trace.frames[first].time],
                format!("occupied the conflict region together with `{id}`"),
            );
        }
        for &(fe, te) in &ego_entries {
            if let Some(&(fn_, tn)) = npc_entries.iter().find(|(_, tn)| *tn > te + EPS && *tn - te <= th.yield_horizon + EPS) {
                return CheckOutcome::fail(
                    "yield",
                    fe,
                    fn_,
                    vec![tn - te],
                    format!("entered the conflict region {:.2} s before `{id}`", tn - te),
                );
            }
        }
    }
    CheckOutcome::pass(exercised)
}

/// Decelerate check: the largest speed drop inside `[trigger_s, exit_s]` must reach `decelerate_delta`.
pub fn check_decelerate(trace: &TraceLog, path: &Polyline, trigger_s: f64, exit_s: f64, th: &Thresholds) -> CheckOutcome {
    let mut window: Option<(usize, usize)> = None;
    let mut peak = f64::NEG_INFINITY;
    let mut drawdown: f64 = 0.0;
    for (idx, _, e) in ego_frames(trace) {
        let s = path.project(e.position()).s;
        if s < trigger_s - EPS || s > exit_s + EPS {
            if window.is_some() && s > exit_s {
                break;
            }
            continue;
        }
        window = Some(window.map_or((idx, idx), |(a, _)| (a, idx)));
        peak = peak.max(e.speed);
        drawdown = drawdown.max(peak - e.speed);
    }
    match window {
        None => CheckOutcome::pass(false),
        Some(_) if drawdown >= th.decelerate_delta - EPS => CheckOutcome::pass(true),
        Some((a, b)) => CheckOutcome::fail(
            "decelerate",
            a,
            b,
            vec![drawdown],
            format!("speed dropped by only {drawdown:.2} m/s in the deceleration zone"),
        ),
    }
}

/// Bumper gap from `ego` to `other`, if `other` is ahead in the same lane.
pub(crate) fn same_lane_gap(ego: &ActorState, other: &ActorState) -> Option<f64> {
    match (&ego.lane_id, &other.lane_id) {
        (Some(a), Some(b)) if a == b => {}
        _ => return None,
    }
    let rel = other.position() - ego.position();
    if rel.dot(Vec2::from_angle(ego.heading)) <= 0.0 {
        return None;
    }
    Some(rel.norm() - (ego.length + other.length) / 2.0)
}

/// Safe-distance check: same-lane gap at least `max(min_gap, v * headway * multiplier)`.
pub fn check_safe_distance(trace: &TraceLog, lead: Option<&str>, weather_multiplier: f64, th: &Thresholds) -> CheckOutcome {
    let ego = trace.ego_id();
    let mut exercised = false;
    let mut flags = Vec::with_capacity(trace.frames.len());
    let mut worst: Option<(f64, f64)> = None;
    for f in &trace.frames {
        let Some(e) = f.actor(ego) else { continue };
        let required = th.min_gap.max(e.speed * th.headway * weather_multiplier);
        let gap = f
            .actors
            .iter()
            .filter(|o| o.id != ego && lead.is_none_or(|l| o.id == l))
            .filter_map(|o| same_lane_gap(e, o))
            .min_by(f64::total_cmp);
        exercised |= gap.is_some();
        let bad = gap.is_some_and(|g| g < required);
        if bad && worst.is_none() {
            worst = Some((gap.unwrap_or(0.0), required));
        }
        flags.push((f.index, bad));
    }
    match first_run(&flags, 1) {
        Some((a, b)) => {
            let (gap, req) = worst.unwrap_or_default();
            CheckOutcome::fail(
                "keep safe distance",
                a,
                b,
                vec![gap, req],
                format!("gap {gap:.2} m below the required {req:.2} m"),
            )
        }
        None => CheckOutcome::pass(exercised),
    }
}

/// Keep-lane check: offset beyond `lane_width/2 - lane_margin` for
/// `debounce_frames` consecutive frames.
pub fn check_keep_lane(trace: &TraceLog, path: &Polyline, lane_width: f64, th: &Thresholds) -> CheckOutcome {
    let limit = lane_width / 2.0 - th.lane_margin;
    let mut max_off: f64 = 0.0;
    let flags: Vec<(usize, bool)> = ego_frames(trace)
        .map(|(idx, _, e)| {
            let off = path.project(e.position()).offset.abs();
            max_off = max_off.max(off);
            (idx, off > limit + EPS)
        })
        .collect();
    match first_run(&flags, th.debounce_frames.max(1)) {
        Some((a, b)) => CheckOutcome::fail(
            "keep lane",
            a,
            b,
            vec![max_off],
            format!("left the lane: lateral offset up to {max_off:.2} m (limit {limit:.2} m)"),
        ),
        None => CheckOutcome::pass(!flags.is_empty()),
    }
}

/// Lane-change check: the ego's lane id must go from `origin` to `target` at some point.
pub fn check_lane_change(trace: &TraceLog, direction: Side, origin: &str, target: &str) -> CheckOutcome {
    let mut seen_origin = false;
    let (mut first, mut last) = (None, 0);
    for (idx, _, e) in ego_frames(trace) {
        first.get_or_insert(idx);
        last = idx;
        match e.lane_id.as_deref() {
            Some(l) if l == origin => seen_origin = true,
            Some(l) if l == target && seen_origin => return CheckOutcome::pass(true),
            _ => {}
        }
    }
    let token = match direction {
        Side::Left => "change lane to left",
        Side::Right => "change lane to right",
    };
    CheckOutcome::fail(token, first.unwrap_or(0), last, vec![], format!("never moved from `{origin}` to `{target}`"))
}

/// Speed-limit check inside the sign's span `[start_s, end_s]`.
pub fn check_speed_limit(
    trace: &TraceLog,
    path: &Polyline,
    limit: f64,
    start_s: f64,
    end_s: f64,
    th: &Thresholds,
) -> CheckOutcome {
    let mut exercised = false;
    let mut max_speed: f64 = 0.0;
    let mut flags = Vec::new();
    for (idx, _, e) in ego_frames(trace) {
        let s = path.project(e.position()).s;
        let in_span = s >= start_s - EPS && s <= end_s + EPS;
        exercised |= in_span;
        let bad = in_span && e.speed > limit + th.speed_tolerance + EPS;
        if bad {
            max_speed = max_speed.max(e.speed);
        }
        flags.push((idx, bad));
    }
    match first_run(&flags, 1) {
        Some((a, b)) => CheckOutcome::fail(
            "speed limit",
            a,
            b,
            vec![max_speed, limit],
            format!("speed {max_speed:.2} m/s over the {limit:.2} m/s limit"),
        ),
        None => CheckOutcome::pass(exercised),
    }
}

/// Ego-versus-actor box overlaps; contiguous overlapping frames form one event.
pub fn detect_collisions(trace: &TraceLog) -> Vec<CollisionEvent> {
    let ego = trace.ego_id();
    let mut open: BTreeMap<String, CollisionEvent> = BTreeMap::new();
    let mut done = Vec::new();
    for f in &trace.frames {
        let Some(e) = f.actor(ego) else { continue };
        let eb = e.obb();
        let mut touching = Vec::new();
        for o in f.actors.iter().filter(|o| o.id != ego) {
            if let Some(depth) = eb.penetration(&o.obb()) {
                touching.push(o.id.clone());
                let ev = open.entry(o.id.clone()).or_insert_with(|| CollisionEvent {
                    actors: [ego.to_string(), o.id.clone()],
                    first_frame: f.index,
                    last_frame: f.index,
                    time: f.time,
                    max_penetration: 0.0,
                });
                ev.last_frame = f.index;
                ev.max_penetration = ev.max_penetration.max(depth);
            }
        }
        let ended: Vec<String> = open.keys().filter(|k| !touching.contains(k)).cloned().collect();
        for k in ended {
            done.extend(open.remove(&k));
        }
    }
    done.extend(open.into_values());
    done.sort_by(|a, b| a.first_frame.cmp(&b.first_frame).then_with(|| a.actors.cmp(&b.actors)));
    done
}
