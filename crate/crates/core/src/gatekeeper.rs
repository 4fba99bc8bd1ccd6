//! Replays capture sessions through a scorer the way an on-device gatekeeper
//! would: accept frames with q ≥ σ and pick one according to a policy.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{FrameView, QualityScorer};
use crate::svg::{LineChart, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GatePolicy {
    FirstAbove,
    BestOfSession,
    BestInWindow { w: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub sigma: f64,
    pub policy: GatePolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub frame_idx: usize,
    pub frame_id: String,
    pub q: f64,
    pub s: Option<f64>,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionTimeline {
    pub session_id: String,
    pub rows: Vec<TimelineRow>,
    pub selected: Option<usize>,
}

/// Earliest index of the maximum over `q[range]`.
fn argmax(q: &[f64], range: std::ops::Range<usize>) -> usize {
    let mut best = range.start;
    for i in range {
        if q[i] > q[best] {
            best = i;
        }
    }
    best
}

/// Index of the selected frame, if any frame passes the gate.
pub fn gate(q: &[f64], cfg: &GateConfig) -> Result<Option<usize>> {
    if q.is_empty() {
        return Err(Error::InvalidArgument("cannot gate an empty session".into()));
    }
    let sigma = cfg.sigma;
    Ok(match cfg.policy {
        GatePolicy::FirstAbove => q.iter().position(|&v| v >= sigma),
        GatePolicy::BestOfSession => {
            let i = argmax(q, 0..q.len());
            (q[i] >= sigma).then_some(i)
        }
        GatePolicy::BestInWindow { w } => {
            if w == 0 {
                return Err(Error::InvalidArgument("window must be >= 1".into()));
            }
            let w = w.min(q.len());
            (0..=q.len() - w)
                .find(|&start| q[start..start + w].iter().any(|&v| v >= sigma))
                .map(|start| argmax(q, start..start + w))
        }
    })
}

/// Scores every frame of a session in temporal order and applies the gate.
/// `s` carries oracle scores for reporting only; the decision never uses them.
pub fn gate_session(
    session_id: &str,
    frames: &[FrameView<'_>],
    s: Option<&[f64]>,
    scorer: &dyn QualityScorer,
    cfg: &GateConfig,
) -> Result<SessionTimeline> {
    let q = frames.iter().map(|f| scorer.score(f)).collect::<Result<Vec<_>>>()?;
    timeline_from_scores(session_id, frames.iter().map(|f| f.frame_id.to_string()).collect(), &q, s, cfg)
}

pub fn timeline_from_scores(
    session_id: &str,
    frame_ids: Vec<String>,
    q: &[f64],
    s: Option<&[f64]>,
    cfg: &GateConfig,
) -> Result<SessionTimeline> {
    if frame_ids.len() != q.len() || s.is_some_and(|s| s.len() != q.len()) {
        return Err(Error::InvalidArgument("timeline columns differ in length".into()));
    }
    let selected = gate(q, cfg)?;
    let rows = frame_ids
        .into_iter()
        .enumerate()
        .map(|(i, frame_id)| TimelineRow {
            frame_idx: i,
            frame_id,
            q: q[i],
            s: s.map(|s| s[i]),
            accepted: q[i] >= cfg.sigma,
        })
        .collect();
    Ok(SessionTimeline {
        session_id: session_id.to_string(),
        rows,
        selected,
    })
}

impl SessionTimeline {
    pub fn q(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.q).collect()
    }
}

/// CSV with header `session_id,frame_idx,q,s,accepted`; a missing s is empty.
pub fn timeline_csv(timelines: &[SessionTimeline]) -> String {
    let mut out = String::from("session_id,frame_idx,q,s,accepted\n");
    for t in timelines {
        for r in &t.rows {
            let s = r.s.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{},{:.6},{},{}", t.session_id, r.frame_idx, r.q, s, r.accepted);
        }
    }
    out
}

/// q and s over frame index. q is min-max scaled into [0, 1] when it leaves
/// that range so both share one axis.
pub fn timeline_svg(t: &SessionTimeline, sigma: f64) -> String {
    let q = t.q();
    let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let scaled = lo < 0.0 || hi > 1.0;
    let norm = |v: f64| if scaled && hi > lo { (v - lo) / (hi - lo) } else { v };
    let mut chart = LineChart::new(
        &format!("{} (σ = {sigma:.3})", t.session_id),
        "frame index",
        if scaled { "score (q min-max scaled)" } else { "score" },
    );
    chart.x_range = (0.0, (t.rows.len().max(2) - 1) as f64);
    chart.y_range = (0.0, 1.0);
    chart.series.push(Series::new(
        "predicted q",
        "#1f77b4",
        t.rows.iter().map(|r| (r.frame_idx as f64, norm(r.q))).collect(),
    ));
    if t.rows.iter().all(|r| r.s.is_some()) {
        chart.series.push(Series::new(
            "oracle s",
            "#d62728",
            t.rows.iter().map(|r| (r.frame_idx as f64, r.s.unwrap_or(0.0))).collect(),
        ));
    }
    chart.render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(sigma: f64, policy: GatePolicy) -> GateConfig {
        GateConfig { sigma, policy }
    }

    #[test]
    fn first_above_picks_the_earliest_passing_frame() {
        let q = [0.2, 0.4, 0.9, 0.95];
        assert_eq!(gate(&q, &cfg(0.5, GatePolicy::FirstAbove)).unwrap(), Some(2));
    }

    #[test]
    fn nothing_passes_below_sigma() {
        let q = [0.1, 0.2, 0.3];
        for policy in [GatePolicy::FirstAbove, GatePolicy::BestOfSession, GatePolicy::BestInWindow { w: 2 }] {
            assert_eq!(gate(&q, &cfg(0.5, policy)).unwrap(), None);
        }
        let t = timeline_from_scores("s", vec!["a".into(), "b".into(), "c".into()], &q, None, &cfg(0.5, GatePolicy::FirstAbove))
            .unwrap();
        assert_eq!(t.rows.len(), 3);
        assert!(t.rows.iter().all(|r| !r.accepted));
    }

    #[test]
    fn best_of_session_breaks_ties_early() {
        let q = [0.3, 0.8, 0.1, 0.8];
        assert_eq!(gate(&q, &cfg(0.5, GatePolicy::BestOfSession)).unwrap(), Some(1));
    }

    #[test]
    fn windowed_policy_takes_the_first_qualifying_window() {
        let q = [0.1, 0.6, 0.7, 0.99, 0.2];
        assert_eq!(gate(&q, &cfg(0.5, GatePolicy::BestInWindow { w: 2 })).unwrap(), Some(1));
        assert_eq!(gate(&q, &cfg(0.5, GatePolicy::BestInWindow { w: 3 })).unwrap(), Some(2));
        assert_eq!(gate(&q, &cfg(0.65, GatePolicy::BestInWindow { w: 2 })).unwrap(), Some(2));
        assert_eq!(gate(&q, &cfg(0.5, GatePolicy::BestInWindow { w: 10 })).unwrap(), Some(3));
        assert!(gate(&q, &cfg(0.5, GatePolicy::BestInWindow { w: 0 })).is_err());
    }

    #[test]
    fn empty_sessions_are_rejected() {
        assert!(gate(&[], &cfg(0.0, GatePolicy::FirstAbove)).is_err());
    }

    #[test]
    fn csv_has_one_row_per_frame() {
        let q = [0.1, 0.9];
        let t = timeline_from_scores("sess", vec!["f0".into(), "f1".into()], &q, Some(&[0.2, 0.8]), &cfg(0.5, GatePolicy::FirstAbove))
            .unwrap();
        let csv = timeline_csv(&[t.clone()]);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().nth(2).unwrap(), "sess,1,0.900000,0.800000,true");
        assert!(timeline_svg(&t, 0.5).contains("oracle s"));
    }

    proptest! {
        #[test]
        fn first_above_index_moves_earlier_as_sigma_drops(q in prop::collection::vec(0.0f64..1.0, 1..20), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let at_hi = gate(&q, &cfg(hi, GatePolicy::FirstAbove)).unwrap();
            let at_lo = gate(&q, &cfg(lo, GatePolicy::FirstAbove)).unwrap();
            if let Some(h) = at_hi {
                prop_assert!(at_lo.unwrap() <= h);
            }
        }

        #[test]
        fn selection_depends_only_on_scores(q in prop::collection::vec(0.0f64..1.0, 1..20), sigma in 0.0f64..1.0, w in 1usize..6) {
            for policy in [GatePolicy::FirstAbove, GatePolicy::BestOfSession, GatePolicy::BestInWindow { w }] {
                let c = cfg(sigma, policy);
                let a = gate(&q, &c).unwrap();
                let b = gate(&q.clone(), &c).unwrap();
                prop_assert_eq!(a, b);
                if let Some(i) = a {
                    prop_assert!(q[i] >= sigma);
                }
            }
        }
    }
}
