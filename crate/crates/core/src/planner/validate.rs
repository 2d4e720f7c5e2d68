//! Plan normalization, coherence checks and keyframe interpolation.
//!
//! Objects are tracked by identity `(name, k)`: the `k`-th placement with a
//! given name within a frame. Two placements named `"cat"` in one frame are
//! therefore two objects.

use std::collections::BTreeMap;

use super::types::{BBox, FramePlan, LayoutPlan, Placement};
use super::PlanError;

pub const DEFAULT_MAX_STEP: f64 = 0.25;

type Identity = (String, usize);

fn identities(frame: &FramePlan) -> Vec<(Identity, BBox)> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    frame
        .placements
        .iter()
        .map(|p| {
            let k = seen.entry(p.name.as_str()).or_insert(0);
            *k += 1;
            ((p.name.clone(), *k - 1), p.bbox)
        })
        .collect()
}

fn describe(id: &Identity) -> String {
    if id.1 == 0 {
        id.0.clone()
    } else {
        format!("{}#{}", id.0, id.1 + 1)
    }
}

/// Renumbers frames, then checks continuity and vanish/reappear.
///
/// Renumbering: with exactly `frame_count` frames, indices become
/// `0..frame_count` in order. With fewer (keyframes), indices already below
/// `frame_count` are kept; a 1-based set (`1..=frame_count`) is shifted down
/// by one; anything else is an error.
///
/// Continuity: the center of each object may move at most `max_step` frame
/// diagonals per frame between consecutive planned frames, measured in
/// normalized coordinates (diagonal `√2`) and divided by the index gap.
pub fn validate_plan(plan: &LayoutPlan, frame_count: usize, max_step: f64) -> Result<LayoutPlan, PlanError> {
    if frame_count == 0 {
        return Err(PlanError::Input("frame count must be positive".into()));
    }
    if !(max_step.is_finite() && max_step > 0.0) {
        return Err(PlanError::Input(format!("max_step must be positive, got {max_step}")));
    }
    if plan.frames.is_empty() {
        return Err(PlanError::Frames("plan has no frames".into()));
    }
    let mut frames = plan.frames.clone();
    frames.sort_by_key(|f| f.index);
    if let Some(w) = frames.windows(2).find(|w| w[0].index == w[1].index) {
        return Err(PlanError::Frames(format!("frame index {} appears twice", w[0].index)));
    }
    let k = frames.len();
    if k > frame_count {
        return Err(PlanError::Frames(format!("plan has {k} frames but the video has {frame_count}")));
    }
    let (min, max) = (frames[0].index, frames[k - 1].index);
    if k == frame_count {
        frames.iter_mut().enumerate().for_each(|(i, f)| f.index = i);
    } else if max < frame_count {
        // sparse keyframes, already 0-based
    } else if min >= 1 && max == frame_count {
        frames.iter_mut().for_each(|f| f.index -= 1);
    } else {
        return Err(PlanError::Frames(format!(
            "frame indices {min}..={max} do not fit a {frame_count}-frame video"
        )));
    }

    let mut tracks: BTreeMap<Identity, Vec<(usize, usize, BBox)>> = BTreeMap::new();
    for (pos, frame) in frames.iter().enumerate() {
        for (id, bbox) in identities(frame) {
            tracks.entry(id).or_default().push((pos, frame.index, bbox));
        }
    }
    for (id, track) in &tracks {
        if let Some(w) = track.windows(2).find(|w| w[1].0 != w[0].0 + 1) {
            return Err(PlanError::VanishReappear { object: describe(id), vanished_after: w[0].1, reappears_at: w[1].1 });
        }
        for w in track.windows(2) {
            let ((ax, ay), (bx, by)) = (w[0].2.center(), w[1].2.center());
            let gap = (w[1].1 - w[0].1) as f64;
            let displacement = ((bx - ax).hypot(by - ay) / std::f64::consts::SQRT_2) / gap;
            if displacement > max_step {
                return Err(PlanError::Continuity {
                    object: describe(id),
                    from: w[0].1,
                    to: w[1].1,
                    displacement,
                    max_step,
                });
            }
        }
    }
    LayoutPlan::new(frames, plan.reasoning.clone())
}

/// Fills in missing frames by per-object linear interpolation of the four box
/// coordinates between keyframes, holding the first and last keyframe boxes
/// constant outside them. Keyframes are copied unchanged. A filled frame takes
/// the caption of the nearest earlier keyframe.
pub fn interpolate_trajectory(plan: &LayoutPlan, frame_count: usize) -> Result<LayoutPlan, PlanError> {
    let mut keys = plan.frames.clone();
    keys.sort_by_key(|f| f.index);
    if keys.len() > frame_count || keys.last().is_some_and(|f| f.index >= frame_count) {
        return Err(PlanError::Frames(format!("keyframes do not fit a {frame_count}-frame video; validate the plan first")));
    }
    if keys.len() == frame_count {
        return Ok(plan.clone());
    }

    // identity order follows first appearance across keyframes
    let mut order: Vec<Identity> = Vec::new();
    let mut tracks: BTreeMap<Identity, Vec<(usize, BBox)>> = BTreeMap::new();
    for frame in &keys {
        for (id, bbox) in identities(frame) {
            if !tracks.contains_key(&id) {
                order.push(id.clone());
            }
            tracks.entry(id).or_default().push((frame.index, bbox));
        }
    }

    let frames = (0..frame_count)
        .map(|i| {
            if let Some(key) = keys.iter().find(|f| f.index == i) {
                return key.clone();
            }
            let caption = keys
                .iter()
                .rev()
                .find(|f| f.index < i)
                .or_else(|| keys.first())
                .map(|f| f.caption.clone())
                .unwrap_or_default();
            let placements = order
                .iter()
                .map(|id| Placement::new(id.0.clone(), box_at(&tracks[id], i)))
                .collect();
            FramePlan { index: i, caption, placements }
        })
        .collect();
    LayoutPlan::new(frames, plan.reasoning.clone())
}

fn box_at(track: &[(usize, BBox)], i: usize) -> BBox {
    let next = track.iter().position(|(f, _)| *f >= i);
    match next {
        None => track[track.len() - 1].1,
        Some(0) => track[0].1,
        Some(j) => {
            let (f0, b0) = track[j - 1];
            let (f1, b1) = track[j];
            b0.lerp(&b1, (i - f0) as f64 / (f1 - f0) as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(index: usize, boxes: &[(&str, [f64; 4])]) -> FramePlan {
        FramePlan {
            index,
            caption: format!("f{index}"),
            placements: boxes.iter().map(|(n, b)| Placement::new(*n, BBox::try_from(*b).unwrap())).collect(),
        }
    }

    fn centered(cx: f64, cy: f64) -> [f64; 4] {
        [cx - 0.04, cy - 0.04, cx + 0.04, cy + 0.04]
    }

    #[test]
    fn jump_to_corner_is_rejected() {
        let plan = LayoutPlan::new(vec![frame(0, &[("ball", centered(0.5, 0.5))]), frame(1, &[("ball", centered(0.95, 0.95))])], "").unwrap();
        match validate_plan(&plan, 2, DEFAULT_MAX_STEP) {
            Err(PlanError::Continuity { object, from, to, displacement, .. }) => {
                assert_eq!((object.as_str(), from, to), ("ball", 0, 1));
                // Euclidean 0.636 in normalized units, 0.45 of the diagonal
                assert!((displacement - 0.45).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn straight_line_plan_passes_unchanged() {
        let frames = (0..6).map(|i| frame(i, &[("car", centered(0.2 + 0.1 * i as f64, 0.5))])).collect();
        let plan = LayoutPlan::new(frames, "drive").unwrap();
        assert_eq!(validate_plan(&plan, 6, DEFAULT_MAX_STEP).unwrap(), plan);
    }

    #[test]
    fn vanish_and_reappear() {
        let plan = LayoutPlan::new(
            vec![frame(0, &[("dog", centered(0.5, 0.5))]), frame(1, &[]), frame(2, &[("dog", centered(0.5, 0.5))])],
            "",
        )
        .unwrap();
        assert_eq!(
            validate_plan(&plan, 3, DEFAULT_MAX_STEP),
            Err(PlanError::VanishReappear { object: "dog".into(), vanished_after: 0, reappears_at: 2 })
        );
    }

    #[test]
    fn renumbering_rules() {
        let one_based = LayoutPlan::new((1..=3).map(|i| frame(i, &[])).collect(), "").unwrap();
        let v = validate_plan(&one_based, 3, 0.25).unwrap();
        assert_eq!(v.frames.iter().map(|f| f.index).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(v.frames[0].caption, "f1");

        let sparse = LayoutPlan::new(vec![frame(0, &[]), frame(7, &[])], "").unwrap();
        assert_eq!(validate_plan(&sparse, 8, 0.25).unwrap().frames[1].index, 7);
        let sparse_one_based = LayoutPlan::new(vec![frame(1, &[]), frame(8, &[])], "").unwrap();
        assert_eq!(validate_plan(&sparse_one_based, 8, 0.25).unwrap().frames[1].index, 7);
        let out_of_range = LayoutPlan::new(vec![frame(0, &[]), frame(12, &[])], "").unwrap();
        assert!(validate_plan(&out_of_range, 8, 0.25).is_err());
        let too_many = LayoutPlan::new((0..4).map(|i| frame(i, &[])).collect(), "").unwrap();
        assert!(validate_plan(&too_many, 3, 0.25).is_err());
    }

    #[test]
    fn sparse_keyframes_scale_the_step_limit() {
        // 0.3 diagonal over 3 frames is 0.1 per frame
        let d = 0.3 * std::f64::consts::SQRT_2;
        let plan = LayoutPlan::new(vec![frame(0, &[("a", centered(0.3, 0.5))]), frame(3, &[("a", centered(0.3 + d, 0.5))])], "").unwrap();
        assert!(validate_plan(&plan, 4, 0.25).is_ok());
        assert!(validate_plan(&plan, 4, 0.05).is_err());
    }

    #[test]
    fn repeated_names_are_separate_objects() {
        let plan = LayoutPlan::new(
            vec![
                frame(0, &[("cat", centered(0.2, 0.5)), ("cat", centered(0.8, 0.5))]),
                frame(1, &[("cat", centered(0.22, 0.5)), ("cat", centered(0.78, 0.5))]),
            ],
            "",
        )
        .unwrap();
        assert!(validate_plan(&plan, 2, 0.25).is_ok());
    }

    #[test]
    fn interpolation_midpoint_and_holds() {
        let plan = LayoutPlan::new(
            vec![frame(1, &[("egg", [0.0, 0.1, 0.2, 0.3])]), frame(3, &[("egg", [0.4, 0.1, 0.6, 0.3])])],
            "",
        )
        .unwrap();
        let full = interpolate_trajectory(&plan, 5).unwrap();
        assert_eq!(full.frames.len(), 5);
        let x1: Vec<f64> = full.frames.iter().map(|f| f.placements[0].bbox.x1()).collect();
        assert_eq!(x1, [0.0, 0.0, 0.2, 0.4, 0.4]);
        assert_eq!(full.frames[2].caption, "f1");
        assert_eq!(full.frames[0].caption, "f1");
        assert_eq!(full.frames[3], plan.frames[1]);
    }

    #[test]
    fn interpolation_identity_and_constant() {
        let all = LayoutPlan::new((0..3).map(|i| frame(i, &[("a", centered(0.5, 0.5))])).collect(), "r").unwrap();
        assert_eq!(interpolate_trajectory(&all, 3).unwrap(), all);
        let single = LayoutPlan::new(vec![frame(0, &[("a", centered(0.3, 0.6))])], "").unwrap();
        let out = interpolate_trajectory(&single, 4).unwrap();
        assert!(out.frames.iter().all(|f| f.placements[0].bbox == single.frames[0].placements[0].bbox));
        assert!(interpolate_trajectory(&single, 0).is_err());
    }
}
