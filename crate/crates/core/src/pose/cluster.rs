//! Greedy pose clustering of voting hypotheses.

use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4};

use super::ppf::PoseHypothesis;
use crate::RigidTransform;

/// Merges hypotheses whose rotations differ by less than `rot_thresh` (radians)
/// and translations by less than `trans_thresh` (meters) from a cluster's seed,
/// the strongest hypothesis that opened it. The merged pose is the
/// vote-weighted mean: translations averaged directly, rotations via the
/// sign-aligned quaternion mean.
pub fn cluster_hypotheses(hyps: &[PoseHypothesis], rot_thresh: f64, trans_thresh: f64) -> Vec<PoseHypothesis> {
    let mut order: Vec<usize> = (0..hyps.len()).collect();
    order.sort_by(|&a, &b| hyps[b].votes.cmp(&hyps[a].votes).then(a.cmp(&b)));

    struct Cluster {
        seed: usize,
        seed_q: UnitQuaternion<f64>,
        members: Vec<usize>,
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    for i in order {
        let h = &hyps[i];
        let found = clusters.iter_mut().find(|c| {
            let s = &hyps[c.seed].pose;
            s.to_frame() == h.pose.to_frame()
                && s.rotation_angle_to(&h.pose) < rot_thresh
                && s.translation_distance_to(&h.pose) < trans_thresh
        });
        match found {
            Some(c) => c.members.push(i),
            None => clusters.push(Cluster { seed: i, seed_q: h.pose.quaternion(), members: vec![i] }),
        }
    }

    let mut out: Vec<PoseHypothesis> = clusters
        .into_iter()
        .map(|c| {
            let votes: u32 = c.members.iter().map(|&i| hyps[i].votes).sum();
            let weight = |i: usize| if votes == 0 { 1.0 } else { hyps[i].votes as f64 };
            let total: f64 = c.members.iter().map(|&i| weight(i)).sum();
            let mut t = Vector3::zeros();
            let mut q = Vector4::zeros();
            let seed_q = c.seed_q.as_ref().coords;
            for &i in &c.members {
                let w = weight(i);
                t += hyps[i].pose.translation() * w;
                let qi = hyps[i].pose.quaternion().as_ref().coords;
                q += if qi.dot(&seed_q) < 0.0 { -qi } else { qi } * w;
            }
            let seed = &hyps[c.seed].pose;
            let rot = UnitQuaternion::from_quaternion(Quaternion::from(q / total));
            let pose = RigidTransform::from_quaternion(
                &rot,
                t / total,
                seed.from_frame().clone(),
                seed.to_frame().clone(),
            );
            PoseHypothesis { pose, votes, icp_residual: None }
        })
        .collect();
    out.sort_by_key(|h| std::cmp::Reverse(h.votes));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;

    fn hyp(axis: Vector3<f64>, angle: f64, t: Vector3<f64>, votes: u32) -> PoseHypothesis {
        PoseHypothesis {
            pose: RigidTransform::from_axis_angle(&axis, angle, t, Frame::Object, Frame::World),
            votes,
            icp_residual: None,
        }
    }

    #[test]
    fn duplicates_merge_with_summed_votes() {
        let h = hyp(Vector3::z(), 0.3, Vector3::new(0.1, 0.0, 0.0), 7);
        let c = cluster_hypotheses(&[h.clone(), h.clone()], 0.26, 0.01);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].votes, 14);
        assert!(c[0].pose.rotation_angle_to(&h.pose) < 1e-9);
    }

    #[test]
    fn distant_hypotheses_stay_apart() {
        let a = hyp(Vector3::z(), 0.0, Vector3::zeros(), 3);
        let b = hyp(Vector3::z(), 0.0, Vector3::new(1.0, 0.0, 0.0), 5);
        let c = cluster_hypotheses(&[a, b], 0.26, 0.01);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].votes, 5);
    }

    #[test]
    fn empty_input() {
        assert!(cluster_hypotheses(&[], 0.1, 0.1).is_empty());
    }

    #[test]
    fn quaternion_sign_is_aligned() {
        // Same rotation expressed with opposite quaternion signs must not cancel.
        let a = hyp(Vector3::z(), 3.1, Vector3::zeros(), 1);
        let b = hyp(Vector3::z(), -3.13, Vector3::zeros(), 1);
        let c = cluster_hypotheses(&[a.clone(), b], 0.26, 0.01);
        assert_eq!(c.len(), 1);
        assert!(c[0].pose.rotation_angle_to(&a.pose) < 0.05);
    }
}
