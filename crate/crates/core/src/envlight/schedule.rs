use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameTag {
    /// Uniformly lit frame used for tracking, albedo and normals.
    Tracking,
    /// Frame lit by environment `env`; `tracking_frame` is the adjacent
    /// uniformly lit frame that supplies its image-derived features.
    Relit { env: usize, tracking_frame: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureSchedule {
    pub fps: f64,
    pub frames: Vec<FrameTag>,
}

impl CaptureSchedule {
    /// `frame_count` frames alternating tracking/relit, relit frames cycling
    /// through `env_ids` in order.
    pub fn with_frames(env_ids: &[usize], fps: f64, frame_count: usize) -> Result<Self> {
        if env_ids.is_empty() {
            return Err(Error::invalid("schedule needs at least one environment"));
        }
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(Error::invalid(format!("frame rate {fps} must be positive")));
        }
        let frames = (0..frame_count)
            .map(|t| {
                if t % 2 == 0 {
                    FrameTag::Tracking
                } else {
                    FrameTag::Relit {
                        env: env_ids[(t / 2) % env_ids.len()],
                        tracking_frame: t - 1,
                    }
                }
            })
            .collect();
        Ok(Self { fps, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Tags strictly alternate, starting with a tracking frame, and every
    /// relit frame points at its predecessor.
    pub fn validate(&self) -> Result<()> {
        for (t, f) in self.frames.iter().enumerate() {
            match (t % 2, f) {
                (0, FrameTag::Tracking) => {}
                (1, FrameTag::Relit { tracking_frame, .. }) if *tracking_frame + 1 == t => {}
                _ => return Err(Error::invalid(format!("frame {t} breaks the tracking/relit alternation"))),
            }
        }
        Ok(())
    }

    pub fn time_of(&self, frame: usize) -> f64 {
        frame as f64 / self.fps
    }
}

/// One pass over `env_ids`: a tracking frame before every relit frame.
pub fn make_schedule(env_ids: &[usize], fps: f64) -> Result<CaptureSchedule> {
    CaptureSchedule::with_frames(env_ids, fps, 2 * env_ids.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tags(s: &CaptureSchedule) -> Vec<Option<usize>> {
        s.frames
            .iter()
            .map(|f| match f {
                FrameTag::Tracking => None,
                FrameTag::Relit { env, .. } => Some(*env),
            })
            .collect()
    }

    #[test]
    fn single_env() {
        let s = CaptureSchedule::with_frames(&[7], 60.0, 6).unwrap();
        assert_eq!(tags(&s), vec![None, Some(7), None, Some(7), None, Some(7)]);
    }

    #[test]
    fn two_envs_eight_frames() {
        let s = CaptureSchedule::with_frames(&[0, 1], 60.0, 8).unwrap();
        assert_eq!(
            tags(&s),
            vec![None, Some(0), None, Some(1), None, Some(0), None, Some(1)]
        );
        assert_eq!(
            s.frames[3],
            FrameTag::Relit {
                env: 1,
                tracking_frame: 2
            }
        );
    }

    #[test]
    fn full_pass_length() {
        let ids: Vec<usize> = (0..1015).collect();
        assert_eq!(make_schedule(&ids, 60.0).unwrap().len(), 2030);
    }

    #[test]
    fn errors() {
        assert!(make_schedule(&[], 60.0).is_err());
        assert!(make_schedule(&[1], 0.0).is_err());
        assert!(make_schedule(&[1], -3.0).is_err());
    }

    proptest! {
        #[test]
        fn alternation_always_holds(n in 1usize..20, frames in 0usize..200, fps in 1.0f64..120.0) {
            let ids: Vec<usize> = (0..n).collect();
            let s = CaptureSchedule::with_frames(&ids, fps, frames).unwrap();
            prop_assert!(s.validate().is_ok());
        }
    }
}
