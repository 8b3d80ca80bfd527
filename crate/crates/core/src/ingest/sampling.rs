use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Frame, FrameStream};
use crate::error::{Error, Result};

/// Which frames of a stream are analysed.
///
/// Positions are counted from the start of the stream. Frame 0 is always
/// selected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "n", rename_all = "kebab-case")]
pub enum SamplingPolicy {
    EveryFrame,
    EveryNFrames(usize),
    /// Positions `round(k * fps)` for `k = 0, 1, 2, ...`.
    #[default]
    OncePerSecond,
}

impl FromStr for SamplingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "every-frame" => Ok(SamplingPolicy::EveryFrame),
            "per-second" => Ok(SamplingPolicy::OncePerSecond),
            _ => {
                let n = s
                    .strip_prefix("every-n:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "sampling must be every-frame, every-n:N or per-second, got {s:?}"
                        ))
                    })?;
                if n == 0 {
                    return Err(Error::InvalidConfig("every-n:N requires N >= 1".into()));
                }
                Ok(SamplingPolicy::EveryNFrames(n))
            }
        }
    }
}

impl fmt::Display for SamplingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingPolicy::EveryFrame => f.write_str("every-frame"),
            SamplingPolicy::EveryNFrames(n) => write!(f, "every-n:{n}"),
            SamplingPolicy::OncePerSecond => f.write_str("per-second"),
        }
    }
}

/// Lazily filters a stream according to a [`SamplingPolicy`].
pub struct SampledFrames {
    stream: FrameStream,
    rule: Rule,
    position: usize,
}

enum Rule {
    All,
    Stride(usize),
    PerSecond { fps: f64, k: u64 },
}

impl SampledFrames {
    pub fn new(stream: FrameStream, policy: SamplingPolicy) -> Result<Self> {
        let rule = match policy {
            SamplingPolicy::EveryFrame => Rule::All,
            SamplingPolicy::EveryNFrames(0) => {
                return Err(Error::InvalidConfig("every-n:N requires N >= 1".into()))
            }
            SamplingPolicy::EveryNFrames(n) => Rule::Stride(n),
            SamplingPolicy::OncePerSecond => {
                let fps = stream.frame_rate().ok_or(Error::MissingFrameRate)?.fps();
                Rule::PerSecond { fps, k: 0 }
            }
        };
        Ok(SampledFrames {
            stream,
            rule,
            position: 0,
        })
    }

    fn selects(&mut self, position: usize) -> bool {
        match &mut self.rule {
            Rule::All => true,
            Rule::Stride(n) => position % *n == 0,
            Rule::PerSecond { fps, k } => {
                // Targets may repeat when fps < 1; skip past them.
                let target = |k: u64| (k as f64 * *fps).round() as usize;
                while target(*k) < position {
                    *k += 1;
                }
                if target(*k) == position {
                    *k += 1;
                    true
                } else {
                    false
                }
            }
        }
    }
}

impl Iterator for SampledFrames {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let frame = match self.stream.next()? {
                Ok(frame) => frame,
                Err(e) => return Some(Err(e)),
            };
            let position = self.position;
            self.position += 1;
            if self.selects(position) {
                return Some(Ok(frame));
            }
        }
    }
}

/// Decodes the whole stream and returns the selected frames.
pub fn sample_frames(stream: FrameStream, policy: SamplingPolicy) -> Result<Vec<Frame>> {
    SampledFrames::new(stream, policy)?.collect()
}
