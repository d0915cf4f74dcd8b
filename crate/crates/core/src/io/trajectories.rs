//! Whitespace-delimited `frame_id agent_id x y` pedestrian files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::scene::{AgentTrack, AgentType, GtState, Scene};

/// Sampling period of the ETH and UCY annotations (2.5 Hz).
pub const DEFAULT_ETH_DT: f64 = 0.4;

pub fn load_trajectories(path: impl AsRef<Path>, dt: f64) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    parse_trajectories(&text, dt)
}

fn parse_int(tok: &str, line: usize, what: &str) -> Result<i64> {
    if let Ok(v) = tok.parse::<i64>() {
        return Ok(v);
    }
    // Several public releases write ids as "780.0".
    match tok.parse::<f64>() {
        Ok(f) if f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15 => Ok(f as i64),
        _ => Err(Error::Parse { line, message: format!("{what} '{tok}' is not an integer") }),
    }
}

fn parse_coord(tok: &str, line: usize) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse { line, message: format!("coordinate '{tok}' is not a finite number") }),
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Parse a trajectory file into a GT-only pedestrian scene.
///
/// Frame ids are mapped to steps using the greatest common divisor of all
/// frame differences, so files annotated every tenth video frame load with
/// unit step spacing. A missing step inside an agent's track splits it.
pub fn parse_trajectories(text: &str, dt: f64) -> Result<Scene> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let mut by_agent: BTreeMap<i64, BTreeMap<i64, Vec2>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(Error::Parse { line, message: format!("expected 4 fields, found {}", toks.len()) });
        }
        let frame = parse_int(toks[0], line, "frame id")?;
        let agent = parse_int(toks[1], line, "agent id")?;
        let pos = Vec2::new(parse_coord(toks[2], line)?, parse_coord(toks[3], line)?);
        if by_agent.entry(agent).or_default().insert(frame, pos).is_some() {
            return Err(Error::DuplicateObservation { frame, agent });
        }
    }
    if by_agent.is_empty() {
        return Err(Error::EmptyScene);
    }

    let mut frames: Vec<i64> = by_agent.values().flat_map(|m| m.keys().copied()).collect();
    frames.sort_unstable();
    frames.dedup();
    let first = frames[0];
    let stride = frames.windows(2).fold(0, |g, w| gcd(g, w[1] - w[0])).max(1);

    let mut agents = Vec::new();
    for (&id, obs) in &by_agent {
        let mut segment: Vec<(i64, Vec2)> = Vec::new();
        for (&frame, &pos) in obs {
            let step = (frame - first) / stride;
            if let Some(&(prev, _)) = segment.last() {
                if step != prev + 1 {
                    agents.push(finish_segment(id, &segment, dt));
                    segment.clear();
                }
            }
            segment.push((step, pos));
        }
        agents.push(finish_segment(id, &segment, dt));
    }
    Scene::new(dt, agents)
}

/// Backward differences, with the first velocity copying the second.
fn finish_segment(id: i64, seg: &[(i64, Vec2)], dt: f64) -> AgentTrack {
    let vel: Vec<Vec2> = (0..seg.len())
        .map(|k| match k {
            0 if seg.len() > 1 => (seg[1].1 - seg[0].1) / dt,
            0 => Vec2::zeros(),
            _ => (seg[k].1 - seg[k - 1].1) / dt,
        })
        .collect();
    let gt = seg.iter().zip(vel).map(|(&(step, pos), vel)| GtState { step, pos, vel }).collect();
    AgentTrack::new(id, AgentType::Pedestrian, gt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_difference_velocity() {
        let s = parse_trajectories("0 1 0.0 0.0\n1 1 1.0 0.0\n", 0.4).unwrap();
        let a = &s.agents[0];
        assert_eq!(a.gt[1].vel, Vec2::new(2.5, 0.0));
        assert_eq!(a.gt[0].vel, a.gt[1].vel);
        assert_eq!(a.agent_type, AgentType::Pedestrian);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_trajectories("", 0.4), Err(Error::EmptyScene)));
        assert!(matches!(parse_trajectories("# only a comment\n\n", 0.4), Err(Error::EmptyScene)));
        assert!(matches!(parse_trajectories("0 1 0 0\na b c\n", 0.4), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_trajectories("0 1 0 0\n0 1 1 1\n", 0.4), Err(Error::DuplicateObservation { frame: 0, agent: 1 })));
        assert!(matches!(parse_trajectories("0 1 nan 0\n", 0.4), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn gaps_split_tracks_and_stride_detected() {
        let text = "780.0 1.0 0 0\n790 1 1 0\n800 1 2 0\n830 1 5 0\n840 1 6 0\n800 2 9 9\n";
        let s = parse_trajectories(text, 0.4).unwrap();
        assert_eq!(s.agents.len(), 3);
        let steps: Vec<Vec<i64>> = s.agents.iter().map(|a| a.gt.iter().map(|g| g.step).collect()).collect();
        assert_eq!(steps, vec![vec![0, 1, 2], vec![5, 6], vec![2]]);
        assert_eq!(s.agents[2].gt[0].vel, Vec2::zeros());
    }

    #[test]
    fn row_order_is_irrelevant() {
        let a = "0 1 0 0\n1 1 1 0\n2 1 2 1\n1 2 5 5\n2 2 5 6\n";
        let b = "2 2 5 6\n2 1 2 1\n0 1 0 0\n1 2 5 5\n1 1 1 0\n";
        assert_eq!(parse_trajectories(a, 0.4).unwrap(), parse_trajectories(b, 0.4).unwrap());
    }
}
