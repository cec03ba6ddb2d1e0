use std::io::Write;

use crate::error::Result;

pub const METRICS_HEADER: &str =
    "episode,reached_goal,collided,mean_speed,max_speed,cum_reward,adjustments,failsafes,mean_latency_ms";

pub const SUMMARY_HEADER: &str =
    "episodes,goal_rate,collision_rate,mean_speed,max_speed,mean_reward,mean_latency_ms,latency_std_ms";

/// Per-episode results. Speeds are true speeds after each step; latency
/// fields stay zero unless timing is recorded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub reached_goal: bool,
    pub collided: bool,
    pub mean_speed: f64,
    pub max_speed: f64,
    pub cum_reward: f64,
    pub adjustments: usize,
    pub failsafes: usize,
    pub mean_latency_ms: f64,
    pub steps: usize,
    /// Failsafe steps with no stored plan left (braking law applied).
    pub failsafes_without_plan: usize,
    pub filter_calls: usize,
    pub latency_sum_ms: f64,
    pub latency_sq_sum_ms: f64,
}

impl EpisodeMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.episode,
            u8::from(self.reached_goal),
            u8::from(self.collided),
            self.mean_speed,
            self.max_speed,
            self.cum_reward,
            self.adjustments,
            self.failsafes,
            self.mean_latency_ms
        )
    }
}

/// Summary over episodes. Rates are fractions in `[0, 1]`; `max_speed` is
/// the maximum over episodes, the other speeds and rewards are means.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Aggregate {
    pub episodes: usize,
    pub goal_rate: f64,
    pub collision_rate: f64,
    pub mean_speed: f64,
    pub max_speed: f64,
    pub mean_reward: f64,
    pub mean_latency_ms: f64,
    /// Population standard deviation over all filter calls.
    pub latency_std_ms: f64,
    pub total_steps: usize,
}

pub fn aggregate(episodes: &[EpisodeMetrics]) -> Aggregate {
    let n = episodes.len();
    if n == 0 {
        return Aggregate::default();
    }
    let nf = n as f64;
    let mean = |f: fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).sum::<f64>() / nf;
    let calls: usize = episodes.iter().map(|e| e.filter_calls).sum();
    let (lat_mean, lat_std) = if calls == 0 {
        (0.0, 0.0)
    } else {
        let c = calls as f64;
        let s: f64 = episodes.iter().map(|e| e.latency_sum_ms).sum();
        let sq: f64 = episodes.iter().map(|e| e.latency_sq_sum_ms).sum();
        let mu = s / c;
        (mu, (sq / c - mu * mu).max(0.0).sqrt())
    };
    Aggregate {
        episodes: n,
        goal_rate: mean(|e| f64::from(u8::from(e.reached_goal))),
        collision_rate: mean(|e| f64::from(u8::from(e.collided))),
        mean_speed: mean(|e| e.mean_speed),
        max_speed: episodes.iter().map(|e| e.max_speed).fold(0.0, f64::max),
        mean_reward: mean(|e| e.cum_reward),
        mean_latency_ms: lat_mean,
        latency_std_ms: lat_std,
        total_steps: episodes.iter().map(|e| e.steps).sum(),
    }
}

pub fn write_metrics_csv<W: Write>(mut w: W, episodes: &[EpisodeMetrics]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for e in episodes {
        writeln!(w, "{}", e.csv_row())?;
    }
    Ok(())
}

/// Header plus one row; with zero episodes the rate columns are empty.
pub fn write_summary_csv<W: Write>(mut w: W, a: &Aggregate) -> Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    if a.episodes == 0 {
        writeln!(w, "0,,,,,,,")?;
    } else {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            a.episodes,
            a.goal_rate,
            a.collision_rate,
            a.mean_speed,
            a.max_speed,
            a.mean_reward,
            a.mean_latency_ms,
            a.latency_std_ms
        )?;
    }
    Ok(())
}
