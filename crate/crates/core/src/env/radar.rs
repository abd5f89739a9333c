//! Synthetic front radar and density-based reduction of a frame to a single
//! lead-vehicle estimate.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadarPoint {
    /// Range to the reflection (m), always positive.
    pub depth: f64,
    /// Closing speed (m/s); positive when the target approaches.
    pub relative_velocity: f64,
    pub azimuth: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RadarFrame {
    pub points: Vec<RadarPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadarConfig {
    /// Detection points per second.
    pub rate_hz: f64,
    pub sigma_depth: f64,
    pub sigma_velocity: f64,
    /// Fraction of points that are uniform clutter.
    pub clutter_fraction: f64,
    pub max_range: f64,
    /// Mounting pitch, kept as metadata only in the 1-D model.
    pub pitch_deg: f64,
    pub dbscan: DbscanParams,
}

impl Default for RadarConfig {
    fn default() -> Self {
        RadarConfig {
            rate_hz: 1000.0,
            sigma_depth: 0.3,
            sigma_velocity: 0.2,
            clutter_fraction: 0.05,
            max_range: 100.0,
            pitch_deg: 2.0,
            dbscan: DbscanParams::default(),
        }
    }
}

/// DBSCAN over `(depth, velocity * velocity_scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_points: usize,
    pub velocity_scale: f64,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams {
            eps: 1.0,
            min_points: 3,
            velocity_scale: 1.0,
        }
    }
}

/// Representative lead-vehicle point of one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterSummary {
    /// `None` when the frame is empty or all noise.
    pub detection: Option<(f64, f64)>,
    pub cluster_count: usize,
}

impl ClusterSummary {
    pub const NONE: ClusterSummary = ClusterSummary {
        detection: None,
        cluster_count: 0,
    };

    /// `(d_rel, v_rel)` with the sentinel `(max_range, 0)` when nothing was detected.
    pub fn or_sentinel(&self, max_range: f64) -> (f64, f64) {
        self.detection.unwrap_or((max_range, 0.0))
    }
}

/// Draws one frame covering `dt` seconds. The lead reflections are centred on the
/// true gap and closing speed; clutter is uniform over range and velocity.
pub fn synthesize_frame<R: Rng + ?Sized>(cfg: &RadarConfig, gap: f64, closing_speed: f64, dt: f64, rng: &mut R) -> RadarFrame {
    let expected = cfg.rate_hz * dt;
    let count = if expected > 0.0 {
        Poisson::new(expected).map(|p| p.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };
    let depth_noise = Normal::new(0.0, cfg.sigma_depth.max(0.0)).expect("finite sigma");
    let vel_noise = Normal::new(0.0, cfg.sigma_velocity.max(0.0)).expect("finite sigma");
    let lead_visible = gap > 0.0 && gap <= cfg.max_range;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        if cfg.clutter_fraction > 0.0 && rng.gen::<f64>() < cfg.clutter_fraction {
            points.push(RadarPoint {
                depth: rng.gen_range(0.5..cfg.max_range),
                relative_velocity: rng.gen_range(-20.0..20.0),
                azimuth: rng.gen_range(-0.3..0.3),
            });
        } else if lead_visible {
            let depth = gap + depth_noise.sample(rng);
            let relative_velocity = closing_speed + vel_noise.sample(rng);
            if depth > 0.0 {
                points.push(RadarPoint {
                    depth,
                    relative_velocity,
                    azimuth: 0.0,
                });
            }
        }
    }
    RadarFrame { points }
}

/// Cluster labels per point (`None` = noise), clusters numbered from 0.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_points: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let eps2 = eps * eps;
    let neighbours = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| {
                let dx = points[i].0 - points[j].0;
                let dy = points[i].1 - points[j].1;
                dx * dx + dy * dy <= eps2
            })
            .collect()
    };
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbours(i);
        if seeds.len() < min_points {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = Some(cluster);
        let mut queue = seeds;
        let mut k = 0;
        while k < queue.len() {
            let j = queue[k];
            k += 1;
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let more = neighbours(j);
            if more.len() >= min_points {
                queue.extend(more);
            }
        }
    }
    labels
}

/// Reduces a frame to the mean of its cluster centroids. A single-point frame
/// is used as is.
pub fn cluster_radar(frame: &RadarFrame, params: &DbscanParams) -> ClusterSummary {
    match frame.points.as_slice() {
        [] => ClusterSummary::NONE,
        [p] => ClusterSummary {
            detection: Some((p.depth, p.relative_velocity)),
            cluster_count: 1,
        },
        points => {
            let scaled: Vec<(f64, f64)> = points
                .iter()
                .map(|p| (p.depth, p.relative_velocity * params.velocity_scale))
                .collect();
            let labels = dbscan(&scaled, params.eps, params.min_points);
            let k = labels.iter().flatten().max().map_or(0, |&m| m + 1);
            if k == 0 {
                return ClusterSummary::NONE;
            }
            let mut sums = vec![(0.0, 0.0, 0usize); k];
            for (p, label) in points.iter().zip(&labels) {
                if let Some(c) = *label {
                    sums[c].0 += p.depth;
                    sums[c].1 += p.relative_velocity;
                    sums[c].2 += 1;
                }
            }
            let (mut d, mut v) = (0.0, 0.0);
            for &(sd, sv, count) in &sums {
                d += sd / count as f64;
                v += sv / count as f64;
            }
            ClusterSummary {
                detection: Some((d / k as f64, v / k as f64)),
                cluster_count: k,
            }
        }
    }
}
