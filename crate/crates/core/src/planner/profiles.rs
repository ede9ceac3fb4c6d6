//! Grouping providers by the shape of their average day.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sizing::{size_containers, ResourceNeeds};
use super::{CostConfig, PlanError};
use crate::preprocess::NormalizationParams;
use crate::trace_model::{ContainerFlavor, TraceSeries};

const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileClass {
    pub class_id: usize,
    /// Mean normalized demand for each hour of the day.
    pub centroid: [f64; 24],
    pub members: Vec<String>,
    /// Most common `(flavor_id, count)` among the members' own sizings.
    pub recommended_flavor: String,
    pub recommended_count: u32,
}

/// Mean min/max-normalized demand per hour of day.
pub fn daily_shape(series: &TraceSeries) -> Result<[f64; 24], PlanError> {
    if series.len() < 24 {
        return Err(PlanError::ShortTrace(series.provider_id().to_string()));
    }
    let norm = NormalizationParams::fit(series.samples()).expect("non-empty");
    let mut sum = [0.0; 24];
    let mut count = [0usize; 24];
    for (h, v) in series.samples().iter().enumerate() {
        let hod = series.hour_of_day(h);
        sum[hod] += norm.normalize_value(*v);
        count[hod] += 1;
    }
    let mut shape = [0.0; 24];
    for i in 0..24 {
        shape[i] = sum[i] / count[i] as f64;
    }
    Ok(shape)
}

fn dist2(a: &[f64; 24], b: &[f64; 24]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64; 24], centroids: &[[f64; 24]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = dist2(point, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// k-means++ seeding.
fn seed_centroids(points: &[[f64; 24]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 24]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = weights.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            // All remaining points coincide with a centroid.
            centroids.len() % points.len()
        };
        centroids.push(points[idx]);
    }
    centroids
}

/// Seeded Lloyd iterations. Returns each point's cluster.
pub(crate) fn kmeans(points: &[[f64; 24]], k: usize, seed: u64) -> (Vec<usize>, Vec<[f64; 24]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![[0.0; 24]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for h in 0..24 {
                sums[l][h] += p[h];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for h in 0..24 {
                    centroids[c][h] = sums[c][h] / counts[c] as f64;
                }
            }
        }
        // Empty clusters take the point farthest from its own centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centroids[labels[a]])
                            .total_cmp(&dist2(&points[b], &centroids[labels[b]]))
                            .then(b.cmp(&a))
                    });
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    labels[i] = c;
                    counts[c] = 1;
                    centroids[c] = points[i];
                }
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    (labels, centroids)
}

/// Clusters providers by daily shape and attaches a recommended container
/// sizing to each class. Classes are numbered by their first member.
pub fn cluster_profiles(
    traces: &[TraceSeries],
    k: usize,
    seed: u64,
    catalog: &[ContainerFlavor],
    cfg: &CostConfig,
) -> Result<Vec<ProfileClass>, PlanError> {
    if k == 0 || k > traces.len() {
        return Err(PlanError::BadK {
            k,
            providers: traces.len(),
        });
    }
    let shapes = traces.iter().map(daily_shape).collect::<Result<Vec<_>, _>>()?;
    let sizings = traces
        .iter()
        .map(|t| {
            let peak = t.samples().iter().copied().fold(0.0, f64::max);
            size_containers(peak, &ResourceNeeds::default(), catalog, cfg.headroom, cfg.max_container_count)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (labels, centroids) = kmeans(&shapes, k, seed);

    let mut order: Vec<usize> = Vec::new();
    for &l in &labels {
        if !order.contains(&l) {
            order.push(l);
        }
    }
    let classes = order
        .iter()
        .enumerate()
        .map(|(class_id, &l)| {
            let members: Vec<usize> = (0..traces.len()).filter(|&i| labels[i] == l).collect();
            let mut votes: BTreeMap<(String, u32), usize> = BTreeMap::new();
            for &i in &members {
                *votes
                    .entry((sizings[i].flavor.flavor_id.clone(), sizings[i].count))
                    .or_default() += 1;
            }
            let top = votes.values().copied().max().unwrap_or(0);
            let (flavor, count) = votes
                .into_iter()
                .find(|(_, v)| *v == top)
                .map(|(key, _)| key)
                .expect("class has members");
            ProfileClass {
                class_id,
                centroid: centroids[l],
                members: members.iter().map(|&i| traces[i].provider_id().to_string()).collect(),
                recommended_flavor: flavor,
                recommended_count: count,
            }
        })
        .collect();
    Ok(classes)
}
