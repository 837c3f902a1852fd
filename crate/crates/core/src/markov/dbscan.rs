use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterLabel {
    Cluster(usize),
    Outlier,
}

/// Angle between two vectors in degrees, `2·atan2(‖â − b̂‖, ‖â + b̂‖)`.
/// Zero vectors have angle 0 to everything.
pub fn angular_distance_deg(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    (2.0 * diff.sqrt().atan2(sum.sqrt())).to_degrees()
}

/// DBSCAN over a precomputed distance matrix. A point is core when at
/// least `min_pts` points (itself included) lie within `eps`. Points are
/// visited and expanded in index order.
pub fn dbscan(dist: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<ClusterLabel> {
    let n = dist.len();
    let neighbors = |i: usize| -> Vec<usize> { (0..n).filter(|&j| dist[i][j] <= eps).collect() };
    let mut labels: Vec<Option<ClusterLabel>> = vec![None; n];
    let mut next_cluster = 0;
    for i in 0..n {
        if labels[i].is_some() {
            continue;
        }
        let seeds = neighbors(i);
        if seeds.len() < min_pts {
            labels[i] = Some(ClusterLabel::Outlier);
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        labels[i] = Some(ClusterLabel::Cluster(c));
        let mut queue: VecDeque<usize> = seeds.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Some(ClusterLabel::Outlier) => labels[j] = Some(ClusterLabel::Cluster(c)),
                Some(ClusterLabel::Cluster(_)) => {}
                None => {
                    labels[j] = Some(ClusterLabel::Cluster(c));
                    let nj = neighbors(j);
                    if nj.len() >= min_pts {
                        queue.extend(nj.into_iter().filter(|&q| labels[q].is_none() || labels[q] == Some(ClusterLabel::Outlier)));
                    }
                }
            }
        }
    }
    labels.into_iter().map(|l| l.expect("every point visited")).collect()
}

/// Mean silhouette over clustered points; `None` with fewer than two clusters.
pub fn silhouette(dist: &[Vec<f64>], labels: &[ClusterLabel]) -> Option<f64> {
    let clusters: Vec<usize> = {
        let mut c: Vec<usize> = labels
            .iter()
            .filter_map(|l| match l {
                ClusterLabel::Cluster(c) => Some(*c),
                ClusterLabel::Outlier => None,
            })
            .collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    if clusters.len() < 2 {
        return None;
    }
    let members = |c: usize| -> Vec<usize> {
        (0..labels.len()).filter(|&j| labels[j] == ClusterLabel::Cluster(c)).collect()
    };
    let groups: Vec<(usize, Vec<usize>)> = clusters.iter().map(|&c| (c, members(c))).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, l) in labels.iter().enumerate() {
        let ClusterLabel::Cluster(own) = *l else { continue };
        count += 1;
        let own_members = &groups.iter().find(|(c, _)| *c == own).expect("known cluster").1;
        if own_members.len() < 2 {
            continue;
        }
        let a = own_members.iter().filter(|&&j| j != i).map(|&j| dist[i][j]).sum::<f64>() / (own_members.len() - 1) as f64;
        let b = groups
            .iter()
            .filter(|(c, _)| *c != own)
            .map(|(_, m)| m.iter().map(|&j| dist[i][j]).sum::<f64>() / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Some(total / count as f64)
}
