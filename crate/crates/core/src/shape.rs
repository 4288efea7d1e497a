//! Post-processing of optimized designs: connectivity by flood fill and the
//! curvature of a channel's centroid path.

use std::collections::VecDeque;

use crate::lattice::Grid;

/// Nodes with `γ > threshold`.
pub fn fluid_mask(gamma: &[f64], threshold: f64) -> Vec<bool> {
    gamma.iter().map(|&g| g > threshold).collect()
}

/// 4-connected component labels of `mask`; `None` off the mask.
pub fn components(grid: &Grid, mask: &[bool]) -> (Vec<Option<usize>>, usize) {
    let mut label = vec![None; grid.len()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for seed in 0..grid.len() {
        if !mask[seed] || label[seed].is_some() {
            continue;
        }
        label[seed] = Some(count);
        queue.push_back(seed);
        while let Some(n) = queue.pop_front() {
            let (i, j) = grid.coords(n);
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if let Some(m) = grid.offset(i, j, di, dj) {
                    if mask[m] && label[m].is_none() {
                        label[m] = Some(count);
                        queue.push_back(m);
                    }
                }
            }
        }
        count += 1;
    }
    (label, count)
}

/// Whether some node of `a` and some node of `b` share a component.
pub fn connected(labels: &[Option<usize>], a: &[usize], b: &[usize]) -> bool {
    a.iter()
        .filter_map(|&n| labels[n])
        .any(|la| b.iter().any(|&m| labels[m] == Some(la)))
}

/// Maximal runs of consecutive mask nodes along row `j`.
pub fn row_runs(grid: &Grid, mask: &[bool], j: usize) -> usize {
    let mut runs = 0;
    let mut inside = false;
    for i in 0..grid.nx {
        let m = mask[grid.index(i, j)];
        if m && !inside {
            runs += 1;
        }
        inside = m;
    }
    runs
}

/// Arc length over chord of the channel's centroid path between two ports.
///
/// Rays from `pivot` are swept from the direction of `start` to that of `end` in
/// `bins` steps; on each ray sector the γ-weighted centroid of the `fluid` nodes
/// gives one path point. Sectors without fluid are skipped.
pub fn arc_chord_ratio(
    grid: &Grid,
    gamma: &[f64],
    fluid: &[bool],
    pivot: [f64; 2],
    start: [f64; 2],
    end: [f64; 2],
    bins: usize,
) -> f64 {
    let angle = |p: [f64; 2]| (p[1] - pivot[1]).atan2(p[0] - pivot[0]);
    let (a0, a1) = (angle(start), angle(end));
    let width = (a1 - a0) / bins as f64;
    let mut acc = vec![([0.0; 2], 0.0); bins];
    for n in 0..grid.len() {
        if !fluid[n] {
            continue;
        }
        let (i, j) = grid.coords(n);
        let p = [i as f64, j as f64];
        let k = ((angle(p) - a0) / width).floor();
        if k >= 0.0 && (k as usize) < bins {
            let (c, w) = &mut acc[k as usize];
            c[0] += gamma[n] * p[0];
            c[1] += gamma[n] * p[1];
            *w += gamma[n];
        }
    }
    let mut path = vec![start];
    path.extend(acc.iter().filter(|(_, w)| *w > 0.0).map(|(c, w)| [c[0] / w, c[1] / w]));
    path.push(end);
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let arc: f64 = path.windows(2).map(|s| dist(s[0], s[1])).sum();
    arc / dist(start, end)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paint(grid: &Grid, f: impl Fn(f64, f64) -> bool) -> Vec<f64> {
        (0..grid.len())
            .map(|n| {
                let (i, j) = grid.coords(n);
                if f(i as f64, j as f64) { 1.0 } else { 0.0 }
            })
            .collect()
    }

    #[test]
    fn two_bars_and_a_bridge() {
        let grid = Grid::new(20, 20).unwrap();
        let bars = paint(&grid, |_, y| (3.0..=5.0).contains(&y) || (14.0..=16.0).contains(&y));
        let mask = fluid_mask(&bars, 0.5);
        let (labels, count) = components(&grid, &mask);
        assert_eq!(count, 2);
        let left_low = [grid.index(0, 4)];
        let right_high = [grid.index(19, 15)];
        assert!(!connected(&labels, &left_low, &right_high));
        assert_eq!(row_runs(&grid, &mask, 10), 0);

        let h = paint(&grid, |x, y| {
            (3.0..=5.0).contains(&y) || (14.0..=16.0).contains(&y) || (9.0..=11.0).contains(&x)
        });
        let mask = fluid_mask(&h, 0.5);
        let (labels, count) = components(&grid, &mask);
        assert_eq!(count, 1);
        assert!(connected(&labels, &left_low, &right_high));
        assert_eq!(row_runs(&grid, &mask, 10), 1);
    }

    #[test]
    fn straight_band_has_unit_ratio_and_arc_is_longer() {
        let grid = Grid::new(61, 61).unwrap();
        let (s, e) = ([0.0, 48.0], [48.0, 0.0]);
        let band = paint(&grid, |x, y| (x + y - 48.0).abs() <= 4.0);
        let r_band = arc_chord_ratio(&grid, &band, &fluid_mask(&band, 0.5), [0.0, 0.0], s, e, 24);
        assert!((r_band - 1.0).abs() < 0.01, "{r_band}");
        let ring = paint(&grid, |x, y| (x.hypot(y) - 48.0).abs() <= 4.0);
        let r_ring = arc_chord_ratio(&grid, &ring, &fluid_mask(&ring, 0.5), [0.0, 0.0], s, e, 24);
        let quarter = std::f64::consts::FRAC_PI_2 / std::f64::consts::SQRT_2;
        assert!((r_ring - quarter).abs() < 0.01, "{r_ring} vs {quarter}");
    }
}
