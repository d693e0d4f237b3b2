use crate::geometry::vec::dot;

/// Minimum-norm point of the convex hull of `points`, with its barycentric
/// weights. Frank-Wolfe with away steps; exact enough for membership tests
/// and steepest-ascent directions of max/min families.
pub fn min_norm_point(points: &[Vec<f64>], iters: usize, tol: f64) -> (Vec<f64>, Vec<f64>) {
    let m = points.len();
    assert!(m > 0, "min_norm_point needs at least one point");
    let dim = points[0].len();
    let gram: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| dot(a, b)).collect()).collect();
    let start = (0..m).min_by(|&a, &b| gram[a][a].total_cmp(&gram[b][b])).unwrap_or(0);
    let mut w = vec![0.0; m];
    w[start] = 1.0;
    // g = G w, so <x, p_k> = g[k] and |x|^2 = <w, g>
    let mut g: Vec<f64> = (0..m).map(|k| gram[k][start]).collect();
    for _ in 0..iters {
        let xx: f64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
        let (fw, &gmin) = g.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let away = (0..m)
            .filter(|&k| w[k] > 0.0)
            .max_by(|&a, &b| g[a].total_cmp(&g[b]))
            .unwrap();
        let fw_gap = xx - gmin;
        let away_gap = g[away] - xx;
        if fw_gap <= tol * tol.max(xx) && fw_gap <= tol {
            break;
        }
        if fw_gap >= away_gap {
            // move toward vertex fw: x + s (p_fw - x)
            let denom = xx - 2.0 * gmin + gram[fw][fw];
            if denom <= 0.0 {
                break;
            }
            let s = (fw_gap / denom).clamp(0.0, 1.0);
            for k in 0..m {
                w[k] *= 1.0 - s;
                g[k] *= 1.0 - s;
            }
            w[fw] += s;
            for k in 0..m {
                g[k] += s * gram[k][fw];
            }
        } else {
            let wa = w[away];
            let max_s = wa / (1.0 - wa).max(1e-300);
            let denom = xx - 2.0 * g[away] + gram[away][away];
            if denom <= 0.0 {
                break;
            }
            let s = (away_gap / denom).clamp(0.0, max_s);
            for k in 0..m {
                w[k] *= 1.0 + s;
                g[k] *= 1.0 + s;
            }
            w[away] -= s;
            for k in 0..m {
                g[k] -= s * gram[k][away];
            }
            if w[away] < 1e-15 {
                w[away] = 0.0;
            }
        }
    }
    let mut x = vec![0.0; dim];
    for (wk, p) in w.iter().zip(points) {
        for (xi, pi) in x.iter_mut().zip(p) {
            *xi += wk * pi;
        }
    }
    (x, w)
}

/// Euclidean distance from `y` to the hull of `points`.
pub fn hull_distance(points: &[Vec<f64>], y: &[f64]) -> f64 {
    let shifted: Vec<Vec<f64>> = points.iter().map(|p| p.iter().zip(y).map(|(a, b)| a - b).collect()).collect();
    let (x, _) = min_norm_point(&shifted, 2000, 1e-14);
    dot(&x, &x).sqrt()
}

/// True when a separating hyperplane between `y` and the hull is found.
/// Never true for `y` in the hull.
pub fn hull_separates(points: &[Vec<f64>], y: &[f64]) -> bool {
    let shifted: Vec<Vec<f64>> = points.iter().map(|p| p.iter().zip(y).map(|(a, b)| a - b).collect()).collect();
    let (x, _) = min_norm_point(&shifted, 2000, 1e-14);
    shifted.iter().map(|p| dot(p, &x)).fold(f64::INFINITY, f64::min) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_and_triangle() {
        let (x, _) = min_norm_point(&[vec![1.0, -1.0], vec![1.0, 1.0]], 100, 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12);
        let tri = vec![vec![-1.0, -1.0], vec![2.0, -1.0], vec![-1.0, 2.0]];
        assert!(hull_distance(&tri, &[0.0, 0.0]) < 1e-7);
        assert!((hull_distance(&tri, &[2.0, 2.0]) - (1.5f64).hypot(1.5) + 0.0).abs() < 1e-7);
    }
}
