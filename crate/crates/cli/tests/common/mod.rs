//! Brute-force reference implementations used by the acceptance tests.
#![allow(dead_code)]

use scenealign::environment::NavigabilityMap;
use scenealign::mrf::SceneMrf;
use scenealign::Trajectory;

/// Exact joint distribution of an MRF by enumerating every assignment, in
/// mixed-radix order (agent 0 varies slowest).
pub fn exact_joint(mrf: &SceneMrf) -> Vec<f64> {
    let ks: Vec<usize> = mrf.unary.iter().map(Vec::len).collect();
    let total: usize = ks.iter().product();
    let mut log_p = Vec::with_capacity(total);
    for idx in 0..total {
        let a = decode(idx, &ks);
        let mut e = 0.0;
        for (i, &s) in a.iter().enumerate() {
            e += mrf.unary[i][s];
        }
        for edge in &mrf.edges {
            e += edge.table.get(a[edge.i], a[edge.j]);
        }
        log_p.push(e);
    }
    let max = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_p.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

pub fn decode(mut idx: usize, ks: &[usize]) -> Vec<usize> {
    let mut a = vec![0; ks.len()];
    for i in (0..ks.len()).rev() {
        a[i] = idx % ks[i];
        idx /= ks[i];
    }
    a
}

pub fn encode(a: &[usize], ks: &[usize]) -> usize {
    a.iter().zip(ks).fold(0, |acc, (s, k)| acc * k + s)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn pts(t: &Trajectory) -> Vec<(f64, f64)> {
    t.points().iter().map(|p| (p.x, p.y)).collect()
}

/// `(ade, fde)` of one trajectory.
fn ade_fde(p: &Trajectory, g: &Trajectory) -> (f64, f64) {
    let (p, g) = (pts(p), pts(g));
    let d: Vec<f64> = p.iter().zip(&g).map(|(a, b)| dist(*a, *b)).collect();
    (d.iter().sum::<f64>() / d.len() as f64, *d.last().unwrap())
}

pub struct OracleMetrics {
    pub min_ade: f64,
    pub min_fde: f64,
    pub jade: f64,
    pub jfde: f64,
    pub avg_ade: f64,
    pub avg_fde: f64,
    pub a2a_rate: f64,
    pub env_rate: f64,
    pub kde_nll: f64,
}

/// `preds[sample][agent]`.
pub fn oracle_metrics(gt: &[Trajectory], preds: &[Vec<Trajectory>], map: &NavigabilityMap, thr: f64) -> OracleMetrics {
    let n = gt.len();
    let k = preds.len();
    let mut m = OracleMetrics {
        min_ade: 0.0,
        min_fde: 0.0,
        jade: f64::MAX,
        jfde: f64::MAX,
        avg_ade: 0.0,
        avg_fde: 0.0,
        a2a_rate: 0.0,
        env_rate: 0.0,
        kde_nll: 0.0,
    };
    for a in 0..n {
        let mut best_ade = f64::MAX;
        let mut best_fde = f64::MAX;
        for s in preds {
            let (ade, fde) = ade_fde(&s[a], &gt[a]);
            best_ade = best_ade.min(ade);
            best_fde = best_fde.min(fde);
            m.avg_ade += ade / (n * k) as f64;
            m.avg_fde += fde / (n * k) as f64;
        }
        m.min_ade += best_ade / n as f64;
        m.min_fde += best_fde / n as f64;
    }
    for s in preds {
        let mut ja = 0.0;
        let mut jf = 0.0;
        for a in 0..n {
            let (ade, fde) = ade_fde(&s[a], &gt[a]);
            ja += ade;
            jf += fde;
        }
        m.jade = m.jade.min(ja / n as f64);
        m.jfde = m.jfde.min(jf / n as f64);
    }

    let mut collided = 0usize;
    let mut off_map = 0usize;
    for s in preds {
        for a in 0..n {
            let mine = pts(&s[a]);
            let hit = (0..n).filter(|&b| b != a).any(|b| {
                let other = pts(&s[b]);
                mine.iter().zip(&other).any(|(p, q)| dist(*p, *q) < thr)
            });
            collided += hit as usize;
            let o = map.origin();
            let r = map.resolution();
            let bad = mine.iter().any(|&(x, y)| {
                let cx = ((x - o.x) / r).floor();
                let cy = ((y - o.y) / r).floor();
                cx < 0.0
                    || cy < 0.0
                    || cx >= map.width() as f64
                    || cy >= map.height() as f64
                    || !map.cell(cx as usize, cy as usize)
            });
            off_map += bad as usize;
        }
    }
    m.a2a_rate = collided as f64 / (n * k) as f64;
    m.env_rate = off_map as f64 / (n * k) as f64;

    // Product-kernel Gaussian KDE evaluated as a plain density.
    // (4 / (d + 2))^(1/6) is 1 for d = 2.
    let c = (k as f64).powf(-1.0 / 6.0);
    let sd = |v: &[f64]| -> f64 {
        if v.len() < 2 {
            return 0.0;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    for a in 0..n {
        let g = pts(&gt[a]);
        let mut acc = 0.0;
        for (t, &(gx, gy)) in g.iter().enumerate() {
            let xs: Vec<f64> = preds.iter().map(|s| pts(&s[a])[t].0).collect();
            let ys: Vec<f64> = preds.iter().map(|s| pts(&s[a])[t].1).collect();
            let hx = (c * sd(&xs)).max(1e-3);
            let hy = (c * sd(&ys)).max(1e-3);
            let mut dens = 0.0;
            for (x, y) in xs.iter().zip(&ys) {
                let kx = (-0.5 * ((gx - x) / hx).powi(2)).exp() / (hx * (2.0 * std::f64::consts::PI).sqrt());
                let ky = (-0.5 * ((gy - y) / hy).powi(2)).exp() / (hy * (2.0 * std::f64::consts::PI).sqrt());
                dens += kx * ky;
            }
            acc += -(dens / k as f64).ln();
        }
        m.kde_nll += acc / g.len() as f64 / n as f64;
    }
    m
}

/// Singular values by one-sided (Hestenes) Jacobi on the columns of `rows`.
/// Works on the matrix itself, so tiny singular values stay accurate.
pub fn singular_values(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = rows.len();
    let n = rows[0].len();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(a, b)| a * b).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (a, b) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * a - s * b;
                    cols[q][i] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Frobenius residual of the best rank-`d` approximation of `rows`.
pub fn truncated_svd_residual(rows: &[Vec<f64>], d: usize) -> f64 {
    singular_values(rows)[d..].iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Whether some joint choice of prototypes keeps every pair at least `thr`
/// apart, by backtracking over raw trajectories.
pub fn collision_free_assignment_exists(sets: &[Vec<Trajectory>], thr: f64) -> bool {
    fn clear(a: &Trajectory, b: &Trajectory, thr: f64) -> bool {
        a.points().iter().zip(b.points()).all(|(p, q)| p.distance(q) >= thr)
    }
    fn go(sets: &[Vec<Trajectory>], chosen: &mut Vec<usize>, thr: f64) -> bool {
        let i = chosen.len();
        if i == sets.len() {
            return true;
        }
        for s in 0..sets[i].len() {
            if chosen.iter().enumerate().all(|(j, &c)| clear(&sets[i][s], &sets[j][c], thr)) {
                chosen.push(s);
                if go(sets, chosen, thr) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    go(sets, &mut Vec::new(), thr)
}

/// Ordinary least squares fit `y = a + b x`, returning R².
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|yi| (yi - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}
