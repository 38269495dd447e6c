//! Nelder–Mead simplex minimization.

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with an initial simplex spanned by `step` along
/// each coordinate. Stops after `max_iters` iterations, or once the spread of
/// objective values is at most `tol` and the simplex has contracted to a
/// thousandth of its initial size.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], max_iters: usize, tol: f64) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    if n == 0 {
        return Minimum {
            x: vec![],
            f: f(x0),
            iterations: 0,
            converged: true,
        };
    }
    let step_max = step.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let xtol = 1e-3 * step_max.max(1e-12);

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if step[i] != 0.0 { step[i] } else { 1e-6 };
        pts.push(x);
    }
    let mut vals: Vec<f64> = pts.iter().map(|x| f(x)).collect();
    let mut order: Vec<usize> = (0..=n).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let best = order[0];
        let worst = order[n];
        let second = order[n - 1];

        let spread = vals[worst] - vals[best];
        let diam = pts
            .iter()
            .map(|x| {
                x.iter()
                    .zip(&pts[best])
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0f64, f64::max);
        if spread <= tol && diam <= xtol {
            converged = true;
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..n] {
            for (c, v) in centroid.iter_mut().zip(&pts[i]) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= n as f64);

        let along = |coef: f64, out: &mut Vec<f64>, w: &[f64], c: &[f64]| {
            for j in 0..n {
                out[j] = c[j] + coef * (w[j] - c[j]);
            }
        };

        along(-1.0, &mut trial, &pts[worst], &centroid);
        let fr = f(&trial);
        if fr < vals[best] {
            along(-2.0, &mut trial2, &pts[worst], &centroid);
            let fe = f(&trial2);
            if fe < fr {
                pts[worst].copy_from_slice(&trial2);
                vals[worst] = fe;
            } else {
                pts[worst].copy_from_slice(&trial);
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst].copy_from_slice(&trial);
            vals[worst] = fr;
            continue;
        }
        let accepted = if fr < vals[worst] {
            along(-0.5, &mut trial2, &pts[worst], &centroid);
            let fc = f(&trial2);
            if fc <= fr {
                pts[worst].copy_from_slice(&trial2);
                vals[worst] = fc;
                true
            } else {
                false
            }
        } else {
            along(0.5, &mut trial2, &pts[worst], &centroid);
            let fc = f(&trial2);
            if fc < vals[worst] {
                pts[worst].copy_from_slice(&trial2);
                vals[worst] = fc;
                true
            } else {
                false
            }
        };
        if !accepted {
            let xb = pts[best].clone();
            for i in 0..=n {
                if i == best {
                    continue;
                }
                for (v, b) in pts[i].iter_mut().zip(&xb) {
                    *v = b + 0.5 * (*v - b);
                }
                vals[i] = f(&pts[i]);
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Minimum {
        x: pts[best].clone(),
        f: vals[best],
        iterations,
        converged,
    }
}
