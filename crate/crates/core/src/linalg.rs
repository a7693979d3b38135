//! Restarted GMRES for the dense-by-FFT linear operators used by the solvers.

#[derive(Debug, Clone)]
pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final residual relative to `||b||`.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` by GMRES(restart) with modified Gram-Schmidt and Givens
/// rotations, starting from `x0`.
pub(crate) fn gmres(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Vec<f64>,
    restart: usize,
    tol: f64,
    max_iter: usize,
) -> GmresOutcome {
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = x0;
    let mut iterations = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = norm(&r);
        if beta / bnorm <= tol || iterations >= max_iter {
            return GmresOutcome {
                x,
                iterations,
                relative_residual: beta / bnorm,
            };
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let (mut cs, mut sn): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        let mut g = vec![beta];
        let mut k = 0;
        while k < restart && iterations < max_iter {
            let mut w = apply(&basis[k]);
            let mut col = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                col[i] = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(a, b)| *a -= col[i] * b);
            }
            col[k + 1] = norm(&w);
            for i in 0..k {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[k].hypot(col[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (col[k] / denom, col[k + 1] / denom) };
            let hk1 = col[k + 1];
            col[k] = c * col[k] + s * hk1;
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[k]);
            g[k] *= c;
            h.push(col);
            iterations += 1;
            k += 1;
            let breakdown = hk1 <= 1e-300;
            if g[k].abs() / bnorm <= tol || breakdown {
                break;
            }
            basis.push(w.iter().map(|v| v / hk1).collect());
        }
        // back substitution on the k x k upper-triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (yi, v) in y.iter().zip(&basis) {
            x.iter_mut().zip(v).for_each(|(a, b)| *a += yi * b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 40;
        let apply = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| 3.0 * x[i] + 0.7 * x[(i + 1) % n] - 0.4 * x[(i + n - 3) % n])
                .collect()
        };
        let truth: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = apply(&truth);
        let out = gmres(apply, &b, vec![0.0; n], 10, 1e-13, 1000);
        assert!(out.relative_residual <= 1e-13);
        for (a, t) in out.x.iter().zip(&truth) {
            assert!((a - t).abs() < 1e-11);
        }
    }
}
