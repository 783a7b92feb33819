//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Gram matrix `AᵀA/(d+4)` of a `(d+4) × d` Gaussian matrix.
pub fn random_gram(seed: u64, d: usize) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let a = gaussian_matrix(&mut rng, d + 4, d);
    a.tr_mul(&a) / (d + 4) as f64
}

/// `k` Gaussian sites sharing one coefficient vector with a rotating third
/// of its entries zeroed per site.
pub fn multi_site_instance(seed: u64, k: usize, n: usize, p: usize) -> Vec<poolcheck::SiteDataset> {
    let mut rng = rng(seed);
    let beta = gaussian_vector(&mut rng, p);
    (0..k)
        .map(|i| {
            let x = gaussian_matrix(&mut rng, n, p);
            let mut b = beta.clone();
            for j in 0..p {
                if j % 3 == i % 3 {
                    b[j] = 0.0;
                }
            }
            let y = &x * &b + gaussian_vector(&mut rng, n);
            poolcheck::SiteDataset::from_xy(format!("s{i}"), x, y).unwrap()
        })
        .collect()
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9.
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = C[0];
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `I_ν(z)` by its power series, summed in log space.
pub fn bessel_i(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    let lh = (0.5 * z).ln();
    let mut sum = 0.0;
    let mut m = 0.0;
    loop {
        let term = ((2.0 * m + nu) * lh - ln_gamma(m + 1.0) - ln_gamma(m + nu + 1.0)).exp();
        sum += term;
        if m > 0.5 * z && term < 1e-17 * sum {
            break;
        }
        m += 1.0;
    }
    sum
}

/// Non-central χ² density through the Bessel form.
pub fn ncx2_pdf_bessel(x: f64, df: f64, ncp: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if ncp == 0.0 {
        let k = 0.5 * df;
        return ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp();
    }
    let z = (ncp * x).sqrt();
    let nu = 0.5 * df - 1.0;
    (-(x + ncp) / 2.0 + (0.25 * df - 0.5) * (x / ncp).ln() + bessel_i(nu, z).ln()).exp() * 0.5
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    adaptive(f, a, fa, b, fb, m, fm, whole, tol, 60)
}

/// 50 `(x, df, ncp)` points spanning small and moderate degrees of freedom
/// and non-centralities, with `x` on both sides of the mean.
pub fn oracle_grid() -> Vec<(f64, f64, f64)> {
    let mut grid = Vec::new();
    for &df in &[1.0, 2.0, 3.0, 6.0, 15.0] {
        for &ncp in &[0.0, 0.5, 1.0, 4.0, 20.0] {
            for &f in &[0.4, 1.6] {
                grid.push((f * (df + ncp), df, ncp));
            }
        }
    }
    grid
}

/// Non-central χ² CDF by quadrature of the Bessel density in `u = √x`,
/// which removes the integrable singularity at zero for `df < 2`.
pub fn ncx2_cdf_quadrature(x: f64, df: f64, ncp: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let g = |u: f64| if u <= 0.0 { 0.0 } else { 2.0 * u * ncx2_pdf_bessel(u * u, df, ncp) };
    let top = x.sqrt();
    let pieces = 16;
    (0..pieces)
        .map(|i| {
            let a = top * i as f64 / pieces as f64;
            let b = top * (i + 1) as f64 / pieces as f64;
            integrate(&g, a, b, 1e-14)
        })
        .sum()
}

/// `argmin ½‖x − v‖² + t1‖x‖₁ + t2‖x‖₂` by ADMM, splitting the two penalties
/// and applying each one's own prox.
pub fn prox_admm(v: &[f64], t1: f64, t2: f64) -> Vec<f64> {
    let n = v.len();
    let rho = 1.0;
    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut x = vec![0.0; n];
    for _ in 0..200_000 {
        for i in 0..n {
            let w = (v[i] + rho * (z[i] - u[i])) / (1.0 + rho);
            let t = t1 / (1.0 + rho);
            x[i] = if w > t { w - t } else if w < -t { w + t } else { 0.0 };
        }
        let w: Vec<f64> = (0..n).map(|i| x[i] + u[i]).collect();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = if norm <= t2 / rho { 0.0 } else { 1.0 - t2 / (rho * norm) };
        let z_old = z.clone();
        for i in 0..n {
            z[i] = scale * w[i];
            u[i] += x[i] - z[i];
        }
        let primal: f64 = (0..n).map(|i| (x[i] - z[i]).powi(2)).sum::<f64>().sqrt();
        let dual: f64 = (0..n).map(|i| (z[i] - z_old[i]).powi(2)).sum::<f64>().sqrt();
        if primal < 1e-13 && dual < 1e-13 {
            break;
        }
    }
    z
}

pub fn prox_objective(x: &[f64], v: &[f64], t1: f64, t2: f64) -> f64 {
    let fit: f64 = x.iter().zip(v).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    let l1: f64 = x.iter().map(|a| a.abs()).sum();
    let l2: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    fit + t1 * l1 + t2 * l2
}

/// Multi-task group Lasso `Σᵢ‖yᵢ − Xᵢbᵢ‖² + μ Σⱼ‖B₍·ⱼ₎‖₂` by exact block
/// coordinate descent over columns of `B` (`k × p`).
pub fn group_lasso_bcd(xs: &[DMatrix<f64>], ys: &[DVector<f64>], mu: f64, sweeps: usize) -> DMatrix<f64> {
    let k = xs.len();
    let p = xs[0].ncols();
    let mut b = DMatrix::<f64>::zeros(k, p);
    let mut r: Vec<DVector<f64>> = ys.to_vec();
    let col_sq: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| x.column_iter().map(|c| c.norm_squared()).collect())
        .collect();
    for _ in 0..sweeps {
        let mut change = 0.0f64;
        for j in 0..p {
            // Partial residual correlations with b₍·ⱼ₎ removed.
            let a: Vec<f64> = (0..k).map(|i| col_sq[i][j]).collect();
            let c: Vec<f64> = (0..k)
                .map(|i| xs[i].column(j).dot(&r[i]) + a[i] * b[(i, j)])
                .collect();
            let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let new: Vec<f64> = if 2.0 * cn <= mu {
                vec![0.0; k]
            } else {
                // bᵢ = cᵢ / (aᵢ + μ/(2s)) with s = ‖b‖ solving s = ‖b(s)‖.
                let norm_at = |s: f64| -> f64 {
                    (0..k)
                        .map(|i| (c[i] / (a[i] + mu / (2.0 * s))).powi(2))
                        .sum::<f64>()
                        .sqrt()
                };
                let (mut lo, mut hi) = (0.0f64, cn / a.iter().cloned().fold(f64::INFINITY, f64::min));
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if norm_at(mid) > mid {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let s = 0.5 * (lo + hi);
                (0..k).map(|i| c[i] / (a[i] + mu / (2.0 * s))).collect()
            };
            for i in 0..k {
                let d = new[i] - b[(i, j)];
                if d != 0.0 {
                    r[i].axpy(-d, &xs[i].column(j), 1.0);
                    change = change.max(d.abs());
                    b[(i, j)] = new[i];
                }
            }
        }
        if change < 1e-13 {
            break;
        }
    }
    b
}

/// All `m`-subsets of `0..p` in lexicographic order.
pub fn subsets(p: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, p: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for j in start..p {
            cur.push(j);
            rec(j + 1, p, m, cur, out);
            cur.pop();
        }
    }
    rec(0, p, m, &mut cur, &mut out);
    out
}
