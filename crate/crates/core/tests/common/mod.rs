#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use repayfactor::{Category, FeatureMeta, FeatureTable, RowKey};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// n×p matrix whose columns are orthonormal and orthogonal to the ones vector.
pub fn centered_orthonormal(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    let mut m = normal_matrix(rng, n, p + 1);
    m.column_mut(0).fill(1.0);
    let q = m.qr().q();
    q.columns(1, p).into_owned()
}

/// Design with mean-zero columns and XᵀX/n = I.
pub fn orthonormal_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    centered_orthonormal(rng, n, p) * (n as f64).sqrt()
}

/// Sylvester Hadamard matrix scaled to be orthogonal; `p` a power of two.
pub fn hadamard(p: usize) -> DMatrix<f64> {
    assert!(p.is_power_of_two());
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < p {
        let k = h.nrows();
        let mut next = DMatrix::zeros(2 * k, 2 * k);
        next.view_mut((0, 0), (k, k)).copy_from(&h);
        next.view_mut((0, k), (k, k)).copy_from(&h);
        next.view_mut((k, 0), (k, k)).copy_from(&h);
        next.view_mut((k, k), (k, k)).copy_from(&(-&h));
        h = next;
    }
    h / (p as f64).sqrt()
}

/// n×p block whose sample correlation matrix has exactly the eigenvalues
/// `eig` (which must sum to p). Uses a Hadamard rotation so the implied
/// covariance has a unit diagonal.
pub fn planted_block(rng: &mut ChaCha8Rng, n: usize, eig: &[f64]) -> DMatrix<f64> {
    let p = eig.len();
    let w = centered_orthonormal(rng, n, p);
    let root = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(p, eig.iter().map(|l| l.sqrt())));
    w * root * hadamard(p).transpose() * ((n - 1) as f64).sqrt()
}

pub fn table(x: DMatrix<f64>, categories: &[Category]) -> FeatureTable {
    let metas = categories
        .iter()
        .enumerate()
        .map(|(j, &c)| FeatureMeta::numeric(format!("{}_{j}", c.label()), c))
        .collect();
    let keys = (0..x.nrows()).map(|i| RowKey::new(i.to_string(), 2010)).collect();
    FeatureTable::from_dense(x, metas, keys).unwrap()
}

pub fn single_category(x: DMatrix<f64>, c: Category) -> FeatureTable {
    let cats = vec![c; x.ncols()];
    table(x, &cats)
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut a = a.clone();
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    d.sort_by(|x, y| y.total_cmp(x));
    d
}

/// Sample covariance (denominator n−1).
pub fn sample_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let means = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &means;
    }
    c.transpose() * &c / (n - 1.0)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// n×p data whose sample covariance equals `cov` exactly (up to rounding).
pub fn with_covariance(rng: &mut ChaCha8Rng, n: usize, cov: &DMatrix<f64>) -> DMatrix<f64> {
    let l = cov.clone().cholesky().expect("positive definite").l();
    centered_orthonormal(rng, n, cov.nrows()) * l.transpose() * ((n - 1) as f64).sqrt()
}

/// Correlation matrix with eigenvalues {2, 0.9, 0.1}: two plane rotations of
/// diag(2, 0.9, 0.1) that bring every diagonal entry to 1.
pub fn rotated_correlation() -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.9, 0.1]));
    let givens = |a: usize, b: usize, c2: f64| {
        let (c, s) = (c2.sqrt(), (1.0 - c2).sqrt());
        let mut g = DMatrix::identity(3, 3);
        g[(a, a)] = c;
        g[(b, b)] = c;
        g[(a, b)] = -s;
        g[(b, a)] = s;
        g
    };
    // diag(2, 0.9) -> (1, 1.9), then diag(1.9, 0.1) -> (1, 1)
    let g1 = givens(0, 1, 0.1 / 1.1);
    let g2 = givens(1, 2, 0.5);
    let r = g2 * g1;
    &r * d * r.transpose()
}

/// Category sizes and planted retained counts of the 500-feature family.
pub const PLANTED_SIZES: [usize; 8] = [128, 128, 64, 64, 64, 32, 16, 4];
pub const PLANTED_COUNTS: [usize; 8] = [20, 15, 10, 8, 6, 3, 2, 1];

/// Spectrum of size p whose leading m eigenvalues carry 81% of the trace.
pub fn planted_spectrum(p: usize, m: usize) -> Vec<f64> {
    (0..p)
        .map(|i| if i < m { p as f64 * 0.81 / m as f64 } else { p as f64 * 0.19 / (p - m) as f64 })
        .collect()
}

/// 500-feature table over the eight predictor categories with planted
/// per-category spectra; at cutoff 0.8 exactly 65 components are retained.
pub fn planted_family(seed: u64, n: usize) -> FeatureTable {
    let mut r = rng(seed);
    let cats = &repayfactor::pca::CATEGORY_ORDER[..8];
    let total: usize = PLANTED_SIZES.iter().sum();
    let mut x = DMatrix::zeros(n, total);
    let mut labels = Vec::with_capacity(total);
    let mut offset = 0;
    for ((&c, &p), &m) in cats.iter().zip(&PLANTED_SIZES).zip(&PLANTED_COUNTS) {
        let block = planted_block(&mut r, n, &planted_spectrum(p, m));
        x.columns_mut(offset, p).copy_from(&block);
        labels.extend(std::iter::repeat_n(c, p));
        offset += p;
    }
    table(x, &labels)
}
