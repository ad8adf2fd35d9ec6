//! Library results checked against small independent reference
//! implementations written from the textbook definitions.

use approx::assert_abs_diff_eq;
use ppdr::classifier::svm_train;
use ppdr::dataset::{LabeledDataset, SplitSpec, Target};
use ppdr::evaluate::reference_table;
use ppdr::kernel::{mmd, ClassBank, KernelSpec};
use ppdr::linalg::{generalized_eig, symmetric_eig, Matrix};
use ppdr::scatter::compute_scatter;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi rotations. Returns eigenvalues (descending) and the
/// matching eigenvectors as columns.
fn jacobi_eig(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = Matrix::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
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
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Lower-triangular `L` with `L Lᵀ = b`.
fn cholesky_oracle(b: &Matrix) -> Matrix {
    let n = b.nrows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                l[(i, i)] = (b[(i, i)] - s).sqrt();
            } else {
                l[(i, j)] = (b[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    l
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, ridge: f64) -> Matrix {
    let g = Matrix::from_fn(n, n + 2, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + Matrix::identity(n, n) * ridge
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&g + g.transpose()) * 0.5
}

fn column_alignment(a: &Matrix, b: &Matrix, col: usize) -> f64 {
    let x = a.column(col);
    let y = b.column(col);
    x.dot(&y).abs() / (x.norm() * y.norm())
}

#[test]
fn symmetric_eig_matches_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=7 {
        let a = random_sym(&mut rng, n);
        let (values, vectors) = jacobi_eig(&a);
        let eig = symmetric_eig(&a).unwrap();
        for (i, want) in values.iter().enumerate() {
            assert_abs_diff_eq!(eig.values[i], *want, epsilon = 1e-10);
            assert!(column_alignment(&eig.vectors, &vectors, i) > 1.0 - 1e-8);
        }
    }
}

#[test]
fn generalized_eig_matches_reduced_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 2..=6 {
        let a = random_sym(&mut rng, n);
        let b = random_spd(&mut rng, n, 0.5);
        let l = cholesky_oracle(&b);
        let l_inv = l.clone().try_inverse().unwrap();
        let c = &l_inv * &a * l_inv.transpose();
        let (values, y) = jacobi_eig(&((&c + c.transpose()) * 0.5));
        let x = l_inv.transpose() * y;
        let eig = generalized_eig(&a, &b, n).unwrap();
        for (i, want) in values.iter().enumerate() {
            assert_abs_diff_eq!(eig.values[i], *want, epsilon = 1e-9);
            assert!(column_alignment(&eig.vectors, &x, i) > 1.0 - 1e-7);
        }
        let gram = eig.vectors.transpose() * &b * &eig.vectors;
        assert!((gram - Matrix::identity(n, n)).abs().max() < 1e-9);
    }
}

fn labeled(features: Matrix, labels: Vec<usize>) -> LabeledDataset {
    let n = features.nrows();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset {
        feature_names: (0..features.ncols()).map(|j| format!("f{j}")).collect(),
        features,
        targets: vec![Target {
            name: "y".into(),
            classes: (0..classes).map(|c| format!("c{c}")).collect(),
            labels,
        }],
        source_rows: (0..n).collect(),
        role: None,
    }
}

#[test]
fn scatter_matches_definitional_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, m, classes) = (40, 4, 3);
    let x = Matrix::from_fn(n, m, |_, _| rng.random_range(-5.0..5.0));
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let s = compute_scatter(&labeled(x.clone(), labels.clone()), "y").unwrap();

    let row = |i: usize| x.row(i).transpose();
    let mean = (0..n)
        .map(row)
        .fold(ppdr::linalg::Vector::zeros(m), |a, b| a + b)
        / n as f64;
    let mut within = Matrix::zeros(m, m);
    let mut between = Matrix::zeros(m, m);
    for c in 0..classes {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let mu = members
            .iter()
            .map(|&i| row(i))
            .fold(ppdr::linalg::Vector::zeros(m), |a, b| a + b)
            / members.len() as f64;
        for &i in &members {
            let d = row(i) - &mu;
            within += &d * d.transpose();
        }
        let d = &mu - &mean;
        between += (&d * d.transpose()) * members.len() as f64;
    }
    assert!((&s.within - &within).abs().max() < 1e-9);
    assert!((&s.between - &between).abs().max() < 1e-9);
}

fn rbf(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

fn mmd_oracle(x: &Matrix, y: &Matrix, sigma: f64) -> f64 {
    let rows = |m: &Matrix| {
        (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    let (xs, ys) = (rows(x), rows(y));
    let mean = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter()
            .flat_map(|p| b.iter().map(move |q| rbf(p, q, sigma)))
            .sum::<f64>()
            / (a.len() * b.len()) as f64
    };
    (mean(&xs, &xs) + mean(&ys, &ys) - 2.0 * mean(&xs, &ys))
        .max(0.0)
        .sqrt()
}

#[test]
fn mmd_matches_triple_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let x = Matrix::from_fn(7, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = Matrix::from_fn(5, 3, |_, _| rng.random_range(-0.5..1.5));
        let sigma = rng.random_range(0.3..2.0);
        assert_abs_diff_eq!(
            mmd(&KernelSpec::rbf(sigma), &x, &y).unwrap(),
            mmd_oracle(&x, &y, sigma),
            epsilon = 1e-12
        );
    }
}

#[test]
fn label_is_nearest_kernel_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let classes: Vec<Matrix> = (0..3)
        .map(|c| Matrix::from_fn(6, 2, |_, _| c as f64 + rng.random_range(-0.8..0.8)))
        .collect();
    let sigma = 0.7;
    let bank = ClassBank::new(KernelSpec::rbf(sigma), &classes).unwrap();
    for _ in 0..50 {
        let z = Matrix::from_fn(1, 2, |_, _| rng.random_range(-1.0..3.0));
        let dist: Vec<f64> = classes.iter().map(|c| mmd_oracle(&z, c, sigma)).collect();
        let nearest = (0..3).min_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap();
        assert_eq!(bank.label(z.as_slice()), nearest);
    }
}

#[test]
fn two_point_svm_has_closed_form_solution() {
    // Linear kernel, x₁ = 1 (y = +1), x₂ = −1 (y = −1): the maximum-margin
    // solution is α₁ = α₂ = 1/2, b = 0, so the decision function is f(x) = x.
    let x = Matrix::from_column_slice(2, 1, &[1.0, -1.0]);
    let svm = svm_train(&x, &[1.0, -1.0], KernelSpec::Linear, 10.0, 1e-9, None).unwrap();
    let grid = Matrix::from_column_slice(3, 1, &[-2.0, 0.5, 3.0]);
    let f = svm.decision(&grid).unwrap();
    for (got, want) in f.iter().zip([-2.0, 0.5, 3.0]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-8);
    }
}

#[test]
fn split_counts_match_published_sizes() {
    // HAR: 20 rows per (ADL, ID) pair over 6 × 30 pairs.
    assert_eq!(SplitSpec::two_one_two(20, 0).totals(180), [1440, 720, 1440]);
    // Census: 750 rows per (income, gender) pair over 2 × 2 pairs.
    assert_eq!(SplitSpec::two_one_two(750, 0).totals(4), [1200, 600, 1200]);
    // Bank: 410 rows per (marketing, marital) pair over 2 × 3 pairs.
    assert_eq!(
        SplitSpec::two_one_two(410, 0)
            .totals(6)
            .iter()
            .sum::<usize>(),
        2460
    );
}

#[test]
fn reference_cells_match_published_tables() {
    let t1 = reference_table(1).unwrap();
    assert_eq!(t1.k, 5);
    assert_eq!(t1.rows[5].values, [96.11, 94.31, 21.11, 3.75]);
    assert_eq!(t1.rows[13].values, [87.50, 86.11, 12.08, 3.33]);
    assert_eq!(reference_table(2).unwrap().rows[5].values[1], 75.33);
    assert_eq!(
        reference_table(3).unwrap().rows[0].values,
        [87.33, 73.50, 84.50, 50.00]
    );
    assert_eq!(reference_table(4).unwrap().rows[5].values[1], 81.30);
}
