use nalgebra::DMatrix;
use osstokes::eigsolve::{shift_invert_arnoldi, shift_invert_arnoldi_grouped, EigenOptions};
use osstokes::sparse::CsrMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &r * r.transpose() + DMatrix::identity(n, n) * 0.5
}

#[test]
fn random_symmetric_definite_pencil_matches_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 50;
    let a = random_spd(n, &mut rng);
    let m = random_spd(n, &mut rng);
    // Reference: eigenvalues of L⁻¹ A L⁻ᵀ with M = L Lᵀ.
    let l = m.clone().cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    let c = &li * &a * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut want: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
    want.sort_by(f64::total_cmp);

    let k = 6;
    let s = shift_invert_arnoldi(
        &CsrMatrix::from_dense(&a, 0.0),
        &CsrMatrix::from_dense(&m, 0.0),
        0.0,
        k,
        1e-11,
        100,
    )
    .unwrap();
    for (got, want) in s.eigenvalues().iter().zip(&want) {
        assert!(((got - want) / want).abs() < 1e-8, "{got} vs {want}");
    }
    // Distinct eigenvalues of a symmetric pencil have M-orthogonal vectors.
    let md = CsrMatrix::from_dense(&m, 0.0);
    for i in 0..k {
        for j in 0..k {
            let xi = &s.pairs[i].vector;
            let xj = &s.pairs[j].vector;
            let mxj = md.matvec(xj).unwrap();
            let g: f64 = xi.iter().zip(&mxj).map(|(a, b)| a * b).sum();
            let ni: f64 = xi.iter().zip(&md.matvec(xi).unwrap()).map(|(a, b)| a * b).sum::<f64>().sqrt();
            let nj: f64 = xj.iter().zip(&mxj).map(|(a, b)| a * b).sum::<f64>().sqrt();
            if i != j {
                assert!((g / (ni * nj)).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn near_double_cluster_is_resolved() {
    let mut d: Vec<f64> = (0..200).map(|i| 10.0 + i as f64).collect();
    d[3] = 12.0 + 1e-6 * 12.0;
    d[2] = 12.0;
    let a = CsrMatrix::diagonal(&d);
    let m = CsrMatrix::identity(200);
    let mut opts = EigenOptions::new(5);
    opts.tol = 1e-12;
    let s = shift_invert_arnoldi_grouped(&a, &m, None, &opts).unwrap();
    let l = s.eigenvalues();
    assert!((l[2] - 12.0).abs() < 1e-9 && (l[3] - 12.000012).abs() < 1e-9);
    let overlap: f64 = s.pairs[2].vector.iter().zip(&s.pairs[3].vector).map(|(a, b)| a * b).sum();
    assert!(overlap.abs() < 1e-6);
}

#[test]
fn singular_mass_block_pencil() {
    // Saddle point [[K, Bᵀ],[B, 0]] with mass on the first block only.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (nu, np) = (40, 10);
    let k = random_spd(nu, &mut rng);
    let b = DMatrix::from_fn(np, nu, |_, _| rng.random_range(-1.0..1.0));
    let mut a = DMatrix::zeros(nu + np, nu + np);
    a.view_mut((0, 0), (nu, nu)).copy_from(&k);
    a.view_mut((0, nu), (nu, np)).copy_from(&b.transpose());
    a.view_mut((nu, 0), (np, nu)).copy_from(&b);
    let mut m = DMatrix::zeros(nu + np, nu + np);
    m.view_mut((0, 0), (nu, nu)).fill_with_identity();

    // Reference: nonzero eigenvalues of the velocity block of A⁻¹ are 1/λ.
    let ai = a.clone().try_inverse().unwrap();
    let t = ai.view((0, 0), (nu, nu)).into_owned();
    let t = (&t + t.transpose()) * 0.5;
    let mut want: Vec<f64> = t
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .filter(|v| v.abs() > 1e-10)
        .map(|v| 1.0 / v)
        .collect();
    want.sort_by(f64::total_cmp);
    assert_eq!(want.len(), nu - np);

    let s = shift_invert_arnoldi(&CsrMatrix::from_dense(&a, 0.0), &CsrMatrix::from_dense(&m, 0.0), 0.0, 4, 1e-10, 100)
        .unwrap();
    for (got, want) in s.eigenvalues().iter().zip(&want) {
        assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn diagonal_pencils_return_smallest(mut d in prop::collection::vec(0.5f64..100.0, 5..60), k in 1usize..4) {
        let n = d.len();
        let s = shift_invert_arnoldi(&CsrMatrix::diagonal(&d), &CsrMatrix::identity(n), 0.0, k, 1e-9, 200).unwrap();
        d.sort_by(f64::total_cmp);
        let got = s.eigenvalues();
        for i in 0..k {
            prop_assert!((got[i] - d[i]).abs() <= 1e-8 * d[i]);
        }
        for p in &s.pairs {
            let norm: f64 = p.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}
