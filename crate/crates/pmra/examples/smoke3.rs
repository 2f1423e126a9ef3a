//! Isolate the Hermitian eigen reconstruction on the failing matrix.
use nalgebra::DMatrix;
use pmra::C64;

fn main() {
    let e = |re: f64, im: f64| C64::new(re, im);
    let g = DMatrix::from_row_slice(3, 3, &[
        e(7.61208105550011283e-1, 0.0), e(9.54435320887378064e-2, -7.66978919871693365e-2), e(2.82304846711695923e-2, -2.29638171925756925e-2),
        e(9.54435320887378064e-2, 7.66978919871693365e-2), e(5.55847574733899508e-2, 0.0), e(4.55102306903809317e-2, -3.07455343258887445e-2),
        e(2.82304846711695923e-2, 2.29638171925756925e-2), e(4.55102306903809317e-2, 3.07455343258887445e-2), e(5.19999874372113147e-1, 0.0),
    ]);
    // embed
    let m = 3;
    let mut emb = DMatrix::<f64>::zeros(6, 6);
    for i in 0..3 {
        for j in 0..3 {
            emb[(i, j)] = g[(i, j)].re;
            emb[(i, j + 3)] = -g[(i, j)].im;
            emb[(i + 3, j)] = g[(i, j)].im;
            emb[(i + 3, j + 3)] = g[(i, j)].re;
        }
    }
    let se = nalgebra::SymmetricEigen::new(emb.clone());
    println!("embedded eigenvalues: {:?}", se.eigenvalues.as_slice());
    // residual of each embedded eigenpair
    for k in 0..6 {
        let v = se.eigenvectors.column(k);
        let r = (&emb * v - v * se.eigenvalues[k]).norm();
        println!("  k={k} lambda={:.12e} residual={:.3e}", se.eigenvalues[k], r);
    }
    let _ = m;
}
