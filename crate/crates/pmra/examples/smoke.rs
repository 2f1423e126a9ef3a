//! Scratch driver for eyeballing the two cosine-filter configurations.
use pmra::pipeline::{analyze_filter, run_cascade, run_wavelets, PipelineOptions};
use pmra::presets;
use std::time::Instant;

fn main() {
    let opts = PipelineOptions::default();
    for (name, spec) in [
        ("rotation (det 4)", presets::cosine_spec_rotation()),
        ("det-2 candidate", presets::cosine_spec_det2()),
    ] {
        let t0 = Instant::now();
        let analysis = analyze_filter(&spec, &opts).unwrap();
        println!("== {name}: |J| = {}", analysis.j_box.len());
        println!("   radius bound: {:?}", analysis.radius_bound);
        println!("   raw leading: {}", analysis.raw_report.raw_leading);
        println!(
            "   raw top |eigs|: {:?}",
            analysis.raw_report.eigenvalues.iter().take(4).map(|z| z.norm()).collect::<Vec<_>>()
        );
        match &analysis.fixed {
            Ok(fp) => println!("   fixed: min {} at {:?}, cesaro {:.3e}", fp.min, fp.argmin, fp.cesaro_residual),
            Err(e) => println!("   fixed: ERR {e}"),
        }
        if let Some(r) = &analysis.normalized_report {
            println!("   normalized conditions: {:?} gap {:.4} qmf {:.3e}", r.conditions, r.gap, r.qmf_residual);
            println!("   theta residual {:?}", analysis.theta_residual);
            println!("   fixed symmetry defect {:?}", analysis.fixed_symmetry_defect);
        }
        println!("   analyze: {:?}", t0.elapsed());
        if analysis.passes() {
            let t1 = Instant::now();
            let cas = run_cascade(&analysis, &opts);
            println!("   cascade conv tail: {:?}", &cas.convergence[25..]);
            let wl = run_wavelets(&analysis, &cas, &opts).unwrap();
            println!("   probe history: {:?}", wl.probe.history);
            println!("   probe floor: {:.6e}", wl.probe.floor);
            match &wl.family {
                Ok(f) => {
                    println!("   wavelets: {} gram_residual {:.3e} ortho {:.3e}", f.count, f.gram_residual, f.scaling_ortho_residual);
                    let worst_sym = wl.symmetry.iter().map(|(_, _, r)| *r).fold(0.0, f64::max);
                    println!("   symmetry residual: {:.3e}", worst_sym);
                }
                Err(e) => println!("   family: ERR {e}"),
            }
            println!("   wavelets: {:?}", t1.elapsed());
        }
    }
}
