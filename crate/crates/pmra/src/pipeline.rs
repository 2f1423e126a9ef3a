//! End-to-end orchestration: filter analysis, cascade, wavelet family.

use crate::cascade::{scaling_function, CascadeResult};
use crate::torusfn::LaurentPoly;
use crate::transfer::{
    fixed_point, invariant_box, normalize_filter, spectral_check, theta_conjugation_residual,
    transfer_matrix, Filter, FilterSpec, FixedPoint, FixedPointOptions, NormalizedFilter,
    SpectralOptions, SpectralReport, TransferError, TransferMatrixRep,
};
use crate::waveletgen::{
    obstruction_probe, orthonormalize, polyphase, symmetry_check, PolyphaseVector, ProbeOptions,
    ProbeResult, WaveletError, WaveletFamily,
};
use crate::C64;
use std::sync::Arc;

#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    pub spectral: SpectralOptions,
    pub fixed_point: FixedPointOptions,
    pub depth: usize,
    pub grid: usize,
    pub bracket_radius: usize,
    pub seed: u64,
    pub probe_draws: usize,
    pub gram_floor: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            spectral: SpectralOptions::default(),
            fixed_point: FixedPointOptions::default(),
            depth: 30,
            grid: 64,
            bracket_radius: 64,
            seed: 0x70617261,
            probe_draws: 200,
            gram_floor: 1e-6,
        }
    }
}

/// Spectral analysis of one filter configuration: the invariant box, the
/// restricted operator, raw and normalized verdicts, and the normalized
/// filter when the fixed vector is uniformly positive.
pub struct FilterAnalysis {
    pub spec: FilterSpec,
    pub j_box: Vec<Vec<i64>>,
    pub radius_bound: Option<f64>,
    pub rep: TransferMatrixRep,
    pub raw_report: SpectralReport,
    pub fixed: Result<FixedPoint, TransferError>,
    pub normalized: Option<Arc<NormalizedFilter>>,
    pub normalized_report: Option<SpectralReport>,
    pub theta_residual: Option<f64>,
    /// Exactness defect of the coefficient-level symmetry of the raw
    /// filter, and of the fixed vector, under each group generator.
    pub raw_symmetry_exact: bool,
    pub fixed_symmetry_defect: Option<f64>,
}

impl FilterAnalysis {
    /// All five conditions hold for the normalized filter.
    pub fn passes(&self) -> bool {
        self.normalized_report
            .as_ref()
            .map(|r| r.all_conditions())
            .unwrap_or(false)
    }
}

fn radius_bound(m: &LaurentPoly, spec: &FilterSpec) -> Option<f64> {
    let at_inv = spec.dilation.inv_f64().transpose();
    let mtm = at_inv.transpose() * &at_inv;
    let op = mtm
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .sqrt();
    if op >= 1.0 {
        return None;
    }
    let supp: Vec<&Vec<i64>> = m.support().collect();
    let mut vmax = 0.0f64;
    for s in &supp {
        for t in &supp {
            let norm: f64 = s
                .iter()
                .zip(t.iter())
                .map(|(&a, &b)| ((a - b) * (a - b)) as f64)
                .sum::<f64>()
                .sqrt();
            vmax = vmax.max(norm);
        }
    }
    Some(op * vmax / (1.0 - op) + 1.0)
}

pub fn analyze_filter(
    spec: &FilterSpec,
    opts: &PipelineOptions,
) -> Result<FilterAnalysis, TransferError> {
    let m = &spec.m_prime;
    let a = &spec.dilation;
    let j_box = invariant_box(m, a)?;
    let rep = transfer_matrix(m, &j_box, a)?;
    let raw_report = spectral_check(spec, &rep, m, &opts.spectral);
    let fixed = fixed_point(&rep, &opts.fixed_point);
    // coefficient-level symmetry of the raw filter
    let raw_symmetry_exact = spec
        .symmetry
        .elements()
        .iter()
        .all(|h| m.compose_int(h) == *m);
    let (normalized, normalized_report, theta_residual, fixed_symmetry_defect) = match &fixed {
        Ok(fp) => {
            let nf = Arc::new(normalize_filter(m, fp, a));
            let nrep = spectral_check(spec, &rep, nf.as_ref(), &opts.spectral);
            let probe = LaurentPoly::from_scalar_terms(
                a.dim(),
                &[
                    (vec![0; a.dim()], C64::new(1.0, 0.0)),
                    ({
                        let mut k = vec![0; a.dim()];
                        k[0] = 1;
                        k
                    }, C64::new(0.25, 0.1)),
                ],
            );
            let theta = if m.size() == 1 {
                Some(theta_conjugation_residual(m, nf.as_ref(), fp, a, &probe, 8))
            } else {
                None
            };
            let sym_defect = spec
                .symmetry
                .elements()
                .iter()
                .map(|h| {
                    let composed = fp.vector.compose_int(h);
                    let diff = composed.add(&fp.vector.scale(C64::new(-1.0, 0.0))).unwrap();
                    diff.coeffs()
                        .values()
                        .flat_map(|c| c.iter())
                        .map(|z| z.norm())
                        .fold(0.0f64, f64::max)
                })
                .fold(0.0f64, f64::max);
            (Some(nf), Some(nrep), theta, Some(sym_defect))
        }
        Err(_) => (None, None, None, None),
    };
    Ok(FilterAnalysis {
        spec: spec.clone(),
        j_box,
        radius_bound: radius_bound(m, spec),
        rep,
        raw_report,
        fixed,
        normalized,
        normalized_report,
        theta_residual,
        raw_symmetry_exact,
        fixed_symmetry_defect,
    })
}

/// Cascade on the filter an analysis certified: the normalized filter when
/// one exists, the raw filter otherwise.
pub fn run_cascade(analysis: &FilterAnalysis, opts: &PipelineOptions) -> CascadeResult {
    let filter: Arc<dyn Filter> = match &analysis.normalized {
        Some(nf) => nf.clone(),
        None => Arc::new(analysis.spec.m_prime.clone()),
    };
    scaling_function(filter, &analysis.spec.dilation, &analysis.spec.w, opts.depth)
}

pub struct WaveletOutcome {
    pub polyphase: PolyphaseVector,
    pub probe: ProbeResult,
    pub family: Result<WaveletFamily, WaveletError>,
    /// Frequency-domain symmetry residuals per (element, member).
    pub symmetry: Vec<(crate::lattice::IntMatrix, usize, f64)>,
}

pub fn run_wavelets(
    analysis: &FilterAnalysis,
    cascade: &CascadeResult,
    opts: &PipelineOptions,
) -> Result<WaveletOutcome, WaveletError> {
    let filter: Arc<dyn Filter> = match &analysis.normalized {
        Some(nf) => nf.clone(),
        None => Arc::new(analysis.spec.m_prime.clone()),
    };
    let pv = polyphase(filter, &analysis.spec.dilation, opts.grid)?;
    let probe = obstruction_probe(
        &pv,
        &ProbeOptions {
            resolution: opts.grid,
            search_resolution: opts.grid,
            delta: opts.gram_floor,
            seed: opts.seed,
            draws: opts.probe_draws,
        },
    );
    let family = orthonormalize(&pv, &cascade.scaling[0], &probe, opts.gram_floor, opts.grid);
    let symmetry = match &family {
        Ok(f) => {
            let probes = symmetry_probe_points(analysis.spec.dilation.dim(), opts.seed);
            symmetry_check(f, &analysis.spec.symmetry, &probes)
        }
        Err(_) => vec![],
    };
    Ok(WaveletOutcome {
        polyphase: pv,
        probe,
        family,
        symmetry,
    })
}

/// Deterministic probe points in `[-2, 2]^n` for symmetry residuals.
pub fn symmetry_probe_points(n: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5f3759df);
    (0..128)
        .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect()
}
