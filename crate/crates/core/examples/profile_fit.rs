use std::time::Instant;
use pense::cv::*;
use pense::dataset::RobustStandardization;
use pense::mscale::MScaleSpec;
use pense::optimizer::*;
use pense::rho::{calibrate_cutoff, RhoKind};
use pense::simulate::{generate, ErrorFamily, SimulationConfig};

fn main() {
    let config = SimulationConfig {
        contamination_fraction: 0.3,
        ..SimulationConfig::new(100, 50, ErrorFamily::Stable15, 7)
    };
    let sim = generate(&config).unwrap();
    let std = RobustStandardization::fit(&sim.data);
    let data = std.transform(&sim.data);
    let loss = LossSpec::s_loss(calibrate_cutoff(RhoKind::Bisquare, 0.4).unwrap(), MScaleSpec::new(0.4));
    let family = PenaltyFamily::new(0.5);
    let cfg = OptimizeConfig::default();
    let grid = robust_lambda_grid(&data, &loss, 0.5, None, 20, 0.05).unwrap();

    let t1 = Instant::now();
    let starts = generate_starts(&data, &family.at(grid[0]), 20, 3, &cfg);
    let reg = compute_path(&data, &loss, 0.5, None, &grid, 40, &starts, DEFAULT_DEDUP_TOL, &cfg).unwrap();
    let counts: Vec<usize> = reg.minima.iter().map(|l| l.len()).collect();
    eprintln!("path in {:.2}s, counts {:?}", t1.elapsed().as_secs_f64(), &counts[..8]);

    let cv_cfg = CvConfig { folds: 7, replications: 5, seed: 5, metric: Metric::Tau { c_tau: 3.0 }, n_subsets: 20, ..CvConfig::default() };
    let t3 = Instant::now();
    let ris = ris_cv(&reg, &data, &loss, &family, &cv_cfg).unwrap();
    let t_ris = t3.elapsed().as_secs_f64();
    eprintln!("ris R=5 in {:.1}s", t_ris);
    let t4 = Instant::now();
    let ncv = naive_cv(&reg, &data, &loss, &family, &cv_cfg).unwrap();
    let t_ncv = t4.elapsed().as_secs_f64();
    eprintln!("naive R=5 in {:.1}s (ratio {:.2})", t_ncv, t_ris / t_ncv);
    eprintln!("TV ris {:.3} naive {:.3}", pense::diagnostics::total_variation(&ris.curve()), pense::diagnostics::total_variation(&ncv.curve()));
}
