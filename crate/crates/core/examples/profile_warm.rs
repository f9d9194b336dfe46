use std::time::Instant;
use pense::cv::*;
use pense::dataset::RobustStandardization;
use pense::enet::{weighted_en_solve, WlsProblem};
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
    let grid = robust_lambda_grid(&data, &loss, 0.5, None, 25, 5e-3).unwrap();
    let starts = generate_starts(&data, &family.at(grid[0]), 50, 3, &cfg);
    let level0 = optimize_at_lambda(&data, &loss, &family.at(grid[0]), &starts, 40, DEFAULT_DEDUP_TOL, &cfg);
    eprintln!("level0: {} minima; pairwise spread of first 10:", level0.len());
    for i in 0..5.min(level0.len()) {
        for j in (i+1)..6.min(level0.len()) {
            let d: f64 = level0[i].beta.iter().zip(level0[j].beta.iter()).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt();
            let n0 = level0[i].beta.iter().map(|b| b*b).sum::<f64>().sqrt();
            eprint!("{:.4}/{:.3} ", d, n0);
        }
    }
    eprintln!();
    // Warm optimize at the next lambda from each of the first 10 minima: count outers manually.
    let lam = grid[1];
    let penalty = family.at(lam);
    for m in level0.iter().take(8) {
        let mut intercept = m.intercept;
        let mut beta = m.beta.clone();
        let mut resid = data.residuals(intercept, &beta);
        let (lv0, mut scale) = loss.evaluate(resid.as_slice().unwrap(), Some(m.scale)).unwrap();
        let mut obj = lv0 + penalty.value(&beta);
        let mut outers = 0; let mut total_passes = 0;
        let t = Instant::now();
        for _ in 0..cfg.max_outer {
            outers += 1;
            let w = loss.weights(resid.as_slice().unwrap(), scale);
            let ls = loss.inner_lambda_scale(resid.as_slice().unwrap(), scale);
            let problem = WlsProblem { design: data.x.view(), response: data.y.view(), obs_weights: w.weights.view(), fit_intercept: true };
            let ip = pense::enet::PenaltySpec { lambda: penalty.lambda * ls, alpha: 0.5, loadings: None };
            let inner = weighted_en_solve(&problem, &ip, Some((intercept, &beta)), cfg.inner_tol, cfg.max_inner_passes).unwrap();
            total_passes += inner.passes;
            let mut acc = None; let mut step = 1.0;
            for _ in 0..30 {
                let b0 = intercept + step*(inner.intercept - intercept);
                let bb = &beta + &((&inner.beta - &beta)*step);
                let rr = data.residuals(b0, &bb);
                if let Ok((clv, csc)) = loss.evaluate(rr.as_slice().unwrap(), Some(scale)) {
                    let co = clv + penalty.value(&bb);
                    if co < obj { acc = Some((b0, bb, rr, csc, co)); break; }
                }
                step *= 0.5;
            }
            let Some((b0, bb, rr, csc, co)) = acc else { break };
            let dec = obj - co;
            let movement = (b0-intercept).abs().max(bb.iter().zip(beta.iter()).map(|(a,b)| (a-b).abs()).fold(0.0, f64::max));
            let mag = 1.0 + bb.iter().fold(0.0_f64, |mx, v| mx.max(v.abs()));
            intercept = b0; beta = bb; resid = rr; scale = csc; obj = co;
            if dec < cfg.outer_tol*(1.0+obj.abs()) && movement < cfg.move_tol*mag { break; }
        }
        eprintln!("warm: outers {outers} passes {total_passes} in {:.1}ms", t.elapsed().as_secs_f64()*1e3);
    }
}
