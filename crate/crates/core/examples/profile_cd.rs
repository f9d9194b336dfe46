use pense::cv::PenaltyFamily;
use pense::dataset::RobustStandardization;
use pense::mscale::MScaleSpec;
use pense::optimizer::*;
use pense::rho::{calibrate_cutoff, RhoKind};
use pense::simulate::{generate, ErrorFamily, SimulationConfig};
use ndarray::Array1;

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
    let grid = robust_lambda_grid(&data, &loss, 0.5, None, 20, 1e-3).unwrap();
    let starts = generate_starts(&data, &family.at(grid[0]), 30, 3, &cfg);
    let s = &starts[1];
    // Reproduce the first inner problem
    let resid = data.residuals(s.intercept, &s.beta);
    let (_, scale) = loss.evaluate(resid.as_slice().unwrap(), None).unwrap();
    let w = loss.weights(resid.as_slice().unwrap(), scale);
    let lam = grid[0] * loss.inner_lambda_scale(resid.as_slice().unwrap(), scale);
    let alpha = 0.5;
    let n = 100; let p = 50;
    let x = &data.x; let y = &data.y;
    let wsum: f64 = w.weights.sum();
    let quad: Vec<f64> = (0..p).map(|j| (0..n).map(|i| w.weights[i]*x[[i,j]]*x[[i,j]]).sum::<f64>()/wsum).collect();
    let mut b0 = s.intercept;
    let mut beta: Array1<f64> = s.beta.clone();
    let mut r: Vec<f64> = (0..n).map(|i| y[i] - b0 - x.row(i).dot(&beta)).collect();
    let soft = |z: f64, g: f64| if z > g { z-g } else if z < -g { z+g } else { 0.0 };
    for pass in 0..2000 {
        let shift: f64 = (0..n).map(|i| w.weights[i]*r[i]).sum::<f64>()/wsum;
        b0 += shift;
        for ri in r.iter_mut() { *ri -= shift; }
        let mut max_ch = 0.0; let mut argmax = 0;
        for j in 0..p {
            if quad[j] == 0.0 { continue; }
            let mut grad = 0.0;
            for i in 0..n { grad += w.weights[i]*x[[i,j]]*r[i]; }
            let z = grad/wsum + quad[j]*beta[j];
            let new = soft(z, lam*alpha) / (quad[j] + lam*(1.0-alpha));
            if new != beta[j] {
                let d = new - beta[j];
                for i in 0..n { r[i] -= d*x[[i,j]]; }
                beta[j] = new;
                if d.abs() > max_ch { max_ch = d.abs(); argmax = j; }
            }
        }
        if pass % 200 == 0 || pass < 6 {
            eprintln!("pass {pass}: max_ch {max_ch:.3e} at j={argmax} (quad {:.3e}) b0_shift {shift:.2e}", quad[argmax]);
        }
        if max_ch < 1e-8 && shift.abs() < 1e-8 { eprintln!("converged at pass {pass}"); break; }
    }
}
