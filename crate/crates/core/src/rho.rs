//! Bounded rho functions and their derivatives.
//!
//! Every family is parameterized by a single positive scale knob `cutoff`.
//! The canonical (unit-knob) function is stretched as
//! `rho(x) = cutoff^2 * rho1(x / cutoff)` and `psi(x) = cutoff * psi1(x / cutoff)`,
//! so `psi'(0) = 1` for all bounded families and the weight function
//! `W(x) = psi(x) / x` is continuous at 0.

use crate::error::{Error, Result};

/// Supported rho families.
///
/// `Square` is an unbounded test-only configuration: it turns the M-loss into
/// the ordinary least-squares loss and makes every robustness weight constant,
/// which reduces the whole pipeline to its convex limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoKind {
    Bisquare,
    Lqq,
    Hampel,
    Square,
}

impl RhoKind {
    pub fn name(self) -> &'static str {
        match self {
            RhoKind::Bisquare => "bisquare",
            RhoKind::Lqq => "lqq",
            RhoKind::Hampel => "hampel",
            RhoKind::Square => "square",
        }
    }
}

/// A bounded robust loss with its score and weight functions.
#[derive(Debug, Clone)]
pub struct RhoFunction {
    kind: RhoKind,
    cutoff: f64,
    rho_sup: f64,
    flat_radius: f64,
}

// LQQ canonical tuple (b, c, s) from the linear-quadratic-quadratic family.
const LQQ_B: f64 = 1.473;
const LQQ_C: f64 = 0.982;
const LQQ_S: f64 = 1.5;

struct LqqPieces {
    c: f64,
    b_end: f64,    // c + b, end of the middle piece
    #[allow(dead_code)]
    psi_bend: f64, // psi at b_end
    x_max: f64,    // rejection point where psi reaches 0
    tail_a: f64,   // psi(x) = tail_a * (x - x_max)^2 on the last piece
    rho_c: f64,
    rho_bend: f64,
    rho_sup: f64,
}

fn lqq_pieces() -> LqqPieces {
    let (b, c, s) = (LQQ_B, LQQ_C, LQQ_S);
    let b_end = b + c;
    let psi_bend = b_end - s * b / 2.0;
    // Last piece is a parabola tangent to zero at x_max, C1-matched at b_end.
    let x_max = b_end + 2.0 * psi_bend / (s - 1.0);
    let tail_a = psi_bend / ((b_end - x_max) * (b_end - x_max));
    let rho_c = c * c / 2.0;
    let rho_bend = rho_c + (b_end * b_end - c * c) / 2.0 - s / (6.0 * b) * b.powi(3);
    let rho_sup = rho_bend - tail_a / 3.0 * (b_end - x_max).powi(3);
    LqqPieces {
        c,
        b_end,
        psi_bend,
        x_max,
        tail_a,
        rho_c,
        rho_bend,
        rho_sup,
    }
}

impl RhoFunction {
    /// Builds a rho function with the given scale knob.
    pub fn new(kind: RhoKind, cutoff: f64) -> Result<Self> {
        if kind != RhoKind::Square && !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::invalid(format!(
                "rho cutoff must be positive and finite, got {cutoff}"
            )));
        }
        let (rho_sup1, flat1) = match kind {
            RhoKind::Bisquare => (1.0 / 6.0, 1.0),
            RhoKind::Lqq => {
                let p = lqq_pieces();
                (p.rho_sup, p.x_max)
            }
            // Canonical Hampel breakpoints (1, 2, 4): rho_sup = 2x - x^2/4 - 3/2 at x = 4.
            RhoKind::Hampel => (2.5, 4.0),
            RhoKind::Square => {
                return Ok(RhoFunction {
                    kind,
                    cutoff: 1.0,
                    rho_sup: f64::INFINITY,
                    flat_radius: f64::INFINITY,
                })
            }
        };
        Ok(RhoFunction {
            kind,
            cutoff,
            rho_sup: cutoff * cutoff * rho_sup1,
            flat_radius: cutoff * flat1,
        })
    }

    /// Unbounded quadratic configuration used to recover the convex limit in tests.
    pub fn square() -> Self {
        RhoFunction::new(RhoKind::Square, 1.0).expect("square config is total")
    }

    pub fn kind(&self) -> RhoKind {
        self.kind
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// sup_x rho(x); infinite only for the square configuration.
    pub fn rho_sup(&self) -> f64 {
        self.rho_sup
    }

    /// Radius beyond which psi vanishes and rho is flat.
    pub fn flat_radius(&self) -> f64 {
        self.flat_radius
    }

    pub fn rho(&self, x: f64) -> f64 {
        match self.kind {
            RhoKind::Square => x * x,
            _ => {
                let t = self.cutoff;
                t * t * self.rho1(x.abs() / t)
            }
        }
    }

    pub fn psi(&self, x: f64) -> f64 {
        match self.kind {
            RhoKind::Square => 2.0 * x,
            _ => {
                let t = self.cutoff;
                x.signum() * t * self.psi1(x.abs() / t)
            }
        }
    }

    pub fn psi_prime(&self, x: f64) -> f64 {
        match self.kind {
            RhoKind::Square => 2.0,
            _ => self.psi1_prime(x.abs() / self.cutoff),
        }
    }

    /// W(x) = psi(x) / x, extended continuously by W(0) = psi'(0).
    pub fn weight(&self, x: f64) -> f64 {
        match self.kind {
            RhoKind::Square => 2.0,
            _ => {
                let u = x.abs() / self.cutoff;
                if u == 0.0 {
                    self.psi1_prime(0.0)
                } else {
                    self.psi1(u) / u
                }
            }
        }
    }

    /// rho(x) / rho_sup for the bounded families; the raw quadratic for `Square`,
    /// which keeps the scale equation solvable in the convex limit.
    pub fn rho_normalized(&self, x: f64) -> f64 {
        match self.kind {
            RhoKind::Square => x * x,
            _ => self.rho(x) / self.rho_sup,
        }
    }

    /// d/dx of [`Self::rho_normalized`].
    pub fn rho_normalized_prime(&self, x: f64) -> f64 {
        match self.kind {
            RhoKind::Square => 2.0 * x,
            _ => self.psi(x) / self.rho_sup,
        }
    }

    /// Radii at which the canonical function switches pieces, ascending and
    /// ending at the flat radius. Used to split quadrature at the kinks.
    fn kink_radii(&self) -> Vec<f64> {
        let t = self.cutoff;
        match self.kind {
            RhoKind::Bisquare => vec![t],
            RhoKind::Lqq => {
                let p = lqq_pieces();
                vec![t * p.c, t * p.b_end, t * p.x_max]
            }
            RhoKind::Hampel => vec![t, 2.0 * t, 4.0 * t],
            RhoKind::Square => vec![],
        }
    }

    fn rho1(&self, u: f64) -> f64 {
        match self.kind {
            RhoKind::Bisquare => {
                if u >= 1.0 {
                    1.0 / 6.0
                } else {
                    let t = 1.0 - u * u;
                    (1.0 - t * t * t) / 6.0
                }
            }
            RhoKind::Lqq => {
                let p = lqq_pieces();
                if u <= p.c {
                    u * u / 2.0
                } else if u <= p.b_end {
                    p.rho_c + (u * u - p.c * p.c) / 2.0 - LQQ_S / (6.0 * LQQ_B) * (u - p.c).powi(3)
                } else if u <= p.x_max {
                    p.rho_bend + p.tail_a / 3.0 * ((u - p.x_max).powi(3) - (p.b_end - p.x_max).powi(3))
                } else {
                    p.rho_sup
                }
            }
            RhoKind::Hampel => {
                if u <= 1.0 {
                    u * u / 2.0
                } else if u <= 2.0 {
                    u - 0.5
                } else if u <= 4.0 {
                    2.0 * u - u * u / 4.0 - 1.5
                } else {
                    2.5
                }
            }
            RhoKind::Square => unreachable!(),
        }
    }

    fn psi1(&self, u: f64) -> f64 {
        match self.kind {
            RhoKind::Bisquare => {
                if u >= 1.0 {
                    0.0
                } else {
                    let t = 1.0 - u * u;
                    u * t * t
                }
            }
            RhoKind::Lqq => {
                let p = lqq_pieces();
                if u <= p.c {
                    u
                } else if u <= p.b_end {
                    u - LQQ_S / (2.0 * LQQ_B) * (u - p.c) * (u - p.c)
                } else if u <= p.x_max {
                    p.tail_a * (u - p.x_max) * (u - p.x_max)
                } else {
                    0.0
                }
            }
            RhoKind::Hampel => {
                if u <= 1.0 {
                    u
                } else if u <= 2.0 {
                    1.0
                } else if u <= 4.0 {
                    (4.0 - u) / 2.0
                } else {
                    0.0
                }
            }
            RhoKind::Square => unreachable!(),
        }
    }

    fn psi1_prime(&self, u: f64) -> f64 {
        match self.kind {
            RhoKind::Bisquare => {
                if u >= 1.0 {
                    0.0
                } else {
                    (1.0 - u * u) * (1.0 - 5.0 * u * u)
                }
            }
            RhoKind::Lqq => {
                let p = lqq_pieces();
                if u <= p.c {
                    1.0
                } else if u <= p.b_end {
                    1.0 - LQQ_S / LQQ_B * (u - p.c)
                } else if u <= p.x_max {
                    2.0 * p.tail_a * (u - p.x_max)
                } else {
                    0.0
                }
            }
            RhoKind::Hampel => {
                if u < 1.0 {
                    1.0
                } else if u < 2.0 {
                    0.0
                } else if u < 4.0 {
                    -0.5
                } else {
                    0.0
                }
            }
            RhoKind::Square => unreachable!(),
        }
    }
}

/// Expected value of `rho_normalized` under a standard normal.
///
/// The integrand is smooth between the family's kink radii, so the integral is
/// taken piece by piece with 64-point Gauss-Legendre rules (machine precision
/// on each smooth piece); beyond the flat radius the integrand is the plain
/// normal density.
pub(crate) fn expected_normalized_rho(f: &RhoFunction) -> f64 {
    debug_assert!(f.kind != RhoKind::Square, "square rho has no finite sup");
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut cuts = vec![0.0];
    cuts.extend(f.kink_radii());
    let mut acc = 0.0;
    for pair in cuts.windows(2) {
        acc += gauss_legendre_segmented(pair[0], pair[1], |z| f.rho_normalized(z) * phi(z));
    }
    // Tail: rho_normalized == 1, integrate the density until it underflows.
    let flat = f.flat_radius();
    acc += gauss_legendre_segmented(flat, flat.max(40.0), phi);
    2.0 * acc
}

/// Integrates a smooth function over [a, b], subdividing into chunks of at
/// most length 2 so a single 64-point rule stays at machine precision.
fn gauss_legendre_segmented(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let chunks = ((b - a) / 2.0).ceil().max(1.0) as usize;
    let h = (b - a) / chunks as f64;
    let rule = gauss_legendre_64();
    let mut acc = 0.0;
    for c in 0..chunks {
        let (lo, hi) = (a + c as f64 * h, a + (c + 1) as f64 * h);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for &(x, w) in rule.iter() {
            acc += w * half * f(mid + half * x);
        }
    }
    acc
}

/// 64-point Gauss-Legendre nodes and weights on [-1, 1], computed once by
/// Newton iteration on the Legendre recurrence.
fn gauss_legendre_64() -> &'static [(f64, f64)] {
    use std::sync::OnceLock;
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 64usize;
        let mut rule = vec![(0.0, 0.0); n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
                }
                pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * pp * pp);
            rule[i] = (-z, w);
            rule[n - 1 - i] = (z, w);
        }
        rule
    })
}

/// Finds the cutoff at which the M-scale with breakdown `delta` is consistent
/// for the standard deviation at the normal model, i.e. the root of
/// `E[rho(Z)/rho_sup] = delta` for standard normal `Z`.
pub fn calibrate_cutoff(kind: RhoKind, delta: f64) -> Result<RhoFunction> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::invalid(format!(
            "breakdown delta must lie in (0, 0.5], got {delta}"
        )));
    }
    if kind == RhoKind::Square {
        return Err(Error::invalid(
            "the square configuration has no breakdown calibration".to_string(),
        ));
    }
    let (mut lo, mut hi) = (0.1_f64, 30.0_f64);
    let g = |t: f64| -> Result<f64> {
        let f = RhoFunction::new(kind, t)?;
        Ok(expected_normalized_rho(&f) - delta)
    };
    // E[rho_norm] decreases in the cutoff: g(lo) must be positive, g(hi) negative.
    if !(g(lo)? > 0.0 && g(hi)? < 0.0) {
        return Err(Error::CalibrationBracket {
            kind: kind.name(),
            delta,
            lo,
            hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    RhoFunction::new(kind, 0.5 * (lo + hi))
}
