//! Built-in invariant battery behind `airfed check`: quick versions of the
//! core correctness checks, each with an oracle independent of the code
//! path it verifies.

use crate::channel::{effective_gain, LinkGains};
use crate::fl::model::{loss_grad, Activation, Architecture, ModelParams};
use crate::fl::partition::dirichlet_partition;
use crate::power::power_factor;
use crate::ris::{PhaseConfig, SurrogateProblem};
use crate::Cx;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_model_gradients(),
        check_phase_gradient(),
        check_cascade_equivalence(),
        check_phase_descent(),
        check_inversion_identity(),
        check_partition(),
    ]
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn random_cx(rng: &mut impl Rng) -> Cx {
    Cx::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Model loss gradients against central finite differences.
fn check_model_gradients() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let archs = [
        Architecture::Softmax { input: 6, classes: 4 },
        Architecture::Mlp { input: 5, hidden: 7, classes: 3, activation: Activation::Tanh },
    ];
    let mut worst: f64 = 0.0;
    for arch in archs {
        let mut p = ModelParams::init(arch, &mut rng);
        for v in p.values.iter_mut() {
            *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
        let x = Array2::from_shape_fn((5, arch.input()), |_| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<usize> = (0..5).map(|i| i % arch.classes()).collect();
        let (_, analytic) = loss_grad(&p, x.view(), &y).expect("gradient");
        let h = 1e-6;
        for k in 0..p.dim() {
            let orig = p.values[k];
            p.values[k] = orig + h;
            let (up, _) = loss_grad(&p, x.view(), &y).expect("gradient");
            p.values[k] = orig - h;
            let (down, _) = loss_grad(&p, x.view(), &y).expect("gradient");
            p.values[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (numeric - analytic[k]).abs()
                / numeric.abs().max(analytic[k].abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    result("model-gradient-fd", worst < 1e-5, format!("worst relative error {worst:.2e}"))
}

/// Phase-design gradient against central finite differences.
fn check_phase_gradient() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for n in [1usize, 4, 10] {
        for _ in 0..10 {
            let g: Vec<Cx> = (0..n).map(|_| random_cx(&mut rng)).collect();
            let prob = SurrogateProblem::new(g, random_cx(&mut rng), 1.0);
            let angles: Vec<f64> = (0..n)
                .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect();
            let phi = PhaseConfig::from_angles(angles.clone());
            let analytic = prob.gradient(&phi);
            let h = 1e-6;
            for k in 0..n {
                let mut up = angles.clone();
                let mut down = angles.clone();
                up[k] += h;
                down[k] -= h;
                let numeric = (prob.objective(&PhaseConfig::from_angles(up))
                    - prob.objective(&PhaseConfig::from_angles(down)))
                    / (2.0 * h);
                let rel = (numeric - analytic[k]).abs()
                    / numeric.abs().max(analytic[k].abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
    }
    result("phase-gradient-fd", worst < 1e-5, format!("worst relative error {worst:.2e}"))
}

/// Cascaded-vector gain equals the explicit per-element surface expression.
fn check_cascade_equivalence() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    for n in [1usize, 2, 8] {
        for _ in 0..20 {
            let h_ur: Vec<Cx> = (0..n).map(|_| random_cx(&mut rng)).collect();
            let h_rb: Vec<Cx> = (0..n).map(|_| random_cx(&mut rng)).collect();
            let h_ub = random_cx(&mut rng);
            let angles: Vec<f64> = (0..n)
                .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect();
            let theta = PhaseConfig::from_angles(angles);
            let matrix: Cx = h_ub
                + h_ur
                    .iter()
                    .zip(theta.theta_iter())
                    .zip(&h_rb)
                    .map(|((u, t), r)| u.conj() * t * r)
                    .sum::<Cx>();
            let gains = LinkGains::new(h_ub, h_ur, h_rb);
            let vector = effective_gain(h_ub, &gains.cascaded, &theta).expect("lengths match");
            worst = worst.max((matrix - vector).norm() / matrix.norm().max(1.0));
        }
    }
    result("cascade-equivalence", worst < 1e-12, format!("worst relative gap {worst:.2e}"))
}

/// Monotone descent of the phase optimizer with the safe step.
fn check_phase_descent() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(104);
    let mut violations = 0;
    for _ in 0..50 {
        let n = 8;
        let g: Vec<Cx> = (0..n).map(|_| random_cx(&mut rng)).collect();
        let target = random_cx(&mut rng) * 3.0;
        let step = SurrogateProblem::descent_safe_step(&g, target);
        let prob = SurrogateProblem::new(g, target, step);
        let mut phi = PhaseConfig::zeros(n);
        let mut last = prob.objective(&phi);
        for _ in 0..25 {
            phi = prob.optimize(&phi, 1).expect("finite");
            let now = prob.objective(&phi);
            if now > last + 1e-12 * last.max(1.0) {
                violations += 1;
                break;
            }
            last = now;
        }
    }
    result("phase-descent", violations == 0, format!("{violations}/50 instances ascended"))
}

/// Channel inversion telescopes: h * beta_i * tau = beta_t * alpha.
fn check_inversion_identity() -> CheckResult {
    let mut rng = ChaCha12Rng::seed_from_u64(105);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = random_cx(&mut rng);
        if h.norm() < 1e-3 {
            continue;
        }
        let beta_t = rng.random_range(0.5..200.0);
        let alpha = rng.random_range(0.01..1.0);
        let tau = rng.random_range(1..6u32);
        let beta_i = power_factor(beta_t, alpha, tau, h, 1e-9).expect("above floor");
        let recovered = h * beta_i * tau as f64;
        worst = worst.max((recovered - Cx::new(beta_t * alpha, 0.0)).norm() / (beta_t * alpha));
    }
    result("channel-inversion", worst < 1e-12, format!("worst relative error {worst:.2e}"))
}

/// Dirichlet partitioning is disjoint and exhaustive.
fn check_partition() -> CheckResult {
    let labels: Vec<usize> = (0..2000).map(|i| i % 10).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(106);
    for gamma in [0.1, 1.0, 1e6] {
        let shards = match dirichlet_partition(&labels, 10, gamma, 7, &mut rng) {
            Ok(s) => s,
            Err(e) => return result("dirichlet-partition", false, e.to_string()),
        };
        let mut seen = vec![false; labels.len()];
        for shard in &shards {
            for &i in shard {
                if seen[i] {
                    return result("dirichlet-partition", false, format!("index {i} duplicated"));
                }
                seen[i] = true;
            }
        }
        if !seen.iter().all(|&s| s) {
            return result("dirichlet-partition", false, "unassigned index".into());
        }
    }
    result("dirichlet-partition", true, "disjoint and exhaustive".into())
}
