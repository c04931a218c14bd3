use super::{Task, Verdict, VerdictFlag};
use crate::channel::{CavcModel, Family, SimplexVector};
use crate::error::{CavcError, Result};
use crate::info::joint_type;
use crate::lp::{LinearProgram, LpOptions, Relation};
use serde::Serialize;

/// min over q in hull `k` of max_{a,b} |joint(a,b) − p_x(a)·W_q(b|a)|, with
/// the minimizing weights (indexed like `model.family(k)`).
pub fn hull_deviation(model: &CavcModel, k: Family, p_x: &[f64], joint: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (nx, ny) = (model.nx(), model.ny());
    if p_x.len() != nx {
        return Err(CavcError::LengthMismatch { expected: nx, got: p_x.len() });
    }
    if joint.len() != nx * ny {
        return Err(CavcError::LengthMismatch { expected: nx * ny, got: joint.len() });
    }
    let states = model.family(k);
    let ns = states.len();
    let kern = model.kernel();
    let mut lp = LinearProgram::new(ns + 1);
    lp.set_objective(ns, 1.0);
    let ones: Vec<(usize, f64)> = (0..ns).map(|i| (i, 1.0)).collect();
    lp.add_row(&ones, Relation::Eq, 1.0);
    for a in 0..nx {
        for b in 0..ny {
            let target = joint[a * ny + b];
            let mut up: Vec<(usize, f64)> =
                states.iter().enumerate().map(|(i, &s)| (i, p_x[a] * kern.prob(a, s, b))).collect();
            let mut down: Vec<(usize, f64)> = up.iter().map(|&(i, c)| (i, -c)).collect();
            up.push((ns, -1.0));
            down.push((ns, -1.0));
            lp.add_row(&up, Relation::Le, target);
            lp.add_row(&down, Relation::Le, -target);
        }
    }
    let sol = lp.solve(&LpOptions::default())?;
    let q = SimplexVector::from_solver(sol.x[..ns].to_vec())?;
    let mut dev: f64 = 0.0;
    for a in 0..nx {
        for b in 0..ny {
            let fit: f64 = states.iter().zip(q.weights()).map(|(&s, w)| w * kern.prob(a, s, b)).sum();
            dev = dev.max((joint[a * ny + b] - p_x[a] * fit).abs());
        }
    }
    Ok((q.weights().to_vec(), dev))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifyReport {
    pub verdict: Verdict,
    pub eps: f64,
    /// Entrywise deviation from the nearest P_X × Z for Z in each hull.
    pub deviation: [f64; 2],
    pub fits: [bool; 2],
}

/// Names σ_k when the empirical joint type of (sent, received) is within
/// `eps` entrywise of P_X × Z for some Z in hull k and of no channel in the
/// other hull. Otherwise returns σ₁ as a flagged fallback.
pub fn identify_state(sent: &[usize], received: &[usize], model: &CavcModel, eps: f64) -> Result<IdentifyReport> {
    if !(eps > 0.0) {
        return Err(CavcError::Config(format!("eps must be positive, got {eps}")));
    }
    let (nx, ny) = (model.nx(), model.ny());
    let t = joint_type(&[sent, received], &[nx, ny])?;
    let joint = t.probs();
    let p_x: Vec<f64> = (0..nx).map(|a| joint[a * ny..(a + 1) * ny].iter().sum()).collect();
    let mut deviation = [0.0; 2];
    for k in Family::BOTH {
        deviation[k.index()] = hull_deviation(model, k, &p_x, &joint)?.1;
    }
    let fits = [deviation[0] <= eps, deviation[1] <= eps];
    let verdict = match fits {
        [true, false] => Verdict::state(Task::Identify, Family::One),
        [false, true] => Verdict::state(Task::Identify, Family::Two),
        [true, true] => Verdict::fallback(Task::Identify, VerdictFlag::Ambiguous),
        [false, false] => Verdict::fallback(Task::Identify, VerdictFlag::NoCandidate),
    };
    Ok(IdentifyReport {
        verdict,
        eps,
        deviation,
        fits,
    })
}
