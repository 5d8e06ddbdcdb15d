use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{NumericsError, ParamRegistry, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Parameters with more coordinates than this are sampled; half of the
    /// sample is drawn from coordinates with a nonzero analytic gradient.
    /// `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_coords_per_param: Some(24),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose `x +- step` straddles a ReLU or clipping boundary.
    pub kinks_skipped: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_coord: usize,
    pub checked: usize,
    pub kinks_skipped: usize,
    pub per_param: Vec<ParamCheck>,
}

/// `|a - b| / max(1e-8, |a| + |b|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// `(f(x + h) - f(x - h)) / 2h`. Parameter values are restored afterwards.
///
/// A central difference across a kink does not estimate the derivative, so a
/// coordinate whose perturbed passes change the tape's [`Tape::kink_pattern`]
/// is counted in `kinks_skipped` and replaced by the next candidate.
pub fn finite_difference_check<F, E>(
    loss_fn: F,
    registry: &mut ParamRegistry,
    options: GradCheckOptions,
) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, &ParamRegistry) -> Result<Var, E>,
    E: From<NumericsError>,
{
    let step = options.step;
    if !(step > 0.0) {
        return Err(NumericsError::BadStep(step).into());
    }
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, registry)?;
    let grads = tape.param_gradients(loss)?;
    let base_pattern = tape.kink_pattern();
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_coord: 0,
        checked: 0,
        kinks_skipped: 0,
        per_param: Vec::new(),
    };

    for id in registry.ids().collect::<Vec<_>>() {
        let size = registry.tensor(id).len();
        let analytic = grads
            .grads
            .iter()
            .find(|(g, _)| *g == id)
            .map(|(_, g)| g.clone())
            .unwrap_or_else(|| vec![0.0; size]);
        let quota = options.max_coords_per_param.unwrap_or(size).min(size);
        let candidates = candidate_coords(&analytic, options.max_coords_per_param, &mut rng);
        let name = registry.name(id).to_string();
        let mut check = ParamCheck {
            name: name.clone(),
            checked: 0,
            kinks_skipped: 0,
            max_rel_error: 0.0,
        };
        for &coord in &candidates {
            if check.checked >= quota {
                break;
            }
            let original = registry.tensor(id).data()[coord];
            let eval = |value: f64, registry: &mut ParamRegistry| -> Result<(f64, bool), E> {
                registry.tensor_mut(id).data_mut()[coord] = value;
                let mut tape = Tape::new();
                let out = loss_fn(&mut tape, registry);
                registry.tensor_mut(id).data_mut()[coord] = original;
                let v = tape.value(out?).item().unwrap_or(f64::NAN);
                if v.is_finite() {
                    Ok((v, tape.kink_pattern() == base_pattern))
                } else {
                    Err(NumericsError::CheckNonFinite {
                        param: name.clone(),
                        coord,
                    }
                    .into())
                }
            };
            let (plus, smooth_plus) = eval(original + step, registry)?;
            let (minus, smooth_minus) = eval(original - step, registry)?;
            if !(smooth_plus && smooth_minus) {
                check.kinks_skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic[coord], numeric);
            check.checked += 1;
            check.max_rel_error = check.max_rel_error.max(err);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_coord = coord;
            }
        }
        report.checked += check.checked;
        report.kinks_skipped += check.kinks_skipped;
        report.per_param.push(check);
    }
    Ok(report)
}

/// Coordinates in checking order. With a quota, half of the first `quota`
/// come from coordinates with a nonzero analytic gradient; the rest of the
/// tensor follows in seeded random order as replacements for kinks.
fn candidate_coords(analytic: &[f64], quota: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let size = analytic.len();
    let quota = match quota {
        Some(q) if q < size => q,
        _ => return (0..size).collect(),
    };
    let nonzero: Vec<usize> = (0..size).filter(|&i| analytic[i] != 0.0).collect();
    let from_nonzero = (quota / 2).min(nonzero.len());
    let mut order: Vec<usize> = sample(rng, nonzero.len(), from_nonzero)
        .into_iter()
        .map(|i| nonzero[i])
        .collect();
    let mut taken = vec![false; size];
    order.iter().for_each(|&i| taken[i] = true);
    order.extend(sample(rng, size, size).into_iter().filter(|&i| !taken[i]));
    // Sorted within the primary sample so reports list coordinates in order.
    order[..quota].sort_unstable();
    order
}
