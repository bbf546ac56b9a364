use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NodeId, NumericsError, ParamStore, Tape};

/// Entries beyond this count are checked on a seeded random subsample.
pub const MAX_CHECKED_ENTRIES: usize = 10_000;
/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`.
pub const RELATIVE_FLOOR: f64 = 1e-6;
/// Step divisors tried when `x ± step` reaches a different ReLU or clamp
/// piece than `x` does.
pub const KINK_REFINEMENTS: [f64; 3] = [1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_entry: usize,
    /// Analytic and central-difference values at the worst entry.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub entries_checked: usize,
    /// Entries compared with a reduced step because the full step crossed a kink.
    pub kink_refined: usize,
    /// Entries whose every tried step crossed a kink; not compared.
    pub kink_skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares the tape's gradients against central differences.
///
/// `forward` must build a scalar loss deterministically (dropout off). The
/// store's values are restored and its gradients left zeroed on return.
/// Central differences are only compared on the smooth piece containing the
/// current point: see [`KINK_REFINEMENTS`].
pub fn grad_check<F>(store: &mut ParamStore, step: f64, seed: u64, mut forward: F) -> Result<GradCheckReport, NumericsError>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<NodeId, NumericsError>,
{
    let analytic = analytic_gradients(store, &mut forward)?;
    check_against(store, &analytic, step, seed, forward)
}

/// Runs one forward/backward and returns a copy of each tensor's gradient.
pub fn analytic_gradients<F>(store: &mut ParamStore, forward: &mut F) -> Result<Vec<Vec<f64>>, NumericsError>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<NodeId, NumericsError>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let loss = forward(store, &mut tape)?;
    tape.backward(loss, 1.0, store)?;
    let grads = store.tensors().iter().map(|t| t.grad.clone()).collect();
    store.zero_grad();
    Ok(grads)
}

/// Same as [`grad_check`] but with caller-supplied analytic gradients, so the
/// checker can be pointed at a deliberately wrong gradient.
pub fn check_against<F>(
    store: &mut ParamStore,
    analytic: &[Vec<f64>],
    step: f64,
    seed: u64,
    mut forward: F,
) -> Result<GradCheckReport, NumericsError>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<NodeId, NumericsError>,
{
    let mut coords: Vec<(usize, usize)> = store
        .tensors()
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.len()).map(move |e| (ti, e)))
        .collect();
    if coords.len() > MAX_CHECKED_ENTRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = index::sample(&mut rng, coords.len(), MAX_CHECKED_ENTRIES).into_vec();
        picked.sort_unstable();
        coords = picked.into_iter().map(|i| coords[i]).collect();
    }

    let mut tape = Tape::new();
    let mut eval = |store: &ParamStore, tape: &mut Tape| -> Result<(f64, Vec<bool>), NumericsError> {
        tape.clear();
        let l = forward(store, tape)?;
        Ok((tape.scalar(l), tape.kink_pattern()))
    };
    let (_, base) = eval(store, &mut tape)?;

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_param: String::new(),
        worst_entry: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        entries_checked: 0,
        kink_refined: 0,
        kink_skipped: 0,
    };
    for (ti, e) in coords {
        let original = store.tensors()[ti].values[e];
        let mut numeric = None;
        for (i, divisor) in KINK_REFINEMENTS.iter().enumerate() {
            let h = step / divisor;
            store.tensors_mut()[ti].values[e] = original + h;
            let (plus, p_plus) = eval(store, &mut tape)?;
            store.tensors_mut()[ti].values[e] = original - h;
            let (minus, p_minus) = eval(store, &mut tape)?;
            store.tensors_mut()[ti].values[e] = original;
            if p_plus == base && p_minus == base {
                numeric = Some((plus - minus) / (2.0 * h));
                report.kink_refined += usize::from(i > 0);
                break;
            }
        }
        let Some(numeric) = numeric else {
            report.kink_skipped += 1;
            continue;
        };
        report.entries_checked += 1;
        let err = relative_error(analytic[ti][e], numeric);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_param = store.tensors()[ti].name.clone();
            report.worst_entry = e;
            report.worst_analytic = analytic[ti][e];
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
