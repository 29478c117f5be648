//! Central finite-difference checks of tape gradients.

use rand::seq::index::sample;
use rand::Rng;

use super::layers::ParamSet;
use super::tape::Gradients;

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Entries whose two step sizes disagree (a ReLU kink inside the
    /// stencil), which makes the central difference meaningless.
    pub skipped: usize,
    pub max_rel_err: f64,
    pub failures: Vec<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0 && self.skipped * 10 <= self.checked
    }
}

/// Up to `per_slot` random entries of each listed slot.
pub fn sample_entries(
    params: &ParamSet,
    slots: &[usize],
    per_slot: usize,
    rng: &mut impl Rng,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &s in slots {
        let len = params.get(s).len();
        for i in sample(rng, len, per_slot.min(len)).into_iter() {
            out.push((s, i));
        }
    }
    out
}

fn close(a: f64, b: f64, rtol: f64, atol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()) + atol
}

/// Compares `analytic` with central differences of `loss` at step `h` on
/// the listed `(slot, index)` entries, using relative tolerance `rtol` plus
/// an absolute floor `atol` for entries whose derivative is essentially 0.
pub fn gradient_check(
    params: &ParamSet,
    analytic: &Gradients,
    entries: &[(usize, usize)],
    h: f64,
    rtol: f64,
    atol: f64,
    loss: impl Fn(&ParamSet) -> f64,
) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    let mut work = params.clone();
    let central = |slot: usize, idx: usize, step: f64, work: &mut ParamSet| {
        let orig = work.get(slot).data()[idx];
        work.get_mut(slot).data_mut()[idx] = orig + step;
        let plus = loss(work);
        work.get_mut(slot).data_mut()[idx] = orig - step;
        let minus = loss(work);
        work.get_mut(slot).data_mut()[idx] = orig;
        (plus - minus) / (2.0 * step)
    };
    for &(slot, idx) in entries {
        let numeric = central(slot, idx, h, &mut work);
        let a = analytic.slots[slot].data()[idx];
        if !close(numeric, a, rtol, atol) {
            let half = central(slot, idx, h / 2.0, &mut work);
            if !close(numeric, half, rtol, atol) {
                report.skipped += 1;
                continue;
            }
            report.failures.push(format!(
                "{}[{idx}]: analytic {a:e}, numeric {numeric:e}",
                params.name(slot)
            ));
        }
        report.checked += 1;
        let denom = a.abs().max(numeric.abs());
        if denom > 1e-6 {
            report.max_rel_err = report.max_rel_err.max((a - numeric).abs() / denom);
        }
    }
    report
}
