use crate::error::{Error, Result};

use super::{ParamStore, Real, Tape, Var};

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

pub const DEFAULT_EPS: f64 = 1e-5;

fn eval<T: Real, F>(store: &ParamStore<T>, f: &mut F) -> Result<f64>
where
    F: FnMut(&ParamStore<T>) -> Result<(Tape<T>, Var)>,
{
    let (tape, loss) = f(store)?;
    let v = tape.value(loss).item()?.as_f64();
    if !v.is_finite() {
        return Err(Error::Domain(format!("objective is not finite ({v})")));
    }
    Ok(v)
}

/// Relative discrepancy between an analytic and a numeric derivative.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-12);
    (analytic - numeric).abs() / denom
}

/// Checks every trainable coordinate of `store`. `f` must rebuild the
/// objective deterministically from the current parameter values.
pub fn finite_diff_check<T: Real, F>(store: &mut ParamStore<T>, eps: f64, mut f: F) -> Result<GradCheck>
where
    F: FnMut(&ParamStore<T>) -> Result<(Tape<T>, Var)>,
{
    let (mut tape, loss) = f(store)?;
    if !tape.value(loss).item()?.is_finite() {
        return Err(Error::Domain("objective is not finite".into()));
    }
    tape.backward(loss, store)?;
    let analytic: Vec<Vec<T>> = store.iter().map(|(_, p)| p.grad.data().to_vec()).collect();
    let ids: Vec<_> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(id, _)| id)
        .collect();

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for id in ids {
        let n = store.get(id).value.numel();
        for i in 0..n {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = T::of(orig.as_f64() + eps);
            let plus = eval(store, &mut f);
            store.get_mut(id).value.data_mut()[i] = T::of(orig.as_f64() - eps);
            let minus = eval(store, &mut f);
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let err = rel_error(analytic[id.index()][i].as_f64(), numeric);
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name.clone(), i));
            }
        }
    }
    Ok(report)
}
