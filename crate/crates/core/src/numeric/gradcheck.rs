//! Central-difference verification of analytic gradients.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::ParameterSet;

/// Fewest coordinates examined per parameter (all of them when smaller).
pub const MIN_COORDS_PER_PARAM: usize = 32;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub per_parameter_errors: BTreeMap<String, f64>,
    pub coordinates_checked: usize,
}

/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the gradient written by `analytic` into `params[..].grad` with
/// central differences of `loss`. Up to `coords_per_param` coordinates of each
/// parameter are probed (at least [`MIN_COORDS_PER_PARAM`]), spread evenly
/// across the parameter. Parameter values are restored afterwards.
pub fn grad_check<L, G>(
    params: &mut ParameterSet,
    h: f64,
    coords_per_param: usize,
    mut loss: L,
    mut analytic: G,
) -> Result<GradCheckReport>
where
    L: FnMut(&ParameterSet) -> Result<f64>,
    G: FnMut(&mut ParameterSet) -> Result<()>,
{
    if !(1e-6..=1e-4).contains(&h) {
        return Err(Error::Config(format!("grad_check step {h} outside [1e-6, 1e-4]")));
    }
    params.zero_grads();
    analytic(params)?;

    let budget = coords_per_param.max(MIN_COORDS_PER_PARAM);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        per_parameter_errors: BTreeMap::new(),
        coordinates_checked: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let len = params.get(id).value.len();
        let coords: Vec<usize> = if len <= budget {
            (0..len).collect()
        } else {
            (0..budget).map(|i| i * len / budget).collect()
        };
        let mut worst = 0.0f64;
        for c in coords {
            let original = params.get(id).value.as_slice()[c];
            params.get_mut(id).value.as_mut_slice()[c] = original + h;
            let up = loss(params)?;
            params.get_mut(id).value.as_mut_slice()[c] = original - h;
            let down = loss(params)?;
            params.get_mut(id).value.as_mut_slice()[c] = original;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("loss while probing {}[{c}]", params.get(id).name),
                });
            }
            let numeric = (up - down) / (2.0 * h);
            let a = params.get(id).grad.as_slice()[c];
            worst = worst.max(relative_error(a, numeric));
            report.coordinates_checked += 1;
        }
        report.max_relative_error = report.max_relative_error.max(worst);
        report
            .per_parameter_errors
            .insert(params.get(id).name.clone(), worst);
    }
    Ok(report)
}
