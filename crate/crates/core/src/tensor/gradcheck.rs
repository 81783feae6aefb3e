use super::{Graph, ParamId, ParameterStore, Var};
use crate::error::Result;

/// Worst disagreement found for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub values: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn values_checked(&self) -> usize {
        self.params.iter().map(|p| p.values).sum()
    }
}

/// Central difference stencil.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`
    ThreePoint,
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`, fourth-order accurate.
    #[default]
    FivePoint,
}

/// Compares reverse-mode gradients with central differences, entry by entry.
///
/// Relative error is `|a − n| / max(|a|, |n|, floor)`. `build` must construct
/// the same scalar loss each time it is called.
pub fn check_gradients<F>(
    store: &ParameterStore,
    stencil: Stencil,
    eps: f64,
    floor: f64,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    check_gradients_steps(store, stencil, &[eps], floor, build)
}

/// Like [`check_gradients`], but tries every step in `steps` and keeps the
/// closest estimate for each entry.
///
/// Large steps lose accuracy where the loss curves sharply and small steps
/// lose it to round-off where the gradient is tiny. An incorrect analytic
/// gradient disagrees at every step.
pub fn check_gradients_steps<F>(
    store: &ParameterStore,
    stencil: Stencil,
    steps: &[f64],
    floor: f64,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = build(&mut g)?;
        g.backward(loss)?
    };
    let eval = |s: &ParameterStore| -> Result<f64> {
        let mut g = Graph::new(s);
        let loss = build(&mut g)?;
        Ok(g.scalar(loss))
    };

    let mut work = store.clone();
    let mut params = Vec::new();
    for id in store.ids() {
        let n = store.get(id).len();
        let mut worst = ParamCheck {
            name: store.name(id).to_string(),
            values: n,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..n {
            let a = analytic.get(id).map_or(0.0, |t| t.data()[k]);
            let (mut rel, mut numeric) = (f64::INFINITY, 0.0);
            for &eps in steps {
                let d = central_difference(&mut work, id, k, stencil, eps, &eval)?;
                let r = (a - d).abs() / a.abs().max(d.abs()).max(floor);
                if r < rel {
                    (rel, numeric) = (r, d);
                }
            }
            if rel > worst.max_rel_error {
                worst = ParamCheck { max_rel_error: rel, worst_index: k, analytic: a, numeric, ..worst };
            }
        }
        params.push(worst);
    }
    Ok(GradCheckReport { params })
}

fn central_difference(
    work: &mut ParameterStore,
    id: ParamId,
    k: usize,
    stencil: Stencil,
    eps: f64,
    eval: &impl Fn(&ParameterStore) -> Result<f64>,
) -> Result<f64> {
    let orig = work.get(id).data()[k];
    let mut at = |offset: f64| -> Result<f64> {
        work.get_mut(id).data_mut()[k] = orig + offset;
        eval(work)
    };
    let d = match stencil {
        Stencil::ThreePoint => (at(eps)? - at(-eps)?) / (2.0 * eps),
        Stencil::FivePoint => {
            let (p2, p1, m1, m2) = (at(2.0 * eps)?, at(eps)?, at(-eps)?, at(-2.0 * eps)?);
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps)
        }
    };
    work.get_mut(id).data_mut()[k] = orig;
    Ok(d)
}
