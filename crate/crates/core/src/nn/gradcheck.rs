//! Central-difference gradient verification.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{ParamGrads, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Gradients smaller than this are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst relative error per checked group (input or parameter).
    pub groups: Vec<(String, f64)>,
    pub max_rel_error: f64,
    pub checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }

    fn from_groups(groups: Vec<(String, f64)>, checked: usize, tol: f64) -> Self {
        let max_rel_error = groups.iter().map(|g| g.1).fold(0.0, f64::max);
        GradCheckReport {
            groups,
            max_rel_error,
            checked,
            tol,
        }
    }
}

fn scalar_of(g: &Graph<'_>, v: Var) -> Result<f64> {
    let t = g.value(v);
    if t.len() != 1 {
        return Err(Error::shape("grad_check", t.shape(), &[1]));
    }
    Ok(t.item())
}

/// Compare autodiff against central differences for every element of every
/// input of a scalar function.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let eval = |ts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::detached();
        let vars: Vec<Var> = ts.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        scalar_of(&g, out)
    };
    let mut g = Graph::detached();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    scalar_of(&g, out)?;
    let grads = g.backward(out)?;

    let mut groups = Vec::new();
    let mut checked = 0;
    let mut work = inputs.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[k].len()];
        let analytic = grads.wrt(v).unwrap_or(&zeros).to_vec();
        let mut worst: f64 = 0.0;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - step;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(a, numeric));
            checked += 1;
        }
        groups.push((format!("input{k}"), worst));
    }
    Ok(GradCheckReport::from_groups(groups, checked, tol))
}

/// Same check for parameters of a model. `loss` evaluates the scalar
/// objective against a store and, when `want_grads` is set, also returns the
/// analytic parameter gradients. At most `per_group` seeded elements of each
/// parameter tensor are probed.
pub fn grad_check_params<F>(
    store: &ParamStore,
    loss: F,
    per_group: usize,
    step: f64,
    tol: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, bool) -> Result<(f64, Option<ParamGrads>)>,
{
    let (_, grads) = loss(store, true)?;
    let grads = grads.ok_or_else(|| Error::Config("loss returned no gradients".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = store.clone();
    let mut groups = Vec::new();
    let mut checked = 0;
    for (id, name, t) in store.iter() {
        let n = t.len();
        let picks: Vec<usize> = if n <= per_group {
            (0..n).collect()
        } else {
            sample(&mut rng, n, per_group).into_vec()
        };
        let mut worst: f64 = 0.0;
        for i in picks {
            let orig = t.data()[i];
            work.get_mut(id).data_mut()[i] = orig + step;
            let up = loss(&work, false)?.0;
            work.get_mut(id).data_mut()[i] = orig - step;
            let down = loss(&work, false)?.0;
            work.get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(grads.get(id)[i], numeric));
            checked += 1;
        }
        groups.push((name.to_string(), worst));
    }
    Ok(GradCheckReport::from_groups(groups, checked, tol))
}
