use crate::error::{Error, Result};
use crate::objective::{Role, SparseGradient};

use super::bank::{ParamKind, ParamTable, ParameterBank, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub lr: f64,
    pub eps: f64,
    pub var_min: f64,
    pub var_max: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            lr: 0.05,
            eps: 1e-8,
            var_min: 1e-4,
            var_max: 1e2,
        }
    }
}

/// One Adagrad update over every entry in `grads`:
/// `acc += g²; θ −= lr · g / (sqrt(acc) + eps)`, then the touched
/// log-variances are clamped to `[ln var_min, ln var_max]`.
///
/// Gradients are checked for finiteness before anything is written.
pub fn adagrad_step<T: Real>(bank: &mut ParameterBank<T>, grads: &SparseGradient, cfg: &StepConfig) -> Result<()> {
    for (_, id, g) in grads.iter() {
        for (kind, vals) in [
            (ParamKind::Score, &g.scores),
            (ParamKind::Mean, &g.means),
            (ParamKind::LogVar, &g.log_vars),
        ] {
            if vals.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    word_id: id,
                    kind: kind.name(),
                });
            }
        }
    }
    let (lo, hi) = (cfg.var_min.ln(), cfg.var_max.ln());
    for (role, id, g) in grads.iter() {
        let table = match role {
            Role::Center => bank.center_mut(),
            Role::Context => bank
                .context_table_mut()
                .ok_or_else(|| Error::usage("context gradient for a tied bank"))?,
        };
        let c = table.n_components();
        let cd = c * table.dim();
        update(table, ParamKind::Score, id * c, &g.scores, cfg, None);
        update(table, ParamKind::Mean, id * cd, &g.means, cfg, None);
        update(table, ParamKind::LogVar, id * cd, &g.log_vars, cfg, Some((lo, hi)));
    }
    Ok(())
}

fn update<T: Real>(
    table: &mut ParamTable<T>,
    kind: ParamKind,
    start: usize,
    grad: &[f64],
    cfg: &StepConfig,
    clamp: Option<(f64, f64)>,
) {
    let (params, accum) = table.params_mut(kind);
    let params = &mut params[start..start + grad.len()];
    let accum = &mut accum[start..start + grad.len()];
    for ((p, a), &g) in params.iter_mut().zip(accum.iter_mut()).zip(grad) {
        if g != 0.0 {
            let acc = a.to_f64() + g * g;
            *a = T::from_f64(acc);
            *p = T::from_f64(p.to_f64() - cfg.lr * g / (acc.sqrt() + cfg.eps));
        }
        if let Some((lo, hi)) = clamp {
            let v = p.to_f64();
            if v < lo || v > hi {
                *p = T::from_f64(v.clamp(lo, hi));
            }
        }
    }
}
