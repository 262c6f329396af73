use std::path::PathBuf;

use clap::Args;
use hetrisk::pc::verify_total_variance;
use hetrisk::{FactorModel, ModelKind, PricePanel};
use nalgebra::{DMatrix, SymmetricEigen};

use super::build::returns_panel;
use crate::{CliError, CliResult};

/// Structural checks on a model file. With `--prices`, the model is also
/// compared against the sample covariance of its source returns.
#[derive(Args)]
pub struct VerifyArgs {
    /// Model JSON written by `build`.
    model: PathBuf,
    /// Price CSV the model was built from.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Returns to compare against (default: the model's own observation
    /// count).
    #[arg(long)]
    lookback: Option<usize>,
    /// Relative tolerance for symmetry and the factor-form identity.
    #[arg(long, default_value_t = 1e-10)]
    structure_tol: f64,
    /// Bound on `‖Γ Γ⁻¹ - I‖∞`.
    #[arg(long, default_value_t = 1e-8)]
    inverse_tol: f64,
    /// Bound on the relative total-variance error and on `|T_ii|` for PC
    /// models.
    #[arg(long, default_value_t = 1e-10)]
    variance_tol: f64,
}

struct Report {
    failures: Vec<String>,
}

impl Report {
    fn check(&mut self, name: &str, value: f64, limit: f64) {
        let ok = value <= limit;
        println!(
            "{} {name}: {value:.3e} (limit {limit:.1e})",
            if ok { "ok  " } else { "FAIL" }
        );
        if !ok {
            self.failures
                .push(format!("{name} = {value:.3e} exceeds {limit:.1e}"));
        }
    }
}

fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn run(a: VerifyArgs) -> CliResult<()> {
    let model = FactorModel::read_json(&a.model)?;
    let n = model.num_tickers();
    let gamma = &model.cov_mat;
    let scale = gamma.amax().max(f64::MIN_POSITIVE);
    let mut r = Report {
        failures: Vec::new(),
    };

    r.check(
        "asymmetry",
        (gamma - gamma.transpose()).amax() / scale,
        a.structure_tol,
    );
    r.check(
        "factor form",
        (gamma - model.factor_form_covariance()).amax() / scale,
        a.structure_tol,
    );
    let bad_spec = model
        .spec_risk
        .iter()
        .filter(|x| !(x.is_finite() && **x >= 0.0))
        .count();
    r.check("invalid specific risks", bad_spec as f64, 0.0);
    // The factor covariance itself may be indefinite: the singleton fix
    // moves the full variance of a single-ticker sub-industry into the
    // specific risk and zeroes that factor's own variance only.
    match &model.inv_cov {
        Some(inv) => {
            let min_eig = SymmetricEigen::new((gamma + gamma.transpose()) * 0.5)
                .eigenvalues
                .min();
            println!(
                "{} positive definite: min eigenvalue {min_eig:.3e}",
                if min_eig > 0.0 { "ok  " } else { "FAIL" }
            );
            if !(min_eig > 0.0) {
                r.failures
                    .push(format!("min eigenvalue {min_eig:.3e} is not positive"));
            }
            r.check(
                "inverse residual",
                max_row_sum(&(gamma * inv - DMatrix::identity(n, n))),
                a.inverse_tol,
            );
        }
        None => println!("-    inverse: absent (singular model)"),
    }

    if let Some(path) = &a.prices {
        let prices = PricePanel::read_csv(path)?;
        let panel = returns_panel(&prices, Some(a.lookback.unwrap_or(model.meta.observations)))?;
        let tv = verify_total_variance(&model, &panel)?;
        r.check(
            "total variance error",
            tv.max_rel_variance_error,
            a.variance_tol,
        );
        if model.meta.kind == ModelKind::PrincipalComponent {
            r.check("max |T_ii|", tv.max_abs_t_diag, a.variance_tol);
        }
    }

    if r.failures.is_empty() {
        println!("{}: all checks passed", a.model.display());
        Ok(())
    } else {
        Err(CliError::Checks(r.failures))
    }
}
