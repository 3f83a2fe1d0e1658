//! find-cc: locate rest shapes of the rescaled flow. Single mode runs a
//! Newton search from the given shape and linearizes there; survey mode
//! clusters many randomized searches into distinct families.

use std::path::Path;

use nalgebra::DVector;
use spindown::equilibria::{self, EquilibriumOptions};
use spindown::masses::MassSystem;
use spindown::mcgehee::{self, BlowupState};
use spindown::regular::AngleState;
use spindown::shape::GradientMode;
use spindown::Floors;

use crate::output::{fmt_bool, fmt_f, write_atomic, Csv};
use crate::scenario::Scenario;
use crate::AppError;

/// Sup norm of the full rescaled field at the located rest point: every
/// component must vanish there, not just the potential gradient.
fn field_sup_at_rest(
    ms: &MassSystem,
    sigma: &DVector<f64>,
    radial: f64,
    floors: &Floors,
) -> Result<f64, AppError> {
    let d = ms.shape_dim();
    let bs = BlowupState {
        rho: 0.0,
        radial,
        shape_mom: DVector::zeros(d),
        sigma: sigma.clone(),
        w: AngleState {
            u: 0.6,
            v: 0.0,
            c: 0.8,
            alpha: 0.0,
        },
    };
    let y = bs.pack();
    let mut out = DVector::zeros(y.len());
    mcgehee::blowup_field(ms, &y, GradientMode::CentralFd, floors, &mut out)?;
    Ok(out.amax())
}

pub fn run(sc: &Scenario, out: &Path, tol: f64, seed: u64) -> Result<(), AppError> {
    let sect = sc
        .find_cc
        .as_ref()
        .ok_or_else(|| AppError::Schema("scenario: find-cc needs a [find_cc] section".into()))?;
    let ms = MassSystem::new(sc.system.masses.clone())?;
    let opts = EquilibriumOptions::default();

    if sect.survey {
        let families = equilibria::survey(&ms, sect.n_samples, seed, &opts)?;
        if families.is_empty() {
            return Err(AppError::Convergence(format!(
                "survey: none of the {} randomized starts converged",
                sect.n_samples
            )));
        }
        let d = ms.shape_dim();
        let mut header: Vec<String> = vec![
            "family".into(),
            "hits".into(),
            "potential".into(),
            "grad_norm".into(),
            "grad_tolerance".into(),
            "within_tolerance".into(),
        ];
        header.extend((0..d).map(|k| format!("sigma_{k}")));
        let mut csv = Csv::new(header);
        for (i, fam) in families.iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                fam.hits.to_string(),
                fmt_f(fam.potential),
                fmt_f(fam.grad_norm),
                fmt_f(tol),
                fmt_bool(fam.grad_norm < tol),
            ];
            row.extend((0..d).map(|k| fmt_f(fam.sigma[k])));
            csv.push(row);
        }
        let table = csv.render();
        write_atomic(out, "families.csv", &table)?;
        let json = serde_json::to_string_pretty(&families)
            .map_err(|e| AppError::Schema(format!("serialization: {e}")))?;
        write_atomic(out, "families.json", &json)?;
        print!("{table}");
        let converged: usize = families.iter().map(|f| f.hits).sum();
        println!(
            "{} rest-shape families from {} starts ({} starts escaped the chart or failed); \
             wrote families.csv and families.json to {}",
            families.len(),
            sect.n_samples,
            sect.n_samples - converged,
            out.display()
        );
        return Ok(());
    }

    let guess = sect.sigma_guess.as_ref().ok_or_else(|| {
        AppError::Schema("scenario: find_cc.sigma_guess is required unless survey = true".into())
    })?;
    let sigma0 = DVector::from_vec(guess.clone());
    let sigma = equilibria::find_central_config(&ms, &sigma0, &opts)?;
    let report = equilibria::linearize(&ms, &sigma, &opts)?;

    // Checked summary: gradient at convergence, the radial identity
    // radial = -sqrt(2 V), and the full-field sup at the rest point.
    let radial_residual = (report.radial + (2.0 * report.potential).sqrt()).abs();
    let field_sup = field_sup_at_rest(&ms, &report.sigma, report.radial, &opts.floors)?;
    let mut summary = Csv::new(vec!["quantity", "value", "tolerance", "within_tolerance"]);
    summary.push(vec![
        "grad_norm".into(),
        fmt_f(report.grad_norm),
        fmt_f(tol),
        fmt_bool(report.grad_norm < tol),
    ]);
    summary.push(vec![
        "radial_identity_residual".into(),
        fmt_f(radial_residual),
        fmt_f(1e-12),
        fmt_bool(radial_residual < 1e-12),
    ]);
    summary.push(vec![
        "rescaled_field_sup_at_rest".into(),
        fmt_f(field_sup),
        fmt_f(1e-9),
        fmt_bool(field_sup < 1e-9),
    ]);
    let summary_table = summary.render();
    write_atomic(out, "equilibrium.csv", &summary_table)?;

    let mut modes = Csv::new(vec![
        "mode",
        "c",
        "lambda_plus_re",
        "lambda_plus_im",
        "lambda_minus_re",
        "lambda_minus_im",
        "stable",
        "resonant",
        "resonance_tolerance",
    ]);
    for (j, m) in report.modes.iter().enumerate() {
        modes.push(vec![
            j.to_string(),
            fmt_f(m.c),
            fmt_f(m.lambda_plus.re),
            fmt_f(m.lambda_plus.im),
            fmt_f(m.lambda_minus.re),
            fmt_f(m.lambda_minus.im),
            fmt_bool(m.stable),
            fmt_bool(m.resonant),
            fmt_f(opts.resonance_tol),
        ]);
    }
    write_atomic(out, "modes.csv", &modes.render())?;

    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| AppError::Schema(format!("serialization: {e}")))?;
    write_atomic(out, "equilibrium.json", &json)?;

    print!("{summary_table}");
    println!(
        "rest shape with potential {:.12}, radial {:.12}; dims (stable, unstable, center) = ({}, {}, {}); wrote equilibrium.csv, modes.csv, equilibrium.json to {}",
        report.potential,
        report.radial,
        report.stable_dim,
        report.unstable_dim,
        report.center_dim,
        out.display()
    );
    Ok(())
}
