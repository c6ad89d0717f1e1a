//! CSV writers and gnuplot scripts. Floats are written with 17 significant
//! digits so a value survives a text round trip exactly.

use std::io::{self, Write};

use crate::continuation::Fold;
use crate::dynamics::TrajectorySample;
use crate::experiments::{BranchRun, CriticalPatch, GalleryProfile, SweepRow};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(
        out,
        "model,kernel,L,N,avg_biomass,max_biomass,steps,converged,last_step_delta"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.variant.label(),
            r.variant.kernel_label(),
            fmt_f64(r.l),
            r.n,
            fmt_f64(r.avg_biomass),
            fmt_f64(r.max_biomass),
            r.steps,
            r.converged,
            fmt_f64(r.last_step_delta)
        )?;
    }
    Ok(())
}

pub fn write_lcrit_csv<W: Write>(mut out: W, results: &[CriticalPatch]) -> io::Result<()> {
    writeln!(out, "model,kernel,L_crit,threshold,rule")?;
    for r in results {
        let l = r.l_crit.map_or_else(|| "below-range".to_string(), fmt_f64);
        writeln!(
            out,
            "{},{},{},{},{}",
            r.variant.label(),
            r.variant.kernel_label(),
            l,
            fmt_f64(r.threshold),
            r.rule
        )?;
    }
    Ok(())
}

/// One row per branch point. Runs that failed contribute no rows.
pub fn write_branch_csv<W: Write>(mut out: W, runs: &[BranchRun]) -> io::Result<()> {
    writeln!(
        out,
        "model,kernel,branch_id,point_index,arclength,A,max_v,avg_v,stable,mean_v,d_w,residual_norm"
    )?;
    for run in runs {
        let Ok(branch) = &run.outcome else { continue };
        let id = run.branch_id();
        for (k, p) in branch.points.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                run.variant.label(),
                run.variant.kernel_label(),
                id,
                k,
                fmt_f64(p.arclength),
                fmt_f64(p.a),
                fmt_f64(p.max_v),
                fmt_f64(p.avg_v),
                p.stable.label(),
                fmt_f64(p.mean_v),
                fmt_f64(run.d_w),
                fmt_f64(p.residual_norm)
            )?;
        }
    }
    Ok(())
}

/// Folds and termination reasons, one row per fold (or one row with
/// empty fold columns for a branch without folds).
pub fn write_folds_csv<W: Write>(mut out: W, runs: &[BranchRun]) -> io::Result<()> {
    writeln!(out, "model,kernel,branch_id,termination,fold_index,A,arclength")?;
    for run in runs {
        let id = run.branch_id();
        let (term, folds): (String, &[Fold]) = match &run.outcome {
            Ok(b) => (b.termination.label().to_string(), &b.folds),
            Err(e) => (format!("error: {}", e.to_string().replace(',', ";")), &[]),
        };
        let head = format!("{},{},{},{}", run.variant.label(), run.variant.kernel_label(), id, term);
        if folds.is_empty() {
            writeln!(out, "{head},,,")?;
        }
        for (k, f) in folds.iter().enumerate() {
            writeln!(out, "{head},{k},{},{}", fmt_f64(f.p), fmt_f64(f.s))?;
        }
    }
    Ok(())
}

pub fn write_profile_csv<W: Write>(mut out: W, x: &[f64], v: &[f64], w: &[f64]) -> io::Result<()> {
    writeln!(out, "x,v,w")?;
    for ((x, v), w) in x.iter().zip(v).zip(w) {
        writeln!(out, "{},{},{}", fmt_f64(*x), fmt_f64(*v), fmt_f64(*w))?;
    }
    Ok(())
}

/// File stem for a gallery profile, e.g. `nonlocal-laplace_dw80_A1.2`.
pub fn gallery_stem(p: &GalleryProfile) -> String {
    format!("{}_dw{}_A{}", p.variant.id(), p.d_w, p.a_target)
}

pub fn write_trajectory_csv<W: Write>(mut out: W, samples: &[TrajectorySample]) -> io::Result<()> {
    writeln!(out, "t,min_v,max_v,avg_v,max_w")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(s.t),
            fmt_f64(s.min_v),
            fmt_f64(s.max_v),
            fmt_f64(s.avg_v),
            fmt_f64(s.max_w)
        )?;
    }
    Ok(())
}

/// Average stationary biomass against `L` on a log axis, one curve per
/// model, with the collapse threshold.
pub fn sweep_plot_script(threshold: f64) -> String {
    format!(
        r#"set datafile separator ","
set logscale x
set xlabel "L"
set ylabel "average biomass"
set key top left
set terminal pngcairo size 900,600
set output "sweep.png"
plot "< awk -F, 'NR>1 && $1==\"local\"' sweep.csv" using 3:5 with linespoints title "local", \
     "< awk -F, 'NR>1 && $2==\"laplace\"' sweep.csv" using 3:5 with linespoints title "non-local laplace", \
     "< awk -F, 'NR>1 && $2==\"super-gaussian\"' sweep.csv" using 3:5 with linespoints title "non-local super-gaussian", \
     {threshold} with lines dashtype 2 title "threshold"
"#
    )
}

/// Maximum biomass against `A` for each model at one `d_w`, with the
/// kinetic threshold `A = 2B` and the floor `B/A`.
pub fn branch_plot_script(d_w: f64, b: f64) -> String {
    format!(
        r#"set datafile separator ","
set xlabel "A"
set ylabel "max v"
set xrange [0:3]
set terminal pngcairo size 900,600
set output "branch_dw{d_w}.png"
set arrow from {twob},graph 0 to {twob},graph 1 nohead dashtype 2
plot for [m in "local laplace super-gaussian"] \
     "< awk -F, -v m=".m." 'NR>1 && $2==m && $11+0=={d_w}' branch.csv" using 6:7 with lines title m, \
     [0.1:3] {b}/x with lines dashtype 3 title "B/A"
"#,
        twob = 2.0 * b
    )
}

/// Upper-branch profiles from `profiles/`.
pub fn profile_plot_script(stems: &[String]) -> String {
    let mut s = String::from(
        "set datafile separator \",\"\nset xlabel \"x\"\nset ylabel \"v\"\nset terminal pngcairo size 900,600\nset output \"profiles.png\"\nplot ",
    );
    let curves: Vec<String> = stems
        .iter()
        .map(|st| format!("\"profiles/{st}.csv\" using 1:2 with lines title \"{st}\""))
        .collect();
    s.push_str(&curves.join(", \\\n     "));
    s.push('\n');
    s
}
