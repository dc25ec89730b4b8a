//! `report`: markdown summary plus plot-ready CSV files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;

use evotraj::objectives::Experiment;

use crate::analyze::{load_run, RunData};
use crate::error::{create_dir, read_to_string, write, CliError, Result};

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn markdown_table(rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    let Some((head, body)) = rows.split_first() else {
        return s;
    };
    let _ = writeln!(s, "| {} |", head.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(head.len()));
    for r in body {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

fn legend() -> String {
    let mut rows = vec![vec!["Experiment".to_string(), "Objectives".to_string()]];
    for e in Experiment::ALL {
        let names: Vec<&str> = e.objectives().iter().map(|o| o.name()).collect();
        rows.push(vec![e.code().to_string(), names.join(", ")]);
    }
    markdown_table(&rows)
}

/// Rank-0 members of generation `g` as `index,<objectives>` rows in natural
/// units, ascending in the first objective.
pub fn pareto_csv(run: &RunData, g: usize) -> String {
    let names: Vec<String> = run.run["experiment"]["objectives"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
        .unwrap_or_default();
    let mut rows: Vec<(usize, Vec<f64>)> = run
        .generation(g)
        .into_iter()
        .filter(|r| r["rank"].as_u64() == Some(0) && r["failed"] == Value::Bool(false))
        .filter_map(|r| {
            let v: Vec<f64> = r["values"].as_array()?.iter().filter_map(Value::as_f64).collect();
            Some((r["index"].as_u64()? as usize, v))
        })
        .collect();
    rows.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]).then(a.0.cmp(&b.0)));
    let mut s = format!("index,{}\n", names.join(","));
    for (i, v) in rows {
        let vals: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{i},{}", vals.join(","));
    }
    s
}

/// Final front member with the lowest validation RMSE.
fn best_front_member(run: &RunData) -> Option<usize> {
    run.generation(run.last_generation())
        .into_iter()
        .filter(|r| r["rank"].as_u64() == Some(0))
        .filter_map(|r| Some((r["index"].as_u64()? as usize, r["rmse_val"].as_f64()?)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

/// Writes `report.md` and `plots/` into `out`; returns the report path.
pub fn run(analysis: &Path, out: &Path) -> Result<PathBuf> {
    let inputs_path = analysis.join("inputs.json");
    let inputs: Value = serde_json::from_str(&read_to_string(&inputs_path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", inputs_path.display())))?;
    let summary = read_to_string(&analysis.join("summary.csv"))?;
    let spread = read_to_string(&analysis.join("spread.csv"))?;
    let correlations = read_to_string(&analysis.join("correlations.csv"))?;
    let runs = inputs["runs"]
        .as_array()
        .ok_or_else(|| CliError::Data(format!("{}: missing runs", inputs_path.display())))?
        .iter()
        .map(|p| load_run(Path::new(p.as_str().unwrap_or_default())))
        .collect::<Result<Vec<_>>>()?;

    let mut md = String::from("# evotraj report\n\n## Experiments\n\n");
    md.push_str(&legend());
    md.push_str("\n## Metric mean and standard deviation\n\n");
    let mut summary_rows = csv_rows(&summary);
    if let Some(h) = summary_rows.first_mut() {
        h[0] = "Metric".into();
    }
    md.push_str(&markdown_table(&summary_rows));
    md.push_str("\n## Good models in the final generation\n\n");
    let mut spread_rows = vec![vec!["Experiment".to_string(), "Good".to_string()]];
    for r in csv_rows(&spread).into_iter().skip(1) {
        spread_rows.push(vec![r[0].clone(), format!("{}/{}", r[1], r[2])]);
    }
    md.push_str(&markdown_table(&spread_rows));
    md.push_str("\n## Spearman rank-order correlation\n\n");
    let mut corr_rows = csv_rows(&correlations);
    if let Some(h) = corr_rows.first_mut() {
        *h = vec!["Pair".into(), "Coefficient".into(), "p".into(), "n".into()];
    }
    md.push_str(&markdown_table(&corr_rows));
    let _ = writeln!(
        md,
        "\nPooled evaluations: {}\n\n## Runs\n",
        inputs["pooled_evaluations"].as_u64().unwrap_or(0)
    );

    let pareto_dir = out.join("plots").join("pareto");
    let traj_dir = out.join("plots").join("traj");
    create_dir(&pareto_dir)?;
    create_dir(&traj_dir)?;
    let mut run_rows = vec![[
        "Run",
        "Experiment",
        "Seed",
        "Front size",
        "Best RMSE_val",
        "Best RMSE_test",
    ]
    .map(String::from)
    .to_vec()];
    for r in &runs {
        let last = r.last_generation();
        for g in 0..=last {
            write(&pareto_dir.join(format!("{}_g{g}.csv", r.name)), pareto_csv(r, g))?;
        }
        if let Some(i) = best_front_member(r) {
            let src = r.dir.join("final").join(format!("p{i}.test.csv"));
            write(&traj_dir.join(format!("{}_p{i}.csv", r.name)), read_to_string(&src)?)?;
        }
        let front = r
            .generation(last)
            .iter()
            .filter(|x| x["rank"].as_u64() == Some(0))
            .count();
        let (bv, bt) = r.best_rmse(last).map_or(("-".to_string(), "-".to_string()), |(v, t)| {
            (format!("{v:.6}"), format!("{t:.6}"))
        });
        run_rows.push(vec![
            r.name.clone(),
            r.experiment.code().to_string(),
            r.run["seed"].to_string(),
            front.to_string(),
            bv,
            bt,
        ]);
    }
    md.push_str(&markdown_table(&run_rows));
    create_dir(out)?;
    let path = out.join("report.md");
    write(&path, md)?;
    Ok(path)
}
