//! CSV and gnuplot emission.

use std::io::Write;
use std::path::Path;

use expid::EnsembleStats;

/// Shortest round-trip scientific notation, so reruns give identical bytes.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

fn suffixed(base: &str, d: usize) -> Vec<String> {
    if d == 1 {
        vec![base.to_string()]
    } else {
        (1..=d).map(|c| format!("{base}_{c}")).collect()
    }
}

/// Header of the full ensemble table written by `simulate`.
pub fn stats_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t",
        "mean_sq_error",
        "mean_sq_error_stderr",
        "mean_sq_state_dev",
        "mean_sq_state_dev_stderr",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(suffixed("mean_error", d));
    h.extend(suffixed("mean_u", d));
    h.extend(
        ["mean_sq_u", "var_u", "var_u_stderr"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

pub fn write_stats<W: Write>(out: W, stats: &EnsembleStats) -> csv::Result<()> {
    let d = stats.mean_u.first().map_or(1, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(stats_header(d))?;
    for i in 0..stats.times.len() {
        let mut row = vec![
            num(stats.times[i]),
            num(stats.mean_sq_error[i]),
            num(stats.mean_sq_error_se[i]),
            num(stats.mean_sq_state_dev[i]),
            num(stats.mean_sq_state_dev_se[i]),
        ];
        row.extend(stats.mean_error[i].iter().map(|v| num(*v)));
        row.extend(stats.mean_u[i].iter().map(|v| num(*v)));
        row.push(num(stats.mean_sq_u[i]));
        row.push(num(stats.var_u[i]));
        row.push(num(stats.var_u_se[i]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A table of named columns taken from an ensemble, one row per record.
pub struct Columns<'a> {
    pub names: &'a [&'a str],
    pub pick: fn(&EnsembleStats, usize) -> Vec<f64>,
}

/// `t, mean_sq_error, stderr`.
pub const ERROR_COLUMNS: Columns<'static> = Columns {
    names: &["t", "mean_sq_error", "stderr"],
    pick: |s, i| vec![s.times[i], s.mean_sq_error[i], s.mean_sq_error_se[i]],
};

/// `t, mean_sq_u, var_u, var_u_stderr`.
pub const INPUT_COLUMNS: Columns<'static> = Columns {
    names: &["t", "mean_sq_u", "var_u", "var_u_stderr"],
    pick: |s, i| vec![s.times[i], s.mean_sq_u[i], s.var_u[i], s.var_u_se[i]],
};

pub fn write_columns<W: Write>(out: W, stats: &EnsembleStats, cols: &Columns) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(cols.names)?;
    for i in 0..stats.times.len() {
        w.write_record((cols.pick)(stats, i).into_iter().map(num))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(
    path: &Path,
    f: impl FnOnce(std::fs::File) -> csv::Result<()>,
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    f(file).map_err(std::io::Error::other)
}

/// One line of a gnuplot `plot` command.
pub struct Curve {
    pub file: String,
    pub column: usize,
    pub title: String,
}

/// Gnuplot panel: a y label, a log-scale flag and its curves.
pub struct Panel {
    pub ylabel: String,
    pub log_y: bool,
    pub curves: Vec<Curve>,
}

pub fn gnuplot_script(image: &str, panels: &[Panel]) -> String {
    let mut s = String::new();
    let height = 400 * panels.len().max(1);
    s += &format!("set terminal pngcairo size 900,{height}\n");
    s += &format!("set output '{image}'\n");
    s += "set datafile separator ','\n";
    s += "set xlabel 't'\n";
    s += "set key top right autotitle columnhead\n";
    if panels.len() > 1 {
        s += &format!("set multiplot layout {},1\n", panels.len());
    }
    for p in panels {
        s += &format!("set ylabel '{}'\n", p.ylabel);
        s += if p.log_y {
            "set logscale y\n"
        } else {
            "unset logscale y\n"
        };
        let lines: Vec<String> = p
            .curves
            .iter()
            .map(|c| {
                format!(
                    "'{}' using 1:{} with lines title '{}'",
                    c.file, c.column, c.title
                )
            })
            .collect();
        s += &format!("plot {}\n", lines.join(", \\\n     "));
    }
    if panels.len() > 1 {
        s += "unset multiplot\n";
    }
    s
}
