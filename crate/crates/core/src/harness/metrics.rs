use std::io::{self, BufRead, Write};

use super::EvalReport;

pub const AGGREGATE_HEADER: &str =
    "step,method,env,seed_count,main_success_mean,main_success_se,random_success_mean,random_success_se";
pub const SEED_HEADER: &str = "step,main_success,random_success";

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub step: u64,
    pub method: String,
    pub env: String,
    pub seed_count: usize,
    pub main_mean: f64,
    pub main_se: f64,
    pub random_mean: f64,
    pub random_se: f64,
}

/// Mean and standard error (sample standard deviation / √n).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Collapses per-seed curves (all on the same step grid) into mean/SE rows.
pub fn aggregate(method: &str, env: &str, per_seed: &[Vec<EvalReport>]) -> Vec<AggregateRow> {
    let Some(first) = per_seed.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| {
            let main: Vec<f64> = per_seed.iter().map(|r| r[i].main_success).collect();
            let random: Vec<f64> = per_seed.iter().map(|r| r[i].random_success).collect();
            let (main_mean, main_se) = mean_se(&main);
            let (random_mean, random_se) = mean_se(&random);
            AggregateRow {
                step: first[i].step,
                method: method.to_string(),
                env: env.to_string(),
                seed_count: per_seed.len(),
                main_mean,
                main_se,
                random_mean,
                random_se,
            }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(mut w: W, rows: &[AggregateRow]) -> io::Result<()> {
    writeln!(w, "{AGGREGATE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            r.step, r.method, r.env, r.seed_count, r.main_mean, r.main_se, r.random_mean, r.random_se
        )?;
    }
    Ok(())
}

pub fn read_aggregate_csv<R: BufRead>(r: R) -> io::Result<Vec<AggregateRow>> {
    let bad = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != AGGREGATE_HEADER {
                return Err(bad(format!("expected header `{AGGREGATE_HEADER}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let row = (|| {
            if f.len() != 8 {
                return None;
            }
            Some(AggregateRow {
                step: f[0].parse().ok()?,
                method: f[1].to_string(),
                env: f[2].to_string(),
                seed_count: f[3].parse().ok()?,
                main_mean: f[4].parse().ok()?,
                main_se: f[5].parse().ok()?,
                random_mean: f[6].parse().ok()?,
                random_se: f[7].parse().ok()?,
            })
        })()
        .ok_or_else(|| bad(format!("line {}: malformed row", i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_seed_csv<W: Write>(mut w: W, reports: &[EvalReport]) -> io::Result<()> {
    writeln!(w, "{SEED_HEADER}")?;
    for r in reports {
        writeln!(w, "{},{:.6},{:.6}", r.step, r.main_success, r.random_success)?;
    }
    Ok(())
}

/// Mean of a curve's values (area under the curve per evaluation).
pub fn auc(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(step: u64, main: f64, random: f64) -> EvalReport {
        EvalReport { step, main_success: main, random_success: random, main_outcomes: vec![], random_outcomes: vec![] }
    }

    #[test]
    fn standard_error() {
        let (m, se) = mean_se(&[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(m, 0.75);
        assert!((se - (0.25f64 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_se(&[0.3]), (0.3, 0.0));
    }

    #[test]
    fn aggregate_roundtrip() {
        let seeds =
            vec![vec![report(0, 0.0, 0.25), report(5, 1.0, 0.5)], vec![report(0, 0.0, 0.75), report(5, 0.5, 0.5)]];
        let rows = aggregate("sierl", "hallway2", &seeds);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].main_mean, 0.75);
        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().nth(2).unwrap(), "5,sierl,hallway2,2,0.750000,0.250000,0.500000,0.000000");
        assert_eq!(read_aggregate_csv(buf.as_slice()).unwrap(), rows);
        assert!(read_aggregate_csv("x\n".as_bytes()).is_err());
    }
}
