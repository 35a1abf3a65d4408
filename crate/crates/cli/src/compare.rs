//! Learning-curve comparison: environment samples needed to reach a reward.

use std::path::Path;

use anyhow::{anyhow, bail, Context};

const HEADER: [&str; 4] = ["iteration", "timesteps", "mean_reward", "mean_ep_len"];

/// `(timesteps, mean_reward)` rows of a learning-curve CSV.
pub fn read_curve(path: &Path) -> anyhow::Result<Vec<(u64, f64)>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().with_context(|| format!("{}: line 1", path.display()))?.clone();
    if headers.iter().map(str::trim).ne(HEADER) {
        bail!("{}: line 1: expected header `{}`", path.display(), HEADER.join(","));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            anyhow!("{}: line {line}: {e}", path.display())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        let timesteps = field(1).parse::<u64>().map_err(|_| anyhow!("{}: line {line}: bad timesteps `{}`", path.display(), field(1)))?;
        let reward = field(2).parse::<f64>().ok().filter(|r| r.is_finite()).ok_or_else(|| anyhow!("{}: line {line}: bad mean_reward `{}`", path.display(), field(2)))?;
        rows.push((timesteps, reward));
    }
    Ok(rows)
}

/// Timesteps at the first row whose mean reward reaches `threshold`.
pub fn samples_to_threshold(curve: &[(u64, f64)], threshold: f64) -> Option<u64> {
    curve.iter().find(|&&(_, r)| r >= threshold).map(|&(t, _)| t)
}

pub fn render(rows: &[(String, Option<u64>)], threshold: f64) -> String {
    let mut s = format!("curve,samples_to_{threshold}\n");
    for (name, n) in rows {
        let v = n.map_or_else(|| "not reached".to_string(), |n| n.to_string());
        s.push_str(&format!("{name},{v}\n"));
    }
    s
}
