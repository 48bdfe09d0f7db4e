use crate::error::{Error, Result};

/// Paired predictions and targets.
#[derive(Debug, Clone, Copy)]
pub struct RankBatch<'a> {
    pub predictions: &'a [f64],
    pub targets: &'a [f64],
}

impl<'a> RankBatch<'a> {
    pub fn new(predictions: &'a [f64], targets: &'a [f64]) -> Result<Self> {
        if predictions.len() != targets.len() {
            return Err(Error::contract(format!(
                "rank batch lengths differ: {} predictions vs {} targets",
                predictions.len(),
                targets.len()
            )));
        }
        Ok(Self {
            predictions,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub(crate) fn require_pairs(&self, what: &str) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::contract(format!(
                "{what} needs at least 2 items, got {}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// A correlation value. `degenerate` is set when an input was constant (or a
/// subset too small) and the value was defined as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corr {
    pub value: f64,
    pub degenerate: bool,
}

impl Corr {
    fn ok(value: f64) -> Self {
        Self {
            value,
            degenerate: false,
        }
    }

    fn zero() -> Self {
        Self {
            value: 0.0,
            degenerate: true,
        }
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Kendall tau-a: `(concordant - discordant) / C(n, 2)`; tied pairs count as
/// neither.
pub fn kendall_tau(batch: RankBatch<'_>) -> Result<Corr> {
    batch.require_pairs("kendall_tau")?;
    let (x, y) = (batch.predictions, batch.targets);
    let n = x.len();
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let s = (x[i] - x[j]).signum_or_zero() * (y[i] - y[j]).signum_or_zero();
            score += s as i64;
        }
    }
    let value = score as f64 / (n * (n - 1) / 2) as f64;
    Ok(Corr {
        value,
        degenerate: is_constant(x) || is_constant(y),
    })
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    fn signum_or_zero(self) -> f64 {
        if self > 0.0 {
            1.0
        } else if self < 0.0 {
            -1.0
        } else {
            0.0
        }
    }
}

/// Pearson product-moment correlation.
pub fn pearson(batch: RankBatch<'_>) -> Result<Corr> {
    batch.require_pairs("pearson")?;
    Ok(pearson_raw(batch.predictions, batch.targets))
}

fn pearson_raw(x: &[f64], y: &[f64]) -> Corr {
    if is_constant(x) || is_constant(y) {
        return Corr::zero();
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    Corr::ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(batch: RankBatch<'_>) -> Result<Corr> {
    batch.require_pairs("spearman")?;
    Ok(pearson_raw(
        &average_ranks(batch.predictions),
        &average_ranks(batch.targets),
    ))
}

/// Spearman over the `ceil(k_fraction * n)` items with the highest targets.
/// Target ties at the cut are resolved by original index.
pub fn spearman_at_topk(batch: RankBatch<'_>, k_fraction: f64) -> Result<Corr> {
    if !(k_fraction > 0.0 && k_fraction <= 1.0) {
        return Err(Error::contract(format!(
            "k_fraction must be in (0, 1], got {k_fraction}"
        )));
    }
    let n = batch.len();
    // The epsilon keeps e.g. 0.1 * 10 from rounding up to 2.
    let k = ((k_fraction * n as f64 - 1e-9).ceil() as usize).min(n);
    if k < 2 {
        return Ok(Corr::zero());
    }
    let t = batch.targets;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t[b].total_cmp(&t[a]).then(a.cmp(&b)));
    order.truncate(k);
    let p: Vec<f64> = order.iter().map(|&i| batch.predictions[i]).collect();
    let y: Vec<f64> = order.iter().map(|&i| t[i]).collect();
    spearman(RankBatch::new(&p, &y)?)
}

/// One row of the metrics report.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricRow {
    pub split: String,
    pub n: usize,
    pub kendall: f64,
    pub spearman: f64,
    pub pearson: f64,
    pub spearman_at_top20: f64,
    pub spearman_at_top50: f64,
}

impl MetricRow {
    pub const CSV_HEADER: &'static str =
        "split,n,kendall,spearman,pearson,spearman_at_top20,spearman_at_top50";

    pub fn compute(split: &str, batch: RankBatch<'_>) -> Result<Self> {
        Ok(Self {
            split: split.to_string(),
            n: batch.len(),
            kendall: kendall_tau(batch)?.value,
            spearman: spearman(batch)?.value,
            pearson: pearson(batch)?.value,
            spearman_at_top20: spearman_at_topk(batch, 0.2)?.value,
            spearman_at_top50: spearman_at_topk(batch, 0.5)?.value,
        })
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.split,
            self.n,
            self.kendall,
            self.spearman,
            self.pearson,
            self.spearman_at_top20,
            self.spearman_at_top50
        )
    }
}

/// Renders metric rows as the report CSV.
pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(MetricRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b<'a>(x: &'a [f64], y: &'a [f64]) -> RankBatch<'a> {
        RankBatch::new(x, y).unwrap()
    }

    #[test]
    fn kendall_one_swap() {
        let tau = kendall_tau(b(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0])).unwrap();
        assert!((tau.value - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_reversed() {
        let x = [0.3, -1.0, 2.5, 7.0, 1.1];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        for f in [kendall_tau, spearman, pearson] {
            assert!((f(b(&x, &x)).unwrap().value - 1.0).abs() < 1e-12);
            assert!((f(b(&x, &neg)).unwrap().value + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_input_is_flagged_zero() {
        let c = spearman(b(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(c, Corr { value: 0.0, degenerate: true });
        assert!(pearson(b(&[1.0, 2.0], &[5.0, 5.0])).unwrap().degenerate);
    }

    #[test]
    fn short_batches_are_rejected() {
        assert!(kendall_tau(b(&[1.0], &[1.0])).is_err());
        assert!(RankBatch::new(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn topk_full_and_two_point() {
        let x = [0.1, 0.5, 0.2, 0.9, 0.3, 0.8, 0.7, 0.4, 0.6, 0.0];
        let y = [1.0, 3.0, 2.0, 9.0, 4.0, 7.0, 8.0, 5.0, 6.0, 0.5];
        assert_eq!(
            spearman_at_topk(b(&x, &y), 1.0).unwrap(),
            spearman(b(&x, &y)).unwrap()
        );
        let two = spearman_at_topk(b(&x, &y), 0.2).unwrap();
        assert!((two.value.abs() - 1.0).abs() < 1e-12, "{}", two.value);
        assert!(spearman_at_topk(b(&x, &y), 0.1).unwrap().degenerate);
        assert!(spearman_at_topk(b(&x, &y), 0.0).is_err());
    }
}
