use crate::dataset::record::{DatasetManifest, FeatureMatrix, ZcDataset, ZcRecord};
use crate::error::{Error, Result};
use crate::netzoo::ProxyName;

/// Min-max scaling to `[0, 1]`. A constant vector maps to all zeros.
pub fn encode_minmax(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|&x| ((x - lo) / range).clamp(0.0, 1.0)).collect()
}

/// Encodes each proxy vector per architecture, right-pads it with zeros to
/// `lmax`, and concatenates the blocks in `proxy_order`.
pub fn encode_features(records: &[ZcRecord], lmax: usize, proxy_order: &[ProxyName]) -> Result<FeatureMatrix> {
    let cols = lmax * proxy_order.len();
    let mut data = Vec::with_capacity(records.len() * cols);
    for r in records {
        if r.num_nodes > lmax {
            return Err(Error::contract(format!(
                "record `{}` has {} nodes, more than Lmax = {lmax}",
                r.arch_id, r.num_nodes
            )));
        }
        for p in proxy_order {
            let v = r.proxies.get(p).ok_or_else(|| {
                Error::contract(format!("record `{}` lacks proxy {p}", r.arch_id))
            })?;
            if v.len() != r.num_nodes {
                return Err(Error::contract(format!(
                    "record `{}`: {p} has {} values for {} nodes",
                    r.arch_id,
                    v.len(),
                    r.num_nodes
                )));
            }
            data.extend(encode_minmax(v));
            data.extend(std::iter::repeat_n(0.0, lmax - v.len()));
        }
    }
    Ok(FeatureMatrix {
        rows: records.len(),
        cols,
        data,
    })
}

/// [`encode_features`] plus the label column.
pub fn pad_and_concat(
    records: &[ZcRecord],
    lmax: usize,
    proxy_order: &[ProxyName],
) -> Result<(FeatureMatrix, Vec<f64>)> {
    let x = encode_features(records, lmax, proxy_order)?;
    let y = records.iter().map(ZcRecord::label).collect::<Result<Vec<_>>>()?;
    Ok((x, y))
}

/// Proxy order shared by all records (alphabetical), or an error when the
/// records disagree.
pub fn common_proxy_order(records: &[ZcRecord]) -> Result<Vec<ProxyName>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let order: Vec<ProxyName> = first.proxies.keys().copied().collect();
    for r in records {
        if !r.proxies.keys().copied().eq(order.iter().copied()) {
            return Err(Error::contract(format!(
                "record `{}` carries a different proxy set than `{}`",
                r.arch_id, first.arch_id
            )));
        }
    }
    Ok(order)
}

impl ZcDataset {
    /// Builds `X, Y` with `lmax` defaulting to the largest node count and the
    /// proxy order to the alphabetical set present in the records.
    pub fn from_records(
        records: Vec<ZcRecord>,
        lmax: Option<usize>,
        source: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        let proxy_order = common_proxy_order(&records)?;
        let lmax = lmax.unwrap_or_else(|| records.iter().map(|r| r.num_nodes).max().unwrap_or(0));
        let (x, y) = pad_and_concat(&records, lmax, &proxy_order)?;
        Ok(Self {
            records,
            manifest: DatasetManifest {
                lmax,
                proxy_order,
                seed,
                source: source.into(),
            },
            x,
            y,
            split: None,
        })
    }

    /// Encodes records against an existing layout (e.g. search candidates).
    pub fn encode_with(manifest: &DatasetManifest, records: &[ZcRecord]) -> Result<FeatureMatrix> {
        encode_features(records, manifest.lmax, &manifest.proxy_order)
    }
}
