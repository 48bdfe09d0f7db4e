use crate::error::{Error, Result};
use crate::gbdt::model::GbdtModel;
use crate::netzoo::ProxyName;

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRow {
    pub proxy: ProxyName,
    pub node_index: usize,
    pub importance: f64,
}

/// Importances laid out on the (proxy, node position) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub proxy_order: Vec<ProxyName>,
    pub lmax: usize,
    pub rows: Vec<ImportanceRow>,
}

impl ImportanceReport {
    pub fn get(&self, proxy_idx: usize, node: usize) -> f64 {
        self.rows[proxy_idx * self.lmax + node].importance
    }

    pub fn proxy_mass(&self, proxy_idx: usize) -> f64 {
        (0..self.lmax).map(|p| self.get(proxy_idx, p)).sum()
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.importance).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("proxy,node_index,importance\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.proxy, r.node_index, r.importance));
        }
        out
    }
}

/// Reshapes the normalised importance vector of a model fit on a
/// proxy-blocked layout into the per-proxy, per-node grid.
pub fn node_importance_report(model: &GbdtModel, proxy_order: &[ProxyName], lmax: usize) -> Result<ImportanceReport> {
    if proxy_order.len() * lmax != model.n_features {
        return Err(Error::contract(format!(
            "layout of {} proxies x Lmax {} does not match {} model features",
            proxy_order.len(),
            lmax,
            model.n_features
        )));
    }
    let imp = model.feature_importances();
    let rows = proxy_order
        .iter()
        .enumerate()
        .flat_map(|(k, &proxy)| {
            let imp = &imp;
            (0..lmax).map(move |p| ImportanceRow {
                proxy,
                node_index: p,
                importance: imp[k * lmax + p],
            })
        })
        .collect();
    Ok(ImportanceReport {
        proxy_order: proxy_order.to_vec(),
        lmax,
        rows,
    })
}
