//! RAM sizing and cloud versus dedicated cost over time.
//!
//! Each hosted app needs 4 GB on top of a 4 GB host share, rounded up to the
//! next power-of-two tier: 1 app fits the 8 GB base, 2 and 3 need 16 GB, up
//! to 7 need 32 GB. Cloud cost accrues monthly per GB; the dedicated server
//! is a one-time purchase plus a price per GB beyond its 8 GB base.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub const RAM_PER_APP_GB: f64 = 4.0;
pub const BASE_RAM_GB: f64 = 8.0;
pub const DEDICATED_BASE_USD: f64 = 780.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub ram_per_app_gb: f64,
    pub base_ram_gb: f64,
    pub cloud_usd_per_gb_ram_month: f64,
    pub dedicated_base_usd: f64,
    pub dedicated_usd_per_extra_gb: f64,
    pub horizon_months: u32,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            ram_per_app_gb: RAM_PER_APP_GB,
            base_ram_gb: BASE_RAM_GB,
            cloud_usd_per_gb_ram_month: 0.0,
            dedicated_base_usd: DEDICATED_BASE_USD,
            dedicated_usd_per_extra_gb: 0.0,
            horizon_months: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field} must be finite and non-negative, got {value}")]
pub struct InvalidParams {
    pub field: &'static str,
    pub value: f64,
}

impl CostParams {
    pub fn with_prices(cloud_usd_per_gb_month: f64, dedicated_usd_per_extra_gb: f64) -> Self {
        CostParams {
            cloud_usd_per_gb_ram_month: cloud_usd_per_gb_month,
            dedicated_usd_per_extra_gb,
            ..CostParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), InvalidParams> {
        let fields = [
            ("ram_per_app_gb", self.ram_per_app_gb),
            ("base_ram_gb", self.base_ram_gb),
            ("cloud_usd_per_gb_ram_month", self.cloud_usd_per_gb_ram_month),
            ("dedicated_base_usd", self.dedicated_base_usd),
            ("dedicated_usd_per_extra_gb", self.dedicated_usd_per_extra_gb),
        ];
        for (field, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(InvalidParams { field, value });
            }
        }
        Ok(())
    }

    /// Smallest power-of-two GB that holds `n_apps` apps plus the host share.
    pub fn ram_required(&self, n_apps: u32) -> f64 {
        let host = (self.base_ram_gb - self.ram_per_app_gb).max(0.0);
        let need = self.ram_per_app_gb * n_apps.max(1) as f64 + host;
        let mut tier = 1.0;
        while tier < need {
            tier *= 2.0;
        }
        tier
    }

    pub fn cloud_monthly(&self, n_apps: u32) -> f64 {
        self.ram_required(n_apps) * self.cloud_usd_per_gb_ram_month
    }

    pub fn cumulative_cost(&self, deployment: Deployment, n_apps: u32, months: u32) -> f64 {
        match deployment {
            Deployment::Cloud => months as f64 * self.cloud_monthly(n_apps),
            Deployment::Dedicated => {
                let extra = (self.ram_required(n_apps) - self.base_ram_gb).max(0.0);
                self.dedicated_base_usd + extra * self.dedicated_usd_per_extra_gb
            }
        }
    }

    /// First month at which cumulative cloud spend reaches the dedicated price.
    pub fn crossover_month(&self, n_apps: u32) -> Option<u64> {
        let monthly = self.cloud_monthly(n_apps);
        if monthly <= 0.0 {
            return None;
        }
        let dedicated = self.cumulative_cost(Deployment::Dedicated, n_apps, 0);
        let mut m = (dedicated / monthly).ceil().max(0.0) as u64;
        // settle float rounding against the defining inequality
        let cloud = |m: u64| m as f64 * monthly;
        while m > 0 && cloud(m - 1) >= dedicated {
            m -= 1;
        }
        while cloud(m) < dedicated {
            m += 1;
        }
        Some(m)
    }

    pub fn series(&self, n_apps: u32, months: u32) -> Vec<CostPoint> {
        (0..=months)
            .map(|month| CostPoint {
                month,
                cloud_usd: self.cumulative_cost(Deployment::Cloud, n_apps, month),
                dedicated_usd: self.cumulative_cost(Deployment::Dedicated, n_apps, month),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deployment {
    Cloud,
    Dedicated,
}

/// RAM tier for `n_apps` with the default sizing.
pub fn ram_required(n_apps: u32) -> f64 {
    CostParams::default().ram_required(n_apps)
}

pub fn cumulative_cost(deployment: Deployment, n_apps: u32, months: u32, params: &CostParams) -> f64 {
    params.cumulative_cost(deployment, n_apps, months)
}

pub fn crossover_month(n_apps: u32, params: &CostParams) -> Option<u64> {
    params.crossover_month(n_apps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub month: u32,
    pub cloud_usd: f64,
    pub dedicated_usd: f64,
}

pub fn series_csv(points: &[CostPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

pub fn series_markdown(points: &[CostPoint]) -> String {
    let mut out = String::from("| Month | Cloud (USD) | Dedicated (USD) |\n|---|---|---|\n");
    for p in points {
        let _ = writeln!(out, "| {} | {:.2} | {:.2} |", p.month, p.cloud_usd, p.dedicated_usd);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiers() {
        let got: Vec<f64> = (1..=15).map(ram_required).collect();
        assert_eq!(got[0], 8.0);
        assert_eq!(&got[1..3], &[16.0, 16.0]);
        assert_eq!(&got[3..7], &[32.0; 4]);
        assert_eq!(&got[7..15], &[64.0; 8]);
    }

    #[test]
    fn zero_price_has_no_crossover() {
        assert_eq!(CostParams::default().crossover_month(3), None);
    }

    #[test]
    fn rejects_negative_price() {
        let p = CostParams::with_prices(-1.0, 0.0);
        assert_eq!(p.validate().unwrap_err().field, "cloud_usd_per_gb_ram_month");
    }
}
