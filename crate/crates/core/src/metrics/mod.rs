//! Quality metrics (MSE, MAE, RMSE, SSIM, PSNR) and computational metrics
//! (parameters, MACs, FPS).

mod compute;
mod quality;
pub mod ssim;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use compute::{count_params, estimate_flops, measure_fps, trace_cost, FlopsEstimate, FpsMeasurement, FpsProtocol};
pub use quality::{mae, mse, psnr, psnr_from_mse, ssim, QualityAccumulator, PERFECT_FRAME_MSE};

pub const MSE_CONVENTION: &str = "frame_pixel_sum";
pub const FLOPS_CONVENTION: &str = "macs";

/// Quality and cost figures for one model on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse_paper: f64,
    pub mae_paper: f64,
    pub mse_pixel: f64,
    pub mae_pixel: f64,
    pub rmse_pixel: f64,
    pub ssim: f64,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
    pub params_m: Option<f64>,
    pub flops_g: Option<f64>,
    pub fps: Option<f64>,
    /// Always absent: no perceptual network ships with the crate.
    pub lpips: Option<f64>,
    pub mse_convention: String,
    pub flops_convention: String,
    pub device: String,
}

impl MetricReport {
    /// Quality part of a report; cost fields are left empty.
    pub fn from_accumulator(acc: &QualityAccumulator) -> Self {
        Self {
            mse_paper: acc.mse_paper(),
            mae_paper: acc.mae_paper(),
            mse_pixel: acc.mse_pixel(),
            mae_pixel: acc.mae_pixel(),
            rmse_pixel: acc.mse_pixel().sqrt(),
            ssim: acc.ssim(),
            psnr_db: acc.psnr(),
            params_m: None,
            flops_g: None,
            fps: None,
            lpips: None,
            mse_convention: MSE_CONVENTION.into(),
            flops_convention: FLOPS_CONVENTION.into(),
            device: "cpu".into(),
        }
    }
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Str(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Db::Str(s) => Err(serde::de::Error::custom(format!("invalid PSNR value {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_psnr_round_trips_through_json() {
        let mut r = MetricReport::from_accumulator(&QualityAccumulator::new(4096));
        r.psnr_db = f64::INFINITY;
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"psnr_db\":\"inf\""));
        assert!(text.contains("\"mse_convention\":\"frame_pixel_sum\""));
        let back: MetricReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
