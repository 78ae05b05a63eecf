//! Result tables and their CSV / JSON / Markdown / PNG renderings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::VideoBatch;

use super::train::write_json;

/// One (model, condition) row with the benchmark column schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub category: String,
    pub condition: String,
    pub params_m: Option<f64>,
    pub flops_g: Option<f64>,
    pub fps: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub ssim: Option<f64>,
    #[serde(serialize_with = "ser_opt_db", deserialize_with = "de_opt_db")]
    pub psnr: Option<f64>,
    pub status: String,
}

impl ResultRow {
    pub fn failed(model: &str, category: &str, condition: &str, message: &str) -> Self {
        Self {
            model: model.into(),
            category: category.into(),
            condition: condition.into(),
            params_m: None,
            flops_g: None,
            fps: None,
            mse: None,
            mae: None,
            ssim: None,
            psnr: None,
            status: format!("failed: {message}"),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn ser_opt_db<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() && *x > 0.0 => s.serialize_str("inf"),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

fn de_opt_db<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Str(String),
    }
    match Option::<Db>::deserialize(d)? {
        None => Ok(None),
        Some(Db::Num(v)) => Ok(Some(v)),
        Some(Db::Str(s)) if s == "inf" => Ok(Some(f64::INFINITY)),
        Some(Db::Str(s)) => Err(serde::de::Error::custom(format!("invalid PSNR value {s:?}"))),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

pub const COLUMNS: [&str; 11] =
    ["model", "category", "condition", "params_m", "flops_g", "fps", "mse", "mae", "ssim", "psnr", "status"];

fn num(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x.is_infinite() && x > 0.0 => "inf".into(),
        Some(x) => format!("{x}"),
    }
}

fn parse_num(s: &str) -> std::result::Result<Option<f64>, String> {
    match s {
        "" => Ok(None),
        "inf" => Ok(Some(f64::INFINITY)),
        _ => s.parse().map(Some).map_err(|e| format!("bad number {s:?}: {e}")),
    }
}

impl ResultsTable {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| !r.is_ok())
    }

    fn cells(r: &ResultRow) -> [String; 11] {
        [
            r.model.clone(),
            r.category.clone(),
            r.condition.clone(),
            num(r.params_m),
            num(r.flops_g),
            num(r.fps),
            num(r.mse),
            num(r.mae),
            num(r.ssim),
            num(r.psnr),
            r.status.clone(),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS).expect("in-memory write");
        for r in &self.rows {
            w.write_record(Self::cells(r)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            if rec.len() != COLUMNS.len() {
                return Err(format!("row has {} fields", rec.len()));
            }
            rows.push(ResultRow {
                model: rec[0].into(),
                category: rec[1].into(),
                condition: rec[2].into(),
                params_m: parse_num(&rec[3])?,
                flops_g: parse_num(&rec[4])?,
                fps: parse_num(&rec[5])?,
                mse: parse_num(&rec[6])?,
                mae: parse_num(&rec[7])?,
                ssim: parse_num(&rec[8])?,
                psnr: parse_num(&rec[9])?,
                status: rec[10].into(),
            });
        }
        Ok(Self { rows })
    }

    pub fn to_markdown(&self) -> String {
        let f = |v: Option<f64>, digits: usize| match v {
            None => "–".to_string(),
            Some(x) if x.is_infinite() => "∞".to_string(),
            Some(x) => format!("{x:.digits$}"),
        };
        let mut s = String::from(
            "| Model | Condition | Params (M) | FLOPs (G) | FPS | MSE | MAE | SSIM | PSNR | Status |\n\
             |---|---|---:|---:|---:|---:|---:|---:|---:|---|\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                r.model,
                r.condition,
                f(r.params_m, 2),
                f(r.flops_g, 2),
                f(r.fps, 1),
                f(r.mse, 2),
                f(r.mae, 2),
                f(r.ssim, 4),
                f(r.psnr, 2),
                r.status
            ));
        }
        s.push_str(
            "\nMSE and MAE sum the error over each frame's pixels and average over frames and clips. \
             FLOPs are multiply–accumulates of one forward pass on a single clip. PSNR is averaged per frame.\n",
        );
        s
    }
}

/// Context, prediction and target of one clip for a strip image.
#[derive(Clone, Debug)]
pub struct Strip {
    pub name: String,
    pub context: VideoBatch,
    pub prediction: VideoBatch,
    pub target: VideoBatch,
}

/// Encodes a strip as PNG: rows are context, prediction and target; frames run
/// left to right at 1:1 scale. Values are clamped to `[0, 1]`.
pub fn strip_png(strip: &Strip) -> Result<Vec<u8>> {
    let fs = strip.context.spec();
    let rows = [&strip.context, &strip.prediction, &strip.target];
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0).max(1);
    let (w, h) = (cols * fs.width, 3 * fs.height);
    let c = fs.channels;
    let out_c = if c == 3 { 3 } else { 1 };
    let mut buf = vec![0u8; w * h * out_c];
    for (ri, row) in rows.iter().enumerate() {
        for t in 0..row.len() {
            let frame = row.frame(0, t);
            for y in 0..fs.height {
                for x in 0..fs.width {
                    for oc in 0..out_c {
                        let v = frame[oc * fs.height * fs.width + y * fs.width + x];
                        let px = ((ri * fs.height + y) * w + t * fs.width + x) * out_c + oc;
                        buf[px] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                    }
                }
            }
        }
    }
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, w as u32, h as u32);
        enc.set_color(if out_c == 3 { png::ColorType::Rgb } else { png::ColorType::Grayscale });
        enc.set_depth(png::BitDepth::Eight);
        let mut wr = enc.write_header().map_err(|e| Error::format("<png>", e))?;
        wr.write_image_data(&buf).map_err(|e| Error::format("<png>", e))?;
    }
    Ok(bytes)
}

/// Writes `report.csv`, `report.json`, `report.md` and `strips/<name>.png` into `dir`.
/// Returns the written paths.
pub fn write_report(dir: &Path, table: &ResultsTable, strips: &[Strip]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let csv_path = dir.join("report.csv");
    std::fs::write(&csv_path, table.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
    written.push(csv_path);
    let json_path = dir.join("report.json");
    write_json(&json_path, table)?;
    written.push(json_path);
    let md_path = dir.join("report.md");
    std::fs::write(&md_path, table.to_markdown()).map_err(|e| Error::io(&md_path, e))?;
    written.push(md_path);
    if !strips.is_empty() {
        let sdir = dir.join("strips");
        std::fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
        for s in strips {
            let p = sdir.join(format!("{}.png", s.name));
            std::fs::write(&p, strip_png(s)?).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
    }
    Ok(written)
}

pub fn read_table(path: &Path) -> Result<ResultsTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e))
}
