use std::path::Path;

use ministl::harness::report::{read_table, strip_png};
use ministl::harness::train::{select_best, RunParams};
use ministl::harness::{
    copy_last_frame, evaluate_copy_baseline, evaluate_model, train, train_model, write_report, ExperimentConfig, ResultRow,
    ResultsTable, Strip, TrainData,
};
use ministl::models::checkpoint;
use ministl::{Registry, Role, Tensor, VideoBatch};
use proptest::prelude::*;

const TINY: &str = "\
model: {name: metavp-gated_attention, hid_S: 8, hid_T: 16, N_S: 2, N_T: 2, mlp_ratio: 2.0}
data: {size: 32, train_count: 24, test_count: 8, T: 4, T_prime: 3}
train: {epochs: 3, batch_size: 4, lr: 0.005}
bench: {skip_fps: true, strips: 1}
";

fn tiny(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_yaml(TINY).unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

#[test]
fn zero_epochs_writes_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.train.epochs = 0;
    let outcome = train(&cfg, &mut |_, _| {}).unwrap();
    let run = outcome.best_run();
    assert!(run.history.is_empty());
    assert_eq!(run.best_val_mse, None);
    let model = checkpoint::load(&run.best_checkpoint, &Registry::with_defaults()).unwrap();
    let fresh = Registry::with_defaults().build("metavp-gated_attention", &cfg.model_config().unwrap(), cfg.seed).unwrap();
    let flat = |m: &ministl::Model<f32>| m.params.iter().flat_map(|(_, t)| t.data().to_vec()).collect::<Vec<_>>();
    assert_eq!(flat(&model), flat(&fresh));
    assert!(outcome.run_dir.join("config.yaml").is_file());
    let written = ExperimentConfig::load(&outcome.run_dir.join("config.yaml")).unwrap();
    assert_eq!(written.hash(), cfg.hash());
}

#[test]
fn best_checkpoint_holds_the_minimum_validation_mse_and_runs_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let data = TrainData::build(&cfg).unwrap();
    let params = RunParams { lr: cfg.train.lr, drop_path: 0.1 };
    let (rec, _) = train_model(&cfg, &cfg.model, params, &data, &dir.path().join("a"), &mut |_| {}).unwrap();
    assert_eq!(rec.history.len(), 3);
    let min = rec.history.iter().map(|e| e.val.mse_pixel).fold(f64::INFINITY, f64::min);
    assert_eq!(rec.best_val_mse, Some(min));
    let best = checkpoint::load(&rec.best_checkpoint, &Registry::with_defaults()).unwrap();
    let again = evaluate_model(&best, &data.split, data.val.clone(), cfg.train.batch_size).unwrap();
    assert_eq!(again.mse_pixel, min);

    let (rec2, _) = train_model(&cfg, &cfg.model, params, &data, &dir.path().join("b"), &mut |_| {}).unwrap();
    for (a, b) in rec.history.iter().zip(&rec2.history) {
        assert_eq!(a.train_loss, b.train_loss);
        assert_eq!(a.val.mse_pixel, b.val.mse_pixel);
    }
    let on_disk: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/history.json")).unwrap()).unwrap();
    assert_eq!(on_disk["history"].as_array().unwrap().len(), 3);
    let leftovers: Vec<_> = std::fs::read_dir(dir.path().join("a/checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.ends_with(".safetensors"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn grid_mode_trains_fifteen_runs_and_keeps_the_best() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.train.grid = true;
    cfg.train.epochs = 1;
    cfg.data.train_count = 8;
    let outcome = train(&cfg, &mut |_, _| {}).unwrap();
    assert_eq!(outcome.runs.len(), 15);
    let grid: Vec<(f64, f64)> = outcome.runs.iter().map(|r| (r.lr, r.drop_path)).collect();
    assert!(grid.contains(&(1e-2, 0.2)) && grid.contains(&(1e-4, 0.0)));
    let best = outcome.best_run().best_val_mse.unwrap();
    assert!(outcome.runs.iter().all(|r| r.best_val_mse.unwrap() >= best));
    assert!(outcome.run_dir.join("checkpoints/best.safetensors").is_file());
    assert!(outcome.run_dir.join("grid.json").is_file());
}

#[test]
fn selection_prefers_the_lowest_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.train.epochs = 0;
    let base = train(&cfg, &mut |_, _| {}).unwrap().runs.remove(0);
    let with = |v: Option<f64>| ministl::harness::RunRecord { best_val_mse: v, ..base.clone() };
    assert_eq!(select_best(&[with(None), with(Some(0.3)), with(Some(0.1)), with(Some(0.1))]), 2);
    assert_eq!(select_best(&[with(None)]), 0);
}

#[test]
fn copy_baseline_repeats_the_last_context_frame() {
    let fs = ministl::FrameSpec::new(1, 2, 2);
    let ctx = VideoBatch::new(Tensor::from_fn(vec![2, 3, 1, 2, 2], |i| i as f32 / 24.0), fs, Role::Context).unwrap();
    let out = copy_last_frame(&ctx, 4);
    assert_eq!(out.shape(), &[2, 4, 1, 2, 2]);
    for b in 0..2 {
        for t in 0..4 {
            assert_eq!(out.frame(b, t), ctx.frame(b, 2));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let test = ministl::harness::bench::clean_test_split(&cfg).unwrap();
    let a = evaluate_copy_baseline(&test, 0..test.len()).unwrap();
    let b = evaluate_copy_baseline(&test, 0..test.len()).unwrap();
    assert_eq!(a, b);
    assert!(a.mse_paper > 0.0);
}

fn row(model: &str, condition: &str, mse: f64) -> ResultRow {
    ResultRow {
        model: model.into(),
        category: "RecurrentFree".into(),
        condition: condition.into(),
        params_m: Some(1.25),
        flops_g: Some(0.1),
        fps: None,
        mse: Some(mse),
        mae: Some(mse * 2.0),
        ssim: Some(0.5),
        psnr: Some(f64::INFINITY),
        status: "ok".into(),
    }
}

#[test]
fn report_manifest_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let table = ResultsTable { rows: vec![row("convlstm", "clean", 1.0 / 3.0), row("metavp-gated_attention", "clean", 2e-17)] };
    let fs = ministl::FrameSpec::new(1, 4, 5);
    let mk = |seed: f32, n: usize, role: Role| {
        VideoBatch::new(Tensor::from_fn(vec![1, n, 1, 4, 5], |i| (i as f32 * seed) % 1.0), fs, role).unwrap()
    };
    let prediction = VideoBatch::new(Tensor::from_fn(vec![1, 2, 1, 4, 5], |i| i as f32 / 10.0 - 0.5), fs, Role::Prediction).unwrap();
    let strips: Vec<Strip> = (0..2)
        .map(|i| Strip { name: format!("s{i}"), context: mk(0.37, 3, Role::Context), prediction: prediction.clone(), target: mk(0.11, 2, Role::Target) })
        .collect();
    let written = write_report(dir.path(), &table, &strips).unwrap();
    let mut names: Vec<String> =
        written.iter().map(|p| p.strip_prefix(dir.path()).unwrap().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names, ["report.csv", "report.json", "report.md", "strips/s0.png", "strips/s1.png"]);

    let from_csv = ResultsTable::from_csv(&std::fs::read_to_string(dir.path().join("report.csv")).unwrap()).unwrap();
    let from_json = read_table(&dir.path().join("report.json")).unwrap();
    assert_eq!(from_csv, from_json);
    assert_eq!(from_json, table);

    let png = std::fs::read(dir.path().join("strips/s0.png")).unwrap();
    assert_eq!(png, strip_png(&strips[0]).unwrap());
    let decoder = png::Decoder::new(std::io::Cursor::new(png));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!((info.width, info.height), (15, 12));
    for t in 0..2 {
        for y in 0..4 {
            for x in 0..5 {
                let v = prediction.frame(0, t)[y * 5 + x].clamp(0.0, 1.0);
                assert_eq!(buf[(4 + y) * 15 + t * 5 + x], (v * 255.0).round() as u8);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_hash_tracks_every_field(seed in any::<u64>(), epochs in 0usize..500, lr in 1e-5f64..1e-1, count in 1usize..100) {
        let mut a = ExperimentConfig::from_yaml(TINY).unwrap();
        a.seed = seed;
        a.train.epochs = epochs;
        a.train.lr = lr;
        a.data.train_count = count;
        let same = ExperimentConfig::from_yaml(&a.to_yaml()).unwrap();
        prop_assert_eq!(a.hash(), same.hash());
        let mut b = a.clone();
        b.seed = seed.wrapping_add(1);
        prop_assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.train.epochs += 1;
        prop_assert_ne!(a.hash(), c.hash());
        let mut d = a.clone();
        d.train.lr *= 2.0;
        prop_assert_ne!(a.hash(), d.hash());
        let mut e = a.clone();
        e.data.train_count += 1;
        prop_assert_ne!(a.hash(), e.hash());
        let mut f = a.clone();
        f.model.hid_t = Some(17);
        prop_assert_ne!(a.hash(), f.hash());
    }
}
