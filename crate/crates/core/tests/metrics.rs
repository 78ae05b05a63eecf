use ministl::autograd::{ConvParams, Graph, Var};
use ministl::metrics::{self, psnr_from_mse, trace_cost, MetricReport, QualityAccumulator};
use ministl::rng::{derive_rng, SeedSpec};
use ministl::{FrameSpec, Role, Tensor, VideoBatch};
use proptest::prelude::*;
use rand::Rng;

fn clip(b: usize, t: usize, fs: FrameSpec, seed: u64, role: Role) -> VideoBatch {
    let mut rng = derive_rng(SeedSpec::new(seed, 0));
    let data = Tensor::from_fn(vec![b, t, fs.channels, fs.height, fs.width], |_| rng.gen::<f32>());
    VideoBatch::new(data, fs, role).unwrap()
}

fn constant(v: f32, fs: FrameSpec, role: Role) -> VideoBatch {
    VideoBatch::new(Tensor::full(vec![1, 1, fs.channels, fs.height, fs.width], v), fs, role).unwrap()
}

#[test]
fn ssim_identities() {
    let fs = FrameSpec::new(1, 32, 32);
    let x = clip(2, 3, fs, 1, Role::Target);
    assert!((metrics::ssim(&x, &x).unwrap() - 1.0).abs() <= 1e-6);
    let c1 = (0.01f64).powi(2);
    let s = metrics::ssim(&constant(0.0, fs, Role::Prediction), &constant(1.0, fs, Role::Target)).unwrap();
    assert!((s - c1 / (1.0 + c1)).abs() <= 1e-9, "{s}");
}

#[test]
fn psnr_and_mse_conventions() {
    assert!((psnr_from_mse(0.01, 1.0) - 20.0).abs() <= 1e-6);
    let fs = FrameSpec::new(3, 16, 16);
    let (p, t) = (clip(2, 2, fs, 2, Role::Prediction), clip(2, 2, fs, 3, Role::Target));
    let (paper, pixel) = metrics::mse(&p, &t).unwrap();
    assert_eq!(paper, pixel * fs.pixels() as f64);
    let (mae_paper, mae_pixel) = metrics::mae(&p, &t).unwrap();
    assert_eq!(mae_paper, mae_pixel * fs.pixels() as f64);
}

#[test]
fn perfect_prediction_report() {
    let fs = FrameSpec::mmnist();
    let t = clip(1, 2, fs, 4, Role::Target);
    let mut acc = QualityAccumulator::new(fs.pixels());
    acc.add(&t, &t);
    let r = MetricReport::from_accumulator(&acc);
    assert_eq!((r.mse_paper, r.mae_paper), (0.0, 0.0));
    assert!((r.ssim - 1.0).abs() < 1e-6);
    assert_eq!(r.psnr_db, f64::INFINITY);
}

#[test]
fn conv_macs_closed_form() {
    let cost = trace_cost::<f32>(|g| {
        let x = Var::constant(Tensor::meta(vec![1, 16, 32, 32]));
        let w = Var::constant(Tensor::meta(vec![32, 16, 3, 3]));
        g.conv2d(&x, &w, None, ConvParams::same(3));
    })
    .unwrap();
    assert_eq!(cost.total_macs(), 4_718_592);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ssim_is_symmetric_and_bounded(a in any::<u64>(), b in any::<u64>(), h in 4usize..20, w in 4usize..20) {
        let fs = FrameSpec::new(1, h, w);
        let (x, y) = (clip(1, 1, fs, a, Role::Target), clip(1, 1, fs, b, Role::Target));
        let (s1, s2) = (metrics::ssim(&x, &y).unwrap(), metrics::ssim(&y, &x).unwrap());
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!(s1 <= 1.0 + 1e-12 && s1 >= -1.0 - 1e-12);
    }

    #[test]
    fn psnr_decreases_with_error(m1 in 1e-8f64..1.0, m2 in 1e-8f64..1.0) {
        prop_assume!(m1 < m2);
        prop_assert!(psnr_from_mse(m1, 1.0) > psnr_from_mse(m2, 1.0));
    }

    #[test]
    fn accumulators_merge_like_one_pass(seed in any::<u64>(), split in 1usize..4) {
        let fs = FrameSpec::new(1, 12, 12);
        let (p, t) = (clip(4, 2, fs, seed, Role::Prediction), clip(4, 2, fs, seed ^ 1, Role::Target));
        let mut whole = QualityAccumulator::new(fs.pixels());
        whole.add(&p, &t);
        let mut left = QualityAccumulator::new(fs.pixels());
        let mut right = QualityAccumulator::new(fs.pixels());
        for b in 0..4 {
            let acc = if b < split { &mut left } else { &mut right };
            acc.add(&p.clip(b), &t.clip(b));
        }
        left.merge(&right);
        prop_assert_eq!(left.frames(), whole.frames());
        for (x, y) in [(left.mse_pixel(), whole.mse_pixel()), (left.mae_pixel(), whole.mae_pixel()), (left.ssim(), whole.ssim()), (left.psnr(), whole.psnr())] {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn macs_add_over_sequential_ops(cin in 1usize..8, mid in 1usize..8, cout in 1usize..8, hw in 3usize..12, k in prop::sample::select(vec![1usize, 3, 5])) {
        let conv = |g: &Graph<f32>, x: &Var<f32>, ci: usize, co: usize| {
            let w = Var::constant(Tensor::meta(vec![co, ci, k, k]));
            g.conv2d(x, &w, None, ConvParams::same(k))
        };
        let x = || Var::constant(Tensor::meta(vec![2, cin, hw, hw]));
        let y = || Var::constant(Tensor::meta(vec![2, mid, hw, hw]));
        let first = trace_cost::<f32>(|g| { conv(g, &x(), cin, mid); }).unwrap().total_macs();
        let second = trace_cost::<f32>(|g| { conv(g, &y(), mid, cout); }).unwrap().total_macs();
        let both = trace_cost::<f32>(|g| { let h = conv(g, &x(), cin, mid); conv(g, &h, mid, cout); }).unwrap().total_macs();
        prop_assert_eq!(both, first + second);
        prop_assert_eq!(first, (2 * mid * hw * hw * cin * k * k) as u64);
    }
}
