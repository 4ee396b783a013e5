use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use vocalid::classifier::{classnet_logits, ClassifierConfig, ClassifierModel, LabelMap};
use vocalid::norm::FeatureNorm;
use vocalid::segmenter::{segnet_logits, SegmenterConfig, SegmenterModel};
use vocalid::separator::{sepnet_output, SeparatorConfig, SeparatorModel, SkipKind};
use vocalid_nn::{
    grad_check, seeded, BiLstmLayer, GruWeights, LstmWeights, Mode, NnError, NnRng, ParamId, ParameterSet, Tape,
    Tensor, Var,
};

use crate::{ensure, within, Outcome};

const TOLERANCE: f64 = 1e-4;

type Build<'a> = Box<dyn Fn(&mut Tape, &ParameterSet) -> vocalid_nn::Result<Var> + 'a>;

fn random(p: &mut ParameterSet, rng: &mut NnRng, name: &str, shape: &[usize]) -> ParamId {
    p.insert(name, Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))).unwrap()
}

fn weighted_sum(tape: &mut Tape, x: Var) -> vocalid_nn::Result<Var> {
    let shape = tape.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let w = tape.input(Tensor::from_fn(&[n, 1], |i| ((i * 7919 % 113) as f64 / 113.0) - 0.4))?;
    let xf = tape.reshape(x, &[1, n])?;
    let zero = tape.input(Tensor::zeros(&[1]))?;
    let y = tape.dense(xf, w, zero)?;
    tape.sum(y)
}

fn lift(op: &'static str) -> impl Fn(vocalid::Error) -> NnError {
    move |e| NnError::InvalidArgument { op, reason: e.to_string() }
}

fn lstm(p: &mut ParameterSet, rng: &mut NnRng, prefix: &str, input: usize, hidden: usize) -> [ParamId; 3] {
    [
        random(p, rng, &format!("{prefix}.w_ih"), &[input, 4 * hidden]),
        random(p, rng, &format!("{prefix}.w_hh"), &[hidden, 4 * hidden]),
        random(p, rng, &format!("{prefix}.b"), &[4 * hidden]),
    ]
}

fn lstm_vars(t: &mut Tape, p: &ParameterSet, ids: &[ParamId; 3]) -> vocalid_nn::Result<LstmWeights> {
    Ok(LstmWeights { w_ih: t.param(p, ids[0])?, w_hh: t.param(p, ids[1])?, b: t.param(p, ids[2])? })
}

fn cases() -> Vec<(&'static str, ParameterSet, Build<'static>)> {
    let mut out: Vec<(&'static str, ParameterSet, Build<'static>)> = Vec::new();

    let mut rng = seeded(1);
    let mut p = ParameterSet::new();
    let (x, w, b) = (random(&mut p, &mut rng, "x", &[3, 4]), random(&mut p, &mut rng, "w", &[4, 5]), random(&mut p, &mut rng, "b", &[5]));
    out.push(("dense", p, Box::new(move |t, p| {
        let (x, w, b) = (t.param(p, x)?, t.param(p, w)?, t.param(p, b)?);
        let y = t.dense(x, w, b)?;
        weighted_sum(t, y)
    })));

    let mut p = ParameterSet::new();
    let (x, k, b) = (
        random(&mut p, &mut rng, "x", &[1, 2, 8, 8]),
        random(&mut p, &mut rng, "k", &[3, 2, 4, 3]),
        random(&mut p, &mut rng, "b", &[3]),
    );
    out.push(("conv2d", p, Box::new(move |t, p| {
        let (x, k, b) = (t.param(p, x)?, t.param(p, k)?, t.param(p, b)?);
        let y = t.conv2d_same(x, k, b)?;
        weighted_sum(t, y)
    })));

    let mut p = ParameterSet::new();
    // Distinct values keep finite differences away from ties.
    let x = p.insert("x", Tensor::from_fn(&[1, 2, 4, 6], |i| ((i * 37) % 48) as f64 * 0.1)).unwrap();
    out.push(("maxpool2d", p, Box::new(move |t, p| {
        let x = t.param(p, x)?;
        let y = t.maxpool2d(x, 2, 3)?;
        weighted_sum(t, y)
    })));

    let mut p = ParameterSet::new();
    let (x, k, b) = (
        random(&mut p, &mut rng, "x", &[2, 3, 9]),
        random(&mut p, &mut rng, "k", &[4, 3, 5]),
        random(&mut p, &mut rng, "b", &[4]),
    );
    out.push(("conv1d", p, Box::new(move |t, p| {
        let (x, k, b) = (t.param(p, x)?, t.param(p, k)?, t.param(p, b)?);
        let y = t.conv1d(x, k, Some(b), 2)?;
        weighted_sum(t, y)
    })));

    let mut p = ParameterSet::new();
    let (x, k, b) = (
        random(&mut p, &mut rng, "x", &[2, 4, 5]),
        random(&mut p, &mut rng, "k", &[4, 2, 5]),
        random(&mut p, &mut rng, "b", &[2]),
    );
    out.push(("conv1d_transpose", p, Box::new(move |t, p| {
        let (x, k, b) = (t.param(p, x)?, t.param(p, k)?, t.param(p, b)?);
        let y = t.conv1d_transpose(x, k, Some(b), 2)?;
        weighted_sum(t, y)
    })));

    let mut p = ParameterSet::new();
    let x = random(&mut p, &mut rng, "x", &[5, 2, 3]);
    let ids = [
        random(&mut p, &mut rng, "w_ih", &[3, 12]),
        random(&mut p, &mut rng, "w_hh", &[4, 12]),
        random(&mut p, &mut rng, "b_ih", &[12]),
        random(&mut p, &mut rng, "b_hh", &[12]),
    ];
    out.push(("gru", p, Box::new(move |t, p| {
        let w = GruWeights { w_ih: t.param(p, ids[0])?, w_hh: t.param(p, ids[1])?, b_ih: t.param(p, ids[2])?, b_hh: t.param(p, ids[3])? };
        let x = t.param(p, x)?;
        let y = t.gru_seq(x, &w)?;
        weighted_sum(t, y)
    })));

    let mut p = ParameterSet::new();
    let x = random(&mut p, &mut rng, "x", &[5, 2, 3]);
    let f = lstm(&mut p, &mut rng, "f", 3, 4);
    let g = lstm(&mut p, &mut rng, "g", 4, 3);
    let h = lstm(&mut p, &mut rng, "h", 4, 3);
    out.push(("lstm/bilstm", p, Box::new(move |t, p| {
        let (fw, gw, hw) = (lstm_vars(t, p, &f)?, lstm_vars(t, p, &g)?, lstm_vars(t, p, &h)?);
        let xv = t.param(p, x)?;
        let uni = t.lstm_seq(xv, &fw, false)?;
        let bi = t.bilstm_seq(uni, &[BiLstmLayer { forward: gw, backward: hw }])?;
        weighted_sum(t, bi)
    })));

    let mut p = ParameterSet::new();
    let logits = random(&mut p, &mut rng, "logits", &[4, 3]);
    out.push(("softmax-xent", p, Box::new(move |t, p| {
        let l = t.param(p, logits)?;
        Ok(t.softmax_xent(l, &[0, 2, 1, 2])?.loss)
    })));

    let mut p = ParameterSet::new();
    let pred = random(&mut p, &mut rng, "pred", &[3, 5]);
    let target = Tensor::from_fn(&[3, 5], |i| if i % 2 == 0 { 2.0 } else { -2.0 });
    out.push(("l1", p, Box::new(move |t, p| {
        let x = t.param(p, pred)?;
        t.l1_loss(x, &target)
    })));

    let mut data = rand::rngs::StdRng::seed_from_u64(6);
    let cfg = SegmenterConfig {
        window_frames: 10,
        feature_dims: 8,
        conv1_filters: 3,
        conv1_kernel: [3, 4],
        pool1: [2, 2],
        conv2_filters: 2,
        conv2_kernel: [3, 3],
        pool2: [2, 2],
        dense_units: [6, 5],
        dropout: [0.5, 0.25],
    };
    let model = SegmenterModel::init(cfg.clone(), FeatureNorm::identity(8), &mut seeded(5)).unwrap();
    let x = Tensor::from_fn(&[3, 1, 10, 8], |_| data.gen_range(-1.0..1.0));
    out.push(("segmenter network", model.params, Box::new(move |t, p| {
        let xv = t.input(x.clone())?;
        // A fresh generator per evaluation keeps the dropout mask fixed.
        let logits = segnet_logits(t, &cfg, p, xv, Mode::Train, &mut seeded(11), None).map_err(lift("segmenter"))?;
        Ok(t.softmax_xent(logits, &[0, 1, 1])?.loss)
    })));

    for (name, kind) in [("separator network (gru skip)", SkipKind::Gru), ("separator network (lstm skip)", SkipKind::Lstm)] {
        let cfg = SeparatorConfig { bins: 17, channels: [5, 4, 3], kernel: 3, stride: 2, skip_kind: kind };
        let model = SeparatorModel::init(cfg.clone(), &mut seeded(3)).unwrap();
        let x = Tensor::from_fn(&[1, 17, 16], |_| data.gen_range(0.0..2.0));
        let target = Tensor::from_fn(&[1, 17, 16], |_| data.gen_range(0.0..1.0));
        out.push((name, model.params, Box::new(move |t, p| {
            let xv = t.input(x.clone())?;
            let y = sepnet_output(t, &cfg, p, xv).map_err(lift("separator"))?;
            t.l1_loss(y, &target)
        })));
    }

    let cfg = ClassifierConfig { feature_dims: 4, layers: 2, hidden: 3, num_singers: 3 };
    let labels = LabelMap::from_names(["a", "b", "c"]);
    let model = ClassifierModel::init(cfg.clone(), labels, FeatureNorm::identity(4), &mut seeded(9)).unwrap();
    let x = Tensor::from_fn(&[5, 2, 4], |_| data.gen_range(-1.0..1.0));
    out.push(("classifier network", model.params, Box::new(move |t, p| {
        let xv = t.input(x.clone())?;
        let logits = classnet_logits(t, &cfg, p, xv).map_err(lift("classifier"))?;
        Ok(t.softmax_xent(logits, &[2, 0])?.loss)
    })));

    out
}

pub fn run() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, "");
    let mut checked = 0;
    let mut count = 0;
    for (name, mut params, build) in cases() {
        let report = grad_check(&mut params, build).map_err(|e| format!("{name}: {e}"))?;
        ensure!(report.max_rel_error < TOLERANCE, "{name}: max relative error {:.3e} at {:?}", report.max_rel_error, report.worst);
        if report.max_rel_error >= worst.0 {
            worst = (report.max_rel_error, name);
        }
        checked += report.checked;
        count += 1;
    }
    within(start.elapsed(), Duration::from_secs(300), "gradient suite")?;
    Ok(format!("{count} checks over {checked} parameters, worst {:.2e} ({})", worst.0, worst.1))
}
