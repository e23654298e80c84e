//! Central finite-difference checks of tape gradients in f64.

use ctxlens::tensor::{Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
const FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradReport {
    pub name: String,
    pub points: usize,
    pub checked: usize,
    /// Coordinates skipped because a relu kink or max tie lies within `EPS`.
    pub excluded: usize,
    pub max_rel: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel <= TOLERANCE && self.checked > 0
    }
}

/// Builds the computation from input tensors. Returns the output and the
/// variables holding the inputs, in input order.
pub type Build<'a> = dyn Fn(&mut Tape<f64>, &[Tensor<f64>]) -> (Var, Vec<Var>) + 'a;

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Uniform in `[0.1, 1]` with random sign: keeps relu and abs off their kinks.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn projected(build: &Build<'_>, inputs: &[Tensor<f64>], proj: &Tensor<f64>) -> f64 {
    let mut tape = Tape::new();
    let (out, _) = build(&mut tape, inputs);
    tape.value(out).data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
}

/// Checks `d/dx <r, f(x)>` for a random projection `r` at `points` input
/// draws from `sample`.
pub fn check(
    name: &str,
    points: usize,
    rng: &mut ChaCha8Rng,
    sample: &dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
    build: &Build<'_>,
) -> GradReport {
    let mut report = GradReport {
        name: name.to_string(),
        points,
        checked: 0,
        excluded: 0,
        max_rel: 0.0,
    };
    for _ in 0..points {
        let inputs = sample(rng);
        let mut tape = Tape::new();
        let (out, vars) = build(&mut tape, &inputs);
        let shape = tape.value(out).shape().to_vec();
        let proj = uniform(rng, &shape, -1.0, 1.0);
        let grads = tape.backward(out, proj.clone()).expect("backward");
        let base = projected(build, &inputs, &proj);
        for (i, var) in vars.iter().enumerate() {
            let analytic = grads
                .get(*var)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(inputs[i].shape().to_vec()));
            for j in 0..inputs[i].len() {
                let mut shifted = inputs.to_vec();
                shifted[i].data_mut()[j] += EPS;
                let up = projected(build, &shifted, &proj);
                shifted[i].data_mut()[j] -= 2.0 * EPS;
                let down = projected(build, &shifted, &proj);
                let fwd = (up - base) / EPS;
                let bwd = (base - down) / EPS;
                let central = (up - down) / (2.0 * EPS);
                // one-sided slopes disagree only across a kink
                if (fwd - bwd).abs() > 1e-3 * (1.0 + central.abs()) {
                    report.excluded += 1;
                    continue;
                }
                let a = analytic.data()[j];
                let rel = (a - central).abs() / a.abs().max(central.abs()).max(FLOOR);
                report.max_rel = report.max_rel.max(rel);
                report.checked += 1;
            }
        }
    }
    report
}

fn params(tape: &mut Tape<f64>, inputs: &[Tensor<f64>]) -> Vec<Var> {
    inputs.iter().map(|t| tape.param(t.clone())).collect()
}

/// Every tape primitive, both trainable encoders and both losses.
pub fn full_suite(points: usize, seed: u64) -> Vec<GradReport> {
    use ctxlens::lens::{GatedConvLens, LensParameters, SimpleLens};
    use ctxlens::tensor::ops::Elementwise;
    use ctxlens::tensor::Activation;
    use ctxlens::train::{classifier_loss, ranker_loss, ClassifierHead};
    use rand::SeedableRng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut run = |name: &str, sample: &dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>, build: &Build<'_>| {
        out.push(check(name, points, &mut rng, sample, build));
    };

    run(
        "linear",
        &|r| {
            vec![
                uniform(r, &[3, 4], -1.0, 1.0),
                uniform(r, &[3], -1.0, 1.0),
                uniform(r, &[4, 5], -1.0, 1.0),
            ]
        },
        &|t, x| {
            let v = params(t, x);
            (t.linear(v[0], v[1], v[2]).unwrap(), v)
        },
    );
    run(
        "conv1d_same",
        &|r| {
            vec![
                uniform(r, &[3, 2, 3], -1.0, 1.0),
                uniform(r, &[3], -1.0, 1.0),
                uniform(r, &[2, 6], -1.0, 1.0),
            ]
        },
        &|t, x| {
            let v = params(t, x);
            (t.conv1d_same(v[0], v[1], v[2]).unwrap(), v)
        },
    );
    for (name, kind) in [
        ("relu", Activation::Relu),
        ("tanh", Activation::Tanh),
        ("sigmoid", Activation::Sigmoid),
    ] {
        run(name, &|r| vec![away_from_zero(r, &[3, 4])], &move |t, x| {
            let v = params(t, x);
            (t.activation(kind, v[0]).unwrap(), v)
        });
    }
    run("maxpool_time", &|r| vec![uniform(r, &[3, 6], -1.0, 1.0)], &|t, x| {
        let v = params(t, x);
        (t.maxpool_time(v[0]).unwrap(), v)
    });
    for (name, kind) in [
        ("mul", Elementwise::Mul),
        ("add", Elementwise::Add),
        ("sub", Elementwise::Sub),
    ] {
        run(
            name,
            &|r| vec![uniform(r, &[5], -1.0, 1.0), uniform(r, &[5], -1.0, 1.0)],
            &move |t, x| {
                let v = params(t, x);
                (t.elementwise(kind, v[0], v[1]).unwrap(), v)
            },
        );
    }
    run("abs", &|r| vec![away_from_zero(r, &[6])], &|t, x| {
        let v = params(t, x);
        (t.abs(v[0]).unwrap(), v)
    });
    run(
        "concat",
        &|r| {
            vec![
                uniform(r, &[2], -1.0, 1.0),
                uniform(r, &[3], -1.0, 1.0),
                uniform(r, &[1], -1.0, 1.0),
            ]
        },
        &|t, x| {
            let v = params(t, x);
            (t.concat(&v).unwrap(), v)
        },
    );
    run(
        "stack_columns",
        &|r| (0..4).map(|_| uniform(r, &[3], -1.0, 1.0)).collect(),
        &|t, x| {
            let v = params(t, x);
            (t.stack_columns(&v).unwrap(), v)
        },
    );
    run("normalize_columns", &|r| vec![away_from_zero(r, &[4, 3])], &|t, x| {
        let v = params(t, x);
        (t.normalize_columns(v[0]).unwrap(), v)
    });
    run(
        "inner_products",
        &|r| vec![uniform(r, &[4, 3], -1.0, 1.0), uniform(r, &[4, 2], -1.0, 1.0)],
        &|t, x| {
            let v = params(t, x);
            (t.inner_products(v[0], v[1]).unwrap(), v)
        },
    );
    run("max_hinge", &|r| vec![uniform(r, &[4, 4], -1.0, 1.0)], &|t, x| {
        let v = params(t, x);
        (t.max_hinge(v[0], 0.2).unwrap(), v)
    });
    run(
        "softmax_cross_entropy",
        &|r| vec![uniform(r, &[3, 5], -2.0, 2.0)],
        &|t, x| {
            let v = params(t, x);
            (t.softmax_cross_entropy(v[0], &[0, 2, 1, 1, 0]).unwrap(), v)
        },
    );

    // Encoders: gradients w.r.t. every parameter tensor and the input matrix.
    let (k, c, d, len) = (4, 3, 3, 5);
    let lens_case = |template: LensParameters<f64>| {
        move |r: &mut ChaCha8Rng| {
            let mut lens = template.clone();
            let mut xs: Vec<Tensor<f64>> = lens
                .tensors_mut()
                .into_iter()
                .map(|p| uniform(r, p.shape(), -0.8, 0.8))
                .collect();
            xs.push(uniform(r, &[k, len], -1.0, 1.0));
            xs
        }
    };
    let lens_build = |template: LensParameters<f64>| {
        move |t: &mut Tape<f64>, x: &[Tensor<f64>]| {
            let mut lens = template.clone();
            for (p, v) in lens.tensors_mut().into_iter().zip(x) {
                *p = v.clone();
            }
            let bound = lens.bind(t);
            let e = t.param(x[x.len() - 1].clone());
            let out = bound.encode(t, e).unwrap();
            let mut vars = bound.params().to_vec();
            vars.push(e);
            (out, vars)
        }
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let simple = LensParameters::Simple(SimpleLens::init(k, d, Activation::Relu, &mut init_rng));
    let gated = LensParameters::GatedConv(GatedConvLens::init(k, c, d, 2, 3, &mut init_rng).unwrap());
    run("simple encoder", &lens_case(simple.clone()), &lens_build(simple));
    run(
        "gatedconv encoder (M=2, w=3)",
        &lens_case(gated.clone()),
        &lens_build(gated),
    );

    // Losses over a batch of 4 pairs of 3-dim vectors.
    let batch = 4;
    run(
        "ranker loss",
        &|r| (0..2 * batch).map(|_| uniform(r, &[d], -1.0, 1.0)).collect(),
        &|t, x| {
            let v = params(t, x);
            let pairs: Vec<(Var, Var)> = v.chunks(2).map(|p| (p[0], p[1])).collect();
            (ranker_loss(t, &pairs, 0.2).unwrap(), v)
        },
    );
    run(
        "classifier loss",
        &|r| {
            let mut xs: Vec<Tensor<f64>> = (0..2 * batch).map(|_| uniform(r, &[d], -1.0, 1.0)).collect();
            let head = ClassifierHead::<f64>::init(d, 5, 3, r);
            xs.extend(head.tensors().into_iter().map(|p| uniform(r, p.shape(), -0.5, 0.5)));
            xs
        },
        &|t, x| {
            let v = params(t, &x[..2 * batch]);
            let mut head = ClassifierHead::<f64>::init(d, 5, 3, &mut ChaCha8Rng::seed_from_u64(0));
            for (p, val) in head.tensors_mut().into_iter().zip(&x[2 * batch..]) {
                *p = val.clone();
            }
            let bound = head.bind(t);
            let pairs: Vec<(Var, Var)> = v.chunks(2).map(|p| (p[0], p[1])).collect();
            let loss = classifier_loss(t, &bound, &pairs, &[0, 2, 1, 2]).unwrap();
            let mut vars = v;
            vars.extend(bound.params);
            (loss, vars)
        },
    );
    out
}
