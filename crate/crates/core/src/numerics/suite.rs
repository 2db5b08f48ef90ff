//! Finite-difference checks for each primitive operation family on small
//! seeded shapes in 64-bit precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{finite_diff_check, AttnMask, GradCheck, OpKind, ParamStore, Tape, Tensor, Var};

pub const PRIMITIVE_FAMILIES: &[&str] = &[
    "conv2d",
    "batch_norm",
    "batch_norm_eval",
    "relu",
    "avg_pool",
    "linear",
    "layer_norm",
    "attention",
    "softmax",
    "embedding",
    "sigmoid",
    "log",
    "global_mean",
    "cross_entropy",
    "bce",
    "dropout",
    "elementwise",
    "reshape_transpose_narrow",
];

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Uniform magnitude in `[lo, 1]` with random sign; keeps ReLU inputs off the kink.
fn away_from_zero(shape: &[usize], lo: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(lo..1.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// `Σ w ⊙ out` with fixed pseudo-random weights so every output coordinate
/// contributes a distinct amount.
pub(crate) fn weighted_sum(tape: &mut Tape<f64>, out: Var) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let w = tape.leaf(random(&shape, &mut rng));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum_all(prod))
}

fn run<S, B>(seed: u64, training: bool, fault: Option<OpKind>, setup: S, build: B) -> Result<GradCheck>
where
    S: FnOnce(&mut ParamStore<f64>, &mut ChaCha8Rng) -> Result<()>,
    B: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    setup(&mut store, &mut rng)?;
    finite_diff_check(&mut store, super::gradcheck::DEFAULT_EPS, |s| {
        let mut tape = Tape::new(training);
        if let Some(k) = fault {
            tape.inject_fault(k);
        }
        let loss = build(&mut tape, s)?;
        Ok((tape, loss))
    })
}

fn p(tape: &mut Tape<f64>, s: &ParamStore<f64>, name: &str) -> Var {
    let id = s.id(name).expect("parameter registered in setup");
    tape.param(s, id)
}

/// Runs the gradient check for one primitive family.
pub fn check_primitive(family: &str, fault: Option<OpKind>) -> Result<GradCheck> {
    match family {
        "conv2d" => run(
            1,
            true,
            fault,
            |s, r| {
                s.add("x", random(&[2, 2, 4, 4], r))?;
                s.add("k", random(&[3, 2, 3, 3], r))?;
                Ok(())
            },
            |t, s| {
                let (x, k) = (p(t, s, "x"), p(t, s, "k"));
                let y = t.conv2d(x, k)?;
                weighted_sum(t, y)
            },
        ),
        "batch_norm" | "batch_norm_eval" => {
            let eval = family == "batch_norm_eval";
            run(
                2,
                !eval,
                fault,
                |s, r| {
                    s.add("x", random(&[3, 2, 3, 3], r))?;
                    s.add("gamma", random(&[2], r))?;
                    s.add("beta", random(&[2], r))?;
                    s.add_buffer("mean", random(&[2], r))?;
                    s.add_buffer("var", Tensor::from_fn(&[2], |_| r.random_range(0.5..1.5)))?;
                    Ok(())
                },
                move |t, s| {
                    let (x, g, b) = (p(t, s, "x"), p(t, s, "gamma"), p(t, s, "beta"));
                    let (mid, vid) = (s.id("mean").unwrap(), s.id("var").unwrap());
                    let stats = super::RunningStats {
                        mean_id: mid,
                        var_id: vid,
                        mean: s.value(mid),
                        var: s.value(vid),
                    };
                    let y = t.batch_norm(x, g, b, Some(stats))?;
                    weighted_sum(t, y)
                },
            )
        }
        "relu" => run(
            3,
            true,
            fault,
            |s, r| {
                s.add("x", away_from_zero(&[4, 5], 0.05, r))?;
                Ok(())
            },
            |t, s| {
                let x = p(t, s, "x");
                let y = t.relu(x);
                weighted_sum(t, y)
            },
        ),
        "avg_pool" => run(
            4,
            true,
            fault,
            |s, r| {
                s.add("x", random(&[1, 2, 5, 6], r))?;
                Ok(())
            },
            |t, s| {
                let x = p(t, s, "x");
                let y = t.avg_pool_2x2(x)?;
                weighted_sum(t, y)
            },
        ),
        "linear" => run(
            5,
            true,
            fault,
            |s, r| {
                s.add("x", random(&[3, 4], r))?;
                s.add("w", random(&[4, 5], r))?;
                s.add("b", random(&[5], r))?;
                Ok(())
            },
            |t, s| {
                let (x, w, b) = (p(t, s, "x"), p(t, s, "w"), p(t, s, "b"));
                let y = t.linear(x, w, b)?;
                weighted_sum(t, y)
            },
        ),
        "layer_norm" => run(
            6,
            true,
            fault,
            |s, r| {
                s.add("x", random(&[3, 6], r))?;
                s.add("gamma", random(&[6], r))?;
                s.add("beta", random(&[6], r))?;
                Ok(())
            },
            |t, s| {
                let (x, g, b) = (p(t, s, "x"), p(t, s, "gamma"), p(t, s, "beta"));
                let y = t.layer_norm(x, g, b)?;
                weighted_sum(t, y)
            },
        ),
        "attention" => run(
            7,
            true,
            fault,
            |s, r| {
                s.add("q", random(&[3, 8], r))?;
                s.add("k", random(&[4, 8], r))?;
                s.add("v", random(&[4, 8], r))?;
                Ok(())
            },
            |t, s| {
                let (q, k, v) = (p(t, s, "q"), p(t, s, "k"), p(t, s, "v"));
                let mask = AttnMask::from_fn(3, 4, |i, j| j <= i + 1);
                let y = t.attention(q, k, v, &mask, 2)?;
                weighted_sum(t, y)
            },
        ),
        "softmax" => run(
            8,
            true,
            fault,
            |s, r| {
                s.add("x", random(&[3, 5], r))?;
                Ok(())
            },
            |t, s| {
                let x = p(t, s, "x");
                let a = t.softmax(x, 1)?;
                let b = t.softmax(x, 0)?;
                let y = t.add(a, b)?;
                weighted_sum(t, y)
            },
        ),
        "embedding" => run(
            9,
            true,
            fault,
            |s, r| {
                s.add("table", random(&[6, 4], r))?;
                Ok(())
            },
            |t, s| {
                let table = p(t, s, "table");
                let y = t.embedding(table, &[1, 3, 3, 0])?;
                weighted_sum(t, y)
            },
        ),
        "sigmoid" => run(
            10,
            true,
            fault,
            |s, r| {
                s.add("x", random(&[2, 5], r).map(|v| 3.0 * v))?;
                Ok(())
            },
            |t, s| {
                let x = p(t, s, "x");
                let y = t.sigmoid(x);
                weighted_sum(t, y)
            },
        ),
        "log" => run(
            11,
            true,
            fault,
            |s, r| {
                s.add("x", Tensor::from_fn(&[2, 5], |_| r.random_range(0.5..2.0)))?;
                Ok(())
            },
            |t, s| {
                let x = p(t, s, "x");
                let y = t.log(x)?;
                weighted_sum(t, y)
            },
        ),
        "global_mean" => run(
            12,
            true,
            fault,
            |s, r| {
                s.add("x", random(&[2, 3, 4], r))?;
                Ok(())
            },
            |t, s| {
                let x = p(t, s, "x");
                let y = t.mean_axis(x, 1)?;
                weighted_sum(t, y)
            },
        ),
        "cross_entropy" => run(
            13,
            true,
            fault,
            |s, r| {
                s.add("logits", random(&[4, 5], r).map(|v| 2.0 * v))?;
                Ok(())
            },
            |t, s| {
                let l = p(t, s, "logits");
                t.cross_entropy(l, &[2, 0, 4, 1], &[true, true, false, true])
            },
        ),
        "bce" => run(
            14,
            true,
            fault,
            |s, r| {
                s.add("logits", random(&[3], r).map(|v| 3.0 * v))?;
                Ok(())
            },
            |t, s| {
                let l = p(t, s, "logits");
                t.bce_with_logits(l, &[0.0, 1.0, 1.0])
            },
        ),
        "dropout" => run(
            15,
            true,
            fault,
            |s, r| {
                s.add("x", random(&[4, 6], r))?;
                Ok(())
            },
            |t, s| {
                let x = p(t, s, "x");
                let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
                let y = t.dropout(x, 0.3, &mut mask_rng)?;
                weighted_sum(t, y)
            },
        ),
        "elementwise" => run(
            16,
            true,
            fault,
            |s, r| {
                s.add("a", random(&[3, 4], r))?;
                s.add("b", random(&[3, 4], r))?;
                Ok(())
            },
            |t, s| {
                let (a, b) = (p(t, s, "a"), p(t, s, "b"));
                let m = t.mul(a, b)?;
                let d = t.sub(m, a)?;
                let e = t.scale(d, -1.7);
                let y = t.add(e, b)?;
                weighted_sum(t, y)
            },
        ),
        "reshape_transpose_narrow" => run(
            17,
            true,
            fault,
            |s, r| {
                s.add("x", random(&[2, 3, 4], r))?;
                Ok(())
            },
            |t, s| {
                let x = p(t, s, "x");
                let y = t.transpose(x)?;
                let y = t.reshape(y, &[8, 3])?;
                let y = t.narrow(y, 2, 5)?;
                weighted_sum(t, y)
            },
        ),
        other => Err(Error::Input(format!("unknown gradient-check family {other:?}"))),
    }
}
