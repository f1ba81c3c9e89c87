use proptest::prelude::*;
use unifront::tensor::{conv_out_len, grad_check, Activation, Padding, Tape, Tensor, Var};
use unifront::RandomSource;

/// Random values bounded away from zero by at least `gap`.
fn away_from_zero(shape: &[usize], gap: f64, rng: &mut RandomSource) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.uniform(gap, 1.0);
            if rng.uniform(0.0, 1.0) < 0.5 {
                -m
            } else {
                m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn random(shape: &[usize], rng: &mut RandomSource) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

#[test]
fn length_formulas_exhaustive() {
    for len in 1..=64usize {
        for kernel in 1..=8usize {
            for stride in 1..=5usize {
                for padding in [Padding::Valid, Padding::Same] {
                    let r = conv_out_len(len, kernel, stride, padding);
                    let expected = match padding {
                        Padding::Valid if kernel > len => None,
                        Padding::Valid => Some((len - kernel) / stride + 1),
                        Padding::Same => Some((len + stride - 1) / stride),
                    };
                    assert_eq!(r.ok().map(|v| v.0), expected, "len {len} k {kernel} s {stride} {padding:?}");
                    if let Some(out) = expected {
                        let mut tape = Tape::new();
                        let x = tape.constant(Tensor::zeros(&[1, len]));
                        let w = tape.constant(Tensor::zeros(&[1, 1, kernel]));
                        let y = tape.conv1d(x, w, None, stride, padding).unwrap();
                        assert_eq!(tape.shape(y), &[1, out]);
                        let x2 = tape.constant(Tensor::zeros(&[1, len, 3]));
                        let w2 = tape.constant(Tensor::zeros(&[1, 1, kernel, 1]));
                        let y2 = tape.conv2d(x2, w2, None, stride, 1, padding).unwrap();
                        assert_eq!(tape.shape(y2), &[1, out, 3]);
                    }
                }
            }
        }
    }
}

fn check(name: &str, x: &Tensor, f: impl Fn(&mut Tape, Var) -> unifront::Result<Var>) {
    let r = grad_check(f, x, 1e-4, 1e-4).unwrap();
    assert!(r.passed(), "{name}: {r:?}");
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = RandomSource::new(7);
    let x1 = random(&[2, 17], &mut rng);
    let w1 = random(&[3, 2, 4], &mut rng);
    let b1 = random(&[3], &mut rng);
    for (stride, padding) in [(1, Padding::Valid), (3, Padding::Valid), (2, Padding::Same)] {
        let (w, b) = (w1.clone(), b1.clone());
        check("conv1d/x", &x1, |t, v| {
            let w = t.constant(w.clone());
            let b = t.constant(b.clone());
            let y = t.conv1d(v, w, Some(b), stride, padding)?;
            t.sum_squares(y)
        });
        let xx = x1.clone();
        check("conv1d/w", &w1, |t, v| {
            let x = t.constant(xx.clone());
            let y = t.conv1d(x, v, None, stride, padding)?;
            t.sum_squares(y)
        });
        let (xx, w) = (x1.clone(), w1.clone());
        check("conv1d/b", &b1, |t, v| {
            let x = t.constant(xx.clone());
            let w = t.constant(w.clone());
            let y = t.conv1d(x, w, Some(v), stride, padding)?;
            t.sum_squares(y)
        });
    }

    let xb = random(&[3, 1, 11], &mut rng);
    let wb = random(&[2, 1, 3], &mut rng);
    let w = wb.clone();
    check("conv1d batched", &xb, |t, v| {
        let w = t.constant(w.clone());
        let y = t.conv1d(v, w, None, 2, Padding::Valid)?;
        t.sum_squares(y)
    });

    let x2 = random(&[2, 7, 5], &mut rng);
    let w2 = random(&[3, 2, 3, 3], &mut rng);
    let b2 = random(&[3], &mut rng);
    for (st, sf, padding) in [(1, 1, Padding::Same), (2, 1, Padding::Same), (2, 2, Padding::Valid)] {
        let (w, b) = (w2.clone(), b2.clone());
        check("conv2d/x", &x2, |t, v| {
            let w = t.constant(w.clone());
            let b = t.constant(b.clone());
            let y = t.conv2d(v, w, Some(b), st, sf, padding)?;
            t.sum_squares(y)
        });
        let xx = x2.clone();
        check("conv2d/w", &w2, |t, v| {
            let x = t.constant(xx.clone());
            let y = t.conv2d(x, v, None, st, sf, padding)?;
            t.sum_squares(y)
        });
        let (xx, w) = (x2.clone(), w2.clone());
        check("conv2d/b", &b2, |t, v| {
            let x = t.constant(xx.clone());
            let w = t.constant(w.clone());
            let y = t.conv2d(x, w, Some(v), st, sf, padding)?;
            t.sum_squares(y)
        });
    }

    let xl = random(&[4, 6], &mut rng);
    let wl = random(&[3, 6], &mut rng);
    let bl = random(&[3], &mut rng);
    let (w, b) = (wl.clone(), bl.clone());
    check("linear/x", &xl, |t, v| {
        let w = t.constant(w.clone());
        let b = t.constant(b.clone());
        let y = t.linear(v, w, Some(b))?;
        t.sum_squares(y)
    });
    let (xx, b) = (xl.clone(), bl.clone());
    check("linear/w", &wl, |t, v| {
        let x = t.constant(xx.clone());
        let b = t.constant(b.clone());
        let y = t.linear(x, v, Some(b))?;
        t.sum_squares(y)
    });
    let (xx, w) = (xl.clone(), wl.clone());
    check("linear/b", &bl, |t, v| {
        let x = t.constant(xx.clone());
        let w = t.constant(w.clone());
        let y = t.linear(x, w, Some(v))?;
        t.sum_squares(y)
    });

    let xa = away_from_zero(&[3, 5], 1e-2, &mut rng);
    for kind in [
        Activation::Relu,
        Activation::Gelu,
        Activation::Abs,
        Activation::MagnitudeRoot(2.5),
    ] {
        check(&format!("{kind:?}"), &xa, |t, v| {
            let y = t.activation(v, kind)?;
            t.sum_squares(y)
        });
    }
    let pos = Tensor::new(&[5], vec![0.1, 0.5, 1.0, 2.0, 3.0]).unwrap();
    check("log_eps", &pos, |t, v| {
        let y = t.activation(v, Activation::LogEps(1e-3))?;
        t.sum_squares(y)
    });

    let xn = random(&[3, 6], &mut rng);
    let gain = random(&[6], &mut rng);
    let off = random(&[6], &mut rng);
    let weights = random(&[3, 6], &mut rng);
    let probe = |t: &mut Tape, y: Var, wts: &Tensor| -> unifront::Result<Var> {
        let c = t.constant(wts.clone());
        let z = t.mul(y, c)?;
        let z = t.activation(z, Activation::Gelu)?;
        t.sum(z)
    };
    let (g, o, wts) = (gain.clone(), off.clone(), weights.clone());
    check("layer_norm/x", &xn, |t, v| {
        let g = t.constant(g.clone());
        let o = t.constant(o.clone());
        let y = t.layer_norm(v, g, o, 1e-5)?;
        probe(t, y, &wts)
    });
    let (xx, o, wts) = (xn.clone(), off.clone(), weights.clone());
    check("layer_norm/gain", &gain, |t, v| {
        let x = t.constant(xx.clone());
        let o = t.constant(o.clone());
        let y = t.layer_norm(x, v, o, 1e-5)?;
        probe(t, y, &wts)
    });
    let (xx, g, wts) = (xn.clone(), gain.clone(), weights.clone());
    check("layer_norm/offset", &off, |t, v| {
        let x = t.constant(xx.clone());
        let g = t.constant(g.clone());
        let y = t.layer_norm(x, g, v, 1e-5)?;
        probe(t, y, &wts)
    });

    let xg = random(&[4, 5], &mut rng);
    let gg = random(&[4], &mut rng);
    let og = random(&[4], &mut rng);
    let wg = random(&[4, 5], &mut rng);
    for groups in [1, 2, 4] {
        let (g, o, wts) = (gg.clone(), og.clone(), wg.clone());
        check("group_norm/x", &xg, |t, v| {
            let g = t.constant(g.clone());
            let o = t.constant(o.clone());
            let y = t.group_norm(v, groups, g, o, 1e-5)?;
            probe(t, y, &wts)
        });
        let (xx, o, wts) = (xg.clone(), og.clone(), wg.clone());
        check("group_norm/gain", &gg, |t, v| {
            let x = t.constant(xx.clone());
            let o = t.constant(o.clone());
            let y = t.group_norm(x, groups, v, o, 1e-5)?;
            probe(t, y, &wts)
        });
        let (xx, g, wts) = (xg.clone(), gg.clone(), wg.clone());
        check("group_norm/offset", &og, |t, v| {
            let x = t.constant(xx.clone());
            let g = t.constant(g.clone());
            let y = t.group_norm(x, groups, g, v, 1e-5)?;
            probe(t, y, &wts)
        });
    }

    let xs = random(&[3, 4], &mut rng);
    let ws = random(&[3, 4], &mut rng);
    check("log_softmax", &xs, |t, v| {
        let y = t.log_softmax(v)?;
        let c = t.constant(ws.clone());
        let z = t.mul(y, c)?;
        t.sum(z)
    });

    let xp = random(&[2, 3, 4], &mut rng);
    let wp = random(&[3, 8], &mut rng);
    check("permute+reshape", &xp, |t, v| {
        let y = t.permute(v, &[1, 0, 2])?;
        let y = t.reshape(y, &[3, 8])?;
        let c = t.constant(wp.clone());
        let z = t.mul(y, c)?;
        t.sum_squares(z)
    });
}

#[test]
fn conv1d_sum_of_squares_passes_grad_check() {
    let mut rng = RandomSource::new(11);
    let x = random(&[1, 32], &mut rng);
    let w = random(&[4, 1, 5], &mut rng);
    let r = grad_check(
        |t, v| {
            let w = t.constant(w.clone());
            let y = t.conv1d(v, w, None, 2, Padding::Valid)?;
            t.sum_squares(y)
        },
        &x,
        1e-4,
        1e-4,
    )
    .unwrap();
    assert!(r.passed(), "{r:?}");
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut rng = RandomSource::new(99);
        let x = Tensor::kaiming_uniform(&[2, 6, 5], 1, &mut rng);
        let w = Tensor::kaiming_uniform(&[3, 2, 3, 3], 18, &mut rng).with_grad();
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let wv = tape.leaf(w);
        let y = tape.conv2d(xv, wv, None, 2, 1, Padding::Same).unwrap();
        let y = tape.activation(y, Activation::Gelu).unwrap();
        let l = tape.sum_squares(y).unwrap();
        tape.backward(l).unwrap();
        let bits = |s: &[f64]| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        (bits(tape.value(y).data()), bits(tape.grad(wv).unwrap()))
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn conv1d_is_linear(
        seed in 0u64..1000,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        len in 8usize..40,
        kernel in 1usize..8,
        stride in 1usize..5,
        same in any::<bool>(),
    ) {
        let padding = if same { Padding::Same } else { Padding::Valid };
        let mut rng = RandomSource::new(seed);
        let x = random(&[2, len], &mut rng);
        let y = random(&[2, len], &mut rng);
        let w = random(&[3, 2, kernel], &mut rng);
        let mut tape = Tape::new();
        let wv = tape.constant(w);
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let mix: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
        let mv = tape.constant(Tensor::new(&[2, len], mix).unwrap());
        let cx = tape.conv1d(xv, wv, None, stride, padding).unwrap();
        let cy = tape.conv1d(yv, wv, None, stride, padding).unwrap();
        let cm = tape.conv1d(mv, wv, None, stride, padding).unwrap();
        for ((m, p), q) in tape.value(cm).data().iter().zip(tape.value(cx).data()).zip(tape.value(cy).data()) {
            prop_assert!((m - (a * p + b * q)).abs() <= 1e-10);
        }
    }

    #[test]
    fn conv2d_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0, st in 1usize..3) {
        let mut rng = RandomSource::new(seed);
        let x = random(&[2, 9, 6], &mut rng);
        let y = random(&[2, 9, 6], &mut rng);
        let w = random(&[2, 2, 3, 3], &mut rng);
        let mut tape = Tape::new();
        let wv = tape.constant(w);
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let mix: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
        let mv = tape.constant(Tensor::new(&[2, 9, 6], mix).unwrap());
        let cx = tape.conv2d(xv, wv, None, st, 1, Padding::Same).unwrap();
        let cy = tape.conv2d(yv, wv, None, st, 1, Padding::Same).unwrap();
        let cm = tape.conv2d(mv, wv, None, st, 1, Padding::Same).unwrap();
        for ((m, p), q) in tape.value(cm).data().iter().zip(tape.value(cx).data()).zip(tape.value(cy).data()) {
            prop_assert!((m - (a * p + b * q)).abs() <= 1e-10);
        }
    }
}

/// Direct evaluation of the padded cross-correlation definition.
fn naive_conv2d(x: &Tensor, w: &Tensor, st: usize, sf: usize, padding: Padding) -> (Vec<usize>, Vec<f64>) {
    let [ci, t, f] = x.shape() else { panic!() };
    let [co, _, kt, kf] = w.shape() else { panic!() };
    let (ot, pt) = conv_out_len(*t, *kt, st, padding).unwrap();
    let (of, pf) = conv_out_len(*f, *kf, sf, padding).unwrap();
    let mut out = vec![0.0; co * ot * of];
    for o in 0..*co {
        for i in 0..ot {
            for j in 0..of {
                let mut acc = 0.0;
                for c in 0..*ci {
                    for a in 0..*kt {
                        for b in 0..*kf {
                            let ti = (i * st + a) as isize - pt as isize;
                            let fi = (j * sf + b) as isize - pf as isize;
                            if ti >= 0 && fi >= 0 && (ti as usize) < *t && (fi as usize) < *f {
                                acc += w.at(&[o, c, a, b]) * x.at(&[c, ti as usize, fi as usize]);
                            }
                        }
                    }
                }
                out[(o * ot + i) * of + j] = acc;
            }
        }
    }
    (vec![*co, ot, of], out)
}

#[test]
fn conv2d_matches_direct_definition() {
    let mut rng = RandomSource::new(5);
    for (t, f, kt, kf) in [(7, 5, 3, 3), (9, 4, 2, 5), (5, 8, 4, 2), (3, 3, 3, 3)] {
        let x = random(&[2, t, f], &mut rng);
        let w = random(&[3, 2, kt, kf], &mut rng);
        for st in 1..=3 {
            for sf in 1..=3 {
                for padding in [Padding::Valid, Padding::Same] {
                    if padding == Padding::Valid && (kt > t || kf > f) {
                        continue;
                    }
                    let (shape, expected) = naive_conv2d(&x, &w, st, sf, padding);
                    let mut tape = Tape::new();
                    let xv = tape.constant(x.clone());
                    let wv = tape.constant(w.clone());
                    let y = tape.conv2d(xv, wv, None, st, sf, padding).unwrap();
                    assert_eq!(tape.shape(y), &shape[..]);
                    for (a, b) in tape.value(y).data().iter().zip(&expected) {
                        assert!((a - b).abs() < 1e-12, "{t}x{f} k{kt}x{kf} s{st},{sf} {padding:?}");
                    }
                }
            }
        }
    }
}
