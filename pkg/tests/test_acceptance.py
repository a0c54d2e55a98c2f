"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as
they complete. Tolerances are pinned here, not configurable.
"""

import contextlib
import json
import math
import time

import numpy as np
import pytest

from llraw.awd import (
    AwdParams,
    DisturbanceProbe,
    FixedFilterKind,
    awd_backward,
    awd_forward,
    downsample_fixed,
)
from llraw.cli import main
from llraw.dsl import DslConfig, ToyNet, disturbance, dsl_loss, train_toy
from llraw.images import write_png
from llraw.isp import (
    IspParams,
    RawRgbImage,
    SrgbImage,
    gamma_correct,
    process,
    psnr,
    quantize,
    unprocess,
)
from llraw.noise import NoiseParams, noisy_values
from llraw.scb import ScbParams, fold_check, scb_backward, scb_forward_train
from llraw.shapes import make_pair_dataset, split_pairs
from llraw.tensor import (
    conv2d,
    conv2d_backward,
    depthwise_conv2d,
    depthwise_conv2d_backward,
    finite_diff_grad,
    softmax,
    softmax_backward,
)
from llraw.tnsr import write_tnsr

from reference import max_rel_err


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def test_scb_fold_equivalence():
    with criterion("scb-fold-equivalence"):
        t0 = time.monotonic()
        _, worst = fold_check(num=100, seed=0, max_channels=8, max_extent=16)
        elapsed = time.monotonic() - t0
        assert worst <= 1e-10, f"max divergence {worst:.3e}"
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_awd_weight_law():
    with criterion("awd-weight-law"):
        rng = np.random.default_rng(0)
        params = AwdParams.init(4, kernel_size=3, reduction=2,
                                rng=np.random.default_rng(1), logit_scale=3.0)
        for _ in range(100):
            x = rng.normal(scale=rng.uniform(0.1, 5.0), size=(4, 9, 10))
            _, wts, _ = awd_forward(x, params)
            assert (wts.w > 0).all()
            assert np.abs(wts.w.sum(axis=-1) - 1.0).max() <= 1e-9
        uniform = AwdParams.init(4, kernel_size=3, reduction=2,
                                 rng=np.random.default_rng(2))
        uniform.local_logit_weights[:] = 0.0
        x = rng.normal(size=(4, 9, 10))
        y, wts, _ = awd_forward(x, uniform)
        assert np.abs(wts.w - 1.0 / 9.0).max() <= 1e-12
        mean = downsample_fixed(x, FixedFilterKind("mean", kernel_size=3))
        assert np.abs(y - mean).max() <= 1e-12


def _check_conv_grads(rng) -> float:
    ci, co = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    k = int(rng.integers(1, 4))
    x = rng.normal(size=(ci, k + 3, k + 3))
    w = rng.normal(size=(co, ci, k, k))
    y = conv2d(x, w, padding=1)
    dx, dw = conv2d_backward(x, w, 2.0 * y, padding=1)
    fx = finite_diff_grad(lambda v: float(np.sum(conv2d(v, w, padding=1) ** 2)), x.copy())
    fw = finite_diff_grad(lambda v: float(np.sum(conv2d(x, v, padding=1) ** 2)), w.copy())
    return max(max_rel_err(dx, fx), max_rel_err(dw, fw))


def _check_depthwise_grads(rng) -> float:
    c = int(rng.integers(1, 4))
    k = int(rng.integers(1, 4))
    x = rng.normal(size=(c, k + 3, k + 3))
    kern = rng.normal(size=(c, k, k))
    y = depthwise_conv2d(x, kern, padding=1)
    dx, dk = depthwise_conv2d_backward(x, kern, 2.0 * y, padding=1)
    fx = finite_diff_grad(
        lambda v: float(np.sum(depthwise_conv2d(v, kern, padding=1) ** 2)), x.copy())
    fk = finite_diff_grad(
        lambda v: float(np.sum(depthwise_conv2d(x, v, padding=1) ** 2)), kern.copy())
    return max(max_rel_err(dx, fx), max_rel_err(dk, fk))


def _check_softmax_grads(rng) -> float:
    v = rng.normal(scale=4.0, size=(3, 6))
    target = rng.normal(size=(3, 6))
    y = softmax(v, axis=1)
    dv = softmax_backward(y, 2.0 * (y - target), axis=1)
    fv = finite_diff_grad(
        lambda u: float(np.sum((softmax(u, axis=1) - target) ** 2)), v.copy())
    return max_rel_err(dv, fv)


def _check_awd_grads(rng) -> float:
    c, k = 4, int(rng.choice([2, 3]))
    params = AwdParams.init(c, kernel_size=k, reduction=2, rng=rng, logit_scale=2.0)
    params.local_logit_weights = rng.normal(
        0.0, 0.3, size=params.local_logit_weights.shape)
    x = rng.normal(size=(c, k + 4, k + 4))
    y, _, cache = awd_forward(x, params)
    dx, grads = awd_backward(cache, 2.0 * y)

    def loss(local=None, fc1=None, fc2=None, xv=None):
        q = AwdParams(
            local if local is not None else params.local_logit_weights,
            fc1 if fc1 is not None else params.temp_fc1,
            fc2 if fc2 is not None else params.temp_fc2,
            kernel_size=k, stride=2, reduction=2)
        yy, _, _ = awd_forward(xv if xv is not None else x, q)
        return float(np.sum(yy * yy))

    return max(
        max_rel_err(dx, finite_diff_grad(lambda v: loss(xv=v), x.copy())),
        max_rel_err(grads.local_logit_weights,
                    finite_diff_grad(lambda v: loss(local=v),
                                     params.local_logit_weights.copy())),
        max_rel_err(grads.temp_fc1,
                    finite_diff_grad(lambda v: loss(fc1=v), params.temp_fc1.copy())),
        max_rel_err(grads.temp_fc2,
                    finite_diff_grad(lambda v: loss(fc2=v), params.temp_fc2.copy())),
    )


def _check_scb_grads(rng) -> float:
    c1, c2 = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    params = ScbParams.init(c1, c2, rng=rng)
    params.sconv_logits = rng.normal(size=(c2, 3, 3))
    x = rng.normal(size=(c1, 5, 5))
    y, cache = scb_forward_train(x, params)
    dx, dw3, dw1, dlog = scb_backward(cache, 2.0 * y)

    def loss(w3=None, w1=None, logits=None, xv=None):
        q = ScbParams(w3 if w3 is not None else params.w3,
                      w1 if w1 is not None else params.w1,
                      logits if logits is not None else params.sconv_logits)
        yy, _ = scb_forward_train(xv if xv is not None else x, q)
        return float(np.sum(yy * yy))

    return max(
        max_rel_err(dx, finite_diff_grad(lambda v: loss(xv=v), x.copy())),
        max_rel_err(dw3, finite_diff_grad(lambda v: loss(w3=v), params.w3.copy())),
        max_rel_err(dw1, finite_diff_grad(lambda v: loss(w1=v), params.w1.copy())),
        max_rel_err(dlog, finite_diff_grad(lambda v: loss(logits=v),
                                           params.sconv_logits.copy())),
    )


def _check_dsl_grads(rng) -> float:
    from llraw.dsl import PairBatch

    clean = rng.uniform(0.1, 0.9, size=(2, 3, 8, 8))
    noisy = np.clip(clean + rng.normal(0.0, 0.1, size=clean.shape), 0.0, 1.0)
    pairs = PairBatch(clean, noisy, rng.integers(0, 4, size=2))
    net = ToyNet.init(seed=int(rng.integers(0, 1 << 30)))
    cfg = DslConfig(alpha=1.0, beta=0.01)
    _, grads = dsl_loss(net, pairs, cfg)
    eps = 1e-5
    worst = 0.0
    for name, param in net.param_items():
        flat = param.reshape(-1)
        coords = rng.choice(flat.size, size=min(3, flat.size), replace=False)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            up, _ = dsl_loss(net, pairs, cfg)
            flat[idx] = orig - eps
            down, _ = dsl_loss(net, pairs, cfg)
            flat[idx] = orig
            numeric = (up - down) / (2 * eps)
            worst = max(worst, max_rel_err(grads[name].reshape(-1)[idx], numeric))
    return worst


def test_gradient_suite():
    with criterion("gradient-suite"):
        t0 = time.monotonic()
        checks = [
            ("conv2d", _check_conv_grads),
            ("depthwise", _check_depthwise_grads),
            ("softmax", _check_softmax_grads),
            ("awd", _check_awd_grads),
            ("scb", _check_scb_grads),
            ("dsl", _check_dsl_grads),
        ]
        for block, (name, fn) in enumerate(checks):
            for trial in range(20):
                rng = np.random.default_rng(7000 + 100 * block + trial)
                err = fn(rng)
                assert err <= 1e-3, f"{name} trial {trial}: rel err {err:.2e}"
        elapsed = time.monotonic() - t0
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_lowpass_noise_suppression_figure():
    with criterion("mean-vs-strided-noise-variance"):
        rng = np.random.default_rng(0)
        sigma = 60.0 / 255.0
        base = rng.uniform(0.2, 0.8, size=(1, 100, 100))
        clean = np.kron(base, np.ones((20, 20)))  # 2000x2000 -> 1e6 outputs
        noisy = clean + rng.normal(0.0, sigma, size=clean.shape)

        mean_kind = FixedFilterKind("mean", kernel_size=3)
        resid_mean = (downsample_fixed(noisy, mean_kind)
                      - downsample_fixed(clean, mean_kind))[:, 2:-2, 2:-2]
        assert abs(resid_mean.var() / (sigma**2 / 9.0) - 1.0) < 0.10

        strided_kind = FixedFilterKind("strided")
        resid_str = (downsample_fixed(noisy, strided_kind)
                     - downsample_fixed(clean, strided_kind))
        assert abs(resid_str.var() / sigma**2 - 1.0) < 0.10


def test_disturbance_ordering():
    with criterion("disturbance-ordering"):
        sigma = 60.0 / 255.0
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(2000 + seed)
            probe = DisturbanceProbe.init(in_channels=3, width=8, seed=seed)
            base = rng.uniform(0.2, 0.8, size=(3, 4, 4))
            clean = np.kron(base, np.ones((8, 8)))
            noisy = clean + rng.normal(0.0, sigma, size=clean.shape)
            d = {}
            for tag in ("mean", "strided"):
                kind = FixedFilterKind(tag, kernel_size=3)
                ds = lambda f: downsample_fixed(f, kind)
                d[tag] = disturbance(probe.features(clean, ds),
                                     probe.features(noisy, ds))
            wins += d["mean"] < d["strided"]
        assert wins >= 19, f"mean filter won only {wins}/20 seeds"


def test_noise_statistics():
    with criterion("noise-statistics"):
        t0 = time.monotonic()
        shot = NoiseParams(system_gain_k=4.0, read_sigma=0.0, row_sigma=0.0,
                           adc_bits=14, seed=1)
        out = noisy_values(np.full((1, 1000, 1000), 0.5), shot, clip=False)
        assert abs(out.var() / out.mean() / shot.k_norm - 1.0) < 0.05

        additive = NoiseParams(system_gain_k=1e-9, read_sigma=3.0, row_sigma=1.5,
                               adc_bits=14, seed=2)
        out = noisy_values(np.zeros((1, 1000, 1000)), additive, clip=False)
        want = additive.read_sigma_norm**2 + additive.row_sigma_norm**2
        assert abs(out.var() / want - 1.0) < 0.05

        banded = NoiseParams(system_gain_k=1e-9, read_sigma=0.5, row_sigma=2.0,
                             adc_bits=14, seed=3)
        out = noisy_values(np.zeros((3, 2000, 64)), banded, clip=False)
        rows = out.reshape(-1, 64)
        pick = np.random.default_rng(0)
        covs = []
        for _ in range(200):
            j1, j2 = pick.choice(64, size=2, replace=False)
            covs.append(np.cov(rows[:, j1], rows[:, j2])[0, 1])
        want_cov = banded.row_sigma_norm**2
        assert abs(np.mean(covs) / want_cov - 1.0) < 0.05
        cross = np.cov(rows[:-1, 5], rows[1:, 5])[0, 1]
        assert abs(cross) < 0.05 * want_cov
        elapsed = time.monotonic() - t0
        assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_isp_round_trip():
    with criterion("isp-round-trip"):
        rng = np.random.default_rng(4)
        ccm = np.array([[0.92, 0.05, 0.03], [0.04, 0.92, 0.04], [0.02, 0.06, 0.92]])
        for tone, min_db in (("none", 60.0), ("smoothstep", 40.0)):
            isp = IspParams(wb_gains=(2.0, 1.0, 1.6), ccm=ccm, gamma=1.0 / 2.2,
                            tone_curve=tone)
            for _ in range(20):
                base = rng.uniform(0.3, 0.75, size=(1, 12, 12))
                jitter = rng.uniform(-0.08, 0.08, size=(3, 12, 12))
                img = SrgbImage(np.clip(base + jitter, 0.05, 0.95))
                raw = unprocess(img, isp)
                assert raw.clip_fraction == 0.0, "test image clipped; not a valid trial"
                back = process(raw, isp)
                db = psnr(back.pixels, img.pixels)
                assert db >= min_db, f"{tone}: {db:.1f} dB"
        x = rng.uniform(0.0, 1.0, size=(3, 16, 16))
        back = gamma_correct(gamma_correct(x, 1.0 / 2.2), 2.2)
        assert np.abs(back - x).max() <= 1e-12


def test_bit_depth_study():
    with criterion("bit-depth-study"):
        rng = np.random.default_rng(5)
        raw = RawRgbImage(rng.uniform(0.0, 1.0, size=(3, 256, 256)))
        values = [psnr(quantize(raw, b).pixels, raw.pixels) for b in (8, 10, 12, 14)]
        assert values[0] < values[1] < values[2] < values[3]
        want_8bit = 10.0 * math.log10(12.0 * 255.0**2)
        assert abs(values[0] - want_8bit) <= 0.5, f"8-bit PSNR {values[0]:.2f} dB"


def test_dsl_effect():
    with criterion("dsl-effect"):
        t0 = time.monotonic()
        wins = 0
        acc_base, acc_dsl = [], []
        for seed in range(5):
            pairs = make_pair_dataset(1000, image_size=32, num_classes=4, seed=seed)
            train, hold = split_pairs(pairs, 0.2, seed=seed)
            last = {}
            for tag, beta in (("base", 0.0), ("dsl", 0.01)):
                cfg = DslConfig(alpha=1.0, beta=beta, epochs=2, batch_size=8,
                                learning_rate=0.05, seed=seed)
                _, rows = train_toy(train, cfg, holdout=hold)
                last[tag] = rows[-1]
            wins += last["dsl"]["mean_disturbance"] < last["base"]["mean_disturbance"]
            acc_base.append(last["base"]["noisy_acc"])
            acc_dsl.append(last["dsl"]["noisy_acc"])
        elapsed = time.monotonic() - t0
        assert wins >= 4, f"DSL lowered disturbance in only {wins}/5 seeds"
        gap = float(np.mean(acc_base)) - float(np.mean(acc_dsl))
        assert gap <= 0.02, f"noisy accuracy dropped by {gap * 100:.1f} points"
        assert elapsed < 300.0, f"took {elapsed:.0f}s"


def test_cli_determinism(tmp_path):
    with criterion("cli-determinism"):
        rng = np.random.default_rng(6)
        png = tmp_path / "in.png"
        write_png(png, rng.uniform(0.2, 0.8, size=(3, 16, 16)))
        raw_t = tmp_path / "raw.tnsr"
        write_tnsr(raw_t, rng.uniform(0.0, 1.0, size=(3, 16, 16)))
        train_cfg = tmp_path / "train.json"
        train_cfg.write_text(json.dumps({
            "epochs": 1, "batch_size": 4, "num_pairs": 8, "image_size": 12,
            "holdout_fraction": 0.25, "seed": 0,
        }))

        def run_all(root):
            root.mkdir()
            outputs = []
            assert main(["synth", "--input", str(png), "--seed", "5",
                         "--out-prefix", str(root / "s")]) == 0
            assert main(["quantize", "--input", str(raw_t),
                         "--out-csv", str(root / "q.csv"),
                         "--out-dir", str(root)]) == 0
            assert main(["awd-demo", "--input", str(raw_t), "--seed", "5",
                         "--out-dir", str(root / "demo")]) == 0
            assert main(["fold-check", "--num", "5", "--seed", "5",
                         "--out-csv", str(root / "f.csv")]) == 0
            assert main(["train-toy", "--config", str(train_cfg),
                         "--out", str(root / "m.csv")]) == 0
            assert main(["disturbance", "--clean", str(raw_t),
                         "--noisy", str(raw_t),
                         "--out-csv", str(root / "d.csv")]) == 0
            for p in sorted(root.rglob("*")):
                if p.is_file():
                    outputs.append((p.relative_to(root), p.read_bytes()))
            return outputs

        a = run_all(tmp_path / "run_a")
        b = run_all(tmp_path / "run_b")
        assert [name for name, _ in a] == [name for name, _ in b]
        for (name, bytes_a), (_, bytes_b) in zip(a, b):
            assert bytes_a == bytes_b, f"{name} differs between runs"
