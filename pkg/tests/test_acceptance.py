"""Acceptance gate: ten numbered criteria, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the verdict lines as
they complete. The suite trains the full reference experiments, so it takes
a few minutes on one core; every configuration is fixed-seed and the printed
numbers reproduce exactly across reruns.
"""

import time

import numpy as np
import pytest

import bcp_distill as bd
from bcp_distill.cli import main
from bcp_distill.config import TeachersConfig, TeacherTrainingSection
from bcp_distill.rng import sample_dirichlet
from bcp_distill.sweep import build_teacher_kind

ARCH = bd.Architecture(30, (), 5)
SEEDS = (101, 202, 303, 404, 505)


def _verdict(criterion: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'} {criterion}: {detail}"
    print(f"\n{line}")
    assert passed, line


@pytest.fixture(scope="module")
def ref_task():
    """50k-sample reference task: K=5, d=30, sigma^2=2.5, generation seed 1."""
    stream = bd.new_stream(1)
    spec = bd.sample_task(5, 30, 2.5, stream.child("task"))
    dataset = bd.generate(spec, 50_000, stream.child("data"))
    train_ds, test_ds = bd.split(dataset, 0.5, stream.child("split"))
    eval_ds = bd.subset(test_ds, np.arange(2000))
    return spec, train_ds, test_ds, eval_ds, bd.oracle_error(eval_ds)


@pytest.fixture(scope="module")
def ordering_runs(ref_task):
    """avg_gap and sigma_L for 5 seeds x 8 supervisions on the reference
    task (shared by the ordering and the inverse-epsilon criteria)."""
    _, train_ds, _, eval_ds, l_perf = ref_task
    sups = [("onehot", bd.OneHot()), ("true", bd.TrueBCP())] + [
        (f"eps{e:g}", bd.Dirichlet(float(e))) for e in (0.5, 1, 2, 5, 10, 20)]
    gaps, sigmas = {}, {}
    for name, sup in sups:
        g, s = [], []
        for seed in SEEDS:
            config = bd.TrainConfig(learning_rate=5e-3, iterations=45_000,
                                    supervision=sup, seed=seed,
                                    eval_interval=10)
            _, trace = bd.train(train_ds, eval_ds, ARCH, config)
            g.append(bd.avg_gap(trace, 20_000, l_perf))
            s.append(bd.tail_metrics(trace, len(trace) // 5, 500).sigma_l)
        gaps[name] = np.array(g)
        sigmas[name] = np.array(s)
    return gaps, sigmas


# --------------------------------------------------------------------------

def _random_case(stream):
    """A random network/input/target/temperature for gradient auditing.

    Biases are perturbed off the zero initialization so no pre-activation
    sits exactly on the rectifier kink, where central differences have no
    derivative to measure.
    """
    k = int(stream.integers(2, 7))
    d = int(stream.integers(1, 7))
    depth = int(stream.integers(0, 3))
    hidden = tuple(int(h) for h in stream.integers(2, 9, depth)) if depth else ()
    params = bd.init_params(bd.Architecture(d, hidden, k), stream.child("init"))
    for li, (w, b) in enumerate(params.layers):
        params.layers[li] = (w, stream.normal(0.0, 0.3, b.shape[0]))
    x = stream.normal(0.0, 1.0, d)
    draw = float(stream.uniform())
    if draw < 0.3:
        target = np.eye(k)[int(stream.integers(0, k))]
    elif draw < 0.7:
        g = stream.standard_gamma(np.full(k, 1.0)) + 1e-3
        target = g / g.sum()
    else:
        target = 2.0 * stream.uniform(k)
    return params, x, target, 0.5 + 2.5 * float(stream.uniform())


def _central_differences(params, x, target, temperature, h=1e-6):
    flat = params.flatten()
    out = np.empty_like(flat)
    for j in range(flat.size):
        bumped = flat.copy()
        bumped[j] = flat[j] + h
        up = bd.ce_loss(bd.forward(
            bd.NetworkParams.from_flat(params.arch, bumped), x, temperature),
            target)
        bumped[j] = flat[j] - h
        down = bd.ce_loss(bd.forward(
            bd.NetworkParams.from_flat(params.arch, bumped), x, temperature),
            target)
        out[j] = (up - down) / (2.0 * h)
    return out


def test_criterion_01_backward_matches_finite_differences():
    started = time.perf_counter()
    stream = bd.new_stream(4242)
    worst = 0.0
    for i in range(100):
        params, x, target, temperature = _random_case(stream.child(f"cfg/{i}"))
        grad = bd.backward(params, x, target, temperature)
        numeric = _central_differences(params, x, target, temperature)
        scale = max(float(np.abs(grad).max()), 1e-10)
        worst = max(worst, float(np.abs(grad - numeric).max()) / scale)
    elapsed = time.perf_counter() - started
    _verdict("criterion 1 (gradient correctness)",
             worst < 1e-4 and elapsed < 10.0,
             f"max relative error vs central differences {worst:.3e} over 100 "
             f"random networks (tolerance 1e-4) in {elapsed:.1f} s (limit 10)")


def test_criterion_02_exact_posterior_targets_interpolate(ref_task):
    started = time.perf_counter()
    spec, _, test_ds, eval_ds, _ = ref_task
    optimum = bd.bayes_optimum_linear(spec)
    wide = bd.subset(test_ds, np.arange(10_000))
    norms = np.sqrt(bd.grad_sq_norms(optimum, wide.inputs, wide.true_bcps))
    worst = float(norms.max())
    mc = bd.grad_noise_mc(bd.TrueBCP(), optimum, eval_ds, draws=10,
                          stream=bd.new_stream(77).child("mc")).value
    elapsed = time.perf_counter() - started
    _verdict("criterion 2 (interpolation at the posterior optimum)",
             worst < 1e-10 and mc < 1e-18 and elapsed < 30.0,
             f"max per-sample gradient norm {worst:.3e} over 10^4 inputs "
             f"(< 1e-10), Monte Carlo gradient noise {mc:.3e} (< 1e-18) in "
             f"{elapsed:.1f} s (limit 30)")


def test_criterion_03_exact_posterior_training_reaches_the_floor():
    stream = bd.new_stream(1)
    spec = bd.sample_task(5, 30, 2.5, stream.child("task"))
    dataset = bd.generate(spec, 200_000, stream.child("data"))
    train_ds, test_ds = bd.split(dataset, 0.5, stream.child("split"))
    risk = bd.bayes_risk(spec, test_ds)
    l_perf = bd.oracle_error(test_ds)
    gaps = {}
    finals = {}
    for name, sup in (("true", bd.TrueBCP()), ("onehot", bd.OneHot())):
        config = bd.TrainConfig(learning_rate=5e-4, iterations=2_000_000,
                                supervision=sup, seed=11, eval_interval=5000)
        _, trace = bd.train(train_ds, test_ds, ARCH, config)
        gaps[name] = bd.avg_gap(trace, 20_000, l_perf)
        finals[name] = float(trace.gen_error[-1])
    floor_err = abs(finals["true"] - risk)
    ratio = gaps["onehot"] / gaps["true"]
    _verdict("criterion 3 (exact-posterior floor at alpha=5e-4, B=1)",
             floor_err < 0.005 and ratio >= 3.0,
             f"final gen error {finals['true']:.6f} vs bayes risk {risk:.6f} "
             f"(|diff| {floor_err:.6f} < 0.005 nats); one-hot twin avg_gap "
             f"{gaps['onehot']:.6f} is {ratio:.2f}x the exact-posterior gap "
             f"{gaps['true']:.6f} (needs >= 3x)")


def _separated(hi, lo):
    return hi.mean() - lo.mean() > max(hi.std(ddof=1), lo.std(ddof=1))


def test_criterion_04_noisier_supervision_orders_gaps_and_noise(ordering_runs):
    gaps, sigmas = ordering_runs
    chain = ("onehot", "eps0.5", "eps5", "true")
    pairs = list(zip(chain, chain[1:]))
    ok_gap = all(_separated(gaps[a], gaps[b]) for a, b in pairs)
    ok_sig = all(_separated(sigmas[a], sigmas[b]) for a, b in pairs)
    detail = ", ".join(
        f"{name}: gap {gaps[name].mean():.5f} sigma_L {sigmas[name].mean():.5f}"
        for name in chain)
    _verdict("criterion 4 (supervision-noise ordering, 5 seeds)",
             ok_gap and ok_sig,
             detail + " -- every adjacent pair separated by more than one "
             "across-seed standard deviation, for avg_gap and sigma_L alike")


def test_criterion_05_noise_formulas_match_direct_estimates(ref_task):
    started = time.perf_counter()
    spec, _, _, eval_ds, _ = ref_task
    optimum = bd.bayes_optimum_linear(spec)
    hot = bd.grad_noise_onehot_formula(optimum, eval_ds).value
    cases = [("one-hot", bd.OneHot(), hot),
             ("additive nu=0.01", bd.AdditiveNoise(0.01),
              bd.grad_noise_additive_formula(optimum, eval_ds, 0.01).value),
             ("dirichlet eps=2", bd.Dirichlet(2.0),
              bd.grad_noise_dirichlet_formula(optimum, eval_ds, 2.0).value)]
    stream = bd.new_stream(555)
    rels = []
    for label, sup, formula in cases:
        mc = bd.grad_noise_mc(sup, optimum, eval_ds, draws=200,
                              stream=stream.child("mc/" + label)).value
        rels.append((label, abs(mc - formula) / formula))
    exact = all(bd.grad_noise_dirichlet_formula(optimum, eval_ds, e).value
                == hot / (e + 1.0) for e in (0.25, 0.5, 1.0, 2.0, 5.0, 20.0))
    elapsed = time.perf_counter() - started
    worst = max(rel for _, rel in rels)
    _verdict("criterion 5 (closed-form gradient noise, N=2000, 200 draws)",
             worst < 0.05 and exact and elapsed < 120.0,
             "; ".join(f"{label} off by {100 * rel:.2f}%" for label, rel in rels)
             + f" (tolerance 5%); sigma(eps) == sigma(one-hot)/(eps+1) "
             f"bit-for-bit across six eps; {elapsed:.1f} s (limit 120)")


def test_criterion_06_excess_gap_scales_inversely_with_epsilon(ordering_runs):
    # Every 45k-iteration run still carries the same small optimization
    # transient, which a zero-intercept c/(1+eps) law cannot absorb; the
    # exact-posterior twins measure exactly that shared part, so fit the
    # per-epsilon mean excess over their mean.
    gaps, _ = ordering_runs
    floor = float(gaps["true"].mean())
    points = [(e, float(gaps[f"eps{e:g}"].mean()) - floor)
              for e in (0.5, 1, 2, 5, 10, 20)]
    c, r2 = bd.fit_inverse_eps(points)
    _verdict("criterion 6 (inverse-epsilon gap law, 6 epsilons x 5 seeds)",
             r2 > 0.9,
             f"excess avg_gap over exact-posterior twins fits c/(1+eps) with "
             f"c={c:.5f}, R^2={r2:.4f} (threshold 0.9)")


def test_criterion_07_distance_plateau_and_contraction_bound(ref_task):
    spec, train_ds, _, eval_ds, _ = ref_task
    optimum = bd.bayes_optimum_linear(spec)
    ratios, mus, fracs = [], [], []
    noisy_above = half_below = 0
    for seed in SEEDS:
        runs = {}
        for key, sup, alpha, iters in (
                ("true", bd.TrueBCP(), 5e-3, 90_000),
                ("noisy", bd.Dirichlet(0.5), 5e-3, 90_000),
                ("half", bd.Dirichlet(0.5), 2.5e-3, 180_000)):
            config = bd.TrainConfig(learning_rate=alpha, iterations=iters,
                                    supervision=sup, seed=seed,
                                    eval_interval=100,
                                    track_distance_to=optimum)
            _, trace = bd.train(train_ds, eval_ds, ARCH, config)
            runs[key] = trace

        def tail(trace):
            keep = trace.iterations >= 0.9 * trace.iterations[-1]
            return float(trace.sq_dist[keep].mean())

        d0 = float(runs["true"].sq_dist[0])
        plateau = {k: tail(t) for k, t in runs.items()}
        ratios.append(d0 / plateau["true"])
        noisy_above += plateau["noisy"] > plateau["true"]
        half_below += plateau["half"] < plateau["noisy"]
        mu = bd.fit_mu(runs["true"], 5e-3)
        mus.append(mu)
        fracs.append(bd.bound_overlay(runs["true"], 5e-3,
                                      bd.BoundConstants(mu=mu)).fraction)
    passed = (min(ratios) >= 100.0 and noisy_above == 5 and half_below == 5
              and min(fracs) >= 0.95)
    _verdict("criterion 7 (squared-distance plateaus and contraction bound)",
             passed,
             f"exact-posterior plateau sits {min(ratios):.0f}-{max(ratios):.0f}x "
             f"below the initial distance (needs >= 100x); eps=0.5 plateau "
             f"higher {noisy_above}/5; halving alpha lowers it {half_below}/5; "
             f"contraction-bound overlay fraction >= {min(fracs):.2f} with "
             f"fitted mu in [{min(mus):.4f}, {max(mus):.4f}]")


def test_criterion_08_dirichlet_sampler_moments():
    base = np.array([0.4, 0.25, 0.15, 0.12, 0.08])
    n = 100_000
    stream = bd.new_stream(88)
    worst_mean = worst_var = 0.0
    for eps in (0.5, 5.0):
        child = stream.child(f"eps/{eps:g}")
        draws = np.stack([sample_dirichlet(child, eps * base)
                          for _ in range(n)])
        mean_se = draws.std(axis=0, ddof=1) / np.sqrt(n)
        worst_mean = max(worst_mean, float(
            np.abs((draws.mean(axis=0) - base) / mean_se).max()))
        var_want = base * (1.0 - base) / (eps + 1.0)
        centered = (draws - draws.mean(axis=0)) ** 2
        var_se = centered.std(axis=0, ddof=1) / np.sqrt(n)
        worst_var = max(worst_var, float(
            np.abs((draws.var(axis=0, ddof=1) - var_want) / var_se).max()))
    _verdict("criterion 8 (Dirichlet moments at 10^5 draws, eps in {0.5, 5})",
             worst_mean < 5.0 and worst_var < 5.0,
             f"mean matches p within {worst_mean:.2f} SE and variance matches "
             f"p(1-p)/(eps+1) within {worst_var:.2f} SE (threshold 5)")


def test_criterion_09_ensemble_distillation_beats_single_teacher(ref_task):
    spec, train_ds, _, eval_ds, l_perf = ref_task
    section = TeacherTrainingSection(alpha=5e-3, iterations=3000)
    cfg_ens = TeachersConfig(kind="ensemble", seed=0, members=5, hidden=(),
                             training=section)
    cfg_one = TeachersConfig(kind="deterministic", seed=0, members=1,
                             hidden=(), training=section)
    gap_ens, gap_one, quality_ok = [], [], 0
    for rep in range(5):
        tstream = bd.new_stream(9000 + rep)
        ens = build_teacher_kind(cfg_ens, train_ds, tstream)
        one = build_teacher_kind(cfg_one, train_ds, tstream)
        q_ens = bd.teacher_quality(ens, spec, eval_ds)
        q_members = float(np.mean(
            [bd.teacher_quality(bd.Deterministic(m), spec, eval_ds)
             for m in ens.members]))
        quality_ok += q_ens <= q_members
        for kind, bucket in ((ens, gap_ens), (one, gap_one)):
            registry = bd.TeacherRegistry(task=spec, kind=kind)
            config = bd.TrainConfig(learning_rate=5e-3, iterations=45_000,
                                    supervision=bd.Mixture(1.0, bd.Teacher(1.0)),
                                    seed=7000 + rep, eval_interval=10)
            _, trace = bd.train(train_ds, eval_ds, ARCH, config,
                                teachers=registry)
            bucket.append(bd.avg_gap(trace, 20_000, l_perf))
    mean_ens, mean_one = float(np.mean(gap_ens)), float(np.mean(gap_one))
    per_rep = sum(e <= o for e, o in zip(gap_ens, gap_one))
    _verdict("criterion 9 (ensemble vs single-teacher distillation, 5 reps)",
             mean_ens <= mean_one and quality_ok == 5,
             f"student avg_gap {mean_ens:.5f} (ensemble) <= {mean_one:.5f} "
             f"(single teacher), per-rep {per_rep}/5; ensemble teacher quality "
             f"<= member mean in {quality_ok}/5 reps")


RERUN_CONFIG = """\
[task]
num_classes = 3
input_dim = 4
noise_variance = 2.0
n = 400
split = 0.5
data_seed = 7

[training]
alpha = 0.05
iterations = 60
eval_interval = 20
seed = 9

[supervision]
kind = "dirichlet"
epsilon = 1.0

[sweep]
parameter = "epsilon"
values = [0.5, 2.0]
seeds_per_point = 2
t0 = 20
n_tail = 2
w = 2
noise_samples = 50
noise_draws = 4
"""


def test_criterion_10_reruns_are_byte_identical(tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text(RERUN_CONFIG)
    outputs = {}
    for tag in ("a", "b"):
        side = tmp_path / tag
        side.mkdir()
        data = side / "data.bin"
        assert main(["gen", "--config", str(cfg), "--out", str(data)]) == 0
        assert main(["train", "--config", str(cfg), "--data", str(data),
                     "--out", str(side / "run")]) == 0
        assert main(["sweep", "--config", str(cfg), "--data", str(data),
                     "--out", str(side / "sw")]) == 0
        outputs[tag] = {
            "dataset": data.read_bytes(),
            "trace": (side / "run" / "trace.csv").read_bytes(),
            "checkpoint": (side / "run" / "checkpoint.bin").read_bytes(),
            "summary": (side / "sw" / "summary.csv").read_bytes(),
        }
    same = {name: outputs["a"][name] == outputs["b"][name]
            for name in outputs["a"]}
    _verdict("criterion 10 (byte-identical reruns)",
             all(same.values()),
             "dataset, trace CSV, checkpoint, and sweep summary CSV all "
             "byte-identical across two fresh runs of the same config "
             f"({sum(same.values())}/4 artifacts)")
