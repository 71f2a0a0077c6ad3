"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Criterion 5 trains a teacher and two students from ``configs/toy.yaml`` on a single
CPU thread, so this module takes around ten minutes.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import torch
from skimage.metrics import structural_similarity

from addsr import metrics
from addsr.degradation import (
    FIXED_PIPELINES,
    add_gaussian_noise,
    apply_pipeline,
    fixed_pipeline,
    gaussian_blur,
    gaussian_kernel,
    random_training_pipeline,
)
from addsr.harness.config import load_config
from addsr.harness.experiment import build_datasets, distill, evaluate_student, image_metrics, train_teacher
from addsr.networks import Denoiser, Discriminator, checksum, denoise_eps, discriminate
from addsr.objective import WeightingParams, generator_adv_loss, ta_distill_loss, total_loss, weight_d_batch, weight_d, weighting_ratio
from addsr.sampler import baseline_sample, blend_condition, psr_sample
from addsr.schedule import StudentTimestepSet, build_schedule, forward_diffuse, predict_x0
from gradcheck import TINY_DENOISER, TINY_DISC, fd_relative_error

TOY_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "toy.yaml"
SCHED = build_schedule()
STS = StudentTimestepSet()


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        assert ok, detail

    return emit


def test_criterion_1_equations(report):
    start = time.perf_counter()
    g = torch.Generator().manual_seed(0)
    worst = 0.0
    for _ in range(100):
        x0 = torch.rand((1, 3, 8, 8), generator=g) * 2 - 1
        eps = torch.randn(x0.shape, generator=g)
        s = int(torch.randint(1, SCHED.T + 1, (1,), generator=g))
        back = predict_x0(forward_diffuse(x0, s, eps, SCHED), s, eps, SCHED)
        worst = max(worst, float((back - x0).norm() / x0.norm()))

    a, b = torch.randn(2, 3, 8, 8, generator=g), torch.randn(2, 3, 8, 8, generator=g)
    endpoints = torch.equal(blend_condition(a, b, 1.0), a) and torch.equal(blend_condition(a, b, 0.0), b)

    wp = WeightingParams(mu=0.5, nu=2.1)
    factor_err = max(
        abs(weight_d(s, t, SCHED, STS, wp) - f * math.sqrt(SCHED.alpha_bar(t)))
        for t in (1, 500, 1000)
        for s, f in zip(STS.anchors, (0.5, 1.05, 2.205, 4.6305))
    )

    decreasing = constant = True
    for t in range(1, SCHED.T + 1, 37):
        r = [weighting_ratio(s, t, SCHED, STS, WeightingParams(nu=nu)) for nu in (1.3, 2.1) for s in STS.anchors]
        decreasing &= all(x > y for x, y in zip(r[:4], r[1:4])) and all(x > y for x, y in zip(r[4:], r[5:]))
        c = [weighting_ratio(s, t, SCHED, STS, WeightingParams(form="constant")) for s in STS.anchors]
        constant &= max(c) == min(c)
    elapsed = time.perf_counter() - start

    ok = worst <= 1e-5 and endpoints and factor_err <= 1e-12 and decreasing and constant and elapsed < 60
    report(
        1,
        ok,
        f"round trip {worst:.1e} (<=1e-5), blend endpoints exact={endpoints}, factor err {factor_err:.1e} "
        f"(<=1e-12), ratio decreasing={decreasing}, baseline constant={constant}, {elapsed:.1f}s",
    )


def _gradient_case(form, lam):
    torch.manual_seed(0)
    student = Denoiser(TINY_DENOISER, SCHED.alpha_bars)
    with torch.no_grad():
        for p in student.control.parameters():
            p.add_(0.3 * torch.randn_like(p))
    teacher = Denoiser(TINY_DENOISER, SCHED.alpha_bars).requires_grad_(False)
    teacher.load_state_dict(student.state_dict())
    disc = Discriminator(TINY_DISC)
    before = checksum(teacher)

    g = torch.Generator().manual_seed(1)
    x0 = torch.rand((3, 1, 16, 16), generator=g) * 2 - 1
    x_lr = torch.nn.functional.avg_pool2d(x0, 4)
    s = torch.tensor(STS.anchors[:3])
    t = torch.tensor([40, 400, 900])
    x_s = forward_diffuse(x0, s, torch.randn(x0.shape, generator=g), SCHED)
    eps_t = torch.randn(x0.shape, generator=g)
    wp = WeightingParams(form=form, lam=lam)
    d = weight_d_batch(s, t, SCHED, STS, wp)

    def student_x0():
        return predict_x0(x_s, s, denoise_eps(student, x_s, s, x_lr), SCHED)

    # the teacher target is a stop-gradient constant, so it is fixed once here
    with torch.no_grad():
        x_t = forward_diffuse(student_x0(), t, eps_t, SCHED)
        teacher_x0 = predict_x0(x_t, t, denoise_eps(teacher, x_t, t, x0), SCHED).clamp(-1, 1)

    def loss():
        sx0 = student_x0()
        return total_loss(ta_distill_loss(sx0, teacher_x0, d), generator_adv_loss(discriminate(disc, sx0, x_lr)), wp)

    params = list(student.parameters()) + list(disc.parameters())
    # x0 at s=999 divides by sqrt(alpha_bar) ~ 0.0066, so a smaller step is round-off bound
    err = fd_relative_error(loss, params, h=3e-3)
    leak = checksum(teacher) != before or any(p.grad is not None for p in teacher.parameters())
    return err, leak, sum(p.numel() for p in params)


def test_criterion_2_gradients(report):
    start = time.perf_counter()
    errs, leaks = {}, []
    for form in ("exponential", "linear"):
        for lam in (0.0, 0.02):
            err, leak, n_params = _gradient_case(form, lam)
            errs[f"{form}/{lam}"] = err
            leaks.append(leak)
    elapsed = time.perf_counter() - start
    worst = max(errs.values())
    ok = worst <= 1e-3 and not any(leaks) and n_params <= 1000 and elapsed < 300
    report(
        2,
        ok,
        f"worst FD rel. error {worst:.1e} (<=1e-3) over {n_params} params, "
        f"teacher leakage={any(leaks)}, {elapsed:.1f}s",
    )


def test_criterion_3_degradation(report):
    start = time.perf_counter()
    const = np.full((40, 40, 3), 123, np.uint8)
    kernel_err = max(abs(gaussian_kernel(sig).sum() - 1.0) for sig in (0.2, 1.0, 3.0))
    blur_const = all(np.abs(gaussian_blur(const, sig) - 123).max() <= 1e-9 for sig in (0.5, 2.0, 3.0))

    sigma = 10.0
    noise = add_gaussian_noise(np.zeros((1000, 1000), np.float64), sigma, np.random.default_rng(0))
    noise_rel = abs(noise.std() - sigma) / sigma

    hr = (np.random.default_rng(1).random((512, 512, 3)) * 255).astype(np.uint8)
    shapes = {name: apply_pipeline(hr, fixed_pipeline(name, seed=3)).shape for name in FIXED_PIPELINES}
    shapes_ok = len(shapes) == 4 and all(sh == (128, 128, 3) for sh in shapes.values())

    deterministic = all(
        np.array_equal(apply_pipeline(hr, fixed_pipeline(n, seed=3)), apply_pipeline(hr, fixed_pipeline(n, seed=3)))
        for n in FIXED_PIPELINES
    ) and np.array_equal(
        apply_pipeline(hr, random_training_pipeline(7)), apply_pipeline(hr, random_training_pipeline(7))
    )
    elapsed = time.perf_counter() - start
    ok = kernel_err <= 1e-9 and blur_const and noise_rel <= 0.05 and shapes_ok and deterministic and elapsed < 120
    report(
        3,
        ok,
        f"kernel sum err {kernel_err:.1e}, constants preserved={blur_const}, noise std off {100 * noise_rel:.2f}% "
        f"(<=5%), pipelines {sorted(shapes)} -> 128x128={shapes_ok}, deterministic={deterministic}, {elapsed:.1f}s",
    )


def test_criterion_4_metrics(report):
    start = time.perf_counter()
    a = np.full((16, 16, 3), 100, np.uint8)
    p10 = metrics.psnr(a, a + 10)
    p0 = metrics.psnr(np.zeros_like(a), np.full_like(a, 255))
    cap = metrics.psnr(a, a)
    psnr_ok = abs(p10 - 28.1308) <= 1e-4 and abs(p0) <= 1e-9 and cap == metrics.PSNR_CAP

    rng = np.random.default_rng(0)
    ssim_err = 0.0
    for _ in range(5):
        x = rng.integers(0, 256, (32, 32, 3)).astype(np.uint8)
        y = np.clip(x.astype(int) + rng.integers(-40, 41, x.shape), 0, 255).astype(np.uint8)
        ref = structural_similarity(
            metrics.luminance(x), metrics.luminance(y), gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, data_range=255,
        )
        ssim_err = max(ssim_err, abs(metrics.ssim(x, y) - ref))

    checker = ((np.indices((16, 16)).sum(0) % 2) * 255).astype(np.uint8)
    hf_const, hf_checker = metrics.hf_energy(a), metrics.hf_energy(checker)
    elapsed = time.perf_counter() - start
    ok = psnr_ok and ssim_err <= 1e-6 and hf_const == 0.0 and abs(hf_checker - 1.0) <= 1e-12 and elapsed < 60
    report(
        4,
        ok,
        f"PSNR {p10:.4f}/{p0:.1f}/{cap:.0f} dB, SSIM vs oracle {ssim_err:.1e} (<=1e-6), "
        f"hf constant {hf_const}, hf checkerboard {hf_checker:.6f}, {elapsed:.1f}s",
    )


def _best_time(fn, repeats=3):
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


@pytest.fixture(scope="module")
def toy_run():
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        start = time.perf_counter()
        cfg = load_config(TOY_CONFIG)
        train, test = build_datasets(cfg)
        teacher = train_teacher(cfg, train)
        students = {}
        for nu in (2.1, 1.3):
            students[nu] = distill(replace(cfg, weighting=cfg.weighting.with_(nu=nu)), teacher, train).student

        gen = lambda: torch.Generator().manual_seed(cfg.sampling.seed)  # noqa: E731
        teacher_out = baseline_sample(teacher, test.lr, 50, SCHED, gen())
        calls = []
        hook = students[2.1].register_forward_hook(lambda *_: calls.append(1))
        psr_sample(students[2.1], test.lr, 4, 1.0, cfg.sts, SCHED, gen())
        hook.remove()
        hook = teacher.register_forward_hook(lambda *_: calls.append(0))
        baseline_sample(teacher, test.lr, 50, SCHED, gen())
        hook.remove()
        t_student = _best_time(lambda: psr_sample(students[2.1], test.lr, 4, 1.0, cfg.sts, SCHED, gen()))
        t_teacher = _best_time(lambda: baseline_sample(teacher, test.lr, 50, SCHED, gen()))

        result = {
            "teacher": image_metrics(teacher_out, test.hr),
            "steps": evaluate_student(students[2.1], test, cfg),
            "blend": {r: evaluate_student(students[2.1], test, cfg, steps=[4], blend_r=r)[0] for r in (0.0, 0.5, 1.0)},
            "nu": {nu: evaluate_student(s, test, cfg, steps=[4])[0] for nu, s in students.items()},
            "evals": (calls.count(0), calls.count(1)),
            "times": (t_teacher, t_student),
        }
        result["elapsed"] = time.perf_counter() - start
        return result
    finally:
        torch.set_num_threads(threads)


def test_criterion_5a_student_matches_teacher(toy_run, report):
    teacher = toy_run["teacher"]["psnr"]
    student = toy_run["steps"][3]["psnr"]
    gap = teacher - student
    report(
        "5a",
        gap <= 1.5 and toy_run["elapsed"] <= 1800,
        f"student 4-step {student:.2f} dB vs teacher 50-step {teacher:.2f} dB, gap {gap:.2f} dB (<=1.5), "
        f"toy run {toy_run['elapsed'] / 60:.1f} min (<=30)",
    )


def test_criterion_5b_speedup(toy_run, report):
    teacher_calls, student_calls = toy_run["evals"]
    t_teacher, t_student = toy_run["times"]
    ratio, speedup = teacher_calls / student_calls, t_teacher / t_student
    report(
        "5b",
        ratio == 12.5 and speedup >= 5.0,
        f"evaluations {teacher_calls}/{student_calls} = {ratio} (==12.5), wall-clock speedup {speedup:.1f}x (>=5)",
    )


def test_criterion_5c_step_trajectory(toy_run, report):
    hf = [r["hf_energy"] for r in toy_run["steps"]]
    ps = [r["psnr"] for r in toy_run["steps"]]
    hf_up = all(a <= b for a, b in zip(hf, hf[1:]))
    psnr_down = all(a >= b for a, b in zip(ps, ps[1:]))
    report(
        "5c",
        hf_up and psnr_down,
        f"steps 1-4 hf_energy {[round(h, 4) for h in hf]} non-decreasing={hf_up}, "
        f"PSNR {[round(p, 2) for p in ps]} non-increasing={psnr_down}",
    )


def test_criterion_5d_blend_trend(toy_run, report):
    rows = [toy_run["blend"][r] for r in (0.0, 0.5, 1.0)]
    hf = [r["hf_energy"] for r in rows]
    ps = [r["psnr"] for r in rows]
    hf_up = hf[0] < hf[1] < hf[2]
    psnr_down = ps[0] > ps[1] > ps[2]
    report(
        "5d",
        hf_up and psnr_down,
        f"blend_r 0/0.5/1 hf_energy {[round(h, 4) for h in hf]} increasing={hf_up}, "
        f"PSNR {[round(p, 2) for p in ps]} decreasing={psnr_down}",
    )


def test_criterion_5e_nu_trend(toy_run, report):
    lo, hi = toy_run["nu"][1.3]["psnr"], toy_run["nu"][2.1]["psnr"]
    report("5e", hi > lo, f"4-step PSNR at nu=2.1 {hi:.2f} dB vs nu=1.3 {lo:.2f} dB (higher at larger nu)")


def test_criterion_6_determinism(report, tmp_path):
    cfg = load_config(TOY_CONFIG).override({"data.n_train": 200, "data.n_test": 4, "teacher.steps": 20})
    train, _ = build_datasets(cfg)
    teacher = train_teacher(cfg, train)
    logs, sums = [], []
    for run in range(2):
        path = tmp_path / f"run{run}.csv"
        state = distill(cfg, teacher, train, log_path=path, steps=100)
        logs.append(path.read_bytes())
        sums.append((checksum(state.student), checksum(state.disc)))
    rows = logs[0].count(b"\n") - 1
    ok = logs[0] == logs[1] and sums[0] == sums[1] and rows >= 100
    report(6, ok, f"{rows} logged steps, CSVs identical={logs[0] == logs[1]}, checksums identical={sums[0] == sums[1]}")
