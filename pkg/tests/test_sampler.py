from types import SimpleNamespace

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from addsr.networks import Denoiser, DenoiserArch
from addsr.sampler import ancestral_timesteps, baseline_sample, blend_condition, psr_sample
from addsr.schedule import StudentTimestepSet, build_schedule, predict_x0

SCHED = build_schedule()
STS = StudentTimestepSet()
ARCH = DenoiserArch(channels=(8, 8, 8), cond_channels=(4, 4, 4), temb_dim=8, groups=4)


class OracleDenoiser(torch.nn.Module):
    """Exact noise predictor for a delta distribution concentrated on ``target``."""

    def __init__(self, target):
        super().__init__()
        self.arch = SimpleNamespace(num_timesteps=SCHED.T)
        self.target = target
        self.a = torch.tensor(SCHED.alpha_bars, dtype=torch.float64)

    def forward(self, x, t, cond, label=None):
        a = self.a[t - 1].float()[:, None, None, None]
        return (x - a.sqrt() * self.target) / (1 - a).sqrt()


def _counting_net(seed=0):
    torch.manual_seed(seed)
    net = Denoiser(ARCH)
    calls = []
    net.register_forward_hook(lambda m, inp, out: calls.append((int(inp[1][0]), inp[2])))
    return net, calls


@pytest.mark.parametrize("steps", [1, 2, 3, 4])
def test_psr_evaluation_count_and_anchors(steps):
    net, calls = _counting_net()
    x_lr = torch.rand(2, 3, 4, 4) * 2 - 1
    out, chain = psr_sample(net, x_lr, steps, 1.0, STS, SCHED, torch.Generator().manual_seed(0))
    assert out.shape == (2, 3, 16, 16)
    assert len(calls) == steps
    assert [s for s, _ in calls] == list(STS.anchors[:steps])
    # chain elements are exactly the conditions consumed
    assert len(chain) == steps
    assert chain[0] is x_lr
    for (_, cond), elem in zip(calls[1:], chain.elements[1:]):
        assert torch.equal(cond, elem)


def test_twelve_and_a_half_fold_fewer_evaluations():
    net, calls = _counting_net()
    x_lr = torch.zeros(1, 3, 4, 4)
    psr_sample(net, x_lr, 4, 1.0, STS, SCHED, torch.Generator().manual_seed(0))
    student = len(calls)
    calls.clear()
    baseline_sample(net, x_lr, 50, SCHED, torch.Generator().manual_seed(0))
    assert len(calls) / student == 12.5


def test_psr_step_one_uses_lr_condition():
    net, calls = _counting_net()
    x_lr = torch.rand(1, 3, 4, 4)
    psr_sample(net, x_lr, 1, 0.3, STS, SCHED, torch.Generator().manual_seed(0))
    torch.testing.assert_close(calls[0][1], torch.nn.functional.interpolate(x_lr, size=(16, 16), mode="bicubic"))


def test_psr_determinism():
    net, _ = _counting_net()
    x_lr = torch.rand(2, 3, 4, 4)
    a, _ = psr_sample(net, x_lr, 4, 0.5, STS, SCHED, torch.Generator().manual_seed(3))
    b, _ = psr_sample(net, x_lr, 4, 0.5, STS, SCHED, torch.Generator().manual_seed(3))
    assert torch.equal(a, b)


@pytest.mark.parametrize("kw", [{"steps": 0}, {"steps": 5}, {"blend_r": -0.1}, {"blend_r": 1.5}])
def test_psr_argument_errors(kw):
    net, _ = _counting_net()
    args = {"steps": 2, "blend_r": 1.0, **kw}
    with pytest.raises(ValueError):
        psr_sample(net, torch.zeros(1, 3, 4, 4), args["steps"], args["blend_r"], STS, SCHED)


def test_blend_endpoints_bit_exact():
    x0 = torch.randn(2, 3, 8, 8)
    lr = torch.randn(2, 3, 8, 8)
    assert torch.equal(blend_condition(x0, lr, 1.0), x0)
    assert torch.equal(blend_condition(x0, lr, 0.0), lr)


def test_blend_scalar_example():
    out = blend_condition(torch.tensor(0.8), torch.tensor(0.2), 0.5)
    assert float(out) == pytest.approx(0.5)


@settings(max_examples=50, deadline=None)
@given(r=st.floats(0, 1), a=st.floats(-1, 1), b=st.floats(-1, 1))
def test_blend_is_convex(r, a, b):
    out = float(blend_condition(torch.tensor(a, dtype=torch.float64), torch.tensor(b, dtype=torch.float64), r))
    assert min(a, b) - 1e-12 <= out <= max(a, b) + 1e-12


def test_blend_errors():
    with pytest.raises(ValueError):
        blend_condition(torch.zeros(2), torch.zeros(2), 1.01)
    with pytest.raises(ValueError):
        blend_condition(torch.zeros(2), torch.zeros(3), 0.5)


def test_baseline_single_step_is_one_prediction():
    torch.manual_seed(0)
    net = Denoiser(ARCH)
    x_lr = torch.rand(2, 3, 4, 4)
    out = baseline_sample(net, x_lr, 1, SCHED, torch.Generator().manual_seed(9))
    x = torch.randn((2, 3, 16, 16), generator=torch.Generator().manual_seed(9))
    with torch.no_grad():
        eps = net(x, torch.full((2,), 999), torch.nn.functional.interpolate(x_lr, size=(16, 16), mode="bicubic"))
    torch.testing.assert_close(out, predict_x0(x, 999, eps, SCHED).clamp(-1, 1))


def test_baseline_determinism():
    torch.manual_seed(0)
    net = Denoiser(ARCH)
    x_lr = torch.rand(1, 3, 4, 4)
    a = baseline_sample(net, x_lr, 10, SCHED, torch.Generator().manual_seed(1))
    b = baseline_sample(net, x_lr, 10, SCHED, torch.Generator().manual_seed(1))
    assert torch.equal(a, b)


@pytest.mark.parametrize("steps", [1, 4, 50])
def test_oracle_denoiser_recovers_delta(steps):
    target = torch.rand(1, 3, 16, 16) * 1.6 - 0.8
    net = OracleDenoiser(target)
    x_lr = torch.zeros(1, 3, 4, 4)
    out = baseline_sample(net, x_lr, steps, SCHED, torch.Generator().manual_seed(0))
    assert (out - target).abs().max() <= 1e-2
    if steps <= 4:
        out, _ = psr_sample(net, x_lr, steps, 1.0, STS, SCHED, torch.Generator().manual_seed(0))
        assert (out - target).abs().max() <= 1e-2


def test_ancestral_timesteps():
    assert ancestral_timesteps(1000, 1) == [999]
    ts = ancestral_timesteps(1000, 50)
    assert len(ts) == 50 and ts[0] == 999 and ts[-1] == 19
    assert all(a > b for a, b in zip(ts, ts[1:]))
    with pytest.raises(ValueError):
        ancestral_timesteps(1000, 0)
