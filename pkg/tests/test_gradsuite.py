"""Tests for the bundled gradient-check suite and its reporting."""


from egrnet.gradsuite import block_check, layer_checks, net_check, run_suite
from egrnet.tensornd import GradCheckReport


def test_report_formatting_and_thresholds():
    rep = GradCheckReport(tolerance=1e-4,
                          per_tensor={"good": 1e-7, "bad": 3e-2})
    assert not rep.passed
    assert rep.max_rel_error == 3e-2
    text = str(rep)
    assert "FAIL" in text and "ok " in text
    assert "3.000e-02" in text

    ok = GradCheckReport(tolerance=1e-4, per_tensor={"w": 1e-9})
    assert ok.passed
    assert "PASS" in str(ok)


def test_empty_report_passes():
    assert GradCheckReport(tolerance=1e-4).passed


def test_layer_scope_covers_every_layer_kind():
    names = [name for name, _ in layer_checks()]
    for fragment in ("conv2d", "batchnorm", "layernorm", "relu",
                     "channel_gram", "global_average_pool", "dense",
                     "softmax_cross_entropy"):
        assert any(fragment in n for n in names), fragment


def test_block_scope_includes_bridge():
    reports = block_check()
    assert [name for name, _ in reports] == ["gcb_full"]
    assert all(rep.passed for _, rep in reports)


def test_net_scope_is_cumulative():
    names = [name for name, _ in run_suite("net")]
    assert "toy_net_2block" in names
    assert any("conv2d" in n for n in names)


def test_negative_control_is_rejected():
    (_, rep), = net_check(corrupt=True)
    assert not rep.passed
    assert rep.max_rel_error > 0.1
