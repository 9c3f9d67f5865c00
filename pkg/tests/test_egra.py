import pytest

from alrkit.egra import (EgraConfig, ResolutionPlan, allocate, config_from_overrides,
                         inference_budget, sequence_length)


def test_seventy_percent_split():
    plan = allocate(11, {1}, EgraConfig(), seed=5)
    assert plan.budgets[0] == 1024
    rest = plan.budgets[1:]
    assert rest.count(256) == round(0.7 * 10) == 7
    assert rest.count(1024) == 3


def test_all_evidence():
    plan = allocate(3, {1, 2, 3}, EgraConfig(downsample_fraction=1.0), seed=0)
    assert plan.budgets == (1024, 1024, 1024)


def test_deterministic_and_seed_sensitive():
    assert allocate(30, {4}, seed=9) == allocate(30, {4}, seed=9)
    subsets = {tuple(i for i, b in enumerate(allocate(40, {3, 17}, seed=s).budgets) if b == 256)
               for s in range(100)}
    assert len(subsets) >= 2


def test_rounding_half_to_even():
    # 0.5 * 5 = 2.5 -> 2 ; 0.5 * 3 = 1.5 -> 2
    assert allocate(6, {1}, EgraConfig(downsample_fraction=0.5)).budgets.count(256) == 2
    assert allocate(4, {1}, EgraConfig(downsample_fraction=0.5)).budgets.count(256) == 2


def test_sequence_length_examples():
    one = ResolutionPlan((1024,), frozenset(), 0, 1024, 0)
    assert sequence_length(one, EgraConfig(page_id_overhead=3, question_tokens=20)) == 1047
    plan = allocate(11, {1}, EgraConfig(), seed=2)
    assert sequence_length(plan, EgraConfig(page_id_overhead=3, question_tokens=0)) == \
        3 * 11 + 7 * 256 + 4 * 1024 == 5921
    assert plan.total_sequence_tokens == 5921 and plan.total_visual_tokens == 5888
    lo = ResolutionPlan((256,), frozenset(), 0, 256, 0)
    assert sequence_length(lo, EgraConfig(page_id_overhead=0, question_tokens=0)) == 256


def test_sequence_length_strictly_monotone():
    cfg = EgraConfig(question_tokens=5)
    base = ResolutionPlan((256, 1024), frozenset(), 0, 0, 0)
    assert sequence_length(ResolutionPlan((257, 1024), frozenset(), 0, 0, 0), cfg) > sequence_length(base, cfg)
    assert sequence_length(base, EgraConfig(question_tokens=6)) > sequence_length(base, cfg)


def test_compression_bound():
    for n in range(1, 30):
        plan = allocate(n, {1}, seed=n)
        k = plan.budgets.count(256)
        assert plan.total_visual_tokens <= n * 1024
        assert (plan.total_visual_tokens == n * 1024) == (k == 0)


@pytest.mark.parametrize("w,h,want", [(1024, 784, 266), (56, 56, 1), (57, 56, 2)])
def test_inference_budget(w, h, want):
    assert inference_budget(w, h, 56) == want


def test_validation():
    with pytest.raises(ValueError):
        allocate(3, {4})
    with pytest.raises(ValueError):
        allocate(0, set())
    with pytest.raises(ValueError):
        EgraConfig(hi_budget=256, lo_budget=256)
    with pytest.raises(ValueError):
        EgraConfig(downsample_fraction=1.5)
    with pytest.raises(ValueError):
        config_from_overrides({"bogus": 1})
    assert config_from_overrides({"hi_budget": 2048}).hi_budget == 2048
