from __future__ import annotations

import math

import numpy as np
import pytest

from guire.actions import Action, ActionType, extract_candidate
from guire.geometry import BBox, CropWindow, Point, ScreenDims, make_crop
from guire.policies import (
    FixedOutput,
    GridSoftmax,
    MissingScript,
    NoLocation,
    NoisyGrounder,
    ObsElement,
    Observation,
    ScriptedOracle,
    UniformRandom,
    crop_observation,
    find_target,
    zoom_in_infer,
)


def _obs(w=2000, h=1200, box=BBox(1000, 600, 1040, 624), label="OK"):
    return Observation(ScreenDims(w, h), f"tap the {label} button", elements=(ObsElement("e1", box, label=label),))


def test_find_target_longest_label():
    els = (ObsElement("a", BBox(0, 0, 5, 5), label="Wi"), ObsElement("b", BBox(5, 5, 9, 9), label="Wi-Fi"))
    assert find_target(Observation(ScreenDims(10, 10), "open Wi-Fi", elements=els)).element_id == "b"
    assert find_target(Observation(ScreenDims(10, 10), "nothing", elements=els)) is None


def test_noisy_grounder_zero_noise_is_exact():
    out = NoisyGrounder(k=0.0).generate(_obs(), 3)
    assert {extract_candidate(o).action.params for o in out} == {Point(1020, 612)}


def test_noisy_grounder_sigma_scales_with_image():
    g = NoisyGrounder(k=0.05, seed=1)
    pts = [extract_candidate(o).action.params for o in g.generate(_obs(), 4000)]
    dx = np.array([p.x for p in pts]) - 1020
    # sigma = 0.05 * 2000 = 100; clipping at the screen edge is negligible here
    assert np.std(dx) == pytest.approx(100, rel=0.05)


def test_noisy_grounder_seeded():
    a = NoisyGrounder(seed=7).generate(_obs(), 5)
    g = NoisyGrounder(seed=0)
    g.reset(7)
    assert g.generate(_obs(), 5) == a


def test_crop_observation_translates_elements():
    obs = _obs()
    w = make_crop(Point(1020, 612), obs.dims)
    c = crop_observation(obs, w)
    assert c.dims == ScreenDims(500, 300)
    assert c.elements[0].bbox == BBox(1000 - w.origin.x, 600 - w.origin.y, 1040 - w.origin.x, 624 - w.origin.y)
    assert c.view == w
    nested = crop_observation(c, CropWindow(Point(10, 10), ScreenDims(100, 100), c.dims))
    assert nested.view.origin == Point(w.origin.x + 10, w.origin.y + 10)


def test_zoom_in_oracle_hits_center():
    r = zoom_in_infer(NoisyGrounder(k=0.0), _obs())
    assert r.initial == r.refined == Point(1020, 612)


def test_zoom_in_rejects_non_location():
    with pytest.raises(NoLocation):
        zoom_in_infer(FixedOutput("navigate_home()"), _obs())


def test_uniform_random_respects_platform():
    pol = UniformRandom(seed=0)
    obs = Observation(ScreenDims(100, 100), "x")
    for raw in pol.generate(obs, 300):
        a = extract_candidate(raw).action
        assert a.action_type not in (ActionType.PRESS_HOTKEY, ActionType.RIGHT_CLICK, ActionType.DOUBLE_CLICK)


def test_scripted_oracle_checks_screen_and_ignores_critic_lines():
    tap = Action(ActionType.TAP, Point(1, 1))
    pol = ScriptedOracle({"goal": [("home", tap), ("next", Action(ActionType.NAVIGATE_BACK))]})
    obs = Observation(ScreenDims(10, 10), "goal", history=("Critic: try again",), screen_id="home")
    assert extract_candidate(pol.generate(obs, 1)[0]).action == tap
    with pytest.raises(MissingScript):
        pol.generate(Observation(ScreenDims(10, 10), "goal", screen_id="elsewhere"), 1)
    with pytest.raises(MissingScript):
        pol.generate(Observation(ScreenDims(10, 10), "other"), 1)


def test_grid_cell_centers_and_uniform_start():
    pol = GridSoftmax(ScreenDims(800, 800), grid=8)
    assert pol.cell_center(0) == Point(50, 50) and pol.cell_center(9) == Point(150, 150)
    obs = Observation(ScreenDims(800, 800), "x")
    np.testing.assert_allclose(pol.probs(obs), 1 / 64)
    assert pol.log_prob(obs, "tap(x=50, y=50)") == pytest.approx(-math.log(64))
    assert pol.log_prob(obs, "tap(x=51, y=50)") == -math.inf


def test_grid_masks_to_view():
    screen = ScreenDims(800, 800)
    pol = GridSoftmax(screen, grid=8, seed=2)
    w = make_crop(Point(400, 400), screen)
    cobs = crop_observation(Observation(screen, "x"), w)
    p = pol.probs(cobs)
    assert p.sum() == pytest.approx(1.0) and np.count_nonzero(p) == 4
    for raw in pol.generate(cobs, 20):
        q = extract_candidate(raw).action.params
        assert cobs.dims.contains_point(q)
        assert pol.log_prob(cobs, raw) == pytest.approx(math.log(0.25))


def test_grid_no_visible_center():
    screen = ScreenDims(800, 800)
    pol = GridSoftmax(screen, grid=2)
    cobs = crop_observation(Observation(screen, "x"), CropWindow(Point(0, 0), ScreenDims(100, 100), screen))
    with pytest.raises(NoLocation):
        pol.probs(cobs)


def test_expected_containment():
    pol = GridSoftmax(ScreenDims(800, 800), grid=8)
    assert pol.expected_containment(BBox(0, 0, 799, 799)) == pytest.approx(1.0)
    assert pol.expected_containment(BBox(40, 40, 60, 60)) == pytest.approx(1 / 64)


def test_grid_rejects_bad_args():
    with pytest.raises(ValueError):
        GridSoftmax(ScreenDims(10, 10), grid=1)
    with pytest.raises(ValueError):
        GridSoftmax(ScreenDims(10, 10), grid=2, logits=[0.0, math.nan, 0.0, 0.0])
