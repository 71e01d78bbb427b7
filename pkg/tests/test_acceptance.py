"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  The seeded 200-episode corpora come from session fixtures shared
with the rest of the suite (fixed seed 7, m in {1,2}, k in {10,30}).
"""

import dataclasses
import json
import math
import threading
import time
from contextlib import contextmanager
from http.server import ThreadingHTTPServer
from pathlib import Path

import numpy as np
import pytest

from fwm.cli import evaluate_corpus
from fwm.envsim import CartPoleState, LanderState, default_params
from fwm.errors import (
    LlmHttpError,
    LlmRetriesExhaustedError,
    LlmTransportError,
)
from fwm.metrics import angle_from_centroids, centroid_distance, image_mse, ssim_global
from fwm.predictor import (
    LlmEndpointConfig,
    PredictionRequest,
    assemble_prompt,
    parse_prediction,
    predict_llm,
)
from fwm.reconstruct import disassemble
from fwm.render import Observation, Palette, render
from fwm.safety import CartPoleSafety, LanderSafety, confusion_stats, phi
from fwm.segment import Centroid, LatentState, SegmentMask, centroid, extract_latent, segment

from test_llm_client import StubHandler, make_request
from test_reconstruct import TWO_COLOR, color_counts, shifted_latent, two_color_frame
from test_safety import verdict as mk_verdict


@contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {number:02d} FAIL: {description}")
        raise
    print(f"\nACCEPTANCE {number:02d} PASS: {description}")


def _verdicts(records):
    return [mk_verdict(r["predicted_safe"], r["actual_safe"]) for r in records]


def test_criterion_01_oracle_end_to_end(cartpole_corpus, lander_corpus):
    with criterion(1, "oracle predictor is exact end-to-end on 200 episodes per env"):
        elapsed = 0.0
        for cfg, _, episodes in (cartpole_corpus, lander_corpus):
            assert len(episodes) >= 200
            t0 = time.time()
            records, errors = evaluate_corpus(cfg, episodes)
            elapsed += time.time() - t0
            assert not errors
            assert len(records) == len(episodes) * 4  # m in {1,2} x k in {10,30}
            for rec in records:
                assert all(v == 0.0 for v in rec["cd"].values())
                assert rec["mse"] == 0.0
                assert abs(rec["ssim"] - 1.0) <= 1e-9
            classes = {r["actual_safe"] for r in records}
            assert classes == {True, False}
            stats = confusion_stats(_verdicts(records))
            assert stats.f1 == 1.0
            assert stats.fpr == 0.0
        assert elapsed < 120.0, f"oracle evaluation took {elapsed:.1f}s"


def test_criterion_02_always_safe_unit_fpr(cartpole_corpus):
    with criterion(2, "degenerate always-safe predictor scores FPR = 1.0 exactly"):
        cfg, _, episodes = cartpole_corpus
        cfg = dataclasses.replace(cfg, predictor="alwayssafe", m=(1,), k=(10,)).resolved()
        records, errors = evaluate_corpus(cfg, episodes)
        assert not errors
        assert any(not r["actual_safe"] for r in records)  # unsafe episodes present
        stats = confusion_stats(_verdicts(records))
        assert stats.fpr == 1.0


def test_criterion_03_centroid_brute_force_equivalence():
    with criterion(3, "centroid matches brute-force index mean on 1000 random masks"):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            h, w = int(rng.integers(4, 64)), int(rng.integers(4, 64))
            n = int(rng.integers(1, min(500, h * w) + 1))
            mask = np.zeros((h, w), dtype=bool)
            mask.flat[rng.choice(h * w, size=n, replace=False)] = True
            c = centroid(SegmentMask("m", mask))
            sx = sy = cnt = 0
            for i in range(h):
                for j in range(w):
                    if mask[i, j]:
                        sx += j
                        sy += i
                        cnt += 1
            assert abs(c.cx - sx / cnt) <= 1e-9
            assert abs(c.cy - sy / cnt) <= 1e-9


def test_criterion_04_metric_properties():
    with criterion(4, "CD axioms (10k triples), SSIM identity/bounds (1k pairs), MSE anchors"):
        rng = np.random.default_rng(7)
        pts = rng.uniform(-500, 500, size=(10000, 3, 2))
        for a_, b_, c_ in pts:
            a, b, c = Centroid(*a_), Centroid(*b_), Centroid(*c_)
            for norm in ("l1", "l2"):
                dab = centroid_distance(a, b, norm)
                assert dab >= 0.0
                assert centroid_distance(a, a, norm) == 0.0
                assert dab == centroid_distance(b, a, norm)
                assert centroid_distance(a, c, norm) <= (
                    dab + centroid_distance(b, c, norm) + 1e-9)

        for _ in range(1000):
            y = Observation(rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8))
            y_hat = Observation(rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8))
            assert abs(ssim_global(y, y) - 1.0) <= 1e-9
            s = ssim_global(y, y_hat)
            assert -1.0 <= s <= 1.0
            assert image_mse(y, y) == 0.0

        black = Observation(np.zeros((16, 16, 3), dtype=np.uint8))
        white = Observation(np.full((16, 16, 3), 255, dtype=np.uint8))
        assert image_mse(black, white) == 1.0


def test_criterion_05_disassembly_invariants(cp_params, ld_params, cp_palette, ld_palette):
    with criterion(5, "zero-delta identity (100 frames), conservation and no ghosts (1k moves)"):
        rng = np.random.default_rng(7)
        for i in range(100):
            if i % 2 == 0:
                obs = render(CartPoleState(rng.uniform(-1.5, 1.5), 0,
                                           rng.uniform(-0.9, 0.9), 0),
                             cp_params, cp_palette)
                palette = cp_palette
            else:
                obs = render(LanderState(rng.uniform(2, 18), rng.uniform(3, 18),
                                         0, 0, 0, 0), ld_params, ld_palette)
                palette = ld_palette
            lat = extract_latent(obs, palette, 0)
            rebuilt, _ = disassemble(LatentState(1, lat.entries), lat, obs, palette)
            assert np.array_equal(rebuilt.pixels, obs.pixels)

        for _ in range(1000):
            rh, rw = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            r, c = int(rng.integers(0, 16 - rh)), int(rng.integers(0, 16 - rw))
            obs, lat = two_color_frame(h=16, w=16, rect=(r, c, rh, rw))
            dx = int(rng.integers(-c, 16 - (c + rw) + 1))
            dy = int(rng.integers(-r, 16 - (r + rh) + 1))
            rebuilt, disps = disassemble(shifted_latent(lat, "obj", dx, dy),
                                         lat, obs, TWO_COLOR)
            assert not any(d.clipped for d in disps)
            assert color_counts(rebuilt) == color_counts(obs)
            before = sorted(m.label for m in segment(obs, TWO_COLOR))
            after = sorted(m.label for m in segment(rebuilt, TWO_COLOR))
            assert before == after


def test_criterion_06_prompt_golden_and_parse_round_trip():
    with criterion(6, "prompt golden fixture byte-exact; parse inverts 1000 random latents"):
        from fwm.envsim import CartPoleAction

        req = PredictionRequest(
            (LatentState(0, (("cart", Centroid(48.0, 71.25)),)),),
            (CartPoleAction.PUSH_LEFT,),
        )
        prompt, flat = assemble_prompt(req)
        golden = (Path(__file__).parent / "fixtures" / "prompt_golden.txt").read_text()
        assert golden == prompt + "\n"
        assert flat == [48.0, 71.25]

        rng = np.random.default_rng(7)
        for _ in range(1000):
            n_obj = int(rng.integers(1, 5))
            labels = [f"obj{i}" for i in range(n_obj)]
            values = [float(f"{rng.uniform(0, 96):.2f}") for _ in range(2 * n_obj)]
            text = "[" + ", ".join(f"{v:.2f}" for v in values) + "]"
            lat = parse_prediction(text, 2 * n_obj, labels)
            flat_back = [x for _, cen in lat.entries for x in (cen.cx, cen.cy)]
            assert flat_back == values


def test_criterion_07_baseline_ordering(cartpole_corpus):
    with criterion(7, "const-velocity angle MAE <= persistence angle MAE (m=2, k=10, 200 eps)"):
        cfg, _, episodes = cartpole_corpus
        cfg = dataclasses.replace(cfg, m=(2,), k=(10,))
        maes = {}
        for pid in ("persistence", "constvel"):
            records, errors = evaluate_corpus(dataclasses.replace(cfg, predictor=pid),
                                              episodes)
            assert not errors
            angle_errors = [r["angle_error_deg"] for r in records
                            if r["angle_error_deg"] is not None]
            assert len(angle_errors) == len(episodes)
            mae = sum(angle_errors) / len(angle_errors)
            assert math.isfinite(mae)
            maes[pid] = mae
        assert maes["constvel"] <= maes["persistence"], maes


def test_criterion_08_angle_recovery(cp_params, cp_palette):
    with criterion(8, "angle from centroids within 3 degrees for |theta| <= 60 deg"):
        rng = np.random.default_rng(7)
        for _ in range(100):
            theta = rng.uniform(-math.pi / 3, math.pi / 3)
            obs = render(CartPoleState(rng.uniform(-1.5, 1.5), 0, theta, 0),
                         cp_params, cp_palette)
            lat = extract_latent(obs, cp_palette, 0)
            estimate = angle_from_centroids(lat.get("cart"), lat.get("pole"))
            assert abs(estimate - math.degrees(theta)) <= 3.0


def test_criterion_09_safety_boundary_exactness():
    with criterion(9, "phi flips exactly at theta = pi/4 and d_x in {8, 12}"):
        limit = math.pi / 4
        cp = CartPoleSafety()
        assert not phi(CartPoleState(0, 0, limit, 0), cp)
        assert not phi(CartPoleState(0, 0, -limit, 0), cp)
        assert phi(CartPoleState(0, 0, math.nextafter(limit, 0.0), 0), cp)
        assert phi(CartPoleState(0, 0, -math.nextafter(limit, 0.0), 0), cp)

        ld = LanderSafety()
        for bound, inward in ((8.0, 9.0), (12.0, 11.0)):
            assert not phi(LanderState(bound, 10, 0, 0, 0, 0), ld)
            assert phi(LanderState(math.nextafter(bound, inward), 10, 0, 0, 0, 0), ld)


def test_criterion_10_llm_client_contract():
    with criterion(10, "LLM client happy path, retry, exhaustion, transport mapping (local stub)"):
        server = ThreadingHTTPServer(("127.0.0.1", 0), StubHandler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        url = f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"
        try:
            StubHandler.script = [(200, "[48.00, 71.25]")]
            StubHandler.seen = []
            pred = predict_llm(make_request(), LlmEndpointConfig(url=url))
            assert pred.attempts == 1
            assert pred.latent.get("cart") == Centroid(48.0, 71.25)

            StubHandler.script = [(200, "??"), (200, "nope"), (200, "[1.5, 2.5]")]
            pred = predict_llm(make_request(), LlmEndpointConfig(url=url))
            assert pred.attempts == 3

            StubHandler.script = [(200, "still nothing")] * 3
            with pytest.raises(LlmRetriesExhaustedError):
                predict_llm(make_request(), LlmEndpointConfig(url=url))

            StubHandler.script = [(503, "overloaded")]
            with pytest.raises(LlmHttpError):
                predict_llm(make_request(), LlmEndpointConfig(url=url))
        finally:
            server.shutdown()
            thread.join(timeout=5)

        with pytest.raises(LlmTransportError):
            predict_llm(make_request(),
                        LlmEndpointConfig(url="http://127.0.0.1:9/v1", timeout=1.0))
