"""Acceptance criteria for the distance-monitoring toolchain.

Each test enforces one criterion at its stated tolerance and prints a
single PASS line (visible with ``pytest -s`` or in the captured output).
Tolerances are pinned here and nowhere else:

 1. affine-recovery oracle: 1e-6 m on every pair, 100 seeded scenes,
    under 30 s total
 2. scale-fit fidelity vs brute-force normal equations: 1e-9 relative
 3. planar PnP: 1e-6 m / 1e-6 rad noise-free over 1000 trials; with
    0.5 px noise refinement never increases the reprojection RMS
 4. risk-class boundaries: exhaustive suite around 1 m and 2 m
 5. evaluation metrics: exact match with counting oracles; perfect
    self-evaluation
 6. per-frame runtime at 826x618: 50 ms median target with 2x hardware
    slack (hard bound 100 ms)
 7. format bijections: 1000 round trips per format, 10000 malformed
    inputs raise typed errors only
 8. baseline parity on ground scenes at 1e-6 m; inapplicable without a
    visible ground plane
"""

import io
import json
import math
import statistics
import time

import numpy as np
import pytest

from conftest import brute_force_scale_fit, rotation_angle

from distmon import io_formats
from distmon.baseline import baseline_pairs, baseline_positions, fit_ground_homography
from distmon.cli import main
from distmon.distancing import (
    PairDistance,
    Risk,
    RiskThresholds,
    classify_risk,
)
from distmon.errors import FormatError
from distmon.evaluation import compute_mae, compute_prf, summarize
from distmon.geometry import (
    CameraIntrinsics,
    Pixel,
    Point3,
    Pose,
    estimate_pose_homography,
    estimate_pose_pnp,
    project_points,
    refine_pose,
    reprojection_rms,
    transform_points,
)
from distmon.people import PersonMeasurement
from distmon.pipeline import process_frame
from distmon.scaling import Correspondence, ScaleParams, fit_scale
from distmon.synth import (
    Rng,
    SceneSpec,
    generate_scene,
    random_rotation,
    write_bundle,
)


def _pass(number: int, detail: str) -> None:
    print(f"ACCEPTANCE {number}: PASS — {detail}")


def _scene_spec(seed: int) -> SceneSpec:
    return SceneSpec(
        seed=seed,
        n_people=2 + seed % 3,
        ground_visible=(seed % 3 == 0),
    )


def _run_scene(bundle):
    return process_frame(
        "acc",
        bundle.relative.astype(np.float64),
        bundle.mask,
        bundle.control_points,
        bundle.spec.intrinsics,
        thresholds=bundle.spec.thresholds,
    )


class TestCriterion1AffineRecoveryOracle:
    def test_hundred_seeded_scenes(self):
        started = time.perf_counter()
        worst = 0.0
        for seed in range(100):
            bundle = generate_scene(_scene_spec(seed))
            report = _run_scene(bundle)
            truth = {(p.id_a, p.id_b): p for p in bundle.pairs}
            assert len(report.pairs) == len(truth), f"seed {seed}: pair count"
            for pair in report.pairs:
                expected = truth[(pair.id_a, pair.id_b)]
                err = abs(pair.distance - expected.distance)
                worst = max(worst, err)
                assert err < 1e-6, f"seed {seed}: pair error {err}"
                # Risk labels must agree whenever the true distance is not
                # within 1 mm of a class boundary.
                t = bundle.spec.thresholds
                clear_of_boundaries = (
                    abs(expected.distance - t.dangerous_below) > 1e-3
                    and abs(expected.distance - t.safe_above) > 1e-3
                )
                if clear_of_boundaries:
                    assert pair.risk is expected.risk, f"seed {seed}: risk label"
        elapsed = time.perf_counter() - started
        assert elapsed < 30.0, f"oracle took {elapsed:.1f} s (budget 30 s)"
        _pass(1, f"100 scenes, worst pair error {worst:.2e} m in {elapsed:.1f} s")


class TestCriterion2ScaleFitFidelity:
    def test_thousand_random_sets_match_oracle(self):
        rng = Rng(2024)
        for trial in range(1000):
            n = rng.randint(2, 120)
            xs = [rng.uniform(0.02, 4.0) for _ in range(n)]
            if max(xs) - min(xs) < 1e-9:
                xs[-1] += 1.0
            ys = [rng.uniform(0.02, 2.0) for _ in range(n)]
            params = fit_scale(
                [Correspondence(x, y) for x, y in zip(xs, ys)]
            )
            alpha_ref, beta_ref = brute_force_scale_fit(xs, ys)
            assert abs(params.alpha - alpha_ref) <= 1e-9 * max(1.0, abs(alpha_ref)), trial
            assert abs(params.beta - beta_ref) <= 1e-9 * max(1.0, abs(beta_ref)), trial
            residuals = [y - (params.alpha + params.beta * x) for x, y in zip(xs, ys)]
            scale_r = max(1.0, sum(abs(y) for y in ys))
            scale_xr = max(1.0, sum(abs(x * y) for x, y in zip(xs, ys)))
            assert abs(sum(residuals)) <= 1e-9 * scale_r, trial
            assert (
                abs(sum(x * r for x, r in zip(xs, residuals))) <= 1e-9 * scale_xr
            ), trial
        _pass(2, "1000 correspondence sets match the brute-force normal equations")


class TestCriterion3PlanarPnp:
    @staticmethod
    def _trial(rng: Rng, k: CameraIntrinsics):
        n = rng.randint(4, 20)
        basis = random_rotation(rng, max_angle=1.0)
        e1, e2 = basis[:, 0], basis[:, 1]
        world = np.array(
            [
                rng.uniform(-0.8, 0.8) * e1 + rng.uniform(-0.8, 0.8) * e2
                for _ in range(n)
            ]
        )
        truth = Pose(
            random_rotation(rng, max_angle=0.5),
            np.array(
                [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(2.5, 6.0)]
            ),
        )
        observed = project_points(k, transform_points(truth, world))
        return world, truth, observed

    def test_thousand_noise_free_round_trips(self):
        rng = Rng(333)
        k = CameraIntrinsics(fx=1000, fy=1000, cx=500.0, cy=400.0,
                             width=1000, height=800)
        worst_t = worst_r = 0.0
        for trial in range(1000):
            world, truth, observed = self._trial(rng, k)
            pose = estimate_pose_pnp(world, observed, k)
            t_err = float(np.linalg.norm(pose.translation - truth.translation))
            r_err = rotation_angle(pose.rotation, truth.rotation)
            worst_t, worst_r = max(worst_t, t_err), max(worst_r, r_err)
            assert t_err < 1e-6, f"trial {trial}: translation {t_err}"
            assert r_err < 1e-6, f"trial {trial}: rotation {r_err}"
        _pass(3, f"1000 noise-free trials: worst {worst_t:.2e} m / {worst_r:.2e} rad")

    def test_thousand_noisy_trials_never_degrade(self):
        rng = Rng(334)
        k = CameraIntrinsics(fx=1000, fy=1000, cx=500.0, cy=400.0,
                             width=1000, height=800)
        ratios = []
        for trial in range(1000):
            world, truth, observed = self._trial(rng, k)
            noisy = observed + np.array(
                [[rng.normal(0.0, 0.5), rng.normal(0.0, 0.5)]
                 for _ in range(len(world))]
            )
            initial = estimate_pose_homography(world, noisy, k)
            refined = refine_pose(initial, world, noisy, k)
            rms_before = reprojection_rms(initial, world, noisy, k)
            rms_after = reprojection_rms(refined, world, noisy, k)
            assert rms_after <= rms_before + 1e-12, f"trial {trial}"
            ratios.append(rms_after / rms_before if rms_before > 0 else 1.0)
        _pass(
            3,
            "1000 noisy trials: refinement RMS never above the initial "
            f"(median ratio {statistics.median(ratios):.3f})",
        )


class TestCriterion4RiskBoundaries:
    def test_exhaustive_boundary_suite(self):
        expected = {
            0.0: Risk.DANGEROUS,
            0.999: Risk.DANGEROUS,
            1.0: Risk.RISKY,
            1.001: Risk.RISKY,
            1.999: Risk.RISKY,
            2.0: Risk.RISKY,
            2.001: Risk.SAFE,
            10.0: Risk.SAFE,
        }
        for distance, risk in expected.items():
            assert classify_risk(distance) is risk, distance
        _pass(4, "boundary suite {0, 0.999, 1, 1.001, 1.999, 2, 2.001, 10} classified")


def _random_pair_sets(rng: Rng, n_pairs: int):
    pred, ref = [], []
    t = RiskThresholds()
    for i in range(n_pairs):
        d_pred = rng.uniform(0.05, 4.5)
        d_ref = rng.uniform(0.05, 4.5)
        pred.append(PairDistance(id_a=1, id_b=i + 2, distance=d_pred,
                                 risk=classify_risk(d_pred, t)))
        ref.append(PairDistance(id_a=1, id_b=i + 2, distance=d_ref,
                                risk=classify_risk(d_ref, t)))
    return pred, ref


def _counting_oracle(pred, ref, t: RiskThresholds):
    """Independent confusion-matrix and MAE computation via plain dicts."""
    by_key = {(p.id_a, p.id_b): p.distance for p in ref}
    matched = [
        (p.distance, by_key[(p.id_a, p.id_b)])
        for p in pred
        if (p.id_a, p.id_b) in by_key
    ]
    # fsum gives the correctly rounded sum, so "exact" is well defined
    # independently of summation order.
    mae = math.fsum(abs(a - b) for a, b in matched) / len(matched)

    def tier(d):
        if d < t.dangerous_below:
            return "dangerous"
        if d <= t.safe_above:
            return "risky"
        return "safe"

    table = {}
    for name in ("safe", "risky", "dangerous"):
        tp = sum(1 for a, b in matched if tier(a) == name and tier(b) == name)
        fp = sum(1 for a, b in matched if tier(a) == name and tier(b) != name)
        fn = sum(1 for a, b in matched if tier(a) != name and tier(b) == name)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        table[name] = (precision, recall, f1)
    return mae, table


class TestCriterion5EvaluationMetrics:
    def test_fifty_seeded_label_sets_match_oracle_exactly(self):
        rng = Rng(555)
        t = RiskThresholds()
        for trial in range(50):
            pred, ref = _random_pair_sets(rng, rng.randint(3, 40))
            mae_oracle, table_oracle = _counting_oracle(pred, ref, t)
            assert compute_mae(pred, ref) == mae_oracle, trial
            prf = compute_prf(pred, ref, t)
            for risk in Risk:
                expected = table_oracle[risk.value]
                got = prf[risk]
                assert (got.precision, got.recall, got.f1) == expected, trial
        _pass(5, "50 label sets match the counting oracle exactly")

    def test_self_evaluation_is_perfect_on_synthetic_scenes(self):
        for seed in range(30):
            bundle = generate_scene(_scene_spec(seed))
            report = _run_scene(bundle)
            if not report.pairs:
                continue
            pairs = list(report.pairs)
            assert compute_mae(pairs, pairs) == 0.0, seed
            summary = summarize(pairs, pairs, t=bundle.spec.thresholds)
            assert summary.mae_any == 0.0
            for risk in Risk:
                cell = summary.per_class[risk]
                if cell.undefined == ():
                    assert cell.precision == cell.recall == cell.f1 == 1.0, seed
        _pass(5, "self-evaluation gives MAE 0 and P=R=F=1 on 30 scenes")


class TestCriterion6Runtime:
    def test_per_frame_path_within_runtime_budget(self):
        k = CameraIntrinsics(
            fx=723.0, fy=723.0, cx=413.0, cy=309.0, width=826, height=618
        )
        spec = SceneSpec(seed=4242, intrinsics=k, n_people=4, control_count=800)
        bundle = generate_scene(spec)
        rel = bundle.relative.astype(np.float64)

        def once():
            return process_frame(
                "timing", rel, bundle.mask, bundle.control_points, k,
                thresholds=spec.thresholds,
            )

        once()  # warm up caches and allocators
        samples = []
        for _ in range(21):
            begin = time.perf_counter()
            report = once()
            samples.append(time.perf_counter() - begin)
            assert report.pairs  # keep the work observable
        median = statistics.median(samples)
        # 50 ms target on a desktop CPU core, doubled for hardware
        # variation across machines.
        assert median <= 0.100, f"median frame time {median * 1e3:.1f} ms"
        _pass(6, f"826x618 frame path median {median * 1e3:.1f} ms (budget 100 ms)")


def _random_report(rng: Rng) -> "io_formats.FrameReport":
    from distmon.distancing import FrameReport

    n = rng.randint(0, 4)
    persons = tuple(
        PersonMeasurement(
            instance_id=i + 1,
            centroid_pixel=Pixel(float(rng.randint(0, 600)), float(rng.randint(0, 400))),
            position=Point3(rng.uniform(-4, 4), rng.uniform(-2, 2), rng.uniform(1, 9)),
        )
        for i in range(n)
    )
    t = RiskThresholds()
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            d = math.dist(persons[i].position, persons[j].position)
            pairs.append(
                PairDistance(id_a=i + 1, id_b=j + 1, distance=d,
                             risk=classify_risk(d, t))
            )
    return FrameReport(
        frame_id=f"f{rng.randint(0, 999)}",
        persons=persons,
        pairs=tuple(pairs),
        scale=ScaleParams(alpha=rng.uniform(-1, 1), beta=rng.uniform(0.1, 3.0)),
        control_points_used=rng.randint(2, 900),
    )


class TestCriterion7FormatBijection:
    def test_thousand_round_trips_per_format(self):
        rng = Rng(777)

        for _ in range(1000):  # PFM: bitwise
            h, w = rng.randint(1, 12), rng.randint(1, 12)
            arr = np.array(
                [[rng.uniform(-1e5, 1e5) for _ in range(w)] for _ in range(h)],
                dtype=np.float32,
            )
            buf = io.BytesIO()
            io_formats.write_pfm(arr, buf)
            buf.seek(0)
            out = io_formats.read_pfm(buf)
            assert np.array_equal(out.view(np.uint32), arr.view(np.uint32))

        for _ in range(1000):  # PGM: bitwise
            h, w = rng.randint(1, 16), rng.randint(1, 16)
            mask = np.array(
                [[rng.randint(0, 255) for _ in range(w)] for _ in range(h)],
                dtype=np.uint8,
            )
            buf = io.BytesIO()
            io_formats.write_label_mask(mask, buf)
            buf.seek(0)
            assert np.array_equal(io_formats.read_label_mask(buf), mask)

        schemas = (
            io_formats.RAW_SLAM_SCHEMA,
            io_formats.CONTROL_POINT_SCHEMA,
            io_formats.BOARD_SCHEMA,
            io_formats.GROUND_SCHEMA,
        )
        for trial in range(1000):  # CSV: 9 significant digits, all schemas
            schema = schemas[trial % len(schemas)]
            n = rng.randint(0, 12)
            rows = [
                tuple(rng.uniform(-100.0, 2000.0) for _ in schema.columns)
                for _ in range(n)
            ]
            buf = io.BytesIO()
            io_formats.write_points_csv(rows, buf, schema)
            buf.seek(0)
            out = io_formats.read_points_csv(buf, schema)
            assert len(out) == n
            for row_in, row_out in zip(rows, out):
                for a, b in zip(row_in, row_out):
                    assert abs(a - b) <= 1e-8 * max(1.0, abs(a))

        for _ in range(1000):  # report JSON: exact
            report = _random_report(rng)
            buf = io.BytesIO()
            io_formats.write_report(report, buf)
            buf.seek(0)
            assert io_formats.read_report(buf) == report

        _pass(7, "4 x 1000 round trips lossless per the format contracts")

    def test_ten_thousand_malformed_inputs_raise_typed_errors(self):
        rng = Rng(778)
        valid_pfm = io.BytesIO()
        io_formats.write_pfm(np.ones((3, 4), dtype=np.float32), valid_pfm)
        valid_pgm = io.BytesIO()
        io_formats.write_label_mask(np.ones((3, 4), dtype=np.uint8), valid_pgm)
        valid_csv = io.BytesIO()
        io_formats.write_points_csv(
            [(1.0, 2.0, 3.0)], valid_csv, io_formats.CONTROL_POINT_SCHEMA
        )
        valid_json = io.BytesIO()
        io_formats.write_report(_random_report(rng), valid_json)
        seeds = {
            "pfm": valid_pfm.getvalue(),
            "pgm": valid_pgm.getvalue(),
            "csv": valid_csv.getvalue(),
            "json": valid_json.getvalue(),
        }
        readers = {
            "pfm": io_formats.read_pfm,
            "pgm": io_formats.read_label_mask,
            "csv": lambda f: io_formats.read_points_csv(
                f, io_formats.CONTROL_POINT_SCHEMA
            ),
            "json": io_formats.read_report,
        }

        def mutate(blob: bytes) -> bytes:
            kind = rng.randint(0, 3)
            if kind == 0 or not blob:  # random garbage
                return bytes(rng.randint(0, 255) for _ in range(rng.randint(0, 40)))
            if kind == 1:  # truncate
                return blob[: rng.randint(0, len(blob) - 1)]
            data = bytearray(blob)
            for _ in range(rng.randint(1, 6)):  # flip bytes
                data[rng.randint(0, len(data) - 1)] = rng.randint(0, 255)
            return bytes(data)

        survived = 0
        for trial in range(10000):
            name = ("pfm", "pgm", "csv", "json")[trial % 4]
            blob = mutate(seeds[name])
            try:
                readers[name](io.BytesIO(blob))
                survived += 1  # still-valid mutants are acceptable
            except FormatError:
                pass
        _pass(7, f"10000 malformed inputs: typed errors only ({survived} benign)")


class TestCriterion8BaselineParity:
    def test_visible_ground_parity(self):
        worst_base = worst_pipe = 0.0
        for seed in range(30):
            spec = SceneSpec(seed=seed, ground_visible=True, n_people=2 + seed % 3)
            bundle = generate_scene(spec)
            corr = np.array(bundle.ground.correspondences)
            h = fit_ground_homography(corr[:, :2], corr[:, 2:])
            positions = baseline_positions(bundle.mask, h, min_pixels=40)
            pairs = baseline_pairs(positions, spec.thresholds)
            truth = {(p.id_a, p.id_b): p.distance for p in bundle.ground.pairs}
            assert len(pairs) == len(truth), seed
            for p in pairs:
                err = abs(p.distance - truth[(p.id_a, p.id_b)])
                worst_base = max(worst_base, err)
                assert err < 1e-6, f"seed {seed}: baseline error {err}"

            report = _run_scene(bundle)
            pipe_truth = {(p.id_a, p.id_b): p.distance for p in bundle.pairs}
            for pair in report.pairs:
                err = abs(pair.distance - pipe_truth[(pair.id_a, pair.id_b)])
                worst_pipe = max(worst_pipe, err)
                assert err < 1e-6, f"seed {seed}: pipeline error {err}"
        _pass(
            8,
            f"30 ground scenes: baseline worst {worst_base:.2e} m, "
            f"pipeline worst {worst_pipe:.2e} m",
        )

    def test_hidden_ground_is_inapplicable_but_pipeline_works(self, tmp_path):
        for seed in (40, 41, 42):
            spec = SceneSpec(seed=seed, ground_visible=False)
            bundle = generate_scene(spec)
            assert bundle.ground is None
            paths = write_bundle(bundle, tmp_path / f"s{seed}")
            assert "ground" not in paths

            report = _run_scene(bundle)
            truth = {(p.id_a, p.id_b): p.distance for p in bundle.pairs}
            for pair in report.pairs:
                assert abs(pair.distance - truth[(pair.id_a, pair.id_b)]) < 1e-6

        # The CLI reports the missing ground plane as a hard failure.
        code = main([
            "baseline",
            "--ground", str(tmp_path / "s40" / "ground.csv"),
            "--masks", str(tmp_path / "s40" / "mask.pgm"),
            "--out", str(tmp_path / "base.json"),
        ])
        assert code == 1
        _pass(8, "hidden ground plane: baseline inapplicable, pipeline unaffected")
