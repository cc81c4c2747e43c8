"""Corpus machinery: oracle, inputs, recipes, shape adaptation, driver."""

import json
import pathlib

import numpy as np
import pytest

from helpers import corpus_text

from loopforge.bench import (
    BenchmarkConfig,
    PhysicalConstants,
    bind_state,
    differentiation_matrix,
    level_boundaries,
    make_inputs,
    reference_volume_term,
    transform_recipe,
)
from loopforge.bench.driver import BenchReport, full_check, run_benchmark
from loopforge.bench.inputs import adapt_array
from loopforge.frontend import parse_source

GOLDEN = pathlib.Path(__file__).parent / "golden"


class TestInputs:
    def test_deterministic(self):
        cfg = BenchmarkConfig(nq=3, ne=2, seed=9)
        a, b = make_inputs(cfg), make_inputs(cfg)
        for name in ("q", "rhsq", "D", "g", "Jinv"):
            np.testing.assert_array_equal(a.arrays()[name], b.arrays()[name])

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            BenchmarkConfig(nq=2, ne=0)
        with pytest.raises(ValueError):
            BenchmarkConfig(nq=0, ne=1)
        with pytest.raises(ValueError):
            BenchmarkConfig(nq=2, ne=1, level=9)

    def test_state_invariants(self):
        state = make_inputs(BenchmarkConfig(nq=4, ne=3, seed=2))
        assert (state.q[:, :, :, 0] > 0).all()
        assert (state.Jinv > 0).all()
        assert (state.q[:, :, :, 4] > 0).all()
        p = state.constants.p0 * (
            state.constants.R * state.q[:, :, :, 4].astype(np.float64)
            / state.constants.p0) ** state.constants.gamma
        assert 0.5 * state.constants.p0 < p.min() < p.max() < 2 * state.constants.p0

    def test_constants_relations(self):
        c = PhysicalConstants()
        assert c.R == pytest.approx(c.cp - c.cv)
        assert c.gamma == pytest.approx(c.cp / c.cv)
        with pytest.raises(ValueError):
            PhysicalConstants(gamma=0.9)

    def test_differentiation_matrix_rows_sum_to_zero_exactly(self):
        for nq in (2, 3, 5, 8):
            d = differentiation_matrix(nq)
            for i in range(nq):
                # the diagonal exactly cancels the f32 sum of the
                # off-diagonal entries
                acc = np.float32(0.0)
                for n in range(nq):
                    if n != i:
                        acc = np.float32(acc + d[i, n])
                assert np.float32(acc + d[i, i]) == np.float32(0.0)
            # any other summation order differs only by rounding residue
            assert float(np.abs(d.sum(axis=1)).max()) < 1e-6


class TestOracle:
    def test_golden_values(self):
        doc = json.loads((GOLDEN / "volterm_nq2_ne1_seed42.json").read_text())
        cfg = BenchmarkConfig(**doc["config"])
        got = reference_volume_term(make_inputs(cfg))
        want = np.array(doc["rhsq_increment"], np.float32).reshape(got.shape)
        np.testing.assert_array_equal(got, want)

    def test_zero_differentiation_matrix_gives_zero(self):
        state = make_inputs(BenchmarkConfig(nq=3, ne=2, seed=5))
        state.D[:] = 0.0
        assert np.all(reference_volume_term(state) == 0.0)

    def test_row_sum_zero_telescopes_constant_fields(self):
        # constant g and q along each line makes every derivative sum a
        # row sum of D, which vanishes
        nq, ne = 4, 2
        state = make_inputs(BenchmarkConfig(nq=nq, ne=ne, seed=6))
        state.q[:] = state.q[0, 0, 0, :, 0][None, None, None, :, None]
        state.g[:] = state.g[0, 0, 0, :, :, 0][None, None, None, :, :, None]
        out = reference_volume_term(state)
        scale = np.abs(out).max()
        assert scale <= 1e-2  # f64 sums of f32 inputs: tiny residue only
        assert np.abs(out).max() / (state.constants.p0) < 1e-6


class TestRecipes:
    def test_prefix_property(self):
        for nq in (2, 8):
            for level in range(1, 8):
                assert transform_recipe(level + 1, nq).startswith(
                    transform_recipe(level, nq))

    def test_level_boundaries_match_recipe_lengths(self):
        from loopforge.frontend import parse_transform_script
        bounds = level_boundaries(8)
        cmds = parse_transform_script(transform_recipe(8, 8))
        assert bounds[-1] == len(cmds)
        for level in range(1, 9):
            assert len(parse_transform_script(
                transform_recipe(level, 8))) == bounds[level - 1]

    def test_embedded_block_is_the_level8_recipe(self):
        unit = parse_source(corpus_text())
        assert unit.transform_block.strip() == transform_recipe(8, 8).strip()

    def test_bad_level_rejected(self):
        with pytest.raises(ValueError):
            transform_recipe(0)
        with pytest.raises(ValueError):
            transform_recipe(9)


class TestShapeAdaptation:
    def test_split_axis_view_mapping(self):
        rng = np.random.default_rng(0)
        x = rng.random((3, 8, 2), np.float32)
        v = adapt_array(x, (3, 4, 2, 2))
        for f in range(8):
            np.testing.assert_array_equal(v[:, f % 4, f // 4, :], x[:, f, :])
        # views share memory: writes flow back
        v[0, 1, 1, 0] = 99.0
        assert x[0, 5, 0] == np.float32(99.0)

    def test_incompatible_shape_rejected(self):
        with pytest.raises(ValueError):
            adapt_array(np.zeros((4, 4), np.float32), (3, 5))

    def test_bind_state_shapes(self, staged_nq2):
        (k,) = staged_nq2[8]
        state = make_inputs(BenchmarkConfig(nq=2, ne=3, seed=1))
        params, arrays = bind_state(k, state, 2, 3)
        assert arrays["q"].shape == (2, 2, 2, 4, 2, 3)
        assert arrays["D"].shape == (2, 2)
        assert params["Ne"] == 3


class TestDriver:
    def test_grid_point_invariant_of_the_reference_configs(self):
        totals = {nq ** 3 * ne
                  for nq, ne in ((4, 55296), (8, 6912), (12, 2048), (16, 864))}
        assert totals == {3538944}

    def test_run_benchmark_row(self):
        report = run_benchmark(BenchmarkConfig(nq=2, ne=1, level=3, seed=1))
        assert report.equivalence_error is not None
        assert report.equivalence_error <= 1e-5
        assert "flops=" in report.row_text()
        assert report.row_csv().startswith("3,2,1,")
        assert "enter" in report.schedule_dump
        assert "KERNEL void" in report.source
        assert BenchReport.csv_header().startswith("level,")

    def test_full_check_small_grid(self):
        rows = list(full_check([1, 8], [2], [1], [1]))
        assert len(rows) == 2
        assert all(ok for _cfg, _err, ok in rows)

    def test_q_read_once_from_level_six(self, staged_nq2):
        from loopforge import schedule as sch
        from loopforge.codegen import count_cost
        nq, ne = 2, 5
        q_elements = nq ** 3 * 8 * ne
        for level in (6, 7, 8):
            (k,) = staged_nq2[level]
            rep = count_cost(k, sch.linearize(k), {"Ne": ne})
            assert rep.reads_of("q") == 4 * q_elements, level


def test_rhsq_traffic_ratio_level1_vs_level7(staged_nq2):
    # each of the three direction terms touches every rhsq element 2*Nq
    # times in the naive kernel; buffering leaves one read and one write
    from loopforge import schedule as sch
    from loopforge.codegen import count_cost
    nq, ne = 2, 3
    traffic = {}
    for level in (1, 7):
        (k,) = staged_nq2[level]
        rep = count_cost(k, sch.linearize(k), {"Ne": ne})
        traffic[level] = rep.reads_of("rhsq") + rep.writes_of("rhsq")
    elements = nq ** 3 * 8 * ne
    assert traffic[1] == 4 * elements * 2 * (3 * nq)
    assert traffic[7] == 4 * elements * 2
    assert traffic[1] // traffic[7] == 3 * nq


def test_run_benchmark_reference_configuration():
    report = run_benchmark(BenchmarkConfig(nq=8, ne=6912, level=8))
    assert report.equivalence_error is None  # skipped above Nq=4
    assert 0.8 <= report.cost.flops / 1.111e9 <= 1.2
    total = report.cost.global_bytes_read + report.cost.global_bytes_written
    assert 4.3e8 <= total <= 6.5e8
