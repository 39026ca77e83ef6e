import contextlib
import csv
import io
import json
import math
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag

from svl_desk.__version__ import __version__

from . import autodiff as ad
from .alignment import AlignmentBatch, LossConfig, infonce, mse_align, mta_total
from .config import load_run_config, parse_run_config
from .constants import (
    E_AC_PJ,
    E_MAC_PJ,
    FIRING_HEAVISIDE,
    TRACE_ENCODE_MAC,
    TRACE_HEAD_MAC,
    TRACE_SPIKE_AC,
    VARIANT_POINTFORMER,
)
from .data import (
    EmbeddingProvider,
    TripletDataset,
    load_cloud,
    load_manifest,
    load_tensor,
    read_events,
    read_labels,
    save_tensor,
    synth_triplets,
    tensor_io,
    tensor_shape,
    write_events,
)
from .encoder import (
    EncoderConfig,
    EncoderParams,
    SpikeEncoder,
    classify_head,
    layer_shapes,
    load_params,
    save_params,
    sda,
)
from .energy import EnergyModel, LayerTrace, TraceRecorder, ann_energy, estimate, firing_rate
from .exceptions import (
    ConfigError,
    DataError,
    DegenerateInputError,
    DimensionMismatch,
    FormatError,
    NotFoundError,
    ShapeError,
    SpikeRangeError,
    TrainingError,
)
from .geometry import (
    EventStream,
    PointCloud,
    event_to_cloud,
    fps,
    knn_group,
    knn_indices,
    normalize_unit_sphere,
    sliding_windows,
    voxelize,
)
from .management.commands.export_head import Command as ExportHeadCommand
from .management.commands.pretrain import Command as PretrainCommand
from .neuron import (
    NeuronConfig,
    NeuronState,
    SpikeFeature,
    SpikingNeurons,
    expand_virtual,
    heaviside_fire,
    ilif_fire,
    ilif_sequence,
    lif_step,
    surrogate_rectangle,
)
from .repvli import (
    build_head,
    load_head,
    save_head,
    verify_equivalence,
    zeroshot_logits,
    zeroshot_predict,
)
from .trainer import (
    AdamWState,
    TrainConfig,
    TrainingRun,
    adamw_step,
    clip_grad_norm,
    cross_entropy,
    evaluate_zeroshot,
    finetune_loop,
    load_checkpoint,
    lr_at,
    pretrain_loop,
    save_checkpoint,
)

FIXTURES = Path(__file__).resolve().parent / "fixtures"
TRIPLETS = FIXTURES / "triplets"

SMALL_ENCODER = EncoderConfig(dims=(16, 32), embed_dim=8)


def small_dataset(n_classes=2, per_class=4, seed=3):
    """Eight 32-point synthetic triplets of width 8."""
    return TripletDataset.from_synthetic(
        synth_triplets(n_classes, per_class, 8, seed, n_points=32)
    )


class AutodiffTests(SimpleTestCase):
    """Tape recording, backward and the smooth differentiable primitives."""

    def test_backward_through_matmul_chain(self):
        """
        d/dW sum(x @ W) is x broadcast along the output columns.
        """
        x = ad.tensor([[1.0, 2.0], [3.0, 4.0]])
        w = ad.tensor(np.ones((2, 3)), requires_grad=True)
        ad.backward(ad.sum_all(ad.matmul(x, w)))

        expected = np.array([[4.0, 4.0, 4.0], [6.0, 6.0, 6.0]])
        self.assertTrue(np.array_equal(w.grad, expected))

    def test_unreached_leaf_keeps_no_gradient(self):
        a = ad.tensor([1.0, 2.0], requires_grad=True)
        b = ad.tensor([3.0, 4.0], requires_grad=True)
        ad.backward(ad.sum_all(ad.square(a)))

        self.assertTrue(np.array_equal(a.grad, [2.0, 4.0]))
        self.assertIsNone(b.grad)

    def test_tape_is_topological_and_released(self):
        a = ad.tensor([1.0, -2.0, 3.0], requires_grad=True)
        loss = ad.sum_all(ad.mul(ad.exp(a), a))
        tape = ad.current_tape()
        self.assertTrue(tape.is_topological())
        self.assertGreater(len(tape), 0)

        ad.backward(loss)
        self.assertTrue(tape.released)
        with self.assertRaises(ShapeError):
            ad.backward(loss)

    def test_no_grad_records_nothing(self):
        a = ad.tensor([1.0, 2.0], requires_grad=True)
        with ad.no_grad():
            out = ad.sum_all(ad.square(a))
        self.assertFalse(out.requires_grad)
        self.assertTrue(ad.is_grad_enabled())

    def test_operator_sugar_matches_named_ops(self):
        a = ad.tensor([1.0, 2.0])
        b = ad.tensor([3.0, 5.0])
        self.assertTrue(np.array_equal((a + b).data, ad.add(a, b).data))
        self.assertTrue(np.array_equal((a - b).data, [-2.0, -3.0]))
        self.assertTrue(np.array_equal((a * b).data, [3.0, 10.0]))
        self.assertTrue(np.array_equal((-a).data, [-1.0, -2.0]))

    def test_shape_mismatch_raises(self):
        with self.assertRaises(ShapeError):
            ad.add(ad.tensor([1.0, 2.0]), ad.tensor([1.0, 2.0, 3.0]))
        with self.assertRaises(ShapeError):
            ad.matmul(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones((2, 3))))

    def test_max_routes_gradient_to_first_maximum(self):
        t = ad.tensor([[1.0, 5.0, 5.0], [2.0, 0.0, 1.0]], requires_grad=True)
        ad.backward(ad.sum_all(ad.reduce(t, 1, "max")))
        self.assertTrue(np.array_equal(t.grad, [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]))

    def test_softmax_is_stable_and_normalized(self):
        p = ad.softmax(ad.tensor([1000.0, 0.0]), 0).data
        self.assertTrue(np.all(np.isfinite(p)))
        self.assertAlmostEqual(p[0], 1.0, places=12)
        self.assertLess(p[1], 1e-300)

        for seed in range(100):
            rng = np.random.default_rng(seed)
            rows = rng.normal(scale=10.0 ** rng.uniform(0, 3), size=(4, int(rng.integers(2, 10))))
            out = ad.softmax(ad.tensor(rows), 1).data
            self.assertTrue(np.all(np.isfinite(out)), f"seed {seed}")
            self.assertLess(np.max(np.abs(out.sum(axis=1) - 1.0)), 1e-12, f"seed {seed}")

    def test_fresh_tape_drops_unconsumed_recording(self):
        a = ad.tensor([1.0, 2.0], requires_grad=True)
        stale = ad.sum_all(ad.square(a))
        old = ad.current_tape()
        self.assertGreater(len(old), 0)

        new = ad.fresh_tape()
        self.assertTrue(old.released)
        self.assertEqual(len(old), 0)
        self.assertIsNot(new, old)
        self.assertEqual(len(new), 0)
        with self.assertRaises(ShapeError):
            ad.backward(stale)

        ad.backward(ad.sum_all(ad.square(a)))
        self.assertTrue(np.array_equal(a.grad, [2.0, 4.0]))

    def test_training_step_starts_from_fresh_tape(self):
        leftover = ad.sum_all(ad.square(ad.tensor([3.0], requires_grad=True)))
        stale = leftover._tape
        pretrain_loop(
            small_dataset(),
            SpikeEncoder(SMALL_ENCODER, seed=0),
            LossConfig(),
            TrainConfig(epochs=1, warmup_epochs=0, batch_size=8),
        )
        self.assertTrue(stale.released)
        self.assertEqual(len(ad.current_tape()), 0)

    def test_normalize_rejects_zero_slice(self):
        with self.assertRaises(DegenerateInputError):
            ad.normalize_l2(ad.tensor([[0.0, 0.0], [1.0, 0.0]]), 1)

    def test_smooth_paths_pass_gradient_check_over_seeds(self):
        """
        Softmax, normalize, InfoNCE, MSE, spike-free attention and the
        temperature path agree with central differences for 100 seeds.
        """
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x = rng.normal(size=(3, 4))
            y = rng.normal(size=(3, 4))
            w = ad.tensor(rng.normal(size=(3, 4)))
            checks = [
                (lambda t: ad.sum_all(ad.mul(ad.softmax(t, 1), w)), [x]),
                (lambda t: ad.sum_all(ad.mul(ad.normalize_l2(t, 1), w)), [x]),
                (lambda a, b: infonce(a, b, 2.0), [x, y]),
                (mse_align, [x, y]),
                (
                    lambda q, k, v: ad.sum_all(
                        ad.mul(ad.batch_matmul(ad.batch_matmul(q, ad.swap_last(k)), v), w)
                    ),
                    [x, y, rng.normal(size=(3, 4))],
                ),
                (lambda a, rho: infonce(a, ad.tensor(y), ad.exp(rho)), [x, np.array(1.5)]),
            ]
            for fn, params in checks:
                report = ad.grad_check(fn, params, eps=1e-5)
                self.assertTrue(report.passed(1e-4), f"seed {seed}: {report.errors}")

    def test_shape_plumbing_passes_gradient_check(self):
        rng = np.random.default_rng(11)
        w = ad.tensor(rng.normal(size=(2, 5)))

        def fn(a, b, bias):
            joined = ad.concat([a, ad.slice_axis(b, 1, 0, 2)], 1)
            flat = ad.reshape(ad.add_bias(joined, bias), (2, 5))
            return ad.sum_all(ad.mul(ad.log_softmax(flat, 1), w))

        report = ad.grad_check(
            fn, [rng.normal(size=(2, 3)), rng.normal(size=(2, 4)), rng.normal(size=5)]
        )
        self.assertTrue(report.passed(1e-4), report.errors)


class NeuronTests(SimpleTestCase):
    """I-LIF firing, reset dynamics, BPTT and virtual expansion."""

    def test_integer_firing_rounds_and_clips(self):
        u = ad.tensor([-0.5, 0.4, 0.6, 2.5, 3.5, 9.0], requires_grad=True)
        s = ilif_fire(u, 4)
        self.assertTrue(np.array_equal(s.data, [0.0, 0.0, 1.0, 2.0, 4.0, 4.0]))

        ad.backward(ad.sum_all(s))
        self.assertTrue(np.array_equal(u.grad, [0.0, 1.0, 1.0, 1.0, 1.0, 0.0]))

    def test_heaviside_uses_rectangle_surrogate(self):
        cfg = NeuronConfig(d_max=1, firing=FIRING_HEAVISIDE, a=0.5)
        u = ad.tensor([1.0, 0.5, 1.2], requires_grad=True)
        s = heaviside_fire(u, cfg)
        self.assertTrue(np.array_equal(s.data, [1.0, 0.0, 1.0]))

        ad.backward(ad.sum_all(s))
        self.assertTrue(np.array_equal(u.grad, [2.0, 0.0, 2.0]))

    def test_heaviside_requires_binary_bound(self):
        with self.assertRaises(ConfigError):
            NeuronConfig(d_max=4, firing=FIRING_HEAVISIDE)

    def test_lif_step_leaks_and_hard_resets(self):
        cfg = NeuronConfig(beta=0.5)
        state = NeuronState.initial((2,))

        s, state = lif_step(state, ad.tensor([0.4, 1.6]), cfg)
        self.assertTrue(np.array_equal(s.data, [0.0, 2.0]))
        self.assertTrue(np.allclose(state.h.data, [0.2, 0.0]))

        s, state = lif_step(state, ad.tensor([0.4, 0.4]), cfg)
        self.assertTrue(np.array_equal(s.data, [1.0, 0.0]))
        self.assertTrue(np.allclose(state.h.data, [0.0, 0.2]))
        self.assertEqual(state.t, 2)

    def test_spiking_neurons_keep_membrane_between_calls(self):
        neurons = SpikingNeurons(NeuronConfig(beta=1.0), "cell")
        self.assertEqual(neurons(ad.tensor([0.3])).data[0], 0.0)
        self.assertEqual(neurons(ad.tensor([0.3])).data[0], 1.0)
        neurons.reset()
        self.assertEqual(neurons(ad.tensor([0.3])).data[0], 0.0)

    def test_sequence_leaks_below_rounding_threshold(self):
        """
        Two inputs of 0.3 at β = 0.5: u = 0.3 then 0.45, neither rounds up.
        """
        feature = ilif_sequence([ad.tensor([0.3]), ad.tensor([0.3])], NeuronConfig(beta=0.5))
        self.assertEqual(feature.T, 2)
        self.assertTrue(np.array_equal(feature.values.data, [[0.0], [0.0]]))

        quiet = ilif_sequence([ad.zeros((3,)) for _ in range(4)], NeuronConfig())
        self.assertTrue(np.array_equal(quiet.values.data, np.zeros((4, 3))))

    def test_sequence_matches_stateful_neurons(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            cfg = NeuronConfig(beta=float(rng.uniform(0.1, 1.0)), d_max=int(rng.integers(1, 6)))
            inputs = rng.uniform(-0.5, 2.5, size=(int(rng.integers(1, 6)), 5))

            feature = ilif_sequence([ad.tensor(x) for x in inputs], cfg)
            neurons = SpikingNeurons(cfg, "cell")
            stepped = np.stack([neurons(ad.tensor(x)).data for x in inputs])
            self.assertTrue(np.array_equal(feature.values.data, stepped), f"seed {seed}")

    def test_sequence_rejects_empty_and_ragged_inputs(self):
        with self.assertRaises(DegenerateInputError):
            ilif_sequence([], NeuronConfig())
        with self.assertRaises(ShapeError):
            ilif_sequence([ad.zeros((2,)), ad.zeros((3,))], NeuronConfig())

    def test_straight_through_gradient_vanishes_outside_clip_window(self):
        """
        Over 100 seeds the firing gradient is exactly 1 inside (0, D) and
        exactly 0 at or beyond either bound.
        """
        for seed in range(100):
            rng = np.random.default_rng(seed)
            d_max = int(rng.integers(1, 6))
            values = np.concatenate(
                [rng.uniform(-2.0, d_max + 2.0, size=40), [0.0, -0.0, float(d_max), d_max + 1e-12]]
            )
            u = ad.tensor(values, requires_grad=True)
            ad.backward(ad.sum_all(ilif_fire(u, d_max)))

            outside = (values <= 0.0) | (values >= d_max)
            self.assertTrue(np.all(u.grad[outside] == 0.0), f"seed {seed}")
            self.assertTrue(np.all(u.grad[~outside] == 1.0), f"seed {seed}")

    def test_rectangle_surrogate_window(self):
        cfg = NeuronConfig(theta=1.0, a=2.0)
        self.assertEqual(surrogate_rectangle(ad.tensor([0.6]), cfg).data.tolist(), [0.5])

        for seed in range(100):
            rng = np.random.default_rng(seed)
            cfg = NeuronConfig(theta=float(rng.uniform(0.5, 2.0)), a=float(rng.uniform(0.2, 3.0)))
            u = rng.uniform(-2.0, 4.0, size=30)
            expected = np.where(np.abs(u - cfg.theta) < cfg.a / 2.0, 1.0 / cfg.a, 0.0)
            self.assertTrue(
                np.array_equal(surrogate_rectangle(ad.tensor(u), cfg).data, expected), f"seed {seed}"
            )

    def test_spike_feature_rejects_out_of_range_values(self):
        with self.assertRaises(SpikeRangeError):
            SpikeFeature(ad.tensor([[5.0, 0.0]]), 4)
        with self.assertRaises(SpikeRangeError):
            SpikeFeature(ad.tensor([[0.5, 0.0]]), 4)

    def test_bptt_matches_hand_expanded_gradient(self):
        """
        Two I-LIF layers, three timesteps, four units: autodiff gradients
        equal a hand-written unroll of the membrane recurrence.
        """
        cfg = NeuronConfig(beta=0.5, theta=1.0, d_max=4)
        D, beta = cfg.d_max, cfg.beta
        active = 0.0

        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = rng.uniform(0.0, 1.5, size=(3, 4))
            w1 = rng.normal(0.0, 1.0, size=(4, 4))
            w2 = rng.normal(0.0, 0.7, size=(4, 4))
            r = rng.normal(size=4)

            t1 = ad.tensor(w1, requires_grad=True)
            t2 = ad.tensor(w2, requires_grad=True)
            layer1 = SpikingNeurons(cfg, "l1")
            layer2 = SpikingNeurons(cfg, "l2")
            loss = None
            for t in range(3):
                s1 = layer1(ad.matmul(ad.tensor(x[t]), t1))
                s2 = layer2(ad.matmul(s1, t2))
                term = ad.sum_all(ad.mul(s2, ad.tensor(r)))
                loss = term if loss is None else ad.add(loss, term)
            ad.backward(loss)

            h1, h2 = np.zeros(4), np.zeros(4)
            steps = []
            for t in range(3):
                u1 = h1 + x[t] @ w1
                s1 = np.rint(np.clip(u1, 0, D))
                g1 = (s1 == 0).astype(float)
                h1 = beta * u1 * g1
                u2 = h2 + s1 @ w2
                s2 = np.rint(np.clip(u2, 0, D))
                g2 = (s2 == 0).astype(float)
                h2 = beta * u2 * g2
                steps.append((u1, s1, g1, u2, g2))

            dw1, dw2 = np.zeros((4, 4)), np.zeros((4, 4))
            next1, next2 = np.zeros(4), np.zeros(4)
            for t in reversed(range(3)):
                u1, s1, g1, u2, g2 = steps[t]
                du2 = r * ((u2 > 0) & (u2 < D)) + next2 * beta * g2
                dw2 += np.outer(s1, du2)
                du1 = (w2 @ du2) * ((u1 > 0) & (u1 < D)) + next1 * beta * g1
                dw1 += np.outer(x[t], du1)
                next1, next2 = du1, du2

            self.assertLess(np.max(np.abs(t1.grad - dw1)), 1e-9)
            self.assertLess(np.max(np.abs(t2.grad - dw2)), 1e-9)
            active += np.abs(dw1).sum()

        self.assertGreater(active, 0.0)

    def test_virtual_expansion_preserves_linear_outputs(self):
        """
        For 1000 random integer spike tensors, the time-summed output of a
        linear map is the same on the integer and the expanded binary path.
        """
        rng = np.random.default_rng(0)
        for _ in range(1000):
            T, D = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            width, out = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            s = rng.integers(0, D + 1, size=(T, width)).astype(float)
            w = rng.normal(size=(width, out))

            binary = expand_virtual(SpikeFeature(ad.tensor(s), D)).data
            self.assertEqual(binary.shape, (T * D, width))
            self.assertTrue(np.all((binary == 0.0) | (binary == 1.0)))
            self.assertTrue(np.array_equal(binary.reshape(T, D, width).sum(axis=1), s))

            integer_path = s.sum(axis=0) @ w
            binary_path = (binary @ w).sum(axis=0)
            self.assertLess(np.max(np.abs(integer_path - binary_path)), 1e-9)


class GeometryTests(SimpleTestCase):
    """Event conversion, sampling, grouping and voxelization."""

    def test_event_cloud_time_axis_spans_unit_interval(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(2, 40))
            rows = np.column_stack(
                [
                    rng.integers(0, 10_000, n),
                    rng.integers(0, 64, n),
                    rng.integers(0, 64, n),
                    rng.integers(0, 2, n),
                ]
            )
            rows[0, 0], rows[1, 0] = 0, 10_000
            cloud = event_to_cloud(EventStream.from_rows(rows.tolist()))
            z = cloud.points[:, 2]
            self.assertGreaterEqual(z.min(), 0.0)
            self.assertLessEqual(z.max(), 1.0)
            self.assertEqual(cloud.n_features, 1)

    def test_event_window_is_inclusive(self):
        stream = EventStream.from_rows([(0, 0, 0, 1), (50, 1, 1, 0), (100, 2, 2, 1), (200, 3, 3, 0)])
        cloud = event_to_cloud(stream, (50, 200))
        self.assertEqual(len(cloud), 3)
        self.assertTrue(np.allclose(cloud.points[:, 2], [0.0, 1 / 3, 1.0]))

    def test_degenerate_event_windows_raise(self):
        stream = EventStream.from_rows([(10, 0, 0, 1), (10, 1, 1, 0)])
        with self.assertRaises(DegenerateInputError):
            event_to_cloud(stream)
        with self.assertRaises(DegenerateInputError):
            event_to_cloud(stream, (20, 30))

    def test_unsorted_stream_is_rejected(self):
        with self.assertRaises(DataError):
            EventStream(t=[2, 1], x=[0, 0], y=[0, 0], p=[0, 1])

    def test_sliding_windows_skip_single_timestamp_windows(self):
        rows = [(0, 0, 0, 1), (10, 1, 0, 0), (100, 2, 0, 1), (250, 3, 3, 1), (260, 4, 4, 0)]
        clouds = sliding_windows(EventStream.from_rows(rows), 100)
        self.assertEqual([len(c) for c in clouds], [2, 2])

    def test_unit_sphere_normalization(self):
        cloud = normalize_unit_sphere(PointCloud([[1.0, 1.0, 1.0], [3.0, 1.0, 1.0], [2.0, 5.0, 1.0]]))
        self.assertTrue(np.allclose(cloud.points.mean(axis=0), 0.0))
        self.assertAlmostEqual(float(np.max(np.linalg.norm(cloud.points, axis=1))), 1.0)

    def test_fps_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 65))
            m = int(rng.integers(1, n + 1))
            start = int(rng.integers(0, n))
            points = rng.normal(size=(n, 3))

            expected = [start]
            for _ in range(m - 1):
                best, best_gap = None, -1.0
                for i in range(n):
                    if i in expected:
                        continue
                    gap = min(sum((points[i][a] - points[j][a]) ** 2 for a in range(3)) for j in expected)
                    if gap > best_gap:
                        best, best_gap = i, gap
                expected.append(best)

            self.assertEqual(fps(PointCloud(points), m, start), expected)

    def test_fps_rejects_oversampling(self):
        with self.assertRaises(DegenerateInputError):
            fps(PointCloud(np.zeros((3, 3))), 4)

    def test_knn_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 65))
            k = int(rng.integers(1, n + 1))
            points = rng.normal(size=(n, 3))
            centers = list(rng.choice(n, size=min(n, 4), replace=False))

            found = knn_indices(PointCloud(points), centers, k)
            for row, c in zip(found, centers):
                distances = [float(np.sum((points[i] - points[c]) ** 2)) for i in range(n)]
                expected = sorted(range(n), key=lambda i: (distances[i], i))[:k]
                self.assertEqual(row.tolist(), expected)

    def test_knn_group_returns_center_offsets(self):
        points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
        groups = knn_group(PointCloud(points), [1], 2)
        self.assertEqual(groups.shape, (1, 2, 3))
        self.assertTrue(np.array_equal(groups[0], [[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]))

    def test_voxelize_averages_and_clips(self):
        points = [[0.05, 0.05, 0.05], [0.15, 0.05, 0.05], [1.0, 1.0, 1.0], [2.0, 0.0, 0.0]]
        cloud = PointCloud(points, [[1.0], [3.0], [7.0], [9.0]])
        grid = voxelize(cloud, 0.5, 0.0, 1.0)

        self.assertEqual(grid.extent, (2, 2, 2))
        self.assertEqual(len(grid), 2)
        self.assertTrue(np.array_equal(grid.occupied[(0, 0, 0)], [2.0]))
        self.assertTrue(np.array_equal(grid.occupied[(1, 1, 1)], [7.0]))

        centers = grid.to_cloud()
        self.assertTrue(np.allclose(centers.points, [[0.25, 0.25, 0.25], [0.75, 0.75, 0.75]]))

    def test_voxelize_with_nothing_inside_raises(self):
        with self.assertRaises(DegenerateInputError):
            voxelize(PointCloud([[5.0, 5.0, 5.0]]), 0.1, 0.0, 1.0)


class EncoderTests(SimpleTestCase):
    """Spike PointNet, Spike PointFormer, attention and parameter files."""

    def setUp(self):
        rng = np.random.default_rng(0)
        self.cloud = PointCloud(rng.normal(size=(20, 3)))
        self.former_cfg = EncoderConfig(
            variant=VARIANT_POINTFORMER,
            dims=(8, 16),
            embed_dim=8,
            T=2,
            n_centers=4,
            k=3,
            depth=1,
            heads=2,
        )

    def test_pointnet_output_shapes_and_spike_range(self):
        encoder = SpikeEncoder(replace(SMALL_ENCODER, T=3), seed=0)
        out = encoder.forward(self.cloud)
        self.assertEqual(out.spikes.values.shape, (3, 32))
        self.assertEqual(out.projected.shape, (3, 8))
        self.assertEqual(out.time_mean().shape, (8,))
        values = out.spikes.values.data
        self.assertTrue(np.all((values >= 0) & (values <= 4) & (values == np.rint(values))))

    def test_forward_is_deterministic(self):
        a = SpikeEncoder(SMALL_ENCODER, seed=4).forward(self.cloud)
        b = SpikeEncoder(SMALL_ENCODER, seed=4).forward(self.cloud)
        self.assertTrue(np.array_equal(a.projected.data, b.projected.data))

    def test_pointformer_output_shapes(self):
        out = SpikeEncoder(self.former_cfg, seed=0).forward(self.cloud)
        self.assertEqual(out.spikes.values.shape, (2, 16))
        self.assertEqual(out.spikes.d_max, self.former_cfg.spike_bound)
        self.assertEqual(self.former_cfg.spike_bound, 4 * 2 * 4)
        self.assertEqual(out.projected.shape, (2, 8))

    def test_pointnet_ignores_point_order(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            points = rng.normal(size=(24, 3))
            encoder = SpikeEncoder(replace(SMALL_ENCODER, T=2), seed=seed)
            a = encoder.forward(PointCloud(points))
            b = encoder.forward(PointCloud(points[rng.permutation(24)]))
            self.assertTrue(np.array_equal(a.spikes.values.data, b.spikes.values.data))
            self.assertTrue(np.allclose(a.projected.data, b.projected.data, atol=1e-12))

    def test_silent_attention_layers_pass_residual_stream_through(self):
        """
        Zeroed attention weights add nothing to the residual stream, so the
        encoder matches the same weights at depth 0.
        """
        params = EncoderParams.init(self.former_cfg, seed=5)
        deep = SpikeEncoder(
            self.former_cfg,
            EncoderParams(
                {
                    name: ad.zeros(t.shape, requires_grad=True) if name.startswith("sdt.") else t
                    for name, t in params.items()
                }
            ),
        )
        shallow_cfg = replace(self.former_cfg, depth=0)
        shallow = SpikeEncoder(
            shallow_cfg, EncoderParams({name: params[name] for name in layer_shapes(shallow_cfg)})
        )

        a = deep.forward(self.cloud)
        b = shallow.forward(self.cloud)
        self.assertTrue(np.any(b.spikes.values.data > 0))
        self.assertTrue(np.array_equal(a.spikes.values.data, b.spikes.values.data))
        self.assertTrue(np.array_equal(a.projected.data, b.projected.data))

    def test_zero_weights_give_silent_feature(self):
        for cfg in (SMALL_ENCODER, self.former_cfg):
            zeros = EncoderParams(
                {
                    name: ad.tensor(np.zeros(shape), requires_grad=True)
                    for name, shape in layer_shapes(cfg).items()
                }
            )
            out = SpikeEncoder(cfg, zeros).forward(self.cloud)
            self.assertTrue(np.array_equal(out.spikes.values.data, np.zeros(out.spikes.values.shape)))
            self.assertTrue(np.array_equal(out.projected.data, np.zeros(out.projected.shape)))

    def test_pointformer_needs_enough_points(self):
        with self.assertRaises(DegenerateInputError):
            SpikeEncoder(self.former_cfg, seed=0).forward(PointCloud(np.zeros((3, 3))))

    def test_batch_forward_matches_single_forward(self):
        rng = np.random.default_rng(9)
        clouds = [PointCloud(rng.normal(size=(20, 3))) for _ in range(3)]
        for cfg in (SMALL_ENCODER, self.former_cfg):
            encoder = SpikeEncoder(cfg, seed=1)
            batch = encoder.forward_batch(clouds).time_mean().data
            single = np.stack([encoder.forward(c).time_mean().data for c in clouds])
            self.assertTrue(np.allclose(batch, single, atol=1e-9))

    def test_batch_forward_needs_equal_sizes(self):
        encoder = SpikeEncoder(SMALL_ENCODER, seed=0)
        with self.assertRaises(ShapeError):
            encoder.forward_batch([self.cloud, PointCloud(np.zeros((5, 3)))])

    def test_gradients_reach_first_and_last_layers(self):
        encoder = SpikeEncoder(SMALL_ENCODER, seed=2)
        ad.backward(ad.sum_all(encoder.forward(self.cloud).time_mean()))
        self.assertIsNotNone(encoder.params["proj.w"].grad)
        self.assertIsNotNone(encoder.params["mlp.0.w"].grad)

    def test_with_run_keeps_weights(self):
        encoder = SpikeEncoder(SMALL_ENCODER, seed=0)
        retimed = encoder.with_run(6, 2)
        self.assertEqual(retimed.cfg.T, 6)
        self.assertEqual(retimed.cfg.neuron.d_max, 2)
        self.assertIs(retimed.params, encoder.params)
        self.assertEqual(retimed.forward(self.cloud).projected.shape, (6, 8))

    def test_feature_channel_mismatch_raises(self):
        encoder = SpikeEncoder(replace(SMALL_ENCODER, in_features=2), seed=0)
        with self.assertRaises(ShapeError):
            encoder.forward(PointCloud(np.zeros((4, 3)), np.zeros((4, 1))))

    def test_layer_shapes_for_pointformer(self):
        shapes = layer_shapes(self.former_cfg)
        self.assertEqual(shapes["mlp.0.w"], (6, 8))
        self.assertEqual(shapes["sdt.0.q.w"], (16, 16))
        self.assertEqual(shapes["proj.w"], (16, 8))
        self.assertNotIn("proj.b", shapes)

    def test_config_rejects_unknown_keys_and_bad_heads(self):
        with self.assertRaises(ConfigError):
            EncoderConfig.from_dict({"dimz": [8]})
        with self.assertRaises(ConfigError):
            EncoderConfig(dims=(6,), heads=4)

    def test_sda_shapes_and_errors(self):
        cfg = NeuronConfig()
        q = ad.tensor(np.full((3, 2), 1.0))
        out = sda(q, q, q, cfg)
        self.assertEqual(out.shape, (3, 2))
        with self.assertRaises(DimensionMismatch):
            sda(q, ad.tensor(np.ones((3, 3))), q, cfg)

    def test_classify_head_checks_width(self):
        out = SpikeEncoder(SMALL_ENCODER, seed=0).forward(self.cloud)
        logits = classify_head(out, ad.tensor(np.ones((3, 8))))
        self.assertEqual(logits.shape, (3,))
        with self.assertRaises(DimensionMismatch):
            classify_head(out, ad.tensor(np.ones((3, 7))))

    def test_forward_records_energy_traces(self):
        recorder = TraceRecorder(self.former_cfg.neuron.d_max)
        SpikeEncoder(self.former_cfg, seed=0).forward(self.cloud, recorder)
        traces = {trace.name: trace for trace in recorder.traces()}

        self.assertEqual(traces["mlp.0"].kind, TRACE_ENCODE_MAC)
        self.assertEqual(traces["mlp.0"].flops, 4 * 3 * 6 * 8)
        self.assertEqual(traces["sdt.0.h0.score"].kind, TRACE_SPIKE_AC)
        self.assertIn("proj", traces)
        for trace in traces.values():
            if trace.kind == TRACE_SPIKE_AC:
                self.assertTrue(0.0 <= trace.firing_rate <= 1.0)

    def test_params_round_trip_through_files(self):
        params = EncoderParams.init(self.former_cfg, seed=3)
        with tempfile.TemporaryDirectory() as tmp:
            save_params(params, tmp)
            loaded = load_params(tmp, self.former_cfg)
        for name, t in params.items():
            self.assertTrue(np.array_equal(t.data, loaded[name].data))

    def test_missing_param_manifest_raises(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(NotFoundError):
                load_params(tmp)


class AlignmentTests(SimpleTestCase):
    """InfoNCE, MSE and the weighted triple alignment total."""

    def test_infonce_orthonormal_pair(self):
        """
        Orthonormal B=2 batch at scale 1 gives ln(1 + e) − 1.
        """
        eye = ad.tensor(np.eye(2))
        loss = infonce(eye, eye, 1.0).item()
        self.assertAlmostEqual(loss, math.log(1.0 + math.e) - 1.0, delta=1e-6)
        self.assertAlmostEqual(loss, 0.31326, places=5)

    def test_infonce_singleton_batch_is_zero(self):
        x = ad.tensor([[0.3, -1.2, 2.0]])
        y = ad.tensor([[1.0, 0.5, 0.1]])
        self.assertEqual(infonce(x, y, 14.3).item(), 0.0)

    def test_infonce_ignores_operand_order_and_row_norms(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            batch, width = int(rng.integers(2, 7)), int(rng.integers(3, 9))
            x = rng.normal(size=(batch, width))
            y = rng.normal(size=(batch, width))
            scale = float(rng.uniform(0.5, 20.0))
            loss = infonce(ad.tensor(x), ad.tensor(y), scale).item()

            swapped = infonce(ad.tensor(y), ad.tensor(x), scale).item()
            self.assertAlmostEqual(loss, swapped, places=10, msg=f"seed {seed}")

            stretched_x = x * rng.uniform(0.1, 10.0, size=(batch, 1))
            stretched_y = y * rng.uniform(0.1, 10.0, size=(batch, 1))
            rescaled = infonce(ad.tensor(stretched_x), ad.tensor(stretched_y), scale).item()
            self.assertAlmostEqual(loss, rescaled, places=10, msg=f"seed {seed}")

    def test_infonce_vanishes_for_aligned_orthonormal_rows(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            width = int(rng.integers(2, 9))
            batch = int(rng.integers(2, width + 1))
            basis, _ = np.linalg.qr(rng.normal(size=(width, width)))
            rows = ad.tensor(basis[:batch])
            self.assertLess(infonce(rows, rows, 100.0).item(), 1e-8, f"seed {seed}")

    def test_mse_align(self):
        eye = ad.tensor(np.eye(3))
        self.assertEqual(mse_align(eye, eye).item(), 0.0)
        flipped = ad.tensor(np.eye(3)[[1, 2, 0]])
        self.assertAlmostEqual(mse_align(eye, flipped).item(), 6.0)

    def test_total_is_weighted_sum(self):
        rng = np.random.default_rng(4)
        batch = AlignmentBatch(
            ad.tensor(rng.normal(size=(4, 5))),
            rng.normal(size=(4, 5)),
            rng.normal(size=(4, 5)),
        )
        cfg = LossConfig(lambda1=0.5, lambda2=2.0, lambda3=0.25)
        total, parts = mta_total(batch, cfg)
        expected = (
            0.5 * parts["spike_text"].item()
            + 2.0 * parts["spike_image"].item()
            + 0.25 * parts["mse"].item()
        )
        self.assertAlmostEqual(total.item(), expected, places=12)

    def test_temperature_receives_gradient_and_embeddings_do_not(self):
        rng = np.random.default_rng(6)
        text = ad.tensor(rng.normal(size=(3, 4)), requires_grad=True)
        batch = AlignmentBatch(
            ad.tensor(rng.normal(size=(3, 4)), requires_grad=True),
            text,
            rng.normal(size=(3, 4)),
        )
        rho = ad.tensor(1.0, requires_grad=True)
        total, _ = mta_total(batch, LossConfig(), rho)
        ad.backward(total)

        self.assertIsNotNone(rho.grad)
        self.assertIsNotNone(batch.spike_features.grad)
        self.assertIsNone(text.grad)
        self.assertFalse(batch.text_embeddings.requires_grad)

    def test_batch_width_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            AlignmentBatch(ad.tensor(np.ones((2, 4))), np.ones((2, 3)), np.ones((2, 4)))

    def test_log_temp_clamp(self):
        cfg = LossConfig()
        self.assertEqual(cfg.clamp_log_temp(50.0), math.log(100.0))
        self.assertEqual(cfg.clamp_log_temp(-9.0), -1.0)
        self.assertAlmostEqual(cfg.scale(), 1 / 0.07)


class RepVLITests(SimpleTestCase):
    """Folded zero-shot head."""

    def test_folded_head_equals_cosine_path(self):
        """
        1000 random (feature, prompt set, scale) cases: probabilities agree
        within 1e-9 and argmax is identical.
        """
        rng = np.random.default_rng(8)
        for _ in range(1000):
            k, c = int(rng.integers(2, 9)), int(rng.integers(2, 17))
            feature = rng.normal(size=(int(rng.integers(1, 4)), c))
            prompts = rng.normal(size=(k, c))
            report = verify_equivalence(ad.tensor(feature), prompts, float(rng.uniform(1, 100)))
            self.assertTrue(report.passed(1e-9), report)

    def test_head_rows_are_scaled_unit_vectors(self):
        head = build_head(np.array([[3.0, 4.0], [0.0, 2.0]]), 10.0, ["a", "b"])
        self.assertTrue(np.allclose(np.linalg.norm(head.weights.data, axis=1), 10.0))
        self.assertEqual(head.labels, ("a", "b"))

    def test_degenerate_prompts(self):
        with self.assertRaises(DegenerateInputError):
            build_head(np.array([[0.0, 0.0], [1.0, 0.0]]), 1.0)
        with self.assertRaises(DegenerateInputError):
            build_head(np.array([[1.0, 0.0]]), 1.0)

    def test_logits_check_width(self):
        head = build_head(np.eye(3), 5.0)
        probs = zeroshot_logits(ad.tensor([1.0, 0.0, 0.0]), head)
        self.assertAlmostEqual(float(probs.data.sum()), 1.0)
        self.assertEqual(int(np.argmax(probs.data)), 0)
        with self.assertRaises(DimensionMismatch):
            zeroshot_logits(ad.tensor([1.0, 0.0]), head)

    def test_predict_tolerates_quiescent_features(self):
        head = build_head(np.eye(3), 5.0)
        preds, probs = zeroshot_predict(np.array([[0.0, 0.0, 0.0], [0.0, 2.0, 0.0]]), head)
        self.assertEqual(preds.tolist(), [0, 1])
        self.assertTrue(np.allclose(probs[0], 1 / 3))

    def test_head_files_round_trip(self):
        head = build_head(np.array([[1.0, 2.0], [2.0, -1.0]]), 12.5, ["chair", "lamp"])
        with tempfile.TemporaryDirectory() as tmp:
            save_head(head, tmp)
            loaded = load_head(tmp)
        self.assertEqual(loaded.labels, ("chair", "lamp"))
        self.assertAlmostEqual(loaded.scale, 12.5)
        self.assertTrue(np.array_equal(loaded.weights.data, head.weights.data))

    def test_missing_head_raises(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(NotFoundError):
                load_head(tmp)


class EnergyTests(SimpleTestCase):
    """Firing rates and the MAC/AC cost model."""

    def test_constants(self):
        model = EnergyModel()
        self.assertEqual((model.e_mac, model.e_ac), (4.6, 0.9))
        self.assertEqual((E_MAC_PJ, E_AC_PJ), (4.6, 0.9))

    def test_firing_rate(self):
        self.assertEqual(firing_rate(np.zeros((2, 3))), 0.0)
        self.assertEqual(firing_rate(ad.tensor(np.ones((2, 3)))), 1.0)
        self.assertEqual(firing_rate(SpikeFeature(ad.tensor(np.full((2, 3), 2.0)), 4)), 0.5)

    def test_two_layer_hand_count(self):
        traces = [
            LayerTrace("encode", TRACE_ENCODE_MAC, 100),
            LayerTrace("spikes", TRACE_SPIKE_AC, 200, 0.25),
        ]
        report = estimate(traces, EnergyModel(T=2))
        self.assertAlmostEqual(report.total_pj, 550.0, places=9)
        self.assertAlmostEqual(report.total_joules, 550e-12, places=20)

    def test_zero_rates_leave_mac_terms(self):
        traces = [
            LayerTrace("encode", TRACE_ENCODE_MAC, 100),
            LayerTrace("head", TRACE_HEAD_MAC, 30),
            LayerTrace("spikes", TRACE_SPIKE_AC, 200, 0.0),
        ]
        self.assertAlmostEqual(estimate(traces, EnergyModel(T=4)).total_pj, 4.6 * 130)

    def test_doubling_t_doubles_only_ac_term(self):
        traces = [
            LayerTrace("encode", TRACE_ENCODE_MAC, 100),
            LayerTrace("spikes", TRACE_SPIKE_AC, 200, 0.25),
        ]
        one = estimate(traces, EnergyModel(T=1)).total_pj
        two = estimate(traces, EnergyModel(T=2)).total_pj
        self.assertAlmostEqual(two - one, 0.9 * 200 * 0.25)

    def test_estimate_is_monotone_and_matches_brute_force(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            traces = [LayerTrace("encode", TRACE_ENCODE_MAC, int(rng.integers(0, 1000)))]
            for i in range(int(rng.integers(1, 5))):
                traces.append(
                    LayerTrace(f"s{i}", TRACE_SPIKE_AC, int(rng.integers(0, 1000)), float(rng.uniform()))
                )
            T = int(rng.integers(1, 8))
            base = estimate(traces, EnergyModel(T=T)).total_pj

            brute = 4.6 * traces[0].flops
            for trace in traces[1:]:
                brute += 0.9 * T * trace.flops * trace.firing_rate
            self.assertAlmostEqual(base, brute, places=6)

            self.assertGreaterEqual(estimate(traces, EnergyModel(T=T + 1)).total_pj, base)
            i = int(rng.integers(1, len(traces)))
            bumped = list(traces)
            bumped[i] = replace(
                traces[i],
                flops=traces[i].flops + 10,
                firing_rate=min(1.0, traces[i].firing_rate + 0.1),
            )
            self.assertGreaterEqual(estimate(bumped, EnergyModel(T=T)).total_pj, base)

    def test_spike_layer_without_rate_raises(self):
        with self.assertRaises(DataError):
            estimate([LayerTrace("spikes", TRACE_SPIKE_AC, 10)], EnergyModel())

    def test_recorder_counts_residual_stream_parts(self):
        recorder = TraceRecorder(d_max=4)
        recorder.record_mac("mlp.0", 60)
        recorder.record_mac("mlp.0", 60)
        recorder.record_spikes("proj", [np.array([4.0, 0.0, 0.0]), np.array([2.0, 2.0, 0.0])], 2)
        traces = {trace.name: trace for trace in recorder.traces()}

        self.assertEqual(traces["mlp.0"].flops, 60)
        self.assertEqual(traces["proj"].flops, 12)
        self.assertEqual(traces["proj"].ann_flops, 6)
        self.assertAlmostEqual(traces["proj"].firing_rate, 8.0 / 24.0)

    def test_run_model_and_dense_baseline(self):
        model = EnergyModel.for_run(6, 4)
        self.assertEqual(model.T, 24)
        traces = [
            LayerTrace("encode", TRACE_ENCODE_MAC, 100),
            LayerTrace("spikes", TRACE_SPIKE_AC, 200, 0.01),
        ]
        report = estimate(traces, model)
        self.assertAlmostEqual(ann_energy(traces, model), 4.6 * 300)
        self.assertGreater(report.saving, 0.0)
        self.assertEqual([row["layer"] for row in report.rows()], ["encode", "spikes"])


class DataTests(SimpleTestCase):
    """SVLT tensors, event files, manifests, providers and synthetic triplets."""

    def test_tensor_round_trip_is_bit_exact(self):
        values = np.random.default_rng(0).normal(size=(3, 4))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "t.svlt"
            tensor_io(path, ad.tensor(values))
            self.assertTrue(np.array_equal(tensor_io(path).data, values))
            self.assertEqual(tensor_shape(path), (3, 4))

    def test_scalar_fixture(self):
        t = load_tensor(FIXTURES / "scalar.svlt")
        self.assertEqual(t.shape, ())
        self.assertEqual(t.item(), 2.5)

    def test_corrupted_tensor_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_tensor(Path(tmp) / "t.svlt", np.ones((2, 2)))
            blob = path.read_bytes()

            path.write_bytes(b"XXXX" + blob[4:])
            with self.assertRaises(FormatError):
                load_tensor(path)

            path.write_bytes(blob[:4] + bytes([2]) + blob[5:])
            with self.assertRaises(FormatError):
                load_tensor(path)

            path.write_bytes(blob[:-8])
            with self.assertRaisesMessage(FormatError, "truncated"):
                load_tensor(path)

        with self.assertRaises(NotFoundError):
            load_tensor(FIXTURES / "absent.svlt")

    def test_read_events_sorts_rows(self):
        stream = read_events(FIXTURES / "events_small.csv")
        self.assertEqual(len(stream), 3)
        self.assertEqual(stream.t.tolist(), [100, 200, 300])
        self.assertEqual(stream.p.tolist(), [0, 1, 1])

    def test_read_events_collects_every_bad_row(self):
        with self.assertRaises(DataError) as cm:
            read_events(FIXTURES / "events_bad.csv")
        message = str(cm.exception)
        self.assertIn("2 invalid event rows", message)
        self.assertIn("Line 3", message)
        self.assertIn("Line 4", message)

    def test_write_events_reads_back(self):
        stream = EventStream.from_rows([(5, 1, 2, 1), (9, 3, 4, 0)])
        with tempfile.TemporaryDirectory() as tmp:
            loaded = read_events(write_events(Path(tmp) / "e.csv", stream))
        self.assertEqual(loaded.x.tolist(), [1, 3])

    def test_load_cloud_from_events(self):
        cloud = load_cloud(FIXTURES / "events_small.csv")
        self.assertEqual(len(cloud), 3)
        self.assertEqual(cloud.features[:, 0].tolist(), [0.0, 1.0, 1.0])
        self.assertAlmostEqual(float(np.max(np.linalg.norm(cloud.points, axis=1))), 1.0)
        with self.assertRaises(FormatError):
            load_cloud(FIXTURES / "triplets" / "labels.json")

    def test_load_manifest(self):
        records = load_manifest(TRIPLETS / "manifest.jsonl")
        self.assertEqual([r.id for r in records], ["a", "b"])
        self.assertEqual(records[1].label, "square")

    def test_manifest_missing_file_names_record(self):
        with self.assertRaisesMessage(NotFoundError, "record ghost"):
            load_manifest(TRIPLETS / "missing_file.jsonl")

    def test_manifest_mixed_widths(self):
        with self.assertRaisesMessage(DimensionMismatch, "record c"):
            load_manifest(TRIPLETS / "mixed_width.jsonl")

    def test_manifest_collects_structural_errors(self):
        with self.assertRaises(DataError) as cm:
            load_manifest(TRIPLETS / "malformed.jsonl")
        message = str(cm.exception)
        self.assertIn("3 invalid manifest lines", message)
        self.assertIn("unknown fields colour", message)
        self.assertIn("Line 2: not valid JSON", message)
        self.assertIn("missing text_emb_file", message)

    def test_dataset_from_manifest(self):
        dataset = TripletDataset.from_manifest(TRIPLETS / "manifest.jsonl", workers=2)
        self.assertEqual(len(dataset), 2)
        self.assertEqual(dataset.dim, 4)
        self.assertEqual(dataset.label_indices(read_labels(TRIPLETS / "labels.json")).tolist(), [0, 1])
        with self.assertRaises(DataError):
            dataset.label_indices(["corner"])

    def test_dataset_embeddings_come_from_provider(self):
        manifest = TRIPLETS / "manifest.jsonl"
        from_files = TripletDataset.from_manifest(manifest, workers=1)
        self.assertEqual(from_files.text[0].tolist(), [1, 0, 0, 0])

        with self.assertRaises(DimensionMismatch):
            TripletDataset.from_manifest(manifest, provider=EmbeddingProvider("file", 5))

        provider = EmbeddingProvider("mock", 6, seed=2)
        mocked = TripletDataset.from_manifest(manifest, workers=1, provider=provider)
        self.assertEqual(mocked.dim, 6)
        self.assertTrue(np.array_equal(mocked.text[1], provider.embed("text:square")))
        self.assertTrue(np.array_equal(mocked.image[0], provider.embed("image:a")))
        self.assertTrue(np.array_equal(mocked.clouds[0].points, from_files.clouds[0].points))

    def test_mock_provider_is_pure(self):
        provider = EmbeddingProvider("mock", 16, seed=3)
        a = provider.embed("chair")
        provider.embed("table")
        self.assertTrue(np.array_equal(a, EmbeddingProvider("mock", 16, seed=3).embed("chair")))
        self.assertAlmostEqual(float(np.linalg.norm(a)), 1.0)
        many = provider.embed_many(["table", "chair"])
        self.assertTrue(np.array_equal(many[1], a))
        self.assertFalse(np.array_equal(a, EmbeddingProvider("mock", 16, seed=4).embed("chair")))

    def test_file_provider_checks_width(self):
        self.assertEqual(EmbeddingProvider("file", 4).embed(TRIPLETS / "text" / "a.svlt").tolist(), [1, 0, 0, 0])
        with self.assertRaises(DimensionMismatch):
            EmbeddingProvider("file", 5).embed(TRIPLETS / "text" / "a.svlt")

    def test_synthetic_triplets(self):
        ds = synth_triplets(3, 64, 512, 7)
        self.assertEqual(len(ds), 192)
        self.assertEqual(ds.clouds.shape, (192, 256, 3))
        self.assertTrue(np.allclose(ds.prompts @ ds.prompts.T, np.eye(3), atol=1e-12))
        cosine = np.sum(ds.image * ds.text, axis=1)
        self.assertGreater(float(cosine.min()), 0.95)
        self.assertLessEqual(float(np.max(np.linalg.norm(ds.clouds, axis=2))), 1.0 + 1e-12)

        again = synth_triplets(3, 64, 512, 7)
        self.assertTrue(np.array_equal(ds.clouds, again.clouds))
        self.assertTrue(np.array_equal(ds.image, again.image))

    def test_synthetic_limits(self):
        with self.assertRaises(ConfigError):
            synth_triplets(25, 1, 512, 0)
        with self.assertRaises(ConfigError):
            synth_triplets(5, 1, 4, 0)

    def test_split_is_stratified(self):
        ds = synth_triplets(3, 64, 16, 7, n_points=8)
        train, test = ds.split(0.25)
        self.assertEqual(len(test), 48)
        self.assertEqual(sorted(train + test), list(range(192)))
        self.assertEqual(np.bincount(ds.labels[test]).tolist(), [16, 16, 16])
        self.assertEqual(ds.split(0.25), (train, test))

    def test_materialize_writes_loadable_files(self):
        ds = synth_triplets(2, 4, 8, 1, n_points=16)
        with tempfile.TemporaryDirectory() as tmp:
            manifest = ds.materialize(tmp)
            self.assertEqual(len(load_manifest(manifest)), 8)
            self.assertEqual(read_labels(Path(tmp) / "labels.json"), ds.class_names)
            self.assertTrue(np.array_equal(load_tensor(Path(tmp) / "prompts.svlt").data, ds.prompts))
            test = TripletDataset.from_manifest(Path(tmp) / "test.jsonl")
        self.assertEqual(len(test), 2)


class TrainerTests(SimpleTestCase):
    """AdamW, schedules, loops and checkpoints."""

    def test_zero_gradient_leaves_params(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamWState.zeros({"w": (2,)})
        new, state = adamw_step(params, {"w": np.zeros(2)}, state, 0.1, 0.0)
        self.assertTrue(np.array_equal(new["w"], params["w"]))
        self.assertEqual(state.step, 1)

    def test_constant_gradient_descends(self):
        params = {"w": np.array([0.0, 0.0])}
        state = AdamWState.zeros({"w": (2,)})
        for _ in range(20):
            params, state = adamw_step(params, {"w": np.array([0.5, -3.0])}, state, 0.01, 0.0)
        self.assertLess(params["w"][0], 0.0)
        self.assertGreater(params["w"][1], 0.0)

    def test_scalar_steps_match_reference(self):
        p, m, v = 1.0, 0.0, 0.0
        params = {"p": np.array(1.0)}
        state = AdamWState.zeros({"p": ()})
        for t, g in enumerate([0.3, -0.1, 0.7], start=1):
            m = 0.9 * m + (1 - 0.9) * g
            v = 0.999 * v + (1 - 0.999) * g * g
            m_hat = m / (1 - 0.9**t)
            v_hat = v / (1 - 0.999**t)
            p = p - 0.01 * (m_hat / (math.sqrt(v_hat) + 1e-8) + 0.05 * p)
            params, state = adamw_step(params, {"p": np.array(g)}, state, 0.01, 0.05)
        self.assertAlmostEqual(float(params["p"]), p, places=12)

    def test_nan_gradient_aborts(self):
        with self.assertRaisesMessage(TrainingError, "'w'"):
            adamw_step({"w": np.zeros(1)}, {"w": np.array([np.nan])}, AdamWState(), 0.1, 0.0)

    def test_clip_grad_norm(self):
        grads, norm = clip_grad_norm({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0)
        self.assertEqual(norm, 5.0)
        self.assertAlmostEqual(float(grads["a"][0]), 0.6)
        self.assertAlmostEqual(float(grads["b"][0]), 0.8)

    def test_learning_rate_schedule(self):
        cfg = TrainConfig(epochs=110, warmup_epochs=10, base_lr=2e-3)
        self.assertEqual(lr_at(0, cfg), 0.0)
        self.assertEqual(lr_at(10, cfg), 2e-3)
        self.assertAlmostEqual(lr_at(60, cfg), 1e-3, delta=1e-12)
        self.assertAlmostEqual(lr_at(10 - 1e-9, cfg), lr_at(10, cfg), delta=1e-9)
        self.assertAlmostEqual(lr_at(110, cfg), 0.0, delta=1e-15)
        with self.assertRaises(ConfigError):
            lr_at(111, cfg)

    def test_config_validation(self):
        with self.assertRaises(ConfigError):
            TrainConfig(epochs=5, warmup_epochs=5)
        with self.assertRaises(ConfigError):
            TrainConfig(base_lr=0.0)

    def test_uniform_cross_entropy_is_log_k(self):
        loss = cross_entropy(ad.tensor(np.zeros((3, 5))), [0, 4, 2])
        self.assertAlmostEqual(loss.item(), math.log(5))

    def test_zero_weights_leave_encoder_unchanged(self):
        dataset = small_dataset()
        encoder = SpikeEncoder(SMALL_ENCODER, seed=1)
        before = {name: np.array(t.data) for name, t in encoder.params.items()}
        run = pretrain_loop(
            dataset,
            encoder,
            LossConfig(lambda1=0.0, lambda2=0.0, lambda3=0.0),
            TrainConfig(epochs=3, warmup_epochs=1, batch_size=4),
        )
        for name, values in before.items():
            self.assertTrue(np.array_equal(run.encoder.params[name].data, values), name)
        self.assertEqual(run.log_temp, LossConfig().initial_log_temp)

    def test_pretraining_is_deterministic_and_keeps_embeddings(self):
        dataset = small_dataset()
        text, image = np.array(dataset.text), np.array(dataset.image)
        cfg = TrainConfig(epochs=2, warmup_epochs=1, batch_size=4, seed=5)

        first = pretrain_loop(dataset, SpikeEncoder(SMALL_ENCODER, seed=1), LossConfig(), cfg)
        second = pretrain_loop(dataset, SpikeEncoder(SMALL_ENCODER, seed=1), LossConfig(), cfg)

        self.assertEqual(len(first.history), 2)
        self.assertEqual(first.history, second.history)
        self.assertTrue(np.array_equal(dataset.text, text))
        self.assertTrue(np.array_equal(dataset.image, image))

    def test_resumed_run_reproduces_next_epoch(self):
        dataset = small_dataset()
        cfg = TrainConfig(epochs=2, warmup_epochs=1, batch_size=4, seed=2)

        with tempfile.TemporaryDirectory() as tmp:

            def checkpoint_first_epoch(run):
                if run.epoch == 1:
                    save_checkpoint(tmp, run, cfg, LossConfig())

            full = pretrain_loop(
                dataset,
                SpikeEncoder(SMALL_ENCODER, seed=1),
                LossConfig(),
                cfg,
                on_epoch=checkpoint_first_epoch,
            )
            restored = load_checkpoint(tmp)
            self.assertEqual(restored.epoch, 1)
            resumed = pretrain_loop(
                dataset, restored.encoder, LossConfig(), cfg, resume=restored
            )

        self.assertEqual(resumed.history, [full.history[1]])
        for name, t in full.encoder.params.items():
            self.assertTrue(np.array_equal(resumed.encoder.params[name].data, t.data))

    def test_pretraining_rejects_width_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            pretrain_loop(
                small_dataset(),
                SpikeEncoder(replace(SMALL_ENCODER, embed_dim=16), seed=0),
                LossConfig(),
                TrainConfig(epochs=1, warmup_epochs=0),
            )

    def test_finetune_runs_at_new_granularity(self):
        dataset = small_dataset()
        encoder = SpikeEncoder(SMALL_ENCODER, seed=0)
        labels = sorted(set(dataset.labels))
        run = finetune_loop(
            dataset,
            encoder,
            labels,
            TrainConfig(epochs=2, warmup_epochs=0, batch_size=4, T=6, d_max=4),
            eval_dataset=dataset,
        )
        self.assertEqual(run.encoder.cfg.T, 6)
        self.assertEqual(run.head.shape, (2, 8))
        self.assertEqual(len(run.history), 2)
        self.assertIsNotNone(run.history[-1].test_accuracy)

    def test_frozen_finetune_only_moves_head(self):
        dataset = small_dataset()
        encoder = SpikeEncoder(SMALL_ENCODER, seed=0)
        labels = sorted(set(dataset.labels))
        run = finetune_loop(
            dataset,
            encoder,
            labels,
            TrainConfig(epochs=2, warmup_epochs=0, batch_size=4),
            freeze_encoder=True,
        )
        for name, t in encoder.params.items():
            self.assertTrue(np.array_equal(run.encoder.params[name].data, t.data))

    def test_finetune_rejects_unknown_label(self):
        with self.assertRaises(DataError):
            finetune_loop(
                small_dataset(),
                SpikeEncoder(SMALL_ENCODER, seed=0),
                ["only-one-class", "another"],
                TrainConfig(epochs=1, warmup_epochs=0),
            )

    def test_zeroshot_head_width_must_match_encoder(self):
        dataset = small_dataset()
        head = build_head(np.eye(2, 4), 10.0, sorted(set(dataset.labels)))
        with self.assertRaises(DimensionMismatch):
            evaluate_zeroshot(dataset, SpikeEncoder(SMALL_ENCODER, seed=0), head)

    def test_zeroshot_report(self):
        dataset = small_dataset()
        labels = sorted(set(dataset.labels))
        head = build_head(np.random.default_rng(0).normal(size=(2, 8)), 10.0, labels)
        report = evaluate_zeroshot(dataset, SpikeEncoder(SMALL_ENCODER, seed=0), head, workers=2)
        self.assertEqual(report.n_samples, 8)
        self.assertEqual(sum(c.total for c in report.classes), 8)
        self.assertTrue(0.0 <= report.top1 <= 1.0)
        self.assertEqual(set(report.as_dict()["per_class"]), set(labels))


class ConfigTests(SimpleTestCase):
    """Strict JSON run configuration."""

    def base(self, **overrides):
        data = {
            "seed": 7,
            "encoder": {"dims": [16, 32], "embed_dim": 8, "neuron": {"beta": 0.25}},
            "train": {"epochs": 4, "warmup_epochs": 1, "T": 2, "d_max": 3},
            "data": {"train_manifest": "ds/train.jsonl"},
        }
        data.update(overrides)
        return data

    def test_sections_are_bound(self):
        cfg = parse_run_config(self.base(), Path("/runs/cfg"))
        self.assertEqual(cfg.train.seed, 7)
        self.assertEqual(cfg.encoder.T, 2)
        self.assertEqual(cfg.encoder.neuron.d_max, 3)
        self.assertEqual(cfg.encoder.neuron.beta, 0.25)
        self.assertEqual(cfg.finetune.T, 6)
        self.assertEqual(cfg.data_path("train_manifest"), Path("/runs/cfg/ds/train.jsonl"))

    def test_unknown_keys_are_rejected(self):
        with self.assertRaises(ConfigError):
            parse_run_config(self.base(optimiser="sgd"))
        with self.assertRaises(ConfigError):
            parse_run_config(self.base(train={"epochs": 4, "warmup_epochs": 1, "lr": 0.1}))

    def test_seed_is_mandatory_and_top_level(self):
        data = self.base()
        del data["seed"]
        with self.assertRaises(ConfigError):
            parse_run_config(data)
        with self.assertRaises(ConfigError):
            parse_run_config(self.base(train={"epochs": 4, "warmup_epochs": 1, "seed": 1}))

    def test_run_granularity_lives_in_phase_sections(self):
        with self.assertRaises(ConfigError):
            parse_run_config(self.base(encoder={"T": 4}))
        with self.assertRaises(ConfigError):
            parse_run_config(self.base(encoder={"neuron": {"d_max": 2}}))

    def test_wrong_value_types(self):
        with self.assertRaises(ConfigError):
            parse_run_config(self.base(train={"epochs": "ten"}))
        with self.assertRaises(ConfigError):
            parse_run_config(self.base(seed=True))

    def test_top_level_neuron_section(self):
        data = self.base(encoder={"embed_dim": 8}, neuron={"theta": 0.5})
        self.assertEqual(parse_run_config(data).encoder.neuron.theta, 0.5)

    def test_missing_and_invalid_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigError):
                load_run_config(Path(tmp) / "absent.json")
            bad = Path(tmp) / "bad.json"
            bad.write_text("{seed: 1", encoding="utf-8")
            with self.assertRaises(ConfigError):
                load_run_config(bad)
            good = Path(tmp) / "good.json"
            good.write_text(json.dumps(self.base()), encoding="utf-8")
            self.assertEqual(load_run_config(good).base_dir, Path(tmp).resolve())


class CommandTests(SimpleTestCase):
    """Management commands driven through call_command."""

    COMMANDS = ("synth", "pretrain", "zeroshot", "finetune", "energy", "export_head")

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def call(self, *args):
        out = io.StringIO()
        call_command(*args, stdout=out)
        return out.getvalue()

    def synth(self, name="ds", seed="5"):
        self.call(
            "synth", "--classes", "2", "--per-class", "4", "--seed", seed,
            "--dim", "8", "--points", "32", "--out", str(self.tmp / name),
        )
        return self.tmp / name

    def write_config(self, **extra):
        config = {
            "seed": 5,
            "encoder": {"dims": [16, 32], "embed_dim": 8},
            "train": {"epochs": 2, "warmup_epochs": 1, "batch_size": 4},
            "finetune": {"epochs": 2, "warmup_epochs": 0, "batch_size": 4, "T": 2},
            "data": {
                "train_manifest": "ds/train.jsonl",
                "test_manifest": "ds/test.jsonl",
                "prompts": "ds/prompts.svlt",
                "labels": "ds/labels.json",
            },
            "output_dir": "run",
        }
        config.update(extra)
        path = self.tmp / "config.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        return path

    def test_help_exits_zero(self):
        for name in self.COMMANDS:
            with contextlib.redirect_stdout(io.StringIO()):
                with self.assertRaises(SystemExit) as cm:
                    call_command(name, "--help")
            self.assertEqual(cm.exception.code, 0, name)

    def test_export_head_help_names_the_hyphenated_step(self):
        self.assertIn("export-head", ExportHeadCommand.help)
        self.assertIn("export_head", ExportHeadCommand.help)

    def test_version_flag_reports_engine_version(self):
        out = io.StringIO()
        with contextlib.redirect_stdout(out):
            with self.assertRaises(SystemExit):
                call_command("synth", "--version")
        self.assertEqual(out.getvalue().strip(), __version__)

    def test_synth_is_idempotent(self):
        first = self.synth("a")
        second = self.synth("b")
        self.assertEqual(len((first / "manifest.jsonl").read_text().splitlines()), 8)
        self.assertEqual(len((first / "test.jsonl").read_text().splitlines()), 2)
        for name in ("manifest.jsonl", "prompts.svlt", "labels.json"):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_pipeline(self):
        data = self.synth()
        config = self.write_config()
        run = self.tmp / "run"

        output = self.call("pretrain", "--config", str(config))
        self.assertIn("Checkpoint written", output)
        with (run / "loss_history.csv").open(newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual([row["epoch"] for row in rows], ["0", "1"])

        self.call(
            "zeroshot", "--checkpoint", str(run), "--prompts", str(data / "prompts.svlt"),
            "--labels", str(data / "labels.json"), "--data", str(data / "test.jsonl"),
        )
        report = json.loads((run / "zeroshot_report.json").read_text())
        self.assertEqual(report["n_samples"], 2)
        self.assertIn("top1", report)

        head = self.tmp / "head"
        self.call(
            "export_head", "--prompts", str(data / "prompts.svlt"), "--labels",
            str(data / "labels.json"), "--checkpoint", str(run), "--out", str(head),
        )
        self.assertTrue((head / "head.svlt").exists())
        output = self.call(
            "zeroshot", "--checkpoint", str(run), "--head", str(head),
            "--data", str(data / "test.jsonl"), "--out", str(self.tmp / "reports"),
        )
        self.assertIn("Top-1 accuracy", output)

        sample = next((data / "clouds").glob("*.svlt"))
        self.call(
            "energy", "--checkpoint", str(run), "--sample", str(sample),
            "--prompts", str(data / "prompts.svlt"),
        )
        energy = json.loads((run / "energy_report.json").read_text())
        kinds = {layer["name"]: layer["kind"] for layer in energy["layers"]}
        self.assertEqual(kinds["mlp.0"], TRACE_ENCODE_MAC)
        self.assertEqual(kinds["head"], TRACE_HEAD_MAC)
        self.assertEqual(energy["T"], 4)

        self.call("finetune", "--checkpoint", str(run), "--config", str(config))
        with (run / "finetune" / "accuracy_curve.csv").open(newline="") as f:
            curve = list(csv.DictReader(f))
        self.assertEqual(len(curve), 2)
        self.assertNotEqual(curve[-1]["test_accuracy"], "")
        self.assertEqual(load_checkpoint(run / "finetune").encoder.cfg.T, 2)

    def test_pretrain_resume_keeps_history(self):
        self.synth()
        config = self.write_config()
        self.call("pretrain", "--config", str(config))
        config = self.write_config(train={"epochs": 3, "warmup_epochs": 1, "batch_size": 4})
        output = self.call("pretrain", "--config", str(config), "--resume")
        self.assertIn("Resuming from epoch 2", output)
        with (self.tmp / "run" / "loss_history.csv").open(newline="") as f:
            self.assertEqual([row["epoch"] for row in csv.DictReader(f)], ["0", "1", "2"])

    def test_missing_config_exits_with_config_code(self):
        with self.assertRaises(CommandError) as cm:
            self.call("pretrain", "--config", str(self.tmp / "absent.json"))
        self.assertEqual(cm.exception.returncode, 2)
        self.assertTrue(str(cm.exception).startswith("config_error: "))

    def test_mismatched_head_exits_with_dim_mismatch(self):
        checkpoint = self.tmp / "ckpt"
        encoder = SpikeEncoder(SMALL_ENCODER, seed=0)
        save_checkpoint(checkpoint, TrainingRun(encoder, 0.0, AdamWState(), 0))

        with self.assertRaises(CommandError) as cm:
            self.call(
                "zeroshot", "--checkpoint", str(checkpoint),
                "--prompts", str(TRIPLETS / "prompts.svlt"),
                "--labels", str(TRIPLETS / "labels.json"),
                "--data", str(TRIPLETS / "manifest.jsonl"),
            )
        self.assertEqual(cm.exception.returncode, 1)
        self.assertTrue(str(cm.exception).startswith("dim_mismatch: "))

    def test_command_line_error_is_one_line(self):
        stderr = io.StringIO()
        command = PretrainCommand(stdout=io.StringIO(), stderr=stderr)
        with self.assertRaises(SystemExit) as cm:
            command.run_from_argv(
                ["manage.py", "pretrain", "--config", str(self.tmp / "absent.json")]
            )
        self.assertEqual(cm.exception.code, 2)
        self.assertTrue(stderr.getvalue().startswith("config_error: config file not found"))
        self.assertEqual(stderr.getvalue().count("\n"), 1)

    def test_export_head_needs_a_scale(self):
        with self.assertRaises(CommandError) as cm:
            self.call(
                "export_head", "--prompts", str(TRIPLETS / "prompts.svlt"),
                "--out", str(self.tmp / "head"),
            )
        self.assertEqual(cm.exception.returncode, 2)

        self.call(
            "export_head", "--prompts", str(TRIPLETS / "prompts.svlt"), "--scale", "20",
            "--out", str(self.tmp / "head"),
        )
        self.assertEqual(load_head(self.tmp / "head").labels, ("0", "1"))


@tag("slow")
class AcceptanceTests(SimpleTestCase):
    """Desk-scale end-to-end runs on the 3-class synthetic benchmark."""

    EPOCHS = 200

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        ds = synth_triplets(3, 64, 512, 7)
        train_idx, test_idx = ds.split(0.25)
        cls.synthetic = ds
        cls.train = TripletDataset.from_synthetic(ds, train_idx)
        cls.test = TripletDataset.from_synthetic(ds, test_idx)
        cls.train_cfg = TrainConfig(epochs=cls.EPOCHS, seed=7, T=1, d_max=4)
        cls.pretrained = cls.pretrain(LossConfig())

    @classmethod
    def pretrain(cls, loss_cfg, epochs=None):
        cfg = cls.train_cfg if epochs is None else replace(cls.train_cfg, epochs=epochs)
        encoder = SpikeEncoder(EncoderConfig(embed_dim=512), seed=7)
        return pretrain_loop(cls.train, encoder, loss_cfg, cfg)

    def head(self, run):
        return build_head(self.synthetic.prompts, math.exp(run.log_temp), self.synthetic.class_names)

    def test_loss_falls_over_first_epochs(self):
        history = self.pretrained.history
        self.assertLess(history[9].total, history[0].total)

    def test_zero_shot_on_held_out_split(self):
        report = evaluate_zeroshot(self.test, self.pretrained.encoder, self.head(self.pretrained))
        self.assertEqual(report.top1, 1.0)

    def test_exported_head_gives_same_predictions(self):
        with tempfile.TemporaryDirectory() as tmp:
            save_head(self.head(self.pretrained), tmp)
            report = evaluate_zeroshot(self.test, self.pretrained.encoder, load_head(tmp))
        self.assertEqual(report.top1, 1.0)

    def test_all_three_terms_beat_text_only(self):
        text_only = self.pretrain(LossConfig(lambda1=1.0, lambda2=0.0, lambda3=0.0))
        full = evaluate_zeroshot(self.test, self.pretrained.encoder, self.head(self.pretrained)).top1
        partial = evaluate_zeroshot(self.test, text_only.encoder, self.head(text_only)).top1
        self.assertGreaterEqual(full, partial)

    def test_finetune_at_six_timesteps(self):
        cfg = TrainConfig(epochs=20, warmup_epochs=2, batch_size=32, base_lr=1e-3, seed=7, T=6, d_max=4)
        run = finetune_loop(
            self.train,
            self.pretrained.encoder,
            self.synthetic.class_names,
            cfg,
            head_init=self.head(self.pretrained),
            eval_dataset=self.test,
        )
        self.assertEqual(run.encoder.cfg.T, 6)
        self.assertGreaterEqual(run.history[-1].test_accuracy, 0.95)

    def test_frozen_encoder_head_separates_training_set(self):
        cfg = TrainConfig(epochs=30, warmup_epochs=1, batch_size=64, base_lr=1e-2, weight_decay=0.0, seed=7)
        run = finetune_loop(
            self.train,
            self.pretrained.encoder,
            self.synthetic.class_names,
            cfg,
            head_init=self.head(self.pretrained),
            freeze_encoder=True,
        )
        self.assertEqual(run.history[-1].train_accuracy, 1.0)

    def test_runs_repeat_bitwise(self):
        first = self.pretrain(LossConfig(), epochs=5)
        second = self.pretrain(LossConfig(), epochs=5)
        self.assertEqual(first.history, second.history)

        cfg = TrainConfig(epochs=2, warmup_epochs=0, batch_size=64, seed=7, T=6, d_max=4)
        names = self.synthetic.class_names
        a = finetune_loop(self.train, first.encoder, names, cfg)
        b = finetune_loop(self.train, second.encoder, names, cfg)
        self.assertEqual(a.history, b.history)
