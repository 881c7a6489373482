import os
import threading
import time

import pytest

from src.config.constants import StageName
from src.models.bundle import FrameBundle, StageSpec
from src.services.pipeline_service import Pipeline, run_benchmark, run_pipeline, sleeping_stages
from src.utils.exceptions import ConfigurationError, PipelineStageError


def _source(n):
    return (FrameBundle(frame_index=i) for i in range(n))


def _identity_stages(capacity=4, **workers):
    return [StageSpec(name, workers.get(name.value, lambda b: b), capacity) for name in StageName]


class Collector:
    def __init__(self):
        self.frames = []
        self.threads = set()

    def __call__(self, bundle):
        self.frames.append(bundle.frame_index)
        self.threads.add(threading.current_thread().name)


class TestOrdering:
    def test_jittered_stages_preserve_order(self):
        sink = Collector()
        stages = sleeping_stages(0.0, capacity=4, jitter=2e-4, seed=1)
        stats = run_pipeline(stages, _source(10_000), sink)
        assert sink.frames == list(range(10_000))
        assert stats.frames == 10_000
        assert stats.peak_in_flight <= 5 + sum(s.capacity for s in stages)

    def test_slow_post_stage_applies_back_pressure(self):
        def slow(bundle):
            time.sleep(2e-3)
            return bundle

        pulled = []

        def source():
            for i in range(60):
                pulled.append(i)
                yield FrameBundle(frame_index=i)

        ahead = []
        sink = Collector()

        def record(bundle):
            ahead.append(len(pulled) - bundle.frame_index - 1)
            sink(bundle)

        stages = sleeping_stages(0.0, capacity=1)[:-1] + [StageSpec(StageName.POST, slow, 1)]
        stats = run_pipeline(stages, source(), record)
        bound = 5 + sum(s.capacity for s in stages)
        assert sink.frames == list(range(60))
        assert stats.peak_in_flight <= bound
        assert max(ahead) <= bound

    def test_sequential_mode_runs_on_caller_thread(self):
        sink = Collector()
        stats = run_pipeline(_identity_stages(capacity=2), _source(50), sink, sequential=True)
        assert sink.frames == list(range(50))
        assert sink.threads == {threading.current_thread().name}
        assert stats.peak_in_flight <= 5 + 5 * 2

    def test_modes_produce_identical_output(self):
        def tag(bundle):
            bundle.output = bundle.frame_index * 3
            return bundle

        outputs = {}
        for sequential in (True, False):
            seen = []
            run_pipeline(_identity_stages(pose=tag), _source(200), lambda b: seen.append(b.output), sequential=sequential)
            outputs[sequential] = seen
        assert outputs[True] == outputs[False] == [3 * i for i in range(200)]

    def test_empty_source(self):
        sink = Collector()
        stats = run_pipeline(_identity_stages(), _source(0), sink)
        assert sink.frames == [] and stats.frames == 0

    def test_stats_summary(self):
        stats = run_pipeline(_identity_stages(), _source(20), lambda b: None)
        summary = stats.summary()
        assert list(summary.index) == [s.value for s in StageName]
        assert (summary["count"] == 20).all()
        assert stats.end_to_end.size == 20
        counts, _ = stats.histogram(StageName.POSE, bins=5)
        assert counts.sum() == 20


class TestFailures:
    @pytest.mark.parametrize("sequential", [False, True])
    def test_stage_error_carries_stage_and_frame(self, sequential):
        def explode(bundle):
            if bundle.frame_index == 7:
                raise ValueError("壞掉的 frame")
            return bundle

        with pytest.raises(PipelineStageError) as info:
            run_pipeline(_identity_stages(detect=explode), _source(100), lambda b: None, sequential=sequential)
        assert info.value.stage == "detect"
        assert info.value.frame_index == 7
        assert isinstance(info.value.__cause__, ValueError)

    def test_sink_error(self):
        def sink(bundle):
            if bundle.frame_index == 3:
                raise RuntimeError("disk full")

        with pytest.raises(PipelineStageError) as info:
            run_pipeline(_identity_stages(), _source(10), sink)
        assert info.value.stage == "post"
        assert info.value.frame_index == 3

    def test_source_error(self):
        def source():
            yield FrameBundle(frame_index=0)
            raise OSError("stream closed")

        with pytest.raises(PipelineStageError) as info:
            run_pipeline(_identity_stages(), source(), lambda b: None)
        assert info.value.stage == "load"
        assert info.value.frame_index is None

    def test_stage_order_enforced(self):
        stages = _identity_stages()
        stages[1], stages[2] = stages[2], stages[1]
        with pytest.raises(ConfigurationError):
            Pipeline(stages)
        with pytest.raises(ConfigurationError):
            Pipeline(stages[:4])


class TestBenchmark:
    def test_rejects_bad_arguments(self):
        with pytest.raises(ConfigurationError):
            run_benchmark(0)

    @pytest.mark.slow
    @pytest.mark.skipif((os.cpu_count() or 1) < 4, reason="需要至少 4 個 CPU")
    def test_concurrency_speedup(self):
        result = run_benchmark(100, 0.005)
        assert result.speedup >= 3.0
        assert list(result.to_frame().index) == ["sequential", "concurrent"]
