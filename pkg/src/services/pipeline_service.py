"""五階段並行管線

此模組處理：
- 以有界 FIFO 佇列串接 load / detect / transform / pose / post 五個階段
- 每個階段一個執行緒，佇列滿時阻塞上游 (back-pressure)
- 序號與 reorder buffer 保證 sink 收到的順序等於輸入順序
- 單執行緒輪詢模式 (sequential)，輸出內容與並行模式相同
- 每階段延遲、端到端延遲、吞吐量與在途 bundle 峰值統計

StageSpec.capacity 為該階段輸出佇列的容量；post 階段直接交給 sink，
其容量不建立佇列。在途 bundle 數從 load 取得 bundle 起算，到 sink 處理完畢為止，
上限為 5 + Σ capacity。
"""
import logging
import queue
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Deque, Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from src.config.constants import PipelineDefaults, StageName
from src.models.bundle import FrameBundle, StageSpec
from src.utils.exceptions import ConfigurationError, PipelineStageError

logger = logging.getLogger(__name__)

Sink = Callable[[FrameBundle], None]
_END = object()


@dataclass(frozen=True)
class RunStats:
    """管線執行統計

    Attributes:
        latencies: 每個階段每個 bundle 的 worker 耗時 (秒)
        end_to_end: 每個 bundle 從 load 取得到 sink 完成的耗時 (秒)
        elapsed: 總執行時間 (秒)
        frames: 交給 sink 的 bundle 數
        peak_in_flight: 同時在途的 bundle 數峰值
    """
    latencies: Dict[StageName, np.ndarray]
    end_to_end: np.ndarray
    elapsed: float
    frames: int
    peak_in_flight: int

    @property
    def throughput(self) -> float:
        """每秒完成的 frame 數"""
        return self.frames / self.elapsed if self.elapsed > 0 else float("inf")

    def histogram(self, stage: StageName, bins: int = 20) -> Tuple[np.ndarray, np.ndarray]:
        """單一階段的延遲直方圖 (counts, edges)"""
        return np.histogram(self.latencies[stage], bins=bins)

    def summary(self) -> pd.DataFrame:
        """每個階段一列：count / mean / p50 / p95 / max (毫秒)"""
        rows = []
        for stage in StageName:
            lat = self.latencies.get(stage, np.zeros(0)) * 1e3
            rows.append({
                "stage": stage.value,
                "count": int(lat.size),
                "mean_ms": float(lat.mean()) if lat.size else np.nan,
                "p50_ms": float(np.percentile(lat, 50)) if lat.size else np.nan,
                "p95_ms": float(np.percentile(lat, 95)) if lat.size else np.nan,
                "max_ms": float(lat.max()) if lat.size else np.nan,
            })
        return pd.DataFrame(rows).set_index("stage")


class _Recorder:
    """執行緒安全的統計收集"""

    def __init__(self):
        self._lock = threading.Lock()
        self.latencies: Dict[StageName, List[float]] = {s: [] for s in StageName}
        self.end_to_end: List[float] = []
        self._entered: Dict[int, float] = {}
        self.in_flight = 0
        self.peak = 0
        self.frames = 0

    def enter(self, sequence: int) -> None:
        with self._lock:
            self._entered[sequence] = time.perf_counter()
            self.in_flight += 1
            self.peak = max(self.peak, self.in_flight)

    def leave(self, sequence: int) -> None:
        with self._lock:
            self.end_to_end.append(time.perf_counter() - self._entered.pop(sequence))
            self.in_flight -= 1
            self.frames += 1

    def stage(self, name: StageName, seconds: float) -> None:
        with self._lock:
            self.latencies[name].append(seconds)

    def freeze(self, elapsed: float) -> RunStats:
        return RunStats(
            latencies={k: np.asarray(v) for k, v in self.latencies.items()},
            end_to_end=np.asarray(self.end_to_end),
            elapsed=elapsed,
            frames=self.frames,
            peak_in_flight=self.peak,
        )


def _check_stages(stages: Sequence[StageSpec]) -> None:
    names = [s.name for s in stages]
    if names != list(StageName):
        raise ConfigurationError(
            f"管線必須依序包含五個階段 {[s.value for s in StageName]}: {[n.value for n in names]}"
        )


class Pipeline:
    """五階段管線

    Args:
        stages: 依標準順序排列的五個 StageSpec
        sequential: True 時以單執行緒輪詢各階段
        poll: 佇列等待的輪詢間隔 (秒)，用來及時回應中止
    """

    def __init__(
        self,
        stages: Sequence[StageSpec],
        sequential: bool = False,
        poll: float = PipelineDefaults.POLL_SECONDS,
    ):
        _check_stages(stages)
        self.stages = list(stages)
        self.sequential = sequential
        self.poll = poll
        self._abort = threading.Event()
        self._errors: List[PipelineStageError] = []
        self._error_lock = threading.Lock()

    # ---- 共用 ----

    def _process(self, stage: StageSpec, bundle: FrameBundle, recorder: _Recorder) -> FrameBundle:
        start = time.perf_counter()
        try:
            out = stage.worker(bundle)
        except Exception as e:
            raise PipelineStageError(stage.name.value, bundle.frame_index, str(e)) from e
        recorder.stage(stage.name, time.perf_counter() - start)
        return bundle if out is None else out

    def _fail(self, error: PipelineStageError) -> None:
        with self._error_lock:
            self._errors.append(error)
        logger.error("%s", error)
        self._abort.set()

    # ---- 並行模式 ----

    def _put(self, q: "queue.Queue[Any]", item: Any) -> bool:
        while not self._abort.is_set():
            try:
                q.put(item, timeout=self.poll)
                return True
            except queue.Full:
                continue
        return False

    def _get(self, q: "queue.Queue[Any]") -> Any:
        while not self._abort.is_set():
            try:
                return q.get(timeout=self.poll)
            except queue.Empty:
                continue
        return _END

    def _load_loop(self, source: Iterable[FrameBundle], out: "queue.Queue[Any]", recorder: _Recorder) -> None:
        stage = self.stages[0]
        try:
            for sequence, bundle in enumerate(source):
                if self._abort.is_set():
                    return
                bundle.sequence = sequence
                recorder.enter(sequence)
                if not self._put(out, self._process(stage, bundle, recorder)):
                    return
            self._put(out, _END)
        except PipelineStageError as e:
            self._fail(e)
        except Exception as e:
            error = PipelineStageError(stage.name.value, None, f"來源讀取失敗: {e}")
            error.__cause__ = e
            self._fail(error)

    def _middle_loop(self, index: int, inbox: "queue.Queue[Any]", out: "queue.Queue[Any]", recorder: _Recorder) -> None:
        stage = self.stages[index]
        try:
            while True:
                item = self._get(inbox)
                if item is _END:
                    self._put(out, _END)
                    return
                if not self._put(out, self._process(stage, item, recorder)):
                    return
        except PipelineStageError as e:
            self._fail(e)

    def _post_loop(self, inbox: "queue.Queue[Any]", sink: Sink, recorder: _Recorder) -> None:
        stage = self.stages[-1]
        pending: Dict[int, FrameBundle] = {}
        expected = 0
        try:
            while True:
                item = self._get(inbox)
                if item is _END:
                    break
                bundle = self._process(stage, item, recorder)
                pending[bundle.sequence] = bundle
                while expected in pending:
                    ready = pending.pop(expected)
                    self._deliver(ready, sink, recorder)
                    expected += 1
        except PipelineStageError as e:
            self._fail(e)
            return
        if pending and not self._abort.is_set():
            self._fail(PipelineStageError(stage.name.value, None, f"序號缺漏，{len(pending)} 個 bundle 無法輸出"))

    def _deliver(self, bundle: FrameBundle, sink: Sink, recorder: _Recorder) -> None:
        try:
            sink(bundle)
        except Exception as e:
            raise PipelineStageError(self.stages[-1].name.value, bundle.frame_index, f"sink 失敗: {e}") from e
        recorder.leave(bundle.sequence)

    def _run_threads(self, source: Iterable[FrameBundle], sink: Sink, recorder: _Recorder) -> None:
        queues = [queue.Queue(maxsize=s.capacity) for s in self.stages[:-1]]
        threads = [threading.Thread(target=self._load_loop, args=(source, queues[0], recorder), name="stage-load")]
        for i in range(1, len(self.stages) - 1):
            threads.append(threading.Thread(
                target=self._middle_loop,
                args=(i, queues[i - 1], queues[i], recorder),
                name=f"stage-{self.stages[i].name.value}",
            ))
        threads.append(threading.Thread(target=self._post_loop, args=(queues[-1], sink, recorder), name="stage-post"))
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    # ---- 單執行緒輪詢模式 ----

    def _run_round_robin(self, source: Iterable[FrameBundle], sink: Sink, recorder: _Recorder) -> None:
        """每一輪由下游往上游各推進一步，每個階段最多處理一個 bundle"""
        buffers: List[Deque[FrameBundle]] = [deque() for _ in self.stages[:-1]]
        capacity = [s.capacity for s in self.stages[:-1]]
        iterator = iter(source)
        exhausted = False
        sequence = 0
        last = len(self.stages) - 1
        while True:
            progressed = False
            for i in range(last, -1, -1):
                stage = self.stages[i]
                if i < last and len(buffers[i]) >= capacity[i]:
                    continue
                if i == 0:
                    if exhausted:
                        continue
                    try:
                        bundle = next(iterator)
                    except StopIteration:
                        exhausted = True
                        continue
                    bundle.sequence = sequence
                    recorder.enter(sequence)
                    sequence += 1
                else:
                    if not buffers[i - 1]:
                        continue
                    bundle = buffers[i - 1].popleft()
                out = self._process(stage, bundle, recorder)
                if i < last:
                    buffers[i].append(out)
                else:
                    self._deliver(out, sink, recorder)
                progressed = True
            if not progressed:
                return

    def run(self, source: Iterable[FrameBundle], sink: Sink) -> RunStats:
        """執行管線直到來源耗盡

        Args:
            source: 依 frame 順序產生的 bundle
            sink: 依輸入順序接收處理完成的 bundle

        Returns:
            RunStats

        Raises:
            PipelineStageError: 任一階段失敗，附帶階段名稱與 frame index
        """
        self._abort.clear()
        self._errors.clear()
        recorder = _Recorder()
        mode = "sequential" if self.sequential else "concurrent"
        logger.info("管線開始 (%s)", mode)
        start = time.perf_counter()
        if self.sequential:
            self._run_round_robin(source, sink, recorder)
        else:
            self._run_threads(source, sink, recorder)
            if self._errors:
                raise self._errors[0]
        stats = recorder.freeze(time.perf_counter() - start)
        logger.info(
            "管線結束 (%s): %d frame, %.1f frame/s, 在途峰值 %d",
            mode, stats.frames, stats.throughput, stats.peak_in_flight,
        )
        return stats


def run_pipeline(
    stages: Sequence[StageSpec],
    source: Iterable[FrameBundle],
    sink: Sink,
    sequential: bool = False,
    poll: float = PipelineDefaults.POLL_SECONDS,
) -> RunStats:
    """以五個階段處理 source 中的每個 bundle，依輸入順序交給 sink"""
    return Pipeline(stages, sequential=sequential, poll=poll).run(source, sink)


def sleeping_stages(
    latency: float,
    capacity: int = PipelineDefaults.QUEUE_CAPACITY,
    jitter: float = 0.0,
    seed: int = 0,
) -> List[StageSpec]:
    """模擬延遲的恆等 worker：每次休眠 latency + U(0, jitter) 秒

    每個階段使用獨立的亂數串流。
    """
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(StageName))]

    def make(rng: np.random.Generator):
        def worker(bundle: FrameBundle) -> FrameBundle:
            delay = latency + (rng.uniform(0.0, jitter) if jitter > 0 else 0.0)
            if delay > 0:
                time.sleep(delay)
            return bundle
        return worker

    return [StageSpec(name, make(rng), capacity) for name, rng in zip(StageName, streams)]


@dataclass(frozen=True)
class BenchmarkResult:
    sequential: RunStats
    concurrent: RunStats

    @property
    def speedup(self) -> float:
        return self.concurrent.throughput / self.sequential.throughput

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {"mode": "sequential", "frames": self.sequential.frames,
                 "seconds": self.sequential.elapsed, "fps": self.sequential.throughput,
                 "peak_in_flight": self.sequential.peak_in_flight},
                {"mode": "concurrent", "frames": self.concurrent.frames,
                 "seconds": self.concurrent.elapsed, "fps": self.concurrent.throughput,
                 "peak_in_flight": self.concurrent.peak_in_flight},
            ]
        ).set_index("mode")


def run_benchmark(
    n_frames: int = 200,
    latency: float = 0.005,
    capacity: int = PipelineDefaults.QUEUE_CAPACITY,
    jitter: float = 0.0,
) -> BenchmarkResult:
    """比較五個等延遲階段在輪詢與並行模式下的吞吐量"""
    if n_frames < 1 or latency < 0:
        raise ConfigurationError(f"n_frames 必須 >= 1 且 latency 不可為負: {n_frames}, {latency}")

    def source() -> Iterable[FrameBundle]:
        return (FrameBundle(frame_index=i) for i in range(n_frames))

    def discard(_: FrameBundle) -> None:
        return None

    seq = run_pipeline(sleeping_stages(latency, capacity, jitter), source(), discard, sequential=True)
    con = run_pipeline(sleeping_stages(latency, capacity, jitter), source(), discard)
    result = BenchmarkResult(seq, con)
    logger.info("benchmark: 加速 %.2f 倍", result.speedup)
    return result
