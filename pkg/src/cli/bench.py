"""posepipe bench：輪詢與並行模式的吞吐量比較"""
import argparse

from src.cli.base import Command
from src.services.pipeline_service import run_benchmark


class BenchCommand(Command):
    name = "bench"
    help = "合成延遲的管線效能測試"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--frames", type=int, default=200)
        parser.add_argument("--latency", type=float, default=0.005, help="每階段延遲 (秒)")
        parser.add_argument("--capacity", type=int, help="佇列容量")
        parser.add_argument("--jitter", type=float, default=0.0, help="每次延遲額外加上 U(0, jitter) 秒")

    def execute(self) -> int:
        capacity = self.args.capacity or self.settings.pipeline.queue_capacity
        result = run_benchmark(self.args.frames, self.args.latency, capacity, self.args.jitter)
        print(result.to_frame().to_string(float_format="{:.3f}".format))
        print(f"speedup {result.speedup:.2f}x")
        return 0
