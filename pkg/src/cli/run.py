"""posepipe run：以檔案重播偵測與熱圖執行完整管線"""
import argparse
import logging
from dataclasses import replace

from src.cli.base import Command
from src.config.constants import OutputFormat
from src.config.settings import Settings
from src.data_access.detection_file import DetectionRepository
from src.data_access.feature_file import FeatureRepository
from src.data_access.heatmap_file import HeatmapRepository
from src.services.pipeline_service import run_pipeline
from src.services.stage_workers import (
    PipelineInputs,
    ResultSink,
    StageWorkers,
    build_default_stages,
    frame_source,
)

logger = logging.getLogger(__name__)


class RunCommand(Command):
    name = "run"
    help = "執行五階段管線"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--detections", required=True, help="偵測 JSONL 檔")
        parser.add_argument("--heatmaps", required=True, help="HMAP 熱圖檔")
        parser.add_argument("--features", help="re-ID 特徵圖 NPZ 檔")
        parser.add_argument("--layout", default="halpe136", help="內建配置名稱或配置 JSON 檔")
        parser.add_argument("--out", required=True, help="輸出檔 (coco) 或輸出目錄 (openpose)")
        parser.add_argument("--tracks-out", help="另外輸出追蹤 JSONL")
        parser.add_argument("--format", choices=[f.value for f in OutputFormat], default=OutputFormat.COCO.value)
        parser.add_argument("--track", action="store_true", default=None, help="啟用 MSIM 追蹤")
        parser.add_argument("--nms-params", help="NMS 參數 JSON 檔")
        parser.add_argument("--queue-cap", type=int, help="每個佇列的容量")
        parser.add_argument("--sequential", action="store_true", default=None, help="單執行緒輪詢模式")
        parser.add_argument("--seed", type=int, help="embedding 投影矩陣的亂數種子")

    def execute(self) -> int:
        args = self.args
        overrides = {
            key: value
            for key, value in (
                ("track", args.track),
                ("queue_capacity", args.queue_cap),
                ("sequential", args.sequential),
                ("seed", args.seed),
            )
            if value is not None
        }
        settings = replace(self.settings, pipeline=replace(self.settings.pipeline, **overrides))
        nms_params = Settings.load_nms_params(args.nms_params) if args.nms_params else None
        output_format = OutputFormat(args.format)

        inputs = PipelineInputs(
            detections=DetectionRepository(args.detections),
            heatmaps=HeatmapRepository(args.heatmaps),
            features=FeatureRepository(args.features) if args.features else None,
        )
        workers = StageWorkers(self.layout(), inputs, settings, nms_params, output_format)
        sink = ResultSink(args.out, output_format)
        stats = run_pipeline(
            build_default_stages(workers, settings.pipeline.queue_capacity),
            frame_source(inputs.detections),
            sink,
            sequential=settings.pipeline.sequential,
        )
        sink.close(args.tracks_out)
        if workers.dropped_detections:
            logger.warning(
                "濾除 %d 個低分偵測 (< %.2f)", workers.dropped_detections, settings.pipeline.score_floor,
            )
        logger.info("各階段延遲:\n%s", stats.summary().to_string())
        print(f"{stats.frames} frames, {stats.throughput:.1f} frame/s, peak in-flight {stats.peak_in_flight}")
        return 0
