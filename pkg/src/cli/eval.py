"""posepipe eval：關鍵點 mAP 或逐關節 MOT 評估"""
import argparse
import logging

import pandas as pd

from src.cli.base import Command
from src.config.constants import EvalDefaults
from src.data_access.coco_format import group_by_image, read_coco_ground_truth, read_coco_predictions
from src.data_access.track_file import read_tracks_jsonl
from src.services.evaluation_service import map_eval, mot_eval

logger = logging.getLogger(__name__)


class EvalCommand(Command):
    name = "eval"
    help = "評估預測結果"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--pred", required=True, help="預測檔 (COCO JSON，或 --mot 時的軌跡 JSONL)")
        parser.add_argument("--gt", required=True, help="ground truth (COCO JSON，或 --mot 時的軌跡 JSONL)")
        parser.add_argument("--layout", default="halpe136", help="內建配置名稱或配置 JSON 檔")
        parser.add_argument("--part", choices=["body", "foot", "face", "hand"], help="只評估某個部位")
        parser.add_argument("--mot", action="store_true", help="逐關節 MOT 評估")
        parser.add_argument("--pckh", type=float, default=EvalDefaults.PCKH_THRESHOLD, help="PCKh 門檻")

    def execute(self) -> int:
        layout = self.layout()
        if self.args.mot:
            report = mot_eval(
                read_tracks_jsonl(self.args.pred, layout),
                read_tracks_jsonl(self.args.gt, layout),
                self.args.pckh,
            )
            logger.debug("逐關節結果:\n%s", report.per_joint.to_string())
            print(report.summary().to_string())
            return 0

        preds = group_by_image(read_coco_predictions(self.args.pred, layout))
        gts = read_coco_ground_truth(self.args.gt, layout)
        report = map_eval(preds, gts, part=self.args.part)
        with pd.option_context("display.float_format", "{:.4f}".format):
            print(report.to_frame().to_string(index=False))
        return 0
