"""posepipe nms：對 COCO 格式候選姿態執行 Pose NMS，或在驗證集上搜尋參數"""
import argparse
import logging
from typing import Dict, List

from src.cli.base import Command
from src.config.settings import NmsGrid, NmsParams, Settings
from src.data_access.coco_format import (
    CocoEntry,
    pose_to_coco,
    read_coco_ground_truth,
    read_coco_predictions,
    write_coco_predictions,
)
from src.services.nms_service import PoseNmsService, nms_map, optimize_params
from src.utils.exceptions import ValidationError

logger = logging.getLogger(__name__)


class NmsCommand(Command):
    name = "nms"
    help = "Pose NMS 與參數搜尋"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--candidates", required=True, help="COCO 格式候選姿態")
        parser.add_argument("--layout", default="halpe136", help="內建配置名稱或配置 JSON 檔")
        parser.add_argument("--params", help="NMS 參數 JSON 檔 (預設為起始參數)")
        parser.add_argument("--out", help="抑制後的 COCO 預測檔")
        parser.add_argument("--optimize", action="store_true", help="以 --gt 為驗證集搜尋參數")
        parser.add_argument("--gt", help="驗證集 COCO ground truth")
        parser.add_argument("--iters", type=int, default=5, help="參數搜尋最大迭代次數")
        parser.add_argument("--params-out", help="搜尋結果寫入的 JSON 檔")

    def _params(self, joint_count: int) -> NmsParams:
        if self.args.params:
            return Settings.load_nms_params(self.args.params)
        return self.settings.nms or NmsParams.default(joint_count)

    def execute(self) -> int:
        args = self.args
        if args.optimize and not args.gt:
            raise ValidationError("--optimize 需要 --gt")
        if not args.optimize and not args.out:
            raise ValidationError("需要 --out 或 --optimize")

        layout = self.layout()
        entries = read_coco_predictions(args.candidates, layout)
        by_image: Dict[int, List[CocoEntry]] = {}
        for entry in entries:
            by_image.setdefault(entry.image_id, []).append(entry)
        params = self._params(layout.joint_count)

        if args.optimize:
            gts = read_coco_ground_truth(args.gt, layout)
            validation = [
                ([e.pose for e in by_image.get(image_id, [])], truth)
                for image_id, truth in sorted(gts.items())
            ]
            baseline = nms_map(validation, None)
            params = optimize_params(validation, params, NmsGrid.default(layout.joint_count), args.iters)
            tuned = nms_map(validation, params)
            print(f"mAP without NMS {baseline:.4f}, tuned {tuned:.4f}")
            if args.params_out:
                Settings.save_nms_params(params, args.params_out)
            print(params.to_dict())

        if args.out:
            service = PoseNmsService(params)
            kept: List[dict] = []
            for image_id in sorted(by_image):
                group = by_image[image_id]
                for i in service.suppress_indices([e.pose for e in group]):
                    kept.append(pose_to_coco(group[i].pose, image_id, group[i].track_id))
            write_coco_predictions(args.out, kept)
            logger.info("NMS: %d -> %d 個姿態", len(entries), len(kept))
        return 0
