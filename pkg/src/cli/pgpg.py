"""posepipe pgpg fit|sample：擬合偏移模型與抽樣提案框"""
import argparse
import logging
from dataclasses import replace
from typing import List

from src.cli.base import Command, parse_box, rng_from
from src.config.constants import OffsetMode
from src.data_access.offset_file import read_box_pairs, read_model, write_box_pairs, write_models
from src.models.proposal import OffsetSample
from src.services.proposal_service import bic_sweep, compute_offsets, fit_offset_models, sample_proposals
from src.utils.exceptions import InsufficientDataError, ValidationError

logger = logging.getLogger(__name__)


class PgpgCommand(Command):
    name = "pgpg"
    help = "部位導向提案產生器"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        actions = parser.add_subparsers(dest="action", required=True)

        fit = actions.add_parser("fit", help="由偏移樣本擬合每個部位的模型")
        fit.add_argument("--offsets", required=True, help="偏移樣本 JSONL ({part, gt, det})")
        fit.add_argument("--out", required=True, help="模型 JSON 檔")
        fit.add_argument("--components", type=int, help="混合元件數")
        fit.add_argument("--bic", action="store_true", help="另外輸出各元件數的 BIC")

        sample = actions.add_parser("sample", help="由模型抽樣提案框")
        sample.add_argument("--model", required=True, help="模型 JSON 檔")
        sample.add_argument("--part", default="body", help="部位名稱")
        sample.add_argument("--gt", required=True, help="ground-truth 框 x0,y0,x1,y1")
        sample.add_argument("--n", type=int, default=10, help="抽樣數量")
        sample.add_argument("--mode", choices=[m.value for m in OffsetMode], default=OffsetMode.GMM.value)
        sample.add_argument("--seed", type=int, default=0)
        sample.add_argument("--out", required=True, help="提案框 JSONL ({part, gt, det})")

    def execute(self) -> int:
        if self.args.action == "fit":
            return self._fit()
        return self._sample()

    def _fit(self) -> int:
        cfg = self.settings.proposal
        components = self.args.components or cfg.components
        samples = [compute_offsets(gt, det, part) for part, gt, det in read_box_pairs(self.args.offsets)]
        if not samples:
            raise InsufficientDataError(f"{self.args.offsets} 沒有偏移樣本")

        models = fit_offset_models(samples, components, replace(cfg, components=components))
        if not models:
            raise InsufficientDataError("沒有任何部位有足夠的樣本")
        write_models(self.args.out, models)
        print(f"fitted parts: {', '.join(sorted(models))}")

        if self.args.bic:
            self._print_bic(samples, sorted(models))
        return 0

    def _print_bic(self, samples: List[OffsetSample], parts: List[str]) -> None:
        for part in parts:
            try:
                table = bic_sweep(samples, part, cfg=self.settings.proposal)
            except InsufficientDataError as e:
                logger.warning("略過部位 %s 的 BIC: %s", part, e)
                continue
            print(f"[{part}]")
            print(table.to_string(index=False))

    def _sample(self) -> int:
        if self.args.n < 1:
            raise ValidationError(f"--n 必須 >= 1: {self.args.n}")
        model = read_model(self.args.model, self.args.part)
        gt = parse_box(self.args.gt)
        boxes = sample_proposals(
            gt, model, self.args.n, OffsetMode(self.args.mode), rng_from(self.args.seed),
            self.settings.proposal.max_resample,
        )
        write_box_pairs(self.args.out, [(self.args.part, gt, box) for box in boxes])
        logger.info("抽樣 %d 個 %s 提案框", len(boxes), self.args.part)
        return 0
