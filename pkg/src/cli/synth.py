"""posepipe synth：寫出合成場景供 run / eval 使用"""
import argparse
from typing import Tuple

from src.cli.base import Command, rng_from
from src.synth.generators import OcclusionWindow, gen_trajectories
from src.synth.scene import write_scene
from src.utils.exceptions import ValidationError


def _occlusion(text: str) -> OcclusionWindow:
    """"person:start:end" -> OcclusionWindow"""
    try:
        person, start, end = (int(v) for v in text.split(":"))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"遮擋必須是 person:start:end: '{text}'") from e
    return OcclusionWindow(person, start, end)


def _shape(text: str) -> Tuple[int, int]:
    """"HxW" -> (H, W)"""
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"熱圖大小必須是 HxW: '{text}'") from e
    return h, w


class SynthCommand(Command):
    name = "synth"
    help = "產生合成場景"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--out", required=True, help="輸出目錄")
        parser.add_argument("--layout", default="halpe26", help="內建配置名稱或配置 JSON 檔")
        parser.add_argument("--people", type=int, default=2)
        parser.add_argument("--frames", type=int, default=20)
        parser.add_argument("--crossing", action="store_true", help="兩兩相向交錯")
        parser.add_argument("--occlude", type=_occlusion, action="append", default=[],
                            help="person:start:end，可重複")
        parser.add_argument("--heatmap-size", type=_shape, default=(32, 24), help="熱圖 HxW")
        parser.add_argument("--sigma", type=float, default=1.5, help="熱圖高斯峰寬度")
        parser.add_argument("--distractors", action="store_true", help="每個 frame 加入一個低分偵測")
        parser.add_argument("--feature-channels", type=int, default=0, help="> 0 時寫出 re-ID 特徵圖")
        parser.add_argument("--seed", type=int, default=0)

    def execute(self) -> int:
        args = self.args
        if args.people < 1 or args.frames < 1:
            raise ValidationError("--people 與 --frames 必須 >= 1")
        rng = rng_from(args.seed)
        scene = gen_trajectories(
            self.layout(), args.people, args.frames, args.crossing, args.occlude,
            emb_noise=0.0, rng=rng, with_embeddings=False,
        )
        paths = write_scene(
            args.out, scene, rng,
            heatmap_shape=args.heatmap_size,
            sigma=args.sigma,
            distractors=args.distractors,
            feature_channels=args.feature_channels,
        )
        for name, path in paths._asdict().items():
            if path is not None:
                print(f"{name}: {path}")
        return 0
