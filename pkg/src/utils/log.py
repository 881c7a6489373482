"""日誌設定模組

函式庫內只使用 logging.getLogger(__name__)，
handler 由進入點 (CLI) 呼叫 configure_logging 安裝一次。
"""
import logging
import sys

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbose: bool = False, debug: bool = False) -> None:
    """設定根 logger

    Args:
        verbose: 顯示 INFO 等級
        debug: 顯示 DEBUG 等級 (優先於 verbose)
    """
    if debug:
        level = logging.DEBUG
    elif verbose:
        level = logging.INFO
    else:
        level = logging.WARNING

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)
