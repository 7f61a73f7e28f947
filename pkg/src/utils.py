import json
import logging
import sys
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from data.models import FerReport, GmrFmrReport, LinkabilityReport
from errors import ArgumentError

logger = logging.getLogger(__name__)

FER_COLUMNS = ["decoder", "p", "frames", "errors", "fer", "iterations", "seed"]


def parse_grid(text: str) -> List[float]:
    """
    Parse a sweep grid: either ``a,b,c`` or an inclusive range ``start:stop:step``
    """
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            if step <= 0 or stop < start:
                raise ArgumentError(f"grid range '{text}' needs step > 0 and stop >= start")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 12) for i in range(count)]
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ArgumentError(f"cannot parse grid '{text}'")


def fer_frame(reports: Iterable[FerReport]) -> pd.DataFrame:
    rows = []
    for report in reports:
        for point in report.points:
            rows.append({
                "decoder": report.decoder,
                "p": point["p"],
                "frames": point["frames"],
                "errors": point["errors"],
                "fer": point["fer"],
                "iterations": report.iterations,
                "seed": report.seed
            })
    return pd.DataFrame(rows, columns=FER_COLUMNS)


def fer_curve_frame(reports: Iterable[FerReport]) -> pd.DataFrame:
    """Per-iteration FER rows: decoder,p,iteration,fer"""
    rows = []
    for report in reports:
        for point in report.points:
            errors = report.curves.get(point["p"], [])
            for index, count in enumerate(errors):
                rows.append({
                    "decoder": report.decoder,
                    "p": point["p"],
                    "iteration": index + 1,
                    "fer": count / point["frames"]
                })
    return pd.DataFrame(rows, columns=["decoder", "p", "iteration", "fer"])


def gmr_fmr_frame(report: GmrFmrReport) -> pd.DataFrame:
    return pd.DataFrame({
        "iter": np.arange(1, report.iterations + 1),
        "gmr": report.gmr,
        "fmr": report.fmr
    })


def linkability_frame(report: LinkabilityReport) -> pd.DataFrame:
    return pd.DataFrame({"score": report.grid, "d_local": report.d_local})


def write_frame(frame: pd.DataFrame, out: Optional[str] = None) -> None:
    """CSV to ``out``, or to stdout when out is None or '-'"""
    if out in (None, "-"):
        frame.to_csv(sys.stdout, index=False, lineterminator="\n")
        return
    frame.to_csv(out, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {out}")


def to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(data: Dict[str, Any], out: Optional[str] = None) -> None:
    text = json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8") as handle:
        handle.write(text)
    logger.info(f"Wrote {out}")
