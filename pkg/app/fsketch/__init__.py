"""Single-pass vector sketches for <x, f(y)> with f = log^c(|.|+1) or |.|^p."""

from app.fsketch.logsum import (
    LevelledSampleGrid,
    LevelSelection,
    LogSumSketch,
    StreamMeta,
    logsum_init,
    logsum_query,
    logsum_update,
)
from app.fsketch.polysum import PolySumSketch, polysum_init, polysum_query, polysum_update
from app.fsketch.transforms import AbsPower, EntrywiseTransform, Log1pPower, parse_transform

__all__ = [
    "AbsPower",
    "EntrywiseTransform",
    "LevelSelection",
    "LevelledSampleGrid",
    "Log1pPower",
    "LogSumSketch",
    "PolySumSketch",
    "StreamMeta",
    "logsum_init",
    "logsum_query",
    "logsum_update",
    "parse_transform",
    "polysum_init",
    "polysum_query",
    "polysum_update",
]
