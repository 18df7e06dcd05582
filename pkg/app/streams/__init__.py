"""Update streams, stream files and data generators."""

from app.streams.cooccurrence import (
    CooccurrenceData,
    ingest_cooccurrence,
    pmi_matrix,
    pmi_weights,
    read_tokens,
)
from app.streams.generators import (
    GeneratedData,
    entrywise_log,
    gen_block_fixture,
    gen_logdata,
    gen_lowrank_fixture,
    gen_sqdata,
    gen_vandermonde_fixture,
    stream_from_dense,
)
from app.streams.models import (
    EventChunk,
    MemoryStream,
    OneShotStream,
    PassStats,
    StreamHeader,
    UpdateEvent,
    UpdateStream,
    ValueEncoding,
    accumulate_dense,
)
from app.streams.stream_file import StreamFile, read_text_stream, write_stream_file, write_text_stream


def replay(stream: UpdateStream, consumer) -> PassStats:
    """Deliver a stream's updates to consumer(rows, cols, deltas) in order."""
    return stream.replay(consumer)


__all__ = [
    "CooccurrenceData",
    "EventChunk",
    "GeneratedData",
    "MemoryStream",
    "OneShotStream",
    "PassStats",
    "StreamFile",
    "StreamHeader",
    "UpdateEvent",
    "UpdateStream",
    "ValueEncoding",
    "accumulate_dense",
    "entrywise_log",
    "gen_block_fixture",
    "gen_logdata",
    "gen_lowrank_fixture",
    "gen_sqdata",
    "gen_vandermonde_fixture",
    "ingest_cooccurrence",
    "pmi_matrix",
    "pmi_weights",
    "read_text_stream",
    "read_tokens",
    "replay",
    "stream_from_dense",
    "write_stream_file",
    "write_text_stream",
]
