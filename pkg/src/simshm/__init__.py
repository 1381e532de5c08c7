"""Freshness-first shared-memory transport for periodic sensor frames.

One writer publishes into a named double-buffered region; any number of
readers copy out the newest frame without blocking the writer or each
other. New data overwrites old — consumers that care about the latest
sample never wait behind a backlog. See ``simshm.region`` for the on-disk
layout and ``simshm.bench`` for the measurement harness.
"""

from .errors import (
    CapacityError,
    ConfigError,
    CorruptionError,
    ExclusivityError,
    IntegrityError,
    LayoutError,
    LayoutMismatchError,
    RegionNotFoundError,
    TransportError,
)
from .region import (
    HEADER_SIZE,
    ImageKind,
    ImageMeta,
    PointCloudKind,
    attach_region,
    create_region,
    destroy_region,
    layout_for,
    region_exists,
)
from .writer import Writer, writer_init
from .reader import LivenessStatus, Reader, ReadOutcome, ReadStatus, reader_init
from .frames import gen_image, gen_pointcloud, mix64, validate_frame
from .integrity import DiagnosticsSnapshot, checksum, compute_delivery, region_snapshot
from .baseline import BaselinePublisher, BaselineSubscriber

__version__ = "0.1.0"

__all__ = [
    "BaselinePublisher",
    "BaselineSubscriber",
    "CapacityError",
    "ConfigError",
    "CorruptionError",
    "DiagnosticsSnapshot",
    "ExclusivityError",
    "HEADER_SIZE",
    "ImageKind",
    "ImageMeta",
    "IntegrityError",
    "LayoutError",
    "LayoutMismatchError",
    "LivenessStatus",
    "PointCloudKind",
    "ReadOutcome",
    "ReadStatus",
    "Reader",
    "RegionNotFoundError",
    "TransportError",
    "Writer",
    "attach_region",
    "checksum",
    "compute_delivery",
    "create_region",
    "destroy_region",
    "gen_image",
    "gen_pointcloud",
    "layout_for",
    "mix64",
    "reader_init",
    "region_exists",
    "region_snapshot",
    "validate_frame",
    "writer_init",
]
