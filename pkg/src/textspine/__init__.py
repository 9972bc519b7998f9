"""Context-aware upsampling, dynamic text-spine labels and polygon post-processing
for segmentation-based scene text detection, on plain numpy grids."""

from .errors import FormatError, GeometryError, ParameterError, ShapeError
from .geometry import ShrinkSchedule, area, offset_polygon, perimeter, schedule_ratio, shrink_offset
from .lcau import LcauParams, UpsamplerKind, lcau_backward, lcau_forward, upsample
from .postproc import DetectParams, Detection, detect

__version__ = "0.1.0"
